#include "speechfuse/embed.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace speechfuse;
using namespace speechfuse::embed;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

SegmentRecord seg(const std::string& id, std::vector<std::string> tokens) {
  SegmentRecord s;
  s.segment_id = id;
  s.tokens = std::move(tokens);
  return s;
}

}  // namespace

TEST(Tokens, AverageOfKnownVectors) {
  EmbeddingTable t({"toy", 2});
  t.insert("a", v2(1, 0));
  t.insert("b", v2(0, 1));
  EXPECT_TRUE(average_tokens(t, {"a", "b"}).isApprox(v2(0.5, 0.5)));
  EXPECT_TRUE(average_tokens(t, {"a", "a", "b"}).isApprox(v2(2.0 / 3, 1.0 / 3)));
  EXPECT_TRUE(average_tokens(t, {"zzz"}).isApprox(stub_encode("toy", "zzz", 2)));
  EXPECT_THROW(average_tokens(t, {}), DataError);
  EXPECT_THROW(t.insert("c", Vec::Zero(3)), DataError);
}

TEST(Stub, DeterministicUnitAndNearOrthogonal) {
  EXPECT_EQ(stub_encode("lm", "cat", 50), stub_encode("lm", "cat", 50));
  EXPECT_NE(stub_encode("lm", "cat", 50), stub_encode("subword", "cat", 50));
  double total = 0;
  const int pairs = 10000;
  for (int i = 0; i < pairs; ++i) {
    const Vec a = stub_encode("lm", "a" + std::to_string(i), 100);
    const Vec b = stub_encode("lm", "b" + std::to_string(i), 100);
    ASSERT_NEAR(a.norm(), 1.0, 1e-12);
    total += std::abs(a.dot(b));
  }
  EXPECT_LT(total / pairs, 0.15);
  EXPECT_THROW(stub_encode("lm", "x", 0), ConfigError);
}

TEST(Concat, TextLayoutAndSlices) {
  TextDims dims;
  EncoderSet enc{dims, {}, {}};
  const auto s = seg("s0", {"hello", "there"});
  const Vec emo = Vec::Constant(static_cast<Eigen::Index>(dims.emotion), 0.25);
  const auto fv = concat_segment_text(enc.lm(s), enc.subword(s), enc.docvec(s), emo, dims);
  EXPECT_EQ(fv.values().size(), 1256);
  EXPECT_TRUE(fv.schema_consistent());
  EXPECT_EQ(fv.slice("lm"), enc.lm(s));
  EXPECT_EQ(fv.slice("docvec"), enc.docvec(s));
  EXPECT_EQ(fv.slice("emotion_text"), emo);
  EXPECT_THROW(concat_segment_text(enc.lm(s), enc.subword(s), enc.docvec(s), Vec::Zero(3), dims), Error);
}

TEST(Concat, AudioLayout) {
  AudioDims dims;
  EncoderSet enc{{}, dims, {}};
  const auto s = seg("s1", {});
  EXPECT_EQ(enc.wavenet(s).size(), 16);
  EXPECT_EQ(enc.vggish(s).size(), 128);
  FeatureVector dsp_block("time_mean", Vec::Ones(8));
  const auto fv = concat_segment_audio(enc.wavenet(s), enc.vggish(s), dsp_block,
                                       Vec::Zero(static_cast<Eigen::Index>(dims.emotion)), dims);
  EXPECT_EQ(fv.values().size(), 16 + 128 + 8 + 64);
  EXPECT_EQ(fv.slice("dsp"), Vec::Ones(8));
}

TEST(Encoders, SegmentKeyWinsOverTokenAverage) {
  EncoderSet enc;
  enc.text_dims.docvec = 2;
  EmbeddingTable t({"docvec", 2});
  t.insert("s0", v2(3, 4));
  enc.tables.emplace("docvec", t);
  EXPECT_EQ(enc.docvec(seg("s0", {"x"})), v2(3, 4));
  EXPECT_TRUE(enc.docvec(seg("s9", {"x"})).isApprox(stub_encode("docvec", "x", 2)));
  EXPECT_EQ(enc.docvec(seg("s9", {})), Vec::Zero(2));
  enc.text_dims.docvec = 3;
  EXPECT_THROW(enc.docvec(seg("s0", {"x"})), ConfigError);
}

TEST(Tables, TextRoundTripAndErrors) {
  EmbeddingTable t({"enc", 3});
  t.insert("b", Vec::LinSpaced(3, 0.1, 0.3));
  t.insert("a", Vec::LinSpaced(3, -1.0, 1.0 / 3));
  const auto text = t.to_text();
  EXPECT_EQ(text.substr(0, 16), "#name=enc dim=3\n");
  const auto back = EmbeddingTable::parse(text, "mem");
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.lookup("a"), t.lookup("a"));
  EXPECT_THROW(EmbeddingTable::parse("a,1,2,3\n", "mem"), DataError);
  EXPECT_THROW(EmbeddingTable::parse("#name=enc dim=3\na,1,2\n", "mem"), DataError);
  EXPECT_THROW(EmbeddingTable::parse("#name=enc dim=0\n", "mem"), DataError);
  EXPECT_EQ(EmbeddingTable::parse("#name=enc dim=2\nk\t1\t2\n", "mem").lookup("k"), v2(1, 2));
}

TEST(Bow, CountsAndVocabularyOrder) {
  BowVectorizer bow;
  bow.fit({{"b", "a", "a"}});
  const Mat x = bow.transform({{"a", "a", "b", "zzz"}});
  ASSERT_EQ(x.cols(), 2);
  EXPECT_EQ(x(0, 0), 2);
  EXPECT_EQ(x(0, 1), 1);
  BowVectorizer unfit;
  EXPECT_THROW(unfit.transform({{"a"}}), RuntimeFailure);
  EXPECT_THROW(bow.fit({{}}), DataError);
}

TEST(Tfidf, UbiquitousTermsGetUnitIdfAndRowsNormalize) {
  TfidfVectorizer tf;
  tf.fit({{"a", "b"}, {"a", "c"}, {"a"}});
  const auto& vocab = tf.vocabulary();
  EXPECT_DOUBLE_EQ(tf.idf()(static_cast<Eigen::Index>(vocab.at("a"))), 1.0);
  EXPECT_DOUBLE_EQ(tf.idf()(static_cast<Eigen::Index>(vocab.at("b"))), std::log(4.0 / 2.0) + 1.0);
  const Mat x = tf.transform({{"a", "b", "b"}, {"c"}, {"q"}});
  EXPECT_NEAR(x.row(0).norm(), 1.0, 1e-12);
  EXPECT_NEAR(x.row(1).norm(), 1.0, 1e-12);
  EXPECT_EQ(x.row(2).norm(), 0.0);
}

// Counting oracle over random documents: tf from direct tallies, df from sets.
TEST(Tfidf, MatchesCountingOracle) {
  Rng rng(13);
  std::vector<TokenDoc> docs(20);
  for (auto& d : docs) {
    const int n = rng.range(1, 12);
    for (int i = 0; i < n; ++i) d.push_back("w" + std::to_string(rng.below(15)));
  }
  TfidfVectorizer tf;
  tf.fit(docs);
  const Mat x = tf.transform(docs);
  for (std::size_t r = 0; r < docs.size(); ++r) {
    std::map<std::string, double> w;
    double norm = 0;
    for (const auto& [term, col] : tf.vocabulary()) {
      double count = 0, df = 0;
      for (const auto& t : docs[r]) count += t == term;
      for (const auto& d : docs) df += std::find(d.begin(), d.end(), term) != d.end();
      w[term] = count * (std::log(21.0 / (1.0 + df)) + 1.0);
      norm += w[term] * w[term];
    }
    for (const auto& [term, col] : tf.vocabulary()) {
      EXPECT_NEAR(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)), w[term] / std::sqrt(norm), 1e-12);
    }
  }
}

TEST(AudioProxy, DeterministicUnitAndContentSensitive) {
  const auto a = sine_wave(300, 0.5, 8000);
  const auto b = sine_wave(900, 0.5, 8000);
  const Vec va = audio_proxy_encode("wavenet", a, 16);
  EXPECT_EQ(va, audio_proxy_encode("wavenet", a, 16));
  EXPECT_NEAR(va.norm(), 1.0, 1e-12);
  EXPECT_GT((va - audio_proxy_encode("wavenet", b, 16)).norm(), 1e-3);
  EXPECT_THROW(audio_proxy_encode("wavenet", a, 0), ConfigError);
}

TEST(AudioProxy, TablesCoverAudioSegments) {
  SynthConfig cfg;
  cfg.n_families = 3;
  const auto corpus = synth_corpus(cfg, 4);
  const auto tables = audio_proxy_tables(corpus, AudioDims{}, cfg.sample_rate_hz);
  EXPECT_EQ(tables.at("wavenet").size(), corpus.segment_count());
  EXPECT_EQ(tables.at("vggish").spec().dim, 128u);
}
