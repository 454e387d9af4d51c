#include "speechfuse/corpus.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace speechfuse;

namespace {

std::string doc_line(const std::string& id, int affect = 3, const std::string& family = "f1") {
  return R"({"document_id":")" + id + R"(","subject_id":"s1","family_id":")" + family +
         R"(","labels":{"disorder":"control","affect":)" + std::to_string(affect) +
         R"(,"warmth":3,"overprotection":3,"cohesion":3,"criticism":3},)"
         R"("segments":[{"segment_id":")" + id + R"(-0","tokens":["a","b"],"audio_path":null,"duration_s":0}]})";
}

std::string error_of(const std::string& text) {
  try {
    parse_corpus(text, "mem");
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

DocumentRecord shaped_doc(int id, int segments, int tokens) {
  DocumentRecord d;
  d.document_id = "d" + std::to_string(id);
  d.subject_id = "s" + std::to_string(id);
  d.family_id = "f" + std::to_string(id);
  for (int k = 0; k < segments; ++k) {
    SegmentRecord s;
    s.segment_id = d.document_id + "-" + std::to_string(k);
    s.tokens.assign(static_cast<std::size_t>(tokens), "w");
    s.labels = SegmentLabels{};
    d.segments.push_back(s);
  }
  return d;
}

}  // namespace

TEST(CorpusParse, EmptyTextGivesEmptyManifest) {
  EXPECT_TRUE(parse_corpus("", "mem").documents.empty());
  EXPECT_TRUE(parse_corpus("\n  \n", "mem").documents.empty());
}

TEST(CorpusParse, RatingOutOfRangeNamesField) {
  ASSERT_EQ(parse_corpus(doc_line("a") + "\n", "mem").documents.size(), 1u);
  const auto msg = error_of(doc_line("a", 6));
  EXPECT_NE(msg.find("affect"), std::string::npos) << msg;
  EXPECT_NE(msg.find("mem:1"), std::string::npos) << msg;
}

TEST(CorpusParse, DuplicateAndMalformedLinesCarryLineNumbers) {
  const auto dup = error_of(doc_line("a") + "\n" + doc_line("a") + "\n");
  EXPECT_NE(dup.find("mem:2"), std::string::npos) << dup;
  EXPECT_NE(dup.find("duplicate"), std::string::npos) << dup;
  const auto bad = error_of(doc_line("a") + "\n\n{not json\n");
  EXPECT_NE(bad.find("mem:3"), std::string::npos) << bad;
  EXPECT_FALSE(error_of(doc_line("a", 3, "")).empty());
}

TEST(CorpusParse, SynthRoundTripIsByteIdentical) {
  SynthConfig cfg;
  cfg.n_families = 20;
  auto m = synth_corpus(cfg, 5);
  ASSERT_GE(m.documents.size(), 20u);
  const auto text = save_corpus_string(m);
  const auto back = parse_corpus(text, "mem");
  EXPECT_EQ(back, m);
  EXPECT_EQ(save_corpus_string(back), text);
}

TEST(CorpusStats, SmallShape) {
  CorpusManifest m;
  m.documents = {shaped_doc(0, 3, 4), shaped_doc(1, 3, 4)};
  const auto t = corpus_stats(m);
  EXPECT_EQ(t.get("total_documents"), 2);
  EXPECT_EQ(t.get("total_segments"), 6);
  EXPECT_EQ(t.get("average_word_count"), 4);
  EXPECT_EQ(t.get("neutral_emotion_segments"), 6);
  EXPECT_EQ(t.get("control_documents"), 2);
  EXPECT_EQ(t.get("unlabeled_segments"), 0);
}

// Recount straight from the serialized JSON, independent of the typed records.
TEST(CorpusStats, MatchesRecountFromJson) {
  SynthConfig cfg;
  cfg.n_families = 60;
  const auto m = synth_corpus(cfg, 11);
  const auto t = corpus_stats(m);
  std::map<std::string, double> n;
  std::set<std::string> fams;
  double words = 0, segs = 0;
  for (const auto& line : split(save_corpus_string(m), '\n')) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("document_id")) continue;
    n["docs"] += 1;
    n[j["labels"]["disorder"].get<std::string>()] += 1;
    fams.insert(j["family_id"].get<std::string>());
    for (const auto& s : j["segments"]) {
      segs += 1;
      words += static_cast<double>(s["tokens"].size());
      n[s["labels"]["emotion"].get<std::string>()] += 1;
      if (s["labels"]["worry"].get<bool>()) n["worry"] += 1;
    }
  }
  EXPECT_EQ(t.get("total_documents"), n["docs"]);
  EXPECT_EQ(t.get("total_families"), static_cast<double>(fams.size()));
  EXPECT_EQ(t.get("total_segments"), segs);
  EXPECT_DOUBLE_EQ(t.get("average_word_count"), words / segs);
  EXPECT_EQ(t.get("worry_segments"), n["worry"]);
  for (auto e : kEmotionNames) EXPECT_EQ(t.get(std::string(e) + "_emotion_segments"), n[e]);
  for (auto d : kDisorderNames) EXPECT_EQ(t.get(std::string(d) + "_documents"), n[d]);
  EXPECT_THROW(t.get("nope"), std::out_of_range);
}

TEST(CorpusHeatmap, SingleEmotionCorpus) {
  CorpusManifest m;
  m.documents = {shaped_doc(0, 5, 2)};
  for (auto& s : m.documents[0].segments) s.labels->emotion = Emotion::joy;
  const auto h = label_heatmap(m, HeatmapLevel::segment);
  EXPECT_EQ(h.at("emotion", "joy"), 5u);
  EXPECT_EQ(h.at("emotion", "neutral"), 0u);
  EXPECT_EQ(h.at("worry", "false"), 5u);
  const auto d = label_heatmap(m, HeatmapLevel::document);
  EXPECT_EQ(d.at("disorder", "control"), 1u);
  EXPECT_EQ(d.at("affect", "3"), 1u);
  EXPECT_THROW(h.at("emotion", "nope"), std::out_of_range);
}

TEST(CorpusHeatmap, RowsSumToLabeledSegments) {
  SynthConfig cfg;
  cfg.n_families = 30;
  const auto m = synth_corpus(cfg, 3);
  const auto h = label_heatmap(m, HeatmapLevel::segment);
  std::size_t sad = 0;
  for (const auto& d : m.documents) {
    for (const auto& s : d.segments) sad += s.labels->emotion == Emotion::sadness;
  }
  EXPECT_EQ(h.at("emotion", "sadness"), sad);
  for (const auto& row : h.counts) {
    std::size_t total = 0;
    for (auto v : row) total += v;
    EXPECT_EQ(total, m.segment_count());
  }
  EXPECT_EQ(h.to_csv().substr(0, 16), "label,objective,");
}

TEST(CorpusLabels, EncodeLayout) {
  SegmentLabels l;
  l.subjectivity = Subjectivity::subjective;
  l.sentiment = Sentiment::positive;
  l.emotion = Emotion::fear;
  l.criticism = true;
  const Vec v = l.encode();
  ASSERT_EQ(v.size(), 12);
  EXPECT_EQ(v(0), 1.0);
  EXPECT_EQ(v(1), 1.0);
  EXPECT_EQ(v(3), 1.0);
  EXPECT_EQ(v(11), 1.0);
  EXPECT_EQ(v.sum(), 4.0);
}

TEST(Synth, DeterministicAndSeedSensitive) {
  SynthConfig cfg;
  cfg.n_families = 10;
  EXPECT_EQ(save_corpus_string(synth_corpus(cfg, 1)), save_corpus_string(synth_corpus(cfg, 1)));
  EXPECT_NE(save_corpus_string(synth_corpus(cfg, 1)), save_corpus_string(synth_corpus(cfg, 2)));
}

TEST(Synth, ZeroStrengthPlantsNothing) {
  SynthConfig cfg;
  cfg.n_families = 40;
  cfg.text_strength = 0;
  cfg.audio_strength = 0;
  const auto m = synth_corpus(cfg, 9);
  for (const auto& d : m.documents) {
    for (const auto& s : d.segments) {
      for (const auto& tok : s.tokens) EXPECT_NE(tok.rfind("cls_", 0), 0u) << tok;
      EXPECT_NE(s.audio_path.find(";tamp=0;"), std::string::npos) << s.audio_path;
    }
  }
}

TEST(Synth, BadConfigRejected) {
  SynthConfig cfg;
  cfg.class_priors = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(synth_corpus(cfg, 1), ConfigError);
  cfg = {};
  cfg.text_strength = 1.5;
  EXPECT_THROW(synth_corpus(cfg, 1), ConfigError);
}

// Multinomial naive Bayes on bag-of-words, written out here as the oracle for
// how much disorder signal full-strength text carries per document, scored on
// depression vs control.
TEST(Synth, FullStrengthTextIsSeparable) {
  SynthConfig cfg;
  cfg.n_families = 200;
  cfg.text_strength = 1.0;
  cfg.include_audio = false;
  cfg.family_concordance = 1.0;
  const auto m = synth_corpus(cfg, 21);
  std::vector<const DocumentRecord*> train, test;
  for (const auto& d : m.documents) {
    if (d.labels.disorder != Disorder::control && d.labels.disorder != Disorder::depression) continue;
    (std::hash<std::string>{}(d.family_id) % 4 == 0 ? test : train).push_back(&d);
  }
  std::array<std::map<std::string, double>, 4> counts;
  std::array<double, 4> totals{}, docs{};
  std::set<std::string> vocab;
  for (const auto* d : train) {
    const int c = static_cast<int>(d->labels.disorder);
    docs[c] += 1;
    for (const auto& s : d->segments) {
      for (const auto& t : s.tokens) {
        counts[c][t] += 1;
        totals[c] += 1;
        vocab.insert(t);
      }
    }
  }
  const double v = static_cast<double>(vocab.size());
  int correct = 0;
  for (const auto* d : test) {
    int best = 0;
    double best_lp = -1e300;
    for (int c = 0; c < 2; ++c) {
      double lp = std::log((docs[c] + 1) / (static_cast<double>(train.size()) + 2));
      for (const auto& s : d->segments) {
        for (const auto& t : s.tokens) {
          const auto it = counts[c].find(t);
          lp += std::log(((it == counts[c].end() ? 0.0 : it->second) + 1) / (totals[c] + v));
        }
      }
      if (lp > best_lp) best_lp = lp, best = c;
    }
    correct += best == static_cast<int>(d->labels.disorder);
  }
  ASSERT_GT(test.size(), 50u);
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.size()), 0.95);
}
