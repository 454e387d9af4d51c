#pragma once

// Segment text/audio representations from precomputed embedding tables,
// deterministic stub encoders, schema-tagged concatenation, and the
// bag-of-words / tf-idf baselines.

#include "speechfuse/corpus.hpp"
#include "speechfuse/dsp.hpp"
#include "speechfuse/feature.hpp"

#include <map>
#include <optional>
#include <unordered_map>

namespace speechfuse::embed {

struct EmbeddingSpec {
  std::string name;
  std::size_t dim = 0;

  void validate() const {
    if (name.empty()) throw ConfigError("embedding spec needs a name");
    if (dim == 0) throw ConfigError("embedding '" + name + "' must have dim > 0");
  }
};

// Unit-norm pseudo-embedding: FNV-1a(name, key) seeds SplitMix64, which
// feeds dim Box-Muller normals.
inline Vec stub_encode(std::string_view name, std::string_view key, std::size_t dim) {
  if (dim == 0) throw ConfigError("stub_encode needs dim > 0");
  Rng rng(fnv1a64_parts({name, key}));
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v / v.norm();
}

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(EmbeddingSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const EmbeddingSpec& spec() const { return spec_; }
  std::size_t size() const { return rows_.size(); }
  bool contains(const std::string& key) const { return rows_.count(key) != 0; }

  void insert(const std::string& key, Vec v) {
    if (static_cast<std::size_t>(v.size()) != spec_.dim) {
      throw DataError("embedding '" + spec_.name + "' key '" + key + "' has dim " + std::to_string(v.size()) +
                      ", expected " + std::to_string(spec_.dim));
    }
    if (!v.allFinite()) throw DataError("embedding '" + spec_.name + "' key '" + key + "' has non-finite values");
    rows_[key] = std::move(v);
  }

  const Vec* find(const std::string& key) const {
    const auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
  }

  // Table entry, or the stub vector for an unknown key.
  Vec lookup(const std::string& key) const {
    if (const auto* v = find(key)) return *v;
    return stub_encode(spec_.name, key, spec_.dim);
  }

  // Header "#name=<name> dim=<d>", then "key,v0,...,v{d-1}" rows in key order.
  std::string to_text() const {
    std::string out = "#name=" + spec_.name + " dim=" + std::to_string(spec_.dim) + "\n";
    std::vector<const std::string*> keys;
    for (const auto& [k, _] : rows_) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto a, auto b) { return *a < *b; });
    for (const auto* k : keys) {
      out += *k;
      for (double x : rows_.at(*k)) out += "," + fmt_double(x);
      out += "\n";
    }
    return out;
  }

  static EmbeddingTable parse(std::string_view text, const std::string& source) {
    const auto lines = split(text, '\n');
    if (lines.empty() || !trim(lines[0]).starts_with("#")) {
      throw DataError(source + ": missing '#name=<spec> dim=<d>' header");
    }
    EmbeddingSpec spec;
    for (const auto& tok : split(trim(lines[0]).substr(1), ' ')) {
      if (tok.starts_with("name=")) spec.name = tok.substr(5);
      else if (tok.starts_with("dim=")) spec.dim = static_cast<std::size_t>(parse_double(tok.substr(4), source));
    }
    try {
      spec.validate();
    } catch (const ConfigError& e) {
      throw DataError(source + ": " + e.what());
    }
    EmbeddingTable table(spec);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
      const auto line = trim(lines[ln]);
      if (line.empty()) continue;
      const char sep = line.find('\t') != std::string_view::npos ? '\t' : ',';
      const auto fields = split(line, sep);
      const std::string where = source + ":" + std::to_string(ln + 1);
      if (fields.size() != spec.dim + 1) {
        throw DataError(where + ": expected " + std::to_string(spec.dim + 1) + " fields, got " +
                        std::to_string(fields.size()));
      }
      Vec v(static_cast<Eigen::Index>(spec.dim));
      for (std::size_t i = 0; i < spec.dim; ++i) v(static_cast<Eigen::Index>(i)) = parse_double(fields[i + 1], where);
      table.insert(std::string(trim(fields[0])), std::move(v));
    }
    return table;
  }

  static EmbeddingTable load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
  }

 private:
  EmbeddingSpec spec_;
  std::unordered_map<std::string, Vec> rows_;
};

// Mean of per-token vectors; unknown tokens go through the stub encoder.
inline Vec average_tokens(const EmbeddingTable& table, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw DataError("average_tokens: empty token list");
  Vec acc = Vec::Zero(static_cast<Eigen::Index>(table.spec().dim));
  for (const auto& t : tokens) acc += table.lookup(t);
  return acc / static_cast<double>(tokens.size());
}

struct TextDims {
  std::size_t lm = 1024;
  std::size_t subword = 100;
  std::size_t docvec = 100;
  std::size_t emotion = 32;

  std::size_t total() const { return lm + subword + docvec + emotion; }
};

struct AudioDims {
  std::size_t wavenet = 16;
  std::size_t vggish = 128;
  std::size_t emotion = 64;
};

// [lm | subword | docvec | emotion_text]
inline FeatureVector concat_segment_text(const Vec& lm, const Vec& subword, const Vec& docvec, const Vec& emotion_text,
                                         const TextDims& dims = {}) {
  return concat_blocks({{"lm", &lm, dims.lm},
                        {"subword", &subword, dims.subword},
                        {"docvec", &docvec, dims.docvec},
                        {"emotion_text", &emotion_text, dims.emotion}});
}

// [wavenet | vggish | dsp | emotion_audio]
inline FeatureVector concat_segment_audio(const Vec& wavenet, const Vec& vggish, const FeatureVector& dsp_block,
                                          const Vec& emotion_audio, const AudioDims& dims = {}) {
  const Vec& d = dsp_block.values();
  return concat_blocks({{"wavenet", &wavenet, dims.wavenet},
                        {"vggish", &vggish, dims.vggish},
                        {"dsp", &d, 0},
                        {"emotion_audio", &emotion_audio, dims.emotion}});
}

// The four text encoders and two audio encoders of the segment pipeline.
// Each may be backed by a loaded table; missing tables behave as empty ones.
struct EncoderSet {
  TextDims text_dims;
  AudioDims audio_dims;
  std::map<std::string, EmbeddingTable> tables;  // keyed by encoder name

  const EmbeddingTable& table(const std::string& name, std::size_t dim) {
    auto it = tables.find(name);
    if (it == tables.end()) it = tables.emplace(name, EmbeddingTable({name, dim})).first;
    if (it->second.spec().dim != dim) {
      throw ConfigError("embedding table '" + name + "' has dim " + std::to_string(it->second.spec().dim) +
                        ", configured " + std::to_string(dim));
    }
    return it->second;
  }

  // Segment-keyed entry if present, else the token average.
  Vec text_block(const std::string& name, std::size_t dim, const SegmentRecord& seg) {
    const auto& t = table(name, dim);
    if (const auto* v = t.find(seg.segment_id)) return *v;
    if (seg.tokens.empty()) return Vec::Zero(static_cast<Eigen::Index>(dim));
    return average_tokens(t, seg.tokens);
  }

  Vec audio_block(const std::string& name, std::size_t dim, const SegmentRecord& seg) {
    return table(name, dim).lookup(seg.segment_id);
  }

  Vec lm(const SegmentRecord& s) { return text_block("lm", text_dims.lm, s); }
  Vec subword(const SegmentRecord& s) { return text_block("subword", text_dims.subword, s); }
  Vec docvec(const SegmentRecord& s) { return text_block("docvec", text_dims.docvec, s); }
  Vec wavenet(const SegmentRecord& s) { return audio_block("wavenet", audio_dims.wavenet, s); }
  Vec vggish(const SegmentRecord& s) { return audio_block("vggish", audio_dims.vggish, s); }

  // Per-token subword vectors, the input sequence of the text emotion network.
  std::vector<Vec> subword_sequence(const std::vector<std::string>& tokens) {
    const auto& t = table("subword", text_dims.subword);
    std::vector<Vec> seq;
    seq.reserve(tokens.size());
    for (const auto& tok : tokens) seq.push_back(t.lookup(tok));
    return seq;
  }
};

// ---------------------------------------------------------------------------
// Content-derived stand-ins for precomputed audio encoder outputs. The
// pipeline only ever reads tables; these produce tables for corpora that
// come without real encoder files. Each output is tanh(R f) normalized,
// where f holds the per-band mean and std of the log-mel spectrogram and
// row k of R is stub_encode(name, "proj<k>").

struct AudioProxyConfig {
  dsp::FrameConfig frame;
  int n_mels = 26;
};

inline Vec audio_proxy_encode(std::string_view name, const AudioBuffer& audio, std::size_t dim,
                              const AudioProxyConfig& cfg = {}) {
  if (dim == 0) throw ConfigError("audio proxy encoder needs dim > 0");
  const Mat img = dsp::log_mel(dsp::mel_spectrogram(audio, cfg.frame, cfg.n_mels));
  const Vec mean = img.colwise().mean().transpose();
  const Vec sd = (img.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt().transpose();
  Vec f(2 * cfg.n_mels);
  f << mean, sd;
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const Vec row = stub_encode(name, "proj" + std::to_string(k), static_cast<std::size_t>(f.size()));
    v(k) = std::tanh(row.dot(f));
  }
  const double n = v.norm();
  return n > 0 ? Vec(v / n) : v;
}

// Tables "wavenet" and "vggish" keyed by segment id, for every segment with
// audio. Audio is loaded through load_audio_ref.
inline std::map<std::string, EmbeddingTable> audio_proxy_tables(const CorpusManifest& corpus, const AudioDims& dims,
                                                                int sample_rate, const AudioProxyConfig& cfg = {}) {
  EmbeddingTable wav({"wavenet", dims.wavenet}), vgg({"vggish", dims.vggish});
  for (const auto& d : corpus.documents) {
    for (const auto& s : d.segments) {
      if (!s.has_audio()) continue;
      const auto audio = load_audio_ref(s.audio_path, corpus.base_dir, sample_rate);
      wav.insert(s.segment_id, audio_proxy_encode("wavenet", audio, dims.wavenet, cfg));
      vgg.insert(s.segment_id, audio_proxy_encode("vggish", audio, dims.vggish, cfg));
    }
  }
  return {{"wavenet", std::move(wav)}, {"vggish", std::move(vgg)}};
}

// ---------------------------------------------------------------------------
// Bag-of-words / tf-idf

using TokenDoc = std::vector<std::string>;

class BowVectorizer {
 public:
  void fit(const std::vector<TokenDoc>& docs) {
    std::map<std::string, std::size_t> vocab;
    for (const auto& d : docs) {
      for (const auto& t : d) vocab.emplace(t, 0);
    }
    if (vocab.empty()) throw DataError("empty vocabulary");
    std::size_t i = 0;
    for (auto& [_, idx] : vocab) idx = i++;
    vocab_ = std::move(vocab);
  }

  // Raw counts; tokens outside the fitted vocabulary are ignored.
  Mat transform(const std::vector<TokenDoc>& docs) const {
    if (vocab_.empty()) throw RuntimeFailure("vectorizer used before fit");
    Mat x = Mat::Zero(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(vocab_.size()));
    for (std::size_t r = 0; r < docs.size(); ++r) {
      for (const auto& t : docs[r]) {
        const auto it = vocab_.find(t);
        if (it != vocab_.end()) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(it->second)) += 1.0;
      }
    }
    return x;
  }

  const std::map<std::string, std::size_t>& vocabulary() const { return vocab_; }

 private:
  std::map<std::string, std::size_t> vocab_;
};

// tf x (ln((1 + N) / (1 + df)) + 1), rows L2-normalized.
class TfidfVectorizer {
 public:
  void fit(const std::vector<TokenDoc>& docs) {
    bow_.fit(docs);
    const Mat counts = bow_.transform(docs);
    const double n = static_cast<double>(docs.size());
    idf_.resize(counts.cols());
    for (Eigen::Index c = 0; c < counts.cols(); ++c) {
      const double df = static_cast<double>((counts.col(c).array() > 0).count());
      idf_(c) = std::log((1.0 + n) / (1.0 + df)) + 1.0;
    }
  }

  Mat transform(const std::vector<TokenDoc>& docs) const {
    Mat x = bow_.transform(docs);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      x.row(r).array() *= idf_.transpose().array();
      const double norm = x.row(r).norm();
      if (norm > 0) x.row(r) /= norm;
    }
    return x;
  }

  const Vec& idf() const { return idf_; }
  const std::map<std::string, std::size_t>& vocabulary() const { return bow_.vocabulary(); }

 private:
  BowVectorizer bow_;
  Vec idf_;
};

inline TokenDoc document_tokens(const DocumentRecord& d) {
  TokenDoc out;
  for (const auto& s : d.segments) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

}  // namespace speechfuse::embed
