#pragma once

// Segment/document data model: JSONL load/save with validation, summary
// statistics, label count matrices, and the planted-signal corpus generator.

#include "speechfuse/audio.hpp"
#include "speechfuse/common.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <set>

namespace speechfuse {

enum class Subjectivity { objective, subjective };
enum class Sentiment { negative, neutral, positive };
enum class Emotion { anger, fear, joy, sadness, neutral };
enum class Disorder { control, depression, bipolar, schizophrenia };

inline constexpr std::array<const char*, 2> kSubjectivityNames{"objective", "subjective"};
inline constexpr std::array<const char*, 3> kSentimentNames{"negative", "neutral", "positive"};
inline constexpr std::array<const char*, 5> kEmotionNames{"anger", "fear", "joy", "sadness", "neutral"};
inline constexpr std::array<const char*, 4> kDisorderNames{"control", "depression", "bipolar", "schizophrenia"};
inline constexpr std::array<const char*, 5> kRatingNames{"affect", "warmth", "overprotection", "cohesion",
                                                         "criticism"};

// Names of the 12 segment label dimensions, in encoding order.
inline constexpr std::array<const char*, 12> kSegmentLabelDims{
    "subjective", "sentiment", "anger",      "fear",  "joy",      "sadness",
    "neutral",    "cohesion",  "rumination", "overinclusiveness", "worry", "criticism"};

template <typename E, std::size_t N>
E parse_enum(const std::array<const char*, N>& names, std::string_view value, std::string_view field) {
  for (std::size_t i = 0; i < N; ++i) {
    if (value == names[i]) return static_cast<E>(i);
  }
  throw DataError("field '" + std::string(field) + "': invalid value '" + std::string(value) + "'");
}

template <typename E, std::size_t N>
const char* enum_name(const std::array<const char*, N>& names, E e) {
  return names.at(static_cast<std::size_t>(e));
}

inline const char* to_string(Emotion e) { return enum_name(kEmotionNames, e); }
inline const char* to_string(Disorder d) { return enum_name(kDisorderNames, d); }
inline const char* to_string(Sentiment s) { return enum_name(kSentimentNames, s); }
inline const char* to_string(Subjectivity s) { return enum_name(kSubjectivityNames, s); }

struct SegmentLabels {
  Subjectivity subjectivity = Subjectivity::objective;
  Sentiment sentiment = Sentiment::neutral;
  Emotion emotion = Emotion::neutral;
  bool cohesion = false;
  bool rumination = false;
  bool overinclusiveness = false;
  bool worry = false;
  bool criticism = false;

  // 12-dim target: subjectivity and sentiment take one slot each
  // (sentiment as 0 / 0.5 / 1), emotion is one-hot over 5, then 5 flags.
  Vec encode() const {
    Vec v = Vec::Zero(12);
    v(0) = subjectivity == Subjectivity::subjective ? 1.0 : 0.0;
    v(1) = 0.5 * static_cast<int>(sentiment);
    v(2 + static_cast<int>(emotion)) = 1.0;
    v(7) = cohesion;
    v(8) = rumination;
    v(9) = overinclusiveness;
    v(10) = worry;
    v(11) = criticism;
    return v;
  }

  bool operator==(const SegmentLabels&) const = default;
};

struct DocumentLabels {
  Disorder disorder = Disorder::control;
  std::array<int, 5> ratings{3, 3, 3, 3, 3};  // order of kRatingNames

  bool operator==(const DocumentLabels&) const = default;
};

struct SegmentRecord {
  std::string segment_id;
  std::vector<std::string> tokens;
  std::string audio_path;  // WAV path or "synth:" reference; empty = no audio
  double duration_s = 0.0;
  std::optional<SegmentLabels> labels;

  bool has_audio() const { return !audio_path.empty(); }
  bool operator==(const SegmentRecord&) const = default;
};

struct DocumentRecord {
  std::string document_id;
  std::string subject_id;
  std::string family_id;
  std::vector<SegmentRecord> segments;
  DocumentLabels labels;

  bool operator==(const DocumentRecord&) const = default;
};

struct CorpusManifest {
  std::vector<DocumentRecord> documents;
  std::string schema_version = "1";
  std::filesystem::path base_dir;  // where relative audio paths resolve; not serialized

  std::size_t segment_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.segments.size();
    return n;
  }

  bool operator==(const CorpusManifest& o) const {
    return documents == o.documents && schema_version == o.schema_version;
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

using ojson = nlohmann::ordered_json;

inline ojson segment_labels_to_json(const SegmentLabels& l) {
  ojson j;
  j["subjectivity"] = to_string(l.subjectivity);
  j["sentiment"] = to_string(l.sentiment);
  j["emotion"] = to_string(l.emotion);
  j["cohesion"] = l.cohesion;
  j["rumination"] = l.rumination;
  j["overinclusiveness"] = l.overinclusiveness;
  j["worry"] = l.worry;
  j["criticism"] = l.criticism;
  return j;
}

inline ojson document_to_json(const DocumentRecord& d) {
  ojson j;
  j["document_id"] = d.document_id;
  j["subject_id"] = d.subject_id;
  j["family_id"] = d.family_id;
  ojson labels;
  labels["disorder"] = to_string(d.labels.disorder);
  for (std::size_t i = 0; i < kRatingNames.size(); ++i) labels[kRatingNames[i]] = d.labels.ratings[i];
  j["labels"] = labels;
  ojson segs = ojson::array();
  for (const auto& s : d.segments) {
    ojson js;
    js["segment_id"] = s.segment_id;
    js["tokens"] = s.tokens;
    js["audio_path"] = s.audio_path.empty() ? ojson(nullptr) : ojson(s.audio_path);
    js["duration_s"] = s.duration_s;
    if (s.labels) js["labels"] = segment_labels_to_json(*s.labels);
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  return j;
}

namespace detail {

template <typename J>
const J& require(const J& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

template <typename J>
std::string require_string(const J& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw DataError(where + ": field '" + key + "' must be a string");
  return v.template get<std::string>();
}

template <typename J>
bool require_bool(const J& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_boolean()) throw DataError(where + ": field '" + key + "' must be a boolean");
  return v.template get<bool>();
}

}  // namespace detail

inline SegmentLabels segment_labels_from_json(const ojson& j, const std::string& where) {
  SegmentLabels l;
  l.subjectivity = parse_enum<Subjectivity>(kSubjectivityNames, detail::require_string(j, "subjectivity", where),
                                            where + " subjectivity");
  l.sentiment = parse_enum<Sentiment>(kSentimentNames, detail::require_string(j, "sentiment", where),
                                      where + " sentiment");
  l.emotion = parse_enum<Emotion>(kEmotionNames, detail::require_string(j, "emotion", where), where + " emotion");
  l.cohesion = detail::require_bool(j, "cohesion", where);
  l.rumination = detail::require_bool(j, "rumination", where);
  l.overinclusiveness = detail::require_bool(j, "overinclusiveness", where);
  l.worry = detail::require_bool(j, "worry", where);
  l.criticism = detail::require_bool(j, "criticism", where);
  return l;
}

inline DocumentRecord document_from_json(const ojson& j, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": document must be a JSON object");
  DocumentRecord d;
  d.document_id = detail::require_string(j, "document_id", where);
  d.subject_id = detail::require_string(j, "subject_id", where);
  d.family_id = detail::require_string(j, "family_id", where);
  if (d.family_id.empty()) throw DataError(where + ": field 'family_id' must be nonempty");
  const std::string dwhere = where + " document '" + d.document_id + "'";
  const auto& labels = detail::require(j, "labels", dwhere);
  d.labels.disorder = parse_enum<Disorder>(kDisorderNames, detail::require_string(labels, "disorder", dwhere),
                                           dwhere + " labels.disorder");
  for (std::size_t i = 0; i < kRatingNames.size(); ++i) {
    const auto& r = detail::require(labels, kRatingNames[i], dwhere);
    if (!r.is_number_integer()) {
      throw DataError(dwhere + ": field '" + kRatingNames[i] + "' must be an integer rating");
    }
    const auto v = r.get<long long>();
    if (v < 1 || v > 5) {
      throw DataError(dwhere + ": field '" + kRatingNames[i] + "' rating " + std::to_string(v) +
                      " outside [1,5]");
    }
    d.labels.ratings[i] = static_cast<int>(v);
  }
  const auto& segs = detail::require(j, "segments", dwhere);
  if (!segs.is_array() || segs.empty()) throw DataError(dwhere + ": field 'segments' must be a nonempty array");
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& js = segs[k];
    const std::string swhere = dwhere + " segments[" + std::to_string(k) + "]";
    SegmentRecord s;
    s.segment_id = detail::require_string(js, "segment_id", swhere);
    const auto& toks = detail::require(js, "tokens", swhere);
    if (!toks.is_array()) throw DataError(swhere + ": field 'tokens' must be an array");
    for (const auto& t : toks) {
      if (!t.is_string()) throw DataError(swhere + ": field 'tokens' must hold strings");
      s.tokens.push_back(t.get<std::string>());
    }
    if (js.contains("audio_path") && !js.at("audio_path").is_null()) {
      if (!js.at("audio_path").is_string()) throw DataError(swhere + ": field 'audio_path' must be a string");
      s.audio_path = js.at("audio_path").get<std::string>();
    }
    if (js.contains("duration_s")) {
      if (!js.at("duration_s").is_number()) throw DataError(swhere + ": field 'duration_s' must be a number");
      s.duration_s = js.at("duration_s").get<double>();
    }
    if (!(s.duration_s >= 0.0)) throw DataError(swhere + ": field 'duration_s' must be >= 0");
    if (s.tokens.empty() && !s.has_audio()) throw DataError(swhere + ": segment has neither tokens nor audio");
    if (s.has_audio() && !(s.duration_s > 0.0)) {
      throw DataError(swhere + ": field 'duration_s' must be > 0 when audio is present");
    }
    if (js.contains("labels") && !js.at("labels").is_null()) {
      s.labels = segment_labels_from_json(js.at("labels"), swhere + " labels");
    }
    d.segments.push_back(std::move(s));
  }
  return d;
}

// Serialization: optional header line {"schema_version": ...} then one
// document per line.
inline std::string save_corpus_string(const CorpusManifest& m) {
  std::string out;
  ojson header;
  header["schema_version"] = m.schema_version;
  out += header.dump() + "\n";
  for (const auto& d : m.documents) out += document_to_json(d).dump() + "\n";
  return out;
}

inline void save_corpus(const std::filesystem::path& path, const CorpusManifest& m) {
  write_file_atomic(path, save_corpus_string(m));
}

inline CorpusManifest parse_corpus(std::string_view text, const std::string& name) {
  CorpusManifest m;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": parse error: " + e.what());
    }
    if (j.is_object() && j.contains("schema_version") && !j.contains("document_id")) {
      if (!j.at("schema_version").is_string()) throw DataError(where + ": schema_version must be a string");
      m.schema_version = j.at("schema_version").get<std::string>();
      continue;
    }
    auto doc = document_from_json(j, where);
    if (!ids.insert(doc.document_id).second) {
      throw DataError(where + ": duplicate document_id '" + doc.document_id + "'");
    }
    m.documents.push_back(std::move(doc));
  }
  return m;
}

inline CorpusManifest load_corpus(const std::filesystem::path& path) {
  auto m = parse_corpus(read_text_file(path), path.string());
  m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return m;
}

// ---------------------------------------------------------------------------
// Statistics and count matrices

struct StatsTable {
  std::vector<std::pair<std::string, double>> rows;

  double get(std::string_view key) const {
    for (const auto& [k, v] : rows) {
      if (k == key) return v;
    }
    throw std::out_of_range("no stats row '" + std::string(key) + "'");
  }

  std::string to_csv() const {
    std::string out = "attribute,value\n";
    for (const auto& [k, v] : rows) out += k + "," + fmt_double(v) + "\n";
    return out;
  }
};

inline StatsTable corpus_stats(const CorpusManifest& corpus) {
  std::set<std::string> subjects, families;
  std::size_t segments = 0, words = 0, audio_segments = 0, unlabeled = 0;
  double audio_seconds = 0.0;
  std::array<std::size_t, 2> subj{};
  std::array<std::size_t, 3> sent{};
  std::array<std::size_t, 5> emo{};
  std::array<std::size_t, 5> flags{};
  std::array<std::size_t, 4> disorders{};
  for (const auto& d : corpus.documents) {
    subjects.insert(d.subject_id);
    families.insert(d.family_id);
    ++disorders[static_cast<int>(d.labels.disorder)];
    for (const auto& s : d.segments) {
      ++segments;
      words += s.tokens.size();
      if (s.has_audio()) {
        ++audio_segments;
        audio_seconds += s.duration_s;
      }
      if (!s.labels) {
        ++unlabeled;
        continue;
      }
      const auto& l = *s.labels;
      ++subj[static_cast<int>(l.subjectivity)];
      ++sent[static_cast<int>(l.sentiment)];
      ++emo[static_cast<int>(l.emotion)];
      flags[0] += l.cohesion;
      flags[1] += l.rumination;
      flags[2] += l.overinclusiveness;
      flags[3] += l.worry;
      flags[4] += l.criticism;
    }
  }
  StatsTable t;
  auto add = [&](std::string k, double v) { t.rows.emplace_back(std::move(k), v); };
  add("total_documents", static_cast<double>(corpus.documents.size()));
  add("total_subjects", static_cast<double>(subjects.size()));
  add("total_families", static_cast<double>(families.size()));
  add("total_segments", static_cast<double>(segments));
  add("average_word_count", segments ? static_cast<double>(words) / segments : 0.0);
  add("average_audio_duration_s", audio_segments ? audio_seconds / audio_segments : 0.0);
  add("objective_segments", static_cast<double>(subj[0]));
  add("subjective_segments", static_cast<double>(subj[1]));
  add("negative_sentiment_segments", static_cast<double>(sent[0]));
  add("neutral_sentiment_segments", static_cast<double>(sent[1]));
  add("positive_sentiment_segments", static_cast<double>(sent[2]));
  for (std::size_t i = 0; i < emo.size(); ++i) add(std::string(kEmotionNames[i]) + "_emotion_segments", emo[i]);
  add("cohesive_segments", static_cast<double>(flags[0]));
  add("ruminated_segments", static_cast<double>(flags[1]));
  add("overinclusive_segments", static_cast<double>(flags[2]));
  add("worry_segments", static_cast<double>(flags[3]));
  add("criticism_segments", static_cast<double>(flags[4]));
  add("unlabeled_segments", static_cast<double>(unlabeled));
  for (std::size_t i = 0; i < disorders.size(); ++i) add(std::string(kDisorderNames[i]) + "_documents", disorders[i]);
  return t;
}

enum class HeatmapLevel { segment, document };

// Label-value count matrix. Segment level: rows subjectivity, sentiment,
// emotion, then the five flags; columns objective, subjective, negative,
// neutral, positive, anger, fear, joy, sadness, false, true. Document level:
// rows disorder then the five ratings; columns the four disorders then 1..5.
struct CountMatrix {
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t at(std::string_view row, std::string_view col) const {
    const auto r = std::find(row_names.begin(), row_names.end(), row) - row_names.begin();
    const auto c = std::find(col_names.begin(), col_names.end(), col) - col_names.begin();
    if (r >= static_cast<long>(row_names.size()) || c >= static_cast<long>(col_names.size())) {
      throw std::out_of_range("no heatmap cell " + std::string(row) + "/" + std::string(col));
    }
    return counts[r][c];
  }

  std::string to_csv() const {
    std::string out = "label";
    for (const auto& c : col_names) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < row_names.size(); ++r) {
      out += row_names[r];
      for (auto v : counts[r]) out += "," + std::to_string(v);
      out += "\n";
    }
    return out;
  }
};

inline CountMatrix label_heatmap(const CorpusManifest& corpus, HeatmapLevel level) {
  CountMatrix m;
  auto col = [&](std::string_view name) {
    return static_cast<std::size_t>(std::find(m.col_names.begin(), m.col_names.end(), name) - m.col_names.begin());
  };
  if (level == HeatmapLevel::segment) {
    m.row_names = {"subjectivity", "sentiment", "emotion", "cohesion", "rumination", "overinclusiveness", "worry",
                   "criticism"};
    m.col_names = {"objective", "subjective", "negative", "neutral", "positive", "anger",
                   "fear",      "joy",        "sadness",  "false",   "true"};
    m.counts.assign(m.row_names.size(), std::vector<std::size_t>(m.col_names.size(), 0));
    for (const auto& d : corpus.documents) {
      for (const auto& s : d.segments) {
        if (!s.labels) continue;
        const auto& l = *s.labels;
        ++m.counts[0][col(to_string(l.subjectivity))];
        ++m.counts[1][col(to_string(l.sentiment))];
        ++m.counts[2][col(to_string(l.emotion))];
        const std::array<bool, 5> f{l.cohesion, l.rumination, l.overinclusiveness, l.worry, l.criticism};
        for (std::size_t i = 0; i < f.size(); ++i) ++m.counts[3 + i][col(f[i] ? "true" : "false")];
      }
    }
  } else {
    m.row_names = {"disorder"};
    for (auto r : kRatingNames) m.row_names.emplace_back(r);
    for (auto d : kDisorderNames) m.col_names.emplace_back(d);
    for (int v = 1; v <= 5; ++v) m.col_names.push_back(std::to_string(v));
    m.counts.assign(m.row_names.size(), std::vector<std::size_t>(m.col_names.size(), 0));
    for (const auto& d : corpus.documents) {
      ++m.counts[0][static_cast<std::size_t>(d.labels.disorder)];
      for (std::size_t i = 0; i < 5; ++i) ++m.counts[1 + i][4 + d.labels.ratings[i] - 1];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Planted-signal generator

struct SynthConfig {
  int n_families = 150;
  int docs_per_family_min = 1;
  int docs_per_family_max = 7;
  int segments_per_doc_min = 3;
  int segments_per_doc_max = 8;
  int tokens_per_segment_min = 6;
  int tokens_per_segment_max = 14;
  // control, depression, bipolar, schizophrenia
  std::array<double, 4> class_priors{129.0 / 363, 149.0 / 363, 66.0 / 363, 19.0 / 363};
  // Probability that a document keeps its family's disorder class.
  double family_concordance = 0.7;
  double text_strength = 0.8;
  double audio_strength = 0.8;
  // A segment carries a class marker with probability marker_rate * strength^3.
  double marker_rate = 0.5;
  bool include_audio = true;
  int sample_rate_hz = 8000;
  double duration_min_s = 0.5;
  double duration_max_s = 1.0;
  int vocab_size = 300;
  int markers_per_class = 4;
  // anger, fear, joy, sadness, neutral
  std::array<double, 5> emotion_probs{0.07, 0.05, 0.26, 0.07, 0.55};

  void validate() const {
    double sum = 0.0;
    for (double p : class_priors) {
      if (!(p >= 0.0)) throw ConfigError("class priors must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class priors must sum to 1 (got " + fmt_double(sum) + ")");
    double esum = 0.0;
    for (double p : emotion_probs) esum += p;
    if (std::abs(esum - 1.0) > 1e-9) throw ConfigError("emotion probabilities must sum to 1");
    for (double s : {text_strength, audio_strength, family_concordance, marker_rate}) {
      if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("signal strengths and rates must lie in [0,1]");
    }
    if (n_families < 1 || docs_per_family_min < 1 || docs_per_family_max < docs_per_family_min ||
        segments_per_doc_min < 1 || segments_per_doc_max < segments_per_doc_min || tokens_per_segment_min < 1 ||
        tokens_per_segment_max < tokens_per_segment_min || vocab_size < 1 || markers_per_class < 1) {
      throw ConfigError("synthetic corpus size ranges are inconsistent");
    }
    if (include_audio && (sample_rate_hz < 8000 || !(duration_min_s > 0) || duration_max_s < duration_min_s)) {
      throw ConfigError("synthetic audio needs sample rate >= 8000 Hz and a positive duration range");
    }
  }

  double marker_probability(double strength) const { return marker_rate * strength * strength * strength; }
};

// Class tone planted in audio for each disorder, in Hz.
inline constexpr std::array<double, 4> kClassToneHz{600.0, 1000.0, 1500.0, 2200.0};

inline std::string class_marker_token(Disorder d, int k) {
  return std::string("cls_") + to_string(d) + "_" + std::to_string(k);
}
inline std::string emotion_marker_token(Emotion e, int k) {
  return std::string("emo_") + to_string(e) + "_" + std::to_string(k);
}

// Emotion shapes prosody in the synthetic voice: f0 scale, amplitude scale,
// vibrato depth, jitter.
struct EmotionProsody {
  double f0_scale, amp_scale, vibrato, jitter;
};
inline EmotionProsody emotion_prosody(Emotion e) {
  switch (e) {
    case Emotion::anger: return {1.35, 1.6, 0.0, 0.01};
    case Emotion::fear: return {1.25, 0.8, 0.0, 0.06};
    case Emotion::joy: return {1.2, 1.2, 0.06, 0.0};
    case Emotion::sadness: return {0.8, 0.55, 0.0, 0.0};
    case Emotion::neutral: break;
  }
  return {1.0, 1.0, 0.0, 0.0};
}

inline CorpusManifest synth_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  CorpusManifest m;
  const double p_text = cfg.marker_probability(cfg.text_strength);
  const double p_audio = cfg.marker_probability(cfg.audio_strength);
  const std::array<double, 4> priors = cfg.class_priors;
  const std::array<double, 5> emo_p = cfg.emotion_probs;
  for (int f = 0; f < cfg.n_families; ++f) {
    const std::string family = "fam" + std::to_string(f);
    const auto family_class = static_cast<Disorder>(rng.categorical(priors));
    const int n_docs = rng.range(cfg.docs_per_family_min, cfg.docs_per_family_max);
    const int n_parents = rng.range(1, 2);
    std::array<double, 2> parent_f0{};
    for (auto& p : parent_f0) p = rng.bernoulli(0.5) ? rng.uniform(95, 130) : rng.uniform(170, 230);
    for (int di = 0; di < n_docs; ++di) {
      DocumentRecord doc;
      const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_parents)));
      doc.document_id = family + "-d" + std::to_string(di);
      doc.subject_id = family + "-p" + std::to_string(parent);
      doc.family_id = family;
      doc.labels.disorder = rng.bernoulli(cfg.family_concordance) ? family_class
                                                                  : static_cast<Disorder>(rng.categorical(priors));
      for (auto& r : doc.labels.ratings) r = rng.range(1, 5);
      const int cls = static_cast<int>(doc.labels.disorder);
      const int n_segs = rng.range(cfg.segments_per_doc_min, cfg.segments_per_doc_max);
      for (int si = 0; si < n_segs; ++si) {
        SegmentRecord seg;
        seg.segment_id = doc.document_id + "-s" + std::to_string(si);
        SegmentLabels lab;
        lab.emotion = static_cast<Emotion>(rng.categorical(emo_p));
        switch (lab.emotion) {
          case Emotion::joy: lab.sentiment = rng.bernoulli(0.85) ? Sentiment::positive : Sentiment::neutral; break;
          case Emotion::neutral: {
            const double u = rng.uniform();
            lab.sentiment = u < 0.6 ? Sentiment::neutral : (u < 0.8 ? Sentiment::positive : Sentiment::negative);
            break;
          }
          default: lab.sentiment = rng.bernoulli(0.85) ? Sentiment::negative : Sentiment::neutral; break;
        }
        const double p_subj = lab.emotion == Emotion::neutral ? 0.45 : 0.75;
        lab.subjectivity = rng.bernoulli(p_subj) ? Subjectivity::subjective : Subjectivity::objective;
        lab.cohesion = rng.bernoulli(0.16);
        lab.rumination = rng.bernoulli(0.013);
        lab.overinclusiveness = rng.bernoulli(0.027);
        lab.worry = rng.bernoulli(0.074);
        lab.criticism = rng.bernoulli(0.10);

        const int n_tok = rng.range(cfg.tokens_per_segment_min, cfg.tokens_per_segment_max);
        for (int t = 0; t < n_tok; ++t) seg.tokens.push_back("w" + std::to_string(rng.below(cfg.vocab_size)));
        auto place = [&](std::string tok) { seg.tokens[rng.below(seg.tokens.size())] = std::move(tok); };
        if (lab.emotion != Emotion::neutral) place(emotion_marker_token(lab.emotion, rng.range(0, 2)));
        if (lab.worry) place("lbl_worry");
        if (lab.criticism) place("lbl_criticism");
        if (rng.bernoulli(p_text)) {
          place(class_marker_token(doc.labels.disorder, rng.range(0, cfg.markers_per_class - 1)));
        }

        const bool tone = rng.bernoulli(p_audio);
        if (cfg.include_audio) {
          const auto pros = emotion_prosody(lab.emotion);
          SynthVoice v;
          v.sample_rate_hz = cfg.sample_rate_hz;
          v.duration_s = std::round(rng.uniform(cfg.duration_min_s, cfg.duration_max_s) * 1000.0) / 1000.0;
          v.f0_hz = std::round(parent_f0[parent] * pros.f0_scale * rng.uniform(0.95, 1.05) * 100.0) / 100.0;
          v.amplitude = std::round(0.3 * pros.amp_scale * 1000.0) / 1000.0;
          v.vibrato_depth = pros.vibrato;
          v.jitter = pros.jitter;
          if (tone) {
            v.tone_hz = kClassToneHz[cls];
            v.tone_amplitude = 0.15;
          }
          v.noise_amplitude = 0.01;
          v.seed = rng.next_u64() >> 12;
          seg.audio_path = v.to_uri();
          seg.duration_s = v.duration_s;
        }
        seg.labels = lab;
        doc.segments.push_back(std::move(seg));
      }
      m.documents.push_back(std::move(doc));
    }
  }
  return m;
}

}  // namespace speechfuse
