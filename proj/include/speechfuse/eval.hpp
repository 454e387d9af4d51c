#pragma once

// Evaluation protocol: family-grouped k-fold CV, random oversampling of
// training folds, task construction, accuracy / ROC / AUC, and the full
// text x audio x multimodal experiment grid with its report files.

#include <atomic>
#include <functional>
#include <mutex>
#include <thread>

#include "speechfuse/embed.hpp"
#include "speechfuse/fusion.hpp"
#include "speechfuse/plot.hpp"
#include "speechfuse/shallow.hpp"
#include "speechfuse/transfer.hpp"

namespace speechfuse::eval {

using nn::json;

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignment;  // family_id -> fold
  std::vector<int> doc_fold;              // per document index
  std::vector<std::size_t> fold_docs;     // documents per fold

  std::vector<std::size_t> test_docs(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < doc_fold.size(); ++d) {
      if (doc_fold[d] == fold) out.push_back(d);
    }
    return out;
  }
  std::vector<std::size_t> train_docs(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < doc_fold.size(); ++d) {
      if (doc_fold[d] != fold) out.push_back(d);
    }
    return out;
  }
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Families are shuffled by seed, then each goes whole to the fold with the
// fewest documents so far (lowest index on ties).
inline FoldPlan grouped_kfold(const CorpusManifest& corpus, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be >= 2, got " + std::to_string(k));
  std::map<std::string, std::size_t> fam_docs;
  for (const auto& d : corpus.documents) ++fam_docs[d.family_id];
  if (fam_docs.size() < static_cast<std::size_t>(k)) {
    throw DataError("corpus has " + std::to_string(fam_docs.size()) + " families, fewer than k=" + std::to_string(k));
  }
  std::vector<std::string> fams;
  for (const auto& [f, _] : fam_docs) fams.push_back(f);
  Rng rng(seed);
  shuffle(fams, rng);
  FoldPlan plan;
  plan.k = k;
  plan.fold_docs.assign(static_cast<std::size_t>(k), 0);
  for (const auto& f : fams) {
    const auto fold = std::min_element(plan.fold_docs.begin(), plan.fold_docs.end()) - plan.fold_docs.begin();
    plan.assignment[f] = static_cast<int>(fold);
    plan.fold_docs[static_cast<std::size_t>(fold)] += fam_docs[f];
  }
  for (const auto& d : corpus.documents) plan.doc_fold.push_back(plan.assignment.at(d.family_id));
  return plan;
}

// Appends duplicates drawn with replacement from each minority class until
// every class reaches the majority count. `labels[i]` belongs to `train[i]`.
inline std::vector<std::size_t> random_oversample(const std::vector<std::size_t>& train, const std::vector<int>& labels,
                                                  std::uint64_t seed) {
  if (train.size() != labels.size()) throw DataError("oversampling indices and labels differ in length");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[labels[i]].push_back(train[i]);
  if (by_class.size() < 2) throw DataError("training fold holds a single class; cannot oversample");
  std::size_t target = 0;
  for (const auto& [_, v] : by_class) target = std::max(target, v.size());
  Rng rng(seed);
  std::vector<std::size_t> out = train;
  for (const auto& [_, v] : by_class) {
    for (std::size_t n = v.size(); n < target; ++n) out.push_back(v[rng.below(v.size())]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tasks

enum class Framing { vs_control, vs_rest };

inline const char* to_string(Framing f) { return f == Framing::vs_control ? "vs_control" : "vs_rest"; }

// control: control (positive) against every disorder. A disorder task puts
// that disorder against control, or against all other documents (vs_rest).
struct TaskSpec {
  Disorder target = Disorder::control;
  Framing framing = Framing::vs_control;

  std::string name() const { return speechfuse::to_string(target); }

  std::optional<int> label(Disorder d) const {
    if (target == Disorder::control) return d == Disorder::control ? 1 : 0;
    if (d == target) return 1;
    if (framing == Framing::vs_rest || d == Disorder::control) return 0;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;

  void add(int pred, int truth) {
    if (pred) (truth ? tp : fp) += 1;
    else (truth ? fn : tn) += 1;
  }
  void merge(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
  }
  long n() const { return tp + fp + tn + fn; }
  double accuracy() const { return n() ? static_cast<double>(tp + tn) / static_cast<double>(n()) : 0.0; }
};

struct RocCurve {
  std::vector<double> fpr, tpr, threshold;  // threshold[0] = +inf

  std::string to_csv() const {
    std::string out = "fpr,tpr,threshold\n";
    for (std::size_t i = 0; i < fpr.size(); ++i) {
      out += fmt_double(fpr[i]) + "," + fmt_double(tpr[i]) + "," +
             (std::isinf(threshold[i]) ? std::string("inf") : fmt_double(threshold[i])) + "\n";
    }
    return out;
  }
};

struct RocResult {
  RocCurve curve;
  double auc = 0.0;
};

// Threshold sweep over unique scores (predict positive when score >= t). The
// trapezoid area is accumulated as an integer count of doubled pair wins so
// it equals the Mann-Whitney statistic with ties counted as one half.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  long long pos = 0, neg = 0;
  for (int y : labels) (y ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw DataError("ROC needs both classes present");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocResult r;
  r.curve.fpr.push_back(0.0);
  r.curve.tpr.push_back(0.0);
  r.curve.threshold.push_back(std::numeric_limits<double>::infinity());
  long long tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    long long dtp = 0, dfp = 0;
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? dtp : dfp) += 1;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    r.curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    r.curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    r.curve.threshold.push_back(t);
  }
  r.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return r;
}

// ---------------------------------------------------------------------------
// Configuration

enum class FusionKind { document, segment };
enum class FusionInput { sequences, doc_vectors };

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError("unknown key '" + k + "' in " + where);
    }
  }
}

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"lstm", "rf", "svm", "knn", "lda", "qda", "nb"};
  return names;
}

inline std::string model_display(const std::string& m) {
  std::string s = m;
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int folds = 5;
  Framing framing = Framing::vs_control;
  std::vector<Disorder> tasks{Disorder::control, Disorder::depression, Disorder::bipolar, Disorder::schizophrenia};
  bool oversample = true;
  std::vector<std::string> models{"lstm", "rf", "svm", "knn", "lda", "nb"};
  bool baselines = true;
  FusionKind fusion = FusionKind::document;
  FusionInput fusion_input = FusionInput::sequences;
  bool fusion_per_segment = false;
  embed::TextDims text_dims;
  embed::AudioDims audio_dims;
  dsp::DspSummaryConfig dsp;
  int sample_rate_hz = 8000;
  int doc_hidden = 64;
  int doc_dim = 32;
  int fusion_hidden = 64;
  int fused_dim = 64;
  int compress_hidden = 32;
  int compress_dim = 64;
  nn::TrainConfig doc_train{0.005, 20, 16, 1};
  nn::TrainConfig fusion_train{0.005, 20, 16, 1};
  nn::TrainConfig compress_train{0.005, 4, 32, 1};
  nn::TrainConfig fine_tune_train{0.002, 2, 32, 1};
  transfer::EmotionNetConfig emotion;
  bool fine_tune_covarep = true;
  bool fine_tune_text = false;
  int aux_text_items = 1000;
  int aux_audio_items = 240;
  transfer::AudioCue aux_audio_cue = transfer::AudioCue::prosody;
  shallow::ShallowConfig shallow;
  double neutral_threshold = 0.5;
  std::string timeline_document;   // empty: first bipolar document
  std::string attention_document;  // empty: first depression document
  std::string roc_model = "rf";
  int jobs = 1;

  // Emotion network settings for one branch, sized by the configured dims.
  transfer::EmotionNetConfig emotion_for(transfer::Branch b) const {
    auto c = emotion;
    c.frame = dsp.frame;
    c.n_mels = dsp.n_mels;
    c.emotion_dim = b == transfer::Branch::text ? static_cast<int>(text_dims.emotion)
                                                : static_cast<int>(audio_dims.emotion / 2);
    return c;
  }

  void validate() const {
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (tasks.empty()) throw ConfigError("at least one task is required");
    if (models.empty() && !baselines) throw ConfigError("no models selected");
    for (const auto& m : models) {
      if (std::find(model_names().begin(), model_names().end(), m) == model_names().end()) {
        throw ConfigError("unknown model '" + m + "' (expected lstm, rf, svm, knn, lda, qda or nb)");
      }
    }
    if (std::find(models.begin(), models.end(), roc_model) == models.end()) {
      throw ConfigError("roc_model '" + roc_model + "' is not among the selected models");
    }
    if (audio_dims.emotion < 2 || audio_dims.emotion % 2) {
      throw ConfigError("audio_dims.emotion must be even (split between covarep and spectrogram branches)");
    }
    if (text_dims.lm == 0 || text_dims.subword == 0 || text_dims.docvec == 0 || text_dims.emotion == 0 ||
        audio_dims.wavenet == 0 || audio_dims.vggish == 0) {
      throw ConfigError("embedding dims must be positive");
    }
    if (doc_hidden < 1 || doc_dim < 1 || fusion_hidden < 1 || fused_dim < 1 || compress_hidden < 1 ||
        compress_dim < 1) {
      throw ConfigError("network dims must be positive");
    }
    if (!(neutral_threshold >= 0.0 && neutral_threshold <= 1.0)) throw ConfigError("neutral_threshold must be in [0,1]");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (aux_text_items < 4 || aux_audio_items < 4) throw ConfigError("aux item counts must be >= 4");
    dsp.frame.validate();
    for (const auto* t : {&doc_train, &fusion_train, &compress_train, &fine_tune_train, &emotion.train}) t->validate();
  }

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["folds"] = folds;
    j["framing"] = to_string(framing);
    j["tasks"] = json::array();
    for (auto t : tasks) j["tasks"].push_back(speechfuse::to_string(t));
    j["oversample"] = oversample;
    j["models"] = models;
    j["baselines"] = baselines;
    j["fusion"] = fusion == FusionKind::document ? "document" : "segment";
    j["fusion_input"] = fusion_input == FusionInput::sequences ? "sequences" : "doc_vectors";
    j["fusion_per_segment"] = fusion_per_segment;
    j["text_dims"] = {{"lm", text_dims.lm},
                      {"subword", text_dims.subword},
                      {"docvec", text_dims.docvec},
                      {"emotion", text_dims.emotion}};
    j["audio_dims"] = {{"wavenet", audio_dims.wavenet}, {"vggish", audio_dims.vggish}, {"emotion", audio_dims.emotion}};
    j["frame"] = {{"frame_len_ms", dsp.frame.frame_len_ms}, {"hop_ms", dsp.frame.hop_ms}};
    j["n_mels"] = dsp.n_mels;
    j["n_mfcc"] = dsp.n_mfcc;
    j["sample_rate_hz"] = sample_rate_hz;
    j["doc_hidden"] = doc_hidden;
    j["doc_dim"] = doc_dim;
    j["fusion_hidden"] = fusion_hidden;
    j["fused_dim"] = fused_dim;
    j["compress_hidden"] = compress_hidden;
    j["compress_dim"] = compress_dim;
    j["doc_train"] = doc_train.to_json();
    j["fusion_train"] = fusion_train.to_json();
    j["compress_train"] = compress_train.to_json();
    j["fine_tune_train"] = fine_tune_train.to_json();
    auto e = emotion.to_json();
    e.erase("emotion_dim");
    e.erase("n_mels");
    j["emotion"] = e;
    j["fine_tune_covarep"] = fine_tune_covarep;
    j["fine_tune_text"] = fine_tune_text;
    j["aux_text_items"] = aux_text_items;
    j["aux_audio_items"] = aux_audio_items;
    j["aux_audio_cue"] = aux_audio_cue == transfer::AudioCue::prosody ? "prosody" : "tone";
    j["shallow"] = shallow.to_json();
    j["neutral_threshold"] = neutral_threshold;
    j["timeline_document"] = timeline_document;
    j["attention_document"] = attention_document;
    j["roc_model"] = roc_model;
    j["jobs"] = jobs;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    check_keys(j,
               {"seed", "folds", "framing", "tasks", "oversample", "models", "baselines", "fusion", "fusion_input",
                "fusion_per_segment", "text_dims", "audio_dims", "frame", "n_mels", "n_mfcc", "sample_rate_hz",
                "doc_hidden", "doc_dim", "fusion_hidden", "fused_dim", "compress_hidden", "compress_dim", "doc_train",
                "fusion_train", "compress_train", "fine_tune_train", "emotion", "fine_tune_covarep", "fine_tune_text",
                "aux_text_items", "aux_audio_items", "aux_audio_cue", "shallow", "neutral_threshold",
                "timeline_document", "attention_document", "roc_model", "jobs"},
               "experiment config");
    ExperimentConfig c;
    try {
      c.seed = j.value("seed", c.seed);
      c.folds = j.value("folds", c.folds);
      if (j.contains("framing")) {
        const auto f = j.at("framing").get<std::string>();
        if (f == "vs_control") c.framing = Framing::vs_control;
        else if (f == "vs_rest") c.framing = Framing::vs_rest;
        else throw ConfigError("framing must be vs_control or vs_rest, got '" + f + "'");
      }
      if (j.contains("tasks")) {
        c.tasks.clear();
        for (const auto& t : j.at("tasks")) {
          const auto s = t.get<std::string>();
          const auto it = std::find(kDisorderNames.begin(), kDisorderNames.end(), s);
          if (it == kDisorderNames.end()) throw ConfigError("unknown task '" + s + "'");
          c.tasks.push_back(static_cast<Disorder>(it - kDisorderNames.begin()));
        }
      }
      c.oversample = j.value("oversample", c.oversample);
      if (j.contains("models")) c.models = j.at("models").get<std::vector<std::string>>();
      c.baselines = j.value("baselines", c.baselines);
      if (j.contains("fusion")) {
        const auto f = j.at("fusion").get<std::string>();
        if (f == "document") c.fusion = FusionKind::document;
        else if (f == "segment") c.fusion = FusionKind::segment;
        else throw ConfigError("fusion must be document or segment, got '" + f + "'");
      }
      if (j.contains("fusion_input")) {
        const auto f = j.at("fusion_input").get<std::string>();
        if (f == "sequences") c.fusion_input = FusionInput::sequences;
        else if (f == "doc_vectors") c.fusion_input = FusionInput::doc_vectors;
        else throw ConfigError("fusion_input must be sequences or doc_vectors, got '" + f + "'");
      }
      c.fusion_per_segment = j.value("fusion_per_segment", c.fusion_per_segment);
      if (j.contains("text_dims")) {
        const auto& t = j.at("text_dims");
        check_keys(t, {"lm", "subword", "docvec", "emotion"}, "text_dims");
        c.text_dims.lm = t.value("lm", c.text_dims.lm);
        c.text_dims.subword = t.value("subword", c.text_dims.subword);
        c.text_dims.docvec = t.value("docvec", c.text_dims.docvec);
        c.text_dims.emotion = t.value("emotion", c.text_dims.emotion);
      }
      if (j.contains("audio_dims")) {
        const auto& a = j.at("audio_dims");
        check_keys(a, {"wavenet", "vggish", "emotion"}, "audio_dims");
        c.audio_dims.wavenet = a.value("wavenet", c.audio_dims.wavenet);
        c.audio_dims.vggish = a.value("vggish", c.audio_dims.vggish);
        c.audio_dims.emotion = a.value("emotion", c.audio_dims.emotion);
      }
      if (j.contains("frame")) {
        const auto& f = j.at("frame");
        check_keys(f, {"frame_len_ms", "hop_ms"}, "frame");
        c.dsp.frame.frame_len_ms = f.value("frame_len_ms", c.dsp.frame.frame_len_ms);
        c.dsp.frame.hop_ms = f.value("hop_ms", c.dsp.frame.hop_ms);
      }
      c.dsp.n_mels = j.value("n_mels", c.dsp.n_mels);
      c.dsp.n_mfcc = j.value("n_mfcc", c.dsp.n_mfcc);
      c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
      c.doc_hidden = j.value("doc_hidden", c.doc_hidden);
      c.doc_dim = j.value("doc_dim", c.doc_dim);
      c.fusion_hidden = j.value("fusion_hidden", c.fusion_hidden);
      c.fused_dim = j.value("fused_dim", c.fused_dim);
      c.compress_hidden = j.value("compress_hidden", c.compress_hidden);
      c.compress_dim = j.value("compress_dim", c.compress_dim);
      auto train_cfg = [&](const char* key, nn::TrainConfig& t) {
        if (!j.contains(key)) return;
        check_keys(j.at(key),
                   {"learning_rate", "epochs", "batch_size", "seed", "optimizer", "beta1", "beta2", "epsilon",
                    "clip_norm"},
                   key);
        t = nn::TrainConfig::from_json(j.at(key), t);
      };
      train_cfg("doc_train", c.doc_train);
      train_cfg("fusion_train", c.fusion_train);
      train_cfg("compress_train", c.compress_train);
      train_cfg("fine_tune_train", c.fine_tune_train);
      if (j.contains("emotion")) {
        check_keys(j.at("emotion"), {"hidden", "conv_channels", "conv_kernel", "conv_stride", "train"}, "emotion");
        c.emotion = transfer::EmotionNetConfig::from_json(j.at("emotion"), c.emotion);
      }
      c.fine_tune_covarep = j.value("fine_tune_covarep", c.fine_tune_covarep);
      c.fine_tune_text = j.value("fine_tune_text", c.fine_tune_text);
      c.aux_text_items = j.value("aux_text_items", c.aux_text_items);
      c.aux_audio_items = j.value("aux_audio_items", c.aux_audio_items);
      if (j.contains("aux_audio_cue")) {
        const auto s = j.at("aux_audio_cue").get<std::string>();
        if (s == "prosody") c.aux_audio_cue = transfer::AudioCue::prosody;
        else if (s == "tone") c.aux_audio_cue = transfer::AudioCue::tone;
        else throw ConfigError("aux_audio_cue must be prosody or tone, got '" + s + "'");
      }
      if (j.contains("shallow")) c.shallow = shallow::ShallowConfig::from_json(j.at("shallow"));
      c.neutral_threshold = j.value("neutral_threshold", c.neutral_threshold);
      c.timeline_document = j.value("timeline_document", c.timeline_document);
      c.attention_document = j.value("attention_document", c.attention_document);
      c.roc_model = j.value("roc_model", c.roc_model);
      c.jobs = j.value("jobs", c.jobs);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("experiment config has a value of the wrong type: ") + e.what());
    }
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Parallel helper: runs fn(i) for i in [0, n) on up to `jobs` threads.
// Exceptions are rethrown after all workers finish (first index wins).

inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) run(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Experiment inputs and results

struct ExperimentInputs {
  const CorpusManifest* corpus = nullptr;
  embed::EncoderSet* encoders = nullptr;
  // Auxiliary emotion corpora (raw inputs); synthesized when absent.
  std::optional<transfer::EmotionCorpus> aux_text, aux_covarep, aux_spectrogram;
};

inline const std::array<const char*, 3> kModalities{"text", "audio", "multi"};

struct CellKey {
  std::string task, modality, model;
  auto operator<=>(const CellKey&) const = default;
};

struct Prediction {
  std::size_t doc = 0;
  int fold = 0;
  int label = 0;
  double score = 0.0;
  int pred = 0;
};

struct CellResult {
  std::vector<Prediction> predictions;
  std::vector<Confusion> per_fold;
  std::vector<std::string> failures;  // "fold N: reason"

  bool missing() const { return !failures.empty(); }
  Confusion pooled() const {
    Confusion c;
    for (const auto& f : per_fold) c.merge(f);
    return c;
  }
  double mean_fold_accuracy() const {
    double s = 0;
    int n = 0;
    for (const auto& f : per_fold) {
      if (f.n()) s += f.accuracy(), ++n;
    }
    return n ? s / n : 0.0;
  }
  std::optional<RocResult> roc() const {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& p : predictions) {
      s.push_back(p.score);
      y.push_back(p.label);
    }
    try {
      return roc_auc(s, y);
    } catch (const DataError&) {
      return std::nullopt;
    }
  }
};

struct AttentionRow {
  std::string task;
  int fold = 0;
  std::string document_id, segment_id, source;
  double weight = 0.0;
};

struct TimelineEntry {
  std::size_t doc = 0;
  std::vector<Vec> probs;  // per segment, 4-class
};

struct ExperimentResult {
  ExperimentConfig config;
  FoldPlan folds;
  std::vector<std::string> row_models;  // table rows in order (model keys)
  std::map<CellKey, CellResult> cells;
  std::vector<AttentionRow> attention;
  std::vector<Vec> segment_emotion_probs;  // flat segment index, held-out fold predictions
  std::vector<std::size_t> doc_seg_offset;
  std::vector<std::string> warnings;
  std::vector<std::string> leak_checks;  // one line per verified cell

  bool any_missing() const {
    for (const auto& [_, c] : cells) {
      if (c.missing()) return true;
    }
    return false;
  }
};

inline constexpr const char* kTfidfRow = "tf-idf+SVM";
inline constexpr const char* kBowRow = "BOW+SVM";

// ---------------------------------------------------------------------------
// Pipeline internals

namespace detail {

struct SegmentData {
  std::size_t doc = 0;
  Vec lm, subword, docvec;
  std::vector<Vec> subword_seq;
  Vec e_text, text_probs;
  std::optional<int> emotion4;
  std::optional<Vec> target12;
  // audio
  nn::SeqInput covarep;  // raw frames
  Vec wavenet, vggish;
  FeatureVector dsp_block;
  Vec e_spec, spec_probs;
};

struct FoldData {
  std::vector<Vec> text_seg;   // per flat segment
  std::vector<Vec> audio_seg;  // compressed
  std::string text_error, audio_error;
};

struct Shared {
  const CorpusManifest* corpus = nullptr;
  const ExperimentConfig* cfg = nullptr;
  std::vector<SegmentData> segs;
  std::vector<std::vector<std::size_t>> doc_segs;
  std::string audio_error;  // global failure of the audio pipeline
  std::optional<transfer::EmotionEncoder> text_enc, cov_enc, spec_enc;
  std::vector<FoldData> folds;
  std::vector<Vec> emotion_probs;
};

inline std::string str(std::size_t v) { return std::to_string(v); }

inline Mat rows_to_mat(const std::vector<Vec>& rows) {
  if (rows.empty()) return Mat();
  Mat m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

inline std::vector<Vec> standardize_all(const nn::Standardizer& s, const std::vector<Vec>& xs) {
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(s.apply(x));
  return out;
}

inline Vec mean_probs(const std::vector<const Vec*>& ps) {
  Vec m = Vec::Zero(4);
  int n = 0;
  for (const auto* p : ps) {
    if (p && p->size() == 4) m += *p, ++n;
  }
  return n ? Vec(m / n) : Vec(Vec::Constant(4, 0.25));
}

inline void build_segment_features(Shared& sh, const ExperimentInputs& in, std::vector<std::string>& warnings) {
  const auto& cfg = *sh.cfg;
  auto& enc = *in.encoders;
  enc.text_dims = cfg.text_dims;
  enc.audio_dims = cfg.audio_dims;
  const auto& corpus = *sh.corpus;
  sh.doc_segs.resize(corpus.documents.size());
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    for (const auto& s : corpus.documents[d].segments) {
      SegmentData sd;
      sd.doc = d;
      if (s.tokens.empty()) throw DataError("segment '" + s.segment_id + "' has no tokens");
      sd.lm = enc.lm(s);
      sd.subword = enc.subword(s);
      sd.docvec = enc.docvec(s);
      sd.subword_seq = enc.subword_sequence(s.tokens);
      if (s.labels) {
        sd.emotion4 = transfer::emotion4_index(s.labels->emotion);
        sd.target12 = s.labels->encode();
      }
      sh.doc_segs[d].push_back(sh.segs.size());
      sh.segs.push_back(std::move(sd));
    }
    if (sh.doc_segs[d].empty()) {
      throw DataError("document '" + corpus.documents[d].document_id + "' has no segments");
    }
  }

  // Text emotion encoder, trained on the auxiliary corpus only.
  const auto tcfg = [&] {
    auto c = cfg.emotion_for(transfer::Branch::text);
    c.train.seed = derive_seed(cfg.seed, {"emotion", "text"});
    return c;
  }();
  const auto aux_text = in.aux_text ? *in.aux_text
                                    : transfer::synth_text_emotion(cfg.aux_text_items,
                                                                   derive_seed(cfg.seed, {"aux", "text"}), enc);
  auto tt = transfer::train_emotion_encoder(transfer::Branch::text, aux_text, tcfg);
  for (auto& w : tt.warnings) warnings.push_back("text emotion: " + w);
  sh.text_enc = std::move(tt.encoder);
  for (auto& sd : sh.segs) {
    nn::SeqInput x;
    x.steps = sd.subword_seq;
    sd.e_text = sh.text_enc->encode(x);
    sd.text_probs = sh.text_enc->probabilities(x);
  }

  // Audio features; any failure disables the audio and multimodal cells.
  try {
    dsp::DspSummaryConfig dcfg = cfg.dsp;
    std::size_t si = 0;
    for (const auto& doc : corpus.documents) {
      for (const auto& s : doc.segments) {
        auto& sd = sh.segs[si++];
        if (!s.has_audio()) throw DataError("segment '" + s.segment_id + "' has no audio");
        const auto audio = load_audio_ref(s.audio_path, corpus.base_dir, cfg.sample_rate_hz);
        sd.covarep.steps = transfer::covarep_steps(audio, cfg.dsp.frame, cfg.dsp.n_mels);
        sd.dsp_block = dsp::segment_dsp_block(audio, dcfg);
        sd.wavenet = enc.wavenet(s);
        sd.vggish = enc.vggish(s);
        nn::SeqInput img;
        img.image = transfer::spectrogram_image(audio, cfg.dsp.frame, cfg.dsp.n_mels);
        sd.spec_probs = Vec();
        sd.e_spec = Vec();
        sd.covarep.image = std::move(img.image);  // held until the spectrogram encoder exists
      }
    }
    const auto ccfg = [&] {
      auto c = cfg.emotion_for(transfer::Branch::covarep);
      c.train.seed = derive_seed(cfg.seed, {"emotion", "covarep"});
      return c;
    }();
    const auto scfg = [&] {
      auto c = cfg.emotion_for(transfer::Branch::spectrogram);
      c.train.seed = derive_seed(cfg.seed, {"emotion", "spectrogram"});
      return c;
    }();
    const auto aux_cov = in.aux_covarep ? *in.aux_covarep
                                        : transfer::synth_audio_emotion(transfer::Branch::covarep, cfg.aux_audio_items,
                                                                        derive_seed(cfg.seed, {"aux", "covarep"}),
                                                                        cfg.aux_audio_cue, ccfg, cfg.sample_rate_hz);
    auto ct = transfer::train_emotion_encoder(transfer::Branch::covarep, aux_cov, ccfg);
    for (auto& w : ct.warnings) warnings.push_back("covarep emotion: " + w);
    sh.cov_enc = std::move(ct.encoder);
    const auto aux_spec =
        in.aux_spectrogram ? *in.aux_spectrogram
                           : transfer::synth_audio_emotion(transfer::Branch::spectrogram, cfg.aux_audio_items,
                                                           derive_seed(cfg.seed, {"aux", "spectrogram"}),
                                                           cfg.aux_audio_cue, scfg, cfg.sample_rate_hz);
    auto st = transfer::train_emotion_encoder(transfer::Branch::spectrogram, aux_spec, scfg);
    for (auto& w : st.warnings) warnings.push_back("spectrogram emotion: " + w);
    sh.spec_enc = std::move(st.encoder);
    for (auto& sd : sh.segs) {
      nn::SeqInput img;
      img.image = std::move(sd.covarep.image);
      sd.covarep.image = Mat();
      sd.e_spec = sh.spec_enc->encode(img);
      sd.spec_probs = sh.spec_enc->probabilities(img);
    }
  } catch (const Error& e) {
    sh.audio_error = e.what();
    warnings.push_back(std::string("audio pipeline disabled: ") + e.what());
  }
}

// Per-fold stage: optional emotion fine-tuning and the 12-label audio
// compressor, both fitted on the training folds' segments only.
inline void build_fold(Shared& sh, const FoldPlan& plan, int fold) {
  const auto& cfg = *sh.cfg;
  auto& fd = sh.folds[static_cast<std::size_t>(fold)];
  const std::string fs = std::to_string(fold);
  std::vector<std::size_t> train_segs, test_segs;
  for (std::size_t s = 0; s < sh.segs.size(); ++s) {
    (plan.doc_fold[sh.segs[s].doc] == fold ? test_segs : train_segs).push_back(s);
  }

  // Text segment vectors [lm | subword | docvec | emotion_text].
  try {
    const transfer::EmotionEncoder* tenc = &*sh.text_enc;
    std::optional<transfer::EmotionEncoder> tuned;
    if (cfg.fine_tune_text) {
      transfer::EmotionCorpus items;
      for (auto s : train_segs) {
        if (sh.segs[s].emotion4) items.push_back({str(s), *sh.segs[s].emotion4, {sh.segs[s].subword_seq, {}, {}}});
      }
      if (!items.empty()) {
        auto tc = cfg.fine_tune_train;
        tc.seed = derive_seed(cfg.seed, {"fine_tune", "text", fs});
        tuned = transfer::fine_tune(*tenc, items, tc).encoder;
        tenc = &*tuned;
      }
    }
    fd.text_seg.resize(sh.segs.size());
    for (std::size_t s = 0; s < sh.segs.size(); ++s) {
      const auto& sd = sh.segs[s];
      Vec e = sd.e_text;
      Vec probs = sd.text_probs;
      if (tuned) {
        nn::SeqInput x;
        x.steps = sd.subword_seq;
        e = tenc->encode(x);
        probs = tenc->probabilities(x);
      }
      fd.text_seg[s] = embed::concat_segment_text(sd.lm, sd.subword, sd.docvec, e, cfg.text_dims).values();
      if (plan.doc_fold[sd.doc] == fold) sh.emotion_probs[s] = probs;
    }
  } catch (const Error& e) {
    fd.text_error = e.what();
  }

  if (!sh.audio_error.empty()) {
    fd.audio_error = sh.audio_error;
    return;
  }
  try {
    const transfer::EmotionEncoder* cenc = &*sh.cov_enc;
    std::optional<transfer::EmotionEncoder> tuned;
    if (cfg.fine_tune_covarep) {
      transfer::EmotionCorpus items;
      for (auto s : train_segs) {
        if (sh.segs[s].emotion4) items.push_back({str(s), *sh.segs[s].emotion4, sh.segs[s].covarep});
      }
      if (!items.empty()) {
        auto tc = cfg.fine_tune_train;
        tc.seed = derive_seed(cfg.seed, {"fine_tune", "covarep", fs});
        tuned = transfer::fine_tune(*cenc, items, tc).encoder;
        cenc = &*tuned;
      }
    }
    std::vector<Vec> statics(sh.segs.size());
    for (std::size_t s = 0; s < sh.segs.size(); ++s) {
      const auto& sd = sh.segs[s];
      const Vec e_cov = cenc->encode(sd.covarep);
      const auto emo = transfer::emotion_audio_concat(e_cov, sd.e_spec);
      statics[s] =
          embed::concat_segment_audio(sd.wavenet, sd.vggish, sd.dsp_block, emo.values(), cfg.audio_dims).values();
      if (plan.doc_fold[sd.doc] == fold) {
        const Vec cp = cenc->probabilities(sd.covarep);
        sh.emotion_probs[s] = mean_probs({&sh.emotion_probs[s], &cp, &sd.spec_probs});
      }
    }
    // 12-label compressor.
    nn::Standardizer frame_scale, static_scale;
    std::vector<Vec> frames, train_statics;
    for (auto s : train_segs) {
      frames.insert(frames.end(), sh.segs[s].covarep.steps.begin(), sh.segs[s].covarep.steps.end());
      train_statics.push_back(statics[s]);
    }
    frame_scale.fit(frames);
    static_scale.fit(train_statics);
    auto input = [&](std::size_t s) {
      nn::SeqInput x;
      x.steps = standardize_all(frame_scale, sh.segs[s].covarep.steps);
      x.side = static_scale.apply(statics[s]);
      return x;
    };
    std::vector<nn::SeqInput> xs;
    std::vector<Vec> ys;
    for (auto s : train_segs) {
      if (!sh.segs[s].target12) continue;
      xs.push_back(input(s));
      ys.push_back(*sh.segs[s].target12);
    }
    if (xs.empty()) throw DataError("no labeled training segments for the audio compressor");
    nn::SequenceNet comp(fusion::audio_compress_config(static_cast<int>(frames[0].size()),
                                                       static_cast<int>(statics[0].size()), cfg.compress_hidden,
                                                       cfg.compress_dim));
    comp.init(derive_seed(cfg.seed, {"compress", "init", fs}));
    auto tc = cfg.compress_train;
    tc.seed = derive_seed(cfg.seed, {"compress", "train", fs});
    nn::train(comp, xs, ys, tc);
    fd.audio_seg.resize(sh.segs.size());
    for (std::size_t s = 0; s < sh.segs.size(); ++s) fd.audio_seg[s] = fusion::audio_segment_compress(comp, input(s));
  } catch (const Error& e) {
    fd.audio_error = e.what();
  }
}

struct ModelOutput {
  std::string modality, model;
  std::vector<double> scores;
  std::vector<int> preds;
  std::string error;
};

struct CellOutput {
  std::vector<std::size_t> test_docs;
  std::vector<int> test_labels;
  std::vector<ModelOutput> outputs;
  std::vector<AttentionRow> attention;
};

// Shallow models over document vectors; one output per selected model.
inline void fit_shallow(const ExperimentConfig& cfg, const std::string& modality, const std::string& task, int fold,
                        const Mat& Xtr, const std::vector<int>& ytr, const Mat& Xte, CellOutput& out) {
  for (const auto& m : cfg.models) {
    if (m == "lstm") continue;
    ModelOutput mo{modality, m, {}, {}, {}};
    try {
      auto clf = shallow::make_classifier(m, cfg.shallow,
                                          derive_seed(cfg.seed, {"shallow", task, std::to_string(fold), modality, m}));
      clf->fit(Xtr, ytr);
      const Vec s = clf->score(Xte);
      mo.scores.assign(s.data(), s.data() + s.size());
      mo.preds = clf->predict(Xte);
    } catch (const Error& e) {
      mo.error = e.what();
    }
    out.outputs.push_back(std::move(mo));
  }
}

inline bool wants_lstm(const ExperimentConfig& cfg) {
  return std::find(cfg.models.begin(), cfg.models.end(), "lstm") != cfg.models.end();
}

inline void fail_modality(const ExperimentConfig& cfg, const std::string& modality, const std::string& reason,
                          CellOutput& out) {
  for (const auto& m : cfg.models) out.outputs.push_back({modality, m, {}, {}, reason});
}

struct UnimodalDocs {
  std::vector<Vec> train_vecs, test_vecs;  // per unique train doc / test doc
  bool ok = false;
};

// Trains the attention LSTM over segment vectors and emits LSTM-row
// predictions, shallow-model predictions and attention traces.
inline UnimodalDocs run_unimodal(const Shared& sh, const std::vector<Vec>& seg_vecs, const std::string& modality,
                                 const TaskSpec& task, int fold, const std::vector<std::size_t>& train_unique,
                                 const std::vector<std::size_t>& train_idx, const std::vector<int>& train_y,
                                 CellOutput& out) {
  const auto& cfg = *sh.cfg;
  const auto& corpus = *sh.corpus;
  const std::string fs = std::to_string(fold);
  UnimodalDocs r;
  std::vector<Vec> rows;
  for (auto d : train_unique) {
    for (auto s : sh.doc_segs[d]) rows.push_back(seg_vecs[s]);
  }
  nn::Standardizer scale;
  scale.fit(rows);
  auto doc_input = [&](std::size_t d) {
    nn::SeqInput x;
    for (auto s : sh.doc_segs[d]) x.steps.push_back(scale.apply(seg_vecs[s]));
    return x;
  };
  nn::SequenceNet net(fusion::unimodal_doc_config(static_cast<int>(seg_vecs[0].size()), cfg.doc_hidden, cfg.doc_dim));
  net.init(derive_seed(cfg.seed, {"doc_net", "init", task.name(), fs, modality}));
  std::map<std::size_t, nn::SeqInput> cache;
  for (auto d : train_unique) cache[d] = doc_input(d);
  std::vector<nn::SeqInput> xs;
  std::vector<Vec> ys;
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    xs.push_back(cache.at(train_idx[i]));
    ys.push_back(Vec::Constant(1, train_y[i]));
  }
  auto tc = cfg.doc_train;
  tc.seed = derive_seed(cfg.seed, {"doc_net", "train", task.name(), fs, modality});
  nn::train(net, xs, ys, tc);

  ModelOutput lstm{modality, "lstm", {}, {}, {}};
  for (std::size_t i = 0; i < out.test_docs.size(); ++i) {
    const auto d = out.test_docs[i];
    const auto rep = fusion::unimodal_doc_rep(net, doc_input(d).steps);
    r.test_vecs.push_back(rep.vector);
    const double p = net.predict(doc_input(d))(0);
    lstm.scores.push_back(p);
    lstm.preds.push_back(p > 0.5 ? 1 : 0);
    const auto& doc = corpus.documents[d];
    for (std::size_t k = 0; k < rep.weights.size(); ++k) {
      out.attention.push_back({task.name(), fold, doc.document_id, doc.segments[k].segment_id,
                               modality + "_attention", rep.weights[k]});
    }
  }
  std::map<std::size_t, Vec> train_vec;
  for (auto d : train_unique) train_vec[d] = fusion::unimodal_doc_rep(net, cache.at(d).steps).vector;
  for (auto d : train_idx) r.train_vecs.push_back(train_vec.at(d));
  if (wants_lstm(cfg)) out.outputs.push_back(std::move(lstm));
  fit_shallow(cfg, modality, task.name(), fold, rows_to_mat(r.train_vecs), train_y, rows_to_mat(r.test_vecs), out);
  r.ok = true;
  return r;
}

inline void run_multimodal(const Shared& sh, const FoldData& fd, const TaskSpec& task, int fold,
                           const std::vector<std::size_t>& train_unique, const std::vector<std::size_t>& train_idx,
                           const std::vector<int>& train_y, const UnimodalDocs& text_docs,
                           const UnimodalDocs& audio_docs, CellOutput& out) {
  const auto& cfg = *sh.cfg;
  const auto& corpus = *sh.corpus;
  const std::string fs = std::to_string(fold);
  const std::string mod = "multi";
  std::vector<Vec> trows, arows;
  for (auto d : train_unique) {
    for (auto s : sh.doc_segs[d]) {
      trows.push_back(fd.text_seg[s]);
      arows.push_back(fd.audio_seg[s]);
    }
  }
  nn::Standardizer tscale, ascale;
  tscale.fit(trows);
  ascale.fit(arows);
  const int tdim = static_cast<int>(trows[0].size()), adim = static_cast<int>(arows[0].size());
  const auto init_seed = derive_seed(cfg.seed, {"fusion", "init", task.name(), fs});
  auto tc = cfg.fusion_train;
  tc.seed = derive_seed(cfg.seed, {"fusion", "train", task.name(), fs});

  std::vector<Vec> train_emb, test_emb;
  ModelOutput lstm{mod, "lstm", {}, {}, {}};
  auto targets = [&] {
    std::vector<Vec> ys;
    for (int y : train_y) ys.push_back(Vec::Constant(1, y));
    return ys;
  }();

  if (cfg.fusion == FusionKind::segment) {
    auto input = [&](std::size_t d) {
      fusion::SegFusionInput x;
      for (auto s : sh.doc_segs[d]) x.segments.push_back({tscale.apply(fd.text_seg[s]), ascale.apply(fd.audio_seg[s])});
      return x;
    };
    fusion::SegFusionNet net({tdim, adim, cfg.fusion_hidden, cfg.fused_dim});
    net.init(init_seed);
    std::map<std::size_t, fusion::SegFusionInput> cache;
    for (auto d : train_unique) cache[d] = input(d);
    std::vector<fusion::SegFusionInput> xs;
    for (auto d : train_idx) xs.push_back(cache.at(d));
    nn::train(net, xs, targets, tc);
    std::map<std::size_t, Vec> tv;
    for (auto d : train_unique) tv[d] = net.embed(cache.at(d)).h_la;
    for (auto d : train_idx) train_emb.push_back(tv.at(d));
    for (auto d : out.test_docs) {
      const auto emb = net.embed(input(d));
      test_emb.push_back(emb.h_la);
      const double p = fusion::predict_disorder(net.head(), emb.h_la);
      lstm.scores.push_back(p);
      lstm.preds.push_back(p > 0.5 ? 1 : 0);
      double total = 0;
      for (double g : emb.seg_gates) total += g;
      const auto& doc = corpus.documents[d];
      for (std::size_t k = 0; k < emb.seg_gates.size(); ++k) {
        out.attention.push_back(
            {task.name(), fold, doc.document_id, doc.segments[k].segment_id, "multi_attention", emb.seg_gates[k] / total});
      }
    }
  } else {
    const bool vectors = cfg.fusion_input == FusionInput::doc_vectors;
    if (vectors && (!text_docs.ok || !audio_docs.ok)) {
      throw RuntimeFailure("fusion over document vectors needs both unimodal networks");
    }
    fusion::DocFusionConfig dc;
    dc.text_dim = vectors ? cfg.doc_dim : tdim;
    dc.audio_dim = vectors ? cfg.doc_dim : adim;
    dc.text_hidden = dc.audio_hidden = cfg.fusion_hidden;
    dc.fused_dim = cfg.fused_dim;
    dc.use_lstm = !vectors;
    std::map<std::size_t, Vec> text_vec, audio_vec;
    if (vectors) {
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        text_vec[train_idx[i]] = text_docs.train_vecs[i];
        audio_vec[train_idx[i]] = audio_docs.train_vecs[i];
      }
    }
    auto input = [&](std::size_t d, std::optional<std::size_t> test_pos) {
      fusion::DocFusionInput x;
      if (vectors) {
        const Vec& t = test_pos ? text_docs.test_vecs[*test_pos] : text_vec.at(d);
        const Vec& a = test_pos ? audio_docs.test_vecs[*test_pos] : audio_vec.at(d);
        x.units.push_back({{t}, {a}});
      } else if (cfg.fusion_per_segment) {
        for (auto s : sh.doc_segs[d]) x.units.push_back({{tscale.apply(fd.text_seg[s])}, {ascale.apply(fd.audio_seg[s])}});
      } else {
        fusion::FusionUnit u;
        for (auto s : sh.doc_segs[d]) {
          u.text.push_back(tscale.apply(fd.text_seg[s]));
          u.audio.push_back(ascale.apply(fd.audio_seg[s]));
        }
        x.units.push_back(std::move(u));
      }
      return x;
    };
    fusion::DocFusionNet net(dc);
    net.init(init_seed);
    std::map<std::size_t, fusion::DocFusionInput> cache;
    for (auto d : train_unique) cache[d] = input(d, std::nullopt);
    std::vector<fusion::DocFusionInput> xs;
    for (auto d : train_idx) xs.push_back(cache.at(d));
    nn::train(net, xs, targets, tc);
    std::map<std::size_t, Vec> tv;
    for (auto d : train_unique) tv[d] = net.embed(cache.at(d)).h_la;
    for (auto d : train_idx) train_emb.push_back(tv.at(d));
    for (std::size_t i = 0; i < out.test_docs.size(); ++i) {
      const auto d = out.test_docs[i];
      const auto emb = net.embed(input(d, i));
      test_emb.push_back(emb.h_la);
      const double p = fusion::predict_disorder(net.head(), emb.h_la);
      lstm.scores.push_back(p);
      lstm.preds.push_back(p > 0.5 ? 1 : 0);
      const auto& doc = corpus.documents[d];
      if (!vectors && cfg.fusion_per_segment) {
        for (std::size_t k = 0; k < emb.text_gates.size(); ++k) {
          out.attention.push_back({task.name(), fold, doc.document_id, doc.segments[k].segment_id, "multi_text_gate",
                                   emb.text_gates[k]});
          out.attention.push_back({task.name(), fold, doc.document_id, doc.segments[k].segment_id, "multi_audio_gate",
                                   emb.audio_gates[k]});
        }
      } else {
        out.attention.push_back({task.name(), fold, doc.document_id, "", "multi_text_gate", emb.text_gates[0]});
        out.attention.push_back({task.name(), fold, doc.document_id, "", "multi_audio_gate", emb.audio_gates[0]});
      }
    }
  }
  if (wants_lstm(cfg)) out.outputs.push_back(std::move(lstm));
  fit_shallow(cfg, mod, task.name(), fold, rows_to_mat(train_emb), train_y, rows_to_mat(test_emb), out);
}

inline void run_baselines(const Shared& sh, const TaskSpec& task, int fold, const std::vector<std::size_t>& train_unique,
                          const std::vector<std::size_t>& train_idx, const std::vector<int>& train_y, CellOutput& out) {
  const auto& cfg = *sh.cfg;
  const auto& corpus = *sh.corpus;
  std::vector<embed::TokenDoc> fit_docs, train_docs, test_docs;
  for (auto d : train_unique) fit_docs.push_back(embed::document_tokens(corpus.documents[d]));
  for (auto d : train_idx) train_docs.push_back(embed::document_tokens(corpus.documents[d]));
  for (auto d : out.test_docs) test_docs.push_back(embed::document_tokens(corpus.documents[d]));
  auto run = [&](const char* row, auto& vec) {
    ModelOutput mo{"text", row, {}, {}, {}};
    try {
      vec.fit(fit_docs);
      shallow::LinearSvm svm(
          {cfg.shallow.svm.lambda, cfg.shallow.svm.epochs, derive_seed(cfg.seed, {"baseline", row, task.name(),
                                                                                  std::to_string(fold)})});
      svm.fit(vec.transform(train_docs), train_y);
      const Mat xt = vec.transform(test_docs);
      const Vec s = svm.score(xt);
      mo.scores.assign(s.data(), s.data() + s.size());
      mo.preds = svm.predict(xt);
    } catch (const Error& e) {
      mo.error = e.what();
    }
    out.outputs.push_back(std::move(mo));
  };
  embed::TfidfVectorizer tfidf;
  embed::BowVectorizer bow;
  run(kTfidfRow, tfidf);
  run(kBowRow, bow);
}

inline CellOutput run_cell(const Shared& sh, const FoldPlan& plan, const TaskSpec& task, int fold,
                           std::string& leak_line) {
  const auto& cfg = *sh.cfg;
  const auto& corpus = *sh.corpus;
  CellOutput out;
  std::vector<std::size_t> train_unique;
  std::vector<int> train_labels;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto y = task.label(corpus.documents[d].labels.disorder);
    if (!y) continue;
    if (plan.doc_fold[d] == fold) {
      out.test_docs.push_back(d);
      out.test_labels.push_back(*y);
    } else {
      train_unique.push_back(d);
      train_labels.push_back(*y);
    }
  }
  // Hard leakage guard: no family on both sides of the split.
  std::set<std::string> train_fams;
  for (auto d : train_unique) train_fams.insert(corpus.documents[d].family_id);
  for (auto d : out.test_docs) {
    if (train_fams.count(corpus.documents[d].family_id)) {
      throw RuntimeFailure("family '" + corpus.documents[d].family_id + "' appears in train and test of fold " +
                           std::to_string(fold) + " (task " + task.name() + ")");
    }
  }
  leak_line = task.name() + " fold " + std::to_string(fold) + ": " + std::to_string(train_fams.size()) +
              " train families, " + std::to_string(out.test_docs.size()) + " test documents, no shared family";
  if (out.test_docs.empty()) throw DataError("fold " + std::to_string(fold) + " has no test documents");

  std::vector<std::size_t> train_idx = train_unique;
  if (cfg.oversample) {
    train_idx = random_oversample(train_unique, train_labels,
                                  derive_seed(cfg.seed, {"oversample", task.name(), std::to_string(fold)}));
  }
  std::map<std::size_t, int> label_of;
  for (std::size_t i = 0; i < train_unique.size(); ++i) label_of[train_unique[i]] = train_labels[i];
  std::vector<int> train_y;
  for (auto d : train_idx) train_y.push_back(label_of.at(d));

  const auto& fd = sh.folds[static_cast<std::size_t>(fold)];
  UnimodalDocs text_docs, audio_docs;
  if (!fd.text_error.empty()) {
    fail_modality(cfg, "text", fd.text_error, out);
  } else {
    try {
      text_docs = run_unimodal(sh, fd.text_seg, "text", task, fold, train_unique, train_idx, train_y, out);
    } catch (const Error& e) {
      fail_modality(cfg, "text", e.what(), out);
    }
  }
  if (!fd.audio_error.empty()) {
    fail_modality(cfg, "audio", fd.audio_error, out);
  } else {
    try {
      audio_docs = run_unimodal(sh, fd.audio_seg, "audio", task, fold, train_unique, train_idx, train_y, out);
    } catch (const Error& e) {
      fail_modality(cfg, "audio", e.what(), out);
    }
  }
  const std::string multi_block = !fd.text_error.empty() ? fd.text_error : fd.audio_error;
  if (!multi_block.empty()) {
    fail_modality(cfg, "multi", multi_block, out);
  } else {
    try {
      run_multimodal(sh, fd, task, fold, train_unique, train_idx, train_y, text_docs, audio_docs, out);
    } catch (const Error& e) {
      fail_modality(cfg, "multi", e.what(), out);
    }
  }
  if (cfg.baselines) run_baselines(sh, task, fold, train_unique, train_idx, train_y, out);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const ExperimentInputs& in, const ExperimentConfig& cfg) {
  if (!in.corpus || !in.encoders) throw ConfigError("experiment needs a corpus and embedding tables");
  cfg.validate();
  const auto& corpus = *in.corpus;
  if (corpus.documents.empty()) throw DataError("corpus has no documents");

  ExperimentResult res;
  res.config = cfg;
  res.folds = grouped_kfold(corpus, cfg.folds, derive_seed(cfg.seed, {"folds"}));
  for (const auto& m : cfg.models) res.row_models.push_back(m);
  // Paper row order: LSTM, RF, SVM, KNN, LDA, (QDA), NB.
  std::vector<std::string> order{"lstm", "rf", "svm", "knn", "lda", "qda", "nb"};
  std::stable_sort(res.row_models.begin(), res.row_models.end(), [&](const auto& a, const auto& b) {
    return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
  });

  detail::Shared sh;
  sh.corpus = &corpus;
  sh.cfg = &cfg;
  detail::build_segment_features(sh, in, res.warnings);
  sh.folds.resize(static_cast<std::size_t>(cfg.folds));
  sh.emotion_probs.assign(sh.segs.size(), Vec());
  {
    // Each fold writes emotion_probs only for its own test segments.
    parallel_for(static_cast<std::size_t>(cfg.folds), cfg.jobs,
                 [&](std::size_t f) { detail::build_fold(sh, res.folds, static_cast<int>(f)); });
  }

  std::vector<TaskSpec> tasks;
  for (auto t : cfg.tasks) tasks.push_back({t, cfg.framing});
  const std::size_t n_cells = tasks.size() * static_cast<std::size_t>(cfg.folds);
  std::vector<std::optional<detail::CellOutput>> outputs(n_cells);
  std::vector<std::string> cell_errors(n_cells), leak_lines(n_cells);
  parallel_for(n_cells, cfg.jobs, [&](std::size_t i) {
    const auto& task = tasks[i / static_cast<std::size_t>(cfg.folds)];
    const int fold = static_cast<int>(i % static_cast<std::size_t>(cfg.folds));
    try {
      outputs[i] = detail::run_cell(sh, res.folds, task, fold, leak_lines[i]);
    } catch (const RuntimeFailure& e) {
      if (std::string(e.what()).find("appears in train and test") != std::string::npos) throw;
      cell_errors[i] = e.what();
    } catch (const Error& e) {
      cell_errors[i] = e.what();
    }
  });

  // Merge in deterministic cell order.
  std::vector<std::string> rows = res.row_models;
  if (cfg.baselines) {
    rows.push_back(kTfidfRow);
    rows.push_back(kBowRow);
  }
  for (const auto& task : tasks) {
    for (auto mod : kModalities) {
      for (const auto& m : rows) {
        const bool baseline = m == kTfidfRow || m == kBowRow;
        if (baseline && std::string(mod) != "text") continue;
        auto& cell = res.cells[{task.name(), mod, m}];
        cell.per_fold.assign(static_cast<std::size_t>(cfg.folds), Confusion{});
      }
    }
  }
  for (std::size_t i = 0; i < n_cells; ++i) {
    const auto& task = tasks[i / static_cast<std::size_t>(cfg.folds)];
    const int fold = static_cast<int>(i % static_cast<std::size_t>(cfg.folds));
    if (!leak_lines[i].empty()) res.leak_checks.push_back(leak_lines[i]);
    if (!outputs[i]) {
      for (auto& [key, cell] : res.cells) {
        if (key.task == task.name()) cell.failures.push_back("fold " + std::to_string(fold) + ": " + cell_errors[i]);
      }
      continue;
    }
    const auto& out = *outputs[i];
    for (const auto& mo : out.outputs) {
      auto& cell = res.cells.at({task.name(), mo.modality, mo.model});
      if (!mo.error.empty()) {
        cell.failures.push_back("fold " + std::to_string(fold) + ": " + mo.error);
        continue;
      }
      for (std::size_t k = 0; k < out.test_docs.size(); ++k) {
        cell.predictions.push_back({out.test_docs[k], fold, out.test_labels[k], mo.scores[k], mo.preds[k]});
        cell.per_fold[static_cast<std::size_t>(fold)].add(mo.preds[k], out.test_labels[k]);
      }
    }
    res.attention.insert(res.attention.end(), out.attention.begin(), out.attention.end());
  }
  res.segment_emotion_probs = std::move(sh.emotion_probs);
  res.doc_seg_offset.push_back(0);
  for (const auto& d : corpus.documents) res.doc_seg_offset.push_back(res.doc_seg_offset.back() + d.segments.size());
  return res;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string cell_value(const ExperimentResult& r, const std::string& task, const std::string& mod,
                              const std::string& model) {
  const auto it = r.cells.find({task, mod, model});
  if (it == r.cells.end()) return "-";
  if (it->second.missing()) return "NA";
  return fmt_fixed(100.0 * it->second.pooled().accuracy(), 2);
}

// Table-2 layout: one row per model, Text/Audio/Multi per task; baselines
// have "-" in audio and multi columns; "NA" marks an aborted cell.
inline std::string table_csv(const ExperimentResult& r) {
  std::string out = "model";
  for (auto t : r.config.tasks) {
    for (auto m : {"Text", "Audio", "Multi"}) out += std::string(",") + to_string(t) + " " + m;
  }
  out += "\n";
  std::vector<std::string> rows = r.row_models;
  if (r.config.baselines) {
    rows.push_back(kTfidfRow);
    rows.push_back(kBowRow);
  }
  for (const auto& m : rows) {
    const bool baseline = m == kTfidfRow || m == kBowRow;
    out += baseline ? m : model_display(m);
    for (auto t : r.config.tasks) {
      for (auto mod : kModalities) out += "," + cell_value(r, to_string(t), mod, m);
    }
    out += "\n";
  }
  return out;
}

inline std::string cells_csv(const ExperimentResult& r) {
  std::string out = "task,modality,model,n,pooled_accuracy,mean_fold_accuracy,auc,tp,fp,tn,fn,status\n";
  for (const auto& [k, c] : r.cells) {
    const auto p = c.pooled();
    const auto roc = c.missing() ? std::nullopt : c.roc();
    out += k.task + "," + k.modality + "," + k.model + "," + std::to_string(p.n()) + "," +
           (c.missing() ? "" : fmt_fixed(p.accuracy(), 6)) + "," + (c.missing() ? "" : fmt_fixed(c.mean_fold_accuracy(), 6)) +
           "," + (roc ? fmt_fixed(roc->auc, 6) : "") + "," + std::to_string(p.tp) + "," + std::to_string(p.fp) + "," +
           std::to_string(p.tn) + "," + std::to_string(p.fn) + "," + (c.missing() ? "missing" : "ok") + "\n";
  }
  return out;
}

inline std::string folds_csv(const ExperimentResult& r) {
  std::string out = "task,modality,model,fold,n,accuracy,tp,fp,tn,fn\n";
  for (const auto& [k, c] : r.cells) {
    for (std::size_t f = 0; f < c.per_fold.size(); ++f) {
      const auto& p = c.per_fold[f];
      out += k.task + "," + k.modality + "," + k.model + "," + std::to_string(f) + "," + std::to_string(p.n()) + "," +
             (p.n() ? fmt_fixed(p.accuracy(), 6) : "") + "," + std::to_string(p.tp) + "," + std::to_string(p.fp) + "," +
             std::to_string(p.tn) + "," + std::to_string(p.fn) + "\n";
    }
  }
  return out;
}

inline std::string failures_csv(const ExperimentResult& r) {
  std::string out = "task,modality,model,reason\n";
  for (const auto& [k, c] : r.cells) {
    for (const auto& f : c.failures) {
      std::string reason = f;
      std::replace(reason.begin(), reason.end(), ',', ';');
      std::replace(reason.begin(), reason.end(), '\n', ' ');
      out += k.task + "," + k.modality + "," + k.model + "," + reason + "\n";
    }
  }
  return out;
}

// Candidate averages over different cell sets; none is singled out.
inline std::vector<std::pair<std::string, double>> candidate_averages(const ExperimentResult& r) {
  std::vector<std::pair<std::string, double>> out;
  auto mean_of = [&](auto pred, bool use_auc) -> std::optional<double> {
    double s = 0;
    int n = 0;
    for (const auto& [k, c] : r.cells) {
      if (!pred(k) || c.missing()) continue;
      if (use_auc) {
        const auto roc = c.roc();
        if (!roc) continue;
        s += roc->auc;
      } else {
        s += c.pooled().accuracy();
      }
      ++n;
    }
    return n ? std::optional<double>(s / n) : std::nullopt;
  };
  auto add = [&](std::string name, std::optional<double> v) {
    if (v) out.emplace_back(std::move(name), *v);
  };
  const auto baseline = [](const CellKey& k) { return k.model == kTfidfRow || k.model == kBowRow; };
  for (const auto& m : r.row_models) {
    add(m + "_multi_accuracy_mean_over_tasks",
        mean_of([&](const CellKey& k) { return k.model == m && k.modality == "multi"; }, false));
  }
  add("rf_multi_auc_mean_over_tasks",
      mean_of([](const CellKey& k) { return k.model == "rf" && k.modality == "multi"; }, true));
  add("rf_auc_mean_over_tasks_and_modalities", mean_of([](const CellKey& k) { return k.model == "rf"; }, true));
  add("multi_accuracy_mean_over_models_and_tasks",
      mean_of([&](const CellKey& k) { return k.modality == "multi"; }, false));
  add("all_cells_accuracy_mean", mean_of([&](const CellKey& k) { return !baseline(k); }, false));
  // Best model per task in the multimodal column.
  double best_sum = 0;
  int best_n = 0;
  for (auto t : r.config.tasks) {
    double best = -1;
    for (const auto& m : r.row_models) {
      const auto it = r.cells.find({to_string(t), "multi", m});
      if (it != r.cells.end() && !it->second.missing()) best = std::max(best, it->second.pooled().accuracy());
    }
    if (best >= 0) best_sum += best, ++best_n;
  }
  if (best_n) out.emplace_back("best_multi_model_per_task_mean", best_sum / best_n);
  return out;
}

inline std::string averages_csv(const ExperimentResult& r) {
  std::string out = "average,value\n";
  for (const auto& [k, v] : candidate_averages(r)) out += k + "," + fmt_fixed(v, 6) + "\n";
  return out;
}

inline std::string roc_csv(const ExperimentResult& r, const std::string& task) {
  std::string out = "modality,model,fpr,tpr,threshold\n";
  for (const auto& [k, c] : r.cells) {
    if (k.task != task || c.missing()) continue;
    const auto roc = c.roc();
    if (!roc) continue;
    const auto lines = split(roc->curve.to_csv(), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (!lines[i].empty()) out += k.modality + "," + k.model + "," + lines[i] + "\n";
    }
  }
  return out;
}

inline std::string roc_svg(const ExperimentResult& r, const std::string& task) {
  std::vector<plot::RocSeries> series;
  for (auto mod : kModalities) {
    const auto it = r.cells.find({task, mod, r.config.roc_model});
    if (it == r.cells.end() || it->second.missing()) continue;
    const auto roc = it->second.roc();
    if (!roc) continue;
    series.push_back({model_display(r.config.roc_model) + " " + mod, roc->curve.fpr, roc->curve.tpr, roc->auc});
  }
  return plot::roc_svg("ROC: " + task, series);
}

inline std::string attention_csv(const ExperimentResult& r) {
  std::string out = "task,fold,document_id,segment_id,source,weight\n";
  for (const auto& a : r.attention) {
    out += a.task + "," + std::to_string(a.fold) + "," + a.document_id + "," + a.segment_id + "," + a.source + "," +
           fmt_double(a.weight) + "\n";
  }
  return out;
}

inline std::optional<std::size_t> find_document(const CorpusManifest& c, const std::string& id,
                                                std::optional<Disorder> fallback) {
  for (std::size_t d = 0; d < c.documents.size(); ++d) {
    if (!id.empty() && c.documents[d].document_id == id) return d;
  }
  if (!id.empty()) throw ConfigError("document '" + id + "' not found in corpus");
  for (std::size_t d = 0; d < c.documents.size(); ++d) {
    if (!fallback || c.documents[d].labels.disorder == *fallback) return d;
  }
  return c.documents.empty() ? std::nullopt : std::optional<std::size_t>(0);
}

// Per-segment timeline: start times from cumulative durations, predicted
// emotion from the held-out fold's encoders, neutral below the threshold.
inline std::vector<plot::TimelineRow> emotion_timeline(const DocumentRecord& doc, const std::vector<Vec>& probs,
                                                       double neutral_threshold) {
  if (probs.size() != doc.segments.size()) throw DataError("timeline needs one prediction per segment");
  std::vector<plot::TimelineRow> rows;
  double t = 0.0;
  for (std::size_t i = 0; i < doc.segments.size(); ++i) {
    plot::TimelineRow r;
    r.index = static_cast<int>(i);
    r.segment_id = doc.segments[i].segment_id;
    r.start_s = t;
    r.duration_s = doc.segments[i].duration_s;
    t += r.duration_s;
    if (probs[i].size() == 4) {
      Eigen::Index k;
      r.score = probs[i].maxCoeff(&k);
      r.emotion = r.score >= neutral_threshold ? transfer::kEmotion4Names[k] : "neutral";
    } else {
      r.emotion = "neutral";
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string timeline_csv(const DocumentRecord& doc, const std::vector<plot::TimelineRow>& rows) {
  std::string out = "segment_index,segment_id,start_s,duration_s,predicted_emotion,score,true_emotion\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& seg = doc.segments[i];
    out += std::to_string(r.index) + "," + r.segment_id + "," + fmt_double(r.start_s) + "," + fmt_double(r.duration_s) +
           "," + r.emotion + "," + fmt_double(r.score) + "," +
           (seg.labels ? to_string(seg.labels->emotion) : std::string("")) + "\n";
  }
  return out;
}

// Writes every report file under `dir`; returns the relative file names.
inline std::vector<std::string> write_artifacts(const ExperimentResult& r, const CorpusManifest& corpus,
                                                const std::filesystem::path& dir) {
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& content) {
    write_file_atomic(dir / name, content);
    files.push_back(name);
  };
  put("table2.csv", table_csv(r));
  put("cells.csv", cells_csv(r));
  put("folds.csv", folds_csv(r));
  put("averages.csv", averages_csv(r));
  put("failures.csv", failures_csv(r));
  put("attention.csv", attention_csv(r));
  for (auto t : r.config.tasks) {
    put(std::string("roc_") + to_string(t) + ".csv", roc_csv(r, to_string(t)));
    put(std::string("roc_") + to_string(t) + ".svg", roc_svg(r, to_string(t)));
  }
  std::string fold_map = "family_id,fold\n";
  for (const auto& [f, k] : r.folds.assignment) fold_map += f + "," + std::to_string(k) + "\n";
  put("folds_assignment.csv", fold_map);

  if (const auto d = find_document(corpus, r.config.timeline_document, Disorder::bipolar)) {
    const auto& doc = corpus.documents[*d];
    std::vector<Vec> probs(r.segment_emotion_probs.begin() + static_cast<long>(r.doc_seg_offset[*d]),
                           r.segment_emotion_probs.begin() + static_cast<long>(r.doc_seg_offset[*d + 1]));
    const auto rows = emotion_timeline(doc, probs, r.config.neutral_threshold);
    put("timeline.csv", timeline_csv(doc, rows));
    put("timeline.svg", plot::timeline_svg("Predicted emotion per segment: " + doc.document_id, rows));
  }
  if (const auto d = find_document(corpus, r.config.attention_document, Disorder::depression)) {
    const auto& doc = corpus.documents[*d];
    // Prefer per-segment multimodal weights, else the text attention.
    const std::string task = r.config.tasks.size() == 1 ? std::string(to_string(r.config.tasks[0]))
                                                          : std::string(to_string(doc.labels.disorder));
    for (const char* src : {"multi_attention", "text_attention"}) {
      std::vector<std::string> lines;
      std::vector<double> weights;
      for (const auto& a : r.attention) {
        if (a.document_id != doc.document_id || a.source != src || a.task != task) continue;
        const auto it = std::find_if(doc.segments.begin(), doc.segments.end(),
                                     [&](const SegmentRecord& s) { return s.segment_id == a.segment_id; });
        std::string line;
        for (const auto& tok : it->tokens) line += (line.empty() ? "" : " ") + tok;
        lines.push_back(line);
        weights.push_back(a.weight);
      }
      if (lines.empty()) continue;
      std::vector<std::string> ids;
      for (const auto& a : r.attention) {
        if (a.document_id == doc.document_id && a.source == src && a.task == task) ids.push_back(a.segment_id);
      }
      put("attention_document.csv", fusion::attention_csv(ids, weights));
      put("attention.svg", plot::attention_svg(std::string(src) + ": " + doc.document_id, lines, weights));
      break;
    }
  }
  return files;
}

}  // namespace speechfuse::eval
