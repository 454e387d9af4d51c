#pragma once

// Emotion-specific segment representations by transfer: train a 4-way
// emotion classifier on an auxiliary corpus, freeze it, drop the softmax
// head and use the last dense layer as the embedding. Three branches:
//   text         LSTM over per-token subword vectors
//   covarep      LSTM over per-frame covarep-style features (fine-tunable)
//   spectrogram  Conv2d + LSTM over the log-mel spectrogram

#include "speechfuse/audio.hpp"
#include "speechfuse/corpus.hpp"
#include "speechfuse/dsp.hpp"
#include "speechfuse/embed.hpp"
#include "speechfuse/nn.hpp"

namespace speechfuse::transfer {

using nn::json;

// Canonical 4-class set; "happiness" is read as joy.
inline constexpr std::array<const char*, 4> kEmotion4Names{"anger", "fear", "joy", "sadness"};

inline int parse_emotion4(const std::string& s) {
  const std::string v = s == "happiness" ? "joy" : s;
  for (int k = 0; k < 4; ++k) {
    if (v == kEmotion4Names[k]) return k;
  }
  throw DataError("emotion label '" + s + "' is not one of anger, fear, joy, sadness");
}

// Corpus emotion to the 4-class index; neutral has none.
inline std::optional<int> emotion4_index(Emotion e) {
  if (e == Emotion::neutral) return std::nullopt;
  return static_cast<int>(e);
}

enum class Branch { text, covarep, spectrogram };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::text: return "text";
    case Branch::covarep: return "covarep";
    case Branch::spectrogram: return "spectrogram";
  }
  return "?";
}

inline Branch branch_from_string(std::string_view s) {
  if (s == "text") return Branch::text;
  if (s == "covarep") return Branch::covarep;
  if (s == "spectrogram") return Branch::spectrogram;
  throw ConfigError("unknown emotion branch '" + std::string(s) + "' (expected text, covarep or spectrogram)");
}

struct EmotionItem {
  std::string id;
  int label = 0;
  nn::SeqInput input;  // raw, unscaled
};

using EmotionCorpus = std::vector<EmotionItem>;

struct EmotionNetConfig {
  int hidden = 32;
  int emotion_dim = 32;
  int conv_channels = 4;
  int conv_kernel = 3;
  int conv_stride = 2;
  dsp::FrameConfig frame;
  int n_mels = 26;
  nn::TrainConfig train{0.01, 25, 16, 1};

  json to_json() const {
    return {{"hidden", hidden},
            {"emotion_dim", emotion_dim},
            {"conv_channels", conv_channels},
            {"conv_kernel", conv_kernel},
            {"conv_stride", conv_stride},
            {"n_mels", n_mels},
            {"train", train.to_json()}};
  }

  static EmotionNetConfig from_json(const json& j);
  static EmotionNetConfig from_json(const json& j, EmotionNetConfig c) {
    c.hidden = j.value("hidden", c.hidden);
    c.emotion_dim = j.value("emotion_dim", c.emotion_dim);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.conv_stride = j.value("conv_stride", c.conv_stride);
    c.n_mels = j.value("n_mels", c.n_mels);
    if (j.contains("train")) c.train = nn::TrainConfig::from_json(j.at("train"), c.train);
    if (c.hidden < 1 || c.emotion_dim < 1 || c.conv_channels < 1 || c.conv_kernel < 1 || c.conv_stride < 1 ||
        c.n_mels < 2) {
      throw ConfigError("emotion network dimensions must be positive (n_mels >= 2)");
    }
    return c;
  }
};

inline EmotionNetConfig EmotionNetConfig::from_json(const json& j) { return from_json(j, EmotionNetConfig()); }

// ---------------------------------------------------------------------------
// Raw inputs

inline std::vector<Vec> covarep_steps(const AudioBuffer& audio, const dsp::FrameConfig& frame, int n_mels) {
  const auto fm = dsp::covarep_style_features(audio, frame, n_mels);
  std::vector<Vec> steps;
  for (Eigen::Index r = 0; r < fm.values.rows(); ++r) steps.push_back(fm.values.row(r).transpose());
  return steps;
}

inline Mat spectrogram_image(const AudioBuffer& audio, const dsp::FrameConfig& frame, int n_mels) {
  return dsp::log_mel(dsp::mel_spectrogram(audio, frame, n_mels));
}

inline nn::SeqInput raw_audio_input(Branch b, const AudioBuffer& audio, const EmotionNetConfig& cfg) {
  nn::SeqInput in;
  if (b == Branch::covarep) in.steps = covarep_steps(audio, cfg.frame, cfg.n_mels);
  else if (b == Branch::spectrogram) in.image = spectrogram_image(audio, cfg.frame, cfg.n_mels);
  else throw ConfigError("text branch takes tokens, not audio");
  return in;
}

// ---------------------------------------------------------------------------

// Frozen encoder: network plus the input scaling fitted on its training data.
class EmotionEncoder {
 public:
  EmotionEncoder() = default;
  EmotionEncoder(Branch b, nn::SequenceNet net) : branch_(b), net_(std::move(net)) {}

  Branch branch() const { return branch_; }
  const nn::SequenceNet& net() const { return net_; }
  nn::SequenceNet& mutable_net() { return net_; }
  int output_dim() const { return net_.config().penultimate_dim; }

  // Fits input scaling on raw training inputs.
  void fit_scaling(const EmotionCorpus& items) {
    if (branch_ == Branch::covarep) {
      std::vector<Vec> frames;
      for (const auto& it : items) frames.insert(frames.end(), it.input.steps.begin(), it.input.steps.end());
      steps_.fit(frames);
    } else if (branch_ == Branch::spectrogram) {
      double sum = 0, sq = 0, n = 0;
      for (const auto& it : items) {
        sum += it.input.image.sum();
        sq += it.input.image.squaredNorm();
        n += static_cast<double>(it.input.image.size());
      }
      if (n == 0) throw DataError("no spectrogram pixels to fit scaling on");
      image_mean_ = sum / n;
      const double var = sq / n - image_mean_ * image_mean_;
      image_inv_std_ = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  nn::SeqInput prepare(const nn::SeqInput& raw) const {
    nn::SeqInput in;
    if (branch_ == Branch::covarep && steps_.fitted()) {
      for (const auto& s : raw.steps) in.steps.push_back(steps_.apply(s));
    } else {
      in.steps = raw.steps;
    }
    if (branch_ == Branch::spectrogram) {
      in.image = (raw.image.array() - image_mean_) * image_inv_std_;
      const auto& cs = *net_.config().conv;
      if (in.image.rows() < cs.kernel_h || in.image.cols() != cs.image_cols) {
        throw DataError("spectrogram of " + std::to_string(in.image.rows()) + "x" + std::to_string(in.image.cols()) +
                        " does not fit the conv front-end (kernel " + std::to_string(cs.kernel_h) + ", width " +
                        std::to_string(cs.image_cols) + ")");
      }
    }
    return in;
  }

  // Penultimate activations; the softmax head is not applied.
  Vec encode(const nn::SeqInput& raw) const { return net_.penultimate(prepare(raw)); }
  // Class probabilities from the retained head (used for mood timelines).
  Vec probabilities(const nn::SeqInput& raw) const { return net_.predict(prepare(raw)); }
  int predict(const nn::SeqInput& raw) const {
    Eigen::Index k;
    probabilities(raw).maxCoeff(&k);
    return static_cast<int>(k);
  }

  json to_json() {
    json j;
    j["format"] = "speechfuse-emotion-encoder";
    j["version"] = nn::kSnapshotVersion;
    j["branch"] = to_string(branch_);
    j["net"] = net_.to_json();
    if (steps_.fitted()) j["step_scaling"] = steps_.to_json();
    j["image_scaling"] = {image_mean_, image_inv_std_};
    return j;
  }

  static EmotionEncoder from_json(const json& j) {
    if (j.value("format", "") != "speechfuse-emotion-encoder") throw DataError("not an emotion encoder snapshot");
    EmotionEncoder e(branch_from_string(j.at("branch").get<std::string>()), nn::SequenceNet::from_json(j.at("net")));
    if (j.contains("step_scaling")) e.steps_ = nn::Standardizer::from_json(j.at("step_scaling"));
    e.image_mean_ = j.at("image_scaling").at(0).get<double>();
    e.image_inv_std_ = j.at("image_scaling").at(1).get<double>();
    return e;
  }

 private:
  Branch branch_ = Branch::text;
  nn::SequenceNet net_;
  nn::Standardizer steps_;
  double image_mean_ = 0.0, image_inv_std_ = 1.0;
};

inline nn::SequenceNetConfig emotion_net_config(Branch b, int input_dim, const EmotionNetConfig& cfg) {
  nn::SequenceNetConfig c;
  c.input_dim = input_dim;
  c.hidden_dim = cfg.hidden;
  c.pooling = nn::Pooling::last;
  c.penultimate_dim = cfg.emotion_dim;
  c.penultimate_activation = nn::Activation::tanh;
  c.n_outputs = 4;
  c.head = nn::HeadKind::softmax;
  if (b == Branch::spectrogram) {
    c.conv = nn::ConvSpec{cfg.conv_channels, cfg.conv_kernel, cfg.conv_kernel, cfg.conv_stride, cfg.n_mels};
  }
  return c;
}

struct TrainedEncoder {
  EmotionEncoder encoder;
  nn::TrainResult result;
  std::vector<std::string> warnings;
};

inline std::vector<std::string> missing_class_warnings(const EmotionCorpus& items) {
  std::array<int, 4> counts{};
  for (const auto& it : items) ++counts.at(it.label);
  std::vector<std::string> w;
  for (int k = 0; k < 4; ++k) {
    if (counts[k] == 0) w.push_back(std::string("class '") + kEmotion4Names[k] + "' is absent from the auxiliary corpus");
  }
  return w;
}

inline void validate_items(const EmotionCorpus& items) {
  if (items.empty()) throw DataError("auxiliary emotion corpus is empty");
  for (const auto& it : items) {
    if (it.label < 0 || it.label > 3) throw DataError("item '" + it.id + "' has an emotion outside the 4-class set");
  }
}

inline TrainedEncoder train_emotion_encoder(Branch b, const EmotionCorpus& items, const EmotionNetConfig& cfg) {
  validate_items(items);
  TrainedEncoder out;
  out.warnings = missing_class_warnings(items);
  int input_dim = 0;
  if (b != Branch::spectrogram) {
    if (items[0].input.steps.empty()) throw DataError("item '" + items[0].id + "' has an empty sequence");
    input_dim = static_cast<int>(items[0].input.steps[0].size());
  } else if (items[0].input.image.cols() != cfg.n_mels) {
    throw DataError("spectrogram width " + std::to_string(items[0].input.image.cols()) + " differs from n_mels " +
                    std::to_string(cfg.n_mels));
  }
  nn::SequenceNet net(emotion_net_config(b, input_dim, cfg));
  net.init(derive_seed(cfg.train.seed, {"emotion-init", to_string(b)}));
  EmotionEncoder enc(b, std::move(net));
  enc.fit_scaling(items);
  std::vector<nn::SeqInput> xs;
  std::vector<Vec> ys;
  for (const auto& it : items) {
    xs.push_back(enc.prepare(it.input));
    ys.push_back(nn::one_hot(it.label, 4));
  }
  out.result = nn::train(enc.mutable_net(), xs, ys, cfg.train);
  out.encoder = std::move(enc);
  return out;
}

// Returns a fine-tuned copy; `pre` is never modified. Only tensors named in
// `trainable` change (all when empty). Input scaling is kept from `pre`.
inline TrainedEncoder fine_tune(const EmotionEncoder& pre, const EmotionCorpus& items, const nn::TrainConfig& tc,
                                const std::vector<std::string>& trainable = {}) {
  validate_items(items);
  TrainedEncoder out;
  out.warnings = missing_class_warnings(items);
  out.encoder = pre;
  std::vector<nn::SeqInput> xs;
  std::vector<Vec> ys;
  for (const auto& it : items) {
    xs.push_back(pre.prepare(it.input));
    ys.push_back(nn::one_hot(it.label, 4));
  }
  out.result = nn::train(out.encoder.mutable_net(), xs, ys, tc, trainable);
  return out;
}

inline double encoder_accuracy(const EmotionEncoder& enc, const EmotionCorpus& items) {
  if (items.empty()) return 0.0;
  int ok = 0;
  for (const auto& it : items) ok += enc.predict(it.input) == it.label;
  return static_cast<double>(ok) / static_cast<double>(items.size());
}

// [emotion_covarep | emotion_spectrogram]
inline FeatureVector emotion_audio_concat(const Vec& e_cov, const Vec& e_spec) {
  return concat_blocks({{"emotion_covarep", &e_cov, 0}, {"emotion_spectrogram", &e_spec, 0}});
}

// ---------------------------------------------------------------------------
// Synthetic auxiliary corpora

// Token sequences where each class uses its own marker tokens among random
// filler words.
inline EmotionCorpus synth_text_emotion(int n, std::uint64_t seed, embed::EncoderSet& encoders, int vocab = 300) {
  Rng rng(seed);
  EmotionCorpus items;
  for (int i = 0; i < n; ++i) {
    EmotionItem it;
    it.id = "aux-text-" + std::to_string(i);
    it.label = i % 4;
    std::vector<std::string> tokens;
    const int len = rng.range(5, 10);
    for (int t = 0; t < len; ++t) tokens.push_back("w" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab))));
    const int markers = rng.range(1, 2);
    for (int m = 0; m < markers; ++m) {
      tokens[rng.below(tokens.size())] = emotion_marker_token(static_cast<Emotion>(it.label), rng.range(0, 2));
    }
    it.input.steps = encoders.subword_sequence(tokens);
    items.push_back(std::move(it));
  }
  return items;
}

enum class AudioCue { prosody, tone };

// Emotion tone frequencies for the tone cue, in Hz.
inline constexpr std::array<double, 4> kEmotionToneHz{700.0, 1200.0, 1800.0, 2600.0};

inline SynthVoice synth_emotion_voice(int label, AudioCue cue, Rng& rng, int sample_rate) {
  SynthVoice v;
  v.sample_rate_hz = sample_rate;
  v.duration_s = std::round(rng.uniform(0.5, 0.9) * 1000.0) / 1000.0;
  const double base = rng.bernoulli(0.5) ? rng.uniform(95, 130) : rng.uniform(170, 230);
  if (cue == AudioCue::prosody) {
    const auto p = emotion_prosody(static_cast<Emotion>(label));
    v.f0_hz = std::round(base * p.f0_scale * 100.0) / 100.0;
    v.amplitude = std::round(0.3 * p.amp_scale * 1000.0) / 1000.0;
    v.vibrato_depth = p.vibrato;
    v.jitter = p.jitter;
  } else {
    v.f0_hz = std::round(base * 100.0) / 100.0;
    v.amplitude = 0.3;
    v.tone_hz = kEmotionToneHz[label];
    v.tone_amplitude = 0.2;
  }
  v.noise_amplitude = 0.01;
  v.seed = rng.next_u64() >> 12;
  return v;
}

inline EmotionCorpus synth_audio_emotion(Branch b, int n, std::uint64_t seed, AudioCue cue, const EmotionNetConfig& cfg,
                                         int sample_rate = 8000) {
  Rng rng(seed);
  EmotionCorpus items;
  for (int i = 0; i < n; ++i) {
    EmotionItem it;
    it.id = "aux-audio-" + std::to_string(i);
    it.label = i % 4;
    it.input = raw_audio_input(b, render_voice(synth_emotion_voice(it.label, cue, rng, sample_rate)), cfg);
    items.push_back(std::move(it));
  }
  return items;
}

// ---------------------------------------------------------------------------
// Auxiliary corpus file: JSONL, one item per line:
//   {"id": "...", "label": "joy", "tokens": [...]}     text branch
//   {"id": "...", "label": "joy", "audio": "<wav|synth:...>"}
//   {"id": "...", "label": "joy", "features": "<csv>"}  rows = steps / image rows

struct AuxContext {
  embed::EncoderSet* encoders = nullptr;
  EmotionNetConfig net;
  int sample_rate_hz = 8000;
  std::filesystem::path base_dir;
};

inline EmotionCorpus parse_emotion_corpus(std::string_view text, Branch b, AuxContext& ctx, const std::string& name) {
  EmotionCorpus items;
  std::size_t ln = 0;
  for (const auto& raw : split(text, '\n')) {
    ++ln;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(ln);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    EmotionItem it;
    it.id = j.value("id", "item" + std::to_string(ln));
    if (!j.contains("label")) throw DataError(where + ": missing field 'label'");
    try {
      it.label = parse_emotion4(j.at("label").get<std::string>());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (j.contains("features")) {
      const auto path = ctx.base_dir / j.at("features").get<std::string>();
      const auto fm = FeatureMatrix::from_csv(read_text_file(path), path.string());
      if (b == Branch::spectrogram) {
        it.input.image = fm.values;
      } else {
        for (Eigen::Index r = 0; r < fm.values.rows(); ++r) it.input.steps.push_back(fm.values.row(r).transpose());
      }
    } else if (b == Branch::text) {
      if (!j.contains("tokens")) throw DataError(where + ": text items need 'tokens' or 'features'");
      if (!ctx.encoders) throw ConfigError("text branch needs embedding tables");
      const auto tokens = j.at("tokens").get<std::vector<std::string>>();
      if (tokens.empty()) throw DataError(where + ": empty token list");
      it.input.steps = ctx.encoders->subword_sequence(tokens);
    } else {
      if (!j.contains("audio")) throw DataError(where + ": audio items need 'audio' or 'features'");
      const auto audio = load_audio_ref(j.at("audio").get<std::string>(), ctx.base_dir, ctx.sample_rate_hz);
      it.input = raw_audio_input(b, audio, ctx.net);
    }
    items.push_back(std::move(it));
  }
  return items;
}

inline EmotionCorpus load_emotion_corpus(const std::filesystem::path& path, Branch b, AuxContext ctx) {
  if (ctx.base_dir.empty()) ctx.base_dir = path.parent_path();
  return parse_emotion_corpus(read_text_file(path), b, ctx, path.string());
}

// Target-domain items from labeled corpus segments with a non-neutral
// emotion, for fine-tuning the audio branches.
inline EmotionCorpus corpus_emotion_items(const CorpusManifest& corpus, const std::vector<std::size_t>& doc_indices,
                                          Branch b, const EmotionNetConfig& cfg, int sample_rate) {
  EmotionCorpus items;
  for (auto di : doc_indices) {
    for (const auto& s : corpus.documents[di].segments) {
      if (!s.labels || s.audio_path.empty()) continue;
      const auto k = emotion4_index(s.labels->emotion);
      if (!k) continue;
      EmotionItem it;
      it.id = s.segment_id;
      it.label = *k;
      it.input = raw_audio_input(b, load_audio_ref(s.audio_path, corpus.base_dir, sample_rate), cfg);
      items.push_back(std::move(it));
    }
  }
  return items;
}

}  // namespace speechfuse::transfer
