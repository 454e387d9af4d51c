#pragma once

// Gated bimodal fusion networks.
//
// DocFusionNet: separate language and acoustic LSTMs, scalar sigmoid gates
//   w_l = sigma(W_hl . h_l + b_l), w_a = sigma(W_ha . h_a + b_a),
//   h_la = w_l (W_l h_l) + w_a (W_a h_a) + b_la,
// averaged over fusion units, then a sigmoid head.
//
// SegFusionNet: one LSTM over [text ; audio] segment vectors, a gate
//   w_i = sigma(W_h . h_i + b) and projection h_la_i = w_i (W h_i) + b_la
// per step, pooled as sum_i w_i h_la_i / sum_j w_j, then a sigmoid head.

#include "speechfuse/nn.hpp"

namespace speechfuse::fusion {

using nn::Dense;
using nn::json;
using nn::Lstm;
using nn::Param;
using nn::ParamRefs;

// Fused representation with the gate values that produced it.
struct BimodalEmbedding {
  Vec h_la;
  std::vector<double> text_gates;   // DocFusionNet: one per unit
  std::vector<double> audio_gates;  // DocFusionNet: one per unit
  std::vector<double> seg_gates;    // SegFusionNet: one per segment
  std::vector<Vec> per_segment;     // SegFusionNet: h_la_i
};

// sigma(w . h + b), the disorder probability from a fused vector.
inline double predict_disorder(const Dense& head, const Vec& h_la) {
  return speechfuse::sigmoid((head.W.value * h_la)(0) + head.b.value(0, 0));
}

// ---------------------------------------------------------------------------

struct DocFusionConfig {
  int text_dim = 0;
  int audio_dim = 0;
  int text_hidden = 64;
  int audio_hidden = 64;
  int fused_dim = 64;
  // false: h_l and h_a are given directly (precomputed unimodal document
  // vectors, one step per modality) and the LSTMs are skipped.
  bool use_lstm = true;

  int h_l_dim() const { return use_lstm ? text_hidden : text_dim; }
  int h_a_dim() const { return use_lstm ? audio_hidden : audio_dim; }

  json to_json() const {
    return {{"text_dim", text_dim},       {"audio_dim", audio_dim}, {"text_hidden", text_hidden},
            {"audio_hidden", audio_hidden}, {"fused_dim", fused_dim}, {"use_lstm", use_lstm}};
  }
  static DocFusionConfig from_json(const json& j) {
    DocFusionConfig c;
    c.text_dim = j.at("text_dim").get<int>();
    c.audio_dim = j.at("audio_dim").get<int>();
    c.text_hidden = j.at("text_hidden").get<int>();
    c.audio_hidden = j.at("audio_hidden").get<int>();
    c.fused_dim = j.at("fused_dim").get<int>();
    c.use_lstm = j.at("use_lstm").get<bool>();
    return c;
  }
};

// One fusion unit: a language sequence and an acoustic sequence. A whole
// document is one unit; per-segment granularity uses one unit per segment.
struct FusionUnit {
  std::vector<Vec> text;
  std::vector<Vec> audio;
};

struct DocFusionInput {
  std::vector<FusionUnit> units;
};

class DocFusionNet {
 public:
  DocFusionNet() = default;
  explicit DocFusionNet(const DocFusionConfig& cfg) : cfg_(cfg) {
    if (cfg.text_dim < 1 || cfg.audio_dim < 1 || cfg.fused_dim < 1) throw ConfigError("bad fusion dims");
    if (cfg.use_lstm) {
      lstm_l_ = Lstm("lstm_l", cfg.text_dim, cfg.text_hidden);
      lstm_a_ = Lstm("lstm_a", cfg.audio_dim, cfg.audio_hidden);
    }
    const int hl = cfg.h_l_dim(), ha = cfg.h_a_dim();
    W_hl = Param("W_hl", 1, hl);
    b_l = Param("b_l", 1, 1);
    W_ha = Param("W_ha", 1, ha);
    b_a = Param("b_a", 1, 1);
    W_l = Param("W_l", cfg.fused_dim, hl);
    W_a = Param("W_a", cfg.fused_dim, ha);
    b_la = Param("b_la", cfg.fused_dim, 1);
    head_ = Dense("head", cfg.fused_dim, 1, nn::Activation::identity);
  }

  // Gate and fusion parameters, public so tests can set them directly.
  Param W_hl, b_l, W_ha, b_a;
  Param W_l, W_a, b_la;

  const DocFusionConfig& config() const { return cfg_; }
  Lstm& lstm_l() { return lstm_l_; }
  Lstm& lstm_a() { return lstm_a_; }
  Dense& head() { return head_; }
  const Dense& head() const { return head_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    if (cfg_.use_lstm) {
      lstm_l_.init(rng);
      lstm_a_.init(rng);
    }
    nn::init_uniform(W_hl, W_hl.value.cols(), rng);
    nn::init_uniform(b_l, W_hl.value.cols(), rng);
    nn::init_uniform(W_ha, W_ha.value.cols(), rng);
    nn::init_uniform(b_a, W_ha.value.cols(), rng);
    nn::init_uniform(W_l, W_l.value.cols(), rng);
    nn::init_uniform(W_a, W_a.value.cols(), rng);
    nn::init_uniform(b_la, W_l.value.cols(), rng);
    head_.init(rng);
  }

  ParamRefs params() {
    ParamRefs ps;
    if (cfg_.use_lstm) {
      for (auto* p : lstm_l_.params()) ps.push_back(p);
      for (auto* p : lstm_a_.params()) ps.push_back(p);
    }
    for (auto* p : {&W_hl, &b_l, &W_ha, &b_a, &W_l, &W_a, &b_la}) ps.push_back(p);
    for (auto* p : head_.params()) ps.push_back(p);
    return ps;
  }

  struct UnitCache {
    std::optional<Lstm::Cache> cl, ca;
    Vec h_l, h_a, p_l, p_a, h_la;
    double w_l = 0, w_a = 0;
  };

  struct Forward {
    std::vector<UnitCache> units;
    Vec doc;
    nn::Dense::Cache head;
  };

  Forward forward(const DocFusionInput& in) const {
    if (in.units.empty()) throw DataError("fusion input has no units");
    Forward f;
    f.doc = Vec::Zero(cfg_.fused_dim);
    for (const auto& u : in.units) {
      if (u.text.empty() || u.audio.empty()) throw DataError("fusion unit needs both text and audio steps");
      UnitCache c;
      if (cfg_.use_lstm) {
        c.cl = lstm_l_.forward(u.text);
        c.ca = lstm_a_.forward(u.audio);
        c.h_l = c.cl->final_h();
        c.h_a = c.ca->final_h();
      } else {
        c.h_l = u.text.back();
        c.h_a = u.audio.back();
        if (c.h_l.size() != cfg_.text_dim || c.h_a.size() != cfg_.audio_dim) {
          throw DataError("precomputed fusion inputs have wrong dimension");
        }
      }
      c.w_l = speechfuse::sigmoid(W_hl.value.row(0).dot(c.h_l) + b_l.value(0, 0));
      c.w_a = speechfuse::sigmoid(W_ha.value.row(0).dot(c.h_a) + b_a.value(0, 0));
      c.p_l = W_l.value * c.h_l;
      c.p_a = W_a.value * c.h_a;
      c.h_la = c.w_l * c.p_l + c.w_a * c.p_a + b_la.value.col(0);
      f.doc += c.h_la;
      f.units.push_back(std::move(c));
    }
    f.doc /= static_cast<double>(in.units.size());
    f.head = head_.forward(f.doc);
    return f;
  }

  BimodalEmbedding embed(const DocFusionInput& in) const {
    const auto f = forward(in);
    BimodalEmbedding e;
    e.h_la = f.doc;
    for (const auto& u : f.units) {
      e.text_gates.push_back(u.w_l);
      e.audio_gates.push_back(u.w_a);
    }
    return e;
  }

  double predict(const DocFusionInput& in) const { return predict_disorder(head_, forward(in).doc); }

  double loss(const DocFusionInput& in, const Vec& target) const {
    return nn::head_loss(nn::HeadKind::sigmoid, forward(in).head.y, target).loss;
  }

  double loss_and_backward(const DocFusionInput& in, const Vec& target) {
    const auto f = forward(in);
    const auto r = nn::head_loss(nn::HeadKind::sigmoid, f.head.y, target);
    const Vec ddoc = head_.backward(f.head, r.dlogits);
    const Vec dhla = ddoc / static_cast<double>(f.units.size());
    for (const auto& c : f.units) {
      const double dw_l = dhla.dot(c.p_l), dw_a = dhla.dot(c.p_a);
      W_l.grad.noalias() += c.w_l * dhla * c.h_l.transpose();
      W_a.grad.noalias() += c.w_a * dhla * c.h_a.transpose();
      b_la.grad.col(0) += dhla;
      const double da_l = dw_l * c.w_l * (1.0 - c.w_l), da_a = dw_a * c.w_a * (1.0 - c.w_a);
      W_hl.grad.row(0) += da_l * c.h_l.transpose();
      b_l.grad(0, 0) += da_l;
      W_ha.grad.row(0) += da_a * c.h_a.transpose();
      b_a.grad(0, 0) += da_a;
      if (cfg_.use_lstm) {
        const Vec dh_l = c.w_l * (W_l.value.transpose() * dhla) + da_l * W_hl.value.row(0).transpose();
        const Vec dh_a = c.w_a * (W_a.value.transpose() * dhla) + da_a * W_ha.value.row(0).transpose();
        lstm_l_.backward_final(*c.cl, dh_l, false);
        lstm_a_.backward_final(*c.ca, dh_a, false);
      }
    }
    return r.loss;
  }

  json to_json() {
    return {{"format", "speechfuse-nn"},
            {"version", nn::kSnapshotVersion},
            {"kind", "doc_fusion"},
            {"config", cfg_.to_json()},
            {"tensors", nn::params_to_json(params())}};
  }

  static DocFusionNet from_json(const json& j) {
    if (j.value("kind", "") != "doc_fusion") throw DataError("snapshot is not a document fusion network");
    DocFusionNet net(DocFusionConfig::from_json(j.at("config")));
    nn::params_from_json(net.params(), j.at("tensors"));
    return net;
  }

 private:
  DocFusionConfig cfg_;
  Lstm lstm_l_, lstm_a_;
  Dense head_;
};

// ---------------------------------------------------------------------------

struct SegFusionConfig {
  int text_dim = 0;
  int audio_dim = 0;
  int hidden = 64;
  int fused_dim = 64;

  json to_json() const {
    return {{"text_dim", text_dim}, {"audio_dim", audio_dim}, {"hidden", hidden}, {"fused_dim", fused_dim}};
  }
  static SegFusionConfig from_json(const json& j) {
    return {j.at("text_dim").get<int>(), j.at("audio_dim").get<int>(), j.at("hidden").get<int>(),
            j.at("fused_dim").get<int>()};
  }
};

struct SegPair {
  Vec text;
  Vec audio;
};

struct SegFusionInput {
  std::vector<SegPair> segments;
};

class SegFusionNet {
 public:
  SegFusionNet() = default;
  explicit SegFusionNet(const SegFusionConfig& cfg) : cfg_(cfg) {
    if (cfg.text_dim < 1 || cfg.audio_dim < 1 || cfg.hidden < 1 || cfg.fused_dim < 1) {
      throw ConfigError("bad fusion dims");
    }
    lstm_ = Lstm("lstm_la", cfg.text_dim + cfg.audio_dim, cfg.hidden);
    W_h = Param("W_h", 1, cfg.hidden);
    b = Param("b", 1, 1);
    W = Param("W", cfg.fused_dim, cfg.hidden);
    b_la = Param("b_la", cfg.fused_dim, 1);
    head_ = Dense("head", cfg.fused_dim, 1, nn::Activation::identity);
  }

  Param W_h, b, W, b_la;

  const SegFusionConfig& config() const { return cfg_; }
  Lstm& lstm() { return lstm_; }
  Dense& head() { return head_; }
  const Dense& head() const { return head_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    lstm_.init(rng);
    nn::init_uniform(W_h, cfg_.hidden, rng);
    nn::init_uniform(b, cfg_.hidden, rng);
    nn::init_uniform(W, cfg_.hidden, rng);
    nn::init_uniform(b_la, cfg_.hidden, rng);
    head_.init(rng);
  }

  ParamRefs params() {
    ParamRefs ps = lstm_.params();
    for (auto* p : {&W_h, &b, &W, &b_la}) ps.push_back(p);
    for (auto* p : head_.params()) ps.push_back(p);
    return ps;
  }

  struct Forward {
    Lstm::Cache lstm;
    std::vector<double> w;
    std::vector<Vec> proj, h_la;
    double w_sum = 0;
    Vec doc;
    nn::Dense::Cache head;
  };

  static std::vector<Vec> joined(const SegFusionInput& in, int text_dim, int audio_dim) {
    if (in.segments.empty()) throw DataError("fusion input has no segments");
    std::vector<Vec> seq;
    seq.reserve(in.segments.size());
    for (const auto& s : in.segments) {
      if (s.text.size() != text_dim || s.audio.size() != audio_dim) {
        throw DataError("segment text/audio dims differ from the configured dims");
      }
      Vec x(text_dim + audio_dim);
      x << s.text, s.audio;
      seq.push_back(std::move(x));
    }
    return seq;
  }

  Forward forward(const SegFusionInput& in) const {
    Forward f;
    f.lstm = lstm_.forward(joined(in, cfg_.text_dim, cfg_.audio_dim));
    const int T = f.lstm.steps();
    f.doc = Vec::Zero(cfg_.fused_dim);
    for (int t = 0; t < T; ++t) {
      const Vec h = f.lstm.h.col(t + 1);
      const double w = speechfuse::sigmoid(W_h.value.row(0).dot(h) + b.value(0, 0));
      Vec p = W.value * h;
      Vec z = w * p + b_la.value.col(0);
      f.doc += w * z;
      f.w_sum += w;
      f.w.push_back(w);
      f.proj.push_back(std::move(p));
      f.h_la.push_back(std::move(z));
    }
    f.doc /= f.w_sum;
    f.head = head_.forward(f.doc);
    return f;
  }

  BimodalEmbedding embed(const SegFusionInput& in) const {
    auto f = forward(in);
    BimodalEmbedding e;
    e.h_la = f.doc;
    e.seg_gates = f.w;
    e.per_segment = std::move(f.h_la);
    return e;
  }

  double predict(const SegFusionInput& in) const { return predict_disorder(head_, forward(in).doc); }

  double loss(const SegFusionInput& in, const Vec& target) const {
    return nn::head_loss(nn::HeadKind::sigmoid, forward(in).head.y, target).loss;
  }

  double loss_and_backward(const SegFusionInput& in, const Vec& target) {
    const auto f = forward(in);
    const auto r = nn::head_loss(nn::HeadKind::sigmoid, f.head.y, target);
    const Vec ddoc = head_.backward(f.head, r.dlogits);
    const int T = f.lstm.steps();
    Mat dh = Mat::Zero(cfg_.hidden, T);
    for (int t = 0; t < T; ++t) {
      const double w = f.w[t];
      const Vec h = f.lstm.h.col(t + 1);
      const Vec dz = (w / f.w_sum) * ddoc;
      const double dw = (f.h_la[t] - f.doc).dot(ddoc) / f.w_sum + dz.dot(f.proj[t]);
      W.grad.noalias() += w * dz * h.transpose();
      b_la.grad.col(0) += dz;
      const double da = dw * w * (1.0 - w);
      W_h.grad.row(0) += da * h.transpose();
      b.grad(0, 0) += da;
      dh.col(t) = w * (W.value.transpose() * dz) + da * W_h.value.row(0).transpose();
    }
    lstm_.backward(f.lstm, dh, false);
    return r.loss;
  }

  json to_json() {
    return {{"format", "speechfuse-nn"},
            {"version", nn::kSnapshotVersion},
            {"kind", "seg_fusion"},
            {"config", cfg_.to_json()},
            {"tensors", nn::params_to_json(params())}};
  }

  static SegFusionNet from_json(const json& j) {
    if (j.value("kind", "") != "seg_fusion") throw DataError("snapshot is not a segment fusion network");
    SegFusionNet net(SegFusionConfig::from_json(j.at("config")));
    nn::params_from_json(net.params(), j.at("tensors"));
    return net;
  }

 private:
  SegFusionConfig cfg_;
  Lstm lstm_;
  Dense head_;
};

// ---------------------------------------------------------------------------
// Unimodal document representation: attention LSTM over segment vectors.

struct DocRep {
  Vec vector;                  // penultimate activations
  std::vector<double> weights;  // softmax attention over segments
};

inline nn::SequenceNetConfig unimodal_doc_config(int segment_dim, int hidden = 64, int doc_dim = 32) {
  nn::SequenceNetConfig c;
  c.input_dim = segment_dim;
  c.hidden_dim = hidden;
  c.pooling = nn::Pooling::attention;
  c.penultimate_dim = doc_dim;
  c.penultimate_activation = nn::Activation::tanh;
  c.n_outputs = 1;
  c.head = nn::HeadKind::sigmoid;
  return c;
}

inline DocRep unimodal_doc_rep(const nn::SequenceNet& net, const std::vector<Vec>& segments) {
  if (segments.empty()) throw DataError("document has no segments");
  nn::SeqInput in;
  in.steps = segments;
  const auto f = net.forward(in);
  DocRep r;
  r.vector = f.penultimate();
  if (f.attn) {
    r.weights.assign(f.attn->alpha.data(), f.attn->alpha.data() + f.attn->alpha.size());
  } else {
    r.weights.assign(segments.size(), 0.0);
    r.weights.back() = 1.0;
  }
  return r;
}

// 12-label multi-label network over per-frame features plus a static
// segment vector; its penultimate layer is the compressed audio encoding.
inline nn::SequenceNetConfig audio_compress_config(int frame_dim, int static_dim, int hidden = 32, int out_dim = 64) {
  nn::SequenceNetConfig c;
  c.input_dim = frame_dim;
  c.hidden_dim = hidden;
  c.pooling = nn::Pooling::last;
  c.side_dim = static_dim;
  c.penultimate_dim = out_dim;
  c.penultimate_activation = nn::Activation::tanh;
  c.n_outputs = 12;
  c.head = nn::HeadKind::sigmoid;
  return c;
}

inline Vec audio_segment_compress(const nn::SequenceNet& net, const nn::SeqInput& in) {
  if (net.config().n_outputs != 12 || net.config().head != nn::HeadKind::sigmoid) {
    throw ConfigError("audio compressor must be a 12-output sigmoid network");
  }
  if (!net.trained()) throw RuntimeFailure("audio compressor has not been trained");
  return net.penultimate(in);
}

// CSV trace (segment_id, weight) for attention / gate rendering.
inline std::string attention_csv(const std::vector<std::string>& segment_ids, const std::vector<double>& weights) {
  if (segment_ids.size() != weights.size()) throw DataError("attention trace length mismatch");
  std::string out = "segment_id,weight\n";
  for (std::size_t i = 0; i < weights.size(); ++i) out += segment_ids[i] + "," + fmt_double(weights[i]) + "\n";
  return out;
}

}  // namespace speechfuse::fusion
