#pragma once

// Small double-precision neural toolkit: LSTM with backpropagation through
// time, dense and 2-D convolution layers, attention pooling, softmax /
// sigmoid losses, SGD and Adam, finite-difference gradient checking, and
// JSON snapshots of named tensors.
//
// Layers are stateless with respect to a forward pass: forward() returns a
// cache object and backward() consumes it, accumulating into Param::grad.

#include "speechfuse/common.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>

namespace speechfuse::nn {

using json = nlohmann::json;

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}
};

using ParamRefs = std::vector<Param*>;

inline void zero_grads(const ParamRefs& ps) {
  for (auto* p : ps) p->grad.setZero();
}

inline void init_uniform(Param& p, double fan_in, Rng& rng) {
  const double a = 1.0 / std::sqrt(fan_in);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-a, a);
}

// Uniform(-scale, scale) on every tensor; used to build well-conditioned
// gradient-check instances.
inline void randomize_params(const ParamRefs& ps, Rng& rng, double scale = 1.0) {
  for (auto* p : ps) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-scale, scale);
  }
}

enum class Activation { identity, sigmoid, tanh, relu, softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::identity, Activation::sigmoid, Activation::tanh, Activation::relu, Activation::softmax}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return e / e.sum();
}

inline Vec sigmoid(const Vec& z) { return z.unaryExpr([](double v) { return speechfuse::sigmoid(v); }); }

inline Vec apply(Activation a, const Vec& z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh: return z.array().tanh();
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::softmax: return softmax(z);
  }
  return z;
}

// dL/dz from dL/dy for elementwise activations, given y = act(z).
inline Vec activation_backward(Activation a, const Vec& z, const Vec& y, const Vec& dy) {
  switch (a) {
    case Activation::identity: return dy;
    case Activation::sigmoid: return dy.array() * y.array() * (1.0 - y.array());
    case Activation::tanh: return dy.array() * (1.0 - y.array().square());
    case Activation::relu: return (z.array() > 0.0).select(dy, 0.0);
    case Activation::softmax: {
      const double s = y.dot(dy);
      return y.array() * (dy.array() - s);
    }
  }
  return dy;
}

// ---------------------------------------------------------------------------
// Dense

struct Dense {
  Param W, b;
  Activation act = Activation::identity;

  Dense() = default;
  Dense(const std::string& name, int in, int out, Activation a)
      : W(name + ".W", out, in), b(name + ".b", out, 1), act(a) {}

  int in_dim() const { return static_cast<int>(W.value.cols()); }
  int out_dim() const { return static_cast<int>(W.value.rows()); }

  struct Cache {
    Vec x, z, y;
  };

  Cache forward(const Vec& x) const {
    Cache c;
    c.x = x;
    c.z = W.value * x + b.value.col(0);
    c.y = apply(act, c.z);
    return c;
  }

  Vec backward(const Cache& c, const Vec& dy) {
    const Vec dz = activation_backward(act, c.z, c.y, dy);
    W.grad.noalias() += dz * c.x.transpose();
    b.grad.col(0) += dz;
    return W.value.transpose() * dz;
  }

  void init(Rng& rng) {
    init_uniform(W, W.value.cols(), rng);
    init_uniform(b, W.value.cols(), rng);
  }

  ParamRefs params() { return {&W, &b}; }
};

// ---------------------------------------------------------------------------
// LSTM, gate order (input, forget, output, candidate)

struct Lstm {
  Param Wx, Wh, b;

  Lstm() = default;
  Lstm(const std::string& name, int input_dim, int hidden_dim)
      : Wx(name + ".Wx", 4 * hidden_dim, input_dim),
        Wh(name + ".Wh", 4 * hidden_dim, hidden_dim),
        b(name + ".b", 4 * hidden_dim, 1) {}

  int input_dim() const { return static_cast<int>(Wx.value.cols()); }
  int hidden_dim() const { return static_cast<int>(Wh.value.cols()); }

  struct Cache {
    Mat x;        // D x T
    Mat h, c;     // H x (T+1), column 0 is the zero initial state
    Mat i, f, o, g, tc;  // H x T; tc = tanh(c_t)
    int steps() const { return static_cast<int>(x.cols()); }
    Vec final_h() const { return h.col(h.cols() - 1); }
  };

  Cache forward(const std::vector<Vec>& seq) const {
    if (seq.empty()) throw DataError("LSTM input sequence is empty");
    const int H = hidden_dim(), T = static_cast<int>(seq.size());
    Cache c;
    c.x.resize(input_dim(), T);
    for (int t = 0; t < T; ++t) {
      if (seq[t].size() != input_dim()) {
        throw DataError("LSTM step " + std::to_string(t) + " has dim " + std::to_string(seq[t].size()) +
                        ", expected " + std::to_string(input_dim()));
      }
      c.x.col(t) = seq[t];
    }
    const Mat zx = Wx.value * c.x;
    c.h = Mat::Zero(H, T + 1);
    c.c = Mat::Zero(H, T + 1);
    c.i.resize(H, T);
    c.f.resize(H, T);
    c.o.resize(H, T);
    c.g.resize(H, T);
    c.tc.resize(H, T);
    Vec z(4 * H);
    for (int t = 0; t < T; ++t) {
      z.noalias() = zx.col(t) + b.value.col(0);
      z.noalias() += Wh.value * c.h.col(t);
      c.i.col(t) = sigmoid(z.segment(0, H));
      c.f.col(t) = sigmoid(z.segment(H, H));
      c.o.col(t) = sigmoid(z.segment(2 * H, H));
      c.g.col(t) = z.segment(3 * H, H).array().tanh();
      c.c.col(t + 1) = c.f.col(t).cwiseProduct(c.c.col(t)) + c.i.col(t).cwiseProduct(c.g.col(t));
      c.tc.col(t) = c.c.col(t + 1).array().tanh();
      c.h.col(t + 1) = c.o.col(t).cwiseProduct(c.tc.col(t));
    }
    return c;
  }

  // dh: H x T gradient w.r.t. each h_t. Returns D x T input gradients when
  // need_dx, else an empty matrix.
  Mat backward(const Cache& c, const Mat& dh, bool need_dx = true) {
    const int H = hidden_dim(), T = c.steps();
    Mat dz(4 * H, T);
    Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
    for (int t = T - 1; t >= 0; --t) {
      const Vec dht = dh.col(t) + dh_next;
      const auto i = c.i.col(t).array(), f = c.f.col(t).array(), o = c.o.col(t).array(), g = c.g.col(t).array();
      const auto tc = c.tc.col(t).array();
      const Vec dc = (dht.array() * o * (1.0 - tc.square())).matrix() + dc_next;
      dz.col(t).segment(0, H) = (dc.array() * g * i * (1.0 - i)).matrix();
      dz.col(t).segment(H, H) = (dc.array() * c.c.col(t).array() * f * (1.0 - f)).matrix();
      dz.col(t).segment(2 * H, H) = (dht.array() * tc * o * (1.0 - o)).matrix();
      dz.col(t).segment(3 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
      dc_next = (dc.array() * f).matrix();
      dh_next.noalias() = Wh.value.transpose() * dz.col(t);
    }
    Wx.grad.noalias() += dz * c.x.transpose();
    Wh.grad.noalias() += dz * c.h.leftCols(T).transpose();
    b.grad.col(0) += dz.rowwise().sum();
    if (!need_dx) return {};
    return Wx.value.transpose() * dz;
  }

  // Backward with gradient only on the final hidden state.
  Mat backward_final(const Cache& c, const Vec& dh_final, bool need_dx = true) {
    Mat dh = Mat::Zero(hidden_dim(), c.steps());
    dh.col(c.steps() - 1) = dh_final;
    return backward(c, dh, need_dx);
  }

  void init(Rng& rng) {
    init_uniform(Wx, Wx.value.cols(), rng);
    init_uniform(Wh, Wh.value.cols(), rng);
    init_uniform(b, Wh.value.cols(), rng);
    b.value.block(hidden_dim(), 0, hidden_dim(), 1).setConstant(1.0);
  }

  ParamRefs params() { return {&Wx, &Wh, &b}; }
};

// ---------------------------------------------------------------------------
// Conv2d: valid cross-correlation + bias + relu.

struct Conv2d {
  Param K;  // out_ch x (in_ch * kh * kw)
  Param b;  // out_ch x 1
  int in_ch = 1, kh = 1, kw = 1, stride = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel_h, int kernel_w, int stride_ = 1)
      : K(name + ".K", out_channels, in_channels * kernel_h * kernel_w),
        b(name + ".b", out_channels, 1),
        in_ch(in_channels),
        kh(kernel_h),
        kw(kernel_w),
        stride(stride_) {
    if (kh < 1 || kw < 1 || stride < 1) throw ConfigError("conv kernel and stride must be >= 1");
  }

  int out_ch() const { return static_cast<int>(K.value.rows()); }
  int out_rows(int rows) const { return (rows - kh) / stride + 1; }
  int out_cols(int cols) const { return (cols - kw) / stride + 1; }

  double& kernel(int o, int i, int u, int v) { return K.value(o, (i * kh + u) * kw + v); }

  struct Cache {
    std::vector<Mat> input;
    std::vector<Mat> pre;  // before relu
    std::vector<Mat> out;
  };

  Cache forward(const std::vector<Mat>& input) const {
    if (static_cast<int>(input.size()) != in_ch) throw DataError("conv input channel count mismatch");
    const int R = static_cast<int>(input[0].rows()), C = static_cast<int>(input[0].cols());
    if (R < kh || C < kw) {
      throw DataError("conv input " + std::to_string(R) + "x" + std::to_string(C) + " is smaller than kernel " +
                      std::to_string(kh) + "x" + std::to_string(kw));
    }
    for (const auto& m : input) {
      if (m.rows() != R || m.cols() != C) throw DataError("conv input channels differ in size");
    }
    const int orow = out_rows(R), ocol = out_cols(C);
    Cache c;
    c.input = input;
    c.pre.assign(out_ch(), Mat::Zero(orow, ocol));
    c.out.resize(out_ch());
    for (int o = 0; o < out_ch(); ++o) {
      Mat& z = c.pre[o];
      z.setConstant(b.value(o, 0));
      for (int i = 0; i < in_ch; ++i) {
        for (int u = 0; u < kh; ++u) {
          for (int v = 0; v < kw; ++v) {
            const double k = K.value(o, (i * kh + u) * kw + v);
            if (stride == 1) {
              z.noalias() += k * input[i].block(u, v, orow, ocol);
            } else {
              for (int r = 0; r < orow; ++r)
                for (int q = 0; q < ocol; ++q) z(r, q) += k * input[i](r * stride + u, q * stride + v);
            }
          }
        }
      }
      c.out[o] = z.cwiseMax(0.0);
    }
    return c;
  }

  std::vector<Mat> backward(const Cache& c, const std::vector<Mat>& dout, bool need_dx = true) {
    const int orow = static_cast<int>(c.pre[0].rows()), ocol = static_cast<int>(c.pre[0].cols());
    std::vector<Mat> dx;
    if (need_dx) {
      for (const auto& m : c.input) dx.push_back(Mat::Zero(m.rows(), m.cols()));
    }
    for (int o = 0; o < out_ch(); ++o) {
      const Mat dz = (c.pre[o].array() > 0.0).select(dout[o], 0.0);
      b.grad(o, 0) += dz.sum();
      for (int i = 0; i < in_ch; ++i) {
        for (int u = 0; u < kh; ++u) {
          for (int v = 0; v < kw; ++v) {
            const int col = (i * kh + u) * kw + v;
            if (stride == 1) {
              K.grad(o, col) += (dz.array() * c.input[i].block(u, v, orow, ocol).array()).sum();
              if (need_dx) dx[i].block(u, v, orow, ocol) += K.value(o, col) * dz;
            } else {
              for (int r = 0; r < orow; ++r) {
                for (int q = 0; q < ocol; ++q) {
                  K.grad(o, col) += dz(r, q) * c.input[i](r * stride + u, q * stride + v);
                  if (need_dx) dx[i](r * stride + u, q * stride + v) += K.value(o, col) * dz(r, q);
                }
              }
            }
          }
        }
      }
    }
    return dx;
  }

  void init(Rng& rng) {
    init_uniform(K, in_ch * kh * kw, rng);
    init_uniform(b, in_ch * kh * kw, rng);
  }

  ParamRefs params() { return {&K, &b}; }
};

// ---------------------------------------------------------------------------
// Softmax attention pooling over hidden states: score_t = v . h_t,
// alpha = softmax(score), pooled = sum_t alpha_t h_t.

struct AttentionPool {
  Param v;

  AttentionPool() = default;
  AttentionPool(const std::string& name, int dim) : v(name + ".v", 1, dim) {}

  struct Cache {
    Mat h;  // H x T
    Vec alpha;
    Vec pooled;
  };

  Cache forward(const Mat& h) const {
    Cache c;
    c.h = h;
    const Vec scores = (v.value * h).transpose();
    c.alpha = softmax(scores);
    c.pooled = h * c.alpha;
    return c;
  }

  Mat backward(const Cache& c, const Vec& dpooled) {
    const Vec dalpha = c.h.transpose() * dpooled;
    const double s = c.alpha.dot(dalpha);
    const Vec dscore = c.alpha.array() * (dalpha.array() - s);
    v.grad.row(0) += (c.h * dscore).transpose();
    Mat dh = dpooled * c.alpha.transpose();
    dh.noalias() += v.value.transpose() * dscore.transpose();
    return dh;
  }

  void init(Rng& rng) { init_uniform(v, v.value.cols(), rng); }
  ParamRefs params() { return {&v}; }
};

// ---------------------------------------------------------------------------
// Losses on raw head outputs (logits).

enum class HeadKind { softmax, sigmoid };

inline const char* to_string(HeadKind h) { return h == HeadKind::softmax ? "softmax" : "sigmoid"; }
inline HeadKind head_from_string(std::string_view s) {
  if (s == "softmax") return HeadKind::softmax;
  if (s == "sigmoid") return HeadKind::sigmoid;
  throw ConfigError("unknown head '" + std::string(s) + "'");
}

struct LossResult {
  double loss = 0.0;
  Vec dlogits;
};

// Softmax: target is a probability vector. Sigmoid: targets in [0,1] per
// output, loss summed over outputs.
inline LossResult head_loss(HeadKind head, const Vec& logits, const Vec& target) {
  if (target.size() != logits.size()) throw DataError("target dimension does not match network outputs");
  LossResult r;
  if (head == HeadKind::softmax) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    r.loss = -(target.array() * (logits.array() - lse)).sum();
    r.dlogits = softmax(logits) - target;
  } else {
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      const double z = logits(k);
      r.loss += std::max(z, 0.0) - target(k) * z + std::log1p(std::exp(-std::abs(z)));
    }
    r.dlogits = sigmoid(logits) - target;
  }
  if (!std::isfinite(r.loss)) throw RuntimeFailure("non-finite loss");
  return r;
}

inline Vec head_probabilities(HeadKind head, const Vec& logits) {
  return head == HeadKind::softmax ? softmax(logits) : sigmoid(logits);
}

inline Vec one_hot(int k, int n) {
  Vec v = Vec::Zero(n);
  v(k) = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Tensor snapshots

inline json tensor_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = data;
  return j;
}

inline Mat tensor_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("tensor '" + name + "' has wrong size");
  Mat m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline json params_to_json(const ParamRefs& ps) {
  json j = json::object();
  for (const auto* p : ps) j[p->name] = tensor_to_json(p->value);
  return j;
}

inline void params_from_json(const ParamRefs& ps, const json& j) {
  for (auto* p : ps) {
    if (!j.contains(p->name)) throw DataError("snapshot is missing tensor '" + p->name + "'");
    Mat m = tensor_from_json(j.at(p->name), p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw DataError("snapshot tensor '" + p->name + "' has wrong shape");
    }
    p->value = std::move(m);
    p->grad.setZero(p->value.rows(), p->value.cols());
  }
}

inline constexpr int kSnapshotVersion = 1;

// ---------------------------------------------------------------------------
// SequenceNet: [conv front-end] -> LSTM -> {final state | attention pool}
// (++ optional static side features) -> penultimate dense -> head.
// Covers the emotion classifiers, the CNN+LSTM spectrogram branch, the
// 12-label audio compressor and the attention document network.

enum class Pooling { last, attention };

struct ConvSpec {
  int channels = 4;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int image_cols = 26;  // spectrogram width (mel bands)
};

struct SequenceNetConfig {
  int input_dim = 0;  // ignored when conv is set
  int hidden_dim = 64;
  Pooling pooling = Pooling::last;
  int side_dim = 0;
  int penultimate_dim = 32;
  Activation penultimate_activation = Activation::tanh;
  int n_outputs = 2;
  HeadKind head = HeadKind::softmax;
  std::optional<ConvSpec> conv;

  int lstm_input_dim() const {
    if (!conv) return input_dim;
    return conv->channels * ((conv->image_cols - conv->kernel_w) / conv->stride + 1);
  }

  json to_json() const {
    json j;
    j["input_dim"] = input_dim;
    j["hidden_dim"] = hidden_dim;
    j["pooling"] = pooling == Pooling::last ? "last" : "attention";
    j["side_dim"] = side_dim;
    j["penultimate_dim"] = penultimate_dim;
    j["penultimate_activation"] = nn::to_string(penultimate_activation);
    j["n_outputs"] = n_outputs;
    j["head"] = nn::to_string(head);
    if (conv) {
      j["conv"] = {{"channels", conv->channels}, {"kernel_h", conv->kernel_h}, {"kernel_w", conv->kernel_w},
                   {"stride", conv->stride}, {"image_cols", conv->image_cols}};
    }
    return j;
  }

  static SequenceNetConfig from_json(const json& j) {
    SequenceNetConfig c;
    c.input_dim = j.at("input_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.pooling = j.at("pooling").get<std::string>() == "attention" ? Pooling::attention : Pooling::last;
    c.side_dim = j.at("side_dim").get<int>();
    c.penultimate_dim = j.at("penultimate_dim").get<int>();
    c.penultimate_activation = activation_from_string(j.at("penultimate_activation").get<std::string>());
    c.n_outputs = j.at("n_outputs").get<int>();
    c.head = head_from_string(j.at("head").get<std::string>());
    if (j.contains("conv")) {
      const auto& k = j.at("conv");
      c.conv = ConvSpec{k.at("channels").get<int>(), k.at("kernel_h").get<int>(), k.at("kernel_w").get<int>(),
                        k.at("stride").get<int>(), k.at("image_cols").get<int>()};
    }
    return c;
  }
};

struct SeqInput {
  std::vector<Vec> steps;  // sequence input (no conv)
  Mat image;               // rows = time, cols = frequency (conv)
  Vec side;                // static features joined after pooling
};

class SequenceNet {
 public:
  SequenceNet() = default;
  explicit SequenceNet(const SequenceNetConfig& cfg) : cfg_(cfg) {
    if (cfg.hidden_dim < 1 || cfg.penultimate_dim < 1 || cfg.n_outputs < 1) throw ConfigError("bad network dims");
    if (!cfg.conv && cfg.input_dim < 1) throw ConfigError("sequence network needs input_dim >= 1");
    if (cfg.conv) {
      conv_ = Conv2d("conv", 1, cfg.conv->channels, cfg.conv->kernel_h, cfg.conv->kernel_w, cfg.conv->stride);
      if (cfg.conv->image_cols < cfg.conv->kernel_w) throw ConfigError("spectrogram narrower than conv kernel");
    }
    lstm_ = Lstm("lstm", cfg.lstm_input_dim(), cfg.hidden_dim);
    if (cfg.pooling == Pooling::attention) attn_ = AttentionPool("attn", cfg.hidden_dim);
    penult_ = Dense("penult", cfg.hidden_dim + cfg.side_dim, cfg.penultimate_dim, cfg.penultimate_activation);
    head_ = Dense("head", cfg.penultimate_dim, cfg.n_outputs, Activation::identity);
  }

  const SequenceNetConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    if (cfg_.conv) conv_.init(rng);
    lstm_.init(rng);
    if (cfg_.pooling == Pooling::attention) attn_.init(rng);
    penult_.init(rng);
    head_.init(rng);
  }

  ParamRefs params() {
    ParamRefs ps;
    auto add = [&](ParamRefs more) { ps.insert(ps.end(), more.begin(), more.end()); };
    if (cfg_.conv) add(conv_.params());
    add(lstm_.params());
    if (cfg_.pooling == Pooling::attention) add(attn_.params());
    add(penult_.params());
    add(head_.params());
    return ps;
  }

  Lstm& lstm() { return lstm_; }
  Dense& penultimate_layer() { return penult_; }
  Dense& head_layer() { return head_; }
  Conv2d& conv() { return conv_; }
  AttentionPool& attention_layer() { return attn_; }

  struct Forward {
    std::optional<Conv2d::Cache> conv;
    Lstm::Cache lstm;
    std::optional<AttentionPool::Cache> attn;
    Dense::Cache penult, head;

    const Vec& penultimate() const { return penult.y; }
    const Vec& logits() const { return head.y; }
  };

  Forward forward(const SeqInput& in) const {
    Forward f;
    if (cfg_.conv) {
      f.conv = conv_.forward({in.image});
      f.lstm = lstm_.forward(conv_rows_to_steps(f.conv->out));
    } else {
      f.lstm = lstm_.forward(in.steps);
    }
    Vec pooled;
    if (cfg_.pooling == Pooling::attention) {
      f.attn = attn_.forward(f.lstm.h.rightCols(f.lstm.steps()));
      pooled = f.attn->pooled;
    } else {
      pooled = f.lstm.final_h();
    }
    if (cfg_.side_dim > 0) {
      if (in.side.size() != cfg_.side_dim) throw DataError("side feature dimension mismatch");
      Vec joined(pooled.size() + in.side.size());
      joined << pooled, in.side;
      pooled = std::move(joined);
    }
    f.penult = penult_.forward(pooled);
    f.head = head_.forward(f.penult.y);
    return f;
  }

  void backward(const Forward& f, const Vec& dlogits) {
    const Vec dpen = head_.backward(f.head, dlogits);
    Vec dpool = penult_.backward(f.penult, dpen);
    const Vec dstate = dpool.head(cfg_.hidden_dim);
    Mat dh;
    if (cfg_.pooling == Pooling::attention) {
      dh = attn_.backward(*f.attn, dstate);
    } else {
      dh = Mat::Zero(cfg_.hidden_dim, f.lstm.steps());
      dh.col(f.lstm.steps() - 1) = dstate;
    }
    const Mat dx = lstm_.backward(f.lstm, dh, cfg_.conv.has_value());
    if (cfg_.conv) conv_.backward(*f.conv, steps_grad_to_maps(dx, *f.conv), false);
  }

  double loss(const SeqInput& in, const Vec& target) const {
    return head_loss(cfg_.head, forward(in).logits(), target).loss;
  }

  double loss_and_backward(const SeqInput& in, const Vec& target) {
    const auto f = forward(in);
    const auto r = head_loss(cfg_.head, f.logits(), target);
    backward(f, r.dlogits);
    return r.loss;
  }

  Vec predict(const SeqInput& in) const { return head_probabilities(cfg_.head, forward(in).logits()); }
  // Activations of the last dense layer below the head.
  Vec penultimate(const SeqInput& in) const { return forward(in).penultimate(); }
  Vec attention(const SeqInput& in) const {
    const auto f = forward(in);
    if (!f.attn) return Vec::Ones(1);
    return f.attn->alpha;
  }

  json to_json() {
    json j;
    j["format"] = "speechfuse-nn";
    j["version"] = kSnapshotVersion;
    j["kind"] = "sequence";
    j["config"] = cfg_.to_json();
    j["trained"] = trained_;
    j["tensors"] = params_to_json(params());
    return j;
  }

  static SequenceNet from_json(const json& j) {
    if (j.value("kind", "") != "sequence") throw DataError("snapshot is not a sequence network");
    if (j.value("version", 0) != kSnapshotVersion) throw DataError("unsupported snapshot version");
    SequenceNet net(SequenceNetConfig::from_json(j.at("config")));
    params_from_json(net.params(), j.at("tensors"));
    net.trained_ = j.value("trained", false);
    return net;
  }

 private:
  // Time-major: step t joins row t of every channel map.
  static std::vector<Vec> conv_rows_to_steps(const std::vector<Mat>& maps) {
    const int T = static_cast<int>(maps[0].rows()), W = static_cast<int>(maps[0].cols());
    std::vector<Vec> steps(T, Vec(W * static_cast<int>(maps.size())));
    for (int t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < maps.size(); ++c) steps[t].segment(c * W, W) = maps[c].row(t).transpose();
    }
    return steps;
  }

  static std::vector<Mat> steps_grad_to_maps(const Mat& dx, const Conv2d::Cache& cc) {
    const int T = static_cast<int>(cc.out[0].rows()), W = static_cast<int>(cc.out[0].cols());
    std::vector<Mat> d(cc.out.size(), Mat(T, W));
    for (int t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < d.size(); ++c) d[c].row(t) = dx.col(t).segment(c * W, W).transpose();
    }
    return d;
  }

  SequenceNetConfig cfg_;
  Conv2d conv_;
  Lstm lstm_;
  AttentionPool attn_;
  Dense penult_;
  Dense head_;
  bool trained_ = false;
};

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }

  json to_json() const {
    return {{"learning_rate", learning_rate}, {"epochs", epochs},  {"batch_size", batch_size},
            {"seed", seed},                   {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"clip_norm", clip_norm}};
  }

  static TrainConfig from_json(const json& j) { return from_json(j, TrainConfig()); }
  static TrainConfig from_json(const json& j, TrainConfig base) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.seed = j.value("seed", base.seed);
    if (j.contains("optimizer")) {
      const auto o = j.at("optimizer").get<std::string>();
      if (o == "adam") base.optimizer = OptimizerKind::adam;
      else if (o == "sgd") base.optimizer = OptimizerKind::sgd;
      else throw ConfigError("unknown optimizer '" + o + "'");
    }
    base.clip_norm = j.value("clip_norm", base.clip_norm);
    base.validate();
    return base;
  }
};

inline double global_grad_norm(const ParamRefs& ps) {
  double s = 0.0;
  for (const auto* p : ps) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

// Rescales gradients so the global norm is at most max_norm; returns the
// norm before clipping.
inline double clip_gradients(const ParamRefs& ps, double max_norm) {
  const double n = global_grad_norm(ps);
  if (max_norm > 0 && n > max_norm) {
    const double s = max_norm / n;
    for (auto* p : ps) p->grad *= s;
  }
  return n;
}

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(const ParamRefs& ps) {
    if (m_.empty()) {
      for (const auto* p : ps) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (auto* p : ps) p->value -= lr * p->grad;
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_), bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto* p = ps[k];
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * p->grad;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
      p->value.array() -= lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean training loss per epoch

  std::string loss_csv() const {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < loss_curve.size(); ++e) out += std::to_string(e + 1) + "," + fmt_double(loss_curve[e]) + "\n";
    return out;
  }
};

// Any network exposing params(), loss(x, y) and loss_and_backward(x, y).
template <typename Net, typename Input>
concept Trainable = requires(Net& n, const Net& cn, const Input& x, const Vec& y) {
  { n.params() } -> std::convertible_to<ParamRefs>;
  { n.loss_and_backward(x, y) } -> std::convertible_to<double>;
  { cn.loss(x, y) } -> std::convertible_to<double>;
};

// Mini-batch training with seeded shuffling; gradients are batch means.
// Only parameters in `trainable` are updated (all when empty).
template <typename Net, typename Input>
  requires Trainable<Net, Input>
TrainResult train(Net& net, const std::vector<Input>& xs, const std::vector<Vec>& ys, const TrainConfig& cfg,
                  const std::vector<std::string>& trainable = {}) {
  cfg.validate();
  if (xs.empty()) throw DataError("training set is empty");
  if (xs.size() != ys.size()) throw DataError("inputs and targets differ in length");
  ParamRefs all = net.params();
  ParamRefs upd;
  for (auto* p : all) {
    if (trainable.empty() || std::find(trainable.begin(), trainable.end(), p->name) != trainable.end()) upd.push_back(p);
  }
  for (const auto& name : trainable) {
    if (std::none_of(all.begin(), all.end(), [&](const Param* p) { return p->name == name; })) {
      throw ConfigError("no parameter named '" + name + "' to train");
    }
  }
  Optimizer opt(cfg);
  TrainResult res;
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {"epoch", std::to_string(epoch)}));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      zero_grads(all);
      for (std::size_t k = start; k < end; ++k) {
        double l;
        try {
          l = net.loss_and_backward(xs[order[k]], ys[order[k]]);
        } catch (const RuntimeFailure& e) {
          throw RuntimeFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1));
        }
        total += l;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* p : upd) p->grad *= scale;
      clip_gradients(upd, cfg.clip_norm);
      opt.step(upd);
    }
    const double mean = total / static_cast<double>(xs.size());
    if (!std::isfinite(mean)) throw RuntimeFailure("training diverged at epoch " + std::to_string(epoch + 1));
    res.loss_curve.push_back(mean);
  }
  if constexpr (requires { net.mark_trained(); }) net.mark_trained();
  return res;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t count = 0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;  // one per parameter tensor
  double tolerance = 0.0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.max_rel_error);
    return m;
  }
  bool passed() const { return max_rel_error() < tolerance; }
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Central differences of the mean batch loss against backprop gradients.
// analytic_scale multiplies the backprop gradient (mutation testing).
template <typename Net, typename Input>
  requires Trainable<Net, Input>
GradCheckReport grad_check(Net& net, const std::vector<Input>& xs, const std::vector<Vec>& ys, double h, double tol,
                           double analytic_scale = 1.0) {
  ParamRefs ps = net.params();
  zero_grads(ps);
  for (std::size_t i = 0; i < xs.size(); ++i) net.loss_and_backward(xs[i], ys[i]);
  const double inv = 1.0 / static_cast<double>(xs.size());
  auto mean_loss = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += std::as_const(net).loss(xs[i], ys[i]);
    return s * inv;
  };
  GradCheckReport rep;
  rep.tolerance = tol;
  for (auto* p : ps) {
    GradCheckRow row;
    row.name = p->name;
    const Mat analytic = p->grad * (inv * analytic_scale);
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      double& w = p->value.data()[k];
      const double orig = w;
      w = orig + h;
      const double lp = mean_loss();
      w = orig - h;
      const double lm = mean_loss();
      w = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic.data()[k], numeric));
      ++row.count;
    }
    rep.rows.push_back(row);
  }
  zero_grads(ps);
  return rep;
}

// ---------------------------------------------------------------------------
// Feature standardization fitted on training rows.

struct Standardizer {
  Vec mean, scale;

  void fit(const std::vector<Vec>& rows) {
    if (rows.empty()) throw DataError("cannot standardize an empty set");
    const auto d = rows[0].size();
    mean = Vec::Zero(d);
    for (const auto& r : rows) mean += r;
    mean /= static_cast<double>(rows.size());
    Vec var = Vec::Zero(d);
    for (const auto& r : rows) var += (r - mean).cwiseAbs2();
    var /= static_cast<double>(rows.size());
    scale = var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
  }

  Vec apply(const Vec& x) const { return (x - mean).cwiseProduct(scale); }

  bool fitted() const { return mean.size() > 0; }

  json to_json() const {
    return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
            {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
  }
  static Standardizer from_json(const json& j) {
    Standardizer s;
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto c = j.at("scale").get<std::vector<double>>();
    s.mean = Eigen::Map<const Vec>(m.data(), static_cast<Eigen::Index>(m.size()));
    s.scale = Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
    return s;
  }
};

}  // namespace speechfuse::nn
