#pragma once

// Shallow binary classifiers over document vectors. Every model emits a
// real score whose rank order is the contract (ROC/AUC use ranks only):
//   rf   fraction of trees voting positive
//   svm  signed margin w.x + b
//   knn  fraction of positive neighbours
//   lda, qda, nb  posterior P(y=1|x)

#include "speechfuse/common.hpp"

#include <json.hpp>

#include <memory>
#include <numeric>

namespace speechfuse::shallow {

using json = nlohmann::json;

struct Dataset {
  Mat X;
  std::vector<int> y;  // 0/1
  std::vector<std::string> groups;

  void validate() const {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("dataset rows and labels differ in length");
    if (!groups.empty() && groups.size() != y.size()) throw DataError("dataset groups and labels differ in length");
    if (!X.allFinite()) throw DataError("dataset contains non-finite values");
    for (int v : y) {
      if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
    }
  }
};

inline void require_two_classes(const std::vector<int>& y, const char* model) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size())) {
    throw DataError(std::string(model) + ": training data has a single class");
  }
}

inline void require_shape(const Mat& X, const std::vector<int>& y) {
  if (X.rows() == 0) throw DataError("empty training set");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("rows and labels differ in length");
  if (!X.allFinite()) throw DataError("training data contains non-finite values");
}

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  virtual void fit(const Mat& X, const std::vector<int>& y) = 0;
  virtual Vec score(const Mat& X) const = 0;
  // Scores strictly above this value predict class 1.
  virtual double threshold() const = 0;
  virtual json to_json() const = 0;

  std::vector<int> predict(const Mat& X) const {
    const Vec s = score(X);
    std::vector<int> out(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) out[i] = s(i) > threshold() ? 1 : 0;
    return out;
  }

 protected:
  void require_fitted() const {
    if (!fitted_) throw RuntimeFailure(name() + " used before fit");
  }
  void check_dim(const Mat& X) const {
    require_fitted();
    if (X.cols() != dim_) {
      throw DataError(name() + ": expected " + std::to_string(dim_) + " features, got " + std::to_string(X.cols()));
    }
  }
  bool fitted_ = false;
  Eigen::Index dim_ = 0;
};

// z-scoring fitted on training rows; zero-variance columns pass through.
struct ColumnScaler {
  Vec mean, inv_std;

  void fit(const Mat& X) {
    mean = X.colwise().mean().transpose();
    inv_std.resize(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double var = (X.col(c).array() - mean(c)).square().mean();
      inv_std(c) = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
  Mat apply(const Mat& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
  }
};

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------------------
// Random forest: bootstrap CART trees, Gini impurity, sqrt(d) features per split.

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_split = 2;
  int max_features = 0;  // 0 = floor(sqrt(d))
  std::uint64_t seed = 1;
};

inline double gini(double pos, double n) {
  if (n <= 0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 = leaf
    double threshold = 0;
    int left = -1, right = -1;
    int vote = 0;
  };

  void fit(const Mat& X, const std::vector<int>& y, std::vector<int> rows, int max_features, int max_depth,
           int min_split, Rng& rng) {
    nodes_.clear();
    build(X, y, rows, 0, max_features, max_depth, min_split, rng);
  }

  int predict_row(const Mat& X, Eigen::Index r) const {
    int n = 0;
    while (nodes_[n].feature >= 0) n = X(r, nodes_[n].feature) <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    return nodes_[n].vote;
  }

  const std::vector<Node>& nodes() const { return nodes_; }

  json to_json() const {
    json arr = json::array();
    for (const auto& n : nodes_) arr.push_back({n.feature, n.threshold, n.left, n.right, n.vote});
    return arr;
  }

 private:
  int build(const Mat& X, const std::vector<int>& y, std::vector<int>& rows, int depth, int max_features,
            int max_depth, int min_split, Rng& rng) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double pos = 0;
    for (int r : rows) pos += y[r];
    const double n = static_cast<double>(rows.size());
    nodes_[id].vote = pos * 2 > n ? 1 : 0;
    if (pos == 0 || pos == n || static_cast<int>(rows.size()) < min_split || (max_depth > 0 && depth >= max_depth)) {
      return id;
    }

    std::vector<int> features(X.cols());
    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features);

    const double parent = gini(pos, n);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0;
    std::vector<std::pair<double, int>> vals(rows.size());
    int tried = 0;
    for (int f : features) {
      // Draw more candidates when every sampled feature was constant.
      if (tried >= max_features && best_feature >= 0) break;
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {X(rows[i], f), y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      ++tried;
      double left_pos = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        left_pos += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double impurity = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        const double gain = parent - impurity;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
          if (best_threshold == vals[i + 1].first) best_threshold = vals[i].first;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<int> left, right;
    for (int r : rows) (X(r, best_feature) <= best_threshold ? left : right).push_back(r);
    std::vector<int>().swap(rows);
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    const int l = build(X, y, left, depth + 1, max_features, max_depth, min_split, rng);
    nodes_[id].left = l;
    const int r = build(X, y, right, depth + 1, max_features, max_depth, min_split, rng);
    nodes_[id].right = r;
    return id;
  }

  std::vector<Node> nodes_;
};

class RandomForest : public Classifier {
 public:
  explicit RandomForest(ForestConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.n_trees < 1) throw ConfigError("rf: n_trees must be >= 1");
  }
  std::string name() const override { return "rf"; }
  double threshold() const override { return 0.5; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    require_two_classes(y, "rf");
    const int d = static_cast<int>(X.cols());
    const int mtry = cfg_.max_features > 0 ? std::min(cfg_.max_features, d)
                                           : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
    trees_.assign(cfg_.n_trees, {});
    const auto n = static_cast<std::uint64_t>(X.rows());
    for (int t = 0; t < cfg_.n_trees; ++t) {
      Rng rng(derive_seed(cfg_.seed, {"tree", std::to_string(t)}));
      std::vector<int> rows(n);
      for (auto& r : rows) r = static_cast<int>(rng.below(n));
      trees_[t].fit(X, y, std::move(rows), mtry, cfg_.max_depth, cfg_.min_samples_split, rng);
    }
    dim_ = X.cols();
    fitted_ = true;
  }

  Vec score(const Mat& X) const override {
    check_dim(X);
    Vec s = Vec::Zero(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      int votes = 0;
      for (const auto& t : trees_) votes += t.predict_row(X, r);
      s(r) = static_cast<double>(votes) / static_cast<double>(trees_.size());
    }
    return s;
  }

  const std::vector<DecisionTree>& trees() const { return trees_; }

  json to_json() const override {
    json trees = json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"model", "rf"}, {"n_trees", cfg_.n_trees}, {"seed", cfg_.seed}, {"trees", trees}};
  }

 private:
  ForestConfig cfg_;
  std::vector<DecisionTree> trees_;
};

// ---------------------------------------------------------------------------
// Linear SVM, Pegasos primal sub-gradient on standardized features with an
// appended constant column for the bias.

struct SvmConfig {
  double lambda = 1e-4;
  int epochs = 50;
  std::uint64_t seed = 1;
};

class LinearSvm : public Classifier {
 public:
  explicit LinearSvm(SvmConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.lambda > 0)) throw ConfigError("svm: lambda must be > 0");
    if (cfg_.epochs < 1) throw ConfigError("svm: epochs must be >= 1");
  }
  std::string name() const override { return "svm"; }
  double threshold() const override { return 0.0; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    require_two_classes(y, "svm");
    scaler_.fit(X);
    const Mat Z = scaler_.apply(X);
    const auto n = static_cast<std::uint64_t>(Z.rows());
    const Eigen::Index d = Z.cols();
    Vec w = Vec::Zero(d + 1);
    Rng rng(cfg_.seed);
    const double radius = 1.0 / std::sqrt(cfg_.lambda);
    std::uint64_t t = 0;
    for (int e = 0; e < cfg_.epochs; ++e) {
      for (std::uint64_t k = 0; k < n; ++k) {
        ++t;
        const auto i = static_cast<Eigen::Index>(rng.below(n));
        const double yi = y[i] ? 1.0 : -1.0;
        const double eta = 1.0 / (cfg_.lambda * static_cast<double>(t));
        const double margin = yi * (Z.row(i).dot(w.head(d)) + w(d));
        w *= 1.0 - eta * cfg_.lambda;
        if (margin < 1.0) {
          w.head(d) += eta * yi * Z.row(i).transpose();
          w(d) += eta * yi;
        }
        const double norm = w.norm();
        if (norm > radius) w *= radius / norm;
      }
    }
    w_ = w.head(d);
    b_ = w(d);
    dim_ = X.cols();
    fitted_ = true;
  }

  Vec score(const Mat& X) const override {
    check_dim(X);
    return (scaler_.apply(X) * w_).array() + b_;
  }

  json to_json() const override {
    return {{"model", "svm"}, {"w", vec_json(w_)}, {"b", b_}, {"mean", vec_json(scaler_.mean)},
            {"inv_std", vec_json(scaler_.inv_std)}};
  }

 private:
  SvmConfig cfg_;
  ColumnScaler scaler_;
  Vec w_;
  double b_ = 0;
};

// ---------------------------------------------------------------------------
// k nearest neighbours on standardized features.

class Knn : public Classifier {
 public:
  explicit Knn(int k = 5, bool standardize = true) : k_(k), standardize_(standardize) {
    if (k_ < 1) throw ConfigError("knn: k must be >= 1");
  }
  std::string name() const override { return "knn"; }
  double threshold() const override { return 0.5; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    if (k_ > X.rows()) {
      throw ConfigError("knn: k = " + std::to_string(k_) + " exceeds training size " + std::to_string(X.rows()));
    }
    if (standardize_) scaler_.fit(X);
    train_ = standardize_ ? scaler_.apply(X) : X;
    y_ = y;
    dim_ = X.cols();
    fitted_ = true;
  }

  Vec score(const Mat& X) const override {
    check_dim(X);
    const Mat Z = standardize_ ? scaler_.apply(X) : X;
    Vec s(Z.rows());
    std::vector<std::pair<double, int>> dist(train_.rows());
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
      for (Eigen::Index i = 0; i < train_.rows(); ++i) {
        dist[i] = {(train_.row(i) - Z.row(r)).squaredNorm(), static_cast<int>(i)};
      }
      std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
      int pos = 0;
      for (int j = 0; j < k_; ++j) pos += y_[dist[j].second];
      s(r) = static_cast<double>(pos) / k_;
    }
    return s;
  }

  json to_json() const override { return {{"model", "knn"}, {"k", k_}, {"n_train", train_.rows()}}; }

 private:
  int k_;
  bool standardize_;
  ColumnScaler scaler_;
  Mat train_;
  std::vector<int> y_;
};

// ---------------------------------------------------------------------------
// Gaussian discriminants

inline Mat covariance(const Mat& X, const Vec& mean, double denom) {
  const Mat C = X.rowwise() - mean.transpose();
  return (C.transpose() * C) / denom;
}

// Adds ridge * trace/d to the diagonal and factorizes; throws when the
// result is still not positive definite.
inline Eigen::LLT<Mat> ridge_factor(Mat S, double ridge, const std::string& model) {
  const double d = static_cast<double>(S.rows());
  S.diagonal().array() += ridge * S.trace() / d;
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
    throw DataError(model + ": covariance is singular after ridge regularization");
  }
  return llt;
}

struct ClassStats {
  std::array<Mat, 2> rows;
  std::array<Vec, 2> mean;
  std::array<double, 2> prior{};
};

inline ClassStats class_stats(const Mat& X, const std::vector<int>& y) {
  ClassStats s;
  for (int c = 0; c < 2; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    }
    s.rows[c].resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) s.rows[c].row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    s.mean[c] = s.rows[c].colwise().mean().transpose();
    s.prior[c] = static_cast<double>(idx.size()) / static_cast<double>(y.size());
  }
  return s;
}

class Lda : public Classifier {
 public:
  explicit Lda(double ridge = 1e-6) : ridge_(ridge) {}
  std::string name() const override { return "lda"; }
  double threshold() const override { return 0.5; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    require_two_classes(y, "lda");
    const auto s = class_stats(X, y);
    const double n = static_cast<double>(X.rows());
    const double denom = n > 2 ? n - 2 : n;
    Mat S = covariance(s.rows[0], s.mean[0], 1.0) + covariance(s.rows[1], s.mean[1], 1.0);
    S /= denom;
    const auto llt = ridge_factor(S, ridge_, "lda");
    w_ = llt.solve(s.mean[1] - s.mean[0]);
    b_ = -0.5 * (s.mean[1] + s.mean[0]).dot(w_) + std::log(s.prior[1] / s.prior[0]);
    dim_ = X.cols();
    fitted_ = true;
  }

  // Linear discriminant w.x + b; the decision boundary is its zero set.
  Vec discriminant(const Mat& X) const {
    check_dim(X);
    return (X * w_).array() + b_;
  }
  Vec score(const Mat& X) const override { return discriminant(X).unaryExpr([](double v) { return sigmoid(v); }); }

  const Vec& coef() const { return w_; }
  double intercept() const { return b_; }

  json to_json() const override { return {{"model", "lda"}, {"w", vec_json(w_)}, {"b", b_}}; }

 private:
  double ridge_;
  Vec w_;
  double b_ = 0;
};

class Qda : public Classifier {
 public:
  explicit Qda(double ridge = 1e-6) : ridge_(ridge) {}
  std::string name() const override { return "qda"; }
  double threshold() const override { return 0.5; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    require_two_classes(y, "qda");
    const auto s = class_stats(X, y);
    for (int c = 0; c < 2; ++c) {
      const double nc = static_cast<double>(s.rows[c].rows());
      const Mat S = covariance(s.rows[c], s.mean[c], nc > 1 ? nc - 1 : 1.0);
      llt_[c] = ridge_factor(S, ridge_, "qda");
      mean_[c] = s.mean[c];
      logdet_[c] = 2.0 * llt_[c].matrixL().toDenseMatrix().diagonal().array().log().sum();
      logprior_[c] = std::log(s.prior[c]);
    }
    dim_ = X.cols();
    fitted_ = true;
  }

  Vec score(const Mat& X) const override {
    check_dim(X);
    Vec s(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      std::array<double, 2> g{};
      for (int c = 0; c < 2; ++c) {
        const Vec diff = X.row(r).transpose() - mean_[c];
        const Vec z = llt_[c].matrixL().solve(diff);
        g[c] = -0.5 * logdet_[c] - 0.5 * z.squaredNorm() + logprior_[c];
      }
      s(r) = sigmoid(g[1] - g[0]);
    }
    return s;
  }

  json to_json() const override {
    return {{"model", "qda"}, {"mean0", vec_json(mean_[0])}, {"mean1", vec_json(mean_[1])},
            {"logdet", {logdet_[0], logdet_[1]}}};
  }

 private:
  double ridge_;
  std::array<Eigen::LLT<Mat>, 2> llt_;
  std::array<Vec, 2> mean_;
  std::array<double, 2> logdet_{}, logprior_{};
};

// Gaussian naive Bayes. Each feature's class variances get smoothing *
// (overall variance of that feature), which keeps predictions invariant to
// per-feature rescaling.
class GaussianNb : public Classifier {
 public:
  explicit GaussianNb(double smoothing = 1e-9) : smoothing_(smoothing) {}
  std::string name() const override { return "nb"; }
  double threshold() const override { return 0.5; }

  void fit(const Mat& X, const std::vector<int>& y) override {
    require_shape(X, y);
    require_two_classes(y, "nb");
    const auto s = class_stats(X, y);
    const Vec mu = X.colwise().mean().transpose();
    const Vec total = ((X.rowwise() - mu.transpose()).array().square().colwise().mean()).transpose();
    for (int c = 0; c < 2; ++c) {
      mean_[c] = s.mean[c];
      var_[c] = ((s.rows[c].rowwise() - s.mean[c].transpose()).array().square().colwise().mean()).transpose();
      for (Eigen::Index j = 0; j < var_[c].size(); ++j) {
        var_[c](j) = total(j) > 0 ? var_[c](j) + smoothing_ * total(j) : 1.0;
      }
      logprior_[c] = std::log(s.prior[c]);
    }
    dim_ = X.cols();
    fitted_ = true;
  }

  Vec score(const Mat& X) const override {
    check_dim(X);
    Vec s(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      std::array<double, 2> ll{};
      for (int c = 0; c < 2; ++c) {
        ll[c] = logprior_[c];
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
          const double d = X(r, j) - mean_[c](j);
          ll[c] -= 0.5 * (std::log(var_[c](j)) + d * d / var_[c](j));
        }
      }
      s(r) = sigmoid(ll[1] - ll[0]);
    }
    return s;
  }

  json to_json() const override {
    return {{"model", "nb"}, {"mean0", vec_json(mean_[0])}, {"mean1", vec_json(mean_[1])},
            {"var0", vec_json(var_[0])}, {"var1", vec_json(var_[1])}};
  }

 private:
  double smoothing_;
  std::array<Vec, 2> mean_, var_;
  std::array<double, 2> logprior_{};
};

// ---------------------------------------------------------------------------

struct ShallowConfig {
  ForestConfig forest;
  SvmConfig svm;
  int knn_k = 5;
  double ridge = 1e-6;
  double nb_smoothing = 1e-9;

  json to_json() const {
    return {{"rf_trees", forest.n_trees},       {"rf_max_depth", forest.max_depth},
            {"rf_min_samples_split", forest.min_samples_split}, {"svm_lambda", svm.lambda},
            {"svm_epochs", svm.epochs},         {"knn_k", knn_k},
            {"ridge", ridge},                   {"nb_smoothing", nb_smoothing}};
  }

  static ShallowConfig from_json(const json& j) {
    ShallowConfig c;
    c.forest.n_trees = j.value("rf_trees", c.forest.n_trees);
    c.forest.max_depth = j.value("rf_max_depth", c.forest.max_depth);
    c.forest.min_samples_split = j.value("rf_min_samples_split", c.forest.min_samples_split);
    c.svm.lambda = j.value("svm_lambda", c.svm.lambda);
    c.svm.epochs = j.value("svm_epochs", c.svm.epochs);
    c.knn_k = j.value("knn_k", c.knn_k);
    c.ridge = j.value("ridge", c.ridge);
    c.nb_smoothing = j.value("nb_smoothing", c.nb_smoothing);
    if (c.forest.n_trees < 1) throw ConfigError("rf_trees must be >= 1");
    if (!(c.svm.lambda > 0)) throw ConfigError("svm_lambda must be > 0");
    if (c.svm.epochs < 1) throw ConfigError("svm_epochs must be >= 1");
    if (c.knn_k < 1) throw ConfigError("knn_k must be >= 1");
    if (!(c.ridge >= 0)) throw ConfigError("ridge must be >= 0");
    return c;
  }
};

inline const std::vector<std::string>& classifier_names() {
  static const std::vector<std::string> names{"rf", "svm", "knn", "lda", "qda", "nb"};
  return names;
}

inline std::unique_ptr<Classifier> make_classifier(const std::string& name, const ShallowConfig& cfg,
                                                   std::uint64_t seed) {
  if (name == "rf") {
    auto f = cfg.forest;
    f.seed = seed;
    return std::make_unique<RandomForest>(f);
  }
  if (name == "svm") {
    auto s = cfg.svm;
    s.seed = seed;
    return std::make_unique<LinearSvm>(s);
  }
  if (name == "knn") return std::make_unique<Knn>(cfg.knn_k);
  if (name == "lda") return std::make_unique<Lda>(cfg.ridge);
  if (name == "qda") return std::make_unique<Qda>(cfg.ridge);
  if (name == "nb") return std::make_unique<GaussianNb>(cfg.nb_smoothing);
  throw ConfigError("unknown classifier '" + name + "'");
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& y) {
  if (pred.size() != y.size() || y.empty()) throw DataError("accuracy needs equal nonempty vectors");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

}  // namespace speechfuse::shallow
