#include "speechfuse/shallow.hpp"

#include <gtest/gtest.h>

using namespace speechfuse;
using namespace speechfuse::shallow;

namespace {

// Two isotropic blobs, centres (0,0) and (5,0) scaled into d dims.
Dataset blobs(int n, int d, double sigma, double distance, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.X.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    ds.y.push_back(c);
    for (int j = 0; j < d; ++j) ds.X(i, j) = sigma * rng.normal() + (j == 0 && c ? distance : 0.0);
  }
  return ds;
}

ShallowConfig quick_config() {
  ShallowConfig c;
  c.forest.n_trees = 30;
  return c;
}

}  // namespace

TEST(Shallow, AllSixSeparateBlobs) {
  const auto train = blobs(200, 2, 0.1, 5.0, 1);
  const auto test = blobs(200, 2, 0.1, 5.0, 2);
  for (const auto& name : classifier_names()) {
    auto m = make_classifier(name, ShallowConfig{}, 3);
    m->fit(train.X, train.y);
    EXPECT_GE(accuracy(m->predict(test.X), test.y), 0.99) << name;
  }
}

TEST(Shallow, LdaBoundaryAtAnalyticMidpoint) {
  // Mirror-symmetric classes: x in class 1 iff -x in class 0.
  Rng rng(4);
  Mat X(200, 3);
  std::vector<int> y;
  const Vec centre = (Vec(3) << 1.0, -0.5, 2.0).finished();
  for (int i = 0; i < 100; ++i) {
    Vec p(3);
    for (int j = 0; j < 3; ++j) p(j) = rng.normal();
    p += centre;
    X.row(2 * i) = p.transpose();
    X.row(2 * i + 1) = -p.transpose();
    y.push_back(1);
    y.push_back(0);
  }
  Lda lda;
  lda.fit(X, y);
  // Independent analytic hyperplane: w = S^-1 (mu1 - mu0) through the midpoint.
  Vec mu1 = Vec::Zero(3);
  for (int i = 0; i < 200; i += 2) mu1 += X.row(i).transpose();
  mu1 /= 100;
  Mat S = Mat::Zero(3, 3);
  for (int i = 0; i < 200; ++i) {
    const Vec m = y[i] ? mu1 : Vec(-mu1);
    S += (X.row(i).transpose() - m) * (X.row(i).transpose() - m).transpose();
  }
  S /= 198.0;
  S.diagonal().array() += 1e-6 * S.trace() / 3.0;
  const Vec w = S.inverse() * (2.0 * mu1);
  EXPECT_LT(std::abs(lda.intercept()) / lda.coef().norm(), 1e-6);
  EXPECT_LT((lda.coef().normalized() - w.normalized()).norm(), 1e-6);
}

TEST(Shallow, KnnOneNeighbourMemorises) {
  const auto ds = blobs(60, 4, 1.0, 0.5, 5);
  Knn knn(1);
  knn.fit(ds.X, ds.y);
  EXPECT_EQ(accuracy(knn.predict(ds.X), ds.y), 1.0);
}

TEST(Shallow, KnnRejectsKAboveN) {
  const auto ds = blobs(4, 2, 1.0, 1.0, 6);
  Knn knn(5);
  EXPECT_THROW(knn.fit(ds.X, ds.y), ConfigError);
}

TEST(Shallow, NbSymmetricPointScoresHalf) {
  Mat X(4, 2);
  X << -1, 0, -1.2, 0.5, 1, 0, 1.2, 0.5;
  GaussianNb nb;
  nb.fit(X, {0, 0, 1, 1});
  Mat q(1, 2);
  q << 0.0, 0.25;
  EXPECT_NEAR(nb.score(q)(0), 0.5, 1e-15);
}

TEST(Shallow, RfScoresAreTreeVoteFractions) {
  const auto ds = blobs(80, 3, 1.0, 1.0, 7);
  RandomForest rf({25, 0, 2, 0, 8});
  rf.fit(ds.X, ds.y);
  const Vec s = rf.score(ds.X);
  for (Eigen::Index r = 0; r < ds.X.rows(); ++r) {
    int votes = 0;
    for (const auto& t : rf.trees()) votes += t.predict_row(ds.X, r);
    EXPECT_EQ(s(r), votes / 25.0);
  }
}

TEST(Shallow, KnnScoresMatchBruteForce) {
  const auto train = blobs(40, 2, 1.0, 1.0, 9);
  const auto test = blobs(10, 2, 1.0, 1.0, 10);
  Knn knn(3, false);
  knn.fit(train.X, train.y);
  const Vec s = knn.score(test.X);
  for (int r = 0; r < 10; ++r) {
    std::vector<std::pair<double, int>> d;
    for (int i = 0; i < 40; ++i) d.push_back({(train.X.row(i) - test.X.row(r)).norm(), train.y[i]});
    std::sort(d.begin(), d.end());
    EXPECT_EQ(s(r), (d[0].second + d[1].second + d[2].second) / 3.0);
  }
}

TEST(Shallow, LdaAffineInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto train = blobs(100, 3, 1.0, 1.5, 100 + trial);
    const auto test = blobs(50, 3, 1.0, 1.5, 200 + trial);
    Mat A(3, 3);
    for (int i = 0; i < 9; ++i) A.data()[i] = rng.uniform(-1, 1);
    A += 2.0 * Mat::Identity(3, 3);
    const Vec shift = Vec::Constant(3, rng.uniform(-3, 3));
    auto map = [&](const Mat& X) { return Mat((X * A.transpose()).rowwise() + shift.transpose()); };
    Lda a, b;
    a.fit(train.X, train.y);
    b.fit(map(train.X), train.y);
    EXPECT_EQ(a.predict(test.X), b.predict(map(test.X)));
  }
}

TEST(Shallow, NbAndQdaScaleInvariance) {
  for (int trial = 0; trial < 20; ++trial) {
    const auto train = blobs(100, 3, 1.0, 1.5, 300 + trial);
    const auto test = blobs(50, 3, 1.0, 1.5, 400 + trial);
    const Vec scale = (Vec(3) << 1000.0, 0.001, 7.0).finished();
    auto map = [&](const Mat& X) { return Mat(X.array().rowwise() * scale.transpose().array()); };
    GaussianNb n1, n2;
    n1.fit(train.X, train.y);
    n2.fit(map(train.X), train.y);
    EXPECT_EQ(n1.predict(test.X), n2.predict(map(test.X)));
    Qda q1(0.0), q2(0.0);
    q1.fit(train.X, train.y);
    q2.fit(map(train.X), train.y);
    EXPECT_EQ(q1.predict(test.X), q2.predict(map(test.X)));
  }
}

TEST(Shallow, ForestBeatsSingleTreeOnAverage) {
  double forest = 0, tree = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto ds = blobs(120, 4, 1.0, 1.0, 500 + seed);
    RandomForest rf({25, 0, 2, 0, static_cast<std::uint64_t>(seed)});
    rf.fit(ds.X, ds.y);
    forest += accuracy(rf.predict(ds.X), ds.y);
    std::vector<int> pred;
    for (Eigen::Index r = 0; r < ds.X.rows(); ++r) pred.push_back(rf.trees()[0].predict_row(ds.X, r));
    tree += accuracy(pred, ds.y);
  }
  EXPECT_GE(forest, tree);
}

TEST(Shallow, DeterministicGivenSeed) {
  const auto ds = blobs(60, 3, 1.0, 1.0, 12);
  for (const auto& name : classifier_names()) {
    auto a = make_classifier(name, quick_config(), 13);
    auto b = make_classifier(name, quick_config(), 13);
    a->fit(ds.X, ds.y);
    b->fit(ds.X, ds.y);
    EXPECT_EQ(a->score(ds.X), b->score(ds.X)) << name;
    EXPECT_EQ(a->to_json(), b->to_json()) << name;
  }
}

TEST(Shallow, ErrorsReported) {
  const auto ds = blobs(20, 2, 1.0, 1.0, 14);
  for (const auto& name : classifier_names()) {
    auto m = make_classifier(name, quick_config(), 1);
    EXPECT_THROW(m->score(ds.X), RuntimeFailure) << name;
    if (name != "knn") {
      EXPECT_THROW(m->fit(ds.X, std::vector<int>(20, 1)), DataError) << name;
    }
  }
  Mat X = Mat::Zero(6, 2);
  Lda lda;
  EXPECT_THROW(lda.fit(X, {0, 1, 0, 1, 0, 1}), DataError);
  EXPECT_THROW(make_classifier("tree", quick_config(), 1), ConfigError);
}

TEST(Shallow, SvmScoreIsSignedMargin) {
  const auto train = blobs(100, 2, 0.3, 3.0, 15);
  LinearSvm svm;
  svm.fit(train.X, train.y);
  const Vec s = svm.score(train.X);
  const auto pred = svm.predict(train.X);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(pred[i], s(i) > 0 ? 1 : 0);
  EXPECT_GE(accuracy(pred, train.y), 0.99);
}
