#include "oracles.hpp"
#include "speechfuse/nn.hpp"

#include <gtest/gtest.h>

using namespace speechfuse;
using namespace speechfuse::nn;

namespace {

SequenceNet small_lstm_net(int in, int hidden, int penult, int out, HeadKind head = HeadKind::softmax) {
  SequenceNetConfig c;
  c.input_dim = in;
  c.hidden_dim = hidden;
  c.penultimate_dim = penult;
  c.n_outputs = out;
  c.head = head;
  SequenceNet net(c);
  net.init(7);
  return net;
}

}  // namespace

TEST(Lstm, ZeroParamsGiveZeroState) {
  Lstm l("l", 3, 4);
  Rng rng(1);
  const auto c = l.forward(oracle::random_seq(rng, 5, 3));
  EXPECT_EQ(c.final_h().norm(), 0.0);
}

TEST(Lstm, EmptySequenceThrows) {
  Lstm l("l", 3, 4);
  EXPECT_THROW(l.forward({}), DataError);
}

TEST(Lstm, WrongInputDimThrows) {
  Lstm l("l", 3, 4);
  EXPECT_THROW(l.forward({Vec::Zero(2)}), DataError);
}

TEST(Lstm, MatchesScalarRecurrence) {
  Rng rng(3);
  Lstm l("l", 5, 4);
  l.init(rng);
  const auto seq = oracle::random_seq(rng, 3, 5);
  const auto c = l.forward(seq);
  const auto ref = oracle::lstm(l, seq);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(c.h(k, t + 1), ref[t][k], 1e-14);
}

TEST(Lstm, SingleStepEqualsCellOutput) {
  Rng rng(4);
  Lstm l("l", 2, 3);
  l.init(rng);
  const Vec x = oracle::random_vec(rng, 2);
  const auto full = l.forward({x});
  const auto ref = oracle::lstm(l, {x});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(full.final_h()(k), ref[0][k], 1e-15);
}

TEST(Lstm, ForgetBiasInitialisedToOne) {
  Rng rng(5);
  Lstm l("l", 2, 3);
  l.init(rng);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(l.b.value(3 + k, 0), 1.0);
}

TEST(Conv2d, IdentityKernel) {
  Conv2d c("c", 1, 1, 1, 1);
  c.K.value(0, 0) = 1.0;
  c.b.value(0, 0) = -0.25;
  Mat img(3, 4);
  img << 0.1, 0.5, -1, 2, 0.3, 0.2, 0.9, -0.4, 1, 1, 1, 1;
  const auto out = c.forward({img});
  for (int r = 0; r < 3; ++r)
    for (int q = 0; q < 4; ++q) EXPECT_DOUBLE_EQ(out.out[0](r, q), std::max(0.0, img(r, q) - 0.25));
}

TEST(Conv2d, OnesKernelOnConstantImage) {
  Conv2d c("c", 1, 1, 2, 2);
  c.K.value.setOnes();
  c.b.value(0, 0) = 0.5;
  const Mat img = Mat::Constant(4, 5, 1.5);
  const auto out = c.forward({img});
  ASSERT_EQ(out.out[0].rows(), 3);
  ASSERT_EQ(out.out[0].cols(), 4);
  EXPECT_TRUE((out.out[0].array() == 6.5).all());
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(9);
  for (int stride : {1, 2}) {
    Conv2d c("c", 1, 3, 3, 3, stride);
    c.init(rng);
    Mat img(9, 8);
    for (int i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(-1, 1);
    const auto out = c.forward({img});
    const auto ref = oracle::conv(c, img);
    for (int o = 0; o < 3; ++o) EXPECT_LT((out.out[o] - ref[o]).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Conv2d, ImageSmallerThanKernelThrows) {
  Conv2d c("c", 1, 1, 3, 3);
  EXPECT_THROW(c.forward({Mat::Zero(2, 5)}), DataError);
}

TEST(Heads, SoftmaxSumsToOneAndSigmoidInRange) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec z = oracle::random_vec(rng, 1 + static_cast<int>(rng.below(8)), 30.0);
    EXPECT_NEAR(softmax(z).sum(), 1.0, 1e-12);
    const Vec s = nn::sigmoid(oracle::random_vec(rng, 4, 20.0));
    EXPECT_TRUE((s.array() > 0).all() && (s.array() < 1).all());
  }
}

TEST(Backward, OutputBiasStationaryAtMatchingTarget) {
  auto net = small_lstm_net(3, 4, 5, 3);
  Rng rng(12);
  SeqInput in{oracle::random_seq(rng, 3, 3), {}, {}};
  const Vec target = net.predict(in);
  zero_grads(net.params());
  net.loss_and_backward(in, target);
  EXPECT_LT(net.head_layer().b.grad.norm(), 1e-15);
}

TEST(Backward, PerturbationSignMatchesGradient) {
  auto net = small_lstm_net(3, 4, 5, 3);
  Rng rng(13);
  SeqInput in{oracle::random_seq(rng, 3, 3), {}, {}};
  const Vec y = one_hot(1, 3);
  zero_grads(net.params());
  net.loss_and_backward(in, y);
  double& w = net.penultimate_layer().W.value(0, 0);
  const double g = net.penultimate_layer().W.grad(0, 0);
  const double base = net.loss(in, y);
  w -= 1e-4 * (g > 0 ? 1 : -1);
  EXPECT_LT(net.loss(in, y), base);
}

TEST(GradCheck, PlainLstmSoftmax) {
  auto net = small_lstm_net(3, 4, 5, 3);
  Rng rng(14);
  std::vector<SeqInput> xs;
  std::vector<Vec> ys;
  for (int i = 0; i < 3; ++i) {
    xs.push_back({oracle::random_seq(rng, 3, 3), {}, {}});
    ys.push_back(one_hot(i % 3, 3));
  }
  const auto rep = grad_check(net, xs, ys, 1e-5, 1e-4);
  EXPECT_EQ(rep.rows.size(), net.params().size());
  for (const auto& r : rep.rows) EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  EXPECT_TRUE(rep.passed());
}

TEST(GradCheck, SigmoidHeadWithSideInputAndAttention) {
  SequenceNetConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.pooling = Pooling::attention;
  c.side_dim = 2;
  c.penultimate_dim = 5;
  c.n_outputs = 4;
  c.head = HeadKind::sigmoid;
  SequenceNet net(c);
  net.init(15);
  Rng rng(16);
  std::vector<SeqInput> xs;
  std::vector<Vec> ys;
  for (int i = 0; i < 2; ++i) {
    xs.push_back({oracle::random_seq(rng, 4, 3), {}, oracle::random_vec(rng, 2)});
    Vec y(4);
    y << 1, 0, 0.5, 1;
    ys.push_back(y);
  }
  EXPECT_TRUE(grad_check(net, xs, ys, 1e-5, 1e-4).passed());
}

TEST(GradCheck, CnnLstm) {
  SequenceNetConfig c;
  c.hidden_dim = 4;
  c.penultimate_dim = 4;
  c.n_outputs = 3;
  c.conv = ConvSpec{2, 3, 3, 1, 6};
  SequenceNet net(c);
  net.init(17);
  Rng rng(18);
  Mat img(7, 6);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform(-1, 1);
  std::vector<SeqInput> xs{{{}, img, {}}};
  std::vector<Vec> ys{one_hot(2, 3)};
  EXPECT_TRUE(grad_check(net, xs, ys, 1e-5, 1e-4).passed());
}

TEST(GradCheck, FailsWhenGradientDoubled) {
  auto net = small_lstm_net(3, 4, 5, 3);
  Rng rng(19);
  std::vector<SeqInput> xs{{oracle::random_seq(rng, 3, 3), {}, {}}};
  std::vector<Vec> ys{one_hot(0, 3)};
  EXPECT_FALSE(grad_check(net, xs, ys, 1e-5, 1e-4, 2.0).passed());
}

TEST(Training, ZeroLearningRateLeavesParamsUnchanged) {
  auto net = small_lstm_net(2, 3, 3, 2);
  const auto before = net.to_json();
  Rng rng(20);
  std::vector<SeqInput> xs;
  std::vector<Vec> ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back({oracle::random_seq(rng, 3, 2), {}, {}});
    ys.push_back(one_hot(i % 2, 2));
  }
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    tc.optimizer = opt;
    train(net, xs, ys, tc);
    auto after = net.to_json();
    after.erase("trained");
    auto b = before;
    b.erase("trained");
    EXPECT_EQ(after, b);
  }
}

TEST(Training, SeparableToySetAndDeterminism) {
  Rng rng(21);
  std::vector<SeqInput> xs;
  std::vector<Vec> ys;
  for (int i = 0; i < 60; ++i) {
    const int k = i % 2;
    auto seq = oracle::random_seq(rng, 3, 2, 0.3);
    for (auto& v : seq) v(0) += k ? 1.0 : -1.0;
    xs.push_back({seq, {}, {}});
    ys.push_back(one_hot(k, 2));
  }
  TrainConfig tc;
  tc.learning_rate = 0.02;
  tc.epochs = 200;
  auto a = small_lstm_net(2, 4, 4, 2);
  auto b = small_lstm_net(2, 4, 4, 2);
  const auto ra = train(a, xs, ys, tc);
  train(b, xs, ys, tc);
  EXPECT_EQ(a.to_json(), b.to_json());
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Eigen::Index k;
    a.predict(xs[i]).maxCoeff(&k);
    correct += ys[i](k) == 1.0;
  }
  EXPECT_GE(correct / static_cast<double>(xs.size()), 0.99);
  EXPECT_LT(ra.loss_curve.back(), ra.loss_curve.front());
}

TEST(Training, DivergenceReportsEpoch) {
  auto net = small_lstm_net(2, 3, 3, 2);
  std::vector<SeqInput> xs{{{Vec::Constant(2, std::nan(""))}, {}, {}}};
  std::vector<Vec> ys{one_hot(0, 2)};
  TrainConfig tc;
  try {
    train(net, xs, ys, tc);
    FAIL() << "expected divergence";
  } catch (const RuntimeFailure& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(Training, ClippingBoundsGlobalNorm) {
  Param p("p", 3, 3);
  p.grad.setConstant(10.0);
  ParamRefs ps{&p};
  clip_gradients(ps, 1.5);
  EXPECT_LE(global_grad_norm(ps), 1.5 + 1e-12);
}

TEST(Penultimate, IdentityDenseEqualsFinalState) {
  SequenceNetConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.penultimate_dim = 4;
  c.penultimate_activation = Activation::identity;
  c.n_outputs = 2;
  SequenceNet net(c);
  net.init(22);
  net.penultimate_layer().W.value = Mat::Identity(4, 4);
  net.penultimate_layer().b.value.setZero();
  Rng rng(23);
  SeqInput in{oracle::random_seq(rng, 4, 3), {}, {}};
  const Vec p1 = net.penultimate(in);
  const Vec p2 = net.penultimate(in);
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(p1, net.lstm().forward(in.steps).final_h());
  EXPECT_EQ(p1.size(), 4);
}

TEST(Serialization, JsonRoundTrip) {
  SequenceNetConfig c;
  c.hidden_dim = 3;
  c.penultimate_dim = 2;
  c.n_outputs = 4;
  c.conv = ConvSpec{2, 2, 2, 1, 5};
  SequenceNet net(c);
  net.init(24);
  const auto j = net.to_json();
  auto back = SequenceNet::from_json(json::parse(j.dump()));
  EXPECT_EQ(back.to_json(), j);
}

TEST(Serialization, RejectsWrongShape) {
  auto net = small_lstm_net(2, 3, 3, 2);
  auto j = net.to_json();
  j["tensors"]["head.W"]["rows"] = 5;
  EXPECT_THROW(SequenceNet::from_json(j), DataError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  Rng rng(25);
  std::vector<Vec> rows;
  for (int i = 0; i < 50; ++i) rows.push_back(oracle::random_vec(rng, 3, 5.0) + Vec::Constant(3, 2.0));
  Standardizer s;
  s.fit(rows);
  Vec m = Vec::Zero(3), v = Vec::Zero(3);
  for (const auto& r : rows) m += s.apply(r);
  m /= 50;
  for (const auto& r : rows) v += (s.apply(r) - m).cwiseAbs2();
  v /= 50;
  EXPECT_LT(m.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((v.array() - 1.0).abs().maxCoeff(), 1e-12);
}
