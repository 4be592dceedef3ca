#include <gtest/gtest.h>

#include "sferic/nnet/checkpoint.hpp"
#include "sferic/nnet/loss.hpp"
#include "sferic/nnet/network.hpp"
#include "support.hpp"

using namespace sferic;
using namespace sferic::nn;

TEST(Gradients, EveryLayerKind) {
  Rng rng(11);
  for (const auto& c : gradcheck::layer_cases())
    for (int i = 0; i < 10; ++i) {
      auto [layer, x] = c.make(rng);
      EXPECT_LT(gradcheck::check_layer(*layer, x, rng, c.mode), 1e-4) << c.kind << " instance " << i;
    }
}

TEST(Gradients, WeightedBce) {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) EXPECT_LT(gradcheck::check_bce(rng, 1 + uniform_index(rng, 16)), 1e-4);
}

TEST(Gradients, SmallVggEndToEnd) {
  NetworkConfig cfg{2, 16, {2, 3}, 2, 3, {4}};
  auto net = build_vgg1d<double>(cfg, 5);
  Rng rng(13);
  // Zero biases put ReLU inputs exactly on the kink wherever a window sees only zeros.
  for (auto& [name, p] : net.parameters())
    if (name.ends_with("bias"))
      for (auto& v : p->values) v = uniform(rng, -0.5, 0.5);
  auto x = gradcheck::random_tensor({4, 2, 16}, rng);
  std::vector<double> labels{1, 0, 0, 1};
  auto loss = [&] {
    auto y = net.forward(x, Mode::train);
    return bce_weighted<double>(y.values, labels, 0.75);
  };
  net.zero_grad();
  auto r = loss();
  net.backward(Tensor<double>({4, 1}, r.grad));
  double worst = 0.0;
  for (auto& [name, p] : net.parameters()) {
    const auto analytic = p->grad;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double keep = p->values[i], h = 1e-5;
      p->values[i] = keep + h;
      const double up = loss().loss;
      p->values[i] = keep - h;
      const double down = loss().loss;
      p->values[i] = keep;
      worst = std::max(worst, gradcheck::rel_err(analytic[i], (up - down) / (2 * h)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Conv1d, MatchesDirectConvolution) {
  Rng rng(3);
  Conv1d<double> conv(2, 3, 5);
  conv.init(rng);
  for (auto& v : conv.bias().values) v = standard_normal(rng);
  auto x = gradcheck::random_tensor({2, 2, 11}, rng);
  auto y = conv.forward(x, Mode::eval);
  ASSERT_EQ(y.shape, (Shape{2, 3, 11}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 3; ++o)
      for (long t = 0; t < 11; ++t) {
        double s = conv.bias().values[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (long k = 0; k < 5; ++k) {
            const long src = t + k - 2;
            if (src < 0 || src >= 11) continue;
            s += conv.weight().values[(o * 2 + c) * 5 + static_cast<std::size_t>(k)] *
                 x.values[(b * 2 + c) * 11 + static_cast<std::size_t>(src)];
          }
        EXPECT_NEAR(y.values[(b * 3 + o) * 11 + static_cast<std::size_t>(t)], s, 1e-12);
      }
}

TEST(Conv1d, RejectsEvenKernel) { EXPECT_THROW(Conv1d<double>(1, 1, 4), ConfigError); }

TEST(MaxPool1d, FirstMaximumWinsTies) {
  MaxPool1d<double> pool;
  Tensor<double> x({1, 1, 5}, std::vector<double>{2, 2, -1, 3, 9});
  auto y = pool.forward(x, Mode::eval);
  EXPECT_EQ(y.values, (std::vector<double>{2, 3}));
  auto dx = pool.backward(Tensor<double>({1, 1, 2}, std::vector<double>{1, 1}));
  EXPECT_EQ(dx.values, (std::vector<double>{1, 0, 0, 1, 0}));
}

TEST(Layers, BackwardBeforeForwardThrows) {
  MaxPool1d<double> pool;
  EXPECT_THROW(pool.backward(Tensor<double>({1, 1, 1})), Error);
  BatchNorm1d<double> bn(2);
  EXPECT_THROW(bn.backward(Tensor<double>({1, 2})), Error);
}

TEST(BatchNorm1d, TrainNormalizesAndTracksRunningStats) {
  BatchNorm1d<double> bn(1);
  Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 6});
  auto y = bn.forward(x, Mode::train);
  double m = 0, v = 0;
  for (double a : y.values) m += a;
  for (double a : y.values) v += a * a;
  EXPECT_NEAR(m / 4, 0.0, 1e-12);
  EXPECT_NEAR(v / 4, 3.5 / (3.5 + 1e-5), 1e-9);  // population variance of x is 3.5
  auto buffers = bn.buffers();
  EXPECT_NEAR(buffers[0].second->values[0], 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(buffers[1].second->values[0], 0.9 + 0.1 * (14.0 / 3.0), 1e-12);  // unbiased 14/3
  auto e = bn.forward(Tensor<double>({1, 1}, std::vector<double>{0.3}), Mode::eval);
  EXPECT_NEAR(e.values[0], (0.3 - 0.3) / std::sqrt(0.9 + 1.4 + 1e-5), 1e-12);
}

TEST(Loss, MatchesDirectFormula) {
  std::vector<double> logits{0.0, 2.0, -1.5}, labels{1, 0, 1};
  const double beta = 0.75;
  auto r = bce_weighted<double>(logits, labels, beta);
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double expect = -beta * std::log(sig(0.0)) - (1 - beta) * std::log(1 - sig(2.0)) - beta * std::log(sig(-1.5));
  EXPECT_NEAR(r.loss, expect, 1e-12);
  EXPECT_NEAR(r.grad[0], -beta * (1 - sig(0.0)), 1e-12);
  EXPECT_NEAR(r.grad[1], (1 - beta) * sig(2.0), 1e-12);
}

TEST(Loss, StableForLargeLogits) {
  std::vector<double> logits{800.0, -800.0}, labels{0, 1};
  auto r = bce_weighted<double>(logits, labels, 0.5);
  EXPECT_NEAR(r.loss, 0.5 * 800 + 0.5 * 800, 1e-9);
  EXPECT_TRUE(std::isfinite(r.grad[0]) && std::isfinite(r.grad[1]));
}

TEST(Loss, RejectsBetaOutsideUnitInterval) {
  std::vector<double> l{0.0}, y{1.0};
  EXPECT_THROW(bce_weighted<double>(l, y, 0.0), ConfigError);
  EXPECT_THROW(bce_weighted<double>(l, y, 1.0), ConfigError);
  std::vector<double> bad{0.5};
  EXPECT_THROW(bce_weighted<double>(l, bad, 0.5), DataError);
}

TEST(Vgg, ShapesAndNames) {
  NetworkConfig cfg;
  cfg.block_widths = {4, 4, 8, 8, 8};
  cfg.fc_widths = {16, 8};
  auto model = Classifier<float>::create(cfg, 1);
  EXPECT_EQ(cfg.pooled_length(), 7u);
  Rng rng(1);
  Tensor<float> x({3, 4, 240});
  for (auto& v : x.values) v = static_cast<float>(standard_normal(rng));
  EXPECT_EQ(model.logits(x, Mode::eval).size(), 3u);
  auto params = model.net.parameters();
  EXPECT_EQ(params.front().first, "block1.conv1.weight");
  EXPECT_EQ(params.back().first, "out.bias");
  std::size_t count = 0;
  for (auto& [n, _] : params) count += n.starts_with("block5.conv");
  EXPECT_EQ(count, 8u);
  EXPECT_THROW(model.logits(Tensor<float>({1, 4, 100}), Mode::eval), DataError);
}

TEST(Vgg, SameSeedSameWeights) {
  NetworkConfig cfg{4, 240, {2, 2, 2, 2, 2}, 1, 3, {4}};
  auto a = build_vgg1d<double>(cfg, 9), b = build_vgg1d<double>(cfg, 9), c = build_vgg1d<double>(cfg, 10);
  EXPECT_EQ(a.state().at("block1.conv1.weight").values, b.state().at("block1.conv1.weight").values);
  EXPECT_NE(a.state().at("block1.conv1.weight").values, c.state().at("block1.conv1.weight").values);
}

TEST(Sequential, LoadStateValidates) {
  NetworkConfig cfg{4, 240, {2, 2, 2, 2, 2}, 1, 3, {4}};
  auto net = build_vgg1d<double>(cfg, 1);
  auto s = net.state();
  s.erase("fc1.bn.running_var");
  EXPECT_THROW(net.load_state(s), DataError);
  s = net.state();
  s.at("out.weight") = Tensor<double>({2, 2});
  EXPECT_THROW(net.load_state(s), DataError);
  s = net.state();
  s["extra"] = Tensor<double>({1});
  EXPECT_NO_THROW(net.load_state(s));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  NetworkConfig cfg{4, 240, {2, 3, 2, 2, 2}, 2, 3, {5, 3}};
  auto model = Classifier<float>::create(cfg, 4);
  Checkpoint c;
  c.config = cfg;
  c.tensors = model.net.state();
  c.tensors["adam.m.out.bias"] = Tensor<double>({1}, std::vector<double>{-0.0});
  c.epoch = 17;
  c.learning_rate = 0.0005;
  c.adam_step = 680;
  c.beta = 0.7421875;
  c.val_accuracy = 0.93125;
  const auto bytes = encode_checkpoint(c);
  const auto d = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(d), bytes);
  EXPECT_EQ(d.config, cfg);
  EXPECT_EQ(d.epoch, 17u);
  EXPECT_EQ(d.adam_step, 680u);
  EXPECT_EQ(d.beta, c.beta);
  EXPECT_EQ(d.tensors.at("block2.conv1.weight").values, c.tensors.at("block2.conv1.weight").values);

  auto restored = restore_classifier<float>(d);
  Rng rng(2);
  Tensor<float> x({2, 4, 240});
  for (auto& v : x.values) v = static_cast<float>(standard_normal(rng));
  EXPECT_EQ(restored.logits(x, Mode::eval), model.logits(x, Mode::eval));
}

TEST(Checkpoint, RejectsUnknownVersionAndTrailingBytes) {
  Checkpoint c;
  c.config = NetworkConfig{4, 240, {2, 2, 2, 2, 2}, 1, 3, {}};
  c.tensors = build_vgg1d<double>(c.config, 1).state();
  auto bytes = encode_checkpoint(c);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
  auto v2 = bytes;
  v2.replace(0, 8, "SFCKPT 2");
  EXPECT_THROW(decode_checkpoint(v2), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), DataError);
  EXPECT_THROW(decode_checkpoint("garbage"), DataError);
}
