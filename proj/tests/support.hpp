#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sferic/nnet/layers.hpp"
#include "sferic/nnet/loss.hpp"
#include "sferic/rng.hpp"

namespace sferic::gradcheck {

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline nn::Tensor<double> random_tensor(const nn::Shape& s, Rng& rng, double scale = 1.0) {
  nn::Tensor<double> t(s);
  for (auto& v : t.values) v = scale * standard_normal(rng);
  return t;
}

/// Central-difference check of a layer under L = sum(g * layer(x)) with a
/// random upstream g. Returns the largest relative error over every input
/// and parameter entry.
inline double check_layer(nn::Layer<double>& layer, nn::Tensor<double> x, Rng& rng,
                          nn::Mode mode = nn::Mode::train, double h = 1e-5) {
  auto y = layer.forward(x, mode);
  const auto g = random_tensor(y.shape, rng);
  auto loss = [&](const nn::Tensor<double>& in) {
    auto out = layer.forward(in, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += g.values[i] * out.values[i];
    return s;
  };
  for (auto& [_, p] : layer.parameters()) p->zero_grad();
  layer.forward(x, mode);
  const auto dx = layer.backward(g);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.values[i];
    x.values[i] = keep + h;
    const double up = loss(x);
    x.values[i] = keep - h;
    const double down = loss(x);
    x.values[i] = keep;
    worst = std::max(worst, rel_err(dx.values[i], (up - down) / (2 * h)));
  }
  for (auto& [_, p] : layer.parameters()) {
    const auto analytic = p->grad;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double keep = p->values[i];
      p->values[i] = keep + h;
      const double up = loss(x);
      p->values[i] = keep - h;
      const double down = loss(x);
      p->values[i] = keep;
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

inline double check_bce(Rng& rng, std::size_t batch, double h = 1e-6) {
  std::vector<double> logits(batch), labels(batch);
  for (auto& v : logits) v = 3.0 * standard_normal(rng);
  for (auto& v : labels) v = uniform01(rng) < 0.4 ? 1.0 : 0.0;
  const double beta = uniform(rng, 0.05, 0.95);
  const auto r = nn::bce_weighted<double>(logits, labels, beta);
  double worst = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double keep = logits[i];
    logits[i] = keep + h;
    const double up = nn::bce_weighted<double>(logits, labels, beta).loss;
    logits[i] = keep - h;
    const double down = nn::bce_weighted<double>(logits, labels, beta).loss;
    logits[i] = keep;
    worst = std::max(worst, rel_err(r.grad[i], (up - down) / (2 * h)));
  }
  return worst;
}

/// Layer factories for the randomized instances: each returns a freshly
/// initialized layer and a matching input.
struct LayerCase {
  std::string kind;
  std::function<std::pair<std::unique_ptr<nn::Layer<double>>, nn::Tensor<double>>(Rng&)> make;
  nn::Mode mode = nn::Mode::train;
};

inline std::vector<LayerCase> layer_cases() {
  auto dims = [](Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); };
  return {
      {"conv1d",
       [dims](Rng& rng) {
         const std::size_t cin = dims(rng, 1, 3), cout = dims(rng, 1, 3), k = 2 * dims(rng, 0, 2) + 1;
         auto l = std::make_unique<nn::Conv1d<double>>(cin, cout, k);
         l->init(rng);
         for (auto& v : l->bias().values) v = standard_normal(rng);
         auto x = random_tensor({dims(rng, 1, 3), cin, dims(rng, 4, 9)}, rng);
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::move(l)), x};
       }},
      {"relu",
       [dims](Rng& rng) {
         auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 4, 9)}, rng);
         for (auto& v : x.values)
           if (std::abs(v) < 1e-3) v += 0.01;  // keep away from the kink
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::make_unique<nn::ReLU<double>>()), x};
       }},
      {"maxpool1d",
       [dims](Rng& rng) {
         auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), 2 * dims(rng, 2, 5)}, rng);
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::make_unique<nn::MaxPool1d<double>>()), x};
       }},
      {"linear",
       [dims](Rng& rng) {
         const std::size_t in = dims(rng, 1, 12), out = dims(rng, 1, 5);
         auto l = std::make_unique<nn::Linear<double>>(in, out);
         l->init(rng);
         for (auto& v : l->bias().values) v = standard_normal(rng);
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::move(l)), random_tensor({dims(rng, 1, 4), in}, rng)};
       }},
      {"batchnorm1d",
       [dims](Rng& rng) {
         const std::size_t f = dims(rng, 1, 5);
         auto l = std::make_unique<nn::BatchNorm1d<double>>(f);
         for (auto& v : l->gamma().values) v = uniform(rng, 0.5, 1.5);
         for (auto& v : l->beta().values) v = standard_normal(rng);
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::move(l)), random_tensor({dims(rng, 3, 6), f}, rng)};
       }},
      {"batchnorm1d (eval)",
       [dims](Rng& rng) {
         const std::size_t f = dims(rng, 1, 5);
         auto l = std::make_unique<nn::BatchNorm1d<double>>(f);
         for (auto& v : l->gamma().values) v = uniform(rng, 0.5, 1.5);
         for (auto& v : l->beta().values) v = standard_normal(rng);
         return std::pair{std::unique_ptr<nn::Layer<double>>(std::move(l)), random_tensor({dims(rng, 1, 6), f}, rng)};
       },
       nn::Mode::eval},
  };
}

}  // namespace sferic::gradcheck
