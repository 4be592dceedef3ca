#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sferic/error.hpp"

namespace sferic::nn {

template <class T>
T sigmoid(T x) noexcept {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// log(1 + e^x) without overflow.
template <class T>
T softplus(T x) noexcept {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
struct LossResult {
  T loss{0};
  T positive_term{0};  // sum over y=1 of -log O(x)
  T negative_term{0};  // sum over y=0 of -log(1 - O(x))
  std::vector<T> grad;  // dL/dlogit
};

/// Class-weighted binary cross-entropy summed over the batch:
/// beta * sum_{y=1} softplus(-x) + (1 - beta) * sum_{y=0} softplus(x).
template <class T>
LossResult<T> bce_weighted(std::span<const T> logits, std::span<const T> labels, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("loss.beta must lie in (0, 1)");
  if (logits.size() != labels.size())
    throw DataError("bce: " + std::to_string(logits.size()) + " logits but " + std::to_string(labels.size()) + " labels");
  LossResult<T> r;
  r.grad.resize(logits.size());
  const T b = static_cast<T>(beta), nb = static_cast<T>(1.0 - beta);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T x = logits[i];
    if (labels[i] != T{0} && labels[i] != T{1}) throw DataError("bce: labels must be 0 or 1");
    if (labels[i] == T{1}) {
      r.positive_term += softplus(-x);
      r.grad[i] = -b * sigmoid(-x);
    } else {
      r.negative_term += softplus(x);
      r.grad[i] = nb * sigmoid(x);
    }
  }
  r.loss = b * r.positive_term + nb * r.negative_term;
  return r;
}

}  // namespace sferic::nn
