#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/nnet/tensor.hpp"
#include "sferic/rng.hpp"

namespace sferic::nn {

enum class Mode { train, eval };

template <class T>
using NamedTensor = std::pair<std::string, Tensor<T>*>;

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Returns dL/dx and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<NamedTensor<T>> parameters() { return {}; }
  virtual std::vector<NamedTensor<T>> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const { return in; }
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_forward(bool cached, const char* what) {
  if (!cached) throw Error(std::string(what) + ": backward called before forward");
}

template <class T>
void kaiming_uniform(std::vector<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<T>(uniform(rng, -bound, bound));
}

}  // namespace detail

/// 1-D convolution with "same" zero padding, odd kernel, stride 1.
/// Input B x Cin x L, weight Cout x Cin x K.
template <class T>
class Conv1d final : public Layer<T> {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3)
      : cin_(in_channels), cout_(out_channels), k_(kernel), weight_(Shape{out_channels, in_channels, kernel}),
        bias_(Shape{out_channels}) {
    if (kernel % 2 == 0 || kernel == 0) throw ConfigError("network.kernel_size must be odd");
  }

  void init(Rng& rng) {
    detail::kaiming_uniform(weight_.values, cin_ * k_, rng);
    std::fill(bias_.values.begin(), bias_.values.end(), T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    check(x.shape);
    input_ = x;
    const std::size_t b = x.dim(0), len = x.dim(2);
    Tensor<T> y(Shape{b, cout_, len});
    detail::RowMat<T> col(cin_ * k_, len);
    detail::CMapMat<T> w(weight_.data(), cout_, cin_ * k_);
    for (std::size_t s = 0; s < b; ++s) {
      im2col(x.data() + s * cin_ * len, len, col);
      detail::MapMat<T> out(y.data() + s * cout_ * len, cout_, len);
      out.noalias() = w * col;
      for (std::size_t o = 0; o < cout_; ++o) out.row(o).array() += bias_.values[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    detail::require_forward(!input_.values.empty(), "conv1d");
    weight_.ensure_grad();
    bias_.ensure_grad();
    const std::size_t b = input_.dim(0), len = input_.dim(2);
    Tensor<T> dx(input_.shape);
    detail::RowMat<T> col(cin_ * k_, len), dcol(cin_ * k_, len);
    detail::CMapMat<T> w(weight_.data(), cout_, cin_ * k_);
    detail::MapMat<T> dw(weight_.grad.data(), cout_, cin_ * k_);
    for (std::size_t s = 0; s < b; ++s) {
      im2col(input_.data() + s * cin_ * len, len, col);
      detail::CMapMat<T> gy(g.data() + s * cout_ * len, cout_, len);
      dw.noalias() += gy * col.transpose();
      for (std::size_t o = 0; o < cout_; ++o) bias_.grad[o] += gy.row(o).sum();
      dcol.noalias() = w.transpose() * gy;
      col2im(dcol, len, dx.data() + s * cin_ * len);
    }
    return dx;
  }

  std::vector<NamedTensor<T>> parameters() override { return {{"weight", &weight_}, {"bias", &bias_}}; }
  std::unique_ptr<Layer<T>> clone() const override {
    auto c = std::make_unique<Conv1d>(*this);
    c->input_ = {};
    return c;
  }
  std::string kind() const override { return "conv1d"; }
  Shape output_shape(const Shape& in) const override { return {in.at(0), cout_, in.at(2)}; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  void check(const Shape& s) const {
    if (s.size() != 3 || s[1] != cin_)
      throw DataError("conv1d expects B x " + std::to_string(cin_) + " x L input, got " + shape_string(s));
  }

  void im2col(const T* x, std::size_t len, detail::RowMat<T>& col) const {
    const auto pad = static_cast<std::ptrdiff_t>(k_ / 2);
    for (std::size_t c = 0; c < cin_; ++c)
      for (std::size_t k = 0; k < k_; ++k) {
        T* row = col.data() + (c * k_ + k) * len;
        const auto shift = static_cast<std::ptrdiff_t>(k) - pad;
        for (std::size_t t = 0; t < len; ++t) {
          const auto src = static_cast<std::ptrdiff_t>(t) + shift;
          row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[c * len + static_cast<std::size_t>(src)] : T{0};
        }
      }
  }

  void col2im(const detail::RowMat<T>& dcol, std::size_t len, T* dx) const {
    const auto pad = static_cast<std::ptrdiff_t>(k_ / 2);
    for (std::size_t c = 0; c < cin_; ++c)
      for (std::size_t k = 0; k < k_; ++k) {
        const T* row = dcol.data() + (c * k_ + k) * len;
        const auto shift = static_cast<std::ptrdiff_t>(k) - pad;
        for (std::size_t t = 0; t < len; ++t) {
          const auto dst = static_cast<std::ptrdiff_t>(t) + shift;
          if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) dx[c * len + static_cast<std::size_t>(dst)] += row[t];
        }
      }
  }

  std::size_t cin_, cout_, k_;
  Tensor<T> weight_, bias_;
  Tensor<T> input_;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y = x;
    y.grad.clear();
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.values[i] > T{0})
        mask_[i] = 1;
      else
        y.values[i] = T{0};
    }
    shape_ = x.shape;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    detail::require_forward(!shape_.empty(), "relu");
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] = mask_[i] ? g.values[i] : T{0};
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(); }
  std::string kind() const override { return "relu"; }

 private:
  std::vector<unsigned char> mask_;
  Shape shape_;
};

/// Max pooling, kernel 2, stride 2, over the last axis; odd tails are dropped.
/// Ties route the gradient to the first maximal element.
template <class T>
class MaxPool1d final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.rank() != 3) throw DataError("maxpool expects B x C x L input, got " + shape_string(x.shape));
    in_shape_ = x.shape;
    const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2), half = len / 2;
    if (half == 0) throw DataError("maxpool input length " + std::to_string(len) + " too short");
    Tensor<T> y(Shape{x.dim(0), x.dim(1), half});
    argmax_.resize(y.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < half; ++t) {
        const std::size_t a = r * len + 2 * t;
        const std::size_t pick = x.values[a + 1] > x.values[a] ? a + 1 : a;
        y.values[r * half + t] = x.values[pick];
        argmax_[r * half + t] = pick;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    detail::require_forward(!in_shape_.empty(), "maxpool");
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < argmax_.size(); ++i) dx.values[argmax_[i]] += g.values[i];
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool1d>(); }
  std::string kind() const override { return "maxpool1d"; }
  Shape output_shape(const Shape& in) const override { return {in.at(0), in.at(1), in.at(2) / 2}; }

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Fully connected layer; trailing input dimensions are flattened.
template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features)
      : in_(in_features), out_(out_features), weight_(Shape{out_features, in_features}), bias_(Shape{out_features}) {}

  void init(Rng& rng) {
    detail::kaiming_uniform(weight_.values, in_, rng);
    std::fill(bias_.values.begin(), bias_.values.end(), T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.rank() < 2 || x.size() != x.dim(0) * in_)
      throw DataError("linear expects B x " + std::to_string(in_) + " input, got " + shape_string(x.shape));
    input_ = x;
    const std::size_t b = x.dim(0);
    Tensor<T> y(Shape{b, out_});
    detail::CMapMat<T> xm(x.data(), b, in_);
    detail::CMapMat<T> w(weight_.data(), out_, in_);
    detail::MapMat<T> ym(y.data(), b, out_);
    ym.noalias() = xm * w.transpose();
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t o = 0; o < out_; ++o) ym(s, o) += bias_.values[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    detail::require_forward(!input_.values.empty(), "linear");
    weight_.ensure_grad();
    bias_.ensure_grad();
    const std::size_t b = input_.dim(0);
    detail::CMapMat<T> xm(input_.data(), b, in_);
    detail::CMapMat<T> gm(g.data(), b, out_);
    detail::CMapMat<T> w(weight_.data(), out_, in_);
    detail::MapMat<T> dw(weight_.grad.data(), out_, in_);
    dw.noalias() += gm.transpose() * xm;
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += gm(s, o);
    Tensor<T> dx(input_.shape);
    detail::MapMat<T> dxm(dx.data(), b, in_);
    dxm.noalias() = gm * w;
    return dx;
  }

  std::vector<NamedTensor<T>> parameters() override { return {{"weight", &weight_}, {"bias", &bias_}}; }
  std::unique_ptr<Layer<T>> clone() const override {
    auto c = std::make_unique<Linear>(*this);
    c->input_ = {};
    return c;
  }
  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override { return {in.at(0), out_}; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_, bias_;
  Tensor<T> input_;
};

/// Batch normalization over the batch axis of a B x F input. Batch statistics
/// in training mode (running averages updated, unbiased variance), running
/// statistics in eval mode.
template <class T>
class BatchNorm1d final : public Layer<T> {
 public:
  explicit BatchNorm1d(std::size_t features, double momentum = 0.1, double eps = 1e-5)
      : f_(features), momentum_(momentum), eps_(eps), gamma_(Shape{features}, T{1}), beta_(Shape{features}),
        running_mean_(Shape{features}), running_var_(Shape{features}, T{1}) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() != 2 || x.dim(1) != f_)
      throw DataError("batchnorm expects B x " + std::to_string(f_) + " input, got " + shape_string(x.shape));
    const std::size_t b = x.dim(0);
    mode_ = mode;
    xhat_ = Tensor<T>(x.shape);
    inv_std_.assign(f_, T{0});
    Tensor<T> y(x.shape);
    for (std::size_t j = 0; j < f_; ++j) {
      double mean, var;
      if (mode == Mode::train) {
        mean = 0.0;
        for (std::size_t s = 0; s < b; ++s) mean += x.values[s * f_ + j];
        mean /= static_cast<double>(b);
        var = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
          const double d = x.values[s * f_ + j] - mean;
          var += d * d;
        }
        const double unbiased = b > 1 ? var / static_cast<double>(b - 1) : var;
        var /= static_cast<double>(b);
        running_mean_.values[j] =
            static_cast<T>((1.0 - momentum_) * running_mean_.values[j] + momentum_ * mean);
        running_var_.values[j] =
            static_cast<T>((1.0 - momentum_) * running_var_.values[j] + momentum_ * unbiased);
      } else {
        mean = running_mean_.values[j];
        var = running_var_.values[j];
      }
      const double is = 1.0 / std::sqrt(var + eps_);
      inv_std_[j] = static_cast<T>(is);
      for (std::size_t s = 0; s < b; ++s) {
        const auto i = s * f_ + j;
        xhat_.values[i] = static_cast<T>((x.values[i] - mean) * is);
        y.values[i] = gamma_.values[j] * xhat_.values[i] + beta_.values[j];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    detail::require_forward(!xhat_.values.empty(), "batchnorm");
    gamma_.ensure_grad();
    beta_.ensure_grad();
    const std::size_t b = xhat_.dim(0);
    Tensor<T> dx(xhat_.shape);
    for (std::size_t j = 0; j < f_; ++j) {
      T sum_g{0}, sum_gx{0};
      for (std::size_t s = 0; s < b; ++s) {
        sum_g += g.values[s * f_ + j];
        sum_gx += g.values[s * f_ + j] * xhat_.values[s * f_ + j];
      }
      gamma_.grad[j] += sum_gx;
      beta_.grad[j] += sum_g;
      const T scale = gamma_.values[j] * inv_std_[j];
      if (mode_ == Mode::train) {
        const T inv_b = T{1} / static_cast<T>(b);
        for (std::size_t s = 0; s < b; ++s) {
          const auto i = s * f_ + j;
          dx.values[i] = scale * (g.values[i] - inv_b * sum_g - xhat_.values[i] * inv_b * sum_gx);
        }
      } else {
        for (std::size_t s = 0; s < b; ++s) dx.values[s * f_ + j] = scale * g.values[s * f_ + j];
      }
    }
    return dx;
  }

  std::vector<NamedTensor<T>> parameters() override { return {{"gamma", &gamma_}, {"beta", &beta_}}; }
  std::vector<NamedTensor<T>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }
  std::unique_ptr<Layer<T>> clone() const override {
    auto c = std::make_unique<BatchNorm1d>(*this);
    c->xhat_ = {};
    return c;
  }
  std::string kind() const override { return "batchnorm1d"; }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

 private:
  std::size_t f_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::train;
};

}  // namespace sferic::nn
