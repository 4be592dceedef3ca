#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sferic/error.hpp"
#include "sferic/nnet/checkpoint.hpp"
#include "sferic/nnet/loss.hpp"
#include "sferic/nnet/network.hpp"
#include "sferic/rng.hpp"
#include "sferic/sampling.hpp"

namespace sferic {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp, fp += o.fp, tn += o.tn, fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DataError("confusion: prediction and label counts differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

// Undefined ratios are absent, never zero.
struct Metrics {
  std::optional<double> accuracy, precision, recall, f1;
};

inline Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  if (c.total() > 0) m.accuracy = d(c.tp + c.tn) / d(c.total());
  if (c.tp + c.fp > 0) m.precision = d(c.tp) / d(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = d(c.tp) / d(c.tp + c.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  else if (m.precision && m.recall)
    m.f1 = 0.0;
  return m;
}

// Mean of per-class recalls; absent when a class is missing.
inline std::optional<double> balanced_accuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) return std::nullopt;
  return 0.5 * (static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) +
                static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments; one moment pair per named parameter.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg), lr_(cfg.lr) {}

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::uint64_t step_count() const noexcept { return t_; }

  void step(const std::vector<nn::NamedTensor<T>>& params) {
    for (const auto& [name, p] : params)
      for (auto g : p->grad)
        if (!std::isfinite(static_cast<double>(g)))
          throw ConvergenceError("non-finite gradient in parameter '" + name + "' at Adam step " + std::to_string(t_ + 1));
    if (m_.empty()) {
      for (const auto& [_, p] : params) {
        m_.emplace_back(p->size(), T{0});
        v_.emplace_back(p->size(), T{0});
      }
    }
    if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(lr_ / c1), inv_c2 = static_cast<T>(1.0 / c2), eps = static_cast<T>(cfg_.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k].second;
      if (p.grad.size() != p.size()) continue;  // parameter untouched by backward
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T{1} - b1) * g;
        v[i] = b2 * v[i] + (T{1} - b2) * g * g;
        p.values[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  void save(const std::vector<nn::NamedTensor<T>>& params, nn::StateDict& out) const {
    for (std::size_t k = 0; k < m_.size(); ++k) {
      const auto& [name, p] = params[k];
      out["adam.m." + name] = nn::Tensor<double>(p->shape, std::vector<double>(m_[k].begin(), m_[k].end()));
      out["adam.v." + name] = nn::Tensor<double>(p->shape, std::vector<double>(v_[k].begin(), v_[k].end()));
    }
  }

  void load(const std::vector<nn::NamedTensor<T>>& params, const nn::StateDict& in, std::uint64_t step,
            double lr) {
    m_.clear();
    v_.clear();
    t_ = step;
    lr_ = lr;
    if (step == 0) return;
    for (const auto& [name, p] : params) {
      auto m = in.find("adam.m." + name), v = in.find("adam.v." + name);
      if (m == in.end() || v == in.end()) throw DataError("checkpoint lacks Adam moments for '" + name + "'");
      m_.emplace_back(m->second.values.begin(), m->second.values.end());
      v_.emplace_back(v->second.values.begin(), v->second.values.end());
    }
  }

 private:
  AdamConfig cfg_;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct FitConfig {
  std::size_t max_epochs = 150;
  std::size_t batch_size = 16;
  std::size_t train_per_epoch = 640;
  std::size_t val_per_epoch = 160;
  std::size_t plateau_patience = 30;
  double plateau_factor = 0.5;
  std::size_t early_stop_patience = 20;
  AdamConfig adam;

  void validate() const {
    if (max_epochs == 0) throw ConfigError("trainer.max_epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("trainer.batch_size must be >= 1");
    if (train_per_epoch == 0 || val_per_epoch == 0) throw ConfigError("trainer.train/val_per_epoch must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("trainer.plateau_factor must lie in (0, 1)");
    if (!(adam.lr > 0.0)) throw ConfigError("trainer.lr must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0, val_loss = 0.0;  // mean per sample
  double train_acc = 0.0, val_acc = 0.0;
  double val_balanced_acc = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  nn::Checkpoint best;  // weights and optimizer state at the best validation accuracy
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string stop_reason;
};

/// Produces the (normalized) samples for one epoch.
using EpochSource = std::function<std::vector<LabeledSample>(std::size_t epoch)>;

template <class T>
nn::Tensor<T> to_batch(const std::vector<LabeledSample>& samples, std::span<const std::size_t> idx) {
  const std::size_t c = samples.at(idx[0]).channels, n = samples[idx[0]].n;
  nn::Tensor<T> x(nn::Shape{idx.size(), c, n});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& d = samples[idx[b]].data;
    std::transform(d.begin(), d.end(), x.values.begin() + static_cast<std::ptrdiff_t>(b * c * n),
                   [](double v) { return static_cast<T>(v); });
  }
  return x;
}

struct EvalSummary {
  double loss = 0.0;  // mean per sample
  ConfusionCounts counts;
};

template <class T>
EvalSummary evaluate(nn::Classifier<T>& model, const std::vector<LabeledSample>& samples, double beta,
                     std::size_t batch_size) {
  EvalSummary out;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    idx.clear();
    for (std::size_t j = i; j < std::min(samples.size(), i + batch_size); ++j) idx.push_back(j);
    auto logits = model.logits(to_batch<T>(samples, idx), nn::Mode::eval);
    std::vector<T> labels;
    std::vector<int> pred, truth;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      labels.push_back(static_cast<T>(samples[idx[b]].label));
      pred.push_back(logits[b] >= T{0} ? 1 : 0);
      truth.push_back(samples[idx[b]].label);
    }
    out.loss += static_cast<double>(nn::bce_weighted<T>(logits, labels, beta).loss);
    out.counts += confusion(pred, truth);
  }
  out.loss /= static_cast<double>(samples.size());
  return out;
}

// Training continues at checkpoint->epoch + 1 from its weights and optimizer state.
struct ResumeState {
  const nn::Checkpoint* checkpoint = nullptr;
};

/// Mini-batch training with Adam, plateau halving of the learning rate and
/// early stopping, both monitored on validation accuracy.
template <class T>
FitResult fit(nn::Classifier<T>& model, const EpochSource& train, const EpochSource& val, double beta,
              const FitConfig& cfg, std::uint64_t seed, const ResumeState& resume = {},
              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  Adam<T> adam(cfg.adam);
  auto params = model.net.parameters();
  FitResult out;
  std::size_t first_epoch = 1;
  double best_acc = -1.0;
  if (resume.checkpoint) {
    model.net.load_state(resume.checkpoint->tensors);
    adam.load(params, resume.checkpoint->tensors, resume.checkpoint->adam_step, resume.checkpoint->learning_rate);
    first_epoch = resume.checkpoint->epoch + 1;
    best_acc = resume.checkpoint->val_accuracy;
  }
  auto snapshot = [&](std::size_t epoch, double acc) {
    nn::Checkpoint c;
    c.config = model.config;
    c.tensors = model.net.state();
    adam.save(params, c.tensors);
    c.epoch = epoch;
    c.learning_rate = adam.learning_rate();
    c.adam_step = adam.step_count();
    c.beta = beta;
    c.val_accuracy = acc;
    return c;
  };
  out.best = snapshot(first_epoch - 1, std::max(best_acc, 0.0));
  out.best_epoch = first_epoch - 1;
  std::size_t since_best = 0, since_decay = 0;

  const std::size_t last_epoch = first_epoch + cfg.max_epochs - 1;
  for (std::size_t epoch = first_epoch; epoch <= last_epoch; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.learning_rate();
    const auto samples = train(epoch);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, epoch, 0x73687566ULL));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    ConfusionCounts train_counts;
    double train_loss = 0.0;
    bool diverged = false;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::span<const std::size_t> idx(order.data() + i, std::min(cfg.batch_size, order.size() - i));
      auto x = to_batch<T>(samples, idx);
      model.net.zero_grad();
      auto logits = model.logits(x, nn::Mode::train);
      std::vector<T> labels;
      std::vector<int> pred, truth;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        labels.push_back(static_cast<T>(samples[idx[b]].label));
        truth.push_back(samples[idx[b]].label);
        pred.push_back(logits[b] >= T{0} ? 1 : 0);
      }
      auto loss = nn::bce_weighted<T>(logits, labels, beta);
      if (!std::isfinite(static_cast<double>(loss.loss))) {
        diverged = true;
        break;
      }
      train_loss += static_cast<double>(loss.loss);
      train_counts += confusion(pred, truth);
      model.net.backward(nn::Tensor<T>(nn::Shape{idx.size(), 1}, loss.grad));
      try {
        adam.step(params);
      } catch (const ConvergenceError&) {
        diverged = true;
        break;
      }
    }
    if (diverged) {
      out.diverged = true;
      out.stop_reason = "non-finite loss or gradient in epoch " + std::to_string(epoch);
      break;
    }
    rec.train_loss = train_loss / static_cast<double>(samples.size());
    rec.train_acc = metrics(train_counts).accuracy.value_or(0.0);

    const auto val_samples = val(epoch);
    const auto ev = evaluate(model, val_samples, beta, cfg.batch_size);
    rec.val_loss = ev.loss;
    rec.val_acc = metrics(ev.counts).accuracy.value_or(0.0);
    rec.val_balanced_acc = balanced_accuracy(ev.counts).value_or(rec.val_acc);
    out.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_acc > best_acc) {
      best_acc = rec.val_acc;
      out.best_epoch = epoch;
      out.best = snapshot(epoch, rec.val_acc);
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      ++since_decay;
    }
    if (since_best >= cfg.early_stop_patience) {
      out.stop_reason = "early stop: no validation improvement for " + std::to_string(cfg.early_stop_patience) + " epochs";
      break;
    }
    if (since_decay >= cfg.plateau_patience) {
      adam.set_learning_rate(adam.learning_rate() * cfg.plateau_factor);
      since_decay = 0;
    }
  }
  if (out.stop_reason.empty()) out.stop_reason = "reached max_epochs";
  model.net.load_state(out.best.tensors);
  return out;
}

inline std::string history_csv(const std::vector<EpochRecord>& h) {
  using detail::format_double;
  std::string out = "epoch,lr,train_loss,val_loss,train_acc,val_acc,val_balanced_acc\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + ',' + format_double(r.lr) + ',' + format_double(r.train_loss) + ',' +
           format_double(r.val_loss) + ',' + format_double(r.train_acc) + ',' + format_double(r.val_acc) + ',' +
           format_double(r.val_balanced_acc) + '\n';
  return out;
}

}  // namespace sferic
