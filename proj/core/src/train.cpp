#include "msml/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msml/error.hpp"
#include "msml/losses.hpp"

namespace msml {

const char* to_string(LossMode m) noexcept { return m == LossMode::Bce ? "bce" : "softcon_pretrain"; }

PlateauScheduler::PlateauScheduler(int patience, double factor) : patience_(patience), factor_(factor) {
  if (patience < 1) throw Error(ErrorCode::InvalidConfig, "plateau patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0)) throw Error(ErrorCode::InvalidConfig, "plateau factor must lie in (0, 1)");
}

double PlateauScheduler::step(double val_loss, double lr) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
    return lr;
  }
  if (++bad_ >= patience_) {
    bad_ = 0;
    ++reductions_;
    return lr * factor_;
  }
  return lr;
}

double plateau_scheduler(std::span<const double> history, int patience, double factor, double lr) {
  PlateauScheduler s(patience, factor);
  for (double v : history) lr = s.step(v, lr);
  return lr;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw Error(ErrorCode::InvalidConfig, "early stopping patience must be >= 1");
}

bool EarlyStopping::step(double val_loss) {
  improved_ = val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    bad_ = 0;
    return false;
  }
  return ++bad_ >= patience_;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || max_epochs < 1 || early_stop_patience < 1 || plateau_patience < 1)
    throw Error(ErrorCode::InvalidConfig, "training counts must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw Error(ErrorCode::InvalidConfig, "plateau factor must lie in (0, 1)");
  if (!(initial_lr >= 0.0) || !(pretrain_lr >= 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rates must be >= 0");
  if (loss_mode == LossMode::SoftconPretrain && pretrain_epochs < 0)
    throw Error(ErrorCode::InvalidConfig, "pretrain epochs must be >= 0");
  if (!(tau > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "tau must be positive");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
  if (!(aug_band_dropout >= 0.0 && aug_band_dropout < 1.0) || !(aug_noise >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "augmentation parameters out of range");
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
  return out;
}

Matrix predict_proba(const Network& net, const Matrix& inputs, std::size_t chunk) {
  Matrix out(inputs.rows(), net.classes());
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < inputs.rows(); b += chunk) {
    const std::size_t e = std::min(inputs.rows(), b + chunk);
    idx.resize(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const Matrix p = sigmoid(forward(net, gather_rows(inputs, idx), Mode::Eval).output);
    for (std::size_t r = 0; r < p.rows(); ++r) std::copy(p.row(r).begin(), p.row(r).end(), out.row(b + r).begin());
  }
  return out;
}

double evaluate_bce(const Network& net, const Matrix& inputs, const Matrix& targets, std::size_t chunk) {
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptySet, "no samples to evaluate");
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < inputs.rows(); b += chunk) {
    const std::size_t e = std::min(inputs.rows(), b + chunk);
    idx.resize(e - b);
    std::iota(idx.begin(), idx.end(), b);
    const Matrix logits = forward(net, gather_rows(inputs, idx), Mode::Eval).output;
    total += bce_loss(logits, gather_rows(targets, idx)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(inputs.rows());
}

Matrix augment(const Network& net, const Matrix& inputs, double noise, double band_dropout, std::mt19937_64& rng) {
  Matrix out = inputs;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::uint32_t px = net.pixels;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::uint32_t c = 0; c < net.in_channels; ++c) {
      const bool drop = band_dropout > 0.0 && u(rng) < band_dropout;
      const double sd = noise * net.input_scale[c];
      for (std::uint32_t p = 0; p < px; ++p) {
        double& v = out(r, std::size_t{c} * px + p);
        if (drop) {
          v = net.input_mean[c];
        } else if (noise > 0.0) {
          v += sd * normal(rng);
        }
      }
    }
  }
  return out;
}

std::vector<double> pretrain_encoder(Network& net, const Matrix& inputs, const Matrix& labels, const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptySet, "no samples to pretrain on");
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  AdamState adam = make_adam(net, AdamHyper{cfg.pretrain_lr});
  const std::size_t depth = net.encoder_depth();
  // The head is not part of this objective.
  std::vector<bool> saved(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    saved[l] = net.layers[l].trainable;
    if (l >= depth) net.layers[l].trainable = false;
  }

  std::vector<double> losses;
  std::vector<std::size_t> perm(inputs.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < perm.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(perm.size(), b + cfg.batch_size);
      if (e - b < 2) continue;  // a single pair has no negatives
      const std::span<const std::size_t> idx(perm.data() + b, e - b);
      const Matrix x = gather_rows(inputs, idx);
      const Matrix view1 = augment(net, x, cfg.aug_noise, cfg.aug_band_dropout, rng);
      const Matrix view2 = augment(net, x, cfg.aug_noise, cfg.aug_band_dropout, rng);

      auto f1 = forward_encoder(net, view1, Mode::Train, &rng);
      auto f2 = forward_encoder(net, view2, Mode::Train, &rng);
      SoftConBatch batch{f1.output, f2.output, gather_rows(labels, idx), cfg.tau, cfg.lambda};
      const auto lg = total_loss_grad(batch);
      const double scale = 1.0 / static_cast<double>(e - b);
      Matrix d1 = lg.d_z;
      Matrix d2 = lg.d_z_prime;
      for (double& v : d1.values()) v *= scale;
      for (double& v : d2.values()) v *= scale;
      Gradients g = backward(net, f1.cache, d1);
      g.add(backward(net, f2.cache, d2));
      adam_step(adam, net, g);
      sum += lg.loss;
      seen += e - b;
    }
    losses.push_back(seen ? sum / static_cast<double>(seen) : 0.0);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) net.layers[l].trainable = saved[l];
  return losses;
}

TrainResult train(Network net, const Matrix& train_x, const Matrix& train_y, const Matrix& val_x, const Matrix& val_y,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_x.rows() == 0 || val_x.rows() == 0) throw Error(ErrorCode::EmptySet, "train and validation sets must be non-empty");
  if (train_x.rows() != train_y.rows() || val_x.rows() != val_y.rows())
    throw Error(ErrorCode::ShapeMismatch, "inputs and targets differ in row count");

  TrainResult result;
  if (cfg.loss_mode == LossMode::SoftconPretrain) result.pretrain_losses = pretrain_encoder(net, train_x, train_y, cfg);

  std::mt19937_64 rng(cfg.seed);
  AdamState adam = make_adam(net, AdamHyper{cfg.initial_lr});
  PlateauScheduler plateau(cfg.plateau_patience, cfg.plateau_factor);
  EarlyStopping stopper(cfg.early_stop_patience);
  double lr = cfg.initial_lr;
  result.net = net;

  std::vector<std::size_t> perm(train_x.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    adam.hyper.lr = lr;
    double sum = 0.0;
    for (std::size_t b = 0; b < perm.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(perm.size(), b + cfg.batch_size);
      const std::span<const std::size_t> idx(perm.data() + b, e - b);
      const Matrix x = gather_rows(train_x, idx);
      const Matrix y = gather_rows(train_y, idx);
      auto fwd = forward(net, x, Mode::Train, &rng);
      sum += bce_loss(fwd.output, y) * static_cast<double>(e - b);
      const Gradients g = backward(net, fwd.cache, bce_grad(fwd.output, y));
      adam_step(adam, net, g);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = sum / static_cast<double>(perm.size());
    entry.val_loss = evaluate_bce(net, val_x, val_y);
    entry.lr = lr;
    const bool stop = stopper.step(entry.val_loss);
    entry.improved = stopper.improved();
    if (entry.improved) {
      result.net = net;
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (stop) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
    lr = plateau.step(entry.val_loss, lr);
  }
  return result;
}

}  // namespace msml
