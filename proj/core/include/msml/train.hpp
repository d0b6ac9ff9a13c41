#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msml/net.hpp"

namespace msml {

/// Reduce-on-plateau: after `patience` consecutive epochs without strict
/// improvement over the best loss, lr is multiplied by `factor` and the
/// counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience = 2, double factor = 0.1);

  /// Feeds one validation loss; returns the learning rate for the next epoch.
  double step(double val_loss, double lr);
  int bad_epochs() const noexcept { return bad_; }
  int reductions() const noexcept { return reductions_; }

 private:
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
  int reductions_ = 0;
};

/// Replays `history` through a PlateauScheduler starting from `lr`.
double plateau_scheduler(std::span<const double> history, int patience, double factor, double lr);

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience = 5);

  /// Returns true when training should stop after this epoch.
  bool step(double val_loss);
  bool improved() const noexcept { return improved_; }
  double best() const noexcept { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
  bool improved_ = false;
};

enum class LossMode { Bce, SoftconPretrain };

struct TrainConfig {
  std::size_t batch_size = 64;
  int max_epochs = 100;
  int early_stop_patience = 5;
  int plateau_patience = 2;
  double plateau_factor = 0.1;
  double initial_lr = 1e-3;
  std::uint64_t seed = 7;
  LossMode loss_mode = LossMode::Bce;

  // SoftCon pretraining of the encoder (loss_mode == SoftconPretrain).
  int pretrain_epochs = 10;
  double pretrain_lr = 1e-3;
  double tau = 0.1;
  double lambda = 1.0;
  double aug_noise = 0.05;       // std of additive Gaussian noise, in input units
  double aug_band_dropout = 0.1; // probability of zeroing each channel

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  bool improved = false;
};

struct TrainResult {
  Network net;  // parameters from the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool stopped_early = false;
  std::vector<double> pretrain_losses;
};

/// Mean BCE over `inputs` in eval mode, evaluated in chunks.
double evaluate_bce(const Network& net, const Matrix& inputs, const Matrix& targets, std::size_t chunk = 256);
Matrix predict_proba(const Network& net, const Matrix& inputs, std::size_t chunk = 256);

/// Rows `idx` of m.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx);

/// Augmented copy of raw inputs: Gaussian noise with std `noise` in
/// normalized units, and whole channels replaced by their mean with
/// probability `band_dropout`.
Matrix augment(const Network& net, const Matrix& inputs, double noise, double band_dropout, std::mt19937_64& rng);

/// SoftCon training of the encoder layers; returns per-epoch mean loss.
std::vector<double> pretrain_encoder(Network& net, const Matrix& inputs, const Matrix& labels, const TrainConfig& cfg);

/// Minibatch Adam on mean sigmoid-BCE with reduce-on-plateau and early
/// stopping on validation loss; restores the best validation epoch.
TrainResult train(Network net, const Matrix& train_x, const Matrix& train_y, const Matrix& val_x, const Matrix& val_y,
                  const TrainConfig& cfg);

const char* to_string(LossMode m) noexcept;

}  // namespace msml
