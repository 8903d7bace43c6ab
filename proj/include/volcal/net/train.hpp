#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volcal/net/config.hpp"
#include "volcal/net/tensor.hpp"
#include "volcal/volume.hpp"

namespace volcal::net {

struct TrainingSubject {
  std::string id;
  Tensor<float> input;
  std::vector<std::uint8_t> target;  // binary mask of the trained class
};

TrainingSubject make_training_subject(std::string id, const MultiChannelVolume& image,
                                      const BinaryMask& target);

// Stops once `patience` consecutive epochs pass without a strictly lower
// validation loss. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when `loss` is a new best.
  bool observe(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_loss_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool improved = false;
};

struct TrainOptions {
  int max_epochs = 200;
  int patience = 5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Replaces the computed validation loss (scripted schedules in tests).
  std::function<double(int epoch)> validation_loss;
  // Called after every epoch with the weights at the end of that epoch.
  std::function<void(const EpochRecord&, const NetworkWeights&)> on_epoch;
};

struct TrainingResult {
  NetworkWeights weights;  // from the best-validation epoch
  int best_epoch = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  std::vector<EpochRecord> log;
};

// Adam over every parameter; one step per training subject, subjects
// shuffled per epoch from config.rng_seed. Fully deterministic given the
// seed. Throws NumericalError naming epoch and step on a non-finite loss.
TrainingResult train(const NetworkConfig& config, std::span<const TrainingSubject> train_set,
                     std::span<const TrainingSubject> validation_set, const TrainOptions& options);

// Validation loss with dropout disabled; for hetero, noise seeded per subject.
double evaluate_loss(const NetworkConfig& config, const NetworkWeights& weights,
                     std::span<const TrainingSubject> subjects);

std::string training_log_csv(const TrainingResult& r);

}  // namespace volcal::net
