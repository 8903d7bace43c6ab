#include "volcal/net/train.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "volcal/csv.hpp"
#include "volcal/error.hpp"
#include "volcal/net/loss.hpp"
#include "volcal/net/model.hpp"
#include "volcal/seeds.hpp"

namespace volcal::net {

TrainingSubject make_training_subject(std::string id, const MultiChannelVolume& image,
                                      const BinaryMask& target) {
  if (image.dims() != target.dims()) throw ParameterError("target mask not aligned with image");
  TrainingSubject s{std::move(id), to_tensor<float>(image), {}};
  s.target.assign(target.bits().begin(), target.bits().end());
  return s;
}

bool EarlyStopping::observe(double loss) {
  ++epoch_;
  if (epoch_ == 1 || loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

namespace {

class Adam {
 public:
  Adam(const std::vector<std::vector<float>>& shapes, const TrainOptions& o) : o_(o) {
    for (const auto& v : shapes) {
      m_.emplace_back(v.size(), 0.0f);
      v_.emplace_back(v.size(), 0.0f);
    }
  }

  void step(std::vector<std::vector<float>>& values, const std::vector<std::vector<float>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(o_.beta1, t_);
    const double c2 = 1.0 - std::pow(o_.beta2, t_);
    const auto b1 = static_cast<float>(o_.beta1);
    const auto b2 = static_cast<float>(o_.beta2);
    const auto lr = static_cast<float>(o_.learning_rate / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(o_.epsilon);
    for (std::size_t p = 0; p < values.size(); ++p) {
      auto& w = values[p];
      const auto& g = grads[p];
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        w[i] -= lr * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

 private:
  const TrainOptions& o_;
  std::vector<std::vector<float>> m_, v_;
  int t_ = 0;
};

double subject_loss(Model<float>& model, const TrainingSubject& s, bool stochastic,
                    std::uint64_t mask_seed, std::uint64_t noise_seed, bool with_grad) {
  auto out = model.forward(s.input, stochastic, mask_seed);
  Tensor<float> dlogits, dsigma;
  double loss = 0.0;
  if (model.config().has_sigma_head()) {
    loss = heteroscedastic_loss(out.logits, *out.sigma, s.target,
                                model.config().hetero_noise_samples, noise_seed,
                                with_grad ? &dlogits : nullptr, with_grad ? &dsigma : nullptr);
    if (with_grad) model.backward(dlogits, &dsigma);
  } else {
    loss = cross_entropy_loss(out.logits, s.target, with_grad ? &dlogits : nullptr);
    if (with_grad) model.backward(dlogits, nullptr);
  }
  return loss;
}

double validation_loss(Model<float>& model, std::span<const TrainingSubject> subjects) {
  if (subjects.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto seed = derive_seed(model.config().rng_seed, "validation-noise", subjects[i].id);
    total += subject_loss(model, subjects[i], false, 0, seed, false);
  }
  return total / static_cast<double>(subjects.size());
}

}  // namespace

double evaluate_loss(const NetworkConfig& config, const NetworkWeights& weights,
                     std::span<const TrainingSubject> subjects) {
  Model<float> model(config, weights);
  return validation_loss(model, subjects);
}

TrainingResult train(const NetworkConfig& config, std::span<const TrainingSubject> train_set,
                     std::span<const TrainingSubject> validation_set, const TrainOptions& options) {
  if (train_set.empty()) throw ConfigError("training split is empty");
  if (validation_set.empty() && !options.validation_loss) {
    throw ConfigError("validation split is empty");
  }
  if (options.max_epochs < 1 || options.patience < 1) {
    throw ConfigError("max_epochs and patience must be >= 1");
  }
  Model<float> model(config, init_weights(config));
  Adam adam(model.values(), options);
  EarlyStopping stopper(options.patience);
  TrainingResult result;
  result.weights = model.weights();

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.rng_seed, "shuffle", std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng() % i]);
    }

    double train_total = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& s = train_set[order[step]];
      const std::string key = std::to_string(epoch) + "/" + std::to_string(step);
      model.zero_grad();
      const double loss = subject_loss(model, s, true, derive_seed(config.rng_seed, "dropout", key),
                                       derive_seed(config.rng_seed, "hetero-noise", key), true);
      if (!std::isfinite(loss)) {
        throw NumericalError("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch) + ", step " + std::to_string(step + 1) +
                             " (subject " + s.id + ")");
      }
      train_total += loss;
      adam.step(model.values(), model.grads());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_total / static_cast<double>(order.size());
    rec.val_loss =
        options.validation_loss ? options.validation_loss(epoch) : validation_loss(model, validation_set);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("training diverged: non-finite validation loss at epoch " +
                           std::to_string(epoch));
    }
    rec.improved = stopper.observe(rec.val_loss);
    result.log.push_back(rec);
    result.epochs_run = epoch;
    const NetworkWeights current = model.weights();
    if (rec.improved) {
      result.weights = current;
      result.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(rec, current);
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

std::string training_log_csv(const TrainingResult& r) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,improved\n";
  for (const auto& e : r.log) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
        << (e.improved ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace volcal::net
