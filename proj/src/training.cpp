// SPDX-License-Identifier: Apache-2.0
#include "oce/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::training {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (windows_per_epoch < 0) throw ConfigError("windows per epoch must be non-negative");
  if (bn_recalibration_windows < 0) {
    throw ConfigError("BatchNorm recalibration windows must be non-negative");
  }
}

Adam::Adam(std::vector<nn::ParamRef<float>> params, double learning_rate, double beta1,
           double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (const auto& p : params_) {
    const auto& s = p.value->shape();
    first_.emplace_back(s[0], s[1], s[2], s[3]);
    second_.emplace_back(s[0], s[1], s[2], s[3]);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto step_size = static_cast<float>(lr_ / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(eps_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k].value->data();
    const float* g = params_[k].grad->data();
    float* m = first_[k].data();
    float* v = second_[k].data();
    const std::size_t n = params_[k].value->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

namespace {

nn::Tensor<float> gather_batch(const data::WindowDataset& dataset, data::Split split,
                               std::span<const std::size_t> indices,
                               std::vector<double>* labels) {
  std::vector<const data::SpatioTemporalWindow*> windows;
  windows.reserve(indices.size());
  for (std::size_t i : indices) {
    windows.push_back(&dataset.at(split, i));
    if (labels != nullptr) labels->push_back(windows.back()->label);
  }
  return nets::make_batch<float>(windows);
}

}  // namespace

void recalibrate_batchnorm(nets::Model& model, const data::WindowDataset& dataset,
                           std::span<const std::size_t> train_indices, int batch_size) {
  auto norms = model.norms();
  if (norms.empty() || train_indices.empty()) return;
  std::vector<float> momenta;
  for (auto* bn : norms) momenta.push_back(bn->momentum());
  const auto step = static_cast<std::size_t>(batch_size);
  int k = 0;
  for (std::size_t b = 0; b < train_indices.size(); b += step, ++k) {
    // momentum 1/(k+1) turns the moving average into a plain mean over batches
    for (auto* bn : norms) bn->set_momentum(1.0f / static_cast<float>(k + 1));
    const auto idx = train_indices.subspan(b, std::min(step, train_indices.size() - b));
    (void)model.forward(gather_batch(dataset, data::Split::Train, idx, nullptr), true);
  }
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i]->set_momentum(momenta[i]);
}

std::vector<double> predict(nets::Model& model, const data::WindowDataset& dataset,
                            data::Split split, const data::LabelScaler& scaler, int batch_size) {
  const std::size_t n = dataset.size(split);
  std::vector<double> out;
  out.reserve(n);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto y = model.forward(gather_batch(dataset, split, idx, nullptr), false);
    for (std::size_t i = 0; i < y.size(); ++i) out.push_back(scaler.inverse(y[i]));
  }
  return out;
}

double mean_absolute_error(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw ContractViolation("MAE needs equal, non-empty prediction and label lists");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) sum += std::abs(predictions[i] - labels[i]);
  return sum / static_cast<double>(labels.size());
}

double evaluate_epoch(nets::Model& model, const data::WindowDataset& dataset, data::Split split,
                      int batch_size) {
  if (dataset.size(split) == 0) throw ContractViolation("cannot evaluate an empty split");
  const auto predictions = predict(model, dataset, split, dataset.manifest().label_scaler, batch_size);
  std::vector<double> labels;
  labels.reserve(predictions.size());
  for (std::size_t i = 0; i < dataset.size(split); ++i) labels.push_back(dataset.at(split, i).label);
  return mean_absolute_error(predictions, labels);
}

TrainResult train(nets::Model& model, const data::WindowDataset& dataset,
                  const TrainConfig& config, std::ostream* log) {
  config.validate();
  const std::size_t n_train = dataset.size(data::Split::Train);
  if (n_train == 0) throw ContractViolation("train split is empty");
  if (dataset.size(data::Split::Val) == 0) throw ContractViolation("validation split is empty");

  const auto& scaler = dataset.manifest().label_scaler;
  Adam optimizer(model.parameters(), config.learning_rate, config.beta1, config.beta2,
                 config.epsilon);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<nn::Tensor<float>> best_state;
  int stale_epochs = 0;
  std::vector<double> labels;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t used =
        config.windows_per_epoch > 0
            ? std::min(n_train, static_cast<std::size_t>(config.windows_per_epoch))
            : n_train;

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < used; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t e = std::min(used, b + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      labels.clear();
      const auto batch = gather_batch(dataset, data::Split::Train, idx, &labels);

      const auto y = model.forward(batch, true);
      nn::Tensor<float> grad(1, y.dim(1), 1, 1);
      double batch_loss = 0.0;
      const double count = static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double diff = y[i] - scaler.forward(labels[i]);
        batch_loss += diff * diff;
        grad[i] = static_cast<float>(2.0 * diff / count);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at " + std::to_string(b));
      }
      model.zero_grad();
      model.backward(grad);
      optimizer.step();
      loss_sum += batch_loss;
      seen += idx.size();
    }

    if (config.bn_recalibration_windows > 0) {
      const std::size_t k = std::min(n_train, static_cast<std::size_t>(config.bn_recalibration_windows));
      recalibrate_batchnorm(model, dataset, std::span<const std::size_t>(order.data(), k),
                            config.batch_size);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_mae = evaluate_epoch(model, dataset, data::Split::Val);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (log != nullptr) {
      *log << "epoch " << epoch << "  train_loss " << rec.train_loss << "  val_mae "
           << rec.val_mae << " wt%  (" << rec.seconds << " s)\n"
           << std::flush;
    }

    if (result.best_epoch < 0 || rec.val_mae < result.best_val_mae) {
      result.best_epoch = epoch;
      result.best_val_mae = rec.val_mae;
      best_state = nets::snapshot(model);
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      break;
    }
  }
  result.final_val_mae = result.history.back().val_mae;
  nets::restore(model, best_state);
  return result;
}

std::string history_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "epoch,train_loss,val_mae,seconds\n";
  for (const auto& r : result.history) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ','
        << io::format_double(r.val_mae) << ',' << io::format_double(r.seconds) << '\n';
  }
  return out.str();
}

}  // namespace oce::training
