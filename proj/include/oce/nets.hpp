// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "oce/dataset.hpp"
#include "oce/nn/layers.hpp"

namespace oce::nets {

enum class ModelKind { ConvGRU, Baseline };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// convGRU over the 64 A-scans followed by a 1D residual CNN of 4 stages with
/// 2 basic blocks each (stride 2 in the first block of every stage), global
/// average pooling and one linear output.
struct ConvGRUCNNConfig {
  int sequence_length = data::kWindowLength;
  int hidden_channels = 32;
  int kernel_width = 7;
  std::array<int, 4> stage_widths{64, 128, 256, 512};

  void validate() const;
  nlohmann::json to_json() const;
  static ConvGRUCNNConfig from_json(const nlohmann::json& j);
};

/// ResNet18 over the window as a one-channel image: 7x7/2 stem, 3x3/2 max pool,
/// 4 stages x 2 basic blocks, global average pooling, one linear output.
struct BaselineConfig {
  int sequence_length = data::kWindowLength;
  int stem_width = 64;
  std::array<int, 4> stage_widths{64, 128, 256, 512};

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

/// Scalar regressor over a (1, N, n, m) batch of windows; output is (1, N, 1, 1).
template <typename T>
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual ModelKind kind() const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual nn::Tensor<T> forward(const nn::Tensor<T>& batch, bool training) = 0;
  /// Backpropagates dL/dy of the last training-mode forward into parameter gradients.
  virtual void backward(const nn::Tensor<T>& grad_output) = 0;
  virtual std::vector<nn::ParamRef<T>> parameters() = 0;
  virtual std::vector<nn::BufferRef<T>> buffers() = 0;
  virtual std::vector<nn::BatchNorm<T>*> norms() = 0;
  virtual nn::Linear<T>& head() = 0;

  void zero_grad();
  std::size_t parameter_count();
};

template <typename T>
class ConvGRUCNN final : public Regressor<T> {
 public:
  ConvGRUCNN(const ConvGRUCNNConfig& config, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::ConvGRU; }
  nlohmann::json config_json() const override { return config_.to_json(); }
  nn::Tensor<T> forward(const nn::Tensor<T>& batch, bool training) override;
  void backward(const nn::Tensor<T>& grad_output) override;
  std::vector<nn::ParamRef<T>> parameters() override;
  std::vector<nn::BufferRef<T>> buffers() override;
  std::vector<nn::BatchNorm<T>*> norms() override;
  nn::Linear<T>& head() override { return head_; }
  nn::ConvGRUSequence<T>& recurrent() { return gru_; }

 private:
  ConvGRUCNNConfig config_;
  nn::ConvGRUSequence<T> gru_;
  std::vector<nn::BasicBlock<T>> blocks_;
  nn::GlobalAvgPool<T> pool_;
  nn::Linear<T> head_;
};

template <typename T>
class ResNet18Baseline final : public Regressor<T> {
 public:
  ResNet18Baseline(const BaselineConfig& config, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::Baseline; }
  nlohmann::json config_json() const override { return config_.to_json(); }
  nn::Tensor<T> forward(const nn::Tensor<T>& batch, bool training) override;
  void backward(const nn::Tensor<T>& grad_output) override;
  std::vector<nn::ParamRef<T>> parameters() override;
  std::vector<nn::BufferRef<T>> buffers() override;
  std::vector<nn::BatchNorm<T>*> norms() override;
  nn::Linear<T>& head() override { return head_; }

 private:
  BaselineConfig config_;
  nn::Conv2d<T> stem_;
  nn::BatchNorm<T> stem_bn_;
  nn::MaxPool2d<T> stem_pool_;
  nn::Tensor<T> stem_out_;
  std::vector<nn::BasicBlock<T>> blocks_;
  nn::GlobalAvgPool<T> pool_;
  nn::Linear<T> head_;
};

using Model = Regressor<float>;

std::unique_ptr<Model> make_model(ModelKind kind, const nlohmann::json& config, std::uint64_t seed);

/// Stacks windows into a (1, N, n, m) batch.
template <typename T>
nn::Tensor<T> make_batch(std::span<const data::SpatioTemporalWindow* const> windows);

/// Inference-mode scalar output of either model for one window (model units;
/// apply the checkpoint's LabelScaler::inverse for wt%).
double convgru_cnn_forward(const data::SpatioTemporalWindow& window, ConvGRUCNN<float>& model);
double baseline_forward(const data::SpatioTemporalWindow& window, ResNet18Baseline<float>& model);

struct CheckpointMeta {
  ModelKind kind = ModelKind::ConvGRU;
  nlohmann::json model_config;
  std::uint64_t training_seed = 0;
  std::string dataset_hash;
  std::string config_hash;
  data::LabelScaler label_scaler;
  nlohmann::json extra = nlohmann::json::object();
};

// Checkpoint container, little-endian:
//   char[8] magic "OCECKPT1" | u32 version (=1) | u64 header_bytes |
//   header JSON (UTF-8) | float32 tensor blob
// The header echoes the model config and lists every tensor as
// {name, kind: "param"|"buffer", shape[4], offset (floats into the blob)}.
inline constexpr char kCheckpointMagic[8] = {'O', 'C', 'E', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter and buffer value (used for best-epoch snapshots).
std::vector<nn::Tensor<float>> snapshot(Model& model);
void restore(Model& model, const std::vector<nn::Tensor<float>>& state);

}  // namespace oce::nets
