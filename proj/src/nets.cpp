// SPDX-License-Identifier: Apache-2.0
#include "oce/nets.hpp"

#include <algorithm>

#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::nets {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::ConvGRU ? "convgru" : "baseline";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "convgru") return ModelKind::ConvGRU;
  if (name == "baseline") return ModelKind::Baseline;
  throw ConfigError("unknown model '" + name + "' (expected convgru or baseline)");
}

namespace {

void check_widths(const std::array<int, 4>& widths) {
  for (int w : widths) {
    if (w < 1) throw ConfigError("stage widths must be positive");
  }
}

template <typename T>
void check_batch(const nn::Tensor<T>& batch, int sequence_length) {
  if (batch.dim(0) != 1 || batch.dim(2) != sequence_length) {
    throw ContractViolation("model input " + batch.shape_string() + " expects (1, N, " +
                            std::to_string(sequence_length) + ", m)");
  }
  if (batch.dim(1) < 1 || batch.dim(3) < 1) throw ContractViolation("empty model input");
}

}  // namespace

void ConvGRUCNNConfig::validate() const {
  if (sequence_length != data::kWindowLength) {
    throw ConfigError("sequence length must be " + std::to_string(data::kWindowLength));
  }
  if (hidden_channels < 1) throw ConfigError("hidden channels must be positive");
  if (kernel_width < 1 || kernel_width % 2 == 0) throw ConfigError("kernel width must be odd");
  check_widths(stage_widths);
}

nlohmann::json ConvGRUCNNConfig::to_json() const {
  return {{"sequence_length", sequence_length},
          {"hidden_channels", hidden_channels},
          {"kernel_width", kernel_width},
          {"stage_widths", stage_widths}};
}

ConvGRUCNNConfig ConvGRUCNNConfig::from_json(const nlohmann::json& j) {
  ConvGRUCNNConfig c;
  c.sequence_length = j.value("sequence_length", c.sequence_length);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.kernel_width = j.value("kernel_width", c.kernel_width);
  if (j.contains("stage_widths")) c.stage_widths = j.at("stage_widths").get<std::array<int, 4>>();
  c.validate();
  return c;
}

void BaselineConfig::validate() const {
  if (sequence_length != data::kWindowLength) {
    throw ConfigError("sequence length must be " + std::to_string(data::kWindowLength));
  }
  if (stem_width < 1) throw ConfigError("stem width must be positive");
  check_widths(stage_widths);
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"sequence_length", sequence_length},
          {"stem_width", stem_width},
          {"stage_widths", stage_widths}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.sequence_length = j.value("sequence_length", c.sequence_length);
  c.stem_width = j.value("stem_width", c.stem_width);
  if (j.contains("stage_widths")) c.stage_widths = j.at("stage_widths").get<std::array<int, 4>>();
  c.validate();
  return c;
}

template <typename T>
void Regressor<T>::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(T{0});
}

template <typename T>
std::size_t Regressor<T>::parameter_count() {
  std::size_t n = 0;
  for (auto& p : parameters()) n += p.value->size();
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
ConvGRUCNN<T>::ConvGRUCNN(const ConvGRUCNNConfig& config, std::uint64_t seed)
    : config_(config),
      gru_("gru", config.hidden_channels, config.kernel_width),
      head_("head", config.stage_widths.back(), 1) {
  config_.validate();
  int in = config.hidden_channels;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const int out = config.stage_widths[s];
    for (int b = 0; b < 2; ++b) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      blocks_.emplace_back(name, in, out, b == 0 ? 2 : 1, true);
      in = out;
    }
  }
  nn::InitRng rng(seed);
  gru_.init(rng);
  for (auto& block : blocks_) block.init(rng);
  head_.init(rng);
}

template <typename T>
nn::Tensor<T> ConvGRUCNN<T>::forward(const nn::Tensor<T>& batch, bool training) {
  check_batch(batch, config_.sequence_length);
  nn::Tensor<T> x = gru_.forward(batch, training);
  for (auto& block : blocks_) x = block.forward(x, training);
  return head_.forward(pool_.forward(x), training);
}

template <typename T>
void ConvGRUCNN<T>::backward(const nn::Tensor<T>& grad_output) {
  nn::Tensor<T> d = pool_.backward(head_.backward(grad_output));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
  gru_.backward(d);
}

template <typename T>
std::vector<nn::ParamRef<T>> ConvGRUCNN<T>::parameters() {
  std::vector<nn::ParamRef<T>> params;
  gru_.collect(params);
  for (auto& block : blocks_) block.collect(params);
  head_.collect(params);
  return params;
}

template <typename T>
std::vector<nn::BufferRef<T>> ConvGRUCNN<T>::buffers() {
  std::vector<nn::BufferRef<T>> buffers;
  for (auto& block : blocks_) block.collect_buffers(buffers);
  return buffers;
}

template <typename T>
std::vector<nn::BatchNorm<T>*> ConvGRUCNN<T>::norms() {
  std::vector<nn::BatchNorm<T>*> norms;
  for (auto& block : blocks_) block.collect_norms(norms);
  return norms;
}

// ---------------------------------------------------------------------------

template <typename T>
ResNet18Baseline<T>::ResNet18Baseline(const BaselineConfig& config, std::uint64_t seed)
    : config_(config),
      stem_("stem", 1, config.stem_width, nn::ConvGeometry::square(7, 2, 3), false),
      stem_bn_("stem_bn", config.stem_width),
      head_("head", config.stage_widths.back(), 1) {
  config_.validate();
  int in = config.stem_width;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const int out = config.stage_widths[s];
    for (int b = 0; b < 2; ++b) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      blocks_.emplace_back(name, in, out, stride, false);
      in = out;
    }
  }
  nn::InitRng rng(seed);
  stem_.init(rng);
  for (auto& block : blocks_) block.init(rng);
  head_.init(rng);
}

template <typename T>
nn::Tensor<T> ResNet18Baseline<T>::forward(const nn::Tensor<T>& batch, bool training) {
  check_batch(batch, config_.sequence_length);
  stem_out_ = nn::relu_forward(stem_bn_.forward(stem_.forward(batch, training), training));
  nn::Tensor<T> x = stem_pool_.forward(stem_out_, training);
  for (auto& block : blocks_) x = block.forward(x, training);
  return head_.forward(pool_.forward(x), training);
}

template <typename T>
void ResNet18Baseline<T>::backward(const nn::Tensor<T>& grad_output) {
  nn::Tensor<T> d = pool_.backward(head_.backward(grad_output));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
  d = nn::relu_backward(stem_out_, stem_pool_.backward(d));
  stem_.backward(stem_bn_.backward(d));
}

template <typename T>
std::vector<nn::ParamRef<T>> ResNet18Baseline<T>::parameters() {
  std::vector<nn::ParamRef<T>> params;
  stem_.collect(params);
  stem_bn_.collect(params);
  for (auto& block : blocks_) block.collect(params);
  head_.collect(params);
  return params;
}

template <typename T>
std::vector<nn::BufferRef<T>> ResNet18Baseline<T>::buffers() {
  std::vector<nn::BufferRef<T>> buffers;
  stem_bn_.collect_buffers(buffers);
  for (auto& block : blocks_) block.collect_buffers(buffers);
  return buffers;
}

template <typename T>
std::vector<nn::BatchNorm<T>*> ResNet18Baseline<T>::norms() {
  std::vector<nn::BatchNorm<T>*> norms;
  stem_bn_.collect_norms(norms);
  for (auto& block : blocks_) block.collect_norms(norms);
  return norms;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(ModelKind kind, const nlohmann::json& config, std::uint64_t seed) {
  if (kind == ModelKind::ConvGRU) {
    return std::make_unique<ConvGRUCNN<float>>(ConvGRUCNNConfig::from_json(config), seed);
  }
  return std::make_unique<ResNet18Baseline<float>>(BaselineConfig::from_json(config), seed);
}

template <typename T>
nn::Tensor<T> make_batch(std::span<const data::SpatioTemporalWindow* const> windows) {
  if (windows.empty()) throw ContractViolation("empty batch");
  const int rows = windows.front()->rows, depth = windows.front()->depth;
  nn::Tensor<T> batch(1, static_cast<int>(windows.size()), rows, depth);
  T* out = batch.data();
  for (const auto* w : windows) {
    if (w->rows != rows || w->depth != depth) throw ContractViolation("ragged batch");
    out = std::transform(w->pixels.begin(), w->pixels.end(), out,
                         [](float v) { return static_cast<T>(v); });
  }
  return batch;
}

namespace {

double single_forward(const data::SpatioTemporalWindow& window, Model& model) {
  const data::SpatioTemporalWindow* ptr = &window;
  const auto batch = make_batch<float>(std::span<const data::SpatioTemporalWindow* const>(&ptr, 1));
  return model.forward(batch, false)[0];
}

}  // namespace

double convgru_cnn_forward(const data::SpatioTemporalWindow& window, ConvGRUCNN<float>& model) {
  return single_forward(window, model);
}

double baseline_forward(const data::SpatioTemporalWindow& window, ResNet18Baseline<float>& model) {
  return single_forward(window, model);
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<const nn::Tensor<float>*> blobs;
  std::size_t offset = 0;
  auto add = [&](const std::string& name, const char* kind, const nn::Tensor<float>* t) {
    tensors.push_back({{"name", name}, {"kind", kind}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size();
    blobs.push_back(t);
  };
  for (auto& p : model.parameters()) add(p.name, "param", p.value);
  for (auto& b : model.buffers()) add(b.name, "buffer", b.value);

  const nlohmann::json header = {
      {"model", to_string(meta.kind)},
      {"model_config", meta.model_config},
      {"training_seed", meta.training_seed},
      {"dataset_hash", meta.dataset_hash},
      {"config_hash", meta.config_hash},
      {"label_scaler", {{"mean", meta.label_scaler.mean}, {"std", meta.label_scaler.stddev}}},
      {"extra", meta.extra},
      {"tensors", tensors},
      {"total_floats", offset}};
  const std::string text = header.dump();

  auto out = io::open_for_write(path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_pod(out, kCheckpointVersion);
  io::write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* t : blobs) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw ArtifactError("write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = io::open_for_read(path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw ArtifactError("not a checkpoint: " + path.string());
  }
  if (io::read_pod<std::uint32_t>(in) != kCheckpointVersion) {
    throw ArtifactError("unsupported checkpoint version: " + path.string());
  }
  const auto header_bytes = io::read_pod<std::uint64_t>(in);
  std::string text(header_bytes, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_bytes));
  if (!in) throw ArtifactError("truncated checkpoint header: " + path.string());

  LoadedCheckpoint loaded;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    loaded.meta.kind = model_kind_from_string(header.at("model").get<std::string>());
    loaded.meta.model_config = header.at("model_config");
    loaded.meta.training_seed = header.at("training_seed").get<std::uint64_t>();
    loaded.meta.dataset_hash = header.at("dataset_hash").get<std::string>();
    loaded.meta.config_hash = header.at("config_hash").get<std::string>();
    loaded.meta.label_scaler.mean = header.at("label_scaler").at("mean").get<double>();
    loaded.meta.label_scaler.stddev = header.at("label_scaler").at("std").get<double>();
    loaded.meta.extra = header.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed checkpoint header: ") + e.what());
  }

  loaded.model = make_model(loaded.meta.kind, loaded.meta.model_config, 0);
  std::vector<float> blob(header.at("total_floats").get<std::size_t>());
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!in) throw ArtifactError("truncated checkpoint blob: " + path.string());

  std::vector<std::pair<std::string, nn::Tensor<float>*>> targets;
  for (auto& p : loaded.model->parameters()) targets.emplace_back(p.name, p.value);
  for (auto& b : loaded.model->buffers()) targets.emplace_back(b.name, b.value);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != targets.size()) throw ArtifactError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != targets[i].first ||
        entry.at("shape").get<std::array<int, 4>>() != targets[i].second->shape()) {
      throw ArtifactError("checkpoint tensor " + entry.at("name").get<std::string>() +
                          " does not match model layout");
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(offset), targets[i].second->size(),
                targets[i].second->data());
  }
  return loaded;
}

std::vector<nn::Tensor<float>> snapshot(Model& model) {
  std::vector<nn::Tensor<float>> state;
  for (auto& p : model.parameters()) state.push_back(*p.value);
  for (auto& b : model.buffers()) state.push_back(*b.value);
  return state;
}

void restore(Model& model, const std::vector<nn::Tensor<float>>& state) {
  std::size_t i = 0;
  for (auto& p : model.parameters()) *p.value = state.at(i++);
  for (auto& b : model.buffers()) *b.value = state.at(i++);
}

template class Regressor<float>;
template class Regressor<double>;
template class ConvGRUCNN<float>;
template class ConvGRUCNN<double>;
template class ResNet18Baseline<float>;
template class ResNet18Baseline<double>;
template nn::Tensor<float> make_batch<float>(std::span<const data::SpatioTemporalWindow* const>);
template nn::Tensor<double> make_batch<double>(std::span<const data::SpatioTemporalWindow* const>);

}  // namespace oce::nets
