// SPDX-License-Identifier: Apache-2.0
#include "oce/config.hpp"

#include <set>

#include "oce/dataset.hpp"
#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::config {

namespace {

using nlohmann::json;

/// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + " must be an array of numbers");
      std::vector<double> values;
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
        values.push_back(e.get<double>());
      }
      out = std::move(values);
    }
  }
  void read(const char* key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + " must be an array of strings");
      std::vector<std::string> values;
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError(where(key) + " must be an array of strings");
        values.push_back(e.get<std::string>());
      }
      out = std::move(values);
    }
  }
  template <std::size_t N, typename T>
  void read(const char* key, std::array<T, N>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != N) {
        throw ConfigError(where(key) + " must be an array of " + std::to_string(N) + " numbers");
      }
      for (std::size_t i = 0; i < N; ++i) {
        const auto& e = (*v)[i];
        const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
        if (!ok) throw ConfigError(where(key) + " has an element of the wrong type");
        out[i] = e.get<T>();
      }
    }
  }

  /// Nested section; an absent key yields an empty object.
  Section child(const char* key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v != nullptr ? *v : empty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError("unknown configuration key '" + where(key) + "'");
    }
  }

 private:
  const json* find(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? std::string("configuration") : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename F>
void as_config_error(const std::string& section, F&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  as_config_error("simulation", [&] {
    simulation.validate();
    simulation.sensor.validate();
    simulation.protocol.validate();
    simulation.optics.validate();
    if (!(simulation.material.reference_modulus_pa > 0.0 &&
          simulation.material.reference_concentration > 0.0)) {
      throw ConfigError("material law constants must be positive");
    }
    if (!(simulation.contact.punch_radius_um > 0.0 && simulation.contact.poisson_ratio >= 0.0 &&
          simulation.contact.poisson_ratio < 0.5)) {
      throw ConfigError("contact needs a positive radius and a Poisson ratio in [0, 0.5)");
    }
    if (simulation.scatterer_density < 0.0) throw ConfigError("scatterer density must be non-negative");
  });
  as_config_error("dataset", [&] {
    if (dataset.stride < 1) throw ConfigError("stride must be at least 1");
    (void)data::SplitPolicy::parse(dataset.split_policy);
  });
  as_config_error("model", [&] {
    model.convgru.validate();
    model.baseline.validate();
  });
  as_config_error("training", [&] {
    training.params.validate();
    if (training.models.empty()) throw ConfigError("at least one model must be trained");
    std::set<std::string> seen;
    for (const auto& m : training.models) {
      (void)nets::model_kind_from_string(m);
      if (!seen.insert(m).second) throw ConfigError("model '" + m + "' listed twice");
    }
  });
  as_config_error("evaluation", [&] {
    if (evaluation.timing_passes < 1 || evaluation.timing_warmup < 0 || evaluation.timing_batch < 1 ||
        evaluation.batch_size < 1) {
      throw ConfigError("timing passes and batch sizes must be >= 1, warmup >= 0");
    }
  });
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");

  auto sim = root.child("simulation");
  auto& s = c.simulation;
  sim.read("concentrations", s.concentrations);
  sim.read("phantoms_per_concentration", s.phantoms_per_concentration);
  sim.read("indentations_per_phantom", s.indentations_per_phantom);
  sim.read("loading_rate_min_mm_s", s.loading_rate_min_mm_s);
  sim.read("loading_rate_max_mm_s", s.loading_rate_max_mm_s);
  sim.read("scatterer_density_per_mm", s.scatterer_density);
  sim.read("workers", s.workers);
  {
    auto m = sim.child("material");
    m.read("reference_modulus_pa", s.material.reference_modulus_pa);
    m.read("reference_concentration", s.material.reference_concentration);
    m.read("exponent", s.material.exponent);
    m.finish();
  }
  {
    auto m = sim.child("sensor");
    m.read("rest_length_um", s.sensor.rest_length_um);
    m.read("spring_constant_n_per_m", s.sensor.spring_constant_n_per_m);
    m.read("interface_reflectivities", s.sensor.interface_reflectivities);
    m.finish();
  }
  {
    auto m = sim.child("contact");
    m.read("punch_radius_um", s.contact.punch_radius_um);
    m.read("poisson_ratio", s.contact.poisson_ratio);
    m.finish();
  }
  {
    auto m = sim.child("protocol");
    m.read("max_force_n", s.protocol.max_force_n);
    m.read("ascan_rate_hz", s.protocol.ascan_rate_hz);
    m.read("depth_pixels", s.protocol.depth_pixels);
    m.read("pixel_pitch_um", s.protocol.pixel_pitch_um);
    m.finish();
  }
  {
    auto m = sim.child("optics");
    m.read("effective_depth_um", s.optics.effective_depth_um);
    m.read("max_strain", s.optics.max_strain);
    m.read("psf_sigma_um", s.optics.psf_sigma_um);
    m.read("attenuation_per_mm", s.optics.attenuation_per_mm);
    m.read("scatterer_amplitude", s.optics.scatterer_amplitude);
    m.read("speckle_sigma", s.optics.speckle_sigma);
    m.read("additive_sigma", s.optics.additive_sigma);
    m.read("dynamic_range_db", s.optics.dynamic_range_db);
    m.read("noise", s.optics.noise);
    m.finish();
  }
  sim.finish();

  auto ds = root.child("dataset");
  ds.read("stride", c.dataset.stride);
  ds.read("split_policy", c.dataset.split_policy);
  ds.read("standardize_labels", c.dataset.standardize_labels);
  ds.finish();

  auto model = root.child("model");
  {
    auto m = model.child("convgru");
    m.read("hidden_channels", c.model.convgru.hidden_channels);
    m.read("kernel_width", c.model.convgru.kernel_width);
    m.read("stage_widths", c.model.convgru.stage_widths);
    m.finish();
  }
  {
    auto m = model.child("baseline");
    m.read("stem_width", c.model.baseline.stem_width);
    m.read("stage_widths", c.model.baseline.stage_widths);
    m.finish();
  }
  model.finish();

  auto tr = root.child("training");
  tr.read("models", c.training.models);
  tr.read("learning_rate", c.training.params.learning_rate);
  tr.read("batch_size", c.training.params.batch_size);
  tr.read("max_epochs", c.training.params.max_epochs);
  tr.read("patience", c.training.params.patience);
  tr.read("windows_per_epoch", c.training.params.windows_per_epoch);
  tr.read("bn_recalibration_windows", c.training.params.bn_recalibration_windows);
  tr.finish();

  auto ev = root.child("evaluation");
  ev.read("timing_passes", c.evaluation.timing_passes);
  ev.read("timing_warmup", c.evaluation.timing_warmup);
  ev.read("timing_batch", c.evaluation.timing_batch);
  ev.read("batch_size", c.evaluation.batch_size);
  ev.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = io::read_json(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read configuration " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json simulation_json(const sim::CampaignConfig& s) {
  return {{"concentrations", s.concentrations},
          {"phantoms_per_concentration", s.phantoms_per_concentration},
          {"indentations_per_phantom", s.indentations_per_phantom},
          {"loading_rate_min_mm_s", s.loading_rate_min_mm_s},
          {"loading_rate_max_mm_s", s.loading_rate_max_mm_s},
          {"scatterer_density_per_mm", s.scatterer_density},
          {"workers", s.workers},
          {"material",
           {{"reference_modulus_pa", s.material.reference_modulus_pa},
            {"reference_concentration", s.material.reference_concentration},
            {"exponent", s.material.exponent}}},
          {"sensor",
           {{"rest_length_um", s.sensor.rest_length_um},
            {"spring_constant_n_per_m", s.sensor.spring_constant_n_per_m},
            {"interface_reflectivities", s.sensor.interface_reflectivities}}},
          {"contact",
           {{"punch_radius_um", s.contact.punch_radius_um},
            {"poisson_ratio", s.contact.poisson_ratio}}},
          {"protocol",
           {{"max_force_n", s.protocol.max_force_n},
            {"ascan_rate_hz", s.protocol.ascan_rate_hz},
            {"depth_pixels", s.protocol.depth_pixels},
            {"pixel_pitch_um", s.protocol.pixel_pitch_um}}},
          {"optics",
           {{"effective_depth_um", s.optics.effective_depth_um},
            {"max_strain", s.optics.max_strain},
            {"psf_sigma_um", s.optics.psf_sigma_um},
            {"attenuation_per_mm", s.optics.attenuation_per_mm},
            {"scatterer_amplitude", s.optics.scatterer_amplitude},
            {"speckle_sigma", s.optics.speckle_sigma},
            {"additive_sigma", s.optics.additive_sigma},
            {"dynamic_range_db", s.optics.dynamic_range_db},
            {"noise", s.optics.noise}}}};
}

nlohmann::json model_json(const RunConfig& config, nets::ModelKind kind) {
  return kind == nets::ModelKind::ConvGRU ? config.model.convgru.to_json()
                                          : config.model.baseline.to_json();
}

nlohmann::json to_json(const RunConfig& c) {
  auto convgru = c.model.convgru.to_json();
  auto baseline = c.model.baseline.to_json();
  convgru.erase("sequence_length");
  baseline.erase("sequence_length");
  return {{"simulation", simulation_json(c.simulation)},
          {"dataset",
           {{"stride", c.dataset.stride},
            {"split_policy", c.dataset.split_policy},
            {"standardize_labels", c.dataset.standardize_labels}}},
          {"model", {{"convgru", convgru}, {"baseline", baseline}}},
          {"training",
           {{"models", c.training.models},
            {"learning_rate", c.training.params.learning_rate},
            {"batch_size", c.training.params.batch_size},
            {"max_epochs", c.training.params.max_epochs},
            {"patience", c.training.params.patience},
            {"windows_per_epoch", c.training.params.windows_per_epoch},
            {"bn_recalibration_windows", c.training.params.bn_recalibration_windows}}},
          {"evaluation",
           {{"timing_passes", c.evaluation.timing_passes},
            {"timing_warmup", c.evaluation.timing_warmup},
            {"timing_batch", c.evaluation.timing_batch},
            {"batch_size", c.evaluation.batch_size}}}};
}

}  // namespace oce::config
