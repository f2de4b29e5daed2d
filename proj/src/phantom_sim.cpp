// SPDX-License-Identifier: Apache-2.0
#include "oce/phantom_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::sim {

double concentration_to_modulus(double concentration, const MaterialLaw& law) {
  if (!(concentration > 0.0)) {
    throw DomainError("concentration must be positive, got " + io::format_double(concentration));
  }
  return law.reference_modulus_pa *
         std::pow(concentration / law.reference_concentration, law.exponent);
}

void PhantomSpec::validate() const {
  if (!(concentration > 0.0)) throw DomainError("phantom concentration must be positive");
  if (!(youngs_modulus > 0.0)) throw DomainError("phantom modulus must be positive");
  if (!(scatterer_density >= 0.0)) throw DomainError("scatterer density must be non-negative");
}

PhantomSpec make_phantom(std::string phantom_id, double concentration,
                         std::uint64_t scatterer_seed, double scatterer_density,
                         const MaterialLaw& law) {
  PhantomSpec p;
  p.phantom_id = std::move(phantom_id);
  p.concentration = concentration;
  p.youngs_modulus = concentration_to_modulus(concentration, law);
  p.scatterer_seed = scatterer_seed;
  p.scatterer_density = scatterer_density;
  p.validate();
  return p;
}

void SensorSpec::validate() const {
  if (!(rest_length_um > 0.0)) throw DomainError("sensor rest length must be positive");
  if (!(spring_constant_n_per_m > 0.0)) throw DomainError("sensor spring constant must be positive");
  for (double r : interface_reflectivities) {
    if (!(r >= 0.0)) throw DomainError("interface reflectivities must be non-negative");
  }
}

double contact_stiffness(double youngs_modulus, const ContactModel& contact) {
  const double radius_m = contact.punch_radius_um * 1e-6;
  return 2.0 * radius_m * youngs_modulus / (1.0 - contact.poisson_ratio * contact.poisson_ratio);
}

void IndentationProtocol::validate() const {
  if (!(loading_rate_mm_s > 0.0)) throw ProtocolError("loading rate must be positive");
  if (!(max_force_n >= 0.0)) throw ProtocolError("max force must be non-negative");
  if (!(ascan_rate_hz > 0.0)) throw ProtocolError("A-scan rate must be positive");
  if (depth_pixels < 64) throw ProtocolError("depth must be at least 64 pixels");
  if (!(pixel_pitch_um > 0.0)) throw ProtocolError("pixel pitch must be positive");
}

void OpticsModel::validate() const {
  if (!(effective_depth_um > 0.0)) throw DomainError("effective depth must be positive");
  if (!(max_strain > 0.0 && max_strain < 1.0)) throw DomainError("max strain must lie in (0, 1)");
  if (!(psf_sigma_um > 0.0)) throw DomainError("PSF width must be positive");
  if (!(dynamic_range_db > 0.0)) throw DomainError("dynamic range must be positive");
  if (speckle_sigma < 0.0 || additive_sigma < 0.0 || attenuation_per_mm < 0.0) {
    throw DomainError("noise and attenuation parameters must be non-negative");
  }
}

QuasistaticState solve_quasistatic_state(double total_displacement_um, const PhantomSpec& phantom,
                                         const SensorSpec& sensor,
                                         const ContactModel& contact) {
  if (!(total_displacement_um >= 0.0)) {
    throw DomainError("total displacement must be non-negative, got " +
                      io::format_double(total_displacement_um));
  }
  const double k_sensor = sensor.spring_constant_n_per_m;
  const double k_sample = contact_stiffness(phantom.youngs_modulus, contact);
  QuasistaticState s;
  s.total_displacement_um = total_displacement_um;
  s.sample_indentation_um = total_displacement_um * k_sensor / (k_sensor + k_sample);
  s.sensor_deflection_um = total_displacement_um - s.sample_indentation_um;
  s.force_n = k_sensor * s.sensor_deflection_um * 1e-6;
  return s;
}

ScattererField make_scatterer_field(const PhantomSpec& phantom, const OpticsModel& optics) {
  std::mt19937_64 rng(phantom.scatterer_seed);
  const auto count = static_cast<std::size_t>(
      std::llround(phantom.scatterer_density * optics.effective_depth_um * 1e-3));
  std::uniform_real_distribution<double> depth(0.0, optics.effective_depth_um);
  std::uniform_real_distribution<double> gain(0.5, 1.5);
  ScattererField field;
  field.depth_um.reserve(count);
  field.amplitude.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    field.depth_um.push_back(depth(rng));
    field.amplitude.push_back(optics.scatterer_amplitude * gain(rng));
  }
  return field;
}

double interface_pixel(const QuasistaticState& state, const SensorSpec& sensor,
                       const IndentationProtocol& protocol) {
  return (sensor.rest_length_um - state.sensor_deflection_um) / protocol.pixel_pitch_um;
}

namespace {

void add_gaussian(std::vector<double>& profile, double center, double amplitude, double sigma) {
  const int m = static_cast<int>(profile.size());
  const int lo = std::max(0, static_cast<int>(std::floor(center - 4.0 * sigma)));
  const int hi = std::min(m - 1, static_cast<int>(std::ceil(center + 4.0 * sigma)));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = lo; i <= hi; ++i) {
    const double u = i - center;
    profile[static_cast<std::size_t>(i)] += amplitude * std::exp(-u * u * inv);
  }
}

}  // namespace

std::vector<float> render_ascan(const QuasistaticState& state, const PhantomSpec& phantom,
                                const ScattererField& field, const SensorSpec& sensor,
                                const IndentationProtocol& protocol, const OpticsModel& optics,
                                std::mt19937_64& rng) {
  (void)phantom;
  const int m = protocol.depth_pixels;
  const double pitch = protocol.pixel_pitch_um;
  const double surface = interface_pixel(state, sensor, protocol);
  if (!(surface >= 0.0 && surface < m)) {
    throw SimulationOverrun("epoxy/sample interface at pixel " + io::format_double(surface) +
                            " outside [0, " + std::to_string(m) + ")");
  }
  const double strain = state.sample_indentation_um / optics.effective_depth_um;
  if (strain >= optics.max_strain) {
    throw SimulationOverrun("sample strain " + io::format_double(strain) + " reached limit");
  }

  const double sigma_px = optics.psf_sigma_um / pitch;
  std::vector<double> profile(static_cast<std::size_t>(m), 0.0);
  add_gaussian(profile, 0.0, sensor.interface_reflectivities[0], sigma_px);
  add_gaussian(profile, surface, sensor.interface_reflectivities[1], sigma_px);
  const double stretch = (1.0 - strain) / pitch;
  const double mu_per_um = optics.attenuation_per_mm * 1e-3;
  for (std::size_t j = 0; j < field.depth_um.size(); ++j) {
    const double zeta = field.depth_um[j];
    const double center = surface + zeta * stretch;
    if (center > m + 4.0 * sigma_px) continue;
    add_gaussian(profile, center, field.amplitude[j] * std::exp(-mu_per_um * zeta), sigma_px);
  }

  if (optics.noise) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : profile) {
      v *= std::exp(optics.speckle_sigma * normal(rng));
      v = std::abs(v + optics.additive_sigma * normal(rng));
    }
  }

  std::vector<float> out(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double db = 10.0 * std::log10(std::max(profile[i], 1e-30));
    out[i] = static_cast<float>(std::clamp(1.0 + db / optics.dynamic_range_db, 0.0, 1.0));
  }
  return out;
}

std::vector<float> render_ascan(const QuasistaticState& state, const PhantomSpec& phantom,
                                const SensorSpec& sensor, const IndentationProtocol& protocol,
                                const OpticsModel& optics, std::mt19937_64& rng) {
  return render_ascan(state, phantom, make_scatterer_field(phantom, optics), sensor, protocol,
                      optics, rng);
}

std::string to_string(StopReason reason) {
  return reason == StopReason::MaxForce ? "max_force" : "overrun";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "max_force") return StopReason::MaxForce;
  if (s == "overrun") return StopReason::Overrun;
  throw ArtifactError("unknown stop reason: " + s);
}

IndentationRecording simulate_indentation(const PhantomSpec& phantom, const SensorSpec& sensor,
                                          const IndentationProtocol& protocol,
                                          std::uint64_t seed, const ContactModel& contact,
                                          const OpticsModel& optics, int min_frames) {
  phantom.validate();
  sensor.validate();
  protocol.validate();
  optics.validate();

  IndentationRecording rec;
  rec.phantom_id = phantom.phantom_id;
  rec.concentration = phantom.concentration;
  rec.depth = protocol.depth_pixels;
  rec.protocol = protocol;
  rec.noise_seed = seed;

  const ScattererField field = make_scatterer_field(phantom, optics);
  std::mt19937_64 rng(seed);
  const double um_per_frame = protocol.loading_rate_mm_s * 1e3 / protocol.ascan_rate_hz;
  // one hour of acquisition bounds runaway parameter sets
  const auto frame_cap = static_cast<long long>(3600.0 * protocol.ascan_rate_hz);

  for (long long t = 0;; ++t) {
    if (t >= frame_cap) throw ProtocolError("indentation did not terminate within one hour");
    const QuasistaticState state =
        solve_quasistatic_state(um_per_frame * static_cast<double>(t), phantom, sensor, contact);
    if (state.force_n >= protocol.max_force_n) {
      rec.stop_reason = StopReason::MaxForce;
      break;
    }
    std::vector<float> ascan;
    try {
      ascan = render_ascan(state, phantom, field, sensor, protocol, optics, rng);
    } catch (const SimulationOverrun&) {
      rec.stop_reason = StopReason::Overrun;
      break;
    }
    rec.ascans.insert(rec.ascans.end(), ascan.begin(), ascan.end());
    rec.total_displacement_um.push_back(state.total_displacement_um);
    rec.force_n.push_back(state.force_n);
    rec.sensor_deflection_um.push_back(state.sensor_deflection_um);
    rec.sample_indentation_um.push_back(state.sample_indentation_um);
  }
  rec.frames = static_cast<int>(rec.force_n.size());
  if (rec.frames < min_frames) {
    throw ProtocolError("indentation of " + phantom.phantom_id + " produced " +
                        std::to_string(rec.frames) + " A-scans, need at least " +
                        std::to_string(min_frames) + " (stop: " + to_string(rec.stop_reason) +
                        ")");
  }
  return rec;
}

void CampaignConfig::validate() const {
  if (concentrations.empty()) throw ConfigError("campaign needs at least one concentration");
  if (phantoms_per_concentration < 1 || indentations_per_phantom < 1) {
    throw ConfigError("campaign counts must be at least 1");
  }
  if (!(loading_rate_min_mm_s > 0.0 && loading_rate_min_mm_s <= loading_rate_max_mm_s)) {
    throw ConfigError("loading rate range must satisfy 0 < min <= max");
  }
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

namespace {

std::string phantom_name(double concentration, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "c%g_p%d", concentration, index);
  return buf;
}

}  // namespace

Campaign generate_campaign(const CampaignConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> rate(config.loading_rate_min_mm_s,
                                              config.loading_rate_max_mm_s);
  std::vector<PhantomSpec> phantoms;
  Campaign campaign;
  std::vector<std::size_t> phantom_of;  // per recording
  for (double c : config.concentrations) {
    for (int p = 0; p < config.phantoms_per_concentration; ++p) {
      phantoms.push_back(
          make_phantom(phantom_name(c, p), c, rng(), config.scatterer_density, config.material));
      for (int i = 0; i < config.indentations_per_phantom; ++i) {
        CampaignEntry e;
        e.phantom_id = phantoms.back().phantom_id;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "_i%02d", i);
        e.recording_id = e.phantom_id + buf;
        e.concentration = c;
        e.youngs_modulus = phantoms.back().youngs_modulus;
        e.scatterer_seed = phantoms.back().scatterer_seed;
        e.noise_seed = rng();
        e.loading_rate_mm_s = rate(rng);
        campaign.manifest.push_back(e);
        phantom_of.push_back(phantoms.size() - 1);
      }
    }
  }

  campaign.recordings.resize(campaign.manifest.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(campaign.manifest.size());
  auto work = [&] {
    for (std::size_t i = next++; i < campaign.manifest.size(); i = next++) {
      try {
        IndentationProtocol protocol = config.protocol;
        protocol.loading_rate_mm_s = campaign.manifest[i].loading_rate_mm_s;
        auto rec = simulate_indentation(phantoms[phantom_of[i]], config.sensor, protocol,
                                        campaign.manifest[i].noise_seed, config.contact,
                                        config.optics);
        rec.recording_id = campaign.manifest[i].recording_id;
        campaign.recordings[i] = std::move(rec);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (config.workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < config.workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < campaign.manifest.size(); ++i) {
    campaign.manifest[i].frames = campaign.recordings[i].frames;
    campaign.manifest[i].stop_reason = campaign.recordings[i].stop_reason;
  }
  return campaign;
}

nlohmann::json manifest_to_json(const std::vector<CampaignEntry>& manifest) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : manifest) {
    arr.push_back({{"recording_id", e.recording_id},
                   {"phantom_id", e.phantom_id},
                   {"concentration", e.concentration},
                   {"youngs_modulus_pa", e.youngs_modulus},
                   {"scatterer_seed", e.scatterer_seed},
                   {"noise_seed", e.noise_seed},
                   {"loading_rate_mm_s", e.loading_rate_mm_s},
                   {"frames", e.frames},
                   {"stop_reason", to_string(e.stop_reason)}});
  }
  return arr;
}

std::vector<CampaignEntry> manifest_from_json(const nlohmann::json& j) {
  std::vector<CampaignEntry> out;
  try {
    for (const auto& item : j) {
      CampaignEntry e;
      e.recording_id = item.at("recording_id").get<std::string>();
      e.phantom_id = item.at("phantom_id").get<std::string>();
      e.concentration = item.at("concentration").get<double>();
      e.youngs_modulus = item.at("youngs_modulus_pa").get<double>();
      e.scatterer_seed = item.at("scatterer_seed").get<std::uint64_t>();
      e.noise_seed = item.at("noise_seed").get<std::uint64_t>();
      e.loading_rate_mm_s = item.at("loading_rate_mm_s").get<double>();
      e.frames = item.at("frames").get<int>();
      e.stop_reason = stop_reason_from_string(item.at("stop_reason").get<std::string>());
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed campaign manifest: ") + e.what());
  }
  return out;
}

void write_recording(const std::filesystem::path& path, const IndentationRecording& recording) {
  auto out = io::open_for_write(path);
  out.write(kRecordingMagic, sizeof(kRecordingMagic));
  io::write_pod(out, kRecordingVersion);
  io::write_pod(out, static_cast<std::uint32_t>(recording.frames));
  io::write_pod(out, static_cast<std::uint32_t>(recording.depth));
  out.write(reinterpret_cast<const char*>(recording.ascans.data()),
            static_cast<std::streamsize>(recording.ascans.size() * sizeof(float)));
  if (!out) throw ArtifactError("write failed: " + path.string());
}

IndentationRecording read_recording(const std::filesystem::path& path) {
  auto in = io::open_for_read(path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kRecordingMagic)) {
    throw ArtifactError("not a recording file: " + path.string());
  }
  if (io::read_pod<std::uint32_t>(in) != kRecordingVersion) {
    throw ArtifactError("unsupported recording version: " + path.string());
  }
  IndentationRecording rec;
  rec.frames = static_cast<int>(io::read_pod<std::uint32_t>(in));
  rec.depth = static_cast<int>(io::read_pod<std::uint32_t>(in));
  rec.ascans.resize(static_cast<std::size_t>(rec.frames) * rec.depth);
  in.read(reinterpret_cast<char*>(rec.ascans.data()),
          static_cast<std::streamsize>(rec.ascans.size() * sizeof(float)));
  if (!in) throw ArtifactError("truncated recording: " + path.string());
  rec.recording_id = path.stem().string();
  return rec;
}

void write_campaign(const std::filesystem::path& dir, const Campaign& campaign,
                    const nlohmann::json& stamp) {
  std::filesystem::create_directories(dir);
  for (const auto& rec : campaign.recordings) {
    write_recording(dir / (rec.recording_id + ".bin"), rec);
    std::ostringstream csv;
    csv << "time_s,total_displacement_um,force_n,sensor_deflection_um,sample_indentation_um\n";
    for (int t = 0; t < rec.frames; ++t) {
      const auto i = static_cast<std::size_t>(t);
      csv << io::format_double(t / rec.protocol.ascan_rate_hz) << ','
          << io::format_double(rec.total_displacement_um[i]) << ','
          << io::format_double(rec.force_n[i]) << ','
          << io::format_double(rec.sensor_deflection_um[i]) << ','
          << io::format_double(rec.sample_indentation_um[i]) << '\n';
    }
    io::write_text(dir / (rec.recording_id + ".traces.csv"), csv.str());
  }
  io::write_json(dir / "manifest.json",
                 {{"stamp", stamp}, {"recordings", manifest_to_json(campaign.manifest)}});
}

}  // namespace oce::sim
