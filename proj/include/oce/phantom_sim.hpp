// SPDX-License-Identifier: Apache-2.0
//
// Synthetic OCT indentation recordings.
//
// A flat-tip needle carries a compliant epoxy sensor at its tip. The fiber end
// images both the sensor (fiber/epoxy and epoxy/sample interfaces) and the
// gelatin layer below it. Moving the needle by a total displacement d splits
// into sensor deflection and sample indentation according to a series-spring
// model; the rendered A-scan shows the epoxy/sample interface moving towards
// the fiber and the sample's scatterers compressing uniformly.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace oce::sim {

/// Power law E = reference_modulus * (c / reference_concentration)^exponent.
struct MaterialLaw {
  double reference_modulus_pa = 10e3;
  double reference_concentration = 10.0;
  double exponent = 2.0;
};

/// Young's modulus [Pa] of a gelatin phantom with the given weight ratio [wt%].
double concentration_to_modulus(double concentration, const MaterialLaw& law = {});

struct PhantomSpec {
  std::string phantom_id;
  double concentration = 10.0;  // wt%
  double youngs_modulus = 10e3;  // Pa
  std::uint64_t scatterer_seed = 0;
  double scatterer_density = 200.0;  // scatterers per mm of material depth

  void validate() const;
};

PhantomSpec make_phantom(std::string phantom_id, double concentration,
                         std::uint64_t scatterer_seed, double scatterer_density,
                         const MaterialLaw& law = {});

struct SensorSpec {
  double rest_length_um = 800.0;        // optical path fiber -> epoxy/sample at zero load
  double spring_constant_n_per_m = 8.0;  // lumped stiffness of the epoxy cylinder
  std::array<double, 2> interface_reflectivities{0.8, 0.5};  // fiber/epoxy, epoxy/sample

  void validate() const;
};

/// Flat cylindrical punch on an elastic half-space.
struct ContactModel {
  double punch_radius_um = 150.0;
  double poisson_ratio = 0.49;
};

/// k = 2 a E / (1 - nu^2) in N/m.
double contact_stiffness(double youngs_modulus, const ContactModel& contact = {});

struct IndentationProtocol {
  double loading_rate_mm_s = 0.3;
  double max_force_n = 6.4e-4;
  double ascan_rate_hz = 5500.0;
  int depth_pixels = 512;
  double pixel_pitch_um = 6.5;

  void validate() const;
};

/// Image formation constants.
struct OpticsModel {
  double effective_depth_um = 2000.0;  // L_eff: thickness carrying the uniform strain
  double max_strain = 0.5;             // renderable strain limit (exclusive)
  double psf_sigma_um = 6.5;           // axial Gaussian point-spread width
  double attenuation_per_mm = 1.0;     // along material depth
  double scatterer_amplitude = 0.02;
  double speckle_sigma = 0.2;    // log-normal multiplicative noise
  double additive_sigma = 0.01;  // Gaussian, fraction of full scale
  double dynamic_range_db = 50.0;
  bool noise = true;

  void validate() const;
};

struct QuasistaticState {
  double total_displacement_um = 0.0;
  double force_n = 0.0;
  double sensor_deflection_um = 0.0;
  double sample_indentation_um = 0.0;
};

/// Series springs: sensor k_s and sample contact k_t share the imposed displacement.
QuasistaticState solve_quasistatic_state(double total_displacement_um, const PhantomSpec& phantom,
                                         const SensorSpec& sensor,
                                         const ContactModel& contact = {});

/// Material-coordinate scatterers of one phantom: depth below the sample
/// surface in the unloaded state and reflectivity. Fixed by the scatterer seed.
struct ScattererField {
  std::vector<double> depth_um;
  std::vector<double> amplitude;
};

ScattererField make_scatterer_field(const PhantomSpec& phantom, const OpticsModel& optics);

/// Pixel position of the epoxy/sample interface (fiber/epoxy sits at pixel 0).
double interface_pixel(const QuasistaticState& state, const SensorSpec& sensor,
                       const IndentationProtocol& protocol);

/// One log-compressed A-scan in [0, 1] of length protocol.depth_pixels.
/// Throws SimulationOverrun when the interface leaves [0, m) or the sample
/// strain reaches optics.max_strain.
std::vector<float> render_ascan(const QuasistaticState& state, const PhantomSpec& phantom,
                                const ScattererField& field, const SensorSpec& sensor,
                                const IndentationProtocol& protocol, const OpticsModel& optics,
                                std::mt19937_64& rng);

std::vector<float> render_ascan(const QuasistaticState& state, const PhantomSpec& phantom,
                                const SensorSpec& sensor, const IndentationProtocol& protocol,
                                const OpticsModel& optics, std::mt19937_64& rng);

enum class StopReason { MaxForce, Overrun };

std::string to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& s);

struct IndentationRecording {
  std::string recording_id;
  std::string phantom_id;
  double concentration = 0.0;
  int frames = 0;  // T
  int depth = 0;   // m
  std::vector<float> ascans;  // T x m, time-major
  std::vector<double> total_displacement_um;
  std::vector<double> force_n;
  std::vector<double> sensor_deflection_um;
  std::vector<double> sample_indentation_um;
  IndentationProtocol protocol;
  std::uint64_t noise_seed = 0;
  StopReason stop_reason = StopReason::MaxForce;

  std::span<const float> ascan(int t) const {
    return {ascans.data() + static_cast<std::size_t>(t) * depth, static_cast<std::size_t>(depth)};
  }
};

/// Quasi-static loading at protocol.loading_rate, one A-scan per 1/ascan_rate,
/// until the force reaches max_force or the geometry overruns. Fewer than
/// `min_frames` frames is a ProtocolError.
IndentationRecording simulate_indentation(const PhantomSpec& phantom, const SensorSpec& sensor,
                                          const IndentationProtocol& protocol,
                                          std::uint64_t seed, const ContactModel& contact = {},
                                          const OpticsModel& optics = {}, int min_frames = 64);

struct CampaignConfig {
  std::vector<double> concentrations{10, 12, 14, 16, 18, 20};
  int phantoms_per_concentration = 3;
  int indentations_per_phantom = 15;
  double loading_rate_min_mm_s = 0.1;
  double loading_rate_max_mm_s = 0.5;
  double scatterer_density = 200.0;
  IndentationProtocol protocol;  // loading rate drawn per indentation
  SensorSpec sensor;
  ContactModel contact;
  OpticsModel optics;
  MaterialLaw material;
  int workers = 1;

  void validate() const;
};

struct CampaignEntry {
  std::string recording_id;
  std::string phantom_id;
  double concentration = 0.0;
  double youngs_modulus = 0.0;
  std::uint64_t scatterer_seed = 0;
  std::uint64_t noise_seed = 0;
  double loading_rate_mm_s = 0.0;
  int frames = 0;
  StopReason stop_reason = StopReason::MaxForce;
};

struct Campaign {
  std::vector<IndentationRecording> recordings;
  std::vector<CampaignEntry> manifest;
};

/// All seeds and loading rates are drawn up front from one generator seeded with
/// `seed`, so the result is independent of `config.workers`.
Campaign generate_campaign(const CampaignConfig& config, std::uint64_t seed);

nlohmann::json manifest_to_json(const std::vector<CampaignEntry>& manifest);
std::vector<CampaignEntry> manifest_from_json(const nlohmann::json& j);

// Recording file: little-endian
//   char[8] magic "OCEREC01" | u32 version (=1) | u32 T | u32 m | float32[T*m] row-major
inline constexpr char kRecordingMagic[8] = {'O', 'C', 'E', 'R', 'E', 'C', '0', '1'};
inline constexpr std::uint32_t kRecordingVersion = 1;

void write_recording(const std::filesystem::path& path, const IndentationRecording& recording);
/// Reads the A-scan matrix; metadata fields other than frames/depth stay default.
IndentationRecording read_recording(const std::filesystem::path& path);

/// Writes <dir>/<recording_id>.bin, <dir>/<recording_id>.traces.csv and
/// <dir>/manifest.json ({"stamp": ..., "recordings": [...]}).
void write_campaign(const std::filesystem::path& dir, const Campaign& campaign,
                    const nlohmann::json& stamp);

}  // namespace oce::sim
