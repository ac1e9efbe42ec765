#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vppsim {

/// Invalid argument to an operation (bad dimensions, out-of-range values).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The network graph is unusable (disconnected, meshed where a tree is
/// required, singular reduced admittance).
class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration file failed to parse or validate.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A simulation run had to be aborted (e.g. power-flow divergence).
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reference voltage setpoints and inverter constants, in volts on the
// 230 V nominal phase base unless noted.
namespace refs {
inline constexpr double v_nom_v = 230.0;
inline constexpr double v_min_v = 207.0;
inline constexpr double v_db_v = 248.0;
inline constexpr double v_qmin_v = 253.0;
inline constexpr double v_cic_v = 255.85;
inline constexpr double v_trip_v = 257.0;
inline constexpr double v_max_legacy_v = 260.0;
inline constexpr double v_max_autonomous_v = 265.0;
inline constexpr double q_min_pu = 0.44;   // max reactive absorption, fraction of S
inline constexpr double p_min_pu = 0.2;    // Volt/Watt floor, fraction of available P
inline constexpr double tau_v_min = 1.5;   // Volt/VAr filter time constant, minutes
inline constexpr double tau_w_min = 3.5;   // Volt/Watt filter time constant, minutes
inline constexpr double s_rating_kva = 6.0;
inline constexpr double p_ac_max_kw = 5.0;
inline constexpr double load_power_factor = 0.95;  // leading
}  // namespace refs

/// Deterministic random stream. Thin xoshiro256** wrapper so that results
/// are bit-reproducible across platforms (std:: distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent child stream identified by a name and up to two indices.
  static Rng derive(std::uint64_t seed, std::string_view stream,
                    std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();
  double uniform01();                     // [0, 1)
  double uniform(double lo, double hi);
  double normal();                        // standard normal, polar method
  int uniform_int(int lo, int hi);        // inclusive bounds

  /// Cumulative-weight inversion. Returns -1 when all weights are zero.
  int pick_weighted(const std::vector<double>& weights);

 private:
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// FNV-1a 64-bit hash, used for run manifests and stream derivation.
std::uint64_t fnv1a64(std::string_view data);

/// Reactive power carried by a load at constant power factor, in the
/// signed-injection convention (leading loads inject vars into the grid).
double reactive_from_active_kw(double p_load_kw, double power_factor = refs::load_power_factor,
                               bool leading = true);

}  // namespace vppsim
