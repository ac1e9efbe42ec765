#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vppsim/common.hpp"

namespace vppsim {

struct TimeSeries {
  double start_s = 0.0;  // seconds since midnight
  double step_s = 0.0;
  std::vector<double> values;  // kW

  double end_s() const { return start_s + step_s * (values.empty() ? 0 : values.size() - 1); }
  int size() const { return static_cast<int>(values.size()); }

  /// Value at an exact sample time; throws if t is off-grid.
  double at(double t_s) const;
};

enum class Season { summer, winter };

struct DayProfileSpec {
  Season season = Season::summer;
  double mean_load_kw = 0.77;
  double std_load_kw = 0.27;
  double pv_peak_kw = 5.0;
  double window_start_s = 8.0 * 3600.0;
  double window_end_s = 19.5 * 3600.0;

  static DayProfileSpec defaults(Season season);
  void validate() const;
};

/// Natural cubic spline through the input knots evaluated on the finer grid.
/// The target step must divide the input step; knot values are reproduced
/// exactly and negative interpolants are clamped to zero.
TimeSeries upsample_spline(const TimeSeries& series, double target_step_s);

/// Synthetic household demand for one day: lognormal multiplicative noise on
/// a diurnal base shape, generated at 30-minute knots and spline-upsampled.
/// Noise and shape are calibrated so the pooled mean/std over many households
/// match the spec targets after upsampling. Pure in (spec, index, seed).
TimeSeries synth_load_day(const DayProfileSpec& spec, int household_index, std::uint64_t seed,
                          double step_s = 30.0);

/// Clear-sky PV availability bell curve: zero outside the daylight window,
/// peaking at pv_peak_kw mid-window. The seed is accepted for interface
/// symmetry; the clear-sky curve is deterministic.
TimeSeries synth_pv_day(const DayProfileSpec& spec, std::uint64_t seed, double step_s = 30.0);

/// Modular household-to-node allocation: node n uses profile (n mod 30).
std::vector<int> allocate_households(int n_profiles, const std::vector<int>& node_ids);
std::vector<int> allocate_households(const std::vector<TimeSeries>& profiles,
                                     const std::vector<int>& node_ids);

/// AMI ingestion: CSV with columns `timestamp,household_id,kw`, 30-minute
/// cadence, timestamps as HH:MM. Returns one series per household (ordered
/// by id), upsampled to target_step_s on load.
std::vector<TimeSeries> load_ami_csv(const std::string& path, double target_step_s);

}  // namespace vppsim
