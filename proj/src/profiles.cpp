#include "vppsim/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace vppsim {

double TimeSeries::at(double t_s) const {
  if (step_s <= 0.0) throw ParameterError("time series has no step");
  const double k = (t_s - start_s) / step_s;
  const auto idx = static_cast<long>(std::llround(k));
  if (std::abs(k - static_cast<double>(idx)) > 1e-6 || idx < 0 ||
      idx >= static_cast<long>(values.size()))
    throw ParameterError("time " + std::to_string(t_s) + " is not on the series grid");
  return values[static_cast<std::size_t>(idx)];
}

DayProfileSpec DayProfileSpec::defaults(Season season) {
  DayProfileSpec s;
  s.season = season;
  if (season == Season::winter) {
    s.mean_load_kw = 0.83;
    s.std_load_kw = 0.53;
    s.pv_peak_kw = 3.5;  // roughly 30% less irradiation than summer
  }
  return s;
}

void DayProfileSpec::validate() const {
  if (pv_peak_kw < 0.0 || pv_peak_kw > refs::p_ac_max_kw)
    throw ParameterError("pv_peak_kw must lie in [0, 5] kW");
  if (window_start_s < 8.0 * 3600.0 - 1e-9 || window_end_s > 19.5 * 3600.0 + 1e-9 ||
      window_start_s >= window_end_s)
    throw ParameterError("daylight window must lie within 08:00-19:30");
  if (mean_load_kw < 0.0 || std_load_kw < 0.0) throw ParameterError("load statistics must be >= 0");
}

namespace {

// Natural cubic spline: second derivatives from the standard tridiagonal
// system, zero curvature at both ends.
class NaturalSpline {
 public:
  NaturalSpline(const std::vector<double>& y, double h) : y_(y), h_(h) {
    const int n = static_cast<int>(y.size());
    m_.assign(n, 0.0);
    if (n < 3) return;
    std::vector<double> diag(n - 2, 4.0), rhs(n - 2);
    for (int i = 1; i <= n - 2; ++i)
      rhs[i - 1] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
    // Thomas algorithm with unit off-diagonals.
    for (int i = 1; i < n - 2; ++i) {
      const double w = 1.0 / diag[i - 1];
      diag[i] -= w;
      rhs[i] -= w * rhs[i - 1];
    }
    for (int i = n - 3; i >= 0; --i)
      m_[i + 1] = (rhs[i] - (i + 1 < n - 2 ? m_[i + 2] : 0.0)) / diag[i];
  }

  /// Evaluate within segment `seg` at local offset x in [0, h].
  double eval(int seg, double x) const {
    const double a = y_[seg];
    const double b = (y_[seg + 1] - y_[seg]) / h_ - h_ * (2.0 * m_[seg] + m_[seg + 1]) / 6.0;
    const double c = m_[seg] / 2.0;
    const double d = (m_[seg + 1] - m_[seg]) / (6.0 * h_);
    return a + x * (b + x * (c + x * d));
  }

 private:
  std::vector<double> y_;
  double h_;
  std::vector<double> m_;
};

std::vector<double> spline_grid(const std::vector<double>& knots, double knot_step,
                                int ratio) {
  NaturalSpline sp(knots, knot_step);
  const int n_seg = static_cast<int>(knots.size()) - 1;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_seg) * ratio + 1);
  for (int seg = 0; seg < n_seg; ++seg) {
    for (int k = 0; k < ratio; ++k)
      out.push_back(k == 0 ? knots[seg] : sp.eval(seg, knot_step * k / ratio));
  }
  out.push_back(knots.back());
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Raw diurnal demand shape over the window (morning level, midday dip,
// evening rise), before normalization.
double shape_raw(double u) { return 1.0 - 0.35 * std::sin(std::numbers::pi * u) + 0.55 * u * u; }

}  // namespace

TimeSeries upsample_spline(const TimeSeries& series, double target_step_s) {
  if (series.size() < 4) throw ParameterError("spline upsampling needs at least 4 points");
  if (target_step_s <= 0.0) throw ParameterError("target step must be positive");
  const double ratio_f = series.step_s / target_step_s;
  const int ratio = static_cast<int>(std::llround(ratio_f));
  if (ratio < 1 || std::abs(ratio_f - ratio) > 1e-9)
    throw ParameterError("target step must divide the input step");
  TimeSeries out;
  out.start_s = series.start_s;
  out.step_s = target_step_s;
  out.values = spline_grid(series.values, series.step_s, ratio);
  for (double& v : out.values) {
    if (!std::isfinite(v)) throw ParameterError("non-finite interpolant");
    if (v < 0.0) v = 0.0;
  }
  return out;
}

TimeSeries synth_load_day(const DayProfileSpec& spec, int household_index, std::uint64_t seed,
                          double step_s) {
  spec.validate();
  const double knot_step = 1800.0;
  const int ratio = static_cast<int>(std::llround(knot_step / step_s));
  if (ratio < 1 || std::abs(knot_step / step_s - ratio) > 1e-9)
    throw ParameterError("simulation step must divide the 30-minute knot step");
  const int n_knots = static_cast<int>(std::llround((spec.window_end_s - spec.window_start_s) /
                                                    knot_step)) + 1;
  if (n_knots < 4) throw ParameterError("daylight window too short for spline knots");

  // Shape normalized so the time average of its splined curve is exactly 1.
  std::vector<double> shape(n_knots);
  for (int i = 0; i < n_knots; ++i)
    shape[i] = shape_raw(static_cast<double>(i) / (n_knots - 1));
  {
    const double grid_mean = mean_of(spline_grid(shape, knot_step, ratio));
    for (double& s : shape) s /= grid_mean;
  }

  // Calibration: choose the shape amplitude and the lognormal variance so the
  // pooled mean/std over households and timesteps hit the spec targets after
  // spline smoothing. The spline is linear in the knot values, so its
  // variance transfer is computable from the knot basis responses.
  const double mean = spec.mean_load_kw;
  double sigma = 0.0;
  double beta = 1.0;
  if (mean > 0.0 && spec.std_load_kw > 0.0) {
    const double v_target = (spec.std_load_kw / mean) * (spec.std_load_kw / mean);
    std::vector<double> shape_grid = spline_grid(shape, knot_step, ratio);
    auto blended = [&](double b) {
      std::vector<double> s = shape;
      for (double& x : s) x = 1.0 + b * (x - 1.0);
      return s;
    };
    double v_shape = 0.0;
    for (double s : shape_grid) v_shape += (s - 1.0) * (s - 1.0);
    v_shape /= static_cast<double>(shape_grid.size());
    beta = v_shape > 0.0 ? std::min(1.0, std::sqrt(0.5 * v_target / v_shape)) : 1.0;
    const std::vector<double> s_b = blended(beta);

    // Basis responses: variance multiplier A = avg_t sum_i (w_i(t) s_i)^2.
    double a_coef = 0.0;
    {
      std::vector<double> acc(shape_grid.size(), 0.0);
      for (int i = 0; i < n_knots; ++i) {
        std::vector<double> unit(n_knots, 0.0);
        unit[i] = 1.0;
        const std::vector<double> w = spline_grid(unit, knot_step, ratio);
        for (std::size_t t = 0; t < w.size(); ++t) {
          const double c = w[t] * s_b[i];
          acc[t] += c * c;
        }
      }
      a_coef = mean_of(acc);
    }
    double v_shape_b = beta * beta * v_shape;
    const double v_noise = std::max(0.0, (v_target - v_shape_b) / std::max(a_coef, 1e-12));
    sigma = std::sqrt(std::log1p(v_noise));
  } else {
    beta = 0.0;  // zero requested variance: flat profile at the mean
  }

  Rng rng = Rng::derive(seed, "load-day", static_cast<std::uint64_t>(household_index));
  TimeSeries knots;
  knots.start_s = spec.window_start_s;
  knots.step_s = knot_step;
  knots.values.resize(n_knots);
  const double mu = -0.5 * sigma * sigma;
  for (int i = 0; i < n_knots; ++i) {
    const double s_b = 1.0 + beta * (shape[i] - 1.0);
    const double noise = sigma > 0.0 ? std::exp(mu + sigma * rng.normal()) : 1.0;
    knots.values[i] = mean * s_b * noise;
  }
  return upsample_spline(knots, step_s);
}

TimeSeries synth_pv_day(const DayProfileSpec& spec, std::uint64_t /*seed*/, double step_s) {
  spec.validate();
  if (step_s <= 0.0) throw ParameterError("step must be positive");
  TimeSeries out;
  out.start_s = spec.window_start_s;
  out.step_s = step_s;
  const int n = static_cast<int>(std::llround((spec.window_end_s - spec.window_start_s) / step_s)) + 1;
  out.values.resize(n);
  const double span = spec.window_end_s - spec.window_start_s;
  for (int i = 0; i < n; ++i) {
    const double t = out.start_s + i * step_s;
    const double u = (t - spec.window_start_s) / span;
    if (u <= 0.0 || u >= 1.0) continue;  // exactly zero at the window edges
    const double s = std::sin(std::numbers::pi * u);
    out.values[i] = s <= 0.0 ? 0.0 : spec.pv_peak_kw * std::pow(s, 1.3);
  }
  return out;
}

std::vector<int> allocate_households(int n_profiles, const std::vector<int>& node_ids) {
  if (n_profiles != 30) throw ParameterError("household allocation expects exactly 30 profiles");
  std::vector<int> mapping;
  mapping.reserve(node_ids.size());
  for (int node : node_ids) {
    if (node < 0) throw ParameterError("node ids must be non-negative");
    mapping.push_back(node % n_profiles);
  }
  return mapping;
}

std::vector<int> allocate_households(const std::vector<TimeSeries>& profiles,
                                     const std::vector<int>& node_ids) {
  return allocate_households(static_cast<int>(profiles.size()), node_ids);
}

std::vector<TimeSeries> load_ami_csv(const std::string& path, double target_step_s) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open AMI CSV: " + path);
  std::map<int, std::map<double, double>> by_household;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.find("timestamp") != std::string::npos) continue;  // header
    std::stringstream ss(line);
    std::string ts, id_s, kw_s;
    if (!std::getline(ss, ts, ',') || !std::getline(ss, id_s, ',') || !std::getline(ss, kw_s))
      throw ConfigError("AMI CSV line " + std::to_string(line_no) + ": expected 3 columns");
    int hh = 0, mm = 0;
    if (std::sscanf(ts.c_str(), "%d:%d", &hh, &mm) != 2)
      throw ConfigError("AMI CSV line " + std::to_string(line_no) + ": bad timestamp " + ts);
    const double t = hh * 3600.0 + mm * 60.0;
    try {
      by_household[std::stoi(id_s)][t] = std::stod(kw_s);
    } catch (const std::exception&) {
      throw ConfigError("AMI CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  std::vector<TimeSeries> result;
  for (const auto& [id, samples] : by_household) {
    if (samples.size() < 4)
      throw ConfigError("household " + std::to_string(id) + ": need at least 4 samples");
    TimeSeries ts;
    ts.start_s = samples.begin()->first;
    ts.step_s = 1800.0;
    double expected = ts.start_s;
    for (const auto& [t, kw] : samples) {
      if (std::abs(t - expected) > 1e-6)
        throw ConfigError("household " + std::to_string(id) + ": expected 30-minute cadence");
      ts.values.push_back(kw);
      expected += ts.step_s;
    }
    result.push_back(upsample_spline(ts, target_step_s));
  }
  return result;
}

}  // namespace vppsim
