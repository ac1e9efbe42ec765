#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vppsim/profiles.hpp"

using namespace vppsim;

namespace {

TimeSeries series(double start_s, double step_s, std::vector<double> values) {
  return TimeSeries{start_s, step_s, std::move(values)};
}

struct Pooled {
  double mean = 0.0;
  double stddev = 0.0;
};

Pooled pooled_stats(const DayProfileSpec& spec, int households, std::uint64_t seed) {
  double sum = 0.0, sq = 0.0;
  long count = 0;
  for (int h = 0; h < households; ++h) {
    const TimeSeries ts = synth_load_day(spec, h, seed);
    for (double v : ts.values) {
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  Pooled p;
  p.mean = sum / count;
  p.stddev = std::sqrt(std::max(sq / count - p.mean * p.mean, 0.0));
  return p;
}

}  // namespace

TEST_CASE("spline of a constant is constant") {
  const TimeSeries up = upsample_spline(series(0, 1800, {1.0, 1.0, 1.0, 1.0, 1.0}), 30);
  CHECK(up.values.size() == 4 * 60 + 1);
  for (double v : up.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spline reproduces knot values exactly") {
  const std::vector<double> knots = {0.4, 1.2, 0.9, 1.7, 0.6, 1.1};
  const TimeSeries up = upsample_spline(series(3600, 1800, knots), 60);
  for (std::size_t i = 0; i < knots.size(); ++i)
    CHECK(up.values[i * 30] == doctest::Approx(knots[i]).epsilon(1e-14));
}

TEST_CASE("natural spline of collinear points is the line itself") {
  std::vector<double> knots;
  for (int i = 0; i < 6; ++i) knots.push_back(0.2 + 0.1 * i);
  const TimeSeries up = upsample_spline(series(0, 1800, knots), 300);
  for (std::size_t i = 0; i < up.values.size(); ++i) {
    const double t = i * 300.0;
    CHECK(up.values[i] == doctest::Approx(0.2 + 0.1 * t / 1800.0).epsilon(1e-10));
  }
}

TEST_CASE("spline guards") {
  CHECK_THROWS_AS(upsample_spline(series(0, 1800, {1, 2, 3}), 30), ParameterError);
  CHECK_THROWS_AS(upsample_spline(series(0, 1800, {1, 2, 3, 4}), 700), ParameterError);
  // Negative undershoot is clamped.
  const TimeSeries up = upsample_spline(series(0, 1800, {0.0, 2.0, 0.0, 0.0, 2.0, 0.0}), 30);
  for (double v : up.values) CHECK(v >= 0.0);
}

TEST_CASE("summer pooled statistics hit the published values") {
  const DayProfileSpec spec = DayProfileSpec::defaults(Season::summer);
  const Pooled p = pooled_stats(spec, 400, 21);
  CHECK(p.mean > 0.69);
  CHECK(p.mean < 0.85);
  CHECK(p.stddev > 0.9 * spec.std_load_kw);
  CHECK(p.stddev < 1.1 * spec.std_load_kw);
}

TEST_CASE("winter pooled statistics hit the published values") {
  const DayProfileSpec spec = DayProfileSpec::defaults(Season::winter);
  const Pooled p = pooled_stats(spec, 400, 22);
  CHECK(p.mean > 0.75);
  CHECK(p.mean < 0.91);
  CHECK(p.stddev > 0.9 * spec.std_load_kw);
  CHECK(p.stddev < 1.1 * spec.std_load_kw);
}

TEST_CASE("zero requested deviation gives a flat profile at the mean") {
  DayProfileSpec spec = DayProfileSpec::defaults(Season::summer);
  spec.std_load_kw = 0.0;
  const TimeSeries ts = synth_load_day(spec, 0, 1);
  for (double v : ts.values) CHECK(v == doctest::Approx(spec.mean_load_kw).epsilon(1e-9));
}

TEST_CASE("load generation is pure in (spec, index, seed)") {
  const DayProfileSpec spec = DayProfileSpec::defaults(Season::summer);
  const TimeSeries a = synth_load_day(spec, 3, 99);
  const TimeSeries b = synth_load_day(spec, 3, 99);
  const TimeSeries c = synth_load_day(spec, 4, 99);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("pv curve: peak, window boundaries, non-negativity") {
  const DayProfileSpec summer = DayProfileSpec::defaults(Season::summer);
  const TimeSeries pv = synth_pv_day(summer, 1);
  CHECK(pv.at(8.0 * 3600) == 0.0);
  CHECK(pv.at(19.5 * 3600) == 0.0);
  double peak = 0.0;
  for (double v : pv.values) {
    CHECK(v >= 0.0);
    peak = std::max(peak, v);
  }
  CHECK(peak == doctest::Approx(5.0).epsilon(1e-12));

  const DayProfileSpec winter = DayProfileSpec::defaults(Season::winter);
  const TimeSeries wpv = synth_pv_day(winter, 1);
  double wpeak = 0.0;
  for (double v : wpv.values) wpeak = std::max(wpeak, v);
  CHECK(wpeak == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("household allocation follows the modular rule") {
  std::vector<int> nodes;
  for (int n = 0; n < 115; ++n) nodes.push_back(n);
  const std::vector<int> mapping = allocate_households(30, nodes);
  CHECK(mapping[0] == mapping[30]);
  CHECK(mapping[31] == 1);
  // 114 load nodes 1..114: every profile used 3 or 4 times.
  std::vector<int> counts(30, 0);
  for (int n = 1; n <= 114; ++n) ++counts[mapping[n]];
  for (int c : counts) {
    CHECK(c >= 3);
    CHECK(c <= 4);
  }
  CHECK_THROWS_AS(allocate_households(29, nodes), ParameterError);
}

TEST_CASE("AMI CSV ingestion upsamples 30-minute data") {
  const auto path = std::filesystem::temp_directory_path() / "vppsim_ami_test.csv";
  {
    std::ofstream out(path);
    out << "timestamp,household_id,kw\n";
    for (int hh = 0; hh < 2; ++hh)
      for (int k = 0; k < 5; ++k) {
        const int minutes = 8 * 60 + k * 30;
        char ts[16];
        std::snprintf(ts, sizeof(ts), "%02d:%02d", minutes / 60, minutes % 60);
        out << ts << ',' << hh << ',' << 0.5 + 0.1 * k + hh << "\n";
      }
  }
  const auto profiles = load_ami_csv(path.string(), 30);
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].step_s == 30);
  CHECK(profiles[0].values.size() == 4 * 60 + 1);
  CHECK(profiles[0].at(8 * 3600) == doctest::Approx(0.5));
  CHECK(profiles[1].at(8 * 3600) == doctest::Approx(1.5));
  std::filesystem::remove(path);
}
