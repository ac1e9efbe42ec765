#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "vppsim/network.hpp"

namespace vppsim::test {

/// Radial chain: slack 0 - 1 - 2 - ... - (n-1), identical segments.
inline NetworkModel make_chain(int n_buses, double r_ohm, double x_ohm,
                               double base_voltage_v = 230.0, double base_power_kva = 1.0) {
  std::vector<Bus> buses;
  buses.push_back({0, BusKind::slack, false});
  for (int i = 1; i < n_buses; ++i) buses.push_back({i, BusKind::load, true});
  std::vector<Line> lines;
  for (int i = 1; i < n_buses; ++i) lines.push_back({i - 1, i, r_ohm, x_ohm});
  return NetworkModel(std::move(buses), std::move(lines), 0, base_voltage_v, base_power_kva);
}

/// Chain whose per-segment impedance is given in per unit on the
/// 230 V / 1 kVA base.
inline NetworkModel make_chain_pu(int n_buses, double r_pu, double x_pu) {
  const double zb = 230.0 * 230.0 / 1000.0;
  return make_chain(n_buses, r_pu * zb, x_pu * zb);
}

/// Closed-form single-line power flow: slack at 1 pu, series impedance z,
/// complex injection s at the far bus. Returns the far-bus complex voltage.
inline std::complex<double> two_bus_voltage(std::complex<double> z_pu,
                                            std::complex<double> s_pu) {
  // |V|^2 solves v^2 - v (1 + 2 Re(z s*)) + |z|^2 |s|^2 = 0; the physical
  // root is the one near 1, and V = v - conj(z) s.
  const double b = 1.0 + 2.0 * (z_pu * std::conj(s_pu)).real();
  const double c = std::norm(z_pu) * std::norm(s_pu);
  const double disc = b * b - 4.0 * c;
  const double v = (b + std::sqrt(disc)) / 2.0;
  return std::complex<double>(v, 0.0) - std::conj(z_pu) * s_pu;
}

}  // namespace vppsim::test
