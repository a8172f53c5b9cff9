#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "tridipole/cell_model.hpp"
#include "tridipole/profiles.hpp"

namespace tridipole::testing {

// Generator description of a synthetic cell. Everything below is ground truth
// for round-trip tests.
struct SyntheticSpec {
  double v_min = 3.0;
  double v_max = 3.5;
  double c_base = 4000.0;   // F
  double peak_v = 3.3;      // V
  double sigma = 0.04;      // V
  double delta_q = 15840.0; // C
  std::vector<RcGroup> rc{{0.010, 50.0}, {0.015, 1200.0}};
  double r0 = 0.045;        // ohm
  double r3 = 0.0;          // V / A^3
  std::size_t cap_points = 201;
  std::size_t resistor_points = 89;
};

inline double gaussian_mass(const SyntheticSpec& s) {
  const double a = (s.v_min - s.peak_v) / (s.sigma * std::numbers::sqrt2);
  const double b = (s.v_max - s.peak_v) / (s.sigma * std::numbers::sqrt2);
  return s.sigma * std::sqrt(std::numbers::pi / 2.0) * (std::erf(b) - std::erf(a));
}

// Bump height such that the analytic integral of C over the window is delta_q.
inline double bump_height(const SyntheticSpec& s) {
  return (s.delta_q - s.c_base * (s.v_max - s.v_min)) / gaussian_mass(s);
}

inline double true_capacitance(const SyntheticSpec& s, double v) {
  const double z = (v - s.peak_v) / s.sigma;
  return s.c_base + bump_height(s) * std::exp(-0.5 * z * z);
}

inline double true_resistor(const SyntheticSpec& s, double i) { return s.r0 * i + s.r3 * i * i * i; }

inline CellParameters make_cell(const SyntheticSpec& s) {
  std::vector<double> vg = linspace(s.v_min, s.v_max, s.cap_points);
  std::vector<double> cv;
  for (double v : vg) cv.push_back(true_capacitance(s, v));
  std::vector<double> ig = linspace(-kCurrentLimit, kCurrentLimit, s.resistor_points);
  std::vector<double> rv;
  for (double& i : ig) {
    if (std::abs(i) < 1e-12) i = 0.0;
    rv.push_back(true_resistor(s, i));
  }
  // Odd symmetry must hold bit for bit.
  for (std::size_t k = 0; k < ig.size() / 2; ++k) {
    ig[ig.size() - 1 - k] = -ig[k];
    rv[rv.size() - 1 - k] = -rv[k];
  }
  MonotoneCurve cap(vg, cv);
  const double dq = cap.integral();
  return CellParameters(std::move(cap), s.rc, MonotoneCurve(ig, rv), dq);
}

inline SyntheticSpec random_spec(std::uint64_t seed) {
  UniformSource rng(seed);
  SyntheticSpec s;
  s.c_base = rng.uniform(2500.0, 6000.0);
  s.peak_v = rng.uniform(3.2, 3.35);
  s.sigma = rng.uniform(0.03, 0.06);
  s.delta_q = rng.uniform(14000.0, 17500.0);
  s.rc = {{rng.uniform(0.005, 0.020), rng.uniform(30.0, 80.0)}, {rng.uniform(0.005, 0.020), rng.uniform(600.0, 2000.0)}};
  s.r0 = rng.uniform(0.030, 0.060);
  s.r3 = rng.uniform(0.0, 4e-6);
  return s;
}

// Charge delta_q at 1 A from empty, rest, discharge over t_empty, rest.
inline CurrentProfile round_trip_profile(const CellParameters& p, double rest = 6.0 * 3600.0,
                                         std::vector<double> pulses = {}) {
  IdentificationProfileSpec spec;
  spec.delta_q = p.delta_q();
  spec.t_empty = 6.0 * 3600.0;
  spec.rest_after_charge = rest;
  spec.rest_after_discharge = rest;
  spec.pulse_amplitudes = std::move(pulses);
  return identification_profile(spec).profile;
}

}  // namespace tridipole::testing
