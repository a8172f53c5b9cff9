#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tridipole/trace.hpp"

namespace tridipole {

inline constexpr double kCurrentLimit = 44.0;  // A, 10C for a 4.4 Ah cell

struct GeneratedProfile {
  CurrentProfile profile;
  std::vector<std::string> warnings;
  std::size_t clamped = 0;  // samples limited to +/- kCurrentLimit
};

/// Reservoir-shape procedure: charge delta_q, rest, discharge delta_q at
/// delta_q / t_empty, rest; optionally cycled. Optional +/- pulse pairs at
/// `pulse_amplitudes` are prepended to expose the instantaneous resistor at
/// several currents.
struct IdentificationProfileSpec {
  double sample_period = 1.0;               // s
  double delta_q = 15840.0;                 // C
  double charge_current = 1.0;              // A, trimmed so the charge is exactly delta_q
  double t_empty = 6.0 * 3600.0;            // s
  double rest_after_charge = 12.0 * 3600.0; // s
  double rest_after_discharge = 12.0 * 3600.0;
  std::size_t cycles = 1;
  std::vector<double> pulse_amplitudes;     // A
  double pulse_duration = 30.0;             // s
  double pulse_rest = 600.0;                // s
  double slowest_tau = 0.0;                 // s; rests shorter than 3x this are flagged
};

GeneratedProfile identification_profile(const IdentificationProfileSpec& spec);

/// Band-limited drive-cycle stand-in: smooth discharge pulses each optionally
/// followed by a smaller regenerative pulse, idle gaps in between. Peak
/// discharge is exactly `peak`; the running charge never goes positive.
CurrentProfile us06_like(double sample_period, std::uint64_t seed, double duration = 600.0, double peak = kCurrentLimit);

/// 6 h discharge at 0.4 A, 12 h rest, 6 h charge at 0.4 A, 12 h rest, then one
/// hour of the drive cycle repeated six times and clamped to +/- 44 A.
/// The source is resampled periodically by linear interpolation.
GeneratedProfile validation_profile(const CurrentProfile& drive_cycle, double sample_period = 1.0);

CurrentProfile constant_profile(double current, double duration, double sample_period);

/// Smallest frequency whose one-sided DFT band [0, f] holds at least
/// `energy_fraction` of the spectral energy. Throws InvalidInput on
/// non-uniform sampling (resample first).
double max_frequency(const CurrentProfile& profile, double energy_fraction = 0.999);

/// Deterministic uniform [0, 1) from a 64-bit Mersenne twister; identical on
/// every platform, unlike std::uniform_real_distribution.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed);
  double next();
  double uniform(double lo, double hi) { return lo + (hi - lo) * next(); }
  double gaussian();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tridipole
