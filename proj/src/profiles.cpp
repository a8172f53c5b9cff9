#include "tridipole/profiles.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

std::size_t sample_count(double duration, double dt) {
  return static_cast<std::size_t>(std::max<long long>(1, std::llround(duration / dt)));
}

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorKind::Configuration, std::string(what) + " must be positive");
}

CurrentProfile from_samples(std::vector<double> current, double dt) {
  CurrentProfile p;
  p.timestamps.resize(current.size());
  for (std::size_t k = 0; k < current.size(); ++k) p.timestamps[k] = static_cast<double>(k) * dt;
  p.current = std::move(current);
  return p;
}

}  // namespace

UniformSource::UniformSource(std::uint64_t seed) : engine_(seed) {}

double UniformSource::next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double UniformSource::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = next();
  while (u1 <= 0.0) u1 = next();
  const double u2 = next();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

GeneratedProfile identification_profile(const IdentificationProfileSpec& spec) {
  require_positive(spec.sample_period, "sample period");
  require_positive(spec.delta_q, "delta_q");
  require_positive(spec.charge_current, "charge current");
  require_positive(spec.t_empty, "t_empty");
  require_positive(spec.rest_after_charge, "rest after charge");
  require_positive(spec.rest_after_discharge, "rest after discharge");
  if (spec.cycles < 1) throw Error(ErrorKind::Configuration, "at least one cycle is required");
  if (!spec.pulse_amplitudes.empty()) {
    require_positive(spec.pulse_duration, "pulse duration");
    require_positive(spec.pulse_rest, "pulse rest");
    for (double a : spec.pulse_amplitudes) require_positive(a, "pulse amplitude");
  }

  const double dt = spec.sample_period;
  const std::size_t n_charge = sample_count(spec.delta_q / spec.charge_current, dt);
  const std::size_t n_empty = sample_count(spec.t_empty, dt);
  const std::size_t n_rest1 = sample_count(spec.rest_after_charge, dt);
  const std::size_t n_rest2 = sample_count(spec.rest_after_discharge, dt);
  const double i_discharge = spec.delta_q / (static_cast<double>(n_empty) * dt);

  GeneratedProfile out;
  std::vector<double> i;
  if (!spec.pulse_amplitudes.empty()) {
    const std::size_t n_pulse = sample_count(spec.pulse_duration, dt);
    const std::size_t n_gap = sample_count(spec.pulse_rest, dt);
    i.push_back(0.0);
    for (double a : spec.pulse_amplitudes) {
      i.insert(i.end(), n_pulse, a);
      i.insert(i.end(), n_gap, 0.0);
      i.insert(i.end(), n_pulse, -a);
      i.insert(i.end(), n_gap, 0.0);
    }
  }
  for (std::size_t c = 0; c < spec.cycles; ++c) {
    // Trapezoid charge of a block of n equal samples is n * dt * I when zeros
    // surround it, and (n - 1/2) * dt * I when it opens the profile.
    const double effective = static_cast<double>(n_charge) - (i.empty() ? 0.5 : 0.0);
    const double i_charge = spec.delta_q / (effective * dt);
    i.insert(i.end(), n_charge, i_charge);
    i.insert(i.end(), n_rest1, 0.0);
    i.insert(i.end(), n_empty, -i_discharge);
    i.insert(i.end(), n_rest2, 0.0);
  }

  if (spec.slowest_tau > 0.0) {
    const double shortest = std::min(spec.rest_after_charge, spec.rest_after_discharge);
    if (shortest < 3.0 * spec.slowest_tau) {
      out.warnings.push_back("rest shorter than three times the slowest expected time constant; relaxation will be truncated");
    }
  }
  out.profile = from_samples(std::move(i), dt);
  return out;
}

CurrentProfile us06_like(double sample_period, std::uint64_t seed, double duration, double peak) {
  require_positive(sample_period, "sample period");
  require_positive(duration, "duration");
  require_positive(peak, "peak current");
  UniformSource rng(seed);

  struct Pulse {
    double start, width, amplitude;
  };
  std::vector<Pulse> pulses;
  double t = rng.uniform(0.0, 10.0);
  double largest = 0.0;
  while (true) {
    const double w1 = rng.uniform(3.0, 20.0);
    const double a1 = rng.uniform(5.0, peak);
    if (t + w1 > duration) break;
    pulses.push_back({t, w1, -a1});
    largest = std::max(largest, a1);
    t += w1 + rng.uniform(0.0, 5.0);
    if (rng.next() < 0.7) {
      const double w2 = rng.uniform(2.0, 15.0);
      // Regeneration never returns more than 90% of the preceding discharge.
      const double a2 = std::min(rng.uniform(2.0, 30.0), 0.9 * a1 * w1 / w2);
      if (t + w2 <= duration) {
        pulses.push_back({t, w2, a2});
        t += w2;
      }
    }
    t += rng.uniform(15.0, 60.0);
  }
  if (pulses.empty()) throw Error(ErrorKind::Configuration, "drive cycle duration too short for a pulse");

  const double scale = peak / largest;
  const std::size_t n = sample_count(duration, sample_period);
  std::vector<double> i(n, 0.0);
  for (const auto& p : pulses) {
    const auto first = static_cast<std::size_t>(std::ceil(p.start / sample_period));
    for (std::size_t k = first; k < n; ++k) {
      const double x = (static_cast<double>(k) * sample_period - p.start) / p.width;
      if (x > 1.0) break;
      const double s = std::sin(std::numbers::pi * x);
      i[k] += scale * p.amplitude * s * s;
    }
  }
  // The largest discharge pulse may fall between samples; pin the peak.
  const auto lowest = std::min_element(i.begin(), i.end());
  const double rescale = peak / -*lowest;
  for (double& x : i) x *= rescale;
  *lowest = -peak;
  return from_samples(std::move(i), sample_period);
}

GeneratedProfile validation_profile(const CurrentProfile& drive_cycle, double sample_period) {
  drive_cycle.validate();
  require_positive(sample_period, "sample period");
  const double dt = sample_period;
  const std::size_t n6 = sample_count(6.0 * 3600.0, dt);
  const std::size_t n12 = sample_count(12.0 * 3600.0, dt);
  const std::size_t n1 = sample_count(3600.0, dt);

  std::vector<double> i;
  i.reserve(2 * n6 + 2 * n12 + n1);
  i.insert(i.end(), n6, -0.4);
  i.insert(i.end(), n12, 0.0);
  i.insert(i.end(), n6, 0.4);
  i.insert(i.end(), n12, 0.0);

  GeneratedProfile out;
  const auto& ts = drive_cycle.timestamps;
  const auto& cs = drive_cycle.current;
  const double source_dt = ts[1] - ts[0];
  const double period = ts.back() - ts.front() + source_dt;
  for (std::size_t k = 0; k < n1; ++k) {
    const double tau = std::fmod(static_cast<double>(k) * dt, period) + ts.front();
    const auto hi = std::upper_bound(ts.begin(), ts.end(), tau);
    double value;
    if (hi == ts.end()) {
      const double w = (tau - ts.back()) / source_dt;
      value = cs.back() + w * (cs.front() - cs.back());
    } else {
      const auto j = static_cast<std::size_t>(hi - ts.begin());
      const double w = (tau - ts[j - 1]) / (ts[j] - ts[j - 1]);
      value = cs[j - 1] + w * (cs[j] - cs[j - 1]);
    }
    if (std::abs(value) > kCurrentLimit) {
      value = std::copysign(kCurrentLimit, value);
      ++out.clamped;
    }
    i.push_back(value);
  }
  if (out.clamped > 0) out.warnings.push_back(std::to_string(out.clamped) + " drive-cycle samples clamped to 44 A");
  out.profile = from_samples(std::move(i), dt);
  return out;
}

CurrentProfile constant_profile(double current, double duration, double sample_period) {
  require_positive(duration, "duration");
  require_positive(sample_period, "sample period");
  if (!std::isfinite(current)) throw Error(ErrorKind::Configuration, "current must be finite");
  return from_samples(std::vector<double>(sample_count(duration, sample_period) + 1, current), sample_period);
}

double max_frequency(const CurrentProfile& profile, double energy_fraction) {
  profile.validate();
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "energy fraction must lie in (0, 1]");
  }
  const std::size_t n = profile.size();
  const double dt = profile.timestamps[1] - profile.timestamps[0];
  for (std::size_t k = 1; k < n; ++k) {
    if (std::abs(profile.timestamps[k] - profile.timestamps[k - 1] - dt) > 1e-6 * dt) {
      throw Error(ErrorKind::InvalidInput, "non-uniform sampling at sample " + std::to_string(k) + "; resample required");
    }
  }

  std::vector<double> in(profile.current);
  const std::size_t bins = n / 2 + 1;
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out, FFTW_ESTIMATE);
  fftw_execute(plan);
  std::vector<double> energy(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double mag2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    energy[k] = unpaired ? mag2 : 2.0 * mag2;
  }
  fftw_destroy_plan(plan);
  fftw_free(out);

  double total = 0.0;
  for (double e : energy) total += e;
  if (total <= 0.0) return 0.0;
  const double target = energy_fraction * total;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    cumulative += energy[k];
    if (cumulative >= target * (1.0 - 1e-12)) return static_cast<double>(k) / (static_cast<double>(n) * dt);
  }
  return static_cast<double>(bins - 1) / (static_cast<double>(n) * dt);
}

}  // namespace tridipole
