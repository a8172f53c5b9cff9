#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tridipole {

/// y(t) = offset + sum_i amplitudes[i] * exp(-t / taus[i]), taus ascending.
struct ExponentialFit {
  double offset = 0.0;
  std::vector<double> amplitudes;
  std::vector<double> taus;
  double rms = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  double operator()(double t) const;
};

struct ExponentialFitOptions {
  std::size_t max_iterations = 200;
  double cost_tolerance = 1e-15;   // relative cost decrease treated as converged
  double step_tolerance = 1e-12;   // max |d log tau| treated as converged
};

/// Separable nonlinear least squares (variable projection): Levenberg-damped
/// Gauss-Newton on log(tau) with the Kaufman Jacobian, linear least squares
/// for offset and amplitudes. `t` is measured from the start of the decay.
ExponentialFit fit_exponentials(std::span<const double> t, std::span<const double> y,
                                std::span<const double> initial_taus, const ExponentialFitOptions& options = {});

/// `count` time constants log-spaced over [lo, hi].
std::vector<double> log_spaced(double lo, double hi, std::size_t count);

/// Least-squares nondecreasing fit (pool adjacent violators), optional weights.
std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> weights = {});

/// Centered moving average whose window shrinks symmetrically at the ends, so
/// affine sequences pass through unchanged.
std::vector<double> centered_moving_average(std::span<const double> y, std::size_t halfwidth);

}  // namespace tridipole
