#include "tridipole/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

struct Projection {
  Eigen::VectorXd coeffs;
  Eigen::VectorXd residual;
  double cost = 0.0;
};

Eigen::MatrixXd basis(const Eigen::VectorXd& t, const Eigen::VectorXd& log_tau) {
  Eigen::MatrixXd phi(t.size(), log_tau.size() + 1);
  phi.col(0).setOnes();
  for (Eigen::Index k = 0; k < log_tau.size(); ++k) {
    const double inv_tau = std::exp(-log_tau[k]);
    phi.col(k + 1) = (-t.array() * inv_tau).exp().matrix();
  }
  return phi;
}

}  // namespace

double ExponentialFit::operator()(double t) const {
  double y = offset;
  for (std::size_t i = 0; i < taus.size(); ++i) y += amplitudes[i] * std::exp(-t / taus[i]);
  return y;
}

ExponentialFit fit_exponentials(std::span<const double> t_in, std::span<const double> y_in,
                                std::span<const double> initial_taus, const ExponentialFitOptions& options) {
  const auto m = static_cast<Eigen::Index>(t_in.size());
  const auto n = static_cast<Eigen::Index>(initial_taus.size());
  if (t_in.size() != y_in.size()) throw Error(ErrorKind::InvalidInput, "fit data lengths differ");
  if (n < 1) throw Error(ErrorKind::InvalidInput, "fit needs at least one exponential");
  if (m < 2 * (n + 1)) throw Error(ErrorKind::Fit, "too few samples for the requested number of exponentials");

  const Eigen::Map<const Eigen::VectorXd> t(t_in.data(), m);
  const Eigen::Map<const Eigen::VectorXd> y(y_in.data(), m);

  double min_spacing = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < m; ++i) min_spacing = std::min(min_spacing, t[i] - t[i - 1]);
  const double span = t[m - 1] - t[0];
  const double log_lo = std::log(0.1 * min_spacing);
  const double log_hi = std::log(100.0 * span);

  Eigen::VectorXd theta(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(initial_taus[static_cast<std::size_t>(k)] > 0.0)) throw Error(ErrorKind::InvalidInput, "initial tau must be positive");
    theta[k] = std::clamp(std::log(initial_taus[static_cast<std::size_t>(k)]), log_lo, log_hi);
  }

  auto project = [&](const Eigen::VectorXd& th, Eigen::MatrixXd& phi,
                     Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    phi = basis(t, th);
    qr.compute(phi);
    Projection p;
    p.coeffs = qr.solve(y);
    p.residual = y - phi * p.coeffs;
    p.cost = p.residual.squaredNorm();
    return p;
  };

  Eigen::MatrixXd phi;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  Projection current = project(theta, phi, qr);
  const double data_scale = std::max(y.squaredNorm(), std::numeric_limits<double>::min());

  double lambda = 1e-3;
  ExponentialFit fit;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    if (current.cost <= 1e-28 * data_scale) {
      fit.converged = true;
      break;
    }
    // Kaufman approximation: J_k = -P_perp * dPhi/dtheta_k * c.
    Eigen::MatrixXd jac(m, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double inv_tau = std::exp(-theta[k]);
      Eigen::VectorXd d = current.coeffs[k + 1] * (t.array() * inv_tau).matrix().cwiseProduct(phi.col(k + 1));
      jac.col(k) = -(d - phi * qr.solve(d));
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * current.residual;

    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index k = 0; k < n; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      const Eigen::VectorXd delta = damped.ldlt().solve(-grad);
      Eigen::VectorXd trial = theta + delta;
      for (Eigen::Index k = 0; k < n; ++k) trial[k] = std::clamp(trial[k], log_lo, log_hi);
      Eigen::MatrixXd phi_trial;
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_trial;
      Projection next = project(trial, phi_trial, qr_trial);
      if (std::isfinite(next.cost) && next.cost < current.cost) {
        const double rel = (current.cost - next.cost) / current.cost;
        const double step = (trial - theta).cwiseAbs().maxCoeff();
        theta = trial;
        phi = std::move(phi_trial);
        qr = std::move(qr_trial);
        current = std::move(next);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < options.cost_tolerance || step < options.step_tolerance) fit.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      fit.converged = true;
      break;
    }
    if (fit.converged) {
      ++it;
      break;
    }
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return theta[static_cast<Eigen::Index>(a)] < theta[static_cast<Eigen::Index>(b)];
  });
  fit.offset = current.coeffs[0];
  for (std::size_t k : order) {
    fit.taus.push_back(std::exp(theta[static_cast<Eigen::Index>(k)]));
    fit.amplitudes.push_back(current.coeffs[static_cast<Eigen::Index>(k) + 1]);
  }
  fit.rms = std::sqrt(current.cost / static_cast<double>(m));
  fit.iterations = it;
  return fit;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {std::sqrt(lo * hi)};
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> weights) {
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    blocks.push_back({y[i], w, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double total = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / total;
      prev.weight = total;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

std::vector<double> centered_moving_average(std::span<const double> y, std::size_t halfwidth) {
  const std::size_t n = y.size();
  std::vector<double> out(n);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + y[i];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({halfwidth, i, n - 1 - i});
    out[i] = (prefix[i + h + 1] - prefix[i - h]) / static_cast<double>(2 * h + 1);
  }
  return out;
}

}  // namespace tridipole
