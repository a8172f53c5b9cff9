#include "tridipole/estimator.hpp"

#include <cmath>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

Eigen::VectorXd to_vector(const CellState& s) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(s.v_dyn.size() + 1));
  x[0] = s.v_qst;
  for (std::size_t i = 0; i < s.v_dyn.size(); ++i) x[static_cast<Eigen::Index>(i + 1)] = s.v_dyn[i];
  return x;
}

CellState to_state(const Eigen::VectorXd& x) {
  CellState s;
  s.v_qst = x[0];
  s.v_dyn.assign(x.data() + 1, x.data() + x.size());
  return s;
}

void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace

EkfConfig EkfConfig::defaults(const CellState& initial) {
  const auto n = static_cast<Eigen::Index>(initial.v_dyn.size() + 1);
  EkfConfig cfg;
  cfg.process_noise = Eigen::MatrixXd::Identity(n, n) * 1e-8;
  cfg.measurement_noise = 1e-4;
  cfg.initial_covariance = Eigen::MatrixXd::Identity(n, n) * 1e-4;
  cfg.initial_covariance(0, 0) = 1e-2;
  cfg.initial_state = initial;
  return cfg;
}

void EkfConfig::validate(std::size_t rc_count) const {
  const auto n = static_cast<Eigen::Index>(rc_count + 1);
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Configuration, m); };
  if (initial_state.v_dyn.size() != rc_count) fail("initial state does not match the RC group count");
  if (process_noise.rows() != n || process_noise.cols() != n) fail("process noise matrix has the wrong size");
  if (initial_covariance.rows() != n || initial_covariance.cols() != n) fail("initial covariance has the wrong size");
  if (!(measurement_noise > 0.0) || !std::isfinite(measurement_noise)) fail("measurement noise must be positive");
  for (const auto* m : {&process_noise, &initial_covariance}) {
    try {
      check_covariance(*m);
    } catch (const Error& e) {
      fail(std::string("noise matrix rejected: ") + e.what());
    }
  }
}

EkfState EkfState::from_config(const EkfConfig& cfg) { return {cfg.initial_state, cfg.initial_covariance}; }

void check_covariance(const Eigen::MatrixXd& p, double tol) {
  if (!p.allFinite()) throw Error(ErrorKind::NumericalFailure, "covariance has non-finite entries");
  const double scale = std::max(p.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
    throw Error(ErrorKind::NumericalFailure, "covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -tol * scale) {
    throw Error(ErrorKind::NumericalFailure, "covariance lost positive semidefiniteness");
  }
}

Eigen::VectorXd transition_jacobian(const CellState& state, const CellParameters& params, double current, double dt) {
  const auto& cap = params.capacitance();
  const double v = state.v_qst;
  const double c0 = cap(v);
  const double v_mid = v + 0.5 * dt * current / c0;
  const double c_mid = cap(v_mid);
  const double dmid = 1.0 - 0.5 * dt * current * cap.slope(v) / (c0 * c0);

  Eigen::VectorXd f(static_cast<Eigen::Index>(params.rc_count() + 1));
  f[0] = 1.0 - dt * current * cap.slope(v_mid) / (c_mid * c_mid) * dmid;
  for (std::size_t i = 0; i < params.rc_count(); ++i) {
    f[static_cast<Eigen::Index>(i + 1)] = std::exp(-dt / params.rc_groups()[i].tau);
  }
  return f;
}

EkfState predict(const EkfState& ekf, const CellParameters& params, double current, double dt, const EkfConfig& cfg) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::Configuration, "predict requires dt > 0");
  const std::size_t n = substep_count(params, dt);
  const double h = dt / static_cast<double>(n);
  Eigen::VectorXd f = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(params.rc_count() + 1));
  CellState mean = ekf.mean;
  for (std::size_t k = 0; k < n; ++k) {
    f = f.cwiseProduct(transition_jacobian(mean, params, current, h));
    mean = step(mean, params, current, h).state;
  }
  EkfState out{std::move(mean), f.asDiagonal() * ekf.covariance * f.asDiagonal()};
  out.covariance += cfg.process_noise * dt;
  symmetrize(out.covariance);
  check_covariance(out.covariance);
  return out;
}

Correction correct(const EkfState& ekf, const CellParameters& params, double measured_v, double current,
                   const EkfConfig& cfg) {
  if (!std::isfinite(measured_v)) throw Error(ErrorKind::InvalidInput, "non-finite measured voltage");
  const Eigen::Index n = ekf.covariance.rows();
  const Eigen::MatrixXd& p = ekf.covariance;
  const Eigen::VectorXd ph = p.rowwise().sum();  // P H^T with H = ones
  const double s = ph.sum() + cfg.measurement_noise;
  if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::NumericalFailure, "innovation variance is not positive");

  Correction out;
  out.innovation = measured_v - output_voltage(ekf.mean, params, current).value;
  const Eigen::VectorXd gain = ph / s;
  Eigen::VectorXd x = to_vector(ekf.mean) + gain * out.innovation;

  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - gain * Eigen::RowVectorXd::Ones(n);
  out.state.covariance = a * p * a.transpose() + cfg.measurement_noise * gain * gain.transpose();
  symmetrize(out.state.covariance);
  check_covariance(out.state.covariance);

  const double lo = params.v_min() - params.voltage_guard();
  const double hi = params.v_max() + params.voltage_guard();
  if (x[0] < lo || x[0] > hi) {
    x[0] = std::clamp(x[0], lo, hi);
    out.clamped = true;
  }
  out.state.mean = to_state(x);
  return out;
}

double estimate_soc(const EkfState& ekf, const CellParameters& params) {
  return soc_from_vqst(params, ekf.mean.v_qst).value;
}

CellFilter::CellFilter(const CellParameters& params, EkfConfig cfg)
    : params_(&params), cfg_(std::move(cfg)), state_(EkfState::from_config(cfg_)) {
  cfg_.validate(params.rc_count());
}

FilterStep CellFilter::update(double time, double current, double voltage) {
  if (started_) {
    const double dt = time - last_time_;
    if (!(dt > 0.0)) throw Error(ErrorKind::InvalidInput, "filter samples must have increasing timestamps");
    state_ = predict(state_, *params_, 0.5 * (last_current_ + current), dt, cfg_);
  }
  Correction c = correct(state_, *params_, voltage, current, cfg_);
  state_ = std::move(c.state);
  started_ = true;
  last_time_ = time;
  last_current_ = current;
  return {time, estimate_soc(state_, *params_), c.innovation};
}

std::vector<FilterStep> run_filter(const CellParameters& params, const EkfConfig& cfg, const Trace& trace) {
  trace.validate();
  CellFilter filter(params, cfg);
  std::vector<FilterStep> out;
  out.reserve(trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out.push_back(filter.update(trace.timestamps[k], trace.current[k], trace.voltage[k]));
  }
  return out;
}

}  // namespace tridipole
