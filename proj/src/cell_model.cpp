#include "tridipole/cell_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

constexpr double kGuardSlack = 1e-12;

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw Error(ErrorKind::InvalidInput, std::string("non-finite ") + what);
}

void require_consistent(const CellState& state, const CellParameters& params) {
  if (state.v_dyn.size() != params.rc_count()) {
    throw Error(ErrorKind::InvalidInput, "state has " + std::to_string(state.v_dyn.size()) +
                                             " dynamic components, parameters have " +
                                             std::to_string(params.rc_count()));
  }
  require_finite(state.v_qst, "v_qst");
  for (double v : state.v_dyn) require_finite(v, "dynamic voltage");
}

}  // namespace

CellParameters::CellParameters(MonotoneCurve capacitance, std::vector<RcGroup> rc_groups, MonotoneCurve resistor,
                               double nominal_capacity, double voltage_guard)
    : capacitance_(std::move(capacitance)),
      rc_groups_(std::move(rc_groups)),
      resistor_(std::move(resistor)),
      nominal_capacity_(nominal_capacity),
      voltage_guard_(voltage_guard) {
  if (capacitance_.empty()) throw Error(ErrorKind::InvalidParameters, "missing capacitance curve");
  delta_q_ = capacitance_.integral();
  nominal_voltage_ = capacitance_.argmax();
  validate();
}

CellParameters::CellParameters(MonotoneCurve capacitance, std::vector<RcGroup> rc_groups, MonotoneCurve resistor,
                               double delta_q, double nominal_capacity, double nominal_voltage,
                               double voltage_guard)
    : capacitance_(std::move(capacitance)),
      rc_groups_(std::move(rc_groups)),
      resistor_(std::move(resistor)),
      delta_q_(delta_q),
      nominal_capacity_(nominal_capacity),
      nominal_voltage_(nominal_voltage),
      voltage_guard_(voltage_guard) {
  validate();
}

void CellParameters::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidParameters, msg); };
  if (capacitance_.empty() || resistor_.empty()) fail("capacitance and resistor curves are required");
  if (!(v_min() < v_max())) fail("v_min must be below v_max");
  if (!(capacitance_.min_value() > 0.0)) fail("capacitance must be strictly positive");
  for (std::size_t i = 0; i < rc_groups_.size(); ++i) {
    const auto& g = rc_groups_[i];
    if (!(g.r > 0.0) || !std::isfinite(g.r)) fail("RC group resistance must be positive");
    if (!(g.tau > 0.0) || !std::isfinite(g.tau)) fail("RC group time constant must be positive");
    if (i > 0 && !(g.tau > rc_groups_[i - 1].tau)) fail("RC groups must have strictly increasing tau");
  }
  if (!(resistor_.front() < 0.0 && resistor_.back() > 0.0)) fail("resistor curve must span negative and positive currents");
  if (std::abs(resistor_.front() + resistor_.back()) > 1e-9 * resistor_.back()) {
    fail("resistor curve must cover a symmetric current range");
  }
  if (resistor_(0.0) != 0.0) fail("resistor curve must pass through (0, 0)");
  const auto rv = resistor_.values();
  if (!std::is_sorted(rv.begin(), rv.end())) fail("resistor curve must be nondecreasing");
  const double integral = capacitance_.integral();
  if (!(delta_q_ > 0.0) || std::abs(delta_q_ - integral) > 1e-9 * std::abs(integral)) {
    fail("delta_q must equal the integral of the capacitance curve");
  }
  const double peak = capacitance_.argmax();
  if (std::abs(nominal_voltage_ - peak) > 1e-12 * std::max(1.0, std::abs(peak))) {
    fail("nominal voltage must be the abscissa of the capacitance maximum");
  }
  if (!(nominal_capacity_ > 0.0) || !std::isfinite(nominal_capacity_)) fail("nominal capacity must be positive");
  if (!(voltage_guard_ >= 0.0) || !std::isfinite(voltage_guard_)) fail("voltage guard must be nonnegative");
}

double CellParameters::tau_min() const {
  if (rc_groups_.empty()) return std::numeric_limits<double>::infinity();
  return rc_groups_.front().tau;
}

double CellParameters::max_step() const { return tau_min() / 5.0; }

double CellState::v_dyn_total() const { return std::accumulate(v_dyn.begin(), v_dyn.end(), 0.0); }

Flagged<double> output_voltage(const CellState& state, const CellParameters& params, double current) {
  require_consistent(state, params);
  require_finite(current, "current");
  const CurveSample ist = params.resistor().evaluate(current);
  return {state.v_qst + state.v_dyn_total() + ist.value, ist.out_of_range};
}

StepResult step(const CellState& state, const CellParameters& params, double current, double dt) {
  require_consistent(state, params);
  require_finite(current, "current");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::Configuration, "step requires dt > 0");
  if (dt > params.max_step() * (1.0 + kGuardSlack)) {
    throw Error(ErrorKind::Configuration, "dt = " + std::to_string(dt) + " s exceeds tau_min/5 = " +
                                              std::to_string(params.max_step()) + " s");
  }

  StepResult out;
  const auto& cap = params.capacitance();
  const double v = state.v_qst;
  const double v_mid = v + 0.5 * dt * current / cap(v);
  double v_next = v + dt * current / cap(v_mid);

  const double lo = params.v_min() - params.voltage_guard();
  const double hi = params.v_max() + params.voltage_guard();
  if (v_next < lo || v_next > hi) {
    out.saturated = true;
    v_next = std::clamp(v_next, lo, hi);
  }
  out.state.v_qst = v_next;

  const auto& groups = params.rc_groups();
  out.state.v_dyn.resize(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double decay = std::exp(-dt / groups[i].tau);
    out.state.v_dyn[i] = state.v_dyn[i] * decay + groups[i].r * current * (1.0 - decay);
  }
  return out;
}

std::size_t substep_count(const CellParameters& params, double dt) {
  const double h = params.max_step();
  if (!std::isfinite(h)) return 1;
  const double n = std::ceil(dt / h - kGuardSlack);
  return static_cast<std::size_t>(std::max(1.0, n));
}

StepResult advance(const CellState& state, const CellParameters& params, double current, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::Configuration, "advance requires dt > 0");
  const std::size_t n = substep_count(params, dt);
  const double h = dt / static_cast<double>(n);
  StepResult out{state, false};
  for (std::size_t k = 0; k < n; ++k) {
    StepResult next = step(out.state, params, current, h);
    out.state = std::move(next.state);
    out.saturated = out.saturated || next.saturated;
  }
  return out;
}

double v_dyn_steady(const CellParameters& params, double current) {
  require_finite(current, "current");
  double sum_r = 0.0;
  for (const auto& g : params.rc_groups()) sum_r += g.r;
  return sum_r * current;
}

Flagged<double> soc_from_vqst(const CellParameters& params, double v_qst) {
  require_finite(v_qst, "v_qst");
  const double dq = params.delta_q();
  if (!(dq > 0.0)) throw Error(ErrorKind::InvalidParameters, "delta_q must be positive");
  if (v_qst <= params.v_min()) return {0.0, v_qst < params.v_min()};
  if (v_qst >= params.v_max()) return {1.0, v_qst > params.v_max()};
  const double soc = params.capacitance().integral(params.v_min(), v_qst) / dq;
  return {std::clamp(soc, 0.0, 1.0), false};
}

double vqst_from_soc(const CellParameters& params, double soc) {
  require_finite(soc, "soc");
  if (soc < 0.0 || soc > 1.0) throw Error(ErrorKind::InvalidInput, "soc must lie in [0, 1]");
  double lo = params.v_min();
  double hi = params.v_max();
  if (soc <= 0.0) return lo;
  if (soc >= 1.0) return hi;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (soc_from_vqst(params, mid).value < soc) lo = mid; else hi = mid;
  }
  return hi;
}

Flagged<std::vector<double>> coulomb_count(std::span<const double> timestamps, std::span<const double> current,
                                           double c_n, double soc0) {
  if (timestamps.size() != current.size()) throw Error(ErrorKind::InvalidInput, "timestamps and current differ in length");
  if (!(c_n > 0.0)) throw Error(ErrorKind::InvalidInput, "nominal capacity must be positive");
  if (!(soc0 >= 0.0 && soc0 <= 1.0)) throw Error(ErrorKind::InvalidInput, "initial soc must lie in [0, 1]");
  Flagged<std::vector<double>> out;
  out.value.resize(timestamps.size());
  if (timestamps.empty()) return out;
  double charge = 0.0;
  out.value[0] = soc0;
  for (std::size_t k = 1; k < timestamps.size(); ++k) {
    charge += 0.5 * (current[k - 1] + current[k]) * (timestamps[k] - timestamps[k - 1]);
    out.value[k] = soc0 + charge / c_n;
    if (out.value[k] < 0.0 || out.value[k] > 1.0) out.out_of_range = true;
  }
  return out;
}

Simulation simulate(const CellParameters& params, const CurrentProfile& profile, const CellState& initial) {
  profile.validate();
  require_consistent(initial, params);
  const std::size_t n = profile.size();
  Simulation sim;
  sim.trace.timestamps = profile.timestamps;
  sim.trace.current = profile.current;
  sim.trace.voltage.resize(n);
  sim.v_qst.resize(n);
  sim.v_dyn.resize(n);

  CellState state = initial;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double dt = profile.timestamps[k] - profile.timestamps[k - 1];
      const double i_mean = 0.5 * (profile.current[k - 1] + profile.current[k]);
      StepResult r = advance(state, params, i_mean, dt);
      state = std::move(r.state);
      if (r.saturated) sim.saturations.push_back({k, profile.timestamps[k]});
    }
    sim.trace.voltage[k] = output_voltage(state, params, profile.current[k]).value;
    sim.v_qst[k] = state.v_qst;
    sim.v_dyn[k] = state.v_dyn_total();
  }
  sim.final_state = std::move(state);
  return sim;
}

}  // namespace tridipole
