#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tridipole/curve.hpp"
#include "tridipole/trace.hpp"

namespace tridipole {

/// One first-order relaxation branch of the dynamic dipole.
struct RcGroup {
  double r = 0.0;    // ohm
  double tau = 0.0;  // s

  bool operator==(const RcGroup&) const = default;
};

inline constexpr double kDefaultVoltageGuard = 0.05;  // V

/// Identified model of one cell: quasi-stationary capacitor C(v) over
/// [v_min, v_max], N series RC groups and a memoryless nonlinear resistor.
///
/// Immutable once built. delta_q is the integral of the capacitance curve and
/// nominal_voltage is its argmax; both are derived at construction, or
/// checked against the curve when supplied (file loading).
class CellParameters {
 public:
  CellParameters(MonotoneCurve capacitance, std::vector<RcGroup> rc_groups, MonotoneCurve resistor,
                 double nominal_capacity, double voltage_guard = kDefaultVoltageGuard);

  /// Full form; throws InvalidParameters if delta_q or nominal_voltage
  /// disagree with the capacitance curve.
  CellParameters(MonotoneCurve capacitance, std::vector<RcGroup> rc_groups, MonotoneCurve resistor,
                 double delta_q, double nominal_capacity, double nominal_voltage,
                 double voltage_guard = kDefaultVoltageGuard);

  double v_min() const { return capacitance_.front(); }
  double v_max() const { return capacitance_.back(); }
  const MonotoneCurve& capacitance() const { return capacitance_; }
  const std::vector<RcGroup>& rc_groups() const { return rc_groups_; }
  std::size_t rc_count() const { return rc_groups_.size(); }
  const MonotoneCurve& resistor() const { return resistor_; }
  double delta_q() const { return delta_q_; }
  double nominal_capacity() const { return nominal_capacity_; }
  double nominal_voltage() const { return nominal_voltage_; }
  double voltage_guard() const { return voltage_guard_; }

  /// Smallest RC time constant, or +inf when there are no RC groups.
  double tau_min() const;
  /// Largest step accepted by `step` (tau_min / 5).
  double max_step() const;

 private:
  void validate() const;

  MonotoneCurve capacitance_;
  std::vector<RcGroup> rc_groups_;
  MonotoneCurve resistor_;
  double delta_q_ = 0.0;
  double nominal_capacity_ = 0.0;
  double nominal_voltage_ = 0.0;
  double voltage_guard_ = kDefaultVoltageGuard;
};

/// Physical state of one cell: quasi-stationary voltage and one voltage per RC group.
struct CellState {
  double v_qst = 0.0;
  std::vector<double> v_dyn;

  static CellState at_rest(double v_qst, std::size_t rc_count) { return {v_qst, std::vector<double>(rc_count, 0.0)}; }
  double v_dyn_total() const;

  bool operator==(const CellState&) const = default;
};

template <typename T>
struct Flagged {
  T value{};
  bool out_of_range = false;
};

struct StepResult {
  CellState state;
  bool saturated = false;
};

/// Terminal voltage: v_qst + sum(v_dyn) + resistor(current).
Flagged<double> output_voltage(const CellState& state, const CellParameters& params, double current);

/// One integration step with `current` held over dt. v_qst uses the midpoint
/// rule on dv/dt = I / C(v); each RC voltage uses its exact zero-order-hold map.
/// Throws Configuration when dt <= 0 or dt > tau_min / 5.
StepResult step(const CellState& state, const CellParameters& params, double current, double dt);

/// Number of equal sub-steps `advance` uses to cover dt.
std::size_t substep_count(const CellParameters& params, double dt);

/// `step` repeated over equal sub-steps so that each respects the dt guard.
StepResult advance(const CellState& state, const CellParameters& params, double current, double dt);

/// Settled dynamic voltage under constant current: (sum R_i) * current.
double v_dyn_steady(const CellParameters& params, double current);

/// State of charge from the capacitance curve: integral of C from v_min to
/// v_qst over delta_q. Clamped to [0, 1] with a flag outside the window.
Flagged<double> soc_from_vqst(const CellParameters& params, double v_qst);

/// Inverse of `soc_from_vqst` on [0, 1] (the smallest v_qst reaching `soc`).
double vqst_from_soc(const CellParameters& params, double soc);

/// Coulomb-counting state of charge: soc0 + cumulative trapezoid of current / c_n.
/// Values are not clamped; `out_of_range` is set when any leaves [0, 1].
Flagged<std::vector<double>> coulomb_count(std::span<const double> timestamps, std::span<const double> current,
                                           double c_n, double soc0);
inline Flagged<std::vector<double>> coulomb_count(const CurrentProfile& profile, double c_n, double soc0) {
  return coulomb_count(profile.timestamps, profile.current, c_n, soc0);
}

struct SaturationEvent {
  std::size_t sample = 0;
  double time = 0.0;
};

struct Simulation {
  Trace trace;
  std::vector<double> v_qst;      // true quasi-stationary voltage per sample
  std::vector<double> v_dyn;      // true total dynamic voltage per sample
  std::vector<SaturationEvent> saturations;
  CellState final_state;
};

/// Forward model over a sampled profile. Between samples k and k+1 the cell is
/// driven by the interval mean (I_k + I_{k+1}) / 2, so the charge delivered
/// equals the trapezoid integral used by `coulomb_count`. Sub-steps as needed.
Simulation simulate(const CellParameters& params, const CurrentProfile& profile, const CellState& initial);

}  // namespace tridipole
