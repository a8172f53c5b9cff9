#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tridipole/cell_model.hpp"
#include "tridipole/trace.hpp"

namespace tridipole {

/// Noise model and initial condition of one filter. The state vector is
/// (v_qst, v_1, ..., v_N).
struct EkfConfig {
  Eigen::MatrixXd process_noise;       // V^2/s; added as Q * dt in predict
  double measurement_noise = 1e-4;     // V^2
  Eigen::MatrixXd initial_covariance;  // V^2
  CellState initial_state;

  /// Defaults for a cell with `rc_count` groups: Q = 1e-8 V^2/s per
  /// state, r = 1e-4 V^2, P0 = diag(1e-2, 1e-4, ...).
  static EkfConfig defaults(const CellState& initial);

  void validate(std::size_t rc_count) const;
};

struct EkfState {
  CellState mean;
  Eigen::MatrixXd covariance;

  static EkfState from_config(const EkfConfig& cfg);
};

/// Diagonal of the transition Jacobian of one `step` (the map is decoupled
/// across states, so off-diagonal entries are zero). The v_qst entry is the
/// exact derivative of the midpoint rule with C' the left slope at knots.
Eigen::VectorXd transition_jacobian(const CellState& state, const CellParameters& params, double current, double dt);

/// Mean through `advance`; covariance F P F^T + Q dt with F the product of the
/// sub-step Jacobians. Throws NumericalFailure if P loses positive
/// semidefiniteness beyond round-off.
EkfState predict(const EkfState& ekf, const CellParameters& params, double current, double dt, const EkfConfig& cfg);

struct Correction {
  EkfState state;
  double innovation = 0.0;  // V
  bool clamped = false;     // v_qst pulled back into the guard window
};

/// Measurement update with H = [1, ..., 1] and a Joseph-form covariance update.
Correction correct(const EkfState& ekf, const CellParameters& params, double measured_v, double current,
                   const EkfConfig& cfg);

double estimate_soc(const EkfState& ekf, const CellParameters& params);

/// Throws NumericalFailure unless `p` is finite, symmetric and PSD within `tol`
/// (relative to its largest diagonal entry).
void check_covariance(const Eigen::MatrixXd& p, double tol = 1e-10);

struct FilterStep {
  double time = 0.0;
  double soc = 0.0;
  double innovation = 0.0;
};

/// Sequential single-cell filter over a measured trace. The first sample is a
/// correction only; later samples predict with the interval-mean current
/// (I_{k-1} + I_k) / 2 and then correct. `params` must outlive the filter.
class CellFilter {
 public:
  CellFilter(const CellParameters& params, EkfConfig cfg);

  FilterStep update(double time, double current, double voltage);
  const EkfState& state() const { return state_; }
  bool started() const { return started_; }

 private:
  const CellParameters* params_;
  EkfConfig cfg_;
  EkfState state_;
  bool started_ = false;
  double last_time_ = 0.0;
  double last_current_ = 0.0;
};

std::vector<FilterStep> run_filter(const CellParameters& params, const EkfConfig& cfg, const Trace& trace);

}  // namespace tridipole
