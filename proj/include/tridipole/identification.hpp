#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tridipole/cell_model.hpp"
#include "tridipole/curve.hpp"
#include "tridipole/fitting.hpp"
#include "tridipole/trace.hpp"

namespace tridipole {

enum class SegmentKind { Charge, Rest, Discharge };
std::string_view to_string(SegmentKind kind);

struct Segment {
  SegmentKind kind = SegmentKind::Rest;
  std::size_t start = 0;  // first sample
  std::size_t end = 0;    // one past the last sample
  /// Rest segments only: first sample where |dV/dt| stays below the settle
  /// threshold for the configured hold time.
  std::optional<std::size_t> settle;

  std::size_t length() const { return end - start; }
};

struct SegmentedTrace {
  Trace trace;
  std::vector<Segment> segments;
  double current_zero_threshold = 0.0;
  std::vector<std::string> warnings;
};

struct IdentificationConfig {
  std::size_t n_rc = 2;
  double current_zero_threshold = 0.01;    // A
  double settle_slope_threshold = 1e-6;    // V/s
  double settle_hold = 600.0;              // s
  std::size_t capacitance_grid_size = 256;
  std::size_t smoothing_halfwidth = 5;     // samples
  std::size_t max_fit_iterations = 200;

  /// Throws Configuration on an invalid setting.
  void validate() const;
};

/// Splits a trace into contiguous charge / rest / discharge runs by current
/// sign and marks the settle point of every rest run.
SegmentedTrace segment_trace(const Trace& trace, const IdentificationConfig& cfg);

struct ResistorPoint {
  double current = 0.0;   // A
  double voltage = 0.0;   // V, instantaneous drop at that current
  std::size_t samples = 0;
};

struct InstantaneousFit {
  MonotoneCurve curve;
  std::vector<ResistorPoint> points;  // aggregated jump measurements
  std::vector<std::string> warnings;
};

/// Instantaneous resistor from simultaneous current/voltage jumps. A step is a
/// sample-to-sample |dI| above ten times the zero-current threshold; the
/// continuous part of the voltage change is removed by extrapolating local
/// line fits on both sides to the step midpoint.
InstantaneousFit fit_instantaneous(const SegmentedTrace& seg);

struct RcFit {
  std::vector<RcGroup> groups;
  ExponentialFit decay;
  /// sum(R_i) implied by the relaxation depth over the excitation current,
  /// compared against the fitted groups.
  double sum_r_crosscheck = 0.0;
  std::vector<std::string> warnings;
};

/// Fits v(t) = v_inf + sum a_i exp(-t / tau_i) to a zero-current segment and
/// converts amplitudes to resistances. `history` is the current up to and
/// including the rest segment's first sample; it fixes each group's response
/// to the excitation (R_i = a_i / g_i with g_i the unit-R group voltage).
RcFit fit_rc_groups(const Trace& rest_segment, std::size_t n_rc, const CurrentProfile& history,
                    std::size_t max_iterations = 200);

struct Decomposition {
  std::vector<double> v_qst;
  std::vector<double> v_dyn;
  std::vector<double> v_ist;
};

/// V_qst = V_out - V_dyn - resistor(I), with V_dyn forward-simulated from rest
/// on the measured current (interval-mean current, exact RC map).
Decomposition decompose(const Trace& trace, const std::vector<RcGroup>& rc, const MonotoneCurve& resistor);

struct QCurves {
  MonotoneCurve charge;
  MonotoneCurve discharge;
  MonotoneCurve mean;
  std::vector<std::string> warnings;
};

/// Charge Q(t) (trapezoid) against V_qst, split by current sign, resampled on
/// a common voltage grid over the overlap of both branches; `mean` is the
/// pointwise average.
QCurves build_q_curve(std::span<const double> v_qst, std::span<const double> current,
                      std::span<const double> timestamps, std::size_t grid_size = 256,
                      double current_threshold = 0.0);

struct CapacitanceEstimate {
  MonotoneCurve capacitance;
  double nominal_voltage = 0.0;
};

/// C = dQ/dV by central differences of the moving-average-smoothed Q on a
/// uniform grid. Throws InvalidParameters if any C <= 0.
CapacitanceEstimate estimate_capacitance(const MonotoneCurve& mean_q, std::size_t grid_size,
                                         std::size_t smoothing_halfwidth = 5);

struct StageReport {
  std::string stage;
  double residual_rms = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;
};

struct Identification {
  CellParameters params;
  std::vector<StageReport> report;
  SegmentedTrace segments;
  InstantaneousFit instantaneous;
  std::vector<RcFit> rc_fits;
  QCurves q_curves;
};

/// Full pipeline: segment, instantaneous resistor, RC groups from every long
/// rest that follows a current segment, subtraction, Q(V) branches,
/// capacitance. Errors carry the failing stage.
Identification identify(const Trace& trace, const IdentificationConfig& cfg);

}  // namespace tridipole
