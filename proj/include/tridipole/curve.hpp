#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tridipole {

/// Result of evaluating a curve: the value plus whether the abscissa was clamped.
struct CurveSample {
  double value = 0.0;
  bool out_of_range = false;
};

/// Piecewise-linear scalar function on a strictly increasing grid.
///
/// Holds C(v) (farads vs volts), Q(v) (coulombs vs volts) and the
/// instantaneous resistor V(i) (volts vs amperes). Outside the grid the
/// curve is held at its endpoint value and the sample is flagged.
class MonotoneCurve {
 public:
  MonotoneCurve() = default;
  MonotoneCurve(std::vector<double> grid, std::vector<double> values);

  /// Straight line through (x0, y0) and (x1, y1) sampled at `points` knots.
  static MonotoneCurve linear(double x0, double y0, double x1, double y1, std::size_t points = 2);

  std::span<const double> grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return grid_.size(); }
  bool empty() const { return grid_.empty(); }
  double front() const { return grid_.front(); }
  double back() const { return grid_.back(); }

  double operator()(double x) const { return evaluate(x).value; }
  CurveSample evaluate(double x) const;

  /// Slope of the segment containing x. At an interior knot the left segment
  /// is used; outside the grid the slope is zero (the curve is clamped there).
  double slope(double x) const;

  /// Exact integral of the piecewise-linear curve over [a, b], a and b
  /// clamped to the grid; the integrand is the clamped curve.
  double integral(double a, double b) const;
  double integral() const { return integral(front(), back()); }

  /// Abscissa of the largest ordinate (first one on ties).
  double argmax() const;
  double max_value() const;
  double min_value() const;

  /// Evaluates the curve at every point of `grid`.
  MonotoneCurve resampled(std::span<const double> grid) const;

  bool operator==(const MonotoneCurve&) const = default;

 private:
  std::size_t segment_index(double x) const;

  std::vector<double> grid_;
  std::vector<double> values_;
};

/// `count` equally spaced points covering [lo, hi] with both endpoints exact.
std::vector<double> linspace(double lo, double hi, std::size_t count);

}  // namespace tridipole
