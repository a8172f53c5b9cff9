#include "tridipole/curve.hpp"

#include <algorithm>
#include <cmath>

#include "tridipole/error.hpp"

namespace tridipole {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidParameters: return "invalid parameters";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::UnusableTrace: return "unusable trace";
    case ErrorKind::Fit: return "fit error";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::SchedulingViolation: return "scheduling violation";
    case ErrorKind::BudgetViolation: return "budget violation";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

MonotoneCurve::MonotoneCurve(std::vector<double> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.size() != values_.size()) {
    throw Error(ErrorKind::InvalidInput, "curve grid and values differ in length");
  }
  if (grid_.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "curve needs at least two points");
  }
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (!std::isfinite(grid_[i]) || !std::isfinite(values_[i])) {
      throw Error(ErrorKind::InvalidInput, "curve contains non-finite values");
    }
    if (i > 0 && !(grid_[i] > grid_[i - 1])) {
      throw Error(ErrorKind::InvalidInput, "curve grid must be strictly increasing");
    }
  }
}

MonotoneCurve MonotoneCurve::linear(double x0, double y0, double x1, double y1, std::size_t points) {
  auto grid = linspace(x0, x1, std::max<std::size_t>(points, 2));
  std::vector<double> values(grid.size());
  const double slope = (y1 - y0) / (x1 - x0);
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = y0 + slope * (grid[i] - x0);
  values.back() = y1;
  return {std::move(grid), std::move(values)};
}

// Index i of the segment [grid[i], grid[i+1]] holding x; knots belong to the
// segment on their left.
std::size_t MonotoneCurve::segment_index(double x) const {
  auto it = std::lower_bound(grid_.begin(), grid_.end(), x);
  if (it == grid_.begin()) return 0;
  const auto i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  return std::min(i, grid_.size() - 2);
}

CurveSample MonotoneCurve::evaluate(double x) const {
  if (x <= grid_.front()) return {values_.front(), x < grid_.front()};
  if (x >= grid_.back()) return {values_.back(), x > grid_.back()};
  const std::size_t i = segment_index(x);
  const double w = (x - grid_[i]) / (grid_[i + 1] - grid_[i]);
  return {values_[i] + w * (values_[i + 1] - values_[i]), false};
}

double MonotoneCurve::slope(double x) const {
  if (x <= grid_.front() && x != grid_.front()) return 0.0;
  if (x > grid_.back()) return 0.0;
  const std::size_t i = segment_index(x);
  return (values_[i + 1] - values_[i]) / (grid_[i + 1] - grid_[i]);
}

double MonotoneCurve::integral(double a, double b) const {
  if (a > b) return -integral(b, a);
  a = std::clamp(a, grid_.front(), grid_.back());
  b = std::clamp(b, grid_.front(), grid_.back());
  if (a == b) return 0.0;
  const std::size_t ia = segment_index(a);
  const std::size_t ib = segment_index(b);
  const double fa = (*this)(a);
  const double fb = (*this)(b);
  if (ia == ib) return 0.5 * (fa + fb) * (b - a);
  double sum = 0.5 * (fa + values_[ia + 1]) * (grid_[ia + 1] - a);
  for (std::size_t i = ia + 1; i < ib; ++i) {
    sum += 0.5 * (values_[i] + values_[i + 1]) * (grid_[i + 1] - grid_[i]);
  }
  sum += 0.5 * (values_[ib] + fb) * (b - grid_[ib]);
  return sum;
}

double MonotoneCurve::argmax() const {
  const auto it = std::max_element(values_.begin(), values_.end());
  return grid_[static_cast<std::size_t>(it - values_.begin())];
}

double MonotoneCurve::max_value() const { return *std::max_element(values_.begin(), values_.end()); }
double MonotoneCurve::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

MonotoneCurve MonotoneCurve::resampled(std::span<const double> grid) const {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = (*this)(grid[i]);
  return {std::vector<double>(grid.begin(), grid.end()), std::move(values)};
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) throw Error(ErrorKind::InvalidInput, "linspace needs at least two points");
  std::vector<double> out(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

}  // namespace tridipole
