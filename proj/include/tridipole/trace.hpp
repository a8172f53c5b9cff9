#pragma once

#include <cstddef>
#include <vector>

namespace tridipole {

/// Sampled current profile (no voltage column). Positive current charges.
struct CurrentProfile {
  std::vector<double> timestamps;  // s, strictly increasing
  std::vector<double> current;     // A

  std::size_t size() const { return timestamps.size(); }
  double duration() const { return timestamps.empty() ? 0.0 : timestamps.back() - timestamps.front(); }

  /// Throws InvalidInput unless lengths match, length >= 2, values are finite
  /// and timestamps strictly increase.
  void validate() const;

  /// Appends `other` so that its first sample lands one `gap` after our last one.
  void append(const CurrentProfile& other, double gap);
};

/// Time-aligned (t, I, V) samples; the ingestion and export record.
struct Trace {
  std::vector<double> timestamps;  // s
  std::vector<double> current;     // A
  std::vector<double> voltage;     // V

  std::size_t size() const { return timestamps.size(); }

  void validate() const;
  CurrentProfile profile() const { return {timestamps, current}; }

  /// Samples [first, last) as a standalone trace.
  Trace slice(std::size_t first, std::size_t last) const;

  bool operator==(const Trace&) const = default;
};

}  // namespace tridipole
