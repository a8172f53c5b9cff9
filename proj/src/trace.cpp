#include "tridipole/trace.hpp"

#include <cmath>
#include <string>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

void check_series(const std::vector<double>& t, const std::vector<double>& i, const std::vector<double>* v) {
  if (t.size() != i.size() || (v && v->size() != t.size())) {
    throw Error(ErrorKind::InvalidInput, "trace columns differ in length");
  }
  if (t.size() < 2) throw Error(ErrorKind::InvalidInput, "trace needs at least two samples");
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!std::isfinite(t[k]) || !std::isfinite(i[k]) || (v && !std::isfinite((*v)[k]))) {
      throw Error(ErrorKind::InvalidInput, "non-finite value at sample " + std::to_string(k));
    }
    if (k > 0 && !(t[k] > t[k - 1])) {
      throw Error(ErrorKind::InvalidInput, "timestamps not strictly increasing at sample " + std::to_string(k));
    }
  }
}

}  // namespace

void CurrentProfile::validate() const { check_series(timestamps, current, nullptr); }

void CurrentProfile::append(const CurrentProfile& other, double gap) {
  if (other.timestamps.empty()) return;
  const double offset = timestamps.empty() ? -other.timestamps.front()
                                           : timestamps.back() + gap - other.timestamps.front();
  timestamps.reserve(timestamps.size() + other.size());
  current.reserve(current.size() + other.size());
  for (std::size_t k = 0; k < other.size(); ++k) {
    timestamps.push_back(other.timestamps[k] + offset);
    current.push_back(other.current[k]);
  }
}

void Trace::validate() const { check_series(timestamps, current, &voltage); }

Trace Trace::slice(std::size_t first, std::size_t last) const {
  Trace out;
  out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(first),
                        timestamps.begin() + static_cast<std::ptrdiff_t>(last));
  out.current.assign(current.begin() + static_cast<std::ptrdiff_t>(first),
                     current.begin() + static_cast<std::ptrdiff_t>(last));
  out.voltage.assign(voltage.begin() + static_cast<std::ptrdiff_t>(first),
                     voltage.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

}  // namespace tridipole
