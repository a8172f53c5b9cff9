#include "tridipole/identification.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tridipole/error.hpp"
#include "tridipole/profiles.hpp"

namespace tridipole {
namespace {

constexpr std::size_t kJumpFitPoints = 4;
constexpr double kTauCollapseRatio = 1.5;
constexpr double kUnderfitRmsRatio = 10.0;

SegmentKind classify(double current, double threshold) {
  if (current > threshold) return SegmentKind::Charge;
  if (current < -threshold) return SegmentKind::Discharge;
  return SegmentKind::Rest;
}

// Least-squares slope of v over t for samples [first, last).
double regression_slope(const Trace& tr, std::size_t first, std::size_t last) {
  const double n = static_cast<double>(last - first);
  double tm = 0.0, vm = 0.0;
  for (std::size_t k = first; k < last; ++k) {
    tm += tr.timestamps[k];
    vm += tr.voltage[k];
  }
  tm /= n;
  vm /= n;
  double stt = 0.0, stv = 0.0;
  for (std::size_t k = first; k < last; ++k) {
    const double dt = tr.timestamps[k] - tm;
    stt += dt * dt;
    stv += dt * (tr.voltage[k] - vm);
  }
  return stt > 0.0 ? stv / stt : 0.0;
}

// Line through samples [first, last) evaluated at t.
double line_at(const Trace& tr, std::size_t first, std::size_t last, double t) {
  if (last - first == 1) return tr.voltage[first];
  const double slope = regression_slope(tr, first, last);
  double tm = 0.0, vm = 0.0;
  for (std::size_t k = first; k < last; ++k) {
    tm += tr.timestamps[k];
    vm += tr.voltage[k];
  }
  const double n = static_cast<double>(last - first);
  return vm / n + slope * (t - tm / n);
}

std::optional<std::size_t> find_settle(const Trace& tr, const Segment& s, const IdentificationConfig& cfg) {
  // Window of samples spanning the hold time.
  std::size_t w_end = s.start;
  std::optional<std::size_t> settle;
  const std::size_t stride = std::max<std::size_t>(1, s.length() / 2000);
  for (std::size_t k = s.start; k < s.end; k += stride) {
    while (w_end < s.end && tr.timestamps[w_end] - tr.timestamps[k] < cfg.settle_hold) ++w_end;
    if (w_end >= s.end && tr.timestamps[s.end - 1] - tr.timestamps[k] < cfg.settle_hold) break;
    if (w_end - k < 3) continue;
    if (std::abs(regression_slope(tr, k, w_end)) < cfg.settle_slope_threshold) {
      settle = k;
      break;
    }
  }
  return settle;
}

// Unit-resistance RC response to the interval-mean current over the profile.
double unit_rc_response(const CurrentProfile& history, double tau) {
  double v = 0.0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    const double dt = history.timestamps[k] - history.timestamps[k - 1];
    const double decay = std::exp(-dt / tau);
    v = v * decay + 0.5 * (history.current[k - 1] + history.current[k]) * (1.0 - decay);
  }
  return v;
}

bool collapsed(const std::vector<double>& taus) {
  for (std::size_t i = 1; i < taus.size(); ++i) {
    if (taus[i] / taus[i - 1] < kTauCollapseRatio) return true;
  }
  return false;
}

ExponentialFit best_decay_fit(std::span<const double> t, std::span<const double> v, std::size_t n, double dt,
                              std::size_t max_iterations) {
  const double span = t.back() - t.front();
  ExponentialFitOptions opts;
  opts.max_iterations = max_iterations;
  const double lo = std::max(10.0 * dt, 1e-6 * span);
  const double hi = std::max(span / 3.0, 2.0 * lo);
  const std::vector<std::vector<double>> starts = {
      log_spaced(lo, hi, n),
      log_spaced(std::min(3.0 * lo, hi / 2.0), std::max(hi / 10.0, 2.0 * lo), n),
  };
  ExponentialFit best;
  bool have = false;
  for (const auto& init : starts) {
    ExponentialFit f = fit_exponentials(t, v, init, opts);
    if (!have || (f.converged && !best.converged) || (f.converged == best.converged && f.rms < best.rms)) {
      best = std::move(f);
      have = true;
    }
  }
  return best;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Charge: return "charge";
    case SegmentKind::Rest: return "rest";
    case SegmentKind::Discharge: return "discharge";
  }
  return "rest";
}

void IdentificationConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Configuration, m); };
  if (n_rc < 1) fail("n_rc must be at least 1");
  if (!(current_zero_threshold > 0.0)) fail("current_zero_threshold must be positive");
  if (!(settle_slope_threshold > 0.0)) fail("settle_slope_threshold must be positive");
  if (!(settle_hold > 0.0)) fail("settle_hold must be positive");
  if (capacitance_grid_size < 16) fail("capacitance_grid_size must be at least 16");
  if (max_fit_iterations < 1) fail("max_fit_iterations must be positive");
}

SegmentedTrace segment_trace(const Trace& trace, const IdentificationConfig& cfg) {
  cfg.validate();
  trace.validate();
  SegmentedTrace out;
  out.trace = trace;
  out.current_zero_threshold = cfg.current_zero_threshold;

  std::size_t start = 0;
  SegmentKind kind = classify(trace.current[0], cfg.current_zero_threshold);
  for (std::size_t k = 1; k <= trace.size(); ++k) {
    const bool boundary = k == trace.size() || classify(trace.current[k], cfg.current_zero_threshold) != kind;
    if (!boundary) continue;
    out.segments.push_back({kind, start, k, std::nullopt});
    if (k < trace.size()) {
      start = k;
      kind = classify(trace.current[k], cfg.current_zero_threshold);
    }
  }

  bool any_rest = false;
  for (auto& s : out.segments) {
    if (s.kind != SegmentKind::Rest) continue;
    any_rest = true;
    s.settle = find_settle(trace, s, cfg);
  }
  if (!any_rest) throw Error(ErrorKind::UnusableTrace, "trace has no zero-current segment", "segment");
  if (out.segments.size() == 1) {
    out.warnings.push_back("no current above the zero threshold (" + fmt(cfg.current_zero_threshold) +
                           " A); the whole trace is one rest segment");
  }
  return out;
}

InstantaneousFit fit_instantaneous(const SegmentedTrace& seg) {
  const Trace& tr = seg.trace;
  const double zero = seg.current_zero_threshold;
  const double jump = 10.0 * zero;
  const std::size_t n = tr.size();

  struct Raw {
    double current;
    double voltage;
  };
  std::vector<Raw> raw;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double ia = tr.current[k];
    const double ib = tr.current[k + 1];
    if (std::abs(ib - ia) <= jump) continue;

    // Flat-current neighbourhoods on either side of the step.
    std::size_t left = k;
    while (left > 0 && k - left + 1 < kJumpFitPoints && std::abs(tr.current[left - 1] - ia) <= jump) --left;
    std::size_t right = k + 2;
    while (right < n && right - (k + 1) < kJumpFitPoints && std::abs(tr.current[right] - ib) <= jump) ++right;

    const double t_mid = 0.5 * (tr.timestamps[k] + tr.timestamps[k + 1]);
    const double dv = line_at(tr, k + 1, right, t_mid) - line_at(tr, left, k + 1, t_mid);

    if (std::abs(ia) <= zero) {
      raw.push_back({ib, dv});
    } else if (std::abs(ib) <= zero) {
      raw.push_back({ia, -dv});
    }
  }
  if (raw.empty()) throw Error(ErrorKind::UnusableTrace, "trace contains no current steps from or to rest", "instantaneous");

  std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.current < b.current; });
  InstantaneousFit fit;
  for (const Raw& r : raw) {
    if (!fit.points.empty()) {
      ResistorPoint& g = fit.points.back();
      const double mean_i = g.current;
      if (std::abs(r.current - mean_i) <= std::max(0.02 * std::abs(mean_i), jump)) {
        const double cnt = static_cast<double>(g.samples);
        g.current = (g.current * cnt + r.current) / (cnt + 1.0);
        g.voltage = (g.voltage * cnt + r.voltage) / (cnt + 1.0);
        ++g.samples;
        continue;
      }
    }
    fit.points.push_back({r.current, r.voltage, 1});
  }

  std::vector<double> amplitudes;
  for (const auto& p : fit.points) amplitudes.push_back(std::abs(p.current));
  std::sort(amplitudes.begin(), amplitudes.end());
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (i == 0 || amplitudes[i] - amplitudes[i - 1] > std::max(0.02 * amplitudes[i], jump)) ++distinct;
  }
  const double i_seen = amplitudes.back();
  const double i_max = std::max(i_seen, kCurrentLimit);
  if (i_seen < i_max) {
    fit.warnings.push_back("resistor extrapolated linearly from |I| <= " + fmt(i_seen) + " A to " + fmt(i_max) + " A");
  }

  if (distinct < 2) {
    double num = 0.0, den = 0.0;
    for (const auto& p : fit.points) {
      num += p.voltage * p.current * static_cast<double>(p.samples);
      den += p.current * p.current * static_cast<double>(p.samples);
    }
    const double r = std::max(0.0, num / den);
    fit.curve = MonotoneCurve({-i_max, 0.0, i_max}, {-r * i_max, 0.0, r * i_max});
    fit.warnings.push_back("fewer than two distinct step amplitudes; using a single resistance of " + fmt(r) + " ohm");
    return fit;
  }

  std::vector<std::pair<double, double>> neg, pos;
  for (const auto& p : fit.points) (p.current < 0 ? neg : pos).emplace_back(p.current, p.voltage);
  if (neg.empty()) for (auto it = pos.rbegin(); it != pos.rend(); ++it) neg.emplace_back(-it->first, -it->second);
  if (pos.empty()) for (auto it = neg.rbegin(); it != neg.rend(); ++it) pos.emplace_back(-it->first, -it->second);

  auto project = [&fit](std::vector<std::pair<double, double>>& side, bool negative) {
    std::vector<double> v;
    for (auto& p : side) v.push_back(p.second);
    auto iso = isotonic_increasing(v);
    bool changed = false;
    for (std::size_t i = 0; i < side.size(); ++i) {
      double val = negative ? std::min(iso[i], 0.0) : std::max(iso[i], 0.0);
      if (val != side[i].second) changed = true;
      side[i].second = val;
    }
    if (changed) fit.warnings.push_back("instantaneous points were not monotone; isotonic projection applied");
  };
  project(neg, true);
  project(pos, false);

  // Extend both sides to the symmetric range [-i_max, i_max].
  if (neg.front().first > -i_max) {
    const auto [i0, v0] = neg.front();
    const double i1 = neg.size() > 1 ? neg[1].first : 0.0;
    const double v1 = neg.size() > 1 ? neg[1].second : 0.0;
    const double slope = (v1 - v0) / (i1 - i0);
    neg.insert(neg.begin(), {-i_max, std::min(v0 + slope * (-i_max - i0), v0)});
  }
  if (pos.back().first < i_max) {
    const auto [i1, v1] = pos.back();
    const double i0 = pos.size() > 1 ? pos[pos.size() - 2].first : 0.0;
    const double v0 = pos.size() > 1 ? pos[pos.size() - 2].second : 0.0;
    const double slope = (v1 - v0) / (i1 - i0);
    pos.push_back({i_max, std::max(v1 + slope * (i_max - i1), v1)});
  }
  neg.front().first = -i_max;
  pos.back().first = i_max;

  std::vector<double> grid, values;
  for (const auto& p : neg) grid.push_back(p.first), values.push_back(p.second);
  grid.push_back(0.0), values.push_back(0.0);
  for (const auto& p : pos) grid.push_back(p.first), values.push_back(p.second);
  fit.curve = MonotoneCurve(std::move(grid), std::move(values));
  return fit;
}

RcFit fit_rc_groups(const Trace& rest, std::size_t n_rc, const CurrentProfile& history, std::size_t max_iterations) {
  rest.validate();
  if (n_rc < 1) throw Error(ErrorKind::Configuration, "n_rc must be at least 1", "rc");
  std::vector<double> t(rest.size());
  for (std::size_t k = 0; k < rest.size(); ++k) t[k] = rest.timestamps[k] - rest.timestamps.front();
  const double dt = t[1] - t[0];

  double last_current = 0.0;
  for (std::size_t k = history.size(); k-- > 0;) {
    if (history.current[k] != 0.0) {
      last_current = history.current[k];
      break;
    }
  }
  if (last_current == 0.0) throw Error(ErrorKind::Fit, "rest segment has no preceding excitation", "rc");

  RcFit out;
  std::size_t n = n_rc;
  while (true) {
    ExponentialFit f = best_decay_fit(t, rest.voltage, n, dt, max_iterations);
    if (!f.converged) {
      throw Error(ErrorKind::Fit, "relaxation fit did not converge after " + std::to_string(f.iterations) +
                                      " iterations (residual rms " + fmt(f.rms) + " V)", "rc");
    }
    std::vector<RcGroup> groups;
    bool valid = !collapsed(f.taus);
    for (std::size_t i = 0; valid && i < n; ++i) {
      const double g = unit_rc_response(history, f.taus[i]);
      const double r = g != 0.0 ? f.amplitudes[i] / g : 0.0;
      if (!(r > 0.0) || !std::isfinite(r)) valid = false;
      groups.push_back({r, f.taus[i]});
    }
    if (!valid) {
      if (n == 1) {
        throw Error(ErrorKind::Fit, "relaxation does not admit a positive RC group (residual rms " + fmt(f.rms) + " V)", "rc");
      }
      out.warnings.push_back("tau collapse or nonpositive resistance with " + std::to_string(n) +
                             " RC groups; reducing to " + std::to_string(n - 1));
      --n;
      continue;
    }
    out.groups = std::move(groups);
    out.decay = std::move(f);
    break;
  }

  double sum_r = 0.0, sum_a = 0.0;
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    sum_r += out.groups[i].r;
    sum_a += out.decay.amplitudes[i];
  }
  out.sum_r_crosscheck = sum_a / last_current;
  if (std::abs(out.sum_r_crosscheck - sum_r) > 0.1 * sum_r) {
    out.warnings.push_back("relaxation depth implies sum(R) = " + fmt(out.sum_r_crosscheck) + " ohm vs fitted " +
                           fmt(sum_r) + " ohm; the excitation may be shorter than the slowest dynamics");
  }

  // Model-order check: a much better fit with one more group means n_rc is too small.
  if (out.groups.size() == n_rc && t.size() >= 2 * (n_rc + 2)) {
    ExponentialFit more = best_decay_fit(t, rest.voltage, n_rc + 1, dt, max_iterations);
    if (more.converged && !collapsed(more.taus) && more.rms * kUnderfitRmsRatio < out.decay.rms) {
      out.warnings.push_back("relaxation is underfit by n_rc = " + std::to_string(n_rc) + " (residual rms " +
                             fmt(out.decay.rms) + " V vs " + fmt(more.rms) + " V with " +
                             std::to_string(n_rc + 1) + " groups)");
    }
  }
  return out;
}

Decomposition decompose(const Trace& trace, const std::vector<RcGroup>& rc, const MonotoneCurve& resistor) {
  trace.validate();
  const std::size_t n = trace.size();
  Decomposition d;
  d.v_qst.resize(n);
  d.v_dyn.resize(n);
  d.v_ist.resize(n);
  std::vector<double> v(rc.size(), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double dt = trace.timestamps[k] - trace.timestamps[k - 1];
      const double i_mean = 0.5 * (trace.current[k - 1] + trace.current[k]);
      for (std::size_t j = 0; j < rc.size(); ++j) {
        const double decay = std::exp(-dt / rc[j].tau);
        v[j] = v[j] * decay + rc[j].r * i_mean * (1.0 - decay);
      }
    }
    d.v_dyn[k] = std::accumulate(v.begin(), v.end(), 0.0);
    d.v_ist[k] = resistor.empty() ? 0.0 : resistor(trace.current[k]);
    d.v_qst[k] = trace.voltage[k] - d.v_dyn[k] - d.v_ist[k];
  }
  return d;
}

namespace {

struct Branch {
  std::vector<double> v;  // strictly increasing
  std::vector<double> q;
  bool repaired = false;
};

Branch branch_curve(const std::vector<std::pair<double, double>>& samples /* (q, v) */, std::size_t bins) {
  Branch b;
  if (samples.size() < 2) return b;
  double q_lo = samples.front().first, q_hi = samples.front().first;
  for (const auto& s : samples) q_lo = std::min(q_lo, s.first), q_hi = std::max(q_hi, s.first);
  if (!(q_hi > q_lo)) return b;

  std::vector<double> sum_q(bins, 0.0), sum_v(bins, 0.0), count(bins, 0.0);
  for (const auto& [q, v] : samples) {
    auto j = static_cast<std::size_t>((q - q_lo) / (q_hi - q_lo) * static_cast<double>(bins));
    j = std::min(j, bins - 1);
    sum_q[j] += q;
    sum_v[j] += v;
    count[j] += 1.0;
  }
  std::vector<double> qs, vs, ws;
  for (std::size_t j = 0; j < bins; ++j) {
    if (count[j] == 0.0) continue;
    qs.push_back(sum_q[j] / count[j]);
    vs.push_back(sum_v[j] / count[j]);
    ws.push_back(count[j]);
  }
  const auto iso = isotonic_increasing(vs, ws);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (iso[i] != vs[i]) b.repaired = true;
  }
  // Pool equal voltages so the inverse Q(V) is a function.
  for (std::size_t i = 0; i < iso.size();) {
    std::size_t j = i;
    double wq = 0.0, w = 0.0;
    while (j < iso.size() && iso[j] == iso[i]) {
      wq += qs[j] * ws[j];
      w += ws[j];
      ++j;
    }
    b.v.push_back(iso[i]);
    b.q.push_back(wq / w);
    i = j;
  }
  return b;
}

}  // namespace

QCurves build_q_curve(std::span<const double> v_qst, std::span<const double> current,
                      std::span<const double> timestamps, std::size_t grid_size, double current_threshold) {
  const std::size_t n = v_qst.size();
  if (current.size() != n || timestamps.size() != n) throw Error(ErrorKind::InvalidInput, "series lengths differ", "q-curve");
  if (grid_size < 2) throw Error(ErrorKind::Configuration, "grid size must be at least 2", "q-curve");

  std::vector<std::pair<double, double>> charge, discharge;
  double q = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) q += 0.5 * (current[k - 1] + current[k]) * (timestamps[k] - timestamps[k - 1]);
    if (current[k] > current_threshold) charge.emplace_back(q, v_qst[k]);
    else if (current[k] < -current_threshold) discharge.emplace_back(q, v_qst[k]);
  }

  const std::size_t bins = 8 * grid_size;
  Branch c = branch_curve(charge, bins);
  Branch d = branch_curve(discharge, bins);
  if (c.v.size() < 2 || d.v.size() < 2) {
    throw Error(ErrorKind::UnusableTrace, "both a charge and a discharge branch spanning a voltage interval are required",
                "q-curve");
  }
  const double lo = std::max(c.v.front(), d.v.front());
  const double hi = std::min(c.v.back(), d.v.back());
  if (!(hi > lo)) throw Error(ErrorKind::UnusableTrace, "charge and discharge branches do not overlap in voltage", "q-curve");

  QCurves out;
  if (c.repaired) out.warnings.push_back("charge branch was not monotone; isotonic projection applied");
  if (d.repaired) out.warnings.push_back("discharge branch was not monotone; isotonic projection applied");
  const auto grid = linspace(lo, hi, grid_size);
  out.charge = MonotoneCurve(c.v, c.q).resampled(grid);
  out.discharge = MonotoneCurve(d.v, d.q).resampled(grid);
  std::vector<double> mean(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    mean[i] = 0.5 * (out.charge.values()[i] + out.discharge.values()[i]);
  }
  out.mean = MonotoneCurve(grid, std::move(mean));
  return out;
}

CapacitanceEstimate estimate_capacitance(const MonotoneCurve& mean_q, std::size_t grid_size,
                                         std::size_t smoothing_halfwidth) {
  if (grid_size < 3) throw Error(ErrorKind::Configuration, "capacitance grid needs at least 3 points", "capacitance");
  const auto grid = linspace(mean_q.front(), mean_q.back(), grid_size);
  const auto resampled = mean_q.resampled(grid);
  const auto q = centered_moving_average(resampled.values(), smoothing_halfwidth);
  std::vector<double> c(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == grid_size ? i : i + 1;
    c[i] = (q[b] - q[a]) / (grid[b] - grid[a]);
    if (!(c[i] > 0.0)) {
      throw Error(ErrorKind::InvalidParameters, "nonpositive capacitance " + fmt(c[i]) + " F at " + fmt(grid[i]) + " V",
                  "capacitance");
    }
  }
  CapacitanceEstimate out{MonotoneCurve(grid, std::move(c)), 0.0};
  out.nominal_voltage = out.capacitance.argmax();
  return out;
}

Identification identify(const Trace& trace, const IdentificationConfig& cfg) {
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.kind(), e.what(), e.stage().empty() ? stage : e.stage());
    }
  };

  std::vector<StageReport> report;
  SegmentedTrace seg = staged("segment", [&] { return segment_trace(trace, cfg); });
  report.push_back({"segment", 0.0, 0, seg.warnings});

  InstantaneousFit inst = staged("instantaneous", [&] { return fit_instantaneous(seg); });
  {
    double ss = 0.0;
    for (const auto& p : inst.points) ss += std::pow(inst.curve(p.current) - p.voltage, 2);
    report.push_back({"instantaneous", std::sqrt(ss / static_cast<double>(inst.points.size())), 0, inst.warnings});
  }

  // Long rests that follow a current segment carry the relaxation.
  double longest = 0.0;
  for (std::size_t s = 1; s < seg.segments.size(); ++s) {
    const auto& g = seg.segments[s];
    if (g.kind != SegmentKind::Rest || g.length() < 2) continue;
    longest = std::max(longest, trace.timestamps[g.end - 1] - trace.timestamps[g.start]);
  }
  std::vector<RcFit> fits;
  std::vector<std::string> rc_warnings;
  for (std::size_t s = 1; s < seg.segments.size(); ++s) {
    const auto& g = seg.segments[s];
    if (g.kind != SegmentKind::Rest || g.length() < 2 * (cfg.n_rc + 2)) continue;
    const double duration = trace.timestamps[g.end - 1] - trace.timestamps[g.start];
    if (duration < 0.5 * longest) continue;
    if (!g.settle) {
      rc_warnings.push_back("rest at t = " + fmt(trace.timestamps[g.start]) +
                            " s never settles; relaxation may be truncated");
    }
    CurrentProfile history{
        std::vector<double>(trace.timestamps.begin(), trace.timestamps.begin() + static_cast<std::ptrdiff_t>(g.start) + 1),
        std::vector<double>(trace.current.begin(), trace.current.begin() + static_cast<std::ptrdiff_t>(g.start) + 1)};
    fits.push_back(staged("rc", [&] {
      return fit_rc_groups(trace.slice(g.start, g.end), cfg.n_rc, history, cfg.max_fit_iterations);
    }));
  }
  if (fits.empty()) throw Error(ErrorKind::UnusableTrace, "no rest segment follows a current segment", "rc");

  std::size_t order = 0;
  for (const auto& f : fits) order = std::max(order, f.groups.size());
  std::vector<RcGroup> rc(order, RcGroup{0.0, 0.0});
  double used = 0.0, rms = 0.0;
  std::size_t iterations = 0;
  for (const auto& f : fits) {
    for (const auto& w : f.warnings) rc_warnings.push_back(w);
    iterations += f.decay.iterations;
    if (f.groups.size() != order) {
      rc_warnings.push_back("a rest segment supported fewer RC groups and was left out of the average");
      continue;
    }
    for (std::size_t i = 0; i < order; ++i) {
      rc[i].r += f.groups[i].r;
      rc[i].tau += std::log(f.groups[i].tau);
    }
    rms += f.decay.rms * f.decay.rms;
    used += 1.0;
  }
  for (auto& g : rc) {
    g.r /= used;
    g.tau = std::exp(g.tau / used);
  }
  report.push_back({"rc", std::sqrt(rms / used), iterations, rc_warnings});

  Decomposition dec = decompose(trace, rc, inst.curve);
  QCurves q = staged("q-curve", [&] {
    return build_q_curve(dec.v_qst, trace.current, trace.timestamps, cfg.capacitance_grid_size,
                         cfg.current_zero_threshold);
  });
  {
    double ss = 0.0;
    for (std::size_t i = 0; i < q.mean.size(); ++i) ss += std::pow(q.charge.values()[i] - q.discharge.values()[i], 2);
    report.push_back({"q-curve", std::sqrt(ss / static_cast<double>(q.mean.size())), 0, q.warnings});
  }

  CapacitanceEstimate cap = staged("capacitance", [&] {
    return estimate_capacitance(q.mean, cfg.capacitance_grid_size, cfg.smoothing_halfwidth);
  });
  {
    const double span = q.mean.values().back() - q.mean.values().front();
    const double integral = cap.capacitance.integral();
    report.push_back({"capacitance", std::abs(integral - span), 0, {}});
  }

  CellParameters params = staged("parameters", [&] {
    const double dq = cap.capacitance.integral();
    return CellParameters(cap.capacitance, rc, inst.curve, dq);
  });
  return {std::move(params), std::move(report), std::move(seg), std::move(inst), std::move(fits), std::move(q)};
}

}  // namespace tridipole
