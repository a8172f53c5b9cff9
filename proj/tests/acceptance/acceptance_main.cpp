// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "support/synthetic_cell.hpp"
#include "tridipole/error.hpp"
#include "tridipole/estimator.hpp"
#include "tridipole/identification.hpp"
#include "tridipole/io.hpp"
#include "tridipole/multicell.hpp"

using namespace tridipole;
namespace fs = std::filesystem;

namespace {

constexpr double kBudgetRuntime = 1.0;          // s
constexpr double kRingTolerance = 1e-10;        // SoC
constexpr double kRingRuntime = 60.0;           // s
constexpr double kFirstSegmentError = 0.02;
constexpr double kRestError = 0.01;
constexpr double kDriveError = 0.10;
constexpr double kEkfRuntime = 120.0;           // s
constexpr double kSumRTolerance = 0.05;
constexpr double kTauTolerance = 0.10;
constexpr double kCapacitanceRms = 0.03;
constexpr double kIdentifyRuntime = 300.0;      // s
constexpr double kSocConsistency = 1e-4;
constexpr double kJacobianTolerance = 1e-5;
constexpr double kLinearKfTolerance = 1e-10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Cell budget.
Outcome budget() {
  const auto t0 = Clock::now();
  const fs::path out = fs::path(TRIDIPOLE_TEST_TMP) / "acceptance_budget.txt";
  fs::create_directories(out.parent_path());
  const std::string cmd = std::string("'") + TRIDIPOLE_CLI + "' budget 2Hz 10ms >'" + out.string() + "'";
  const int status = std::system(cmd.c_str());
  const double elapsed = seconds_since(t0);
  const bool cli_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0 && io::read_file(out) == "25\n";

  std::vector<std::string> ids;
  for (int i = 0; i < 26; ++i) ids.push_back("c" + std::to_string(i));
  bool refused = false;
  try {
    SchedulerConfig{0.01, 2.0, ids}.validate();
  } catch (const Error& e) {
    refused = e.kind() == ErrorKind::BudgetViolation;
  }
  ids.pop_back();
  bool accepted_25 = true;
  try {
    SchedulerConfig{0.01, 2.0, ids}.validate();
  } catch (const Error&) {
    accepted_25 = false;
  }
  const std::size_t b = max_cells(2.0, 0.01);
  return {cli_ok && b == 25 && refused && accepted_25 && elapsed < kBudgetRuntime,
          fmt("budget(2 Hz, 10 ms) = %zu, CLI %s, 26 cells %s, 25 cells %s, %.3f s", b, cli_ok ? "ok" : "wrong",
              refused ? "refused" : "accepted", accepted_25 ? "accepted" : "refused", elapsed)};
}

// 2. Round-robin equivalence.
Outcome round_robin() {
  double worst = 0.0;
  double slowest = 0.0;
  std::string sizes;
  for (std::size_t n : {1, 5, 18, 25}) {
    SchedulerConfig cfg;
    cfg.t_slot = 1.0 / static_cast<double>(n);
    cfg.f_max = 0.5;
    std::vector<MultiCellInput> inputs;
    for (std::size_t c = 0; c < n; ++c) {
      const std::string id = "cell" + std::to_string(c);
      cfg.cells.push_back(id);
      auto params = std::make_shared<const CellParameters>(testing::make_cell(testing::random_spec(7000 + c)));
      CurrentProfile profile = us06_like(1.0, 800 + c, 600.0, 20.0);
      CurrentProfile tail = constant_profile(0.05 * static_cast<double>(c % 3), 2999.0, 1.0);
      profile.append(tail, 1.0);
      const double soc0 = 0.95 - 0.005 * static_cast<double>(c);
      auto sim = simulate(*params, profile, CellState::at_rest(vqst_from_soc(*params, soc0), 2));
      const auto ekf = EkfConfig::defaults(CellState::at_rest(vqst_from_soc(*params, 0.75), 2));
      inputs.push_back({{id, params, ekf}, std::move(sim.trace), soc0});
    }
    const auto t0 = Clock::now();
    const auto run = run_multicell(cfg, inputs);
    slowest = std::max(slowest, seconds_since(t0));

    for (const auto& in : inputs) {
      CellFilter filter(*in.setup.params, in.setup.config);
      std::size_t k = 0;
      for (const auto& r : run.cell(in.setup.cell_id)) {
        while (k + 1 < in.trace.size() && in.trace.timestamps[k + 1] <= r.time) ++k;
        const auto s = filter.update(r.time, in.trace.current[k], in.trace.voltage[k]);
        worst = std::max(worst, std::abs(s.soc - r.soc_est));
      }
    }
    sizes += (sizes.empty() ? "" : ",") + std::to_string(n);
  }
  return {worst <= kRingTolerance && slowest < kRingRuntime,
          fmt("N = {%s}, 1 h at 1 Hz per cell, max |dSoC| = %.3g, slowest ring %.2f s", sizes.c_str(), worst, slowest)};
}

// 3. EKF convergence on the validation profile.
Outcome ekf_convergence() {
  const auto t0 = Clock::now();
  const auto p = testing::make_cell(testing::SyntheticSpec{});
  const auto profile = validation_profile(us06_like(0.1, 2024), 1.0).profile;
  auto sim = simulate(p, profile, CellState::at_rest(vqst_from_soc(p, 1.0), 2));
  UniformSource rng(31);
  for (double& v : sim.trace.voltage) v += 1e-3 * rng.gaussian();
  const auto steps = run_filter(p, EkfConfig::defaults(CellState::at_rest(vqst_from_soc(p, 0.8), 2)), sim.trace);
  const double elapsed = seconds_since(t0);

  const double h = 3600.0;
  double at_6h = 1.0, rest_max = 0.0, drive_max = 0.0, initial = 0.0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double t = steps[k].time;
    const double err = std::abs(steps[k].soc - soc_from_vqst(p, sim.v_qst[k]).value);
    if (k == 0) initial = std::abs(0.8 - soc_from_vqst(p, sim.v_qst[0]).value);
    if (t == 6 * h) at_6h = err;
    if ((t >= 6 * h && t < 18 * h) || (t >= 24 * h && t < 36 * h)) rest_max = std::max(rest_max, err);
    if (t >= 36 * h) drive_max = std::max(drive_max, err);
  }
  return {at_6h < kFirstSegmentError && rest_max < kRestError && drive_max < kDriveError && elapsed < kEkfRuntime,
          fmt("initial error %.2f, at 6 h %.4f, rests max %.4f, drive hour max %.4f, %.2f s", initial, at_6h, rest_max,
              drive_max, elapsed)};
}

// 4. Identification round trip.
Outcome identification() {
  const auto t0 = Clock::now();
  double worst_sum_r = 0.0, worst_tau = 0.0, worst_cap = 0.0, worst_vn_cells = 0.0;
  int failures = 0;
  std::string first_error;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto spec = testing::random_spec(4000 + s);
    const auto p = testing::make_cell(spec);
    const auto sim = simulate(p, testing::round_trip_profile(p), CellState::at_rest(p.v_min(), 2));
    try {
      const auto q = identify(sim.trace, IdentificationConfig{}).params;
      if (q.rc_count() != 2) {
        ++failures;
        continue;
      }
      double sum_true = 0.0, sum_fit = 0.0;
      for (std::size_t i = 0; i < 2; ++i) {
        sum_true += spec.rc[i].r;
        sum_fit += q.rc_groups()[i].r;
        worst_tau = std::max(worst_tau, std::abs(q.rc_groups()[i].tau / spec.rc[i].tau - 1.0));
      }
      worst_sum_r = std::max(worst_sum_r, std::abs(sum_fit / sum_true - 1.0));
      double se = 0.0, st = 0.0;
      const auto& cap = q.capacitance();
      for (std::size_t k = 0; k < cap.size(); ++k) {
        const double truth = testing::true_capacitance(spec, cap.grid()[k]);
        se += (cap.values()[k] - truth) * (cap.values()[k] - truth);
        st += truth * truth;
      }
      worst_cap = std::max(worst_cap, std::sqrt(se / st));
      const double cell = cap.grid()[1] - cap.grid()[0];
      worst_vn_cells = std::max(worst_vn_cells, std::abs(q.nominal_voltage() - spec.peak_v) / cell);
    } catch (const Error& e) {
      ++failures;
      if (first_error.empty()) first_error = e.what();
    }
  }
  const double elapsed = seconds_since(t0);
  const bool pass = failures == 0 && worst_sum_r <= kSumRTolerance && worst_tau <= kTauTolerance &&
                    worst_cap <= kCapacitanceRms && worst_vn_cells <= 1.0 && elapsed < kIdentifyRuntime;
  return {pass, fmt("20 cells, %d failed%s%s, max sum R err %.3g, max tau err %.3g, max C rms %.3g, max v_n offset "
                    "%.2f cells, %.1f s",
                    failures, first_error.empty() ? "" : ": ", first_error.c_str(), worst_sum_r, worst_tau, worst_cap,
                    worst_vn_cells, elapsed)};
}

// 5. SoC-definition consistency.
Outcome soc_consistency() {
  double worst = 0.0;
  int saturated = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto spec = testing::random_spec(9000 + s);
    const auto p = testing::make_cell(spec);
    UniformSource rng(123 + s);
    const double dt = rng.uniform(p.tau_min() / 40.0, p.tau_min() / 10.0);
    CurrentProfile profile = us06_like(dt, 60 + s, 900.0, rng.uniform(10.0, kCurrentLimit));
    profile.append(constant_profile(rng.uniform(-5.0, 5.0), 600.0, dt), dt);
    const double sign = rng.next() < 0.5 ? -1.0 : 1.0;
    for (double& i : profile.current) i *= sign;
    const auto swing = coulomb_count(profile, p.delta_q(), 0.0);
    double lo = 0.0, hi = 0.0;
    for (double x : swing.value) lo = std::min(lo, x), hi = std::max(hi, x);
    const double soc0 = 0.5 - 0.5 * (lo + hi);
    const auto sim = simulate(p, profile, CellState::at_rest(vqst_from_soc(p, soc0), 2));
    if (!sim.saturations.empty()) ++saturated;
    const auto cc = coulomb_count(profile, p.delta_q(), soc0);
    for (std::size_t k = 0; k < profile.size(); ++k) {
      worst = std::max(worst, std::abs(soc_from_vqst(p, sim.v_qst[k]).value - cc.value[k]));
    }
  }
  return {worst <= kSocConsistency && saturated == 0,
          fmt("50 cells, dt in [tau_min/40, tau_min/10], max |SoC_C - SoC_I| = %.3g, %d saturated", worst, saturated)};
}

bool near_knot(const MonotoneCurve& c, double v, double margin) {
  for (double g : c.grid()) {
    if (std::abs(v - g) < margin) return true;
  }
  return false;
}

// 6. Numerical hygiene.
Outcome hygiene() {
  // Jacobian against central differences.
  UniformSource rng(606);
  double worst_jac = 0.0;
  int points = 0;
  const double h = 1e-7;
  std::uint64_t cell_seed = 0;
  while (points < 1000) {
    const auto p = testing::make_cell(testing::random_spec(5000 + cell_seed++ % 10));
    for (int k = 0; k < 100; ++k) {
      CellState s{rng.uniform(p.v_min() + 0.01, p.v_max() - 0.01), {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)}};
      const double i = rng.uniform(-kCurrentLimit, kCurrentLimit);
      const double dt = rng.uniform(0.01, p.max_step());
      const double v_mid = s.v_qst + 0.5 * dt * i / p.capacitance()(s.v_qst);
      if (near_knot(p.capacitance(), s.v_qst, 100 * h) || near_knot(p.capacitance(), v_mid, 100 * h)) continue;
      // The clamp at the guard window has no derivative.
      if (step(s, p, i, dt).saturated) continue;
      const auto f = transition_jacobian(s, p, i, dt);
      for (int j = 0; j < 3; ++j) {
        CellState up = s, dn = s;
        double* u = j == 0 ? &up.v_qst : &up.v_dyn[static_cast<std::size_t>(j - 1)];
        double* d = j == 0 ? &dn.v_qst : &dn.v_dyn[static_cast<std::size_t>(j - 1)];
        *u += h;
        *d -= h;
        const auto a = step(up, p, i, dt).state, b = step(dn, p, i, dt).state;
        const double fd = j == 0 ? (a.v_qst - b.v_qst) / (2 * h)
                                 : (a.v_dyn[static_cast<std::size_t>(j - 1)] - b.v_dyn[static_cast<std::size_t>(j - 1)]) / (2 * h);
        worst_jac = std::max(worst_jac, std::abs(f[j] - fd) / std::abs(f[j]));
      }
      if (++points == 1000) break;
    }
  }

  // PSD after every update over a full validation run.
  const auto p = testing::make_cell(testing::SyntheticSpec{});
  auto sim = simulate(p, validation_profile(us06_like(0.1, 77), 1.0).profile, CellState::at_rest(p.v_max(), 2));
  UniformSource noise(78);
  for (double& v : sim.trace.voltage) v += 1e-3 * noise.gaussian();
  CellFilter filter(p, EkfConfig::defaults(CellState::at_rest(vqst_from_soc(p, 0.8), 2)));
  std::size_t psd_failures = 0;
  double min_eig = INFINITY;
  for (std::size_t k = 0; k < sim.trace.size(); ++k) {
    try {
      filter.update(sim.trace.timestamps[k], sim.trace.current[k], sim.trace.voltage[k]);
      const auto& cov = filter.state().covariance;
      check_covariance(cov);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
    } catch (const Error&) {
      ++psd_failures;
      break;
    }
  }

  // Linear cell against a textbook Kalman filter.
  const CellParameters lin(MonotoneCurve({3.0, 3.5}, {30000.0, 30000.0}), {{0.01, 40.0}, {0.02, 800.0}},
                           MonotoneCurve({-44.0, 0.0, 44.0}, {-2.2, 0.0, 2.2}), 15000.0);
  const auto truth = simulate(lin, us06_like(1.0, 5, 3600.0, 10.0), CellState::at_rest(3.35, 2));
  const auto cfg = EkfConfig::defaults(CellState::at_rest(3.2, 2));
  const auto steps = run_filter(lin, cfg, truth.trace);
  Eigen::Vector3d x(3.2, 0.0, 0.0);
  Eigen::Matrix3d P = cfg.initial_covariance;
  const Eigen::RowVector3d H(1.0, 1.0, 1.0);
  double worst_lin = 0.0;
  for (std::size_t k = 0; k < truth.trace.size(); ++k) {
    const double i = truth.trace.current[k];
    if (k > 0) {
      const double dt = truth.trace.timestamps[k] - truth.trace.timestamps[k - 1];
      const double u = 0.5 * (truth.trace.current[k - 1] + i);
      const double a1 = std::exp(-dt / 40.0), a2 = std::exp(-dt / 800.0);
      const Eigen::Matrix3d A = Eigen::Vector3d(1.0, a1, a2).asDiagonal();
      x = A * x + Eigen::Vector3d(dt / 30000.0, 0.01 * (1 - a1), 0.02 * (1 - a2)) * u;
      P = A * P * A.transpose() + cfg.process_noise * dt;
    }
    const double innov = truth.trace.voltage[k] - (H * x)(0) - 0.05 * i;
    const Eigen::Vector3d K = P * H.transpose() / ((H * P * H.transpose())(0) + cfg.measurement_noise);
    x += K * innov;
    P = (Eigen::Matrix3d::Identity() - K * H) * P;
    worst_lin = std::max(worst_lin, std::abs(steps[k].soc - (x[0] - 3.0) * 30000.0 / 15000.0));
  }

  return {worst_jac <= kJacobianTolerance && psd_failures == 0 && worst_lin <= kLinearKfTolerance,
          fmt("Jacobian max rel err %.3g on %d points, PSD %s over %zu updates (min eigenvalue %.3g), linear KF max "
              "|dSoC| %.3g",
              worst_jac, points, psd_failures ? "lost" : "held", sim.trace.size(), min_eig, worst_lin)};
}

// 7. Profile fidelity.
Outcome profile_fidelity() {
  const auto drive = us06_like(0.1, 2024);
  const auto val = validation_profile(drive, 1.0);
  const double hours = val.profile.duration() / 3600.0;
  const double f = max_frequency(drive);
  double peak = 0.0;
  for (double i : drive.current) peak = std::max(peak, std::abs(i));

  // A hotter source must come out limited to 44 A.
  const auto hot = validation_profile(us06_like(0.1, 2024, 600.0, 60.0), 1.0);
  double hot_peak = 0.0;
  for (double i : hot.profile.current) hot_peak = std::max(hot_peak, std::abs(i));

  const bool pass = std::abs(hours - 37.0) < 0.01 && peak == kCurrentLimit && hot.clamped > 0 &&
                    hot_peak == kCurrentLimit && f <= 2.0;
  return {pass, fmt("validation profile %.4f h, stand-in peak %.1f A, 60 A source clamped in %zu samples to %.1f A, "
                    "max_frequency %.3f Hz",
                    hours, peak, hot.clamped, hot_peak, f)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"cell budget", budget},
      {"round-robin equivalence", round_robin},
      {"EKF convergence", ekf_convergence},
      {"identification round trip", identification},
      {"SoC-definition consistency", soc_consistency},
      {"numerical hygiene", hygiene},
      {"profile fidelity", profile_fidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
