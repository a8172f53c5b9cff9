#include "commands.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "tridipole/cell_model.hpp"
#include "tridipole/error.hpp"
#include "tridipole/estimator.hpp"
#include "tridipole/identification.hpp"
#include "tridipole/io.hpp"
#include "tridipole/multicell.hpp"
#include "tridipole/profiles.hpp"

namespace tridipole::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double parse_with_units(std::string_view text, std::initializer_list<std::pair<std::string_view, double>> units,
                        const char* what) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{}) throw std::invalid_argument(std::string("malformed ") + what + " '" + std::string(text) + "'");
  std::string_view suffix(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr));
  while (!suffix.empty() && suffix.front() == ' ') suffix.remove_prefix(1);
  for (const auto& [name, scale] : units) {
    if (suffix == name) {
      const double v = value * scale;
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
      return v;
    }
  }
  throw std::invalid_argument(std::string("unknown unit '") + std::string(suffix) + "' for " + what);
}

// Files produced by one command. Nothing touches the destination until every
// output has been computed; then all are written to temporaries and renamed.
class OutputSet {
 public:
  void add(fs::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  void commit() const {
    std::vector<fs::path> temps;
    auto cleanup = [&] {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
    };
    for (const auto& [path, content] : files_) {
      auto tmp = path;
      tmp += ".tmp";
      if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
      }
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        cleanup();
        throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
      }
      temps.push_back(tmp);
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      out.close();
      if (!out) {
        cleanup();
        throw Error(ErrorKind::Io, "failed writing " + tmp.string());
      }
    }
    for (std::size_t i = 0; i < files_.size(); ++i) {
      std::error_code ec;
      fs::rename(temps[i], files_[i].first, ec);
      if (ec) {
        cleanup();
        throw Error(ErrorKind::Io, "cannot move output into place at " + files_[i].first.string());
      }
    }
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first.string());
    return out;
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

fs::path with_suffix(const fs::path& p, std::string_view suffix) {
  fs::path out = p;
  out += std::string(suffix);
  return out;
}

void add_manifest(OutputSet& outputs, const fs::path& manifest_path, const std::string& command, json inputs,
                  json options, std::optional<std::uint64_t> seed) {
  json m = {{"command", command}, {"inputs", std::move(inputs)}, {"options", std::move(options)},
            {"outputs", outputs.paths()}};
  m["seed"] = seed ? json(*seed) : json(nullptr);
  outputs.add(manifest_path, m.dump(2) + "\n");
}

void print_warnings(std::ostream& err, const std::string& stage, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning [" << stage << "]: " << w << "\n";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Configuration:
      return kUsage;
    case ErrorKind::NumericalFailure:
    case ErrorKind::Fit:
      return kNumericalFailure;
    default:
      return kDataError;
  }
}

// ---- identify ----

struct IdentifyArgs {
  std::string trace, out, report, config;
  std::optional<std::size_t> n_rc, grid_size, smoothing, max_iter;
  std::optional<double> threshold, settle_hold, settle_slope;
};

IdentificationConfig identification_config(const IdentifyArgs& a) {
  IdentificationConfig cfg;
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(io::read_file(a.config));
      cfg.n_rc = j.value("n_rc", cfg.n_rc);
      cfg.current_zero_threshold = j.value("current_zero_threshold", cfg.current_zero_threshold);
      cfg.settle_slope_threshold = j.value("settle_slope_threshold", cfg.settle_slope_threshold);
      cfg.settle_hold = j.value("settle_hold", cfg.settle_hold);
      cfg.capacitance_grid_size = j.value("capacitance_grid_size", cfg.capacitance_grid_size);
      cfg.smoothing_halfwidth = j.value("smoothing_halfwidth", cfg.smoothing_halfwidth);
      cfg.max_fit_iterations = j.value("max_fit_iterations", cfg.max_fit_iterations);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Parse, "identification config: " + std::string(e.what()));
    }
  }
  if (a.n_rc) cfg.n_rc = *a.n_rc;
  if (a.grid_size) cfg.capacitance_grid_size = *a.grid_size;
  if (a.smoothing) cfg.smoothing_halfwidth = *a.smoothing;
  if (a.max_iter) cfg.max_fit_iterations = *a.max_iter;
  if (a.threshold) cfg.current_zero_threshold = *a.threshold;
  if (a.settle_hold) cfg.settle_hold = *a.settle_hold;
  if (a.settle_slope) cfg.settle_slope_threshold = *a.settle_slope;
  cfg.validate();
  return cfg;
}

void cmd_identify(const IdentifyArgs& a, std::ostream& out, std::ostream& err) {
  const IdentificationConfig cfg = identification_config(a);
  const Trace trace = io::load_trace(a.trace);
  const Identification id = identify(trace, cfg);
  for (const auto& s : id.report) print_warnings(err, s.stage, s.warnings);

  const fs::path params_path = a.out;
  const fs::path report_path = a.report.empty() ? with_suffix(params_path, ".report.json") : fs::path(a.report);
  OutputSet outputs;
  outputs.add(params_path, io::format_params(id.params));
  outputs.add(report_path, io::format_report(id.report));
  add_manifest(outputs, with_suffix(params_path, ".manifest.json"), "identify", {{"trace", a.trace}, {"config", a.config}},
               {{"n_rc", cfg.n_rc},
                {"current_zero_threshold", cfg.current_zero_threshold},
                {"settle_slope_threshold", cfg.settle_slope_threshold},
                {"settle_hold", cfg.settle_hold},
                {"capacitance_grid_size", cfg.capacitance_grid_size},
                {"smoothing_halfwidth", cfg.smoothing_halfwidth},
                {"max_fit_iterations", cfg.max_fit_iterations}},
               std::nullopt);
  outputs.commit();

  const auto& p = id.params;
  double sum_r = 0.0;
  for (const auto& g : p.rc_groups()) sum_r += g.r;
  out << "identified " << p.rc_count() << " RC group(s), sum R = " << io::format_double(sum_r)
      << " ohm, delta_q = " << io::format_double(p.delta_q()) << " C, v_n = " << io::format_double(p.nominal_voltage())
      << " V\n";
}

// ---- simulate ----

struct SimulateArgs {
  std::string params, profile = "constant", profile_file, out;
  std::optional<double> soc0;
  double dt = 1.0;
  double current = 0.0;
  double duration = 3600.0;
  double noise_mv = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> pulses;
};

CurrentProfile build_profile(const SimulateArgs& a, const CellParameters& params, std::ostream& err) {
  if (a.profile == "constant") return constant_profile(a.current, a.duration, a.dt);
  if (a.profile == "us06-like") return us06_like(a.dt, a.seed, a.duration);
  if (a.profile == "file") {
    if (a.profile_file.empty()) throw Error(ErrorKind::Configuration, "--profile file needs --profile-file");
    return io::load_profile(a.profile_file);
  }
  GeneratedProfile g;
  if (a.profile == "identification") {
    IdentificationProfileSpec spec;
    spec.sample_period = a.dt;
    spec.delta_q = params.delta_q();
    spec.pulse_amplitudes = a.pulses;
    if (params.rc_count() > 0) spec.slowest_tau = params.rc_groups().back().tau;
    g = identification_profile(spec);
  } else if (a.profile == "validation") {
    const CurrentProfile drive = a.profile_file.empty() ? us06_like(0.1, a.seed) : io::load_profile(a.profile_file);
    g = validation_profile(drive, a.dt);
  } else {
    throw Error(ErrorKind::Configuration, "unknown profile kind '" + a.profile + "'");
  }
  print_warnings(err, "profile", g.warnings);
  return g.profile;
}

void cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const double soc0 = a.soc0.value_or(a.profile == "identification" ? 0.0 : 1.0);
  if (!(soc0 >= 0.0 && soc0 <= 1.0)) throw Error(ErrorKind::Configuration, "--soc0 must lie in [0, 1]");
  if (!(a.noise_mv >= 0.0) || !std::isfinite(a.noise_mv)) {
    throw Error(ErrorKind::Configuration, "--noise-mv must be nonnegative");
  }
  const CellParameters params = io::load_params(a.params);
  const CurrentProfile profile = build_profile(a, params, err);
  const CellState initial = CellState::at_rest(vqst_from_soc(params, soc0), params.rc_count());
  Simulation sim = simulate(params, profile, initial);
  if (!sim.saturations.empty()) {
    err << "warning [simulate]: v_qst saturated at the guard window in " << sim.saturations.size()
        << " sample(s), first at t = " << io::format_double(sim.saturations.front().time) << " s\n";
  }
  if (a.noise_mv > 0.0) {
    UniformSource rng(a.seed ^ 0x9e3779b97f4a7c15ULL);
    for (double& v : sim.trace.voltage) v += 1e-3 * a.noise_mv * rng.gaussian();
  }

  OutputSet outputs;
  outputs.add(a.out, io::format_trace(sim.trace));
  add_manifest(outputs, with_suffix(a.out, ".manifest.json"), "simulate",
               {{"params", a.params}, {"profile_file", a.profile_file}},
               {{"profile", a.profile},
                {"soc0", soc0},
                {"dt", a.dt},
                {"current", a.current},
                {"duration", a.duration},
                {"noise_mv", a.noise_mv},
                {"pulses", a.pulses}},
               a.seed);
  outputs.commit();
  out << "simulated " << sim.trace.size() << " samples over " << io::format_double(profile.duration()) << " s\n";
}

// ---- estimate ----

struct EstimateArgs {
  std::string params, trace, ekf, out, cell_id = "cell";
  std::optional<double> initial_soc, soc_ref0;
};

EkfConfig ekf_config(const std::string& path, const CellParameters& params, std::optional<double> initial_soc) {
  EkfConfig cfg = path.empty() ? io::parse_ekf_config("{}", params) : io::load_ekf_config(path, params);
  if (initial_soc) {
    if (!(*initial_soc >= 0.0 && *initial_soc <= 1.0)) {
      throw Error(ErrorKind::Configuration, "--initial-soc must lie in [0, 1]");
    }
    cfg.initial_state = CellState::at_rest(vqst_from_soc(params, *initial_soc), params.rc_count());
  }
  return cfg;
}

void cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream&) {
  const CellParameters params = io::load_params(a.params);
  const Trace trace = io::load_trace(a.trace);
  const EkfConfig cfg = ekf_config(a.ekf, params, a.initial_soc);
  const std::vector<FilterStep> steps = run_filter(params, cfg, trace);
  const double ref0 = a.soc_ref0   ? *a.soc_ref0
                      : a.initial_soc ? *a.initial_soc
                                      : soc_from_vqst(params, cfg.initial_state.v_qst).value;
  const auto reference = coulomb_count(trace.profile(), params.nominal_capacity(), ref0);

  std::vector<MultiCellRow> rows;
  rows.reserve(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    rows.push_back({steps[k].time, a.cell_id, steps[k].soc, reference.value[k], steps[k].innovation});
  }
  OutputSet outputs;
  outputs.add(a.out, io::format_estimates(rows));
  json options = {{"cell_id", a.cell_id}, {"soc_ref0", ref0}};
  options["initial_soc"] = a.initial_soc ? json(*a.initial_soc) : json(nullptr);
  add_manifest(outputs, with_suffix(a.out, ".manifest.json"), "estimate",
               {{"params", a.params}, {"trace", a.trace}, {"ekf", a.ekf}}, options, std::nullopt);
  outputs.commit();
  out << "estimated " << rows.size() << " samples, final SoC " << io::format_double(rows.back().soc_est)
      << " (reference " << io::format_double(rows.back().soc_ref) << ")\n";
}

// ---- multicell ----

struct MulticellArgs {
  std::string config, out_dir;
};

bool safe_file_stem(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

void cmd_multicell(const MulticellArgs& a, std::ostream& out, std::ostream& err) {
  const io::SchedulerFile file = io::load_scheduler(a.config);
  file.config.validate();
  for (const auto& id : file.config.cells) {
    if (!safe_file_stem(id)) {
      throw Error(ErrorKind::InvalidInput, "cell id '" + id + "' is not usable as a file name");
    }
  }
  const MultiCellRun run = run_multicell(file.config, file.inputs);
  if (run.degraded_updates > 0) {
    err << "warning [multicell]: " << run.degraded_updates << " degraded update(s)\n";
  }

  OutputSet outputs;
  const fs::path dir = a.out_dir;
  for (const auto& id : file.config.cells) outputs.add(dir / (id + ".csv"), io::format_estimates(run.cell(id)));
  add_manifest(outputs, dir / "manifest.json", "multicell", {{"config", a.config}},
               {{"t_slot", file.config.t_slot}, {"f_max", file.config.f_max}, {"cells", file.config.cells}},
               std::nullopt);
  outputs.commit();
  out << "serviced " << file.config.cells.size() << " cells in " << run.rows.size() << " ticks\n";
}

// ---- budget ----

struct BudgetArgs {
  std::string f_max, t_slot;
  std::optional<std::size_t> cells;
};

int cmd_budget(const BudgetArgs& a, std::ostream& out, std::ostream& err) {
  double f = 0.0;
  double t = 0.0;
  try {
    f = parse_frequency(a.f_max);
    t = parse_duration(a.t_slot);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  const std::size_t budget = max_cells(f, t);
  out << budget << "\n";
  if (a.cells && *a.cells > budget) {
    err << "error: " << *a.cells << " cells exceed the budget of " << budget << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace

double parse_frequency(std::string_view text) {
  return parse_with_units(text, {{"", 1.0}, {"Hz", 1.0}, {"hz", 1.0}, {"kHz", 1e3}, {"mHz", 1e-3}}, "frequency");
}

double parse_duration(std::string_view text) {
  return parse_with_units(text, {{"", 1.0}, {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"min", 60.0}, {"h", 3600.0}},
                          "duration");
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Three-dipole lithium cell model: identification, simulation and SoC estimation", "tridipole"};
  app.require_subcommand(1);

  IdentifyArgs ia;
  auto* identify_cmd = app.add_subcommand("identify", "Identify cell parameters from a measured trace");
  identify_cmd->add_option("--trace", ia.trace, "Trace CSV (t_s,current_a,voltage_v)")->required();
  identify_cmd->add_option("--out", ia.out, "Parameter file to write (JSON)")->required();
  identify_cmd->add_option("--report", ia.report, "Fit report (default: <out>.report.json)");
  identify_cmd->add_option("--config", ia.config, "Identification settings (JSON); flags override it");
  identify_cmd->add_option("--n-rc", ia.n_rc, "Number of RC groups (default 2)");
  identify_cmd->add_option("--threshold", ia.threshold, "Zero-current threshold in A (default 0.01)");
  identify_cmd->add_option("--settle-hold", ia.settle_hold, "Settle hold time in s (default 600)");
  identify_cmd->add_option("--settle-slope", ia.settle_slope, "Settle slope threshold in V/s (default 1e-6)");
  identify_cmd->add_option("--grid-size", ia.grid_size, "Capacitance grid size (default 256)");
  identify_cmd->add_option("--smoothing", ia.smoothing, "Moving-average half width in samples (default 5)");
  identify_cmd->add_option("--max-iter", ia.max_iter, "Iteration cap of the exponential fit (default 200)");

  SimulateArgs sa;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the forward model on a current profile");
  simulate_cmd->add_option("--params", sa.params, "Parameter file (JSON)")->required();
  simulate_cmd->add_option("--out", sa.out, "Trace CSV to write")->required();
  simulate_cmd->add_option("--profile", sa.profile, "constant | identification | validation | us06-like | file")
      ->check(CLI::IsMember({"constant", "identification", "validation", "us06-like", "file"}))
      ->capture_default_str();
  simulate_cmd->add_option("--profile-file", sa.profile_file,
                           "Profile CSV for 'file', or the drive cycle for 'validation'");
  simulate_cmd->add_option("--soc0", sa.soc0, "Initial state of charge, cell at rest (default 0 for identification, else 1)");
  simulate_cmd->add_option("--dt", sa.dt, "Sample period in s")->capture_default_str();
  simulate_cmd->add_option("--current", sa.current, "Current of the constant profile in A")->capture_default_str();
  simulate_cmd->add_option("--duration", sa.duration, "Duration of constant and us06-like profiles in s")
      ->capture_default_str();
  simulate_cmd->add_option("--pulses", sa.pulses, "Pulse amplitudes (A) prepended to the identification profile");
  simulate_cmd->add_option("--noise-mv", sa.noise_mv, "Gaussian voltage noise, standard deviation in mV")
      ->capture_default_str();
  simulate_cmd->add_option("--seed", sa.seed, "Seed for generated drive cycles and noise")->capture_default_str();

  EstimateArgs ea;
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate state of charge along a trace with the EKF");
  estimate_cmd->add_option("--params", ea.params, "Parameter file (JSON)")->required();
  estimate_cmd->add_option("--trace", ea.trace, "Trace CSV")->required();
  estimate_cmd->add_option("--out", ea.out, "SoC CSV to write")->required();
  estimate_cmd->add_option("--ekf", ea.ekf, "EKF configuration (JSON); defaults otherwise");
  estimate_cmd->add_option("--initial-soc", ea.initial_soc, "Initial SoC guess; overrides the EKF file");
  estimate_cmd->add_option("--soc-ref0", ea.soc_ref0, "Initial value of the coulomb-counting reference");
  estimate_cmd->add_option("--cell-id", ea.cell_id, "Cell id written to the output")->capture_default_str();

  MulticellArgs ma;
  auto* multicell_cmd = app.add_subcommand("multicell", "Round-robin SoC estimation over a pack");
  multicell_cmd->add_option("--config", ma.config, "Scheduler file (JSON)")->required();
  multicell_cmd->add_option("--out-dir", ma.out_dir, "Directory for one SoC CSV per cell")->required();

  BudgetArgs ba;
  auto* budget_cmd = app.add_subcommand("budget", "Cells one engine can serve: floor(1 / (2 f_max t_slot))");
  budget_cmd->add_option("f_max", ba.f_max, "Signal bandwidth, e.g. 2Hz")->required();
  budget_cmd->add_option("t_slot", ba.t_slot, "Time slice, e.g. 10ms")->required();
  budget_cmd->add_option("--cells", ba.cells, "Exit 2 if this many cells exceed the budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const char* stage = "cli";
  try {
    if (*identify_cmd) {
      stage = "identify";
      cmd_identify(ia, out, err);
    } else if (*simulate_cmd) {
      stage = "simulate";
      cmd_simulate(sa, out, err);
    } else if (*estimate_cmd) {
      stage = "estimate";
      cmd_estimate(ea, out, err);
    } else if (*multicell_cmd) {
      stage = "multicell";
      cmd_multicell(ma, out, err);
    } else if (*budget_cmd) {
      return cmd_budget(ba, out, err);
    }
  } catch (const Error& e) {
    err << "error [" << (e.stage().empty() ? stage : e.stage()) << "] " << to_string(e.kind()) << ": " << e.what()
        << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error [" << stage << "]: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace tridipole::cli
