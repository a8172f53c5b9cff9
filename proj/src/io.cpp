#include "tridipole/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tridipole/error.hpp"

namespace tridipole::io {
namespace {

using nlohmann::json;

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

double parse_field(std::string_view field, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw Error(ErrorKind::Parse, line_error(line, "malformed number '" + std::string(field) + "'"));
  }
  if (!std::isfinite(value)) throw Error(ErrorKind::Parse, line_error(line, "non-finite number"));
  return value;
}

// Splits CSV text into rows of numeric fields after checking the header.
template <typename Row>
void parse_rows(std::string_view text, std::string_view header, std::size_t fields, Row&& row) {
  std::size_t line_no = 0;
  bool seen_header = false;
  std::size_t pos = 0;
  std::vector<double> values(fields);
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!seen_header) {
      if (line != header) {
        throw Error(ErrorKind::Parse, line_error(line_no, "expected header '" + std::string(header) + "'"));
      }
      seen_header = true;
      continue;
    }
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw Error(ErrorKind::Parse, line_error(line_no, "empty row"));
    }
    std::size_t start = 0;
    for (std::size_t f = 0; f < fields; ++f) {
      const std::size_t comma = line.find(',', start);
      const bool last = f + 1 == fields;
      if (last != (comma == std::string_view::npos)) {
        throw Error(ErrorKind::Parse, line_error(line_no, "expected " + std::to_string(fields) + " fields"));
      }
      values[f] = parse_field(line.substr(start, last ? std::string_view::npos : comma - start), line_no);
      start = comma + 1;
    }
    row(values, line_no);
  }
  if (!seen_header) throw Error(ErrorKind::Parse, line_error(1, "missing header"));
}

json curve_json(const MonotoneCurve& c) {
  return {{"grid", std::vector<double>(c.grid().begin(), c.grid().end())},
          {"values", std::vector<double>(c.values().begin(), c.values().end())}};
}

MonotoneCurve curve_from(const json& j) {
  return {j.at("grid").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  if (j.is_object()) {
    const auto d = j.at("diagonal").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(d.size()) != n) throw Error(ErrorKind::Parse, "diagonal has the wrong length");
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = d[static_cast<std::size_t>(i)];
    return m;
  }
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (static_cast<Eigen::Index>(rows.size()) != n) throw Error(ErrorKind::Parse, "matrix has the wrong number of rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != n) throw Error(ErrorKind::Parse, "matrix has the wrong number of columns");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string(what) + ": " + e.what());
  }
}

template <typename Fn>
auto rethrow_json(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

Trace parse_trace(std::string_view text) {
  Trace tr;
  parse_rows(text, kTraceHeader, 3, [&](const std::vector<double>& v, std::size_t line) {
    if (!tr.timestamps.empty() && !(v[0] > tr.timestamps.back())) {
      throw Error(ErrorKind::Parse, line_error(line, "timestamps must be strictly increasing"));
    }
    tr.timestamps.push_back(v[0]);
    tr.current.push_back(v[1]);
    tr.voltage.push_back(v[2]);
  });
  if (tr.size() < 2) throw Error(ErrorKind::Parse, "trace needs at least two samples");
  return tr;
}

std::string format_trace(const Trace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  out.reserve(trace.size() * 48);
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out += format_double(trace.timestamps[k]);
    out += ',';
    out += format_double(trace.current[k]);
    out += ',';
    out += format_double(trace.voltage[k]);
    out += '\n';
  }
  return out;
}

Trace load_trace(const std::filesystem::path& path) {
  try {
    return parse_trace(read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Parse) throw;
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  trace.validate();
  write_file_atomic(path, format_trace(trace));
}

CurrentProfile load_profile(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (text.starts_with(kTraceHeader)) return parse_trace(text).profile();
  CurrentProfile p;
  parse_rows(text, kProfileHeader, 2, [&](const std::vector<double>& v, std::size_t line) {
    if (!p.timestamps.empty() && !(v[0] > p.timestamps.back())) {
      throw Error(ErrorKind::Parse, line_error(line, "timestamps must be strictly increasing"));
    }
    p.timestamps.push_back(v[0]);
    p.current.push_back(v[1]);
  });
  p.validate();
  return p;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorKind::Io, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, "cannot move output into place at " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_params(const CellParameters& p) {
  json rc = json::array();
  for (const auto& g : p.rc_groups()) rc.push_back({{"r", g.r}, {"tau", g.tau}});
  json j = {
      {"v_min", p.v_min()},
      {"v_max", p.v_max()},
      {"delta_q", p.delta_q()},
      {"nominal_capacity_c_n", p.nominal_capacity()},
      {"nominal_voltage_v_n", p.nominal_voltage()},
      {"voltage_guard", p.voltage_guard()},
      {"capacitance", curve_json(p.capacitance())},
      {"rc_groups", rc},
      {"resistor", curve_json(p.resistor())},
  };
  return j.dump(2) + "\n";
}

CellParameters parse_params(std::string_view text) {
  const json j = parse_json(text, "parameter file");
  return rethrow_json("parameter file", [&] {
    MonotoneCurve cap = curve_from(j.at("capacitance"));
    const double v_min = j.at("v_min").get<double>();
    const double v_max = j.at("v_max").get<double>();
    if (v_min != cap.front() || v_max != cap.back()) {
      throw Error(ErrorKind::InvalidParameters, "v_min/v_max must match the capacitance grid ends");
    }
    std::vector<RcGroup> rc;
    for (const auto& g : j.at("rc_groups")) rc.push_back({g.at("r").get<double>(), g.at("tau").get<double>()});
    // delta_q and v_n follow from the curve when omitted.
    const double delta_q = j.contains("delta_q") ? j.at("delta_q").get<double>() : cap.integral();
    const double v_n = j.contains("nominal_voltage_v_n") ? j.at("nominal_voltage_v_n").get<double>() : cap.argmax();
    return CellParameters(std::move(cap), std::move(rc), curve_from(j.at("resistor")), delta_q,
                          j.at("nominal_capacity_c_n").get<double>(), v_n, j.value("voltage_guard", kDefaultVoltageGuard));
  });
}

CellParameters load_params(const std::filesystem::path& path) { return parse_params(read_file(path)); }

void save_params(const CellParameters& params, const std::filesystem::path& path) {
  write_file_atomic(path, format_params(params));
}

EkfConfig parse_ekf_config(std::string_view text, const CellParameters& params) {
  const json j = parse_json(text, "ekf config");
  return rethrow_json("ekf config", [&] {
    const std::size_t n_rc = params.rc_count();
    const auto n = static_cast<Eigen::Index>(n_rc + 1);
    CellState initial = CellState::at_rest(vqst_from_soc(params, j.value("initial_soc", 0.5)), n_rc);
    if (j.contains("initial_state")) {
      const auto& s = j.at("initial_state");
      initial.v_qst = s.at("v_qst").get<double>();
      initial.v_dyn = s.value("v_dyn", std::vector<double>(n_rc, 0.0));
    }
    EkfConfig cfg = EkfConfig::defaults(initial);
    if (j.contains("process_noise_q")) cfg.process_noise = matrix_from(j.at("process_noise_q"), n);
    if (j.contains("measurement_noise_r")) cfg.measurement_noise = j.at("measurement_noise_r").get<double>();
    if (j.contains("initial_covariance_p0")) cfg.initial_covariance = matrix_from(j.at("initial_covariance_p0"), n);
    cfg.validate(n_rc);
    return cfg;
  });
}

EkfConfig load_ekf_config(const std::filesystem::path& path, const CellParameters& params) {
  return parse_ekf_config(read_file(path), params);
}

SchedulerFile load_scheduler(const std::filesystem::path& path) {
  const json j = parse_json(read_file(path), "scheduler file");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  return rethrow_json("scheduler file", [&] {
    SchedulerFile out;
    out.config.t_slot = j.at("t_slot").get<double>();
    out.config.f_max = j.at("f_max").get<double>();
    const std::string default_ekf = j.value("ekf", std::string{});
    for (const auto& c : j.at("cells")) {
      const std::string id = c.at("id").get<std::string>();
      out.config.cells.push_back(id);
      auto params = std::make_shared<const CellParameters>(load_params(resolve(c.at("params").get<std::string>())));
      const std::string ekf_path = c.value("ekf", default_ekf);
      EkfConfig cfg = ekf_path.empty() ? parse_ekf_config("{}", *params) : load_ekf_config(resolve(ekf_path), *params);
      MultiCellInput in{{id, params, std::move(cfg)}, load_trace(resolve(c.at("trace").get<std::string>())),
                        c.value("reference_soc0", 1.0)};
      out.inputs.push_back(std::move(in));
    }
    return out;
  });
}

std::string format_estimates(const std::vector<MultiCellRow>& rows) {
  std::string out(kEstimateHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += format_double(r.time) + ',' + r.cell_id + ',' + format_double(r.soc_est) + ',' + format_double(r.soc_ref) +
           ',' + format_double(r.innovation) + '\n';
  }
  return out;
}

std::string format_report(const std::vector<StageReport>& report) {
  json stages = json::array();
  for (const auto& s : report) {
    stages.push_back({{"stage", s.stage}, {"residual_rms", s.residual_rms}, {"iterations", s.iterations},
                      {"warnings", s.warnings}});
  }
  return json{{"stages", stages}}.dump(2) + "\n";
}

}  // namespace tridipole::io
