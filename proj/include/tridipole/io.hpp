#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tridipole/cell_model.hpp"
#include "tridipole/estimator.hpp"
#include "tridipole/identification.hpp"
#include "tridipole/multicell.hpp"
#include "tridipole/trace.hpp"

namespace tridipole::io {

inline constexpr std::string_view kTraceHeader = "t_s,current_a,voltage_v";
inline constexpr std::string_view kProfileHeader = "t_s,current_a";
inline constexpr std::string_view kEstimateHeader = "t_s,cell_id,soc_est,soc_ref,v_innov";

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

/// Trace CSV. Loading enforces the exact header, three numeric fields per row
/// and strictly increasing timestamps; failures are Parse errors naming the line.
Trace parse_trace(std::string_view text);
std::string format_trace(const Trace& trace);
Trace load_trace(const std::filesystem::path& path);
void save_trace(const Trace& trace, const std::filesystem::path& path);

/// Current-only profile CSV (`t_s,current_a`). A full trace CSV is accepted too.
CurrentProfile load_profile(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place, so a
/// failed run never leaves a partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Cell parameter file (JSON):
///   { "v_min", "v_max", "delta_q", "nominal_capacity_c_n", "nominal_voltage_v_n",
///     "voltage_guard" (optional),
///     "capacitance": { "grid": [V...], "values": [F...] },
///     "rc_groups": [ { "r": ohm, "tau": s }, ... ],
///     "resistor": { "grid": [A...], "values": [V...] } }
/// v_min / v_max must match the capacitance grid ends.
std::string format_params(const CellParameters& params);
CellParameters parse_params(std::string_view text);
CellParameters load_params(const std::filesystem::path& path);
void save_params(const CellParameters& params, const std::filesystem::path& path);

/// EKF configuration file (JSON). Matrices are row-major nested arrays, or
/// { "diagonal": [...] }. The initial state is either
/// "initial_state": { "v_qst", "v_dyn": [...] } or "initial_soc" (rest state at
/// that SoC). Missing keys take `EkfConfig::defaults`.
EkfConfig parse_ekf_config(std::string_view text, const CellParameters& params);
EkfConfig load_ekf_config(const std::filesystem::path& path, const CellParameters& params);

/// Scheduler file (JSON):
///   { "t_slot": s, "f_max": Hz, "ekf": "default ekf file" (optional),
///     "cells": [ { "id", "params": path, "trace": path, "ekf": path (optional),
///                  "reference_soc0": x (optional) } ] }
/// Relative paths resolve against the scheduler file's directory.
struct SchedulerFile {
  SchedulerConfig config;
  std::vector<MultiCellInput> inputs;
};
SchedulerFile load_scheduler(const std::filesystem::path& path);

std::string format_estimates(const std::vector<MultiCellRow>& rows);

std::string format_report(const std::vector<StageReport>& report);

}  // namespace tridipole::io
