#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tridipole/cell_model.hpp"
#include "tridipole/estimator.hpp"
#include "tridipole/trace.hpp"

namespace tridipole {

/// Largest ring a single engine can serve while sampling every cell above
/// the Nyquist rate: floor(1 / (2 f_max t_slot)).
std::size_t max_cells(double f_max, double t_slot);

struct SchedulerConfig {
  double t_slot = 0.01;             // s
  double f_max = 2.0;               // Hz
  std::vector<std::string> cells;   // fixed service order

  /// Throws InvalidInput for bad values, BudgetViolation when the ring is
  /// larger than `max_cells`.
  void validate() const;
};

/// Per-cell memory of the round-robin engine.
struct CellSlot {
  std::string cell_id;
  std::shared_ptr<const CellParameters> params;
  EkfConfig config;
  EkfState ekf;
  std::optional<double> last_serviced_t;
  double last_current = 0.0;
};

struct CellSetup {
  std::string cell_id;
  std::shared_ptr<const CellParameters> params;
  EkfConfig config;
};

struct Measurement {
  std::string cell_id;
  double current = 0.0;  // A
  double voltage = 0.0;  // V
};

struct TickResult {
  std::string cell_id;
  std::size_t slot = 0;
  double soc = 0.0;
  double innovation = 0.0;
  bool degraded = false;      // gap since the last service exceeded 2 * N * t_slot
  bool off_schedule = false;  // gap differs from N * t_slot by more than t_slot
};

/// One EKF engine time-sliced over a ring of cells. Each tick loads the due
/// slot, predicts over the time elapsed since that cell was last serviced,
/// corrects with the measurement, stores the slot back and moves the ring
/// pointer. Other slots are never touched.
class MultiCellEkf {
 public:
  MultiCellEkf(SchedulerConfig config, std::vector<CellSetup> cells);

  TickResult tick(double now, const Measurement& measurement);

  std::size_t size() const { return slots_.size(); }
  std::size_t next_slot() const { return next_; }
  const std::string& next_cell() const { return slots_[next_].cell_id; }
  const CellSlot& slot(std::size_t i) const { return slots_.at(i); }
  const SchedulerConfig& config() const { return config_; }

 private:
  SchedulerConfig config_;
  std::vector<CellSlot> slots_;
  std::size_t next_ = 0;
  std::optional<double> last_tick_;
};

struct MultiCellInput {
  CellSetup setup;
  Trace trace;
  double reference_soc0 = 1.0;  // initial value for the coulomb-counting reference
};

struct MultiCellRow {
  double time = 0.0;
  std::string cell_id;
  double soc_est = 0.0;
  double soc_ref = 0.0;
  double innovation = 0.0;
};

struct MultiCellRun {
  std::vector<MultiCellRow> rows;  // one per tick, in service order
  std::size_t degraded_updates = 0;

  /// Rows of one cell in time order.
  std::vector<MultiCellRow> cell(const std::string& cell_id) const;
};

/// Runs the ring over traces that share a time base. Tick j happens at
/// t0 + j * t_slot and serves cell j mod N; each cell's measurement is the
/// last trace sample at or before the tick (zero-order hold). The reference
/// is coulomb counting with the cell's nominal capacity.
MultiCellRun run_multicell(const SchedulerConfig& config, const std::vector<MultiCellInput>& inputs);

}  // namespace tridipole
