#include "tridipole/multicell.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "tridipole/error.hpp"

namespace tridipole {
namespace {

std::string budget_message(std::size_t requested, double f_max, double t_slot, std::size_t budget) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu cells exceed the budget floor(1 / (2 * %g Hz * %g s)) = %zu", requested, f_max,
                t_slot, budget);
  return buf;
}

}  // namespace

std::size_t max_cells(double f_max, double t_slot) {
  if (!(f_max > 0.0) || !std::isfinite(f_max) || !(t_slot > 0.0) || !std::isfinite(t_slot)) {
    throw Error(ErrorKind::InvalidInput, "f_max and t_slot must be positive");
  }
  const double bound = 1.0 / (2.0 * f_max * t_slot);
  // 1 / (2 * 2 * 0.01) evaluates to 24.999999999999996; absorb that round-off.
  return static_cast<std::size_t>(std::floor(bound * (1.0 + 1e-12)));
}

void SchedulerConfig::validate() const {
  const std::size_t budget = max_cells(f_max, t_slot);
  if (cells.empty()) throw Error(ErrorKind::InvalidInput, "scheduler needs at least one cell");
  std::set<std::string> seen;
  for (const auto& id : cells) {
    if (!seen.insert(id).second) throw Error(ErrorKind::InvalidInput, "duplicate cell id '" + id + "'");
  }
  if (cells.size() > budget) throw Error(ErrorKind::BudgetViolation, budget_message(cells.size(), f_max, t_slot, budget));
}

MultiCellEkf::MultiCellEkf(SchedulerConfig config, std::vector<CellSetup> cells) : config_(std::move(config)) {
  config_.validate();
  if (cells.size() != config_.cells.size()) throw Error(ErrorKind::InvalidInput, "one setup per scheduled cell is required");
  for (const auto& id : config_.cells) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSetup& c) { return c.cell_id == id; });
    if (it == cells.end()) throw Error(ErrorKind::InvalidInput, "no setup for cell '" + id + "'");
    if (!it->params) throw Error(ErrorKind::InvalidInput, "cell '" + id + "' has no parameters");
    it->config.validate(it->params->rc_count());
    slots_.push_back({id, it->params, it->config, EkfState::from_config(it->config), std::nullopt, 0.0});
  }
}

TickResult MultiCellEkf::tick(double now, const Measurement& m) {
  if (!std::isfinite(now)) throw Error(ErrorKind::InvalidInput, "non-finite tick time");
  CellSlot& slot = slots_[next_];
  if (m.cell_id != slot.cell_id) {
    throw Error(ErrorKind::SchedulingViolation,
                "measurement for '" + m.cell_id + "' arrived while '" + slot.cell_id + "' is due");
  }
  if (last_tick_ && !(now > *last_tick_)) throw Error(ErrorKind::SchedulingViolation, "tick time did not advance");

  TickResult out;
  out.cell_id = slot.cell_id;
  out.slot = next_;

  // MUX: the engine sees only this slot; DEMUX/MEM: the result replaces it.
  EkfState ekf = slot.ekf;
  if (slot.last_serviced_t) {
    const double dt = now - *slot.last_serviced_t;
    const double period = static_cast<double>(slots_.size()) * config_.t_slot;
    out.degraded = dt > 2.0 * period;
    out.off_schedule = std::abs(dt - period) > config_.t_slot;
    ekf = predict(ekf, *slot.params, 0.5 * (slot.last_current + m.current), dt, slot.config);
  }
  Correction c = correct(ekf, *slot.params, m.voltage, m.current, slot.config);
  slot.ekf = std::move(c.state);
  slot.last_serviced_t = now;
  slot.last_current = m.current;
  out.soc = estimate_soc(slot.ekf, *slot.params);
  out.innovation = c.innovation;

  last_tick_ = now;
  next_ = (next_ + 1) % slots_.size();
  return out;
}

std::vector<MultiCellRow> MultiCellRun::cell(const std::string& cell_id) const {
  std::vector<MultiCellRow> out;
  for (const auto& r : rows) {
    if (r.cell_id == cell_id) out.push_back(r);
  }
  return out;
}

MultiCellRun run_multicell(const SchedulerConfig& config, const std::vector<MultiCellInput>& inputs) {
  config.validate();
  if (inputs.size() != config.cells.size()) throw Error(ErrorKind::InvalidInput, "one input per scheduled cell is required");

  // Inputs reordered to the ring order.
  std::vector<const MultiCellInput*> ring;
  std::vector<CellSetup> setups;
  for (const auto& id : config.cells) {
    auto it = std::find_if(inputs.begin(), inputs.end(), [&](const MultiCellInput& in) { return in.setup.cell_id == id; });
    if (it == inputs.end()) throw Error(ErrorKind::InvalidInput, "no trace for cell '" + id + "'");
    it->trace.validate();
    ring.push_back(&*it);
    setups.push_back(it->setup);
  }
  const double t0 = ring.front()->trace.timestamps.front();
  const double t_end = ring.front()->trace.timestamps.back();
  for (const auto* in : ring) {
    if (in->trace.timestamps.front() != t0 || in->trace.timestamps.back() != t_end) {
      throw Error(ErrorKind::InvalidInput, "cell traces must share a common time base");
    }
  }

  std::vector<std::vector<double>> reference;
  for (const auto* in : ring) {
    reference.push_back(coulomb_count(in->trace.profile(), in->setup.params->nominal_capacity(), in->reference_soc0).value);
  }

  MultiCellEkf engine(config, std::move(setups));
  const std::size_t n = ring.size();
  std::vector<std::size_t> cursor(n, 0);
  MultiCellRun run;
  for (std::size_t j = 0;; ++j) {
    const double now = t0 + static_cast<double>(j) * config.t_slot;
    if (now > t_end) break;
    const std::size_t c = j % n;
    const Trace& tr = ring[c]->trace;
    std::size_t& k = cursor[c];
    while (k + 1 < tr.size() && tr.timestamps[k + 1] <= now) ++k;
    const TickResult r = engine.tick(now, {config.cells[c], tr.current[k], tr.voltage[k]});
    if (r.degraded) ++run.degraded_updates;
    run.rows.push_back({now, r.cell_id, r.soc, reference[c][k], r.innovation});
  }
  return run;
}

}  // namespace tridipole
