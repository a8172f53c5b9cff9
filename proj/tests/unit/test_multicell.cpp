#include <doctest.h>

#include <cmath>
#include <memory>

#include "support/synthetic_cell.hpp"
#include "tridipole/error.hpp"
#include "tridipole/multicell.hpp"

using namespace tridipole;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

struct Pack {
  SchedulerConfig config;
  std::vector<MultiCellInput> inputs;
};

// n cells at t_slot = 1 / n s, so every cell is serviced once per second.
Pack make_pack(std::size_t n, double horizon) {
  Pack pack;
  pack.config.t_slot = 1.0 / static_cast<double>(n);
  pack.config.f_max = 0.5 * 0.999;
  pack.config.cells = ids(n);
  for (std::size_t c = 0; c < n; ++c) {
    auto params = std::make_shared<const CellParameters>(testing::make_cell(testing::random_spec(100 + c)));
    const auto profile = us06_like(1.0, 500 + c, horizon, 20.0);
    const double soc0 = 0.9 - 0.01 * static_cast<double>(c);
    auto sim = simulate(*params, profile, CellState::at_rest(vqst_from_soc(*params, soc0), 2));
    const auto cfg = EkfConfig::defaults(CellState::at_rest(vqst_from_soc(*params, 0.7), 2));
    pack.inputs.push_back({{pack.config.cells[c], params, cfg}, std::move(sim.trace), soc0});
  }
  return pack;
}

}  // namespace

TEST_CASE("cell budget") {
  CHECK(max_cells(2.0, 0.01) == 25);
  CHECK(max_cells(0.5, 1.0) == 1);
  CHECK(max_cells(2.0, 0.021) == 11);
  CHECK_THROWS_AS(max_cells(0.0, 0.01), Error);
  CHECK_THROWS_AS(max_cells(2.0, -1.0), Error);
}

TEST_CASE("26 cells exceed the budget") {
  SchedulerConfig cfg{0.01, 2.0, ids(26)};
  try {
    cfg.validate();
    FAIL("expected a budget violation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BudgetViolation);
    CHECK(std::string(e.what()).find("= 25") != std::string::npos);
  }
  cfg.cells = ids(25);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("duplicate ids are rejected") {
  SchedulerConfig cfg{0.01, 2.0, {"a", "b", "a"}};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("ring of five equals five independent filters") {
  const Pack pack = make_pack(5, 300.0);
  const auto run = run_multicell(pack.config, pack.inputs);
  CHECK(run.degraded_updates == 0);
  for (const auto& in : pack.inputs) {
    const auto rows = run.cell(in.setup.cell_id);
    // Independent filter fed the same zero-order-hold samples at the same instants.
    CellFilter filter(*in.setup.params, in.setup.config);
    std::size_t k = 0;
    REQUIRE(!rows.empty());
    for (const auto& r : rows) {
      while (k + 1 < in.trace.size() && in.trace.timestamps[k + 1] <= r.time) ++k;
      const auto s = filter.update(r.time, in.trace.current[k], in.trace.voltage[k]);
      CHECK(std::abs(s.soc - r.soc_est) <= 1e-10);
    }
  }
}

TEST_CASE("ring of one equals the single-cell filter") {
  const Pack pack = make_pack(1, 300.0);
  const auto run = run_multicell(pack.config, pack.inputs);
  const auto& in = pack.inputs.front();
  const auto steps = run_filter(*in.setup.params, in.setup.config, in.trace);
  REQUIRE(run.rows.size() == steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    CHECK(run.rows[k].soc_est == steps[k].soc);
    CHECK(run.rows[k].innovation == steps[k].innovation);
  }
  const auto cc = coulomb_count(in.trace.profile(), in.setup.params->nominal_capacity(), in.reference_soc0);
  CHECK(run.rows.back().soc_ref == cc.value.back());
}

TEST_CASE("out-of-order measurement is a scheduling violation and leaves the ring untouched") {
  const Pack pack = make_pack(3, 120.0);
  std::vector<CellSetup> setups;
  for (const auto& in : pack.inputs) setups.push_back(in.setup);
  MultiCellEkf engine(pack.config, setups);
  engine.tick(0.0, {"c0", 0.0, 3.3});
  const CellSlot before = engine.slot(1);
  try {
    engine.tick(1.0 / 3.0, {"c2", 0.0, 3.3});
    FAIL("expected a scheduling violation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchedulingViolation);
  }
  CHECK(engine.next_cell() == "c1");
  CHECK(engine.slot(1).ekf.mean == before.ekf.mean);
  CHECK_NOTHROW(engine.tick(1.0 / 3.0, {"c1", 0.0, 3.3}));
}

TEST_CASE("a tick only touches its own slot") {
  const Pack pack = make_pack(3, 120.0);
  std::vector<CellSetup> setups;
  for (const auto& in : pack.inputs) setups.push_back(in.setup);
  MultiCellEkf engine(pack.config, setups);
  engine.tick(0.0, {"c0", 0.0, 3.3});
  const auto c0 = engine.slot(0).ekf.covariance;
  const auto c2 = engine.slot(2).ekf.covariance;
  engine.tick(1.0 / 3.0, {"c1", 1.0, 3.2});
  CHECK(engine.slot(0).ekf.covariance == c0);
  CHECK(engine.slot(2).ekf.covariance == c2);
  CHECK_FALSE(engine.slot(2).last_serviced_t.has_value());
}

TEST_CASE("late service is flagged") {
  const Pack pack = make_pack(2, 120.0);
  std::vector<CellSetup> setups;
  for (const auto& in : pack.inputs) setups.push_back(in.setup);
  MultiCellEkf engine(pack.config, setups);
  CHECK_FALSE(engine.tick(0.0, {"c0", 0.0, 3.3}).degraded);
  CHECK_FALSE(engine.tick(0.5, {"c1", 0.0, 3.3}).degraded);
  const auto on_time = engine.tick(1.0, {"c0", 0.0, 3.3});
  CHECK_FALSE(on_time.degraded);
  CHECK_FALSE(on_time.off_schedule);
  const auto late = engine.tick(5.0, {"c1", 0.0, 3.3});
  CHECK(late.degraded);
  CHECK(late.off_schedule);
}

TEST_CASE("traces must share a time base") {
  Pack pack = make_pack(2, 120.0);
  pack.inputs[1].trace = pack.inputs[1].trace.slice(1, pack.inputs[1].trace.size());
  CHECK_THROWS_AS(run_multicell(pack.config, pack.inputs), Error);
}
