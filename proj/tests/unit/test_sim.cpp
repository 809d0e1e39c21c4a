#include "accelbridge/accelerators.hpp"
#include "accelbridge/codegen.hpp"
#include "accelbridge/error.hpp"
#include "accelbridge/ila_sim.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace accelbridge;
using namespace accelbridge::ila;
using sim::Command;

namespace {

Expr write_at(uint32_t addr) { return bit_and(input_var(kCmdWrite), eq(input_var(kCmdAddr), bv_const(32, addr))); }

// Three 8-bit registers; "rotate" shifts their values, "load_x" copies the
// command data into x.
IlaModel toy_model(std::vector<Update> rotate_updates) {
  IlaModel m;
  m.name = "TOY";
  m.inputs = {{kCmdWrite, Sort::boolean()}, {kCmdAddr, Sort::bv(32)}, {kCmdData, Sort::bv(32)}};
  m.states = {{"x", Sort::bv(8), BitVec(8, 1)}, {"y", Sort::bv(8), BitVec(8, 2)}, {"z", Sort::bv(8), BitVec(8, 3)}};
  m.instructions.push_back({"rotate", write_at(0x4), std::move(rotate_updates), std::nullopt, ""});
  m.instructions.push_back({"load_x", write_at(0x8), {{"x", extract(input_var(kCmdData), 7, 0)}}, std::nullopt, ""});
  m.read_map.emplace(0x100, zext(state_var("x"), 32));
  return m;
}

IlaModel swap_model() { return toy_model({{"x", state_var("y")}, {"y", state_var("x")}}); }

uint64_t reg(const sim::MachineState& s, const std::string& name) { return std::get<BitVec>(s.at(name)).bits; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an accelbridge::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("decode on the FXLIN address map") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto init = def.model.initial_state();
  CHECK(sim::decode(def.model, init, Command::write(0x10, 0)) == "cfg_dims");
  CHECK(sim::decode(def.model, init, Command::write(0x14, 1)) == "cfg_mode");
  CHECK(sim::decode(def.model, init, Command::write(0x20, 1)) == "fn_start");
  CHECK(sim::decode(def.model, init, Command::write(0x20, 0)) == std::nullopt);
  CHECK(sim::decode(def.model, init, Command::write(0x10004, 0)) == "wr_weight");
  CHECK(sim::decode(def.model, init, Command::write(0x2fffc, 0)) == "wr_input");
  CHECK(sim::decode(def.model, init, Command::write(0x40000, 0)) == "wr_bias");
  CHECK(sim::decode(def.model, init, Command::write(0xdead0000, 0)) == std::nullopt);
  CHECK(sim::decode(def.model, init, Command::read(0x30000)) == std::nullopt);
}

TEST_CASE("overlapping decodes surface at runtime") {
  IlaModel m = swap_model();
  m.instructions.push_back({"also_rotate", write_at(0x4), {}, std::nullopt, ""});
  CHECK(code_of([&] { sim::decode(m, m.initial_state(), Command::write(0x4, 0)); }) == ErrorCode::DecodeOverlap);
}

TEST_CASE("step applies updates simultaneously") {
  const IlaModel m = swap_model();
  const auto r = sim::step(m, m.initial_state(), Command::write(0x4, 0));
  CHECK(reg(r.state, "x") == 2);
  CHECK(reg(r.state, "y") == 1);
  CHECK(reg(r.state, "z") == 3);
  CHECK(r.record.instruction == "rotate");
}

TEST_CASE("cfg_dims field packing") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto r = sim::step(def.model, def.model.initial_state(), Command::write(accel::kCfg0, 0x00030202));
  CHECK(reg(r.state, "m_dim") == 2);
  CHECK(reg(r.state, "k_dim") == 2);
  CHECK(reg(r.state, "n_dim") == 3);
}

TEST_CASE("unmapped command policies") {
  const IlaModel m = swap_model();
  const auto init = m.initial_state();
  CHECK(code_of([&] { sim::step(m, init, Command::write(0xdead0000, 1)); }) == ErrorCode::UnmappedCommand);

  const std::vector<Command> with = {Command::write(0x8, 9), Command::write(0xdead0000, 1), Command::write(0x4, 0)};
  const std::vector<Command> without = {Command::write(0x8, 9), Command::write(0x4, 0)};
  const auto a = sim::run(m, init, with, sim::UnmappedPolicy::Permissive);
  const auto b = sim::run(m, init, without, sim::UnmappedPolicy::Permissive);
  CHECK(a.state == b.state);
  REQUIRE(a.log.records.size() == 3);
  CHECK(a.log.records[1].skipped);
  CHECK_FALSE(a.log.records[1].instruction.has_value());

  const auto partial = sim::run_partial(m, init, with);
  CHECK(partial.error.has_value());
  CHECK(partial.result.log.records.size() == 1);
  CHECK(reg(partial.result.state, "x") == 9);
}

TEST_CASE("run of an empty trace is the identity") {
  const IlaModel m = swap_model();
  const auto r = sim::run(m, m.initial_state(), {});
  CHECK(r.state == m.initial_state());
  CHECK(r.log.records.empty());
}

TEST_CASE("golden FXLIN trace leaves the quantized linear layer in the output buffer") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto trace = codegen::parse_trace(testing::slurp(testing::fixture_path("p1_call_000.trace")));
  const auto r = sim::run(def.model, def.model.initial_state(), trace.commands());
  // [[1,2]] . I + [0.5,-0.5] = [[1.5,1.5]] in fx<16,8>.
  const int64_t expect = testing::oracle_quantize(1.5, 16, 8);
  CHECK(sim::mmio_read(def.model, r.state, accel::kOutputBase) == expect);
  CHECK(sim::mmio_read(def.model, r.state, accel::kOutputBase + 4) == expect);
  CHECK(r.log.records.size() == trace.size());
}

TEST_CASE("mmio_read") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto init = def.model.initial_state();
  CHECK(sim::mmio_read(def.model, init, accel::kOutputBase) == 0);
  CHECK(code_of([&] { sim::mmio_read(def.model, init, 0xdead0000); }) == ErrorCode::UnmappedRead);
  const auto r = sim::step(def.model, init, Command::read(accel::kOutputBase + 8));
  CHECK(r.record.read_data == 0u);
  CHECK(r.state == init);
}

TEST_CASE("property: run is deterministic") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto trace = codegen::parse_trace(testing::slurp(testing::fixture_path("p1_call_000.trace")));
  const auto a = sim::run(def.model, def.model.initial_state(), trace.commands());
  const auto b = sim::run(def.model, def.model.initial_state(), trace.commands());
  CHECK(a.state == b.state);
  CHECK(a.log.str() == b.log.str());
  CHECK(sim::state_hash(a.state) == sim::state_hash(b.state));
}

TEST_CASE("property: permuting an update list never changes step") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> names = {"x", "y", "z"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Update> ups;
    for (const auto& target : names) {
      if (rng() % 3 == 0) continue;
      const auto& src = names[rng() % 3];
      ups.push_back({target, add(state_var(src), bv_const(8, rng() & 0xff))});
    }
    auto shuffled = ups;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const IlaModel a = toy_model(ups), b = toy_model(shuffled);
    sim::MachineState init{{"x", BitVec(8, rng())}, {"y", BitVec(8, rng())}, {"z", BitVec(8, rng())}};
    CHECK(sim::step(a, init, Command::write(0x4, 0)).state == sim::step(b, init, Command::write(0x4, 0)).state);
  }
}

TEST_CASE("property: frame condition and read purity on random FXLIN commands") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  std::mt19937_64 rng(23);
  const uint32_t bases[] = {accel::kCfg0, accel::kCfg1, accel::kWeightBase, accel::kInputBase, accel::kBiasBase};
  sim::MachineState s = def.model.initial_state();
  for (int i = 0; i < 300; ++i) {
    const uint32_t base = bases[rng() % 5];
    const uint32_t addr = base >= accel::kWeightBase ? base + 4 * static_cast<uint32_t>(rng() % 64) : base;
    const auto cmd = Command::write(addr, static_cast<uint32_t>(rng()) & 0x00ffffff);
    const auto r = sim::step(def.model, s, cmd);
    const auto* ins = def.model.find_instruction(*r.record.instruction);
    REQUIRE(ins != nullptr);
    const auto targets = ins->targets();
    for (const auto& st : def.model.states)
      if (std::find(targets.begin(), targets.end(), st.name) == targets.end())
        CHECK(r.state.at(st.name) == s.at(st.name));
    s = r.state;
    const uint64_t h = sim::state_hash(s);
    sim::mmio_read(def.model, s, accel::kOutputBase + 4 * static_cast<uint32_t>(rng() % 64));
    CHECK(sim::state_hash(s) == h);
  }
}
