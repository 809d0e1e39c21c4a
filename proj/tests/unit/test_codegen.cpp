#include "accelbridge/codegen.hpp"
#include "accelbridge/cosim.hpp"
#include "accelbridge/error.hpp"
#include "rule_instances.hpp"

#include <doctest.h>

#include <random>

using namespace accelbridge;
using namespace accelbridge::codegen;

namespace {

ir::OpAttrs linear_call(const char* op = "linear") {
  return ir::accel_call("FXLIN", op, {ir::var("a"), ir::var("b"), ir::var("c")})->attrs;
}

std::vector<ir::TensorValue> p1_args() {
  return {ir::TensorValue(Shape{1, 2}, {1, 2}), ir::TensorValue(Shape{2, 2}, {1, 0, 0, 1}),
          ir::TensorValue(Shape{2}, {0.5, -0.5})};
}

std::size_t count_phase(const IlaFragment& f, Phase p) {
  std::size_t n = 0;
  for (const auto& e : f.entries) n += e.phase == p;
  return n;
}

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

TEST_CASE("lower_call on the 1x2 . 2x2 linear layer") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const IlaFragment f = lower_call(linear_call(), p1_args(), def);
  // 4 weights + 2 bias + 2 inputs, cfg_dims + cfg_mode, fn_start, 2 reads.
  CHECK(f.size() == 13);
  CHECK(count_phase(f, Phase::DataIn) == 8);
  CHECK(count_phase(f, Phase::Configure) == 2);
  CHECK(count_phase(f, Phase::Trigger) == 1);
  CHECK(count_phase(f, Phase::ReadOut) == 2);
  CHECK(f.out_shape == Shape({1, 2}));
  for (std::size_t i = 1; i < f.entries.size(); ++i) CHECK(f.entries[i - 1].phase <= f.entries[i].phase);

  const IlaFragment fr = lower_call(linear_call("linear_relu"), p1_args(), def);
  CHECK(fr.size() == f.size());
  for (const auto& e : fr.entries)
    if (e.instruction == "cfg_mode") CHECK((e.command.data & 1) == 1);
  for (const auto& e : f.entries)
    if (e.instruction == "cfg_mode") CHECK((e.command.data & 1) == 0);

  auto big = p1_args();
  big[0] = ir::TensorValue::zeros(Shape{65, 2});
  CHECK(code_of([&] { lower_call(linear_call(), big, def); }) == ErrorCode::CapacityExceeded);
}

TEST_CASE("every fragment entry decodes its named instruction") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const IlaFragment f = lower_call(linear_call(), p1_args(), def);
  auto state = def.model.initial_state();
  for (const auto& e : f.entries) {
    const auto ins = sim::decode(def.model, state, e.command);
    if (e.phase == Phase::ReadOut) {
      CHECK_FALSE(ins.has_value());
      CHECK(def.model.read_map.count(e.command.addr) == 1);
    } else {
      CHECK(ins == e.instruction);
    }
    state = sim::step(def.model, state, e.command).state;
  }
}

TEST_CASE("trace text") {
  IlaFragment f;
  f.entries.push_back({Phase::Configure, "cfg_dims", sim::Command::write(accel::kCfg0, 2 | 2 << 8 | 3 << 16)});
  f.entries.push_back({Phase::Trigger, "fn_start", sim::Command::write(accel::kStart, 1)});
  f.entries.push_back({Phase::ReadOut, "", sim::Command::read(accel::kOutputBase)});
  CHECK(print_trace(emit_mmio(f)) ==
        "W 0x00000010 0x00030202\n"
        "W 0x00000020 0x00000001\n"
        "R 0x00030000 -> ?\n");
  CHECK(emit_mmio(IlaFragment{}).size() == 0);
  CHECK(print_trace(emit_mmio(IlaFragment{})).empty());
}

TEST_CASE("parse_trace") {
  const std::string golden = testing::slurp(testing::fixture_path("p1_call_000.trace"));
  const MmioTrace t = parse_trace(golden);
  CHECK(t.size() == 13);
  CHECK(print_trace(t) == golden);
  CHECK(print_trace(parse_trace(print_trace(t))) == golden);

  const MmioTrace c = parse_trace("# header\nW 0x00000010 0x00000001   # trailing\n\nR 0x00030000 -> ?  \n");
  REQUIRE(c.size() == 2);
  CHECK(c.lines[0].command == sim::Command::write(0x10, 1));
  CHECK_FALSE(c.lines[1].expected.has_value());
  CHECK(parse_trace("# only a comment\n").size() == 0);

  for (const char* bad : {"W 0x0000001g 0x00000001\n", "W 0x10 0x1\n", "X 0x00000010 0x00000001\n",
                          "R 0x00030000 0x00000001\n", "W 0x00000010\n"}) {
    INFO(bad);
    CHECK(code_of([&] { parse_trace(bad); }) == ErrorCode::TraceSyntaxError);
  }
  try {
    parse_trace("W 0x00000010 0x00000001\nW 0xZZ\n");
  } catch (const SourceError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("golden trace for P1 is reproduced") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto r = cosim::simulate_call(linear_call(), p1_args(), def);
  CHECK(print_trace(r.trace) == testing::slurp(testing::fixture_path("p1_call_000.trace")));
  CHECK(r.output.data == std::vector<double>{1.5, 1.5});
}

TEST_CASE("replay fills reads and rejects unmapped commands") {
  const auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const MmioTrace t = parse_trace("W 0x00000010 0x00010101\nR 0x00030000 -> ?\n");
  const Replay r = replay(t, def);
  CHECK(r.trace.lines[1].expected == 0u);
  CHECK(code_of([&] { replay(parse_trace("W 0xdead0000 0x00000001\n"), def); }) == ErrorCode::UnmappedCommand);
}

TEST_CASE("property: one command per entry per decoded instruction") {
  std::mt19937_64 rng(41);
  for (const auto& num : {fx::AccelNumerics::v1(), fx::AccelNumerics::v2()}) {
    const auto lin = accel::build_fxlin(num), cnn = accel::build_fxcnn(num);
    for (int i = 0; i < 25; ++i) {
      const int64_t M = testing::uniform_int(rng, 1, 6), K = testing::uniform_int(rng, 1, 6),
                    N = testing::uniform_int(rng, 1, 6);
      const auto c = testing::random_conv(rng, 1);
      const std::vector<std::pair<const accel::AcceleratorDef*, std::pair<ir::OpAttrs, std::vector<ir::TensorValue>>>>
          cases = {
              {&lin,
               {linear_call(),
                {testing::random_tensor(Shape{M, K}, rng), testing::random_tensor(Shape{N, K}, rng),
                 testing::random_tensor(Shape{N}, rng)}}},
              {&cnn,
               {ir::accel_call_conv("FXCNN", "conv2d", {ir::var("d"), ir::var("w")}, c.stride, c.pad)->attrs,
                {testing::random_tensor(c.data, rng), testing::random_tensor(c.weight, rng)}}},
          };
      for (const auto& [def, call] : cases) {
        const IlaFragment f = lower_call(call.first, call.second, *def);
        const MmioTrace t = emit_mmio(f);
        const Replay r = replay(t, *def);
        std::size_t decoded = 0;
        for (const auto& rec : r.run.log.records) decoded += rec.instruction.has_value() || rec.read_data.has_value();
        CHECK(t.size() == f.size());
        CHECK(decoded == f.size());
        CHECK(print_trace(emit_mmio(lower_call(call.first, call.second, *def))) == print_trace(t));
      }
    }
  }
}
