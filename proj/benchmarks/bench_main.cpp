#include "accelbridge/accelerators.hpp"
#include "accelbridge/codegen.hpp"
#include "accelbridge/rewrites.hpp"

#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace accelbridge;

namespace {

const char* const kCorpus[] = {"p1_linear.prog", "p2_reshaped.prog", "p3_fused.prog",
                               "p4_conv.prog",   "p5_mixed.prog",    "p6_none.prog"};

ir::Program load(const char* name) {
  std::ifstream in(std::string(ACCELBRIDGE_SOURCE_DIR) + "/corpus/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  auto p = ir::parse_program(ss.str());
  p.body = ir::infer_shapes(p.body, p.env());
  return p;
}

ir::TensorValue random_tensor(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(s.elements()));
  for (auto& x : d) x = dist(rng);
  return ir::TensorValue(s, std::move(d));
}

void BM_FlexibleMatch(benchmark::State& state) {
  const auto prog = load(kCorpus[state.range(0)]);
  const auto rules = rewrites::builtin_rules();
  state.SetLabel(kCorpus[state.range(0)]);
  for (auto _ : state) {
    auto rep = rewrites::flexible_match(prog, rules, {"FXLIN", "FXCNN"});
    benchmark::DoNotOptimize(rep.flexible_program);
  }
}
BENCHMARK(BM_FlexibleMatch)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_FxLinear(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int64_t> v(-128, 127);
  auto fill = [&](Shape s) {
    std::vector<int64_t> d(static_cast<std::size_t>(s.elements()));
    for (auto& x : d) x = v(rng);
    return fx::RawTensor(s, std::move(d));
  };
  const auto a = fill(Shape{n, n}), w = fill(Shape{n, n}), b = fill(Shape{n});
  const auto num = fx::AccelNumerics::v2();
  for (auto _ : state) benchmark::DoNotOptimize(fx::fx_linear(a, w, b, num));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_FxLinear)->RangeMultiplier(2)->Range(4, 16);

struct Call {
  accel::AcceleratorDef def;
  codegen::MmioTrace trace;
};

Call linear_call(int64_t n) {
  std::mt19937_64 rng(2);
  auto def = accel::build_fxlin(fx::AccelNumerics::v2());
  const auto call = ir::accel_call("FXLIN", "linear", {ir::var("a"), ir::var("b"), ir::var("c")})->attrs;
  const std::vector<ir::TensorValue> args = {random_tensor(Shape{n, n}, rng), random_tensor(Shape{n, n}, rng),
                                             random_tensor(Shape{n}, rng)};
  auto trace = codegen::emit_mmio(codegen::lower_call(call, args, def));
  return {std::move(def), std::move(trace)};
}

void BM_IlaSimSteps(benchmark::State& state) {
  const auto c = linear_call(state.range(0));
  const auto commands = c.trace.commands();
  for (auto _ : state) {
    auto r = sim::run(c.def.model, c.def.model.initial_state(), commands);
    benchmark::DoNotOptimize(r.state);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c.trace.size()));
}
BENCHMARK(BM_IlaSimSteps)->Arg(2)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_CodegenReplay(benchmark::State& state) {
  const auto c = linear_call(state.range(0));
  const auto call = ir::accel_call("FXLIN", "linear", {ir::var("a"), ir::var("b"), ir::var("c")})->attrs;
  std::mt19937_64 rng(3);
  const int64_t n = state.range(0);
  const std::vector<ir::TensorValue> args = {random_tensor(Shape{n, n}, rng), random_tensor(Shape{n, n}, rng),
                                             random_tensor(Shape{n}, rng)};
  for (auto _ : state) {
    const auto frag = codegen::lower_call(call, args, c.def);
    const auto text = codegen::print_trace(codegen::emit_mmio(frag));
    const auto trace = codegen::parse_trace(text);
    auto rep = codegen::replay(trace, c.def);
    benchmark::DoNotOptimize(codegen::readback(rep.trace, frag.out_shape, c.def));
  }
}
BENCHMARK(BM_CodegenReplay)->Arg(2)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
