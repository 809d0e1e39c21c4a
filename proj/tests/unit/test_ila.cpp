#include "accelbridge/accelerators.hpp"
#include "accelbridge/error.hpp"
#include "accelbridge/ila.hpp"

#include <doctest.h>

#include <random>

using namespace accelbridge;
using namespace accelbridge::ila;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an accelbridge::Error");
  return ErrorCode::InvalidArgument;
}

uint64_t bits(const Value& v) { return std::get<BitVec>(v).bits; }

// Random well-typed expressions over a fixed vocabulary of variables: one
// state and one input variable per width, a bool input and a mem<4,8> state.
constexpr unsigned kWidths[] = {1, 4, 8, 16, 32};

struct ExprGen {
  std::mt19937_64 rng;

  explicit ExprGen(uint64_t seed) : rng(seed) {}

  unsigned pick(unsigned n) { return static_cast<unsigned>(std::uniform_int_distribution<unsigned>(0, n - 1)(rng)); }
  uint64_t word() { return rng(); }

  Expr leaf(unsigned w) {
    switch (pick(3)) {
      case 0: return bv_const(w, word());
      case 1: return state_var("s" + std::to_string(w));
      default: return input_var("i" + std::to_string(w));
    }
  }

  Expr mem(int depth) {
    if (depth <= 0 || pick(2) == 0) return state_var("m");
    return mem_store(mem(depth - 1), bv(4, depth - 1), bv(8, depth - 1));
  }

  Expr boolean(int depth) {
    if (depth <= 0) return pick(2) ? input_var("flag") : bool_const(pick(2) == 1);
    const unsigned w = kWidths[pick(5)];
    switch (pick(5)) {
      case 0: return eq(bv(w, depth - 1), bv(w, depth - 1));
      case 1: return ult(bv(w, depth - 1), bv(w, depth - 1));
      case 2: return slt(bv(w, depth - 1), bv(w, depth - 1));
      case 3: return bit_not(boolean(depth - 1));
      default: return bit_and(boolean(depth - 1), boolean(depth - 1));
    }
  }

  Expr bv(unsigned w, int depth) {
    if (depth <= 0) return leaf(w);
    const int d = depth - 1;
    switch (pick(13)) {
      case 0: return add(bv(w, d), bv(w, d));
      case 1: return sub(bv(w, d), bv(w, d));
      case 2: return mul(bv(w, d), bv(w, d));
      case 3: return bit_xor(bv(w, d), bv(w, d));
      case 4: return bit_not(bv(w, d));
      case 5: return shl(bv(w, d), bv(w, d));
      case 6: return lshr(bv(w, d), bv(w, d));
      case 7: return ite(boolean(d), bv(w, d), bv(w, d));
      case 8: {
        for (unsigned wide : kWidths)
          if (wide > w && pick(2) == 0) {
            const unsigned lo = pick(wide - w + 1);
            return extract(bv(wide, d), lo + w - 1, lo);
          }
        return leaf(w);
      }
      case 9: {
        if (w < 2) return leaf(w);
        const unsigned hi = 1 + pick(w - 1);
        return concat(bv(hi, d), bv(w - hi, d));
      }
      case 10: {
        for (unsigned narrow : kWidths)
          if (narrow < w && pick(2) == 0) return pick(2) ? zext(bv(narrow, d), w) : sext(bv(narrow, d), w);
        return leaf(w);
      }
      case 11:
        if (w == 8) return mem_select(mem(d), bv(4, d));
        if (w == 1) return select_bit(bv(16, d), pick(16));
        return leaf(w);
      default: return leaf(w);
    }
  }
};

// concat widths above are arbitrary, so contexts cover every width up to 32.
SortContext gen_context() {
  SortContext ctx;
  for (unsigned w = 1; w <= 32; ++w) {
    ctx.emplace("s" + std::to_string(w), Sort::bv(w));
    ctx.emplace("i" + std::to_string(w), Sort::bv(w));
  }
  ctx.emplace("flag", Sort::boolean());
  ctx.emplace("m", Sort::mem(4, 8));
  return ctx;
}

void gen_valuation(std::mt19937_64& rng, Valuation& state, Valuation& inputs) {
  for (unsigned w = 1; w <= 32; ++w) {
    state["s" + std::to_string(w)] = BitVec(w, rng());
    inputs["i" + std::to_string(w)] = BitVec(w, rng());
  }
  inputs["flag"] = (rng() & 1) == 1;
  MemValue m(4, 8);
  for (int i = 0; i < 5; ++i) m = m.store(rng() & 0xf, rng() & 0xff);
  state["m"] = m;
}

}  // namespace

TEST_CASE("typecheck width arithmetic") {
  SortContext ctx{{"x", Sort::bv(32)}, {"a", Sort::bv(8)}, {"b", Sort::bv(8)}, {"c", Sort::bv(16)}};
  CHECK(typecheck_expr(extract(state_var("x"), 7, 0), ctx) == Sort::bv(8));
  CHECK(typecheck_expr(concat(state_var("a"), state_var("b")), ctx) == Sort::bv(16));
  CHECK(code_of([&] { typecheck_expr(add(state_var("a"), state_var("c")), ctx); }) == ErrorCode::SortMismatch);
  CHECK(code_of([&] { typecheck_expr(extract(state_var("x"), 32, 0), ctx); }) == ErrorCode::BadExtractRange);
  CHECK(code_of([&] { typecheck_expr(extract(state_var("x"), 3, 4), ctx); }) == ErrorCode::BadExtractRange);
  CHECK(code_of([&] { typecheck_expr(state_var("nope"), ctx); }) == ErrorCode::UnboundVariable);
}

TEST_CASE("eval examples") {
  CHECK(bits(eval_expr(add(bv_const(8, 0xff), bv_const(8, 0x01)), {}, {})) == 0x00);
  CHECK(bits(eval_expr(select_bit(bv_const(4, 0b1010), 1), {}, {})) == 1);
  CHECK(bits(eval_expr(select_bit(bv_const(4, 0b1010), 0), {}, {})) == 0);
  const Expr stored = mem_store(state_var("m"), bv_const(8, 5), bv_const(16, 42));
  Valuation st{{"m", MemValue(8, 16)}};
  CHECK(bits(eval_expr(mem_select(stored, bv_const(8, 5)), st, {})) == 42);
  CHECK(bits(eval_expr(mem_select(state_var("m"), bv_const(8, 9)), st, {})) == 0);
  CHECK(code_of([] { eval_expr(input_var("cmd"), {}, {}); }) == ErrorCode::UnboundVariable);
}

TEST_CASE("signed and shift operators") {
  CHECK(std::get<bool>(eval_expr(slt(bv_const(8, 0xff), bv_const(8, 0)), {}, {})));
  CHECK_FALSE(std::get<bool>(eval_expr(ult(bv_const(8, 0xff), bv_const(8, 0)), {}, {})));
  CHECK(bits(eval_expr(sext(bv_const(4, 0x8), 8), {}, {})) == 0xf8);
  CHECK(bits(eval_expr(zext(bv_const(4, 0x8), 8), {}, {})) == 0x08);
  CHECK(bits(eval_expr(shl(bv_const(8, 0x81), bv_const(8, 1)), {}, {})) == 0x02);
  CHECK(bits(eval_expr(lshr(bv_const(8, 0x81), bv_const(8, 9)), {}, {})) == 0);
  CHECK(bits(eval_expr(concat(bv_const(8, 0xab), bv_const(4, 0xc)), {}, {})) == 0xabc);
}

TEST_CASE("property: type preservation over random well-typed expressions") {
  ExprGen gen(7);
  const SortContext ctx = gen_context();
  std::mt19937_64 vals(11);
  for (int i = 0; i < 500; ++i) {
    const unsigned w = kWidths[gen.pick(5)];
    const Expr e = gen.pick(4) == 0 ? gen.boolean(4) : gen.bv(w, 4);
    const Sort s = typecheck_expr(e, ctx);
    Valuation state, inputs;
    gen_valuation(vals, state, inputs);
    const Value v = eval_expr(e, state, inputs);
    INFO(print_expr(e));
    REQUIRE(sort_of(v) == s);
    if (s.is_bv()) CHECK((std::get<BitVec>(v).bits & ~width_mask(s.width)) == 0);
  }
}

TEST_CASE("property: add/sub/mul are arithmetic modulo 2^width") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const unsigned w = 1 + static_cast<unsigned>(rng() % 64);
    const uint64_t a = rng() & width_mask(w), b = rng() & width_mask(w);
    __extension__ using u128 = unsigned __int128;
    const u128 mod = u128{1} << w;
    const auto expect = [&](u128 x) { return static_cast<uint64_t>(x % mod); };
    CHECK(bits(eval_expr(add(bv_const(w, a), bv_const(w, b)), {}, {})) == expect(u128{a} + b));
    CHECK(bits(eval_expr(sub(bv_const(w, a), bv_const(w, b)), {}, {})) == expect(u128{a} + mod - b));
    CHECK(bits(eval_expr(mul(bv_const(w, a), bv_const(w, b)), {}, {})) == expect(u128{a} * b));
  }
}

TEST_CASE("property: store/select axioms") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    MemValue m(12, 32);
    for (int k = 0; k < 20; ++k) m = m.store(rng() & 0xfff, rng() & 0xffffffff);
    const uint64_t a = rng() & 0xfff, b = rng() & 0xfff, d = rng() & 0xffffffff;
    Valuation st{{"m", m}};
    const Expr stored = mem_store(state_var("m"), bv_const(12, a), bv_const(32, d));
    CHECK(bits(eval_expr(mem_select(stored, bv_const(12, a)), st, {})) == d);
    if (a != b) CHECK(bits(eval_expr(mem_select(stored, bv_const(12, b)), st, {})) == m.load(b));
  }
}

TEST_CASE("memories are sparse and compare by value") {
  MemValue m(32, 32);
  const MemValue m2 = m.store(0xdead0000, 7);
  CHECK(m2.nonzero_words() == 1);
  CHECK(m2.load(0xdead0000) == 7);
  CHECK(m2.store(0xdead0000, 0) == m);
  CHECK_FALSE(m2 == m);
}

TEST_CASE("shipped accelerator models are well-formed") {
  for (const auto& id : accel::accelerator_ids()) {
    for (const auto& num : {fx::AccelNumerics::v1(), fx::AccelNumerics::v2()}) {
      const auto def = accel::build_accelerator(id, num);
      const Report r = check_wellformed(def.model);
      INFO(id << ": " << r.str());
      CHECK(r.ok());
    }
  }
}

TEST_CASE("check_wellformed catches injected defects") {
  const auto base = accel::build_fxlin(fx::AccelNumerics::v2());
  const Expr on_cfg0 = bit_and(input_var(kCmdWrite), eq(input_var(kCmdAddr), bv_const(32, accel::kCfg0)));

  SUBCASE("decode overlap") {
    IlaModel m = base.model;
    m.instructions.push_back({"shadow_cfg", on_cfg0, {{"relu_en", bv_const(1, 1)}}, std::nullopt, ""});
    const Report r = check_wellformed(m);
    CHECK(r.count(FindingKind::DecodeOverlap) >= 1);
  }
  SUBCASE("unknown update target") {
    IlaModel m = base.model;
    m.instructions.push_back({"bogus", bool_const(false), {{"foo", bv_const(8, 0)}}, std::nullopt, ""});
    CHECK(check_wellformed(m).count(FindingKind::UnknownStateTarget) == 1);
  }
  SUBCASE("duplicate names") {
    IlaModel m = base.model;
    m.states.push_back(m.states.front());
    CHECK(check_wellformed(m).count(FindingKind::DuplicateName) >= 1);
  }
  SUBCASE("ill-typed update") {
    IlaModel m = base.model;
    m.instructions.push_back({"narrow", bool_const(false), {{"m_dim", bv_const(16, 0)}}, std::nullopt, ""});
    CHECK(check_wellformed(m).count(FindingKind::TypeError) == 1);
  }
  SUBCASE("read map colliding with a decode address") {
    IlaModel m = base.model;
    m.read_map.emplace(accel::kStart, state_var("m_dim"));
    CHECK(check_wellformed(m).count(FindingKind::ReadMapCollision) == 1);
  }
}

TEST_CASE("model listing names every instruction") {
  const auto def = accel::build_fxcnn(fx::AccelNumerics::v2());
  const std::string text = print_model(def.model);
  for (const auto& ins : def.model.instructions) CHECK(text.find(ins.name) != std::string::npos);
}
