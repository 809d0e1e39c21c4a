#include "accelbridge/error.hpp"
#include "accelbridge/ila.hpp"

#include <algorithm>
#include <sstream>

namespace accelbridge::ila {

Sort Sort::bv(unsigned width) {
  if (width < 1 || width > kMaxWidth)
    throw Error(ErrorCode::InvalidArgument, "bitvector width " + std::to_string(width) + " outside 1..64");
  return {Kind::BitVector, width, 0, 0};
}

Sort Sort::mem(unsigned addr_width, unsigned data_width) {
  if (addr_width < 1 || addr_width > kMaxWidth || data_width < 1 || data_width > kMaxWidth)
    throw Error(ErrorCode::InvalidArgument, "memory widths outside 1..64");
  return {Kind::Memory, 0, addr_width, data_width};
}

std::string Sort::str() const {
  switch (kind) {
    case Kind::Boolean: return "bool";
    case Kind::BitVector: return "bv" + std::to_string(width);
    case Kind::Memory: return "mem<" + std::to_string(addr_width) + "," + std::to_string(data_width) + ">";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// MemValue

MemValue::MemValue(unsigned addr_width, unsigned data_width)
    : addr_width_(addr_width), data_width_(data_width) {}

uint64_t MemValue::load(uint64_t addr) const {
  addr &= width_mask(addr_width_);
  const uint64_t page = addr >> kPageBits;
  auto it = std::lower_bound(pages_.begin(), pages_.end(), page,
                             [](const auto& entry, uint64_t p) { return entry.first < p; });
  if (it == pages_.end() || it->first != page) return 0;
  return (*it->second)[addr & (kPageWords - 1)];
}

MemValue MemValue::store(uint64_t addr, uint64_t data) const {
  addr &= width_mask(addr_width_);
  data &= width_mask(data_width_);
  const uint64_t page = addr >> kPageBits;
  MemValue out = *this;
  auto it = std::lower_bound(out.pages_.begin(), out.pages_.end(), page,
                             [](const auto& entry, uint64_t p) { return entry.first < p; });
  if (it == out.pages_.end() || it->first != page) {
    if (data == 0) return out;
    auto fresh = std::make_shared<Page>();
    fresh->fill(0);
    (*fresh)[addr & (kPageWords - 1)] = data;
    out.pages_.insert(it, {page, std::move(fresh)});
    return out;
  }
  auto copy = std::make_shared<Page>(*it->second);
  (*copy)[addr & (kPageWords - 1)] = data;
  it->second = std::move(copy);
  return out;
}

std::size_t MemValue::nonzero_words() const {
  std::size_t n = 0;
  for (const auto& [index, page] : pages_)
    n += static_cast<std::size_t>(std::count_if(page->begin(), page->end(), [](uint64_t w) { return w != 0; }));
  return n;
}

void MemValue::for_each_nonzero(const std::function<void(uint64_t, uint64_t)>& fn) const {
  for (const auto& [index, page] : pages_) {
    for (uint64_t i = 0; i < kPageWords; ++i) {
      if ((*page)[i] != 0) fn((index << kPageBits) | i, (*page)[i]);
    }
  }
}

bool operator==(const MemValue& a, const MemValue& b) {
  if (a.addr_width_ != b.addr_width_ || a.data_width_ != b.data_width_) return false;
  std::vector<std::pair<uint64_t, uint64_t>> wa, wb;
  a.for_each_nonzero([&](uint64_t addr, uint64_t d) { wa.emplace_back(addr, d); });
  b.for_each_nonzero([&](uint64_t addr, uint64_t d) { wb.emplace_back(addr, d); });
  return wa == wb;
}

Sort sort_of(const Value& v) {
  if (std::holds_alternative<bool>(v)) return Sort::boolean();
  if (const auto* bv = std::get_if<BitVec>(&v)) return Sort::bv(bv->width);
  const auto& m = std::get<MemValue>(v);
  return Sort::mem(m.addr_width(), m.data_width());
}

std::string to_string(const Value& v) {
  std::ostringstream os;
  if (const auto* b = std::get_if<bool>(&v)) {
    os << (*b ? "true" : "false");
  } else if (const auto* bv = std::get_if<BitVec>(&v)) {
    os << "bv" << bv->width << ":0x" << std::hex << bv->bits;
  } else {
    const auto& m = std::get<MemValue>(v);
    os << "mem{" << m.nonzero_words() << " nonzero}";
  }
  return os.str();
}

Value zero_value(const Sort& sort) {
  switch (sort.kind) {
    case Sort::Kind::Boolean: return false;
    case Sort::Kind::BitVector: return BitVec(sort.width, 0);
    case Sort::Kind::Memory: return MemValue(sort.addr_width, sort.data_width);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Constructors

namespace {

Expr make(Op op, std::vector<Expr> args, unsigned hi = 0, unsigned lo = 0) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->args = std::move(args);
  n->hi = hi;
  n->lo = lo;
  return Expr(std::move(n));
}

Expr make_const(Value v) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Const;
  n->constant = std::move(v);
  return Expr(std::move(n));
}

Expr make_var(std::string name, VarKind kind) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Var;
  n->name = std::move(name);
  n->var_kind = kind;
  return Expr(std::move(n));
}

}  // namespace

Expr bv_const(unsigned width, uint64_t value) {
  Sort::bv(width);
  return make_const(BitVec(width, value));
}
Expr bool_const(bool value) { return make_const(value); }
Expr mem_const(unsigned addr_width, unsigned data_width) {
  Sort::mem(addr_width, data_width);
  return make_const(MemValue(addr_width, data_width));
}
Expr state_var(std::string name) { return make_var(std::move(name), VarKind::State); }
Expr input_var(std::string name) { return make_var(std::move(name), VarKind::Input); }
Expr add(Expr a, Expr b) { return make(Op::Add, {std::move(a), std::move(b)}); }
Expr sub(Expr a, Expr b) { return make(Op::Sub, {std::move(a), std::move(b)}); }
Expr mul(Expr a, Expr b) { return make(Op::Mul, {std::move(a), std::move(b)}); }
Expr bit_and(Expr a, Expr b) { return make(Op::And, {std::move(a), std::move(b)}); }
Expr bit_or(Expr a, Expr b) { return make(Op::Or, {std::move(a), std::move(b)}); }
Expr bit_xor(Expr a, Expr b) { return make(Op::Xor, {std::move(a), std::move(b)}); }
Expr bit_not(Expr a) { return make(Op::Not, {std::move(a)}); }
Expr eq(Expr a, Expr b) { return make(Op::Eq, {std::move(a), std::move(b)}); }
Expr ult(Expr a, Expr b) { return make(Op::Ult, {std::move(a), std::move(b)}); }
Expr slt(Expr a, Expr b) { return make(Op::Slt, {std::move(a), std::move(b)}); }
Expr shl(Expr a, Expr b) { return make(Op::Shl, {std::move(a), std::move(b)}); }
Expr lshr(Expr a, Expr b) { return make(Op::Lshr, {std::move(a), std::move(b)}); }
Expr extract(Expr a, unsigned hi, unsigned lo) { return make(Op::Extract, {std::move(a)}, hi, lo); }
Expr concat(Expr hi_part, Expr lo_part) { return make(Op::Concat, {std::move(hi_part), std::move(lo_part)}); }
Expr zext(Expr a, unsigned width) { return make(Op::Zext, {std::move(a)}, width); }
Expr sext(Expr a, unsigned width) { return make(Op::Sext, {std::move(a)}, width); }
Expr ite(Expr c, Expr t, Expr e) { return make(Op::Ite, {std::move(c), std::move(t), std::move(e)}); }
Expr mem_select(Expr mem, Expr addr) { return make(Op::MemSelect, {std::move(mem), std::move(addr)}); }
Expr mem_store(Expr mem, Expr addr, Expr data) {
  return make(Op::MemStore, {std::move(mem), std::move(addr), std::move(data)});
}
Expr select_bit(Expr a, unsigned index) { return make(Op::SelectBit, {std::move(a)}, index); }

Expr uge(Expr a, Expr b) { return bit_not(ult(std::move(a), std::move(b))); }

Expr in_range(Expr a, uint64_t lo, uint64_t hi_exclusive) {
  return bit_and(uge(a, bv_const(32, lo)), ult(a, bv_const(32, hi_exclusive)));
}

// ---------------------------------------------------------------------------
// Type checking

namespace {

std::string op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Var: return "var";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::And: return "and";
    case Op::Or: return "or";
    case Op::Xor: return "xor";
    case Op::Not: return "not";
    case Op::Eq: return "eq";
    case Op::Ult: return "ult";
    case Op::Slt: return "slt";
    case Op::Shl: return "shl";
    case Op::Lshr: return "lshr";
    case Op::Extract: return "extract";
    case Op::Concat: return "concat";
    case Op::Zext: return "zext";
    case Op::Sext: return "sext";
    case Op::Ite: return "ite";
    case Op::MemSelect: return "mem_select";
    case Op::MemStore: return "mem_store";
    case Op::SelectBit: return "select_bit";
  }
  return "?";
}

[[noreturn]] void mismatch(Op op, const std::string& expected, const Sort& found) {
  throw Error(ErrorCode::SortMismatch, op_name(op) + ": expected " + expected + ", found " + found.str());
}

void expect_bv(Op op, const Sort& s) {
  if (!s.is_bv()) mismatch(op, "bitvector", s);
}

void expect_same(Op op, const Sort& a, const Sort& b) {
  if (!(a == b)) mismatch(op, a.str(), b);
}

}  // namespace

Sort typecheck_expr(const Expr& expr, const SortContext& ctx) {
  const ExprNode& n = expr.node();
  std::vector<Sort> s;
  s.reserve(n.args.size());
  for (const auto& a : n.args) s.push_back(typecheck_expr(a, ctx));

  switch (n.op) {
    case Op::Const: return sort_of(n.constant);
    case Op::Var: {
      auto it = ctx.find(n.name);
      if (it == ctx.end()) throw Error(ErrorCode::UnboundVariable, n.name);
      return it->second;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Shl:
    case Op::Lshr:
      expect_bv(n.op, s[0]);
      expect_same(n.op, s[0], s[1]);
      return s[0];
    case Op::And:
    case Op::Or:
    case Op::Xor:
      if (s[0].is_mem()) mismatch(n.op, "bool or bitvector", s[0]);
      expect_same(n.op, s[0], s[1]);
      return s[0];
    case Op::Not:
      if (s[0].is_mem()) mismatch(n.op, "bool or bitvector", s[0]);
      return s[0];
    case Op::Eq:
      if (s[0].is_mem()) mismatch(n.op, "bool or bitvector", s[0]);
      expect_same(n.op, s[0], s[1]);
      return Sort::boolean();
    case Op::Ult:
    case Op::Slt:
      expect_bv(n.op, s[0]);
      expect_same(n.op, s[0], s[1]);
      return Sort::boolean();
    case Op::Extract:
      expect_bv(n.op, s[0]);
      if (n.hi < n.lo || n.hi >= s[0].width)
        throw Error(ErrorCode::BadExtractRange, "extract(" + std::to_string(n.hi) + "," + std::to_string(n.lo) +
                                                    ") of " + s[0].str());
      return Sort::bv(n.hi - n.lo + 1);
    case Op::Concat:
      expect_bv(n.op, s[0]);
      expect_bv(n.op, s[1]);
      if (s[0].width + s[1].width > kMaxWidth) mismatch(n.op, "total width <= 64", s[1]);
      return Sort::bv(s[0].width + s[1].width);
    case Op::Zext:
    case Op::Sext:
      expect_bv(n.op, s[0]);
      if (n.hi < s[0].width || n.hi > kMaxWidth) mismatch(n.op, "target width >= operand width", s[0]);
      return Sort::bv(n.hi);
    case Op::Ite:
      if (!s[0].is_bool()) mismatch(n.op, "bool", s[0]);
      expect_same(n.op, s[1], s[2]);
      return s[1];
    case Op::MemSelect:
      if (!s[0].is_mem()) mismatch(n.op, "memory", s[0]);
      expect_same(n.op, Sort::bv(s[0].addr_width), s[1]);
      return Sort::bv(s[0].data_width);
    case Op::MemStore:
      if (!s[0].is_mem()) mismatch(n.op, "memory", s[0]);
      expect_same(n.op, Sort::bv(s[0].addr_width), s[1]);
      expect_same(n.op, Sort::bv(s[0].data_width), s[2]);
      return s[0];
    case Op::SelectBit:
      expect_bv(n.op, s[0]);
      if (n.hi >= s[0].width)
        throw Error(ErrorCode::BadExtractRange, "select_bit index " + std::to_string(n.hi) + " of " + s[0].str());
      return Sort::bv(1);
  }
  throw Error(ErrorCode::SortMismatch, "unknown operator");
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

const BitVec& as_bv(Op op, const Value& v) {
  if (const auto* bv = std::get_if<BitVec>(&v)) return *bv;
  mismatch(op, "bitvector", sort_of(v));
}

const MemValue& as_mem(Op op, const Value& v) {
  if (const auto* m = std::get_if<MemValue>(&v)) return *m;
  mismatch(op, "memory", sort_of(v));
}

bool as_bool(Op op, const Value& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  mismatch(op, "bool", sort_of(v));
}

std::pair<BitVec, BitVec> same_width(Op op, const Value& a, const Value& b) {
  const BitVec& x = as_bv(op, a);
  const BitVec& y = as_bv(op, b);
  if (x.width != y.width) mismatch(op, "bv" + std::to_string(x.width), Sort::bv(y.width));
  return {x, y};
}

int64_t to_signed(const BitVec& v) {
  if (v.width >= 64) return static_cast<int64_t>(v.bits);
  const uint64_t sign = uint64_t{1} << (v.width - 1);
  return static_cast<int64_t>((v.bits ^ sign)) - static_cast<int64_t>(sign);
}

Value logic(Op op, const Value& a, const Value& b) {
  if (std::holds_alternative<bool>(a)) {
    bool x = as_bool(op, a), y = as_bool(op, b);
    switch (op) {
      case Op::And: return x && y;
      case Op::Or: return x || y;
      default: return x != y;
    }
  }
  auto [x, y] = same_width(op, a, b);
  switch (op) {
    case Op::And: return BitVec(x.width, x.bits & y.bits);
    case Op::Or: return BitVec(x.width, x.bits | y.bits);
    default: return BitVec(x.width, x.bits ^ y.bits);
  }
}

Value eval(const Expr& expr, const Valuation& state, const Valuation& inputs) {
  const ExprNode& n = expr.node();
  switch (n.op) {
    case Op::Const: return n.constant;
    case Op::Var: {
      const Valuation& src = n.var_kind == VarKind::State ? state : inputs;
      auto it = src.find(n.name);
      if (it == src.end()) throw Error(ErrorCode::UnboundVariable, n.name);
      return it->second;
    }
    default: break;
  }

  // Ite and memory ops short-circuit or avoid copying large operands.
  if (n.op == Op::Ite) {
    return as_bool(n.op, eval(n.args[0], state, inputs)) ? eval(n.args[1], state, inputs)
                                                         : eval(n.args[2], state, inputs);
  }

  std::vector<Value> v;
  v.reserve(n.args.size());
  for (const auto& a : n.args) v.push_back(eval(a, state, inputs));

  switch (n.op) {
    case Op::Add: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return BitVec(x.width, x.bits + y.bits);
    }
    case Op::Sub: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return BitVec(x.width, x.bits - y.bits);
    }
    case Op::Mul: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return BitVec(x.width, x.bits * y.bits);
    }
    case Op::And:
    case Op::Or:
    case Op::Xor:
      return logic(n.op, v[0], v[1]);
    case Op::Not:
      if (std::holds_alternative<bool>(v[0])) return !std::get<bool>(v[0]);
      {
        const BitVec& x = as_bv(n.op, v[0]);
        return BitVec(x.width, ~x.bits);
      }
    case Op::Eq:
      if (std::holds_alternative<bool>(v[0])) return as_bool(n.op, v[0]) == as_bool(n.op, v[1]);
      {
        auto [x, y] = same_width(n.op, v[0], v[1]);
        return x.bits == y.bits;
      }
    case Op::Ult: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return x.bits < y.bits;
    }
    case Op::Slt: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return to_signed(x) < to_signed(y);
    }
    case Op::Shl: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return BitVec(x.width, y.bits >= x.width ? 0 : x.bits << y.bits);
    }
    case Op::Lshr: {
      auto [x, y] = same_width(n.op, v[0], v[1]);
      return BitVec(x.width, y.bits >= x.width ? 0 : x.bits >> y.bits);
    }
    case Op::Extract: {
      const BitVec& x = as_bv(n.op, v[0]);
      if (n.hi < n.lo || n.hi >= x.width) throw Error(ErrorCode::BadExtractRange, "extract");
      return BitVec(n.hi - n.lo + 1, x.bits >> n.lo);
    }
    case Op::Concat: {
      const BitVec& h = as_bv(n.op, v[0]);
      const BitVec& l = as_bv(n.op, v[1]);
      const unsigned w = h.width + l.width;
      if (w > kMaxWidth) mismatch(n.op, "total width <= 64", Sort::bv(h.width));
      return BitVec(w, (l.width >= 64 ? 0 : h.bits << l.width) | l.bits);
    }
    case Op::Zext: {
      const BitVec& x = as_bv(n.op, v[0]);
      if (n.hi < x.width) mismatch(n.op, "target width >= operand width", Sort::bv(x.width));
      return BitVec(n.hi, x.bits);
    }
    case Op::Sext: {
      const BitVec& x = as_bv(n.op, v[0]);
      if (n.hi < x.width) mismatch(n.op, "target width >= operand width", Sort::bv(x.width));
      return BitVec(n.hi, static_cast<uint64_t>(to_signed(x)));
    }
    case Op::MemSelect: {
      const MemValue& m = as_mem(n.op, v[0]);
      const BitVec& a = as_bv(n.op, v[1]);
      if (a.width != m.addr_width()) mismatch(n.op, "bv" + std::to_string(m.addr_width()), Sort::bv(a.width));
      return BitVec(m.data_width(), m.load(a.bits));
    }
    case Op::MemStore: {
      const MemValue& m = as_mem(n.op, v[0]);
      const BitVec& a = as_bv(n.op, v[1]);
      const BitVec& d = as_bv(n.op, v[2]);
      if (a.width != m.addr_width()) mismatch(n.op, "bv" + std::to_string(m.addr_width()), Sort::bv(a.width));
      if (d.width != m.data_width()) mismatch(n.op, "bv" + std::to_string(m.data_width()), Sort::bv(d.width));
      return m.store(a.bits, d.bits);
    }
    case Op::SelectBit: {
      const BitVec& x = as_bv(n.op, v[0]);
      if (n.hi >= x.width) throw Error(ErrorCode::BadExtractRange, "select_bit");
      return BitVec(1, x.bits >> n.hi);
    }
    default: break;
  }
  throw Error(ErrorCode::SortMismatch, "unknown operator");
}

}  // namespace

Value eval_expr(const Expr& expr, const Valuation& state, const Valuation& inputs) {
  return eval(expr, state, inputs);
}

std::string print_expr(const Expr& expr) {
  const ExprNode& n = expr.node();
  if (n.op == Op::Const) return to_string(n.constant);
  if (n.op == Op::Var) return n.name;
  std::ostringstream os;
  os << '(' << op_name(n.op);
  if (n.op == Op::Extract) os << ' ' << n.hi << ' ' << n.lo;
  if (n.op == Op::Zext || n.op == Op::Sext || n.op == Op::SelectBit) os << ' ' << n.hi;
  for (const auto& a : n.args) os << ' ' << print_expr(a);
  os << ')';
  return os.str();
}

}  // namespace accelbridge::ila
