#include "accelbridge/error.hpp"
#include "accelbridge/ila.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

namespace accelbridge::ila {

std::vector<std::string> Instruction::targets() const {
  std::vector<std::string> out;
  for (const auto& u : updates) out.push_back(u.target);
  if (macro) out.insert(out.end(), macro->targets.begin(), macro->targets.end());
  return out;
}

const StateVar* IlaModel::find_state(std::string_view n) const {
  auto it = std::find_if(states.begin(), states.end(), [&](const StateVar& s) { return s.name == n; });
  return it == states.end() ? nullptr : &*it;
}

const InputDecl* IlaModel::find_input(std::string_view n) const {
  auto it = std::find_if(inputs.begin(), inputs.end(), [&](const InputDecl& s) { return s.name == n; });
  return it == inputs.end() ? nullptr : &*it;
}

const Instruction* IlaModel::find_instruction(std::string_view n) const {
  auto it = std::find_if(instructions.begin(), instructions.end(), [&](const Instruction& s) { return s.name == n; });
  return it == instructions.end() ? nullptr : &*it;
}

SortContext IlaModel::context() const {
  SortContext ctx;
  for (const auto& i : inputs) ctx.emplace(i.name, i.sort);
  for (const auto& s : states) ctx.emplace(s.name, s.sort);
  return ctx;
}

Valuation IlaModel::initial_state() const {
  Valuation v;
  for (const auto& s : states) v.emplace(s.name, s.reset_value ? *s.reset_value : zero_value(s.sort));
  return v;
}

std::string_view to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::TypeError: return "TypeError";
    case FindingKind::DuplicateName: return "DuplicateName";
    case FindingKind::UnknownStateTarget: return "UnknownStateTarget";
    case FindingKind::DecodeOverlap: return "DecodeOverlap";
    case FindingKind::ReadMapCollision: return "ReadMapCollision";
  }
  return "?";
}

std::size_t Report::count(FindingKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == kind; }));
}

std::string Report::str() const {
  std::ostringstream os;
  for (const auto& f : findings) os << to_string(f.kind) << ": " << f.message << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Decode-condition abstraction: an over-approximating box of input intervals.

namespace {

struct Interval {
  uint64_t lo = 0;
  uint64_t hi = ~uint64_t{0};
};

struct Box {
  bool empty = false;
  std::map<std::string, Interval> ranges;  // absent = unconstrained

  void constrain(const std::string& var, Interval iv) {
    if (empty) return;
    auto [it, inserted] = ranges.emplace(var, iv);
    if (!inserted) {
      it->second.lo = std::max(it->second.lo, iv.lo);
      it->second.hi = std::min(it->second.hi, iv.hi);
    }
    if (it->second.lo > it->second.hi) empty = true;
  }
};

Box intersect(Box a, const Box& b) {
  if (b.empty) a.empty = true;
  for (const auto& [var, iv] : b.ranges) a.constrain(var, iv);
  return a;
}

bool disjoint(const Box& a, const Box& b) {
  if (a.empty || b.empty) return true;
  for (const auto& [var, iv] : a.ranges) {
    auto it = b.ranges.find(var);
    if (it != b.ranges.end() && (iv.hi < it->second.lo || it->second.hi < iv.lo)) return true;
  }
  return false;
}

bool is_input(const Expr& e) { return e.op() == Op::Var && e.node().var_kind == VarKind::Input; }

std::optional<uint64_t> const_bits(const Expr& e) {
  if (e.op() != Op::Const) return std::nullopt;
  if (const auto* b = std::get_if<bool>(&e.node().constant)) return *b ? 1 : 0;
  if (const auto* bv = std::get_if<BitVec>(&e.node().constant)) return bv->bits;
  return std::nullopt;
}

Box analyze(const Expr& e, bool negated = false) {
  Box box;
  const ExprNode& n = e.node();
  auto var_const = [&](const Expr& a, const Expr& b) -> std::optional<std::pair<std::string, uint64_t>> {
    if (is_input(a)) {
      if (auto c = const_bits(b)) return std::make_pair(a.node().name, *c);
    }
    return std::nullopt;
  };

  if (!negated && n.op == Op::And) return intersect(analyze(n.args[0]), analyze(n.args[1]));
  if (n.op == Op::Not) return analyze(n.args[0], !negated);
  if (n.op == Op::Const) {
    if (auto c = const_bits(e); c && (*c != 0) == negated) box.empty = true;
    return box;
  }
  if (is_input(e)) {
    box.constrain(n.name, negated ? Interval{0, 0} : Interval{1, 1});
    return box;
  }
  if (n.op == Op::Eq && !negated) {
    auto vc = var_const(n.args[0], n.args[1]);
    if (!vc) vc = var_const(n.args[1], n.args[0]);
    if (vc) box.constrain(vc->first, {vc->second, vc->second});
    return box;
  }
  if (n.op == Op::Ult) {
    if (auto vc = var_const(n.args[0], n.args[1])) {  // x < c
      if (!negated) {
        if (vc->second == 0) box.empty = true;
        else box.constrain(vc->first, {0, vc->second - 1});
      } else {
        box.constrain(vc->first, {vc->second, ~uint64_t{0}});
      }
    } else if (is_input(n.args[1])) {  // c < x
      if (auto c = const_bits(n.args[0])) {
        if (!negated) {
          if (*c == ~uint64_t{0}) box.empty = true;
          else box.constrain(n.args[1].node().name, {*c + 1, ~uint64_t{0}});
        } else {
          box.constrain(n.args[1].node().name, {0, *c});
        }
      }
    }
    return box;
  }
  return box;
}

void collect_constants(const Expr& e, std::set<uint64_t>& out) {
  if (auto c = const_bits(e)) {
    out.insert(*c);
    out.insert(*c + 4);
    if (*c >= 4) out.insert(*c - 4);
  }
  for (const auto& a : e.args()) collect_constants(a, out);
}

class Sampler {
 public:
  Sampler(const IlaModel& model, uint64_t seed, std::vector<uint64_t> interesting)
      : model_(model), rng_(seed), interesting_(std::move(interesting)) {}

  uint64_t bits(unsigned width, const Interval* iv) {
    const uint64_t mask = width_mask(width);
    if (iv) {
      const uint64_t lo = std::min(iv->lo, mask);
      const uint64_t hi = std::min(iv->hi, mask);
      if (lo >= hi) return lo;
      // Bias toward the interval ends and word-aligned points.
      switch (rng_() % 4) {
        case 0: return lo;
        case 1: return (lo + (std::uniform_int_distribution<uint64_t>(0, hi - lo)(rng_))) & ~uint64_t{3};
        default: return lo + std::uniform_int_distribution<uint64_t>(0, hi - lo)(rng_);
      }
    }
    if (!interesting_.empty() && rng_() % 2 == 0)
      return interesting_[rng_() % interesting_.size()] & mask;
    return rng_() & mask;
  }

  Value random_value(const Sort& sort, const Interval* iv) {
    switch (sort.kind) {
      case Sort::Kind::Boolean: {
        if (iv && iv->lo == iv->hi) return iv->lo != 0;
        return (rng_() & 1) != 0;
      }
      case Sort::Kind::BitVector: return BitVec(sort.width, bits(sort.width, iv));
      case Sort::Kind::Memory: return zero_value(sort);
    }
    return false;
  }

  Valuation inputs(const Box* box) {
    Valuation v;
    for (const auto& in : model_.inputs) {
      const Interval* iv = nullptr;
      if (box) {
        auto it = box->ranges.find(in.name);
        if (it != box->ranges.end()) iv = &it->second;
      }
      v.emplace(in.name, random_value(in.sort, iv));
    }
    return v;
  }

  Valuation state() {
    Valuation v;
    for (const auto& s : model_.states) v.emplace(s.name, random_value(s.sort, nullptr));
    return v;
  }

 private:
  const IlaModel& model_;
  std::mt19937_64 rng_;
  std::vector<uint64_t> interesting_;
};

bool decodes(const Expr& decode, const Valuation& state, const Valuation& inputs) {
  try {
    auto v = eval_expr(decode, state, inputs);
    return std::holds_alternative<bool>(v) && std::get<bool>(v);
  } catch (const Error&) {
    return false;
  }
}

std::string witness(const Valuation& inputs) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, v] : inputs) {
    os << (first ? "" : ", ") << name << "=" << to_string(v);
    first = false;
  }
  return os.str();
}

}  // namespace

Report check_wellformed(const IlaModel& model, const WellformedOptions& options) {
  Report report;
  auto add = [&](FindingKind kind, std::string msg) { report.findings.push_back({kind, std::move(msg)}); };

  // Names.
  std::set<std::string> names;
  for (const auto& i : model.inputs)
    if (!names.insert(i.name).second) add(FindingKind::DuplicateName, "input '" + i.name + "'");
  for (const auto& s : model.states)
    if (!names.insert(s.name).second) add(FindingKind::DuplicateName, "state '" + s.name + "'");
  std::set<std::string> instr_names;
  for (const auto& ins : model.instructions)
    if (!instr_names.insert(ins.name).second) add(FindingKind::DuplicateName, "instruction '" + ins.name + "'");

  // Types.
  const SortContext ctx = model.context();
  SortContext state_ctx;
  for (const auto& s : model.states) state_ctx.emplace(s.name, s.sort);

  for (const auto& s : model.states) {
    if (s.reset_value && !(sort_of(*s.reset_value) == s.sort))
      add(FindingKind::TypeError, "state '" + s.name + "' reset value has sort " + sort_of(*s.reset_value).str());
  }

  std::vector<bool> decode_ok(model.instructions.size(), false);
  for (std::size_t idx = 0; idx < model.instructions.size(); ++idx) {
    const auto& ins = model.instructions[idx];
    const std::string where = "instruction '" + ins.name + "'";
    if (!ins.decode.valid()) {
      add(FindingKind::TypeError, where + ": missing decode");
    } else {
      try {
        Sort s = typecheck_expr(ins.decode, ctx);
        if (!s.is_bool()) add(FindingKind::TypeError, where + ": decode has sort " + s.str());
        else decode_ok[idx] = true;
      } catch (const Error& e) {
        add(FindingKind::TypeError, where + " decode: " + e.what());
      }
    }
    std::set<std::string> seen;
    for (const auto& u : ins.updates) {
      if (!seen.insert(u.target).second) add(FindingKind::DuplicateName, where + ": '" + u.target + "' updated twice");
      const StateVar* sv = model.find_state(u.target);
      if (!sv) {
        add(FindingKind::UnknownStateTarget, where + ": '" + u.target + "'");
        continue;
      }
      try {
        Sort s = typecheck_expr(u.rhs, ctx);
        if (!(s == sv->sort))
          add(FindingKind::TypeError, where + ": update of '" + u.target + "' has sort " + s.str() + ", expected " +
                                          sv->sort.str());
      } catch (const Error& e) {
        add(FindingKind::TypeError, where + " update '" + u.target + "': " + e.what());
      }
    }
    if (ins.macro) {
      if (!ins.macro->compute) add(FindingKind::TypeError, where + ": macro update without body");
      for (const auto& t : ins.macro->targets) {
        if (!seen.insert(t).second) add(FindingKind::DuplicateName, where + ": '" + t + "' updated twice");
        if (!model.find_state(t)) add(FindingKind::UnknownStateTarget, where + ": macro target '" + t + "'");
      }
    }
  }

  for (const auto& [addr, e] : model.read_map) {
    try {
      Sort s = typecheck_expr(e, state_ctx);
      if (!(s == Sort::bv(32))) add(FindingKind::TypeError, "read_map entry has sort " + s.str());
    } catch (const Error& err) {
      std::ostringstream os;
      os << "read_map 0x" << std::hex << addr << ": " << err.what();
      add(FindingKind::TypeError, os.str());
    }
  }

  // Decode determinism.
  std::vector<Box> boxes;
  std::set<uint64_t> consts;
  for (std::size_t i = 0; i < model.instructions.size(); ++i) {
    boxes.push_back(decode_ok[i] ? analyze(model.instructions[i].decode) : Box{true, {}});
    if (decode_ok[i]) collect_constants(model.instructions[i].decode, consts);
  }
  Sampler sampler(model, options.seed, std::vector<uint64_t>(consts.begin(), consts.end()));

  std::set<std::pair<std::size_t, std::size_t>> overlapping;
  auto record_overlap = [&](std::size_t i, std::size_t j, const Valuation& inputs) {
    if (overlapping.insert({i, j}).second)
      add(FindingKind::DecodeOverlap, "'" + model.instructions[i].name + "' and '" + model.instructions[j].name +
                                          "' both decode for " + witness(inputs));
  };

  std::vector<std::pair<std::size_t, std::size_t>> suspicious;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      if (!disjoint(boxes[i], boxes[j])) suspicious.emplace_back(i, j);

  const std::size_t targeted_budget = options.samples / 2;
  if (!suspicious.empty()) {
    const std::size_t per_pair = std::max<std::size_t>(64, targeted_budget / suspicious.size());
    for (auto [i, j] : suspicious) {
      const Box both = intersect(boxes[i], boxes[j]);
      for (std::size_t k = 0; k < per_pair && !overlapping.count({i, j}); ++k) {
        Valuation st = sampler.state();
        Valuation in = sampler.inputs(&both);
        if (decodes(model.instructions[i].decode, st, in) && decodes(model.instructions[j].decode, st, in))
          record_overlap(i, j, in);
      }
    }
  }

  for (std::size_t k = 0; k < options.samples - targeted_budget; ++k) {
    Valuation st = sampler.state();
    Valuation in = sampler.inputs(nullptr);
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < model.instructions.size(); ++i)
      if (decode_ok[i] && decodes(model.instructions[i].decode, st, in)) hits.push_back(i);
    for (std::size_t a = 0; a < hits.size(); ++a)
      for (std::size_t b = a + 1; b < hits.size(); ++b) record_overlap(hits[a], hits[b], in);
  }

  // Reads answered by read_map must not also be decode addresses.
  for (const auto& [addr, e] : model.read_map) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (boxes[i].empty) continue;
      auto it = boxes[i].ranges.find(kCmdAddr);
      if (it == boxes[i].ranges.end()) continue;
      if (it->second.lo <= addr && addr <= it->second.hi) {
        std::ostringstream os;
        os << "read address 0x" << std::hex << addr << " is decoded by '" << model.instructions[i].name << "'";
        add(FindingKind::ReadMapCollision, os.str());
      }
    }
  }

  return report;
}

std::string print_model(const IlaModel& model) {
  std::ostringstream os;
  os << "model " << model.name << '\n';
  for (const auto& i : model.inputs) os << "  input " << i.name << " : " << i.sort.str() << '\n';
  for (const auto& s : model.states) {
    os << "  state " << s.name << " : " << s.sort.str();
    if (s.reset_value) os << " = " << to_string(*s.reset_value);
    os << '\n';
  }
  for (const auto& ins : model.instructions) {
    os << "  instr " << ins.name << '\n';
    os << "    decode " << print_expr(ins.decode) << '\n';
    for (const auto& u : ins.updates) os << "    " << u.target << " <- " << print_expr(u.rhs) << '\n';
    if (ins.macro) {
      os << "    macro {";
      for (std::size_t k = 0; k < ins.macro->targets.size(); ++k) os << (k ? ", " : "") << ins.macro->targets[k];
      os << "} <- " << ins.macro->description << '\n';
    }
    if (!ins.semantics_note.empty()) os << "    ; " << ins.semantics_note << '\n';
  }
  if (!model.read_map.empty()) {
    os << "  reads " << model.read_map.size() << " addresses 0x" << std::hex << model.read_map.begin()->first
       << "..0x" << model.read_map.rbegin()->first << std::dec << '\n';
  }
  return os.str();
}

}  // namespace accelbridge::ila
