#include "accelbridge/ila_sim.hpp"

#include "accelbridge/error.hpp"

#include <cstdio>
#include <sstream>

namespace accelbridge::sim {

using namespace accelbridge::ila;

namespace {

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::string describe(const Command& cmd) {
  if (cmd.kind == Command::Kind::Read) return "R " + hex32(cmd.addr);
  return "W " + hex32(cmd.addr) + " " + hex32(cmd.data);
}

bool values_equal(const Value& a, const Value& b) { return a == b; }

}  // namespace

ila::Valuation command_inputs(const Command& cmd) {
  Valuation v;
  v.emplace(kCmdWrite, cmd.kind == Command::Kind::Write);
  v.emplace(kCmdAddr, BitVec(32, cmd.addr));
  v.emplace(kCmdData, BitVec(32, cmd.data));
  return v;
}

std::string StepLog::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << i << ' ' << describe(r.command);
    if (r.read_data) os << " -> " << hex32(*r.read_data);
    if (r.instruction) os << " [" << *r.instruction << "]";
    if (r.skipped) os << " [skipped: unmapped]";
    if (!r.changed.empty()) {
      os << " changed:";
      for (const auto& c : r.changed) os << ' ' << c;
    }
    os << '\n';
  }
  return os.str();
}

std::optional<std::string> decode(const IlaModel& model, const MachineState& state, const Command& cmd) {
  if (cmd.kind == Command::Kind::Read) return std::nullopt;
  const Valuation inputs = command_inputs(cmd);
  std::optional<std::string> hit;
  for (const auto& ins : model.instructions) {
    Value v = eval_expr(ins.decode, state, inputs);
    if (!std::holds_alternative<bool>(v)) throw Error(ErrorCode::SortMismatch, "decode of '" + ins.name + "'");
    if (!std::get<bool>(v)) continue;
    if (hit) throw Error(ErrorCode::DecodeOverlap, "'" + *hit + "' and '" + ins.name + "' on " + describe(cmd));
    hit = ins.name;
  }
  return hit;
}

StepResult step(const IlaModel& model, const MachineState& state, const Command& cmd, UnmappedPolicy policy) {
  StepResult out{state, {cmd, std::nullopt, std::nullopt, {}, false}};

  if (cmd.kind == Command::Kind::Read) {
    out.record.read_data = mmio_read(model, state, cmd.addr);
    return out;
  }

  auto name = decode(model, state, cmd);
  if (!name) {
    if (policy == UnmappedPolicy::Strict) throw Error(ErrorCode::UnmappedCommand, describe(cmd));
    out.record.skipped = true;
    return out;
  }
  out.record.instruction = name;

  const Instruction& ins = *model.find_instruction(*name);
  const Valuation inputs = command_inputs(cmd);

  // Evaluate everything against the pre-state before writing anything.
  std::vector<std::pair<std::string, Value>> writes;
  for (const auto& u : ins.updates) writes.emplace_back(u.target, eval_expr(u.rhs, state, inputs));
  if (ins.macro) {
    std::vector<Value> vals = ins.macro->compute(state, inputs);
    if (vals.size() != ins.macro->targets.size())
      throw Error(ErrorCode::SortMismatch, "macro of '" + ins.name + "' returned wrong arity");
    for (std::size_t i = 0; i < vals.size(); ++i) writes.emplace_back(ins.macro->targets[i], std::move(vals[i]));
  }

  for (auto& [target, value] : writes) {
    const StateVar* sv = model.find_state(target);
    if (!sv) throw Error(ErrorCode::UnknownStateTarget, target);
    if (!(sort_of(value) == sv->sort))
      throw Error(ErrorCode::SortMismatch, "update of '" + target + "' produced " + sort_of(value).str());
    auto it = out.state.find(target);
    if (it == out.state.end()) {
      out.state.emplace(target, std::move(value));
      out.record.changed.push_back(target);
    } else if (!values_equal(it->second, value)) {
      it->second = std::move(value);
      out.record.changed.push_back(target);
    }
  }
  return out;
}

PartialRun run_partial(const IlaModel& model, MachineState init, const std::vector<Command>& trace,
                       UnmappedPolicy policy) {
  PartialRun out;
  out.result.state = std::move(init);
  out.result.log.records.reserve(trace.size());
  for (const auto& cmd : trace) {
    try {
      StepResult r = step(model, out.result.state, cmd, policy);
      out.result.state = std::move(r.state);
      out.result.log.records.push_back(std::move(r.record));
    } catch (const Error& e) {
      out.error = e.what();
      break;
    }
  }
  return out;
}

RunResult run(const IlaModel& model, MachineState init, const std::vector<Command>& trace, UnmappedPolicy policy) {
  RunResult out;
  out.state = std::move(init);
  out.log.records.reserve(trace.size());
  for (const auto& cmd : trace) {
    StepResult r = step(model, out.state, cmd, policy);
    out.state = std::move(r.state);
    out.log.records.push_back(std::move(r.record));
  }
  return out;
}

uint32_t mmio_read(const IlaModel& model, const MachineState& state, uint32_t addr) {
  auto it = model.read_map.find(addr);
  if (it == model.read_map.end()) throw Error(ErrorCode::UnmappedRead, hex32(addr));
  Value v = eval_expr(it->second, state, {});
  const auto* bv = std::get_if<BitVec>(&v);
  if (!bv || bv->width != 32) throw Error(ErrorCode::SortMismatch, "read_map entry " + hex32(addr));
  return static_cast<uint32_t>(bv->bits);
}

uint64_t state_hash(const MachineState& state) {
  // FNV-1a over a canonical rendering.
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, v] : state) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    if (const auto* b = std::get_if<bool>(&v)) {
      mix(*b ? 1 : 2);
    } else if (const auto* bv = std::get_if<BitVec>(&v)) {
      mix(bv->width);
      mix(bv->bits);
    } else {
      const auto& m = std::get<MemValue>(v);
      mix(m.addr_width());
      mix(m.data_width());
      m.for_each_nonzero([&](uint64_t a, uint64_t d) {
        mix(a);
        mix(d);
      });
    }
  }
  return h;
}

}  // namespace accelbridge::sim
