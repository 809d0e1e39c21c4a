#include "accelbridge/codegen.hpp"

#include "accelbridge/error.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace accelbridge::codegen {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::DataIn: return "data-in";
    case Phase::Configure: return "configure";
    case Phase::Trigger: return "trigger";
    case Phase::ReadOut: return "read-out";
  }
  return "?";
}

namespace {

class Builder {
 public:
  explicit Builder(IlaFragment& f) : f_(f) {}

  void write(Phase phase, std::string instr, uint32_t addr, uint32_t data) {
    f_.entries.push_back({phase, std::move(instr), sim::Command::write(addr, data)});
  }

  void buffer(std::string instr, uint32_t base, const ir::TensorValue& t, const fx::FixedSpec& spec) {
    for (std::size_t i = 0; i < t.data.size(); ++i)
      write(Phase::DataIn, instr, base + 4 * static_cast<uint32_t>(i), accel::encode_word(fx::quantize(t.data[i], spec)));
  }

  void reads(int64_t count) {
    for (int64_t i = 0; i < count; ++i)
      f_.entries.push_back({Phase::ReadOut, "", sim::Command::read(accel::kOutputBase + 4 * static_cast<uint32_t>(i))});
  }

 private:
  IlaFragment& f_;
};

uint32_t pack(std::initializer_list<int64_t> bytes) {
  uint32_t v = 0;
  unsigned shift = 0;
  for (auto b : bytes) {
    v |= (static_cast<uint32_t>(b) & 0xffu) << shift;
    shift += 8;
  }
  return v;
}

}  // namespace

IlaFragment lower_call(const ir::OpAttrs& call, const std::vector<ir::TensorValue>& args,
                       const accel::AcceleratorDef& def) {
  if (call.accel != def.id)
    throw Error(ErrorCode::InvalidArgument, "call targets " + call.accel + ", not " + def.id);
  std::vector<Shape> shapes;
  for (const auto& a : args) shapes.push_back(a.shape);
  accel::check_capacity(call, shapes);

  IlaFragment f;
  f.accel = call.accel;
  f.op = call.accel_op;
  f.out_shape = ir::infer_op_shape(ir::OpKind::AccelCall, call, shapes);
  Builder b(f);
  const auto& num = def.numerics;

  if (def.id == accel::kFxlin) {
    const int64_t M = shapes[0][0], K = shapes[0][1], N = shapes[1][0];
    b.buffer("wr_weight", accel::kWeightBase, args[1], num.weight_spec);
    b.buffer("wr_bias", accel::kBiasBase, args[2], num.act_spec);
    b.buffer("wr_input", accel::kInputBase, args[0], num.act_spec);
    b.write(Phase::Configure, "cfg_dims", accel::kCfg0, pack({M, K, N}));
    b.write(Phase::Configure, "cfg_mode", accel::kCfg1, call.accel_op == "linear_relu" ? 1u : 0u);
  } else {
    const Shape &d = shapes[0], &w = shapes[1];
    b.buffer("wr_weight", accel::kWeightBase, args[1], num.weight_spec);
    b.buffer("wr_input", accel::kInputBase, args[0], num.act_spec);
    b.write(Phase::Configure, "cfg_shape", accel::kCfg0, pack({d[0], d[1], d[2], d[3]}));
    b.write(Phase::Configure, "cfg_kernel", accel::kCfg1, pack({w[0], w[2], w[3], call.stride.first}));
    b.write(Phase::Configure, "cfg_pad", accel::kCfg2, pack({call.pad.first, call.pad.second, call.stride.second}));
  }
  b.write(Phase::Trigger, "fn_start", accel::kStart, 1);
  b.reads(f.out_shape.elements());
  return f;
}

std::vector<sim::Command> MmioTrace::commands() const {
  std::vector<sim::Command> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(l.command);
  return out;
}

MmioTrace emit_mmio(const IlaFragment& frag) {
  MmioTrace t;
  t.lines.reserve(frag.entries.size());
  for (const auto& e : frag.entries) t.lines.push_back({e.command, std::nullopt});
  return t;
}

std::string print_trace(const MmioTrace& trace) {
  std::string out;
  char buf[64];
  for (const auto& l : trace.lines) {
    if (l.command.kind == sim::Command::Kind::Write) {
      std::snprintf(buf, sizeof buf, "W 0x%08x 0x%08x\n", l.command.addr, l.command.data);
    } else if (l.expected) {
      std::snprintf(buf, sizeof buf, "R 0x%08x -> 0x%08x\n", l.command.addr, *l.expected);
    } else {
      std::snprintf(buf, sizeof buf, "R 0x%08x -> ?\n", l.command.addr);
    }
    out += buf;
  }
  return out;
}

namespace {

[[noreturn]] void bad(int line, const std::string& msg) { throw SourceError(ErrorCode::TraceSyntaxError, line, 1, msg); }

uint32_t parse_hex(std::string_view tok, int line) {
  if (tok.size() != 10 || tok[0] != '0' || (tok[1] != 'x' && tok[1] != 'X'))
    bad(line, "expected 0x followed by 8 hex digits, got '" + std::string(tok) + "'");
  uint32_t v = 0;
  auto [p, ec] = std::from_chars(tok.data() + 2, tok.data() + tok.size(), v, 16);
  if (ec != std::errc() || p != tok.data() + tok.size()) bad(line, "malformed hex '" + std::string(tok) + "'");
  return v;
}

}  // namespace

MmioTrace parse_trace(std::string_view text) {
  MmioTrace t;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) toks.push_back(line.substr(i, j - i));
      i = j;
    }
    if (toks.empty()) continue;

    if (toks[0] == "W") {
      if (toks.size() != 3) bad(lineno, "expected 'W ADDR DATA'");
      t.lines.push_back({sim::Command::write(parse_hex(toks[1], lineno), parse_hex(toks[2], lineno)), std::nullopt});
    } else if (toks[0] == "R") {
      if (toks.size() != 4 || toks[2] != "->") bad(lineno, "expected 'R ADDR -> DATA' or 'R ADDR -> ?'");
      std::optional<uint32_t> expected;
      if (toks[3] != "?") expected = parse_hex(toks[3], lineno);
      t.lines.push_back({sim::Command::read(parse_hex(toks[1], lineno)), expected});
    } else {
      bad(lineno, "unknown command '" + std::string(toks[0]) + "'");
    }
    if (end == text.size()) break;
  }
  return t;
}

Replay replay(const MmioTrace& trace, const accel::AcceleratorDef& def) {
  Replay r;
  r.run = sim::run(def.model, def.model.initial_state(), trace.commands(), sim::UnmappedPolicy::Strict);
  r.trace = trace;
  for (std::size_t i = 0; i < r.trace.lines.size(); ++i)
    if (r.trace.lines[i].command.kind == sim::Command::Kind::Read)
      r.trace.lines[i].expected = r.run.log.records[i].read_data;
  return r;
}

ir::TensorValue readback(const MmioTrace& trace, const Shape& out_shape, const accel::AcceleratorDef& def) {
  std::vector<double> data;
  for (const auto& l : trace.lines) {
    if (l.command.kind != sim::Command::Kind::Read) continue;
    if (!l.expected) throw Error(ErrorCode::InvalidArgument, "trace has unanswered reads");
    data.push_back(fx::dequantize(accel::decode_word(*l.expected, def.numerics.act_spec.width), def.numerics.act_spec));
  }
  if (static_cast<int64_t>(data.size()) != out_shape.elements())
    throw Error(ErrorCode::ShapeMismatch, "trace reads " + std::to_string(data.size()) + " values for shape " +
                                              out_shape.str());
  return ir::TensorValue(out_shape, std::move(data));
}

}  // namespace accelbridge::codegen
