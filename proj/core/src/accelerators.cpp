#include "accelbridge/accelerators.hpp"

#include "accelbridge/error.hpp"

#include <algorithm>
#include <sstream>

namespace accelbridge::accel {

using namespace ila;

namespace {

const Sort kReg8 = Sort::bv(8);
const Sort kBuf = Sort::mem(kBufferAddrBits, 32);

Expr is_write_to(uint32_t addr) {
  return bit_and(input_var(kCmdWrite), eq(input_var(kCmdAddr), bv_const(32, addr)));
}

Expr is_write_in(uint32_t base) {
  return bit_and(input_var(kCmdWrite), in_range(input_var(kCmdAddr), base, uint64_t{base} + kRegionBytes));
}

Expr field(unsigned hi, unsigned lo) { return extract(input_var(kCmdData), hi, lo); }

Instruction buffer_write(std::string name, std::string buffer, uint32_t base) {
  Instruction ins;
  ins.name = std::move(name);
  ins.decode = is_write_in(base);
  Expr index = extract(input_var(kCmdAddr), kBufferAddrBits + 1, 2);
  ins.updates.push_back({buffer, mem_store(state_var(buffer), index, input_var(kCmdData))});
  ins.semantics_note = buffer + "[(addr - base) / 4] := data";
  return ins;
}

Instruction start_instruction(MacroUpdate macro) {
  Instruction ins;
  ins.name = "fn_start";
  ins.decode = bit_and(is_write_to(kStart), eq(input_var(kCmdData), bv_const(32, 1)));
  ins.macro = std::move(macro);
  ins.semantics_note = "run the configured operation over the buffers";
  return ins;
}

void add_outputs(IlaModel& m, int64_t words) {
  for (int64_t i = 0; i < words; ++i)
    m.read_map.emplace(kOutputBase + 4 * static_cast<uint64_t>(i),
                       mem_select(state_var("out_buf"), bv_const(kBufferAddrBits, static_cast<uint64_t>(i))));
}

std::vector<InputDecl> command_decls() {
  return {{kCmdWrite, Sort::boolean()}, {kCmdAddr, Sort::bv(32)}, {kCmdData, Sort::bv(32)}};
}

uint64_t reg(const Valuation& s, std::string_view name) { return std::get<BitVec>(s.find(name)->second).bits; }
const MemValue& buf(const Valuation& s, std::string_view name) { return std::get<MemValue>(s.find(name)->second); }

fx::RawTensor load(const MemValue& mem, Shape shape, int width) {
  const int64_t n = shape.elements();
  if (n > kBufferWords) throw Error(ErrorCode::CapacityExceeded, "tensor " + shape.str() + " exceeds a buffer");
  std::vector<int64_t> data(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) data[static_cast<std::size_t>(i)] = decode_word(static_cast<uint32_t>(mem.load(i)), width);
  return fx::RawTensor(std::move(shape), std::move(data));
}

MemValue store(MemValue mem, const fx::RawTensor& t) {
  for (std::size_t i = 0; i < t.data.size(); ++i) mem = mem.store(i, encode_word(t.data[i]));
  return mem;
}

void check_word_specs(const fx::AccelNumerics& num) {
  if (num.weight_spec.width > kWordBits || num.act_spec.width > kWordBits)
    throw Error(ErrorCode::InvalidArgument, "weight and activation specs must be at most " +
                                                std::to_string(kWordBits) + " bits wide, got " + num.str());
}

[[noreturn]] void capacity(const std::string& msg) { throw Error(ErrorCode::CapacityExceeded, msg); }

}  // namespace

uint32_t encode_word(int64_t raw) { return static_cast<uint32_t>(static_cast<uint64_t>(raw) & 0xffffu); }

int64_t decode_word(uint32_t word, int width) {
  const uint64_t mask = width_mask(static_cast<unsigned>(width));
  const uint64_t v = word & mask;
  const uint64_t sign = uint64_t{1} << (width - 1);
  return static_cast<int64_t>(v ^ sign) - static_cast<int64_t>(sign);
}

// ---------------------------------------------------------------------------
// FXLIN

AcceleratorDef build_fxlin(const fx::AccelNumerics& num) {
  check_word_specs(num);
  IlaModel m;
  m.name = std::string(kFxlin);
  m.inputs = command_decls();
  m.states = {{"m_dim", kReg8, std::nullopt},     {"k_dim", kReg8, std::nullopt},
              {"n_dim", kReg8, std::nullopt},     {"relu_en", Sort::bv(1), std::nullopt},
              {"weight_buf", kBuf, std::nullopt}, {"bias_buf", kBuf, std::nullopt},
              {"input_buf", kBuf, std::nullopt},  {"out_buf", kBuf, std::nullopt}};

  Instruction dims;
  dims.name = "cfg_dims";
  dims.decode = is_write_to(kCfg0);
  dims.updates = {{"m_dim", field(7, 0)}, {"k_dim", field(15, 8)}, {"n_dim", field(23, 16)}};
  dims.semantics_note = "M = data[7:0], K = data[15:8], N = data[23:16]";

  Instruction mode;
  mode.name = "cfg_mode";
  mode.decode = is_write_to(kCfg1);
  mode.updates = {{"relu_en", field(0, 0)}};
  mode.semantics_note = "relu_en = data[0]";

  MacroUpdate macro;
  macro.targets = {"out_buf"};
  macro.description = "out[M,N] = act(requant(input[M,K] * weight[N,K]^T + bias[N])), ReLU when relu_en";
  macro.compute = [num](const Valuation& s, const Valuation&) {
    const int64_t M = static_cast<int64_t>(reg(s, "m_dim")), K = static_cast<int64_t>(reg(s, "k_dim")),
                  N = static_cast<int64_t>(reg(s, "n_dim"));
    if (M == 0 || K == 0 || N == 0) return std::vector<Value>{buf(s, "out_buf")};
    if (!fxlin_fits(M, K, N)) capacity("FXLIN dims exceed " + std::to_string(kLinMaxDim));
    auto a = load(buf(s, "input_buf"), Shape{M, K}, num.act_spec.width);
    auto w = load(buf(s, "weight_buf"), Shape{N, K}, num.weight_spec.width);
    auto b = load(buf(s, "bias_buf"), Shape{N}, num.act_spec.width);
    auto out = fx::fx_linear(a, w, b, num);
    if (reg(s, "relu_en") & 1) out = fx::fx_relu(std::move(out));
    return std::vector<Value>{store(buf(s, "out_buf"), out)};
  };

  m.instructions.push_back(std::move(dims));
  m.instructions.push_back(std::move(mode));
  m.instructions.push_back(buffer_write("wr_weight", "weight_buf", kWeightBase));
  m.instructions.push_back(buffer_write("wr_input", "input_buf", kInputBase));
  m.instructions.push_back(buffer_write("wr_bias", "bias_buf", kBiasBase));
  m.instructions.push_back(start_instruction(std::move(macro)));
  add_outputs(m, kLinMaxDim * kLinMaxDim);
  return {std::string(kFxlin), std::move(m), num};
}

// ---------------------------------------------------------------------------
// FXCNN

AcceleratorDef build_fxcnn(const fx::AccelNumerics& num) {
  check_word_specs(num);
  IlaModel m;
  m.name = std::string(kFxcnn);
  m.inputs = command_decls();
  for (const char* r : {"n_dim", "c_dim", "h_dim", "w_dim", "o_dim", "kh", "kw", "sh", "sw", "ph", "pw"})
    m.states.push_back({r, kReg8, std::nullopt});
  for (const char* b : {"weight_buf", "input_buf", "out_buf"}) m.states.push_back({b, kBuf, std::nullopt});

  Instruction shape;
  shape.name = "cfg_shape";
  shape.decode = is_write_to(kCfg0);
  shape.updates = {{"n_dim", field(7, 0)}, {"c_dim", field(15, 8)}, {"h_dim", field(23, 16)}, {"w_dim", field(31, 24)}};
  shape.semantics_note = "N, C, H, W = data bytes 0..3";

  Instruction kernel;
  kernel.name = "cfg_kernel";
  kernel.decode = is_write_to(kCfg1);
  kernel.updates = {{"o_dim", field(7, 0)}, {"kh", field(15, 8)}, {"kw", field(23, 16)}, {"sh", field(31, 24)}};
  kernel.semantics_note = "O, kh, kw, stride_h = data bytes 0..3";

  Instruction pad;
  pad.name = "cfg_pad";
  pad.decode = is_write_to(kCfg2);
  pad.updates = {{"ph", field(7, 0)}, {"pw", field(15, 8)}, {"sw", field(23, 16)}};
  pad.semantics_note = "pad_h, pad_w, stride_w = data bytes 0..2";

  MacroUpdate macro;
  macro.targets = {"out_buf"};
  macro.description = "out[N,O,H',W'] = act(requant(conv2d(input[N,C,H,W], weight[O,C,kh,kw])))";
  macro.compute = [num](const Valuation& s, const Valuation&) {
    auto r = [&](const char* n) { return static_cast<int64_t>(reg(s, n)); };
    const Shape data{r("n_dim"), r("c_dim"), r("h_dim"), r("w_dim")};
    const Shape weight{r("o_dim"), r("c_dim"), r("kh"), r("kw")};
    const ir::IntPair stride{r("sh"), r("sw")}, padding{r("ph"), r("pw")};
    if (data.elements() == 0 || weight.elements() == 0) return std::vector<Value>{buf(s, "out_buf")};
    if (!fxcnn_fits(data, weight, stride, padding)) capacity("FXCNN configuration exceeds capacity");
    auto d = load(buf(s, "input_buf"), data, num.act_spec.width);
    auto w = load(buf(s, "weight_buf"), weight, num.weight_spec.width);
    auto out = fx::fx_conv2d(d, w, {stride.first, stride.second, padding.first, padding.second}, num);
    return std::vector<Value>{store(buf(s, "out_buf"), out)};
  };

  m.instructions.push_back(std::move(shape));
  m.instructions.push_back(std::move(kernel));
  m.instructions.push_back(std::move(pad));
  m.instructions.push_back(buffer_write("wr_weight", "weight_buf", kWeightBase));
  m.instructions.push_back(buffer_write("wr_input", "input_buf", kInputBase));
  m.instructions.push_back(start_instruction(std::move(macro)));
  add_outputs(m, kBufferWords);
  return {std::string(kFxcnn), std::move(m), num};
}

AcceleratorDef build_accelerator(std::string_view id, const fx::AccelNumerics& numerics) {
  if (id == kFxlin) return build_fxlin(numerics);
  if (id == kFxcnn) return build_fxcnn(numerics);
  throw Error(ErrorCode::InvalidArgument, "unknown accelerator '" + std::string(id) + "'");
}

std::vector<std::string> accelerator_ids() { return {std::string(kFxlin), std::string(kFxcnn)}; }

// ---------------------------------------------------------------------------
// Capacities

bool fxlin_fits(int64_t m, int64_t k, int64_t n) {
  auto ok = [](int64_t d) { return d >= 1 && d <= kLinMaxDim; };
  return ok(m) && ok(k) && ok(n);
}

bool fxcnn_fits(const Shape& data, const Shape& weight, ir::IntPair stride, ir::IntPair pad) {
  if (data.rank() != 4 || weight.rank() != 4) return false;
  auto within = [](int64_t v, int64_t lo, int64_t hi) { return v >= lo && v <= hi; };
  if (!within(data[0], 1, kCnnMaxBatch) || !within(data[1], 1, kCnnMaxChannels) ||
      !within(weight[0], 1, kCnnMaxChannels) || !within(data[2], 1, kCnnMaxSpatial) ||
      !within(data[3], 1, kCnnMaxSpatial) || !within(weight[2], 1, kCnnMaxKernel) ||
      !within(weight[3], 1, kCnnMaxKernel) || weight[1] != data[1])
    return false;
  if (!within(stride.first, 1, kCnnMaxStridePad) || !within(stride.second, 1, kCnnMaxStridePad) ||
      !within(pad.first, 0, kCnnMaxStridePad) || !within(pad.second, 0, kCnnMaxStridePad))
    return false;
  const int64_t hspan = data[2] + 2 * pad.first - weight[2], wspan = data[3] + 2 * pad.second - weight[3];
  if (hspan < 0 || wspan < 0 || hspan % stride.first != 0 || wspan % stride.second != 0) return false;
  const int64_t out = data[0] * weight[0] * (hspan / stride.first + 1) * (wspan / stride.second + 1);
  return data.elements() <= kBufferWords && weight.elements() <= kBufferWords && out <= kBufferWords;
}

void check_capacity(const ir::OpAttrs& call, std::span<const Shape> args) {
  // Shape inference rejects malformed operands first.
  const Shape out = ir::infer_op_shape(ir::OpKind::AccelCall, call, args);
  if (call.accel == kFxlin) {
    if (!fxlin_fits(args[0][0], args[0][1], args[1][0]))
      capacity("FXLIN " + call.accel_op + " on " + args[0].str() + " x " + args[1].str() + " exceeds " +
               std::to_string(kLinMaxDim) + " per dimension");
    return;
  }
  if (!fxcnn_fits(args[0], args[1], call.stride, call.pad))
    capacity("FXCNN conv2d on " + args[0].str() + " with weight " + args[1].str() + " -> " + out.str() +
             " exceeds capacity");
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

fx::RawTensor quantize_tensor(const ir::TensorValue& t, const fx::FixedSpec& spec) {
  std::vector<int64_t> raw;
  raw.reserve(t.data.size());
  for (double v : t.data) raw.push_back(fx::quantize(v, spec));
  return fx::RawTensor(t.shape, std::move(raw));
}

ir::TensorValue dequantize_tensor(const fx::RawTensor& t, const fx::FixedSpec& spec) {
  std::vector<double> data;
  data.reserve(t.data.size());
  for (auto r : t.data) data.push_back(fx::dequantize(r, spec));
  return ir::TensorValue(t.shape, std::move(data));
}

}  // namespace

ir::TensorValue accel_oracle(const AcceleratorDef& def, const ir::OpAttrs& call,
                             const std::vector<ir::TensorValue>& args) {
  if (call.accel != def.id)
    throw Error(ErrorCode::InvalidArgument, "call targets " + call.accel + ", not " + def.id);
  std::vector<Shape> shapes;
  for (const auto& a : args) shapes.push_back(a.shape);
  check_capacity(call, shapes);
  const auto& num = def.numerics;
  if (def.id == kFxlin) {
    auto out = fx::fx_linear(quantize_tensor(args[0], num.act_spec), quantize_tensor(args[1], num.weight_spec),
                             quantize_tensor(args[2], num.act_spec), num);
    if (call.accel_op == "linear_relu") out = fx::fx_relu(std::move(out));
    return dequantize_tensor(out, num.act_spec);
  }
  auto out = fx::fx_conv2d(quantize_tensor(args[0], num.act_spec), quantize_tensor(args[1], num.weight_spec),
                           {call.stride.first, call.stride.second, call.pad.first, call.pad.second}, num);
  return dequantize_tensor(out, num.act_spec);
}

// ---------------------------------------------------------------------------
// Reference documentation

std::string address_map_markdown(const AcceleratorDef& def) {
  std::ostringstream os;
  auto hex = [](uint64_t v) {
    std::ostringstream h;
    h << "0x" << std::hex;
    h.width(8);
    h.fill('0');
    h << v;
    return h.str();
  };
  auto region = [&](uint32_t base) { return hex(base) + " + 4i"; };
  const auto& num = def.numerics;
  os << "## " << def.id << "\n\n";
  os << "Numerics: weights " << num.weight_spec.str() << ", activations " << num.act_spec.str()
     << ", accumulator " << num.acc_spec.str() << ".\n\n";
  os << "| Address | Access | Instruction | Fields |\n|---|---|---|---|\n";
  if (def.id == kFxlin) {
    os << "| " << hex(kCfg0) << " | W | cfg_dims | M[7:0] K[15:8] N[23:16] |\n";
    os << "| " << hex(kCfg1) << " | W | cfg_mode | relu_en[0] |\n";
    os << "| " << hex(kStart) << " | W | fn_start | data = 0x00000001 |\n";
    os << "| " << region(kWeightBase) << " | W | wr_weight | weight[n,k] at i = n*K + k |\n";
    os << "| " << region(kInputBase) << " | W | wr_input | input[m,k] at i = m*K + k |\n";
    os << "| " << region(kBiasBase) << " | W | wr_bias | bias[n] at i = n |\n";
    os << "| " << region(kOutputBase) << " | R | (read) | out[m,n] at i = m*N + n, i < "
       << kLinMaxDim * kLinMaxDim << " |\n";
  } else {
    os << "| " << hex(kCfg0) << " | W | cfg_shape | N[7:0] C[15:8] H[23:16] W[31:24] |\n";
    os << "| " << hex(kCfg1) << " | W | cfg_kernel | O[7:0] kh[15:8] kw[23:16] stride_h[31:24] |\n";
    os << "| " << hex(kCfg2) << " | W | cfg_pad | pad_h[7:0] pad_w[15:8] stride_w[23:16] |\n";
    os << "| " << hex(kStart) << " | W | fn_start | data = 0x00000001 |\n";
    os << "| " << region(kWeightBase) << " | W | wr_weight | weight[O,C,kh,kw] row-major |\n";
    os << "| " << region(kInputBase) << " | W | wr_input | input[N,C,H,W] row-major |\n";
    os << "| " << region(kOutputBase) << " | R | (read) | out[N,O,H',W'] row-major, i < " << kBufferWords
       << " |\n";
  }
  os << "\nElement words hold the raw fixed-point value in bits [15:0] (two's complement), upper half zero.\n";
  return os.str();
}

}  // namespace accelbridge::accel
