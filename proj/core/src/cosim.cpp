#include "accelbridge/cosim.hpp"

#include "accelbridge/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace accelbridge::cosim {

CallResult simulate_call(const ir::OpAttrs& call, const std::vector<ir::TensorValue>& args,
                         const accel::AcceleratorDef& def) {
  CallResult r;
  r.fragment = codegen::lower_call(call, args, def);
  auto replayed = codegen::replay(codegen::emit_mmio(r.fragment), def);
  r.trace = std::move(replayed.trace);
  r.output = codegen::readback(r.trace, r.fragment.out_shape, def);
  return r;
}

std::map<std::string, accel::AcceleratorDef> make_accels(const std::vector<std::string>& ids,
                                                         const fx::AccelNumerics& numerics) {
  std::map<std::string, accel::AcceleratorDef> out;
  for (const auto& id : ids) out.emplace(id, accel::build_accelerator(id, numerics));
  return out;
}

std::string RangeRecord::str() const {
  std::ostringstream os;
  os << "call " << call_id << ' ' << accel << ' ' << op << " in [" << in_min << ", " << in_max << "] out ["
     << out_min << ", " << out_max << ']';
  return os.str();
}

namespace {

std::pair<double, double> min_max(const std::vector<ir::TensorValue>& ts) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& t : ts)
    for (double v : t.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo > hi) return {0.0, 0.0};
  return {lo, hi};
}

}  // namespace

CosimResult run_cosim(const Placement& placement, const Env& env) {
  CosimResult res;
  ir::AccelHandler handler = [&](const ir::Node& call, const std::vector<ir::TensorValue>& args) {
    auto it = placement.accels.find(call.attrs.accel);
    if (it == placement.accels.end())
      throw Error(ErrorCode::InvalidArgument, "accelerator " + call.attrs.accel + " is not enabled");
    CallResult r = simulate_call(call.attrs, args, it->second);
    RangeRecord rec;
    rec.call_id = res.ranges.size();
    rec.accel = call.attrs.accel;
    rec.op = call.attrs.accel_op;
    std::tie(rec.in_min, rec.in_max) = min_max(args);
    std::tie(rec.out_min, rec.out_max) = min_max({r.output});
    res.ranges.push_back(rec);
    ir::TensorValue out = r.output;
    res.calls.push_back(std::move(r));
    return out;
  };
  res.output = ir::eval_ref(placement.program, env, handler);
  return res;
}

double rel_error(const ir::TensorValue& ref, const ir::TensorValue& acc) {
  if (ref.shape != acc.shape)
    throw Error(ErrorCode::ShapeMismatch, "rel_error on " + ref.shape.str() + " vs " + acc.shape.str());
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double d = ref.data[i] - acc.data[i];
    diff += d * d;
    norm += ref.data[i] * ref.data[i];
  }
  if (norm == 0) return diff == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff) / std::sqrt(norm);
}

// ---------------------------------------------------------------------------
// Per-mapping validation

std::string ValidationStats::key_values() const {
  std::ostringstream os;
  os << std::setprecision(6) << "mapping=" << mapping << " avg=" << avg_rel_err << " std=" << std_dev
     << " n=" << n_samples;
  if (infinite) os << " infinite=" << infinite;
  return os.str();
}

std::string validation_table(const std::vector<ValidationStats>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "mapping" << std::right << std::setw(12) << "avg err %" << std::setw(12)
     << "std dev %" << std::setw(8) << "n" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    os << std::left << std::setw(10) << r.mapping << std::right << std::setw(11) << 100 * r.avg_rel_err << '%'
       << std::setw(11) << 100 * r.std_dev << '%' << std::setw(8) << r.n_samples << '\n';
  return os.str();
}

namespace {

struct Instance {
  const char* lhs;
  std::vector<std::pair<const char*, Shape>> operands;
  std::size_t weight_index;
};

Instance instance_for(const eqsat::RewriteRule& rule) {
  if (rule.name == "M-LIN")
    return {"(bias_add (dense %a %b) %c)", {{"a", Shape{4, 16}}, {"b", Shape{8, 16}}, {"c", Shape{8}}}, 1};
  if (rule.name == "M-LINR")
    return {"(relu (bias_add (dense %a %b) %c))", {{"a", Shape{4, 16}}, {"b", Shape{8, 16}}, {"c", Shape{8}}}, 1};
  if (rule.name == "M-CONV")
    return {"(conv2d %d %w (stride 1 1) (pad 0 0))", {{"d", Shape{1, 2, 6, 6}}, {"w", Shape{4, 2, 3, 3}}}, 1};
  throw Error(ErrorCode::InvalidArgument, "no validation instance for rule '" + rule.name + "'");
}

double snap(double x, const fx::FixedSpec& spec) { return fx::dequantize(fx::quantize(x, spec), spec); }

}  // namespace

ValidationOptions adversarial_conv_options() {
  ValidationOptions o;
  o.weight_range = std::make_pair(-3.5, 3.5);
  return o;
}

ValidationStats validate_mapping(const eqsat::RewriteRule& rule, const accel::AcceleratorDef& def,
                                 const ValidationOptions& options) {
  const Instance inst = instance_for(rule);
  std::map<std::string, Shape> shapes;
  for (const auto& [name, s] : inst.operands) shapes.emplace(name, s);
  const ir::ExprPtr lhs = ir::infer_shapes(ir::parse_expr(inst.lhs), shapes);
  const ir::ExprPtr call = eqsat::rewrite_at_root(lhs, rule);
  if (!call || call->op != ir::OpKind::AccelCall)
    throw Error(ErrorCode::InvalidArgument, "rule '" + rule.name + "' does not map its validation instance");

  std::mt19937_64 rng(options.seed);
  ValidationStats st;
  st.mapping = rule.name;
  for (std::size_t s = 0; s < options.samples; ++s) {
    Env env;
    for (std::size_t i = 0; i < inst.operands.size(); ++i) {
      const auto& [name, shape] = inst.operands[i];
      const bool is_weight = i == inst.weight_index;
      auto [lo, hi] = is_weight && options.weight_range ? *options.weight_range : std::make_pair(options.lo, options.hi);
      std::uniform_real_distribution<double> dist(lo, hi);
      const auto& spec = is_weight ? def.numerics.weight_spec : def.numerics.act_spec;
      std::vector<double> data(static_cast<std::size_t>(shape.elements()));
      for (auto& v : data) {
        v = dist(rng);
        if (options.pre_quantize) v = snap(v, spec);
      }
      env.emplace(name, ir::TensorValue(shape, std::move(data)));
    }
    const ir::TensorValue ref = ir::eval_ref(lhs, env);
    std::vector<ir::TensorValue> args;
    for (const auto& a : call->args) args.push_back(env.at(a->attrs.name));
    const ir::TensorValue acc = simulate_call(call->attrs, args, def).output;
    const double e = rel_error(ref, acc);
    if (std::isinf(e)) ++st.infinite;
    else st.errors.push_back(e);
  }
  st.n_samples = options.samples;
  if (!st.errors.empty()) {
    double sum = 0;
    for (double e : st.errors) sum += e;
    st.avg_rel_err = sum / static_cast<double>(st.errors.size());
    double var = 0;
    for (double e : st.errors) var += (e - st.avg_rel_err) * (e - st.avg_rel_err);
    st.std_dev = std::sqrt(var / static_cast<double>(st.errors.size()));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Classifier fixture

namespace {

constexpr int kSide = 6;
constexpr int kClasses = 4;
constexpr int kPerClass = 50;

struct Region {
  int r0, r1, c0, c1;  // half-open
  bool contains(int r, int c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
};

// Class 0/2 live on the left, 1/3 on the right. Classes 2 and 3 add a small
// "spur" block that the 0/1 templates punish with a weight outside fx<8,6>.
constexpr Region kBlockA{0, 3, 0, 3}, kSpurA{4, 6, 0, 2};
constexpr Region kBlockB{0, 3, 3, 6}, kSpurB{4, 6, 4, 6};

std::vector<double> paint(const Region& main, double main_v, const Region& spur, double spur_v) {
  std::vector<double> img(kSide * kSide, 0.0);
  for (int r = 0; r < kSide; ++r)
    for (int c = 0; c < kSide; ++c) {
      if (main.contains(r, c)) img[r * kSide + c] = main_v;
      if (spur.contains(r, c)) img[r * kSide + c] = spur_v;
    }
  return img;
}

}  // namespace

Dataset synthetic_dataset(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  Dataset d;
  for (int i = 0; i < kClasses * kPerClass; ++i) {
    const int label = i % kClasses;
    const bool left = label % 2 == 0, spur = label >= 2;
    auto img = paint(left ? kBlockA : kBlockB, 1.0, left ? kSpurA : kSpurB, spur ? 1.0 : 0.0);
    for (auto& v : img) v += noise(rng);
    d.inputs.emplace_back(Shape{1, 1, kSide, kSide}, std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

ir::Program classifier_program() {
  return ir::parse_program(R"((inputs (decl x (shape 1 1 6 6)) (decl wc (shape 4 1 6 6)) (decl wl (shape 4 4))
        (decl bl (shape 4)))
(bias_add (dense (reshape (relu (conv2d %x %wc (stride 1 1) (pad 0 0))) (shape 1 4)) %wl) %bl))");
}

Env classifier_params() {
  std::vector<double> wc;
  auto append = [&](const std::vector<double>& t) { wc.insert(wc.end(), t.begin(), t.end()); };
  append(paint(kBlockA, 1.9, kSpurA, -3.5));
  append(paint(kBlockB, 1.9, kSpurB, -3.5));
  append(paint(kBlockA, 0.8, kSpurA, 0.25));
  append(paint(kBlockB, 0.8, kSpurB, 0.25));
  std::vector<double> wl(16, 0.0);
  for (int i = 0; i < 4; ++i) wl[i * 4 + i] = 1.0;
  Env env;
  env.emplace("wc", ir::TensorValue(Shape{4, 1, kSide, kSide}, std::move(wc)));
  env.emplace("wl", ir::TensorValue(Shape{4, 4}, std::move(wl)));
  env.emplace("bl", ir::TensorValue::zeros(Shape{4}));
  return env;
}

AccuracyResult accuracy_eval(const Placement& placement, const Env& params, const Dataset& data) {
  AccuracyResult res;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    Env env = params;
    env.insert_or_assign(kClassifierInput, data.inputs[i]);
    CosimResult out = run_cosim(placement, env);
    const auto& v = out.output.data;
    const auto pred = std::max_element(v.begin(), v.end()) - v.begin();
    if (pred == data.labels[i]) ++res.correct;
    for (auto& r : out.ranges) {
      r.call_id = res.ranges.size();
      res.ranges.push_back(std::move(r));
    }
  }
  res.total = data.inputs.size();
  res.accuracy = res.total ? static_cast<double>(res.correct) / static_cast<double>(res.total) : 0.0;
  return res;
}

}  // namespace accelbridge::cosim
