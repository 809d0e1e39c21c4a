#include "accelbridge/tensor_ir.hpp"

#include "accelbridge/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace accelbridge::ir {

TensorValue::TensorValue(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (static_cast<int64_t>(data.size()) != shape.elements())
    throw Error(ErrorCode::ShapeMismatch,
                "tensor has " + std::to_string(data.size()) + " values for shape " + shape.str());
}

TensorValue TensorValue::zeros(Shape s) {
  const auto n = static_cast<std::size_t>(s.elements());
  return TensorValue(std::move(s), std::vector<double>(n, 0.0));
}

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Var: return "var";
    case OpKind::Lit: return "lit";
    case OpKind::Dense: return "dense";
    case OpKind::BiasAdd: return "bias_add";
    case OpKind::Add: return "add";
    case OpKind::Reshape: return "reshape";
    case OpKind::Relu: return "relu";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Im2col: return "im2col";
    case OpKind::AccelCall: return "accel_call";
  }
  return "?";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (OpKind k : {OpKind::Lit, OpKind::Dense, OpKind::BiasAdd, OpKind::Add, OpKind::Reshape, OpKind::Relu,
                   OpKind::Conv2d, OpKind::Im2col, OpKind::AccelCall})
    if (op_name(k) == name) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Attributes

namespace {

std::strong_ordering compare_literal(const std::shared_ptr<const TensorValue>& a,
                                     const std::shared_ptr<const TensorValue>& b) {
  if (!a || !b) return (a != nullptr) <=> (b != nullptr);
  if (auto c = a->shape <=> b->shape; c != 0) return c;
  if (auto c = a->data.size() <=> b->data.size(); c != 0) return c;
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    auto x = std::bit_cast<uint64_t>(a->data[i]);
    auto y = std::bit_cast<uint64_t>(b->data[i]);
    if (x != y) return x <=> y;
  }
  return std::strong_ordering::equal;
}

void hash_mix(std::size_t& h, std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2); }

}  // namespace

bool operator==(const OpAttrs& a, const OpAttrs& b) { return (a <=> b) == 0; }

std::strong_ordering operator<=>(const OpAttrs& a, const OpAttrs& b) {
  if (auto c = a.name <=> b.name; c != 0) return c;
  if (auto c = compare_literal(a.literal, b.literal); c != 0) return c;
  if (auto c = a.target <=> b.target; c != 0) return c;
  if (auto c = a.kernel <=> b.kernel; c != 0) return c;
  if (auto c = a.stride <=> b.stride; c != 0) return c;
  if (auto c = a.pad <=> b.pad; c != 0) return c;
  if (auto c = a.accel <=> b.accel; c != 0) return c;
  if (auto c = a.accel_op <=> b.accel_op; c != 0) return c;
  return a.conv_attrs <=> b.conv_attrs;
}

std::size_t hash_attrs(const OpAttrs& a) {
  std::size_t h = std::hash<std::string>{}(a.name);
  if (a.literal) {
    for (auto d : a.literal->shape) hash_mix(h, static_cast<std::size_t>(d));
    for (auto v : a.literal->data) hash_mix(h, std::bit_cast<uint64_t>(v));
  }
  for (auto d : a.target) hash_mix(h, static_cast<std::size_t>(d));
  for (auto v : {a.kernel.first, a.kernel.second, a.stride.first, a.stride.second, a.pad.first, a.pad.second})
    hash_mix(h, static_cast<std::size_t>(v));
  hash_mix(h, std::hash<std::string>{}(a.accel));
  hash_mix(h, std::hash<std::string>{}(a.accel_op));
  hash_mix(h, a.conv_attrs ? 1 : 0);
  return h;
}

// ---------------------------------------------------------------------------
// Builders

ExprPtr make_node(OpKind op, OpAttrs attrs, std::vector<ExprPtr> args, SourcePos pos) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->attrs = std::move(attrs);
  n->args = std::move(args);
  n->pos = pos;
  return n;
}

ExprPtr var(std::string name) {
  OpAttrs a;
  a.name = std::move(name);
  return make_node(OpKind::Var, std::move(a), {});
}

ExprPtr lit(TensorValue value) {
  OpAttrs a;
  a.literal = std::make_shared<const TensorValue>(std::move(value));
  return make_node(OpKind::Lit, std::move(a), {});
}

ExprPtr dense(ExprPtr data, ExprPtr weight) { return make_node(OpKind::Dense, {}, {std::move(data), std::move(weight)}); }
ExprPtr bias_add(ExprPtr x, ExprPtr bias) { return make_node(OpKind::BiasAdd, {}, {std::move(x), std::move(bias)}); }
ExprPtr add(ExprPtr x, ExprPtr y) { return make_node(OpKind::Add, {}, {std::move(x), std::move(y)}); }
ExprPtr relu(ExprPtr x) { return make_node(OpKind::Relu, {}, {std::move(x)}); }

ExprPtr reshape(ExprPtr x, Shape target) {
  OpAttrs a;
  a.target = std::move(target);
  return make_node(OpKind::Reshape, std::move(a), {std::move(x)});
}

ExprPtr conv2d(ExprPtr data, ExprPtr weight, IntPair stride, IntPair pad) {
  OpAttrs a;
  a.stride = stride;
  a.pad = pad;
  return make_node(OpKind::Conv2d, std::move(a), {std::move(data), std::move(weight)});
}

ExprPtr im2col(ExprPtr data, IntPair kernel, IntPair stride, IntPair pad) {
  OpAttrs a;
  a.kernel = kernel;
  a.stride = stride;
  a.pad = pad;
  return make_node(OpKind::Im2col, std::move(a), {std::move(data)});
}

ExprPtr accel_call(std::string accel, std::string op, std::vector<ExprPtr> args) {
  OpAttrs a;
  a.accel = std::move(accel);
  a.accel_op = std::move(op);
  return make_node(OpKind::AccelCall, std::move(a), std::move(args));
}

ExprPtr accel_call_conv(std::string accel, std::string op, std::vector<ExprPtr> args, IntPair stride, IntPair pad) {
  OpAttrs a;
  a.accel = std::move(accel);
  a.accel_op = std::move(op);
  a.stride = stride;
  a.pad = pad;
  a.conv_attrs = true;
  return make_node(OpKind::AccelCall, std::move(a), std::move(args));
}

bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->op != b->op || !(a->attrs == b->attrs) || a->args.size() != b->args.size()) return false;
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!structurally_equal(a->args[i], b->args[i])) return false;
  return true;
}

std::size_t count_nodes(const ExprPtr& e) {
  std::size_t n = 1;
  for (const auto& a : e->args) n += count_nodes(a);
  return n;
}

std::map<std::string, Shape> Program::env() const {
  std::map<std::string, Shape> out;
  for (const auto& d : inputs) out.emplace(d.name, d.shape);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void syntax(const SExpr& at, const std::string& msg) {
  throw SourceError(ErrorCode::SyntaxError, at.line, at.col, msg);
}

int64_t parse_int(const SExpr& s) {
  if (!s.is_atom()) syntax(s, "expected integer");
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.atom.data(), s.atom.data() + s.atom.size(), v);
  if (ec != std::errc() || p != s.atom.data() + s.atom.size()) syntax(s, "expected integer, got '" + s.atom + "'");
  return v;
}

double parse_double(const SExpr& s) {
  if (!s.is_atom()) syntax(s, "expected number");
  double v = 0;
  const char* begin = s.atom.data();
  if (!s.atom.empty() && s.atom[0] == '+') ++begin;
  auto [p, ec] = std::from_chars(begin, s.atom.data() + s.atom.size(), v);
  if (ec != std::errc() || p != s.atom.data() + s.atom.size()) syntax(s, "expected number, got '" + s.atom + "'");
  return v;
}

void expect_arity(const SExpr& s, std::size_t n) {
  if (s.items.size() != n)
    syntax(s, "'" + s.items[0].atom + "' expects " + std::to_string(n - 1) + " operands, got " +
                  std::to_string(s.items.size() - 1));
}

}  // namespace

Shape shape_from_sexpr(const SExpr& s) {
  if (!s.is_form("shape")) syntax(s, "expected (shape INT...)");
  std::vector<int64_t> dims;
  for (std::size_t i = 1; i < s.items.size(); ++i) {
    int64_t d = parse_int(s.items[i]);
    if (d < 1) syntax(s.items[i], "dimensions must be positive");
    dims.push_back(d);
  }
  return Shape(std::move(dims));
}

IntPair pair_from_sexpr(const SExpr& s, std::string_view head) {
  if (!s.is_form(head) || s.items.size() != 3) syntax(s, "expected (" + std::string(head) + " INT INT)");
  return {parse_int(s.items[1]), parse_int(s.items[2])};
}

ExprPtr expr_from_sexpr(const SExpr& s) {
  const SourcePos pos{s.line, s.col};
  if (s.is_atom()) {
    if (s.atom.size() < 2 || s.atom[0] != '%') syntax(s, "expected expression, got '" + s.atom + "'");
    OpAttrs a;
    a.name = s.atom.substr(1);
    return make_node(OpKind::Var, std::move(a), {}, pos);
  }
  if (s.items.empty() || !s.items[0].is_atom()) syntax(s, "expected operator");
  const std::string& head = s.items[0].atom;
  auto op = op_from_name(head);
  if (!op) throw SourceError(ErrorCode::UnknownOperator, s.line, s.col, "'" + head + "'");

  OpAttrs attrs;
  std::vector<ExprPtr> args;
  switch (*op) {
    case OpKind::Dense:
    case OpKind::BiasAdd:
    case OpKind::Add:
      expect_arity(s, 3);
      args = {expr_from_sexpr(s.items[1]), expr_from_sexpr(s.items[2])};
      break;
    case OpKind::Relu:
      expect_arity(s, 2);
      args = {expr_from_sexpr(s.items[1])};
      break;
    case OpKind::Reshape:
      expect_arity(s, 3);
      args = {expr_from_sexpr(s.items[1])};
      attrs.target = shape_from_sexpr(s.items[2]);
      break;
    case OpKind::Conv2d:
      expect_arity(s, 5);
      args = {expr_from_sexpr(s.items[1]), expr_from_sexpr(s.items[2])};
      attrs.stride = pair_from_sexpr(s.items[3], "stride");
      attrs.pad = pair_from_sexpr(s.items[4], "pad");
      break;
    case OpKind::Im2col:
      expect_arity(s, 5);
      args = {expr_from_sexpr(s.items[1])};
      attrs.kernel = pair_from_sexpr(s.items[2], "kernel");
      attrs.stride = pair_from_sexpr(s.items[3], "stride");
      attrs.pad = pair_from_sexpr(s.items[4], "pad");
      break;
    case OpKind::AccelCall: {
      if (s.items.size() < 3 || !s.items[1].is_atom() || !s.items[2].is_atom())
        syntax(s, "expected (accel_call ACCEL OP args...)");
      attrs.accel = s.items[1].atom;
      attrs.accel_op = s.items[2].atom;
      for (std::size_t i = 3; i < s.items.size(); ++i) {
        const SExpr& item = s.items[i];
        if (item.is_form("stride")) {
          attrs.stride = pair_from_sexpr(item, "stride");
          attrs.conv_attrs = true;
        } else if (item.is_form("pad")) {
          attrs.pad = pair_from_sexpr(item, "pad");
          attrs.conv_attrs = true;
        } else {
          args.push_back(expr_from_sexpr(item));
        }
      }
      break;
    }
    case OpKind::Lit: {
      if (s.items.size() < 2) syntax(s, "expected (lit (shape ...) NUM...)");
      Shape shape = shape_from_sexpr(s.items[1]);
      std::vector<double> data;
      for (std::size_t i = 2; i < s.items.size(); ++i) data.push_back(parse_double(s.items[i]));
      if (static_cast<int64_t>(data.size()) != shape.elements())
        syntax(s, "literal has " + std::to_string(data.size()) + " values for shape " + shape.str());
      attrs.literal = std::make_shared<const TensorValue>(std::move(shape), std::move(data));
      break;
    }
    case OpKind::Var: break;
  }
  return make_node(*op, std::move(attrs), std::move(args), pos);
}

Program parse_program(std::string_view text) {
  auto forms = read_sexprs(text);
  if (forms.size() != 2) {
    if (forms.empty()) throw SourceError(ErrorCode::SyntaxError, 1, 1, "empty program");
    const SExpr& at = forms.size() > 2 ? forms[2] : forms[0];
    throw SourceError(ErrorCode::SyntaxError, at.line, at.col, "expected (inputs ...) followed by one expression");
  }
  const SExpr& header = forms[0];
  if (!header.is_form("inputs")) syntax(header, "expected (inputs (decl name (shape ...))...)");
  Program p;
  for (std::size_t i = 1; i < header.items.size(); ++i) {
    const SExpr& d = header.items[i];
    if (!d.is_form("decl") || d.items.size() != 3 || !d.items[1].is_atom())
      syntax(d, "expected (decl name (shape ...))");
    std::string name = d.items[1].atom;
    if (!name.empty() && name[0] == '%') name = name.substr(1);
    for (const auto& prev : p.inputs)
      if (prev.name == name) syntax(d, "duplicate input '" + name + "'");
    p.inputs.push_back({std::move(name), shape_from_sexpr(d.items[2])});
  }
  p.body = expr_from_sexpr(forms[1]);
  return p;
}

ExprPtr parse_expr(std::string_view text) {
  auto forms = read_sexprs(text);
  if (forms.size() != 1) throw SourceError(ErrorCode::SyntaxError, 1, 1, "expected exactly one expression");
  return expr_from_sexpr(forms[0]);
}

// ---------------------------------------------------------------------------
// Printing

std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

namespace {

void print_shape(std::ostringstream& os, const Shape& s) {
  os << "(shape";
  for (auto d : s) os << ' ' << d;
  os << ')';
}

void print_pair(std::ostringstream& os, std::string_view head, IntPair p) {
  os << '(' << head << ' ' << p.first << ' ' << p.second << ')';
}

void print_into(std::ostringstream& os, const Node& n) {
  switch (n.op) {
    case OpKind::Var: os << '%' << n.attrs.name; return;
    case OpKind::Lit:
      os << "(lit ";
      print_shape(os, n.attrs.literal->shape);
      for (double v : n.attrs.literal->data) os << ' ' << format_number(v);
      os << ')';
      return;
    default: break;
  }
  os << '(' << op_name(n.op);
  if (n.op == OpKind::AccelCall) os << ' ' << n.attrs.accel << ' ' << n.attrs.accel_op;
  for (const auto& a : n.args) {
    os << ' ';
    print_into(os, *a);
  }
  switch (n.op) {
    case OpKind::Reshape:
      os << ' ';
      print_shape(os, n.attrs.target);
      break;
    case OpKind::Im2col:
      os << ' ';
      print_pair(os, "kernel", n.attrs.kernel);
      [[fallthrough]];
    case OpKind::Conv2d:
      os << ' ';
      print_pair(os, "stride", n.attrs.stride);
      os << ' ';
      print_pair(os, "pad", n.attrs.pad);
      break;
    case OpKind::AccelCall:
      if (n.attrs.conv_attrs) {
        os << ' ';
        print_pair(os, "stride", n.attrs.stride);
        os << ' ';
        print_pair(os, "pad", n.attrs.pad);
      }
      break;
    default: break;
  }
  os << ')';
}

}  // namespace

std::string print_expr(const ExprPtr& e) {
  std::ostringstream os;
  print_into(os, *e);
  return os.str();
}

std::string print_program(const Program& p) {
  std::ostringstream os;
  os << "(inputs";
  for (const auto& d : p.inputs) {
    os << "\n  (decl " << d.name << ' ';
    print_shape(os, d.shape);
    os << ')';
  }
  os << ")\n";
  print_into(os, *p.body);
  os << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Shapes

namespace {

[[noreturn]] void shape_error(OpKind op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op_name(op)) + ": " + detail);
}

void expect_rank(OpKind op, const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank)
    shape_error(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " + s.str());
}

struct ConvGeometry {
  int64_t n, c, h, w, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(OpKind op, const Shape& data, IntPair kernel, IntPair stride, IntPair pad) {
  expect_rank(op, data, 4, "data");
  if (stride.first < 1 || stride.second < 1) shape_error(op, "stride must be positive");
  if (pad.first < 0 || pad.second < 0) shape_error(op, "padding must be non-negative");
  if (kernel.first < 1 || kernel.second < 1) shape_error(op, "kernel must be positive");
  const int64_t hspan = data[2] + 2 * pad.first - kernel.first;
  const int64_t wspan = data[3] + 2 * pad.second - kernel.second;
  if (hspan < 0 || wspan < 0) shape_error(op, "kernel larger than padded input " + data.str());
  if (hspan % stride.first != 0 || wspan % stride.second != 0)
    shape_error(op, "stride does not divide the padded input extent of " + data.str());
  return {data[0], data[1], data[2], data[3], kernel.first, kernel.second, hspan / stride.first + 1,
          wspan / stride.second + 1};
}

Shape conv_shape(const Shape& data, const Shape& weight, IntPair stride, IntPair pad) {
  expect_rank(OpKind::Conv2d, weight, 4, "weight");
  auto g = conv_geometry(OpKind::Conv2d, data, {weight[2], weight[3]}, stride, pad);
  if (weight[1] != g.c)
    shape_error(OpKind::Conv2d, "weight channels " + weight.str() + " do not match data " + data.str());
  return Shape{g.n, weight[0], g.oh, g.ow};
}

Shape dense_shape(const Shape& a, const Shape& b) {
  expect_rank(OpKind::Dense, a, 2, "data");
  expect_rank(OpKind::Dense, b, 2, "weight");
  if (a[1] != b[1]) shape_error(OpKind::Dense, "inner dimensions differ: " + a.str() + " vs " + b.str());
  return Shape{a[0], b[0]};
}

Shape bias_add_shape(const Shape& x, const Shape& bias) {
  if (x.rank() < 1) shape_error(OpKind::BiasAdd, "data must have rank >= 1");
  expect_rank(OpKind::BiasAdd, bias, 1, "bias");
  if (bias[0] != x[x.rank() - 1])
    shape_error(OpKind::BiasAdd, "bias " + bias.str() + " does not match last dimension of " + x.str());
  return x;
}

}  // namespace

Shape infer_op_shape(OpKind op, const OpAttrs& attrs, std::span<const Shape> args) {
  auto arity = [&](std::size_t n) {
    if (args.size() != n) shape_error(op, "expects " + std::to_string(n) + " operands");
  };
  switch (op) {
    case OpKind::Var: shape_error(op, "variables take their shape from the environment");
    case OpKind::Lit: return attrs.literal->shape;
    case OpKind::Dense: arity(2); return dense_shape(args[0], args[1]);
    case OpKind::BiasAdd: arity(2); return bias_add_shape(args[0], args[1]);
    case OpKind::Add: {
      arity(2);
      const Shape &x = args[0], &y = args[1];
      if (x == y) return x;
      if (y.rank() == 1 && x.rank() >= 1 && y[0] == x[x.rank() - 1]) return x;
      if (x.rank() == 1 && y.rank() >= 1 && x[0] == y[y.rank() - 1]) return y;
      shape_error(op, "cannot broadcast " + x.str() + " with " + y.str());
    }
    case OpKind::Reshape:
      arity(1);
      for (auto d : attrs.target)
        if (d < 1) shape_error(op, "target dimensions must be positive");
      if (attrs.target.elements() != args[0].elements())
        shape_error(op, "cannot reshape " + args[0].str() + " to " + attrs.target.str());
      return attrs.target;
    case OpKind::Relu: arity(1); return args[0];
    case OpKind::Conv2d: arity(2); return conv_shape(args[0], args[1], attrs.stride, attrs.pad);
    case OpKind::Im2col: {
      arity(1);
      auto g = conv_geometry(op, args[0], attrs.kernel, attrs.stride, attrs.pad);
      return Shape{g.n * g.oh * g.ow, g.c * g.kh * g.kw};
    }
    case OpKind::AccelCall: {
      if (attrs.accel == "FXLIN" && (attrs.accel_op == "linear" || attrs.accel_op == "linear_relu")) {
        arity(3);
        return bias_add_shape(dense_shape(args[0], args[1]), args[2]);
      }
      if (attrs.accel == "FXCNN" && attrs.accel_op == "conv2d") {
        arity(2);
        return conv_shape(args[0], args[1], attrs.stride, attrs.pad);
      }
      throw Error(ErrorCode::UnknownOperator, "accel_call " + attrs.accel + " " + attrs.accel_op);
    }
  }
  shape_error(op, "unknown operator");
}

ExprPtr infer_shapes(const ExprPtr& expr, const std::map<std::string, Shape>& env) {
  auto n = std::make_shared<Node>(*expr);
  if (n->op == OpKind::Var) {
    auto it = env.find(n->attrs.name);
    if (it == env.end()) throw Error(ErrorCode::UnboundVariable, "%" + n->attrs.name);
    n->shape = it->second;
    return n;
  }
  std::vector<Shape> arg_shapes;
  for (auto& a : n->args) {
    a = infer_shapes(a, env);
    arg_shapes.push_back(*a->shape);
  }
  try {
    n->shape = infer_op_shape(n->op, n->attrs, arg_shapes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ShapeMismatch || n->pos.line == 0) throw;
    throw Error(ErrorCode::ShapeMismatch, std::string(e.what()) + " (line " + std::to_string(n->pos.line) +
                                              ", col " + std::to_string(n->pos.col) + ")");
  }
  return n;
}

bool is_registered_accel_op(std::string_view accel, std::string_view op) {
  return (accel == "FXLIN" && (op == "linear" || op == "linear_relu")) || (accel == "FXCNN" && op == "conv2d");
}

ExprPtr accel_reference(const Node& call) {
  const auto& a = call.attrs;
  if (a.accel == "FXLIN" && (a.accel_op == "linear" || a.accel_op == "linear_relu") && call.args.size() == 3) {
    ExprPtr lin = bias_add(dense(call.args[0], call.args[1]), call.args[2]);
    return a.accel_op == "linear" ? lin : relu(std::move(lin));
  }
  if (a.accel == "FXCNN" && a.accel_op == "conv2d" && call.args.size() == 2)
    return conv2d(call.args[0], call.args[1], a.stride, a.pad);
  throw Error(ErrorCode::UnknownOperator, "no reference semantics for accel_call " + a.accel + " " + a.accel_op);
}

// ---------------------------------------------------------------------------
// Reference evaluation

TensorValue eval_op(OpKind op, const OpAttrs& attrs, const std::vector<TensorValue>& args) {
  std::vector<Shape> shapes;
  for (const auto& t : args) shapes.push_back(t.shape);
  if (op == OpKind::Lit) return *attrs.literal;
  const Shape out_shape = infer_op_shape(op, attrs, shapes);

  switch (op) {
    case OpKind::Dense: {
      const auto &a = args[0], &w = args[1];
      const int64_t M = a.shape[0], K = a.shape[1], N = w.shape[0];
      TensorValue out = TensorValue::zeros(out_shape);
      for (int64_t m = 0; m < M; ++m)
        for (int64_t n = 0; n < N; ++n) {
          double s = 0.0;
          for (int64_t k = 0; k < K; ++k) s += a.data[m * K + k] * w.data[n * K + k];
          out.data[m * N + n] = s;
        }
      return out;
    }
    case OpKind::BiasAdd:
    case OpKind::Add: {
      const TensorValue* x = &args[0];
      const TensorValue* y = &args[1];
      if (x->shape != out_shape) std::swap(x, y);
      TensorValue out = *x;
      if (y->shape == out_shape) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->data[i] + y->data[i];
      } else {
        const std::size_t width = y->data.size();
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x->data[i] + y->data[i % width];
      }
      return out;
    }
    case OpKind::Reshape: return TensorValue(out_shape, args[0].data);
    case OpKind::Relu: {
      TensorValue out = args[0];
      for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::Conv2d: {
      const auto &d = args[0], &w = args[1];
      const int64_t N = d.shape[0], C = d.shape[1], H = d.shape[2], W = d.shape[3];
      const int64_t O = w.shape[0], KH = w.shape[2], KW = w.shape[3];
      const int64_t OH = out_shape[2], OW = out_shape[3];
      TensorValue out = TensorValue::zeros(out_shape);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o)
          for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow) {
              double s = 0.0;
              for (int64_t c = 0; c < C; ++c)
                for (int64_t kh = 0; kh < KH; ++kh)
                  for (int64_t kw = 0; kw < KW; ++kw) {
                    const int64_t ih = oh * attrs.stride.first + kh - attrs.pad.first;
                    const int64_t iw = ow * attrs.stride.second + kw - attrs.pad.second;
                    if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                    s += d.data[((n * C + c) * H + ih) * W + iw] * w.data[((o * C + c) * KH + kh) * KW + kw];
                  }
              out.data[((n * O + o) * OH + oh) * OW + ow] = s;
            }
      return out;
    }
    case OpKind::Im2col: {
      const auto& d = args[0];
      const int64_t N = d.shape[0], C = d.shape[1], H = d.shape[2], W = d.shape[3];
      const int64_t KH = attrs.kernel.first, KW = attrs.kernel.second;
      const int64_t OH = (H + 2 * attrs.pad.first - KH) / attrs.stride.first + 1;
      const int64_t OW = (W + 2 * attrs.pad.second - KW) / attrs.stride.second + 1;
      const int64_t cols = C * KH * KW;
      TensorValue out = TensorValue::zeros(out_shape);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t oh = 0; oh < OH; ++oh)
          for (int64_t ow = 0; ow < OW; ++ow) {
            const int64_t row = (n * OH + oh) * OW + ow;
            for (int64_t c = 0; c < C; ++c)
              for (int64_t kh = 0; kh < KH; ++kh)
                for (int64_t kw = 0; kw < KW; ++kw) {
                  const int64_t ih = oh * attrs.stride.first + kh - attrs.pad.first;
                  const int64_t iw = ow * attrs.stride.second + kw - attrs.pad.second;
                  const int64_t col = (c * KH + kh) * KW + kw;
                  out.data[row * cols + col] =
                      (ih < 0 || ih >= H || iw < 0 || iw >= W) ? 0.0 : d.data[((n * C + c) * H + ih) * W + iw];
                }
          }
      return out;
    }
    default: break;
  }
  throw Error(ErrorCode::UnknownOperator, std::string(op_name(op)) + " has no direct kernel");
}

namespace {

class Evaluator {
 public:
  Evaluator(const std::map<std::string, TensorValue>& env, const AccelHandler& handler)
      : env_(env), handler_(handler) {}

  TensorValue eval(const ExprPtr& e) {
    if (auto it = memo_.find(e.get()); it != memo_.end()) return it->second;
    TensorValue v = compute(*e);
    memo_.emplace(e.get(), v);
    return v;
  }

 private:
  TensorValue compute(const Node& n) {
    if (n.op == OpKind::Var) {
      auto it = env_.find(n.attrs.name);
      if (it == env_.end()) throw Error(ErrorCode::UnboundVariable, "%" + n.attrs.name);
      return it->second;
    }
    std::vector<TensorValue> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) args.push_back(eval(a));
    if (n.op == OpKind::AccelCall) {
      if (handler_) return handler_(n, args);
      return reference_call(n, args);
    }
    return eval_op(n.op, n.attrs, args);
  }

  static TensorValue reference_call(const Node& n, const std::vector<TensorValue>& args) {
    // Bind the evaluated arguments to placeholder variables of the fragment.
    std::map<std::string, TensorValue> local;
    std::vector<ExprPtr> leaves;
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string name = "arg" + std::to_string(i);
      local.emplace(name, args[i]);
      leaves.push_back(var(name));
    }
    Node call = n;
    call.args = std::move(leaves);
    return eval_ref(accel_reference(call), local);
  }

  const std::map<std::string, TensorValue>& env_;
  const AccelHandler& handler_;
  std::unordered_map<const Node*, TensorValue> memo_;
};

}  // namespace

TensorValue eval_ref(const ExprPtr& expr, const std::map<std::string, TensorValue>& env,
                     const AccelHandler& handler) {
  Evaluator ev(env, handler);
  return ev.eval(expr);
}

// ---------------------------------------------------------------------------
// Tensor files

TensorValue parse_tensor(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  std::optional<Shape> shape;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!shape) {
      if (!(ls >> tok)) continue;
      if (tok != "shape:") throw SourceError(ErrorCode::SyntaxError, lineno, 1, "expected 'shape:' header");
      std::vector<int64_t> dims;
      while (ls >> tok) {
        SExpr s;
        s.atom = tok;
        s.line = lineno;
        dims.push_back(parse_int(s));
        if (dims.back() < 1) throw SourceError(ErrorCode::SyntaxError, lineno, 1, "dimensions must be positive");
      }
      shape = Shape(std::move(dims));
      continue;
    }
    while (ls >> tok) {
      SExpr s;
      s.atom = tok;
      s.line = lineno;
      data.push_back(parse_double(s));
    }
  }
  if (!shape) throw SourceError(ErrorCode::SyntaxError, 1, 1, "missing 'shape:' header");
  if (static_cast<int64_t>(data.size()) != shape->elements())
    throw SourceError(ErrorCode::SyntaxError, lineno, 1,
                      "expected " + std::to_string(shape->elements()) + " values, got " + std::to_string(data.size()));
  return TensorValue(std::move(*shape), std::move(data));
}

std::string print_tensor(const TensorValue& t) {
  std::ostringstream os;
  os << "shape:";
  for (auto d : t.shape) os << ' ' << d;
  os << '\n';
  const std::size_t row = t.shape.rank() == 0 ? 1 : static_cast<std::size_t>(t.shape[t.shape.rank() - 1]);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    os << format_number(t.data[i]) << ((i + 1) % row == 0 ? '\n' : ' ');
  }
  return os.str();
}

}  // namespace accelbridge::ir
