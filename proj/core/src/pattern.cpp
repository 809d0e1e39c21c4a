#include "accelbridge/eqsat.hpp"

#include "accelbridge/error.hpp"

#include <set>
#include <sstream>

namespace accelbridge::eqsat {

namespace {

[[noreturn]] void syntax(const SExpr& at, const std::string& msg) {
  throw SourceError(ErrorCode::SyntaxError, at.line, at.col, msg);
}

bool is_attr_var(const SExpr& s) { return s.is_atom() && s.atom.size() >= 2 && s.atom[0] == '?'; }

void attr_slot(PatternNode& n, const SExpr& s, AttrSlot slot, std::string_view head) {
  if (is_attr_var(s)) {
    n.attr_vars[slot] = s.atom.substr(1);
    return;
  }
  switch (slot) {
    case AttrSlot::Target: n.attrs.target = ir::shape_from_sexpr(s); break;
    case AttrSlot::Kernel: n.attrs.kernel = ir::pair_from_sexpr(s, head); break;
    case AttrSlot::Stride: n.attrs.stride = ir::pair_from_sexpr(s, head); break;
    case AttrSlot::Pad: n.attrs.pad = ir::pair_from_sexpr(s, head); break;
  }
}

PatternPtr from_sexpr(const SExpr& s) {
  auto n = std::make_shared<PatternNode>();
  if (s.is_atom()) {
    if (s.atom.size() >= 2 && s.atom[0] == '%') {
      n->is_var = true;
      n->var = s.atom.substr(1);
      return n;
    }
    syntax(s, "expected pattern, got '" + s.atom + "'");
  }
  if (s.items.empty() || !s.items[0].is_atom()) syntax(s, "expected operator");
  const std::string& head = s.items[0].atom;
  auto op = ir::op_from_name(head);
  if (!op) throw SourceError(ErrorCode::UnknownOperator, s.line, s.col, "'" + head + "'");
  n->op = *op;

  auto arity = [&](std::size_t k) {
    if (s.items.size() != k)
      syntax(s, "'" + head + "' expects " + std::to_string(k - 1) + " operands, got " +
                    std::to_string(s.items.size() - 1));
  };
  auto child = [&](std::size_t i) { n->children.push_back(from_sexpr(s.items[i])); };

  switch (*op) {
    case ir::OpKind::Dense:
    case ir::OpKind::BiasAdd:
    case ir::OpKind::Add:
      arity(3);
      child(1);
      child(2);
      break;
    case ir::OpKind::Relu:
      arity(2);
      child(1);
      break;
    case ir::OpKind::Reshape:
      arity(3);
      child(1);
      attr_slot(*n, s.items[2], AttrSlot::Target, "shape");
      break;
    case ir::OpKind::Conv2d:
      arity(5);
      child(1);
      child(2);
      attr_slot(*n, s.items[3], AttrSlot::Stride, "stride");
      attr_slot(*n, s.items[4], AttrSlot::Pad, "pad");
      break;
    case ir::OpKind::Im2col:
      arity(5);
      child(1);
      attr_slot(*n, s.items[2], AttrSlot::Kernel, "kernel");
      attr_slot(*n, s.items[3], AttrSlot::Stride, "stride");
      attr_slot(*n, s.items[4], AttrSlot::Pad, "pad");
      break;
    case ir::OpKind::AccelCall: {
      if (s.items.size() < 3 || !s.items[1].is_atom() || !s.items[2].is_atom())
        syntax(s, "expected (accel_call ACCEL OP args...)");
      n->attrs.accel = s.items[1].atom;
      n->attrs.accel_op = s.items[2].atom;
      int attr_vars = 0;
      for (std::size_t i = 3; i < s.items.size(); ++i) {
        const SExpr& item = s.items[i];
        if (is_attr_var(item)) {
          if (attr_vars >= 2) syntax(item, "accel_call takes at most two attribute variables");
          attr_slot(*n, item, attr_vars++ == 0 ? AttrSlot::Stride : AttrSlot::Pad, "");
          n->attrs.conv_attrs = true;
        } else if (item.is_form("stride")) {
          n->attrs.stride = ir::pair_from_sexpr(item, "stride");
          n->attrs.conv_attrs = true;
        } else if (item.is_form("pad")) {
          n->attrs.pad = ir::pair_from_sexpr(item, "pad");
          n->attrs.conv_attrs = true;
        } else {
          n->children.push_back(from_sexpr(item));
        }
      }
      break;
    }
    case ir::OpKind::Lit: {
      auto e = ir::expr_from_sexpr(s);
      n->attrs = e->attrs;
      break;
    }
    case ir::OpKind::Var: break;
  }
  return n;
}

void print_slot(std::ostringstream& os, const PatternNode& n, AttrSlot slot) {
  os << ' ';
  if (auto it = n.attr_vars.find(slot); it != n.attr_vars.end()) {
    os << '?' << it->second;
    return;
  }
  auto pair = [&](std::string_view head, ir::IntPair p) { os << '(' << head << ' ' << p.first << ' ' << p.second << ')'; };
  switch (slot) {
    case AttrSlot::Target:
      os << "(shape";
      for (auto d : n.attrs.target) os << ' ' << d;
      os << ')';
      break;
    case AttrSlot::Kernel: pair("kernel", n.attrs.kernel); break;
    case AttrSlot::Stride: pair("stride", n.attrs.stride); break;
    case AttrSlot::Pad: pair("pad", n.attrs.pad); break;
  }
}

void print_into(std::ostringstream& os, const PatternNode& n) {
  if (n.is_var) {
    os << '%' << n.var;
    return;
  }
  if (n.op == ir::OpKind::Lit) {
    os << ir::print_expr(ir::make_node(ir::OpKind::Lit, n.attrs, {}));
    return;
  }
  os << '(' << ir::op_name(n.op);
  if (n.op == ir::OpKind::AccelCall) os << ' ' << n.attrs.accel << ' ' << n.attrs.accel_op;
  for (const auto& c : n.children) {
    os << ' ';
    print_into(os, *c);
  }
  switch (n.op) {
    case ir::OpKind::Reshape: print_slot(os, n, AttrSlot::Target); break;
    case ir::OpKind::Im2col: print_slot(os, n, AttrSlot::Kernel); [[fallthrough]];
    case ir::OpKind::Conv2d:
      print_slot(os, n, AttrSlot::Stride);
      print_slot(os, n, AttrSlot::Pad);
      break;
    case ir::OpKind::AccelCall:
      if (n.attrs.conv_attrs) {
        print_slot(os, n, AttrSlot::Stride);
        print_slot(os, n, AttrSlot::Pad);
      }
      break;
    default: break;
  }
  os << ')';
}

void collect(const PatternNode& n, std::vector<std::string>& vars, std::vector<std::string>& attrs,
             std::set<std::string>& seen_v, std::set<std::string>& seen_a) {
  if (n.is_var) {
    if (seen_v.insert(n.var).second) vars.push_back(n.var);
    return;
  }
  for (const auto& [slot, name] : n.attr_vars)
    if (seen_a.insert(name).second) attrs.push_back(name);
  for (const auto& c : n.children) collect(*c, vars, attrs, seen_v, seen_a);
}

}  // namespace

PatternPtr parse_pattern(std::string_view text) {
  auto forms = read_sexprs(text);
  if (forms.size() != 1) throw SourceError(ErrorCode::SyntaxError, 1, 1, "expected exactly one pattern");
  return from_sexpr(forms[0]);
}

std::string print_pattern(const PatternPtr& p) {
  std::ostringstream os;
  print_into(os, *p);
  return os.str();
}

std::vector<std::string> pattern_vars(const PatternPtr& p) {
  std::vector<std::string> vars, attrs;
  std::set<std::string> sv, sa;
  collect(*p, vars, attrs, sv, sa);
  return vars;
}

std::vector<std::string> pattern_attr_vars(const PatternPtr& p) {
  std::vector<std::string> vars, attrs;
  std::set<std::string> sv, sa;
  collect(*p, vars, attrs, sv, sa);
  return attrs;
}

std::size_t pattern_size(const PatternPtr& p) {
  std::size_t n = 1;
  for (const auto& c : p->children) n += pattern_size(c);
  return n;
}

}  // namespace accelbridge::eqsat
