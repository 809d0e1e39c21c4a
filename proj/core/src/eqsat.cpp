#include "accelbridge/eqsat.hpp"

#include "accelbridge/error.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace accelbridge::eqsat {

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Fixpoint: return "fixpoint";
    case StopReason::NodeCap: return "node_cap";
    case StopReason::IterCap: return "iter_cap";
  }
  return "?";
}

std::string SaturationReport::str() const {
  std::ostringstream os;
  os << "iterations=" << iterations << " nodes=" << nodes << " stop=" << to_string(stop_reason);
  return os.str();
}

namespace {

AttrValue get_slot(const ir::OpAttrs& a, AttrSlot slot) {
  switch (slot) {
    case AttrSlot::Target: return a.target;
    case AttrSlot::Kernel: return a.kernel;
    case AttrSlot::Stride: return a.stride;
    case AttrSlot::Pad: return a.pad;
  }
  return a.target;
}

void set_slot(ir::OpAttrs& a, AttrSlot slot, const AttrValue& v) {
  if (slot == AttrSlot::Target) {
    if (!std::holds_alternative<Shape>(v)) throw Error(ErrorCode::InvalidArgument, "shape attribute expected");
    a.target = std::get<Shape>(v);
    return;
  }
  if (!std::holds_alternative<ir::IntPair>(v)) throw Error(ErrorCode::InvalidArgument, "pair attribute expected");
  const auto& p = std::get<ir::IntPair>(v);
  if (slot == AttrSlot::Kernel) a.kernel = p;
  else if (slot == AttrSlot::Stride) a.stride = p;
  else a.pad = p;
}

bool match_attrs(const PatternNode& p, const ir::OpAttrs& actual, std::map<std::string, AttrValue>& binding) {
  ir::OpAttrs expected = p.attrs;
  for (const auto& [slot, name] : p.attr_vars) {
    AttrValue v = get_slot(actual, slot);
    if (auto it = binding.find(name); it != binding.end()) {
      if (it->second != v) return false;
    } else {
      binding.emplace(name, v);
    }
    set_slot(expected, slot, v);
  }
  return expected == actual;
}

ir::OpAttrs instantiate_attrs(const PatternNode& p, const std::map<std::string, AttrValue>& bound,
                              const std::map<std::string, AttrValue>& synth) {
  ir::OpAttrs attrs = p.attrs;
  for (const auto& [slot, name] : p.attr_vars) {
    if (auto it = bound.find(name); it != bound.end()) set_slot(attrs, slot, it->second);
    else if (auto jt = synth.find(name); jt != synth.end()) set_slot(attrs, slot, jt->second);
    else throw Error(ErrorCode::InvalidArgument, "attribute variable ?" + name + " is not bound");
  }
  return attrs;
}

[[noreturn]] void unbound(std::string_view kind, std::string_view var) {
  throw Error(ErrorCode::InvalidArgument, std::string(kind) + " variable " + std::string(var) + " is not bound");
}

// ---------------------------------------------------------------------------
// E-matching

struct Subst {
  std::map<std::string, ClassId> classes;
  std::map<std::string, AttrValue> attrs;
};

void ematch(const EGraph& g, const PatternNode& p, ClassId cls, Subst s, std::vector<Subst>& out);

void ematch_children(const EGraph& g, const PatternNode& p, const ENode& node, std::size_t i, Subst s,
                     std::vector<Subst>& out) {
  if (i == p.children.size()) {
    out.push_back(std::move(s));
    return;
  }
  std::vector<Subst> partial;
  ematch(g, *p.children[i], node.children[i], std::move(s), partial);
  for (auto& ps : partial) ematch_children(g, p, node, i + 1, std::move(ps), out);
}

void ematch(const EGraph& g, const PatternNode& p, ClassId cls, Subst s, std::vector<Subst>& out) {
  cls = g.find(cls);
  if (p.is_var) {
    if (auto it = s.classes.find(p.var); it != s.classes.end()) {
      if (g.find(it->second) == cls) out.push_back(std::move(s));
      return;
    }
    s.classes.emplace(p.var, cls);
    out.push_back(std::move(s));
    return;
  }
  for (const auto& node : g.eclass(cls).nodes) {
    if (node.op != p.op || node.children.size() != p.children.size()) continue;
    Subst local = s;
    if (!match_attrs(p, node.attrs, local.attrs)) continue;
    ematch_children(g, p, node, 0, std::move(local), out);
  }
}

class GraphView final : public MatchView {
 public:
  GraphView(const EGraph& g, const Subst& s, ClassId root) : g_(g), s_(s), root_(root) {}

  const Shape& shape(std::string_view var) const override {
    auto it = s_.classes.find(std::string(var));
    if (it == s_.classes.end()) unbound("pattern", var);
    return g_.shape(it->second);
  }
  const AttrValue& attr(std::string_view var) const override {
    auto it = s_.attrs.find(std::string(var));
    if (it == s_.attrs.end()) unbound("attribute", var);
    return it->second;
  }
  bool root_has_parent(ir::OpKind op, std::size_t operand) const override {
    const ClassId root = g_.find(root_);
    for (const auto& [node, cls] : g_.eclass(root).parents)
      if (node.op == op && operand < node.children.size() && g_.find(node.children[operand]) == root) return true;
    return false;
  }

 private:
  const EGraph& g_;
  const Subst& s_;
  ClassId root_;
};

ClassId instantiate(EGraph& g, const PatternNode& p, const Subst& s, const Synthesized& syn) {
  if (p.is_var) {
    if (auto it = s.classes.find(p.var); it != s.classes.end()) return it->second;
    if (auto it = syn.terms.find(p.var); it != syn.terms.end()) return g.add_expr(it->second);
    unbound("pattern", p.var);
  }
  ENode node{p.op, instantiate_attrs(p, s.attrs, syn.attrs), {}};
  for (const auto& c : p.children) node.children.push_back(instantiate(g, *c, s, syn));
  return g.add(std::move(node));
}

}  // namespace

// ---------------------------------------------------------------------------
// Saturation

SaturationReport saturate(EGraph& graph, const std::vector<RewriteRule>& rules, const Limits& limits) {
  SaturationReport report;
  graph.rebuild();
  for (;;) {
    if (graph.num_nodes() > limits.max_nodes) {
      report.stop_reason = StopReason::NodeCap;
      break;
    }
    if (report.iterations >= limits.max_iters) {
      report.stop_reason = StopReason::IterCap;
      break;
    }

    struct Pending {
      const RewriteRule* rule;
      ClassId root;
      Subst subst;
      Synthesized synth;
    };
    std::vector<Pending> pending;
    const auto ids = graph.class_ids();
    for (const auto& rule : rules) {
      for (ClassId cls : ids) {
        std::vector<Subst> found;
        ematch(graph, *rule.lhs, cls, {}, found);
        for (auto& s : found) {
          GraphView view(graph, s, cls);
          if (rule.guard && !rule.guard(view)) continue;
          Synthesized syn = rule.synthesize ? rule.synthesize(view) : Synthesized{};
          pending.push_back({&rule, cls, std::move(s), std::move(syn)});
        }
      }
    }

    bool changed = false;
    for (const auto& p : pending) {
      try {
        const ClassId rhs = instantiate(graph, *p.rule->rhs, p.subst, p.synth);
        if (graph.merge(p.root, rhs)) {
          changed = true;
          ++report.rule_applications[p.rule->name];
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AnalysisConflict && e.code() != ErrorCode::ShapeMismatch) throw;
        throw Error(ErrorCode::AnalysisConflict, "rule '" + p.rule->name + "': " + e.what());
      }
      if (graph.num_nodes() > limits.max_nodes) break;
    }
    graph.rebuild();
    if (!changed) {
      report.stop_reason = StopReason::Fixpoint;
      break;
    }
    ++report.iterations;
  }
  report.nodes = graph.num_nodes();
  return report;
}

// ---------------------------------------------------------------------------
// Extraction

bool Cost::better_than(const Cost& o) const {
  if (offloads != o.offloads) return offloads > o.offloads;
  if (weighted != o.weighted) return weighted < o.weighted;
  return nodes < o.nodes;
}

namespace {

Cost own_cost(ir::OpKind op, const CostModel& cm) {
  switch (op) {
    case ir::OpKind::AccelCall: return {1, cm.accel_call, 1};
    case ir::OpKind::Var:
    case ir::OpKind::Lit: return {0, cm.leaf, 1};
    default: return {0, cm.op, 1};
  }
}

void add_cost(Cost& a, const Cost& b) {
  a.offloads += b.offloads;
  a.weighted += b.weighted;
  a.nodes += b.nodes;
}

struct Choice {
  Cost cost;
  const ENode* node = nullptr;
};

ir::ExprPtr build(const EGraph& g, ClassId cls, const std::map<ClassId, Choice>& best,
                  std::map<ClassId, ir::ExprPtr>& built, std::set<ClassId>& on_path) {
  cls = g.find(cls);
  if (auto it = built.find(cls); it != built.end()) return it->second;
  if (!on_path.insert(cls).second)
    throw Error(ErrorCode::Unextractable, "cyclic choice at e-class " + std::to_string(cls));
  auto it = best.find(cls);
  if (it == best.end()) throw Error(ErrorCode::Unextractable, "e-class " + std::to_string(cls) + " has no finite term");
  const ENode& n = *it->second.node;
  std::vector<ir::ExprPtr> args;
  for (auto c : n.children) args.push_back(build(g, c, best, built, on_path));
  auto node = std::make_shared<ir::Node>();
  node->op = n.op;
  node->attrs = n.attrs;
  node->args = std::move(args);
  node->shape = g.shape(cls);
  on_path.erase(cls);
  built.emplace(cls, node);
  return node;
}

}  // namespace

ir::ExprPtr extract(const EGraph& graph, ClassId root, const CostModel& cm) {
  const auto ids = graph.class_ids();
  std::map<ClassId, Choice> best;
  bool changed = true;
  std::size_t passes = 0;
  while (changed) {
    changed = false;
    if (++passes > ids.size() + 2)
      throw Error(ErrorCode::Unextractable, "extraction cost does not converge (offload cycle)");
    for (ClassId cls : ids) {
      for (const auto& node : graph.eclass(cls).nodes) {
        Cost c = own_cost(node.op, cm);
        bool ok = true;
        for (auto child : node.children) {
          auto it = best.find(graph.find(child));
          if (it == best.end()) {
            ok = false;
            break;
          }
          add_cost(c, it->second.cost);
        }
        if (!ok) continue;
        auto it = best.find(cls);
        if (it == best.end()) {
          best.emplace(cls, Choice{c, &node});
          changed = true;
        } else if (c.better_than(it->second.cost) ||
                   (!it->second.cost.better_than(c) && node < *it->second.node)) {
          it->second = Choice{c, &node};
          changed = true;
        }
      }
    }
  }
  std::map<ClassId, ir::ExprPtr> built;
  std::set<ClassId> on_path;
  return build(graph, root, best, built, on_path);
}

Cost tree_cost(const ir::ExprPtr& e, const CostModel& cm) {
  Cost c = own_cost(e->op, cm);
  for (const auto& a : e->args) add_cost(c, tree_cost(a, cm));
  return c;
}

// ---------------------------------------------------------------------------
// Tree matching

namespace {

bool match_tree(const PatternNode& p, const ir::ExprPtr& e, TreeBinding& b) {
  if (p.is_var) {
    if (auto it = b.terms.find(p.var); it != b.terms.end()) return ir::structurally_equal(it->second, e);
    b.terms.emplace(p.var, e);
    return true;
  }
  if (e->op != p.op || e->args.size() != p.children.size()) return false;
  if (!match_attrs(p, e->attrs, b.attrs)) return false;
  for (std::size_t i = 0; i < p.children.size(); ++i)
    if (!match_tree(*p.children[i], e->args[i], b)) return false;
  return true;
}

class TreeView final : public MatchView {
 public:
  TreeView(const TreeBinding& b, const ir::Node* parent, std::size_t operand)
      : b_(b), parent_(parent), operand_(operand) {}

  const Shape& shape(std::string_view var) const override {
    auto it = b_.terms.find(std::string(var));
    if (it == b_.terms.end()) unbound("pattern", var);
    if (!it->second->shape) throw Error(ErrorCode::InvalidArgument, "expression is not shape-annotated");
    return *it->second->shape;
  }
  const AttrValue& attr(std::string_view var) const override {
    auto it = b_.attrs.find(std::string(var));
    if (it == b_.attrs.end()) unbound("attribute", var);
    return it->second;
  }
  bool root_has_parent(ir::OpKind op, std::size_t operand) const override {
    return parent_ && parent_->op == op && operand_ == operand;
  }

 private:
  const TreeBinding& b_;
  const ir::Node* parent_;
  std::size_t operand_;
};

void exact_walk(const ir::ExprPtr& e, const ir::Node* parent, std::size_t operand, std::vector<std::size_t>& path,
                const std::vector<RewriteRule>& rules, std::vector<ExactMatch>& out) {
  for (const auto& rule : rules) {
    TreeBinding b;
    if (!match_tree(*rule.lhs, e, b)) continue;
    TreeView view(b, parent, operand);
    if (rule.guard && !rule.guard(view)) continue;
    out.push_back({rule.name, std::move(b), path});
  }
  for (std::size_t i = 0; i < e->args.size(); ++i) {
    path.push_back(i);
    exact_walk(e->args[i], e.get(), i, path, rules, out);
    path.pop_back();
  }
}

ir::ExprPtr instantiate_tree(const PatternNode& p, const TreeBinding& b, const Synthesized& syn) {
  if (p.is_var) {
    if (auto it = b.terms.find(p.var); it != b.terms.end()) return it->second;
    if (auto it = syn.terms.find(p.var); it != syn.terms.end()) return it->second;
    unbound("pattern", p.var);
  }
  std::vector<ir::ExprPtr> args;
  bool shaped = true;
  std::vector<Shape> shapes;
  for (const auto& c : p.children) {
    args.push_back(instantiate_tree(*c, b, syn));
    if (args.back()->shape) shapes.push_back(*args.back()->shape);
    else shaped = false;
  }
  auto node = std::make_shared<ir::Node>();
  node->op = p.op;
  node->attrs = instantiate_attrs(p, b.attrs, syn.attrs);
  node->args = std::move(args);
  if (p.op == ir::OpKind::Lit) node->shape = node->attrs.literal->shape;
  else if (shaped) node->shape = ir::infer_op_shape(node->op, node->attrs, shapes);
  return node;
}

}  // namespace

std::vector<ExactMatch> match_exact(const ir::ExprPtr& expr, const std::vector<RewriteRule>& rules) {
  std::vector<ExactMatch> out;
  std::vector<std::size_t> path;
  exact_walk(expr, nullptr, 0, path, rules, out);
  return out;
}

ir::ExprPtr rewrite_at_root(const ir::ExprPtr& expr, const RewriteRule& rule) {
  TreeBinding b;
  if (!match_tree(*rule.lhs, expr, b)) return nullptr;
  TreeView view(b, nullptr, 0);
  if (rule.guard && !rule.guard(view)) return nullptr;
  Synthesized syn = rule.synthesize ? rule.synthesize(view) : Synthesized{};
  return instantiate_tree(*rule.rhs, b, syn);
}

}  // namespace accelbridge::eqsat
