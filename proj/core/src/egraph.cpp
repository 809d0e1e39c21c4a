#include "accelbridge/eqsat.hpp"

#include "accelbridge/error.hpp"

#include <algorithm>
#include <numeric>

namespace accelbridge::eqsat {

bool operator==(const ENode& a, const ENode& b) {
  return a.op == b.op && a.children == b.children && a.attrs == b.attrs;
}

std::strong_ordering operator<=>(const ENode& a, const ENode& b) {
  if (auto c = static_cast<int>(a.op) <=> static_cast<int>(b.op); c != 0) return c;
  if (auto c = a.attrs <=> b.attrs; c != 0) return c;
  return a.children <=> b.children;
}

std::size_t ENodeHash::operator()(const ENode& n) const {
  std::size_t h = ir::hash_attrs(n.attrs) ^ (static_cast<std::size_t>(n.op) * 0x9e3779b97f4a7c15ull);
  for (auto c : n.children) h = h * 1000003u ^ c;
  return h;
}

ENode EGraph::canonicalize(ENode node) const {
  for (auto& c : node.children) c = find(c);
  return node;
}

ClassId EGraph::find(ClassId id) const {
  ClassId root = id;
  while (parent_.at(root) != root) root = parent_[root];
  while (parent_[id] != root) {
    ClassId next = parent_[id];
    parent_[id] = root;
    id = next;
  }
  return root;
}

ClassId EGraph::add(ENode node, const std::optional<Shape>& leaf_shape) {
  node = canonicalize(std::move(node));
  if (auto it = memo_.find(node); it != memo_.end()) return find(it->second);

  Shape shape;
  if (node.op == ir::OpKind::Var) {
    if (!leaf_shape) throw Error(ErrorCode::ShapeMismatch, "variable %" + node.attrs.name + " has no shape");
    shape = *leaf_shape;
  } else {
    std::vector<Shape> child_shapes;
    for (auto c : node.children) child_shapes.push_back(classes_.at(c).shape);
    shape = ir::infer_op_shape(node.op, node.attrs, child_shapes);
  }

  const auto id = static_cast<ClassId>(classes_.size());
  parent_.push_back(id);
  live_.push_back(true);
  ++live_classes_;
  EClass cls;
  cls.id = id;
  cls.nodes.push_back(node);
  cls.shape = std::move(shape);
  classes_.push_back(std::move(cls));
  for (auto c : node.children) classes_[c].parents.emplace_back(node, id);
  memo_.emplace(std::move(node), id);
  return id;
}

ClassId EGraph::add_expr(const ir::ExprPtr& expr) {
  ENode node{expr->op, expr->attrs, {}};
  for (const auto& a : expr->args) node.children.push_back(add_expr(a));
  return add(std::move(node), expr->shape);
}

bool EGraph::merge(ClassId a, ClassId b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (classes_[a].shape != classes_[b].shape)
    throw Error(ErrorCode::AnalysisConflict, "merging classes of shape " + classes_[a].shape.str() + " and " +
                                                 classes_[b].shape.str());
  const ClassId root = std::min(a, b), other = std::max(a, b);
  parent_[other] = root;
  auto& dst = classes_[root];
  auto& src = classes_[other];
  dst.nodes.insert(dst.nodes.end(), src.nodes.begin(), src.nodes.end());
  dst.parents.insert(dst.parents.end(), src.parents.begin(), src.parents.end());
  src.nodes.clear();
  src.parents.clear();
  live_[other] = false;
  --live_classes_;
  return true;
}

void EGraph::rebuild() {
  // Re-hash every node until no two classes hold congruent nodes.
  for (;;) {
    std::unordered_map<ENode, ClassId, ENodeHash> memo;
    std::vector<std::pair<ClassId, ClassId>> unions;
    for (ClassId id = 0; id < classes_.size(); ++id) {
      if (!live_[id]) continue;
      for (const auto& n : classes_[id].nodes) {
        auto [it, inserted] = memo.emplace(canonicalize(n), id);
        if (!inserted && find(it->second) != find(id)) unions.emplace_back(it->second, id);
      }
    }
    if (unions.empty()) {
      memo_ = std::move(memo);
      break;
    }
    for (auto [x, y] : unions) merge(x, y);
  }

  for (ClassId id = 0; id < classes_.size(); ++id) {
    if (!live_[id]) continue;
    auto& nodes = classes_[id].nodes;
    for (auto& n : nodes) n = canonicalize(std::move(n));
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    classes_[id].parents.clear();
  }
  for (ClassId id = 0; id < classes_.size(); ++id) {
    if (!live_[id]) continue;
    for (const auto& n : classes_[id].nodes)
      for (auto c : n.children) classes_[c].parents.emplace_back(n, id);
  }
}

const EClass& EGraph::eclass(ClassId id) const { return classes_.at(find(id)); }

std::optional<ClassId> EGraph::lookup(const ENode& node) const {
  auto it = memo_.find(canonicalize(node));
  if (it == memo_.end()) return std::nullopt;
  return find(it->second);
}

std::vector<ClassId> EGraph::class_ids() const {
  std::vector<ClassId> ids;
  for (ClassId id = 0; id < classes_.size(); ++id)
    if (live_[id]) ids.push_back(id);
  return ids;
}

std::size_t EGraph::num_nodes() const noexcept {
  std::size_t n = 0;
  for (ClassId id = 0; id < classes_.size(); ++id)
    if (live_[id]) n += classes_[id].nodes.size();
  return n;
}

}  // namespace accelbridge::eqsat
