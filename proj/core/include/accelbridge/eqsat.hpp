#pragma once

// Equality saturation over the tensor IR: an e-graph with congruence closure
// and a shape analysis, guarded pattern rewrites, cost-based extraction, and
// plain syntactic ("exact") matching for comparison.

#include "accelbridge/shape.hpp"
#include "accelbridge/tensor_ir.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace accelbridge::eqsat {

using ClassId = uint32_t;

struct ENode {
  ir::OpKind op = ir::OpKind::Var;
  ir::OpAttrs attrs;
  std::vector<ClassId> children;

  friend bool operator==(const ENode& a, const ENode& b);
  /// Canonical node ordering, used for deterministic tie-breaks.
  friend std::strong_ordering operator<=>(const ENode& a, const ENode& b);
};

struct ENodeHash {
  std::size_t operator()(const ENode& n) const;
};

struct EClass {
  ClassId id = 0;
  std::vector<ENode> nodes;
  std::vector<std::pair<ENode, ClassId>> parents;  // (parent node, its class)
  Shape shape;
};

class EGraph {
 public:
  /// Hashconsed insertion. Var nodes need `leaf_shape`; every other node takes
  /// its shape from the analysis. Throws ShapeMismatch for an ill-shaped node.
  ClassId add(ENode node, const std::optional<Shape>& leaf_shape = std::nullopt);

  /// Inserts a shape-inferred expression (variables must carry shapes).
  ClassId add_expr(const ir::ExprPtr& expr);

  ClassId find(ClassId id) const;

  /// Returns true when two distinct classes were merged. Throws
  /// AnalysisConflict when their shapes differ.
  bool merge(ClassId a, ClassId b);

  /// Restores congruence closure and canonical, deduplicated node lists.
  void rebuild();

  const EClass& eclass(ClassId id) const;
  const Shape& shape(ClassId id) const { return eclass(id).shape; }
  std::optional<ClassId> lookup(const ENode& node) const;

  /// Canonical ids of live classes, ascending.
  std::vector<ClassId> class_ids() const;
  std::size_t num_classes() const noexcept { return live_classes_; }
  std::size_t num_nodes() const noexcept;

  ENode canonicalize(ENode node) const;

 private:
  mutable std::vector<ClassId> parent_;
  std::vector<EClass> classes_;
  std::vector<bool> live_;
  std::unordered_map<ENode, ClassId, ENodeHash> memo_;
  std::size_t live_classes_ = 0;
};

// ---------------------------------------------------------------------------
// Patterns

enum class AttrSlot { Target, Kernel, Stride, Pad };
using AttrValue = std::variant<Shape, ir::IntPair>;

struct PatternNode;
using PatternPtr = std::shared_ptr<const PatternNode>;

/// A tensor-IR tree whose leaves may be pattern variables (%x, bound to
/// e-classes) and whose attribute positions may be attribute variables (?s).
struct PatternNode {
  bool is_var = false;
  std::string var;
  ir::OpKind op = ir::OpKind::Var;
  ir::OpAttrs attrs;
  std::map<AttrSlot, std::string> attr_vars;
  std::vector<PatternPtr> children;
};

/// "(reshape (dense %a %b) ?s)". Throws SourceError on malformed input.
PatternPtr parse_pattern(std::string_view text);
std::string print_pattern(const PatternPtr& p);
std::vector<std::string> pattern_vars(const PatternPtr& p);
std::vector<std::string> pattern_attr_vars(const PatternPtr& p);
std::size_t pattern_size(const PatternPtr& p);

/// What a guard or a synthesizer may ask about a match site.
class MatchView {
 public:
  virtual ~MatchView() = default;
  virtual const Shape& shape(std::string_view var) const = 0;
  virtual const AttrValue& attr(std::string_view var) const = 0;
  /// Whether some node using the matched root as operand `operand` has operator `op`.
  virtual bool root_has_parent(ir::OpKind op, std::size_t operand) const = 0;
};

struct Synthesized {
  std::map<std::string, ir::ExprPtr> terms;  // extra %vars, as literal terms
  std::map<std::string, AttrValue> attrs;    // extra ?vars
};

struct RewriteRule {
  enum class Kind { Generic, Mapping };

  std::string name;
  Kind kind = Kind::Generic;
  std::string accel;  // Mapping rules only
  PatternPtr lhs;
  PatternPtr rhs;
  std::function<bool(const MatchView&)> guard;
  std::function<Synthesized(const MatchView&)> synthesize;
};

// ---------------------------------------------------------------------------
// Saturation and extraction

struct Limits {
  std::size_t max_nodes = 10000;
  std::size_t max_iters = 30;
};

enum class StopReason { Fixpoint, NodeCap, IterCap };
std::string_view to_string(StopReason r);

struct SaturationReport {
  std::size_t iterations = 0;
  std::size_t nodes = 0;
  StopReason stop_reason = StopReason::Fixpoint;
  std::map<std::string, std::size_t> rule_applications;

  /// "iterations=2 nodes=17 stop=fixpoint"
  std::string str() const;
};

/// Rules fire in declaration order; matches are collected per iteration over
/// classes in ascending id order, applied, then the graph is rebuilt.
SaturationReport saturate(EGraph& graph, const std::vector<RewriteRule>& rules, const Limits& limits = {});

struct CostModel {
  int64_t accel_call = 1;
  int64_t op = 1000;
  int64_t leaf = 0;
};

/// Lexicographic extraction cost: more offloads first, then lower weighted
/// cost, then fewer nodes.
struct Cost {
  int64_t offloads = 0;
  int64_t weighted = 0;
  int64_t nodes = 0;

  bool better_than(const Cost& other) const;
};

ir::ExprPtr extract(const EGraph& graph, ClassId root, const CostModel& cost = {});

/// Cost of an expression tree under the extraction order above.
Cost tree_cost(const ir::ExprPtr& expr, const CostModel& cost = {});

// ---------------------------------------------------------------------------
// Exact (syntactic) matching on trees

struct TreeBinding {
  std::map<std::string, ir::ExprPtr> terms;
  std::map<std::string, AttrValue> attrs;
};

struct ExactMatch {
  std::string rule;
  TreeBinding binding;
  std::vector<std::size_t> path;  // operand indices from the root
};

/// Top-down structural matching with guards and no rewriting. Expects a
/// shape-inferred expression.
std::vector<ExactMatch> match_exact(const ir::ExprPtr& expr, const std::vector<RewriteRule>& rules);

/// Matches `rule` at the root of `expr` and builds the right-hand side as a
/// tree. Returns nullptr when the rule does not apply.
ir::ExprPtr rewrite_at_root(const ir::ExprPtr& expr, const RewriteRule& rule);

}  // namespace accelbridge::eqsat
