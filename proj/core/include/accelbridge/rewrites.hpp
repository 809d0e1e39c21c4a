#pragma once

// The shipped rule library (generic IR rewrites plus IR-to-accelerator
// mappings) and the exact / flexible offload pipelines built on it.

#include "accelbridge/eqsat.hpp"
#include "accelbridge/tensor_ir.hpp"

#include <map>
#include <string>
#include <vector>

namespace accelbridge::rewrites {

struct RuleOptions {
  bool associativity = false;  // (add (add x y) z) -> (add x (add y z)); not exact in floating point
};

struct RuleSet {
  std::vector<eqsat::RewriteRule> generic;
  std::vector<eqsat::RewriteRule> mappings;

  /// Generic rules, then the mappings whose accelerator is in `accels`.
  std::vector<eqsat::RewriteRule> for_accels(const std::vector<std::string>& accels) const;
  std::vector<eqsat::RewriteRule> mappings_for(const std::vector<std::string>& accels) const;
  const eqsat::RewriteRule& find(std::string_view name) const;
};

RuleSet builtin_rules(const RuleOptions& options = {});

/// Relative tolerance the soundness check applies to a rule.
double soundness_tolerance(const eqsat::RewriteRule& rule);

using OffloadCounts = std::map<std::string, std::size_t>;

/// Static accel_call count per accelerator.
OffloadCounts count_offloads(const ir::ExprPtr& expr);

/// Greedy top-down cover by the mapping rules alone, largest pattern first.
/// This is what exact (syntactic) matching can offload without rewriting.
ir::ExprPtr exact_offload(const ir::ExprPtr& expr, const std::vector<eqsat::RewriteRule>& mappings);

struct OffloadReport {
  std::vector<std::string> accels;
  ir::ExprPtr before;
  ir::ExprPtr exact_program;
  ir::ExprPtr flexible_program;
  OffloadCounts exact;
  OffloadCounts flexible;
  eqsat::SaturationReport saturation;
};

/// Exact cover of the untouched program, then add_expr, saturate and extract.
OffloadReport flexible_match(const ir::Program& program, const RuleSet& rules, const std::vector<std::string>& accels,
                             const eqsat::Limits& limits = {});

/// "program  accelerator  exact  flexible" rows, one per enabled accelerator.
std::string offload_table(const std::vector<std::pair<std::string, OffloadReport>>& rows);

}  // namespace accelbridge::rewrites
