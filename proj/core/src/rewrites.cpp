#include "accelbridge/rewrites.hpp"

#include "accelbridge/accelerators.hpp"
#include "accelbridge/error.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace accelbridge::rewrites {

using eqsat::MatchView;
using eqsat::RewriteRule;

namespace {

RewriteRule rule(std::string name, std::string_view lhs, std::string_view rhs) {
  RewriteRule r;
  r.name = std::move(name);
  r.lhs = eqsat::parse_pattern(lhs);
  r.rhs = eqsat::parse_pattern(rhs);
  return r;
}

RewriteRule mapping(std::string name, std::string_view accel, std::string_view lhs, std::string_view rhs) {
  RewriteRule r = rule(std::move(name), lhs, rhs);
  r.kind = RewriteRule::Kind::Mapping;
  r.accel = std::string(accel);
  return r;
}

const Shape& shape_attr(const MatchView& v, std::string_view var) { return std::get<Shape>(v.attr(var)); }
const ir::IntPair& pair_attr(const MatchView& v, std::string_view var) { return std::get<ir::IntPair>(v.attr(var)); }

bool linear_fits(const MatchView& v) {
  const Shape &a = v.shape("a"), &b = v.shape("b");
  return a.rank() == 2 && b.rank() == 2 && accel::fxlin_fits(a[0], a[1], b[0]);
}

}  // namespace

RuleSet builtin_rules(const RuleOptions& options) {
  RuleSet rs;

  rs.generic.push_back(rule("G1", "(reshape (reshape %x ?s1) ?s2)", "(reshape %x ?s2)"));

  auto g2 = rule("G2", "(reshape %x ?s)", "%x");
  g2.guard = [](const MatchView& v) { return v.shape("x") == shape_attr(v, "s"); };
  rs.generic.push_back(std::move(g2));

  auto g3 = rule("G3", "(add (reshape (dense %a %b) ?s) %c)", "(bias_add (dense %a %b) %c)");
  g3.guard = [](const MatchView& v) {
    const Shape &a = v.shape("a"), &b = v.shape("b"), &c = v.shape("c");
    return Shape{a[0], b[0]} == shape_attr(v, "s") && c.rank() == 1 && c[0] == b[0];
  };
  rs.generic.push_back(std::move(g3));

  // Batch-1 im2col lowering. The weight is flattened to [O, C*kh*kw] and
  // multiplies the patch matrix from the left, so the product is already in
  // [O, H'*W'] order and reshapes straight to NCHW.
  auto g4 = rule("G4", "(conv2d %d %w ?st ?pd)", "(reshape (dense (reshape %w ?wf) (im2col %d ?k ?st ?pd)) ?out)");
  g4.guard = [](const MatchView& v) { return v.shape("d")[0] == 1; };
  g4.synthesize = [](const MatchView& v) {
    const Shape &d = v.shape("d"), &w = v.shape("w");
    const auto &st = pair_attr(v, "st"), &pd = pair_attr(v, "pd");
    const int64_t oh = (d[2] + 2 * pd.first - w[2]) / st.first + 1;
    const int64_t ow = (d[3] + 2 * pd.second - w[3]) / st.second + 1;
    eqsat::Synthesized s;
    s.attrs.emplace("wf", Shape{w[0], w[1] * w[2] * w[3]});
    s.attrs.emplace("k", ir::IntPair{w[2], w[3]});
    s.attrs.emplace("out", Shape{1, w[0], oh, ow});
    return s;
  };
  rs.generic.push_back(std::move(g4));

  // Only a matmul that is not already the data operand of a bias_add.
  auto g5 = rule("G5", "(dense %a %b)", "(bias_add (dense %a %b) %zero)");
  g5.guard = [](const MatchView& v) { return !v.root_has_parent(ir::OpKind::BiasAdd, 0); };
  g5.synthesize = [](const MatchView& v) {
    eqsat::Synthesized s;
    s.terms.emplace("zero", ir::lit(ir::TensorValue::zeros(Shape{v.shape("b")[0]})));
    return s;
  };
  rs.generic.push_back(std::move(g5));

  rs.generic.push_back(rule("G6", "(add %x %y)", "(add %y %x)"));
  rs.generic.push_back(rule("G7", "(relu (relu %x))", "(relu %x)"));

  if (options.associativity) {
    auto g8 = rule("G8", "(add (add %x %y) %z)", "(add %x (add %y %z))");
    g8.guard = [](const MatchView& v) { return v.shape("x") == v.shape("y") && v.shape("y") == v.shape("z"); };
    rs.generic.push_back(std::move(g8));
  }

  auto lin = mapping("M-LIN", accel::kFxlin, "(bias_add (dense %a %b) %c)", "(accel_call FXLIN linear %a %b %c)");
  lin.guard = linear_fits;
  rs.mappings.push_back(std::move(lin));

  auto linr = mapping("M-LINR", accel::kFxlin, "(relu (bias_add (dense %a %b) %c))",
                      "(accel_call FXLIN linear_relu %a %b %c)");
  linr.guard = linear_fits;
  rs.mappings.push_back(std::move(linr));

  auto conv = mapping("M-CONV", accel::kFxcnn, "(conv2d %d %w ?st ?pd)", "(accel_call FXCNN conv2d %d %w ?st ?pd)");
  conv.guard = [](const MatchView& v) {
    return accel::fxcnn_fits(v.shape("d"), v.shape("w"), pair_attr(v, "st"), pair_attr(v, "pd"));
  };
  rs.mappings.push_back(std::move(conv));

  return rs;
}

std::vector<RewriteRule> RuleSet::mappings_for(const std::vector<std::string>& accels) const {
  std::vector<RewriteRule> out;
  for (const auto& m : mappings)
    if (std::find(accels.begin(), accels.end(), m.accel) != accels.end()) out.push_back(m);
  return out;
}

std::vector<RewriteRule> RuleSet::for_accels(const std::vector<std::string>& accels) const {
  std::vector<RewriteRule> out = generic;
  for (auto& m : mappings_for(accels)) out.push_back(std::move(m));
  return out;
}

const RewriteRule& RuleSet::find(std::string_view name) const {
  for (const auto* list : {&generic, &mappings})
    for (const auto& r : *list)
      if (r.name == name) return r;
  throw Error(ErrorCode::InvalidArgument, "no rule named '" + std::string(name) + "'");
}

double soundness_tolerance(const RewriteRule& rule) { return rule.name == "G8" ? 1e-6 : 1e-9; }

// ---------------------------------------------------------------------------

namespace {

void count_into(const ir::ExprPtr& e, OffloadCounts& out) {
  if (e->op == ir::OpKind::AccelCall) ++out[e->attrs.accel];
  for (const auto& a : e->args) count_into(a, out);
}

ir::ExprPtr with_args(const ir::ExprPtr& e, std::vector<ir::ExprPtr> args) {
  auto n = std::make_shared<ir::Node>(*e);
  n->args = std::move(args);
  return n;
}

}  // namespace

OffloadCounts count_offloads(const ir::ExprPtr& expr) {
  OffloadCounts out;
  count_into(expr, out);
  return out;
}

ir::ExprPtr exact_offload(const ir::ExprPtr& expr, const std::vector<RewriteRule>& mappings) {
  std::vector<const RewriteRule*> order;
  for (const auto& m : mappings) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [](const RewriteRule* a, const RewriteRule* b) {
    return eqsat::pattern_size(a->lhs) > eqsat::pattern_size(b->lhs);
  });

  auto walk = [&](auto&& self, const ir::ExprPtr& e) -> ir::ExprPtr {
    for (const auto* r : order) {
      if (auto out = eqsat::rewrite_at_root(e, *r)) {
        // The call's operands are the bound subterms; keep covering inside them.
        std::vector<ir::ExprPtr> args;
        for (const auto& a : out->args) args.push_back(self(self, a));
        return with_args(out, std::move(args));
      }
    }
    std::vector<ir::ExprPtr> args;
    for (const auto& a : e->args) args.push_back(self(self, a));
    return with_args(e, std::move(args));
  };
  return walk(walk, expr);
}

OffloadReport flexible_match(const ir::Program& program, const RuleSet& rules, const std::vector<std::string>& accels,
                             const eqsat::Limits& limits) {
  OffloadReport rep;
  rep.accels = accels;
  rep.before = ir::infer_shapes(program.body, program.env());
  rep.exact_program = exact_offload(rep.before, rules.mappings_for(accels));
  rep.exact = count_offloads(rep.exact_program);

  eqsat::EGraph g;
  const auto root = g.add_expr(rep.before);
  rep.saturation = eqsat::saturate(g, rules.for_accels(accels), limits);
  rep.flexible_program = eqsat::extract(g, root);
  rep.flexible = count_offloads(rep.flexible_program);
  return rep;
}

std::string offload_table(const std::vector<std::pair<std::string, OffloadReport>>& rows) {
  std::size_t name_w = 7;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "program" << "  " << std::setw(11) << "accelerator"
     << "  " << std::right << std::setw(5) << "exact" << "  " << std::setw(8) << "flexible" << '\n';
  for (const auto& [name, r] : rows) {
    for (const auto& a : r.accels) {
      auto get = [&](const OffloadCounts& c) {
        auto it = c.find(a);
        return it == c.end() ? std::size_t{0} : it->second;
      };
      os << std::left << std::setw(static_cast<int>(name_w)) << name << "  " << std::setw(11) << a << "  "
         << std::right << std::setw(5) << get(r.exact) << "  " << std::setw(8) << get(r.flexible) << '\n';
    }
  }
  return os.str();
}

}  // namespace accelbridge::rewrites
