#include "accelbridge/error.hpp"
#include "accelbridge/rewrites.hpp"
#include "rule_instances.hpp"

#include <doctest.h>

#include <random>

using namespace accelbridge;
using namespace accelbridge::rewrites;

namespace {

const std::vector<std::string> kBoth = {"FXLIN", "FXCNN"};

std::size_t count(const OffloadCounts& c, const std::string& accel) {
  auto it = c.find(accel);
  return it == c.end() ? 0 : it->second;
}

OffloadReport offload(const std::string& file, const std::vector<std::string>& accels) {
  return flexible_match(testing::load_corpus(file), builtin_rules(), accels);
}

std::size_t classes_with_calls(const std::string& file, const std::vector<std::string>& accels,
                               const std::string& accel) {
  const auto p = testing::load_corpus(file);
  eqsat::EGraph g;
  g.add_expr(p.body);
  eqsat::saturate(g, builtin_rules().for_accels(accels));
  std::size_t n = 0;
  for (auto c : g.class_ids())
    for (const auto& node : g.eclass(c).nodes)
      if (node.op == ir::OpKind::AccelCall && node.attrs.accel == accel) {
        ++n;
        break;
      }
  return n;
}

}  // namespace

TEST_CASE("the shipped rule library") {
  const RuleSet rs = builtin_rules();
  std::vector<std::string> generic, mappings;
  for (const auto& r : rs.generic) generic.push_back(r.name);
  for (const auto& r : rs.mappings) mappings.push_back(r.name);
  CHECK(generic == std::vector<std::string>{"G1", "G2", "G3", "G4", "G5", "G6", "G7"});
  CHECK(mappings == std::vector<std::string>{"M-LIN", "M-LINR", "M-CONV"});
  CHECK(rs.find("M-CONV").accel == "FXCNN");
  CHECK(rs.mappings_for({"FXLIN"}).size() == 2);
  CHECK(rs.for_accels({}).size() == 7);

  const RuleSet with_assoc = builtin_rules({true});
  CHECK(with_assoc.generic.size() == 8);
  CHECK(soundness_tolerance(with_assoc.find("G8")) == 1e-6);
  CHECK(soundness_tolerance(rs.find("G1")) == 1e-9);
}

TEST_CASE("property: every rule is sound on random guard-satisfying instances") {
  const RuleSet rs = builtin_rules({true});
  std::vector<eqsat::RewriteRule> all = rs.generic;
  all.insert(all.end(), rs.mappings.begin(), rs.mappings.end());
  for (const auto& rule : all) {
    const auto r = testing::check_soundness(rule, 50, 100);
    INFO(rule.name << " worst " << r.worst);
    CHECK(r.fired == r.instances);
    CHECK(r.worst <= soundness_tolerance(rule));
  }
}

TEST_CASE("guards reject what they must") {
  const RuleSet rs = builtin_rules();
  auto shaped = [](const char* text, std::map<std::string, Shape> env) {
    return ir::infer_shapes(ir::parse_expr(text), env);
  };
  // G2 only removes identity reshapes.
  CHECK(eqsat::rewrite_at_root(shaped("(reshape %x (shape 3 2))", {{"x", Shape{2, 3}}}), rs.find("G2")) == nullptr);
  // G3 needs the reshape to be the dense shape.
  CHECK(eqsat::rewrite_at_root(shaped("(add (reshape (dense %a %b) (shape 6)) %c)",
                                      {{"a", Shape{2, 4}}, {"b", Shape{3, 4}}, {"c", Shape{6}}}),
                               rs.find("G3")) == nullptr);
  // G4 is limited to batch 1.
  CHECK(eqsat::rewrite_at_root(shaped("(conv2d %d %w (stride 1 1) (pad 0 0))",
                                      {{"d", Shape{2, 1, 4, 4}}, {"w", Shape{1, 1, 3, 3}}}),
                               rs.find("G4")) == nullptr);
  // Capacity guards.
  CHECK(eqsat::rewrite_at_root(shaped("(bias_add (dense %a %b) %c)",
                                      {{"a", Shape{65, 2}}, {"b", Shape{2, 2}}, {"c", Shape{2}}}),
                               rs.find("M-LIN")) == nullptr);
  CHECK(eqsat::rewrite_at_root(shaped("(conv2d %d %w (stride 1 1) (pad 0 0))",
                                      {{"d", Shape{1, 17, 4, 4}}, {"w", Shape{1, 17, 3, 3}}}),
                               rs.find("M-CONV")) == nullptr);
}

TEST_CASE("G3 turns the reshaped spelling into the canonical one") {
  const auto p2 = testing::load_corpus("p2_reshaped.prog");
  const auto out = eqsat::rewrite_at_root(p2.body, builtin_rules().find("G3"));
  REQUIRE(out != nullptr);
  CHECK(ir::print_expr(out) == "(bias_add (dense %a %b) %c)");
}

TEST_CASE("corpus offload counts") {
  auto check = [](const char* file, const std::vector<std::string>& accels, const std::string& accel,
                  std::size_t exact, std::size_t flex) {
    const auto r = offload(file, accels);
    INFO(file << " " << accel << ": " << ir::print_expr(r.flexible_program));
    CHECK(count(r.exact, accel) == exact);
    CHECK(count(r.flexible, accel) == flex);
  };
  check("p1_linear.prog", {"FXLIN"}, "FXLIN", 1, 1);
  check("p2_reshaped.prog", {"FXLIN"}, "FXLIN", 0, 1);
  check("p3_fused.prog", {"FXLIN"}, "FXLIN", 0, 1);
  check("p4_conv.prog", {"FXLIN"}, "FXLIN", 0, 1);
  check("p5_mixed.prog", kBoth, "FXLIN", 2, 2);
  check("p5_mixed.prog", kBoth, "FXCNN", 1, 1);
  check("p6_none.prog", kBoth, "FXLIN", 0, 0);
  check("p6_none.prog", kBoth, "FXCNN", 0, 0);

  const auto none = offload("p5_mixed.prog", {});
  CHECK(none.exact.empty());
  CHECK(none.flexible.empty());
}

TEST_CASE("P3 bridges three IR operators into one call") {
  const auto r = offload("p3_fused.prog", {"FXLIN"});
  CHECK(ir::print_expr(r.flexible_program) == "(accel_call FXLIN linear_relu %a %b %c)");
}

TEST_CASE("P4 on FXLIN goes through im2col") {
  const auto r = offload("p4_conv.prog", {"FXLIN"});
  const std::string text = ir::print_expr(r.flexible_program);
  CHECK(text.find("im2col") != std::string::npos);
  CHECK(text.find("accel_call FXLIN linear") != std::string::npos);
  // With FXCNN enabled the direct conv mapping wins on cost.
  CHECK(count(offload("p4_conv.prog", kBoth).flexible, "FXCNN") == 1);
}

TEST_CASE("dominance: flexible never offloads less than exact") {
  for (const auto& f : testing::corpus_files()) {
    for (const auto& accels : {std::vector<std::string>{"FXLIN"}, std::vector<std::string>{"FXCNN"}, kBoth}) {
      const auto r = offload(f, accels);
      for (const auto& a : accels) {
        INFO(f << " " << a);
        CHECK(count(r.flexible, a) >= count(r.exact, a));
      }
    }
  }
}

TEST_CASE("enabling both accelerators keeps each one's candidates") {
  for (const std::string a : {"FXLIN", "FXCNN"})
    CHECK(classes_with_calls("p5_mixed.prog", kBoth, a) >= classes_with_calls("p5_mixed.prog", {a}, a));
}

TEST_CASE("count_offloads and exact_offload") {
  CHECK(count_offloads(ir::parse_expr("(relu (add %x %y))")).empty());
  CHECK(count_offloads(ir::parse_expr(
            "(accel_call FXLIN linear (accel_call FXCNN conv2d %d %w (stride 1 1) (pad 0 0)) %b %c)")) ==
        OffloadCounts{{"FXCNN", 1}, {"FXLIN", 1}});
  const auto rs = builtin_rules();
  const auto p3 = testing::load_corpus("p1_linear.prog");
  CHECK(ir::print_expr(exact_offload(p3.body, rs.mappings)) == "(accel_call FXLIN linear %a %b %c)");
}

TEST_CASE("offload table") {
  const auto r = offload("p2_reshaped.prog", {"FXLIN"});
  const std::string t = offload_table({{"p2_reshaped", r}});
  CHECK(t.find("program") == 0);
  CHECK(t.find("p2_reshaped  FXLIN            0         1") != std::string::npos);
}
