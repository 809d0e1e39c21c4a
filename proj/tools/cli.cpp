#include "cli.hpp"

#include "accelbridge/accelerators.hpp"
#include "accelbridge/codegen.hpp"
#include "accelbridge/cosim.hpp"
#include "accelbridge/error.hpp"
#include "accelbridge/rewrites.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace accelbridge::cli {

namespace {

struct Config {
  std::string program;
  std::vector<std::string> accels = accel::accelerator_ids();
  std::string numerics = "v2";
  std::string mode = "flex";
  std::string out_dir;
  uint64_t seed = 0;
  std::vector<std::string> inputs;  // name=path

  // validate
  std::string mapping;
  std::size_t samples = 100;
  bool adversarial = false;
  bool pre_quantize = false;

  // accuracy
  std::string ranges_path;
};

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {
    if (const char* v = std::getenv("ACCELBRIDGE_LOG")) {
      std::string s(v);
      if (s == "debug" || s == "2") level_ = 2;
      else if (s == "info" || s == "1") level_ = 1;
    }
  }
  void info(const std::string& msg) const {
    if (level_ >= 1) err_ << "[info] " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ >= 2) err_ << "[debug] " << msg << '\n';
  }

 private:
  std::ostream& err_;
  int level_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

ir::Program load_program(const std::string& path) {
  ir::Program p = ir::parse_program(read_file(path));
  p.body = ir::infer_shapes(p.body, p.env());
  return p;
}

/// Explicit --input tensors; every other declared input is drawn uniformly
/// from [-1, 1] in declaration order from the seed.
cosim::Env load_env(const ir::Program& p, const Config& cfg) {
  std::map<std::string, std::string> paths;
  for (const auto& spec : cfg.inputs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::InvalidArgument, "--input expects name=path");
    paths[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  cosim::Env env;
  for (const auto& d : p.inputs) {
    if (auto it = paths.find(d.name); it != paths.end()) {
      ir::TensorValue t = ir::parse_tensor(read_file(it->second));
      if (t.shape != d.shape)
        throw Error(ErrorCode::ShapeMismatch, "input " + d.name + " has shape " + t.shape.str() + ", declared " +
                                                  d.shape.str());
      env.emplace(d.name, std::move(t));
      paths.erase(it);
    } else {
      std::vector<double> data(static_cast<std::size_t>(d.shape.elements()));
      for (auto& v : data) v = dist(rng);
      env.emplace(d.name, ir::TensorValue(d.shape, std::move(data)));
    }
  }
  if (!paths.empty()) throw Error(ErrorCode::UnboundVariable, "no declared input named '" + paths.begin()->first + "'");
  return env;
}

void check_accels(const std::vector<std::string>& accels) {
  const auto known = accel::accelerator_ids();
  for (const auto& a : accels)
    if (std::find(known.begin(), known.end(), a) == known.end())
      throw Error(ErrorCode::InvalidArgument, "unknown accelerator '" + a + "'");
}

fs::path out_dir(const Config& cfg) { return cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir); }

// ---------------------------------------------------------------------------

int cmd_check(const Config& cfg, std::ostream& out) {
  ir::Program p = load_program(cfg.program);
  out << cfg.program << ": ok, result shape " << p.body->shape->str() << ", " << ir::count_nodes(p.body)
      << " nodes\n";
  return 0;
}

int cmd_offload(const Config& cfg, std::ostream& out, const Log& log) {
  check_accels(cfg.accels);
  if (cfg.mode != "exact" && cfg.mode != "flex")
    throw Error(ErrorCode::InvalidArgument, "--mode must be exact or flex");
  ir::Program p = load_program(cfg.program);
  const auto rules = rewrites::builtin_rules();
  auto report = rewrites::flexible_match(p, rules, cfg.accels);
  log.info("saturation " + report.saturation.str());
  for (const auto& [rule, n] : report.saturation.rule_applications)
    log.debug("rule " + rule + " applied " + std::to_string(n) + " times");

  const std::string stem = fs::path(cfg.program).stem().string();
  out << rewrites::offload_table({{stem, report}});
  if (cfg.accels.empty()) out << "no accelerators enabled; every offload count is 0\n";
  out << "saturation: " << report.saturation.str() << '\n';
  if (report.saturation.stop_reason != eqsat::StopReason::Fixpoint)
    out << "warning: saturation stopped at a resource limit; counts are from a partial e-graph\n";

  ir::Program rewritten = p;
  rewritten.body = cfg.mode == "exact" ? report.exact_program : report.flexible_program;
  const fs::path dest = out_dir(cfg) / (stem + ".offloaded.prog");
  write_atomic(dest, ir::print_program(rewritten));
  out << "wrote " << dest.string() << '\n';
  return 0;
}

int cmd_codegen(const Config& cfg, std::ostream& out, const Log& log) {
  check_accels(cfg.accels);
  ir::Program p = load_program(cfg.program);
  const auto env = load_env(p, cfg);
  cosim::Placement pl{p.body, cosim::make_accels(cfg.accels, fx::AccelNumerics::parse(cfg.numerics))};
  auto res = cosim::run_cosim(pl, env);
  for (std::size_t i = 0; i < res.calls.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "call_%03zu.trace", i);
    const fs::path dest = out_dir(cfg) / name;
    write_atomic(dest, codegen::print_trace(res.calls[i].trace));
    const auto& f = res.calls[i].fragment;
    out << dest.string() << ": " << f.accel << ' ' << f.op << ", " << f.size() << " commands\n";
    log.debug(res.ranges[i].str());
  }
  if (res.calls.empty()) out << "no accel_call nodes; nothing to emit\n";
  return 0;
}

int cmd_cosim(const Config& cfg, std::ostream& out) {
  check_accels(cfg.accels);
  ir::Program p = load_program(cfg.program);
  const auto env = load_env(p, cfg);
  cosim::Placement pl{p.body, cosim::make_accels(cfg.accels, fx::AccelNumerics::parse(cfg.numerics))};
  auto res = cosim::run_cosim(pl, env);
  const ir::TensorValue ref = ir::eval_ref(p.body, env);
  const double err = cosim::rel_error(ref, res.output);

  out << "numerics: " << pl.accels.begin()->second.numerics.str() << '\n';
  out << "offloaded calls: " << res.calls.size() << '\n';
  for (const auto& r : res.ranges) out << r.str() << '\n';
  out << "output:\n" << ir::print_tensor(res.output);
  out << std::setprecision(6) << "rel_error=" << err << '\n';
  if (!cfg.out_dir.empty()) {
    write_atomic(out_dir(cfg) / "output.tensor", ir::print_tensor(res.output));
    std::ostringstream ranges;
    for (const auto& r : res.ranges) ranges << r.str() << '\n';
    write_atomic(out_dir(cfg) / "ranges.log", ranges.str());
  }
  return 0;
}

int cmd_validate(const Config& cfg, std::ostream& out) {
  const auto rules = rewrites::builtin_rules();
  const auto& rule = rules.find(cfg.mapping);
  if (rule.kind != eqsat::RewriteRule::Kind::Mapping)
    throw Error(ErrorCode::InvalidArgument, "'" + cfg.mapping + "' is not a mapping rule");
  const auto def = accel::build_accelerator(rule.accel, fx::AccelNumerics::parse(cfg.numerics));
  cosim::ValidationOptions opt = cfg.adversarial ? cosim::adversarial_conv_options() : cosim::ValidationOptions{};
  opt.samples = cfg.samples;
  opt.seed = cfg.seed;
  opt.pre_quantize = cfg.pre_quantize || cfg.numerics == "exact";
  auto st = cosim::validate_mapping(rule, def, opt);
  out << "numerics: " << def.numerics.str() << '\n';
  out << cosim::validation_table({st});
  out << st.key_values() << '\n';
  return 0;
}

int cmd_accuracy(const Config& cfg, std::ostream& out) {
  const auto num = fx::AccelNumerics::parse(cfg.numerics);
  const ir::Program prog = cosim::classifier_program();
  const auto params = cosim::classifier_params();
  const auto data = cosim::synthetic_dataset(cfg.seed);

  const auto host = cosim::accuracy_eval({prog.body, {}}, params, data);
  const auto report = rewrites::flexible_match(prog, rewrites::builtin_rules(), {std::string(accel::kFxcnn)});
  const auto acc =
      cosim::accuracy_eval({report.flexible_program, cosim::make_accels({std::string(accel::kFxcnn)}, num)}, params, data);

  out << std::left << std::setw(28) << "placement" << std::right << std::setw(10) << "accuracy" << '\n';
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(28) << "host reference" << std::right << std::setw(9) << 100 * host.accuracy << "%\n";
  out << std::left << std::setw(28) << ("FXCNN " + cfg.numerics) << std::right << std::setw(9) << 100 * acc.accuracy
      << "%\n";
  out << std::defaultfloat << std::setprecision(6) << "reference=" << host.accuracy << " accuracy=" << acc.accuracy
      << " samples=" << acc.total << '\n';

  std::ostringstream ranges;
  for (const auto& r : acc.ranges) ranges << r.str() << '\n';
  if (!cfg.ranges_path.empty()) write_atomic(cfg.ranges_path, ranges.str());
  else if (!cfg.out_dir.empty()) write_atomic(out_dir(cfg) / "ranges.log", ranges.str());
  return 0;
}

int cmd_addrmap(const Config& cfg, std::ostream& out) {
  check_accels(cfg.accels);
  const auto num = fx::AccelNumerics::parse(cfg.numerics);
  for (const auto& id : cfg.accels) out << accel::address_map_markdown(accel::build_accelerator(id, num)) << '\n';
  return 0;
}

bool internal(ErrorCode c) {
  switch (c) {
    case ErrorCode::AnalysisConflict:
    case ErrorCode::Unextractable:
    case ErrorCode::DecodeOverlap:
    case ErrorCode::SortMismatch: return true;
    default: return false;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config cfg;
  CLI::App app{"accelbridge: flexible accelerator offload, MMIO code generation and co-simulation"};
  app.name("accelbridge");
  app.require_subcommand(1);

  auto add_accels = [&](CLI::App* c) {
    c->add_option("--accels", cfg.accels, "Enabled accelerators (FXLIN, FXCNN)")->delimiter(',');
  };
  auto add_numerics = [&](CLI::App* c) {
    c->add_option("--numerics", cfg.numerics, "v1, v2, exact or fx<w,f>,fx<w,f>,fx<w,f>")->capture_default_str();
  };
  auto add_out = [&](CLI::App* c) { c->add_option("--out", cfg.out_dir, "Output directory"); };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", cfg.seed, "Random seed")->capture_default_str(); };
  auto add_inputs = [&](CLI::App* c) {
    c->add_option("--input", cfg.inputs, "Input tensor as name=path (others are random from the seed)");
  };

  auto* check = app.add_subcommand("check", "Parse and shape-check a program");
  check->add_option("program", cfg.program)->required();

  auto* offload = app.add_subcommand("offload", "Exact and flexible offload counts; writes the rewritten program");
  offload->add_option("program", cfg.program)->required();
  add_accels(offload);
  offload->add_option("--mode", cfg.mode, "Program to write: exact or flex")->capture_default_str();
  add_out(offload);

  auto* codegen_cmd = app.add_subcommand("codegen", "Emit one MMIO trace per accel_call");
  codegen_cmd->add_option("program", cfg.program)->required();
  add_accels(codegen_cmd);
  add_numerics(codegen_cmd);
  add_inputs(codegen_cmd);
  add_seed(codegen_cmd);
  add_out(codegen_cmd);

  auto* cosim_cmd = app.add_subcommand("cosim", "Co-simulate and compare against the host reference");
  cosim_cmd->add_option("program", cfg.program)->required();
  add_accels(cosim_cmd);
  add_numerics(cosim_cmd);
  add_inputs(cosim_cmd);
  add_seed(cosim_cmd);
  add_out(cosim_cmd);

  auto* validate = app.add_subcommand("validate", "Per-mapping error statistics over random inputs");
  validate->add_option("mapping", cfg.mapping, "M-LIN, M-LINR or M-CONV")->required();
  validate->add_option("--samples", cfg.samples)->capture_default_str();
  add_numerics(validate);
  add_seed(validate);
  validate->add_flag("--adversarial", cfg.adversarial, "Draw weights from [-3.5, 3.5]");
  validate->add_flag("--pre-quantize", cfg.pre_quantize, "Snap inputs onto the accelerator grid (implied by exact)");

  auto* accuracy = app.add_subcommand("accuracy", "Classifier accuracy with the conv offloaded to FXCNN");
  add_numerics(accuracy);
  add_seed(accuracy);
  add_out(accuracy);
  accuracy->add_option("--ranges", cfg.ranges_path, "Write the per-call range log here");

  auto* addrmap = app.add_subcommand("addrmap", "Print the accelerator address maps as markdown");
  add_accels(addrmap);
  add_numerics(addrmap);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  // "--accels ''" enables nothing.
  std::erase(cfg.accels, std::string());

  const Log log(err);
  try {
    if (*check) return cmd_check(cfg, out);
    if (*offload) return cmd_offload(cfg, out, log);
    if (*codegen_cmd) return cmd_codegen(cfg, out, log);
    if (*cosim_cmd) return cmd_cosim(cfg, out);
    if (*validate) return cmd_validate(cfg, out);
    if (*accuracy) return cmd_accuracy(cfg, out);
    if (*addrmap) return cmd_addrmap(cfg, out);
  } catch (const SourceError& e) {
    err << "error: " << (cfg.program.empty() ? "" : cfg.program + ": ") << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return internal(e.code()) ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: Io: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace accelbridge::cli
