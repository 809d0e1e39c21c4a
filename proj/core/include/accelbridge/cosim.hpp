#pragma once

// Co-simulation: host reference evaluation with accel_call nodes replayed on
// the ILA simulators, plus the per-operator and application-level metrics.

#include "accelbridge/accelerators.hpp"
#include "accelbridge/codegen.hpp"
#include "accelbridge/eqsat.hpp"
#include "accelbridge/tensor_ir.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace accelbridge::cosim {

using Env = std::map<std::string, ir::TensorValue>;

struct CallResult {
  codegen::IlaFragment fragment;
  codegen::MmioTrace trace;  // read data filled in
  ir::TensorValue output;
};

/// lower_call -> emit_mmio -> strict replay -> dequantized readback.
CallResult simulate_call(const ir::OpAttrs& call, const std::vector<ir::TensorValue>& args,
                         const accel::AcceleratorDef& def);

struct Placement {
  ir::ExprPtr program;  // accel_call nodes mark offloads
  std::map<std::string, accel::AcceleratorDef> accels;
};

/// Builds the enabled accelerators with one numerics configuration.
std::map<std::string, accel::AcceleratorDef> make_accels(const std::vector<std::string>& ids,
                                                         const fx::AccelNumerics& numerics);

struct RangeRecord {
  std::size_t call_id = 0;
  std::string accel;
  std::string op;
  double in_min = 0, in_max = 0;
  double out_min = 0, out_max = 0;

  /// "call 0 FXCNN conv2d in [-1, 1] out [0, 3.5]"
  std::string str() const;
};

struct CosimResult {
  ir::TensorValue output;
  std::vector<RangeRecord> ranges;  // one per executed accel_call
  std::vector<CallResult> calls;
};

/// Throws InvalidArgument when a call names an accelerator that is not enabled.
CosimResult run_cosim(const Placement& placement, const Env& env);

/// ||ref - acc||_F / ||ref||_F. Zero reference: 0 if acc is zero too, else +inf.
double rel_error(const ir::TensorValue& ref, const ir::TensorValue& acc);

struct ValidationStats {
  std::string mapping;
  double avg_rel_err = 0;
  double std_dev = 0;
  std::size_t n_samples = 0;
  std::size_t infinite = 0;  // zero-norm references with nonzero output; excluded from avg/std
  std::vector<double> errors;

  /// "mapping=M-LIN avg=0.0084 std=0.0021 n=100"
  std::string key_values() const;
};

/// Table of "mapping  avg err %  std dev %" rows.
std::string validation_table(const std::vector<ValidationStats>& rows);

struct ValidationOptions {
  std::size_t samples = 100;
  uint64_t seed = 0;
  double lo = -1.0;  // elementwise uniform input range
  double hi = 1.0;
  std::optional<std::pair<double, double>> weight_range;  // overrides lo/hi for weights
  bool pre_quantize = false;  // snap inputs onto the accelerator's grid first
};

/// Fixed operand shapes per mapping: M-LIN/M-LINR a[4,16] w[8,16] b[8];
/// M-CONV d[1,2,6,6] w[4,2,3,3].
ValidationStats validate_mapping(const eqsat::RewriteRule& rule, const accel::AcceleratorDef& def,
                                 const ValidationOptions& options = {});

/// Options for the adversarial conv fixture: weights uniform in [-3.5, 3.5].
ValidationOptions adversarial_conv_options();

// ---------------------------------------------------------------------------
// Synthetic classification workload

struct Dataset {
  std::vector<ir::TensorValue> inputs;  // [1,1,6,6]
  std::vector<int> labels;              // 0..3
};

inline constexpr const char* kClassifierInput = "x";

/// 200 samples, 50 per class, uniform noise of +-0.05.
Dataset synthetic_dataset(uint64_t seed = 0);

/// conv (4 templates covering the whole image) -> relu -> linear.
ir::Program classifier_program();

/// The constructed weights: wide-range conv templates, identity linear layer.
Env classifier_params();

struct AccuracyResult {
  double accuracy = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<RangeRecord> ranges;
};

/// Argmax accuracy. A program without accel_call nodes runs on the host.
AccuracyResult accuracy_eval(const Placement& placement, const Env& params, const Dataset& data);

}  // namespace accelbridge::cosim
