#pragma once

// Lowering of accel_call nodes to ILA instruction sequences and their MMIO
// command traces, one command per instruction.

#include "accelbridge/accelerators.hpp"
#include "accelbridge/ila_sim.hpp"
#include "accelbridge/tensor_ir.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace accelbridge::codegen {

enum class Phase { DataIn, Configure, Trigger, ReadOut };
std::string_view to_string(Phase p);

struct FragmentEntry {
  Phase phase = Phase::DataIn;
  std::string instruction;  // empty for read-out entries, which are answered by the read map
  sim::Command command;
};

struct IlaFragment {
  std::string accel;
  std::string op;
  Shape out_shape;
  std::vector<FragmentEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
};

/// Quantizes the operands with the accelerator's numerics and emits data-in,
/// configure, trigger and read-out entries. Throws CapacityExceeded or
/// ShapeMismatch.
IlaFragment lower_call(const ir::OpAttrs& call, const std::vector<ir::TensorValue>& args,
                       const accel::AcceleratorDef& def);

struct TraceLine {
  sim::Command command;
  std::optional<uint32_t> expected;  // read data, once known
};

struct MmioTrace {
  std::vector<TraceLine> lines;

  std::vector<sim::Command> commands() const;
  std::size_t size() const noexcept { return lines.size(); }
};

MmioTrace emit_mmio(const IlaFragment& frag);

/// "W 0x00000010 0x00030202" and "R 0x00030000 -> 0x00000180" (or "-> ?").
std::string print_trace(const MmioTrace& trace);

/// Accepts '#' comments and trailing whitespace. Throws TraceSyntaxError.
MmioTrace parse_trace(std::string_view text);

struct Replay {
  MmioTrace trace;  // read lines filled with the simulated data
  sim::RunResult run;
};

/// Strict replay from the model's initial state.
Replay replay(const MmioTrace& trace, const accel::AcceleratorDef& def);

/// Dequantized output tensor from the read lines of a replayed trace.
ir::TensorValue readback(const MmioTrace& trace, const Shape& out_shape, const accel::AcceleratorDef& def);

}  // namespace accelbridge::codegen
