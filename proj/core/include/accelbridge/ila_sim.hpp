#pragma once

// Instruction-level simulator driven directly by an IlaModel. Commands are
// 32-bit MMIO reads and writes; writes trigger instructions, reads are answered
// through the model's read_map.

#include "accelbridge/ila.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace accelbridge::sim {

struct Command {
  enum class Kind { Write, Read };

  Kind kind = Kind::Write;
  uint32_t addr = 0;
  uint32_t data = 0;  // writes only

  static Command write(uint32_t addr, uint32_t data) { return {Kind::Write, addr, data}; }
  static Command read(uint32_t addr) { return {Kind::Read, addr, 0}; }

  friend bool operator==(const Command&, const Command&) = default;
};

/// Command as the model's input valuation (cmd_write, cmd_addr, cmd_data).
ila::Valuation command_inputs(const Command& cmd);

using MachineState = ila::Valuation;

enum class UnmappedPolicy { Strict, Permissive };

struct StepRecord {
  Command command;
  std::optional<std::string> instruction;  // none for reads and skipped writes
  std::optional<uint32_t> read_data;       // reads only
  std::vector<std::string> changed;        // state names whose value changed
  bool skipped = false;                    // unmapped write under the permissive policy
};

struct StepLog {
  std::vector<StepRecord> records;

  /// One line per record, for debugging.
  std::string str() const;
};

/// Name of the single instruction whose decode holds, or none.
/// Throws DecodeOverlap when more than one decodes.
std::optional<std::string> decode(const ila::IlaModel& model, const MachineState& state, const Command& cmd);

struct StepResult {
  MachineState state;
  StepRecord record;
};

/// All update right-hand sides see the pre-state; writes land simultaneously.
StepResult step(const ila::IlaModel& model, const MachineState& state, const Command& cmd,
                UnmappedPolicy policy = UnmappedPolicy::Strict);

struct RunResult {
  MachineState state;
  StepLog log;
};

/// Left fold of step. On error the exception carries no partial state; use
/// run_partial to inspect the log up to the failing command.
RunResult run(const ila::IlaModel& model, MachineState init, const std::vector<Command>& trace,
              UnmappedPolicy policy = UnmappedPolicy::Strict);

struct PartialRun {
  RunResult result;
  std::optional<std::string> error;  // message of the first failing command
};

PartialRun run_partial(const ila::IlaModel& model, MachineState init, const std::vector<Command>& trace,
                       UnmappedPolicy policy = UnmappedPolicy::Strict);

/// Pure read through read_map. Throws UnmappedRead.
uint32_t mmio_read(const ila::IlaModel& model, const MachineState& state, uint32_t addr);

/// Order-independent digest of a machine state (used to check read purity).
uint64_t state_hash(const MachineState& state);

}  // namespace accelbridge::sim
