#pragma once

// Instruction-level accelerator models: sorted bitvector/memory expressions,
// architectural state, and instructions made of a decode predicate plus
// simultaneous state updates.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace accelbridge::ila {

struct Sort {
  enum class Kind { Boolean, BitVector, Memory };

  Kind kind = Kind::Boolean;
  unsigned width = 0;       // BitVector
  unsigned addr_width = 0;  // Memory
  unsigned data_width = 0;  // Memory

  static Sort boolean() { return {Kind::Boolean, 0, 0, 0}; }
  static Sort bv(unsigned width);
  static Sort mem(unsigned addr_width, unsigned data_width);

  bool is_bool() const noexcept { return kind == Kind::Boolean; }
  bool is_bv() const noexcept { return kind == Kind::BitVector; }
  bool is_mem() const noexcept { return kind == Kind::Memory; }

  std::string str() const;

  friend bool operator==(const Sort&, const Sort&) = default;
};

inline constexpr unsigned kMaxWidth = 64;

// Names of the command inputs every MMIO-driven model declares.
inline constexpr const char* kCmdWrite = "cmd_write";  // bool: true for a store
inline constexpr const char* kCmdAddr = "cmd_addr";    // bv32
inline constexpr const char* kCmdData = "cmd_data";    // bv32

inline uint64_t width_mask(unsigned width) {
  return width >= 64 ? ~uint64_t{0} : ((uint64_t{1} << width) - 1);
}

struct BitVec {
  unsigned width = 1;
  uint64_t bits = 0;  // always masked to width

  BitVec() = default;
  BitVec(unsigned w, uint64_t v) : width(w), bits(v & width_mask(w)) {}

  friend bool operator==(const BitVec&, const BitVec&) = default;
};

/// Total memory with all-zero default. Stored sparsely as shared, copy-on-write
/// pages so a store costs one page copy rather than a copy of the whole memory.
class MemValue {
 public:
  MemValue() = default;
  MemValue(unsigned addr_width, unsigned data_width);

  unsigned addr_width() const noexcept { return addr_width_; }
  unsigned data_width() const noexcept { return data_width_; }

  uint64_t load(uint64_t addr) const;
  MemValue store(uint64_t addr, uint64_t data) const;

  /// Number of words holding a nonzero value.
  std::size_t nonzero_words() const;

  /// Visits every nonzero word in ascending address order.
  void for_each_nonzero(const std::function<void(uint64_t addr, uint64_t data)>& fn) const;

  /// Functional equality: same sort and same value at every address.
  friend bool operator==(const MemValue& a, const MemValue& b);

 private:
  static constexpr unsigned kPageBits = 7;
  static constexpr uint64_t kPageWords = uint64_t{1} << kPageBits;
  using Page = std::array<uint64_t, kPageWords>;

  unsigned addr_width_ = 1;
  unsigned data_width_ = 1;
  // Sorted by page index.
  std::vector<std::pair<uint64_t, std::shared_ptr<const Page>>> pages_;
};

using Value = std::variant<bool, BitVec, MemValue>;

Sort sort_of(const Value& v);
std::string to_string(const Value& v);

/// Name -> value binding for state variables or for inputs.
using Valuation = std::map<std::string, Value, std::less<>>;
using SortContext = std::map<std::string, Sort, std::less<>>;

enum class Op {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  And,
  Or,
  Xor,
  Not,
  Eq,
  Ult,
  Slt,
  Shl,
  Lshr,
  Extract,
  Concat,
  Zext,
  Sext,
  Ite,
  MemSelect,
  MemStore,
  SelectBit,
};

enum class VarKind { State, Input };

class Expr;

struct ExprNode {
  Op op = Op::Const;
  std::vector<Expr> args;
  Value constant;            // Const
  std::string name;          // Var
  VarKind var_kind = VarKind::State;
  unsigned hi = 0;           // Extract hi, SelectBit index, Zext/Sext target width
  unsigned lo = 0;           // Extract lo
};

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  const ExprNode& node() const { return *node_; }
  Op op() const { return node_->op; }
  const std::vector<Expr>& args() const { return node_->args; }
  bool valid() const noexcept { return node_ != nullptr; }

 private:
  std::shared_ptr<const ExprNode> node_;
};

// Constructors for the closed expression language.
Expr bv_const(unsigned width, uint64_t value);
Expr bool_const(bool value);
Expr mem_const(unsigned addr_width, unsigned data_width);
Expr state_var(std::string name);
Expr input_var(std::string name);
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr bit_and(Expr a, Expr b);
Expr bit_or(Expr a, Expr b);
Expr bit_xor(Expr a, Expr b);
Expr bit_not(Expr a);
Expr eq(Expr a, Expr b);
Expr ult(Expr a, Expr b);
Expr slt(Expr a, Expr b);
Expr shl(Expr a, Expr b);
Expr lshr(Expr a, Expr b);
Expr extract(Expr a, unsigned hi, unsigned lo);
Expr concat(Expr hi_part, Expr lo_part);
Expr zext(Expr a, unsigned width);
Expr sext(Expr a, unsigned width);
Expr ite(Expr cond, Expr then_e, Expr else_e);
Expr mem_select(Expr mem, Expr addr);
Expr mem_store(Expr mem, Expr addr, Expr data);
Expr select_bit(Expr a, unsigned index);

// Derived forms.
Expr uge(Expr a, Expr b);                                   // not(ult(a, b))
Expr in_range(Expr a, uint64_t lo, uint64_t hi_exclusive);  // lo <= a < hi

Sort typecheck_expr(const Expr& expr, const SortContext& ctx);

Value eval_expr(const Expr& expr, const Valuation& state, const Valuation& inputs);

std::string print_expr(const Expr& expr);

struct StateVar {
  std::string name;
  Sort sort;
  std::optional<Value> reset_value;
};

struct InputDecl {
  std::string name;
  Sort sort;
};

struct Update {
  std::string target;
  Expr rhs;
};

/// A coarse update computed natively rather than as an expression tree. Reads
/// the pre-state and the command inputs; returns one value per target.
struct MacroUpdate {
  std::vector<std::string> targets;
  std::function<std::vector<Value>(const Valuation& state, const Valuation& inputs)> compute;
  std::string description;
};

struct Instruction {
  std::string name;
  Expr decode;
  std::vector<Update> updates;
  std::optional<MacroUpdate> macro;
  std::string semantics_note;

  /// Every state name written by this instruction, updates first.
  std::vector<std::string> targets() const;
};

struct IlaModel {
  std::string name;
  std::vector<InputDecl> inputs;
  std::vector<StateVar> states;
  std::vector<Instruction> instructions;
  std::map<uint64_t, Expr> read_map;

  const StateVar* find_state(std::string_view name) const;
  const InputDecl* find_input(std::string_view name) const;
  const Instruction* find_instruction(std::string_view name) const;

  /// Sorts of every input and state name.
  SortContext context() const;

  /// Reset values where declared, the all-zero value of each sort otherwise.
  Valuation initial_state() const;
};

Value zero_value(const Sort& sort);

enum class FindingKind {
  TypeError,
  DuplicateName,
  UnknownStateTarget,
  DecodeOverlap,
  ReadMapCollision,
};

std::string_view to_string(FindingKind kind);

struct Finding {
  FindingKind kind;
  std::string message;
};

struct Report {
  std::vector<Finding> findings;

  bool ok() const noexcept { return findings.empty(); }
  std::size_t count(FindingKind kind) const;
  std::string str() const;
};

struct WellformedOptions {
  std::size_t samples = 10000;
  uint64_t seed = 0;
};

/// Never throws; every problem is a finding.
Report check_wellformed(const IlaModel& model, const WellformedOptions& options = {});

/// Human-readable listing: inputs, states, instruction decodes and updates.
std::string print_model(const IlaModel& model);

}  // namespace accelbridge::ila
