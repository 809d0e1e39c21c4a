#pragma once

// Shaped tensor IR with S-expression syntax, shape inference and a
// real-arithmetic reference evaluator (the host side of co-simulation).

#include "accelbridge/sexpr.hpp"
#include "accelbridge/shape.hpp"

#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace accelbridge::ir {

struct TensorValue {
  Shape shape;
  std::vector<double> data;  // row-major

  TensorValue() = default;
  TensorValue(Shape s, std::vector<double> d);
  static TensorValue zeros(Shape s);

  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const TensorValue&, const TensorValue&) = default;
};

enum class OpKind { Var, Lit, Dense, BiasAdd, Add, Reshape, Relu, Conv2d, Im2col, AccelCall };

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

struct IntPair {
  int64_t first = 0;
  int64_t second = 0;

  friend bool operator==(const IntPair&, const IntPair&) = default;
  friend auto operator<=>(const IntPair&, const IntPair&) = default;
};

/// Non-tensor operands. Only the fields relevant to the operator are meaningful;
/// the rest stay at their defaults so whole-struct comparison is sound.
struct OpAttrs {
  std::string name;                             // Var
  std::shared_ptr<const TensorValue> literal;   // Lit
  Shape target;                                 // Reshape
  IntPair kernel;                               // Im2col
  IntPair stride;                               // Conv2d, Im2col, conv-style AccelCall
  IntPair pad;                                  // Conv2d, Im2col, conv-style AccelCall
  std::string accel;                            // AccelCall
  std::string accel_op;                         // AccelCall
  bool conv_attrs = false;                      // AccelCall carries stride/pad

  friend bool operator==(const OpAttrs& a, const OpAttrs& b);
  friend std::strong_ordering operator<=>(const OpAttrs& a, const OpAttrs& b);
};

std::size_t hash_attrs(const OpAttrs& a);

struct SourcePos {
  int line = 0;
  int col = 0;
};

struct Node;
using ExprPtr = std::shared_ptr<const Node>;

struct Node {
  OpKind op = OpKind::Var;
  OpAttrs attrs;
  std::vector<ExprPtr> args;
  SourcePos pos;
  std::optional<Shape> shape;  // filled by infer_shapes
};

ExprPtr make_node(OpKind op, OpAttrs attrs, std::vector<ExprPtr> args, SourcePos pos = {});

// Builders.
ExprPtr var(std::string name);
ExprPtr lit(TensorValue value);
ExprPtr dense(ExprPtr data, ExprPtr weight);
ExprPtr bias_add(ExprPtr x, ExprPtr bias);
ExprPtr add(ExprPtr x, ExprPtr y);
ExprPtr reshape(ExprPtr x, Shape target);
ExprPtr relu(ExprPtr x);
ExprPtr conv2d(ExprPtr data, ExprPtr weight, IntPair stride, IntPair pad);
ExprPtr im2col(ExprPtr data, IntPair kernel, IntPair stride, IntPair pad);
ExprPtr accel_call(std::string accel, std::string op, std::vector<ExprPtr> args);
ExprPtr accel_call_conv(std::string accel, std::string op, std::vector<ExprPtr> args, IntPair stride, IntPair pad);

/// Equality ignoring source positions and shape annotations.
bool structurally_equal(const ExprPtr& a, const ExprPtr& b);

std::size_t count_nodes(const ExprPtr& e);

struct InputDecl {
  std::string name;
  Shape shape;
};

struct Program {
  std::vector<InputDecl> inputs;
  ExprPtr body;

  std::map<std::string, Shape> env() const;
};

/// Throws SourceError(SyntaxError | UnknownOperator).
Program parse_program(std::string_view text);
/// A bare expression, without an inputs header.
ExprPtr parse_expr(std::string_view text);
ExprPtr expr_from_sexpr(const SExpr& s);
Shape shape_from_sexpr(const SExpr& s);
IntPair pair_from_sexpr(const SExpr& s, std::string_view head);

std::string print_expr(const ExprPtr& e);
std::string print_program(const Program& p);
std::string format_number(double v);

/// Result shape of one operator given its argument shapes. Throws ShapeMismatch.
Shape infer_op_shape(OpKind op, const OpAttrs& attrs, std::span<const Shape> args);

/// Returns a copy of expr with every node annotated. Throws ShapeMismatch or
/// UnboundVariable.
ExprPtr infer_shapes(const ExprPtr& expr, const std::map<std::string, Shape>& env);

/// Real-arithmetic fragment an accel_call stands for, with the call's own
/// arguments as leaves. Throws UnknownOperator for unregistered ids.
ExprPtr accel_reference(const Node& call);

/// Whether (accel, op) names a registered accelerator operation.
bool is_registered_accel_op(std::string_view accel, std::string_view op);

using AccelHandler = std::function<TensorValue(const Node& call, const std::vector<TensorValue>& args)>;

/// Evaluates with double arithmetic. accel_call goes through `handler`, or
/// through its reference fragment when no handler is supplied.
TensorValue eval_ref(const ExprPtr& expr, const std::map<std::string, TensorValue>& env,
                     const AccelHandler& handler = nullptr);

/// Reference kernels, shared by the evaluator and by tests.
TensorValue eval_op(OpKind op, const OpAttrs& attrs, const std::vector<TensorValue>& args);

/// "shape: d0 d1 ..." then row-major values.
TensorValue parse_tensor(std::string_view text);
std::string print_tensor(const TensorValue& t);

}  // namespace accelbridge::ir
