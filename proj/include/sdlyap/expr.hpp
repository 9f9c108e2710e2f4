#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdlyap {

// ============================================================================
// Errors
// ============================================================================

/// Syntax error produced while parsing an expression; carries the byte offset
/// of the offending token within the input string.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation error: unbound variable or a non-finite intermediate/result.
class EvalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when differentiating through a non-smooth construct (abs, sign,
/// min, max) with respect to a variable that appears underneath it.
class DifferentiationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Variables
// ============================================================================

/// A scalar variable reference: a bare identifier ("t", "s") or an indexed
/// one ("x[2]"). Indices are 1-based in source text and kept verbatim.
struct VarKey {
  std::string name;
  int index = -1;  // -1 means no index

  bool operator==(const VarKey& o) const { return name == o.name && index == o.index; }
  bool operator<(const VarKey& o) const {
    return name != o.name ? name < o.name : index < o.index;
  }
  std::string str() const {
    return index < 0 ? name : name + "[" + std::to_string(index) + "]";
  }
};

using Bindings = std::map<VarKey, double>;

// ============================================================================
// AST
// ============================================================================

enum class NodeKind : std::uint8_t { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };

enum class FuncId : std::uint8_t { Sin, Cos, Tanh, Exp, Log, Sqrt, Abs, Sign, Min, Max };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  NodeKind kind;
  double value = 0.0;  // Number payload; Pow exponent
  VarKey var;          // Variable payload
  FuncId func = FuncId::Sin;
  std::vector<ExprPtr> kids;
};

/// Immutable expression handle. Parse once, then evaluate/differentiate/
/// compile as needed; copies share the underlying tree.
class Expression {
 public:
  Expression() = default;
  explicit Expression(ExprPtr root) : root_(std::move(root)) {}

  /// Parses source text per the operator grammar (+ - * / ^, unary minus,
  /// function calls, indexed variables). Throws ParseError with byte offset.
  static Expression parse(const std::string& text);

  /// Convenience: expression that is a plain constant.
  static Expression constant(double v);

  bool empty() const { return root_ == nullptr; }
  const ExprPtr& root() const { return root_; }

  /// Renders the tree with minimal parentheses; parse(str()) rebuilds an
  /// identical tree.
  std::string str() const;

  /// Checked evaluation: throws EvalError on unbound variables and on
  /// non-finite results (domain errors such as sqrt(-1) or division by zero).
  double eval(const Bindings& env) const;

  /// Symbolic derivative with respect to `v`, with constant folding applied
  /// to the result. Throws DifferentiationError for abs/sign/min/max over `v`.
  Expression differentiate(const VarKey& v) const;

  /// Replaces variables by subtrees, leaving unmapped variables untouched.
  Expression substitute(const std::map<VarKey, Expression>& map) const;

  /// All variables referenced by the tree.
  std::set<VarKey> free_vars() const;

  bool depends_on(const VarKey& v) const { return free_vars().count(v) > 0; }

  /// Structural equality (same shape, same payloads).
  bool equals(const Expression& other) const;

 private:
  ExprPtr root_;
};

// ============================================================================
// Compilation to a flat stack program (hot-path evaluation)
// ============================================================================

/// Maps variable keys to dense slot indices for compiled evaluation.
class VarLayout {
 public:
  VarLayout() = default;
  explicit VarLayout(std::vector<VarKey> keys);

  /// Slot of `v`, or nullopt when absent.
  std::optional<std::uint16_t> slot(const VarKey& v) const;
  std::size_t size() const { return keys_.size(); }
  const std::vector<VarKey>& keys() const { return keys_; }

 private:
  std::vector<VarKey> keys_;
  std::map<VarKey, std::uint16_t> slots_;
};

/// Postfix program over a value stack. run() propagates IEEE non-finite
/// values without throwing; callers that need strict semantics check the
/// result (see Expression::eval for the checked path).
class Program {
 public:
  double run(const double* slots) const;
  std::size_t stack_need() const { return stack_need_; }

 private:
  friend Program compile(const Expression&, const VarLayout&);
  struct Op {
    NodeKind kind;       // Number/Variable/Negate/.../Call
    FuncId func;         // for Call
    std::uint16_t slot;  // for Variable
    std::uint8_t argc;   // for Call
    double value;        // Number payload / Pow exponent
  };
  std::vector<Op> ops_;
  std::size_t stack_need_ = 0;
};

/// Compiles against a layout; throws EvalError when the expression uses a
/// variable the layout does not provide.
Program compile(const Expression& e, const VarLayout& layout);

}  // namespace sdlyap
