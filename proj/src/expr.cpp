#include "sdlyap/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

namespace sdlyap {

namespace {

ExprPtr make_number(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Number;
  n->value = v;
  return n;
}

ExprPtr make_var(VarKey v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Variable;
  n->var = std::move(v);
  return n;
}

ExprPtr make_node(NodeKind k, std::vector<ExprPtr> kids, double value = 0.0) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->value = value;
  n->kids = std::move(kids);
  return n;
}

ExprPtr make_call(FuncId f, std::vector<ExprPtr> args) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Call;
  n->func = f;
  n->kids = std::move(args);
  return n;
}

struct FuncInfo {
  const char* name;
  FuncId id;
  int arity;
};

constexpr std::array<FuncInfo, 10> kFuncs = {{
    {"sin", FuncId::Sin, 1},
    {"cos", FuncId::Cos, 1},
    {"tanh", FuncId::Tanh, 1},
    {"exp", FuncId::Exp, 1},
    {"log", FuncId::Log, 1},
    {"sqrt", FuncId::Sqrt, 1},
    {"abs", FuncId::Abs, 1},
    {"sign", FuncId::Sign, 1},
    {"min", FuncId::Min, 2},
    {"max", FuncId::Max, 2},
}};

const FuncInfo* find_func(const std::string& name) {
  for (const auto& f : kFuncs)
    if (name == f.name) return &f;
  return nullptr;
}

double apply_func(FuncId f, const double* a, std::size_t) {
  switch (f) {
    case FuncId::Sin: return std::sin(a[0]);
    case FuncId::Cos: return std::cos(a[0]);
    case FuncId::Tanh: return std::tanh(a[0]);
    case FuncId::Exp: return std::exp(a[0]);
    case FuncId::Log: return std::log(a[0]);
    case FuncId::Sqrt: return std::sqrt(a[0]);
    case FuncId::Abs: return std::fabs(a[0]);
    case FuncId::Sign: return a[0] > 0 ? 1.0 : (a[0] < 0 ? -1.0 : 0.0);
    case FuncId::Min: return std::fmin(a[0], a[1]);
    case FuncId::Max: return std::fmax(a[0], a[1]);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Parser: recursive descent.
//   expr   := term {("+"|"-") term}
//   term   := factor {("*"|"/") factor}
//   factor := ["-"] base ["^" signed-number]      (so -x^2 == -(x^2))
//   base   := number | var | func "(" expr {"," expr} ")" | "(" expr ")"
//   var    := ident ["[" integer "]"]
// ---------------------------------------------------------------------------
class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  ExprPtr parse() {
    ExprPtr e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  bool consume(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_term();
    while (true) {
      char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      ExprPtr rhs = parse_term();
      lhs = make_node(c == '+' ? NodeKind::Add : NodeKind::Sub, {lhs, rhs});
    }
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_factor();
    while (true) {
      char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      ExprPtr rhs = parse_factor();
      lhs = make_node(c == '*' ? NodeKind::Mul : NodeKind::Div, {lhs, rhs});
    }
  }

  ExprPtr parse_factor() {
    bool neg = consume('-');
    ExprPtr e = parse_base();
    if (peek() == '^') {
      ++pos_;
      double expo = parse_number_literal();
      e = make_node(NodeKind::Pow, {e}, expo);
    }
    return neg ? make_node(NodeKind::Negate, {e}) : e;
  }

  double parse_number_literal() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    bool any = false;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
      ++pos_;
      any = true;
    }
    if (any && pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // 'e' was not an exponent
      }
    }
    if (!any) {
      pos_ = start;
      fail("expected a numeric literal");
    }
    double v = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed numeric literal");
    }
    return v;
  }

  ExprPtr parse_base() {
    char c = peek();
    if (c == '(') {
      ++pos_;
      ExprPtr e = parse_expr();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return make_number(parse_number_literal());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string ident = text_.substr(start, pos_ - start);
      if (peek() == '(') {
        const FuncInfo* fi = find_func(ident);
        if (!fi) {
          pos_ = start;
          fail("unknown function '" + ident + "'");
        }
        ++pos_;  // '('
        std::vector<ExprPtr> args;
        args.push_back(parse_expr());
        while (consume(',')) args.push_back(parse_expr());
        if (!consume(')')) fail("expected ')'");
        if (static_cast<int>(args.size()) != fi->arity) {
          pos_ = start;
          fail(std::string(fi->name) + " expects " + std::to_string(fi->arity) + " argument(s)");
        }
        return make_call(fi->id, std::move(args));
      }
      VarKey v{ident, -1};
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        std::size_t istart = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (istart == pos_) fail("expected an integer index");
        v.index = std::stoi(text_.substr(istart, pos_ - istart));
        if (v.index < 1) {
          pos_ = istart;
          fail("variable indices are 1-based");
        }
        if (!consume(']')) fail("expected ']'");
      }
      return make_var(std::move(v));
    }
    fail(c == '\0' ? "unexpected end of input" : std::string("unexpected character '") + c + "'");
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// Precedence levels used for minimal-parenthesis printing.
int precedence(const ExprNode& n) {
  switch (n.kind) {
    case NodeKind::Add:
    case NodeKind::Sub: return 1;
    case NodeKind::Mul:
    case NodeKind::Div: return 2;
    case NodeKind::Negate: return 3;
    case NodeKind::Pow: return 4;
    case NodeKind::Number: return n.value < 0 ? 3 : 5;  // "-2" binds like a negate
    default: return 5;
  }
}

void print_node(const ExprNode& n, std::string& out, int min_prec) {
  int prec = precedence(n);
  bool parens = prec < min_prec;
  if (parens) out += '(';
  switch (n.kind) {
    case NodeKind::Number: out += format_double(n.value); break;
    case NodeKind::Variable: out += n.var.str(); break;
    case NodeKind::Negate:
      out += '-';
      print_node(*n.kids[0], out, 4);  // inner negate/sum must parenthesize
      break;
    case NodeKind::Add:
      print_node(*n.kids[0], out, 1);
      out += " + ";
      print_node(*n.kids[1], out, 2);
      break;
    case NodeKind::Sub:
      print_node(*n.kids[0], out, 1);
      out += " - ";
      print_node(*n.kids[1], out, 2);
      break;
    case NodeKind::Mul:
      print_node(*n.kids[0], out, 2);
      out += "*";
      print_node(*n.kids[1], out, 3);
      break;
    case NodeKind::Div:
      print_node(*n.kids[0], out, 2);
      out += "/";
      print_node(*n.kids[1], out, 3);
      break;
    case NodeKind::Pow:
      print_node(*n.kids[0], out, 5);
      out += '^';
      out += format_double(n.value);
      break;
    case NodeKind::Call: {
      for (const auto& f : kFuncs)
        if (f.id == n.func) {
          out += f.name;
          break;
        }
      out += '(';
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        if (i) out += ", ";
        print_node(*n.kids[i], out, 0);
      }
      out += ')';
      break;
    }
  }
  if (parens) out += ')';
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double eval_node(const ExprNode& n, const Bindings& env) {
  switch (n.kind) {
    case NodeKind::Number: return n.value;
    case NodeKind::Variable: {
      auto it = env.find(n.var);
      if (it == env.end()) throw EvalError("unbound variable '" + n.var.str() + "'");
      return it->second;
    }
    case NodeKind::Negate: return -eval_node(*n.kids[0], env);
    case NodeKind::Add: return eval_node(*n.kids[0], env) + eval_node(*n.kids[1], env);
    case NodeKind::Sub: return eval_node(*n.kids[0], env) - eval_node(*n.kids[1], env);
    case NodeKind::Mul: return eval_node(*n.kids[0], env) * eval_node(*n.kids[1], env);
    case NodeKind::Div: return eval_node(*n.kids[0], env) / eval_node(*n.kids[1], env);
    case NodeKind::Pow: return std::pow(eval_node(*n.kids[0], env), n.value);
    case NodeKind::Call: {
      double args[2] = {0, 0};
      for (std::size_t i = 0; i < n.kids.size(); ++i) args[i] = eval_node(*n.kids[i], env);
      return apply_func(n.func, args, n.kids.size());
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Constant folding / light cleanup (used on derivative output)
// ---------------------------------------------------------------------------

bool is_const(const ExprPtr& e, double v) {
  return e->kind == NodeKind::Number && e->value == v;
}

ExprPtr fold(const ExprPtr& e) {
  if (e->kind == NodeKind::Number || e->kind == NodeKind::Variable) return e;
  std::vector<ExprPtr> kids;
  kids.reserve(e->kids.size());
  bool all_num = true;
  for (const auto& k : e->kids) {
    kids.push_back(fold(k));
    all_num = all_num && kids.back()->kind == NodeKind::Number;
  }
  if (all_num) {
    Bindings empty;
    ExprNode tmp = *e;
    tmp.kids = kids;
    double v = eval_node(tmp, empty);
    if (std::isfinite(v)) return make_number(v);
  }
  switch (e->kind) {
    case NodeKind::Negate:
      if (kids[0]->kind == NodeKind::Negate) return kids[0]->kids[0];
      break;
    case NodeKind::Add:
      if (is_const(kids[0], 0)) return kids[1];
      if (is_const(kids[1], 0)) return kids[0];
      break;
    case NodeKind::Sub:
      if (is_const(kids[1], 0)) return kids[0];
      if (is_const(kids[0], 0)) return fold(make_node(NodeKind::Negate, {kids[1]}));
      break;
    case NodeKind::Mul:
      if (is_const(kids[0], 0) || is_const(kids[1], 0)) return make_number(0.0);
      if (is_const(kids[0], 1)) return kids[1];
      if (is_const(kids[1], 1)) return kids[0];
      break;
    case NodeKind::Div:
      if (is_const(kids[0], 0)) return make_number(0.0);
      if (is_const(kids[1], 1)) return kids[0];
      break;
    case NodeKind::Pow:
      if (e->value == 1.0) return kids[0];
      if (e->value == 0.0) return make_number(1.0);
      break;
    default: break;
  }
  if (e->kind == NodeKind::Call) return make_call(e->func, std::move(kids));
  return make_node(e->kind, std::move(kids), e->value);
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

bool node_depends_on(const ExprNode& n, const VarKey& v) {
  if (n.kind == NodeKind::Variable) return n.var == v;
  for (const auto& k : n.kids)
    if (node_depends_on(*k, v)) return true;
  return false;
}

ExprPtr diff_node(const ExprPtr& e, const VarKey& v) {
  if (!node_depends_on(*e, v)) return make_number(0.0);
  switch (e->kind) {
    case NodeKind::Number: return make_number(0.0);
    case NodeKind::Variable: return make_number(e->var == v ? 1.0 : 0.0);
    case NodeKind::Negate: return make_node(NodeKind::Negate, {diff_node(e->kids[0], v)});
    case NodeKind::Add:
      return make_node(NodeKind::Add, {diff_node(e->kids[0], v), diff_node(e->kids[1], v)});
    case NodeKind::Sub:
      return make_node(NodeKind::Sub, {diff_node(e->kids[0], v), diff_node(e->kids[1], v)});
    case NodeKind::Mul: {
      ExprPtr a = e->kids[0], b = e->kids[1];
      return make_node(NodeKind::Add,
                       {make_node(NodeKind::Mul, {diff_node(a, v), b}),
                        make_node(NodeKind::Mul, {a, diff_node(b, v)})});
    }
    case NodeKind::Div: {
      ExprPtr a = e->kids[0], b = e->kids[1];
      ExprPtr num = make_node(NodeKind::Sub,
                              {make_node(NodeKind::Mul, {diff_node(a, v), b}),
                               make_node(NodeKind::Mul, {a, diff_node(b, v)})});
      return make_node(NodeKind::Div, {num, make_node(NodeKind::Pow, {b}, 2.0)});
    }
    case NodeKind::Pow: {
      // d(u^p) = p * u^(p-1) * u'
      ExprPtr u = e->kids[0];
      ExprPtr du = diff_node(u, v);
      ExprPtr up = make_node(NodeKind::Pow, {u}, e->value - 1.0);
      return make_node(NodeKind::Mul, {make_number(e->value), make_node(NodeKind::Mul, {up, du})});
    }
    case NodeKind::Call: {
      ExprPtr u = e->kids[0];
      switch (e->func) {
        case FuncId::Sin:
          return make_node(NodeKind::Mul, {make_call(FuncId::Cos, {u}), diff_node(u, v)});
        case FuncId::Cos:
          return make_node(NodeKind::Negate,
                           {make_node(NodeKind::Mul, {make_call(FuncId::Sin, {u}), diff_node(u, v)})});
        case FuncId::Tanh: {
          ExprPtr t = make_call(FuncId::Tanh, {u});
          ExprPtr one_minus = make_node(NodeKind::Sub,
                                        {make_number(1.0), make_node(NodeKind::Pow, {t}, 2.0)});
          return make_node(NodeKind::Mul, {one_minus, diff_node(u, v)});
        }
        case FuncId::Exp:
          return make_node(NodeKind::Mul, {make_call(FuncId::Exp, {u}), diff_node(u, v)});
        case FuncId::Log: return make_node(NodeKind::Div, {diff_node(u, v), u});
        case FuncId::Sqrt: {
          ExprPtr denom = make_node(NodeKind::Mul, {make_number(2.0), make_call(FuncId::Sqrt, {u})});
          return make_node(NodeKind::Div, {diff_node(u, v), denom});
        }
        case FuncId::Abs:
        case FuncId::Sign:
        case FuncId::Min:
        case FuncId::Max:
          throw DifferentiationError(
              "cannot differentiate through a non-smooth function with respect to '" + v.str() + "'");
      }
      break;
    }
  }
  throw DifferentiationError("unsupported node");
}

void collect_vars(const ExprNode& n, std::set<VarKey>& out) {
  if (n.kind == NodeKind::Variable) out.insert(n.var);
  for (const auto& k : n.kids) collect_vars(*k, out);
}

bool nodes_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind || a.kids.size() != b.kids.size()) return false;
  switch (a.kind) {
    case NodeKind::Number:
    case NodeKind::Pow:
      if (a.value != b.value) return false;
      break;
    case NodeKind::Variable:
      if (!(a.var == b.var)) return false;
      break;
    case NodeKind::Call:
      if (a.func != b.func) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!nodes_equal(*a.kids[i], *b.kids[i])) return false;
  return true;
}

ExprPtr substitute_node(const ExprPtr& e, const std::map<VarKey, Expression>& map) {
  if (e->kind == NodeKind::Variable) {
    auto it = map.find(e->var);
    return it != map.end() && !it->second.empty() ? it->second.root() : e;
  }
  if (e->kids.empty()) return e;
  std::vector<ExprPtr> kids;
  kids.reserve(e->kids.size());
  bool changed = false;
  for (const auto& k : e->kids) {
    kids.push_back(substitute_node(k, map));
    changed = changed || kids.back() != k;
  }
  if (!changed) return e;
  if (e->kind == NodeKind::Call) return make_call(e->func, std::move(kids));
  return make_node(e->kind, std::move(kids), e->value);
}

}  // namespace

// ============================================================================
// Expression methods
// ============================================================================

Expression Expression::parse(const std::string& text) {
  Parser p(text);
  return Expression(p.parse());
}

Expression Expression::constant(double v) { return Expression(make_number(v)); }

std::string Expression::str() const {
  if (!root_) return "";
  std::string out;
  print_node(*root_, out, 0);
  return out;
}

double Expression::eval(const Bindings& env) const {
  if (!root_) throw EvalError("empty expression");
  double v = eval_node(*root_, env);
  if (!std::isfinite(v)) throw EvalError("non-finite result for '" + str() + "'");
  return v;
}

Expression Expression::differentiate(const VarKey& v) const {
  if (!root_) throw DifferentiationError("empty expression");
  return Expression(fold(diff_node(root_, v)));
}

Expression Expression::substitute(const std::map<VarKey, Expression>& map) const {
  if (!root_) return *this;
  return Expression(substitute_node(root_, map));
}

std::set<VarKey> Expression::free_vars() const {
  std::set<VarKey> out;
  if (root_) collect_vars(*root_, out);
  return out;
}

bool Expression::equals(const Expression& other) const {
  if (!root_ || !other.root_) return root_ == other.root_;
  return nodes_equal(*root_, *other.root_);
}

// ============================================================================
// Compilation
// ============================================================================

VarLayout::VarLayout(std::vector<VarKey> keys) : keys_(std::move(keys)) {
  for (std::size_t i = 0; i < keys_.size(); ++i)
    slots_[keys_[i]] = static_cast<std::uint16_t>(i);
}

std::optional<std::uint16_t> VarLayout::slot(const VarKey& v) const {
  auto it = slots_.find(v);
  if (it == slots_.end()) return std::nullopt;
  return it->second;
}

Program compile(const Expression& e, const VarLayout& layout) {
  if (e.empty()) throw EvalError("cannot compile an empty expression");
  // Local class: shares compile()'s friend access to Program::Op.
  struct Emitter {
    const VarLayout& layout;
    std::vector<Program::Op>& ops;
    std::size_t depth = 0, max_depth = 0;

    void emit(const ExprNode& n) {
      switch (n.kind) {
        case NodeKind::Number:
          ops.push_back({NodeKind::Number, FuncId::Sin, 0, 0, n.value});
          max_depth = std::max(max_depth, ++depth);
          return;
        case NodeKind::Variable: {
          auto s = layout.slot(n.var);
          if (!s) throw EvalError("variable '" + n.var.str() + "' is not part of the layout");
          ops.push_back({NodeKind::Variable, FuncId::Sin, *s, 0, 0.0});
          max_depth = std::max(max_depth, ++depth);
          return;
        }
        case NodeKind::Negate:
          emit(*n.kids[0]);
          ops.push_back({NodeKind::Negate, FuncId::Sin, 0, 0, 0.0});
          return;
        case NodeKind::Pow:
          emit(*n.kids[0]);
          ops.push_back({NodeKind::Pow, FuncId::Sin, 0, 0, n.value});
          return;
        case NodeKind::Call:
          for (const auto& k : n.kids) emit(*k);
          ops.push_back({NodeKind::Call, n.func, 0, static_cast<std::uint8_t>(n.kids.size()), 0.0});
          depth -= n.kids.size() - 1;
          return;
        default:
          emit(*n.kids[0]);
          emit(*n.kids[1]);
          ops.push_back({n.kind, FuncId::Sin, 0, 0, 0.0});
          --depth;
          return;
      }
    }
  };
  Program p;
  Emitter em{layout, p.ops_};
  em.emit(*e.root());
  p.stack_need_ = em.max_depth;
  return p;
}

double Program::run(const double* slots) const {
  if (ops_.empty()) return 0.0;
  double stack[64];
  std::vector<double> heap;
  double* st = stack;
  if (stack_need_ > 64) {
    heap.resize(stack_need_);
    st = heap.data();
  }
  std::size_t sp = 0;
  for (const Op& op : ops_) {
    switch (op.kind) {
      case NodeKind::Number: st[sp++] = op.value; break;
      case NodeKind::Variable: st[sp++] = slots[op.slot]; break;
      case NodeKind::Negate: st[sp - 1] = -st[sp - 1]; break;
      case NodeKind::Add: --sp; st[sp - 1] += st[sp]; break;
      case NodeKind::Sub: --sp; st[sp - 1] -= st[sp]; break;
      case NodeKind::Mul: --sp; st[sp - 1] *= st[sp]; break;
      case NodeKind::Div: --sp; st[sp - 1] /= st[sp]; break;
      case NodeKind::Pow: st[sp - 1] = std::pow(st[sp - 1], op.value); break;
      case NodeKind::Call: {
        sp -= op.argc;
        st[sp] = apply_func(op.func, st + sp, op.argc);
        ++sp;
        break;
      }
    }
  }
  return st[0];
}

}  // namespace sdlyap
