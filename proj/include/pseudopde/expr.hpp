#pragma once

// Arithmetic expressions over (t, x1..xd, y, z), used to supply drivers f(t,x,y,z),
// terminal conditions g(x) and generator coefficients from configuration files.
//
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' factor)?
//   base   := number | ident | ident '(' expr (',' expr)? ')' | '(' expr ')' | '-' factor
// Precedence: ^ > unary - > *,/ > +,-.  '^' is right-associative.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pseudopde/error.hpp"

namespace pseudopde {

/// Raised on malformed expression text; carries the byte offset of the failure.
class ParseError : public InputError {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : InputError(message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Values bound to the free variables during evaluation.
struct EvalEnv {
  double t = 0.0;
  std::span<const double> x{};
  double y = 0.0;
  double z = 0.0;
};

enum class Func { Sin, Cos, Exp, Log, Sqrt, Abs, Tanh, Max, Min };

namespace detail {

struct FuncInfo {
  std::string_view name;
  Func func;
  int arity;
};

inline constexpr std::array<FuncInfo, 9> kFunctions{{{"sin", Func::Sin, 1},
                                                     {"cos", Func::Cos, 1},
                                                     {"exp", Func::Exp, 1},
                                                     {"log", Func::Log, 1},
                                                     {"sqrt", Func::Sqrt, 1},
                                                     {"abs", Func::Abs, 1},
                                                     {"tanh", Func::Tanh, 1},
                                                     {"max", Func::Max, 2},
                                                     {"min", Func::Min, 2}}};

inline const FuncInfo* find_function(std::string_view name) {
  for (const auto& info : kFunctions)
    if (info.name == name) return &info;
  return nullptr;
}

inline std::string_view function_name(Func f) {
  for (const auto& info : kFunctions)
    if (info.func == f) return info.name;
  return "?";
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Expression syntax tree node.
struct ExprNode {
  enum class Kind { Constant, Variable, Negate, Binary, Call };
  // Variable slots: 0 = t, 1 = y, 2 = z, 3 + k = x_{k+1}.
  static constexpr int kSlotT = 0;
  static constexpr int kSlotY = 1;
  static constexpr int kSlotZ = 2;
  static constexpr int kSlotX0 = 3;

  Kind kind = Kind::Constant;
  double value = 0.0;
  int slot = 0;
  char op = 0;
  Func func = Func::Sin;
  std::vector<std::shared_ptr<const ExprNode>> args;
};

/// Fully parenthesized rendering; parse(to_string(e)) reproduces the same tree.
inline std::string to_string(const ExprNode& n) {
  using K = ExprNode::Kind;
  switch (n.kind) {
    case K::Constant:
      return detail::format_number(n.value);
    case K::Variable:
      if (n.slot == ExprNode::kSlotT) return "t";
      if (n.slot == ExprNode::kSlotY) return "y";
      if (n.slot == ExprNode::kSlotZ) return "z";
      return "x" + std::to_string(n.slot - ExprNode::kSlotX0 + 1);
    case K::Negate:
      return "(-" + to_string(*n.args[0]) + ")";
    case K::Binary:
      return "(" + to_string(*n.args[0]) + " " + n.op + " " + to_string(*n.args[1]) + ")";
    case K::Call: {
      std::string s(detail::function_name(n.func));
      s += "(" + to_string(*n.args[0]);
      if (n.args.size() == 2) s += ", " + to_string(*n.args[1]);
      return s + ")";
    }
  }
  return {};
}

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, int dimension) : text_(text), dim_(dimension) {}

  std::shared_ptr<const ExprNode> parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    auto node = parse_expr();
    skip_ws();
    if (pos_ < text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return node;
  }

 private:
  using NodePtr = std::shared_ptr<const ExprNode>;

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      skip_ws();
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  static NodePtr binary(char op, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Binary;
    n->op = op;
    n->args = {std::move(lhs), std::move(rhs)};
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = binary('+', lhs, parse_term());
      } else if (accept('-')) {
        lhs = binary('-', lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_factor();
    for (;;) {
      if (accept('*')) {
        lhs = binary('*', lhs, parse_factor());
      } else if (accept('/')) {
        lhs = binary('/', lhs, parse_factor());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_factor() {
    NodePtr base = parse_base();
    if (accept('^')) return binary('^', base, parse_factor());
    return base;
  }

  NodePtr parse_base() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (c == '-') {
      ++pos_;
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Kind::Negate;
      n->args = {parse_factor()};
      return n;
    }
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t count = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      count += digits();
    }
    if (count == 0) throw ParseError("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent", pos_);
    }
    const std::string literal(text_.substr(start, pos_ - start));
    const double value = std::strtod(literal.c_str(), nullptr);
    if (!std::isfinite(value)) throw ParseError("number out of range", start);
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Constant;
    n->value = value;
    return n;
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);

    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      const FuncInfo* info = find_function(name);
      if (info == nullptr) throw ParseError("unknown function '" + std::string(name) + "'", start);
      ++pos_;
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Kind::Call;
      n->func = info->func;
      n->args.push_back(parse_expr());
      while (accept(',')) n->args.push_back(parse_expr());
      expect(')');
      if (static_cast<int>(n->args.size()) != info->arity)
        throw ParseError("function '" + std::string(name) + "' expects " + std::to_string(info->arity) +
                             " argument(s), got " + std::to_string(n->args.size()),
                         start);
      return n;
    }

    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Variable;
    if (name == "t") {
      n->slot = ExprNode::kSlotT;
    } else if (name == "y") {
      n->slot = ExprNode::kSlotY;
    } else if (name == "z") {
      n->slot = ExprNode::kSlotZ;
    } else if (name.size() >= 2 && name[0] == 'x' && name[1] != '0' &&
               name.find_first_not_of("0123456789", 1) == std::string_view::npos) {
      const int k = std::atoi(std::string(name.substr(1)).c_str());
      if (k < 1 || k > dim_)
        throw ParseError("variable '" + std::string(name) + "' exceeds dimension " + std::to_string(dim_),
                         start);
      n->slot = ExprNode::kSlotX0 + k - 1;
    } else if (find_function(name) != nullptr) {
      throw ParseError("function '" + std::string(name) + "' used without arguments", start);
    } else {
      throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }
    return n;
  }

  std::string_view text_;
  int dim_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Immutable parsed expression, compiled to a postfix program for evaluation.
/// Evaluation is reentrant.
class Expression {
 public:
  Expression() : Expression(constant(0.0)) {}

  static Expression parse(std::string_view text, int dimension) {
    if (dimension < 1) throw InputError("expression dimension must be >= 1");
    return Expression(detail::Parser(text, dimension).parse(), dimension);
  }

  static Expression constant(double value, int dimension = 1) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Constant;
    n->value = value;
    return Expression(n, dimension);
  }

  const ExprNode& root() const { return *root_; }
  int dimension() const { return dim_; }
  std::string to_string() const { return pseudopde::to_string(*root_); }

  bool uses_t() const { return uses_[ExprNode::kSlotT]; }
  bool uses_y() const { return uses_[ExprNode::kSlotY]; }
  bool uses_z() const { return uses_[ExprNode::kSlotZ]; }
  bool uses_x() const { return uses_x_; }
  bool is_constant() const { return !uses_t() && !uses_y() && !uses_z() && !uses_x(); }

  /// Evaluates under `env`. Division by zero, log/sqrt outside their domain and any
  /// non-finite intermediate raise DomainError naming the offending subexpression.
  double eval(const EvalEnv& env) const {
    if (depth_ <= kInlineStack) {
      std::array<double, kInlineStack> stack;
      return run(env, stack.data());
    }
    std::vector<double> stack(depth_);
    return run(env, stack.data());
  }

  double operator()(double t, std::span<const double> x, double y = 0.0, double z = 0.0) const {
    return eval(EvalEnv{t, x, y, z});
  }

 private:
  static constexpr std::size_t kInlineStack = 32;

  enum class Op : unsigned char { Push, Load, Neg, Add, Sub, Mul, Div, Pow, Call1, Call2 };
  struct Instr {
    Op op;
    Func func;
    int slot;
    double value;
    const ExprNode* node;
  };

  Expression(std::shared_ptr<const ExprNode> root, int dimension) : root_(std::move(root)), dim_(dimension) {
    uses_.assign(ExprNode::kSlotX0, false);
    std::size_t depth = 0;
    compile(*root_, depth);
  }

  void compile(const ExprNode& n, std::size_t& depth) {
    using K = ExprNode::Kind;
    auto push = [&](Instr ins, std::size_t pops) {
      program_.push_back(ins);
      depth = depth - pops + 1;
      depth_ = std::max(depth_, depth);
    };
    switch (n.kind) {
      case K::Constant:
        push({Op::Push, Func::Sin, 0, n.value, &n}, 0);
        break;
      case K::Variable:
        if (n.slot < ExprNode::kSlotX0)
          uses_[n.slot] = true;
        else
          uses_x_ = true;
        push({Op::Load, Func::Sin, n.slot, 0.0, &n}, 0);
        break;
      case K::Negate:
        compile(*n.args[0], depth);
        push({Op::Neg, Func::Sin, 0, 0.0, &n}, 1);
        break;
      case K::Binary: {
        compile(*n.args[0], depth);
        compile(*n.args[1], depth);
        Op op = Op::Add;
        switch (n.op) {
          case '+': op = Op::Add; break;
          case '-': op = Op::Sub; break;
          case '*': op = Op::Mul; break;
          case '/': op = Op::Div; break;
          default: op = Op::Pow; break;
        }
        push({op, Func::Sin, 0, 0.0, &n}, 2);
        break;
      }
      case K::Call:
        for (const auto& a : n.args) compile(*a, depth);
        if (n.args.size() == 1)
          push({Op::Call1, n.func, 0, 0.0, &n}, 1);
        else
          push({Op::Call2, n.func, 0, 0.0, &n}, 2);
        break;
    }
  }

  [[noreturn]] static void domain_error(const ExprNode* node, const char* what) {
    throw DomainError(std::string(what) + " in '" + pseudopde::to_string(*node) + "'");
  }

  double load(const EvalEnv& env, int slot, const ExprNode* node) const {
    switch (slot) {
      case ExprNode::kSlotT: return env.t;
      case ExprNode::kSlotY: return env.y;
      case ExprNode::kSlotZ: return env.z;
      default: {
        const auto k = static_cast<std::size_t>(slot - ExprNode::kSlotX0);
        if (k >= env.x.size())
          throw InputError("expression '" + pseudopde::to_string(*node) + "' needs x" + std::to_string(k + 1) +
                           " but the point has dimension " + std::to_string(env.x.size()));
        return env.x[k];
      }
    }
  }

  double run(const EvalEnv& env, double* stack) const {
    std::size_t sp = 0;
    for (const Instr& ins : program_) {
      switch (ins.op) {
        case Op::Push: stack[sp++] = ins.value; break;
        case Op::Load: stack[sp++] = load(env, ins.slot, ins.node); break;
        case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
        case Op::Add: --sp; stack[sp - 1] += stack[sp]; break;
        case Op::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
        case Op::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
        case Op::Div:
          --sp;
          if (stack[sp] == 0.0) domain_error(ins.node, "division by zero");
          stack[sp - 1] /= stack[sp];
          break;
        case Op::Pow: {
          --sp;
          const double b = stack[sp - 1], e = stack[sp];
          // x^2 is by far the most common power; keep it exact and cheap.
          const double r = (e == 2.0) ? b * b : std::pow(b, e);
          if (!std::isfinite(r)) domain_error(ins.node, "non-finite power");
          stack[sp - 1] = r;
          break;
        }
        case Op::Call1: {
          double& a = stack[sp - 1];
          switch (ins.func) {
            case Func::Sin: a = std::sin(a); break;
            case Func::Cos: a = std::cos(a); break;
            case Func::Exp:
              a = std::exp(a);
              if (!std::isfinite(a)) domain_error(ins.node, "exp overflow");
              break;
            case Func::Log:
              if (!(a > 0.0)) domain_error(ins.node, "log of non-positive value");
              a = std::log(a);
              break;
            case Func::Sqrt:
              if (a < 0.0) domain_error(ins.node, "sqrt of negative value");
              a = std::sqrt(a);
              break;
            case Func::Abs: a = std::fabs(a); break;
            case Func::Tanh: a = std::tanh(a); break;
            default: break;
          }
          break;
        }
        case Op::Call2:
          --sp;
          stack[sp - 1] = ins.func == Func::Max ? std::max(stack[sp - 1], stack[sp])
                                                : std::min(stack[sp - 1], stack[sp]);
          break;
      }
    }
    const double r = stack[0];
    if (!std::isfinite(r)) domain_error(root_.get(), "non-finite result");
    return r;
  }

  std::shared_ptr<const ExprNode> root_;
  int dim_ = 1;
  std::vector<Instr> program_;
  std::size_t depth_ = 0;
  std::vector<bool> uses_;
  bool uses_x_ = false;
};

}  // namespace pseudopde
