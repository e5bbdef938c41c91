#include "confflow/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace confflow {

namespace {

enum class Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Tanh, Cosh, Log };

}  // namespace

struct Expression::Node {
  Kind kind;
  double value = 0.0;  // Const only
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Expression::Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->kind = Kind::Const;
  n->value = v;
  return n;
}

// ---- parser -----------------------------------------------------------

struct Parser {
  const std::string& s;
  size_t pos = 0;

  explicit Parser(const std::string& text) : s(text) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw config_error("expression parse error at column " + std::to_string(pos + 1) +
                       ": " + msg + " in \"" + s + "\"");
  }

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }

  bool consume(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+') {
        ++pos;
        lhs = make(Kind::Add, lhs, parse_term());
      } else if (c == '-') {
        ++pos;
        lhs = make(Kind::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      char c = peek();
      if (c == '*') {
        ++pos;
        lhs = make(Kind::Mul, lhs, parse_unary());
      } else if (c == '/') {
        ++pos;
        lhs = make(Kind::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (consume('-')) return make(Kind::Neg, parse_unary());
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (consume('^')) return make(Kind::Pow, base, parse_unary());
    return base;
  }

  NodePtr parse_atom() {
    char c = peek();
    if (c == '(') {
      ++pos;
      NodePtr e = parse_expr();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_name();
    if (c == '\0') fail("unexpected end of expression");
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr parse_number() {
    skip_ws();
    const char* begin = s.c_str() + pos;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos += size_t(end - begin);
    return make_const(v);
  }

  NodePtr parse_name() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
    std::string name = s.substr(start, pos - start);
    if (name == "x") return make(Kind::Var);
    Kind k;
    if (name == "sin") k = Kind::Sin;
    else if (name == "cos") k = Kind::Cos;
    else if (name == "exp") k = Kind::Exp;
    else if (name == "tanh") k = Kind::Tanh;
    else if (name == "cosh") k = Kind::Cosh;
    else if (name == "log") k = Kind::Log;
    else {
      pos = start;
      fail("unknown name \"" + name + "\"");
    }
    if (!consume('(')) fail("expected '(' after function name");
    NodePtr arg = parse_expr();
    if (!consume(')')) fail("expected ')'");
    return make(k, arg);
  }
};

// ---- evaluation -------------------------------------------------------

double eval_node(const Expression::Node& n, double x) {
  switch (n.kind) {
    case Kind::Const: return n.value;
    case Kind::Var: return x;
    case Kind::Add: return eval_node(*n.a, x) + eval_node(*n.b, x);
    case Kind::Sub: return eval_node(*n.a, x) - eval_node(*n.b, x);
    case Kind::Mul: return eval_node(*n.a, x) * eval_node(*n.b, x);
    case Kind::Div: return eval_node(*n.a, x) / eval_node(*n.b, x);
    case Kind::Pow: return std::pow(eval_node(*n.a, x), eval_node(*n.b, x));
    case Kind::Neg: return -eval_node(*n.a, x);
    case Kind::Sin: return std::sin(eval_node(*n.a, x));
    case Kind::Cos: return std::cos(eval_node(*n.a, x));
    case Kind::Exp: return std::exp(eval_node(*n.a, x));
    case Kind::Tanh: return std::tanh(eval_node(*n.a, x));
    case Kind::Cosh: return std::cosh(eval_node(*n.a, x));
    case Kind::Log: {
      double v = eval_node(*n.a, x);
      if (!(v > 0.0)) throw numerical_error("log of non-positive value");
      return std::log(v);
    }
  }
  throw numerical_error("corrupt expression tree");
}

// ---- differentiation --------------------------------------------------

bool is_const(const NodePtr& n, double v) {
  return n->kind == Kind::Const && n->value == v;
}

NodePtr simplify_add(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make(Kind::Add, a, b);
}

NodePtr simplify_mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  return make(Kind::Mul, a, b);
}

NodePtr diff(const NodePtr& n);

NodePtr chain(Kind outer, const NodePtr& arg, NodePtr outer_derivative) {
  (void)outer;
  return simplify_mul(std::move(outer_derivative), diff(arg));
}

NodePtr diff(const NodePtr& n) {
  switch (n->kind) {
    case Kind::Const: return make_const(0.0);
    case Kind::Var: return make_const(1.0);
    case Kind::Add: return simplify_add(diff(n->a), diff(n->b));
    case Kind::Sub: {
      NodePtr db = diff(n->b);
      if (is_const(db, 0.0)) return diff(n->a);
      return make(Kind::Sub, diff(n->a), db);
    }
    case Kind::Mul:
      return simplify_add(simplify_mul(diff(n->a), n->b), simplify_mul(n->a, diff(n->b)));
    case Kind::Div:
      // (a/b)' = a'/b - a*b'/b^2
      return make(Kind::Sub, make(Kind::Div, diff(n->a), n->b),
                  make(Kind::Div, simplify_mul(n->a, diff(n->b)),
                       make(Kind::Pow, n->b, make_const(2.0))));
    case Kind::Pow: {
      if (n->b->kind == Kind::Const) {
        // (a^c)' = c * a^(c-1) * a'
        double c = n->b->value;
        return simplify_mul(
            simplify_mul(make_const(c), make(Kind::Pow, n->a, make_const(c - 1.0))),
            diff(n->a));
      }
      // general: a^b = exp(b log a); (a^b)' = a^b (b' log a + b a'/a)
      NodePtr term1 = simplify_mul(diff(n->b), make(Kind::Log, n->a));
      NodePtr term2 = make(Kind::Div, simplify_mul(n->b, diff(n->a)), n->a);
      return simplify_mul(n, simplify_add(term1, term2));
    }
    case Kind::Neg: return make(Kind::Neg, diff(n->a));
    case Kind::Sin: return chain(n->kind, n->a, make(Kind::Cos, n->a));
    case Kind::Cos: return chain(n->kind, n->a, make(Kind::Neg, make(Kind::Sin, n->a)));
    case Kind::Exp: return chain(n->kind, n->a, make(Kind::Exp, n->a));
    case Kind::Tanh:
      // 1 - tanh^2
      return chain(n->kind, n->a,
                   make(Kind::Sub, make_const(1.0),
                        make(Kind::Pow, make(Kind::Tanh, n->a), make_const(2.0))));
    case Kind::Cosh:
      // sinh(a) = (exp(a) - exp(-a))/2
      return chain(n->kind, n->a,
                   make(Kind::Div,
                        make(Kind::Sub, make(Kind::Exp, n->a),
                             make(Kind::Exp, make(Kind::Neg, n->a))),
                        make_const(2.0)));
    case Kind::Log: return chain(n->kind, n->a, make(Kind::Div, make_const(1.0), n->a));
  }
  throw numerical_error("corrupt expression tree");
}

// ---- printing ---------------------------------------------------------

void print_node(const Expression::Node& n, std::ostream& os) {
  switch (n.kind) {
    case Kind::Const: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      if (n.value < 0.0) os << '(' << buf << ')';
      else os << buf;
      return;
    }
    case Kind::Var: os << 'x'; return;
    case Kind::Add: case Kind::Sub: case Kind::Mul: case Kind::Div: case Kind::Pow: {
      const char* op = n.kind == Kind::Add ? "+" : n.kind == Kind::Sub ? "-"
                       : n.kind == Kind::Mul ? "*" : n.kind == Kind::Div ? "/" : "^";
      os << '(';
      print_node(*n.a, os);
      os << op;
      print_node(*n.b, os);
      os << ')';
      return;
    }
    case Kind::Neg:
      os << "(-";
      print_node(*n.a, os);
      os << ')';
      return;
    default: {
      const char* name = n.kind == Kind::Sin ? "sin" : n.kind == Kind::Cos ? "cos"
                         : n.kind == Kind::Exp ? "exp" : n.kind == Kind::Tanh ? "tanh"
                         : n.kind == Kind::Cosh ? "cosh" : "log";
      os << name << '(';
      print_node(*n.a, os);
      os << ')';
      return;
    }
  }
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  Parser p(text);
  NodePtr root = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return Expression(std::move(root));
}

Expression Expression::constant(double v) { return Expression(make_const(v)); }

double Expression::eval(double x) const {
  if (!root_) throw numerical_error("empty expression");
  double v = eval_node(*root_, x);
  if (!std::isfinite(v))
    throw numerical_error("expression evaluated to a non-finite value at x=" +
                          std::to_string(x));
  return v;
}

Expression Expression::derivative() const {
  if (!root_) throw numerical_error("empty expression");
  return Expression(diff(root_));
}

std::string Expression::to_string() const {
  if (!root_) return "";
  std::ostringstream os;
  print_node(*root_, os);
  return os.str();
}

}  // namespace confflow
