#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "confflow/expression.hpp"

using confflow::Expression;

TEST_CASE("arithmetic basics") {
  CHECK(Expression::parse("2^3 + 1").eval(0.7) == doctest::Approx(9.0));
  CHECK(Expression::parse("tanh(x)").eval(0.0) == doctest::Approx(0.0));
  CHECK(Expression::parse("1 + 2*3").eval(0.0) == doctest::Approx(7.0));
  CHECK(Expression::parse("(1+2)*3").eval(0.0) == doctest::Approx(9.0));
  CHECK(Expression::parse("-x^2").eval(3.0) == doctest::Approx(-9.0));
  CHECK(Expression::parse("2^-2").eval(0.0) == doctest::Approx(0.25));
  CHECK(Expression::parse("2^3^2").eval(0.0) == doctest::Approx(512.0));
  CHECK(Expression::parse("1e-3 + 1").eval(0.0) == doctest::Approx(1.001));
  CHECK(Expression::parse("cosh(x) - exp(x)/2 - exp(-x)/2").eval(0.8) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("parse errors carry a position") {
  CHECK_THROWS_AS(Expression::parse("2 +"), confflow::config_error);
  CHECK_THROWS_AS(Expression::parse("sin 3"), confflow::config_error);
  CHECK_THROWS_AS(Expression::parse("foo(x)"), confflow::config_error);
  CHECK_THROWS_AS(Expression::parse("1 + (2"), confflow::config_error);
  CHECK_THROWS_AS(Expression::parse("1 2"), confflow::config_error);
  try {
    Expression::parse("1 + @");
    FAIL("expected parse error");
  } catch (const confflow::config_error& e) {
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("domain errors surface as evaluation errors") {
  Expression e = Expression::parse("log(x)");
  CHECK_THROWS_AS(e.eval(-1.0), confflow::numerical_error);
  CHECK(e.eval(1.0) == doctest::Approx(0.0));
}

namespace {

// Independent random-tree generator with its own evaluation, used as the
// reference semantics for parser + evaluator.
struct RefNode {
  int kind;  // 0 const, 1 x, 2..6 binary +,-,*,/,^ , 7 neg, 8..13 functions
  double value = 0.0;
  std::vector<RefNode> kids;

  double eval(double x) const {
    switch (kind) {
      case 0: return value;
      case 1: return x;
      case 2: return kids[0].eval(x) + kids[1].eval(x);
      case 3: return kids[0].eval(x) - kids[1].eval(x);
      case 4: return kids[0].eval(x) * kids[1].eval(x);
      case 5: return kids[0].eval(x) / kids[1].eval(x);
      case 6: return std::pow(kids[0].eval(x), kids[1].eval(x));
      case 7: return -kids[0].eval(x);
      case 8: return std::sin(kids[0].eval(x));
      case 9: return std::cos(kids[0].eval(x));
      case 10: return std::exp(kids[0].eval(x));
      case 11: return std::tanh(kids[0].eval(x));
      case 12: return std::cosh(kids[0].eval(x));
      default: return std::log(kids[0].eval(x));
    }
  }

  std::string print() const {
    char buf[40];
    switch (kind) {
      case 0:
        std::snprintf(buf, sizeof buf, "%.17g", value);
        return value < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
      case 1: return "x";
      case 2: return "(" + kids[0].print() + "+" + kids[1].print() + ")";
      case 3: return "(" + kids[0].print() + "-" + kids[1].print() + ")";
      case 4: return "(" + kids[0].print() + "*" + kids[1].print() + ")";
      case 5: return "(" + kids[0].print() + "/" + kids[1].print() + ")";
      case 6: return "(" + kids[0].print() + "^" + kids[1].print() + ")";
      case 7: return "(-" + kids[0].print() + ")";
      case 8: return "sin(" + kids[0].print() + ")";
      case 9: return "cos(" + kids[0].print() + ")";
      case 10: return "exp(" + kids[0].print() + ")";
      case 11: return "tanh(" + kids[0].print() + ")";
      case 12: return "cosh(" + kids[0].print() + ")";
      default: return "log(" + kids[0].print() + ")";
    }
  }
};

RefNode random_tree(confflow::SplitMix64& rng, int depth) {
  RefNode n;
  if (depth == 0 || rng.uniform() < 0.3) {
    if (rng.uniform() < 0.5) {
      n.kind = 0;
      n.value = rng.uniform(-3.0, 3.0);
    } else {
      n.kind = 1;
    }
    return n;
  }
  double r = rng.uniform();
  if (r < 0.55) {
    n.kind = 2 + int(rng.next() % 4);  // skip ^: unconstrained bases overflow
    n.kids.push_back(random_tree(rng, depth - 1));
    n.kids.push_back(random_tree(rng, depth - 1));
  } else {
    n.kind = 7 + int(rng.next() % 5);  // neg..cosh (log excluded: domain)
    n.kids.push_back(random_tree(rng, depth - 1));
  }
  return n;
}

}  // namespace

TEST_CASE("random trees agree with the reference evaluator") {
  confflow::SplitMix64 rng(20240811);
  int checked = 0;
  for (int t = 0; t < 300; ++t) {
    RefNode tree = random_tree(rng, 4);
    Expression e = Expression::parse(tree.print());
    for (int k = 0; k < 5; ++k) {
      double x = rng.uniform(-2.0, 2.0);
      double want = tree.eval(x);
      if (!std::isfinite(want) || std::abs(want) > 1e12) continue;
      double got = e.eval(x);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked > 800);
}

TEST_CASE("symbolic derivatives match finite differences") {
  confflow::SplitMix64 rng(77);
  const char* exprs[] = {"exp(x)",
                         "x^3 - 2*x + 1",
                         "sin(2*x)*cos(x)",
                         "tanh(x/2)",
                         "cosh(x)^2",
                         "exp(-x^2/4)",
                         "x^x",
                         "log(1 + x^2)",
                         "1/(1+x)"};
  for (const char* s : exprs) {
    Expression e = Expression::parse(s);
    Expression de = e.derivative();
    for (int k = 0; k < 8; ++k) {
      double x = rng.uniform(0.1, 1.5);
      double h = 1e-6;
      double fd = (e.eval(x + h) - e.eval(x - h)) / (2 * h);
      CHECK(de.eval(x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("printed trees re-parse to the same values") {
  Expression e = Expression::parse("exp(x) * (1 - x^2/4) + sin(x)");
  Expression r = Expression::parse(e.to_string());
  for (double x : {0.0, 0.3, 1.1})
    CHECK(e.eval(x) == doctest::Approx(r.eval(x)).epsilon(1e-15));
}
