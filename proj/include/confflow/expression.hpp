#pragma once

#include <memory>
#include <string>

#include "confflow/common.hpp"

namespace confflow {

// Tiny arithmetic expressions in one variable x.
//
// Grammar: literals (with optional exponent), x, + - * / ^, unary minus,
// sin cos exp tanh cosh log, parentheses. '^' is right-associative and binds
// tighter than unary minus, so -x^2 == -(x^2).
//
// Expressions are immutable; derivative() returns a new tree built from the
// same node kinds (d/dx cosh is expressed as (exp(x)-exp(-x))/2, general
// powers via exp/log), so the grammar stays closed under differentiation.
class Expression {
 public:
  Expression() = default;

  // Throws config_error with a column position on malformed input.
  static Expression parse(const std::string& text);
  static Expression constant(double v);

  bool empty() const { return !root_; }

  // Throws numerical_error on domain errors (log of a non-positive value,
  // non-finite result).
  double eval(double x) const;

  Expression derivative() const;

  // Parseable rendering of the tree (fully parenthesized).
  std::string to_string() const;

  struct Node;  // implementation detail, public only for the translation unit

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

}  // namespace confflow
