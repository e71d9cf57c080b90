#pragma once

// Arithmetic expressions in x and y: numbers, pi, + - * / ^, parentheses and
// the functions sin, cos, exp, ln, sqrt, abs.

#include <memory>
#include <string>

#include "masec/types.hpp"

namespace masec {

class Expression {
public:
  /// Throws InvalidInput with the offending position on malformed input.
  static Expression parse(const std::string& source);

  double operator()(const Vec2& x) const;
  const std::string& source() const noexcept { return source_; }

  struct Node;

private:
  Expression(std::string source, std::shared_ptr<const Node> root);
  std::string source_;
  std::shared_ptr<const Node> root_;
};

}  // namespace masec
