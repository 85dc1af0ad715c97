#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "nlhjb/grid.hpp"

namespace nlhjb {

/// Small arithmetic expression over a state point x and a jump offset y.
///
/// Grammar: numbers, + - * / ^ (right associative), parentheses, unary minus,
/// and the functions sin cos tan exp log sqrt abs pow min max. Variables:
/// x (alias x1), x2, r = |x|, y (alias y1), y2, ry = |y|, pi, plus any
/// caller-supplied named constants. Parsing is strict: unknown names throw.
/// A parsed expression is immutable and safe to evaluate concurrently.
class Expression {
 public:
  static Expression parse(std::string_view text,
                          const std::map<std::string, double>& constants = {});

  double operator()(const Point& x, const Point& y = {0.0, 0.0}) const;

  const std::string& text() const { return text_; }
  bool uses_x() const { return uses_x_; }
  bool uses_y() const { return uses_y_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
  bool uses_x_ = false;
  bool uses_y_ = false;
};

}  // namespace nlhjb
