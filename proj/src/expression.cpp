#include "nlhjb/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nlhjb {

struct Expression::Node {
  enum class Op {
    Number, X1, X2, R, Y1, Y2, RY,
    Add, Sub, Mul, Div, Pow, Neg,
    Sin, Cos, Tan, Exp, Log, Sqrt, Abs, Min, Max
  };
  Op op = Op::Number;
  double value = 0.0;
  std::shared_ptr<const Node> a, b;

  double eval(const Point& x, const Point& y) const {
    switch (op) {
      case Op::Number: return value;
      case Op::X1: return x[0];
      case Op::X2: return x[1];
      case Op::R: return norm(x);
      case Op::Y1: return y[0];
      case Op::Y2: return y[1];
      case Op::RY: return norm(y);
      case Op::Add: return a->eval(x, y) + b->eval(x, y);
      case Op::Sub: return a->eval(x, y) - b->eval(x, y);
      case Op::Mul: return a->eval(x, y) * b->eval(x, y);
      case Op::Div: return a->eval(x, y) / b->eval(x, y);
      case Op::Pow: return std::pow(a->eval(x, y), b->eval(x, y));
      case Op::Neg: return -a->eval(x, y);
      case Op::Sin: return std::sin(a->eval(x, y));
      case Op::Cos: return std::cos(a->eval(x, y));
      case Op::Tan: return std::tan(a->eval(x, y));
      case Op::Exp: return std::exp(a->eval(x, y));
      case Op::Log: return std::log(a->eval(x, y));
      case Op::Sqrt: return std::sqrt(a->eval(x, y));
      case Op::Abs: return std::abs(a->eval(x, y));
      case Op::Min: return std::min(a->eval(x, y), b->eval(x, y));
      case Op::Max: return std::max(a->eval(x, y), b->eval(x, y));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr, double value = 0.0) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  n->value = value;
  return n;
}

class Parser {
 public:
  Parser(std::string_view text, const std::map<std::string, double>& constants)
      : text_(text), constants_(constants) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

  bool uses_x = false;
  bool uses_y = false;

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("expression '" + std::string(text_) + "': " + what + " at offset " +
                                std::to_string(pos_));
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) n = make(Op::Add, n, term());
      else if (accept('-')) n = make(Op::Sub, n, term());
      else return n;
    }
  }

  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (accept('*')) n = make(Op::Mul, n, unary());
      else if (accept('/')) n = make(Op::Div, n, unary());
      else return n;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const std::string rest(text_.substr(pos_));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      fail("malformed number");
    }
    pos_ += used;
    return make(Op::Number, nullptr, nullptr, v);
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name(text_.substr(start, pos_ - start));

    static const std::map<std::string, Op> unary_fns = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan},   {"exp", Op::Exp},
        {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"abs", Op::Abs}};
    static const std::map<std::string, Op> binary_fns = {
        {"pow", Op::Pow}, {"min", Op::Min}, {"max", Op::Max}};

    if (auto it = unary_fns.find(name); it != unary_fns.end()) {
      if (!accept('(')) fail("expected '(' after " + name);
      NodePtr a = expr();
      if (!accept(')')) fail("expected ')'");
      return make(it->second, a);
    }
    if (auto it = binary_fns.find(name); it != binary_fns.end()) {
      if (!accept('(')) fail("expected '(' after " + name);
      NodePtr a = expr();
      if (!accept(',')) fail("expected ','");
      NodePtr b = expr();
      if (!accept(')')) fail("expected ')'");
      return make(it->second, a, b);
    }
    if (name == "x" || name == "x1") return var(Op::X1, uses_x);
    if (name == "x2") return var(Op::X2, uses_x);
    if (name == "r") return var(Op::R, uses_x);
    if (name == "y" || name == "y1") return var(Op::Y1, uses_y);
    if (name == "y2") return var(Op::Y2, uses_y);
    if (name == "ry") return var(Op::RY, uses_y);
    if (name == "pi") return make(Op::Number, nullptr, nullptr, std::numbers::pi);
    if (auto it = constants_.find(name); it != constants_.end())
      return make(Op::Number, nullptr, nullptr, it->second);
    pos_ = start;
    fail("unknown name '" + name + "'");
  }

  NodePtr var(Op op, bool& flag) {
    flag = true;
    return make(op);
  }

  std::string_view text_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text, const std::map<std::string, double>& constants) {
  Parser p(text, constants);
  Expression e;
  e.root_ = p.parse();
  e.text_ = std::string(text);
  e.uses_x_ = p.uses_x;
  e.uses_y_ = p.uses_y;
  return e;
}

double Expression::operator()(const Point& x, const Point& y) const { return root_->eval(x, y); }

}  // namespace nlhjb
