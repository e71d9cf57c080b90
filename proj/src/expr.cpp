#include "masec/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

#include "masec/error.hpp"

namespace masec {

struct Expression::Node {
  enum class Op { number, x, y, add, sub, mul, div, pow, neg, call };
  Op op = Op::number;
  double value = 0.0;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> lhs, rhs;

  double eval(const Vec2& p) const {
    switch (op) {
      case Op::number: return value;
      case Op::x: return p.x();
      case Op::y: return p.y();
      case Op::add: return lhs->eval(p) + rhs->eval(p);
      case Op::sub: return lhs->eval(p) - rhs->eval(p);
      case Op::mul: return lhs->eval(p) * rhs->eval(p);
      case Op::div: return lhs->eval(p) / rhs->eval(p);
      case Op::pow: return std::pow(lhs->eval(p), rhs->eval(p));
      case Op::neg: return -lhs->eval(p);
      case Op::call: return fn(lhs->eval(p));
    }
    return 0.0;
  }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr leaf(Node::Op op, double value = 0.0) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = value;
  return n;
}

NodePtr binary(Node::Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

double fn_sin(double t) { return std::sin(t); }
double fn_cos(double t) { return std::cos(t); }
double fn_exp(double t) { return std::exp(t); }
double fn_ln(double t) { return std::log(t); }
double fn_sqrt(double t) { return std::sqrt(t); }
double fn_abs(double t) { return std::abs(t); }

// expr  := term (('+' | '-') term)*
// term  := unary (('*' | '/') unary)*
// unary := '-' unary | '+' unary | power
// power := atom ('^' unary)?
class Parser {
public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInput("expression '" + s_ + "': " + what + " at position " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr e = term();
    for (;;) {
      if (accept('+')) e = binary(Node::Op::add, e, term());
      else if (accept('-')) e = binary(Node::Op::sub, e, term());
      else return e;
    }
  }

  NodePtr term() {
    NodePtr e = unary();
    for (;;) {
      if (accept('*')) e = binary(Node::Op::mul, e, unary());
      else if (accept('/')) e = binary(Node::Op::div, e, unary());
      else return e;
    }
  }

  NodePtr unary() {
    if (accept('-')) return binary(Node::Op::neg, unary(), nullptr);
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return binary(Node::Op::pow, base, unary());
    return base;
  }

  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double value = 0.0;
      const auto [end, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), value);
      if (ec != std::errc()) fail("malformed number");
      pos_ = static_cast<std::size_t>(end - s_.data());
      return leaf(Node::Op::number, value);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (name == "x") return leaf(Node::Op::x);
      if (name == "y") return leaf(Node::Op::y);
      if (name == "pi") return leaf(Node::Op::number, std::numbers::pi);
      double (*fn)(double) = nullptr;
      if (name == "sin") fn = fn_sin;
      else if (name == "cos") fn = fn_cos;
      else if (name == "exp") fn = fn_exp;
      else if (name == "ln") fn = fn_ln;
      else if (name == "sqrt") fn = fn_sqrt;
      else if (name == "abs") fn = fn_abs;
      else {
        pos_ = start;
        fail("unknown name '" + name + "'");
      }
      if (!accept('(')) fail("expected '(' after " + name);
      auto n = std::make_shared<Node>();
      n->op = Node::Op::call;
      n->fn = fn;
      n->lhs = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    fail("unexpected character");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression(std::string source, std::shared_ptr<const Node> root)
    : source_(std::move(source)), root_(std::move(root)) {}

Expression Expression::parse(const std::string& source) {
  Parser p(source);
  NodePtr root = p.parse();
  return Expression(source, std::move(root));
}

double Expression::operator()(const Vec2& x) const { return root_->eval(x); }

}  // namespace masec
