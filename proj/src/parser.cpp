#include "nhvol/parser.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "nhvol/error.hpp"

namespace nhvol {

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> coords,
         std::span<const std::string> params)
      : text_(text), coords_(coords), params_(params) {}

  Expr run() {
    Expr e = expression();
    skip_space();
    if (pos_ != text_.size()) {
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    }
    return e;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "', got end of input", pos_);
      throw ParseError(std::string("expected '") + c + "', got '" + text_[pos_] + "'", pos_);
    }
  }

  Expr expression() {
    Expr e = term();
    for (;;) {
      if (accept('+')) {
        e = e + term();
      } else if (accept('-')) {
        e = e - term();
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept('*')) {
        e = e * unary();
      } else if (accept('/')) {
        e = e / unary();
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (accept('^')) {
      const std::size_t at = pos_;
      const Expr exponent = unary();
      if (!exponent.is_constant()) {
        throw ParseError("exponent must be a numeric literal (write exp(b*ln(a)) for general powers)", at);
      }
      const double e = exponent.value();
      if (std::floor(2.0 * e) != 2.0 * e) {
        throw ParseError("exponent must be an integer or half-integer", at);
      }
      return pow(base, e);
    }
    return base;
  }

  Expr primary() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    if (accept('(')) {
      Expr e = expression();
      expect(')');
      return e;
    }
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  Expr number() {
    const std::size_t start = pos_;
    const std::string rest(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) throw ParseError("malformed number", start);
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return Expr(v);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(text_.substr(start, pos_ - start));
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      using Fn = Expr (*)(const Expr&);
      Fn fn = nullptr;
      if (name == "sin") fn = &nhvol::sin;
      else if (name == "cos") fn = &nhvol::cos;
      else if (name == "tan") fn = &nhvol::tan;
      else if (name == "exp") fn = &nhvol::exp;
      else if (name == "ln") fn = &nhvol::ln;
      else if (name == "sqrt") fn = &nhvol::sqrt;
      else if (name == "arctan") fn = &nhvol::arctan;
      else if (name == "arctanh") fn = &nhvol::arctanh;
      if (!fn) throw ParseError("unknown function '" + name + "'", start);
      ++pos_;
      Expr arg = expression();
      expect(')');
      return fn(arg);
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      if (coords_[i] == name) return Expr::coordinate(static_cast<int>(i), name);
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i] == name) return Expr::parameter(static_cast<int>(i), name);
    }
    if (name == "pi") return Expr(std::numbers::pi);
    throw UndeclaredIdentifier(name, start);
  }

  std::string_view text_;
  std::span<const std::string> coords_;
  std::span<const std::string> params_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text, std::span<const std::string> coordinates,
           std::span<const std::string> parameters) {
  return Parser(text, coordinates, parameters).run();
}

}  // namespace nhvol
