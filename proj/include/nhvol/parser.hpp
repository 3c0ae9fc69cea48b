#pragma once

#include <span>
#include <string>
#include <string_view>

#include "nhvol/expr.hpp"

namespace nhvol {

/// Parse an infix scalar expression.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('+' | '-') unary | power
///   power   := primary ('^' unary)?
///   primary := number | 'pi' | identifier | function '(' expr ')' | '(' expr ')'
///   function:= sin | cos | tan | exp | ln | sqrt | arctan | arctanh
///
/// Identifiers resolve to coordinates first, then parameters. Exponents must
/// fold to an integer or half-integer constant.
Expr parse(std::string_view text, std::span<const std::string> coordinates,
           std::span<const std::string> parameters);

}  // namespace nhvol
