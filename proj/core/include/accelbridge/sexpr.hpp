#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace accelbridge {

/// Atom or parenthesized list, with the 1-based position of its first character.
struct SExpr {
  enum class Kind { Atom, List };

  Kind kind = Kind::Atom;
  std::string atom;
  std::vector<SExpr> items;
  int line = 1;
  int col = 1;

  bool is_atom() const noexcept { return kind == Kind::Atom; }
  bool is_list() const noexcept { return kind == Kind::List; }
  /// True for a list whose first item is the atom `head`.
  bool is_form(std::string_view head) const;
};

/// Reads every top-level form. ';' starts a comment running to end of line.
/// Throws SourceError(SyntaxError) on unbalanced parentheses.
std::vector<SExpr> read_sexprs(std::string_view text);

}  // namespace accelbridge
