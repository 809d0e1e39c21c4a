#include "accelbridge/sexpr.hpp"

#include "accelbridge/error.hpp"

#include <cctype>

namespace accelbridge {

bool SExpr::is_form(std::string_view head) const {
  return is_list() && !items.empty() && items[0].is_atom() && items[0].atom == head;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::vector<SExpr> all() {
    std::vector<SExpr> out;
    skip();
    while (pos_ < text_.size()) {
      out.push_back(form());
      skip();
    }
    return out;
  }

 private:
  SExpr form() {
    const int line = line_, col = col_;
    char c = text_[pos_];
    if (c == ')') throw SourceError(ErrorCode::SyntaxError, line, col, "unexpected ')'");
    if (c == '(') {
      advance();
      SExpr list;
      list.kind = SExpr::Kind::List;
      list.line = line;
      list.col = col;
      for (;;) {
        skip();
        if (pos_ >= text_.size()) throw SourceError(ErrorCode::SyntaxError, line, col, "unclosed '('");
        if (text_[pos_] == ')') {
          advance();
          return list;
        }
        list.items.push_back(form());
      }
    }
    SExpr atom;
    atom.line = line;
    atom.col = col;
    while (pos_ < text_.size()) {
      c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ';') break;
      atom.atom.push_back(c);
      advance();
    }
    return atom;
  }

  void skip() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<SExpr> read_sexprs(std::string_view text) { return Reader(text).all(); }

}  // namespace accelbridge
