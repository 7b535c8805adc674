#include "toam/writer.hpp"

#include <cctype>
#include <cstdio>
#include <string>

#include "toam/ops.hpp"

namespace toam {

using ast::Term;
using ast::TermP;

namespace {

bool is_symbol_char(char c) {
  return std::string("+-*/\\^<>=~:.?@#&").find(c) != std::string::npos;
}

bool is_alnum_atom(const std::string& s) {
  if (s.empty() || !std::islower(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

bool is_symbol_atom(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!is_symbol_char(c)) return false;
  return true;
}

bool needs_quotes(const std::string& s) {
  if (is_alnum_atom(s) || is_symbol_atom(s)) return false;
  return !(s == "[]" || s == "{}" || s == "!" || s == ";");
}

class Writer {
 public:
  explicit Writer(const WriteOpts& opts) : opts_(opts) {}

  std::string take() { return std::move(out_); }

  // `max_prec` is the highest operator priority printable without parens.
  void term(const TermP& t, int max_prec) {
    switch (t->k) {
      case Term::K::Var:
        emit(t->name.empty() ? "_G" + std::to_string(t->var) : t->name);
        return;
      case Term::K::Int:
        emit(std::to_string(t->ival));
        return;
      case Term::K::Flt:
        flt(t->fval);
        return;
      case Term::K::Atom:
        atom_operand(t->name, max_prec);
        return;
      case Term::K::Cmp:
        compound(t, max_prec);
        return;
    }
  }

 private:
  void emit(const std::string& s) {
    if (!out_.empty() && !s.empty()) {
      char a = out_.back(), b = s.front();
      bool glue = (is_symbol_char(a) && is_symbol_char(b)) ||
                  ((std::isalnum(static_cast<unsigned char>(a)) || a == '_') &&
                   (std::isalnum(static_cast<unsigned char>(b)) || b == '_'));
      if (glue) out_ += ' ';
    }
    out_ += s;
  }

  void flt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    std::string s = buf;
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
      s += ".0";
    emit(s);
  }

  void atom(const std::string& name) {
    if (opts_.quoted && needs_quotes(name)) {
      std::string q = "'";
      for (char c : name) {
        switch (c) {
          case '\\': q += "\\\\"; break;
          case '\'': q += "\\'"; break;
          case '\n': q += "\\n"; break;
          case '\t': q += "\\t"; break;
          default: q += c;
        }
      }
      q += '\'';
      emit(q);
    } else {
      emit(name);
    }
  }

  // A bare operator atom in an argument position must be parenthesized so it
  // does not read back as an operator application.
  void atom_operand(const std::string& name, int max_prec) {
    bool is_op = infix_op(name) || prefix_op(name);
    if (is_op && max_prec < 1201) {
      emit("(");
      atom(name);
      emit(")");
    } else {
      atom(name);
    }
  }

  void compound(const TermP& t, int max_prec) {
    const std::string& f = t->name;
    size_t n = t->args.size();
    if (f == "." && n == 2) {
      list(t);
      return;
    }
    if (f == "{}" && n == 1) {
      emit("{");
      term(t->args[0], 1200);
      emit("}");
      return;
    }
    if (f == "," && n == 2) {  // tuple notation
      emit("(");
      comma_seq(t);
      emit(")");
      return;
    }
    if (n == 2) {
      if (auto op = infix_op(f)) {
        bool paren = op->prec > max_prec;
        if (paren) emit("(");
        term(t->args[0], op_left_max(*op));
        atom(f);
        term(t->args[1], op_right_max(*op));
        if (paren) emit(")");
        return;
      }
    }
    if (n == 1) {
      if (auto op = prefix_op(f)) {
        bool paren = op->prec > max_prec;
        if (paren) emit("(");
        atom(f);
        // -(1) must not read back as the literal -1.
        bool num = (f == "-" || f == "+") &&
                   (t->args[0]->k == Term::K::Int ||
                    t->args[0]->k == Term::K::Flt);
        if (num) emit("(");
        term(t->args[0], num ? 1200 : op_arg_max(*op));
        if (num) emit(")");
        if (paren) emit(")");
        return;
      }
    }
    atom(f);
    emit("(");
    for (size_t i = 0; i < n; ++i) {
      if (i) emit(",");
      term(t->args[i], 999);
    }
    emit(")");
  }

  void comma_seq(const TermP& t) {
    if (ast::is_cmp(t, ",", 2)) {
      term(t->args[0], 999);
      emit(",");
      comma_seq(t->args[1]);
    } else {
      term(t, 1000);
    }
  }

  void list(const TermP& t) {
    emit("[");
    TermP cur = t;
    bool first = true;
    while (true) {
      if (ast::is_cons(cur)) {
        if (!first) emit(",");
        term(cur->args[0], 999);
        cur = cur->args[1];
        first = false;
      } else if (ast::is_nil(cur)) {
        break;
      } else {
        emit("|");
        term(cur, 999);
        break;
      }
    }
    emit("]");
  }

  const WriteOpts& opts_;
  std::string out_;
};

}  // namespace

std::string term_to_string(const TermP& t, const WriteOpts& opts) {
  Writer w(opts);
  w.term(t, 1200);
  return w.take();
}

}  // namespace toam
