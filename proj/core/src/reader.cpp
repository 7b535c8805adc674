#include "toam/reader.hpp"

#include <cctype>
#include <map>
#include <string>

#include "toam/cell.hpp"
#include "toam/errors.hpp"
#include "toam/ops.hpp"

namespace toam {

using ast::Term;
using ast::TermP;

namespace {

bool symch(char c) {
  return std::string("+-*/\\^<>=~:.?@#&").find(c) != std::string::npos;
}

struct Token {
  enum class K { Atom, Var, Int, Flt, Punct, End, Eof };
  K k = K::Eof;
  std::string text;
  std::int64_t ival = 0;
  double fval = 0;
  int line = 1, col = 1;
  bool adj = false;  // no layout between this token and the previous one
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) { advance(); }

  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void error(const std::string& msg, int line, int col) const {
    PrologError::raise(ErrKind::Syntax, "line " + std::to_string(line) +
                                            ", column " + std::to_string(col) +
                                            ": " + msg);
  }

 private:
  char cur() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  char at(size_t i) const { return i < s_.size() ? s_[i] : '\0'; }
  void bump() {
    if (cur() == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  bool skip_layout() {  // returns true if any layout or comment was skipped
    bool any = false;
    while (pos_ < s_.size()) {
      char c = cur();
      if (std::isspace(static_cast<unsigned char>(c))) {
        bump();
        any = true;
      } else if (c == '%') {
        while (pos_ < s_.size() && cur() != '\n') bump();
        any = true;
      } else if (c == '/' && at(pos_ + 1) == '*') {
        int l = line_, co = col_;
        bump();
        bump();
        while (pos_ < s_.size() && !(cur() == '*' && at(pos_ + 1) == '/')) bump();
        if (pos_ >= s_.size()) error("unterminated block comment", l, co);
        bump();
        bump();
        any = true;
      } else {
        break;
      }
    }
    return any;
  }

  void advance() {
    bool had_layout = skip_layout();
    tok_ = Token{};
    tok_.line = line_;
    tok_.col = col_;
    tok_.adj = !had_layout && pos_ > 0;
    if (pos_ >= s_.size()) {
      tok_.k = Token::K::Eof;
      return;
    }
    char c = cur();
    if (std::isdigit(static_cast<unsigned char>(c))) {
      lex_number();
      return;
    }
    if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
      tok_.k = Token::K::Var;
      while (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_') {
        tok_.text += cur();
        bump();
      }
      return;
    }
    if (std::islower(static_cast<unsigned char>(c))) {
      tok_.k = Token::K::Atom;
      while (std::isalnum(static_cast<unsigned char>(cur())) || cur() == '_') {
        tok_.text += cur();
        bump();
      }
      return;
    }
    if (c == '\'') {
      lex_quoted();
      return;
    }
    if (std::string("()[]{},|").find(c) != std::string::npos) {
      tok_.k = Token::K::Punct;
      tok_.text = c;
      bump();
      return;
    }
    if (c == '!' || c == ';') {
      tok_.k = Token::K::Atom;
      tok_.text = c;
      bump();
      return;
    }
    if (symch(c)) {
      // A lone '.' followed by layout, EOF or a comment ends the clause.
      if (c == '.') {
        char n = at(pos_ + 1);
        if (n == '\0' || std::isspace(static_cast<unsigned char>(n)) ||
            n == '%') {
          tok_.k = Token::K::End;
          bump();
          return;
        }
      }
      tok_.k = Token::K::Atom;
      while (symch(cur())) {
        tok_.text += cur();
        bump();
      }
      return;
    }
    error(std::string("unexpected character '") + c + "'", line_, col_);
  }

  void lex_number() {
    int l = line_, co = col_;
    std::string digits;
    if (cur() == '0' && (at(pos_ + 1) == 'b' || at(pos_ + 1) == 'x')) {
      char base = at(pos_ + 1);
      bump();
      bump();
      std::uint64_t v = 0;
      bool any = false;
      while (true) {
        char c = cur();
        int d;
        if (base == 'b' && (c == '0' || c == '1'))
          d = c - '0';
        else if (base == 'x' && std::isxdigit(static_cast<unsigned char>(c)))
          d = std::isdigit(static_cast<unsigned char>(c))
                  ? c - '0'
                  : std::tolower(c) - 'a' + 10;
        else
          break;
        v = v * (base == 'b' ? 2 : 16) + d;
        if (v > static_cast<std::uint64_t>(kIntMax))
          error("integer literal out of range", l, co);
        any = true;
        bump();
      }
      if (!any) error("malformed numeric literal", l, co);
      tok_.k = Token::K::Int;
      tok_.ival = static_cast<std::int64_t>(v);
      return;
    }
    while (std::isdigit(static_cast<unsigned char>(cur()))) {
      digits += cur();
      bump();
    }
    bool isflt = false;
    // '.' begins a fraction only when a digit follows ("1..9" stays integral).
    if (cur() == '.' && std::isdigit(static_cast<unsigned char>(at(pos_ + 1)))) {
      isflt = true;
      digits += cur();
      bump();
      while (std::isdigit(static_cast<unsigned char>(cur()))) {
        digits += cur();
        bump();
      }
    }
    if ((cur() == 'e' || cur() == 'E') &&
        (std::isdigit(static_cast<unsigned char>(at(pos_ + 1))) ||
         ((at(pos_ + 1) == '+' || at(pos_ + 1) == '-') &&
          std::isdigit(static_cast<unsigned char>(at(pos_ + 2)))))) {
      isflt = true;
      digits += cur();
      bump();
      if (cur() == '+' || cur() == '-') {
        digits += cur();
        bump();
      }
      while (std::isdigit(static_cast<unsigned char>(cur()))) {
        digits += cur();
        bump();
      }
    }
    if (isflt) {
      tok_.k = Token::K::Flt;
      tok_.fval = std::stod(digits);
      return;
    }
    std::uint64_t v = 0;
    for (char d : digits) {
      v = v * 10 + (d - '0');
      // Allow magnitude 2^61 so the parser can fold "-(2^61)" = kIntMin.
      if (v > static_cast<std::uint64_t>(kIntMax) + 1)
        error("integer literal out of range", l, co);
    }
    tok_.k = Token::K::Int;
    tok_.ival = static_cast<std::int64_t>(v);
  }

  void lex_quoted() {
    int l = line_, co = col_;
    bump();  // opening quote
    tok_.k = Token::K::Atom;
    while (true) {
      if (pos_ >= s_.size() || cur() == '\n')
        error("unterminated quoted atom", l, co);
      char c = cur();
      if (c == '\'') {
        bump();
        if (cur() == '\'') {  // '' stands for a single quote
          tok_.text += '\'';
          bump();
          continue;
        }
        return;
      }
      if (c == '\\') {
        bump();
        char e = cur();
        switch (e) {
          case 'n': tok_.text += '\n'; break;
          case 't': tok_.text += '\t'; break;
          case 'r': tok_.text += '\r'; break;
          case 'a': tok_.text += '\a'; break;
          case 'b': tok_.text += '\b'; break;
          case 'f': tok_.text += '\f'; break;
          case 'v': tok_.text += '\v'; break;
          case '\\': tok_.text += '\\'; break;
          case '\'': tok_.text += '\''; break;
          case '"': tok_.text += '"'; break;
          default: error("unknown escape sequence", line_, col_);
        }
        bump();
        continue;
      }
      tok_.text += c;
      bump();
    }
  }

  const std::string& s_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lx_(text) {}

  bool at_eof() { return lx_.peek().k == Token::K::Eof; }

  // Parse one clause term up to and including the '.' terminator.
  TermP read_clause_term(int& line, int& col) {
    vars_.clear();
    named_.clear();
    nvars_ = 0;
    line = lx_.peek().line;
    col = lx_.peek().col;
    TermP t = parse(1200).first;
    Token end = lx_.next();
    if (end.k != Token::K::End)
      lx_.error("operator expected before '" + describe(end) + "'", end.line,
                end.col);
    return t;
  }

  // Parse one term; terminator optional, must then be at EOF.
  TermP read_single_term() {
    vars_.clear();
    named_.clear();
    nvars_ = 0;
    TermP t = parse(1200).first;
    if (lx_.peek().k == Token::K::End) lx_.next();
    Token rest = lx_.peek();
    if (rest.k != Token::K::Eof)
      lx_.error("unexpected input after term", rest.line, rest.col);
    return t;
  }

  int nvars() const { return nvars_; }
  const std::vector<std::pair<std::string, int>>& named_vars() const {
    return named_;
  }

  [[noreturn]] void error_at(const std::string& msg, int line, int col) {
    lx_.error(msg, line, col);
  }

 private:
  static std::string describe(const Token& t) {
    switch (t.k) {
      case Token::K::Eof: return "end of input";
      case Token::K::End: return ".";
      case Token::K::Int: return std::to_string(t.ival);
      default: return t.text;
    }
  }

  TermP mkvar(const std::string& name) {
    if (name == "_") return ast::mk_var("_", nvars_++);
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    TermP v = ast::mk_var(name, nvars_++);
    vars_[name] = v;
    named_.emplace_back(name, v->var);
    return v;
  }

  static bool starts_term(const Token& t) {
    switch (t.k) {
      case Token::K::Int:
      case Token::K::Flt:
      case Token::K::Var:
      case Token::K::Atom:
        return true;
      case Token::K::Punct:
        return t.text == "(" || t.text == "[" || t.text == "{";
      default:
        return false;
    }
  }

  std::int64_t check_int(std::int64_t magnitude, bool neg, const Token& at) {
    std::int64_t v = neg ? -magnitude : magnitude;
    if (v < kIntMin || v > kIntMax)
      lx_.error("integer literal out of range", at.line, at.col);
    return v;
  }

  // Returns the term and the priority of its principal operator.
  std::pair<TermP, int> parse(int max_prec) {
    auto [t, prec] = parse_left(max_prec);
    while (true) {
      const Token& tok = lx_.peek();
      std::string name;
      if (tok.k == Token::K::Atom)
        name = tok.text;
      else if (tok.k == Token::K::Punct && tok.text == ",")
        name = ",";
      else
        break;
      auto op = infix_op(name);
      if (!op || op->prec > max_prec || prec > op_left_max(*op)) break;
      lx_.next();
      TermP rhs = parse(op_right_max(*op)).first;
      t = ast::mk_cmp(name, {t, rhs});
      prec = op->prec;
    }
    return {t, prec};
  }

  std::pair<TermP, int> parse_left(int max_prec) {
    Token tok = lx_.next();
    switch (tok.k) {
      case Token::K::Int:
        return {ast::mk_int(check_int(tok.ival, false, tok)), 0};
      case Token::K::Flt:
        return {ast::mk_flt(tok.fval), 0};
      case Token::K::Var:
        return {mkvar(tok.text), 0};
      case Token::K::Punct:
        if (tok.text == "(") {
          TermP t = parse(1200).first;
          expect_punct(")");
          return {t, 0};
        }
        if (tok.text == "[") return {parse_list(), 0};
        if (tok.text == "{") {
          if (lx_.peek().k == Token::K::Punct && lx_.peek().text == "}") {
            lx_.next();
            return {ast::mk_atom("{}"), 0};
          }
          TermP t = parse(1200).first;
          expect_punct("}");
          return {ast::mk_cmp("{}", {t}), 0};
        }
        lx_.error("unexpected '" + tok.text + "'", tok.line, tok.col);
      case Token::K::Atom:
        return parse_atom_head(tok, max_prec);
      case Token::K::End:
        lx_.error("unexpected end of clause", tok.line, tok.col);
      case Token::K::Eof:
        lx_.error("unexpected end of input", tok.line, tok.col);
    }
    lx_.error("unexpected token", tok.line, tok.col);
  }

  std::pair<TermP, int> parse_atom_head(const Token& tok, int max_prec) {
    const Token& nxt = lx_.peek();
    if (nxt.k == Token::K::Punct && nxt.text == "(" && nxt.adj) {
      lx_.next();
      std::vector<TermP> args;
      args.push_back(parse(999).first);
      while (lx_.peek().k == Token::K::Punct && lx_.peek().text == ",") {
        lx_.next();
        args.push_back(parse(999).first);
      }
      expect_punct(")");
      return {ast::mk_cmp(tok.text, std::move(args)), 0};
    }
    if (auto op = prefix_op(tok.text); op && op->prec <= max_prec &&
                                       starts_term(nxt)) {
      if (tok.text == "-" || tok.text == "+") {
        if (nxt.k == Token::K::Int) {
          Token lit = lx_.next();
          return {ast::mk_int(check_int(lit.ival, tok.text == "-", lit)), 0};
        }
        if (nxt.k == Token::K::Flt) {
          Token lit = lx_.next();
          return {ast::mk_flt(tok.text == "-" ? -lit.fval : lit.fval), 0};
        }
      }
      // An operator atom standing before an infix operator is an operand,
      // not an application: "X = -" parses '-' as an atom.
      bool operand_is_infix_only =
          nxt.k == Token::K::Atom && infix_op(nxt.text) &&
          !prefix_op(nxt.text) &&
          !(nxt.k == Token::K::Punct);
      if (!operand_is_infix_only) {
        TermP arg = parse(op_arg_max(*op)).first;
        return {ast::mk_cmp(tok.text, {arg}), op->prec};
      }
    }
    int prec = 0;
    if (auto i = infix_op(tok.text)) prec = i->prec;
    if (auto p = prefix_op(tok.text)) prec = std::max(prec, p->prec);
    return {ast::mk_atom(tok.text), prec};
  }

  TermP parse_list() {
    if (lx_.peek().k == Token::K::Punct && lx_.peek().text == "]") {
      lx_.next();
      return ast::mk_nil();
    }
    std::vector<TermP> elems;
    elems.push_back(parse(999).first);
    TermP tail = ast::mk_nil();
    while (true) {
      const Token& t = lx_.peek();
      if (t.k == Token::K::Punct && t.text == ",") {
        lx_.next();
        elems.push_back(parse(999).first);
        continue;
      }
      if (t.k == Token::K::Punct && t.text == "|") {
        lx_.next();
        tail = parse(999).first;
      }
      break;
    }
    expect_punct("]");
    TermP t = tail;
    for (auto it = elems.rbegin(); it != elems.rend(); ++it)
      t = ast::mk_cons(*it, t);
    return t;
  }

  void expect_punct(const std::string& p) {
    Token t = lx_.next();
    if (t.k != Token::K::Punct || t.text != p)
      lx_.error("expected '" + p + "' before '" + describe(t) + "'", t.line,
                t.col);
  }

  Lexer lx_;
  std::map<std::string, TermP> vars_;
  std::vector<std::pair<std::string, int>> named_;
  int nvars_ = 0;
};

void flatten_conj(const TermP& t, std::vector<TermP>& out) {
  if (ast::is_cmp(t, ",", 2)) {
    flatten_conj(t->args[0], out);
    flatten_conj(t->args[1], out);
  } else {
    out.push_back(t);
  }
}

bool valid_head(const TermP& h) {
  if (!ast::is_callable(h)) return false;
  static const char* bad[] = {",", "=>", "?=>", ":-", "?-", "{}", "|", "."};
  for (const char* b : bad)
    if (h->name == b) return false;
  return true;
}

ArgMode parse_arg_mode(const TermP& t, bool allow_agg, Parser& p, int line,
                       int col) {
  if (ast::is_atom(t, "+")) return ArgMode::In;
  if (ast::is_atom(t, "-")) return ArgMode::Out;
  if (allow_agg && ast::is_atom(t, "min")) return ArgMode::Min;
  if (allow_agg && ast::is_atom(t, "max")) return ArgMode::Max;
  p.error_at("invalid argument mode", line, col);
}

Declaration parse_table_decl(const TermP& spec, Parser& p, int line, int col) {
  Declaration d;
  d.kind = Declaration::Kind::Table;
  d.line = line;
  d.col = col;
  TermP target = spec;
  std::int64_t card = -2;  // -2 = not given
  if (ast::is_cmp(spec, ":", 2)) {
    target = spec->args[0];
    const TermP& c = spec->args[1];
    if (c->k != Term::K::Int || c->ival <= 0)
      p.error_at("table cardinality must be a positive integer", line, col);
    card = c->ival;
  }
  if (ast::is_cmp(target, "/", 2) && target->args[0]->k == Term::K::Atom &&
      target->args[1]->k == Term::K::Int) {
    if (card != -2)
      p.error_at("a cardinality limit requires argument modes", line, col);
    d.name = target->args[0]->name;
    d.arity = static_cast<int>(target->args[1]->ival);
    return d;
  }
  if (target->k == Term::K::Cmp && target->name != "/") {
    d.name = target->name;
    d.arity = static_cast<int>(target->args.size());
    d.has_modes = true;
    int aggs = 0;
    for (auto& a : target->args) {
      ArgMode m = parse_arg_mode(a, true, p, line, col);
      if (m == ArgMode::Min || m == ArgMode::Max) ++aggs;
      d.modes.push_back(m);
    }
    if (aggs > 1)
      p.error_at("at most one min/max mode is allowed", line, col);
    d.cardinality = card != -2 ? card : (aggs == 1 ? 1 : -1);
    return d;
  }
  p.error_at("malformed table declaration", line, col);
}

Declaration parse_mode_decl(const TermP& spec, Parser& p, int line, int col) {
  Declaration d;
  d.kind = Declaration::Kind::Mode;
  d.line = line;
  d.col = col;
  if (spec->k != Term::K::Cmp)
    p.error_at("malformed mode declaration", line, col);
  d.name = spec->name;
  d.arity = static_cast<int>(spec->args.size());
  d.has_modes = true;
  for (auto& a : spec->args)
    d.modes.push_back(parse_arg_mode(a, false, p, line, col));
  return d;
}

void classify_clause(const TermP& t, Parser& p, int line, int col,
                     ParsedProgram& out) {
  SourceClause c;
  c.line = line;
  c.col = col;
  c.nvars = p.nvars();
  bool nondet = ast::is_cmp(t, "?=>", 2);
  if (ast::is_cmp(t, "=>", 2) || nondet) {
    std::vector<TermP> lhs;
    flatten_conj(t->args[0], lhs);
    c.head = lhs[0];
    for (size_t i = 1; i < lhs.size(); ++i) {
      if (ast::is_cmp(lhs[i], "{}", 1))
        flatten_conj(lhs[i]->args[0], c.events);
      else
        c.guard.push_back(lhs[i]);
    }
    flatten_conj(t->args[1], c.body);
    if (nondet) {
      if (!c.events.empty())
        p.error_at("event patterns are not allowed in '?=>' clauses", line,
                   col);
      c.kind = SourceClause::Kind::NondetMatch;
    } else {
      c.kind = c.events.empty() ? SourceClause::Kind::DetMatch
                                : SourceClause::Kind::ActionRule;
    }
  } else if (ast::is_cmp(t, ":-", 2)) {
    c.kind = SourceClause::Kind::Horn;
    c.head = t->args[0];
    flatten_conj(t->args[1], c.body);
  } else {
    c.kind = SourceClause::Kind::Horn;
    c.head = t;
  }
  if (!c.head || !valid_head(c.head))
    p.error_at("invalid clause head", line, col);
  for (auto& e : c.events)
    if (!ast::is_callable(e))
      p.error_at("event pattern must be a callable term", line, col);
  out.clauses.push_back(std::move(c));
}

void handle_directive(const TermP& g, Parser& p, int line, int col,
                      ParsedProgram& out) {
  std::vector<TermP> items;
  flatten_conj(g, items);
  for (auto& item : items) {
    if (ast::is_cmp(item, "table", 1))
      out.decls.push_back(parse_table_decl(item->args[0], p, line, col));
    else if (ast::is_cmp(item, "mode", 1))
      out.decls.push_back(parse_mode_decl(item->args[0], p, line, col));
    else
      PrologError::raise(ErrKind::Load,
                         "line " + std::to_string(line) +
                             ": unsupported directive '" +
                             (ast::is_callable(item) ? item->name : "?") + "'");
  }
}

}  // namespace

ParsedProgram parse_program(const std::string& text) {
  ParsedProgram out;
  Parser p(text);
  while (!p.at_eof()) {
    int line = 0, col = 0;
    TermP t = p.read_clause_term(line, col);
    if (ast::is_cmp(t, ":-", 1)) {
      handle_directive(t->args[0], p, line, col, out);
    } else if (ast::is_cmp(t, "?-", 1)) {
      ParsedQuery q;
      flatten_conj(t->args[0], q.goals);
      q.vars = p.named_vars();
      q.nvars = p.nvars();
      out.queries.push_back(std::move(q));
    } else {
      classify_clause(t, p, line, col, out);
    }
  }
  return out;
}

ParsedQuery parse_query(const std::string& text) {
  Parser p(text);
  ParsedQuery q;
  TermP t = p.read_single_term();
  flatten_conj(t, q.goals);
  q.vars = p.named_vars();
  q.nvars = p.nvars();
  return q;
}

ast::TermP parse_term(const std::string& text) {
  Parser p(text);
  return p.read_single_term();
}

}  // namespace toam
