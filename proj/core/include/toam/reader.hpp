// Tokenizer and parser for programs and queries.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "toam/ast.hpp"
#include "toam/symbols.hpp"

namespace toam {

struct SourceClause {
  enum class Kind { Horn, DetMatch, NondetMatch, ActionRule };
  Kind kind = Kind::Horn;
  ast::TermP head;
  std::vector<ast::TermP> guard;   // conjuncts between head and arrow
  std::vector<ast::TermP> events;  // patterns from {...} groups
  std::vector<ast::TermP> body;
  int nvars = 0;  // variable ids used are 0..nvars-1
  int line = 0, col = 0;
};

struct Declaration {
  enum class Kind { Table, Mode };
  Kind kind = Kind::Table;
  std::string name;
  int arity = 0;
  bool has_modes = false;
  std::vector<ArgMode> modes;
  std::int64_t cardinality = -1;  // -1 = unlimited
  int line = 0, col = 0;
};

struct ParsedQuery {
  std::vector<ast::TermP> goals;
  std::vector<std::pair<std::string, int>> vars;  // named vars in order
  int nvars = 0;
};

struct ParsedProgram {
  std::vector<SourceClause> clauses;
  std::vector<Declaration> decls;
  std::vector<ParsedQuery> queries;  // ?- directives, in source order
};

ParsedProgram parse_program(const std::string& text);
ParsedQuery parse_query(const std::string& text);

// Parse a single standalone term (testing and oracle input helper).
ast::TermP parse_term(const std::string& text);

}  // namespace toam
