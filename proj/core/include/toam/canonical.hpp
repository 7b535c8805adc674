// Canonical form: every predicate becomes matching clauses with linear
// one-level head patterns, whitelisted flat guards, and flat bodies where
// every unification is V=T and every call argument is a variable or constant.
// Loop constructs are expanded into auxiliary tail-recursive predicates.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toam/ast.hpp"
#include "toam/reader.hpp"
#include "toam/symbols.hpp"

namespace toam {

struct CanonClause {
  ast::TermP head;                 // args: var, constant, or one-level pattern
  std::vector<ast::TermP> guard;   // whitelisted tests only
  std::vector<ast::TermP> events;  // action rules only
  std::vector<ast::TermP> body;
  bool det = true;                 // '=>' when true, '?=>' otherwise
  int nvars = 0;
};

struct CanonPred {
  std::string name;
  int arity = 0;
  bool is_action = false;
  bool hidden = false;
  std::optional<TableSpec> table;
  std::vector<CanonClause> clauses;
};

struct CanonProgram {
  std::vector<CanonPred> preds;
  std::vector<ParsedQuery> queries;  // passed through from the reader
  std::vector<std::string> diagnostics;
};

CanonProgram canonicalize_program(const ParsedProgram& prog);

// Fresh-name supply shared across one program's expansion.
class NameGen {
 public:
  void reserve(const std::string& name) { used_.push_back(name); }
  std::string fresh(const std::string& base);

 private:
  std::vector<std::string> used_;
};

// One predicate group (all clauses share name/arity); returns the rewritten
// predicate followed by any auxiliary predicates it spawned.
std::vector<CanonPred> canonicalize_predicate(
    std::vector<SourceClause> clauses, const Declaration* mode,
    const Declaration* table, NameGen& names,
    std::vector<std::string>* diagnostics);

// [b1, b1+step, ...] up to the last element that does not cross b2.
std::vector<std::int64_t> expand_range(std::int64_t b1, std::int64_t step,
                                       std::int64_t b2);

}  // namespace toam
