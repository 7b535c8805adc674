// Whole-program assembly: registers builtins, compiles the prelude and the
// user predicates, runs the determinism analysis and the optimizer, and
// emits the control stubs the machine needs.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toam/instr.hpp"
#include "toam/reader.hpp"
#include "toam/symbols.hpp"

namespace toam {

struct LoadOptions {
  bool optimize = true;  // peephole pass over all emitted code
};

// A compiled image.  Stub members are symbol ids (stable across rewrites);
// resolve their code addresses through syms at run time.
struct Program {
  SymbolTable syms;
  std::vector<Instr> code;
  std::vector<char> det_safe;  // by symbol id: leaves no choice points
  std::vector<ParsedQuery> queries;      // ?- directives, in source order
  std::vector<std::string> diagnostics;  // load problems; empty on success
  bool optimize = true;

  std::uint32_t cut_fail = 0;    // default CPF of fresh choice points
  std::uint32_t query_fail = 0;  // CPF of the root choice point
  std::uint32_t retry = 0;       // CPF of a repeat/0 choice point
  std::uint32_t wake = 0;        // agent chain: continue at the next REEP

  bool ok() const { return diagnostics.empty(); }
  int entry_of(std::uint32_t sym) const { return syms.at(sym).entry; }

  int nqueries = 0;  // '$query_N' name supply
};

Program load_program(const std::string& text, const LoadOptions& opts = {});

// Compiles one query against a loaded program, appending code.  The head of
// the synthesized predicate carries the query's named variables, so its
// frame's argument slots hold the answer bindings.  Returns the symbol id.
std::uint32_t compile_query(Program& pg, const ParsedQuery& query);

}  // namespace toam
