#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace toam::ast {

// Compile-time term trees produced by the reader and consumed by the
// canonicalizer, the compiler and the reference interpreter.  Runtime terms
// use tagged cells instead (cell.hpp); the two never mix.
struct Term;
using TermP = std::shared_ptr<const Term>;

struct Term {
  enum class K : std::uint8_t { Var, Atom, Int, Flt, Cmp };
  K k;
  std::string name;          // Var: source name; Atom/Cmp: functor name
  int var = -1;              // Var: id, unique within its clause/query
  std::int64_t ival = 0;     // Int
  double fval = 0;           // Flt
  std::vector<TermP> args;   // Cmp
};

TermP mk_var(std::string name, int id);
TermP mk_atom(std::string name);
TermP mk_int(std::int64_t v);
TermP mk_flt(double v);
TermP mk_cmp(std::string name, std::vector<TermP> args);
TermP mk_nil();
TermP mk_cons(TermP head, TermP tail);
TermP mk_list(const std::vector<TermP>& elems);

inline bool is_var(const TermP& t) { return t->k == Term::K::Var; }
inline bool is_atom(const TermP& t, const char* n) {
  return t->k == Term::K::Atom && t->name == n;
}
inline bool is_nil(const TermP& t) { return is_atom(t, "[]"); }
inline bool is_cmp(const TermP& t, const char* n, size_t a) {
  return t->k == Term::K::Cmp && t->name == n && t->args.size() == a;
}
inline bool is_cons(const TermP& t) { return is_cmp(t, ".", 2); }
inline bool is_callable(const TermP& t) {
  return t->k == Term::K::Atom || t->k == Term::K::Cmp;
}
inline int arity(const TermP& t) {
  return t->k == Term::K::Cmp ? int(t->args.size()) : 0;
}

// Exact structural equality (variables compared by id).
bool equal(const TermP& a, const TermP& b);

// Equality up to a consistent renaming of variables.
bool variant(const TermP& a, const TermP& b);

// All distinct variable ids, in first-occurrence order.
void collect_vars(const TermP& t, std::vector<int>& out);

// Substitute variables by id; ids absent from the map are kept.
TermP rename(const TermP& t, const std::vector<std::pair<int, TermP>>& map);

}  // namespace toam::ast
