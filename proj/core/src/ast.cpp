#include "toam/ast.hpp"

#include <algorithm>
#include <map>

namespace toam::ast {

TermP mk_var(std::string name, int id) {
  auto t = std::make_shared<Term>();
  t->k = Term::K::Var;
  t->name = std::move(name);
  t->var = id;
  return t;
}

TermP mk_atom(std::string name) {
  auto t = std::make_shared<Term>();
  t->k = Term::K::Atom;
  t->name = std::move(name);
  return t;
}

TermP mk_int(std::int64_t v) {
  auto t = std::make_shared<Term>();
  t->k = Term::K::Int;
  t->ival = v;
  return t;
}

TermP mk_flt(double v) {
  auto t = std::make_shared<Term>();
  t->k = Term::K::Flt;
  t->fval = v;
  return t;
}

TermP mk_cmp(std::string name, std::vector<TermP> args) {
  if (args.empty()) return mk_atom(std::move(name));
  auto t = std::make_shared<Term>();
  t->k = Term::K::Cmp;
  t->name = std::move(name);
  t->args = std::move(args);
  return t;
}

TermP mk_nil() { return mk_atom("[]"); }

TermP mk_cons(TermP head, TermP tail) {
  return mk_cmp(".", {std::move(head), std::move(tail)});
}

TermP mk_list(const std::vector<TermP>& elems) {
  TermP t = mk_nil();
  for (auto it = elems.rbegin(); it != elems.rend(); ++it) t = mk_cons(*it, t);
  return t;
}

bool equal(const TermP& a, const TermP& b) {
  if (a->k != b->k) return false;
  switch (a->k) {
    case Term::K::Var: return a->var == b->var;
    case Term::K::Atom: return a->name == b->name;
    case Term::K::Int: return a->ival == b->ival;
    case Term::K::Flt: return a->fval == b->fval;
    case Term::K::Cmp:
      if (a->name != b->name || a->args.size() != b->args.size()) return false;
      for (size_t i = 0; i < a->args.size(); ++i)
        if (!equal(a->args[i], b->args[i])) return false;
      return true;
  }
  return false;
}

namespace {
bool variant_rec(const TermP& a, const TermP& b, std::map<int, int>& a2b,
                 std::map<int, int>& b2a) {
  if (a->k != b->k) return false;
  if (a->k == Term::K::Var) {
    auto ia = a2b.find(a->var);
    auto ib = b2a.find(b->var);
    if (ia == a2b.end() && ib == b2a.end()) {
      a2b[a->var] = b->var;
      b2a[b->var] = a->var;
      return true;
    }
    return ia != a2b.end() && ib != b2a.end() && ia->second == b->var &&
           ib->second == a->var;
  }
  if (a->k == Term::K::Cmp) {
    if (a->name != b->name || a->args.size() != b->args.size()) return false;
    for (size_t i = 0; i < a->args.size(); ++i)
      if (!variant_rec(a->args[i], b->args[i], a2b, b2a)) return false;
    return true;
  }
  return equal(a, b);
}
}  // namespace

bool variant(const TermP& a, const TermP& b) {
  std::map<int, int> a2b, b2a;
  return variant_rec(a, b, a2b, b2a);
}

void collect_vars(const TermP& t, std::vector<int>& out) {
  if (t->k == Term::K::Var) {
    if (std::find(out.begin(), out.end(), t->var) == out.end())
      out.push_back(t->var);
    return;
  }
  if (t->k == Term::K::Cmp)
    for (auto& a : t->args) collect_vars(a, out);
}

TermP rename(const TermP& t, const std::vector<std::pair<int, TermP>>& map) {
  if (t->k == Term::K::Var) {
    for (auto& [id, repl] : map)
      if (id == t->var) return repl;
    return t;
  }
  if (t->k == Term::K::Cmp) {
    std::vector<TermP> args;
    args.reserve(t->args.size());
    bool changed = false;
    for (auto& a : t->args) {
      args.push_back(rename(a, map));
      changed |= args.back() != a;
    }
    if (!changed) return t;
    return mk_cmp(t->name, std::move(args));
  }
  return t;
}

}  // namespace toam::ast
