// Canonical-form rewriting: standard-clause translation, head linearization,
// guard whitelisting, body flattening, and loop expansion.
#include "toam/canonical.hpp"

#include <string>
#include <vector>

#include "doctest.h"
#include "toam/ast.hpp"
#include "toam/errors.hpp"
#include "toam/reader.hpp"
#include "toam/writer.hpp"

using namespace toam;
using ast::TermP;

namespace {

CanonProgram canon(const std::string& text) {
  return canonicalize_program(parse_program(text));
}

const CanonPred* find_pred(const CanonProgram& p, const std::string& name,
                           int arity) {
  for (auto& pr : p.preds)
    if (pr.name == name && pr.arity == arity) return &pr;
  return nullptr;
}

// Packs a clause into one term so variant() compares it modulo fresh names.
TermP pack(const CanonClause& c) {
  return ast::mk_cmp("$clause", {c.head, ast::mk_list(c.guard),
                                 ast::mk_list(c.events), ast::mk_list(c.body)});
}

bool same_clause(const CanonClause& a, const CanonClause& b) {
  return a.det == b.det && ast::variant(pack(a), pack(b));
}

// Replaces functor `from` with `to` everywhere, so predicates can be
// compared modulo their own (generated) name.
TermP subst_functor(const TermP& t, const std::string& from,
                    const std::string& to) {
  if (t->k != ast::Term::K::Cmp && !(t->k == ast::Term::K::Atom))
    return t;
  if (t->k == ast::Term::K::Atom)
    return t->name == from ? ast::mk_atom(to) : t;
  std::vector<TermP> args;
  for (auto& a : t->args) args.push_back(subst_functor(a, from, to));
  return ast::mk_cmp(t->name == from ? to : t->name, std::move(args));
}

CanonClause rename_pred(const CanonClause& c, const std::string& from,
                        const std::string& to) {
  CanonClause out = c;
  out.head = subst_functor(c.head, from, to);
  for (auto& g : out.guard) g = subst_functor(g, from, to);
  for (auto& e : out.events) e = subst_functor(e, from, to);
  for (auto& b : out.body) b = subst_functor(b, from, to);
  return out;
}

bool same_pred(const CanonPred& a, const CanonPred& b) {
  if (a.arity != b.arity || a.clauses.size() != b.clauses.size()) return false;
  for (size_t i = 0; i < a.clauses.size(); ++i)
    if (!same_clause(a.clauses[i], rename_pred(b.clauses[i], b.name, a.name)))
      return false;
  return true;
}

std::string body_str(const CanonClause& c) {
  std::string s;
  for (auto& g : c.body) {
    if (!s.empty()) s += ", ";
    s += term_to_string(g);
  }
  return s;
}

// Re-canonicalizes an already-canonical predicate and checks it is a
// fixpoint.
bool idempotent(const CanonPred& p) {
  std::vector<SourceClause> src;
  for (auto& c : p.clauses) {
    SourceClause s;
    s.kind = !c.events.empty() ? SourceClause::Kind::ActionRule
             : c.det           ? SourceClause::Kind::DetMatch
                               : SourceClause::Kind::NondetMatch;
    s.head = c.head;
    s.guard = c.guard;
    s.events = c.events;
    s.body = c.body;
    s.nvars = c.nvars;
    src.push_back(std::move(s));
  }
  NameGen names;
  names.reserve(p.name);
  auto again = canonicalize_predicate(std::move(src), nullptr, nullptr, names,
                                      nullptr);
  return again.size() == 1 && same_pred(again[0], p);
}

}  // namespace

TEST_CASE("two-clause list recursion over a var-dispatched argument") {
  auto got = canon(
      "append([],Ys,Ys).\n"
      "append([X|Xs],Ys,[X|Zs]) :- append(Xs,Ys,Zs).\n");
  auto want = canon(
      "append(Xs,Ys,Zs), var(Xs) => append_aux(Xs,Ys,Zs).\n"
      "append([],Ys,Zs) => Ys = Zs.\n"
      "append([X|Xs],Ys,Zs) => Zs = [X|Zs1], append(Xs,Ys,Zs1).\n"
      "append_aux(Xs,Ys,Zs) ?=> Xs = [], Ys = Zs.\n"
      "append_aux(Xs,Ys,Zs) => Xs = [X|Xs1], Zs = [X|Zs1], "
      "append(Xs1,Ys,Zs1).\n");
  REQUIRE(got.preds.size() == 2);
  auto* g_main = find_pred(got, "append", 3);
  auto* g_aux = find_pred(got, "append_aux", 3);
  auto* w_main = find_pred(want, "append", 3);
  auto* w_aux = find_pred(want, "append_aux", 3);
  REQUIRE(g_main);
  REQUIRE(g_aux);
  CHECK(g_main->clauses.size() == 3);
  CHECK(g_aux->clauses.size() == 2);
  CHECK(same_pred(*g_main, *w_main));
  CHECK(same_pred(*g_aux, *w_aux));
  CHECK(!g_aux->clauses[0].det);
  CHECK(g_aux->clauses[1].det);
  CHECK(idempotent(*g_main));
  CHECK(idempotent(*g_aux));
}

TEST_CASE("mode declaration yields pattern clauses without an aux") {
  auto got = canon(
      ":- mode append(+,+,-).\n"
      "append([],Ys,Ys).\n"
      "append([X|Xs],Ys,[X|Zs]) :- append(Xs,Ys,Zs).\n");
  auto want = canon(
      "append([],Ys,Zs) => Ys = Zs.\n"
      "append([X|Xs],Ys,Zs) => Zs = [X|Zs1], append(Xs,Ys,Zs1).\n");
  REQUIRE(got.preds.size() == 1);
  CHECK(got.preds[0].clauses.size() == 2);
  CHECK(same_pred(got.preds[0], want.preds[0]));
  for (auto& c : got.preds[0].clauses) CHECK(c.det);
}

TEST_CASE("single standard clause becomes one matching clause") {
  auto got = canon("p(f(X), X) :- q(X).\n");
  auto want = canon("p(A, B) => A = f(X), X = B, q(X).\n");
  REQUIRE(got.preds.size() == 1);
  CHECK(same_pred(got.preds[0], want.preds[0]));
}

TEST_CASE("var head at the dispatch position forces the alternative chain") {
  auto got = canon(
      "p(a) :- q.\n"
      "p(X) :- r(X).\n");
  auto want = canon(
      "p(A) ?=> A = a, q.\n"
      "p(A) => r(A).\n");
  REQUIRE(got.preds.size() == 1);
  CHECK(same_pred(got.preds[0], want.preds[0]));
}

TEST_CASE("clashing head functors force the alternative chain") {
  auto got = canon(
      "p(c(a)) :- q.\n"
      "p(c(b)) :- r.\n");
  REQUIRE(got.preds.size() == 1);  // no aux predicate
  REQUIRE(got.preds[0].clauses.size() == 2);
  CHECK(!got.preds[0].clauses[0].det);
  CHECK(got.preds[0].clauses[1].det);
}

TEST_CASE("later dispatch position is used when the first is all-var") {
  auto got = canon(
      "p(X, a) :- q(X).\n"
      "p(X, b) :- r(X).\n");
  REQUIRE(got.preds.size() == 2);  // dispatch + aux
  auto* main = find_pred(got, "p", 2);
  REQUIRE(main);
  REQUIRE(main->clauses.size() == 3);
  // dispatch guard tests the second argument
  REQUIRE(main->clauses[0].guard.size() == 1);
  auto& g = main->clauses[0].guard[0];
  CHECK(ast::is_cmp(g, "var", 1));
  CHECK(ast::equal(g->args[0], main->clauses[0].head->args[1]));
}

TEST_CASE("dispatch pattern variable repeated at an earlier position") {
  // The kept head variable occurs again inside the dispatch pattern: the
  // earlier position must move to a body unification, not a match test.
  auto got = canon(
      "p(X, f(X)) :- q(X).\n"
      "p(X, g(X)) :- r(X).\n");
  auto* main = find_pred(got, "p", 2);
  REQUIRE(main);
  REQUIRE(main->clauses.size() == 3);
  auto& c1 = main->clauses[1];
  CHECK(c1.guard.empty());
  REQUIRE(c1.body.size() == 2);
  CHECK(ast::is_cmp(c1.body[0], "=", 2));
}

TEST_CASE("head linearization: repeated variables become equality guards") {
  auto got = canon("p(X, X) => q.\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.guard.size() == 1);
  CHECK(ast::is_cmp(c.guard[0], "==", 2));
  CHECK(!ast::equal(c.head->args[0], c.head->args[1]));
}

TEST_CASE("head linearization: nested patterns become fetch guards") {
  auto got = canon("p(f(g(X))) => q(X).\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(ast::is_cmp(c.head->args[0], "f", 1));
  CHECK(ast::is_var(c.head->args[0]->args[0]));
  REQUIRE(c.guard.size() == 1);
  CHECK(ast::is_cmp(c.guard[0], "=", 2));
  CHECK(ast::is_cmp(c.guard[0]->args[1], "g", 1));
}

TEST_CASE("guard whitelist violations are load errors") {
  CHECK_THROWS_AS(canon("p(X), foo(X) => q.\n"), PrologError);
  CHECK_THROWS_AS(canon("p(X, Y), X = Y => q.\n"), PrologError);
  CHECK_THROWS_AS(canon("p(X), atom(f(X)) => q.\n"), PrologError);
  try {
    canon("p(X), foo(X) => q.\n");
  } catch (const PrologError& e) {
    CHECK(e.kind == ErrKind::Load);
  }
}

TEST_CASE("guard unification builds fresh structure and tests patterns") {
  // fresh LHS: construction, allowed
  auto got = canon("p(X), T = f(X), T == X => q.\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.guard.size() == 2);
  CHECK(ast::is_cmp(c.guard[0], "=", 2));
  CHECK(ast::is_cmp(c.guard[1], "==", 2));
  // bound LHS against a pattern: a test, allowed
  auto got2 = canon("p(X), X = f(Y) => q(Y).\n");
  auto& c2 = got2.preds[0].clauses[0];
  REQUIRE(c2.guard.size() == 1);
  CHECK(ast::is_cmp(c2.guard[0], "=", 2));
}

TEST_CASE("comparison guards flatten compound operands") {
  auto got = canon("p(X, Y), X + 1 > Y => q.\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.guard.size() == 2);
  CHECK(ast::is_cmp(c.guard[0], "=", 2));   // T = X + 1
  CHECK(ast::is_cmp(c.guard[1], ">", 2));   // T > Y
}

TEST_CASE("body flattening: call arguments become variables or constants") {
  auto got = canon("p :- q(f(a), 3).\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.body.size() == 2);
  CHECK(body_str(c) != "");
  CHECK(ast::is_cmp(c.body[0], "=", 2));
  CHECK(ast::is_cmp(c.body[1], "q", 2));
  CHECK(ast::is_var(c.body[1]->args[0]));
  CHECK(c.body[1]->args[1]->k == ast::Term::K::Int);
}

TEST_CASE("body flattening: nested structures build innermost-first") {
  auto got = canon("p(X) => X = f(g(b)).\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.body.size() == 2);
  CHECK(ast::is_cmp(c.body[0]->args[1], "g", 1));
  CHECK(ast::is_cmp(c.body[1]->args[1], "f", 1));
  // the inner binding feeds the outer structure
  CHECK(ast::equal(c.body[0]->args[0], c.body[1]->args[1]->args[0]));
}

TEST_CASE("body list unification stays one level") {
  auto got = canon("p(F) => F = f(L), L = [X, X, a].\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.body.size() == 2);
  CHECK(ast::is_cmp(c.body[0], "=", 2));
  CHECK(ast::is_cmp(c.body[1], "=", 2));
  CHECK(idempotent(got.preds[0]));
}

TEST_CASE("variable body goals become call/1") {
  auto got = canon("p(G) => G.\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.body.size() == 1);
  CHECK(ast::is_cmp(c.body[0], "call", 1));
}

TEST_CASE("mixing standard and matching clauses is a load error") {
  CHECK_THROWS_AS(canon("p(a).\np(X) => q(X).\n"), PrologError);
}

TEST_CASE("tabled predicates compile every clause as an alternative") {
  auto got = canon(
      ":- table path/2.\n"
      "path(X, Y) :- edge(X, Y).\n"
      "path(X, Y) :- path(X, Z), edge(Z, Y).\n");
  auto* p = find_pred(got, "path", 2);
  REQUIRE(p);
  REQUIRE(p->table.has_value());
  CHECK(p->table->cardinality == -1);
  CHECK(!p->table->has_modes);
  REQUIRE(p->clauses.size() == 2);
  for (auto& c : p->clauses) CHECK(!c.det);
}

TEST_CASE("table declaration with modes records the optimized argument") {
  auto got = canon(":- table sp(+,+,-,min):2.\n");
  auto* p = find_pred(got, "sp", 4);
  REQUIRE(p);
  REQUIRE(p->table.has_value());
  CHECK(p->table->cardinality == 2);
  CHECK(p->table->optimized_arg == 3);
  CHECK(p->clauses.empty());
}

TEST_CASE("cut inside a tabled predicate is a load error") {
  CHECK_THROWS_AS(canon(":- table p/1.\np(X) :- q(X), !, r(X).\n"),
                  PrologError);
}

TEST_CASE("foreach expands into a hidden tail-recursive predicate") {
  auto got = canon("go(L) :- foreach(X in L, write(X)).\n");
  REQUIRE(got.preds.size() == 2);
  auto* main = find_pred(got, "go", 1);
  REQUIRE(main);
  auto& body = main->clauses[0].body;
  REQUIRE(body.size() == 2);
  CHECK(ast::is_cmp(body[0], "$iter_list", 2));
  const CanonPred* aux = nullptr;
  for (auto& p : got.preds)
    if (p.hidden) aux = &p;
  REQUIRE(aux);
  CHECK(aux->arity == 1);          // collection only: no globals, no locals
  CHECK(aux->clauses.size() == 3); // var pattern: no skip clause
  // chain: [] base, cons clause calling itself, throw clause
  CHECK(ast::is_nil(aux->clauses[0].head->args[0]));
  CHECK(ast::is_cmp(aux->clauses[2].body.back(), "throw", 1));
}

TEST_CASE("foreach globals are threaded and patterns add a skip clause") {
  auto got = canon("go(L, N) :- foreach((X, Y) in L, p(X, Y, N)).\n");
  const CanonPred* aux = nullptr;
  for (auto& p : got.preds)
    if (p.hidden) aux = &p;
  REQUIRE(aux);
  CHECK(aux->arity == 2);           // collection + one global (N)
  CHECK(aux->clauses.size() == 4);  // base, match, skip, throw
}

TEST_CASE("list comprehension matches its hand-written recursion") {
  auto got = canon("firsts(Ps, Xs) :- Xs @= [X : (X, _) in Ps].\n");
  auto want = canon(
      "dummy([], Xs, XsR) => Xs = XsR.\n"
      "dummy([(X, _)|Ps], Xs, XsR) => Xs = [X|Xs1], dummy(Ps, Xs1, XsR).\n"
      "dummy([_|Ps], Xs, XsR) => dummy(Ps, Xs, XsR).\n"
      "dummy(Ps, _, _) => throw(illegal_argument_in_foreach(Ps)).\n");
  const CanonPred* aux = nullptr;
  for (auto& p : got.preds)
    if (p.hidden) aux = &p;
  REQUIRE(aux);
  auto* w = find_pred(want, "dummy", 3);
  REQUIRE(w);
  CHECK(same_pred(*aux, *w));
  // call site: '$iter_list'(Ps, L1), aux(L1, L, []), Xs @= L
  auto* main = find_pred(got, "firsts", 2);
  REQUIRE(main);
  auto& body = main->clauses[0].body;
  REQUIRE(body.size() == 3);
  CHECK(ast::is_cmp(body[0], "$iter_list", 2));
  CHECK(ast::is_nil(body[1]->args.back()));
  CHECK(ast::is_cmp(body[2], "@=", 2));
}

TEST_CASE("comprehension conditions become guards of the cons clause") {
  auto got = canon("evens(L, Es) :- Es @= [X : X in L, X mod 2 =:= 0].\n");
  const CanonPred* aux = nullptr;
  for (auto& p : got.preds)
    if (p.hidden) aux = &p;
  REQUIRE(aux);
  REQUIRE(aux->clauses.size() == 4);  // condition failure needs the skip clause
  auto& match = aux->clauses[1];
  REQUIRE(match.guard.size() == 2);   // T = X mod 2, T =:= 0
  CHECK(ast::is_cmp(match.guard[1], "=:=", 2));
}

TEST_CASE("nested foreach iterators expand level by level") {
  auto got = canon(
      "pairs(As, Bs) :- foreach(A in As, B in Bs, out(A, B)).\n");
  int hidden = 0;
  for (auto& p : got.preds)
    if (p.hidden) ++hidden;
  CHECK(hidden == 2);
}

TEST_CASE("loop singleton variables are diagnosed") {
  auto got = canon("go(L) :- foreach(X in L, q(Y)).\n");
  bool found = false;
  for (auto& d : got.diagnostics)
    if (d.find("Y") != std::string::npos &&
        d.find("singleton") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("range expansion") {
  CHECK(expand_range(1, 2, 7) == std::vector<std::int64_t>{1, 3, 5, 7});
  CHECK(expand_range(1, 2, 8) == std::vector<std::int64_t>{1, 3, 5, 7});
  CHECK(expand_range(1, 1, 4) == std::vector<std::int64_t>{1, 2, 3, 4});
  CHECK(expand_range(5, 1, 1).empty());
  CHECK(expand_range(7, -2, 1) == std::vector<std::int64_t>{7, 5, 3, 1});
  CHECK(expand_range(3, 0, 9).empty());
  CHECK(expand_range(2, 1, 2) == std::vector<std::int64_t>{2});
}

TEST_CASE("action rules keep events and reject backtrackable siblings") {
  auto got = canon("echo(X), {event(X, M)} => writeln(M).\n");
  auto& c = got.preds[0].clauses[0];
  REQUIRE(c.events.size() == 1);
  CHECK(got.preds[0].is_action);
  CHECK_THROWS_AS(
      canon("p(X), {event(X, M)} => q(M).\np(X) ?=> r(X).\n"),
      PrologError);
}

TEST_CASE("event pattern arguments must be variables") {
  CHECK_THROWS_AS(canon("p(X), {event(X, a)} => q.\n"), PrologError);
}

TEST_CASE("queries pass through") {
  auto got = canon("p(a).\n?- p(X).\n");
  REQUIRE(got.queries.size() == 1);
  REQUIRE(got.queries[0].vars.size() == 1);
  CHECK(got.queries[0].vars[0].first == "X");
}
