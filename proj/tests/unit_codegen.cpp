// Clause compilation: emitted instruction sequences, frame kinds and sizes,
// slot allocation with liveness reuse, dispatch trees, and call layouts.
#include "toam/codegen.hpp"

#include <string>
#include <vector>

#include "doctest.h"
#include "toam/canonical.hpp"
#include "toam/instr.hpp"
#include "toam/reader.hpp"
#include "toam/symbols.hpp"

using namespace toam;

namespace {

struct Unit {
  SymbolTable syms;
  std::vector<Instr> code;
};

Unit compile(const std::string& text, bool query_mode = false) {
  Unit u;
  auto canon = canonicalize_program(parse_program(text));
  REQUIRE(canon.diagnostics.empty());
  std::vector<char> det_safe;
  CodegenOpts opts;
  opts.query_mode = query_mode;
  for (auto& p : canon.preds) compile_predicate(p, u.syms, u.code, det_safe, opts);
  return u;
}

std::string disasm(const Unit& u, const std::string& name, int arity) {
  const Symbol* s = u.syms.find(name, arity);
  REQUIRE(s != nullptr);
  return disassemble(u.code, s->entry, s->end, u.syms,
                     fixed_slots_for(u.code[size_t(s->entry)].op));
}

}  // namespace

TEST_CASE("backtrackable clause forks and the last clause cuts") {
  auto u = compile("p ?=> true.\np => true.\n");
  CHECK(disasm(u, "p", 0) ==
        "allocate_nondet(0,8)\n"
        "fork(l1)\n"
        "return\n"
        "l1: cut\n"
        "return\n");
  CHECK(u.syms.find("p", 0)->cls == PredClass::Nondet);
  CHECK(u.syms.find("p", 0)->frame_size == 8);
}

TEST_CASE("body unifications: first occurrence builds, later ones unify") {
  auto u = compile("p(F) => F = f(L), L = [X,X,a].\n");
  CHECK(disasm(u, "p", 1) ==
        "allocate_det(1,4)\n"
        "unify_struct(y(1),f/1,v(1))\n"
        "unify_list(y(1),3,v(1),u(1),c(a),c([]))\n"
        "return\n");
  CHECK(u.syms.find("p", 1)->cls == PredClass::Det);
}

TEST_CASE("argument layout marks misplaced last-call arguments") {
  auto u = compile("p(X,Y,Z) => q(f(X,Y)), r(Z,Y,X,W).\n");
  CHECK(disasm(u, "p", 3) ==
        "allocate_det(3,5)\n"
        "move_struct(y(-1),f/2,u(3),u(2))\n"
        "call(q/1,u(-1))\n"
        "last_call(0b1101,r/4,u(1),u(2),u(3),v(0))\n");
}

TEST_CASE("list dispatch compiles to switch_on_cons") {
  auto u = compile(
      "app([],Ys,Zs) => Zs = Ys.\n"
      "app([X|Xs],Ys,Zs) => Zs = [X|Zs1], app(Xs,Ys,Zs1).\n");
  CHECK(disasm(u, "app", 3) ==
        "allocate_det(3,5)\n"
        "switch_on_cons(y(3),l1,l2,l2,v(3),v(-1))\n"
        "unify_list(y(1),1,u(3),v(1))\n"
        "last_call(0b001,app/3,u(-1),u(2),u(1))\n"
        "l1: unify_value(y(1),u(2))\n"
        "return\n"
        "l2: fail\n");
}

TEST_CASE("constant keys chain through jmpn_constant") {
  auto u = compile(
      "color(red) => true.\ncolor(green) => true.\ncolor(blue) => true.\n");
  CHECK(disasm(u, "color", 1) ==
        "allocate_det(1,4)\n"
        "jmpn_constant(y(1),l3,l1,c(red))\n"
        "return\n"
        "l1: jmpn_constant(y(1),l3,l2,c(green))\n"
        "return\n"
        "l2: jmpn_constant(y(1),l3,l3,c(blue))\n"
        "return\n"
        "l3: fail\n");
}

TEST_CASE("four or more constant keys dispatch through a hash") {
  auto u = compile(
      "size(a,X) => X = 1.\nsize(b,X) => X = 2.\nsize(c,X) => X = 3.\n"
      "size(d,X) => X = 4.\nsize(e,X) => X = 5.\n");
  CHECK(disasm(u, "size", 2) ==
        "allocate_det(2,4)\n"
        "hash(y(2),5,(a,l1),(b,l2),(c,l3),(d,l4),(e,l5),l6,l6)\n"
        "l1: unify_constant(y(1),c(1))\n"
        "return\n"
        "l2: unify_constant(y(1),c(2))\n"
        "return\n"
        "l3: unify_constant(y(1),c(3))\n"
        "return\n"
        "l4: unify_constant(y(1),c(4))\n"
        "return\n"
        "l5: unify_constant(y(1),c(5))\n"
        "return\n"
        "l6: fail\n");
}

TEST_CASE("a var-tested clause joins the dispatch tree as the unbound case") {
  auto u = compile(
      "v(N,R), var(N) => R = unbound.\nv(0,R) => R = zero.\n"
      "v([],R) => R = nil.\n");
  CHECK(disasm(u, "v", 2) ==
        "allocate_det(2,4)\n"
        "jmpn_constant(y(2),l2,l1,c(0))\n"
        "unify_constant(y(1),c(zero))\n"
        "return\n"
        "l1: jmpn_constant(y(2),l2,l3,c([]))\n"
        "unify_constant(y(1),c(nil))\n"
        "return\n"
        "l2: unify_constant(y(1),c(unbound))\n"
        "return\n"
        "l3: fail\n");
}

TEST_CASE("a type test other than var keeps source clause order") {
  auto u = compile("t(0,R) => R = zero.\nt(N,R), integer(N) => R = num.\n");
  CHECK(disasm(u, "t", 2) ==
        "allocate_det(2,4)\n"
        "jmpn_constant(y(2),l1,l1,c(0))\n"
        "unify_constant(y(1),c(zero))\n"
        "return\n"
        "l1: builtin_test(integer,y(2),l2)\n"
        "unify_constant(y(1),c(num))\n"
        "return\n"
        "l2: fail\n");
}

TEST_CASE("functor keys dispatch through jmpn_struct and fetch arguments") {
  auto u = compile(
      "eval(num(N),R) => R = N.\n"
      "eval(add(A,B),R) => eval(A,X), eval(B,Y), R is X + Y.\n");
  CHECK(disasm(u, "eval", 2) ==
        "allocate_det(2,8)\n"
        "jmpn_struct(y(2),l2,l1,num/1,v(2))\n"
        "unify_value(y(1),u(2))\n"
        "return\n"
        "l1: jmpn_struct(y(2),l2,l2,add/2,v(2),v(-1))\n"
        "call(eval/2,u(2),v(-2))\n"
        "call(eval/2,u(-1),v(-3))\n"
        "move_struct(y(-4),+/2,u(-2),u(-3))\n"
        "builtin(is/2,u(1),u(-4))\n"
        "return\n"
        "l2: fail\n");
}

TEST_CASE("guard comparisons emit builtin_test chained to the next clause") {
  auto u = compile("max(X,Y,Z), X >= Y => Z = X.\nmax(X,Y,Z) => Z = Y.\n");
  CHECK(disasm(u, "max", 3) ==
        "allocate_det(3,4)\n"
        "builtin_test(>=,u(3),u(2),l1)\n"
        "unify_value(y(1),u(3))\n"
        "return\n"
        "l1: unify_value(y(1),u(2))\n"
        "return\n");
}

TEST_CASE("deep head patterns match level by level") {
  auto u = compile("h(f(g(X)),R) => R = X.\n");
  CHECK(disasm(u, "h", 2) ==
        "allocate_det(2,4)\n"
        "jmpn_struct(y(2),l1,l1,f/1,v(2))\n"
        "jmpn_struct(y(2),l1,l1,g/1,v(2))\n"
        "unify_value(y(1),u(2))\n"
        "return\n"
        "l1: fail\n");
}

TEST_CASE("backtrackable clauses keep argument slots intact") {
  auto u = compile(
      "mem(X,[Y|_]) ?=> X = Y.\nmem(X,[_|T]) => mem(X,T).\n");
  // The first clause may be retried, so Y lands in a local slot; after the
  // final clause commits, T may overwrite the dead list argument.
  CHECK(disasm(u, "mem", 2) ==
        "allocate_nondet(2,9)\n"
        "fork(l1)\n"
        "switch_on_cons(y(1),l1,l1,l1,v(-1),v(0))\n"
        "unify_value(y(2),u(-1))\n"
        "return\n"
        "l1: cut\n"
        "switch_on_cons(y(1),l2,l2,l2,v(0),v(1))\n"
        "last_call(0b00,mem/2,u(2),u(1))\n"
        "l2: fail\n");
}

TEST_CASE("a committed middle clause makes later clauses unreachable") {
  auto u = compile("a ?=> b.\na => c.\na ?=> d.\n");
  CHECK(disasm(u, "a", 0) ==
        "allocate_nondet(0,8)\n"
        "fork(l1)\n"
        "call(b/0)\n"
        "return\n"
        "l1: cut\n"
        "last_call(0b0,c/0)\n"
        "fork(l2)\n"
        "call(d/0)\n"
        "return\n"
        "l2: cut\n"
        "fail\n");
}

TEST_CASE("a cut in the body forces a choice-point frame") {
  auto u = compile("f(X) => g(X), !, h(X).\n");
  CHECK(disasm(u, "f", 1) ==
        "allocate_nondet(1,8)\n"
        "cut\n"
        "call(g/1,u(1))\n"
        "cut\n"
        "last_call(0b0,h/1,u(1))\n");
  CHECK(u.syms.find("f", 1)->cls == PredClass::Det);
}

TEST_CASE("arithmetic flattens into builds and reuses dead slots") {
  auto u = compile("s(X,Y) => Y is X * 2 + 1.\n");
  CHECK(disasm(u, "s", 2) ==
        "allocate_det(2,5)\n"
        "move_struct(y(-1),*/2,u(2),c(2))\n"
        "move_struct(y(2),+/2,u(-1),c(1))\n"
        "builtin(is/2,u(1),u(2))\n"
        "return\n");
}

TEST_CASE("constants embed atoms, integers, floats, and nil") {
  auto u = compile("p(X) => X = point(1.5,-2).\n");
  CHECK(disasm(u, "p", 1) ==
        "allocate_det(1,4)\n"
        "unify_struct(y(1),point/2,c(1.5),c(-2))\n"
        "return\n");
}

TEST_CASE("a self last call stays a plain last_call before optimization") {
  auto u = compile("loop(N) => loop(N).\n");
  CHECK(disasm(u, "loop", 1) ==
        "allocate_det(1,4)\n"
        "last_call(0b0,loop/1,u(1))\n");
}

TEST_CASE("tabled predicates fork every clause and consume on completion") {
  auto u = compile(
      ":- table path/2.\n"
      "path(X,Y) ?=> edge(X,Y).\n"
      "path(X,Y) ?=> edge(X,Z), path(Z,Y).\n");
  CHECK(disasm(u, "path", 2) ==
        "allocate_table(2,11,l3)\n"
        "l1: fork(l2)\n"
        "call(edge/2,u(2),u(1))\n"
        "table_answer\n"
        "l2: fork(l3)\n"
        "call(edge/2,u(2),v(-1))\n"
        "call(path/2,u(-1),u(1))\n"
        "table_answer\n"
        "l3: table_complete(l1)\n"
        "table_consume\n");
  CHECK(u.syms.find("path", 2)->cls == PredClass::Tabled);
  CHECK(u.syms.find("path", 2)->frame_size == 11);
}

TEST_CASE("event rules register watchers and re-test guards on wakeup") {
  auto u = compile(
      "echo(X), var(X), {event(X,M)} => writeln(M), echo(X).\n"
      "echo(X) => writeln(done).\n");
  CHECK(disasm(u, "echo", 1) ==
        "allocate_susp(1,9)\n"
        "builtin_test(var,y(1),l3)\n"
        "susp_watch(event,y(1),l1)\n"
        "susp_sleep_return\n"
        "l1: susp_event_args(u(1),v(-1))\n"
        "builtin_test(var,y(1),l2)\n"
        "builtin(writeln/1,u(-1))\n"
        "call(echo/1,u(1))\n"
        "susp_sleep_return\n"
        "l2: susp_end\n"
        "jmp(l3)\n"
        "l3: builtin(writeln/1,c(done))\n"
        "susp_return\n");
  CHECK(u.syms.find("echo", 1)->cls == PredClass::Action);
}

TEST_CASE("query mode suppresses frame reuse and ends with query_done") {
  auto u = compile("loop(N) => q(N), loop(N).\n", /*query_mode=*/true);
  CHECK(disasm(u, "loop", 1) ==
        "allocate_det(1,4)\n"
        "call(q/1,u(1))\n"
        "call(loop/1,u(1))\n"
        "query_done\n");
}

TEST_CASE("an unused argument compiles to a void operand") {
  auto u = compile("d(X,Y), X \\== Y => q.\nd(_,_) => r.\n");
  CHECK(disasm(u, "d", 2) ==
        "allocate_det(2,4)\n"
        "builtin_test(\\==,u(2),u(1),l1)\n"
        "last_call(0b0,q/0)\n"
        "l1: last_call(0b0,r/0)\n");
}
