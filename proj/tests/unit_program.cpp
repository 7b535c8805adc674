// Program assembly: builtin registration, prelude predicates, determinism
// analysis, control stubs, and query compilation against a loaded image.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "toam/codegen.hpp"
#include "toam/errors.hpp"
#include "toam/instr.hpp"
#include "toam/program.hpp"

using namespace toam;

namespace {

std::string disasm(const Program& pg, const Symbol& s) {
  return disassemble(pg.code, s.entry, s.end, pg.syms,
                     fixed_slots_for(pg.code[size_t(s.entry)].op));
}

std::string disasm(const Program& pg, const std::string& name, int arity) {
  const Symbol* s = pg.syms.find(name, arity);
  REQUIRE(s != nullptr);
  REQUIRE(s->entry >= 0);
  return disasm(pg, *s);
}

bool safe(const Program& pg, const std::string& name, int arity) {
  const Symbol* s = pg.syms.find(name, arity);
  REQUIRE(s != nullptr);
  auto id = std::uint32_t(s - &pg.syms.at(0));
  return id < pg.det_safe.size() && pg.det_safe[id];
}

const char* kProgram =
    "app([],Ys,Zs) => Zs = Ys.\n"
    "app([X|Xs],Ys,Zs) => Zs = [X|Zs1], app(Xs,Ys,Zs1).\n"
    "mem(X,[Y|_]) ?=> X = Y.\n"
    "mem(X,[_|T]) => mem(X,T).\n"
    "first(X,L) => mem(X,L), !.\n"
    "uses_mem(X,L) => mem(X,L).\n"
    "metacaller(G) => call(G), writeln(G).\n"
    "?- app([1,2],[3],L), writeln(L).\n";

}  // namespace

TEST_CASE("builtins are registered with their ids") {
  Program pg = load_program("");
  REQUIRE(pg.ok());
  const Symbol* is2 = pg.syms.find("is", 2);
  REQUIRE(is2 != nullptr);
  CHECK(is2->cls == PredClass::Builtin);
  const Symbol* naf = pg.syms.find("\\+", 1);
  REQUIRE(naf != nullptr);
  CHECK(naf->cls == PredClass::Builtin);
  CHECK(pg.syms.find("repeat", 0) != nullptr);
}

TEST_CASE("calls never leaving choice points are determinate-safe") {
  Program pg = load_program(kProgram);
  REQUIRE(pg.ok());
  CHECK(safe(pg, "app", 3));        // determinate self-recursion
  CHECK_FALSE(safe(pg, "mem", 2));  // backtrackable clause without a cut
  CHECK(safe(pg, "first", 2));      // cut covers the unsafe call
  CHECK_FALSE(safe(pg, "uses_mem", 2));  // unsafe call after no cut
  CHECK_FALSE(safe(pg, "metacaller", 1));  // call/1 runs anything
  CHECK(safe(pg, "$once", 1));
  CHECK(safe(pg, "$naf", 1));
}

TEST_CASE("prelude control predicates compile to cut choreography") {
  Program pg = load_program("");
  REQUIRE(pg.ok());
  CHECK(disasm(pg, "$once", 1) ==
        "allocate_nondet(1,8)\n"
        "fork(l1)\n"
        "builtin(call/1,u(1))\n"
        "cut_return\n"
        "l1: cut_fail\n");
  CHECK(disasm(pg, "$naf", 1) ==
        "allocate_nondet(1,8)\n"
        "fork(l1)\n"
        "builtin(call/1,u(1))\n"
        "cut_fail\n"
        "l1: cut_return\n");
  CHECK(pg.syms.find("$once", 1)->hidden);
  CHECK(pg.syms.find("$naf", 1)->hidden);
}

TEST_CASE("control stubs are emitted and survive optimization") {
  Program pg = load_program("");
  REQUIRE(pg.ok());
  CHECK(disasm(pg, pg.syms.at(pg.cut_fail)) == "cut_fail\n");
  CHECK(disasm(pg, pg.syms.at(pg.query_fail)) == "query_fail\n");
  CHECK(disasm(pg, pg.syms.at(pg.retry)) == "return\n");
  Program raw = load_program("", {.optimize = false});
  CHECK(disasm(raw, raw.syms.at(raw.cut_fail)) ==
        "cut\n"
        "fail\n");
}

TEST_CASE("queries compile against the loaded image") {
  Program pg = load_program(kProgram);
  REQUIRE(pg.ok());
  REQUIRE(pg.queries.size() == 1);
  std::uint32_t q = compile_query(pg, pg.queries[0]);
  const Symbol& s = pg.syms.at(q);
  CHECK(s.name == "$query_0");
  CHECK(s.arity == 1);  // one named variable: L
  CHECK(s.hidden);
  CHECK(disasm(pg, s) ==
        "allocate_det(1,6)\n"
        "move_list(y(-1),2,c(1),c(2),c([]))\n"
        "move_cons(y(-2),c(3),c([]))\n"
        "call_3_u(app/3,-1,-2,1)\n"
        "builtin(writeln/1,u(1))\n"
        "query_done\n");
  std::uint32_t q2 = compile_query(pg, pg.queries[0]);
  CHECK(pg.syms.at(q2).name == "$query_1");
}

TEST_CASE("a variable-free query gets a zero-arity frame") {
  Program pg = load_program("p(1) => true.\n?- p(1).\n");
  REQUIRE(pg.ok());
  std::uint32_t q = compile_query(pg, pg.queries[0]);
  CHECK(pg.syms.at(q).arity == 0);
}

TEST_CASE("directive variables do not leak into later queries") {
  Program pg = load_program(
      "p(A,B,C) => q(A,B,C).\n"
      "q(X,Y,Z) => X = Y, Y = Z.\n"
      "?- p(1,1,W), writeln(W).\n");
  REQUIRE(pg.ok());
  REQUIRE(pg.queries.size() == 1);
  CHECK(pg.queries[0].vars.size() == 1);
  CHECK(pg.queries[0].vars[0].first == "W");
}

TEST_CASE("redefining a builtin is a load error") {
  Program pg = load_program("is(X,Y) => X = Y.\n");
  REQUIRE_FALSE(pg.ok());
  CHECK(pg.diagnostics[0] == "builtin is/2 cannot be redefined");
}

TEST_CASE("syntax errors surface as diagnostics") {
  Program pg = load_program("p(X => true.\n");
  REQUIRE_FALSE(pg.ok());
  CHECK(pg.code.empty());
}
