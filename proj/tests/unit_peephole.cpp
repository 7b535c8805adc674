// Bytecode optimizer: specialization of tagged instructions into fixed
// forms, merging of adjacent pairs, and relocation of labels and symbol
// ranges across the rewrite.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "toam/canonical.hpp"
#include "toam/codegen.hpp"
#include "toam/instr.hpp"
#include "toam/peephole.hpp"
#include "toam/reader.hpp"
#include "toam/symbols.hpp"

using namespace toam;

namespace {

struct Unit {
  SymbolTable syms;
  std::vector<Instr> code;
};

Unit compile_opt(const std::string& text) {
  Unit u;
  auto canon = canonicalize_program(parse_program(text));
  REQUIRE(canon.diagnostics.empty());
  std::vector<char> det_safe;
  for (auto& p : canon.preds) compile_predicate(p, u.syms, u.code, det_safe);
  peephole(u.code, u.syms);
  return u;
}

std::string disasm(const Unit& u, const std::string& name, int arity) {
  const Symbol* s = u.syms.find(name, arity);
  REQUIRE(s != nullptr);
  REQUIRE(s->entry >= 0);
  return disassemble(u.code, s->entry, s->end, u.syms,
                     fixed_slots_for(u.code[size_t(s->entry)].op));
}

}  // namespace

TEST_CASE("one-element list builds compile to unify_cons") {
  auto u = compile_opt("c(X,T,L) => L = [X|T].\n");
  CHECK(disasm(u, "c", 3) ==
        "allocate_det(3,4)\n"
        "unify_cons(y(1),u(3),u(2))\n"
        "return\n");
}

TEST_CASE("structure builds specialize by arity") {
  auto u = compile_opt(
      "w(A,B,C,D,X,Y,Z) => X = f(A), Y = g(A,B), Z = h(A,B,C,D).\n");
  CHECK(disasm(u, "w", 7) ==
        "allocate_det(7,4)\n"
        "unify_struct1(y(3),f/1,u(7))\n"
        "unify_struct2(y(2),g/2,u(7),u(6))\n"
        "unify_struct_h(y(1),h/4,u(7),u(6))\n"
        "unify_arg(u(5))\n"
        "unify_arg(u(4))\n"
        "return\n");
}

TEST_CASE("calls with loaded operands compress to fixed forms") {
  auto u = compile_opt("k(A,B) => q(A,B), r(W), s(A,W), t.\n");
  CHECK(disasm(u, "k", 2) ==
        "allocate_det(2,5)\n"
        "call_2_u(q/2,2,1)\n"
        "call_v(r/1,v(-1))\n"
        "call_2_u(s/2,2,-1)\n"
        "last_call_0(t/0)\n");
}

TEST_CASE("a self last call with arguments in place becomes tail_call") {
  auto u = compile_opt("loop(N) => loop(N).\n");
  CHECK(disasm(u, "loop", 1) ==
        "allocate_det(1,4)\n"
        "tail_call_0(loop/1)\n");
}

TEST_CASE("misplaced last-call operands carry their target positions") {
  auto u = compile_opt(
      "p(X,Y,Z) => q(f(X,Y)), r(Z,Y,X,W).\n"
      "g(X,Y) => h(Y,X).\n");
  // three misplaced operands: beyond the fixed forms, kept general
  CHECK(disasm(u, "p", 3) ==
        "allocate_det(3,5)\n"
        "move_struct(y(-1),f/2,u(3),u(2))\n"
        "call_1_u(q/1,-1)\n"
        "last_call(0b1101,r/4,u(1),u(2),u(3),v(0))\n");
  CHECK(disasm(u, "g", 2) ==
        "allocate_det(2,4)\n"
        "last_call_2(1,2,h/2,u(1),u(2))\n");
}

TEST_CASE("a non-self last call keeps the plain form") {
  auto u = compile_opt("a(X) => b(X).\nb(X) => a(X).\n");
  CHECK(disasm(u, "a", 1) ==
        "allocate_det(1,4)\n"
        "last_call_0(b/1)\n");
  CHECK(disasm(u, "b", 1) ==
        "allocate_det(1,4)\n"
        "last_call_0(a/1)\n");
}

TEST_CASE("fork fuses with a following constant match") {
  auto u = compile_opt("p(X) ?=> X = a.\np(X) => X = b.\n");
  CHECK(disasm(u, "p", 1) ==
        "allocate_nondet(1,8)\n"
        "fork_unify_constant(l1,y(1),c(a))\n"
        "return\n"
        "l1: cut\n"
        "unify_constant_return(y(1),c(b))\n");
}

TEST_CASE("returns fuse with the preceding unification") {
  auto u = compile_opt(
      "app([],Ys,Zs) => Zs = Ys.\n"
      "app([X|Xs],Ys,Zs) => Zs = [X|Zs1], app(Xs,Ys,Zs1).\n");
  CHECK(disasm(u, "app", 3) ==
        "allocate_det(3,5)\n"
        "switch_on_cons(y(3),l1,l2,l2,v(3),v(-1))\n"
        "unify_cons(y(1),u(3),v(1))\n"
        "tail_call_1(1,app/3,u(-1))\n"
        "l1: unify_value_return(y(1),u(2))\n"
        "l2: fail\n");
}

TEST_CASE("cut fuses with an adjacent return") {
  auto u = compile_opt("p ?=> true.\np => true.\n");
  CHECK(disasm(u, "p", 0) ==
        "allocate_nondet(0,8)\n"
        "fork(l1)\n"
        "return\n"
        "l1: cut_return\n");
}

TEST_CASE("merged blocks keep hash labels on block starts") {
  auto u = compile_opt(
      "size(tiny,S) => S = 1.\n"
      "size(small,S) => S = 2.\n"
      "size(medium,S) => S = 3.\n"
      "size(large,S) => S = 4.\n"
      "size(huge,S) => S = 5.\n");
  CHECK(disasm(u, "size", 2) ==
        "allocate_det(2,4)\n"
        "hash(y(2),5,(tiny,l1),(small,l2),(medium,l3),(large,l4),(huge,l5)"
        ",l6,l6)\n"
        "l1: unify_constant_return(y(1),c(1))\n"
        "l2: unify_constant_return(y(1),c(2))\n"
        "l3: unify_constant_return(y(1),c(3))\n"
        "l4: unify_constant_return(y(1),c(4))\n"
        "l5: unify_constant_return(y(1),c(5))\n"
        "l6: fail\n");
}

TEST_CASE("table completion labels survive rewriting") {
  auto u = compile_opt(
      ":- table path/2.\n"
      "path(X,Y) ?=> edge(X,Y).\n"
      "path(X,Y) ?=> path(X,Z), edge(Z,Y).\n"
      "edge(1,2) => true.\n");
  CHECK(disasm(u, "path", 2) ==
        "allocate_table(2,11,l3)\n"
        "l1: fork(l2)\n"
        "call_2_u(edge/2,2,1)\n"
        "table_answer\n"
        "l2: fork(l3)\n"
        "call_uv(path/2,u(2),v(-1))\n"
        "call_2_u(edge/2,-1,1)\n"
        "table_answer\n"
        "l3: table_complete(l1)\n"
        "table_consume\n");
  const Symbol* path = u.syms.find("path", 2);
  const Symbol* edge = u.syms.find("edge", 2);
  CHECK(path->entry == 0);
  CHECK(path->end == 10);
  CHECK(edge->entry == 10);
  CHECK(edge->end == int(u.code.size()));
  CHECK(disasm(u, "edge", 2) ==
        "allocate_det(2,4)\n"
        "jmpn_constant(y(2),l1,l1,c(1))\n"
        "jmpn_constant(y(1),l1,l1,c(2))\n"
        "return\n"
        "l1: fail\n");
}

TEST_CASE("a jump target between a pair blocks the merge") {
  SymbolTable syms;
  std::uint32_t id = syms.intern("p", 0);
  Symbol& s = syms.at(id);
  s.cls = PredClass::Det;
  s.entry = 0;
  s.end = 3;

  std::vector<Instr> code(3);
  code[0].op = Op::Jmp;
  code[0].a = 2;  // lands between the cut/return pair
  code[1].op = Op::Cut;
  code[2].op = Op::Return;

  peephole(code, syms);
  REQUIRE(code.size() == 3);
  CHECK(code[0].op == Op::Jmp);
  CHECK(code[0].a == 2);
  CHECK(code[1].op == Op::Cut);
  CHECK(code[2].op == Op::Return);
  CHECK(syms.at(id).entry == 0);
  CHECK(syms.at(id).end == 3);
}

TEST_CASE("optimizer opcode classes are disjoint") {
  int spec = 0, merged = 0;
  for (int i = 0; i < int(Op::Count_); ++i) {
    Op op = Op(i);
    CHECK_FALSE((is_specialized_op(op) && is_merged_op(op)));
    spec += is_specialized_op(op);
    merged += is_merged_op(op);
  }
  CHECK(spec == 15);
  CHECK(merged == 6);
}
