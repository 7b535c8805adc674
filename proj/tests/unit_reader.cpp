// Reader: tokens, operator parsing, clause classification, declarations.

#include <string>

#include "doctest.h"
#include "toam/cell.hpp"
#include "toam/errors.hpp"
#include "toam/reader.hpp"
#include "toam/writer.hpp"

using namespace toam;
using ast::TermP;

static std::string roundtrip(const std::string& s) {
  return term_to_string(parse_term(s), {.quoted = true});
}

TEST_CASE("facts and horn rules") {
  auto p = parse_program("p(a).\nq(X) :- p(X), p(X).\n");
  REQUIRE(p.clauses.size() == 2);
  CHECK(p.clauses[0].kind == SourceClause::Kind::Horn);
  CHECK(p.clauses[0].body.empty());
  CHECK(p.clauses[0].head->name == "p");
  CHECK(p.clauses[1].body.size() == 2);
  CHECK(p.clauses[1].nvars == 1);
}

TEST_CASE("matching clause kinds") {
  auto p = parse_program(
      "merge([],Ys,Zs) => Zs=Ys.\n"
      "m(X,Y), X==Y ?=> true.\n"
      "echo(X),{event(X,Mes)}=>writeln(Mes).\n");
  REQUIRE(p.clauses.size() == 3);
  CHECK(p.clauses[0].kind == SourceClause::Kind::DetMatch);
  CHECK(p.clauses[0].guard.empty());
  CHECK(p.clauses[1].kind == SourceClause::Kind::NondetMatch);
  REQUIRE(p.clauses[1].guard.size() == 1);
  CHECK(p.clauses[1].guard[0]->name == "==");
  CHECK(p.clauses[2].kind == SourceClause::Kind::ActionRule);
  REQUIRE(p.clauses[2].events.size() == 1);
  CHECK(p.clauses[2].events[0]->name == "event");
}

TEST_CASE("events are rejected on backtrackable clauses") {
  CHECK_THROWS_AS(parse_program("p(X), {e(X)} ?=> true.\n"), PrologError);
}

TEST_CASE("table declarations") {
  auto p = parse_program(
      ":- table path/2.\n"
      ":- table sp(+,+,-,min).\n"
      ":- table sp2(+,+,-,min):3.\n"
      ":- table all(+,-):2.\n");
  REQUIRE(p.decls.size() == 4);
  CHECK(p.decls[0].name == "path");
  CHECK(p.decls[0].arity == 2);
  CHECK(!p.decls[0].has_modes);
  CHECK(p.decls[0].cardinality == -1);
  CHECK(p.decls[1].has_modes);
  REQUIRE(p.decls[1].modes.size() == 4);
  CHECK(p.decls[1].modes[3] == ArgMode::Min);
  CHECK(p.decls[1].cardinality == 1);  // min/max defaults to 1
  CHECK(p.decls[2].cardinality == 3);
  CHECK(p.decls[3].cardinality == 2);
  CHECK(p.decls[3].modes[1] == ArgMode::Out);
}

TEST_CASE("bad table declarations") {
  CHECK_THROWS_AS(parse_program(":- table p(min,max).\n"), PrologError);
  CHECK_THROWS_AS(parse_program(":- table p/2:1.\n"), PrologError);
  CHECK_THROWS_AS(parse_program(":- table p(+,-):0.\n"), PrologError);
  CHECK_THROWS_AS(parse_program(":- table p(+,foo).\n"), PrologError);
}

TEST_CASE("mode declaration") {
  auto p = parse_program(":- mode append(+,+,-).\n");
  REQUIRE(p.decls.size() == 1);
  CHECK(p.decls[0].kind == Declaration::Kind::Mode);
  CHECK(p.decls[0].name == "append");
  CHECK(p.decls[0].arity == 3);
  CHECK(p.decls[0].modes[2] == ArgMode::Out);
}

TEST_CASE("range operator does not lex as a float") {
  TermP t = parse_term("1..2..7");
  REQUIRE(ast::is_cmp(t, "..", 2));        // (1..2)..7 — left associative
  CHECK(ast::is_cmp(t->args[0], "..", 2));
  CHECK(t->args[1]->ival == 7);
}

TEST_CASE("binary and hex literals") {
  CHECK(parse_term("0b1101")->ival == 13);
  CHECK(parse_term("0x1f")->ival == 31);
}

TEST_CASE("integer range limits") {
  CHECK(parse_term("2305843009213693951")->ival == kIntMax);
  CHECK(parse_term("-2305843009213693952")->ival == kIntMin);
  CHECK_THROWS_AS(parse_term("2305843009213693952"), PrologError);
}

TEST_CASE("comprehension syntax parses inside a list") {
  TermP t = parse_term("Xs @= [X : (X,_) in Ps]");
  REQUIRE(ast::is_cmp(t, "@=", 2));
  TermP lst = t->args[1];
  REQUIRE(ast::is_cons(lst));
  CHECK(ast::is_cmp(lst->args[0], ":", 2));
  CHECK(ast::is_cmp(lst->args[0]->args[1], "in", 2));
}

TEST_CASE("anonymous variables are distinct") {
  auto q = parse_query("p(_, _, X)");
  CHECK(q.nvars == 3);
  REQUIRE(q.vars.size() == 1);
  CHECK(q.vars[0].first == "X");
}

TEST_CASE("query parsing flattens conjunction") {
  auto q = parse_query("X is 1+2, X =:= 3.");
  REQUIRE(q.goals.size() == 2);
  CHECK(q.goals[0]->name == "is");
  CHECK(q.goals[1]->name == "=:=");
}

TEST_CASE("stored query directives") {
  auto p = parse_program("?- append([1],[2],X).\n");
  REQUIRE(p.queries.size() == 1);
  CHECK(p.queries[0].goals.size() == 1);
}

TEST_CASE("comments and layout") {
  auto p = parse_program(
      "% line comment\n"
      "p(a). /* block\n comment */ p(b).\n");
  CHECK(p.clauses.size() == 2);
}

TEST_CASE("syntax errors carry position") {
  try {
    parse_program("p(a)\nq");
    FAIL("expected a syntax error");
  } catch (const PrologError& e) {
    CHECK(e.kind == ErrKind::Syntax);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("writer prints comma pairs as tuples") {
  CHECK(roundtrip("write((a,1))") == "write((a,1))");
  CHECK(term_to_string(parse_term("(a,1)")) == "(a,1)");
  CHECK(term_to_string(parse_term("(a,1,2)")) == "(a,1,2)");
}

TEST_CASE("writer round-trips operators and lists") {
  for (const char* s :
       {"[1,2,3]", "[a|T]", "[]", "f(X,g(Y))", "1+2*3", "(1+2)*3", "a- -1",
        "X is Y mod 2", "{e(X)}", "p:-q,r", "-(1)", "[[a],[b,c]]",
        "'hello world'", "'it''s'", "f(-1,+2)", "X = (\\+a)", "\\+a",
        "1..2..7", "Xs @= [X : (X,_) in Ps]", "sp(+,+,-,min):2",
        "f(A,B,A)", "3.5", "-2.25e10", "foo", "[-]"}) {
    TermP once = parse_term(s);
    std::string printed = term_to_string(once, {.quoted = true});
    CAPTURE(s);
    CAPTURE(printed);
    CHECK(ast::variant(once, parse_term(printed)));
  }
}

TEST_CASE("unsupported directives are load errors") {
  try {
    parse_program(":- dynamic(p/2).\n");
    FAIL("expected a load error");
  } catch (const PrologError& e) {
    CHECK(e.kind == ErrKind::Load);
  }
}
