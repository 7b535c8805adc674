// Cell tagging and term tree basics.

#include "doctest.h"
#include "toam/ast.hpp"
#include "toam/cell.hpp"

using namespace toam;

TEST_CASE("integer cells cover the full 62-bit range") {
  for (std::int64_t v : {std::int64_t(0), std::int64_t(1), std::int64_t(-1),
                         std::int64_t(123456789), kIntMin, kIntMax}) {
    Cell c = make_int(v);
    CHECK(tag(c) == Tag::Int);
    CHECK(int_val(c) == v);
  }
  CHECK(!int_fits(kIntMax + 1));
  CHECK(!int_fits(kIntMin - 1));
}

TEST_CASE("tags are disjoint") {
  CHECK(tag(make_atom(7)) == Tag::Atm);
  CHECK(atom_sym(make_atom(7)) == 7);
  CHECK(tag(make_ref(12)) == Tag::Ref);
  CHECK(ref_addr(make_ref(12)) == 12);
  CHECK(tag(make_susp(3)) == Tag::Susp);
  CHECK(susp_idx(make_susp(3)) == 3);
  CHECK(tag(make_str(40)) == Tag::Str);
  CHECK(tag(make_lst(41)) == Tag::Lst);
  CHECK(tag(make_flt(42)) == Tag::Flt);
  CHECK(tag(make_fun(9)) == Tag::Fun);
  CHECK(fun_sym(make_fun(9)) == 9);
}

TEST_CASE("self reference marks a free variable") {
  Cell c = make_ref(5);
  CHECK(is_self_ref(c, 5));
  CHECK(!is_self_ref(c, 6));
  CHECK(is_free_cell(make_susp(0), 5));
}

TEST_CASE("variant compares up to renaming") {
  using namespace toam::ast;
  // f(X,Y,X)
  TermP a = mk_cmp("f", {mk_var("X", 0), mk_var("Y", 1), mk_var("X", 0)});
  TermP b = mk_cmp("f", {mk_var("A", 5), mk_var("B", 6), mk_var("A", 5)});
  TermP c = mk_cmp("f", {mk_var("A", 5), mk_var("B", 6), mk_var("B", 6)});
  CHECK(variant(a, b));
  CHECK(!variant(a, c));
  CHECK(!equal(a, b));
  CHECK(equal(a, a));
}

TEST_CASE("collect_vars is first-occurrence ordered") {
  using namespace toam::ast;
  TermP t = mk_cmp("f", {mk_var("X", 3), mk_cons(mk_var("Y", 1), mk_var("X", 3))});
  std::vector<int> vs;
  collect_vars(t, vs);
  REQUIRE(vs.size() == 2);
  CHECK(vs[0] == 3);
  CHECK(vs[1] == 1);
}
