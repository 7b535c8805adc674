// Host-implemented builtin predicates, addressed by dense ids.
#pragma once

#include <string>
#include <vector>

namespace toam {

enum class Bi : int {
  Unify,     // =/2
  Eq,        // ==/2
  Ne,        // \==/2
  Lt, Gt, Le, Ge,      // </2 >/2 =</2 >=/2
  ArithEq, ArithNe,    // =:=/2 =\=/2
  Is,        // is/2
  Var, Nonvar, Atom, Integer,  // type tests /1
  Functor,   // functor/3
  Arg,       // arg/3
  Univ,      // =../2
  Call,      // call/1 (control transfer)
  Once,      // once/1 (first solution only)
  Naf,       // \+/1 (negation as failure)
  Repeat,    // repeat/0 (unbounded choice point)
  True, Fail,
  Write, Writeln, Nl,
  Length,    // length/2
  NewArray,  // new_array/2
  Post,      // post/1
  AtEq,      // @=/2
  Throw,     // throw/1
  IterList,  // '$iter_list'/2: collection or range -> list
  Count_
};

struct BuiltinDef {
  const char* name;
  int arity;
  Bi id;
};

const std::vector<BuiltinDef>& builtin_defs();

}  // namespace toam
