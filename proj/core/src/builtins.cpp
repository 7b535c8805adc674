#include "toam/builtins.hpp"

namespace toam {

const std::vector<BuiltinDef>& builtin_defs() {
  static const std::vector<BuiltinDef> defs = {
      {"=", 2, Bi::Unify},
      {"==", 2, Bi::Eq},
      {"\\==", 2, Bi::Ne},
      {"<", 2, Bi::Lt},
      {">", 2, Bi::Gt},
      {"=<", 2, Bi::Le},
      {">=", 2, Bi::Ge},
      {"=:=", 2, Bi::ArithEq},
      {"=\\=", 2, Bi::ArithNe},
      {"is", 2, Bi::Is},
      {"var", 1, Bi::Var},
      {"nonvar", 1, Bi::Nonvar},
      {"atom", 1, Bi::Atom},
      {"integer", 1, Bi::Integer},
      {"functor", 3, Bi::Functor},
      {"arg", 3, Bi::Arg},
      {"=..", 2, Bi::Univ},
      {"call", 1, Bi::Call},
      {"once", 1, Bi::Once},
      {"\\+", 1, Bi::Naf},
      {"repeat", 0, Bi::Repeat},
      {"true", 0, Bi::True},
      {"fail", 0, Bi::Fail},
      {"false", 0, Bi::Fail},
      {"write", 1, Bi::Write},
      {"writeln", 1, Bi::Writeln},
      {"nl", 0, Bi::Nl},
      {"length", 2, Bi::Length},
      {"new_array", 2, Bi::NewArray},
      {"post", 1, Bi::Post},
      {"@=", 2, Bi::AtEq},
      {"throw", 1, Bi::Throw},
      {"$iter_list", 2, Bi::IterList},
  };
  return defs;
}

}  // namespace toam
