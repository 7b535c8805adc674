// Fixed operator table shared by the reader and the writer.
#pragma once

#include <optional>
#include <string>

namespace toam {

enum class OpType { XFX, XFY, YFX, FY, FX };

struct OpDef {
  int prec;
  OpType type;
};

// Max precedence of a term allowed as the left/right argument of an operator.
inline int op_left_max(const OpDef& d) {
  return d.type == OpType::YFX ? d.prec : d.prec - 1;
}
inline int op_right_max(const OpDef& d) {
  return d.type == OpType::XFY ? d.prec : d.prec - 1;
}
inline int op_arg_max(const OpDef& d) {  // prefix operators
  return d.type == OpType::FY ? d.prec : d.prec - 1;
}

std::optional<OpDef> infix_op(const std::string& name);
std::optional<OpDef> prefix_op(const std::string& name);

}  // namespace toam
