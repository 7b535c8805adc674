#include "toam/ops.hpp"

#include <unordered_map>

namespace toam {

namespace {
const std::unordered_map<std::string, OpDef>& infix_table() {
  static const std::unordered_map<std::string, OpDef> t = {
      {":-", {1200, OpType::XFX}},  {"=>", {1200, OpType::XFX}},
      {"?=>", {1200, OpType::XFX}}, {",", {1000, OpType::XFY}},
      {":", {950, OpType::XFY}},    {"=", {700, OpType::XFX}},
      {"==", {700, OpType::XFX}},   {"\\==", {700, OpType::XFX}},
      {"is", {700, OpType::XFX}},   {"=:=", {700, OpType::XFX}},
      {"=\\=", {700, OpType::XFX}}, {"<", {700, OpType::XFX}},
      {">", {700, OpType::XFX}},    {"=<", {700, OpType::XFX}},
      {">=", {700, OpType::XFX}},   {"=..", {700, OpType::XFX}},
      {"@=", {700, OpType::XFX}},   {"in", {700, OpType::XFX}},
      {"..", {550, OpType::YFX}},   {"+", {500, OpType::YFX}},
      {"-", {500, OpType::YFX}},    {"*", {400, OpType::YFX}},
      {"/", {400, OpType::YFX}},    {"//", {400, OpType::YFX}},
      {"mod", {400, OpType::YFX}},
  };
  return t;
}

const std::unordered_map<std::string, OpDef>& prefix_table() {
  static const std::unordered_map<std::string, OpDef> t = {
      {":-", {1200, OpType::FX}}, {"?-", {1200, OpType::FX}},
      {"table", {1150, OpType::FX}}, {"mode", {1150, OpType::FX}},
      {"\\+", {900, OpType::FY}}, {"-", {200, OpType::FY}},
      {"+", {200, OpType::FY}},
  };
  return t;
}
}  // namespace

std::optional<OpDef> infix_op(const std::string& name) {
  auto it = infix_table().find(name);
  if (it == infix_table().end()) return std::nullopt;
  return it->second;
}

std::optional<OpDef> prefix_op(const std::string& name) {
  auto it = prefix_table().find(name);
  if (it == prefix_table().end()) return std::nullopt;
  return it->second;
}

}  // namespace toam
