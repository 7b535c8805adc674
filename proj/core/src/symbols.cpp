#include "toam/symbols.hpp"

namespace toam {

std::uint32_t SymbolTable::intern(const std::string& name, int arity) {
  auto key = std::make_pair(name, arity);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  std::uint32_t id = std::uint32_t(syms_.size());
  Symbol s;
  s.name = name;
  s.arity = arity;
  syms_.push_back(std::move(s));
  index_.emplace(std::move(key), id);
  return id;
}

const Symbol* SymbolTable::find(const std::string& name, int arity) const {
  auto it = index_.find(std::make_pair(name, arity));
  if (it == index_.end()) return nullptr;
  return &syms_[it->second];
}

}  // namespace toam
