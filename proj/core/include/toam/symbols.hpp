#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace toam {

// Predicate classification, fixed at load time.
enum class PredClass : std::uint8_t {
  None,     // not a predicate (plain atom/functor)
  Det,      // determinate matching clauses only
  Nondet,   // at least one backtrackable clause
  Action,   // has action rules (suspension frames)
  Tabled,   // linear tabling (tabled frames)
  Builtin,  // host-implemented
};

enum class ArgMode : std::uint8_t { In, Out, Min, Max };

// Optional :-table declaration attached to a predicate.
struct TableSpec {
  bool has_modes = false;
  std::vector<ArgMode> modes;   // size == arity when has_modes
  std::int64_t cardinality = -1;  // -1 = unlimited
  int optimized_arg = -1;         // index of the min/max argument, or -1
};

// One record per distinct name/arity pair.  Atom terms are the ids of
// arity-0 records; functor cells carry ids of arity-n records.
struct Symbol {
  std::string name;
  int arity = 0;
  PredClass cls = PredClass::None;
  int entry = -1;        // code index of the predicate's first instruction
  int end = -1;          // one past the predicate's last instruction
  int frame_size = 0;    // fixed slots + locals (operand of allocate_*)
  int builtin = -1;      // builtin id when cls == Builtin
  bool hidden = false;   // synthesized predicates: skipped by --disasm
  std::optional<TableSpec> table;
  std::optional<std::vector<ArgMode>> mode;  // :-mode declaration
};

class SymbolTable {
 public:
  std::uint32_t intern(const std::string& name, int arity);
  const Symbol* find(const std::string& name, int arity) const;
  Symbol& at(std::uint32_t id) { return syms_[id]; }
  const Symbol& at(std::uint32_t id) const { return syms_[id]; }
  std::uint32_t size() const { return std::uint32_t(syms_.size()); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::pair<std::string, int>& k) const {
      return std::hash<std::string>()(k.first) * 31u + std::size_t(k.second);
    }
  };
  std::vector<Symbol> syms_;
  std::unordered_map<std::pair<std::string, int>, std::uint32_t, KeyHash> index_;
};

}  // namespace toam
