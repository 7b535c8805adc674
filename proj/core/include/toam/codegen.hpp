// Clause compiler: canonical predicates to instructions. Handles slot
// allocation with liveness-based reuse, matching-tree dispatch, frame-kind
// selection, argument-passing layouts, and the tabled/action code shapes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toam/canonical.hpp"
#include "toam/instr.hpp"
#include "toam/symbols.hpp"

namespace toam {

// Fixed (non-argument, non-local) frame slot counts per frame kind.
inline constexpr int kFixedDet = 4;
inline constexpr int kFixedNondet = 8;
inline constexpr int kFixedSusp = 8;
inline constexpr int kFixedTable = 10;

// Fixed-slot count implied by a predicate's allocate opcode.
int fixed_slots_for(Op allocate_op);

struct CodegenOpts {
  // Queries end in QueryDone and keep their frame alive, so the driver can
  // read answer bindings; they also never reuse the frame on the last call.
  bool query_mode = false;
};

// Compiles one canonical predicate, appending instructions to `code` with
// all labels resolved to absolute indices, and fills in its symbol record
// (entry, end, frame_size, cls, hidden, table). det_safe is indexed by
// symbol id; true means a call to that predicate can never leave choice
// points behind, which allows slot reuse across the call site.
std::uint32_t compile_predicate(const CanonPred& pred, SymbolTable& syms,
                                std::vector<Instr>& code,
                                const std::vector<char>& det_safe,
                                const CodegenOpts& opts = {});

}  // namespace toam
