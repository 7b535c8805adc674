// Post-pass over emitted code: specializes variable-length tagged
// instructions into fixed forms and merges frequent adjacent pairs.
#pragma once

#include <vector>

#include "toam/instr.hpp"
#include "toam/symbols.hpp"

namespace toam {

// Rewrites the whole program in place until a fixpoint. A pair is never
// merged when its second instruction is a jump target. All label operands
// and symbol entry/end records are relocated to the rewritten indices.
void peephole(std::vector<Instr>& code, SymbolTable& syms);

}  // namespace toam
