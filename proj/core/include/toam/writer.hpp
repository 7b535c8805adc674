// Term output: operator notation, (A,B) tuple form for ','/2, compact lists.
#pragma once

#include <string>

#include "toam/ast.hpp"

namespace toam {

struct WriteOpts {
  bool quoted = false;  // quote atoms that would not read back
};

std::string term_to_string(const ast::TermP& t, const WriteOpts& opts = {});

}  // namespace toam
