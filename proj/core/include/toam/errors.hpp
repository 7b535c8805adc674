#pragma once

#include <stdexcept>
#include <string>

namespace toam {

// Everything a run can die of.  Errors abort the current query; the CLI
// maps them to exit status 2.
enum class ErrKind {
  Syntax,        // reader: bad token / malformed clause
  Load,          // canonicalize/codegen: unsupported or ill-formed program
  Type,          // runtime: wrong argument type for a builtin
  Instantiation, // runtime: argument insufficiently instantiated
  Existence,     // runtime: call to an undefined predicate
  Evaluation,    // runtime: arithmetic domain error (zero divisor, overflow)
  Resource,      // runtime: heap/stack/trail/table area exhausted
  Thrown,        // runtime: throw/1 from program code
  Internal,      // engine invariant broken (validator, impossible state)
};

class PrologError : public std::runtime_error {
 public:
  PrologError(ErrKind k, std::string msg)
      : std::runtime_error(std::move(msg)), kind(k) {}
  ErrKind kind;

  [[noreturn]] static void raise(ErrKind k, std::string msg) {
    throw PrologError(k, std::move(msg));
  }
};

inline const char* err_kind_name(ErrKind k) {
  switch (k) {
    case ErrKind::Syntax: return "syntax_error";
    case ErrKind::Load: return "load_error";
    case ErrKind::Type: return "type_error";
    case ErrKind::Instantiation: return "instantiation_error";
    case ErrKind::Existence: return "existence_error";
    case ErrKind::Evaluation: return "evaluation_error";
    case ErrKind::Resource: return "resource_error";
    case ErrKind::Thrown: return "thrown";
    case ErrKind::Internal: return "internal_error";
  }
  return "error";
}

}  // namespace toam
