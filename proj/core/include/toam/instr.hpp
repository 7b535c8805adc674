// Instruction set: base opcodes, specialized/merged opcodes, operand
// encoding, and the disassembler. Code is a flat vector; labels are indices.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toam/cell.hpp"
#include "toam/symbols.hpp"

namespace toam {

enum class Op : std::uint8_t {
  // control
  AllocateDet,     // a=arity, b=frame size (fixed+locals)
  AllocateNondet,  // a=arity, b=frame size
  AllocateSusp,    // a=arity, b=frame size
  AllocateTable,   // a=arity, b=frame size, c=label of completion block
  Return,
  Fork,  // a=label
  Cut,
  Fail,
  Jmp,  // a=label (block chaining)

  // branch (guards / head tests; never bind)
  JmpnConstant,   // a=l_var, b=l_fail, y, zs[0]=constant
  JmpnStruct,     // a=l_var, b=l_fail, y, sym=f/n, zs=dest slots (u-kind)
  SwitchOnCons,   // a=l_nil, b=l_var, c=l_fail, y, zs[0..1]=head/tail dests
  Hash,           // a=l_var, b=l_fail, y, zs=keys, labels=targets
  BuiltinTest,    // a=test id, b=l_fail, zs=operands
  BuiltinTestVar, // a=test id (Var/Nonvar/Atom/Integer), b=l_fail, y

  // unify / move (body unifications)
  UnifyConstant,  // y, zs[0]=constant
  UnifyValue,     // y, zs[0]
  UnifyStruct,    // y, sym=f/n, zs=args
  UnifyList,      // y, a=element count, zs=elements then tail
  MoveStruct,     // y, sym=f/n, zs=args
  MoveList,       // y, a=element count, zs=elements then tail

  // calls
  Call,      // sym=p/n, zs=args
  LastCall,  // lit=layout bits, sym=p/n, zs=args
  Builtin,   // a=builtin id, y=output slot or 0, zs=args

  // specialized (instruction specialization pass)
  UnifyCons,     // y, zs[0..1] (untagged-operand form of 2-element list)
  MoveCons,      // y, zs[0..1]
  UnifyStruct1,  // y, sym, zs[0]
  UnifyStruct2,  // y, sym, zs[0..1]
  UnifyStructH,  // y, sym, zs[0..1]; one UnifyArg per remaining argument
  UnifyArg,      // zs[0]
  CallKU,        // sym, zs=all u-operands (k = zs.size())
  CallV,         // sym, zs[0]=v-operand
  CallUV,        // sym, zs[0]=u, zs[1]=v
  LastCall0,     // sym (every argument already in place)
  LastCall1,     // a=misplaced argument index (1-based), sym, zs[0]
  LastCall2,     // a,b=misplaced indices, sym, zs[0..1]
  TailCall0,     // sym (self-recursive forms)
  TailCall1,     // a=index, sym, zs[0]
  TailCall2,     // a,b=indices, sym, zs[0..1]

  // merged (instruction merging pass)
  ForkUnifyConstant,  // a=label, y, zs[0]=constant; on mismatch jump, no undo
  UnifyConstantCut,   // y, zs[0]
  UnifyConstantReturn,
  UnifyValueReturn,
  CutReturn,
  CutFail,

  // action-rule runtime
  SuspWatch,     // a=event kind (0=ins,1=event), b=l_reentry, y=channel slot
  SuspSleepRet,  // STATE := sleep; return without deallocation
  SuspEnd,       // STATE := end (fall through to the next rule block)
  SuspReturn,    // return; deallocates only if the frame never suspended
  SuspEventArgs, // zs=payload destination slots; unpacks the EVENT slot
  WakeNext,      // P := AR->REEP (active-chain splice)

  // tabling
  TableAnswer,    // record the frame arguments as an answer, then fail
  TableComplete,  // a=label of first clause block (re-execution target)
  TableConsume,   // deliver the next unconsumed answer or fail

  // host plumbing
  QueryDone,  // yield success to the driver
  QueryFail,  // root choice point: yield failure / no more answers

  Count_
};

constexpr int kOpCount = static_cast<int>(Op::Count_);

// Opcode classes for execution statistics.
constexpr bool is_specialized_op(Op op) {
  return op >= Op::UnifyCons && op <= Op::TailCall2;
}
constexpr bool is_merged_op(Op op) {
  return op >= Op::ForkUnifyConstant && op <= Op::CutFail;
}

const char* op_name(Op op);

// Guard-test identifiers for BuiltinTest/BuiltinTestVar.
enum class TestOp : std::uint8_t {
  Eq,        // ==
  Ne,        // \==
  Lt,        // <
  Gt,        // >
  Le,        // =<
  Ge,        // >=
  ArithEq,   // =:=
  ArithNe,   // =\=
  Var,
  Nonvar,
  Atom,
  Integer,
};

const char* test_op_name(TestOp t);

// A tagged operand: first-occurrence variable v(i), later occurrence u(i),
// or a constant. Slot numbers are physical anchor-relative offsets.
struct Operand {
  // CFun appears only as a hash key (functor-name/arity discriminator).
  enum class K : std::uint8_t { V, U, CAtm, CInt, CFlt, CNil, CFun } k = K::V;
  int slot = 0;            // V/U
  int sym = -1;            // CAtm/CFun: symbol index
  std::int64_t ival = 0;   // CInt
  double fval = 0.0;       // CFlt

  static Operand v(int s) { return {K::V, s, -1, 0, 0}; }
  static Operand u(int s) { return {K::U, s, -1, 0, 0}; }
  static Operand atom(int sym) { return {K::CAtm, 0, sym, 0, 0}; }
  static Operand integer(std::int64_t i) { return {K::CInt, 0, -1, i, 0}; }
  static Operand flt(double f) { return {K::CFlt, 0, -1, 0, f}; }
  static Operand nil() { return {K::CNil, 0, -1, 0, 0}; }
  static Operand fun(int sym) { return {K::CFun, 0, sym, 0, 0}; }
  bool is_const() const { return k != K::V && k != K::U; }
  bool operator==(const Operand& o) const {
    return k == o.k && slot == o.slot && sym == o.sym && ival == o.ival &&
           fval == o.fval;
  }
};

struct Instr {
  Op op;
  int a = 0;      // label / arity / id / index (per-op, see enum comments)
  int b = 0;      // label / size / index
  int c = 0;      // label
  int y = 0;      // subject slot (physical offset)
  int sym = -1;   // predicate or functor symbol index
  std::int64_t lit = 0;        // layout bits
  std::vector<Operand> zs{};     // operand list
  std::vector<int> labels{};     // hash targets (parallel to zs)
};

// Returns the indices of all Instr fields that hold code labels, so passes
// can rewrite/inspect jump targets uniformly.
void collect_label_refs(Instr& ins, std::vector<int*>& out);

struct CodeBlock {
  int entry = 0;  // index of the first instruction in `code`
  int end = 0;    // one past the last instruction
};

// Disassembly in source notation: one instruction per line, operands
// parenthesized, local label targets printed as `lN:`.
// `fixed_slots` converts physical local offsets back to logical y(-k).
std::string disassemble(const std::vector<Instr>& code, int entry, int end,
                        const SymbolTable& syms, int fixed_slots);

std::string operand_to_string(const Operand& z, const SymbolTable& syms,
                              int fixed_slots);

// One-line rendering of a single instruction (label targets unresolved);
// used by the execution tracer.
std::string format_instr(const std::vector<Instr>& code, int at,
                         const SymbolTable& syms, int fixed_slots);

}  // namespace toam
