#include "toam/instr.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace toam {

const char* op_name(Op op) {
  switch (op) {
    case Op::AllocateDet: return "allocate_det";
    case Op::AllocateNondet: return "allocate_nondet";
    case Op::AllocateSusp: return "allocate_susp";
    case Op::AllocateTable: return "allocate_table";
    case Op::Return: return "return";
    case Op::Fork: return "fork";
    case Op::Cut: return "cut";
    case Op::Fail: return "fail";
    case Op::Jmp: return "jmp";
    case Op::JmpnConstant: return "jmpn_constant";
    case Op::JmpnStruct: return "jmpn_struct";
    case Op::SwitchOnCons: return "switch_on_cons";
    case Op::Hash: return "hash";
    case Op::BuiltinTest: return "builtin_test";
    case Op::BuiltinTestVar: return "builtin_test";
    case Op::UnifyConstant: return "unify_constant";
    case Op::UnifyValue: return "unify_value";
    case Op::UnifyStruct: return "unify_struct";
    case Op::UnifyList: return "unify_list";
    case Op::MoveStruct: return "move_struct";
    case Op::MoveList: return "move_list";
    case Op::Call: return "call";
    case Op::LastCall: return "last_call";
    case Op::Builtin: return "builtin";
    case Op::UnifyCons: return "unify_cons";
    case Op::MoveCons: return "move_cons";
    case Op::UnifyStruct1: return "unify_struct1";
    case Op::UnifyStruct2: return "unify_struct2";
    case Op::UnifyStructH: return "unify_struct_h";
    case Op::UnifyArg: return "unify_arg";
    case Op::CallKU: return "call_k_u";
    case Op::CallV: return "call_v";
    case Op::CallUV: return "call_uv";
    case Op::LastCall0: return "last_call_0";
    case Op::LastCall1: return "last_call_1";
    case Op::LastCall2: return "last_call_2";
    case Op::TailCall0: return "tail_call_0";
    case Op::TailCall1: return "tail_call_1";
    case Op::TailCall2: return "tail_call_2";
    case Op::ForkUnifyConstant: return "fork_unify_constant";
    case Op::UnifyConstantCut: return "unify_constant_cut";
    case Op::UnifyConstantReturn: return "unify_constant_return";
    case Op::UnifyValueReturn: return "unify_value_return";
    case Op::CutReturn: return "cut_return";
    case Op::CutFail: return "cut_fail";
    case Op::SuspWatch: return "susp_watch";
    case Op::SuspSleepRet: return "susp_sleep_return";
    case Op::SuspEnd: return "susp_end";
    case Op::SuspReturn: return "susp_return";
    case Op::SuspEventArgs: return "susp_event_args";
    case Op::WakeNext: return "wake_next";
    case Op::TableAnswer: return "table_answer";
    case Op::TableComplete: return "table_complete";
    case Op::TableConsume: return "table_consume";
    case Op::QueryDone: return "query_done";
    case Op::QueryFail: return "query_fail";
    case Op::Count_: break;
  }
  return "?";
}

const char* test_op_name(TestOp t) {
  switch (t) {
    case TestOp::Eq: return "==";
    case TestOp::Ne: return "\\==";
    case TestOp::Lt: return "<";
    case TestOp::Gt: return ">";
    case TestOp::Le: return "=<";
    case TestOp::Ge: return ">=";
    case TestOp::ArithEq: return "=:=";
    case TestOp::ArithNe: return "=\\=";
    case TestOp::Var: return "var";
    case TestOp::Nonvar: return "nonvar";
    case TestOp::Atom: return "atom";
    case TestOp::Integer: return "integer";
  }
  return "?";
}

void collect_label_refs(Instr& ins, std::vector<int*>& out) {
  switch (ins.op) {
    case Op::Fork:
    case Op::Jmp:
    case Op::ForkUnifyConstant:
    case Op::TableComplete:
      out.push_back(&ins.a);
      break;
    case Op::JmpnConstant:
    case Op::JmpnStruct:
      out.push_back(&ins.a);
      out.push_back(&ins.b);
      break;
    case Op::SwitchOnCons:
      out.push_back(&ins.a);
      out.push_back(&ins.b);
      out.push_back(&ins.c);
      break;
    case Op::Hash:
      out.push_back(&ins.a);
      out.push_back(&ins.b);
      for (auto& l : ins.labels) out.push_back(&l);
      break;
    case Op::BuiltinTest:
    case Op::BuiltinTestVar:
    case Op::SuspWatch:
      out.push_back(&ins.b);
      break;
    case Op::AllocateTable:
      out.push_back(&ins.c);
      break;
    default:
      break;
  }
}

namespace {

// Physical anchor-relative offset back to source-level slot number.
int logical_slot(int off, int fixed_slots) {
  if (off >= 0) return off;
  return off + (fixed_slots - 1);
}

std::string slot_str(int off, int fixed_slots) {
  return "y(" + std::to_string(logical_slot(off, fixed_slots)) + ")";
}

std::string fn_str(int sym, const SymbolTable& syms) {
  const Symbol& s = syms.at(std::uint32_t(sym));
  return s.name + "/" + std::to_string(s.arity);
}

std::string const_str(const Operand& z, const SymbolTable& syms) {
  switch (z.k) {
    case Operand::K::CAtm: return syms.at(std::uint32_t(z.sym)).name;
    case Operand::K::CInt: return std::to_string(z.ival);
    case Operand::K::CNil: return "[]";
    case Operand::K::CFun: return fn_str(z.sym, syms);
    case Operand::K::CFlt: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%g", z.fval);
      return buf;
    }
    default: return "?";
  }
}

std::string layout_str(std::int64_t bits, int arity) {
  std::string s = "0b";
  int width = arity > 0 ? arity : 1;
  for (int i = width - 1; i >= 0; --i) s += (bits >> i) & 1 ? '1' : '0';
  return s;
}

class Disassembler {
 public:
  Disassembler(const std::vector<Instr>& code, int entry, int end,
               const SymbolTable& syms, int fixed)
      : code_(code), entry_(entry), end_(end), syms_(syms), fixed_(fixed) {
    std::vector<int> targets;
    for (int i = entry; i < end; ++i) {
      Instr tmp = code[i];
      std::vector<int*> refs;
      collect_label_refs(tmp, refs);
      for (int* r : refs) targets.push_back(*r);
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    int n = 1;
    for (int t : targets) label_[t] = n++;
  }

  std::string run() {
    std::string out;
    for (int i = entry_; i < end_; ++i) {
      auto it = label_.find(i);
      std::string pre = it != label_.end()
                            ? "l" + std::to_string(it->second) + ": "
                            : "";
      out += pre + text(code_[i]) + "\n";
    }
    return out;
  }

 private:
  std::string lab(int target) const {
    auto it = label_.find(target);
    return it != label_.end() ? "l" + std::to_string(it->second) : "l?";
  }
  std::string y(int off) const { return slot_str(off, fixed_); }
  std::string z(const Operand& o) const {
    return operand_to_string(o, syms_, fixed_);
  }
  std::string zs(const Instr& ins, size_t from = 0) const {
    std::string s;
    for (size_t i = from; i < ins.zs.size(); ++i) {
      if (!s.empty()) s += ",";
      s += z(ins.zs[i]);
    }
    return s;
  }

  std::string text(const Instr& ins) const {
    std::string nm = op_name(ins.op);
    switch (ins.op) {
      case Op::AllocateDet:
      case Op::AllocateNondet:
      case Op::AllocateSusp:
        return nm + "(" + std::to_string(ins.a) + "," + std::to_string(ins.b) +
               ")";
      case Op::AllocateTable:
        return nm + "(" + std::to_string(ins.a) + "," + std::to_string(ins.b) +
               "," + lab(ins.c) + ")";
      case Op::Return:
      case Op::Cut:
      case Op::Fail:
      case Op::CutReturn:
      case Op::CutFail:
      case Op::SuspSleepRet:
      case Op::SuspEnd:
      case Op::SuspReturn:
      case Op::WakeNext:
      case Op::TableAnswer:
      case Op::TableConsume:
      case Op::QueryDone:
      case Op::QueryFail:
        return nm;
      case Op::Fork:
      case Op::Jmp:
        return nm + "(" + lab(ins.a) + ")";
      case Op::JmpnConstant:
        return nm + "(" + y(ins.y) + "," + lab(ins.a) + "," + lab(ins.b) +
               "," + z(ins.zs[0]) + ")";
      case Op::JmpnStruct:
        return nm + "(" + y(ins.y) + "," + lab(ins.a) + "," + lab(ins.b) +
               "," + fn_str(ins.sym, syms_) +
               (ins.zs.empty() ? "" : "," + zs(ins)) + ")";
      case Op::SwitchOnCons:
        return nm + "(" + y(ins.y) + "," + lab(ins.a) + "," + lab(ins.b) +
               "," + lab(ins.c) + "," + zs(ins) + ")";
      case Op::Hash: {
        std::string s = nm + "(" + y(ins.y) + "," +
                        std::to_string(ins.zs.size());
        for (size_t i = 0; i < ins.zs.size(); ++i)
          s += ",(" + const_str(ins.zs[i], syms_) + "," +
               lab(ins.labels[i]) + ")";
        return s + "," + lab(ins.a) + "," + lab(ins.b) + ")";
      }
      case Op::BuiltinTest:
        return nm + "(" + std::string(test_op_name(TestOp(ins.a))) + "," +
               zs(ins) + "," + lab(ins.b) + ")";
      case Op::BuiltinTestVar:
        return nm + "(" + std::string(test_op_name(TestOp(ins.a))) + "," +
               y(ins.y) + "," + lab(ins.b) + ")";
      case Op::UnifyConstant:
      case Op::UnifyConstantCut:
      case Op::UnifyConstantReturn:
      case Op::UnifyValue:
      case Op::UnifyValueReturn:
      case Op::UnifyCons:
      case Op::MoveCons:
        return nm + "(" + y(ins.y) + "," + zs(ins) + ")";
      case Op::UnifyStruct:
      case Op::MoveStruct:
      case Op::UnifyStruct1:
      case Op::UnifyStruct2:
      case Op::UnifyStructH:
        return nm + "(" + y(ins.y) + "," + fn_str(ins.sym, syms_) +
               (ins.zs.empty() ? "" : "," + zs(ins)) + ")";
      case Op::UnifyArg:
        return nm + "(" + zs(ins) + ")";
      case Op::UnifyList:
      case Op::MoveList:
        return nm + "(" + y(ins.y) + "," + std::to_string(ins.a) + "," +
               zs(ins) + ")";
      case Op::Call:
      case Op::Builtin:
        return nm + "(" + fn_str(ins.sym, syms_) +
               (ins.zs.empty() ? "" : "," + zs(ins)) + ")";
      case Op::LastCall:
        return nm + "(" + layout_str(ins.lit, syms_.at(ins.sym).arity) + "," +
               fn_str(ins.sym, syms_) + (ins.zs.empty() ? "" : "," + zs(ins)) +
               ")";
      case Op::CallKU: {
        std::string s = "call_" + std::to_string(ins.zs.size()) + "_u(" +
                        fn_str(ins.sym, syms_);
        for (auto& o : ins.zs)
          s += "," + std::to_string(logical_slot(o.slot, fixed_));
        return s + ")";
      }
      case Op::CallV:
      case Op::CallUV:
        return nm + "(" + fn_str(ins.sym, syms_) + "," + zs(ins) + ")";
      case Op::LastCall0:
      case Op::TailCall0:
        return nm + "(" + fn_str(ins.sym, syms_) + ")";
      case Op::LastCall1:
      case Op::TailCall1:
        return nm + "(" + std::to_string(ins.a) + "," +
               fn_str(ins.sym, syms_) + "," + zs(ins) + ")";
      case Op::LastCall2:
      case Op::TailCall2:
        return nm + "(" + std::to_string(ins.a) + "," + std::to_string(ins.b) +
               "," + fn_str(ins.sym, syms_) + "," + zs(ins) + ")";
      case Op::ForkUnifyConstant:
        return nm + "(" + lab(ins.a) + "," + y(ins.y) + "," + z(ins.zs[0]) +
               ")";
      case Op::SuspWatch:
        return nm + "(" + std::string(ins.a == 0 ? "ins" : "event") + "," +
               y(ins.y) + "," + lab(ins.b) + ")";
      case Op::SuspEventArgs:
        return nm + "(" + zs(ins) + ")";
      case Op::TableComplete:
        return nm + "(" + lab(ins.a) + ")";
      case Op::Count_: break;
    }
    return nm;
  }

  const std::vector<Instr>& code_;
  int entry_, end_;
  const SymbolTable& syms_;
  int fixed_;
  std::map<int, int> label_;
};

}  // namespace

std::string operand_to_string(const Operand& z, const SymbolTable& syms,
                              int fixed_slots) {
  switch (z.k) {
    case Operand::K::V:
      return "v(" + std::to_string(logical_slot(z.slot, fixed_slots)) + ")";
    case Operand::K::U:
      return "u(" + std::to_string(logical_slot(z.slot, fixed_slots)) + ")";
    default:
      return "c(" + const_str(z, syms) + ")";
  }
}

std::string disassemble(const std::vector<Instr>& code, int entry, int end,
                        const SymbolTable& syms, int fixed_slots) {
  return Disassembler(code, entry, end, syms, fixed_slots).run();
}

std::string format_instr(const std::vector<Instr>& code, int at,
                         const SymbolTable& syms, int fixed_slots) {
  std::string s = Disassembler(code, at, at + 1, syms, fixed_slots).run();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

}  // namespace toam
