#include "toam/peephole.hpp"

#include <algorithm>
#include <set>

namespace toam {
namespace {

bool all_u(const std::vector<Operand>& zs) {
  for (const auto& z : zs)
    if (z.k != Operand::K::U) return false;
  return true;
}

int misplaced_count(std::int64_t layout, int n) {
  int c = 0;
  for (int i = 0; i < n; ++i) c += int((layout >> i) & 1);
  return c;
}

// Specializes one instruction; appends the result (possibly several
// instructions) to `out` and reports whether anything changed.
bool specialize(const Instr& ins, int owner, std::vector<Instr>& out) {
  switch (ins.op) {
    case Op::UnifyList:
    case Op::MoveList: {
      if (ins.a != 1) break;
      Instr r{ins.op == Op::UnifyList ? Op::UnifyCons : Op::MoveCons};
      r.y = ins.y;
      r.zs = ins.zs;
      out.push_back(std::move(r));
      return true;
    }
    case Op::UnifyStruct: {
      if (ins.zs.size() <= 2) {
        Instr r{ins.zs.size() == 1 ? Op::UnifyStruct1 : Op::UnifyStruct2};
        r.y = ins.y;
        r.sym = ins.sym;
        r.zs = ins.zs;
        out.push_back(std::move(r));
        return true;
      }
      Instr h{Op::UnifyStructH};
      h.y = ins.y;
      h.sym = ins.sym;
      h.zs = {ins.zs[0], ins.zs[1]};
      out.push_back(std::move(h));
      for (size_t k = 2; k < ins.zs.size(); ++k) {
        Instr a{Op::UnifyArg};
        a.zs = {ins.zs[k]};
        out.push_back(std::move(a));
      }
      return true;
    }
    case Op::Call: {
      size_t n = ins.zs.size();
      Op op;
      if (n >= 1 && n <= 9 && all_u(ins.zs)) op = Op::CallKU;
      else if (n == 1 && ins.zs[0].k == Operand::K::V) op = Op::CallV;
      else if (n == 2 && ins.zs[0].k == Operand::K::U &&
               ins.zs[1].k == Operand::K::V)
        op = Op::CallUV;
      else
        break;
      Instr r{op};
      r.sym = ins.sym;
      r.zs = ins.zs;
      out.push_back(std::move(r));
      return true;
    }
    case Op::LastCall: {
      int n = int(ins.zs.size());
      int k = misplaced_count(ins.lit, n);
      if (k > 2) break;
      bool self = ins.sym == owner;
      Instr r{ins.op};
      r.sym = ins.sym;
      int at = 0;
      for (int i = 0; i < n; ++i) {
        if (!((ins.lit >> i) & 1)) continue;
        (at == 0 ? r.a : r.b) = i + 1;  // 1-based callee argument index
        r.zs.push_back(ins.zs[size_t(i)]);
        ++at;
      }
      switch (k) {
        case 0: r.op = self ? Op::TailCall0 : Op::LastCall0; break;
        case 1: r.op = self ? Op::TailCall1 : Op::LastCall1; break;
        default: r.op = self ? Op::TailCall2 : Op::LastCall2; break;
      }
      out.push_back(std::move(r));
      return true;
    }
    default:
      break;
  }
  out.push_back(ins);
  return false;
}

// Merges the pair (a,b) into `out` when a rule applies.
bool merge(const Instr& a, const Instr& b, std::vector<Instr>& out) {
  // unify_constant fails without touching any machine state, so on failure
  // the merged fork can jump straight to the alternative without restoring.
  if (a.op == Op::Fork && b.op == Op::UnifyConstant) {
    Instr r{Op::ForkUnifyConstant};
    r.a = a.a;
    r.y = b.y;
    r.zs = b.zs;
    out.push_back(std::move(r));
    return true;
  }
  if (a.op == Op::UnifyConstant && (b.op == Op::Cut || b.op == Op::Return)) {
    Instr r{b.op == Op::Cut ? Op::UnifyConstantCut : Op::UnifyConstantReturn};
    r.y = a.y;
    r.zs = a.zs;
    out.push_back(std::move(r));
    return true;
  }
  if (a.op == Op::UnifyValue && b.op == Op::Return) {
    Instr r{Op::UnifyValueReturn};
    r.y = a.y;
    r.zs = a.zs;
    out.push_back(std::move(r));
    return true;
  }
  if (a.op == Op::Cut && (b.op == Op::Return || b.op == Op::Fail)) {
    out.push_back(Instr{b.op == Op::Return ? Op::CutReturn : Op::CutFail});
    return true;
  }
  return false;
}

bool pass(std::vector<Instr>& code, SymbolTable& syms) {
  int n = int(code.size());
  std::set<int> targets;
  std::vector<int*> refs;
  for (auto& ins : code) {
    refs.clear();
    collect_label_refs(ins, refs);
    for (int* r : refs) targets.insert(*r);
  }
  std::vector<int> owner(size_t(n), -1);
  for (std::uint32_t id = 0; id < syms.size(); ++id) {
    const Symbol& s = syms.at(id);
    if (s.entry < 0) continue;
    targets.insert(s.entry);
    for (int i = s.entry; i < s.end; ++i) owner[size_t(i)] = int(id);
  }

  std::vector<Instr> out;
  out.reserve(size_t(n));
  std::vector<int> map(size_t(n) + 1, 0);
  bool changed = false;
  for (int i = 0; i < n; ++i) {
    map[size_t(i)] = int(out.size());
    if (i + 1 < n && !targets.count(i + 1) &&
        merge(code[size_t(i)], code[size_t(i + 1)], out)) {
      map[size_t(i + 1)] = int(out.size()) - 1;
      ++i;
      changed = true;
      continue;
    }
    changed = specialize(code[size_t(i)], owner[size_t(i)], out) || changed;
  }
  map[size_t(n)] = int(out.size());
  if (!changed) return false;

  for (auto& ins : out) {
    refs.clear();
    collect_label_refs(ins, refs);
    for (int* r : refs) *r = map[size_t(*r)];
  }
  for (std::uint32_t id = 0; id < syms.size(); ++id) {
    Symbol& s = syms.at(id);
    if (s.entry < 0) continue;
    s.entry = map[size_t(s.entry)];
    s.end = map[size_t(s.end)];
  }
  code = std::move(out);
  return true;
}

}  // namespace

void peephole(std::vector<Instr>& code, SymbolTable& syms) {
  while (pass(code, syms)) {
  }
}

}  // namespace toam
