#include "toam/codegen.hpp"

#include <algorithm>
#include <climits>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "toam/builtins.hpp"
#include "toam/errors.hpp"

namespace toam {

namespace {

using ast::Term;
using ast::TermP;

constexpr int kNoSlot = INT_MIN;
constexpr int kMaxLastCallArity = 28;

[[noreturn]] void cg_error(const std::string& msg) {
  PrologError::raise(ErrKind::Load, msg);
}

bool is_const_t(const TermP& t) {
  return t->k == Term::K::Atom || t->k == Term::K::Int || t->k == Term::K::Flt;
}

void split_chain(const TermP& t, std::vector<TermP>& elems, TermP& tail) {
  TermP cur = t;
  while (ast::is_cons(cur)) {
    elems.push_back(cur->args[0]);
    cur = cur->args[1];
  }
  tail = cur;
}

const BuiltinDef* find_builtin(const std::string& name, int arity) {
  for (const auto& d : builtin_defs())
    if (d.arity == arity && name == d.name) return &d;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Label-aware emitter: label fields hold label ids until finalize() rewrites
// them into absolute code indices.

class Emitter {
 public:
  explicit Emitter(std::vector<Instr>& code) : code_(code) {}

  int emit(Instr ins) {
    code_.push_back(std::move(ins));
    return int(code_.size()) - 1;
  }
  int here() const { return int(code_.size()); }

  int lbl() {
    addr_.push_back(-1);
    used_.push_back(false);
    return int(addr_.size()) - 1;
  }
  void place(int l) { addr_[l] = here(); }
  int use(int l) {
    used_[l] = true;
    return l;
  }
  bool used(int l) const { return used_[l]; }

  void finalize(int from) {
    std::vector<int*> refs;
    for (int i = from; i < here(); ++i) {
      refs.clear();
      collect_label_refs(code_[i], refs);
      for (int* r : refs) {
        if (*r < 0 || *r >= int(addr_.size()) || addr_[*r] < 0)
          cg_error("internal: unresolved label");
        *r = addr_[*r];
      }
    }
  }

  std::vector<Instr>& code() { return code_; }

 private:
  std::vector<Instr>& code_;
  std::vector<int> addr_;
  std::vector<char> used_;
};

// ---------------------------------------------------------------------------
// Clause plans: a linear list of pending instructions with variable operands,
// built in one pass over the canonical clause so liveness can be computed
// before any slot is assigned.

struct POperand {
  TermP cterm;   // constant when set
  int var = -1;  // variable id otherwise
};

struct Plan {
  enum class K {
    HeadConst,   // arg_slot against constant pat
    HeadMatch,   // arg_slot against one-level pattern pat, fetching ops
    GuardConst,  // subj against constant pat
    GuardMatch,  // subj against one-level pattern pat
    TestVar,     // type test on ops[0]
    Test,        // binary comparison on ops[0..1]
    Build,       // subj (first occurrence) := new structure pat/ops
    UnifyConst,  // full unify subj with constant pat
    UnifyVal,    // full unify subj with ops[0]
    UnifyStr,    // full unify subj with structure pat/ops
    Cut,
    FailStop,    // unconditional failure; rest of the clause is unreachable
    Call,
    BuiltinCall,
    EventArgs,   // action rules: unify event term arguments with ops
  };
  K k;
  bool in_guard = false;
  int subj = -1;
  int arg_slot = 0;
  TermP pat{};
  std::vector<POperand> ops{};
  TestOp test = TestOp::Eq;
  std::uint32_t callee = 0;
  Bi bi = Bi::True;
  bool barrier = false;  // callee may leave choice points behind
};

TestOp type_test_op(const std::string& name) {
  if (name == "var") return TestOp::Var;
  if (name == "nonvar") return TestOp::Nonvar;
  if (name == "atom") return TestOp::Atom;
  return TestOp::Integer;
}

bool comparison_test(const std::string& name, TestOp& out) {
  if (name == "==") out = TestOp::Eq;
  else if (name == "\\==") out = TestOp::Ne;
  else if (name == "<") out = TestOp::Lt;
  else if (name == ">") out = TestOp::Gt;
  else if (name == "=<") out = TestOp::Le;
  else if (name == ">=") out = TestOp::Ge;
  else if (name == "=:=") out = TestOp::ArithEq;
  else if (name == "=\\=") out = TestOp::ArithNe;
  else return false;
  return true;
}

// Per-clause analysis: union-find over variables (body aliasing), constant
// aliases, plan list, and occurrence/liveness numbering.
struct ClauseCg {
  const CanonClause& cl;
  SymbolTable& syms;
  const std::vector<char>& det_safe;
  int arity;

  std::vector<Plan> plans;
  std::vector<int> event_plan;  // indices of EventArgs plans, one per pattern
  std::vector<int> event_kind;  // 0 = ins, 1 = posted event
  std::vector<int> event_chan;  // channel variable per pattern
  std::vector<int> event_sym;

  std::vector<int> parent;
  std::vector<char> seen;
  std::vector<TermP> cval;
  std::vector<int> occ, last;
  std::vector<int> slot;
  std::vector<char> mat;    // materialized (emission state)
  std::vector<char> freed;  // slot released (emission state)
  std::vector<std::pair<int, int>> head_vars;  // (var, slot)

  bool guard_false = false;  // head/guard statically unsatisfiable

  ClauseCg(const CanonClause& c, SymbolTable& s, const std::vector<char>& ds,
           int ar)
      : cl(c), syms(s), det_safe(ds), arity(ar) {
    int n = std::max(cl.nvars, 0);
    parent.resize(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    seen.assign(n, 0);
    cval.assign(n, nullptr);
    slot.assign(n, kNoSlot);
    build_head();
    if (!guard_false) build_guard();
    if (!guard_false) build_events();
    if (!guard_false) build_body();
  }

  int find(int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  }

  bool callee_safe(std::uint32_t s) const {
    return s < det_safe.size() && det_safe[s];
  }

  // Pattern argument list: variables are marked seen, compounds rejected.
  std::vector<POperand> pattern_parts(const std::vector<TermP>& parts) {
    std::vector<POperand> ops;
    for (const auto& p : parts) {
      if (ast::is_var(p)) {
        int r = find(p->var);
        seen[r] = 1;
        ops.push_back({nullptr, r});
      } else if (is_const_t(p)) {
        ops.push_back({p, -1});
      } else {
        cg_error("internal: nested pattern survived canonicalization");
      }
    }
    return ops;
  }

  std::vector<POperand> structure_parts(const TermP& t) {
    std::vector<TermP> parts;
    if (ast::is_cons(t)) {
      TermP tail;
      split_chain(t, parts, tail);
      parts.push_back(tail);
    } else {
      parts = t->args;
    }
    return pattern_parts(parts);
  }

  void build_head() {
    const auto& args = cl.head->args;
    for (int i = 0; i < arity; ++i) {
      int aslot = arity - i;
      const TermP& a = args[size_t(i)];
      if (ast::is_var(a)) {
        int r = find(a->var);
        seen[r] = 1;
        slot[r] = aslot;
        head_vars.emplace_back(r, aslot);
      } else if (is_const_t(a)) {
        Plan p{Plan::K::HeadConst};
        p.in_guard = true;
        p.arg_slot = aslot;
        p.pat = a;
        plans.push_back(std::move(p));
      } else {
        Plan p{Plan::K::HeadMatch};
        p.in_guard = true;
        p.arg_slot = aslot;
        p.pat = a;
        p.ops = structure_parts(a);
        plans.push_back(std::move(p));
      }
    }
  }

  POperand as_operand(const TermP& t, bool mark_fresh) {
    if (ast::is_var(t)) {
      int r = find(t->var);
      if (mark_fresh) seen[r] = 1;
      return {nullptr, r};
    }
    if (is_const_t(t)) return {t, -1};
    cg_error("internal: compound operand survived canonicalization");
  }

  void build_guard() {
    for (const auto& g : cl.guard) {
      const std::string& nm = g->name;
      TestOp top;
      if (g->k == Term::K::Cmp && g->args.size() == 1 &&
          (nm == "var" || nm == "nonvar" || nm == "atom" || nm == "integer")) {
        Plan p{Plan::K::TestVar};
        p.in_guard = true;
        p.test = type_test_op(nm);
        p.ops.push_back(as_operand(g->args[0], false));
        plans.push_back(std::move(p));
      } else if (g->k == Term::K::Cmp && g->args.size() == 2 &&
                 comparison_test(nm, top)) {
        Plan p{Plan::K::Test};
        p.in_guard = true;
        p.test = top;
        p.ops.push_back(as_operand(g->args[0], false));
        p.ops.push_back(as_operand(g->args[1], false));
        plans.push_back(std::move(p));
      } else if (ast::is_cmp(g, "=", 2)) {
        build_guard_unify(g->args[0], g->args[1]);
      } else {
        cg_error("internal: guard goal survived canonicalization: " + nm);
      }
      if (guard_false) return;
    }
  }

  void build_guard_unify(TermP a, TermP b) {
    if (!ast::is_var(a) && ast::is_var(b)) std::swap(a, b);
    if (!ast::is_var(a)) cg_error("internal: guard unification without var");
    int r = find(a->var);
    if (seen[r]) {
      if (cval[r]) {
        if (is_const_t(b) || ast::is_nil(b)) {
          if (!ast::equal(cval[r], b)) guard_false = true;
          return;
        }
        if (ast::is_var(b)) {
          int u = find(b->var);
          if (u == r) return;
          if (!seen[u]) {
            cval[u] = cval[r];
            seen[u] = 1;
            return;
          }
          if (cval[u]) {
            if (!ast::equal(cval[r], cval[u])) guard_false = true;
            return;
          }
          Plan p{Plan::K::GuardConst};
          p.in_guard = true;
          p.subj = u;
          p.pat = cval[r];
          plans.push_back(std::move(p));
          return;
        }
        guard_false = true;  // constant never matches a structure
        return;
      }
      if (is_const_t(b)) {
        Plan p{Plan::K::GuardConst};
        p.in_guard = true;
        p.subj = r;
        p.pat = b;
        plans.push_back(std::move(p));
        return;
      }
      if (ast::is_var(b)) {
        int u = find(b->var);
        if (u == r) return;
        if (!seen[u]) {
          parent[u] = r;
          return;
        }
        cg_error("internal: guard unifies two bound variables");
      }
      Plan p{Plan::K::GuardMatch};
      p.in_guard = true;
      p.subj = r;
      p.pat = b;
      p.ops = structure_parts(b);
      plans.push_back(std::move(p));
      return;
    }
    // construction: a is fresh
    seen[r] = 1;
    if (is_const_t(b)) {
      cval[r] = b;
      return;
    }
    if (ast::is_var(b)) {
      int u = find(b->var);
      if (u != r) parent[r] = u;
      return;
    }
    Plan p{Plan::K::Build};
    p.in_guard = true;
    p.subj = r;
    p.pat = b;
    p.ops = structure_parts(b);
    plans.push_back(std::move(p));
  }

  void build_events() {
    for (const auto& e : cl.events) {
      if (e->k != Term::K::Cmp || e->args.empty() ||
          !ast::is_var(e->args[0]))
        cg_error("internal: malformed event pattern");
      int chan = find(e->args[0]->var);
      if (!seen[chan]) cg_error("internal: unbound event channel");
      Plan p{Plan::K::EventArgs};
      p.in_guard = true;
      p.ops = pattern_parts(e->args);
      event_plan.push_back(int(plans.size()));
      event_kind.push_back(e->name == "ins" ? 0 : 1);
      event_chan.push_back(chan);
      event_sym.push_back(int(syms.intern(e->name, int(e->args.size()))));
      plans.push_back(std::move(p));
    }
  }

  void build_body() {
    for (const auto& g : cl.body) {
      if (g->k == Term::K::Atom) {
        if (g->name == "!") {
          plans.push_back(Plan{Plan::K::Cut});
          continue;
        }
        if (g->name == "true") continue;
        if (g->name == "fail" || g->name == "false") {
          plans.push_back(Plan{Plan::K::FailStop});
          return;
        }
        push_call(g->name, {});
        continue;
      }
      if (g->k != Term::K::Cmp) cg_error("internal: non-callable body goal");
      if (ast::is_cmp(g, "=", 2)) {
        build_body_unify(g->args[0], g->args[1]);
        if (!plans.empty() && plans.back().k == Plan::K::FailStop) return;
        continue;
      }
      push_call(g->name, g->args);
    }
  }

  void push_call(const std::string& name, const std::vector<TermP>& args) {
    Plan p{Plan::K::Call};
    for (const auto& a : args) p.ops.push_back(as_operand(a, true));
    if (const BuiltinDef* bd = find_builtin(name, int(args.size()))) {
      p.k = Plan::K::BuiltinCall;
      p.bi = bd->id;
      p.callee = syms.intern(name, int(args.size()));
      p.barrier = bd->id == Bi::Call || bd->id == Bi::Once ||
                  bd->id == Bi::Naf || bd->id == Bi::Repeat;
    } else {
      p.callee = syms.intern(name, int(args.size()));
      p.barrier = !callee_safe(p.callee);
    }
    plans.push_back(std::move(p));
  }

  void build_body_unify(TermP a, TermP b) {
    if (!ast::is_var(a) && ast::is_var(b)) std::swap(a, b);
    if (!ast::is_var(a)) {
      if (is_const_t(a) && is_const_t(b)) {
        if (!ast::equal(a, b)) plans.push_back(Plan{Plan::K::FailStop});
        return;
      }
      cg_error("internal: body unification without var side");
    }
    int r = find(a->var);
    if (!seen[r]) {
      seen[r] = 1;
      if (is_const_t(b)) {
        cval[r] = b;
        return;
      }
      if (ast::is_var(b)) {
        int u = find(b->var);
        if (u != r) parent[r] = u;
        return;
      }
      Plan p{Plan::K::Build};
      p.subj = r;
      p.pat = b;
      p.ops = structure_parts(b);
      plans.push_back(std::move(p));
      return;
    }
    if (cval[r]) {
      if (is_const_t(b)) {
        if (!ast::equal(cval[r], b)) plans.push_back(Plan{Plan::K::FailStop});
        return;
      }
      if (ast::is_var(b)) {
        int u = find(b->var);
        if (u == r) return;
        if (!seen[u]) {
          seen[u] = 1;
          cval[u] = cval[r];
          return;
        }
        if (cval[u]) {
          if (!ast::equal(cval[r], cval[u]))
            plans.push_back(Plan{Plan::K::FailStop});
          return;
        }
        Plan p{Plan::K::UnifyConst};
        p.subj = u;
        p.pat = cval[r];
        plans.push_back(std::move(p));
        return;
      }
      plans.push_back(Plan{Plan::K::FailStop});
      return;
    }
    if (is_const_t(b)) {
      Plan p{Plan::K::UnifyConst};
      p.subj = r;
      p.pat = b;
      plans.push_back(std::move(p));
      return;
    }
    if (ast::is_var(b)) {
      int u = find(b->var);
      if (u == r) return;
      if (cval[u]) {
        Plan p{Plan::K::UnifyConst};
        p.subj = r;
        p.pat = cval[u];
        plans.push_back(std::move(p));
        return;
      }
      if (!seen[u]) {
        seen[u] = 1;
        parent[u] = r;
        return;
      }
      Plan p{Plan::K::UnifyVal};
      p.subj = r;
      p.ops.push_back({nullptr, u});
      plans.push_back(std::move(p));
      return;
    }
    Plan p{Plan::K::UnifyStr};
    p.subj = r;
    p.pat = b;
    p.ops = structure_parts(b);
    plans.push_back(std::move(p));
  }

  // Occurrence counts and last-use plan index per representative; run after
  // any plan reordering and before emission.
  void number() {
    int n = int(parent.size());
    occ.assign(n, 0);
    last.assign(n, -1);
    mat.assign(n, 0);
    freed.assign(n, 0);
    auto mark = [&](int v, int idx) {
      int r = find(v);
      ++occ[r];
      last[r] = idx;
    };
    for (int i = 0; i < int(plans.size()); ++i) {
      const Plan& p = plans[i];
      if (p.subj >= 0) mark(p.subj, i);
      for (const auto& o : p.ops)
        if (!o.cterm) mark(o.var, i);
    }
  }

  int plan_for_arg(int pos) const {  // pos is 1-based
    int aslot = arity - pos + 1;
    for (int i = 0; i < int(plans.size()); ++i) {
      const Plan& p = plans[i];
      if ((p.k == Plan::K::HeadConst || p.k == Plan::K::HeadMatch) &&
          p.arg_slot == aslot)
        return i;
    }
    return -1;
  }

  int var_test_plan(int pos) const {  // TestVar(var) on head arg at pos
    const TermP& a = cl.head->args[size_t(pos - 1)];
    if (!ast::is_var(a)) return -1;
    for (int i = 0; i < int(plans.size()); ++i) {
      const Plan& p = plans[i];
      if (p.k == Plan::K::TestVar && p.test == TestOp::Var &&
          !p.ops[0].cterm && p.ops[0].var == a->var)
        return i;
    }
    return -1;
  }
};

// ---------------------------------------------------------------------------
// Clause emission

enum class Ending { Return, QueryDone, TableAnswer, SuspReturn, None };

struct PredCtx {
  Emitter& em;
  SymbolTable& syms;
  std::uint32_t self;
  int arity;
  int fixed;
  bool frame_det;
  bool query_mode;
  bool pooling = true;
  int max_locals = 0;
};

struct Overrides {
  int skip_plan = -1;      // consumed by a shared dispatcher
  int dispatch_plan = -1;  // emit with the targets below
  int d_var = -1, d_fail = -1, d_nil = -1;  // dispatcher labels
  bool cut_at_start = false;
  bool cut_before_body = false;
  bool commit_at_body = false;
  int fork_to = -1;
  bool args_poolable = false;
  Ending ending = Ending::Return;
};

class ClauseEmitter {
 public:
  ClauseEmitter(ClauseCg& cg, PredCtx& P, int fail_to)
      : cg_(cg), P_(P), fail_to_(fail_to) {
    for (auto& [r, s] : cg_.head_vars) {
      cg_.slot[r] = s;
      cg_.mat[r] = 1;
    }
  }

  bool committed = false;
  bool args_poolable = false;

  int alloc_slot() {
    if (P_.pooling && !pool_.empty()) {
      auto it = std::prev(pool_.end());
      int s = *it;
      pool_.erase(it);
      return s;
    }
    ++nlocals_;
    P_.max_locals = std::max(P_.max_locals, nlocals_);
    return -(P_.fixed - 1 + nlocals_);
  }

  void release(int s) {
    if (!P_.pooling) return;
    if (s > 0 && !(committed || args_poolable)) return;
    pool_.insert(s);
  }

  void clear_pool() { pool_.clear(); }

  void free_dead(int idx) {
    for (int v = 0; v < int(cg_.parent.size()); ++v) {
      if (cg_.find(v) != v) continue;
      if (cg_.last[v] == idx && cg_.slot[v] != kNoSlot && !cg_.freed[v]) {
        cg_.freed[v] = 1;
        release(cg_.slot[v]);
      }
    }
  }

  void free_subject_early(int r, int idx) {
    if (cg_.last[r] == idx && cg_.slot[r] != kNoSlot && !cg_.freed[r]) {
      cg_.freed[r] = 1;
      release(cg_.slot[r]);
    }
  }

  Operand const_op(const TermP& t) {
    if (ast::is_nil(t)) return Operand::nil();
    switch (t->k) {
      case Term::K::Atom:
        return Operand::atom(int(P_.syms.intern(t->name, 0)));
      case Term::K::Int:
        return Operand::integer(t->ival);
      case Term::K::Flt:
        return Operand::flt(t->fval);
      default:
        cg_error("internal: bad constant operand");
    }
  }

  Operand op_of(const POperand& p) {
    if (p.cterm) return const_op(p.cterm);
    int r = cg_.find(p.var);
    if (cg_.cval[r]) return const_op(cg_.cval[r]);
    if (cg_.mat[r]) {
      if (cg_.slot[r] == kNoSlot) cg_error("internal: void var reused");
      return Operand::u(cg_.slot[r]);
    }
    cg_.mat[r] = 1;
    if (cg_.slot[r] != kNoSlot) return Operand::v(cg_.slot[r]);  // re-entry
    if (cg_.occ[r] <= 1) return Operand::v(0);
    cg_.slot[r] = alloc_slot();
    return Operand::v(cg_.slot[r]);
  }

  int subj_slot(int subj) {
    int r = cg_.find(subj);
    if (!cg_.mat[r] || cg_.slot[r] == kNoSlot)
      cg_error("internal: subject without slot");
    return cg_.slot[r];
  }

  // Emits one plan. Returns false when the clause is finished early
  // (unconditional failure), in which case no ending should be emitted.
  bool emit_plan(int idx, const Plan& p, const Overrides* ov) {
    bool dispatch = ov && ov->dispatch_plan == idx;
    int l_var = dispatch ? ov->d_var : fail_to_;
    int l_fl = dispatch ? ov->d_fail : fail_to_;
    int l_nil = dispatch && ov->d_nil >= 0 ? ov->d_nil : l_fl;
    switch (p.k) {
      case Plan::K::HeadConst:
      case Plan::K::GuardConst: {
        Instr ins{Op::JmpnConstant};
        ins.y = p.k == Plan::K::HeadConst ? p.arg_slot : subj_slot(p.subj);
        ins.a = P_.em.use(l_var);
        ins.b = P_.em.use(l_fl);
        ins.zs.push_back(const_op(p.pat));
        P_.em.emit(std::move(ins));
        if (p.k == Plan::K::HeadConst) release(p.arg_slot);
        break;
      }
      case Plan::K::HeadMatch:
      case Plan::K::GuardMatch: {
        int y;
        if (p.k == Plan::K::HeadMatch) {
          y = p.arg_slot;
          release(p.arg_slot);  // the matched structure itself is dead
        } else {
          y = subj_slot(p.subj);
          free_subject_early(cg_.find(p.subj), idx);
        }
        Instr ins;
        if (ast::is_cons(p.pat)) {
          if (p.ops.size() != 2)
            cg_error("internal: deep list pattern survived");
          ins.op = Op::SwitchOnCons;
          ins.a = P_.em.use(l_nil);
          ins.b = P_.em.use(l_var);
          ins.c = P_.em.use(l_fl);
        } else {
          ins.op = Op::JmpnStruct;
          ins.a = P_.em.use(l_var);
          ins.b = P_.em.use(l_fl);
          ins.sym = int(P_.syms.intern(p.pat->name, int(p.pat->args.size())));
        }
        ins.y = y;
        for (const auto& o : p.ops) ins.zs.push_back(op_of(o));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::TestVar: {
        const POperand& o = p.ops[0];
        TermP c = o.cterm;
        int r = -1;
        if (!c) {
          r = cg_.find(o.var);
          if (cg_.cval[r]) c = cg_.cval[r];
        }
        if (c) {  // statically known non-var
          bool holds = p.test == TestOp::Nonvar ||
                       (p.test == TestOp::Atom && c->k == Term::K::Atom) ||
                       (p.test == TestOp::Integer && c->k == Term::K::Int);
          if (!holds) {
            P_.em.emit(Instr{Op::Jmp, P_.em.use(fail_to_)});
            return false;
          }
          break;
        }
        if (!cg_.mat[r]) {  // still unbound at this point in the clause
          if (p.test != TestOp::Var) {
            P_.em.emit(Instr{Op::Jmp, P_.em.use(fail_to_)});
            return false;
          }
          break;
        }
        Instr ins{Op::BuiltinTestVar};
        ins.a = int(p.test);
        ins.b = P_.em.use(fail_to_);
        ins.y = subj_slot(o.var);
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::Test: {
        Instr ins{Op::BuiltinTest};
        ins.a = int(p.test);
        ins.b = P_.em.use(fail_to_);
        for (const auto& o : p.ops) ins.zs.push_back(op_of(o));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::Build: {
        int r = cg_.find(p.subj);
        cg_.mat[r] = 1;
        if (cg_.slot[r] == kNoSlot) cg_.slot[r] = alloc_slot();
        Instr ins;
        if (ast::is_cons(p.pat)) {
          ins.op = Op::MoveList;
          ins.a = int(p.ops.size()) - 1;
        } else {
          ins.op = Op::MoveStruct;
          ins.sym = int(P_.syms.intern(p.pat->name, int(p.pat->args.size())));
        }
        ins.y = cg_.slot[r];
        for (const auto& o : p.ops) ins.zs.push_back(op_of(o));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::UnifyConst: {
        Instr ins{Op::UnifyConstant};
        ins.y = subj_slot(p.subj);
        ins.zs.push_back(const_op(p.pat));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::UnifyVal: {
        Instr ins{Op::UnifyValue};
        ins.y = subj_slot(p.subj);
        ins.zs.push_back(op_of(p.ops[0]));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::UnifyStr: {
        int y = subj_slot(p.subj);
        free_subject_early(cg_.find(p.subj), idx);
        Instr ins;
        if (ast::is_cons(p.pat)) {
          ins.op = Op::UnifyList;
          ins.a = int(p.ops.size()) - 1;
        } else {
          ins.op = Op::UnifyStruct;
          ins.sym = int(P_.syms.intern(p.pat->name, int(p.pat->args.size())));
        }
        ins.y = y;
        for (const auto& o : p.ops) ins.zs.push_back(op_of(o));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::Cut:
        P_.em.emit(Instr{Op::Cut});
        committed = true;
        break;
      case Plan::K::FailStop:
        if (p.in_guard)
          P_.em.emit(Instr{Op::Jmp, P_.em.use(fail_to_)});
        else
          P_.em.emit(Instr{Op::Fail});
        return false;
      case Plan::K::Call:
      case Plan::K::BuiltinCall: {
        Instr ins;
        if (p.k == Plan::K::BuiltinCall) {
          ins.op = Op::Builtin;
          ins.a = int(p.bi);
        } else {
          ins.op = Op::Call;
        }
        ins.sym = int(p.callee);
        for (const auto& o : p.ops) ins.zs.push_back(op_of(o));
        P_.em.emit(std::move(ins));
        break;
      }
      case Plan::K::EventArgs:
        break;  // emitted only inside re-entry blocks
    }
    free_dead(idx);
    if ((p.k == Plan::K::Call || p.k == Plan::K::BuiltinCall) && p.barrier)
      clear_pool();
    return true;
  }

  // Turn the final Call plan into a last_call when the frame may be reused.
  void emit_last_call(const Plan& p) {
    Instr ins{Op::LastCall};
    ins.sym = int(p.callee);
    std::int64_t lay = 0;
    for (int i = 0; i < int(p.ops.size()); ++i) {
      Operand z = op_of(p.ops[size_t(i)]);
      bool in_place = z.k == Operand::K::U && z.slot == P_.arity - i;
      if (!in_place) lay |= std::int64_t(1) << i;
      ins.zs.push_back(z);
    }
    ins.lit = lay;
    P_.em.emit(std::move(ins));
  }

 private:
  ClauseCg& cg_;
  PredCtx& P_;
  int fail_to_;
  std::set<int> pool_;
  int nlocals_ = 0;
};

void emit_ending(PredCtx& P, Ending e) {
  switch (e) {
    case Ending::Return:
      P.em.emit(Instr{Op::Return});
      break;
    case Ending::QueryDone:
      P.em.emit(Instr{Op::QueryDone});
      break;
    case Ending::TableAnswer: {
      Instr ins{Op::TableAnswer};
      ins.sym = int(P.self);
      P.em.emit(std::move(ins));
      break;
    }
    case Ending::SuspReturn:
      P.em.emit(Instr{Op::SuspReturn});
      break;
    case Ending::None:
      break;
  }
}

// Emits one clause block (plans in order, ending included).
void emit_clause(ClauseCg& cg, PredCtx& P, int fail_to, const Overrides& ov) {
  ClauseEmitter E(cg, P, fail_to);
  E.args_poolable = ov.args_poolable;
  if (ov.cut_at_start) {
    P.em.emit(Instr{Op::Cut});
    E.committed = true;
  }
  if (ov.fork_to >= 0) P.em.emit(Instr{Op::Fork, P.em.use(ov.fork_to)});
  if (cg.guard_false) {
    P.em.emit(Instr{Op::Jmp, P.em.use(fail_to)});
    return;
  }
  bool body_started = false;
  for (int i = 0; i < int(cg.plans.size()); ++i) {
    const Plan& p = cg.plans[i];
    if (p.k == Plan::K::EventArgs) continue;
    if (i == ov.skip_plan) continue;
    if (!p.in_guard && !body_started) {
      body_started = true;
      if (ov.cut_before_body) {
        P.em.emit(Instr{Op::Cut});
        E.committed = true;
      } else if (ov.commit_at_body) {
        E.committed = true;
      }
    }
    bool is_last = i == int(cg.plans.size()) - 1;
    if (is_last && p.k == Plan::K::Call && ov.ending == Ending::Return &&
        !P.query_mode && E.committed &&
        int(p.ops.size()) <= kMaxLastCallArity) {
      E.emit_last_call(p);
      return;
    }
    if (!E.emit_plan(i, p, &ov)) return;
  }
  if (!body_started) {
    if (ov.cut_before_body) P.em.emit(Instr{Op::Cut});
    else if (ov.commit_at_body) {}  // nothing to emit
  }
  emit_ending(P, ov.ending);
}

// ---------------------------------------------------------------------------
// Matching-tree dispatch

struct TreeKey {
  enum class K { Var, Nil, Cons, Const, Struct } k;
  std::string discr;  // Const/Struct discriminator
  int clause = 0;
};

bool tree_keys(const CanonPred& pred, std::vector<ClauseCg>& cgs, int pos,
               std::vector<TreeKey>& keys) {
  keys.clear();
  std::set<std::string> taken;
  bool have_var = false, have_cons = false, have_nil = false;
  for (int ci = 0; ci < int(pred.clauses.size()); ++ci) {
    const TermP& a = pred.clauses[size_t(ci)].head->args[size_t(pos - 1)];
    TreeKey k;
    k.clause = ci;
    if (ast::is_var(a)) {
      if (cgs[size_t(ci)].var_test_plan(pos) < 0) return false;
      if (have_var) return false;
      have_var = true;
      k.k = TreeKey::K::Var;
    } else if (ast::is_nil(a)) {
      if (have_nil) return false;
      have_nil = true;
      k.k = TreeKey::K::Nil;
    } else if (ast::is_cons(a)) {
      if (have_cons) return false;
      have_cons = true;
      k.k = TreeKey::K::Cons;
    } else if (is_const_t(a)) {
      k.k = TreeKey::K::Const;
      switch (a->k) {
        case Term::K::Atom: k.discr = "a:" + a->name; break;
        case Term::K::Int: k.discr = "i:" + std::to_string(a->ival); break;
        default: k.discr = "f:" + std::to_string(a->fval); break;
      }
      if (!taken.insert(k.discr).second) return false;
    } else {
      k.k = TreeKey::K::Struct;
      k.discr = "s:" + a->name + "/" + std::to_string(a->args.size());
      if (!taken.insert(k.discr).second) return false;
    }
    keys.push_back(k);
  }
  return true;
}

void emit_tree(const CanonPred& pred, std::vector<ClauseCg>& cgs, PredCtx& P,
               int pos, const std::vector<TreeKey>& keys, Ending ending) {
  Emitter& em = P.em;
  int m = int(pred.clauses.size());
  int l_fail = em.lbl();
  std::vector<int> l_blk(m);
  for (int i = 0; i < m; ++i) l_blk[i] = em.lbl();

  int var_ci = -1, nil_ci = -1, cons_ci = -1;
  std::vector<int> keyed;  // Const/Struct clauses in source order
  for (const auto& k : keys) {
    switch (k.k) {
      case TreeKey::K::Var: var_ci = k.clause; break;
      case TreeKey::K::Nil: nil_ci = k.clause; break;
      case TreeKey::K::Cons: cons_ci = k.clause; break;
      default: keyed.push_back(k.clause); break;
    }
  }
  bool use_hash = int(keyed.size()) >= 4;
  // Without a cons clause, nil participates as an ordinary constant key.
  if (cons_ci < 0 && nil_ci >= 0) {
    keyed.insert(keyed.begin(), nil_ci);
    std::sort(keyed.begin(), keyed.end());
    use_hash = int(keyed.size()) >= 4;
    nil_ci = -1;
  }
  int l_var = var_ci >= 0 ? l_blk[size_t(var_ci)] : l_fail;
  int l_rest = em.lbl();  // first constant/functor test or hash block

  // move each keyed clause's dispatch plan to the front, then number
  for (int ci = 0; ci < m; ++ci) {
    ClauseCg& cg = cgs[size_t(ci)];
    int pi = ci == var_ci ? cg.var_test_plan(pos) : cg.plan_for_arg(pos);
    if (pi > 0)
      std::rotate(cg.plans.begin(), cg.plans.begin() + pi,
                  cg.plans.begin() + pi + 1);
    cg.number();
  }

  auto block_overrides = [&]() {
    Overrides ov;
    ov.ending = ending;
    ov.args_poolable = true;
    if (P.frame_det) ov.commit_at_body = true;
    else ov.cut_at_start = true;
    return ov;
  };

  // cons block first: switch_on_cons falls through into it
  if (cons_ci >= 0) {
    em.place(l_blk[size_t(cons_ci)]);
    Overrides ov = block_overrides();
    ov.dispatch_plan = 0;
    ov.d_nil = nil_ci >= 0 ? l_blk[size_t(nil_ci)] : l_fail;
    ov.d_var = l_var;
    ov.d_fail = keyed.empty() ? l_fail : l_rest;
    emit_clause(cgs[size_t(cons_ci)], P, l_fail, ov);
  }
  if (nil_ci >= 0) {
    em.place(l_blk[size_t(nil_ci)]);
    Overrides ov = block_overrides();
    ov.skip_plan = 0;  // switch_on_cons already matched []
    emit_clause(cgs[size_t(nil_ci)], P, l_fail, ov);
  }
  em.place(l_rest);
  if (use_hash) {
    Instr h{Op::Hash};
    h.y = pred.arity - pos + 1;
    h.a = em.use(l_var);
    h.b = em.use(l_fail);
    for (int ci : keyed) {
      const TermP& a = pred.clauses[size_t(ci)].head->args[size_t(pos - 1)];
      Operand key;
      if (ast::is_nil(a)) key = Operand::nil();
      else if (a->k == Term::K::Atom)
        key = Operand::atom(int(P.syms.intern(a->name, 0)));
      else if (a->k == Term::K::Int) key = Operand::integer(a->ival);
      else if (a->k == Term::K::Flt) key = Operand::flt(a->fval);
      else
        key = Operand::fun(
            int(P.syms.intern(a->name, int(a->args.size()))));
      h.zs.push_back(key);
      h.labels.push_back(em.use(l_blk[size_t(ci)]));
    }
    em.emit(std::move(h));
    for (int ci : keyed) {
      em.place(l_blk[size_t(ci)]);
      const TermP& a = pred.clauses[size_t(ci)].head->args[size_t(pos - 1)];
      Overrides ov = block_overrides();
      if (is_const_t(a))
        ov.skip_plan = 0;  // hash matched the constant exactly
      else {
        ov.dispatch_plan = 0;  // re-test fetches the arguments
        ov.d_var = l_fail;
        ov.d_fail = l_fail;
      }
      emit_clause(cgs[size_t(ci)], P, l_fail, ov);
    }
  } else {
    for (size_t i = 0; i < keyed.size(); ++i) {
      int ci = keyed[size_t(i)];
      em.place(l_blk[size_t(ci)]);
      Overrides ov = block_overrides();
      ov.dispatch_plan = 0;
      ov.d_var = l_var;
      ov.d_fail = i + 1 < keyed.size() ? l_blk[size_t(keyed[i + 1])] : l_fail;
      ov.d_nil = -1;
      emit_clause(cgs[size_t(ci)], P, l_fail, ov);
    }
  }
  if (var_ci >= 0) {
    em.place(l_blk[size_t(var_ci)]);
    Overrides ov = block_overrides();
    ov.skip_plan = 0;  // the dispatcher proved the argument is unbound
    emit_clause(cgs[size_t(var_ci)], P, l_fail, ov);
  }
  if (em.used(l_fail)) {
    em.place(l_fail);
    em.emit(Instr{Op::Fail});
  }
}

// ---------------------------------------------------------------------------
// Predicate shapes

bool has_cut(const CanonClause& cl) {
  for (const auto& g : cl.body)
    if (g->k == Term::K::Atom && g->name == "!") return true;
  return false;
}

void emit_chain(const CanonPred& pred, std::vector<ClauseCg>& cgs, PredCtx& P,
                Ending ending) {
  Emitter& em = P.em;
  int m = int(pred.clauses.size());
  int l_fail = em.lbl();
  int l_exhaust = em.lbl();
  std::vector<int> l_blk(m);
  for (int i = 1; i < m; ++i) l_blk[size_t(i)] = em.lbl();

  for (int k = 0; k < m; ++k) {
    cgs[size_t(k)].number();
    if (k > 0) em.place(l_blk[size_t(k)]);
    const CanonClause& cl = pred.clauses[size_t(k)];
    bool last = k == m - 1;
    Overrides ov;
    ov.ending = ending;
    ov.args_poolable = last && P.frame_det;
    int next = last ? (cl.det ? l_fail : l_exhaust) : l_blk[size_t(k + 1)];
    if (P.frame_det) {
      ov.commit_at_body = true;
    } else if (cl.det) {
      if (last) ov.cut_at_start = true;
      else ov.cut_before_body = true;
    } else {
      ov.fork_to = last ? l_exhaust : l_blk[size_t(k + 1)];
    }
    emit_clause(cgs[size_t(k)], P, next, ov);
  }
  if (em.used(l_exhaust)) {
    em.place(l_exhaust);
    em.emit(Instr{Op::Cut});
    em.emit(Instr{Op::Fail});
  }
  if (em.used(l_fail)) {
    em.place(l_fail);
    em.emit(Instr{Op::Fail});
  }
}

void emit_tabled(const CanonPred& pred, std::vector<ClauseCg>& cgs, PredCtx& P,
                 int l_complete, int l_first) {
  Emitter& em = P.em;
  int m = int(pred.clauses.size());
  std::vector<int> l_blk(m);
  for (int i = 1; i < m; ++i) l_blk[size_t(i)] = em.lbl();
  em.place(l_first);
  for (int k = 0; k < m; ++k) {
    cgs[size_t(k)].number();
    if (k > 0) em.place(l_blk[size_t(k)]);
    int next = k == m - 1 ? l_complete : l_blk[size_t(k + 1)];
    Overrides ov;
    ov.ending = Ending::TableAnswer;
    ov.fork_to = next;
    emit_clause(cgs[size_t(k)], P, next, ov);
  }
  em.place(l_complete);
  Instr tc{Op::TableComplete};
  tc.a = em.use(l_first);
  tc.sym = int(P.self);
  em.emit(std::move(tc));
  Instr cons{Op::TableConsume};
  cons.sym = int(P.self);
  em.emit(std::move(cons));
}

void emit_action(const CanonPred& pred, std::vector<ClauseCg>& cgs,
                 PredCtx& P) {
  Emitter& em = P.em;
  int m = int(pred.clauses.size());
  int first_commit = m;
  for (int k = 0; k < m; ++k) {
    bool ev = !pred.clauses[size_t(k)].events.empty();
    if (!ev && first_commit == m) first_commit = k;
    if (ev && first_commit < m)
      cg_error("action predicate " + pred.name +
               ": event rules must precede commitment rules");
  }
  int l_fail = em.lbl();
  std::vector<int> l_blk(m);
  for (int i = 1; i < m; ++i) l_blk[size_t(i)] = em.lbl();
  // target for a failed re-entry guard: the first commitment rule
  int l_commit = l_fail;
  if (first_commit == 0) l_commit = -1;    // no event rule exists to need it
  else if (first_commit < m) l_commit = l_blk[size_t(first_commit)];

  for (int k = 0; k < m; ++k) {
    ClauseCg& cg = cgs[size_t(k)];
    cg.number();
    if (k > 0) em.place(l_blk[size_t(k)]);
    int next = k == m - 1 ? l_fail : l_blk[size_t(k + 1)];
    if (cg.cl.events.empty()) {
      Overrides ov;
      ov.ending = Ending::SuspReturn;
      emit_clause(cg, P, next, ov);
      continue;
    }
    // event rule: head/guard tests, watcher registration, sleep; one
    // re-entry block per event pattern re-tests the guard and runs the body
    ClauseEmitter E(cg, P, next);
    if (cg.guard_false) {
      em.emit(Instr{Op::Jmp, em.use(next)});
      continue;
    }
    int guard_end = 0;
    while (guard_end < int(cg.plans.size()) &&
           cg.plans[size_t(guard_end)].in_guard)
      ++guard_end;
    bool alive = true;
    for (int i = 0; i < guard_end && alive; ++i) {
      if (cg.plans[size_t(i)].k == Plan::K::EventArgs) continue;
      alive = E.emit_plan(i, cg.plans[size_t(i)], nullptr);
    }
    if (!alive) continue;
    std::vector<int> l_reent(cg.event_plan.size());
    for (size_t j = 0; j < cg.event_plan.size(); ++j) {
      l_reent[j] = em.lbl();
      Instr w{Op::SuspWatch};
      w.a = cg.event_kind[j];
      w.b = em.use(l_reent[j]);
      w.y = E.subj_slot(cg.event_chan[j]);
      w.sym = cg.event_sym[j];
      em.emit(std::move(w));
    }
    em.emit(Instr{Op::SuspSleepRet});
    int l_end = em.lbl();
    std::vector<char> mat_snapshot = cg.mat;
    for (size_t j = 0; j < cg.event_plan.size(); ++j) {
      cg.mat = mat_snapshot;
      em.place(l_reent[j]);
      const Plan& ep = cg.plans[size_t(cg.event_plan[j])];
      Instr ea{Op::SuspEventArgs};
      for (const auto& o : ep.ops) ea.zs.push_back(E.op_of(o));
      em.emit(std::move(ea));
      ClauseEmitter R(cg, P, l_end);
      bool ok = true;
      for (int i = 0; i < guard_end && ok; ++i) {
        const Plan& p = cg.plans[size_t(i)];
        if (p.k == Plan::K::EventArgs) continue;
        ok = R.emit_plan(i, p, nullptr);
      }
      for (int i = guard_end; i < int(cg.plans.size()) && ok; ++i)
        ok = R.emit_plan(i, cg.plans[size_t(i)], nullptr);
      if (ok) em.emit(Instr{Op::SuspSleepRet});
    }
    if (em.used(l_end)) {
      em.place(l_end);
      em.emit(Instr{Op::SuspEnd});
      if (l_commit >= 0)
        em.emit(Instr{Op::Jmp, em.use(l_commit)});
      else
        em.emit(Instr{Op::Jmp, em.use(l_fail)});
    }
  }
  if (em.used(l_fail)) {
    em.place(l_fail);
    em.emit(Instr{Op::Fail});
  }
}

}  // namespace

int fixed_slots_for(Op allocate_op) {
  switch (allocate_op) {
    case Op::AllocateDet: return kFixedDet;
    case Op::AllocateNondet: return kFixedNondet;
    case Op::AllocateSusp: return kFixedSusp;
    case Op::AllocateTable: return kFixedTable;
    default: return kFixedDet;
  }
}

std::uint32_t compile_predicate(const CanonPred& pred, SymbolTable& syms,
                                std::vector<Instr>& code,
                                const std::vector<char>& det_safe,
                                const CodegenOpts& opts) {
  std::uint32_t self = syms.intern(pred.name, pred.arity);
  bool any_nondet = false, any_cut = false;
  for (const auto& cl : pred.clauses) {
    any_nondet = any_nondet || !cl.det;
    any_cut = any_cut || has_cut(cl);
  }

  Op aop;
  PredClass cls;
  if (pred.is_action) {
    aop = Op::AllocateSusp;
    cls = PredClass::Action;
  } else if (pred.table) {
    aop = Op::AllocateTable;
    cls = PredClass::Tabled;
  } else if (any_nondet || any_cut) {
    aop = Op::AllocateNondet;
    cls = any_nondet ? PredClass::Nondet : PredClass::Det;
  } else {
    aop = Op::AllocateDet;
    cls = PredClass::Det;
  }

  Emitter em(code);
  int entry = em.here();
  PredCtx P{em,    syms,
            self,  pred.arity,
            fixed_slots_for(aop), aop == Op::AllocateDet,
            opts.query_mode};
  P.pooling = !pred.is_action;

  Instr alloc{aop};
  alloc.a = pred.arity;
  alloc.sym = int(self);
  int l_complete = -1, l_first = -1;
  if (aop == Op::AllocateTable) {
    l_complete = em.lbl();
    l_first = em.lbl();
    alloc.c = em.use(l_complete);
  }
  em.emit(std::move(alloc));

  std::vector<ClauseCg> cgs;
  cgs.reserve(pred.clauses.size());
  for (const auto& cl : pred.clauses)
    cgs.emplace_back(cl, syms, det_safe, pred.arity);

  Ending ending = opts.query_mode ? Ending::QueryDone : Ending::Return;
  if (pred.is_action) {
    emit_action(pred, cgs, P);
  } else if (pred.table) {
    emit_tabled(pred, cgs, P, l_complete, l_first);
  } else if (pred.clauses.empty()) {
    em.emit(Instr{Op::Fail});
  } else {
    bool done = false;
    if (!opts.query_mode && pred.arity >= 1 && pred.clauses.size() >= 2) {
      bool all_det = !any_nondet;
      if (all_det) {
        std::vector<TreeKey> keys;
        for (int pos = 1; pos <= pred.arity && !done; ++pos) {
          if (tree_keys(pred, cgs, pos, keys)) {
            emit_tree(pred, cgs, P, pos, keys, ending);
            done = true;
          }
        }
      }
    }
    if (!done) emit_chain(pred, cgs, P, ending);
  }

  code[size_t(entry)].b = P.fixed + P.max_locals;
  em.finalize(entry);

  Symbol& sym = syms.at(self);
  sym.entry = entry;
  sym.end = em.here();
  sym.frame_size = P.fixed + P.max_locals;
  sym.cls = cls;
  sym.hidden = pred.hidden;
  if (pred.table) sym.table = pred.table;
  return self;
}

}  // namespace toam
