// Interpreter core: dispatch loop, unification, frame management with
// last-call reuse, backtracking over the value trail, and the builtin set.
// Event checkpoints live in events.cpp, table operations in tabling.cpp.

#include "toam/machine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>

#include "toam/builtins.hpp"
#include "toam/canonical.hpp"
#include "toam/errors.hpp"
#include "toam/writer.hpp"

namespace toam {

namespace {

constexpr int kStackMargin = 8;
constexpr int kMaxTermDepth = 1 << 20;

}  // namespace

std::uint64_t MachineStats::specialized_executed() const {
  std::uint64_t n = 0;
  for (int i = 0; i < kOpCount; ++i)
    if (is_specialized_op(Op(i))) n += op_count[std::size_t(i)];
  return n;
}

std::uint64_t MachineStats::merged_executed() const {
  std::uint64_t n = 0;
  for (int i = 0; i < kOpCount; ++i)
    if (is_merged_op(Op(i))) n += op_count[std::size_t(i)];
  return n;
}

std::string MachineStats::to_string() const {
  std::ostringstream os;
  std::uint64_t total = 0;
  for (auto c : op_count) total += c;
  os << "instructions executed: " << total << "\n";
  for (int i = 0; i < kOpCount; ++i)
    if (op_count[std::size_t(i)])
      os << "  " << op_name(Op(i)) << ": " << op_count[std::size_t(i)]
         << "\n";
  os << "specialized executed: " << specialized_executed()
     << ", merged executed: " << merged_executed() << "\n";
  os << "max stack: " << max_stack << " cells, max heap: " << max_heap
     << " cells, max trail: " << max_trail << " entries\n";
  if (max_frames) os << "max live frames: " << max_frames << "\n";
  if (activations || frame_copies)
    os << "agent activations: " << activations
       << ", frame copies: " << frame_copies << "\n";
  if (table_subgoals)
    os << "table subgoals: " << table_subgoals
       << ", answers: " << table_answers << ", rounds: " << table_rounds
       << "\n";
  return os.str();
}

Machine::Machine(Program& prog, MachineConfig cfg)
    : prog_(prog), syms_(prog.syms), cfg_(cfg) {
  heap_limit_ = Addr(cfg_.heap_cells);
  base_ = Addr(cfg_.heap_cells + cfg_.stack_cells);
  arena_.assign(std::size_t(base_) + 1, 0);
  tarea_.push_back(0);  // index 0 doubles as the null table address
  nil_sym_ = syms_.intern("[]", 0);
  float_sym_ = syms_.intern("$float", 2);
  ins_sym_ = syms_.intern("ins", 1);
  cons_sym_ = syms_.intern(".", 2);
  once_sym_ = syms_.intern("$once", 1);
  naf_sym_ = syms_.intern("$naf", 1);
  out_ = cfg_.out ? cfg_.out : &std::cout;
  terr_ = cfg_.trace_out ? cfg_.trace_out : &std::cerr;
}

// --- memory ----------------------------------------------------------------

Addr Machine::heap_alloc(std::size_t n) {
  if (std::size_t(H_) + n > std::size_t(heap_limit_))
    PrologError::raise(ErrKind::Resource, "heap overflow");
  Addr base = H_;
  H_ = Addr(H_ + n);
  if (H_ > stats_.max_heap) stats_.max_heap = H_;
  return base;
}

void Machine::stack_need(Addr newtop) {
  if (newtop <= heap_limit_ + kStackMargin)
    PrologError::raise(ErrKind::Resource, "stack overflow");
  std::uint64_t used = std::uint64_t(base_) - newtop + 1;
  if (used > stats_.max_stack) stats_.max_stack = used;
}

Machine::Drf Machine::deref(Cell c) {
  Addr a = 0;
  while (is_ref(c)) {
    Addr t = ref_addr(c);
    Cell next = arena_[t];
    a = t;
    if (next == c) return {c, a};  // self reference: free
    c = next;
  }
  if (is_susp(c)) return {c, susp_[susp_idx(c)].var};
  return {c, a};
}

bool Machine::freec(const Drf& d) const {
  return is_ref(d.c) || is_susp(d.c);
}

void Machine::trail_push(TrailEnt e) {
  if (trail_.size() >= cfg_.trail_cells)
    PrologError::raise(ErrKind::Resource, "trail overflow");
  trail_.push_back(e);
  if (trail_.size() > stats_.max_trail) stats_.max_trail = trail_.size();
}

void Machine::maybe_trail(Addr a) {
  if (heap_addr(a)) {
    if (a >= HB_) return;  // newer than the last choice point
  } else {
    if (a < Addr(slot(B_, kTOPs))) return;  // dies wholesale on backtrack
  }
  trail_push({TrailEnt::K::Cell, a, arena_[a]});
}

void Machine::untrail(std::size_t to) {
  while (trail_.size() > to) {
    TrailEnt e = trail_.back();
    trail_.pop_back();
    switch (e.k) {
      case TrailEnt::K::Cell:
        arena_[e.a] = e.old;
        break;
      case TrailEnt::K::RegPush:
        susp_.pop_back();
        break;
      case TrailEnt::K::WatchPush:
        susp_[e.a].watchers.pop_back();
        break;
      case TrailEnt::K::QueuePush:
        queue_.pop_back();
        break;
      case TrailEnt::K::QueueDrain:
        qhead_ = e.a;
        break;
    }
  }
}

void Machine::bind(Addr a, Cell v) {
  maybe_trail(a);
  Cell old = arena_[a];
  arena_[a] = v;
  if (is_susp(old)) post_ins(susp_idx(old), a);
}

Addr Machine::new_heap_var() {
  Addr a = heap_alloc(1);
  arena_[a] = make_ref(a);
  return a;
}

Addr Machine::globalize(Addr stack_var) {
  Addr hv = new_heap_var();
  bind(stack_var, make_ref(hv));
  return hv;
}

Cell Machine::value_ref(const Drf& d) {
  return freec(d) ? make_ref(d.a) : d.c;
}

// --- constants and floats ----------------------------------------------------

Cell Machine::box_float(double d) {
  Addr base = heap_alloc(3);
  std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  arena_[base] = make_fun(float_sym_);
  arena_[base + 1] = Cell(bits & 0xffffffffu);
  arena_[base + 2] = Cell(bits >> 32);
  return make_flt(base);
}

double Machine::unbox_float(Cell c) {
  Addr base = Addr(payload(c));
  std::uint64_t bits =
      (arena_[base + 1] & 0xffffffffu) | (arena_[base + 2] << 32);
  return std::bit_cast<double>(bits);
}

Cell Machine::const_cell(const Operand& z) {
  switch (z.k) {
    case Operand::K::CInt: return make_int(z.ival);
    case Operand::K::CAtm: return make_atom(std::uint32_t(z.sym));
    case Operand::K::CNil: return make_atom(nil_sym_);
    case Operand::K::CFlt: return box_float(z.fval);
    default:
      PrologError::raise(ErrKind::Internal, "constant operand expected");
  }
}

bool Machine::const_match(const Drf& s, const Operand& z) {
  switch (z.k) {
    case Operand::K::CInt: return is_int(s.c) && int_val(s.c) == z.ival;
    case Operand::K::CAtm:
      return is_atom(s.c) && atom_sym(s.c) == std::uint32_t(z.sym);
    case Operand::K::CNil: return is_atom(s.c) && atom_sym(s.c) == nil_sym_;
    case Operand::K::CFlt:
      return tag(s.c) == Tag::Flt && unbox_float(s.c) == z.fval;
    default: return false;
  }
}

bool Machine::unify_const(Cell subject, const Operand& z) {
  Drf s = deref(subject);
  if (freec(s)) {
    bind(s.a, const_cell(z));
    return true;
  }
  return const_match(s, z);
}

// --- unification --------------------------------------------------------------

bool Machine::unify(Cell a, Cell b) {
  std::vector<std::pair<Cell, Cell>> work;
  work.emplace_back(a, b);
  while (!work.empty()) {
    auto [ca, cb] = work.back();
    work.pop_back();
    Drf x = deref(ca), y = deref(cb);
    if (x.a != 0 && x.a == y.a) continue;
    bool xf = freec(x), yf = freec(y);
    if (xf && yf) {
      bool xs = !heap_addr(x.a), ys = !heap_addr(y.a);
      if (xs && ys) {  // two stack variables share one fresh heap variable
        Addr hv = new_heap_var();
        bind(x.a, make_ref(hv));
        bind(y.a, make_ref(hv));
      } else if (xs) {
        bind(x.a, make_ref(y.a));
      } else if (ys) {
        bind(y.a, make_ref(x.a));
      } else {
        bool xsusp = is_susp(x.c), ysusp = is_susp(y.c);
        if (xsusp && !ysusp) bind(y.a, make_ref(x.a));
        else if (ysusp && !xsusp) bind(x.a, make_ref(y.a));
        else if (x.a < y.a) bind(y.a, make_ref(x.a));
        else bind(x.a, make_ref(y.a));
      }
      continue;
    }
    if (xf) {
      bind(x.a, y.c);
      continue;
    }
    if (yf) {
      bind(y.a, x.c);
      continue;
    }
    Tag tx = tag(x.c), ty = tag(y.c);
    if (tx != ty) return false;
    switch (tx) {
      case Tag::Int:
      case Tag::Atm:
        if (x.c != y.c) return false;
        break;
      case Tag::Flt:
        if (unbox_float(x.c) != unbox_float(y.c)) return false;
        break;
      case Tag::Lst: {
        Addr bx = Addr(payload(x.c)), by = Addr(payload(y.c));
        work.emplace_back(arena_[bx], arena_[by]);
        work.emplace_back(arena_[bx + 1], arena_[by + 1]);
        break;
      }
      case Tag::Str: {
        Addr bx = Addr(payload(x.c)), by = Addr(payload(y.c));
        if (arena_[bx] != arena_[by]) return false;
        int n = syms_.at(fun_sym(arena_[bx])).arity;
        for (int i = n; i >= 1; --i)
          work.emplace_back(arena_[bx + i], arena_[by + i]);
        break;
      }
      default:
        return false;
    }
  }
  return true;
}

int Machine::compare_std(Cell a, Cell b) {
  for (;;) {
    Drf x = deref(a), y = deref(b);
    auto rank = [&](const Drf& d) {
      if (freec(d)) return 0;
      switch (tag(d.c)) {
        case Tag::Flt:
        case Tag::Int: return 1;
        case Tag::Atm: return 2;
        default: return 3;
      }
    };
    int rx = rank(x), ry = rank(y);
    if (rx != ry) return rx < ry ? -1 : 1;
    switch (rx) {
      case 0:
        if (x.a == y.a) return 0;
        return x.a < y.a ? -1 : 1;
      case 1: {
        bool xi = is_int(x.c), yi = is_int(y.c);
        if (xi && yi) {
          std::int64_t vx = int_val(x.c), vy = int_val(y.c);
          if (vx != vy) return vx < vy ? -1 : 1;
          return 0;
        }
        double vx = xi ? double(int_val(x.c)) : unbox_float(x.c);
        double vy = yi ? double(int_val(y.c)) : unbox_float(y.c);
        if (vx < vy) return -1;
        if (vx > vy) return 1;
        if (xi == yi) return 0;
        return xi ? 1 : -1;  // float precedes integer on equal value
      }
      case 2: {
        const std::string& nx = syms_.at(atom_sym(x.c)).name;
        const std::string& ny = syms_.at(atom_sym(y.c)).name;
        int r = nx.compare(ny);
        return r < 0 ? -1 : (r > 0 ? 1 : 0);
      }
      default: {
        Addr bx = Addr(payload(x.c)), by = Addr(payload(y.c));
        bool lx = tag(x.c) == Tag::Lst, ly = tag(y.c) == Tag::Lst;
        int ax = lx ? 2 : syms_.at(fun_sym(arena_[bx])).arity;
        int ay = ly ? 2 : syms_.at(fun_sym(arena_[by])).arity;
        if (ax != ay) return ax < ay ? -1 : 1;
        const std::string nx = lx ? "." : syms_.at(fun_sym(arena_[bx])).name;
        const std::string ny = ly ? "." : syms_.at(fun_sym(arena_[by])).name;
        int r = nx.compare(ny);
        if (r != 0) return r < 0 ? -1 : 1;
        Addr fx = lx ? bx : Addr(bx + 1), fy = ly ? by : Addr(by + 1);
        for (int i = 0; i < ax - 1; ++i) {
          int c = compare_std(arena_[fx + i], arena_[fy + i]);
          if (c != 0) return c;
        }
        a = arena_[fx + ax - 1];  // iterate on the last argument
        b = arena_[fy + ax - 1];
      }
    }
    if (rx != 3) return 0;
  }
}

// --- operands -------------------------------------------------------------------

Cell Machine::arg_value(const Operand& z) {
  switch (z.k) {
    case Operand::K::V: {
      if (z.slot == 0) return make_ref(new_heap_var());
      Addr a = slot_addr(AR_, z.slot);
      arena_[a] = make_ref(a);
      return make_ref(a);
    }
    case Operand::K::U:
      return value_ref(deref(slot(AR_, z.slot)));
    default:
      return const_cell(z);
  }
}

Cell Machine::build_value(const Operand& z) {
  switch (z.k) {
    case Operand::K::V: {
      Addr hv = new_heap_var();
      if (z.slot != 0) slot(AR_, z.slot) = make_ref(hv);
      return make_ref(hv);
    }
    case Operand::K::U: {
      Drf d = deref(slot(AR_, z.slot));
      if (freec(d) && !heap_addr(d.a)) return make_ref(globalize(d.a));
      return value_ref(d);
    }
    default:
      return const_cell(z);
  }
}

bool Machine::unify_operand(Addr cell_addr, const Operand& z) {
  switch (z.k) {
    case Operand::K::V:
      if (z.slot != 0) slot(AR_, z.slot) = arena_[cell_addr];
      return true;
    case Operand::K::U:
      return unify(arena_[cell_addr], slot(AR_, z.slot));
    default:
      return unify_const(arena_[cell_addr], z);
  }
}

void Machine::fetch_slot(const Operand& z, Cell v) {
  if (z.slot != 0) slot(AR_, z.slot) = v;
}

// --- frames ------------------------------------------------------------------------

void Machine::init_frame(const Instr& ins, Cell kind) {
  Addr newtop = Addr(std::int64_t(AR_) - (ins.b - 1));
  stack_need(newtop);
  slot(AR_, kBTM) = (Cell(AR_ + Addr(ins.a)) << 2) | kind;
  slot(AR_, kTOPs) = Cell(newtop);
  if (kind == kFrameNondet || kind == kFrameTable) {
    slot(AR_, kCPF) = Cell(cutfail_entry_);
    slot(AR_, kHs) = Cell(H_);
    slot(AR_, kTs) = Cell(trail_.size());
    slot(AR_, kBs) = Cell(B_);
    B_ = AR_;
    HB_ = H_;
  } else if (kind == kFrameSusp) {
    slot(AR_, kState) = kStStart;
    slot(AR_, kEvent) = 0;
    slot(AR_, kReep) = 0;
    slot(AR_, kPrev) = Cell(last_susp_);
    last_susp_ = AR_;
  }
  TOP_ = newtop;
  if (cfg_.count_frames) note_frame_depth();
}

void Machine::do_allocate(const Instr& ins, Cell kind) {
  init_frame(ins, kind);
  checkpoint(P_);
}

void Machine::note_frame_depth() {
  std::uint64_t depth = 0;
  Addr f = AR_;
  while (f != 0 && depth < std::uint64_t(base_)) {
    ++depth;
    f = Addr(slot(f, kParent));
  }
  if (depth > stats_.max_frames) stats_.max_frames = depth;
}

void Machine::do_return() {
  int newp = int(slot(AR_, kCP));
  if (Addr(slot(AR_, kTOPs)) == TOP_ && AR_ != B_)
    TOP_ = Addr((slot(AR_, kBTM) >> 2) + 1);
  AR_ = Addr(slot(AR_, kParent));
  P_ = newp;
  checkpoint(P_);
}

void Machine::do_cut() {
  B_ = Addr(slot(AR_, kBs));
  HB_ = Addr(slot(B_, kHs));
}

void Machine::backtrack() {
  P_ = int(slot(B_, kCPF));
  untrail(std::size_t(slot(B_, kTs)));
  H_ = Addr(slot(B_, kHs));
  HB_ = H_;
  TOP_ = Addr(slot(B_, kTOPs));
  AR_ = B_;
}

void Machine::push_call(std::uint32_t sym, const std::vector<Cell>& args) {
  const Symbol& s = syms_.at(sym);
  if (s.entry < 0)
    PrologError::raise(ErrKind::Existence,
                       "undefined predicate " + s.name + "/" +
                           std::to_string(s.arity));
  int n = int(args.size());
  Addr X = TOP_;
  stack_need(Addr(std::int64_t(X) - n - 2));
  for (int i = 0; i < n; ++i) arena_[Addr(X - 1 - i)] = args[std::size_t(i)];
  Addr A = Addr(X - Addr(n) - 1);
  slot(A, kParent) = Cell(AR_);
  slot(A, kCP) = Cell(P_);
  TOP_ = Addr(A - 1);
  AR_ = A;
  P_ = s.entry;
}

void Machine::exec_call(std::uint32_t sym, const std::vector<Operand>& zs) {
  std::vector<Cell> args;
  args.reserve(zs.size());
  for (const auto& z : zs) args.push_back(arg_value(z));
  push_call(sym, args);
}

void Machine::push_choice_frame(int cpf_entry) {
  Addr A = Addr(TOP_ - 1);
  stack_need(Addr(A - 7));
  slot(A, kParent) = Cell(AR_);
  slot(A, kCP) = Cell(P_);
  slot(A, kBTM) = (Cell(A) << 2) | kFrameNondet;
  slot(A, kTOPs) = Cell(Addr(A - 7));
  slot(A, kCPF) = Cell(cpf_entry);
  slot(A, kHs) = Cell(H_);
  slot(A, kTs) = Cell(trail_.size());
  slot(A, kBs) = Cell(B_);
  B_ = A;
  HB_ = H_;
  TOP_ = Addr(A - 7);
}

// --- last call ------------------------------------------------------------------------

Cell Machine::last_call_value(const Operand& z) {
  switch (z.k) {
    case Operand::K::V:
      return make_ref(new_heap_var());
    case Operand::K::U: {
      Drf d = deref(slot(AR_, z.slot));
      if (freec(d) && !heap_addr(d.a)) return make_ref(globalize(d.a));
      return value_ref(d);
    }
    default:
      return const_cell(z);
  }
}

void Machine::materialize_last(const Instr& ins, int n_cur, int n_new,
                               std::vector<Operand>& ops,
                               std::vector<char>& misplaced) {
  ops.clear();
  misplaced.assign(std::size_t(n_new), 0);
  if (ins.op == Op::LastCall) {
    ops = ins.zs;
    for (int j = 0; j < n_new; ++j)
      misplaced[std::size_t(j)] = char((ins.lit >> j) & 1);
    return;
  }
  std::size_t at = 0;
  for (int j = 1; j <= n_new; ++j) {
    if (j == ins.a || j == ins.b) {
      ops.push_back(ins.zs[at++]);
      misplaced[std::size_t(j - 1)] = 1;
    } else {
      ops.push_back(Operand::u(n_cur - j + 1));
    }
  }
}

void Machine::exec_last_call(std::uint32_t sym, const Instr& ins) {
  const Symbol& s = syms_.at(sym);
  if (s.entry < 0)
    PrologError::raise(ErrKind::Existence,
                       "undefined predicate " + s.name + "/" +
                           std::to_string(s.arity));
  Addr btm = Addr(slot(AR_, kBTM) >> 2);
  int n_cur = int(btm - AR_);
  int n_new = s.arity;
  std::vector<Operand> ops;
  std::vector<char> misplaced;
  materialize_last(ins, n_cur, n_new, ops, misplaced);

  bool reuse =
      cfg_.reuse_frames && Addr(slot(AR_, kTOPs)) == TOP_ && B_ != AR_;
  if (reuse) {
    // All misplaced operands are read before any argument slot is written;
    // free stack variables globalize so the dying frame leaks no aliases.
    std::vector<Cell> vals(std::size_t(n_new));
    for (int j = 0; j < n_new; ++j)
      if (misplaced[std::size_t(j)])
        vals[std::size_t(j)] = last_call_value(ops[std::size_t(j)]);
    Cell parent = slot(AR_, kParent), cp = slot(AR_, kCP);
    for (int j = 1; j <= n_new; ++j)
      if (misplaced[std::size_t(j - 1)])
        arena_[Addr(btm - Addr(j - 1))] = vals[std::size_t(j - 1)];
    Addr A2 = Addr(btm - Addr(n_new));
    if (A2 != AR_) {
      slot(A2, kParent) = parent;
      slot(A2, kCP) = cp;
      AR_ = A2;
    }
    TOP_ = Addr(AR_ - 1);
    P_ = s.entry;
    return;
  }
  // The frame is protected (choice point or buried); link the new frame
  // past it so the callee returns straight to this frame's continuation.
  std::vector<Cell> vals(std::size_t(n_new));
  for (int j = 0; j < n_new; ++j)
    vals[std::size_t(j)] = last_call_value(ops[std::size_t(j)]);
  Cell parent = slot(AR_, kParent), cp = slot(AR_, kCP);
  Addr X = TOP_;
  stack_need(Addr(std::int64_t(X) - n_new - 2));
  for (int j = 0; j < n_new; ++j)
    arena_[Addr(X - 1 - j)] = vals[std::size_t(j)];
  Addr A = Addr(X - Addr(n_new) - 1);
  slot(A, kParent) = parent;
  slot(A, kCP) = cp;
  TOP_ = Addr(A - 1);
  AR_ = A;
  P_ = s.entry;
}

// --- arithmetic -------------------------------------------------------------------------

namespace {

Machine::Num num_i(std::int64_t v) { return {false, v, 0.0}; }
Machine::Num num_f(double v) { return {true, 0, v}; }

std::int64_t checked(std::int64_t v) {
  if (!int_fits(v))
    PrologError::raise(ErrKind::Evaluation, "integer overflow");
  return v;
}

}  // namespace

Machine::Num Machine::eval_arith(Cell c, int depth) {
  if (depth > 100000)
    PrologError::raise(ErrKind::Evaluation, "expression too deep");
  Drf d = deref(c);
  if (freec(d))
    PrologError::raise(ErrKind::Instantiation,
                       "unbound variable in arithmetic");
  switch (tag(d.c)) {
    case Tag::Int: return num_i(int_val(d.c));
    case Tag::Flt: return num_f(unbox_float(d.c));
    case Tag::Str: break;
    default:
      PrologError::raise(ErrKind::Type, "evaluable expression expected");
  }
  Addr base = Addr(payload(d.c));
  const Symbol& f = syms_.at(fun_sym(arena_[base]));
  auto arg = [&](int i) { return eval_arith(arena_[base + Addr(i)], depth + 1); };
  if (f.arity == 1) {
    Num x = arg(1);
    if (f.name == "-")
      return x.flt ? num_f(-x.d) : num_i(checked(-x.i));
    if (f.name == "+") return x;
    if (f.name == "abs")
      return x.flt ? num_f(std::abs(x.d))
                   : num_i(checked(x.i < 0 ? -x.i : x.i));
    PrologError::raise(ErrKind::Type,
                       "unknown arithmetic function " + f.name + "/1");
  }
  if (f.arity != 2)
    PrologError::raise(ErrKind::Type,
                       "unknown arithmetic function " + f.name + "/" +
                           std::to_string(f.arity));
  Num x = arg(1), y = arg(2);
  bool ff = x.flt || y.flt;
  if (f.name == "+") {
    if (ff) return num_f(x.as_d() + y.as_d());
    std::int64_t r;
    if (__builtin_add_overflow(x.i, y.i, &r))
      PrologError::raise(ErrKind::Evaluation, "integer overflow");
    return num_i(checked(r));
  }
  if (f.name == "-") {
    if (ff) return num_f(x.as_d() - y.as_d());
    std::int64_t r;
    if (__builtin_sub_overflow(x.i, y.i, &r))
      PrologError::raise(ErrKind::Evaluation, "integer overflow");
    return num_i(checked(r));
  }
  if (f.name == "*") {
    if (ff) return num_f(x.as_d() * y.as_d());
    std::int64_t r;
    if (__builtin_mul_overflow(x.i, y.i, &r))
      PrologError::raise(ErrKind::Evaluation, "integer overflow");
    return num_i(checked(r));
  }
  if (f.name == "/") {
    if (y.as_d() == 0.0)
      PrologError::raise(ErrKind::Evaluation, "zero divisor");
    return num_f(x.as_d() / y.as_d());
  }
  if (f.name == "//") {
    if (ff) PrologError::raise(ErrKind::Type, "integer arguments expected");
    if (y.i == 0) PrologError::raise(ErrKind::Evaluation, "zero divisor");
    if (x.i == kIntMin && y.i == -1)
      PrologError::raise(ErrKind::Evaluation, "integer overflow");
    return num_i(x.i / y.i);
  }
  if (f.name == "mod") {
    if (ff) PrologError::raise(ErrKind::Type, "integer arguments expected");
    if (y.i == 0) PrologError::raise(ErrKind::Evaluation, "zero divisor");
    std::int64_t r = x.i % y.i;
    if (r != 0 && (r < 0) != (y.i < 0)) r += y.i;
    return num_i(r);
  }
  if (f.name == "min") {
    if (ff) return x.as_d() <= y.as_d() ? x : y;
    return x.i <= y.i ? x : y;
  }
  if (f.name == "max") {
    if (ff) return x.as_d() >= y.as_d() ? x : y;
    return x.i >= y.i ? x : y;
  }
  PrologError::raise(ErrKind::Type,
                     "unknown arithmetic function " + f.name + "/2");
}

Cell Machine::num_cell(const Num& n) {
  if (n.flt) return box_float(n.d);
  return make_int(checked(n.i));
}

// --- builtins --------------------------------------------------------------------------------

bool Machine::builtin_test(TestOp t, const Instr& ins) {
  switch (t) {
    case TestOp::Eq:
      return compare_std(arg_value(ins.zs[0]), arg_value(ins.zs[1])) == 0;
    case TestOp::Ne:
      return compare_std(arg_value(ins.zs[0]), arg_value(ins.zs[1])) != 0;
    default:
      break;
  }
  Num x = eval_arith(arg_value(ins.zs[0]));
  Num y = eval_arith(arg_value(ins.zs[1]));
  bool ii = !x.flt && !y.flt;
  switch (t) {
    case TestOp::Lt: return ii ? x.i < y.i : x.as_d() < y.as_d();
    case TestOp::Gt: return ii ? x.i > y.i : x.as_d() > y.as_d();
    case TestOp::Le: return ii ? x.i <= y.i : x.as_d() <= y.as_d();
    case TestOp::Ge: return ii ? x.i >= y.i : x.as_d() >= y.as_d();
    case TestOp::ArithEq: return ii ? x.i == y.i : x.as_d() == y.as_d();
    case TestOp::ArithNe: return ii ? x.i != y.i : x.as_d() != y.as_d();
    default:
      PrologError::raise(ErrKind::Internal, "unexpected guard test");
  }
}

bool Machine::call_goal(Cell goal) {
  Drf g = deref(goal);
  if (freec(g))
    PrologError::raise(ErrKind::Instantiation, "unbound goal in call/1");
  std::uint32_t sym;
  std::vector<Cell> args;
  switch (tag(g.c)) {
    case Tag::Atm:
      sym = atom_sym(g.c);
      break;
    case Tag::Str: {
      Addr base = Addr(payload(g.c));
      sym = fun_sym(arena_[base]);
      int n = syms_.at(sym).arity;
      for (int i = 1; i <= n; ++i)
        args.push_back(value_ref(deref(arena_[base + Addr(i)])));
      break;
    }
    default:
      PrologError::raise(ErrKind::Type, "callable goal expected");
  }
  const Symbol& s = syms_.at(sym);
  if (s.cls == PredClass::Builtin)
    return run_builtin(s.builtin, sym, args);
  push_call(sym, args);
  return true;
}

bool Machine::exec_builtin(const Instr& ins) {
  std::vector<Cell> args;
  args.reserve(ins.zs.size());
  for (const auto& z : ins.zs) args.push_back(arg_value(z));
  return run_builtin(ins.a, std::uint32_t(ins.sym), args);
}

bool Machine::run_builtin(int bi, std::uint32_t sym,
                          const std::vector<Cell>& args) {
  auto need_int = [&](Cell c, const char* who) -> std::int64_t {
    Drf d = deref(c);
    if (freec(d))
      PrologError::raise(ErrKind::Instantiation, std::string(who));
    if (!is_int(d.c)) PrologError::raise(ErrKind::Type, std::string(who));
    return int_val(d.c);
  };
  switch (Bi(bi)) {
    case Bi::Unify:
    case Bi::AtEq:
      return unify(args[0], args[1]);
    case Bi::Eq: return compare_std(args[0], args[1]) == 0;
    case Bi::Ne: return compare_std(args[0], args[1]) != 0;
    case Bi::Lt:
    case Bi::Gt:
    case Bi::Le:
    case Bi::Ge:
    case Bi::ArithEq:
    case Bi::ArithNe: {
      Num x = eval_arith(args[0]), y = eval_arith(args[1]);
      bool ii = !x.flt && !y.flt;
      switch (Bi(bi)) {
        case Bi::Lt: return ii ? x.i < y.i : x.as_d() < y.as_d();
        case Bi::Gt: return ii ? x.i > y.i : x.as_d() > y.as_d();
        case Bi::Le: return ii ? x.i <= y.i : x.as_d() <= y.as_d();
        case Bi::Ge: return ii ? x.i >= y.i : x.as_d() >= y.as_d();
        case Bi::ArithEq: return ii ? x.i == y.i : x.as_d() == y.as_d();
        default: return ii ? x.i != y.i : x.as_d() != y.as_d();
      }
    }
    case Bi::Is:
      return unify(args[0], num_cell(eval_arith(args[1])));
    case Bi::Var: return freec(deref(args[0]));
    case Bi::Nonvar: return !freec(deref(args[0]));
    case Bi::Atom: {
      Drf d = deref(args[0]);
      return !freec(d) && is_atom(d.c);
    }
    case Bi::Integer: {
      Drf d = deref(args[0]);
      return !freec(d) && is_int(d.c);
    }
    case Bi::Functor: {
      Drf t = deref(args[0]);
      if (!freec(t)) {
        switch (tag(t.c)) {
          case Tag::Atm:
          case Tag::Int:
          case Tag::Flt:
            return unify(args[1], t.c) && unify(args[2], make_int(0));
          case Tag::Str: {
            const Symbol& f = syms_.at(fun_sym(arena_[Addr(payload(t.c))]));
            return unify(args[1], make_atom(syms_.intern(f.name, 0))) &&
                   unify(args[2], make_int(f.arity));
          }
          case Tag::Lst:
            return unify(args[1], make_atom(syms_.intern(".", 0))) &&
                   unify(args[2], make_int(2));
          default:
            return false;
        }
      }
      Drf f = deref(args[1]);
      if (freec(f))
        PrologError::raise(ErrKind::Instantiation, "functor/3");
      std::int64_t n = need_int(args[2], "functor/3");
      if (n < 0) PrologError::raise(ErrKind::Type, "functor/3");
      if (n == 0) {
        if (tag(f.c) == Tag::Str || tag(f.c) == Tag::Lst)
          PrologError::raise(ErrKind::Type, "functor/3: atomic expected");
        return unify(args[0], f.c);
      }
      if (!is_atom(f.c))
        PrologError::raise(ErrKind::Type, "functor/3: atom expected");
      const std::string& name = syms_.at(atom_sym(f.c)).name;
      if (name == "." && n == 2) {
        Addr b = heap_alloc(2);
        arena_[b] = make_ref(b);
        arena_[b + 1] = make_ref(Addr(b + 1));
        return unify(args[0], make_lst(b));
      }
      std::uint32_t id = syms_.intern(name, int(n));
      Addr b = heap_alloc(std::size_t(n) + 1);
      arena_[b] = make_fun(id);
      for (int i = 1; i <= n; ++i)
        arena_[b + Addr(i)] = make_ref(Addr(b + Addr(i)));
      return unify(args[0], make_str(b));
    }
    case Bi::Arg: {
      std::int64_t i = need_int(args[0], "arg/3");
      Drf t = deref(args[1]);
      if (freec(t)) PrologError::raise(ErrKind::Instantiation, "arg/3");
      if (tag(t.c) == Tag::Str) {
        Addr b = Addr(payload(t.c));
        int n = syms_.at(fun_sym(arena_[b])).arity;
        if (i < 1 || i > n) return false;
        return unify(args[2], arena_[b + Addr(i)]);
      }
      if (tag(t.c) == Tag::Lst) {
        if (i < 1 || i > 2) return false;
        return unify(args[2], arena_[Addr(payload(t.c)) + Addr(i - 1)]);
      }
      PrologError::raise(ErrKind::Type, "arg/3: compound expected");
    }
    case Bi::Univ: {
      Drf t = deref(args[0]);
      if (!freec(t)) {
        std::vector<Cell> parts;
        switch (tag(t.c)) {
          case Tag::Atm:
          case Tag::Int:
          case Tag::Flt:
            parts.push_back(t.c);
            break;
          case Tag::Str: {
            Addr b = Addr(payload(t.c));
            const Symbol& f = syms_.at(fun_sym(arena_[b]));
            parts.push_back(make_atom(syms_.intern(f.name, 0)));
            for (int i = 1; i <= f.arity; ++i)
              parts.push_back(arena_[b + Addr(i)]);
            break;
          }
          case Tag::Lst: {
            Addr b = Addr(payload(t.c));
            parts.push_back(make_atom(syms_.intern(".", 0)));
            parts.push_back(arena_[b]);
            parts.push_back(arena_[b + 1]);
            break;
          }
          default:
            return false;
        }
        Cell lst = make_atom(nil_sym_);
        for (std::size_t i = parts.size(); i > 0; --i) {
          Addr b = heap_alloc(2);
          arena_[b] = parts[i - 1];
          arena_[b + 1] = lst;
          lst = make_lst(b);
        }
        return unify(args[1], lst);
      }
      // construct from a proper list
      std::vector<Cell> parts;
      Cell cur = args[1];
      for (;;) {
        Drf d = deref(cur);
        if (is_atom(d.c) && atom_sym(d.c) == nil_sym_) break;
        if (tag(d.c) != Tag::Lst) {
          if (freec(d)) PrologError::raise(ErrKind::Instantiation, "=../2");
          PrologError::raise(ErrKind::Type, "=../2: list expected");
        }
        Addr b = Addr(payload(d.c));
        parts.push_back(arena_[b]);
        cur = arena_[b + 1];
      }
      if (parts.empty()) PrologError::raise(ErrKind::Type, "=../2");
      Drf h = deref(parts[0]);
      if (parts.size() == 1) {
        if (tag(h.c) == Tag::Str || tag(h.c) == Tag::Lst || freec(h))
          PrologError::raise(ErrKind::Type, "=../2: atomic expected");
        return unify(args[0], h.c);
      }
      if (!is_atom(h.c))
        PrologError::raise(ErrKind::Type, "=../2: atom expected");
      const std::string& name = syms_.at(atom_sym(h.c)).name;
      int n = int(parts.size()) - 1;
      if (name == "." && n == 2) {
        Addr b = heap_alloc(2);
        arena_[b] = parts[1];
        arena_[b + 1] = parts[2];
        return unify(args[0], make_lst(b));
      }
      Addr b = heap_alloc(std::size_t(n) + 1);
      arena_[b] = make_fun(syms_.intern(name, n));
      for (int i = 1; i <= n; ++i) arena_[b + Addr(i)] = parts[std::size_t(i)];
      return unify(args[0], make_str(b));
    }
    case Bi::Call: return call_goal(args[0]);
    case Bi::Once:
      push_call(once_sym_, {args[0]});
      return true;
    case Bi::Naf:
      push_call(naf_sym_, {args[0]});
      return true;
    case Bi::Repeat:
      push_choice_frame(retry_entry_);
      return true;
    case Bi::True: return true;
    case Bi::Fail: return false;
    case Bi::Write:
      write_cell(args[0], false, false);
      return true;
    case Bi::Writeln:
      write_cell(args[0], false, true);
      return true;
    case Bi::Nl:
      *out_ << '\n';
      return true;
    case Bi::Length: {
      Cell cur = args[0];
      std::int64_t count = 0;
      for (;;) {
        Drf d = deref(cur);
        if (is_atom(d.c) && atom_sym(d.c) == nil_sym_)
          return unify(args[1], make_int(count));
        if (tag(d.c) == Tag::Lst) {
          ++count;
          cur = arena_[Addr(payload(d.c)) + 1];
          continue;
        }
        if (!freec(d))
          PrologError::raise(ErrKind::Type, "length/2: list expected");
        // partial list: extend when the length is known
        std::int64_t want = need_int(args[1], "length/2");
        if (want < count) return false;
        Cell tail = make_atom(nil_sym_);
        for (std::int64_t i = want; i > count; --i) {
          Addr b = heap_alloc(2);
          arena_[b] = make_ref(b);
          arena_[b + 1] = tail;
          tail = make_lst(b);
        }
        return unify(make_ref(d.a), tail);
      }
    }
    case Bi::NewArray: {
      Drf d = deref(args[1]);
      std::int64_t n;
      if (tag(d.c) == Tag::Lst) {  // singleton dimension list
        Addr b = Addr(payload(d.c));
        n = need_int(arena_[b], "new_array/2");
        Drf rest = deref(arena_[b + 1]);
        if (!(is_atom(rest.c) && atom_sym(rest.c) == nil_sym_))
          PrologError::raise(ErrKind::Type,
                             "new_array/2: one dimension supported");
      } else {
        n = need_int(args[1], "new_array/2");
      }
      if (n < 1) PrologError::raise(ErrKind::Type, "new_array/2");
      std::uint32_t id = syms_.intern("$array", int(n));
      Addr b = heap_alloc(std::size_t(n) + 1);
      arena_[b] = make_fun(id);
      for (std::int64_t i = 1; i <= n; ++i)
        arena_[b + Addr(i)] = make_ref(Addr(b + Addr(i)));
      return unify(args[0], make_str(b));
    }
    case Bi::Post:
      do_post(args[0]);
      return true;
    case Bi::Throw:
      PrologError::raise(ErrKind::Thrown,
                         term_to_string(cell_to_ast(args[0]), {true}));
    case Bi::IterList: {
      Drf d = deref(args[0]);
      if (freec(d))
        PrologError::raise(ErrKind::Instantiation, "collection expected");
      if (tag(d.c) == Tag::Lst ||
          (is_atom(d.c) && atom_sym(d.c) == nil_sym_))
        return unify(args[1], d.c);
      if (tag(d.c) == Tag::Str) {
        Addr b = Addr(payload(d.c));
        const Symbol& f = syms_.at(fun_sym(arena_[b]));
        if (f.name == ".." && f.arity == 2) {
          std::int64_t lo, hi, step = 1;
          Drf first = deref(arena_[b + 1]);
          if (tag(first.c) == Tag::Str) {
            Addr b2 = Addr(payload(first.c));
            const Symbol& g = syms_.at(fun_sym(arena_[b2]));
            if (g.name == ".." && g.arity == 2) {  // Lo..Step..Hi
              lo = need_int(arena_[b2 + 1], "range");
              step = need_int(arena_[b2 + 2], "range") - lo;
              hi = need_int(arena_[b + 2], "range");
              if (step == 0)
                PrologError::raise(ErrKind::Evaluation, "empty range step");
              std::vector<std::int64_t> vs = expand_range(lo, step, hi);
              return unify(args[1], int_list(vs));
            }
          }
          lo = need_int(arena_[b + 1], "range");
          hi = need_int(arena_[b + 2], "range");
          std::vector<std::int64_t> vs = expand_range(lo, 1, hi);
          return unify(args[1], int_list(vs));
        }
      }
      PrologError::raise(ErrKind::Type, "collection or range expected");
    }
    default:
      break;
  }
  const Symbol& s = syms_.at(sym);
  PrologError::raise(ErrKind::Internal,
                     "builtin not implemented: " + s.name);
}

Cell Machine::int_list(const std::vector<std::int64_t>& vs) {
  Cell lst = make_atom(nil_sym_);
  for (std::size_t i = vs.size(); i > 0; --i) {
    Addr b = heap_alloc(2);
    arena_[b] = make_int(vs[i - 1]);
    arena_[b + 1] = lst;
    lst = make_lst(b);
  }
  return lst;
}

// --- answers ---------------------------------------------------------------------------------

ast::TermP Machine::cell_to_ast(Cell c, int depth) {
  if (depth > kMaxTermDepth)
    PrologError::raise(ErrKind::Resource, "term too deep");
  Drf d = deref(c);
  if (freec(d)) return ast::mk_var("_" + std::to_string(d.a), int(d.a));
  switch (tag(d.c)) {
    case Tag::Int: return ast::mk_int(int_val(d.c));
    case Tag::Atm: return ast::mk_atom(syms_.at(atom_sym(d.c)).name);
    case Tag::Flt: return ast::mk_flt(unbox_float(d.c));
    case Tag::Str: {
      Addr b = Addr(payload(d.c));
      const Symbol& f = syms_.at(fun_sym(arena_[b]));
      std::vector<ast::TermP> args;
      args.reserve(std::size_t(f.arity));
      for (int i = 1; i <= f.arity; ++i)
        args.push_back(cell_to_ast(arena_[b + Addr(i)], depth + 1));
      return ast::mk_cmp(f.name, std::move(args));
    }
    case Tag::Lst: {
      std::vector<ast::TermP> heads;
      Cell cur = d.c;
      for (;;) {
        Drf e = deref(cur);
        if (!freec(e) && tag(e.c) == Tag::Lst) {
          Addr b = Addr(payload(e.c));
          heads.push_back(cell_to_ast(arena_[b], depth + 1));
          cur = arena_[b + 1];
          if (int(heads.size()) > kMaxTermDepth)
            PrologError::raise(ErrKind::Resource, "term too deep");
          continue;
        }
        ast::TermP tail = cell_to_ast(cur, depth + 1);
        for (std::size_t i = heads.size(); i > 0; --i)
          tail = ast::mk_cons(heads[i - 1], tail);
        return tail;
      }
    }
    default:
      PrologError::raise(ErrKind::Internal, "unexpected cell in copy-out");
  }
}

void Machine::write_cell(Cell c, bool quoted, bool nl) {
  *out_ << term_to_string(cell_to_ast(c), {quoted});
  if (nl) *out_ << '\n';
}

ast::TermP Machine::arg_term(int i) {
  Addr a = Addr(query_ar_ + Addr(query_arity_ - i + 1));
  return cell_to_ast(arena_[a]);
}

// --- diagnostics ------------------------------------------------------------------------------

void Machine::trace_step(int p) {
  *terr_ << p << ": " << format_instr(prog_.code, p, syms_, 0) << "  [AR="
         << AR_ << " TOP=" << TOP_ << " H=" << H_ << " T=" << trail_.size()
         << " B=" << B_ << "]\n";
}

void Machine::validate(int p) {
  auto fail = [&](const std::string& what) {
    PrologError::raise(ErrKind::Internal,
                       "invariant broken at " + std::to_string(p) + ": " +
                           what);
  };
  if (H_ > heap_limit_ + 1 || TOP_ <= heap_limit_ || TOP_ > base_)
    fail("register out of range");
  if (HB_ != Addr(slot(B_, kHs))) fail("HB does not match B->H");
  // heap cells never reference the stack
  for (Addr a = 1; a < H_; ++a) {
    Cell c = arena_[a];
    switch (tag(c)) {
      case Tag::Ref:
        if (ref_addr(c) >= H_) fail("heap ref into dead space");
        break;
      case Tag::Str:
      case Tag::Lst:
      case Tag::Flt:
        if (Addr(payload(c)) >= H_) fail("heap block ref out of range");
        break;
      case Tag::Fun:
        if (fun_sym(c) == float_sym_) a += 2;  // raw payload cells
        break;
      case Tag::Susp:
        if (susp_idx(c) >= susp_.size()) fail("dangling suspension index");
        break;
      default:
        break;
    }
  }
  // frame chain sanity plus the same-frame slot assertion
  Addr f = AR_;
  int hops = 0;
  while (f != 0 && f != base_) {
    if (++hops > 1 << 20) fail("frame chain does not reach the root");
    Cell btm_raw = slot(f, kBTM);
    Addr btm = Addr(btm_raw >> 2);
    Cell kind = btm_raw & 3;
    Addr low = Addr(slot(f, kTOPs));
    if (btm < f || low >= f) fail("frame bounds corrupt");
    if (low < TOP_) fail("live frame below TOP");
    int fixed = kind == kFrameDet ? 4 : (kind == kFrameTable ? 10 : 8);
    auto check_data = [&](Addr a) {
      Cell c = arena_[a];
      if (is_ref(c)) {
        Addr t = ref_addr(c);
        if (t >= low && t <= btm && t != a)
          fail("slot references its own frame");
      }
    };
    for (Addr a = f + 1; a <= btm; ++a) check_data(a);          // arguments
    for (Addr a = low; a + Addr(fixed) <= f; ++a) check_data(a);  // locals
    Addr parent = Addr(slot(f, kParent));
    if (parent != 0 && parent <= f) fail("parent frame is younger");
    f = parent;
  }
}

// --- driver ------------------------------------------------------------------------------------

Machine::Result Machine::run(std::uint32_t query_sym) {
  const Symbol& q = syms_.at(query_sym);
  if (q.entry < 0)
    PrologError::raise(ErrKind::Internal, "query not compiled");
  cutfail_entry_ = prog_.entry_of(prog_.cut_fail);
  qfail_entry_ = prog_.entry_of(prog_.query_fail);
  retry_entry_ = prog_.entry_of(prog_.retry);
  wake_entry_ = prog_.entry_of(prog_.wake);

  H_ = 1;
  HB_ = 1;
  trail_.clear();
  susp_.clear();
  queue_.clear();
  qhead_ = 0;
  last_susp_ = 0;
  wmode_ = false;
  S_ = 0;

  // root choice point: final failure lands in the query-fail stub
  Addr A = base_;
  slot(A, kParent) = 0;
  slot(A, kCP) = 0;
  slot(A, kBTM) = (Cell(A) << 2) | kFrameNondet;
  slot(A, kTOPs) = Cell(Addr(A - 7));
  slot(A, kCPF) = Cell(qfail_entry_);
  slot(A, kHs) = Cell(H_);
  slot(A, kTs) = 0;
  slot(A, kBs) = Cell(A);
  B_ = A;
  AR_ = A;
  TOP_ = Addr(A - 7);

  // query frame: one fresh variable per named query argument
  int n = q.arity;
  Addr X = TOP_;
  stack_need(Addr(std::int64_t(X) - n - 2));
  for (int i = 1; i <= n; ++i) {
    Addr a = Addr(X - Addr(i));
    arena_[a] = make_ref(a);
  }
  Addr A2 = Addr(X - Addr(n) - 1);
  slot(A2, kParent) = Cell(A);
  slot(A2, kCP) = 0;
  TOP_ = Addr(A2 - 1);
  AR_ = A2;
  P_ = q.entry;
  query_ar_ = A2;
  query_arity_ = n;
  query_live_ = false;
  return loop();
}

Machine::Result Machine::more() {
  if (!query_live_) return Result::NoMore;
  backtrack();
  return loop();
}

Machine::Result Machine::loop() {
  for (;;) {
    int p = P_;
    const Instr& ins = prog_.code[std::size_t(p)];
    ++P_;
    ++stats_.op_count[std::size_t(ins.op)];
    if (cfg_.trace) trace_step(p);
    switch (ins.op) {
      case Op::AllocateDet:
        do_allocate(ins, kFrameDet);
        break;
      case Op::AllocateNondet:
        do_allocate(ins, kFrameNondet);
        break;
      case Op::AllocateSusp:
        do_allocate(ins, kFrameSusp);
        break;
      case Op::AllocateTable:
        do_allocate_table(ins);
        break;
      case Op::Return:
        do_return();
        break;
      case Op::Fork:
        slot(AR_, kCPF) = Cell(ins.a);
        break;
      case Op::Cut:
        do_cut();
        break;
      case Op::Fail:
        backtrack();
        break;
      case Op::Jmp:
        P_ = ins.a;
        break;

      case Op::JmpnConstant: {
        Drf s = deref(slot(AR_, ins.y));
        if (freec(s)) P_ = ins.a;
        else if (!const_match(s, ins.zs[0])) P_ = ins.b;
        break;
      }
      case Op::JmpnStruct: {
        Drf s = deref(slot(AR_, ins.y));
        if (freec(s)) {
          P_ = ins.a;
          break;
        }
        if (tag(s.c) == Tag::Str) {
          Addr b = Addr(payload(s.c));
          if (fun_sym(arena_[b]) == std::uint32_t(ins.sym)) {
            for (std::size_t i = 0; i < ins.zs.size(); ++i)
              fetch_slot(ins.zs[i], arena_[b + 1 + Addr(i)]);
            break;
          }
        }
        P_ = ins.b;
        break;
      }
      case Op::SwitchOnCons: {
        Drf s = deref(slot(AR_, ins.y));
        if (freec(s)) {
          P_ = ins.b;
          break;
        }
        if (tag(s.c) == Tag::Lst) {
          Addr b = Addr(payload(s.c));
          fetch_slot(ins.zs[0], arena_[b]);
          fetch_slot(ins.zs[1], arena_[b + 1]);
          break;
        }
        if (is_atom(s.c) && atom_sym(s.c) == nil_sym_) P_ = ins.a;
        else P_ = ins.c;
        break;
      }
      case Op::Hash: {
        Drf s = deref(slot(AR_, ins.y));
        if (freec(s)) {
          P_ = ins.a;
          break;
        }
        int target = ins.b;
        for (std::size_t i = 0; i < ins.zs.size(); ++i) {
          const Operand& z = ins.zs[i];
          bool hit = false;
          if (z.k == Operand::K::CFun) {
            if (tag(s.c) == Tag::Str)
              hit = fun_sym(arena_[Addr(payload(s.c))]) ==
                    std::uint32_t(z.sym);
            else if (tag(s.c) == Tag::Lst)
              hit = std::uint32_t(z.sym) == cons_sym_;
          } else {
            hit = const_match(s, z);
          }
          if (hit) {
            target = ins.labels[i];
            break;
          }
        }
        P_ = target;
        break;
      }
      case Op::BuiltinTest: {
        bool ok;
        try {
          ok = builtin_test(TestOp(ins.a), ins);
        } catch (const PrologError& e) {
          if (e.kind == ErrKind::Type || e.kind == ErrKind::Instantiation ||
              e.kind == ErrKind::Evaluation)
            ok = false;  // an unsatisfiable guard is a failed match
          else
            throw;
        }
        if (!ok) P_ = ins.b;
        break;
      }
      case Op::BuiltinTestVar: {
        Drf s = deref(slot(AR_, ins.y));
        bool ok;
        switch (TestOp(ins.a)) {
          case TestOp::Var: ok = freec(s); break;
          case TestOp::Nonvar: ok = !freec(s); break;
          case TestOp::Atom: ok = !freec(s) && is_atom(s.c); break;
          case TestOp::Integer: ok = !freec(s) && is_int(s.c); break;
          default: ok = false; break;
        }
        if (!ok) P_ = ins.b;
        break;
      }

      case Op::UnifyConstant:
        if (!unify_const(slot(AR_, ins.y), ins.zs[0])) backtrack();
        break;
      case Op::UnifyValue:
        if (!unify(slot(AR_, ins.y), arg_value(ins.zs[0]))) backtrack();
        break;
      case Op::UnifyStruct:
      case Op::UnifyStruct1:
      case Op::UnifyStruct2: {
        Drf s = deref(slot(AR_, ins.y));
        int n = int(ins.zs.size());
        if (freec(s)) {
          Addr b = heap_alloc(std::size_t(n) + 1);
          arena_[b] = make_fun(std::uint32_t(ins.sym));
          for (int i = 0; i < n; ++i)
            arena_[b + 1 + Addr(i)] = build_value(ins.zs[std::size_t(i)]);
          bind(s.a, make_str(b));
          break;
        }
        if (tag(s.c) == Tag::Str) {
          Addr b = Addr(payload(s.c));
          if (fun_sym(arena_[b]) == std::uint32_t(ins.sym)) {
            bool ok = true;
            for (int i = 0; i < n && ok; ++i)
              ok = unify_operand(Addr(b + 1 + Addr(i)), ins.zs[std::size_t(i)]);
            if (!ok) backtrack();
            break;
          }
        }
        backtrack();
        break;
      }
      case Op::UnifyCons: {
        Drf s = deref(slot(AR_, ins.y));
        if (freec(s)) {
          Addr b = heap_alloc(2);
          arena_[b] = build_value(ins.zs[0]);
          arena_[b + 1] = build_value(ins.zs[1]);
          bind(s.a, make_lst(b));
          break;
        }
        if (tag(s.c) == Tag::Lst) {
          Addr b = Addr(payload(s.c));
          if (!unify_operand(b, ins.zs[0]) ||
              !unify_operand(Addr(b + 1), ins.zs[1]))
            backtrack();
          break;
        }
        backtrack();
        break;
      }
      case Op::UnifyList: {
        int n = ins.a;
        Cell cur = slot(AR_, ins.y);
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
          Drf d = deref(cur);
          if (freec(d)) {
            Addr b = heap_alloc(2);
            arena_[b] = build_value(ins.zs[std::size_t(i)]);
            arena_[b + 1] = make_ref(Addr(b + 1));
            bind(d.a, make_lst(b));
            cur = make_ref(Addr(b + 1));
          } else if (tag(d.c) == Tag::Lst) {
            Addr b = Addr(payload(d.c));
            ok = unify_operand(b, ins.zs[std::size_t(i)]);
            cur = make_ref(Addr(b + 1));
          } else {
            ok = false;
          }
        }
        if (ok) ok = unify(cur, arg_value(ins.zs[std::size_t(n)]));
        if (!ok) backtrack();
        break;
      }
      case Op::MoveStruct: {
        int n = int(ins.zs.size());
        Addr b = heap_alloc(std::size_t(n) + 1);
        arena_[b] = make_fun(std::uint32_t(ins.sym));
        for (int i = 0; i < n; ++i)
          arena_[b + 1 + Addr(i)] = build_value(ins.zs[std::size_t(i)]);
        slot(AR_, ins.y) = make_str(b);
        break;
      }
      case Op::MoveCons: {
        Addr b = heap_alloc(2);
        arena_[b] = build_value(ins.zs[0]);
        arena_[b + 1] = build_value(ins.zs[1]);
        slot(AR_, ins.y) = make_lst(b);
        break;
      }
      case Op::MoveList: {
        int n = ins.a;
        Addr b = heap_alloc(std::size_t(n) * 2);
        for (int i = 0; i < n; ++i) {
          arena_[b + Addr(2 * i)] = build_value(ins.zs[std::size_t(i)]);
          if (i + 1 < n)
            arena_[b + Addr(2 * i) + 1] = make_lst(Addr(b + Addr(2 * i + 2)));
        }
        arena_[b + Addr(2 * n) - 1] = build_value(ins.zs[std::size_t(n)]);
        slot(AR_, ins.y) = make_lst(b);
        break;
      }
      case Op::UnifyStructH: {
        Drf s = deref(slot(AR_, ins.y));
        int n = syms_.at(std::uint32_t(ins.sym)).arity;
        if (freec(s)) {
          Addr b = heap_alloc(std::size_t(n) + 1);
          arena_[b] = make_fun(std::uint32_t(ins.sym));
          arena_[b + 1] = build_value(ins.zs[0]);
          arena_[b + 2] = build_value(ins.zs[1]);
          for (int i = 3; i <= n; ++i)
            arena_[b + Addr(i)] = make_ref(Addr(b + Addr(i)));
          bind(s.a, make_str(b));
          S_ = Addr(b + 3);
          wmode_ = true;
          break;
        }
        if (tag(s.c) == Tag::Str) {
          Addr b = Addr(payload(s.c));
          if (fun_sym(arena_[b]) == std::uint32_t(ins.sym)) {
            if (!unify_operand(Addr(b + 1), ins.zs[0]) ||
                !unify_operand(Addr(b + 2), ins.zs[1])) {
              backtrack();
              break;
            }
            S_ = Addr(b + 3);
            wmode_ = false;
            break;
          }
        }
        backtrack();
        break;
      }
      case Op::UnifyArg: {
        if (wmode_) {
          Cell v = build_value(ins.zs[0]);
          bind(S_, v);
        } else if (!unify_operand(S_, ins.zs[0])) {
          backtrack();
          break;
        }
        ++S_;
        break;
      }

      case Op::Call:
      case Op::CallKU:
      case Op::CallV:
      case Op::CallUV:
        exec_call(std::uint32_t(ins.sym), ins.zs);
        break;
      case Op::LastCall:
      case Op::LastCall0:
      case Op::LastCall1:
      case Op::LastCall2:
      case Op::TailCall0:
      case Op::TailCall1:
      case Op::TailCall2:
        exec_last_call(std::uint32_t(ins.sym), ins);
        break;
      case Op::Builtin:
        if (!exec_builtin(ins)) backtrack();
        break;

      case Op::ForkUnifyConstant:
        slot(AR_, kCPF) = Cell(ins.a);
        if (!unify_const(slot(AR_, ins.y), ins.zs[0])) backtrack();
        break;
      case Op::UnifyConstantCut:
        if (unify_const(slot(AR_, ins.y), ins.zs[0])) do_cut();
        else backtrack();
        break;
      case Op::UnifyConstantReturn:
        if (unify_const(slot(AR_, ins.y), ins.zs[0])) do_return();
        else backtrack();
        break;
      case Op::UnifyValueReturn:
        if (unify(slot(AR_, ins.y), arg_value(ins.zs[0]))) do_return();
        else backtrack();
        break;
      case Op::CutReturn:
        do_cut();
        do_return();
        break;
      case Op::CutFail:
        do_cut();
        backtrack();
        break;

      case Op::SuspWatch:
        do_susp_watch(ins);
        break;
      case Op::SuspSleepRet:
        do_susp_sleep_ret();
        break;
      case Op::SuspEnd:
        trailed_write(slot_addr(AR_, kState), kStEnd);
        break;
      case Op::SuspReturn:
        do_susp_return();
        break;
      case Op::SuspEventArgs:
        do_susp_event_args(ins);
        break;
      case Op::WakeNext:
        P_ = int(slot(AR_, kReep));
        break;

      case Op::TableAnswer:
        do_table_answer(ins);
        break;
      case Op::TableComplete:
        do_table_complete(ins);
        break;
      case Op::TableConsume:
        do_table_consume(ins);
        break;

      case Op::QueryDone:
        if (checkpoint(p)) break;  // run woken agents, then come back here
        query_live_ = true;
        return Result::Answer;
      case Op::QueryFail:
        query_live_ = false;
        return Result::NoMore;

      case Op::Count_:
        PrologError::raise(ErrKind::Internal, "invalid opcode");
    }
    if (cfg_.validate) validate(p);
  }
}

}  // namespace toam
