#pragma once
//
// Bytecode interpreter.  One cell arena holds the heap (growing up from
// index 1) and the stack (growing down from the top); frames, choice
// points, suspension frames and tabled frames all live on the stack.
// Bindings are undone through a value trail that also covers suspension
// bookkeeping, so backtracking restores agents and posted events exactly.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "toam/ast.hpp"
#include "toam/cell.hpp"
#include "toam/instr.hpp"
#include "toam/program.hpp"
#include "toam/symbols.hpp"

namespace toam {

struct MachineConfig {
  std::size_t heap_cells = std::size_t(4) << 20;
  std::size_t stack_cells = std::size_t(1) << 20;
  std::size_t trail_cells = std::size_t(1) << 20;
  std::size_t table_cells = std::size_t(4) << 20;
  bool trace = false;         // print each instruction with registers
  bool validate = false;      // sweep machine invariants after each step
  bool reuse_frames = true;   // last-call frame reuse (off for testing)
  bool count_frames = false;  // track the live-frame high water mark
  std::ostream* out = nullptr;        // builtin output; default std::cout
  std::ostream* trace_out = nullptr;  // trace sink; default std::cerr
};

struct MachineStats {
  std::array<std::uint64_t, std::size_t(Op::Count_)> op_count{};
  std::uint64_t max_stack = 0;  // cells
  std::uint64_t max_heap = 0;
  std::uint64_t max_trail = 0;
  std::uint64_t max_frames = 0;  // tracked only under count_frames
  std::uint64_t activations = 0;
  std::uint64_t frame_copies = 0;
  std::uint64_t table_subgoals = 0;
  std::uint64_t table_answers = 0;
  std::uint64_t table_rounds = 0;

  std::uint64_t executed(Op op) const { return op_count[std::size_t(op)]; }
  std::uint64_t specialized_executed() const;
  std::uint64_t merged_executed() const;
  std::string to_string() const;
};

class Machine {
 public:
  enum class Result { Answer, NoMore };

  explicit Machine(Program& prog, MachineConfig cfg = {});

  // Runs a compiled query to its first answer.  The query frame stays
  // live on success so the answer bindings can be read back.
  Result run(std::uint32_t query_sym);
  // Backtracks into the remaining alternatives of the current query.
  Result more();

  int query_arity() const { return query_arity_; }
  // Answer binding of the i-th query argument (1-based), copied out.
  ast::TermP arg_term(int i);

  const MachineStats& stats() const { return stats_; }
  void reset_stats() { stats_ = MachineStats{}; }

 private:
  struct Drf {  // dereferenced cell plus the address it lives at (0 = none)
    Cell c;
    Addr a;
  };
  struct TrailEnt {
    enum class K : std::uint8_t {
      Cell,        // restore arena_[a] = old
      RegPush,     // pop the suspension registry
      WatchPush,   // pop the watcher list of registry entry a
      QueuePush,   // pop the event queue
      QueueDrain,  // restore the queue head cursor to a
    };
    K k = K::Cell;
    Addr a = 0;
    Cell old = 0;
  };
  struct Watcher {
    Addr frame;
    int reentry;
    std::uint8_t kind;  // 0 = ins, 1 = posted event
  };
  struct SuspRec {
    Addr var;  // heap address of the suspension cell
    std::vector<Watcher> watchers;
  };
  struct Posted {
    std::uint32_t idx;  // suspension registry index, kNoSusp when absent
    std::uint8_t kind;  // 0 = ins, 1 = posted event
    Cell term;          // full event term on the heap
  };
  struct SubgoalEntry {
    Addr sub = 0;           // table-area copy of the call arguments
    std::uint32_t sym = 0;  // predicate symbol
    std::vector<Addr> answers{0};  // index 0 is the dummy head
    bool complete = false;
    bool looping = false;
    bool updated = false;
    int scc = -1;    // union-find parent (entry index), self for roots
    int depth = -1;  // position on the active resolution stack, -1 idle
  };

  static constexpr std::uint32_t kNoSusp = 0xffffffffu;
  // Frame slot offsets from the anchor.
  static constexpr int kParent = 0, kCP = -1, kBTM = -2, kTOPs = -3;
  static constexpr int kCPF = -4, kHs = -5, kTs = -6, kBs = -7;       // nondet
  static constexpr int kState = -4, kEvent = -5, kReep = -6, kPrev = -7;
  static constexpr int kSub = -8, kCur = -9;  // tabled
  // Frame kinds, stored in the low bits of the BTM slot.
  static constexpr Cell kFrameDet = 0, kFrameNondet = 1, kFrameSusp = 2,
                        kFrameTable = 3;
  // Suspension frame states.
  static constexpr Cell kStStart = 0, kStSleep = 1, kStWoken = 2, kStEnd = 3;

  // --- arena access ------------------------------------------------------
  Cell& at(Addr a) { return arena_[a]; }
  Cell& slot(Addr ar, int off) { return arena_[Addr(std::int64_t(ar) + off)]; }
  Addr slot_addr(Addr ar, int off) const {
    return Addr(std::int64_t(ar) + off);
  }
  bool heap_addr(Addr a) const { return a <= heap_limit_; }
  Addr heap_alloc(std::size_t n);
  void stack_need(Addr newtop);  // throws when newtop enters the heap

  Drf deref(Cell c);
  void maybe_trail(Addr a);
  void trail_push(TrailEnt e);
  void trailed_write(Addr a, Cell v);
  void untrail(std::size_t to);
  void bind(Addr a, Cell v);  // trails, fires ins on suspension cells
  Addr globalize(Addr stack_var);
  Cell value_ref(const Drf& d);  // free cells by address, bound by value

  bool unify(Cell a, Cell b);
  bool unify_const(Cell subject, const Operand& z);
  Cell const_cell(const Operand& z);  // boxes floats on the heap
  int compare_std(Cell a, Cell b);

  // --- operand evaluation -------------------------------------------------
  Cell arg_value(const Operand& z);    // call arguments: v(k) homes in frame
  Cell build_value(const Operand& z);  // heap construction: v(k) globalizes
  bool unify_operand(Addr cell_addr, const Operand& z);
  void fetch_slot(const Operand& z, Cell v);

  // --- control ------------------------------------------------------------
  void exec_call(std::uint32_t sym, const std::vector<Operand>& zs);
  void exec_last_call(std::uint32_t sym, const Instr& ins);
  void materialize_last(const Instr& ins, int callee_arity,
                        std::vector<Operand>& out);
  void do_allocate(const Instr& ins, Cell kind);
  void do_return();
  void do_cut();
  void backtrack();
  void push_choice_frame(int cpf_entry);  // repeat/0 support

  // --- builtins ------------------------------------------------------------
  bool exec_builtin(const Instr& ins);
  bool run_builtin(int bi, std::uint32_t sym, const std::vector<Cell>& args);
  bool builtin_test(TestOp t, const Instr& ins);
  struct Num {
    bool flt;
    std::int64_t i;
    double d;
    double as_d() const { return flt ? d : double(i); }
  };
  Num eval_arith(Cell c, int depth = 0);
  Cell num_cell(const Num& n);
  Cell box_float(double d);
  double unbox_float(Cell c);
  void do_post(Cell term);
  void post_ins(std::uint32_t idx, Addr var);
  Cell globalize_deep(Cell c, int depth = 0);
  bool call_goal(Cell goal);
  void push_call(std::uint32_t sym, const std::vector<Cell>& args);

  // --- events (events.cpp) --------------------------------------------------
  bool checkpoint(int resume_p);
  std::uint32_t ensure_susp(Addr var_addr);
  void do_susp_watch(const Instr& ins);
  void do_susp_sleep_ret();
  void do_susp_return();
  void do_susp_event_args(const Instr& ins);
  Addr copy_susp_frame(Addr f);

  // --- tabling (tabling.cpp) --------------------------------------------------
  Addr table_alloc(std::size_t n);
  Addr table_copy(Cell root);
  Cell table_out(Addr tcell_addr);  // rebuild a table term on the heap
  bool variant_args(Addr tsub, Addr frame, int arity, const Symbol& sym);
  int scc_find(int e);
  void scc_union(int a, int b);
  void do_allocate_table(const Instr& ins);
  void do_table_answer(const Instr& ins);
  void do_table_complete(const Instr& ins);
  void do_table_consume(const Instr& ins);

  // --- answers / io -----------------------------------------------------------
  Result loop();
  ast::TermP cell_to_ast(Cell c, int depth = 0);
  void write_cell(Cell c, bool quoted, bool nl);
  void trace_step(int p);
  void validate(int p);
  void note_frame_depth();

  Program& prog_;
  SymbolTable& syms_;
  MachineConfig cfg_;
  MachineStats stats_;

  std::vector<Cell> arena_;
  Addr heap_limit_ = 0;  // last heap cell; stack lives above
  Addr base_ = 0;        // highest stack cell
  std::vector<TrailEnt> trail_;

  // registers
  int P_ = 0;
  Addr AR_ = 0, TOP_ = 0, H_ = 1, HB_ = 1, B_ = 0;
  Addr S_ = 0;  // next argument cell in a unify_struct_h stream
  bool wmode_ = false;

  // events
  std::vector<SuspRec> susp_;
  std::vector<Posted> queue_;
  std::size_t qhead_ = 0;
  Addr last_susp_ = 0;

  // tabling
  std::vector<Cell> tarea_;
  std::vector<SubgoalEntry> entries_;
  std::vector<int> active_;

  // cached symbols / entries
  std::uint32_t nil_sym_, float_sym_, ins_sym_, cons_sym_;
  std::uint32_t once_sym_, naf_sym_;
  int cutfail_entry_ = -1, qfail_entry_ = -1, retry_entry_ = -1,
      wake_entry_ = -1;

  Addr query_ar_ = 0;
  int query_arity_ = 0;
  bool query_live_ = false;
  std::ostream* out_ = nullptr;
  std::ostream* terr_ = nullptr;
};

}  // namespace toam
