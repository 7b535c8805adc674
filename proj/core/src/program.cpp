#include "toam/program.hpp"

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "toam/builtins.hpp"
#include "toam/canonical.hpp"
#include "toam/codegen.hpp"
#include "toam/errors.hpp"
#include "toam/peephole.hpp"

namespace toam {

namespace {

// Control predicates the compiler cannot open-code: the host handlers for
// once/1 and \+/1 re-enter these hidden definitions.
const char* kPrelude =
    "'$once'(G) ?=> call(G), !.\n"
    "'$naf'(G) ?=> call(G), !, fail.\n"
    "'$naf'(_) => true.\n"
    "','(A, B) => call(A), call(B).\n"
    "';'(A, _) ?=> call(A).\n"
    "';'(_, B) => call(B).\n";

// Goals with no callee of their own: open-coded by the clause compiler.
bool control_goal(const ast::TermP& g) {
  if (g->k == ast::Term::K::Atom)
    return g->name == "!" || g->name == "true" || g->name == "fail" ||
           g->name == "false";
  return ast::is_cmp(g, "=", 2);
}

// A call can leave choice points visible to its caller only through goals
// after the last cut of some clause; everything earlier is cut away before
// the clause returns.  Backtrackable clauses without a cut always leave one.
bool locally_safe(const CanonClause& cl) {
  if (cl.det) return true;
  for (const auto& g : cl.body)
    if (ast::is_atom(g, "!")) return true;
  return false;
}

template <typename Fn>
void tail_callees(const CanonClause& cl, Fn&& fn) {
  size_t start = 0;
  for (size_t i = 0; i < cl.body.size(); ++i)
    if (ast::is_atom(cl.body[i], "!")) start = i + 1;
  for (size_t i = start; i < cl.body.size(); ++i) {
    const auto& g = cl.body[i];
    if (!ast::is_callable(g) || control_goal(g)) continue;
    fn(g->name, ast::arity(g));
  }
}

bool builtin_safe(Bi id) { return id != Bi::Call && id != Bi::Repeat; }

std::vector<char> analyze_det_safe(const std::vector<CanonPred>& preds,
                                   SymbolTable& syms) {
  std::vector<std::uint32_t> ids(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    ids[i] = syms.intern(preds[i].name, preds[i].arity);
    for (const auto& cl : preds[i].clauses)
      tail_callees(cl, [&](const std::string& n, int a) { syms.intern(n, a); });
  }
  std::vector<char> safe(syms.size(), 0);
  for (std::uint32_t s = 0; s < syms.size(); ++s)
    if (syms.at(s).cls == PredClass::Builtin)
      safe[s] = builtin_safe(Bi(syms.at(s).builtin));
  for (size_t i = 0; i < preds.size(); ++i) {
    const CanonPred& p = preds[i];
    bool ok = !p.is_action && !p.table.has_value();
    for (const auto& cl : p.clauses) ok = ok && locally_safe(cl);
    safe[ids[i]] = ok;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t i = 0; i < preds.size(); ++i) {
      if (!safe[ids[i]]) continue;
      bool ok = true;
      for (const auto& cl : preds[i].clauses)
        tail_callees(cl, [&](const std::string& n, int a) {
          const Symbol* c = syms.find(n, a);
          ok = ok && c && safe[c - &syms.at(0)];
        });
      if (!ok) {
        safe[ids[i]] = 0;
        changed = true;
      }
    }
  }
  return safe;
}

std::uint32_t emit_stub(Program& pg, const char* name,
                        std::initializer_list<Op> ops) {
  std::uint32_t id = pg.syms.intern(name, 0);
  Symbol& s = pg.syms.at(id);
  s.hidden = true;
  s.entry = int(pg.code.size());
  for (Op op : ops) {
    Instr ins{};
    ins.op = op;
    pg.code.push_back(ins);
  }
  s.end = int(pg.code.size());
  return id;
}

}  // namespace

Program load_program(const std::string& text, const LoadOptions& opts) {
  Program pg;
  pg.optimize = opts.optimize;
  for (const auto& bd : builtin_defs()) {
    std::uint32_t id = pg.syms.intern(bd.name, bd.arity);
    Symbol& s = pg.syms.at(id);
    s.cls = PredClass::Builtin;
    s.builtin = int(bd.id);
  }
  try {
    CanonProgram canon = canonicalize_program(parse_program(text));
    pg.queries = std::move(canon.queries);
    pg.diagnostics = std::move(canon.diagnostics);
    if (!pg.ok()) return pg;

    CanonProgram prelude = canonicalize_program(parse_program(kPrelude));
    for (auto& p : prelude.preds) {
      p.hidden = true;
      canon.preds.push_back(std::move(p));
    }
    for (const auto& p : canon.preds) {
      const Symbol* s = pg.syms.find(p.name, p.arity);
      if (s && s->cls == PredClass::Builtin)
        pg.diagnostics.push_back("builtin " + p.name + "/" +
                                 std::to_string(p.arity) +
                                 " cannot be redefined");
    }
    if (!pg.ok()) return pg;

    pg.det_safe = analyze_det_safe(canon.preds, pg.syms);
    for (const auto& p : canon.preds)
      compile_predicate(p, pg.syms, pg.code, pg.det_safe);
    pg.cut_fail = emit_stub(pg, "$cut_fail", {Op::Cut, Op::Fail});
    pg.query_fail = emit_stub(pg, "$query_fail", {Op::QueryFail});
    pg.retry = emit_stub(pg, "$retry", {Op::Return});
    pg.wake = emit_stub(pg, "$wake", {Op::WakeNext});
    if (pg.optimize) peephole(pg.code, pg.syms);
  } catch (const PrologError& e) {
    pg.diagnostics.push_back(e.what());
  }
  return pg;
}

std::uint32_t compile_query(Program& pg, const ParsedQuery& query) {
  SourceClause cl;
  cl.kind = SourceClause::Kind::DetMatch;
  std::string name = "$query_" + std::to_string(pg.nqueries++);
  std::vector<ast::TermP> args;
  for (const auto& [vname, vid] : query.vars)
    args.push_back(ast::mk_var(vname, vid));
  cl.head = args.empty() ? ast::mk_atom(name) : ast::mk_cmp(name, args);
  cl.body = query.goals;
  cl.nvars = query.nvars;

  NameGen names;
  for (std::uint32_t i = 0; i < pg.syms.size(); ++i)
    names.reserve(pg.syms.at(i).name);
  std::vector<std::string> diags;
  auto preds = canonicalize_predicate({std::move(cl)}, nullptr, nullptr, names,
                                      &diags);
  if (!diags.empty()) PrologError::raise(ErrKind::Load, diags.front());

  std::uint32_t qid = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    preds[i].hidden = true;
    CodegenOpts co;
    co.query_mode = i == 0;
    std::uint32_t id =
        compile_predicate(preds[i], pg.syms, pg.code, pg.det_safe, co);
    if (i == 0) qid = id;
  }
  if (pg.optimize) peephole(pg.code, pg.syms);
  return qid;
}

}  // namespace toam
