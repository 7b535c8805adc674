#include "toam/canonical.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>

#include "toam/errors.hpp"
#include "toam/writer.hpp"

namespace toam {

using ast::Term;
using ast::TermP;

namespace {

TermP fresh(int& nv) { return ast::mk_var("", nv++); }

bool is_const_t(const TermP& t) {
  return t->k == Term::K::Atom || t->k == Term::K::Int || t->k == Term::K::Flt;
}
bool is_simple(const TermP& t) { return ast::is_var(t) || is_const_t(t); }

[[noreturn]] void load_error(const std::string& msg) {
  PrologError::raise(ErrKind::Load, msg);
}

// Splits a cons chain into elements and a (non-cons) tail.
void split_chain(const TermP& t, std::vector<TermP>& elems, TermP& tail) {
  TermP cur = t;
  while (ast::is_cons(cur)) {
    elems.push_back(cur->args[0]);
    cur = cur->args[1];
  }
  tail = cur;
}

TermP rebuild_chain(const std::vector<TermP>& elems, const TermP& tail) {
  TermP t = tail;
  for (auto it = elems.rbegin(); it != elems.rend(); ++it)
    t = ast::mk_cons(*it, t);
  return t;
}

void count_vars(const TermP& t, std::map<int, int>& n) {
  if (ast::is_var(t)) {
    ++n[t->var];
    return;
  }
  if (t->k == Term::K::Cmp)
    for (auto& a : t->args) count_vars(a, n);
}

// ---------------------------------------------------------------------------
// Body flattening: every unification becomes V=T with one-level T, every call
// argument becomes a variable or constant.
// ---------------------------------------------------------------------------

class Flattener {
 public:
  Flattener(std::vector<TermP>& out, int& nv) : out_(out), nv_(nv) {}

  // Emit goals realizing v = t, innermost structures first.
  void unif(const TermP& v, const TermP& t) {
    if (is_simple(t)) {
      out_.push_back(ast::mk_cmp("=", {v, t}));
      return;
    }
    out_.push_back(ast::mk_cmp("=", {v, shallow(t)}));
  }

  // Rewrites t so its arguments are simple, emitting sub-unifications first.
  TermP shallow(const TermP& t) {
    if (ast::is_cons(t)) {
      std::vector<TermP> elems;
      TermP tail;
      split_chain(t, elems, tail);
      for (auto& e : elems) e = simplify(e);
      tail = simplify(tail);
      return rebuild_chain(elems, tail);
    }
    std::vector<TermP> args = t->args;
    for (auto& a : args) a = simplify(a);
    return ast::mk_cmp(t->name, std::move(args));
  }

  // Returns a simple term equal to t, emitting a fresh binding if needed.
  TermP simplify(const TermP& t) {
    if (is_simple(t)) return t;
    TermP v = fresh(nv_);
    unif(v, t);
    return v;
  }

 private:
  std::vector<TermP>& out_;
  int& nv_;
};

void flatten_goal(const TermP& g, std::vector<TermP>& out, int& nv) {
  if (ast::is_var(g)) {
    out.push_back(ast::mk_cmp("call", {g}));
    return;
  }
  if (!ast::is_callable(g))
    load_error("body goal is not callable: " + term_to_string(g));
  if (ast::is_atom(g, "true")) return;
  Flattener f(out, nv);
  if (ast::is_cmp(g, "=", 2)) {
    const TermP &l = g->args[0], &r = g->args[1];
    if (ast::is_var(l)) {
      f.unif(l, r);
    } else if (ast::is_var(r)) {
      f.unif(r, l);
    } else if (is_const_t(l) && is_const_t(r)) {
      if (!ast::equal(l, r)) out.push_back(ast::mk_atom("fail"));
    } else {
      TermP v = fresh(nv);
      f.unif(v, l);
      f.unif(v, r);
    }
    return;
  }
  if (g->k == Term::K::Atom) {
    out.push_back(g);
    return;
  }
  std::vector<TermP> args = g->args;
  for (auto& a : args) a = f.simplify(a);
  out.push_back(ast::mk_cmp(g->name, std::move(args)));
}

std::vector<TermP> flatten_body(const std::vector<TermP>& goals, int& nv) {
  std::vector<TermP> out;
  for (auto& g : goals) flatten_goal(g, out, nv);
  return out;
}

// ---------------------------------------------------------------------------
// Head linearization and guard processing (one-way-match semantics).
// ---------------------------------------------------------------------------

struct GuardCtx {
  std::set<int> seen;                     // vars bound at this point
  std::map<int, TermP> subst;             // compile-time aliases
  std::vector<TermP> tests;               // emitted guard goals
  int* nv = nullptr;

  TermP apply(const TermP& t) const {
    if (subst.empty()) return t;
    std::vector<std::pair<int, TermP>> v(subst.begin(), subst.end());
    return ast::rename(t, v);
  }
  void mark(const TermP& t) {
    std::vector<int> vs;
    ast::collect_vars(t, vs);
    for (int v : vs) seen.insert(v);
  }
};

// Rewrites a match pattern so that every argument is a constant or a
// first-occurrence variable; deeper structure and repeated variables become
// extra guard tests (fetch + equality), top-down.
TermP linearize_pattern(const TermP& pat, GuardCtx& g) {
  if (ast::is_var(pat)) {
    TermP p = g.apply(pat);
    if (ast::is_var(p) && !g.seen.count(p->var)) {
      g.seen.insert(p->var);
      return p;
    }
    TermP v = fresh(*g.nv);
    g.seen.insert(v->var);
    g.tests.push_back(ast::mk_cmp("==", {p, v}));
    return v;
  }
  if (is_const_t(pat)) return pat;
  std::vector<TermP> args = pat->args;
  std::vector<std::pair<TermP, TermP>> deferred;  // (slot var, subpattern)
  for (auto& a : args) {
    if (ast::is_var(a) || is_const_t(a)) {
      a = linearize_pattern(a, g);
    } else {
      TermP v = fresh(*g.nv);
      g.seen.insert(v->var);
      deferred.emplace_back(v, a);
      a = v;
    }
  }
  TermP out = ast::mk_cmp(pat->name, std::move(args));
  for (auto& [v, sub] : deferred) {
    TermP lin = linearize_pattern(sub, g);
    g.tests.push_back(ast::mk_cmp("=", {v, lin}));
  }
  return out;
}

void guard_construct(const TermP& v, const TermP& t, GuardCtx& g);

// A guard operand: a variable (marked seen if fresh construction) or
// constant; structures are built via fresh variables.
TermP guard_operand(const TermP& t0, GuardCtx& g) {
  TermP t = g.apply(t0);
  if (ast::is_var(t)) {
    g.seen.insert(t->var);  // construction binds it if still free
    return t;
  }
  if (is_const_t(t)) return t;
  TermP v = fresh(*g.nv);
  guard_construct(v, t, g);
  return v;
}

void guard_construct(const TermP& v, const TermP& t, GuardCtx& g) {
  // v is fresh: "v = t" runs in write mode and only builds.
  std::vector<TermP> args;
  TermP built;
  if (ast::is_cons(t)) {
    std::vector<TermP> elems;
    TermP tail;
    split_chain(t, elems, tail);
    for (auto& e : elems) e = guard_operand(e, g);
    built = rebuild_chain(elems, guard_operand(tail, g));
  } else {
    args = t->args;
    for (auto& a : args) a = guard_operand(a, g);
    built = ast::mk_cmp(t->name, std::move(args));
  }
  g.seen.insert(v->var);
  g.tests.push_back(ast::mk_cmp("=", {v, built}));
}

const std::set<std::string>& comparison_ops() {
  static const std::set<std::string> s = {"<", ">", "=<", ">=", "=:=", "=\\="};
  return s;
}

void flatten_guard_goal(const TermP& g0, GuardCtx& g) {
  TermP t = g.apply(g0);
  if (ast::is_atom(t, "true")) return;
  if (ast::is_cmp(t, "var", 1) || ast::is_cmp(t, "nonvar", 1) ||
      ast::is_cmp(t, "atom", 1) || ast::is_cmp(t, "integer", 1)) {
    if (!ast::is_var(t->args[0]))
      load_error("guard type test requires a variable argument: " +
                 term_to_string(t));
    g.tests.push_back(t);
    return;
  }
  if (ast::is_cmp(t, "==", 2) || ast::is_cmp(t, "\\==", 2) ||
      (t->k == Term::K::Cmp && t->args.size() == 2 &&
       comparison_ops().count(t->name))) {
    TermP a = guard_operand(t->args[0], g);
    TermP b = guard_operand(t->args[1], g);
    g.tests.push_back(ast::mk_cmp(t->name, {a, b}));
    return;
  }
  if (ast::is_cmp(t, "=", 2)) {
    TermP l = t->args[0], r = t->args[1];
    if (!ast::is_var(l) && ast::is_var(r)) std::swap(l, r);
    if (!ast::is_var(l))
      load_error("guard unification requires a variable side: " +
                 term_to_string(t));
    bool l_seen = g.seen.count(l->var) != 0;
    if (ast::is_var(r)) {
      bool r_seen = g.seen.count(r->var) != 0;
      if (l_seen && r_seen)
        load_error("guard unification between bound variables: " +
                   term_to_string(t));
      if (l_seen)
        g.subst[r->var] = l;  // alias the fresh side
      else
        g.subst[l->var] = r;
      return;
    }
    if (is_const_t(r)) {
      if (l_seen)
        g.tests.push_back(ast::mk_cmp("=", {l, r}));
      else
        g.subst[l->var] = r;
      return;
    }
    if (l_seen) {  // pattern test
      TermP lin = linearize_pattern(r, g);
      g.tests.push_back(ast::mk_cmp("=", {l, lin}));
    } else {  // construction
      guard_construct(l, r, g);
    }
    return;
  }
  load_error("goal not allowed in a guard: " + term_to_string(t));
}

// ---------------------------------------------------------------------------
// Loop expansion: foreach and list comprehensions.
// ---------------------------------------------------------------------------

struct Expander {
  NameGen& names;
  std::vector<std::vector<SourceClause>>& new_groups;
  std::vector<std::string>* diags;

  bool is_comprehension(const TermP& t) const {
    return ast::is_cons(t) && ast::is_cmp(t->args[0], ":", 2);
  }

  void singleton_check(const TermP& loop, const SourceClause& c) {
    if (!diags) return;
    std::map<int, int> all, inner;
    count_vars(c.head, all);
    for (auto& g : c.guard) count_vars(g, all);
    for (auto& e : c.events) count_vars(e, all);
    for (auto& b : c.body) count_vars(b, all);
    count_vars(loop, inner);
    std::map<int, std::string> name_of;
    collect_names(loop, name_of);
    for (auto& [v, n] : inner)
      if (n == 1 && all[v] == 1) {
        auto it = name_of.find(v);
        if (it != name_of.end() && !it->second.empty() &&
            it->second[0] != '_')
          diags->push_back("singleton variable " + it->second +
                           " in loop construct");
      }
  }

  static void collect_names(const TermP& t, std::map<int, std::string>& out) {
    if (ast::is_var(t)) {
      out.emplace(t->var, t->name);
      return;
    }
    if (t->k == Term::K::Cmp)
      for (auto& a : t->args) collect_names(a, out);
  }

  // foreach(I1 in D1, ..., [Locals,] Goal)
  void expand_foreach(const TermP& t, std::vector<TermP>& out, int& nv,
                      const SourceClause& host) {
    singleton_check(t, host);
    std::vector<TermP> its;
    size_t i = 0;
    while (i < t->args.size() && ast::is_cmp(t->args[i], "in", 2))
      its.push_back(t->args[i++]);
    if (its.empty())
      load_error("foreach requires at least one iterator");
    std::vector<TermP> locals;
    size_t rest = t->args.size() - i;
    if (rest == 2) {
      TermP l = t->args[i++];
      std::vector<TermP> elems;
      TermP tail;
      split_chain(l, elems, tail);
      if (!ast::is_nil(tail))
        load_error("foreach local variables must form a list");
      for (auto& e : elems) {
        if (!ast::is_var(e))
          load_error("foreach local variables must be variables");
        locals.push_back(e);
      }
      rest = 1;
    }
    if (rest != 1) load_error("malformed foreach call");
    TermP goal = t->args[i];
    if (!ast::is_callable(goal) && !ast::is_var(goal))
      load_error("foreach goal must be callable");

    // Peel the first iterator; the residual goal keeps the remaining ones
    // (and the locals, which belong to the innermost level).
    TermP residual =
        its.size() == 1
            ? goal
            : peeled_foreach(std::vector<TermP>(its.begin() + 1, its.end()),
                             locals, goal);
    emit_loop_call(its[0], residual,
                   its.size() == 1 ? locals : std::vector<TermP>{}, out, nv);
  }

  TermP peeled_foreach(const std::vector<TermP>& its,
                       const std::vector<TermP>& locals, const TermP& goal) {
    std::vector<TermP> args = its;
    if (!locals.empty()) args.push_back(ast::mk_list(locals));
    args.push_back(goal);
    return ast::mk_cmp("foreach", std::move(args));
  }

  // Xs @= [T : I1 in D1, ..., [Locals,] Cond...]
  void expand_comprehension(const TermP& lhs, const TermP& list,
                            std::vector<TermP>& out, int& nv,
                            const SourceClause& host) {
    singleton_check(list, host);
    std::vector<TermP> elems;
    TermP tail;
    split_chain(list, elems, tail);
    if (!ast::is_nil(tail))
      load_error("list comprehension must be a proper list");
    TermP first = elems[0];  // ':'(Template, It1)
    TermP templ = first->args[0];
    std::vector<TermP> its{first->args[1]};
    if (!ast::is_cmp(its[0], "in", 2))
      load_error("list comprehension requires an iterator");
    size_t i = 1;
    while (i < elems.size() && ast::is_cmp(elems[i], "in", 2))
      its.push_back(elems[i++]);
    std::vector<TermP> locals;
    if (i < elems.size() && (ast::is_cons(elems[i]) || ast::is_nil(elems[i]))) {
      std::vector<TermP> ls;
      TermP lt;
      split_chain(elems[i], ls, lt);
      bool all_vars = ast::is_nil(lt);
      for (auto& e : ls) all_vars = all_vars && ast::is_var(e);
      if (all_vars) {
        locals = ls;
        ++i;
      }
    }
    std::vector<TermP> conds(elems.begin() + i, elems.end());

    // The collected elements are threaded through the levels as a
    // difference list; the outermost tail is [].
    TermP acc_out = fresh(nv);
    build_lc(its, 0, locals, conds, templ, acc_out, ast::mk_nil(), nv, out);
    out.push_back(ast::mk_cmp("@=", {lhs, acc_out}));
  }

  // Emits the call goals for iterator level `k`, defining its predicate.
  // Only the innermost level conses the template and checks conditions;
  // outer levels thread the difference list through the next level.
  void build_lc(const std::vector<TermP>& its, size_t k,
                const std::vector<TermP>& locals,
                const std::vector<TermP>& conds, const TermP& templ,
                const TermP& acc_out, const TermP& acc_tail, int& nv,
                std::vector<TermP>& call_out) {
    TermP pat = its[k]->args[0];
    TermP dom = its[k]->args[1];
    bool innermost = k + 1 == its.size();

    // Globals: variables of the residual parts, minus this level's pattern
    // variables and the locals.
    std::vector<int> patv;
    ast::collect_vars(pat, patv);
    std::set<int> excl(patv.begin(), patv.end());
    for (auto& l : locals) excl.insert(l->var);
    std::vector<int> gv;
    if (innermost) {
      ast::collect_vars(templ, gv);
      for (auto& c : conds) ast::collect_vars(c, gv);
    } else {
      for (size_t j = k + 1; j < its.size(); ++j)
        ast::collect_vars(its[j], gv);
      ast::collect_vars(templ, gv);
      for (auto& c : conds) ast::collect_vars(c, gv);
    }
    std::vector<TermP> globals;
    std::set<int> taken;
    for (int v : gv)
      if (!excl.count(v) && taken.insert(v).second)
        globals.push_back(ast::mk_var("", v));

    std::string nm = names.fresh("$lc");

    // aux(Coll, G..., Acc, AccR)
    auto head_of = [&](TermP coll, std::vector<TermP> gs, TermP a, TermP r) {
      std::vector<TermP> as;
      as.push_back(std::move(coll));
      for (auto& g : gs) as.push_back(g);
      as.push_back(std::move(a));
      as.push_back(std::move(r));
      return ast::mk_cmp(nm, std::move(as));
    };

    std::vector<SourceClause> cls;
    {  // aux([], _, Xs, XsR) => Xs = XsR.
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      std::vector<TermP> gs;
      for (size_t j = 0; j < globals.size(); ++j) gs.push_back(fresh(nv));
      TermP xs = fresh(nv), xsr = fresh(nv);
      c.head = head_of(ast::mk_nil(), gs, xs, xsr);
      c.body = {ast::mk_cmp("=", {xs, xsr})};
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    {  // aux([Pat|Ps], G..., Xs, XsR), Conds => <emit>, aux(Ps, G..., Xs1, XsR).
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv), xs = fresh(nv), xsr = fresh(nv);
      c.head = head_of(ast::mk_cons(pat, ps), globals, xs, xsr);
      TermP xs1 = fresh(nv);
      if (innermost) {
        c.guard = conds;
        c.body.push_back(ast::mk_cmp("=", {xs, ast::mk_cons(templ, xs1)}));
      } else {
        build_lc(its, k + 1, locals, conds, templ, xs, xs1, nv, c.body);
      }
      c.body.push_back(head_of(ps, globals, xs1, xsr));
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    {  // aux([_|Ps], G..., Xs, XsR) => aux(Ps, G..., Xs, XsR).
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv), xs = fresh(nv), xsr = fresh(nv);
      std::vector<TermP> gs;
      for (size_t j = 0; j < globals.size(); ++j) gs.push_back(fresh(nv));
      c.head = head_of(ast::mk_cons(fresh(nv), ps), gs, xs, xsr);
      c.body = {head_of(ps, gs, xs, xsr)};
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    {  // aux(Ps, _, _, _) => throw(illegal_argument_in_foreach(Ps)).
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv);
      std::vector<TermP> gs;
      for (size_t j = 0; j < globals.size(); ++j) gs.push_back(fresh(nv));
      c.head = head_of(ps, gs, fresh(nv), fresh(nv));
      c.body = {ast::mk_cmp(
          "throw", {ast::mk_cmp("illegal_argument_in_foreach", {ps})})};
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    new_groups.push_back(std::move(cls));

    // Call site: '$iter_list'(D, L), aux(L, G..., AccOut, AccTail).
    TermP lvar = fresh(nv);
    call_out.push_back(ast::mk_cmp("$iter_list", {dom, lvar}));
    std::vector<TermP> as;
    as.push_back(lvar);
    for (auto& g : globals) as.push_back(g);
    as.push_back(acc_out);
    as.push_back(acc_tail);
    call_out.push_back(ast::mk_cmp(nm, std::move(as)));
  }

  // One foreach level over one iterator.
  void emit_loop_call(const TermP& iter, const TermP& goal,
                      const std::vector<TermP>& locals, std::vector<TermP>& out,
                      int& nv) {
    TermP pat = iter->args[0];
    TermP dom = iter->args[1];

    std::vector<int> patv;
    ast::collect_vars(pat, patv);
    std::set<int> excl(patv.begin(), patv.end());
    for (auto& l : locals) excl.insert(l->var);
    std::vector<int> gv;
    ast::collect_vars(goal, gv);
    std::vector<TermP> globals;
    std::set<int> taken;
    for (int v : gv)
      if (!excl.count(v) && taken.insert(v).second)
        globals.push_back(ast::mk_var("", v));

    std::string nm = names.fresh("$fe");
    auto head_of = [&](TermP coll, const std::vector<TermP>& gs,
                       const std::vector<TermP>& ls) {
      std::vector<TermP> as;
      as.push_back(std::move(coll));
      for (auto& g : gs) as.push_back(g);
      for (auto& l : ls) as.push_back(l);
      return ast::mk_cmp(nm, std::move(as));
    };
    auto fresh_vec = [&](size_t n) {
      std::vector<TermP> v;
      for (size_t j = 0; j < n; ++j) v.push_back(fresh(nv));
      return v;
    };

    std::vector<SourceClause> cls;
    {  // aux([], _, _) => true.
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      c.head = head_of(ast::mk_nil(), fresh_vec(globals.size()),
                       fresh_vec(locals.size()));
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    {  // aux([Pat|Ps], G..., L...) => Goal, aux(Ps, G..., L'...).
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv);
      c.head = head_of(ast::mk_cons(pat, ps), globals, locals);
      c.body.push_back(goal);
      c.body.push_back(head_of(ps, globals, fresh_vec(locals.size())));
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    if (!ast::is_var(pat)) {  // skip clause for non-matching elements
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv);
      auto gs = fresh_vec(globals.size());
      auto ls = fresh_vec(locals.size());
      c.head = head_of(ast::mk_cons(fresh(nv), ps), gs, ls);
      c.body = {head_of(ps, gs, fresh_vec(locals.size()))};
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    {  // aux(Ps, _, _) => throw(illegal_argument_in_foreach(Ps)).
      SourceClause c;
      c.kind = SourceClause::Kind::DetMatch;
      TermP ps = fresh(nv);
      c.head = head_of(ps, fresh_vec(globals.size()), fresh_vec(locals.size()));
      c.body = {ast::mk_cmp(
          "throw", {ast::mk_cmp("illegal_argument_in_foreach", {ps})})};
      c.nvars = nv;
      cls.push_back(std::move(c));
    }
    new_groups.push_back(std::move(cls));

    TermP lvar = fresh(nv);
    out.push_back(ast::mk_cmp("$iter_list", {dom, lvar}));
    std::vector<TermP> as;
    as.push_back(lvar);
    for (auto& g : globals) as.push_back(g);
    for (size_t j = 0; j < locals.size(); ++j) as.push_back(fresh(nv));
    out.push_back(ast::mk_cmp(nm, std::move(as)));
  }

  // Rewrites one body, expanding loop constructs into aux-predicate calls.
  std::vector<TermP> expand_body(const std::vector<TermP>& body, int& nv,
                                 const SourceClause& host) {
    std::vector<TermP> out;
    for (auto& g : body) {
      if (g->k == Term::K::Cmp && g->name == "foreach" &&
          g->args.size() >= 2) {
        expand_foreach(g, out, nv, host);
        continue;
      }
      if (ast::is_cmp(g, "@=", 2) && is_comprehension(g->args[1])) {
        expand_comprehension(g->args[0], g->args[1], out, nv, host);
        continue;
      }
      out.push_back(g);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Horn-clause translation.
// ---------------------------------------------------------------------------

struct TopKey {
  int kind;  // 0 atom, 1 int, 2 flt, 3 functor
  std::string name;
  std::int64_t i = 0;
  double f = 0;
  int arity = 0;
  bool operator<(const TopKey& o) const {
    return std::tie(kind, name, i, f, arity) <
           std::tie(o.kind, o.name, o.i, o.f, o.arity);
  }
};

TopKey top_key(const TermP& t) {
  switch (t->k) {
    case Term::K::Atom: return {0, t->name, 0, 0, 0};
    case Term::K::Int: return {1, "", t->ival, 0, 0};
    case Term::K::Flt: return {2, "", 0, t->fval, 0};
    default: return {3, t->name, 0, 0, int(t->args.size())};
  }
}

// Emits the body-unification goals that realize "head slot = original arg"
// for one argument of a rewritten standard clause, with full-unification
// semantics.
struct HornArgs {
  std::set<int> seen;
  std::map<int, TermP> subst;
  int* nv;

  TermP apply(const TermP& t) {
    std::vector<std::pair<int, TermP>> v(subst.begin(), subst.end());
    return subst.empty() ? t : ast::rename(t, v);
  }

  // Returns the head slot term for this argument; appends unifs to `out`.
  TermP slot_for(const TermP& arg, std::vector<TermP>& out) {
    if (ast::is_var(arg)) {
      if (!seen.count(arg->var)) {
        seen.insert(arg->var);
        return apply(arg);  // first occurrence: keep in the head
      }
      TermP w = fresh(*nv);
      out.push_back(ast::mk_cmp("=", {apply(arg), w}));
      return w;
    }
    TermP w = fresh(*nv);
    out.push_back(ast::mk_cmp("=", {w, apply(arg)}));
    mark(arg);
    return w;
  }

  // Aux-clause version: the head slot is always the given fresh var.
  void bind_to(const TermP& w, const TermP& arg, std::vector<TermP>& out) {
    if (ast::is_var(arg)) {
      if (!seen.count(arg->var)) {
        seen.insert(arg->var);
        subst[arg->var] = w;  // copy propagation
        return;
      }
      out.push_back(ast::mk_cmp("=", {apply(arg), w}));
      return;
    }
    out.push_back(ast::mk_cmp("=", {w, apply(arg)}));
    mark(arg);
  }

  void mark(const TermP& t) {
    std::vector<int> vs;
    ast::collect_vars(t, vs);
    for (int v : vs) seen.insert(v);
  }
};

// One-level top-functor pattern for a dispatch argument; deeper parts become
// body unifications (full unification keeps Horn semantics).
TermP dispatch_pattern(const TermP& pat, HornArgs& ha,
                       std::vector<TermP>& out) {
  if (is_const_t(pat)) return pat;
  std::vector<TermP> args = pat->args;
  for (auto& a : args) {
    if (ast::is_var(a) && !ha.seen.count(a->var)) {
      ha.seen.insert(a->var);
      continue;
    }
    TermP v = fresh(*ha.nv);
    if (ast::is_var(a))
      out.push_back(ast::mk_cmp("=", {ha.apply(a), v}));
    else {
      out.push_back(ast::mk_cmp("=", {v, ha.apply(a)}));
      ha.mark(a);
    }
    a = v;
  }
  return ast::mk_cmp(pat->name, std::move(args));
}

std::vector<TermP> head_args(const TermP& head) {
  return head->k == Term::K::Cmp ? head->args : std::vector<TermP>{};
}

// All-variable-head alternative chain: always semantics-preserving.
std::vector<SourceClause> horn_fallback(const std::vector<SourceClause>& cls,
                                        int arity) {
  std::vector<SourceClause> out;
  for (size_t k = 0; k < cls.size(); ++k) {
    const SourceClause& c = cls[k];
    SourceClause m;
    m.kind = (k + 1 == cls.size() || cls.size() == 1)
                 ? SourceClause::Kind::DetMatch
                 : SourceClause::Kind::NondetMatch;
    int nv = c.nvars;
    HornArgs ha{{}, {}, &nv};
    std::vector<TermP> ws, unifs;
    auto args = head_args(c.head);
    for (int i = 0; i < arity; ++i) ws.push_back(fresh(nv));
    for (int i = 0; i < arity; ++i) ha.bind_to(ws[i], args[i], unifs);
    m.head = arity ? ast::mk_cmp(c.head->name, ws) : c.head;
    m.body = unifs;
    for (auto& g : c.body) m.body.push_back(ha.apply(g));
    m.nvars = nv;
    m.line = c.line;
    m.col = c.col;
    out.push_back(std::move(m));
  }
  return out;
}

// The paper-style translation: var-dispatch clause + committed matching
// clauses + an all-alternative aux predicate.
struct HornResult {
  std::vector<SourceClause> main;
  std::vector<SourceClause> aux;  // empty when no aux is needed
  std::string aux_name;
};

HornResult translate_horn(const std::vector<SourceClause>& cls, int arity,
                          const Declaration* mode, bool tabled,
                          NameGen& names) {
  HornResult r;
  if (tabled || arity == 0) {
    r.main = horn_fallback(cls, arity);
    if (tabled)
      for (auto& c : r.main) c.kind = SourceClause::Kind::NondetMatch;
    return r;
  }

  if (mode) {
    for (auto& c : cls) {
      SourceClause m;
      m.kind = SourceClause::Kind::DetMatch;
      int nv = c.nvars;
      HornArgs ha{{}, {}, &nv};
      std::vector<TermP> slots(arity);
      std::vector<TermP> unifs;
      auto args = head_args(c.head);
      for (int i = 0; i < arity; ++i) {
        if (mode->modes[i] == ArgMode::In && !ast::is_var(args[i])) {
          slots[i] = args[i];  // kept pattern; linearized later
          ha.mark(args[i]);
        } else {
          slots[i] = nullptr;
        }
      }
      for (int i = 0; i < arity; ++i)
        if (!slots[i]) slots[i] = ha.slot_for(args[i], unifs);
      m.head = ast::mk_cmp(c.head->name, slots);
      m.body = unifs;
      for (auto& g : c.body) m.body.push_back(ha.apply(g));
      m.nvars = nv;
      m.line = c.line;
      m.col = c.col;
      r.main.push_back(std::move(m));
    }
    return r;
  }

  // Pick the first argument position that is nonvar in some head.
  int d = -1;
  for (int i = 0; i < arity && d < 0; ++i)
    for (auto& c : cls)
      if (!ast::is_var(head_args(c.head)[i])) {
        d = i;
        break;
      }
  if (d < 0 || cls.size() == 1) {
    r.main = horn_fallback(cls, arity);
    return r;
  }

  // The committed scheme needs every head nonvar at d with distinct
  // top-level functors; otherwise fall back to the alternative chain.
  std::set<TopKey> keys;
  bool ok = true;
  for (auto& c : cls) {
    TermP a = head_args(c.head)[size_t(d)];
    if (ast::is_var(a) || !keys.insert(top_key(a)).second) {
      ok = false;
      break;
    }
  }
  if (!ok) {
    r.main = horn_fallback(cls, arity);
    return r;
  }

  const std::string& nm = cls[0].head->name;
  r.aux_name = names.fresh(nm + "_aux");

  {  // p(V1..Vn), var(Vd) => p_aux(V1..Vn).
    SourceClause m;
    m.kind = SourceClause::Kind::DetMatch;
    int nv = 0;
    std::vector<TermP> vs;
    for (int i = 0; i < arity; ++i) vs.push_back(fresh(nv));
    m.head = ast::mk_cmp(nm, vs);
    m.guard = {ast::mk_cmp("var", {vs[size_t(d)]})};
    m.body = {ast::mk_cmp(r.aux_name, vs)};
    m.nvars = nv;
    r.main.push_back(std::move(m));
  }
  for (auto& c : cls) {  // committed matching clauses
    SourceClause m;
    m.kind = SourceClause::Kind::DetMatch;
    int nv = c.nvars;
    HornArgs ha{{}, {}, &nv};
    auto args = head_args(c.head);
    std::vector<TermP> slots(arity);
    std::vector<TermP> d_unifs;
    slots[size_t(d)] = dispatch_pattern(args[size_t(d)], ha, d_unifs);
    std::vector<TermP> unifs;
    for (int i = 0; i < arity; ++i) {
      if (i == d) {
        unifs.insert(unifs.end(), d_unifs.begin(), d_unifs.end());
        continue;
      }
      slots[i] = ha.slot_for(args[i], unifs);
    }
    m.head = ast::mk_cmp(nm, slots);
    m.body = unifs;
    for (auto& g : c.body) m.body.push_back(ha.apply(g));
    m.nvars = nv;
    m.line = c.line;
    m.col = c.col;
    r.main.push_back(std::move(m));
  }
  r.aux = horn_fallback(cls, arity);
  for (auto& c : r.aux) {
    // rename to the aux predicate
    std::vector<TermP> args = head_args(c.head);
    c.head = arity ? ast::mk_cmp(r.aux_name, args) : ast::mk_atom(r.aux_name);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Per-clause canonicalization (matching clauses).
// ---------------------------------------------------------------------------

CanonClause canonicalize_clause(const SourceClause& sc) {
  CanonClause out;
  out.det = sc.kind != SourceClause::Kind::NondetMatch;
  int nv = sc.nvars;
  GuardCtx g;
  g.nv = &nv;

  // Head: linearize to one-level patterns with fetch/equality guards.
  if (sc.head->k == Term::K::Cmp) {
    std::vector<TermP> args = sc.head->args;
    for (auto& a : args) {
      if (ast::is_var(a)) {
        if (!g.seen.count(a->var)) {
          g.seen.insert(a->var);
        } else {
          TermP v = fresh(nv);
          g.seen.insert(v->var);
          g.tests.push_back(ast::mk_cmp("==", {a, v}));
          a = v;
        }
      } else if (!is_const_t(a)) {
        a = linearize_pattern(a, g);
      }
    }
    out.head = ast::mk_cmp(sc.head->name, std::move(args));
  } else {
    out.head = sc.head;
  }

  // Events: patterns must be compounds over variables; their variables are
  // in scope for the guard and body.
  for (auto& e : sc.events) {
    if (e->k != Term::K::Cmp)
      load_error("event pattern must be a compound term: " +
                 term_to_string(e));
    for (auto& a : e->args)
      if (!ast::is_var(a))
        load_error("event pattern arguments must be variables: " +
                   term_to_string(e));
    g.mark(e);
    out.events.push_back(e);
  }

  for (auto& gg : sc.guard) flatten_guard_goal(gg, g);
  out.guard = std::move(g.tests);

  std::vector<TermP> body;
  for (auto& b : sc.body) body.push_back(g.apply(b));
  out.body = flatten_body(body, nv);
  out.nvars = nv;
  return out;
}

bool has_cut(const std::vector<TermP>& goals) {
  for (auto& gl : goals)
    if (ast::is_atom(gl, "!")) return true;
  return false;
}

}  // namespace

std::string NameGen::fresh(const std::string& base) {
  auto taken = [&](const std::string& s) {
    return std::find(used_.begin(), used_.end(), s) != used_.end();
  };
  if (!taken(base)) {
    used_.push_back(base);
    return base;
  }
  for (int i = 2;; ++i) {
    std::string s = base + std::to_string(i);
    if (!taken(s)) {
      used_.push_back(s);
      return s;
    }
  }
}

std::vector<std::int64_t> expand_range(std::int64_t b1, std::int64_t step,
                                       std::int64_t b2) {
  std::vector<std::int64_t> out;
  if (step == 0) return out;
  if (step > 0)
    for (std::int64_t v = b1; v <= b2; v += step) out.push_back(v);
  else
    for (std::int64_t v = b1; v >= b2; v += step) out.push_back(v);
  return out;
}

std::vector<CanonPred> canonicalize_predicate(
    std::vector<SourceClause> clauses, const Declaration* mode,
    const Declaration* table, NameGen& names,
    std::vector<std::string>* diagnostics) {
  const std::string name = clauses[0].head->name;
  const int arity = ast::arity(clauses[0].head);

  bool any_horn = false, all_horn = true;
  bool any_action = false, any_nondet = false;
  for (auto& c : clauses) {
    bool horn = c.kind == SourceClause::Kind::Horn;
    any_horn |= horn;
    all_horn &= horn;
    any_action |= c.kind == SourceClause::Kind::ActionRule;
    any_nondet |= c.kind == SourceClause::Kind::NondetMatch;
  }
  if (any_horn && !all_horn)
    load_error(name + "/" + std::to_string(arity) +
               " mixes standard and matching clauses");
  if (any_action && (any_nondet || table))
    load_error(name + "/" + std::to_string(arity) +
               ": action rules cannot mix with backtrackable clauses or "
               "tabling");

  // Loop expansion first (bodies only).
  std::vector<std::vector<SourceClause>> groups;
  Expander ex{names, groups, diagnostics};
  for (auto& c : clauses) {
    int nv = c.nvars;
    c.body = ex.expand_body(c.body, nv, c);
    c.nvars = nv;
  }

  std::vector<CanonPred> out;
  CanonPred main;
  main.name = name;
  main.arity = arity;
  main.is_action = any_action;
  if (table) {
    TableSpec ts;
    ts.has_modes = table->has_modes;
    ts.modes = table->modes;
    ts.cardinality = table->cardinality;
    for (size_t i = 0; i < ts.modes.size(); ++i)
      if (ts.modes[i] == ArgMode::Min || ts.modes[i] == ArgMode::Max)
        ts.optimized_arg = int(i);
    main.table = ts;
  }

  CanonPred aux;
  if (all_horn) {
    HornResult hr = translate_horn(clauses, arity, mode, table != nullptr,
                                   names);
    for (auto& c : hr.main) main.clauses.push_back(canonicalize_clause(c));
    if (!hr.aux.empty()) {
      aux.name = hr.aux_name;
      aux.arity = arity;
      for (auto& c : hr.aux) aux.clauses.push_back(canonicalize_clause(c));
    }
  } else {
    for (auto& c : clauses) main.clauses.push_back(canonicalize_clause(c));
  }

  if (table) {
    if (int(table->modes.size()) != arity && table->has_modes)
      load_error("table declaration arity mismatch for " + name);
    for (auto& c : main.clauses) {
      c.det = false;
      if (has_cut(c.body))
        load_error("cuts are not allowed in tabled predicate " + name);
    }
  }
  if (any_action)
    for (auto& c : main.clauses)
      if (has_cut(c.body))
        load_error("cuts are not allowed in action-rule predicate " + name);

  out.push_back(std::move(main));
  if (!aux.clauses.empty()) out.push_back(std::move(aux));

  // Loop auxiliaries (recursively canonicalized; they are matching clauses).
  for (auto& gcls : groups) {
    auto sub = canonicalize_predicate(std::move(gcls), nullptr, nullptr,
                                      names, diagnostics);
    for (auto& p : sub) {
      p.hidden = true;
      out.push_back(std::move(p));
    }
  }
  return out;
}

CanonProgram canonicalize_program(const ParsedProgram& prog) {
  CanonProgram out;
  out.queries = prog.queries;

  NameGen names;
  struct Group {
    std::vector<SourceClause> clauses;
  };
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, Group> groups;
  for (auto& c : prog.clauses) {
    auto key = std::make_pair(c.head->name, ast::arity(c.head));
    if (!groups.count(key)) order.push_back(key);
    groups[key].clauses.push_back(c);
    names.reserve(key.first);
  }

  std::map<std::pair<std::string, int>, const Declaration*> tables, modes;
  for (auto& d : prog.decls) {
    auto key = std::make_pair(d.name, d.arity);
    auto& slot = d.kind == Declaration::Kind::Table ? tables : modes;
    if (slot.count(key))
      load_error("duplicate declaration for " + d.name + "/" +
                 std::to_string(d.arity));
    slot[key] = &d;
  }

  for (auto& key : order) {
    auto sub = canonicalize_predicate(
        std::move(groups[key].clauses),
        modes.count(key) ? modes[key] : nullptr,
        tables.count(key) ? tables[key] : nullptr, names, &out.diagnostics);
    for (auto& p : sub) out.preds.push_back(std::move(p));
  }

  // Declarations for predicates with no clauses still create (empty) preds.
  for (auto& [key, d] : tables) {
    if (std::find(order.begin(), order.end(), key) != order.end()) continue;
    CanonPred p;
    p.name = key.first;
    p.arity = key.second;
    TableSpec ts;
    ts.has_modes = d->has_modes;
    ts.modes = d->modes;
    ts.cardinality = d->cardinality;
    for (size_t i = 0; i < ts.modes.size(); ++i)
      if (ts.modes[i] == ArgMode::Min || ts.modes[i] == ArgMode::Max)
        ts.optimized_arg = int(i);
    p.table = ts;
    out.preds.push_back(std::move(p));
  }
  for (auto& [key, d] : modes) {
    (void)d;
    if (std::find(order.begin(), order.end(), key) == order.end())
      out.diagnostics.push_back("mode declaration for undefined predicate " +
                                key.first + "/" + std::to_string(key.second));
  }
  return out;
}

}  // namespace toam
