#include <algorithm>
#include <sstream>

#include "tkc/csp.hpp"

namespace tkc {

int32_t CspProblem::add_var(std::string name, int64_t lo, int64_t hi) {
  bounds.push_back({lo, hi});
  names.push_back(std::move(name));
  return static_cast<int32_t>(bounds.size()) - 1;
}

namespace {

std::string expr_str(const CspProblem& p, const LinExpr& e) {
  std::ostringstream os;
  bool first = true;
  if (e.c0 || e.terms.empty()) {
    os << e.c0;
    first = false;
  }
  for (const LinTerm& t : e.terms) {
    os << (first ? "" : " + ");
    first = false;
    if (t.coef != 1) os << t.coef << "*";
    os << p.names[t.var];
  }
  return os.str();
}

}  // namespace

std::string CspProblem::to_text() const {
  std::ostringstream os;
  for (size_t v = 0; v < bounds.size(); ++v)
    os << "var " << names[v] << " in [" << bounds[v].first << ", " << bounds[v].second << "]\n";
  for (const CspConstraint& c : cons)
    os << expr_str(*this, c.expr) << (c.eq ? " == 0" : " <= 0") << "\n";
  for (const CspDisjunction& d : disj) {
    for (size_t a = 0; a < d.arms.size(); ++a)
      os << (a ? " || " : "") << expr_str(*this, d.arms[a].expr) << (d.arms[a].eq ? " == 0" : " <= 0");
    os << "\n";
  }
  return os.str();
}

IoLayout IoLayout::of(const KernelGraph& g) {
  IoLayout io;
  int64_t off = 0;
  for (int32_t p : g.params) {
    io.input_offsets.push_back(off);
    io.input_sizes.push_back(g.nodes[p].type.byte_size());
    off += g.nodes[p].type.byte_size();
  }
  io.out_start = off;
  io.out_end = off + g.output_bytes();
  return io;
}

// ---------------------------------------------------------------------------
// CSP1..CSP4 generation

CspBuild build_csp(const PiiGraph& g, const TopoOrder& order, const LiveRangeTable& live,
                   const IsaDescription& isa, const IoLayout& io) {
  (void)order;
  CspBuild b;
  CspProblem& p = b.problem;
  b.slice_base.assign(g.nodes.size(), -1);
  b.beta_base.assign(g.nodes.size(), -1);

  // variables: slice block per node, beta block per pii node
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const PiiNode& n = g.nodes[i];
    const TensorBuffer& buf = isa.buffers[n.buffer];
    std::string tag = "n" + std::to_string(i);
    b.slice_base[i] = static_cast<int32_t>(p.bounds.size());
    for (int64_t d = 0; d < buf.access_rank(); ++d)
      p.add_var(tag + ".s" + std::to_string(d), 0, buf.access_shape[d]);
    for (int64_t d = 0; d < buf.access_rank(); ++d)
      p.add_var(tag + ".e" + std::to_string(d), 0, buf.access_shape[d]);
    if (n.kind == PiiNode::Kind::Instr) {
      const AbstractInstruction& ai = isa.instructions[n.instr];
      b.beta_base[i] = static_cast<int32_t>(p.bounds.size());
      for (const AttrDecl& d : ai.beta) p.add_var(tag + "." + d.name, d.lo, d.hi);
    } else if (n.kind == PiiNode::Kind::SliceH || n.kind == PiiNode::Kind::ConcatH) {
      b.beta_base[i] = p.add_var(tag + ".addr", 0, buf.access_shape[0]);
    }
  }

  auto attr_to_lin = [&](const AttrExpr& e, const PiiNode& n, int32_t beta0) {
    LinExpr le;
    le.c0 = e.c0;
    const AbstractInstruction& ai = isa.instructions[n.instr];
    for (const auto& t : e.terms) {
      if (t.index < ai.n_alpha()) {
        le.c0 += t.coef * n.alpha[t.index];
      } else {
        le.terms.push_back({t.coef, beta0 + (t.index - static_cast<int32_t>(ai.n_alpha()))});
      }
    }
    return le;
  };
  auto eq_var_expr = [&](int32_t var, LinExpr e) {
    // var - e == 0
    LinExpr d;
    d.c0 = -e.c0;
    d.terms.push_back({1, var});
    for (LinTerm t : e.terms) {
      t.coef = -t.coef;
      d.terms.push_back(t);
    }
    p.cons.push_back({std::move(d), true});
  };
  auto pin = [&](int32_t var, int64_t value) {
    LinExpr e;
    e.c0 = value;
    eq_var_expr(var, std::move(e));
  };

  // per-node slice maps h^(i) as linear expressions over the node's beta vars
  auto slice_exprs = [&](int32_t node, int slot) -> std::vector<LinExpr> {
    const PiiNode& n = g.nodes[node];
    std::vector<LinExpr> se;  // [start dims..., end dims...]
    if (n.kind == PiiNode::Kind::Instr) {
      const AbstractInstruction& ai = isa.instructions[n.instr];
      const BufferRef& ref = slot == 0 ? ai.output : ai.inputs[slot - 1];
      for (const AttrExpr& e : ref.start) se.push_back(attr_to_lin(e, n, b.beta_base[node]));
      for (size_t d = 0; d < ref.start.size(); ++d) {
        LinExpr end = attr_to_lin(ref.start[d], n, b.beta_base[node]);
        LinExpr len = attr_to_lin(ref.len[d], n, b.beta_base[node]);
        end.c0 += len.c0;
        end.terms.insert(end.terms.end(), len.terms.begin(), len.terms.end());
        se.push_back(std::move(end));
      }
      return se;
    }
    int32_t addr = b.beta_base[node];
    auto lin = [&](int64_t c) {
      LinExpr e;
      e.c0 = c;
      e.terms.push_back({1, addr});
      return e;
    };
    if (n.kind == PiiNode::Kind::SliceH) {
      int64_t s = n.alpha[1], e = n.alpha[2], len = n.alpha[0];
      if (slot == 0) return {lin(s), lin(e)};
      return {lin(0), lin(len)};
    }
    // ConcatH
    int64_t n1 = n.alpha[0], n2 = n.alpha[1];
    if (slot == 0) return {lin(0), lin(n1 + n2)};
    if (slot == 1) return {lin(0), lin(n1)};
    return {lin(n1), lin(n1 + n2)};
  };

  // CSP1: e_theta plus output slice = h^(0)
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const PiiNode& n = g.nodes[i];
    if (n.is_leaf()) continue;
    if (n.kind == PiiNode::Kind::Instr) {
      const AbstractInstruction& ai = isa.instructions[n.instr];
      for (const LinearConstraint& c : ai.constraints) {
        LinExpr le = attr_to_lin(c.expr, n, b.beta_base[i]);
        p.cons.push_back({std::move(le), c.kind == LinearConstraint::Kind::EQ});
      }
    }
    std::vector<LinExpr> h0 = slice_exprs(static_cast<int32_t>(i), 0);
    int64_t rank = isa.buffers[n.buffer].access_rank();
    for (int64_t d = 0; d < rank; ++d) eq_var_expr(b.slice_base[i] + d, h0[d]);
    for (int64_t d = 0; d < rank; ++d) eq_var_expr(b.slice_base[i] + rank + d, h0[rank + d]);
  }

  // CSP2: operand slices = h^(i) on every def-use edge
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const PiiNode& n = g.nodes[i];
    if (n.is_leaf()) continue;
    for (size_t slot = 0; slot < n.children.size(); ++slot) {
      int32_t child = n.children[slot];
      std::vector<LinExpr> h = slice_exprs(static_cast<int32_t>(i), static_cast<int>(slot) + 1);
      int64_t rank = isa.buffers[g.nodes[child].buffer].access_rank();
      for (int64_t d = 0; d < rank; ++d) eq_var_expr(b.slice_base[child] + d, h[d]);
      for (int64_t d = 0; d < rank; ++d) eq_var_expr(b.slice_base[child] + rank + d, h[rank + d]);
    }
  }

  // CSP3: flattened inputs at their Def. 8 offsets, the root at the output
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const PiiNode& n = g.nodes[i];
    if (n.kind == PiiNode::Kind::Input) {
      pin(b.slice_base[i], io.input_offsets.at(n.input_index));
      pin(b.slice_base[i] + 1, io.input_offsets.at(n.input_index) + io.input_sizes.at(n.input_index));
    }
    if (static_cast<int32_t>(i) == g.root) {
      if (n.buffer != 0) throw Error("pii root must live on d0");
      pin(b.slice_base[i], io.out_start);
      pin(b.slice_base[i] + 1, io.out_end);
    }
  }

  // CSP4: disjointness per interference pair, disjunction over access dims
  for (const auto& [i, j] : live.interference) {
    int64_t rank = isa.buffers[g.nodes[i].buffer].access_rank();
    CspDisjunction d;
    for (int64_t dim = 0; dim < rank; ++dim) {
      for (int swap = 0; swap < 2; ++swap) {
        int32_t a = swap ? j : i, bb = swap ? i : j;
        // end_a[dim] - start_b[dim] <= 0
        LinExpr e;
        e.terms.push_back({1, static_cast<int32_t>(b.slice_base[a] + rank + dim)});
        e.terms.push_back({-1, static_cast<int32_t>(b.slice_base[bb] + dim)});
        d.arms.push_back({std::move(e), false});
      }
    }
    p.disj.push_back(std::move(d));
  }

  // leaf slices keep a positive extent (unused inputs stay well-formed)
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (!g.nodes[i].is_leaf()) continue;
    int64_t rank = isa.buffers[g.nodes[i].buffer].access_rank();
    for (int64_t d = 0; d < rank; ++d) {
      LinExpr e;  // start - end + extent <= 0  with extent = type dim
      e.c0 = g.nodes[i].type.shape.empty() ? 1 : g.nodes[i].type.shape[d];
      e.terms.push_back({1, static_cast<int32_t>(b.slice_base[i] + d)});
      e.terms.push_back({-1, static_cast<int32_t>(b.slice_base[i] + rank + d)});
      p.cons.push_back({std::move(e), true});
    }
  }

  return b;
}

// ---------------------------------------------------------------------------
// Backtracking solver with interval propagation

namespace {

struct Domains {
  std::vector<int64_t> lo, hi;
  bool fixed(int32_t v) const { return lo[v] == hi[v]; }
};

int64_t floordiv2(int64_t a, int64_t b) {
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int64_t ceildiv2(int64_t a, int64_t b) { return -floordiv2(-a, b); }

struct Solver {
  const CspProblem& p;
  Domains d;
  int64_t branches = 0;
  int64_t propagations = 0;
  int64_t budget;

  explicit Solver(const CspProblem& prob, int64_t bud) : p(prob), budget(bud) {
    for (auto& [lo, hi] : prob.bounds) {
      d.lo.push_back(lo);
      d.hi.push_back(hi);
    }
  }

  void expr_range(const LinExpr& e, int64_t& mn, int64_t& mx) const {
    mn = mx = e.c0;
    for (const LinTerm& t : e.terms) {
      if (t.coef > 0) {
        mn += t.coef * d.lo[t.var];
        mx += t.coef * d.hi[t.var];
      } else {
        mn += t.coef * d.hi[t.var];
        mx += t.coef * d.lo[t.var];
      }
    }
  }

  // tightens every variable of `e <= 0` (or == 0); returns false on a wipeout
  bool prop_le(const LinExpr& e, bool eq, bool& changed) {
    int64_t mn, mx;
    expr_range(e, mn, mx);
    if (mn > 0) return false;
    if (eq && mx < 0) return false;
    for (const LinTerm& t : e.terms) {
      // upper side: coef*v <= -(mn - contrib_min(v))
      int64_t contrib_min = t.coef > 0 ? t.coef * d.lo[t.var] : t.coef * d.hi[t.var];
      int64_t rest_min = mn - contrib_min;
      if (t.coef > 0) {
        int64_t ub = floordiv2(-rest_min, t.coef);
        if (ub < d.hi[t.var]) {
          d.hi[t.var] = ub;
          changed = true;
        }
      } else {
        int64_t lb = ceildiv2(-rest_min, t.coef);
        if (lb > d.lo[t.var]) {
          d.lo[t.var] = lb;
          changed = true;
        }
      }
      if (eq) {  // lower side: coef*v >= -(mx - contrib_max(v))
        int64_t contrib_max = t.coef > 0 ? t.coef * d.hi[t.var] : t.coef * d.lo[t.var];
        int64_t rest_max = mx - contrib_max;
        if (t.coef > 0) {
          int64_t lb = ceildiv2(-rest_max, t.coef);
          if (lb > d.lo[t.var]) {
            d.lo[t.var] = lb;
            changed = true;
          }
        } else {
          int64_t ub = floordiv2(-rest_max, t.coef);
          if (ub < d.hi[t.var]) {
            d.hi[t.var] = ub;
            changed = true;
          }
        }
      }
      if (d.lo[t.var] > d.hi[t.var]) return false;
    }
    return true;
  }

  bool arm_feasible(const CspConstraint& c) const {
    int64_t mn, mx;
    expr_range(c.expr, mn, mx);
    if (c.eq) return mn <= 0 && mx >= 0;
    return mn <= 0;
  }

  std::vector<CspConstraint> asserted;  // decided disjunction arms
  bool disjunction_branching = true;
  std::vector<bool> decided;            // per disjunction

  bool entailed(const CspConstraint& c) const {
    int64_t mn, mx;
    expr_range(c.expr, mn, mx);
    return c.eq ? (mn == 0 && mx == 0) : mx <= 0;
  }

  bool propagate() {
    bool changed = true;
    while (changed) {
      changed = false;
      ++propagations;
      for (const CspConstraint& c : p.cons)
        if (!prop_le(c.expr, c.eq, changed)) return false;
      for (const CspConstraint& c : asserted)
        if (!prop_le(c.expr, c.eq, changed)) return false;
      for (const CspDisjunction& dj : p.disj) {
        int live = 0;
        const CspConstraint* only = nullptr;
        for (const CspConstraint& arm : dj.arms)
          if (arm_feasible(arm)) {
            ++live;
            only = &arm;
          }
        if (live == 0) return false;
        if (live == 1 && !prop_le(only->expr, only->eq, changed)) return false;
      }
    }
    return true;
  }

  bool search(std::vector<int64_t>& out) {
    if (--budget < 0) throw SolveStatus::Budget;
    if (!propagate()) return false;

    // decide open disjunctions first: slice orderings, then bounds propagate
    if (decided.size() != p.disj.size()) decided.assign(p.disj.size(), false);
    if (disjunction_branching)
    for (size_t i = 0; i < p.disj.size(); ++i) {
      if (decided[i]) continue;
      const CspDisjunction& dj = p.disj[i];
      int live = 0;
      bool settled = false;
      for (const CspConstraint& arm : dj.arms) {
        if (entailed(arm)) settled = true;
        if (arm_feasible(arm)) ++live;
      }
      if (settled || live <= 1) continue;
      decided[i] = true;
      for (const CspConstraint& arm : dj.arms) {
        if (!arm_feasible(arm)) continue;
        ++branches;
        Domains saved = d;
        asserted.push_back(arm);
        bool ok = search(out);
        asserted.pop_back();
        if (ok) {
          decided[i] = false;
          return true;
        }
        d = saved;
      }
      decided[i] = false;
      return false;
    }

    int32_t var = -1;
    for (size_t v = 0; v < d.lo.size(); ++v)
      if (!d.fixed(static_cast<int32_t>(v))) {
        var = static_cast<int32_t>(v);
        break;
      }
    if (var < 0) {
      // all fixed: exact check of every constraint and disjunction
      auto value = [&](const LinExpr& e) {
        int64_t v = e.c0;
        for (const LinTerm& t : e.terms) v += t.coef * d.lo[t.var];
        return v;
      };
      for (const CspConstraint& c : p.cons) {
        int64_t v = value(c.expr);
        if (c.eq ? v != 0 : v > 0) return false;
      }
      for (const CspDisjunction& dj : p.disj) {
        bool ok = false;
        for (const CspConstraint& arm : dj.arms) {
          int64_t v = value(arm.expr);
          if (arm.eq ? v == 0 : v <= 0) ok = true;
        }
        if (!ok) return false;
      }
      out = d.lo;
      return true;
    }
    // lowest value first, then the rest by bisection
    {
      ++branches;
      Domains saved = d;
      d.hi[var] = d.lo[var];
      if (search(out)) return true;
      d = saved;
    }
    if (d.lo[var] >= d.hi[var]) return false;
    int64_t lo = d.lo[var] + 1, hi = d.hi[var];
    int64_t mid = lo + (hi - lo) / 2;
    {
      ++branches;
      Domains saved = d;
      d.lo[var] = lo;
      d.hi[var] = mid;
      if (search(out)) return true;
      d = saved;
    }
    {
      ++branches;
      Domains saved = d;
      d.lo[var] = mid + 1;
      if (search(out)) return true;
      d = saved;
    }
    return false;
  }
};

}  // namespace

namespace {

// Presolve: variables tied by two-term unit equalities (the CSP1/CSP2 address
// chains) collapse onto representatives, var = rep + offset. This turns
// forced-equal interference pairs into immediate interval conflicts.
struct Aliases {
  std::vector<int32_t> parent;
  std::vector<int64_t> offset;  // var value = rep value + offset

  explicit Aliases(size_t n) : parent(n), offset(n, 0) {
    for (size_t i = 0; i < n; ++i) parent[i] = static_cast<int32_t>(i);
  }
  std::pair<int32_t, int64_t> find(int32_t v) {
    if (parent[v] == v) return {v, 0};
    auto [r, off] = find(parent[v]);
    parent[v] = r;
    offset[v] += off;
    return {r, offset[v]};
  }
  // assert a = b + delta; false on contradiction
  bool unite(int32_t a, int32_t b, int64_t delta) {
    auto [ra, oa] = find(a);
    auto [rb, ob] = find(b);
    if (ra == rb) return oa == ob + delta;
    // keep the lower representative for determinism
    if (ra < rb) {
      parent[rb] = ra;
      offset[rb] = oa - delta - ob;
    } else {
      parent[ra] = rb;
      offset[ra] = ob + delta - oa;
    }
    return true;
  }
};

}  // namespace

SolveResult solve_csp(const CspProblem& p, int64_t budget) {
  SolveResult r;
  Aliases al(p.bounds.size());
  bool contradiction = false;
  for (const CspConstraint& c : p.cons) {
    if (!c.eq || c.expr.terms.size() != 2) continue;
    const LinTerm& t0 = c.expr.terms[0];
    const LinTerm& t1 = c.expr.terms[1];
    if (t0.coef == 1 && t1.coef == -1) {
      if (!al.unite(t0.var, t1.var, -c.expr.c0)) contradiction = true;
    } else if (t0.coef == -1 && t1.coef == 1) {
      if (!al.unite(t1.var, t0.var, -c.expr.c0)) contradiction = true;
    }
  }
  if (contradiction) {
    r.status = SolveStatus::Unsat;
    return r;
  }

  // remap onto representatives
  std::vector<int32_t> rep(p.bounds.size());
  std::vector<int64_t> off(p.bounds.size());
  std::vector<int32_t> compact(p.bounds.size(), -1);
  CspProblem q;
  for (size_t v = 0; v < p.bounds.size(); ++v) {
    auto [rv, ov] = al.find(static_cast<int32_t>(v));
    rep[v] = rv;
    off[v] = ov;
  }
  for (size_t v = 0; v < p.bounds.size(); ++v) {
    int32_t rv = rep[v];
    if (compact[rv] < 0) compact[rv] = q.add_var(p.names[rv], INT64_MIN / 4, INT64_MAX / 4);
    auto& b = q.bounds[compact[rv]];
    b.first = std::max(b.first, p.bounds[v].first - off[v]);
    b.second = std::min(b.second, p.bounds[v].second - off[v]);
    if (b.first > b.second) {
      r.status = SolveStatus::Unsat;
      return r;
    }
  }
  auto remap_expr = [&](const LinExpr& e) -> std::optional<LinExpr> {
    LinExpr out;
    out.c0 = e.c0;
    std::vector<std::pair<int32_t, int64_t>> acc;
    for (const LinTerm& t : e.terms) {
      out.c0 += t.coef * off[t.var];
      int32_t cv = compact[rep[t.var]];
      bool found = false;
      for (auto& [v, c] : acc)
        if (v == cv) {
          c += t.coef;
          found = true;
        }
      if (!found) acc.push_back({cv, t.coef});
    }
    for (auto& [v, c] : acc)
      if (c != 0) out.terms.push_back({c, v});
    return out;
  };
  for (const CspConstraint& c : p.cons) {
    LinExpr e = *remap_expr(c.expr);
    if (e.terms.empty()) {
      if (c.eq ? e.c0 != 0 : e.c0 > 0) {
        r.status = SolveStatus::Unsat;
        return r;
      }
      continue;
    }
    q.cons.push_back({std::move(e), c.eq});
  }
  for (const CspDisjunction& dj : p.disj) {
    CspDisjunction out;
    bool entailed = false;
    for (const CspConstraint& arm : dj.arms) {
      LinExpr e = *remap_expr(arm.expr);
      if (e.terms.empty()) {
        if (arm.eq ? e.c0 == 0 : e.c0 <= 0) entailed = true;
        continue;
      }
      out.arms.push_back({std::move(e), arm.eq});
    }
    if (entailed) continue;
    if (out.arms.empty()) {
      r.status = SolveStatus::Unsat;
      return r;
    }
    q.disj.push_back(std::move(out));
  }

  Solver s(q, budget);
  try {
    std::vector<int64_t> out;
    bool sat = s.search(out);
    r.status = sat ? SolveStatus::Sat : SolveStatus::Unsat;
    if (sat) {
      r.values.resize(p.bounds.size());
      for (size_t v = 0; v < p.bounds.size(); ++v) r.values[v] = out[compact[rep[v]]] + off[v];
    }
  } catch (SolveStatus) {
    r.status = SolveStatus::Budget;
  }
  r.branches = s.branches;
  r.propagations = s.propagations;
  return r;
}

// ---------------------------------------------------------------------------
// Module 6: emission

Assembly emit_assembly(const PiiGraph& g, const TopoOrder& order, const IsaDescription& isa,
                       const CspBuild& build, const std::vector<int64_t>& values, const IoLayout& io) {
  Assembly a;
  for (int32_t node : order.order) {
    const PiiNode& n = g.nodes[node];
    if (n.kind != PiiNode::Kind::Instr) continue;  // identity instructions are no-ops
    ConcreteInstruction c;
    c.instr = n.instr;
    c.alpha = n.alpha;
    const AbstractInstruction& ai = isa.instructions[n.instr];
    for (size_t j = 0; j < ai.beta.size(); ++j) c.beta.push_back(values[build.beta_base[node] + j]);
    a.instructions.push_back(std::move(c));
  }

  // pack every constant leaf at its solved HBM slice, zero-filling holes
  int64_t end = io.out_start;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].kind != PiiNode::Kind::Const) continue;
    int64_t stop = values[build.slice_base[i] + 1];
    end = std::max(end, stop);
  }
  a.const_offset = io.out_start;
  if (end > io.out_start) {
    a.const_image.assign(end - io.out_start, 0);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      const PiiNode& n = g.nodes[i];
      if (n.kind != PiiNode::Kind::Const) continue;
      int64_t start = values[build.slice_base[i]];
      if (start < io.out_start) throw Error("constant placed inside the input region");
      std::copy(n.value.bytes.begin(), n.value.bytes.end(), a.const_image.begin() + (start - io.out_start));
    }
  }
  return a;
}

}  // namespace tkc
