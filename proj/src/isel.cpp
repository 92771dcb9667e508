#include <algorithm>
#include <map>
#include <sstream>

#include "tkc/isel.hpp"

namespace tkc {

namespace {

TensorType byte_view_of(const TensorType& t) {
  int64_t k = scalar_width(t.base);
  std::vector<int64_t> s = t.shape;
  if (k > 1) s.push_back(k);
  return TensorType(ScalarBase::U8, std::move(s));
}

ClassId add_op_node(EGraph& eg, OpKind kind, OpAttrs attrs, std::vector<ClassId> children) {
  std::vector<TensorType> ts;
  for (ClassId c : children) ts.push_back(eg.cls(c).type);
  ENode n;
  n.tag = ENode::Tag::Op;
  n.kind = kind;
  n.type = infer_type(kind, attrs, ts);
  n.attrs = std::move(attrs);
  n.children = std::move(children);
  return eg.add(std::move(n));
}

}  // namespace

EGraph init_egraph(const KernelGraph& g, const IsaDescription& isa) {
  if (!g.layouts.empty()) throw Error("expand tiled layouts before e-graph construction");
  (void)isa;
  EGraph eg;
  std::vector<ClassId> cls(g.nodes.size(), -1);

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const KernelNode& n = g.nodes[i];
    if (n.kind == OpKind::Parameter) {
      ENode leaf;
      leaf.tag = ENode::Tag::Input;
      leaf.buffer = 0;
      leaf.input_index = static_cast<int32_t>(n.attrs.param_index);
      leaf.type = TensorType(ScalarBase::U8, {n.type.byte_size()});
      ClassId flat = eg.add(std::move(leaf));
      OpAttrs rs, bc;
      rs.target = byte_view_of(n.type);
      bc.target = n.type;
      cls[i] = add_op_node(eg, OpKind::BitcastConvert, bc, {add_op_node(eg, OpKind::Reshape, rs, {flat})});
      continue;
    }
    std::vector<ClassId> ch;
    for (int32_t o : n.operands) ch.push_back(cls[o]);
    cls[i] = add_op_node(eg, n.kind, n.attrs, std::move(ch));
  }

  const TensorType& rt = g.root_node().type;
  OpAttrs bc, rs;
  bc.target = byte_view_of(rt);
  rs.target = TensorType(ScalarBase::U8, {rt.byte_size()});
  eg.root = add_op_node(eg, OpKind::Reshape, rs, {add_op_node(eg, OpKind::BitcastConvert, bc, {cls[g.root]})});
  return eg;
}

SaturateResult saturate_step(EGraph& eg, const std::vector<RewriteRule>& rules, int64_t max_enodes) {
  uint64_t before = eg.version();
  SaturateResult res;
  // freeze the snapshot: existing classes and their member lists
  std::vector<std::pair<ClassId, int32_t>> snapshot;
  for (ClassId c = 0; c < eg.class_slots(); ++c) {
    if (!eg.is_canonical(c)) continue;
    for (int32_t nid : eg.cls(c).members) snapshot.push_back({c, nid});
  }
  std::vector<PendingApply> queue;
  for (const RewriteRule& r : rules)
    for (auto& [c, nid] : snapshot) r.match(eg, eg.find(c), nid, queue);
  for (size_t i = 0; i < queue.size(); ++i) {
    queue[i](eg);
    if ((i & 63) == 0 && eg.node_count() > max_enodes) {
      res.budget_hit = true;  // stop growing; congruence is still restored below
      break;
    }
  }
  eg.rebuild();

  res.fixpoint = !res.budget_hit && eg.version() == before;
  res.budget_hit = res.budget_hit || eg.node_count() > max_enodes;
  return res;
}

void detect_constants(EGraph& eg) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (ClassId c = 0; c < eg.class_slots(); ++c) {
      if (!eg.is_canonical(c) || eg.cls(c).is_const) continue;
      bool mark = false;
      for (int32_t nid : eg.cls(c).members) {
        const ENode& n = eg.node(nid);
        if (n.tag == ENode::Tag::Input) continue;
        if (n.tag == ENode::Tag::Op && n.kind == OpKind::Parameter) continue;
        if (n.tag == ENode::Tag::Op && n.children.empty()) {
          mark = true;  // constant / eye / ones leaves
          break;
        }
        if (n.children.empty()) continue;
        bool all = true;
        for (ClassId ch : n.children)
          if (!eg.cls(ch).is_const) all = false;
        if (all) {
          mark = true;
          break;
        }
      }
      if (mark) {
        eg.cls_mut(c).is_const = true;
        changed = true;
      }
    }
  }
}

TensorValue eval_constant_class(const EGraph& eg, ClassId c,
                                std::unordered_map<ClassId, TensorValue>& memo) {
  c = eg.find(c);
  if (auto it = memo.find(c); it != memo.end()) return it->second;
  if (!eg.cls(c).is_const) throw Error("class is not constant");

  // guard against cyclic witnesses (e.g. the self copy node)
  static thread_local std::unordered_set<ClassId> in_progress;
  if (in_progress.count(c)) throw Error("cyclic constant witness");
  in_progress.insert(c);
  std::optional<TensorValue> result;
  std::string last_err = "no operator witness";
  for (int32_t nid : eg.cls(c).members) {
    const ENode& n = eg.node(nid);
    if (n.tag != ENode::Tag::Op || n.kind == OpKind::Parameter) continue;
    bool all = true;
    for (ClassId ch : n.children)
      if (!eg.cls(ch).is_const) all = false;
    if (!all) continue;
    try {
      std::vector<TensorValue> args;
      for (ClassId ch : n.children) args.push_back(eval_constant_class(eg, ch, memo));
      result = eval_op(n.kind, n.attrs, args);
      break;
    } catch (const Error& e) {
      last_err = e.what();
    }
  }
  in_progress.erase(c);
  if (!result) throw Error("constant class evaluation failed: " + last_err);
  memo[c] = *result;
  return *result;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

constexpr int64_t kInf = 1'000'000'000;

struct FragNode {
  PiiNode::Kind kind = PiiNode::Kind::Instr;
  int32_t instr = -1;
  std::vector<int64_t> alpha;
  int32_t buffer = -1;
  int32_t input_index = -1;
  ClassId const_class = -1;
  TensorType type;
  std::vector<int32_t> children;

  bool operator==(const FragNode& o) const {
    return kind == o.kind && instr == o.instr && alpha == o.alpha && buffer == o.buffer &&
           input_index == o.input_index && const_class == o.const_class && type == o.type &&
           children == o.children;
  }
  uint64_t hash() const {
    uint64_t h = static_cast<uint64_t>(kind);
    h = hash_mix(h, static_cast<uint64_t>(instr + 1));
    for (int64_t a : alpha) h = hash_mix(h, static_cast<uint64_t>(a));
    h = hash_mix(h, static_cast<uint64_t>(buffer + 1));
    h = hash_mix(h, static_cast<uint64_t>(input_index + 1));
    h = hash_mix(h, static_cast<uint64_t>(const_class + 1));
    h = hash_mix(h, hash_type(type));
    for (int32_t c : children) h = hash_mix(h, static_cast<uint64_t>(c));
    return h;
  }
};

struct Arena {
  std::vector<FragNode> nodes;
  std::vector<std::vector<int32_t>> closure;  // sorted distinct node ids
  std::vector<int32_t> pii_size;              // non-leaf nodes in closure
  std::unordered_map<uint64_t, std::vector<int32_t>> dedup;

  int32_t add(FragNode n) {
    uint64_t h = n.hash();
    for (int32_t id : dedup[h])
      if (nodes[id] == n) return id;
    int32_t id = static_cast<int32_t>(nodes.size());
    std::vector<int32_t> cl;
    for (int32_t c : n.children) {
      std::vector<int32_t> merged;
      std::set_union(cl.begin(), cl.end(), closure[c].begin(), closure[c].end(), std::back_inserter(merged));
      cl = std::move(merged);
    }
    cl.insert(std::lower_bound(cl.begin(), cl.end(), id), id);
    int32_t sz = 0;
    for (int32_t m : cl)
      if (m == id ? (n.kind != PiiNode::Kind::Input && n.kind != PiiNode::Kind::Const)
                  : (nodes[m].kind != PiiNode::Kind::Input && nodes[m].kind != PiiNode::Kind::Const))
        ++sz;
    dedup[h].push_back(id);
    nodes.push_back(std::move(n));
    closure.push_back(std::move(cl));
    pii_size.push_back(sz);
    return id;
  }
};

struct Extractor {
  const EGraph& eg;
  const IsaDescription& isa;
  Arena arena;
  int64_t n_max;
  int raw_cap;
  int64_t budget;
  bool limited = false;

  std::map<std::pair<ClassId, int32_t>, int64_t> lb;  // lower bound on pii size
  std::map<std::tuple<ClassId, int32_t, int64_t>, std::vector<int32_t>> memo;

  int32_t expected_buffer(const ENode& n, size_t slot) const {
    if (n.tag == ENode::Tag::Pii) return isa.instructions[n.instr].inputs[slot].buffer;
    return n.buffer;  // identity instructions stay within their buffer
  }

  void compute_lower_bounds() {
    // seed the table with every (class, buffer) pair that can be requested
    std::vector<std::pair<ClassId, int32_t>> keys;
    for (ClassId c = 0; c < eg.class_slots(); ++c) {
      if (!eg.is_canonical(c)) continue;
      for (int32_t b = 0; b < static_cast<int32_t>(isa.buffers.size()); ++b) keys.push_back({c, b});
    }
    for (auto& k : keys) {
      lb[k] = kInf;
      if (k.second == 0 && (eg.cls(k.first).has_input || eg.cls(k.first).is_const)) lb[k] = 0;
    }
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& [key, cur] : lb) {
        auto [c, b] = key;
        for (int32_t nid : eg.cls(c).members) {
          const ENode& n = eg.node(nid);
          if (!n.is_pii_like() || n.buffer != b) continue;
          int64_t worst = 0;
          for (size_t i = 0; i < n.children.size(); ++i) {
            int64_t v = lb[{eg.find(n.children[i]), expected_buffer(n, i)}];
            worst = std::max(worst, v);
          }
          if (worst >= kInf) continue;
          if (1 + worst < cur) {
            cur = 1 + worst;
            changed = true;
          }
        }
      }
    }
  }

  std::vector<int32_t> enumerate(ClassId c, int32_t buf, int64_t node_budget) {
    c = eg.find(c);
    if (node_budget > n_max) node_budget = n_max;
    auto key = std::make_tuple(c, buf, node_budget);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (--budget < 0) {
      limited = true;
      return {};
    }

    std::vector<int32_t> results;
    const EClass& cl = eg.cls(c);
    if (buf == 0) {
      if (cl.has_input) {
        for (int32_t nid : cl.members) {
          const ENode& n = eg.node(nid);
          if (n.tag == ENode::Tag::Input) {
            FragNode f;
            f.kind = PiiNode::Kind::Input;
            f.buffer = 0;
            f.input_index = n.input_index;
            f.type = cl.type;
            results.push_back(arena.add(std::move(f)));
            break;
          }
        }
      } else if (cl.is_const) {
        FragNode f;
        f.kind = PiiNode::Kind::Const;
        f.buffer = 0;
        f.const_class = c;
        f.type = cl.type;
        results.push_back(arena.add(std::move(f)));
      }
    }

    // candidate use nodes, cheapest completion first
    std::vector<std::pair<int64_t, int32_t>> cands;
    for (int32_t nid : cl.members) {
      const ENode& n = eg.node(nid);
      if (!n.is_pii_like() || n.buffer != buf) continue;
      int64_t need = 1;
      for (size_t i = 0; i < n.children.size(); ++i)
        need = std::max(need, 1 + lb[{eg.find(n.children[i]), expected_buffer(n, i)}]);
      if (need > node_budget) {
        if (need < kInf) limited = true;
        continue;
      }
      cands.push_back({need, nid});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    for (auto& [need, nid] : cands) {
      const ENode& n = eg.node(nid);
      std::vector<std::vector<int32_t>> lists(n.children.size());
      bool dead = false;
      for (size_t i = 0; i < n.children.size() && !dead; ++i) {
        lists[i] = enumerate(n.children[i], expected_buffer(n, i), node_budget - 1);
        if (lists[i].empty()) dead = true;
      }
      if (dead) continue;

      // bounded cross product; child lists are sorted smallest-first
      int combos = 0;
      std::vector<size_t> pick(n.children.size(), 0);
      while (true) {
        if (--budget < 0 || ++combos > 128) {
          limited = true;
          break;
        }
        FragNode f;
        f.kind = n.tag == ENode::Tag::Pii      ? PiiNode::Kind::Instr
                 : n.tag == ENode::Tag::SliceH ? PiiNode::Kind::SliceH
                                               : PiiNode::Kind::ConcatH;
        f.instr = n.instr;
        f.alpha = n.alpha;
        f.buffer = n.buffer;
        f.type = cl.type;
        for (size_t i = 0; i < pick.size(); ++i) f.children.push_back(lists[i][pick[i]]);
        int32_t id = arena.add(std::move(f));
        if (arena.pii_size[id] <= node_budget) {
          results.push_back(id);
        } else {
          limited = true;
        }
        if (static_cast<int>(results.size()) > raw_cap) {
          limited = true;
          break;
        }
        // odometer over child picks
        size_t d = 0;
        for (; d < pick.size(); ++d) {
          if (++pick[d] < lists[d].size()) break;
          pick[d] = 0;
        }
        if (d == pick.size() || pick.empty()) break;
      }
      if (static_cast<int>(results.size()) > raw_cap) break;
    }

    std::stable_sort(results.begin(), results.end(), [&](int32_t a, int32_t b) {
      if (arena.pii_size[a] != arena.pii_size[b]) return arena.pii_size[a] < arena.pii_size[b];
      return a < b;
    });
    results.erase(std::unique(results.begin(), results.end()), results.end());
    memo[key] = results;
    return results;
  }
};

}  // namespace

ExtractResult extract_pii_graphs(const EGraph& eg, const IsaDescription& isa, int64_t n_max, int limit,
                                 int64_t dfs_budget) {
  ExtractResult out;
  Extractor ex{eg, isa, {}, n_max, limit * 4, dfs_budget, false, {}, {}};
  ex.compute_lower_bounds();
  if (eg.root < 0) return out;

  std::vector<int32_t> roots;
  int64_t lb_root = ex.lb[{eg.find(eg.root), 0}];
  if (lb_root < kInf && lb_root <= n_max) roots = ex.enumerate(eg.root, 0, n_max);
  out.bound_limited = ex.limited;

  std::stable_sort(roots.begin(), roots.end(), [&](int32_t a, int32_t b) {
    if (ex.arena.pii_size[a] != ex.arena.pii_size[b]) return ex.arena.pii_size[a] < ex.arena.pii_size[b];
    return a < b;
  });
  if (static_cast<int>(roots.size()) > limit) {
    roots.resize(limit);
    out.bound_limited = true;
  }

  std::unordered_map<ClassId, TensorValue> const_memo;
  for (int32_t rid : roots) {
    PiiGraph pg;
    std::unordered_map<int32_t, int32_t> remap;
    bool ok = true;
    for (int32_t fid : ex.arena.closure[rid]) {  // ascending ids = defs first
      const FragNode& f = ex.arena.nodes[fid];
      try {
        switch (f.kind) {
          case PiiNode::Kind::Input:
            remap[fid] = pg.add_input(isa, f.input_index, f.type.shape[0]);
            break;
          case PiiNode::Kind::Const:
            remap[fid] = pg.add_const(isa, eval_constant_class(eg, f.const_class, const_memo));
            break;
          case PiiNode::Kind::SliceH:
            remap[fid] = pg.add_slice_h(isa, f.buffer, f.alpha[0], f.alpha[1], f.alpha[2],
                                        remap.at(f.children[0]));
            break;
          case PiiNode::Kind::ConcatH:
            remap[fid] =
                pg.add_concat_h(isa, f.buffer, remap.at(f.children[0]), remap.at(f.children[1]));
            break;
          case PiiNode::Kind::Instr: {
            std::vector<int32_t> ch;
            for (int32_t cc : f.children) ch.push_back(remap.at(cc));
            remap[fid] = pg.add_instr(isa, f.instr, f.alpha, std::move(ch));
            break;
          }
        }
      } catch (const Error&) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    pg.root = remap.at(rid);
    out.graphs.push_back(std::move(pg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enumerating stream

PiiEnumerator::PiiEnumerator(KernelGraph graph, const IsaDescription& isa, IselConfig cfg)
    : _isa(isa), _cfg(cfg) {
  KernelGraph expanded = expand_tiled_layout(graph);
  _eg = init_egraph(expanded, isa);
  // instruction-selection rules first: under a node budget the essential
  // matches must land before the algebraic exploration noise
  _rules = derive_isa_rewrites(isa);
  auto ident = identity_instruction_rules(isa);
  _rules.insert(_rules.end(), ident.begin(), ident.end());
  auto ir = filter_ir_rules(baseline_ir_rules(), isa);
  _rules.insert(_rules.end(), ir.begin(), ir.end());
}

std::optional<PiiGraph> PiiEnumerator::next() {
  while (true) {
    if (!_pending.empty()) {
      PiiGraph g = std::move(_pending.front());
      _pending.pop_front();
      return g;
    }
    if (_end != End::Running) return std::nullopt;
    if (_k >= _cfg.max_iterations) {
      _end = End::BoundReached;
      return std::nullopt;
    }
    ++_k;

    if (!_saturated && !_enode_budget_hit) {
      SaturateResult sr = saturate_step(_eg, _rules, _cfg.max_enodes);
      _saturated = sr.fixpoint;
      _enode_budget_hit = sr.budget_hit;
      detect_constants(_eg);
    }

    int64_t n_max = 1;
    if (_cfg.gamma_linear) {
      n_max = _cfg.gamma_base * _k;
    } else {
      for (int i = 0; i < _k; ++i) {
        n_max *= _cfg.gamma_base;
        if (n_max >= _cfg.n_max_cap) break;
      }
    }
    n_max = std::min<int64_t>(n_max, _cfg.n_max_cap);

    ExtractResult res = extract_pii_graphs(_eg, _isa, n_max, _cfg.extract_limit, _cfg.dfs_budget);
    bool any_new = false;
    for (PiiGraph& g : res.graphs) {
      uint64_t h = g.structural_hash();
      if (_seen.insert(h).second) {
        _pending.push_back(std::move(g));
        any_new = true;
      }
    }
    if (!any_new && _pending.empty() && _saturated && !res.bound_limited) {
      // saturated and nothing was cut by the bound: the space is finite and done
      _end = End::Exhausted;
      return std::nullopt;
    }
  }
}

std::string egraph_to_dot(const EGraph& eg, const IsaDescription& isa) {
  std::ostringstream os;
  os << "digraph egraph {\n  compound=true;\n  node [shape=box,fontsize=9];\n";
  for (ClassId c = 0; c < eg.class_slots(); ++c) {
    if (!eg.is_canonical(c)) continue;
    const EClass& cl = eg.cls(c);
    os << "  subgraph cluster" << c << " {\n    label=\"c" << c << " : " << cl.type.str()
       << (cl.is_const ? " const" : "") << "\";\n";
    for (int32_t nid : cl.members) {
      const ENode& n = eg.node(nid);
      os << "    n" << nid << " [label=\"";
      switch (n.tag) {
        case ENode::Tag::Op: os << op_name(n.kind); break;
        case ENode::Tag::Pii: os << isa.instructions[n.instr].name; break;
        case ENode::Tag::SliceH: os << "slice^H"; break;
        case ENode::Tag::ConcatH: os << "concat^H"; break;
        case ENode::Tag::Input: os << "input#" << n.input_index; break;
      }
      os << "\"];\n";
    }
    os << "  }\n";
  }
  for (ClassId c = 0; c < eg.class_slots(); ++c) {
    if (!eg.is_canonical(c)) continue;
    for (int32_t nid : eg.cls(c).members) {
      const ENode& n = eg.node(nid);
      for (ClassId ch : n.children) {
        ClassId target = eg.find(ch);
        int32_t anchor = eg.cls(target).members.empty() ? -1 : eg.cls(target).members[0];
        if (anchor >= 0)
          os << "  n" << nid << " -> n" << anchor << " [lhead=cluster" << target << "];\n";
      }
    }
  }
  os << "}\n";
  return os.str();
}

std::string egraph_to_text(const EGraph& eg, const IsaDescription& isa) {
  std::ostringstream os;
  for (ClassId c = 0; c < eg.class_slots(); ++c) {
    if (!eg.is_canonical(c)) continue;
    const EClass& cl = eg.cls(c);
    os << "c" << c << " : " << cl.type.str();
    if (cl.is_const) os << " const";
    if (eg.find(eg.root) == c) os << " root";
    os << "\n";
    for (int32_t nid : cl.members) {
      const ENode& n = eg.node(nid);
      os << "  ";
      switch (n.tag) {
        case ENode::Tag::Op: os << op_name(n.kind); break;
        case ENode::Tag::Pii: os << isa.instructions[n.instr].name << "{alpha=";
          for (size_t i = 0; i < n.alpha.size(); ++i) os << (i ? "," : "") << n.alpha[i];
          os << ",?}";
          break;
        case ENode::Tag::SliceH: os << "slice^H@" << isa.buffers[n.buffer].name; break;
        case ENode::Tag::ConcatH: os << "concat^H@" << isa.buffers[n.buffer].name; break;
        case ENode::Tag::Input: os << "input#" << n.input_index; break;
      }
      os << "(";
      for (size_t i = 0; i < n.children.size(); ++i) os << (i ? "," : "") << "c" << eg.find(n.children[i]);
      os << ")\n";
    }
  }
  return os.str();
}

}  // namespace tkc
