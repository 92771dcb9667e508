#ifndef TKC_TEST_HELPERS_HPP
#define TKC_TEST_HELPERS_HPP

#include <fstream>
#include <sstream>

#include "tkc/driver.hpp"
#include "tkc/fuzz.hpp"

namespace tkc::test {

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline IsaDescription load_isa(const std::string& name) {
  return parse_isa(read_file(std::string(TKC_ISA_DIR) + "/" + name));
}

inline KernelGraph load_kernel(const std::string& name) {
  return parse_graph(read_file(std::string(TKC_ISA_DIR) + "/kernels/" + name));
}

// xorshift-free deterministic generator for test data
struct Rng {
  uint64_t s;
  explicit Rng(uint64_t seed) : s(seed) {}
  uint64_t next() {
    s += 0x9e3779b97f4a7c15ull;
    uint64_t x = s;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }
  int64_t range(int64_t lo, int64_t hi) { return lo + static_cast<int64_t>(next() % (hi - lo + 1)); }
};

// The nine-instruction attention pii graph: two loads feed a gemm, softmax,
// a move back to the scratchpad, a third load, the second gemm, another move,
// and a store. Node order matches the schedule circled in the write-ups.
inline PiiGraph attention_pii(const IsaDescription& isa) {
  PiiGraph g;
  int32_t in_q = g.add_input(isa, 0, 8192);
  int32_t in_k = g.add_input(isa, 1, 8192);
  int32_t in_v = g.add_input(isa, 2, 8192);
  int32_t load_q = g.add_instr(isa, isa.instruction_index("load_rm"), {64}, {in_q});
  int32_t load_k = g.add_instr(isa, isa.instruction_index("load_cm"), {64}, {in_k});
  int32_t gemm1 = g.add_instr(isa, isa.instruction_index("gemm"), {}, {load_q, load_k});
  int32_t soft = g.add_instr(isa, isa.instruction_index("softmax"), {64}, {gemm1});
  int32_t mov1 = g.add_instr(isa, isa.instruction_index("mov"), {64}, {soft});
  int32_t load_v = g.add_instr(isa, isa.instruction_index("load_rm"), {64}, {in_v});
  int32_t gemm2 = g.add_instr(isa, isa.instruction_index("gemm"), {}, {mov1, load_v});
  int32_t mov2 = g.add_instr(isa, isa.instruction_index("mov"), {64}, {gemm2});
  g.root = g.add_instr(isa, isa.instruction_index("store_rm"), {64}, {mov2});
  return g;
}

// Two-bank fixture where every depth-first schedule needs three rows in one
// bank, but an interleaved schedule fits in (2, 2).
inline PiiGraph crossed_adds_pii(const IsaDescription& isa) {
  PiiGraph g;
  int32_t s = g.add_input(isa, 0, 16);
  int32_t t = g.add_input(isa, 1, 16);
  int32_t p = g.add_input(isa, 2, 16);
  int32_t q = g.add_input(isa, 3, 16);
  int32_t ld = isa.instruction_index("ld_b");
  int32_t addx = isa.instruction_index("addx");
  int32_t mv = isa.instruction_index("mv_rb");
  int32_t ls = g.add_instr(isa, ld, {1}, {s});
  int32_t lt = g.add_instr(isa, ld, {1}, {t});
  int32_t x = g.add_instr(isa, addx, {1}, {ls, lt});
  int32_t xb = g.add_instr(isa, mv, {1}, {x});
  int32_t lp = g.add_instr(isa, ld, {1}, {p});
  int32_t lq = g.add_instr(isa, ld, {1}, {q});
  int32_t w = g.add_instr(isa, addx, {1}, {lp, lq});
  int32_t wb = g.add_instr(isa, mv, {1}, {w});
  int32_t h = g.add_instr(isa, addx, {1}, {xb, wb});
  g.root = g.add_instr(isa, isa.instruction_index("st_r"), {1}, {h});
  return g;
}

// plain e-graph over a kernel graph, parameters as operator leaves
inline EGraph graph_to_egraph_plain(const KernelGraph& g) {
  EGraph eg;
  std::vector<ClassId> cls(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const KernelNode& n = g.nodes[i];
    ENode e;
    e.tag = ENode::Tag::Op;
    e.kind = n.kind;
    e.attrs = n.attrs;
    e.type = n.type;
    for (int32_t o : n.operands) e.children.push_back(cls[o]);
    cls[i] = eg.add(std::move(e));
  }
  eg.root = cls[g.root];
  return eg;
}

// Checks that a derived rule recovers alpha from g_theta(alpha) instances and
// that the bound pii denotes the same computation; used as the LHS==RHS
// equivalence run for IR-to-ISA rules.
inline std::optional<std::string> check_derived_rule(const IsaDescription& isa, int32_t instr_idx,
                                                     const RewriteRule& rule, int samples,
                                                     uint64_t seed) {
  const AbstractInstruction& instr = isa.instructions[instr_idx];
  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    std::vector<int64_t> alpha(instr.alpha.size());
    bool ok = false;
    for (int tries = 0; tries < 100 && !ok; ++tries) {
      for (size_t i = 0; i < alpha.size(); ++i)
        alpha[i] = rng.range(instr.alpha[i].lo, std::min(instr.alpha[i].hi, instr.alpha[i].lo + 32));
      std::vector<int64_t> attrs(alpha);
      attrs.resize(instr.alpha.size() + instr.beta.size(), 0);
      ok = true;
      for (const LinearConstraint& c : instr.constraints) {
        bool a_only = true;
        for (const auto& t : c.expr.terms)
          if (t.index >= instr.n_alpha()) a_only = false;
        if (a_only &&
            (c.kind == LinearConstraint::Kind::LE ? c.expr.eval(attrs) > 0 : c.expr.eval(attrs) != 0))
          ok = false;
      }
      if (ok) ok = beta_satisfiable(isa, instr, alpha);
    }
    if (!ok) return "no in-bounds alpha sample for " + instr.name;

    KernelGraph lhs = instantiate_computation(isa, instr, alpha);
    EGraph eg = graph_to_egraph_plain(lhs);
    std::vector<RewriteRule> one{rule};
    saturate_step(eg, one, 1 << 20);

    bool found = false;
    for (int32_t nid : eg.cls(eg.root).members) {
      const ENode& n = eg.node(nid);
      if (n.tag == ENode::Tag::Pii && n.instr == instr_idx && n.alpha == alpha) found = true;
    }
    if (!found) return "rule " + rule.name + " failed to bind alpha";

    std::vector<TensorValue> in;
    for (size_t p = 0; p < lhs.params.size(); ++p)
      in.push_back(random_tensor(lhs.nodes[lhs.params[p]].type, rng.next()));
    TensorValue a = evaluate(lhs, in);
    TensorValue b = evaluate(instantiate_computation(isa, instr, alpha), in);
    if (!(a == b)) return "instantiation mismatch for " + instr.name;
  }
  return std::nullopt;
}

// HBM layout for a pii-level fixture: inputs packed by index, output after
inline IoLayout io_for_pii(const PiiGraph& g) {
  IoLayout io;
  std::vector<std::pair<int32_t, int64_t>> inputs;
  for (const PiiNode& n : g.nodes)
    if (n.kind == PiiNode::Kind::Input) inputs.push_back({n.input_index, n.type.shape[0]});
  std::sort(inputs.begin(), inputs.end());
  int64_t off = 0;
  for (auto& [idx, size] : inputs) {
    io.input_offsets.push_back(off);
    io.input_sizes.push_back(size);
    off += size;
  }
  io.out_start = off;
  io.out_end = off + g.nodes[g.root].type.byte_size();
  return io;
}

}  // namespace tkc::test

#endif
