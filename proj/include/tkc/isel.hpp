#ifndef TKC_ISEL_HPP
#define TKC_ISEL_HPP

#include <deque>
#include <unordered_set>

#include "tkc/pii.hpp"
#include "tkc/rules.hpp"

namespace tkc {

struct IselConfig {
  int64_t gamma_base = 2;       // N_max at iteration k is gamma_base^k (linear if gamma_linear)
  bool gamma_linear = false;    // N_max = gamma_base * k instead
  int extract_limit = 64;       // graphs returned per bound
  int max_iterations = 12;      // exploration budget
  int64_t max_enodes = 80000;   // e-graph size budget
  int64_t dfs_budget = 200000;  // extraction work budget per bound
  int64_t n_max_cap = 64;
};

// Root is the byte-flattened output; every parameter enters as the
// byte-unflattening of a flattened-input leaf on d0.
EGraph init_egraph(const KernelGraph& g, const IsaDescription& isa);

struct SaturateResult {
  bool fixpoint = false;
  bool budget_hit = false;
};

// One batch: match every rule over a frozen snapshot, apply, restore
// congruence.
SaturateResult saturate_step(EGraph& eg, const std::vector<RewriteRule>& rules, int64_t max_enodes);

// Bottom-up monotone fixpoint; constant/eye/ones leaves seed it, flattened
// inputs never mark.
void detect_constants(EGraph& eg);

// Evaluates a constant e-class through its operator witnesses.
TensorValue eval_constant_class(const EGraph& eg, ClassId c,
                                std::unordered_map<ClassId, TensorValue>& memo);

struct ExtractResult {
  std::vector<PiiGraph> graphs;  // smallest-first
  bool bound_limited = false;    // some branch was cut by a budget or cap
};

ExtractResult extract_pii_graphs(const EGraph& eg, const IsaDescription& isa, int64_t n_max, int limit,
                                 int64_t dfs_budget);

// Interleaves exploration and bounded extraction with a growing node limit;
// never yields the same graph twice.
class PiiEnumerator {
 public:
  enum class End { Running, Exhausted, BoundReached };

  PiiEnumerator(KernelGraph graph, const IsaDescription& isa, IselConfig cfg = {});

  std::optional<PiiGraph> next();
  End status() const { return _end; }
  int iteration() const { return _k; }
  const EGraph& egraph() const { return _eg; }
  const std::vector<RewriteRule>& rules() const { return _rules; }

 private:
  const IsaDescription& _isa;
  IselConfig _cfg;
  EGraph _eg;
  std::vector<RewriteRule> _rules;
  std::deque<PiiGraph> _pending;
  std::unordered_set<uint64_t> _seen;
  int _k = 0;
  bool _saturated = false;
  bool _enode_budget_hit = false;
  End _end = End::Running;
};

std::string egraph_to_text(const EGraph& eg, const IsaDescription& isa);
std::string egraph_to_dot(const EGraph& eg, const IsaDescription& isa);

}  // namespace tkc

#endif
