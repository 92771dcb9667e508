#ifndef TKC_RULES_HPP
#define TKC_RULES_HPP

#include <functional>

#include "tkc/egraph.hpp"

namespace tkc {

// A queued application produced while matching over a frozen snapshot; all
// applications of one batch run before congruence is restored.
using PendingApply = std::function<void(EGraph&)>;

struct RewriteRule {
  std::string name;
  std::string lhs_desc;
  std::string rhs_desc;
  std::vector<OpKind> lhs_ops;
  std::vector<OpKind> rhs_ops;

  // Tries the rule rooted at node `nid` of class `c`; queues applications.
  std::function<void(const EGraph&, ClassId c, int32_t nid, std::vector<PendingApply>&)> match;

  // Builds one randomized (lhs, rhs) kernel-graph instance pair for the
  // semantic-preservation check; returns false if the seed yields nothing.
  std::function<bool(uint64_t seed, KernelGraph& lhs, KernelGraph& rhs)> sample;
};

// The shipped IR-to-IR ruleset (slice/reshape/bitcast/transpose algebra, copy
// introduction, flatten round-trip, constant folds, tiling splits).
std::vector<RewriteRule> baseline_ir_rules();

// One g_theta -> theta_{alpha,?} rule per instruction; the precondition binds
// alpha from matched shapes, checks alpha bounds plus the alpha-only
// constraint projection, and checks beta interval satisfiability.
std::vector<RewriteRule> derive_isa_rewrites(const IsaDescription& isa);

// slice^H / concat^H introduction per 1-D-access buffer.
std::vector<RewriteRule> identity_instruction_rules(const IsaDescription& isa);

// Iterative closure over operators reachable from the instruction templates
// (identity instructions contribute slice/concat).
std::vector<RewriteRule> filter_ir_rules(const std::vector<RewriteRule>& base, const IsaDescription& isa);

// Interval satisfiability of beta under single-variable projections of
// e_theta and the slice in-bounds constraints, with alpha fixed.
bool beta_satisfiable(const IsaDescription& isa, const AbstractInstruction& instr,
                      std::span<const int64_t> alpha);

// Randomized LHS == RHS evaluation for one rule; `samples` instance/input
// pairs. Returns an explanatory message on failure.
std::optional<std::string> check_rule_soundness(const RewriteRule& rule, int samples, uint64_t seed);

}  // namespace tkc

#endif
