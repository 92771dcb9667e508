#ifndef TKC_CSP_HPP
#define TKC_CSP_HPP

#include "tkc/machine.hpp"
#include "tkc/order.hpp"

namespace tkc {

struct LinTerm {
  int64_t coef = 0;
  int32_t var = -1;
};

struct LinExpr {
  int64_t c0 = 0;
  std::vector<LinTerm> terms;
};

// expr <= 0 or expr == 0 over the problem variables.
struct CspConstraint {
  LinExpr expr;
  bool eq = false;
};

// At least one arm holds (CSP4 slice disjointness).
struct CspDisjunction {
  std::vector<CspConstraint> arms;
};

struct CspProblem {
  std::vector<std::pair<int64_t, int64_t>> bounds;  // inclusive var domains
  std::vector<std::string> names;
  std::vector<CspConstraint> cons;
  std::vector<CspDisjunction> disj;

  int32_t add_var(std::string name, int64_t lo, int64_t hi);
  std::string to_text() const;  // one constraint per line
};

// Def. 8 HBM layout: inputs packed from 0 in parameter order, output right
// after the inputs.
struct IoLayout {
  std::vector<int64_t> input_offsets;  // by parameter index
  std::vector<int64_t> input_sizes;
  int64_t out_start = 0;
  int64_t out_end = 0;

  static IoLayout of(const KernelGraph& g);
};

struct CspBuild {
  CspProblem problem;
  // per pii node: var ids of its slice block [I_s dims..., I_e dims...]
  std::vector<int32_t> slice_base;
  // per pii node: var ids of its addressing attributes (instr beta block, or
  // the single base address of an identity instruction); -1 for leaves
  std::vector<int32_t> beta_base;
};

CspBuild build_csp(const PiiGraph& g, const TopoOrder& order, const LiveRangeTable& live,
                   const IsaDescription& isa, const IoLayout& io);

enum class SolveStatus { Sat, Unsat, Budget };

struct SolveResult {
  SolveStatus status = SolveStatus::Unsat;
  std::vector<int64_t> values;
  int64_t branches = 0;
  int64_t propagations = 0;
};

// Chronological backtracking with interval propagation; variables are
// assigned in creation order, values ascending, so the search is
// deterministic and first-fit packs toward low addresses.
SolveResult solve_csp(const CspProblem& p, int64_t budget = 1000000);

// Emits concrete instructions in schedule order, drops identity instructions,
// and packs constant leaves into one zero-filled image starting at the end of
// the input region.
Assembly emit_assembly(const PiiGraph& g, const TopoOrder& order, const IsaDescription& isa,
                       const CspBuild& build, const std::vector<int64_t>& values, const IoLayout& io);

}  // namespace tkc

#endif
