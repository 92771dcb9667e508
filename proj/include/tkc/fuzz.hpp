#ifndef TKC_FUZZ_HPP
#define TKC_FUZZ_HPP

#include "tkc/driver.hpp"

namespace tkc {

// Seeded random kernel generator: DAG growth over an operator whitelist with
// type-directed operand selection. Every derived value stays on the base tile
// shape so the kernels are representable at scratchpad granularity.
struct FuzzSpec {
  std::vector<OpKind> whitelist = {OpKind::Dot,      OpKind::Add,     OpKind::Multiply, OpKind::Maximum,
                                   OpKind::Convert,  OpKind::ReduceSum, OpKind::Broadcast};
  int max_nodes = 20;
  int seeds = 100;
  uint64_t seed = 0;
  std::vector<int64_t> tile = {16, 16};
  ScalarBase narrow_base = ScalarBase::I8;
  ScalarBase wide_base = ScalarBase::I32;
  int verify_trials = 10;
  int jobs = 0;  // 0 = hardware concurrency
};

KernelGraph random_kernel(const FuzzSpec& spec, uint64_t seed);

struct FuzzOutcome {
  int compiled = 0;
  int failed = 0;
  int bound = 0;
  int diverged = 0;
  int errors = 0;
  std::vector<std::string> divergence_notes;
  std::string to_json() const;
};

FuzzOutcome run_fuzz(const IsaDescription& isa, const FuzzSpec& spec, const CostModel& cm,
                     GenConfig cfg);

}  // namespace tkc

#endif
