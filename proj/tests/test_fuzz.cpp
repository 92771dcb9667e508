#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "tkc/fuzz.hpp"

using namespace tkc;

TEST_CASE("kernel generation is a pure function of the seed") {
  FuzzSpec spec;
  spec.max_nodes = 15;
  CHECK(random_kernel(spec, 42).to_text() == random_kernel(spec, 42).to_text());
  CHECK(random_kernel(spec, 42).to_text() != random_kernel(spec, 43).to_text());
}

TEST_CASE("generated kernels respect the whitelist and type-check") {
  FuzzSpec spec;
  spec.whitelist = {OpKind::Dot, OpKind::Add, OpKind::Convert};
  spec.max_nodes = 18;
  for (uint64_t s = 0; s < 30; ++s) {
    KernelGraph g = random_kernel(spec, s);
    CHECK(static_cast<int>(g.nodes.size()) <= spec.max_nodes);
    for (const KernelNode& n : g.nodes) {
      bool allowed = n.kind == OpKind::Parameter;
      for (OpKind k : spec.whitelist) allowed = allowed || n.kind == k;
      CHECK(allowed);
    }
    // the text round-trips through the parser unchanged
    CHECK(parse_graph(g.to_text()).to_text() == g.to_text());
  }
}

TEST_CASE("a trivial whitelist compiles every kernel") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  FuzzSpec spec;
  spec.whitelist = {OpKind::Convert};
  spec.seeds = 10;
  spec.max_nodes = 6;
  spec.verify_trials = 3;
  GenConfig cfg;
  cfg.timeout_ms = 4000;
  FuzzOutcome out = run_fuzz(isa, spec, CostModel::unit(), cfg);
  CHECK(out.compiled == 10);
  CHECK(out.diverged == 0);
  CHECK(out.errors == 0);
}

TEST_CASE("copy chains compile on a copy-capable machine") {
  IsaDescription isa = test::load_isa("qkv.isa");
  FuzzSpec spec;
  spec.whitelist = {OpKind::Copy};
  spec.seeds = 8;
  spec.max_nodes = 6;
  spec.tile = {64, 64};
  spec.narrow_base = ScalarBase::BF16;
  spec.wide_base = ScalarBase::BF16;
  spec.verify_trials = 3;
  GenConfig cfg;
  cfg.timeout_ms = 4000;
  FuzzOutcome out = run_fuzz(isa, spec, CostModel::unit(), cfg);
  CHECK(out.compiled == 8);
  CHECK(out.diverged == 0);
}

TEST_CASE("single-node kernels are bare parameters and trivially verified") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  FuzzSpec spec;
  spec.seeds = 6;
  spec.max_nodes = 1;
  spec.verify_trials = 3;
  GenConfig cfg;
  cfg.timeout_ms = 2000;
  FuzzOutcome out = run_fuzz(isa, spec, CostModel::unit(), cfg);
  CHECK(out.compiled == 6);
  CHECK(out.diverged == 0);
}

TEST_CASE("a short default fuzz run never diverges") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  FuzzSpec spec;
  spec.seeds = 20;
  spec.max_nodes = 12;
  spec.verify_trials = 4;
  GenConfig cfg;
  cfg.timeout_ms = 2000;
  FuzzOutcome out = run_fuzz(isa, spec, CostModel::unit(), cfg);
  CHECK(out.diverged == 0);
  CHECK(out.errors == 0);
  CHECK(out.compiled + out.failed + out.bound == 20);
}
