#ifndef TKC_DRIVER_HPP
#define TKC_DRIVER_HPP

#include "tkc/csp.hpp"
#include "tkc/isel.hpp"
#include "tkc/verify.hpp"

namespace tkc {

// Per-instruction base cost plus optional linear terms over attribute values.
struct CostModel {
  struct Entry {
    double base = 1.0;
    std::vector<std::pair<std::string, double>> per_attr;
  };
  std::unordered_map<std::string, Entry> table;
  double default_base = 1.0;

  static CostModel unit() { return CostModel{}; }
  // one line per instruction: `cost <name> = <c0> [+ <c>*<attr>]...`
  static CostModel parse(const std::string& text);
};

double evaluate_cost(const Assembly& a, const IsaDescription& isa, const CostModel& cm);

struct MovementStats {
  int64_t bytes_in = 0;   // HBM -> chip
  int64_t bytes_out = 0;  // chip -> HBM
  int64_t total() const { return bytes_in + bytes_out; }
};

MovementStats movement_stats(const Assembly& a, const IsaDescription& isa);

struct GenConfig {
  double n_factor = 2.0;      // termination multiplier
  int64_t timeout_ms = 10000; // overall wall budget
  bool deterministic = false; // logical-clock termination, no timing in reports
  IselConfig isel;
  int64_t solver_budget = 1000000;
  int64_t max_orders = 20000;
  bool prune = true;
  bool all_sat_orders = false;  // test hook: yield every SAT schedule
};

enum class GenStatus { Ok, Fail, BoundReached };

struct GenReport {
  GenStatus status = GenStatus::Fail;
  Assembly best;
  double best_cost = 0;
  int64_t candidates = 0;
  int64_t pii_graphs = 0;
  int64_t orders_tried = 0;
  int64_t solver_branches = 0;
  int64_t solver_propagations = 0;
  MovementStats movement;
  double ms_isel = 0, ms_csp = 0, ms_total = 0;
  std::string to_json(const IsaDescription& isa, bool with_timings) const;
};

// Fig.-18-style enumeration: streams pii graphs, schedules, solves, emits,
// keeps the least-cost candidate, stops on the no-improvement heuristic, the
// timeout, or stream end. FAIL only when the stream is exhausted with no
// candidate; a spent budget reports bound-reached instead.
GenReport generate(const KernelGraph& g, const IsaDescription& isa, const CostModel& cm,
                   const GenConfig& cfg);

}  // namespace tkc

#endif
