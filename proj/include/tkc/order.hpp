#ifndef TKC_ORDER_HPP
#define TKC_ORDER_HPP

#include <set>

#include "tkc/pii.hpp"

namespace tkc {

// Topological numbering of the pii nodes (leaves are not numbered). Position
// p holds the node id scheduled at time p+1.
struct TopoOrder {
  std::vector<int32_t> order;
  int64_t topo_of(int32_t node) const;  // 1-based, 0 for leaves
};

struct LiveRange {
  int64_t a = 0;
  int64_t b = 0;  // inclusive interval [a, b]; empty if a > b
  bool overlaps(const LiveRange& o) const { return a <= o.b && o.a <= b; }
};

// Interference graph: unordered same-buffer pairs with overlapping ranges.
using InterferenceGraph = std::set<std::pair<int32_t, int32_t>>;

struct LiveRangeTable {
  std::vector<LiveRange> ranges;  // by node id
  InterferenceGraph interference;
};

// Extended Sethi-Ullman numbering over every buffer except d0: depth-first,
// operands visited by decreasing max_d(tau_d / mem(d)).
TopoOrder esun_order(const PiiGraph& g, const IsaDescription& isa);

// Inputs live [0,N], constants [0,b-1], intermediates [a,b-1], the root value
// survives to N.
LiveRangeTable compute_live_ranges(const PiiGraph& g, const TopoOrder& order);

// Yields the heuristic order first, then every remaining topological order in
// lexicographic node-id order. With pruning enabled, an order whose
// interference graph contains a previously failed one is skipped.
class OrderEnumerator {
 public:
  OrderEnumerator(const PiiGraph& g, const IsaDescription& isa, bool prune = true,
                  int64_t max_orders = 100000);

  struct Item {
    TopoOrder order;
    LiveRangeTable live;
  };
  std::optional<Item> next();
  void report_failure(const InterferenceGraph& phi);  // enables pruning
  bool budget_hit() const { return _budget_hit; }

 private:
  const PiiGraph& _g;
  bool _prune;
  int64_t _budget;
  bool _budget_hit = false;
  TopoOrder _heuristic;
  bool _heuristic_done = false;

  // lexicographic backtracking state
  std::vector<int32_t> _prefix;
  std::vector<int32_t> _indegree;
  std::vector<std::vector<int32_t>> _users;
  std::vector<int32_t> _nodes;  // schedulable (non-leaf) nodes
  bool _exhausted = false;
  std::vector<InterferenceGraph> _failed;

  bool advance();  // moves _prefix to the next complete order
  bool is_pruned(const InterferenceGraph& phi) const;
};

}  // namespace tkc

#endif
