#include <algorithm>
#include <functional>

#include "tkc/order.hpp"

namespace tkc {

int64_t TopoOrder::topo_of(int32_t node) const {
  for (size_t i = 0; i < order.size(); ++i)
    if (order[i] == node) return static_cast<int64_t>(i) + 1;
  return 0;
}

TopoOrder esun_order(const PiiGraph& g, const IsaDescription& isa) {
  size_t nb = isa.buffers.size();
  std::vector<std::vector<int64_t>> esun(g.nodes.size(), std::vector<int64_t>(nb, 0));
  std::vector<bool> esun_done(g.nodes.size(), false);

  auto mem_d = [&](int32_t node, size_t d) -> int64_t {
    return g.nodes[node].buffer == static_cast<int32_t>(d) ? g.nodes[node].type.byte_size() : 0;
  };

  // bottom-up esun over every buffer except d0
  std::function<void(int32_t)> compute = [&](int32_t y) {
    if (esun_done[y]) return;
    esun_done[y] = true;
    for (int32_t x : g.nodes[y].children) compute(x);
    for (size_t d = 1; d < nb; ++d) {
      int64_t best = 0;
      const auto& ch = g.nodes[y].children;
      if (!ch.empty()) {
        best = INT64_MAX;
        for (size_t i = 0; i < ch.size(); ++i) {
          int64_t tau = esun[ch[i]][d];
          for (size_t j = 0; j < ch.size(); ++j)
            if (j != i) tau += mem_d(ch[j], d);
          best = std::min(best, tau);
        }
      }
      esun[y][d] = std::max(mem_d(y, d), best);
    }
  };
  compute(g.root);
  for (size_t i = 0; i < g.nodes.size(); ++i) compute(static_cast<int32_t>(i));

  TopoOrder out;
  std::vector<bool> emitted(g.nodes.size(), false);
  std::function<void(int32_t)> visit = [&](int32_t y) {
    if (emitted[y]) return;
    emitted[y] = true;
    const auto& ch = g.nodes[y].children;
    // operand priority: decreasing max_d(tau_d / mem(d)); stable on ties
    std::vector<std::pair<double, size_t>> pr;
    for (size_t i = 0; i < ch.size(); ++i) {
      double p = 0;
      for (size_t d = 1; d < nb; ++d) {
        int64_t tau = esun[ch[i]][d];
        for (size_t j = 0; j < ch.size(); ++j)
          if (j != i) tau += mem_d(ch[j], d);
        double cap = static_cast<double>(isa.buffers[d].capacity_bytes());
        p = std::max(p, static_cast<double>(tau) / cap);
      }
      pr.push_back({-p, i});
    }
    std::stable_sort(pr.begin(), pr.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [negp, i] : pr) visit(ch[i]);
    if (!g.nodes[y].is_leaf()) out.order.push_back(y);
  };
  visit(g.root);
  // disconnected pieces cannot occur in extracted graphs, but stay safe
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (!emitted[i] && !g.nodes[i].is_leaf()) visit(static_cast<int32_t>(i));
  return out;
}

LiveRangeTable compute_live_ranges(const PiiGraph& g, const TopoOrder& order) {
  LiveRangeTable t;
  int64_t n = static_cast<int64_t>(order.order.size());
  std::vector<int64_t> topo(g.nodes.size(), 0);
  for (size_t i = 0; i < order.order.size(); ++i) topo[order.order[i]] = static_cast<int64_t>(i) + 1;

  auto users = g.users();
  t.ranges.resize(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const PiiNode& nd = g.nodes[i];
    int64_t last_use = 0;
    for (int32_t u : users[i]) last_use = std::max(last_use, topo[u]);
    if (static_cast<int32_t>(i) == g.root) last_use = std::max(last_use, n + 1);
    if (nd.kind == PiiNode::Kind::Input) {
      t.ranges[i] = {0, n};
    } else if (nd.kind == PiiNode::Kind::Const) {
      t.ranges[i] = {0, last_use - 1};
    } else {
      t.ranges[i] = {topo[i], last_use - 1};
    }
  }
  // identity instructions are views of their operand's storage: such chains
  // share bytes on purpose and never interfere among themselves
  std::vector<int32_t> alias(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) alias[i] = static_cast<int32_t>(i);
  std::function<int32_t(int32_t)> find = [&](int32_t v) {
    while (alias[v] != v) v = alias[v] = alias[alias[v]];
    return v;
  };
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].kind == PiiNode::Kind::SliceH || g.nodes[i].kind == PiiNode::Kind::ConcatH)
      for (int32_t c : g.nodes[i].children) alias[find(static_cast<int32_t>(i))] = find(c);

  for (size_t i = 0; i < g.nodes.size(); ++i)
    for (size_t j = i + 1; j < g.nodes.size(); ++j) {
      if (g.nodes[i].buffer != g.nodes[j].buffer) continue;
      if (find(static_cast<int32_t>(i)) == find(static_cast<int32_t>(j))) continue;
      if (t.ranges[i].overlaps(t.ranges[j]))
        t.interference.insert({static_cast<int32_t>(i), static_cast<int32_t>(j)});
    }
  return t;
}

OrderEnumerator::OrderEnumerator(const PiiGraph& g, const IsaDescription& isa, bool prune,
                                 int64_t max_orders)
    : _g(g), _prune(prune), _budget(max_orders) {
  _heuristic = esun_order(g, isa);
  _users.resize(g.nodes.size());
  _indegree.assign(g.nodes.size(), 0);
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].is_leaf()) continue;
    _nodes.push_back(static_cast<int32_t>(i));
    for (int32_t c : g.nodes[i].children) {
      if (_g.nodes[c].is_leaf()) continue;
      _users[c].push_back(static_cast<int32_t>(i));
      ++_indegree[i];
    }
  }
}

bool OrderEnumerator::is_pruned(const InterferenceGraph& phi) const {
  for (const InterferenceGraph& f : _failed)
    if (std::includes(phi.begin(), phi.end(), f.begin(), f.end())) return true;
  return false;
}

void OrderEnumerator::report_failure(const InterferenceGraph& phi) { _failed.push_back(phi); }

// Advances _prefix to the next complete topological order (lexicographic by
// node id); first call builds the smallest one.
bool OrderEnumerator::advance() {
  if (_exhausted) return false;
  if (_nodes.empty()) {
    _exhausted = true;
    return true;  // the single empty order
  }
  std::vector<int64_t> pending(_g.nodes.size(), 0);
  std::vector<bool> placed(_g.nodes.size(), false);
  auto recompute = [&]() {
    for (int32_t n : _nodes) {
      pending[n] = _indegree[n];
      placed[n] = false;
    }
    for (int32_t n : _prefix) {
      placed[n] = true;
      for (int32_t u : _users[n]) --pending[u];
    }
  };
  auto candidates_after = [&](int32_t lower) -> int32_t {
    for (int32_t n : _nodes)
      if (!placed[n] && pending[n] == 0 && n > lower) return n;
    return -1;
  };
  auto push = [&](int32_t n) {
    _prefix.push_back(n);
    placed[n] = true;
    for (int32_t u : _users[n]) --pending[u];
  };
  auto pop = [&]() {
    int32_t n = _prefix.back();
    _prefix.pop_back();
    placed[n] = false;
    for (int32_t u : _users[n]) ++pending[u];
    return n;
  };

  recompute();
  if (_prefix.size() == _nodes.size() && !_prefix.empty()) {
    // backtrack from the last complete order
    while (!_prefix.empty()) {
      int32_t last = pop();
      int32_t nxt = candidates_after(last);
      if (nxt >= 0) {
        push(nxt);
        while (_prefix.size() < _nodes.size()) push(candidates_after(-1));
        return true;
      }
    }
    _exhausted = true;
    return false;
  }
  while (_prefix.size() < _nodes.size()) {
    int32_t n = candidates_after(-1);
    if (n < 0) {
      _exhausted = true;  // cyclic graph cannot happen for well-formed piis
      return false;
    }
    push(n);
  }
  return !_prefix.empty() || _nodes.empty();
}

std::optional<OrderEnumerator::Item> OrderEnumerator::next() {
  while (true) {
    if (--_budget < 0) {
      _budget_hit = true;
      return std::nullopt;
    }
    TopoOrder cand;
    if (!_heuristic_done) {
      _heuristic_done = true;
      cand = _heuristic;
    } else {
      if (!advance()) return std::nullopt;
      cand.order = _prefix;
      if (cand.order == _heuristic.order) continue;  // already yielded first
    }
    LiveRangeTable live = compute_live_ranges(_g, cand);
    if (_prune && is_pruned(live.interference)) continue;
    return Item{std::move(cand), std::move(live)};
  }
}

}  // namespace tkc
