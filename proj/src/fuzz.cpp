#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "tkc/fuzz.hpp"

namespace tkc {

namespace {

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

}  // namespace

KernelGraph random_kernel(const FuzzSpec& spec, uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x1234567);
  KernelGraph g;
  TensorType narrow(spec.narrow_base, spec.tile);
  TensorType wide(spec.wide_base, spec.tile);
  TensorType wide_vec(spec.wide_base, {spec.tile[1]});

  int n_params = static_cast<int>(rng.range(1, std::max(1, std::min(3, spec.max_nodes))));
  for (int i = 0; i < n_params; ++i) {
    OpAttrs a;
    a.param_index = i;
    a.target = narrow;
    g.add("p" + std::to_string(i), OpKind::Parameter, a, {});
  }

  auto values_of = [&](const TensorType& t) {
    std::vector<int32_t> out;
    for (size_t i = 0; i < g.nodes.size(); ++i)
      if (g.nodes[i].type == t) out.push_back(static_cast<int32_t>(i));
    return out;
  };
  auto pick = [&](const std::vector<int32_t>& xs) { return xs[rng.range(0, xs.size() - 1)]; };

  int target = static_cast<int>(rng.range(std::min(4, spec.max_nodes), spec.max_nodes));
  int id = 0;
  int guard = 0;
  while (static_cast<int>(g.nodes.size()) < target && ++guard < 10 * target) {
    OpKind k = spec.whitelist[rng.range(0, spec.whitelist.size() - 1)];
    std::string nm = "v" + std::to_string(id++);
    switch (k) {
      case OpKind::Convert: {
        bool widen = rng.next() & 1;
        auto xs = values_of(widen ? narrow : wide);
        if (xs.empty()) break;
        OpAttrs a;
        a.target = widen ? wide : narrow;
        g.add(nm, OpKind::Convert, a, {pick(xs)});
        break;
      }
      case OpKind::Dot: {
        auto xs = values_of(wide);
        if (xs.empty()) break;
        OpAttrs a;
        a.contract_lhs = 2;
        a.contract_rhs = 1;
        g.add(nm, OpKind::Dot, a, {pick(xs), pick(xs)});
        break;
      }
      case OpKind::Add:
      case OpKind::Multiply:
      case OpKind::Maximum: {
        auto xs = values_of(wide);
        if (xs.empty()) break;
        g.add(nm, k, OpAttrs{}, {pick(xs), pick(xs)});
        break;
      }
      case OpKind::ReduceSum: {
        auto xs = values_of(wide);
        if (xs.empty()) break;
        OpAttrs a;
        a.dims = {1};
        g.add(nm, OpKind::ReduceSum, a, {pick(xs)});
        break;
      }
      case OpKind::Broadcast: {
        auto xs = values_of(wide_vec);
        if (xs.empty()) break;
        OpAttrs a;
        a.dims = {1};
        a.target = wide;
        g.add(nm, OpKind::Broadcast, a, {pick(xs)});
        break;
      }
      case OpKind::Copy: {
        g.add(nm, OpKind::Copy, OpAttrs{},
              {static_cast<int32_t>(rng.range(0, g.nodes.size() - 1))});
        break;
      }
      default:
        break;
    }
  }

  g.root = static_cast<int32_t>(g.nodes.size()) - 1;
  return g;
}

std::string FuzzOutcome::to_json() const {
  nlohmann::json j;
  std::vector<std::string> notes = divergence_notes;
  std::sort(notes.begin(), notes.end());
  j["compiled"] = compiled;
  j["failed"] = failed;
  j["bound"] = bound;
  j["diverged"] = diverged;
  j["errors"] = errors;
  j["divergences"] = notes;
  return j.dump(2);
}

FuzzOutcome run_fuzz(const IsaDescription& isa, const FuzzSpec& spec, const CostModel& cm,
                     GenConfig cfg) {
  FuzzOutcome out;
  std::mutex mu;
  std::atomic<int> next{0};
  cfg.deterministic = true;  // per-seed outcomes independent of scheduling

  auto worker = [&]() {
    while (true) {
      int i = next.fetch_add(1);
      if (i >= spec.seeds) return;
      uint64_t kernel_seed = spec.seed + static_cast<uint64_t>(i);
      try {
        KernelGraph g = random_kernel(spec, kernel_seed);
        GenReport rep = generate(g, isa, cm, cfg);
        if (rep.status == GenStatus::Ok) {
          VerifyReport v = verify_soundness(isa, rep.best, expand_tiled_layout(g), spec.verify_trials,
                                            kernel_seed, 1);
          std::lock_guard<std::mutex> lk(mu);
          ++out.compiled;
          if (!v.passed) {
            ++out.diverged;
            std::string note = "seed " + std::to_string(kernel_seed);
            if (v.first_divergence)
              note += " trial " + std::to_string(v.first_divergence->trial) + " byte " +
                      std::to_string(v.first_divergence->byte_offset);
            out.divergence_notes.push_back(note);
          }
        } else {
          std::lock_guard<std::mutex> lk(mu);
          if (rep.status == GenStatus::Fail) ++out.failed;
          else ++out.bound;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu);
        ++out.errors;
        out.divergence_notes.push_back("seed " + std::to_string(kernel_seed) + " error: " + e.what());
      }
    }
  };

  int jobs = spec.jobs > 0 ? spec.jobs : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, spec.seeds);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace tkc
