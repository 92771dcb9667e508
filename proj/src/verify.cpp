#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "tkc/verify.hpp"

namespace tkc {

namespace {

// splitmix64; deterministic and stdlib-independent
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

bool float_close(float a, float b, float tol) {
  if (a == b) return true;
  if (std::isnan(a) && std::isnan(b)) return true;
  float m = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= tol * m;
}

struct Region {
  int64_t offset;      // byte offset into the compared window
  TensorType type;
};

// Compares one typed region; returns the first diverging byte offset.
std::optional<int64_t> compare_region(const Region& r, const std::vector<uint8_t>& got,
                                      const std::vector<uint8_t>& want) {
  int64_t w = scalar_width(r.type.base);
  if (!scalar_is_float(r.type.base)) {
    for (int64_t i = 0; i < r.type.byte_size(); ++i)
      if (got[r.offset + i] != want[r.offset + i]) return r.offset + i;
    return std::nullopt;
  }
  float tol = r.type.base == ScalarBase::BF16 ? kBf16Tol : kF32Tol;
  TensorValue gv(r.type), wv(r.type);
  std::memcpy(gv.bytes.data(), got.data() + r.offset, gv.bytes.size());
  std::memcpy(wv.bytes.data(), want.data() + r.offset, wv.bytes.size());
  for (int64_t i = 0; i < r.type.elem_count(); ++i)
    if (!float_close(gv.get_float(i), wv.get_float(i), tol)) return r.offset + i * w;
  return std::nullopt;
}

}  // namespace

TensorValue random_tensor(const TensorType& t, uint64_t seed) {
  TensorValue v(t);
  uint64_t s = seed;
  for (int64_t i = 0; i < t.elem_count(); ++i) {
    s = mix(s);
    if (scalar_is_float(t.base)) {
      // uniform in [-0.5, 0.5) from the top 24 bits
      float f = static_cast<float>((s >> 40) / 16777216.0 - 0.5);
      v.set_float(i, f);
    } else {
      v.set_uint(i, s);
    }
  }
  return v;
}

VerifyReport verify_soundness(const IsaDescription& isa, const Assembly& a, const KernelGraph& g,
                              int trials, uint64_t seed, int threads) {
  VerifyReport report;
  report.trials = trials;
  if (trials == 0) return report;

  std::vector<Region> regions;
  int64_t off = 0;
  for (const TensorType& t : g.param_types()) {
    regions.push_back({off, t});
    off += t.byte_size();
  }
  regions.push_back({off, g.root_node().type});
  int64_t out_bytes = off + g.output_bytes();

  std::mutex mu;
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&]() {
    while (!stop.load()) {
      int trial = next.fetch_add(1);
      if (trial >= trials) return;
      std::vector<TensorValue> inputs;
      for (size_t p = 0; p < g.params.size(); ++p)
        inputs.push_back(random_tensor(g.nodes[g.params[p]].type, mix(seed ^ (0x517cc1b7ull * (trial + 1))) + p));

      std::vector<uint8_t> want;
      {
        TensorValue out = evaluate(g, inputs);
        for (const TensorValue& x : inputs) want.insert(want.end(), x.bytes.begin(), x.bytes.end());
        want.insert(want.end(), out.bytes.begin(), out.bytes.end());
      }
      std::vector<uint8_t> got;
      try {
        got = run_assembly(isa, a, inputs, out_bytes);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lk(mu);
        if (report.passed) {
          report.passed = false;
          report.first_divergence = Divergence{trial, -1, "execution", e.what()};
        }
        stop = true;
        return;
      }
      for (const Region& r : regions) {
        if (auto bad = compare_region(r, got, want)) {
          std::lock_guard<std::mutex> lk(mu);
          if (report.passed || report.first_divergence->trial > trial) {
            report.passed = false;
            report.first_divergence =
                Divergence{trial, *bad, std::to_string(static_cast<int>(want[*bad])),
                           std::to_string(static_cast<int>(got[*bad]))};
          }
          stop = true;
          return;
        }
      }
    }
  };

  int n = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  n = std::min(n, trials);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return report;
}

}  // namespace tkc
