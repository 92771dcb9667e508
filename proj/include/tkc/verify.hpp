#ifndef TKC_VERIFY_HPP
#define TKC_VERIFY_HPP

#include <optional>

#include "tkc/machine.hpp"

namespace tkc {

// Relative float tolerances used for the output-region comparison.
inline constexpr float kBf16Tol = 1.0f / 256.0f;       // 2^-8
inline constexpr float kF32Tol = 1.0f / 1048576.0f;    // 2^-20

struct Divergence {
  int trial = 0;
  int64_t byte_offset = 0;
  std::string expected;
  std::string actual;
};

struct VerifyReport {
  int trials = 0;
  bool passed = true;
  std::optional<Divergence> first_divergence;
};

// Seeded random tensor with the base type's full integer range or floats in
// [-0.5, 0.5); the bit pattern is a pure function of (seed).
TensorValue random_tensor(const TensorType& t, uint64_t seed);

// Differential soundness check: run_assembly vs concat(bflat(X), bflat(G(X)))
// on `trials` seeded inputs. Integer regions compare bit-exact; bf16/f32
// regions compare elementwise within kBf16Tol/kF32Tol.
VerifyReport verify_soundness(const IsaDescription& isa, const Assembly& a, const KernelGraph& g,
                              int trials, uint64_t seed, int threads = 0);

}  // namespace tkc

#endif
