#ifndef TKC_MACHINE_HPP
#define TKC_MACHINE_HPP

#include "tkc/isa.hpp"

namespace tkc {

// theta_{alpha,beta}: instruction index into the ISA plus full assignments.
struct ConcreteInstruction {
  int32_t instr = -1;
  std::vector<int64_t> alpha;
  std::vector<int64_t> beta;

  bool operator==(const ConcreteInstruction& o) const {
    return instr == o.instr && alpha == o.alpha && beta == o.beta;
  }
};

// Instruction stream plus the constant byte image (offset into HBM).
struct Assembly {
  std::vector<ConcreteInstruction> instructions;
  int64_t const_offset = 0;
  std::vector<uint8_t> const_image;
};

// One tensor per buffer, viewed as E[S0, S1]; buffers start zeroed.
struct MemoryState {
  std::vector<TensorValue> buffers;
};

MemoryState initial_state(const IsaDescription& isa);

// Reads the data slice [start:end) over access dims (full granularity dims).
TensorValue read_slice(const TensorBuffer& buf, const TensorValue& data, const DataSlice& s);
void write_slice(const TensorBuffer& buf, TensorValue& data, const DataSlice& s, const TensorValue& v);

// Def. 6 execution: update-slice of g(alpha) applied to the input slices;
// every other buffer is untouched. Throws on validity failure.
void execute_instruction(const IsaDescription& isa, MemoryState& m, const ConcreteInstruction& c);

// Def. 8 run: HBM[0:] = concat(bflat(X), const image at its offset), then the
// instruction stream in order; returns HBM[0 : out_bytes].
std::vector<uint8_t> run_assembly(const IsaDescription& isa, const Assembly& asmcode,
                                  const std::vector<TensorValue>& inputs, int64_t out_bytes);

std::string assembly_to_text(const IsaDescription& isa, const Assembly& a);
Assembly assembly_from_text(const IsaDescription& isa, const std::string& text);

}  // namespace tkc

#endif
