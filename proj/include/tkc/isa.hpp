#ifndef TKC_ISA_HPP
#define TKC_ISA_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tkc/graph.hpp"

namespace tkc {

// Linear integer expression c0 + sum(coef * attr) over an instruction's
// attribute names. Attribute references are resolved to indices into the
// concatenated (alpha ++ beta) declaration list of the owning instruction.
struct AttrExpr {
  struct Term {
    std::string name;
    int32_t index = -1;  // position in alpha ++ beta
    int64_t coef = 1;
  };
  int64_t c0 = 0;
  std::vector<Term> terms;

  bool is_constant() const { return terms.empty(); }
  int64_t eval(std::span<const int64_t> attrs) const;
  std::string str() const;
};

struct AttrDecl {
  std::string name;
  int64_t lo = 0;
  int64_t hi = 0;  // inclusive bounds
};

// expr <= 0 or expr == 0.
struct LinearConstraint {
  enum class Kind { LE, EQ };
  AttrExpr expr;
  Kind kind = Kind::LE;
  std::string str() const;
};

// Computation template node: shapes carry attribute expressions over alpha.
struct SymbolicNode {
  std::string id;
  OpKind kind = OpKind::Parameter;
  ScalarBase base = ScalarBase::U8;
  std::vector<AttrExpr> dims;
  OpAttrs lit;  // literal attribute parts (dims/limits/contracting/param index)
  std::vector<int32_t> operands;
};

struct SymbolicGraph {
  std::vector<SymbolicNode> nodes;
  int32_t root = -1;
  std::vector<int32_t> params;
};

struct TensorBuffer {
  std::string name;
  std::vector<int64_t> access_shape;  // S0
  std::vector<int64_t> elem_shape;    // S1 (empty for scalar granularity)
  ScalarBase base = ScalarBase::U8;

  int64_t access_rank() const { return static_cast<int64_t>(access_shape.size()); }
  int64_t elem_bytes() const;                                  // mem(E) * prod(S1)
  int64_t capacity_bytes() const;                              // mem(E) * prod(S0) * prod(S1)
  TensorType full_type() const;                                // E[S0, S1]
  TensorType slice_type(std::span<const int64_t> lens) const;  // E[lens, S1]
};

// h^(i): one addressed operand of an abstract instruction.
struct BufferRef {
  int32_t buffer = -1;
  std::vector<AttrExpr> start;  // per access dim
  std::vector<AttrExpr> len;
};

struct AbstractInstruction {
  std::string name;
  std::vector<AttrDecl> alpha;
  std::vector<AttrDecl> beta;
  std::vector<BufferRef> inputs;  // h^(i), i >= 1, in operand order
  BufferRef output;               // h^(0)
  std::vector<LinearConstraint> constraints;  // declared e_theta conjuncts
  SymbolicGraph compute;                      // g_theta

  int64_t n_alpha() const { return static_cast<int64_t>(alpha.size()); }
  int64_t n_beta() const { return static_cast<int64_t>(beta.size()); }
  const AttrDecl& attr(int32_t idx) const {
    return idx < n_alpha() ? alpha[idx] : beta[idx - n_alpha()];
  }
};

struct IsaDescription {
  std::string name;
  int64_t hbm_size = 0;
  std::vector<TensorBuffer> buffers;  // [0] is always d0 (HBM, u8 scalar granularity)
  std::vector<AbstractInstruction> instructions;

  int32_t buffer_index(const std::string& n) const;
  int32_t instruction_index(const std::string& n) const;
};

IsaDescription parse_isa(const std::string& text);

// Concrete attribute assignment, declaration order (alpha ++ beta).
std::vector<int64_t> concat_attrs(std::span<const int64_t> alpha, std::span<const int64_t> beta);

struct DataSlice {
  int32_t buffer = -1;
  std::vector<int64_t> start;
  std::vector<int64_t> end;

  std::vector<int64_t> lens() const;
  bool operator==(const DataSlice& o) const { return buffer == o.buffer && start == o.start && end == o.end; }
};

// g_theta(alpha) as a checked kernel graph; parameters follow instruction
// input order. Throws on out-of-bounds alpha.
KernelGraph instantiate_computation(const IsaDescription& isa, const AbstractInstruction& instr,
                                    std::span<const int64_t> alpha);

// (n_theta + 1) slices, output first. Throws if any slice leaves its buffer.
std::vector<DataSlice> concretize_slices(const IsaDescription& isa, const AbstractInstruction& instr,
                                         std::span<const int64_t> alpha, std::span<const int64_t> beta);

// e_theta(alpha, beta) together with declared bounds and slice in-bounds
// checks; total and never diverges (linear arithmetic only).
bool check_validity(const IsaDescription& isa, const AbstractInstruction& instr,
                    std::span<const int64_t> alpha, std::span<const int64_t> beta);

struct ValidationIssue {
  std::string instruction;
  std::string message;
};

// Samples random in-bounds alpha per instruction and cross-checks the
// template against the declared slice types.
std::vector<ValidationIssue> validate_isa(const IsaDescription& isa, int samples, uint64_t seed = 0);

// Instantiates a symbolic graph (shared by instantiate_computation and the
// rewrite deriver's self checks).
KernelGraph instantiate_symbolic(const SymbolicGraph& sg, std::span<const int64_t> attrs);

}  // namespace tkc

#endif
