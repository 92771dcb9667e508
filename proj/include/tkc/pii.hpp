#ifndef TKC_PII_HPP
#define TKC_PII_HPP

#include "tkc/isa.hpp"

namespace tkc {

// Node of the inter-phase IR: instructions with alpha fixed and beta free,
// identity instructions, flattened-input leaves, and constant leaves.
struct PiiNode {
  enum class Kind : uint8_t { Instr, SliceH, ConcatH, Input, Const };
  Kind kind = Kind::Instr;
  int32_t instr = -1;           // Instr
  std::vector<int64_t> alpha;   // Instr; SliceH = {n,s,e}; ConcatH = {n1,n2}
  int32_t buffer = -1;          // output buffer (0 for Input/Const)
  int32_t input_index = -1;     // Input
  TensorValue value;            // Const (already evaluated)
  TensorType type;
  std::vector<int32_t> children;

  bool is_leaf() const { return kind == Kind::Input || kind == Kind::Const; }
};

struct PiiGraph {
  std::vector<PiiNode> nodes;  // defs before uses
  int32_t root = -1;

  int32_t instr_count() const;  // pii nodes (leaves excluded)
  uint64_t structural_hash() const;
  std::vector<std::vector<int32_t>> users() const;  // node -> list of user node ids

  // Builders validate buffer discipline on every def-use edge.
  int32_t add_instr(const IsaDescription& isa, int32_t instr, std::vector<int64_t> alpha,
                    std::vector<int32_t> children);
  int32_t add_slice_h(const IsaDescription& isa, int32_t buffer, int64_t n, int64_t s, int64_t e,
                      int32_t child);
  int32_t add_concat_h(const IsaDescription& isa, int32_t buffer, int32_t child1, int32_t child2);
  int32_t add_input(const IsaDescription& isa, int32_t input_index, int64_t byte_size);
  int32_t add_const(const IsaDescription& isa, TensorValue value);

  // Def. 13 substitution theta_{alpha,?} -> g_theta(alpha): a kernel graph
  // over the byte-flattened inputs.
  KernelGraph substitute(const IsaDescription& isa) const;

  std::string to_text(const IsaDescription& isa) const;  // debug dump, one node per line
};

}  // namespace tkc

#endif
