#ifndef TKC_GRAPH_HPP
#define TKC_GRAPH_HPP

#include <optional>
#include <unordered_map>
#include <vector>

#include "tkc/tensor.hpp"

namespace tkc {

// Tensor operator vocabulary. Dimension numbers in attributes are 1-based,
// matching the kernel text format.
enum class OpKind : uint8_t {
  Parameter,
  Constant,
  Eye,
  Ones,
  Slice,
  UpdateSlice,
  Concat,
  Reshape,
  BitcastConvert,
  Broadcast,
  ReduceSum,
  Transpose,
  Dot,
  Exp,
  Divide,
  Copy,
  Convert,
  Add,
  Multiply,
  Maximum,
};

const char* op_name(OpKind k);
std::optional<OpKind> parse_op_name(const std::string& s);
int op_arity(OpKind k);  // -1 for leaf ops (no operands)

struct OpAttrs {
  // dims: transpose permutation / broadcast inserted dims / reduce dims /
  // concat dim (singleton). All 1-based.
  std::vector<int64_t> dims;
  // slice / update-slice limits, one [start,end) per axis.
  std::vector<std::pair<int64_t, int64_t>> limits;
  // dot contracting dims (lhs, rhs), 1-based.
  int64_t contract_lhs = 0;
  int64_t contract_rhs = 0;
  int64_t param_index = -1;            // Parameter
  std::vector<uint8_t> literal;        // Constant payload (row-major bytes)
  TensorType target;                   // Reshape/BitcastConvert/Convert/leaf declared type

  bool operator==(const OpAttrs& o) const {
    return dims == o.dims && limits == o.limits && contract_lhs == o.contract_lhs &&
           contract_rhs == o.contract_rhs && param_index == o.param_index && literal == o.literal &&
           target == o.target;
  }
};

// Output type of kind(attrs) applied to operand_types; throws Error on any
// shape/attribute incompatibility. Deterministic.
TensorType infer_type(OpKind kind, const OpAttrs& attrs, const std::vector<TensorType>& operand_types);

struct KernelNode {
  std::string id;
  OpKind kind = OpKind::Parameter;
  OpAttrs attrs;
  TensorType type;                 // checked against infer_type at build time
  std::vector<int32_t> operands;   // indices of defining nodes
};

struct KernelGraph {
  std::vector<KernelNode> nodes;   // in def-before-use order
  int32_t root = -1;
  std::vector<int32_t> params;     // node index per parameter position
  // Tiled layout annotations {T(t1,...)}, recorded at parse time for
  // parameters and the root, expanded by expand_tiled_layout.
  std::unordered_map<int32_t, std::vector<int64_t>> layouts;

  const KernelNode& root_node() const { return nodes[root]; }
  std::vector<TensorType> param_types() const;
  int64_t input_bytes() const;   // mem(X)
  int64_t output_bytes() const;  // mem(G(X))

  // Appends a checked node; returns its index.
  int32_t add(const std::string& id, OpKind kind, OpAttrs attrs, std::vector<int32_t> operands);
  std::string to_text(const std::string& name = "e") const;
};

// Parses the kernel text format. Reports syntax/type errors with line numbers.
KernelGraph parse_graph(const std::string& text);

// Rewrites every {T(...)}-annotated parameter/root into the
// reshape/transpose/reshape chain that makes byte-flattening see
// tile-contiguous order. The result carries no annotations.
KernelGraph expand_tiled_layout(const KernelGraph& g);

// Golden reference interpreter: pure topological evaluation.
TensorValue evaluate(const KernelGraph& g, const std::vector<TensorValue>& inputs);

// Evaluates a single operator application (used by the interpreter and the
// instruction executor).
TensorValue eval_op(OpKind kind, const OpAttrs& attrs, const std::vector<TensorValue>& operands);

}  // namespace tkc

#endif
