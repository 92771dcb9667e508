#include <algorithm>
#include <sstream>

#include "tkc/egraph.hpp"
#include "tkc/pii.hpp"

namespace tkc {

int32_t PiiGraph::instr_count() const {
  int32_t n = 0;
  for (const PiiNode& nd : nodes)
    if (!nd.is_leaf()) ++n;
  return n;
}

uint64_t PiiGraph::structural_hash() const {
  // bottom-up so the hash is independent of node numbering; nodes are stored
  // defs-first, which makes one forward pass enough
  std::vector<uint64_t> h(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    const PiiNode& n = nodes[i];
    uint64_t x = 0x5eed + static_cast<uint64_t>(n.kind);
    x = hash_mix(x, static_cast<uint64_t>(n.instr + 1));
    for (int64_t a : n.alpha) x = hash_mix(x, static_cast<uint64_t>(a));
    x = hash_mix(x, static_cast<uint64_t>(n.buffer + 1));
    x = hash_mix(x, static_cast<uint64_t>(n.input_index + 1));
    for (uint8_t b : n.value.bytes) x = hash_mix(x, b);
    for (int32_t c : n.children) x = hash_mix(x, h[c]);
    h[i] = x;
  }
  return hash_mix(h[root], static_cast<uint64_t>(instr_count()));
}

std::vector<std::vector<int32_t>> PiiGraph::users() const {
  std::vector<std::vector<int32_t>> u(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i)
    for (int32_t c : nodes[i].children) u[c].push_back(static_cast<int32_t>(i));
  return u;
}

namespace {

// expected input buffer for child slot `i` of node `n`
int32_t expected_buffer(const IsaDescription& isa, const PiiNode& n, size_t i) {
  switch (n.kind) {
    case PiiNode::Kind::Instr: return isa.instructions[n.instr].inputs[i].buffer;
    case PiiNode::Kind::SliceH:
    case PiiNode::Kind::ConcatH: return n.buffer;
    default: throw Error("leaf pii nodes have no operands");
  }
}

}  // namespace

int32_t PiiGraph::add_instr(const IsaDescription& isa, int32_t instr, std::vector<int64_t> alpha,
                            std::vector<int32_t> children) {
  const AbstractInstruction& ai = isa.instructions.at(instr);
  if (children.size() != ai.inputs.size())
    throw Error("pii node " + ai.name + " wants " + std::to_string(ai.inputs.size()) + " operands");
  PiiNode n;
  n.kind = PiiNode::Kind::Instr;
  n.instr = instr;
  n.alpha = std::move(alpha);
  n.buffer = ai.output.buffer;
  n.children = std::move(children);
  for (size_t i = 0; i < n.children.size(); ++i) {
    const PiiNode& c = nodes.at(n.children[i]);
    if (c.buffer != expected_buffer(isa, n, i))
      throw Error("buffer discipline violated on operand " + std::to_string(i) + " of " + ai.name);
  }
  KernelGraph g = instantiate_computation(isa, ai, n.alpha);
  n.type = g.root_node().type;
  nodes.push_back(std::move(n));
  return static_cast<int32_t>(nodes.size()) - 1;
}

int32_t PiiGraph::add_slice_h(const IsaDescription& isa, int32_t buffer, int64_t n_in, int64_t s, int64_t e,
                              int32_t child) {
  const TensorBuffer& buf = isa.buffers.at(buffer);
  if (buf.access_rank() != 1) throw Error("identity slice needs a 1-D access buffer");
  if (!(0 <= s && s < e && e <= n_in)) throw Error("identity slice window out of range");
  PiiNode n;
  n.kind = PiiNode::Kind::SliceH;
  n.alpha = {n_in, s, e};
  n.buffer = buffer;
  n.children = {child};
  const PiiNode& c = nodes.at(child);
  if (c.buffer != buffer || c.type != buf.slice_type(std::vector<int64_t>{n_in}))
    throw Error("identity slice operand mismatch");
  n.type = buf.slice_type(std::vector<int64_t>{e - s});
  nodes.push_back(std::move(n));
  return static_cast<int32_t>(nodes.size()) - 1;
}

int32_t PiiGraph::add_concat_h(const IsaDescription& isa, int32_t buffer, int32_t c1, int32_t c2) {
  const TensorBuffer& buf = isa.buffers.at(buffer);
  if (buf.access_rank() != 1) throw Error("identity concat needs a 1-D access buffer");
  const PiiNode& a = nodes.at(c1);
  const PiiNode& b = nodes.at(c2);
  if (a.buffer != buffer || b.buffer != buffer) throw Error("identity concat operand buffer mismatch");
  int64_t n1 = a.type.shape.at(0), n2 = b.type.shape.at(0);
  PiiNode n;
  n.kind = PiiNode::Kind::ConcatH;
  n.alpha = {n1, n2};
  n.buffer = buffer;
  n.children = {c1, c2};
  n.type = buf.slice_type(std::vector<int64_t>{n1 + n2});
  nodes.push_back(std::move(n));
  return static_cast<int32_t>(nodes.size()) - 1;
}

int32_t PiiGraph::add_input(const IsaDescription&, int32_t input_index, int64_t byte_size) {
  PiiNode n;
  n.kind = PiiNode::Kind::Input;
  n.buffer = 0;
  n.input_index = input_index;
  n.type = TensorType(ScalarBase::U8, {byte_size});
  nodes.push_back(std::move(n));
  return static_cast<int32_t>(nodes.size()) - 1;
}

int32_t PiiGraph::add_const(const IsaDescription&, TensorValue value) {
  PiiNode n;
  n.kind = PiiNode::Kind::Const;
  n.buffer = 0;
  n.type = TensorType(ScalarBase::U8, {value.type.byte_size()});
  n.value = byte_flatten(value);
  nodes.push_back(std::move(n));
  return static_cast<int32_t>(nodes.size()) - 1;
}

KernelGraph PiiGraph::substitute(const IsaDescription& isa) const {
  KernelGraph g;
  std::vector<int32_t> out(nodes.size(), -1);
  // parameters first, ordered by input index
  std::vector<std::pair<int32_t, int32_t>> inputs;  // (input_index, node)
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == PiiNode::Kind::Input) inputs.push_back({nodes[i].input_index, static_cast<int32_t>(i)});
  std::sort(inputs.begin(), inputs.end());
  for (auto& [pi, ni] : inputs) {
    OpAttrs a;
    a.param_index = pi;
    a.target = nodes[ni].type;
    out[ni] = g.add("x" + std::to_string(pi), OpKind::Parameter, a, {});
  }

  for (size_t i = 0; i < nodes.size(); ++i) {
    const PiiNode& n = nodes[i];
    std::string base = "n" + std::to_string(i);
    switch (n.kind) {
      case PiiNode::Kind::Input:
        break;
      case PiiNode::Kind::Const: {
        OpAttrs a;
        a.target = n.value.type;
        a.literal = n.value.bytes;
        out[i] = g.add(base, OpKind::Constant, a, {});
        break;
      }
      case PiiNode::Kind::SliceH: {
        OpAttrs a;
        const PiiNode& c = nodes[n.children[0]];
        a.limits.emplace_back(n.alpha[1], n.alpha[2]);
        for (size_t d = 1; d < c.type.shape.size(); ++d) a.limits.emplace_back(0, c.type.shape[d]);
        out[i] = g.add(base, OpKind::Slice, a, {out[n.children[0]]});
        break;
      }
      case PiiNode::Kind::ConcatH: {
        OpAttrs a;
        a.dims = {1};
        out[i] = g.add(base, OpKind::Concat, a, {out[n.children[0]], out[n.children[1]]});
        break;
      }
      case PiiNode::Kind::Instr: {
        const AbstractInstruction& ai = isa.instructions[n.instr];
        KernelGraph sub = instantiate_computation(isa, ai, n.alpha);
        std::vector<int32_t> map(sub.nodes.size(), -1);
        for (size_t k = 0; k < sub.nodes.size(); ++k) {
          const KernelNode& sn = sub.nodes[k];
          if (sn.kind == OpKind::Parameter) {
            map[k] = out[n.children[sn.attrs.param_index]];
            continue;
          }
          std::vector<int32_t> ops;
          for (int32_t o : sn.operands) ops.push_back(map[o]);
          map[k] = g.add(base + "." + sn.id, sn.kind, sn.attrs, std::move(ops));
        }
        out[i] = map[sub.root];
        break;
      }
    }
  }
  g.root = out[root];
  return g;
}

std::string PiiGraph::to_text(const IsaDescription& isa) const {
  std::ostringstream os;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const PiiNode& n = nodes[i];
    os << (static_cast<int32_t>(i) == root ? "root " : "     ") << i << ": ";
    switch (n.kind) {
      case PiiNode::Kind::Instr: os << isa.instructions[n.instr].name; break;
      case PiiNode::Kind::SliceH: os << "slice^H@" << isa.buffers[n.buffer].name; break;
      case PiiNode::Kind::ConcatH: os << "concat^H@" << isa.buffers[n.buffer].name; break;
      case PiiNode::Kind::Input: os << "input#" << n.input_index; break;
      case PiiNode::Kind::Const: os << "const[" << n.value.bytes.size() << "B]"; break;
    }
    if (!n.alpha.empty()) {
      os << " alpha=(";
      for (size_t a = 0; a < n.alpha.size(); ++a) os << (a ? "," : "") << n.alpha[a];
      os << ")";
    }
    os << " -> " << isa.buffers[n.buffer].name << " : " << n.type.str();
    if (!n.children.empty()) {
      os << " (";
      for (size_t c = 0; c < n.children.size(); ++c) os << (c ? "," : "") << n.children[c];
      os << ")";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace tkc
