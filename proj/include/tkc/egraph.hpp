#ifndef TKC_EGRAPH_HPP
#define TKC_EGRAPH_HPP

#include <unordered_map>

#include "tkc/isa.hpp"

namespace tkc {

using ClassId = int32_t;

// Hash helpers shared by the e-graph and the pii arena.
uint64_t hash_mix(uint64_t h, uint64_t v);
uint64_t hash_attrs(const OpAttrs& a);
uint64_t hash_type(const TensorType& t);

// An e-node is a concrete tensor operator, a partially instantiated
// instruction (alpha fixed, beta free), an identity instruction, or a
// flattened-input leaf. Children are e-class ids.
struct ENode {
  enum class Tag : uint8_t { Op, Pii, SliceH, ConcatH, Input };
  Tag tag = Tag::Op;
  OpKind kind = OpKind::Copy;     // Op
  OpAttrs attrs;                  // Op
  int32_t instr = -1;             // Pii: instruction index in the ISA
  std::vector<int64_t> alpha;     // Pii / SliceH {n,s,e} / ConcatH {n1,n2}
  int32_t buffer = -1;            // Pii/SliceH/ConcatH output buffer; Input = 0
  int32_t input_index = -1;       // Input
  TensorType type;
  std::vector<ClassId> children;

  bool is_pii_like() const { return tag == Tag::Pii || tag == Tag::SliceH || tag == Tag::ConcatH; }
  bool operator==(const ENode& o) const;
  uint64_t hash() const;
};

struct EClass {
  std::vector<int32_t> members;  // node ids (canonical class only)
  TensorType type;
  bool is_const = false;
  bool has_input = false;
};

// Union-find e-graph with hash-consing; congruence is restored by rebuild().
class EGraph {
 public:
  ClassId root = -1;

  ClassId add(ENode n);             // canonicalizes, dedups, returns class
  bool merge(ClassId a, ClassId b); // defers congruence repair to rebuild()
  void rebuild();

  ClassId find(ClassId c) const;
  const EClass& cls(ClassId c) const { return _classes[find(c)]; }
  EClass& cls_mut(ClassId c) { return _classes[find(c)]; }
  const ENode& node(int32_t id) const { return _nodes[id]; }
  int32_t node_count() const { return static_cast<int32_t>(_nodes.size()); }
  int32_t class_count() const;           // canonical classes
  int32_t class_slots() const { return static_cast<int32_t>(_classes.size()); }
  bool is_canonical(ClassId c) const { return find(c) == c; }

  // Change counters let saturation detect a fixpoint.
  uint64_t version() const { return _version; }

 private:
  std::vector<ENode> _nodes;
  std::vector<ClassId> _uf;
  std::vector<EClass> _classes;
  std::unordered_map<uint64_t, std::vector<std::pair<int32_t, ClassId>>> _hashcons;
  uint64_t _version = 0;
  bool _dirty = false;

  ClassId lookup(const ENode& n) const;
  void canonicalize(ENode& n) const;
};

}  // namespace tkc

#endif
