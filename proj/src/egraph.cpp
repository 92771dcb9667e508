#include "tkc/egraph.hpp"

namespace tkc {

uint64_t hash_mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

uint64_t hash_type(const TensorType& t) {
  uint64_t h = static_cast<uint64_t>(t.base) + 1;
  for (int64_t d : t.shape) h = hash_mix(h, static_cast<uint64_t>(d));
  return h;
}

uint64_t hash_attrs(const OpAttrs& a) {
  uint64_t h = 0xabcd;
  for (int64_t d : a.dims) h = hash_mix(h, static_cast<uint64_t>(d));
  for (auto& [s, e] : a.limits) h = hash_mix(hash_mix(h, s), e);
  h = hash_mix(h, static_cast<uint64_t>(a.contract_lhs));
  h = hash_mix(h, static_cast<uint64_t>(a.contract_rhs));
  h = hash_mix(h, static_cast<uint64_t>(a.param_index + 1));
  for (uint8_t b : a.literal) h = hash_mix(h, b);
  h = hash_mix(h, hash_type(a.target));
  return h;
}

bool ENode::operator==(const ENode& o) const {
  return tag == o.tag && kind == o.kind && instr == o.instr && alpha == o.alpha && buffer == o.buffer &&
         input_index == o.input_index && type == o.type && children == o.children &&
         (tag != Tag::Op || attrs == o.attrs);
}

uint64_t ENode::hash() const {
  uint64_t h = static_cast<uint64_t>(tag);
  h = hash_mix(h, static_cast<uint64_t>(kind));
  h = hash_mix(h, static_cast<uint64_t>(instr + 1));
  for (int64_t a : alpha) h = hash_mix(h, static_cast<uint64_t>(a));
  h = hash_mix(h, static_cast<uint64_t>(buffer + 1));
  h = hash_mix(h, static_cast<uint64_t>(input_index + 1));
  h = hash_mix(h, hash_type(type));
  for (ClassId c : children) h = hash_mix(h, static_cast<uint64_t>(c));
  if (tag == Tag::Op) h = hash_mix(h, hash_attrs(attrs));
  return h;
}

ClassId EGraph::find(ClassId c) const {
  while (_uf[c] != c) c = _uf[c];
  return c;
}

int32_t EGraph::class_count() const {
  int32_t n = 0;
  for (size_t i = 0; i < _classes.size(); ++i)
    if (find(static_cast<ClassId>(i)) == static_cast<ClassId>(i)) ++n;
  return n;
}

void EGraph::canonicalize(ENode& n) const {
  for (ClassId& c : n.children) c = find(c);
}

ClassId EGraph::lookup(const ENode& n) const {
  auto it = _hashcons.find(n.hash());
  if (it == _hashcons.end()) return -1;
  for (auto& [nid, cid] : it->second)
    if (_nodes[nid] == n) return find(cid);
  return -1;
}

ClassId EGraph::add(ENode n) {
  canonicalize(n);
  ClassId existing = lookup(n);
  if (existing >= 0) return existing;

  int32_t nid = static_cast<int32_t>(_nodes.size());
  ClassId cid = static_cast<ClassId>(_classes.size());
  EClass c;
  c.type = n.type;
  c.has_input = n.tag == ENode::Tag::Input;
  c.members.push_back(nid);
  _hashcons[n.hash()].push_back({nid, cid});
  _nodes.push_back(std::move(n));
  _classes.push_back(std::move(c));
  _uf.push_back(cid);
  ++_version;
  return cid;
}

bool EGraph::merge(ClassId a, ClassId b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (_classes[a].type != _classes[b].type)
    throw Error("e-graph merge of differently typed classes: " + _classes[a].type.str() + " vs " +
                _classes[b].type.str());
  if (b < a) std::swap(a, b);  // lower id wins: deterministic representatives
  _uf[b] = a;
  auto& ma = _classes[a].members;
  auto& mb = _classes[b].members;
  ma.insert(ma.end(), mb.begin(), mb.end());
  mb.clear();
  mb.shrink_to_fit();
  _classes[a].has_input = _classes[a].has_input || _classes[b].has_input;
  _classes[a].is_const = _classes[a].is_const || _classes[b].is_const;
  _dirty = true;
  ++_version;
  return true;
}

void EGraph::rebuild() {
  if (!_dirty) return;
  // Full-rescan congruence restoration: re-canonicalize every node, merge
  // hash collisions, repeat until stable. Simple and adequate at this scale.
  bool changed = true;
  while (changed) {
    changed = false;
    _hashcons.clear();
    std::vector<ClassId> node_class(_nodes.size(), -1);
    for (size_t c = 0; c < _classes.size(); ++c) {
      if (find(static_cast<ClassId>(c)) != static_cast<ClassId>(c)) continue;
      for (int32_t nid : _classes[c].members) node_class[nid] = static_cast<ClassId>(c);
    }
    for (size_t nid = 0; nid < _nodes.size(); ++nid) {
      if (node_class[nid] < 0) continue;  // dropped duplicate
      canonicalize(_nodes[nid]);
      ClassId self = node_class[nid];
      uint64_t h = _nodes[nid].hash();
      auto& bucket = _hashcons[h];
      bool dup = false;
      for (auto& [other, ocid] : bucket) {
        if (_nodes[other] == _nodes[nid]) {
          ClassId oc = find(ocid);
          if (oc != self) {
            merge(oc, self);
            changed = true;
          }
          dup = true;
          break;
        }
      }
      if (!dup) bucket.push_back({static_cast<int32_t>(nid), self});
    }
    if (changed) continue;
    // compact member lists: drop structurally identical duplicates
    std::unordered_map<uint64_t, std::vector<int32_t>> bucket;
    for (size_t c = 0; c < _classes.size(); ++c) {
      if (find(static_cast<ClassId>(c)) != static_cast<ClassId>(c)) continue;
      auto& mem = _classes[c].members;
      bucket.clear();
      std::vector<int32_t> keep;
      for (int32_t nid : mem) {
        uint64_t h = _nodes[nid].hash();
        bool seen = false;
        for (int32_t k : bucket[h])
          if (_nodes[k] == _nodes[nid]) {
            seen = true;
            break;
          }
        if (!seen) {
          bucket[h].push_back(nid);
          keep.push_back(nid);
        }
      }
      mem = std::move(keep);
    }
  }
  if (root >= 0) root = find(root);
  _dirty = false;
}

}  // namespace tkc
