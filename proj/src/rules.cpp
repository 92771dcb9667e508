#include <algorithm>
#include <cmath>
#include <optional>

#include "tkc/rules.hpp"
#include "tkc/verify.hpp"

namespace tkc {

namespace {

// -- small deterministic rng for samplers ------------------------------------

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
  int64_t range(int64_t lo, int64_t hi) {  // inclusive
    return lo + static_cast<int64_t>(next() % static_cast<uint64_t>(hi - lo + 1));
  }
  ScalarBase base() {
    static const ScalarBase all[] = {ScalarBase::U8, ScalarBase::I8, ScalarBase::I32,
                                     ScalarBase::U64, ScalarBase::F32, ScalarBase::BF16};
    return all[next() % 6];
  }
  std::vector<int64_t> shape(int min_rank = 1, int max_rank = 3, int64_t max_dim = 6) {
    std::vector<int64_t> s(range(min_rank, max_rank));
    for (auto& d : s) d = range(1, max_dim);
    return s;
  }
};

int64_t floordiv(int64_t a, int64_t b) {
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int64_t ceildiv(int64_t a, int64_t b) { return -floordiv(-a, b); }

// -- e-graph construction helpers --------------------------------------------

ClassId add_op(EGraph& eg, OpKind kind, OpAttrs attrs, std::vector<ClassId> children) {
  std::vector<TensorType> ts;
  ts.reserve(children.size());
  for (ClassId c : children) ts.push_back(eg.cls(c).type);
  ENode n;
  n.tag = ENode::Tag::Op;
  n.kind = kind;
  n.type = infer_type(kind, attrs, ts);
  n.attrs = std::move(attrs);
  n.children = std::move(children);
  return eg.add(std::move(n));
}

bool full_limits_after_first(const OpAttrs& a, const TensorType& child) {
  for (size_t d = 1; d < a.limits.size(); ++d)
    if (a.limits[d].first != 0 || a.limits[d].second != child.shape[d]) return false;
  return true;
}

// rows of `t` when viewed as a slice of buffer `b`, if representable
std::optional<int64_t> buffer_rows(const TensorBuffer& b, const TensorType& t) {
  if (b.access_rank() != 1) return std::nullopt;
  if (t.base != b.base) return std::nullopt;
  if (t.rank() != 1 + static_cast<int64_t>(b.elem_shape.size())) return std::nullopt;
  for (size_t i = 0; i < b.elem_shape.size(); ++i)
    if (t.shape[1 + i] != b.elem_shape[i]) return std::nullopt;
  int64_t k = t.shape[0];
  if (k < 1 || k > b.access_shape[0]) return std::nullopt;
  return k;
}

TensorType flat_u8(const TensorType& t) { return TensorType(ScalarBase::U8, {t.byte_size()}); }

// byte view type for bitcast-to-u8 (appends the width dim if width > 1)
TensorType byte_view(const TensorType& t) {
  int64_t k = scalar_width(t.base);
  std::vector<int64_t> s = t.shape;
  if (k > 1) s.push_back(k);
  return TensorType(ScalarBase::U8, std::move(s));
}

// -- shared sampler pieces ----------------------------------------------------

TensorType random_type(Rng& r, int min_rank = 1, int max_rank = 3, int64_t max_dim = 6) {
  return TensorType(r.base(), r.shape(min_rank, max_rank, max_dim));
}

void add_param(KernelGraph& g, const TensorType& t, int index) {
  OpAttrs a;
  a.param_index = index;
  a.target = t;
  g.add("p" + std::to_string(index), OpKind::Parameter, a, {});
}

}  // namespace

// ---------------------------------------------------------------------------
// Baseline IR-to-IR rules

std::vector<RewriteRule> baseline_ir_rules() {
  std::vector<RewriteRule> rules;

  auto first_member = [](const EGraph& eg, ClassId c, int32_t nid) {
    return !eg.cls(c).members.empty() && eg.cls(c).members[0] == nid;
  };

  {  // slice(slice(x)) -> slice(x) with shifted limits
    RewriteRule r;
    r.name = "slice-of-slice";
    r.lhs_desc = "slice[s1:e1](slice[s2:e2](x))";
    r.rhs_desc = "slice[s1+s2:e1+s2](x)";
    r.lhs_ops = {OpKind::Slice};
    r.rhs_ops = {OpKind::Slice};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Slice) return;
      ClassId cc = eg.find(n.children[0]);
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::Slice) continue;
        OpAttrs a;
        for (size_t d = 0; d < n.attrs.limits.size(); ++d)
          a.limits.emplace_back(n.attrs.limits[d].first + m.attrs.limits[d].first,
                                n.attrs.limits[d].second + m.attrs.limits[d].first);
        ClassId child = m.children[0];
        out.push_back([c, a, child](EGraph& g) { g.merge(c, add_op(g, OpKind::Slice, a, {child})); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 3, 8);
      OpAttrs inner, outer, fused;
      for (int64_t dim : t.shape) {
        int64_t s2 = r.range(0, dim - 1), e2 = r.range(s2 + 1, dim);
        int64_t s1 = r.range(0, e2 - s2 - 1), e1 = r.range(s1 + 1, e2 - s2);
        inner.limits.emplace_back(s2, e2);
        outer.limits.emplace_back(s1, e1);
        fused.limits.emplace_back(s1 + s2, e1 + s2);
      }
      add_param(lhs, t, 0);
      lhs.root = lhs.add("o", OpKind::Slice, outer, {lhs.add("i", OpKind::Slice, inner, {0})});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("f", OpKind::Slice, fused, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // slice of update_slice when windows are disjoint on some axis
    RewriteRule r;
    r.name = "slice-of-update-slice";
    r.lhs_desc = "slice[a:b](update_slice[s:e](x,v)), [a:b) disjoint [s:e)";
    r.rhs_desc = "slice[a:b](x)";
    r.lhs_ops = {OpKind::Slice, OpKind::UpdateSlice};
    r.rhs_ops = {OpKind::Slice};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Slice) return;
      ClassId cc = eg.find(n.children[0]);
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::UpdateSlice) continue;
        bool disjoint = false;
        for (size_t d = 0; d < n.attrs.limits.size(); ++d)
          if (n.attrs.limits[d].second <= m.attrs.limits[d].first ||
              m.attrs.limits[d].second <= n.attrs.limits[d].first)
            disjoint = true;
        if (!disjoint) continue;
        OpAttrs a = n.attrs;
        ClassId child = m.children[0];
        out.push_back([c, a, child](EGraph& g) { g.merge(c, add_op(g, OpKind::Slice, a, {child})); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 8);
      if (t.shape[0] < 2) t.shape[0] = 2;
      // split axis 0 at m: read below m, write above m
      int64_t m = r.range(1, t.shape[0] - 1);
      OpAttrs up, rd;
      up.limits.emplace_back(m, t.shape[0]);
      rd.limits.emplace_back(0, m);
      TensorType vt(t.base, {t.shape[0] - m});
      for (size_t d = 1; d < t.shape.size(); ++d) {
        up.limits.emplace_back(0, t.shape[d]);
        rd.limits.emplace_back(0, t.shape[d]);
        vt.shape.push_back(t.shape[d]);
      }
      add_param(lhs, t, 0);
      add_param(lhs, vt, 1);
      lhs.root = lhs.add("s", OpKind::Slice, rd, {lhs.add("u", OpKind::UpdateSlice, up, {0, 1})});
      add_param(rhs, t, 0);
      add_param(rhs, vt, 1);
      rhs.root = rhs.add("s", OpKind::Slice, rd, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // update_slice varying on one axis -> concat(concat(slice, v), slice)
    RewriteRule r;
    r.name = "update-slice-expand";
    r.lhs_desc = "update_slice[s:e](x,v)";
    r.rhs_desc = "concat(concat(slice[0:s](x), v), slice[e:n](x))";
    r.lhs_ops = {OpKind::UpdateSlice};
    r.rhs_ops = {OpKind::Concat, OpKind::Slice};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::UpdateSlice) return;
      const TensorType& xt = eg.cls(n.children[0]).type;
      int varying = -1;
      for (size_t d = 0; d < n.attrs.limits.size(); ++d) {
        if (n.attrs.limits[d].first == 0 && n.attrs.limits[d].second == xt.shape[d]) continue;
        if (varying >= 0) return;  // more than one varying axis
        varying = static_cast<int>(d);
      }
      ClassId x = n.children[0], v = n.children[1];
      if (varying < 0) {
        out.push_back([c, v](EGraph& g) { g.merge(c, g.find(v)); });
        return;
      }
      int64_t s = n.attrs.limits[varying].first;
      int64_t e = n.attrs.limits[varying].second;
      int64_t dim = xt.shape[varying];
      int vd = varying;
      OpAttrs pre, post;
      for (size_t d = 0; d < n.attrs.limits.size(); ++d) {
        pre.limits.emplace_back(0, static_cast<int>(d) == vd ? s : xt.shape[d]);
        post.limits.emplace_back(static_cast<int>(d) == vd ? e : 0, xt.shape[d]);
      }
      out.push_back([c, x, v, s, e, dim, vd, pre, post](EGraph& g) {
        OpAttrs cat;
        cat.dims = {vd + 1};
        ClassId acc = v;
        if (s > 0) acc = add_op(g, OpKind::Concat, cat, {add_op(g, OpKind::Slice, pre, {x}), acc});
        if (e < dim) acc = add_op(g, OpKind::Concat, cat, {acc, add_op(g, OpKind::Slice, post, {x})});
        g.merge(c, acc);
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 8);
      if (t.shape[0] < 3) t.shape[0] = 3;
      int64_t s = r.range(1, t.shape[0] - 2), e = r.range(s + 1, t.shape[0] - 1);
      OpAttrs up, pre, post;
      up.limits.emplace_back(s, e);
      pre.limits.emplace_back(0, s);
      post.limits.emplace_back(e, t.shape[0]);
      TensorType vt(t.base, {e - s});
      for (size_t d = 1; d < t.shape.size(); ++d) {
        up.limits.emplace_back(0, t.shape[d]);
        pre.limits.emplace_back(0, t.shape[d]);
        post.limits.emplace_back(0, t.shape[d]);
        vt.shape.push_back(t.shape[d]);
      }
      add_param(lhs, t, 0);
      add_param(lhs, vt, 1);
      lhs.root = lhs.add("u", OpKind::UpdateSlice, up, {0, 1});
      add_param(rhs, t, 0);
      add_param(rhs, vt, 1);
      OpAttrs cat;
      cat.dims = {1};
      int32_t a = rhs.add("pre", OpKind::Slice, pre, {0});
      int32_t b = rhs.add("c1", OpKind::Concat, cat, {a, 1});
      int32_t d2 = rhs.add("post", OpKind::Slice, post, {0});
      rhs.root = rhs.add("c2", OpKind::Concat, cat, {b, d2});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // concat of adjacent slices of the same tensor
    RewriteRule r;
    r.name = "concat-adjacent-slices";
    r.lhs_desc = "concat_d(slice[s:m](x), slice[m:e](x))";
    r.rhs_desc = "slice[s:e](x)";
    r.lhs_ops = {OpKind::Concat, OpKind::Slice};
    r.rhs_ops = {OpKind::Slice};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Concat) return;
      int64_t k = n.attrs.dims[0] - 1;
      for (int32_t aid : eg.cls(n.children[0]).members) {
        const ENode& a = eg.node(aid);
        if (a.tag != ENode::Tag::Op || a.kind != OpKind::Slice) continue;
        for (int32_t bid : eg.cls(n.children[1]).members) {
          const ENode& b = eg.node(bid);
          if (b.tag != ENode::Tag::Op || b.kind != OpKind::Slice) continue;
          if (eg.find(a.children[0]) != eg.find(b.children[0])) continue;
          bool ok = a.attrs.limits.size() == b.attrs.limits.size();
          for (size_t d = 0; ok && d < a.attrs.limits.size(); ++d) {
            if (static_cast<int64_t>(d) == k)
              ok = a.attrs.limits[d].second == b.attrs.limits[d].first;
            else
              ok = a.attrs.limits[d] == b.attrs.limits[d];
          }
          if (!ok) continue;
          OpAttrs sa = a.attrs;
          sa.limits[k].second = b.attrs.limits[k].second;
          ClassId x = a.children[0];
          out.push_back([c, sa, x](EGraph& g) { g.merge(c, add_op(g, OpKind::Slice, sa, {x})); });
        }
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 8);
      if (t.shape[0] < 2) t.shape[0] = 2;
      int64_t s = r.range(0, t.shape[0] - 2), e = r.range(s + 2, t.shape[0]), m = r.range(s + 1, e - 1);
      OpAttrs la, lb, lf;
      la.limits.emplace_back(s, m);
      lb.limits.emplace_back(m, e);
      lf.limits.emplace_back(s, e);
      for (size_t d = 1; d < t.shape.size(); ++d) {
        la.limits.emplace_back(0, t.shape[d]);
        lb.limits.emplace_back(0, t.shape[d]);
        lf.limits.emplace_back(0, t.shape[d]);
      }
      OpAttrs cat;
      cat.dims = {1};
      add_param(lhs, t, 0);
      lhs.root = lhs.add("c", OpKind::Concat, cat,
                         {lhs.add("a", OpKind::Slice, la, {0}), lhs.add("b", OpKind::Slice, lb, {0})});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("f", OpKind::Slice, lf, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // reshape(reshape(x)) -> reshape(x); identity reshape folds to x
    RewriteRule r;
    r.name = "reshape-fuse";
    r.lhs_desc = "reshape(reshape(x))";
    r.rhs_desc = "reshape(x)";
    r.lhs_ops = {OpKind::Reshape};
    r.rhs_ops = {OpKind::Reshape};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Reshape) return;
      ClassId cc = eg.find(n.children[0]);
      if (eg.cls(cc).type == n.type) {
        out.push_back([c, cc](EGraph& g) { g.merge(c, cc); });
      }
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::Reshape) continue;
        OpAttrs a;
        a.target = n.type;
        ClassId x = m.children[0];
        out.push_back([c, a, x](EGraph& g) { g.merge(c, add_op(g, OpKind::Reshape, a, {x})); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 3, 6);
      int64_t n = t.elem_count();
      TensorType mid(t.base, {n});
      TensorType fin(t.base, n % 2 == 0 ? std::vector<int64_t>{2, n / 2} : std::vector<int64_t>{n, 1});
      OpAttrs am, af;
      am.target = mid;
      af.target = fin;
      add_param(lhs, t, 0);
      lhs.root = lhs.add("o", OpKind::Reshape, af, {lhs.add("i", OpKind::Reshape, am, {0})});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("f", OpKind::Reshape, af, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // bitcast inverse pair cancels; identity bitcast folds
    RewriteRule r;
    r.name = "bitcast-cancel";
    r.lhs_desc = "bitcast_convert(bitcast_convert(x)) with outer type = type(x)";
    r.rhs_desc = "x";
    r.lhs_ops = {OpKind::BitcastConvert};
    r.rhs_ops = {};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::BitcastConvert) return;
      ClassId cc = eg.find(n.children[0]);
      if (eg.cls(cc).type == n.type) {
        out.push_back([c, cc](EGraph& g) { g.merge(c, cc); });
        return;
      }
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::BitcastConvert) continue;
        ClassId x = eg.find(m.children[0]);
        if (eg.cls(x).type == n.type)
          out.push_back([c, x](EGraph& g) { g.merge(c, x); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 6);
      add_param(lhs, t, 0);
      OpAttrs to_bytes, back;
      to_bytes.target = byte_view(t);
      back.target = t;
      lhs.root = lhs.add("b", OpKind::BitcastConvert, back,
                         {lhs.add("a", OpKind::BitcastConvert, to_bytes, {0})});
      add_param(rhs, t, 0);
      OpAttrs copy;
      rhs.root = rhs.add("c", OpKind::Copy, copy, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // transpose(transpose(x)) composes; identity permutation folds
    RewriteRule r;
    r.name = "transpose-compose";
    r.lhs_desc = "transpose_p(transpose_q(x))";
    r.rhs_desc = "transpose_{q.p}(x)";
    r.lhs_ops = {OpKind::Transpose};
    r.rhs_ops = {OpKind::Transpose};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Transpose) return;
      bool ident = true;
      for (size_t i = 0; i < n.attrs.dims.size(); ++i)
        if (n.attrs.dims[i] != static_cast<int64_t>(i) + 1) ident = false;
      ClassId cc = eg.find(n.children[0]);
      if (ident) {
        out.push_back([c, cc](EGraph& g) { g.merge(c, cc); });
        return;
      }
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::Transpose) continue;
        OpAttrs a;
        for (size_t i = 0; i < n.attrs.dims.size(); ++i) a.dims.push_back(m.attrs.dims[n.attrs.dims[i] - 1]);
        ClassId x = m.children[0];
        out.push_back([c, a, x](EGraph& g) { g.merge(c, add_op(g, OpKind::Transpose, a, {x})); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 2, 3, 6);
      std::vector<int64_t> p(t.rank()), q(t.rank());
      for (int64_t i = 0; i < t.rank(); ++i) p[i] = q[i] = i + 1;
      for (int64_t i = t.rank() - 1; i > 0; --i) {
        std::swap(p[i], p[r.range(0, i)]);
        std::swap(q[i], q[r.range(0, i)]);
      }
      OpAttrs aq, ap, af;
      aq.dims = q;
      ap.dims = p;
      for (int64_t i = 0; i < t.rank(); ++i) af.dims.push_back(q[p[i] - 1]);
      add_param(lhs, t, 0);
      lhs.root = lhs.add("o", OpKind::Transpose, ap, {lhs.add("i", OpKind::Transpose, aq, {0})});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("f", OpKind::Transpose, af, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // bitcast-to-bytes commutes out through reshape
    RewriteRule r;
    r.name = "byte-push";
    r.lhs_desc = "bitcast_convert_u8(reshape(x))";
    r.rhs_desc = "reshape(bitcast_convert_u8(x))";
    r.lhs_ops = {OpKind::BitcastConvert, OpKind::Reshape};
    r.rhs_ops = {OpKind::Reshape, OpKind::BitcastConvert};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::BitcastConvert) return;
      if (n.type.base != ScalarBase::U8) return;
      ClassId cc = eg.find(n.children[0]);
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::Reshape) continue;
        ClassId x = m.children[0];
        TensorType xt = eg.cls(x).type;
        OpAttrs bc, rs;
        bc.target = byte_view(xt);
        rs.target = n.type;
        out.push_back([c, bc, rs, x](EGraph& g) {
          g.merge(c, add_op(g, OpKind::Reshape, rs, {add_op(g, OpKind::BitcastConvert, bc, {x})}));
        });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 6);
      TensorType mid(t.base, {t.elem_count()});
      OpAttrs rs1, bc1;
      rs1.target = mid;
      bc1.target = byte_view(mid);
      add_param(lhs, t, 0);
      lhs.root = lhs.add("b", OpKind::BitcastConvert, bc1, {lhs.add("r", OpKind::Reshape, rs1, {0})});
      OpAttrs bc2, rs2;
      bc2.target = byte_view(t);
      rs2.target = byte_view(mid);
      add_param(rhs, t, 0);
      rhs.root = rhs.add("r", OpKind::Reshape, rs2, {rhs.add("b", OpKind::BitcastConvert, bc2, {0})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // reshape after bitcast-from-bytes commutes in
    RewriteRule r;
    r.name = "byte-pull";
    r.lhs_desc = "reshape(bitcast_convert(y: u8))";
    r.rhs_desc = "bitcast_convert(reshape(y))";
    r.lhs_ops = {OpKind::Reshape, OpKind::BitcastConvert};
    r.rhs_ops = {OpKind::BitcastConvert, OpKind::Reshape};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Reshape) return;
      ClassId cc = eg.find(n.children[0]);
      if (eg.cls(cc).type.base == ScalarBase::U8) return;  // plain byte reshape
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::BitcastConvert) continue;
        ClassId y = m.children[0];
        if (eg.cls(y).type.base != ScalarBase::U8) continue;
        OpAttrs rs, bc;
        rs.target = byte_view(n.type);
        bc.target = n.type;
        out.push_back([c, rs, bc, y](EGraph& g) {
          g.merge(c, add_op(g, OpKind::BitcastConvert, bc, {add_op(g, OpKind::Reshape, rs, {y})}));
        });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 2, 2, 6);
      if (scalar_width(t.base) == 1) t.base = ScalarBase::I32;
      TensorType bytes = byte_view(t);
      TensorType flatv(t.base, {t.elem_count()});
      OpAttrs bc1, rs1;
      bc1.target = t;
      rs1.target = flatv;
      add_param(lhs, bytes, 0);
      lhs.root = lhs.add("r", OpKind::Reshape, rs1, {lhs.add("b", OpKind::BitcastConvert, bc1, {0})});
      OpAttrs rs2, bc2;
      rs2.target = byte_view(flatv);
      bc2.target = flatv;
      add_param(rhs, bytes, 0);
      rhs.root = rhs.add("b", OpKind::BitcastConvert, bc2, {rhs.add("r", OpKind::Reshape, rs2, {0})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // dot against the identity matrix is a copy
    RewriteRule r;
    r.name = "dot-eye";
    r.lhs_desc = "dot(x, eye) | dot(eye, x)";
    r.rhs_desc = "copy(x)";
    r.lhs_ops = {OpKind::Dot, OpKind::Eye};
    r.rhs_ops = {OpKind::Copy};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Dot) return;
      if (n.attrs.contract_lhs != 2 || n.attrs.contract_rhs != 1) return;
      auto has_eye = [&](ClassId cl) {
        for (int32_t mid : eg.cls(cl).members)
          if (eg.node(mid).tag == ENode::Tag::Op && eg.node(mid).kind == OpKind::Eye) return true;
        return false;
      };
      for (int side = 0; side < 2; ++side) {
        ClassId x = n.children[1 - side], e = n.children[side];
        if (eg.cls(x).type.rank() != 2) continue;
        if (!has_eye(e)) continue;
        if (eg.cls(x).type != n.type) continue;
        out.push_back([c, x](EGraph& g) { g.merge(c, add_op(g, OpKind::Copy, OpAttrs{}, {x})); });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t(r.base(), {r.range(1, 6), r.range(1, 6)});
      bool left = r.next() & 1;
      int64_t m = left ? t.shape[0] : t.shape[1];
      OpAttrs ea;
      ea.target = TensorType(t.base, {m, m});
      OpAttrs da;
      da.contract_lhs = 2;
      da.contract_rhs = 1;
      add_param(lhs, t, 0);
      int32_t e = lhs.add("e", OpKind::Eye, ea, {});
      lhs.root = left ? lhs.add("d", OpKind::Dot, da, {e, 0}) : lhs.add("d", OpKind::Dot, da, {0, e});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("c", OpKind::Copy, OpAttrs{}, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // reduce over a dimension = dot against all-ones
    RewriteRule r;
    r.name = "reduce-to-dot-ones";
    r.lhs_desc = "reduce_[1](x) | reduce_[2](x) on rank-2 x";
    r.rhs_desc = "reshape(dot(ones, x)) | reshape(dot(x, ones))";
    r.lhs_ops = {OpKind::ReduceSum};
    r.rhs_ops = {OpKind::Reshape, OpKind::Dot, OpKind::Ones};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::ReduceSum) return;
      if (n.attrs.dims.size() != 1) return;
      ClassId x = n.children[0];
      TensorType xt = eg.cls(x).type;
      if (xt.rank() != 2) return;
      int64_t a = xt.shape[0], b = xt.shape[1];
      bool dim1 = n.attrs.dims[0] == 1;
      TensorType out_t = n.type;
      out.push_back([c, x, xt, a, b, dim1, out_t](EGraph& g) {
        OpAttrs oa, da, ra;
        da.contract_lhs = 2;
        da.contract_rhs = 1;
        ra.target = out_t;
        if (dim1) {
          oa.target = TensorType(xt.base, {1, a});
          ClassId ones = add_op(g, OpKind::Ones, oa, {});
          g.merge(c, add_op(g, OpKind::Reshape, ra, {add_op(g, OpKind::Dot, da, {ones, x})}));
        } else {
          oa.target = TensorType(xt.base, {b, 1});
          ClassId ones = add_op(g, OpKind::Ones, oa, {});
          g.merge(c, add_op(g, OpKind::Reshape, ra, {add_op(g, OpKind::Dot, da, {x, ones})}));
        }
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t(r.base(), {r.range(1, 6), r.range(1, 6)});
      bool dim1 = r.next() & 1;
      OpAttrs red;
      red.dims = {dim1 ? 1 : 2};
      add_param(lhs, t, 0);
      lhs.root = lhs.add("r", OpKind::ReduceSum, red, {0});
      add_param(rhs, t, 0);
      OpAttrs oa, da, ra;
      da.contract_lhs = 2;
      da.contract_rhs = 1;
      if (dim1) {
        oa.target = TensorType(t.base, {1, t.shape[0]});
        ra.target = TensorType(t.base, {t.shape[1]});
        int32_t o = rhs.add("o", OpKind::Ones, oa, {});
        rhs.root = rhs.add("f", OpKind::Reshape, ra, {rhs.add("d", OpKind::Dot, da, {o, 0})});
      } else {
        oa.target = TensorType(t.base, {t.shape[1], 1});
        ra.target = TensorType(t.base, {t.shape[0]});
        int32_t o = rhs.add("o", OpKind::Ones, oa, {});
        rhs.root = rhs.add("f", OpKind::Reshape, ra, {rhs.add("d", OpKind::Dot, da, {0, o})});
      }
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // reduce over dim 2 = reduce over dim 1 of the transpose
    RewriteRule r;
    r.name = "reduce-dim2-normalize";
    r.lhs_desc = "reduce_[2](x) on rank-2 x";
    r.rhs_desc = "reduce_[1](transpose(x))";
    r.lhs_ops = {OpKind::ReduceSum};
    r.rhs_ops = {OpKind::ReduceSum, OpKind::Transpose};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::ReduceSum) return;
      if (n.attrs.dims != std::vector<int64_t>{2}) return;
      ClassId x = n.children[0];
      if (eg.cls(x).type.rank() != 2) return;
      out.push_back([c, x](EGraph& g) {
        OpAttrs ta, ra;
        ta.dims = {2, 1};
        ra.dims = {1};
        g.merge(c, add_op(g, OpKind::ReduceSum, ra, {add_op(g, OpKind::Transpose, ta, {x})}));
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t(r.base(), {r.range(1, 6), r.range(1, 6)});
      OpAttrs red2, red1, ta;
      red2.dims = {2};
      red1.dims = {1};
      ta.dims = {2, 1};
      add_param(lhs, t, 0);
      lhs.root = lhs.add("r", OpKind::ReduceSum, red2, {0});
      add_param(rhs, t, 0);
      rhs.root = rhs.add("r", OpKind::ReduceSum, red1, {rhs.add("t", OpKind::Transpose, ta, {0})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // broadcast into dim 2 = transpose of broadcast into dim 1
    RewriteRule r;
    r.name = "broadcast-dim2-normalize";
    r.lhs_desc = "broadcast_[2](v)";
    r.rhs_desc = "transpose(broadcast_[1](v))";
    r.lhs_ops = {OpKind::Broadcast};
    r.rhs_ops = {OpKind::Broadcast, OpKind::Transpose};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Broadcast) return;
      if (n.attrs.dims != std::vector<int64_t>{2} || n.type.rank() != 2) return;
      ClassId v = n.children[0];
      TensorType bt(n.type.base, {n.type.shape[1], n.type.shape[0]});
      out.push_back([c, v, bt](EGraph& g) {
        OpAttrs ba, ta;
        ba.dims = {1};
        ba.target = bt;
        ta.dims = {2, 1};
        g.merge(c, add_op(g, OpKind::Transpose, ta, {add_op(g, OpKind::Broadcast, ba, {v})}));
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType v(r.base(), {r.range(1, 6)});
      int64_t m = r.range(1, 6);
      OpAttrs b2, b1, ta;
      b2.dims = {2};
      b2.target = TensorType(v.base, {v.shape[0], m});
      b1.dims = {1};
      b1.target = TensorType(v.base, {m, v.shape[0]});
      ta.dims = {2, 1};
      add_param(lhs, v, 0);
      lhs.root = lhs.add("b", OpKind::Broadcast, b2, {0});
      add_param(rhs, v, 0);
      rhs.root = rhs.add("t", OpKind::Transpose, ta, {rhs.add("b", OpKind::Broadcast, b1, {0})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // a slice of a dot contracts the sliced operands
    RewriteRule r;
    r.name = "slice-of-dot";
    r.lhs_desc = "slice(dot(a,b))";
    r.rhs_desc = "dot(slice(a), slice(b))";
    r.lhs_ops = {OpKind::Slice, OpKind::Dot};
    r.rhs_ops = {OpKind::Dot, OpKind::Slice};
    r.match = [](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != OpKind::Slice) return;
      ClassId cc = eg.find(n.children[0]);
      for (int32_t mid : eg.cls(cc).members) {
        const ENode& m = eg.node(mid);
        if (m.tag != ENode::Tag::Op || m.kind != OpKind::Dot) continue;
        TensorType at = eg.cls(m.children[0]).type, bt = eg.cls(m.children[1]).type;
        int64_t c1 = m.attrs.contract_lhs - 1, c2 = m.attrs.contract_rhs - 1;
        OpAttrs sa, sb;
        size_t pos = 0;
        for (int64_t d = 0; d < at.rank(); ++d)
          sa.limits.push_back(d == c1 ? std::pair<int64_t, int64_t>{0, at.shape[d]} : n.attrs.limits[pos++]);
        for (int64_t d = 0; d < bt.rank(); ++d)
          sb.limits.push_back(d == c2 ? std::pair<int64_t, int64_t>{0, bt.shape[d]} : n.attrs.limits[pos++]);
        OpAttrs da = m.attrs;
        ClassId a = m.children[0], b = m.children[1];
        out.push_back([c, sa, sb, da, a, b](EGraph& g) {
          g.merge(c, add_op(g, OpKind::Dot, da,
                            {add_op(g, OpKind::Slice, sa, {a}), add_op(g, OpKind::Slice, sb, {b})}));
        });
      }
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType a(r.base(), {r.range(2, 6), r.range(1, 6)});
      TensorType b(a.base, {a.shape[1], r.range(2, 6)});
      int64_t r0 = r.range(0, a.shape[0] - 1), r1 = r.range(r0 + 1, a.shape[0]);
      int64_t q0 = r.range(0, b.shape[1] - 1), q1 = r.range(q0 + 1, b.shape[1]);
      OpAttrs da;
      da.contract_lhs = 2;
      da.contract_rhs = 1;
      OpAttrs so;
      so.limits = {{r0, r1}, {q0, q1}};
      add_param(lhs, a, 0);
      add_param(lhs, b, 1);
      lhs.root = lhs.add("s", OpKind::Slice, so, {lhs.add("d", OpKind::Dot, da, {0, 1})});
      OpAttrs sa, sb;
      sa.limits = {{r0, r1}, {0, a.shape[1]}};
      sb.limits = {{0, b.shape[0]}, {q0, q1}};
      add_param(rhs, a, 0);
      add_param(rhs, b, 1);
      rhs.root = rhs.add("d", OpKind::Dot, da,
                         {rhs.add("sa", OpKind::Slice, sa, {0}), rhs.add("sb", OpKind::Slice, sb, {1})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // every value equals a copy of itself (feeds copy-semantics instructions)
    RewriteRule r;
    r.name = "copy-intro";
    r.lhs_desc = "x";
    r.rhs_desc = "copy(x)";
    r.lhs_ops = {};
    r.rhs_ops = {OpKind::Copy};
    r.match = [first_member](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      if (!first_member(eg, c, nid)) return;
      out.push_back([c](EGraph& g) { g.merge(c, add_op(g, OpKind::Copy, OpAttrs{}, {c})); });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r);
      add_param(lhs, t, 0);
      lhs.root = 0;
      add_param(rhs, t, 0);
      rhs.root = rhs.add("c", OpKind::Copy, OpAttrs{}, {0});
      return true;
    };
    rules.push_back(std::move(r));
  }

  {  // x round-trips through its byte flattening
    RewriteRule r;
    r.name = "flatten-roundtrip";
    r.lhs_desc = "x";
    r.rhs_desc = "unflatten(flatten(x))";
    r.lhs_ops = {};
    r.rhs_ops = {OpKind::BitcastConvert, OpKind::Reshape};
    r.match = [first_member](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      if (!first_member(eg, c, nid)) return;
      TensorType t = eg.cls(c).type;
      if (t.rank() < 1) return;
      if (t.base == ScalarBase::U8 && t.rank() == 1) return;  // already flat
      out.push_back([c, t](EGraph& g) {
        OpAttrs bc1, rs1, rs2, bc2;
        bc1.target = byte_view(t);
        rs1.target = flat_u8(t);
        rs2.target = byte_view(t);
        bc2.target = t;
        ClassId flat = add_op(g, OpKind::Reshape, rs1, {add_op(g, OpKind::BitcastConvert, bc1, {c})});
        ClassId back = add_op(g, OpKind::BitcastConvert, bc2, {add_op(g, OpKind::Reshape, rs2, {flat})});
        g.merge(c, back);
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r);
      add_param(lhs, t, 0);
      lhs.root = 0;
      add_param(rhs, t, 0);
      OpAttrs bc1, rs1, rs2, bc2;
      bc1.target = byte_view(t);
      rs1.target = flat_u8(t);
      rs2.target = byte_view(t);
      bc2.target = t;
      int32_t f = rhs.add("r1", OpKind::Reshape, rs1, {rhs.add("b1", OpKind::BitcastConvert, bc1, {0})});
      rhs.root = rhs.add("b2", OpKind::BitcastConvert, bc2, {rhs.add("r2", OpKind::Reshape, rs2, {f})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  return rules;
}

// ---------------------------------------------------------------------------
// beta interval satisfiability

namespace {

struct Interval {
  int64_t lo, hi;
  bool empty() const { return lo > hi; }
};

// Tightens beta intervals with every constraint that touches exactly one
// beta variable; alpha is fixed. Multi-beta couplings are left to the CSP.
bool tighten_beta(const AbstractInstruction& instr, std::span<const int64_t> alpha,
                  const AttrExpr& expr, LinearConstraint::Kind kind, std::vector<Interval>& iv) {
  int64_t na = instr.n_alpha();
  int64_t rest = expr.c0;
  int32_t beta_idx = -1;
  int64_t beta_coef = 0;
  int nbeta = 0;
  for (const auto& t : expr.terms) {
    if (t.index < na) {
      rest += t.coef * alpha[t.index];
    } else {
      ++nbeta;
      beta_idx = t.index - static_cast<int32_t>(na);
      beta_coef = t.coef;
    }
  }
  if (nbeta == 0) return kind == LinearConstraint::Kind::LE ? rest <= 0 : rest == 0;
  if (nbeta > 1) return true;  // deferred to phase 2
  Interval& b = iv[beta_idx];
  if (kind == LinearConstraint::Kind::EQ) {
    if ((-rest) % beta_coef != 0) return false;
    int64_t v = -rest / beta_coef;
    b.lo = std::max(b.lo, v);
    b.hi = std::min(b.hi, v);
  } else if (beta_coef > 0) {  // coef*b + rest <= 0  ->  b <= floor(-rest/coef)
    b.hi = std::min(b.hi, floordiv(-rest, beta_coef));
  } else {  // b >= ceil(rest/-coef)
    b.lo = std::max(b.lo, ceildiv(rest, -beta_coef));
  }
  return !b.empty();
}

}  // namespace

bool beta_satisfiable(const IsaDescription& isa, const AbstractInstruction& instr,
                      std::span<const int64_t> alpha) {
  std::vector<Interval> iv;
  iv.reserve(instr.beta.size());
  for (const AttrDecl& d : instr.beta) iv.push_back({d.lo, d.hi});

  for (const LinearConstraint& c : instr.constraints)
    if (!tighten_beta(instr, alpha, c.expr, c.kind, iv)) return false;

  auto slice_bounds = [&](const BufferRef& ref) {
    const TensorBuffer& buf = isa.buffers[ref.buffer];
    for (size_t d = 0; d < ref.start.size(); ++d) {
      // start >= 0
      AttrExpr neg;
      neg.c0 = -ref.start[d].c0;
      for (auto t : ref.start[d].terms) {
        t.coef = -t.coef;
        neg.terms.push_back(t);
      }
      if (!tighten_beta(instr, alpha, neg, LinearConstraint::Kind::LE, iv)) return false;
      // start + len - S0 <= 0
      AttrExpr top = ref.start[d];
      top.c0 += ref.len[d].c0 - buf.access_shape[d];
      for (const auto& t : ref.len[d].terms) top.terms.push_back(t);
      if (!tighten_beta(instr, alpha, top, LinearConstraint::Kind::LE, iv)) return false;
      // len >= 1
      AttrExpr len;
      len.c0 = 1 - ref.len[d].c0;
      for (auto t : ref.len[d].terms) {
        t.coef = -t.coef;
        len.terms.push_back(t);
      }
      if (!tighten_beta(instr, alpha, len, LinearConstraint::Kind::LE, iv)) return false;
    }
    return true;
  };
  if (!slice_bounds(instr.output)) return false;
  for (const BufferRef& ref : instr.inputs)
    if (!slice_bounds(ref)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Derived IR-to-ISA rules (template reversal)

namespace {

// Backtracking matcher binding alpha from concrete shapes. Template nodes are
// matched to e-classes; shared template nodes must land in one class.
struct TemplateMatcher {
  const EGraph& eg;
  const IsaDescription& isa;
  const AbstractInstruction& instr;
  int32_t instr_index;

  std::vector<int64_t> alpha;
  std::vector<bool> bound;
  std::vector<ClassId> params;
  std::vector<ClassId> matched_to;  // per template node, -1 if free

  std::function<void()> on_complete;

  TemplateMatcher(const EGraph& g, const IsaDescription& i, int32_t idx)
      : eg(g), isa(i), instr(i.instructions[idx]), instr_index(idx) {
    alpha.assign(instr.alpha.size(), 0);
    bound.assign(instr.alpha.size(), false);
    params.assign(instr.compute.params.size(), -1);
    matched_to.assign(instr.compute.nodes.size(), -1);
  }

  bool unify_dims(const std::vector<AttrExpr>& dims, const std::vector<int64_t>& shape,
                  std::vector<int32_t>& trail) {
    if (dims.size() != shape.size()) return false;
    std::vector<bool> done(dims.size(), false);
    bool progress = true;
    size_t remaining = dims.size();
    while (progress && remaining) {
      progress = false;
      for (size_t d = 0; d < dims.size(); ++d) {
        if (done[d]) continue;
        int unbound = 0;
        int32_t uidx = -1;
        int64_t ucoef = 0, acc = dims[d].c0;
        for (const auto& t : dims[d].terms) {
          if (bound[t.index]) {
            acc += t.coef * alpha[t.index];
          } else {
            ++unbound;
            uidx = t.index;
            ucoef = t.coef;
          }
        }
        if (unbound == 0) {
          if (acc != shape[d]) return false;
          done[d] = true;
          --remaining;
          progress = true;
        } else if (unbound == 1) {
          int64_t rem = shape[d] - acc;
          if (ucoef == 0 || rem % ucoef != 0) return false;
          alpha[uidx] = rem / ucoef;
          bound[uidx] = true;
          trail.push_back(uidx);
          done[d] = true;
          --remaining;
          progress = true;
        }
      }
    }
    return remaining == 0;
  }

  bool lit_match(const SymbolicNode& p, const ENode& n) const {
    if (p.kind != n.kind) return false;
    switch (p.kind) {
      case OpKind::Transpose:
      case OpKind::Broadcast:
      case OpKind::ReduceSum:
      case OpKind::Concat:
        return p.lit.dims == n.attrs.dims;
      case OpKind::Slice:
      case OpKind::UpdateSlice:
        return p.lit.limits == n.attrs.limits;
      case OpKind::Dot:
        return p.lit.contract_lhs == n.attrs.contract_lhs && p.lit.contract_rhs == n.attrs.contract_rhs;
      default:
        return true;
    }
  }

  // agenda of (template node, class) obligations, depth-first
  void go(std::vector<std::pair<int32_t, ClassId>>& agenda) {
    if (agenda.empty()) {
      for (bool b : bound)
        if (!b) return;
      on_complete();
      return;
    }
    auto [p, craw] = agenda.back();
    agenda.pop_back();
    ClassId c = eg.find(craw);
    const SymbolicNode& pn = instr.compute.nodes[p];

    if (matched_to[p] >= 0) {
      if (eg.find(matched_to[p]) == c) go(agenda);
      agenda.push_back({p, c});
      return;
    }

    const TensorType& ct = eg.cls(c).type;
    if (ct.base == pn.base) {
      std::vector<int32_t> trail;
      if (unify_dims(pn.dims, ct.shape, trail)) {
        matched_to[p] = c;
        if (pn.kind == OpKind::Parameter) {
          params[pn.lit.param_index] = c;
          go(agenda);
          params[pn.lit.param_index] = -1;
        } else {
          for (int32_t nid : eg.cls(c).members) {
            const ENode& n = eg.node(nid);
            if (n.tag != ENode::Tag::Op || !lit_match(pn, n)) continue;
            size_t pushed = 0;
            for (size_t i = 0; i < pn.operands.size(); ++i, ++pushed)
              agenda.push_back({pn.operands[i], n.children[i]});
            go(agenda);
            for (size_t i = 0; i < pushed; ++i) agenda.pop_back();
          }
        }
        matched_to[p] = -1;
      }
      for (int32_t u : trail) bound[u] = false;
    }
    agenda.push_back({p, c});
  }
};

// one alpha-binding solvability pre-check per instruction
void check_alpha_solvable(const AbstractInstruction& instr) {
  std::vector<bool> bound(instr.alpha.size(), false);
  bool progress = true;
  while (progress) {
    progress = false;
    for (const SymbolicNode& n : instr.compute.nodes) {
      for (const AttrExpr& e : n.dims) {
        int unbound = 0;
        int32_t ui = -1;
        for (const auto& t : e.terms)
          if (!bound[t.index]) {
            ++unbound;
            ui = t.index;
          }
        if (unbound == 1) {
          bound[ui] = true;
          progress = true;
        }
      }
    }
  }
  for (size_t i = 0; i < bound.size(); ++i)
    if (!bound[i])
      throw Error("template of " + instr.name + " is not expressible as a pattern: attribute '" +
                  instr.alpha[i].name + "' cannot be bound from shapes");
  // slice lengths must be alpha-only so output types are known per pii
  auto alpha_only = [&](const BufferRef& ref) {
    for (const AttrExpr& e : ref.len)
      for (const auto& t : e.terms)
        if (t.index >= instr.n_alpha())
          throw Error("template of " + instr.name + " is not expressible as a pattern: slice length uses '" +
                      t.name + "'");
  };
  alpha_only(instr.output);
  for (const BufferRef& r : instr.inputs) alpha_only(r);
}

}  // namespace

std::vector<RewriteRule> derive_isa_rewrites(const IsaDescription& isa) {
  std::vector<RewriteRule> rules;
  for (size_t ii = 0; ii < isa.instructions.size(); ++ii) {
    const AbstractInstruction& instr = isa.instructions[ii];
    check_alpha_solvable(instr);

    RewriteRule r;
    r.name = "isa:" + instr.name;
    r.lhs_desc = "g_" + instr.name;
    r.rhs_desc = instr.name + "{alpha,?}";
    for (const SymbolicNode& n : instr.compute.nodes)
      if (n.kind != OpKind::Parameter) r.lhs_ops.push_back(n.kind);

    int32_t idx = static_cast<int32_t>(ii);
    const IsaDescription* isap = &isa;
    r.match = [isap, idx](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      const AbstractInstruction& ai = isap->instructions[idx];
      const SymbolicNode& rootp = ai.compute.nodes[ai.compute.root];
      const ENode& n = eg.node(nid);
      if (n.tag != ENode::Tag::Op || n.kind != rootp.kind) return;

      TemplateMatcher m(eg, *isap, idx);
      m.on_complete = [&]() {
        for (int64_t i = 0; i < ai.n_alpha(); ++i)
          if (m.alpha[i] < ai.alpha[i].lo || m.alpha[i] > ai.alpha[i].hi) return;
        // alpha-only projection of e_theta
        std::vector<int64_t> attrs(m.alpha);
        attrs.resize(ai.alpha.size() + ai.beta.size(), 0);
        for (const LinearConstraint& cst : ai.constraints) {
          bool a_only = true;
          for (const auto& t : cst.expr.terms)
            if (t.index >= ai.n_alpha()) a_only = false;
          if (!a_only) continue;
          int64_t v = cst.expr.eval(attrs);
          if (cst.kind == LinearConstraint::Kind::LE ? v > 0 : v != 0) return;
        }
        if (!beta_satisfiable(*isap, ai, m.alpha)) return;
        // output slice type must be the matched class type
        std::vector<int64_t> lens;
        for (const AttrExpr& e : ai.output.len) lens.push_back(e.eval(attrs));
        for (int64_t ln : lens)
          if (ln < 1) return;
        if (isap->buffers[ai.output.buffer].slice_type(lens) != eg.cls(c).type) return;

        std::vector<int64_t> alpha = m.alpha;
        std::vector<ClassId> children = m.params;
        TensorType type = eg.cls(c).type;
        int32_t ob = ai.output.buffer;
        out.push_back([c, idx, alpha, children, type, ob](EGraph& g) {
          ENode pii;
          pii.tag = ENode::Tag::Pii;
          pii.instr = idx;
          pii.alpha = alpha;
          pii.buffer = ob;
          pii.type = type;
          pii.children = children;
          g.merge(c, g.add(std::move(pii)));
        });
      };
      // the root obligation is pinned to this very e-node
      const SymbolicNode& pn = ai.compute.nodes[ai.compute.root];
      const TensorType& ct = eg.cls(c).type;
      if (ct.base != pn.base) return;
      std::vector<int32_t> trail;
      if (!m.unify_dims(pn.dims, ct.shape, trail)) {
        return;
      }
      m.matched_to[ai.compute.root] = c;
      if (!m.lit_match(pn, n)) return;
      std::vector<std::pair<int32_t, ClassId>> agenda2;
      for (size_t i = 0; i < pn.operands.size(); ++i) agenda2.push_back({pn.operands[i], n.children[i]});
      m.go(agenda2);
    };

    r.sample = nullptr;  // replaced by a self check in check_rule_soundness
    rules.push_back(std::move(r));
  }
  return rules;
}

// ---------------------------------------------------------------------------
// Identity instructions and buffer-directed splitting

std::vector<RewriteRule> identity_instruction_rules(const IsaDescription& isa) {
  std::vector<RewriteRule> rules;
  const IsaDescription* isap = &isa;

  for (size_t bi = 0; bi < isa.buffers.size(); ++bi) {
    int32_t b = static_cast<int32_t>(bi);
    {
      RewriteRule r;
      r.name = "sliceH:" + isa.buffers[bi].name;
      r.lhs_desc = "slice(x) on " + isa.buffers[bi].name + "-shaped x";
      r.rhs_desc = "slice^H";
      r.lhs_ops = {OpKind::Slice};
      r.rhs_ops = {};
      r.match = [isap, b](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
        const ENode& n = eg.node(nid);
        if (n.tag != ENode::Tag::Op || n.kind != OpKind::Slice) return;
        ClassId cc = eg.find(n.children[0]);
        auto rows = buffer_rows(isap->buffers[b], eg.cls(cc).type);
        if (!rows) return;
        if (!full_limits_after_first(n.attrs, eg.cls(cc).type)) return;
        auto [s, e] = n.attrs.limits[0];
        TensorType t = eg.cls(c).type;
        int64_t k = *rows;
        out.push_back([c, cc, b, k, s, e, t](EGraph& g) {
          ENode h;
          h.tag = ENode::Tag::SliceH;
          h.buffer = b;
          h.alpha = {k, s, e};
          h.type = t;
          h.children = {cc};
          g.merge(c, g.add(std::move(h)));
        });
      };
      r.sample = nullptr;
      rules.push_back(std::move(r));
    }
    {
      RewriteRule r;
      r.name = "concatH:" + isa.buffers[bi].name;
      r.lhs_desc = "concat_1(x1, x2) on " + isa.buffers[bi].name + "-shaped operands";
      r.rhs_desc = "concat^H";
      r.lhs_ops = {OpKind::Concat};
      r.rhs_ops = {};
      r.match = [isap, b](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
        const ENode& n = eg.node(nid);
        if (n.tag != ENode::Tag::Op || n.kind != OpKind::Concat || n.attrs.dims != std::vector<int64_t>{1})
          return;
        ClassId c1 = eg.find(n.children[0]), c2 = eg.find(n.children[1]);
        auto r1 = buffer_rows(isap->buffers[b], eg.cls(c1).type);
        auto r2 = buffer_rows(isap->buffers[b], eg.cls(c2).type);
        if (!r1 || !r2) return;
        if (*r1 + *r2 > isap->buffers[b].access_shape[0]) return;
        TensorType t = eg.cls(c).type;
        int64_t n1 = *r1, n2 = *r2;
        out.push_back([c, c1, c2, b, n1, n2, t](EGraph& g) {
          ENode h;
          h.tag = ENode::Tag::ConcatH;
          h.buffer = b;
          h.alpha = {n1, n2};
          h.type = t;
          h.children = {c1, c2};
          g.merge(c, g.add(std::move(h)));
        });
      };
      r.sample = nullptr;
      rules.push_back(std::move(r));
    }
  }

  {  // binary split on buffer-representable values (feeds the identity rules)
    RewriteRule r;
    r.name = "binary-split";
    r.lhs_desc = "x with even leading dim";
    r.rhs_desc = "concat_1(slice[0:n/2](x), slice[n/2:n](x))";
    r.lhs_ops = {};
    r.rhs_ops = {OpKind::Concat, OpKind::Slice};
    r.match = [isap](const EGraph& eg, ClassId c, int32_t nid, std::vector<PendingApply>& out) {
      if (eg.cls(c).members.empty() || eg.cls(c).members[0] != nid) return;
      const TensorType& t = eg.cls(c).type;
      bool fits = false;
      for (size_t b = 1; b < isap->buffers.size(); ++b)
        if (buffer_rows(isap->buffers[b], t)) fits = true;
      if (!fits) return;
      int64_t k = t.shape[0];
      if (k < 2 || k % 2) return;
      out.push_back([c, t, k](EGraph& g) {
        OpAttrs lo, hi, cat;
        lo.limits.emplace_back(0, k / 2);
        hi.limits.emplace_back(k / 2, k);
        for (size_t d = 1; d < t.shape.size(); ++d) {
          lo.limits.emplace_back(0, t.shape[d]);
          hi.limits.emplace_back(0, t.shape[d]);
        }
        cat.dims = {1};
        g.merge(c, add_op(g, OpKind::Concat, cat,
                          {add_op(g, OpKind::Slice, lo, {c}), add_op(g, OpKind::Slice, hi, {c})}));
      });
    };
    r.sample = [](uint64_t seed, KernelGraph& lhs, KernelGraph& rhs) {
      Rng r(seed);
      TensorType t = random_type(r, 1, 2, 6);
      t.shape[0] = 2 * r.range(1, 4);
      add_param(lhs, t, 0);
      lhs.root = 0;
      add_param(rhs, t, 0);
      OpAttrs lo, hi, cat;
      lo.limits.emplace_back(0, t.shape[0] / 2);
      hi.limits.emplace_back(t.shape[0] / 2, t.shape[0]);
      for (size_t d = 1; d < t.shape.size(); ++d) {
        lo.limits.emplace_back(0, t.shape[d]);
        hi.limits.emplace_back(0, t.shape[d]);
      }
      cat.dims = {1};
      rhs.root = rhs.add("c", OpKind::Concat, cat,
                         {rhs.add("a", OpKind::Slice, lo, {0}), rhs.add("b", OpKind::Slice, hi, {0})});
      return true;
    };
    rules.push_back(std::move(r));
  }

  return rules;
}

// ---------------------------------------------------------------------------
// Rule filtering (iterative closure over template operators)

std::vector<RewriteRule> filter_ir_rules(const std::vector<RewriteRule>& base, const IsaDescription& isa) {
  if (isa.instructions.empty()) return {};
  std::vector<bool> relevant(64, false);
  auto mark = [&](OpKind k) { relevant[static_cast<size_t>(k)] = true; };
  auto is_rel = [&](OpKind k) { return relevant[static_cast<size_t>(k)]; };
  for (const AbstractInstruction& instr : isa.instructions)
    for (const SymbolicNode& n : instr.compute.nodes)
      if (n.kind != OpKind::Parameter) mark(n.kind);
  // identity instructions contribute their operator semantics
  mark(OpKind::Slice);
  mark(OpKind::Concat);

  std::vector<bool> keep(base.size(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < base.size(); ++i) {
      if (keep[i]) continue;
      bool produces_relevant = base[i].rhs_ops.empty();  // pure merges stay
      for (OpKind k : base[i].rhs_ops)
        if (is_rel(k)) produces_relevant = true;
      if (!produces_relevant) continue;
      keep[i] = true;
      changed = true;
      for (OpKind k : base[i].lhs_ops)
        if (!is_rel(k)) mark(k);
    }
  }
  std::vector<RewriteRule> out;
  for (size_t i = 0; i < base.size(); ++i)
    if (keep[i]) out.push_back(base[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Rule soundness checking

std::optional<std::string> check_rule_soundness(const RewriteRule& rule, int samples, uint64_t seed) {
  if (!rule.sample) return "rule '" + rule.name + "' has no sampler";
  int done = 0;
  uint64_t s = seed;
  int misses = 0;
  while (done < samples) {
    KernelGraph lhs, rhs;
    ++s;
    if (!rule.sample(s, lhs, rhs)) {
      if (++misses > samples * 10) return "sampler for '" + rule.name + "' keeps failing";
      continue;
    }
    auto pt = lhs.param_types();
    if (pt != rhs.param_types()) return "rule '" + rule.name + "': lhs/rhs parameter lists differ";
    std::vector<TensorValue> inputs;
    for (size_t p = 0; p < pt.size(); ++p) inputs.push_back(random_tensor(pt[p], s * 1315423911u + p));
    TensorValue a = evaluate(lhs, inputs);
    TensorValue b = evaluate(rhs, inputs);
    if (a.type != b.type)
      return "rule '" + rule.name + "': result types differ (" + a.type.str() + " vs " + b.type.str() + ")";
    bool ok = true;
    if (scalar_is_float(a.type.base)) {
      float tol = a.type.base == ScalarBase::BF16 ? kBf16Tol : kF32Tol;
      for (int64_t i = 0; ok && i < a.elem_count(); ++i) {
        float x = a.get_float(i), y = b.get_float(i);
        if (x == y || (std::isnan(x) && std::isnan(y))) continue;
        if (std::fabs(x - y) > tol * std::max(std::fabs(x), std::fabs(y))) ok = false;
      }
    } else {
      ok = a.bytes == b.bytes;
    }
    if (!ok) return "rule '" + rule.name + "': lhs != rhs on sample " + std::to_string(done);
    ++done;
  }
  return std::nullopt;
}

}  // namespace tkc
