#ifndef TKC_TEST_ORACLE_HPP
#define TKC_TEST_ORACLE_HPP

// Scalar-loop reference implementations, independent of the interpreter in
// the library: index math is done with divmod decoding against precomputed
// strides, accumulation loops are written out per operator.

#include <cmath>

#include "tkc/graph.hpp"

namespace tkc::oracle {

inline std::vector<int64_t> strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (int64_t d = static_cast<int64_t>(shape.size()) - 2; d >= 0; --d) s[d] = s[d + 1] * shape[d + 1];
  return s;
}

inline int64_t coord(int64_t flat, const std::vector<int64_t>& shape, const std::vector<int64_t>& st,
                     int64_t d) {
  return (flat / st[d]) % shape[d];
}

inline TensorValue matmul(const TensorValue& a, const TensorValue& b, int64_t c1, int64_t c2) {
  // only the rank-2 x rank-2 and rank-2 x rank-1 cases the tests need
  const auto& sa = a.type.shape;
  const auto& sb = b.type.shape;
  bool flt = scalar_is_float(a.type.base);
  if (sa.size() == 2 && sb.size() == 2 && c1 == 2 && c2 == 1) {
    TensorValue out(TensorType(a.type.base, {sa[0], sb[1]}));
    for (int64_t i = 0; i < sa[0]; ++i)
      for (int64_t j = 0; j < sb[1]; ++j) {
        float facc = 0;
        uint64_t iacc = 0;
        for (int64_t k = 0; k < sa[1]; ++k) {
          if (flt) facc += a.get_float(i * sa[1] + k) * b.get_float(k * sb[1] + j);
          else iacc += a.get_uint(i * sa[1] + k) * b.get_uint(k * sb[1] + j);
        }
        if (flt) out.set_float(i * sb[1] + j, facc);
        else out.set_uint(i * sb[1] + j, iacc);
      }
    return out;
  }
  throw Error("oracle matmul: unsupported shapes");
}

inline TensorValue slice(const TensorValue& x, const std::vector<std::pair<int64_t, int64_t>>& lim) {
  std::vector<int64_t> oshape;
  for (auto& [s, e] : lim) oshape.push_back(e - s);
  TensorValue out(TensorType(x.type.base, oshape));
  auto ost = strides(oshape);
  auto xst = strides(x.type.shape);
  for (int64_t f = 0; f < out.elem_count(); ++f) {
    int64_t src = 0;
    for (size_t d = 0; d < oshape.size(); ++d) src += (coord(f, oshape, ost, d) + lim[d].first) * xst[d];
    out.set_uint(f, x.get_uint(src));
  }
  return out;
}

inline TensorValue update_slice(const TensorValue& x, const TensorValue& v,
                                const std::vector<std::pair<int64_t, int64_t>>& lim) {
  TensorValue out = x;
  auto vst = strides(v.type.shape);
  auto xst = strides(x.type.shape);
  for (int64_t f = 0; f < v.elem_count(); ++f) {
    int64_t dst = 0;
    for (size_t d = 0; d < v.type.shape.size(); ++d)
      dst += (coord(f, v.type.shape, vst, d) + lim[d].first) * xst[d];
    out.set_uint(dst, v.get_uint(f));
  }
  return out;
}

inline TensorValue concat(const TensorValue& a, const TensorValue& b, int64_t dim1b) {
  int64_t d0 = dim1b - 1;
  std::vector<int64_t> oshape = a.type.shape;
  oshape[d0] += b.type.shape[d0];
  TensorValue out(TensorType(a.type.base, oshape));
  auto ost = strides(oshape);
  auto ast = strides(a.type.shape);
  auto bst = strides(b.type.shape);
  for (int64_t f = 0; f < out.elem_count(); ++f) {
    int64_t cd = coord(f, oshape, ost, d0);
    int64_t src = 0;
    bool first = cd < a.type.shape[d0];
    for (size_t d = 0; d < oshape.size(); ++d) {
      int64_t cc = coord(f, oshape, ost, d);
      if (static_cast<int64_t>(d) == d0 && !first) cc -= a.type.shape[d0];
      src += cc * (first ? ast[d] : bst[d]);
    }
    out.set_uint(f, first ? a.get_uint(src) : b.get_uint(src));
  }
  return out;
}

inline TensorValue transpose(const TensorValue& x, const std::vector<int64_t>& perm1b) {
  std::vector<int64_t> oshape;
  for (int64_t p : perm1b) oshape.push_back(x.type.shape[p - 1]);
  TensorValue out(TensorType(x.type.base, oshape));
  auto ost = strides(oshape);
  auto xst = strides(x.type.shape);
  for (int64_t f = 0; f < out.elem_count(); ++f) {
    int64_t src = 0;
    for (size_t d = 0; d < oshape.size(); ++d) src += coord(f, oshape, ost, d) * xst[perm1b[d] - 1];
    out.set_uint(f, x.get_uint(src));
  }
  return out;
}

inline TensorValue reduce_sum(const TensorValue& x, const std::vector<int64_t>& dims1b) {
  std::vector<bool> drop(x.type.shape.size(), false);
  for (int64_t d : dims1b) drop[d - 1] = true;
  std::vector<int64_t> oshape;
  for (size_t d = 0; d < x.type.shape.size(); ++d)
    if (!drop[d]) oshape.push_back(x.type.shape[d]);
  TensorValue out(TensorType(x.type.base, oshape));
  bool flt = scalar_is_float(x.type.base);
  std::vector<float> facc(out.elem_count(), 0);
  std::vector<uint64_t> iacc(out.elem_count(), 0);
  auto xst = strides(x.type.shape);
  auto ost = strides(oshape);
  for (int64_t f = 0; f < x.elem_count(); ++f) {
    int64_t o = 0;
    for (size_t d = 0, j = 0; d < x.type.shape.size(); ++d) {
      if (drop[d]) continue;
      o += coord(f, x.type.shape, xst, d) * ost[j];
      ++j;
    }
    if (flt) facc[o] += x.get_float(f);
    else iacc[o] += x.get_uint(f);
  }
  for (int64_t o = 0; o < out.elem_count(); ++o) {
    if (flt) out.set_float(o, facc[o]);
    else out.set_uint(o, iacc[o]);
  }
  return out;
}

inline TensorValue broadcast(const TensorValue& x, const std::vector<int64_t>& dims1b,
                             const std::vector<int64_t>& oshape) {
  TensorValue out(TensorType(x.type.base, oshape));
  auto ost = strides(oshape);
  auto xst = strides(x.type.shape);
  std::vector<bool> inserted(oshape.size(), false);
  for (int64_t d : dims1b) inserted[d - 1] = true;
  for (int64_t f = 0; f < out.elem_count(); ++f) {
    int64_t src = 0;
    for (size_t d = 0, j = 0; d < oshape.size(); ++d) {
      if (inserted[d]) continue;
      src += coord(f, oshape, ost, d) * xst[j];
      ++j;
    }
    out.set_uint(f, x.get_uint(src));
  }
  return out;
}

// little-endian packing by shift arithmetic, no memcpy
inline std::vector<uint8_t> pack_bytes(const TensorValue& v) {
  int64_t w = scalar_width(v.type.base);
  std::vector<uint8_t> out;
  out.reserve(v.elem_count() * w);
  for (int64_t i = 0; i < v.elem_count(); ++i) {
    uint64_t u = v.get_uint(i);
    for (int64_t k = 0; k < w; ++k) out.push_back(static_cast<uint8_t>((u >> (8 * k)) & 0xff));
  }
  return out;
}

// copies one tile at a time, row-major within a tile, tiles row-major
inline std::vector<uint8_t> tile_copy(const TensorValue& v, const std::vector<int64_t>& tiles) {
  if (v.type.rank() != 2) throw Error("oracle tile_copy handles rank 2");
  int64_t R = v.type.shape[0], C = v.type.shape[1];
  int64_t tr = tiles[0], tc = tiles[1];
  TensorValue out(TensorType(v.type.base, {R, C}));
  int64_t o = 0;
  for (int64_t gr = 0; gr < R / tr; ++gr)
    for (int64_t gc = 0; gc < C / tc; ++gc)
      for (int64_t i = 0; i < tr; ++i)
        for (int64_t j = 0; j < tc; ++j) out.set_uint(o++, v.get_uint((gr * tr + i) * C + (gc * tc + j)));
  return pack_bytes(out);
}

}  // namespace tkc::oracle

#endif
