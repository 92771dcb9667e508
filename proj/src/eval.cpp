#include <cmath>

#include "tkc/graph.hpp"

namespace tkc {

namespace {

// Scalar conversion used by convert: deterministic for every base pair.
// int->int wraps (two's complement), float->int truncates toward zero with
// int64 saturation before the wrap, int->float rounds to nearest.
uint64_t convert_scalar(const TensorValue& src, int64_t i, ScalarBase to, float* fout) {
  ScalarBase from = src.type.base;
  if (scalar_is_float(to)) {
    float f;
    if (scalar_is_float(from)) f = src.get_float(i);
    else if (scalar_is_signed(from)) f = static_cast<float>(src.get_int(i));
    else f = static_cast<float>(src.get_uint(i));
    *fout = f;
    return 0;
  }
  if (scalar_is_float(from)) {
    double d = std::trunc(static_cast<double>(src.get_float(i)));
    int64_t t;
    if (std::isnan(d)) t = 0;
    else if (d >= 9223372036854775807.0) t = INT64_MAX;
    else if (d <= -9223372036854775808.0) t = INT64_MIN;
    else t = static_cast<int64_t>(d);
    return static_cast<uint64_t>(t);
  }
  if (scalar_is_signed(from)) return static_cast<uint64_t>(src.get_int(i));
  return src.get_uint(i);
}

TensorValue elementwise(OpKind kind, const TensorValue& a, const TensorValue& b) {
  TensorValue out(a.type);
  int64_t n = a.elem_count();
  if (scalar_is_float(a.type.base)) {
    for (int64_t i = 0; i < n; ++i) {
      float x = a.get_float(i), y = b.get_float(i), r = 0;
      switch (kind) {
        case OpKind::Add: r = x + y; break;
        case OpKind::Multiply: r = x * y; break;
        case OpKind::Divide: r = x / y; break;
        case OpKind::Maximum: r = x > y ? x : y; break;
        default: throw Error("bad elementwise op");
      }
      out.set_float(i, r);
    }
    return out;
  }
  bool sgn = scalar_is_signed(a.type.base);
  for (int64_t i = 0; i < n; ++i) {
    uint64_t x = a.get_uint(i), y = b.get_uint(i), r = 0;
    switch (kind) {
      case OpKind::Add: r = x + y; break;
      case OpKind::Multiply: r = x * y; break;
      case OpKind::Divide: {
        if ((sgn ? b.get_int(i) != 0 : y != 0) == false) throw Error("integer division by zero");
        r = sgn ? static_cast<uint64_t>(a.get_int(i) / b.get_int(i)) : x / y;
        break;
      }
      case OpKind::Maximum:
        r = sgn ? static_cast<uint64_t>(std::max(a.get_int(i), b.get_int(i))) : std::max(x, y);
        break;
      default: throw Error("bad elementwise op");
    }
    out.set_uint(i, r);
  }
  return out;
}

}  // namespace

TensorValue eval_op(OpKind kind, const OpAttrs& attrs, const std::vector<TensorValue>& ops) {
  std::vector<TensorType> types;
  types.reserve(ops.size());
  for (const auto& v : ops) types.push_back(v.type);
  TensorType out_type = infer_type(kind, attrs, types);

  switch (kind) {
    case OpKind::Parameter:
      throw Error("parameter has no evaluation rule");
    case OpKind::Constant:
      return TensorValue(out_type, attrs.literal);
    case OpKind::Eye: {
      TensorValue out(out_type);
      int64_t n = out_type.shape[0];
      for (int64_t i = 0; i < n; ++i) {
        if (scalar_is_float(out_type.base)) out.set_float(i * n + i, 1.0f);
        else out.set_uint(i * n + i, 1);
      }
      return out;
    }
    case OpKind::Ones: {
      TensorValue out(out_type);
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        if (scalar_is_float(out_type.base)) out.set_float(i, 1.0f);
        else out.set_uint(i, 1);
      }
      return out;
    }
    case OpKind::Slice: {
      const TensorValue& x = ops[0];
      TensorValue out(out_type);
      std::vector<int64_t> idx(out_type.rank(), 0), src(out_type.rank(), 0);
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        for (int64_t d = 0; d < out_type.rank(); ++d) src[d] = idx[d] + attrs.limits[d].first;
        out.set_uint(i, x.get_uint(flat_index(x.type.shape, src)));
        next_index(out_type.shape, idx);
      }
      return out;
    }
    case OpKind::UpdateSlice: {
      TensorValue out = ops[0];
      const TensorValue& v = ops[1];
      std::vector<int64_t> idx(v.type.rank(), 0), dst(v.type.rank(), 0);
      for (int64_t i = 0; i < v.elem_count(); ++i) {
        for (int64_t d = 0; d < v.type.rank(); ++d) dst[d] = idx[d] + attrs.limits[d].first;
        out.set_uint(flat_index(out.type.shape, dst), v.get_uint(i));
        next_index(v.type.shape, idx);
      }
      return out;
    }
    case OpKind::Concat: {
      const TensorValue& a = ops[0];
      const TensorValue& b = ops[1];
      int64_t d = attrs.dims[0] - 1;
      TensorValue out(out_type);
      std::vector<int64_t> idx(out_type.rank(), 0), src(out_type.rank(), 0);
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        src = idx;
        if (idx[d] < a.type.shape[d]) {
          out.set_uint(i, a.get_uint(flat_index(a.type.shape, src)));
        } else {
          src[d] -= a.type.shape[d];
          out.set_uint(i, b.get_uint(flat_index(b.type.shape, src)));
        }
        next_index(out_type.shape, idx);
      }
      return out;
    }
    case OpKind::Reshape:
    case OpKind::BitcastConvert:
      // both are pure reinterpretations of the row-major byte image
      return TensorValue(out_type, ops[0].bytes);
    case OpKind::Broadcast: {
      const TensorValue& x = ops[0];
      TensorValue out(out_type);
      std::vector<int64_t> idx(out_type.rank(), 0), src;
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        src.clear();
        for (int64_t d = 1, j = 0; d <= out_type.rank(); ++d) {
          if (j < static_cast<int64_t>(attrs.dims.size()) && attrs.dims[j] == d) {
            ++j;
            continue;
          }
          src.push_back(idx[d - 1]);
        }
        out.set_uint(i, x.get_uint(flat_index(x.type.shape, src)));
        next_index(out_type.shape, idx);
      }
      return out;
    }
    case OpKind::ReduceSum: {
      const TensorValue& x = ops[0];
      TensorValue out(out_type);
      bool flt = scalar_is_float(out_type.base);
      std::vector<float> facc(out.elem_count(), 0.0f);
      std::vector<uint64_t> iacc(out.elem_count(), 0);
      std::vector<int64_t> idx(x.type.rank(), 0), kept;
      for (int64_t i = 0; i < x.elem_count(); ++i) {
        kept.clear();
        for (int64_t d = 1, j = 0; d <= x.type.rank(); ++d) {
          if (j < static_cast<int64_t>(attrs.dims.size()) && attrs.dims[j] == d) {
            ++j;
            continue;
          }
          kept.push_back(idx[d - 1]);
        }
        int64_t o = flat_index(out_type.shape, kept);
        if (flt) facc[o] += x.get_float(i);
        else iacc[o] += x.get_uint(i);
        next_index(x.type.shape, idx);
      }
      for (int64_t o = 0; o < out.elem_count(); ++o) {
        if (flt) out.set_float(o, facc[o]);
        else out.set_uint(o, iacc[o]);
      }
      return out;
    }
    case OpKind::Transpose: {
      const TensorValue& x = ops[0];
      TensorValue out(out_type);
      std::vector<int64_t> idx(out_type.rank(), 0), src(out_type.rank(), 0);
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        for (int64_t d = 0; d < out_type.rank(); ++d) src[attrs.dims[d] - 1] = idx[d];
        out.set_uint(i, x.get_uint(flat_index(x.type.shape, src)));
        next_index(out_type.shape, idx);
      }
      return out;
    }
    case OpKind::Dot: {
      const TensorValue& a = ops[0];
      const TensorValue& b = ops[1];
      int64_t c1 = attrs.contract_lhs - 1, c2 = attrs.contract_rhs - 1;
      int64_t kn = a.type.shape[c1];
      TensorValue out(out_type);
      bool flt = scalar_is_float(out_type.base);
      std::vector<int64_t> idx(out_type.rank(), 0);
      std::vector<int64_t> ai(a.type.rank()), bi(b.type.rank());
      int64_t a_outer = a.type.rank() - 1;
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        for (int64_t d = 0, j = 0; d < a.type.rank(); ++d)
          if (d != c1) ai[d] = idx[j++];
        for (int64_t d = 0, j = a_outer; d < b.type.rank(); ++d)
          if (d != c2) bi[d] = idx[j++];
        float fs = 0;
        uint64_t is = 0;
        for (int64_t k = 0; k < kn; ++k) {
          ai[c1] = k;
          bi[c2] = k;
          int64_t fa = flat_index(a.type.shape, ai), fb = flat_index(b.type.shape, bi);
          if (flt) fs += a.get_float(fa) * b.get_float(fb);
          else is += a.get_uint(fa) * b.get_uint(fb);
        }
        if (flt) out.set_float(i, fs);
        else out.set_uint(i, is);
        next_index(out_type.shape, idx);
      }
      return out;
    }
    case OpKind::Exp: {
      TensorValue out(out_type);
      for (int64_t i = 0; i < out.elem_count(); ++i) out.set_float(i, std::exp(ops[0].get_float(i)));
      return out;
    }
    case OpKind::Divide:
    case OpKind::Add:
    case OpKind::Multiply:
    case OpKind::Maximum:
      return elementwise(kind, ops[0], ops[1]);
    case OpKind::Copy:
      return ops[0];
    case OpKind::Convert: {
      TensorValue out(out_type);
      for (int64_t i = 0; i < out.elem_count(); ++i) {
        float f = 0;
        uint64_t u = convert_scalar(ops[0], i, out_type.base, &f);
        if (scalar_is_float(out_type.base)) out.set_float(i, f);
        else out.set_uint(i, u);
      }
      return out;
    }
  }
  throw Error("unhandled operator");
}

std::vector<TensorType> KernelGraph::param_types() const {
  std::vector<TensorType> t;
  t.reserve(params.size());
  for (int32_t p : params) t.push_back(nodes[p].type);
  return t;
}

int64_t KernelGraph::input_bytes() const {
  int64_t n = 0;
  for (int32_t p : params) n += nodes[p].type.byte_size();
  return n;
}

int64_t KernelGraph::output_bytes() const { return nodes[root].type.byte_size(); }

TensorValue evaluate(const KernelGraph& g, const std::vector<TensorValue>& inputs) {
  if (inputs.size() != g.params.size())
    throw Error("evaluate: expected " + std::to_string(g.params.size()) + " inputs, got " +
                std::to_string(inputs.size()));
  for (size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].type != g.nodes[g.params[i]].type)
      throw Error("evaluate: input " + std::to_string(i) + " is " + inputs[i].type.str() + ", expected " +
                  g.nodes[g.params[i]].type.str());

  std::vector<TensorValue> vals(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const KernelNode& n = g.nodes[i];
    if (n.kind == OpKind::Parameter) {
      vals[i] = inputs[n.attrs.param_index];
      continue;
    }
    std::vector<TensorValue> ops;
    ops.reserve(n.operands.size());
    for (int32_t o : n.operands) ops.push_back(vals[o]);
    vals[i] = eval_op(n.kind, n.attrs, ops);
  }
  return vals[g.root];
}

}  // namespace tkc
