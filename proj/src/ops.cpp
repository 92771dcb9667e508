#include <algorithm>

#include "tkc/graph.hpp"

namespace tkc {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Parameter: return "parameter";
    case OpKind::Constant: return "constant";
    case OpKind::Eye: return "eye";
    case OpKind::Ones: return "ones";
    case OpKind::Slice: return "slice";
    case OpKind::UpdateSlice: return "update_slice";
    case OpKind::Concat: return "concat";
    case OpKind::Reshape: return "reshape";
    case OpKind::BitcastConvert: return "bitcast_convert";
    case OpKind::Broadcast: return "broadcast";
    case OpKind::ReduceSum: return "reduce";
    case OpKind::Transpose: return "transpose";
    case OpKind::Dot: return "dot";
    case OpKind::Exp: return "exp";
    case OpKind::Divide: return "divide";
    case OpKind::Copy: return "copy";
    case OpKind::Convert: return "convert";
    case OpKind::Add: return "add";
    case OpKind::Multiply: return "multiply";
    case OpKind::Maximum: return "maximum";
  }
  return "?";
}

std::optional<OpKind> parse_op_name(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), '-', '_');
  if (t == "parameter") return OpKind::Parameter;
  if (t == "constant") return OpKind::Constant;
  if (t == "eye") return OpKind::Eye;
  if (t == "ones") return OpKind::Ones;
  if (t == "slice") return OpKind::Slice;
  if (t == "update_slice") return OpKind::UpdateSlice;
  if (t == "concat" || t == "concatenate") return OpKind::Concat;
  if (t == "reshape") return OpKind::Reshape;
  if (t == "bitcast_convert") return OpKind::BitcastConvert;
  if (t == "broadcast") return OpKind::Broadcast;
  if (t == "reduce" || t == "reduce_sum") return OpKind::ReduceSum;
  if (t == "transpose") return OpKind::Transpose;
  if (t == "dot") return OpKind::Dot;
  if (t == "exp" || t == "exponential") return OpKind::Exp;
  if (t == "divide") return OpKind::Divide;
  if (t == "copy") return OpKind::Copy;
  if (t == "convert") return OpKind::Convert;
  if (t == "add") return OpKind::Add;
  if (t == "multiply") return OpKind::Multiply;
  if (t == "maximum") return OpKind::Maximum;
  return std::nullopt;
}

int op_arity(OpKind k) {
  switch (k) {
    case OpKind::Parameter:
    case OpKind::Constant:
    case OpKind::Eye:
    case OpKind::Ones:
      return 0;
    case OpKind::UpdateSlice:
    case OpKind::Concat:
    case OpKind::Dot:
    case OpKind::Divide:
    case OpKind::Add:
    case OpKind::Multiply:
    case OpKind::Maximum:
      return 2;
    default:
      return 1;
  }
}

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error("type error: " + msg); }

void want_arity(OpKind k, size_t got) {
  int a = op_arity(k);
  if (static_cast<size_t>(a) != got)
    bad(std::string(op_name(k)) + " takes " + std::to_string(a) + " operands, got " + std::to_string(got));
}

}  // namespace

TensorType infer_type(OpKind kind, const OpAttrs& attrs, const std::vector<TensorType>& ops) {
  want_arity(kind, ops.size());
  switch (kind) {
    case OpKind::Parameter:
      if (!attrs.target.valid()) bad("parameter needs a valid declared type");
      if (attrs.param_index < 0) bad("parameter needs an index");
      return attrs.target;
    case OpKind::Constant: {
      if (!attrs.target.valid()) bad("constant needs a valid declared type");
      if (static_cast<int64_t>(attrs.literal.size()) != attrs.target.byte_size())
        bad("constant literal holds " + std::to_string(attrs.literal.size()) + " bytes, type " +
            attrs.target.str() + " needs " + std::to_string(attrs.target.byte_size()));
      return attrs.target;
    }
    case OpKind::Eye:
      if (attrs.target.rank() != 2 || attrs.target.shape[0] != attrs.target.shape[1])
        bad("eye must be square, got " + attrs.target.str());
      return attrs.target;
    case OpKind::Ones:
      if (!attrs.target.valid()) bad("ones needs a valid declared type");
      return attrs.target;
    case OpKind::Slice: {
      const TensorType& x = ops[0];
      if (static_cast<int64_t>(attrs.limits.size()) != x.rank()) bad("slice limits must cover every axis");
      TensorType out(x.base, {});
      for (int64_t d = 0; d < x.rank(); ++d) {
        auto [s, e] = attrs.limits[d];
        if (s < 0 || s >= e || e > x.shape[d])
          bad("slice [" + std::to_string(s) + ":" + std::to_string(e) + ") out of range for dim " +
              std::to_string(d + 1) + " of " + x.str());
        out.shape.push_back(e - s);
      }
      return out;
    }
    case OpKind::UpdateSlice: {
      const TensorType& x = ops[0];
      const TensorType& v = ops[1];
      if (static_cast<int64_t>(attrs.limits.size()) != x.rank()) bad("update_slice limits must cover every axis");
      TensorType window(x.base, {});
      for (int64_t d = 0; d < x.rank(); ++d) {
        auto [s, e] = attrs.limits[d];
        if (s < 0 || s >= e || e > x.shape[d]) bad("update_slice window out of range");
        window.shape.push_back(e - s);
      }
      if (v != window) bad("update_slice value is " + v.str() + ", window wants " + window.str());
      return x;
    }
    case OpKind::Concat: {
      const TensorType& a = ops[0];
      const TensorType& b = ops[1];
      if (attrs.dims.size() != 1) bad("concat needs one dimension attribute");
      int64_t d = attrs.dims[0];
      if (a.base != b.base || a.rank() != b.rank()) bad("concat operands must agree: " + a.str() + " vs " + b.str());
      if (d < 1 || d > a.rank()) bad("concat dimension out of range");
      TensorType out = a;
      for (int64_t i = 0; i < a.rank(); ++i) {
        if (i == d - 1) continue;
        if (a.shape[i] != b.shape[i]) bad("concat operands differ on dim " + std::to_string(i + 1));
      }
      out.shape[d - 1] = a.shape[d - 1] + b.shape[d - 1];
      return out;
    }
    case OpKind::Reshape: {
      const TensorType& x = ops[0];
      if (attrs.target.base != x.base) bad("reshape cannot change base type");
      if (attrs.target.elem_count() != x.elem_count())
        bad("reshape " + x.str() + " -> " + attrs.target.str() + " changes element count");
      return attrs.target;
    }
    case OpKind::BitcastConvert: {
      const TensorType& x = ops[0];
      int64_t ws = scalar_width(x.base);
      int64_t wd = scalar_width(attrs.target.base);
      TensorType out(attrs.target.base, x.shape);
      if (ws == wd) {
        // same width: shape unchanged
      } else if (ws > wd) {
        if (ws % wd) bad("bitcast_convert widths do not divide");
        out.shape.push_back(ws / wd);
      } else {
        if (wd % ws) bad("bitcast_convert widths do not divide");
        if (x.rank() == 0 || x.shape.back() != wd / ws)
          bad("bitcast_convert " + x.str() + " -> " + scalar_name(attrs.target.base) +
              " needs a trailing dim of " + std::to_string(wd / ws));
        out.shape.pop_back();
      }
      if (attrs.target.valid() && !attrs.target.shape.empty() && out != attrs.target && attrs.target.base == out.base) {
        // declared shape, if given, must match the computed one
        if (attrs.target.shape != out.shape)
          bad("bitcast_convert declared " + attrs.target.str() + ", computed " + out.str());
      }
      return out;
    }
    case OpKind::Broadcast: {
      const TensorType& x = ops[0];
      if (attrs.target.base != x.base) bad("broadcast cannot change base type");
      int64_t out_rank = attrs.target.rank();
      if (out_rank != x.rank() + static_cast<int64_t>(attrs.dims.size()))
        bad("broadcast rank mismatch: " + x.str() + " + " + std::to_string(attrs.dims.size()) +
            " new dims vs " + attrs.target.str());
      for (size_t i = 0; i < attrs.dims.size(); ++i) {
        if (attrs.dims[i] < 1 || attrs.dims[i] > out_rank) bad("broadcast dimension out of range");
        if (i && attrs.dims[i] <= attrs.dims[i - 1]) bad("broadcast dimensions must increase");
      }
      std::vector<int64_t> kept;
      for (int64_t d = 1, j = 0; d <= out_rank; ++d) {
        if (j < static_cast<int64_t>(attrs.dims.size()) && attrs.dims[j] == d) {
          ++j;
          continue;
        }
        kept.push_back(attrs.target.shape[d - 1]);
      }
      if (kept != x.shape) bad("broadcast of " + x.str() + " cannot produce " + attrs.target.str());
      return attrs.target;
    }
    case OpKind::ReduceSum: {
      const TensorType& x = ops[0];
      if (attrs.dims.empty()) bad("reduce needs dimensions");
      TensorType out(x.base, {});
      for (size_t i = 0; i < attrs.dims.size(); ++i) {
        if (attrs.dims[i] < 1 || attrs.dims[i] > x.rank()) bad("reduce dimension out of range");
        if (i && attrs.dims[i] <= attrs.dims[i - 1]) bad("reduce dimensions must increase");
      }
      for (int64_t d = 1, j = 0; d <= x.rank(); ++d) {
        if (j < static_cast<int64_t>(attrs.dims.size()) && attrs.dims[j] == d) {
          ++j;
          continue;
        }
        out.shape.push_back(x.shape[d - 1]);
      }
      return out;
    }
    case OpKind::Transpose: {
      const TensorType& x = ops[0];
      if (static_cast<int64_t>(attrs.dims.size()) != x.rank()) bad("transpose needs a full permutation");
      std::vector<bool> seen(x.rank(), false);
      TensorType out(x.base, {});
      for (int64_t p : attrs.dims) {
        if (p < 1 || p > x.rank() || seen[p - 1]) bad("transpose dims must be a permutation");
        seen[p - 1] = true;
        out.shape.push_back(x.shape[p - 1]);
      }
      return out;
    }
    case OpKind::Dot: {
      const TensorType& a = ops[0];
      const TensorType& b = ops[1];
      if (a.base != b.base) bad("dot operands must share a base type");
      int64_t c1 = attrs.contract_lhs, c2 = attrs.contract_rhs;
      if (c1 < 1 || c1 > a.rank() || c2 < 1 || c2 > b.rank()) bad("dot contracting dims out of range");
      if (a.shape[c1 - 1] != b.shape[c2 - 1])
        bad("dot contracting dims disagree: " + a.str() + " dim " + std::to_string(c1) + " vs " + b.str() +
            " dim " + std::to_string(c2));
      TensorType out(a.base, {});
      for (int64_t d = 0; d < a.rank(); ++d)
        if (d != c1 - 1) out.shape.push_back(a.shape[d]);
      for (int64_t d = 0; d < b.rank(); ++d)
        if (d != c2 - 1) out.shape.push_back(b.shape[d]);
      return out;
    }
    case OpKind::Exp:
      if (!scalar_is_float(ops[0].base)) bad("exp needs a float base type");
      return ops[0];
    case OpKind::Divide:
    case OpKind::Add:
    case OpKind::Multiply:
    case OpKind::Maximum:
      if (ops[0] != ops[1])
        bad(std::string(op_name(kind)) + " operands must match: " + ops[0].str() + " vs " + ops[1].str());
      return ops[0];
    case OpKind::Copy:
      return ops[0];
    case OpKind::Convert:
      return TensorType(attrs.target.base, ops[0].shape);
  }
  bad("unhandled operator");
}

}  // namespace tkc
