#include <cctype>
#include <sstream>

#include "tkc/graph.hpp"

namespace tkc {

int32_t KernelGraph::add(const std::string& id, OpKind kind, OpAttrs attrs, std::vector<int32_t> operands) {
  std::vector<TensorType> optypes;
  optypes.reserve(operands.size());
  for (int32_t o : operands) {
    if (o < 0 || o >= static_cast<int32_t>(nodes.size())) throw Error("operand index out of range for " + id);
    optypes.push_back(nodes[o].type);
  }
  KernelNode n;
  n.id = id;
  n.kind = kind;
  n.type = infer_type(kind, attrs, optypes);
  n.attrs = std::move(attrs);
  n.operands = std::move(operands);
  nodes.push_back(std::move(n));
  int32_t idx = static_cast<int32_t>(nodes.size()) - 1;
  if (kind == OpKind::Parameter) {
    int64_t pi = nodes[idx].attrs.param_index;
    if (pi != static_cast<int64_t>(params.size())) throw Error("parameter indices must be dense and in order");
    params.push_back(idx);
  }
  return idx;
}

namespace {

struct Cursor {
  const std::string& text;
  size_t pos = 0;
  int line = 1;

  explicit Cursor(const std::string& t) : text(t) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("parse error at line " + std::to_string(line) + ": " + msg);
  }
  bool done() const { return pos >= text.size(); }
  char peek() const { return done() ? '\0' : text[pos]; }
  char get() {
    char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_ws(bool newlines) {
    while (!done()) {
      char c = peek();
      if (c == '#') {
        while (!done() && peek() != '\n') get();
      } else if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        get();
      } else {
        break;
      }
    }
  }
  bool eat(char c) {
    skip_ws(false);
    if (peek() == c) {
      get();
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "', found '" + peek() + "'");
  }
  std::string ident() {
    skip_ws(false);
    size_t start = pos;
    while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '.'))
      get();
    if (pos == start) fail("expected an identifier");
    return text.substr(start, pos - start);
  }
  int64_t integer() {
    skip_ws(false);
    bool neg = eat('-');
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected an integer");
    int64_t v = 0;
    while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) v = v * 10 + (get() - '0');
    return neg ? -v : v;
  }
  double number() {
    skip_ws(false);
    size_t start = pos;
    if (peek() == '-') get();
    while (!done() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.' || peek() == 'e' ||
                       peek() == 'E' || peek() == '-' || peek() == '+')) {
      if ((peek() == '-' || peek() == '+') && pos != start && text[pos - 1] != 'e' && text[pos - 1] != 'E') break;
      get();
    }
    if (pos == start) fail("expected a number");
    return std::stod(text.substr(start, pos - start));
  }
};

TensorType parse_type(Cursor& c) {
  TensorType t;
  t.base = parse_scalar_base(c.ident());
  c.expect('[');
  c.skip_ws(false);
  if (!c.eat(']')) {
    do {
      t.shape.push_back(c.integer());
    } while (c.eat(','));
    c.expect(']');
  }
  if (!t.valid()) c.fail("dimension sizes must be positive");
  return t;
}

std::vector<int64_t> parse_int_list(Cursor& c) {
  std::vector<int64_t> v;
  c.expect('[');
  if (!c.eat(']')) {
    do {
      v.push_back(c.integer());
    } while (c.eat(','));
    c.expect(']');
  }
  return v;
}

// Packs a literal list (or a splat) into row-major bytes of `t`.
std::vector<uint8_t> pack_literal(const TensorType& t, const std::vector<double>& vals, Cursor& c) {
  if (vals.size() != 1 && static_cast<int64_t>(vals.size()) != t.elem_count())
    c.fail("constant literal has " + std::to_string(vals.size()) + " values, type needs " +
           std::to_string(t.elem_count()));
  TensorValue v(t);
  for (int64_t i = 0; i < t.elem_count(); ++i) {
    double d = vals[vals.size() == 1 ? 0 : i];
    if (scalar_is_float(t.base)) v.set_float(i, static_cast<float>(d));
    else v.set_uint(i, static_cast<uint64_t>(static_cast<int64_t>(d)));
  }
  return v.bytes;
}

}  // namespace

KernelGraph parse_graph(const std::string& text) {
  Cursor c(text);
  KernelGraph g;
  std::unordered_map<std::string, int32_t> by_id;

  c.skip_ws(true);
  if (c.ident() != "ENTRY") c.fail("kernel must start with ENTRY");
  c.ident();  // entry name
  c.expect('{');

  bool saw_root = false;
  while (true) {
    c.skip_ws(true);
    if (c.eat('}')) break;
    if (c.done()) c.fail("unterminated ENTRY block");

    bool is_root = false;
    std::string id = c.ident();
    if (id == "ROOT") {
      is_root = true;
      id = c.ident();
    }
    if (by_id.count(id)) c.fail("duplicate id: " + id);
    c.expect('=');

    TensorType declared = parse_type(c);
    std::vector<int64_t> tiles;
    c.skip_ws(false);
    if (c.peek() == '{') {  // {T(t1,...)} layout annotation
      c.get();
      if (c.ident() != "T") c.fail("expected T(...) layout annotation");
      c.expect('(');
      do {
        tiles.push_back(c.integer());
      } while (c.eat(','));
      c.expect(')');
      c.expect('}');
    }

    std::string opname = c.ident();
    auto kind = parse_op_name(opname);
    if (!kind) c.fail("unknown operator: " + opname);

    OpAttrs attrs;
    std::vector<int32_t> operands;
    c.expect('(');
    if (*kind == OpKind::Parameter) {
      attrs.param_index = c.integer();
      c.expect(')');
    } else if (*kind == OpKind::Constant) {
      std::vector<double> vals;
      c.skip_ws(false);
      if (c.peek() == '{') {
        c.get();
        do {
          vals.push_back(c.number());
        } while (c.eat(','));
        c.expect('}');
      } else {
        vals.push_back(c.number());
      }
      attrs.literal = pack_literal(declared, vals, c);
      c.expect(')');
    } else if (!c.eat(')')) {
      do {
        std::string ref = c.ident();
        auto it = by_id.find(ref);
        if (it == by_id.end()) c.fail("operand '" + ref + "' is not defined");
        operands.push_back(it->second);
      } while (c.eat(','));
      c.expect(')');
    }

    while (c.eat(',')) {
      std::string key = c.ident();
      c.expect('=');
      if (key == "dimensions") {
        attrs.dims = parse_int_list(c);
      } else if (key == "contracting") {
        auto v = parse_int_list(c);
        if (v.size() != 2) c.fail("contracting wants two dims");
        attrs.contract_lhs = v[0];
        attrs.contract_rhs = v[1];
      } else if (key == "slice") {
        c.expect('{');
        do {
          c.expect('[');
          int64_t s = c.integer();
          c.expect(':');
          int64_t e = c.integer();
          if (c.eat(':')) c.fail("strided slices are not supported");
          c.expect(']');
          attrs.limits.emplace_back(s, e);
        } while (c.eat(','));
        c.expect('}');
      } else {
        c.fail("unknown attribute: " + key);
      }
    }

    // attribute defaults and target types
    switch (*kind) {
      case OpKind::Parameter:
      case OpKind::Constant:
      case OpKind::Eye:
      case OpKind::Ones:
      case OpKind::Reshape:
      case OpKind::Broadcast:
        attrs.target = declared;
        break;
      case OpKind::BitcastConvert:
      case OpKind::Convert:
        attrs.target = declared;
        break;
      case OpKind::Dot:
        if (attrs.contract_lhs == 0) {
          // default: contract the last lhs dim with the first rhs dim
          attrs.contract_lhs = operands.empty() ? 0 : g.nodes[operands[0]].type.rank();
          attrs.contract_rhs = 1;
        }
        break;
      default:
        break;
    }

    int32_t idx;
    try {
      idx = g.add(id, *kind, std::move(attrs), std::move(operands));
    } catch (const Error& e) {
      c.fail(std::string(e.what()) + " (node " + id + ")");
    }
    if (g.nodes[idx].type != declared)
      c.fail("node " + id + " declared " + declared.str() + " but computes " + g.nodes[idx].type.str());
    if (!tiles.empty()) g.layouts[idx] = tiles;
    by_id[id] = idx;
    if (is_root) {
      if (saw_root) c.fail("multiple ROOT nodes");
      saw_root = true;
      g.root = idx;
    }
  }
  if (!saw_root) c.fail("missing ROOT");
  for (auto& [idx, tiles] : g.layouts) {
    bool is_param = g.nodes[idx].kind == OpKind::Parameter;
    if (!is_param && idx != g.root) throw Error("layout annotations are only allowed on parameters and the root");
    const auto& shape = g.nodes[idx].type.shape;
    if (tiles.size() != shape.size()) throw Error("layout tile rank mismatch on " + g.nodes[idx].id);
    for (size_t d = 0; d < tiles.size(); ++d)
      if (tiles[d] < 1 || shape[d] % tiles[d])
        throw Error("tile size " + std::to_string(tiles[d]) + " does not divide dim " +
                    std::to_string(shape[d]) + " on " + g.nodes[idx].id);
  }
  return g;
}

std::string KernelGraph::to_text(const std::string& name) const {
  std::ostringstream os;
  os << "ENTRY " << name << " {\n";
  for (size_t i = 0; i < nodes.size(); ++i) {
    const KernelNode& n = nodes[i];
    os << "  ";
    if (static_cast<int32_t>(i) == root) os << "ROOT ";
    os << n.id << " = " << n.type.str();
    if (auto it = layouts.find(static_cast<int32_t>(i)); it != layouts.end()) {
      os << "{T(";
      for (size_t d = 0; d < it->second.size(); ++d) os << (d ? "," : "") << it->second[d];
      os << ")}";
    }
    os << ' ' << op_name(n.kind) << '(';
    if (n.kind == OpKind::Parameter) {
      os << n.attrs.param_index;
    } else if (n.kind == OpKind::Constant) {
      TensorValue v(n.type, n.attrs.literal);
      os << '{';
      for (int64_t e = 0; e < v.elem_count(); ++e) {
        if (e) os << ',';
        if (scalar_is_float(n.type.base)) os << v.get_float(e);
        else if (scalar_is_signed(n.type.base)) os << v.get_int(e);
        else os << v.get_uint(e);
      }
      os << '}';
    } else {
      for (size_t o = 0; o < n.operands.size(); ++o) os << (o ? ", " : "") << nodes[n.operands[o]].id;
    }
    os << ')';
    if (!n.attrs.dims.empty()) {
      os << ", dimensions=[";
      for (size_t d = 0; d < n.attrs.dims.size(); ++d) os << (d ? "," : "") << n.attrs.dims[d];
      os << ']';
    }
    if (!n.attrs.limits.empty()) {
      os << ", slice={";
      for (size_t d = 0; d < n.attrs.limits.size(); ++d)
        os << (d ? "," : "") << '[' << n.attrs.limits[d].first << ':' << n.attrs.limits[d].second << ']';
      os << '}';
    }
    if (n.kind == OpKind::Dot) os << ", contracting=[" << n.attrs.contract_lhs << ',' << n.attrs.contract_rhs << ']';
    os << '\n';
  }
  os << "}\n";
  return os.str();
}

KernelGraph expand_tiled_layout(const KernelGraph& g) {
  if (g.layouts.empty()) return g;
  KernelGraph out;
  std::vector<int32_t> remap(g.nodes.size(), -1);

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const KernelNode& n = g.nodes[i];
    auto lay = g.layouts.find(static_cast<int32_t>(i));
    bool tiled_param = n.kind == OpKind::Parameter && lay != g.layouts.end();

    if (tiled_param) {
      const auto& tiles = lay->second;
      const auto& shape = n.type.shape;
      int64_t k = n.type.rank();
      // storage order: tile-grid dims first, in-tile dims after
      std::vector<int64_t> stored;
      for (int64_t d = 0; d < k; ++d) stored.push_back(shape[d] / tiles[d]);
      for (int64_t d = 0; d < k; ++d) stored.push_back(tiles[d]);
      OpAttrs pa;
      pa.param_index = n.attrs.param_index;
      pa.target = TensorType(n.type.base, stored);
      int32_t p = out.add(n.id, OpKind::Parameter, pa, {});
      // interleave to [g1,u1,g2,u2,...] then flatten back to the logical shape
      OpAttrs ta;
      for (int64_t d = 0; d < k; ++d) {
        ta.dims.push_back(d + 1);
        ta.dims.push_back(d + 1 + k);
      }
      int32_t t = out.add(n.id + ".detile", OpKind::Transpose, ta, {p});
      OpAttrs ra;
      ra.target = n.type;
      remap[i] = out.add(n.id + ".logical", OpKind::Reshape, ra, {t});
      continue;
    }

    std::vector<int32_t> ops;
    ops.reserve(n.operands.size());
    for (int32_t o : n.operands) ops.push_back(remap[o]);
    remap[i] = out.add(n.id, n.kind, n.attrs, std::move(ops));
  }

  out.root = remap[g.root];
  auto lay = g.layouts.find(g.root);
  if (lay != g.layouts.end()) {
    const auto& tiles = lay->second;
    const auto& shape = g.nodes[g.root].type.shape;
    int64_t k = g.nodes[g.root].type.rank();
    std::vector<int64_t> interleaved;
    for (int64_t d = 0; d < k; ++d) {
      interleaved.push_back(shape[d] / tiles[d]);
      interleaved.push_back(tiles[d]);
    }
    OpAttrs ra;
    ra.target = TensorType(g.nodes[g.root].type.base, interleaved);
    int32_t r1 = out.add(g.nodes[g.root].id + ".split", OpKind::Reshape, ra, {out.root});
    OpAttrs ta;  // [g1,u1,g2,u2,...] -> [g...,u...]
    for (int64_t d = 0; d < k; ++d) ta.dims.push_back(2 * d + 1);
    for (int64_t d = 0; d < k; ++d) ta.dims.push_back(2 * d + 2);
    out.root = out.add(g.nodes[g.root].id + ".tiled", OpKind::Transpose, ta, {r1});
  }
  return out;
}

}  // namespace tkc
