#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>

#include "tkc/isa.hpp"

namespace tkc {

int64_t AttrExpr::eval(std::span<const int64_t> attrs) const {
  int64_t v = c0;
  for (const Term& t : terms) v += t.coef * attrs[t.index];
  return v;
}

std::string AttrExpr::str() const {
  std::ostringstream os;
  bool first = true;
  if (c0 || terms.empty()) {
    os << c0;
    first = false;
  }
  for (const Term& t : terms) {
    if (!first) os << (t.coef < 0 ? " - " : " + ");
    else if (t.coef < 0) os << "-";
    first = false;
    int64_t a = std::abs(t.coef);
    if (a != 1) os << a << "*";
    os << t.name;
  }
  return os.str();
}

std::string LinearConstraint::str() const {
  return expr.str() + (kind == Kind::LE ? " <= 0" : " == 0");
}

int64_t TensorBuffer::elem_bytes() const {
  int64_t n = scalar_width(base);
  for (int64_t d : elem_shape) n *= d;
  return n;
}

int64_t TensorBuffer::capacity_bytes() const {
  int64_t n = elem_bytes();
  for (int64_t d : access_shape) n *= d;
  return n;
}

TensorType TensorBuffer::full_type() const {
  std::vector<int64_t> shape = access_shape;
  shape.insert(shape.end(), elem_shape.begin(), elem_shape.end());
  return TensorType(base, std::move(shape));
}

TensorType TensorBuffer::slice_type(std::span<const int64_t> lens) const {
  std::vector<int64_t> shape(lens.begin(), lens.end());
  shape.insert(shape.end(), elem_shape.begin(), elem_shape.end());
  return TensorType(base, std::move(shape));
}

int32_t IsaDescription::buffer_index(const std::string& n) const {
  for (size_t i = 0; i < buffers.size(); ++i)
    if (buffers[i].name == n) return static_cast<int32_t>(i);
  return -1;
}

int32_t IsaDescription::instruction_index(const std::string& n) const {
  for (size_t i = 0; i < instructions.size(); ++i)
    if (instructions[i].name == n) return static_cast<int32_t>(i);
  return -1;
}

std::vector<int64_t> concat_attrs(std::span<const int64_t> alpha, std::span<const int64_t> beta) {
  std::vector<int64_t> v(alpha.begin(), alpha.end());
  v.insert(v.end(), beta.begin(), beta.end());
  return v;
}

std::vector<int64_t> DataSlice::lens() const {
  std::vector<int64_t> l(start.size());
  for (size_t i = 0; i < start.size(); ++i) l[i] = end[i] - start[i];
  return l;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Lines {
  std::vector<std::string> lines;
  size_t at = 0;

  explicit Lines(const std::string& text) {
    std::istringstream is(text);
    std::string l;
    while (std::getline(is, l)) {
      auto hash = l.find('#');
      if (hash != std::string::npos) l.resize(hash);
      lines.push_back(l);
    }
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("isa parse error at line " + std::to_string(at) + ": " + msg);
  }
  bool done() const { return at >= lines.size(); }
  // next non-blank line, trimmed
  bool next(std::string& out) {
    while (at < lines.size()) {
      std::string l = lines[at++];
      size_t b = l.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      size_t e = l.find_last_not_of(" \t\r");
      out = l.substr(b, e - b + 1);
      return true;
    }
    return false;
  }
  void push_back() { --at; }
};

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> w;
  std::istringstream is(s);
  std::string t;
  while (is >> t) w.push_back(t);
  return w;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

// Resolves names against decls; index = -1 names are errors.
struct AttrScope {
  const std::vector<AttrDecl>* alpha = nullptr;
  const std::vector<AttrDecl>* beta = nullptr;

  int32_t find(const std::string& n) const {
    for (size_t i = 0; i < alpha->size(); ++i)
      if ((*alpha)[i].name == n) return static_cast<int32_t>(i);
    for (size_t i = 0; i < beta->size(); ++i)
      if ((*beta)[i].name == n) return static_cast<int32_t>(alpha->size() + i);
    return -1;
  }
};

// expr := term (('+'|'-') term)*   term := INT ['*' IDENT] | IDENT ['*' INT]
AttrExpr parse_expr(const std::string& s, const AttrScope& scope, const std::string& ctx) {
  AttrExpr e;
  size_t i = 0;
  auto skip = [&] { while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i; };
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  int sign = 1;
  bool expect_term = true;
  while (true) {
    skip();
    if (i >= s.size()) break;
    if (!expect_term) {
      if (s[i] == '+') sign = 1;
      else if (s[i] == '-') sign = -1;
      else throw Error("bad expression '" + s + "' in " + ctx);
      ++i;
      expect_term = true;
      continue;
    }
    int64_t coef = 1;
    std::string name;
    if (s[i] == '-') {
      sign = -sign;
      ++i;
      skip();
    }
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      int64_t v = 0;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) v = v * 10 + (s[i++] - '0');
      skip();
      if (i < s.size() && s[i] == '*') {
        ++i;
        skip();
        coef = v;
      } else {
        e.c0 += sign * v;
        sign = 1;
        expect_term = false;
        continue;
      }
    }
    skip();
    if (i >= s.size() || !is_ident_start(s[i])) throw Error("bad expression '" + s + "' in " + ctx);
    size_t b = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    name = s.substr(b, i - b);
    skip();
    if (i < s.size() && s[i] == '*') {
      ++i;
      skip();
      int64_t v = 0;
      if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i])))
        throw Error("non-linear expression '" + s + "' in " + ctx);
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) v = v * 10 + (s[i++] - '0');
      coef *= v;
    }
    int32_t idx = scope.find(name);
    if (idx < 0) throw Error("undeclared attribute '" + name + "' in " + ctx);
    AttrExpr::Term t;
    t.name = name;
    t.index = idx;
    t.coef = sign * coef;
    if (t.coef != 0) e.terms.push_back(t);
    sign = 1;
    expect_term = false;
  }
  if (expect_term && !e.terms.empty()) throw Error("bad expression '" + s + "' in " + ctx);
  return e;
}

// comma-split at depth 0 of [] and ()
std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char ch : s) {
    if (ch == '[' || ch == '(') ++depth;
    if (ch == ']' || ch == ')') --depth;
    if (ch == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<AttrExpr> parse_expr_list(const std::string& bracketed, const AttrScope& scope,
                                      const std::string& ctx) {
  if (bracketed.empty() || bracketed.front() != '[' || bracketed.back() != ']')
    throw Error("expected [...] in " + ctx);
  std::vector<AttrExpr> out;
  std::string inner = bracketed.substr(1, bracketed.size() - 2);
  if (inner.find_first_not_of(" \t") == std::string::npos) return out;
  for (const std::string& part : split_commas(inner)) out.push_back(parse_expr(part, scope, ctx));
  return out;
}

// key=value tokens where value may contain no spaces
std::string take_kv(const std::vector<std::string>& words, size_t& i, const std::string& key,
                    const std::string& ctx) {
  if (i >= words.size() || !starts_with(words[i], key + "="))
    throw Error("expected " + key + "=... in " + ctx);
  return words[i++].substr(key.size() + 1);
}

std::vector<int64_t> parse_int_list_brackets(const std::string& s, const std::string& ctx) {
  if (s.empty() || s.front() != '[' || s.back() != ']') throw Error("expected [...] in " + ctx);
  std::vector<int64_t> v;
  std::string inner = s.substr(1, s.size() - 2);
  if (inner.find_first_not_of(" \t") == std::string::npos) return v;
  for (const std::string& p : split_commas(inner)) v.push_back(std::stoll(p));
  return v;
}

std::vector<AttrDecl> parse_attr_decls(const std::string& s, const std::string& ctx) {
  // "n:1..128, addr:0..127" (possibly empty)
  std::vector<AttrDecl> out;
  if (s.find_first_not_of(" \t") == std::string::npos) return out;
  for (const std::string& part : split_commas(s)) {
    auto colon = part.find(':');
    auto dots = part.find("..");
    if (colon == std::string::npos || dots == std::string::npos || dots < colon)
      throw Error("bad attribute declaration '" + part + "' in " + ctx);
    AttrDecl d;
    d.name = part.substr(0, colon);
    d.name.erase(std::remove_if(d.name.begin(), d.name.end(), ::isspace), d.name.end());
    d.lo = std::stoll(part.substr(colon + 1, dots - colon - 1));
    d.hi = std::stoll(part.substr(dots + 2));
    if (d.lo > d.hi) throw Error("empty attribute range for '" + d.name + "' in " + ctx);
    out.push_back(d);
  }
  return out;
}

// require clause: conjunctions of <expr> (<=|<|==|=|>=|>) <expr>, joined by &&
std::vector<LinearConstraint> parse_require(const std::string& s, const AttrScope& scope,
                                            const std::string& ctx) {
  std::vector<LinearConstraint> out;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t amp = s.find("&&", pos);
    std::string clause = s.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
    pos = amp == std::string::npos ? s.size() : amp + 2;

    static const std::pair<const char*, int> ops[] = {{"<=", 0}, {">=", 1}, {"==", 2}, {"<", 3}, {">", 4}, {"=", 2}};
    size_t opos = std::string::npos;
    int opkind = -1;
    size_t oplen = 0;
    for (auto& [op, k] : ops) {
      size_t p = clause.find(op);
      if (p != std::string::npos) {
        opos = p;
        opkind = k;
        oplen = std::strlen(op);
        break;
      }
    }
    if (opos == std::string::npos) throw Error("no comparison in constraint '" + clause + "' in " + ctx);
    AttrExpr lhs = parse_expr(clause.substr(0, opos), scope, ctx);
    AttrExpr rhs = parse_expr(clause.substr(opos + oplen), scope, ctx);
    // normalize to expr <= 0 / expr == 0
    auto sub = [](const AttrExpr& a, const AttrExpr& b) {
      AttrExpr r = a;
      r.c0 -= b.c0;
      for (AttrExpr::Term t : b.terms) {
        t.coef = -t.coef;
        r.terms.push_back(t);
      }
      return r;
    };
    LinearConstraint c;
    switch (opkind) {
      case 0: c.expr = sub(lhs, rhs); c.kind = LinearConstraint::Kind::LE; break;                  // a <= b
      case 1: c.expr = sub(rhs, lhs); c.kind = LinearConstraint::Kind::LE; break;                  // a >= b
      case 2: c.expr = sub(lhs, rhs); c.kind = LinearConstraint::Kind::EQ; break;                  // a == b
      case 3: c.expr = sub(lhs, rhs); c.expr.c0 += 1; c.kind = LinearConstraint::Kind::LE; break;  // a < b
      case 4: c.expr = sub(rhs, lhs); c.expr.c0 += 1; c.kind = LinearConstraint::Kind::LE; break;  // a > b
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Parses the compute template (mini kernel text with `expr` dims).
SymbolicGraph parse_template(const std::vector<std::string>& lines, const AttrScope& scope,
                             const std::string& ctx) {
  SymbolicGraph sg;
  std::unordered_map<std::string, int32_t> by_id;
  bool saw_root = false;

  for (const std::string& raw : lines) {
    std::string l = raw;
    size_t b = l.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    l = l.substr(b);
    if (l.back() == ';') l.pop_back();

    SymbolicNode n;
    bool is_root = false;
    std::istringstream is(l);
    std::string id;
    is >> id;
    if (id == "ROOT") {
      is_root = true;
      is >> id;
    }
    n.id = id;
    std::string eq;
    is >> eq;
    if (eq != "=") throw Error("bad template line '" + raw + "' in " + ctx);
    std::string rest;
    std::getline(is, rest);

    // type: base[dims] where a dim is INT or `expr`
    size_t p = rest.find_first_not_of(" \t");
    size_t lb = rest.find('[', p);
    if (lb == std::string::npos) throw Error("bad template type in '" + raw + "' (" + ctx + ")");
    n.base = parse_scalar_base(rest.substr(p, lb - p));
    size_t rb = lb;
    int depth = 0;
    for (; rb < rest.size(); ++rb) {
      if (rest[rb] == '[') ++depth;
      if (rest[rb] == ']' && --depth == 0) break;
    }
    if (rb >= rest.size()) throw Error("unterminated shape in '" + raw + "' (" + ctx + ")");
    std::string dims = rest.substr(lb + 1, rb - lb - 1);
    if (dims.find_first_not_of(" \t") != std::string::npos) {
      for (std::string part : split_commas(dims)) {
        // strip backquotes; plain integers are constant expressions
        part.erase(std::remove(part.begin(), part.end(), '`'), part.end());
        n.dims.push_back(parse_expr(part, scope, ctx));
      }
    }

    // op(args...), attrs
    std::string tail = rest.substr(rb + 1);
    size_t op_b = tail.find_first_not_of(" \t");
    size_t paren = tail.find('(', op_b);
    if (paren == std::string::npos) throw Error("bad template op in '" + raw + "' (" + ctx + ")");
    std::string opname = tail.substr(op_b, paren - op_b);
    auto kind = parse_op_name(opname);
    if (!kind) throw Error("unknown operator '" + opname + "' in template (" + ctx + ")");
    n.kind = *kind;
    size_t close = tail.find(')', paren);
    if (close == std::string::npos) throw Error("bad template args in '" + raw + "' (" + ctx + ")");
    std::string args = tail.substr(paren + 1, close - paren - 1);

    if (n.kind == OpKind::Parameter) {
      n.lit.param_index = std::stoll(args);
    } else if (args.find_first_not_of(" \t") != std::string::npos) {
      for (std::string part : split_commas(args)) {
        part.erase(std::remove_if(part.begin(), part.end(), ::isspace), part.end());
        auto it = by_id.find(part);
        if (it == by_id.end()) throw Error("template operand '" + part + "' undefined (" + ctx + ")");
        n.operands.push_back(it->second);
      }
    }

    // optional ", dimensions=[...]" / ", contracting=[...]" / ", slice={...}"
    std::string attrs_part = tail.substr(close + 1);
    for (std::string part : split_commas(attrs_part)) {
      size_t q = part.find_first_not_of(" \t");
      if (q == std::string::npos) continue;
      part = part.substr(q);
      if (starts_with(part, "dimensions=")) {
        n.lit.dims = parse_int_list_brackets(part.substr(11), ctx);
      } else if (starts_with(part, "contracting=")) {
        auto v = parse_int_list_brackets(part.substr(12), ctx);
        if (v.size() != 2) throw Error("contracting wants two dims (" + ctx + ")");
        n.lit.contract_lhs = v[0];
        n.lit.contract_rhs = v[1];
      } else {
        throw Error("unsupported template attribute '" + part + "' (" + ctx + ")");
      }
    }
    if (n.kind == OpKind::Dot && n.lit.contract_lhs == 0) {
      n.lit.contract_lhs = static_cast<int64_t>(sg.nodes[n.operands[0]].dims.size());
      n.lit.contract_rhs = 1;
    }

    if (by_id.count(n.id)) throw Error("duplicate template id '" + n.id + "' (" + ctx + ")");
    by_id[n.id] = static_cast<int32_t>(sg.nodes.size());
    if (n.kind == OpKind::Parameter) sg.params.push_back(static_cast<int32_t>(sg.nodes.size()));
    if (is_root) {
      if (saw_root) throw Error("multiple ROOT in template (" + ctx + ")");
      saw_root = true;
      sg.root = static_cast<int32_t>(sg.nodes.size());
    }
    sg.nodes.push_back(std::move(n));
  }
  if (!saw_root) throw Error("template missing ROOT (" + ctx + ")");
  // parameter indices must be dense and ordered
  for (size_t i = 0; i < sg.params.size(); ++i)
    if (sg.nodes[sg.params[i]].lit.param_index != static_cast<int64_t>(i))
      throw Error("template parameters must be numbered in order (" + ctx + ")");
  return sg;
}

}  // namespace

IsaDescription parse_isa(const std::string& text) {
  Lines in(text);
  IsaDescription isa;
  std::string l;

  while (in.next(l)) {
    auto words = split_words(l);
    if (words.empty()) continue;
    const std::string& head = words[0];

    if (head == "accelerator") {
      if (words.size() < 2) in.fail("accelerator needs a name");
      isa.name = words[1];
    } else if (head == "hbm") {
      if (words.size() < 3 || words[1] != "d0") in.fail("hbm line must name d0");
      size_t i = 2;
      isa.hbm_size = std::stoll(take_kv(words, i, "size", "hbm"));
      if (isa.hbm_size < 1) in.fail("hbm size must be >= 1");
      TensorBuffer d0;
      d0.name = "d0";
      d0.access_shape = {isa.hbm_size};
      d0.base = ScalarBase::U8;
      if (!isa.buffers.empty()) in.fail("hbm must be declared before other buffers");
      isa.buffers.push_back(std::move(d0));
    } else if (head == "buffer") {
      if (isa.buffers.empty()) in.fail("declare hbm d0 before other buffers");
      if (words.size() < 2) in.fail("buffer needs a name");
      TensorBuffer b;
      b.name = words[1];
      if (isa.buffer_index(b.name) >= 0) in.fail("duplicate buffer name " + b.name);
      size_t i = 2;
      b.access_shape = parse_int_list_brackets(take_kv(words, i, "S0", "buffer " + b.name), "buffer");
      b.elem_shape = parse_int_list_brackets(take_kv(words, i, "S1", "buffer " + b.name), "buffer");
      b.base = parse_scalar_base(take_kv(words, i, "E", "buffer " + b.name));
      for (int64_t d : b.access_shape)
        if (d < 1) in.fail("buffer access dims must be positive");
      for (int64_t d : b.elem_shape)
        if (d < 1) in.fail("buffer element dims must be positive");
      isa.buffers.push_back(std::move(b));
    } else if (head == "instr") {
      if (isa.buffers.empty()) in.fail("declare the data model before instructions");
      AbstractInstruction instr;
      // instr NAME alpha(...) beta(...)
      size_t ap = l.find("alpha(");
      size_t bp = l.find("beta(");
      size_t name_end = ap == std::string::npos ? l.size() : ap;
      {
        auto w = split_words(l.substr(5, name_end - 5));
        if (w.empty()) in.fail("instr needs a name");
        instr.name = w[0];
      }
      auto balanced = [&](size_t open) {
        int d = 0;
        for (size_t i = open; i < l.size(); ++i) {
          if (l[i] == '(') ++d;
          if (l[i] == ')' && --d == 0) return i;
        }
        in.fail("unbalanced parentheses in instr line");
      };
      if (ap != std::string::npos) {
        size_t close = balanced(ap + 5);
        instr.alpha = parse_attr_decls(l.substr(ap + 6, close - ap - 6), instr.name);
      }
      if (bp != std::string::npos) {
        size_t close = balanced(bp + 4);
        instr.beta = parse_attr_decls(l.substr(bp + 5, close - bp - 5), instr.name);
      }
      AttrScope scope{&instr.alpha, &instr.beta};

      bool have_out = false, have_compute = false;
      while (in.next(l)) {
        auto w = split_words(l);
        if (w.empty()) continue;
        if (w[0] == "in" || w[0] == "out") {
          if (w.size() < 2) in.fail(w[0] + " needs a buffer name");
          BufferRef ref;
          ref.buffer = isa.buffer_index(w[1]);
          if (ref.buffer < 0) in.fail("unknown buffer '" + w[1] + "' in " + instr.name);
          auto bracketed = [&](const std::string& key) {
            size_t p = l.find(key + "=[");
            if (p == std::string::npos) in.fail("expected " + key + "=[...] in " + instr.name);
            size_t open = p + key.size() + 1;
            size_t close = l.find(']', open);
            if (close == std::string::npos) in.fail("unterminated " + key + "=[...] in " + instr.name);
            return l.substr(open, close - open + 1);
          };
          ref.start = parse_expr_list(bracketed("start"), scope, instr.name);
          ref.len = parse_expr_list(bracketed("len"), scope, instr.name);
          int64_t ar = isa.buffers[ref.buffer].access_rank();
          if (static_cast<int64_t>(ref.start.size()) != ar || static_cast<int64_t>(ref.len.size()) != ar)
            in.fail("slice rank mismatch for buffer " + w[1] + " in " + instr.name);
          if (w[0] == "in") {
            instr.inputs.push_back(std::move(ref));
          } else {
            if (have_out) in.fail("instruction " + instr.name + " has two outputs");
            instr.output = std::move(ref);
            have_out = true;
          }
        } else if (w[0] == "require") {
          auto cs = parse_require(l.substr(8), scope, instr.name);
          instr.constraints.insert(instr.constraints.end(), cs.begin(), cs.end());
        } else if (w[0] == "compute") {
          if (l.find('{') == std::string::npos) in.fail("compute needs a { ... } block");
          std::vector<std::string> body;
          std::string bl;
          bool closed = false;
          while (in.next(bl)) {
            if (bl == "}") {
              closed = true;
              break;
            }
            body.push_back(bl);
          }
          if (!closed) in.fail("unterminated compute block in " + instr.name);
          instr.compute = parse_template(body, scope, instr.name);
          // template dims must not reference beta
          for (const auto& n : instr.compute.nodes)
            for (const auto& e : n.dims)
              for (const auto& t : e.terms)
                if (t.index >= instr.n_alpha())
                  in.fail("template of " + instr.name + " references addressing attribute '" + t.name + "'");
          have_compute = true;
        } else {
          in.push_back();
          break;
        }
      }
      if (!have_out) throw Error("instruction " + instr.name + " has no output");
      if (!have_compute) throw Error("instruction " + instr.name + " has no compute block");
      if (instr.compute.params.size() != instr.inputs.size())
        throw Error("instruction " + instr.name + ": template has " +
                    std::to_string(instr.compute.params.size()) + " parameters but " +
                    std::to_string(instr.inputs.size()) + " declared inputs");
      if (isa.instruction_index(instr.name) >= 0) throw Error("duplicate instruction " + instr.name);
      isa.instructions.push_back(std::move(instr));
    } else {
      in.fail("unknown directive '" + head + "'");
    }
  }
  if (isa.buffers.empty()) throw Error("isa has no hbm declaration");
  return isa;
}

// ---------------------------------------------------------------------------
// Instantiation and validity

KernelGraph instantiate_symbolic(const SymbolicGraph& sg, std::span<const int64_t> attrs) {
  KernelGraph g;
  std::vector<int32_t> remap(sg.nodes.size());
  for (size_t i = 0; i < sg.nodes.size(); ++i) {
    const SymbolicNode& n = sg.nodes[i];
    TensorType t(n.base, {});
    for (const AttrExpr& e : n.dims) t.shape.push_back(e.eval(attrs));
    if (!t.valid()) throw Error("template node " + n.id + " instantiates to invalid " + t.str());
    OpAttrs a = n.lit;
    switch (n.kind) {
      case OpKind::Parameter:
      case OpKind::Constant:
      case OpKind::Eye:
      case OpKind::Ones:
      case OpKind::Reshape:
      case OpKind::Broadcast:
      case OpKind::BitcastConvert:
      case OpKind::Convert:
        a.target = t;
        break;
      default:
        break;
    }
    std::vector<int32_t> ops;
    ops.reserve(n.operands.size());
    for (int32_t o : n.operands) ops.push_back(remap[o]);
    remap[i] = g.add(n.id, n.kind, std::move(a), std::move(ops));
    if (g.nodes[remap[i]].type != t)
      throw Error("template node " + n.id + " declares " + t.str() + " but computes " +
                  g.nodes[remap[i]].type.str());
  }
  g.root = remap[sg.root];
  return g;
}

namespace {

void check_alpha_bounds(const AbstractInstruction& instr, std::span<const int64_t> alpha) {
  if (static_cast<int64_t>(alpha.size()) != instr.n_alpha())
    throw Error(instr.name + ": alpha arity mismatch");
  for (int64_t i = 0; i < instr.n_alpha(); ++i)
    if (alpha[i] < instr.alpha[i].lo || alpha[i] > instr.alpha[i].hi)
      throw Error(instr.name + ": attribute " + instr.alpha[i].name + "=" + std::to_string(alpha[i]) +
                  " out of bounds");
}

}  // namespace

KernelGraph instantiate_computation(const IsaDescription&, const AbstractInstruction& instr,
                                    std::span<const int64_t> alpha) {
  check_alpha_bounds(instr, alpha);
  std::vector<int64_t> attrs(alpha.begin(), alpha.end());
  attrs.resize(instr.alpha.size() + instr.beta.size(), 0);  // beta never appears in templates
  return instantiate_symbolic(instr.compute, attrs);
}

std::vector<DataSlice> concretize_slices(const IsaDescription& isa, const AbstractInstruction& instr,
                                         std::span<const int64_t> alpha, std::span<const int64_t> beta) {
  if (static_cast<int64_t>(beta.size()) != instr.n_beta()) throw Error(instr.name + ": beta arity mismatch");
  std::vector<int64_t> attrs = concat_attrs(alpha, beta);
  std::vector<DataSlice> out;
  auto conc = [&](const BufferRef& ref) {
    DataSlice s;
    s.buffer = ref.buffer;
    const TensorBuffer& buf = isa.buffers[ref.buffer];
    for (size_t d = 0; d < ref.start.size(); ++d) {
      int64_t st = ref.start[d].eval(attrs);
      int64_t ln = ref.len[d].eval(attrs);
      if (st < 0 || ln < 1 || st + ln > buf.access_shape[d])
        throw Error(instr.name + ": slice [" + std::to_string(st) + ":" + std::to_string(st + ln) +
                    ") leaves buffer " + buf.name + " (dim " + std::to_string(d + 1) + ")");
      s.start.push_back(st);
      s.end.push_back(st + ln);
    }
    out.push_back(std::move(s));
  };
  conc(instr.output);
  for (const BufferRef& r : instr.inputs) conc(r);
  return out;
}

bool check_validity(const IsaDescription& isa, const AbstractInstruction& instr,
                    std::span<const int64_t> alpha, std::span<const int64_t> beta) {
  if (static_cast<int64_t>(alpha.size()) != instr.n_alpha() ||
      static_cast<int64_t>(beta.size()) != instr.n_beta())
    return false;
  for (int64_t i = 0; i < instr.n_alpha(); ++i)
    if (alpha[i] < instr.alpha[i].lo || alpha[i] > instr.alpha[i].hi) return false;
  for (int64_t i = 0; i < instr.n_beta(); ++i)
    if (beta[i] < instr.beta[i].lo || beta[i] > instr.beta[i].hi) return false;
  std::vector<int64_t> attrs = concat_attrs(alpha, beta);
  for (const LinearConstraint& c : instr.constraints) {
    int64_t v = c.expr.eval(attrs);
    if (c.kind == LinearConstraint::Kind::LE ? v > 0 : v != 0) return false;
  }
  try {
    concretize_slices(isa, instr, alpha, beta);
  } catch (const Error&) {
    return false;
  }
  return true;
}

std::vector<ValidationIssue> validate_isa(const IsaDescription& isa, int samples, uint64_t seed) {
  std::vector<ValidationIssue> issues;
  std::mt19937_64 rng(seed);
  for (const AbstractInstruction& instr : isa.instructions) {
    for (int s = 0; s < samples; ++s) {
      // rejection-sample alpha against the alpha-only constraint projection
      std::vector<int64_t> alpha(instr.alpha.size());
      bool ok = false;
      for (int tries = 0; tries < 200 && !ok; ++tries) {
        for (size_t i = 0; i < alpha.size(); ++i) {
          uint64_t span = static_cast<uint64_t>(instr.alpha[i].hi - instr.alpha[i].lo + 1);
          alpha[i] = instr.alpha[i].lo + static_cast<int64_t>(rng() % span);
        }
        ok = true;
        std::vector<int64_t> attrs(alpha);
        attrs.resize(instr.alpha.size() + instr.beta.size(), 0);
        for (const LinearConstraint& c : instr.constraints) {
          bool alpha_only = true;
          for (const auto& t : c.expr.terms)
            if (t.index >= instr.n_alpha()) alpha_only = false;
          if (!alpha_only) continue;
          int64_t v = c.expr.eval(attrs);
          if (c.kind == LinearConstraint::Kind::LE ? v > 0 : v != 0) ok = false;
        }
      }
      if (!ok) {
        issues.push_back({instr.name, "could not sample in-bounds alpha"});
        break;
      }

      KernelGraph g;
      try {
        g = instantiate_computation(isa, instr, alpha);
      } catch (const Error& e) {
        issues.push_back({instr.name, e.what()});
        break;
      }
      std::vector<int64_t> attrs = concat_attrs(alpha, std::vector<int64_t>(instr.beta.size(), 0));
      // output/input types implied by len expressions must match the template
      auto slice_of = [&](const BufferRef& ref) {
        std::vector<int64_t> lens;
        for (const AttrExpr& e : ref.len) lens.push_back(e.eval(attrs));
        for (int64_t ln : lens)
          if (ln < 1) throw Error("non-positive slice length");
        return isa.buffers[ref.buffer].slice_type(lens);
      };
      try {
        TensorType out_t = slice_of(instr.output);
        if (out_t != g.root_node().type)
          issues.push_back({instr.name, "output slice type " + out_t.str() + " != template root " +
                                            g.root_node().type.str()});
        for (size_t i = 0; i < instr.inputs.size(); ++i) {
          TensorType in_t = slice_of(instr.inputs[i]);
          if (in_t != g.nodes[g.params[i]].type)
            issues.push_back({instr.name, "input " + std::to_string(i) + " slice type " + in_t.str() +
                                              " != template parameter " + g.nodes[g.params[i]].type.str()});
        }
      } catch (const Error& e) {
        issues.push_back({instr.name, e.what()});
      }
      if (!issues.empty() && issues.back().instruction == instr.name && s > 3) break;
    }
  }
  return issues;
}

}  // namespace tkc
