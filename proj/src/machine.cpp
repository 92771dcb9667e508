#include <algorithm>
#include <functional>
#include <sstream>

#include "tkc/machine.hpp"

namespace tkc {

MemoryState initial_state(const IsaDescription& isa) {
  MemoryState m;
  m.buffers.reserve(isa.buffers.size());
  for (const TensorBuffer& b : isa.buffers) m.buffers.emplace_back(b.full_type());
  return m;
}

namespace {

// Copies whole granularity cells; the access index walks an odometer over the
// slice window.
void for_each_cell(const TensorBuffer& buf, const DataSlice& s,
                   const std::function<void(int64_t src_cell, int64_t dst_cell)>& fn) {
  std::vector<int64_t> lens = s.lens();
  int64_t cells = 1;
  for (int64_t l : lens) cells *= l;
  std::vector<int64_t> idx(lens.size(), 0), abs(lens.size(), 0);
  for (int64_t c = 0; c < cells; ++c) {
    for (size_t d = 0; d < lens.size(); ++d) abs[d] = idx[d] + s.start[d];
    fn(flat_index(buf.access_shape, abs), c);
    next_index(lens, idx);
  }
}

}  // namespace

TensorValue read_slice(const TensorBuffer& buf, const TensorValue& data, const DataSlice& s) {
  TensorValue out(buf.slice_type(s.lens()));
  int64_t cell = buf.elem_bytes();
  for_each_cell(buf, s, [&](int64_t src, int64_t dst) {
    std::memcpy(out.bytes.data() + dst * cell, data.bytes.data() + src * cell, cell);
  });
  return out;
}

void write_slice(const TensorBuffer& buf, TensorValue& data, const DataSlice& s, const TensorValue& v) {
  if (v.type != buf.slice_type(s.lens())) throw Error("write_slice: value type mismatch");
  int64_t cell = buf.elem_bytes();
  for_each_cell(buf, s, [&](int64_t dst, int64_t src) {
    std::memcpy(data.bytes.data() + dst * cell, v.bytes.data() + src * cell, cell);
  });
}

void execute_instruction(const IsaDescription& isa, MemoryState& m, const ConcreteInstruction& c) {
  const AbstractInstruction& instr = isa.instructions.at(c.instr);
  if (!check_validity(isa, instr, c.alpha, c.beta))
    throw Error("invalid concrete instruction " + instr.name);
  std::vector<DataSlice> slices = concretize_slices(isa, instr, c.alpha, c.beta);

  std::vector<TensorValue> args;
  args.reserve(instr.inputs.size());
  for (size_t i = 0; i < instr.inputs.size(); ++i) {
    const DataSlice& s = slices[i + 1];
    args.push_back(read_slice(isa.buffers[s.buffer], m.buffers[s.buffer], s));
  }
  KernelGraph g = instantiate_computation(isa, instr, c.alpha);
  TensorValue result = evaluate(g, args);
  const DataSlice& out = slices[0];
  write_slice(isa.buffers[out.buffer], m.buffers[out.buffer], out, result);
}

std::vector<uint8_t> run_assembly(const IsaDescription& isa, const Assembly& a,
                                  const std::vector<TensorValue>& inputs, int64_t out_bytes) {
  MemoryState m = initial_state(isa);
  TensorValue& hbm = m.buffers[0];
  int64_t off = 0;
  for (const TensorValue& x : inputs) {
    if (off + x.type.byte_size() > isa.hbm_size) throw Error("inputs overflow HBM");
    std::memcpy(hbm.bytes.data() + off, x.bytes.data(), x.bytes.size());
    off += x.type.byte_size();
  }
  if (!a.const_image.empty()) {
    if (a.const_offset < off)
      throw Error("constant image at " + std::to_string(a.const_offset) + " overlaps inputs");
    if (a.const_offset + static_cast<int64_t>(a.const_image.size()) > isa.hbm_size)
      throw Error("constant image overflows HBM");
    std::memcpy(hbm.bytes.data() + a.const_offset, a.const_image.data(), a.const_image.size());
  }
  for (const ConcreteInstruction& c : a.instructions) execute_instruction(isa, m, c);
  if (out_bytes > isa.hbm_size) throw Error("output window exceeds HBM");
  return std::vector<uint8_t>(hbm.bytes.begin(), hbm.bytes.begin() + out_bytes);
}

std::string assembly_to_text(const IsaDescription& isa, const Assembly& a) {
  std::ostringstream os;
  for (const ConcreteInstruction& c : a.instructions) {
    const AbstractInstruction& instr = isa.instructions.at(c.instr);
    os << instr.name << '(';
    bool first = true;
    for (size_t i = 0; i < instr.alpha.size(); ++i, first = false)
      os << (first ? "" : ", ") << instr.alpha[i].name << '=' << c.alpha[i];
    for (size_t i = 0; i < instr.beta.size(); ++i, first = false)
      os << (first ? "" : ", ") << instr.beta[i].name << '=' << c.beta[i];
    os << ")\n";
  }
  if (!a.const_image.empty())
    os << "CONST offset=" << a.const_offset << " hex=" << hex_encode(a.const_image) << "\n";
  return os.str();
}

Assembly assembly_from_text(const IsaDescription& isa, const std::string& text) {
  Assembly a;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto fail = [&](const std::string& m) {
      throw Error("asm parse error at line " + std::to_string(lineno) + ": " + m);
    };
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    if (line.rfind("CONST", 0) == 0) {
      std::istringstream cs(line.substr(5));
      std::string tok;
      while (cs >> tok) {
        if (tok.rfind("offset=", 0) == 0) a.const_offset = std::stoll(tok.substr(7));
        else if (tok.rfind("hex=", 0) == 0) a.const_image = hex_decode(tok.substr(4));
        else fail("bad CONST field '" + tok + "'");
      }
      continue;
    }

    size_t paren = line.find('(');
    if (paren == std::string::npos || line.back() != ')') fail("expected name(attr=val, ...)");
    std::string name = line.substr(0, paren);
    int32_t idx = isa.instruction_index(name);
    if (idx < 0) fail("unknown instruction '" + name + "'");
    const AbstractInstruction& instr = isa.instructions[idx];

    ConcreteInstruction c;
    c.instr = idx;
    c.alpha.assign(instr.alpha.size(), 0);
    c.beta.assign(instr.beta.size(), 0);
    std::vector<bool> set(instr.alpha.size() + instr.beta.size(), false);
    std::string args = line.substr(paren + 1, line.size() - paren - 2);
    std::istringstream as(args);
    std::string kv;
    while (std::getline(as, kv, ',')) {
      size_t eq = kv.find('=');
      if (eq == std::string::npos) fail("expected attr=val in '" + kv + "'");
      std::string key = kv.substr(0, eq);
      key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
      int64_t val = std::stoll(kv.substr(eq + 1));
      bool found = false;
      for (size_t i = 0; i < instr.alpha.size(); ++i)
        if (instr.alpha[i].name == key) {
          c.alpha[i] = val;
          set[i] = true;
          found = true;
        }
      for (size_t i = 0; i < instr.beta.size(); ++i)
        if (instr.beta[i].name == key) {
          c.beta[i] = val;
          set[instr.alpha.size() + i] = true;
          found = true;
        }
      if (!found) fail("instruction " + name + " has no attribute '" + key + "'");
    }
    for (size_t i = 0; i < set.size(); ++i)
      if (!set[i]) fail("instruction " + name + " is missing attribute '" + instr.attr(i).name + "'");
    a.instructions.push_back(std::move(c));
  }
  return a;
}

}  // namespace tkc
