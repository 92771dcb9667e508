#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "tkc/isel.hpp"

using namespace tkc;

namespace {

std::vector<std::string> instr_names(const IsaDescription& isa, const PiiGraph& g) {
  std::vector<std::string> out;
  for (const PiiNode& n : g.nodes)
    if (n.kind == PiiNode::Kind::Instr) out.push_back(isa.instructions[n.instr].name);
  return out;
}

}  // namespace

TEST_CASE("initial e-graph wires flattened inputs and output") {
  IsaDescription isa = test::load_isa("qkv.isa");
  KernelGraph g = parse_graph(
      "ENTRY e {\n  x = bf16[64,64] parameter(0)\n  ROOT y = bf16[64,64] copy(x)\n}\n");
  EGraph eg = init_egraph(g, isa);
  CHECK(eg.node_count() == 6);  // leaf, unflatten pair, copy, flatten pair
  CHECK(eg.cls(eg.root).type == TensorType(ScalarBase::U8, {8192}));
  int inputs = 0;
  for (ClassId c = 0; c < eg.class_slots(); ++c)
    if (eg.is_canonical(c) && eg.cls(c).has_input) ++inputs;
  CHECK(inputs == 1);
}

TEST_CASE("nothing extracts from an unexplored e-graph") {
  IsaDescription isa = test::load_isa("qkv.isa");
  EGraph eg = init_egraph(test::load_kernel("qkv.hlo"), isa);
  auto res = extract_pii_graphs(eg, isa, 16, 8, 100000);
  CHECK(res.graphs.empty());
}

TEST_CASE("the attention kernel extracts the nine-node selection") {
  IsaDescription isa = test::load_isa("qkv.isa");
  PiiEnumerator en(test::load_kernel("qkv.hlo"), isa);
  auto first = en.next();
  REQUIRE(first);
  CHECK(first->instr_count() == 9);
  CHECK(instr_names(isa, *first) ==
        std::vector<std::string>{"load_rm", "load_cm", "gemm", "softmax", "mov", "load_rm", "gemm",
                                 "mov", "store_rm"});
  // buffer discipline on every def-use edge
  for (const PiiNode& n : first->nodes) {
    if (n.kind != PiiNode::Kind::Instr) continue;
    const AbstractInstruction& ai = isa.instructions[n.instr];
    for (size_t i = 0; i < n.children.size(); ++i)
      CHECK(first->nodes[n.children[i]].buffer == ai.inputs[i].buffer);
  }
  // redundant load/store variants follow the minimal one, never precede it
  for (int i = 0; i < 16; ++i) {
    auto g = en.next();
    REQUIRE(g);
    CHECK(g->instr_count() >= 9);
  }
}

TEST_CASE("the stream never repeats a graph") {
  IsaDescription isa = test::load_isa("qkv.isa");
  PiiEnumerator en(test::load_kernel("qkv.hlo"), isa);
  std::set<uint64_t> seen;
  for (int i = 0; i < 24; ++i) {
    auto g = en.next();
    if (!g) break;
    CHECK(seen.insert(g->structural_hash()).second);
  }
  CHECK(seen.size() >= 16);
}

TEST_CASE("identity kernels offer load+store and the empty selection") {
  IsaDescription isa = test::load_isa("qkv.isa");
  PiiEnumerator en(test::load_kernel("identity64.hlo"), isa);
  auto g0 = en.next();
  REQUIRE(g0);
  CHECK(g0->instr_count() == 2);  // load + store arrives first
  CHECK(instr_names(isa, *g0) == std::vector<std::string>{"load_rm", "store_rm"});
  // later exploration folds the flatten round trip and yields the empty
  // selection (rejected downstream because the input cannot be the output)
  bool saw_empty = false;
  for (int i = 0; i < 12 && !saw_empty; ++i) {
    auto g = en.next();
    if (!g) break;
    saw_empty = g->instr_count() == 0;
  }
  CHECK(saw_empty);
}

TEST_CASE("unreachable kernels exhaust the stream") {
  IsaDescription isa = test::load_isa("crossbank.isa");
  KernelGraph g = parse_graph(
      "ENTRY e {\n  x = f32[1,4] parameter(0)\n  ROOT y = f32[1,4] exp(x)\n}\n");
  PiiEnumerator en(g, isa);
  CHECK(!en.next());
  CHECK(en.status() == PiiEnumerator::End::Exhausted);
}

TEST_CASE("constant detection is a bottom-up fixpoint") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  EGraph eg = init_egraph(test::load_kernel("dot_eye.hlo"), isa);
  detect_constants(eg);
  int const_classes = 0;
  bool root_const = eg.cls(eg.root).is_const;
  for (ClassId c = 0; c < eg.class_slots(); ++c)
    if (eg.is_canonical(c) && eg.cls(c).is_const) ++const_classes;
  CHECK(const_classes >= 2);  // eye and its convert
  CHECK_FALSE(root_const);    // dot depends on the input

  // all-constant kernel: the root itself is constant
  KernelGraph allc = parse_graph(
      "ENTRY e {\n"
      "  a = i32[2,2] constant({1,2,3,4})\n"
      "  b = i32[2,2] eye()\n"
      "  ROOT d = i32[2,2] dot(a, b), contracting=[2,1]\n"
      "}\n");
  EGraph ec = init_egraph(allc, isa);
  detect_constants(ec);
  CHECK(ec.cls(ec.root).is_const);
  std::unordered_map<ClassId, TensorValue> memo;
  TensorValue v = eval_constant_class(ec, ec.root, memo);
  CHECK(v.type == TensorType(ScalarBase::U8, {16}));
  // dot(a, eye) = a
  TensorValue a(TensorType(ScalarBase::I32, {2, 2}));
  a.set_uint(0, 1), a.set_uint(1, 2), a.set_uint(2, 3), a.set_uint(3, 4);
  CHECK(v.bytes == a.bytes);

  // unmarking any marked class breaks the closure: every marked class has a
  // witness whose children are all marked
  for (ClassId c = 0; c < ec.class_slots(); ++c) {
    if (!ec.is_canonical(c) || !ec.cls(c).is_const) continue;
    bool witness = false;
    for (int32_t nid : ec.cls(c).members) {
      const ENode& n = ec.node(nid);
      if (n.tag == ENode::Tag::Input) continue;
      if (n.tag == ENode::Tag::Op && n.kind == OpKind::Parameter) continue;
      bool all = true;
      for (ClassId ch : n.children)
        if (!ec.cls(ch).is_const) all = false;
      if (all) witness = true;
    }
    CHECK(witness);
  }
}

TEST_CASE("constants extract as evaluated leaves") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  PiiEnumerator en(test::load_kernel("dot_eye.hlo"), isa);
  auto g = en.next();
  REQUIRE(g);
  int consts = 0;
  for (const PiiNode& n : g->nodes)
    if (n.kind == PiiNode::Kind::Const) {
      ++consts;
      CHECK(n.value.type == TensorType(ScalarBase::U8, {256}));
      // i8 identity matrix bytes: ones on the diagonal
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) CHECK(n.value.bytes[i * 16 + j] == (i == j ? 1 : 0));
    }
  CHECK(consts == 1);
}

TEST_CASE("substituted pii graphs are equivalent to the kernel") {
  IsaDescription isa = test::load_isa("qkv.isa");
  KernelGraph kernel = test::load_kernel("qkv.hlo");
  PiiEnumerator en(kernel, isa);
  test::Rng rng(17);
  for (int it = 0; it < 3; ++it) {
    auto g = en.next();
    REQUIRE(g);
    KernelGraph sub = g->substitute(isa);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<TensorValue> inputs;
      for (auto& t : kernel.param_types()) inputs.push_back(random_tensor(t, rng.next()));
      std::vector<TensorValue> flat;
      for (auto& v : inputs) flat.push_back(byte_flatten(v));
      TensorValue got = evaluate(sub, flat);
      TensorValue want = byte_flatten(evaluate(kernel, inputs));
      REQUIRE(got.type == want.type);
      // bf16 arithmetic is identical on both sides, so bytes match exactly
      REQUIRE(got.bytes == want.bytes);
    }
  }
}

TEST_CASE("saturation reports fixpoints and budgets") {
  IsaDescription isa = test::load_isa("crossbank.isa");
  KernelGraph g = test::load_kernel("pairsum.hlo");
  EGraph eg = init_egraph(g, isa);
  auto rules = derive_isa_rewrites(isa);
  auto ir = filter_ir_rules(baseline_ir_rules(), isa);
  rules.insert(rules.end(), ir.begin(), ir.end());
  bool fixed = false;
  for (int k = 0; k < 12 && !fixed; ++k) fixed = saturate_step(eg, rules, 1 << 20).fixpoint;
  CHECK(fixed);  // this ruleset saturates on the small kernel
  SaturateResult again = saturate_step(eg, rules, 1 << 20);
  CHECK(again.fixpoint);
}
