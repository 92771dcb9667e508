#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"

using namespace tkc;

TEST_CASE("bundled qkv isa parses to the documented data model") {
  IsaDescription isa = test::load_isa("qkv.isa");
  CHECK(isa.hbm_size == 1048576);
  REQUIRE(isa.buffers.size() == 3);
  CHECK(isa.buffers[1].name == "d1");
  CHECK(isa.buffers[1].access_shape == std::vector<int64_t>{128});
  CHECK(isa.buffers[1].elem_shape == std::vector<int64_t>{64});
  CHECK(isa.buffers[1].base == ScalarBase::BF16);
  CHECK(isa.buffers[2].access_shape == std::vector<int64_t>{64});
  CHECK(isa.instructions.size() == 7);  // five data movement, two compute
  CHECK(validate_isa(isa, 100, 0).empty());
}

TEST_CASE("bundled gemmini isa parses to the documented data model") {
  IsaDescription isa = test::load_isa("gemmini.isa");
  int32_t spad = isa.buffer_index("spad");
  int32_t acc = isa.buffer_index("acc");
  REQUIRE(spad > 0);
  REQUIRE(acc > 0);
  CHECK(isa.buffers[spad].access_shape == std::vector<int64_t>{16384});
  CHECK(isa.buffers[spad].elem_shape == std::vector<int64_t>{16});
  CHECK(isa.buffers[spad].base == ScalarBase::I8);
  CHECK(isa.buffers[acc].access_shape == std::vector<int64_t>{1024});
  CHECK(isa.buffers[acc].base == ScalarBase::I32);
  CHECK(validate_isa(isa, 100, 0).empty());
}

TEST_CASE("isa parse errors name the offender") {
  CHECK_THROWS_WITH_AS(parse_isa("accelerator a\nhbm d0 size=16\n"
                                 "instr f alpha(n:1..4) beta(b:0..3)\n"
                                 "  in d0 start=[b] len=[m]\n"
                                 "  out d0 start=[b] len=[n]\n"
                                 "  compute {\n ROOT y = u8[`n`] copy(x)\n }\n"),
                       doctest::Contains("m"), Error);
  CHECK_THROWS_WITH_AS(parse_isa("accelerator a\nhbm d0 size=16\n"
                                 "instr f alpha(n:1..4) beta(b:0..3)\n"
                                 "  in dX start=[b] len=[n]\n"
                                 "  out d0 start=[b] len=[n]\n"
                                 "  compute {\n ROOT y = u8[`n`] copy(x)\n }\n"),
                       doctest::Contains("dX"), Error);
  CHECK_THROWS_WITH_AS(parse_isa("accelerator a\nhbm d0 size=16\n"
                                 "instr f alpha(n:1..4) beta(b:0..3)\n"
                                 "  in d0 start=[b] len=[n * n]\n"
                                 "  out d0 start=[b] len=[n]\n"
                                 "  compute {\n ROOT y = u8[`n`] copy(x)\n }\n"),
                       doctest::Contains("non-linear"), Error);
}

TEST_CASE("validator reports seeded template defects") {
  // output length says n+1 rows but the template computes n rows
  IsaDescription isa = parse_isa(
      "accelerator toy\nhbm d0 size=4096\nbuffer b1 S0=[8] S1=[4] E=i8\n"
      "instr ld alpha(n:1..4) beta(a:0..4095, o:0..7)\n"
      "  in d0 start=[a] len=[n * 4]\n"
      "  out b1 start=[o] len=[n + 1]\n"
      "  compute {\n"
      "    x1 = u8[`n * 4`] parameter(0)\n"
      "    a = u8[`n`,4] reshape(x1)\n"
      "    ROOT y = i8[`n`,4] bitcast_convert(a)\n"
      "  }\n");
  auto issues = validate_isa(isa, 20, 0);
  REQUIRE(!issues.empty());
  CHECK(issues[0].instruction == "ld");
}

TEST_CASE("instantiate_computation produces the documented graphs") {
  IsaDescription isa = test::load_isa("qkv.isa");
  const AbstractInstruction& load_rm = isa.instructions[isa.instruction_index("load_rm")];
  std::vector<int64_t> alpha{4};
  KernelGraph g = instantiate_computation(isa, load_rm, alpha);
  REQUIRE(g.nodes.size() == 3);
  CHECK(g.nodes[0].type == TensorType(ScalarBase::U8, {512}));
  CHECK(g.nodes[1].kind == OpKind::Reshape);
  CHECK(g.nodes[1].type == TensorType(ScalarBase::U8, {4, 64, 2}));
  CHECK(g.root_node().kind == OpKind::BitcastConvert);
  CHECK(g.root_node().type == TensorType(ScalarBase::BF16, {4, 64}));

  const AbstractInstruction& mov = isa.instructions[isa.instruction_index("mov")];
  KernelGraph gm = instantiate_computation(isa, mov, std::vector<int64_t>{64});
  CHECK(gm.nodes.size() == 2);
  CHECK(gm.root_node().kind == OpKind::Copy);

  const AbstractInstruction& gemm = isa.instructions[isa.instruction_index("gemm")];
  KernelGraph gg = instantiate_computation(isa, gemm, {});
  CHECK(gg.root_node().kind == OpKind::Dot);
  CHECK(gg.root_node().type == TensorType(ScalarBase::BF16, {64, 64}));

  CHECK_THROWS_AS(instantiate_computation(isa, load_rm, std::vector<int64_t>{200}), Error);
}

TEST_CASE("concretize_slices follows the address maps") {
  IsaDescription isa = test::load_isa("qkv.isa");
  const AbstractInstruction& load_rm = isa.instructions[isa.instruction_index("load_rm")];

  std::vector<int64_t> alpha{4};
  std::vector<int64_t> beta{0, 2};  // addr_in, addr_out
  auto slices = concretize_slices(isa, load_rm, alpha, beta);
  REQUIRE(slices.size() == 2);
  CHECK(slices[0].buffer == 1);  // output first
  CHECK(slices[0].start == std::vector<int64_t>{2});
  CHECK(slices[0].end == std::vector<int64_t>{6});
  CHECK(slices[1].buffer == 0);
  CHECK(slices[1].start == std::vector<int64_t>{0});
  CHECK(slices[1].end == std::vector<int64_t>{512});

  // addr_out = 127 with n = 4 runs off the 128-row scratchpad
  CHECK_THROWS_AS(concretize_slices(isa, load_rm, alpha, std::vector<int64_t>{0, 127}), Error);

  const AbstractInstruction& store_rm = isa.instructions[isa.instruction_index("store_rm")];
  auto st = concretize_slices(isa, store_rm, std::vector<int64_t>{64}, std::vector<int64_t>{0, 24576});
  CHECK(st[0].buffer == 0);
  CHECK(st[0].start == std::vector<int64_t>{24576});
  CHECK(st[0].end == std::vector<int64_t>{32768});
}

TEST_CASE("check_validity is total and matches the constraints") {
  IsaDescription isa = test::load_isa("qkv.isa");
  const AbstractInstruction& load_rm = isa.instructions[isa.instruction_index("load_rm")];
  CHECK(check_validity(isa, load_rm, std::vector<int64_t>{4}, std::vector<int64_t>{0, 2}));
  CHECK_FALSE(check_validity(isa, load_rm, std::vector<int64_t>{200}, std::vector<int64_t>{0, 2}));
  CHECK_FALSE(check_validity(isa, load_rm, std::vector<int64_t>{4}, std::vector<int64_t>{0, 127}));

  // minimal alpha with lower-bound beta is valid across every bundled isa
  for (const char* name : {"qkv.isa", "gemmini.isa", "crossbank.isa"}) {
    IsaDescription d = test::load_isa(name);
    for (const AbstractInstruction& instr : d.instructions) {
      std::vector<int64_t> a, b;
      for (auto& ad : instr.alpha) a.push_back(ad.lo);
      for (auto& bd : instr.beta) b.push_back(bd.lo);
      CHECK(check_validity(d, instr, a, b));
    }
  }
}

TEST_CASE("computation types equal slice types for every sampled valid pair") {
  test::Rng rng(2718);
  for (const char* name : {"qkv.isa", "gemmini.isa", "crossbank.isa"}) {
    IsaDescription isa = test::load_isa(name);
    for (const AbstractInstruction& instr : isa.instructions) {
      int found = 0;
      for (int tries = 0; tries < 400 && found < 10; ++tries) {
        std::vector<int64_t> a, b;
        for (auto& d : instr.alpha) a.push_back(rng.range(d.lo, std::min(d.hi, d.lo + 64)));
        for (auto& d : instr.beta) b.push_back(rng.range(d.lo, std::min(d.hi, d.lo + 256)));
        if (!check_validity(isa, instr, a, b)) continue;
        ++found;
        KernelGraph g = instantiate_computation(isa, instr, a);
        auto slices = concretize_slices(isa, instr, a, b);
        CHECK(g.root_node().type == isa.buffers[slices[0].buffer].slice_type(slices[0].lens()));
        for (size_t i = 0; i < instr.inputs.size(); ++i)
          CHECK(g.nodes[g.params[i]].type ==
                isa.buffers[slices[i + 1].buffer].slice_type(slices[i + 1].lens()));
      }
      CHECK(found > 0);
    }
  }
}

TEST_CASE("attr expressions evaluate and print") {
  IsaDescription isa = test::load_isa("qkv.isa");
  const AbstractInstruction& load_rm = isa.instructions[isa.instruction_index("load_rm")];
  // input length is n * 128 over (alpha ++ beta)
  std::vector<int64_t> attrs{3, 100, 5};
  CHECK(load_rm.inputs[0].len[0].eval(attrs) == 384);
  CHECK(load_rm.inputs[0].start[0].eval(attrs) == 100);
  CHECK(load_rm.constraints.size() == 1);
}
