#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tkc/driver.hpp"
#include "tkc/fuzz.hpp"

using namespace tkc;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write file: " + path);
  f << data;
}

struct Common {
  std::string isa_path, kernel_path, asm_path, cost_path, report_path;
  uint64_t seed = 0;
  int trials = 100;
  bool deterministic = false;
  int64_t timeout_ms = 10000;
  double n_factor = 2.0;
};

CostModel load_cost(const std::string& path) {
  if (path.empty()) return CostModel::unit();
  return CostModel::parse(slurp(path));
}

GenConfig make_cfg(const Common& c) {
  GenConfig cfg;
  cfg.deterministic = c.deterministic;
  cfg.timeout_ms = c.timeout_ms;
  cfg.n_factor = c.n_factor;
  return cfg;
}

void write_report(const std::string& path, const std::string& json) {
  if (path.empty()) return;
  spit(path, json + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tensor-accelerator backend toolkit"};
  app.require_subcommand(1);

  Common c;
  std::string out_path = "out.asm";
  std::string dump_egraph, dump_egraph_dot, dump_pii, dump_csp;
  int max_candidates = 16;
  int fuzz_seeds = 100, fuzz_max_nodes = 20, fuzz_jobs = 0;
  std::string fuzz_ops, fuzz_tile, fuzz_bases;
  int isa_samples = 100;
  std::vector<std::string> input_files;

  auto add_common = [&](CLI::App* s, bool kernel, bool asm_file) {
    s->add_option("--isa", c.isa_path, "ISA description file")->required();
    if (kernel) s->add_option("--kernel", c.kernel_path, "kernel file")->required();
    if (asm_file) s->add_option("--asm", c.asm_path, "assembly file")->required();
    s->add_option("--cost-model", c.cost_path, "cost model file");
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--trials", c.trials, "verification trials");
    s->add_flag("--deterministic", c.deterministic, "bit-reproducible run");
    s->add_option("--timeout-ms", c.timeout_ms, "overall generation budget");
    s->add_option("--n-factor", c.n_factor, "termination multiplier");
    s->add_option("--report", c.report_path, "write a JSON report here");
  };

  CLI::App* cmd_compile = app.add_subcommand("compile", "compile a kernel to assembly");
  add_common(cmd_compile, true, false);
  cmd_compile->add_option("-o,--out", out_path, "assembly output path");
  cmd_compile->add_option("--dump-egraph", dump_egraph, "dump the explored e-graph");
  cmd_compile->add_option("--dump-egraph-dot", dump_egraph_dot, "dump the e-graph for graphviz");
  cmd_compile->add_option("--dump-pii", dump_pii, "dump the first extracted pii graph");
  cmd_compile->add_option("--dump-csp", dump_csp, "dump the first constraint problem");

  CLI::App* cmd_verify = app.add_subcommand("verify", "differential check of an assembly");
  add_common(cmd_verify, true, true);

  CLI::App* cmd_sim = app.add_subcommand("simulate", "run an assembly and dump output bytes");
  add_common(cmd_sim, true, true);
  cmd_sim->add_option("--input", input_files, "raw input file per parameter (else seeded random)");
  cmd_sim->add_option("-o,--out", out_path, "raw output path (else hex on stdout)")->default_val("");

  CLI::App* cmd_enum = app.add_subcommand("enumerate", "list candidate assemblies with costs");
  add_common(cmd_enum, true, false);
  cmd_enum->add_option("--max-candidates", max_candidates, "how many candidates to list");

  CLI::App* cmd_fuzz = app.add_subcommand("fuzz", "compile and verify random kernels");
  add_common(cmd_fuzz, false, false);
  cmd_fuzz->add_option("--seeds", fuzz_seeds, "number of random kernels");
  cmd_fuzz->add_option("--max-nodes", fuzz_max_nodes, "kernel size limit");
  cmd_fuzz->add_option("--ops", fuzz_ops, "comma-separated operator whitelist");
  cmd_fuzz->add_option("--tile", fuzz_tile, "base tile shape, e.g. 16,16");
  cmd_fuzz->add_option("--bases", fuzz_bases, "narrow,wide scalar bases, e.g. i8,i32");
  cmd_fuzz->add_option("--jobs", fuzz_jobs, "worker threads");

  CLI::App* cmd_inspect = app.add_subcommand("inspect-isa", "validate and summarize an ISA");
  add_common(cmd_inspect, false, false);
  cmd_inspect->add_option("--samples", isa_samples, "validation samples per instruction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_compile->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      KernelGraph g = parse_graph(slurp(c.kernel_path));
      CostModel cm = load_cost(c.cost_path);
      GenConfig cfg = make_cfg(c);

      if (!dump_egraph.empty() || !dump_egraph_dot.empty() || !dump_pii.empty() || !dump_csp.empty()) {
        KernelGraph ex = expand_tiled_layout(g);
        PiiEnumerator en(ex, isa, cfg.isel);
        std::optional<PiiGraph> first = en.next();
        if (!dump_egraph.empty()) spit(dump_egraph, egraph_to_text(en.egraph(), isa));
        if (!dump_egraph_dot.empty()) spit(dump_egraph_dot, egraph_to_dot(en.egraph(), isa));
        if (first) {
          if (!dump_pii.empty()) spit(dump_pii, first->to_text(isa));
          if (!dump_csp.empty()) {
            OrderEnumerator orders(*first, isa, true);
            if (auto item = orders.next()) {
              CspBuild b = build_csp(*first, item->order, item->live, isa, IoLayout::of(ex));
              spit(dump_csp, b.problem.to_text());
            }
          }
        }
      }

      GenReport rep = generate(g, isa, cm, cfg);
      write_report(c.report_path, rep.to_json(isa, !c.deterministic));
      if (rep.status == GenStatus::Ok) {
        spit(out_path, assembly_to_text(isa, rep.best));
        std::cout << "compiled: " << rep.best.instructions.size() << " instructions, cost "
                  << rep.best_cost << "\n";
        return 0;
      }
      if (rep.status == GenStatus::Fail) {
        std::cerr << "compilation failed: no equivalent assembly in the explored space\n";
        return 2;
      }
      std::cerr << "compilation stopped: exploration bound reached before any candidate\n";
      return 3;
    }

    if (cmd_verify->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      KernelGraph g = expand_tiled_layout(parse_graph(slurp(c.kernel_path)));
      Assembly a = assembly_from_text(isa, slurp(c.asm_path));
      if (c.trials == 0) std::cerr << "warning: trials=0 verifies nothing\n";
      VerifyReport rep = verify_soundness(isa, a, g, c.trials, c.seed);
      nlohmann::json j;
      j["trials"] = rep.trials;
      j["passed"] = rep.passed;
      if (rep.first_divergence) {
        j["divergence"] = {{"trial", rep.first_divergence->trial},
                           {"byte_offset", rep.first_divergence->byte_offset},
                           {"expected", rep.first_divergence->expected},
                           {"actual", rep.first_divergence->actual}};
      }
      write_report(c.report_path, j.dump(2));
      if (rep.passed) {
        std::cout << "verify: " << rep.trials << " trials passed\n";
        return 0;
      }
      std::cerr << "verify: divergence at trial " << rep.first_divergence->trial << ", byte "
                << rep.first_divergence->byte_offset << "\n";
      return 4;
    }

    if (cmd_sim->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      KernelGraph g = expand_tiled_layout(parse_graph(slurp(c.kernel_path)));
      Assembly a = assembly_from_text(isa, slurp(c.asm_path));
      std::vector<TensorValue> inputs;
      auto pt = g.param_types();
      if (!input_files.empty()) {
        if (input_files.size() != pt.size()) throw Error("need one --input per kernel parameter");
        for (size_t i = 0; i < pt.size(); ++i) {
          std::string raw = slurp(input_files[i]);
          inputs.push_back(byte_unflatten(pt[i], std::vector<uint8_t>(raw.begin(), raw.end())));
        }
      } else {
        for (size_t i = 0; i < pt.size(); ++i) inputs.push_back(random_tensor(pt[i], c.seed + i));
      }
      int64_t out_bytes = g.input_bytes() + g.output_bytes();
      std::vector<uint8_t> hbm = run_assembly(isa, a, inputs, out_bytes);
      std::vector<uint8_t> out(hbm.begin() + g.input_bytes(), hbm.end());
      if (out_path.empty()) {
        std::cout << hex_encode(out) << "\n";
      } else {
        spit(out_path, std::string(out.begin(), out.end()));
      }
      return 0;
    }

    if (cmd_enum->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      KernelGraph g = expand_tiled_layout(parse_graph(slurp(c.kernel_path)));
      CostModel cm = load_cost(c.cost_path);
      PiiEnumerator en(g, isa, IselConfig{});
      IoLayout io = IoLayout::of(g);
      int listed = 0;
      nlohmann::json items = nlohmann::json::array();
      while (listed < max_candidates) {
        auto pii = en.next();
        if (!pii) break;
        OrderEnumerator orders(*pii, isa, true);
        while (auto item = orders.next()) {
          CspBuild b = build_csp(*pii, item->order, item->live, isa, io);
          SolveResult sol = solve_csp(b.problem);
          if (sol.status == SolveStatus::Unsat) {
            orders.report_failure(item->live.interference);
            continue;
          }
          if (sol.status != SolveStatus::Sat) continue;
          Assembly a = emit_assembly(*pii, item->order, isa, b, sol.values, io);
          double cost = evaluate_cost(a, isa, cm);
          std::cout << "candidate " << listed << ": cost=" << cost << " instructions="
                    << a.instructions.size() << " pii_nodes=" << pii->instr_count() << "\n";
          items.push_back({{"cost", cost}, {"instructions", a.instructions.size()}});
          ++listed;
          break;
        }
      }
      nlohmann::json j;
      j["candidates"] = items;
      write_report(c.report_path, j.dump(2));
      return listed > 0 ? 0 : 2;
    }

    if (cmd_fuzz->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      CostModel cm = load_cost(c.cost_path);
      FuzzSpec spec;
      spec.seeds = fuzz_seeds;
      spec.max_nodes = fuzz_max_nodes;
      spec.seed = c.seed;
      spec.jobs = fuzz_jobs;
      spec.verify_trials = c.trials > 0 ? std::min(c.trials, 20) : 10;
      if (!fuzz_ops.empty()) {
        spec.whitelist.clear();
        std::istringstream is(fuzz_ops);
        std::string tok;
        while (std::getline(is, tok, ',')) {
          auto k = parse_op_name(tok);
          if (!k) throw Error("unknown operator in --ops: " + tok);
          spec.whitelist.push_back(*k);
        }
      }
      if (!fuzz_tile.empty()) {
        spec.tile.clear();
        std::istringstream ts(fuzz_tile);
        std::string d;
        while (std::getline(ts, d, ',')) spec.tile.push_back(std::stoll(d));
        if (spec.tile.empty()) throw Error("--tile needs at least one dimension");
      }
      if (!fuzz_bases.empty()) {
        auto comma = fuzz_bases.find(',');
        if (comma == std::string::npos) throw Error("--bases wants narrow,wide");
        spec.narrow_base = parse_scalar_base(fuzz_bases.substr(0, comma));
        spec.wide_base = parse_scalar_base(fuzz_bases.substr(comma + 1));
      }
      GenConfig cfg = make_cfg(c);
      cfg.timeout_ms = std::min<int64_t>(cfg.timeout_ms, 2000);
      FuzzOutcome out = run_fuzz(isa, spec, cm, cfg);
      std::string j = out.to_json();
      write_report(c.report_path, j);
      std::cout << j << "\n";
      return (out.diverged == 0 && out.errors == 0) ? 0 : 5;
    }

    if (cmd_inspect->parsed()) {
      IsaDescription isa = parse_isa(slurp(c.isa_path));
      std::cout << "accelerator " << isa.name << ", hbm " << isa.hbm_size << " bytes\n";
      for (const TensorBuffer& b : isa.buffers) {
        std::cout << "  buffer " << b.name << " " << b.full_type().str() << " ("
                  << b.capacity_bytes() << " bytes)\n";
      }
      std::cout << "  " << isa.instructions.size() << " instructions\n";
      auto issues = validate_isa(isa, isa_samples, c.seed);
      auto rules = derive_isa_rewrites(isa);
      std::cout << "  " << rules.size() << " derived selection rules\n";
      for (const ValidationIssue& i : issues)
        std::cout << "  issue: " << i.instruction << ": " << i.message << "\n";
      nlohmann::json j;
      j["name"] = isa.name;
      j["instructions"] = isa.instructions.size();
      j["issues"] = issues.size();
      write_report(c.report_path, j.dump(2));
      return issues.empty() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
