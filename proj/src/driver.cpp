#include <chrono>
#include <sstream>

#include "json.hpp"
#include "tkc/driver.hpp"

namespace tkc {

CostModel CostModel::parse(const std::string& text) {
  CostModel cm;
  std::istringstream is(text);
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw != "cost") throw Error("cost model line " + std::to_string(ln) + ": expected 'cost'");
    std::string name, eq;
    ls >> name >> eq;
    if (eq != "=") throw Error("cost model line " + std::to_string(ln) + ": expected '='");
    Entry e;
    e.base = 0;
    if (!(ls >> e.base)) throw Error("cost model line " + std::to_string(ln) + ": expected a base cost");
    std::string plus;
    while (ls >> plus) {
      if (plus != "+") throw Error("cost model line " + std::to_string(ln) + ": expected '+'");
      std::string term;
      ls >> term;
      auto star = term.find('*');
      if (star == std::string::npos)
        throw Error("cost model line " + std::to_string(ln) + ": expected <coef>*<attr>");
      e.per_attr.push_back({term.substr(star + 1), std::stod(term.substr(0, star))});
    }
    cm.table[name] = std::move(e);
  }
  return cm;
}

double evaluate_cost(const Assembly& a, const IsaDescription& isa, const CostModel& cm) {
  double total = 0;
  for (const ConcreteInstruction& c : a.instructions) {
    const AbstractInstruction& ai = isa.instructions[c.instr];
    auto it = cm.table.find(ai.name);
    if (it == cm.table.end()) {
      total += cm.default_base;
      continue;
    }
    total += it->second.base;
    for (const auto& [attr, coef] : it->second.per_attr) {
      for (size_t i = 0; i < ai.alpha.size(); ++i)
        if (ai.alpha[i].name == attr) total += coef * static_cast<double>(c.alpha[i]);
      for (size_t i = 0; i < ai.beta.size(); ++i)
        if (ai.beta[i].name == attr) total += coef * static_cast<double>(c.beta[i]);
    }
  }
  return total;
}

MovementStats movement_stats(const Assembly& a, const IsaDescription& isa) {
  MovementStats m;
  for (const ConcreteInstruction& c : a.instructions) {
    const AbstractInstruction& ai = isa.instructions[c.instr];
    std::vector<DataSlice> slices = concretize_slices(isa, ai, c.alpha, c.beta);
    if (slices[0].buffer == 0)
      m.bytes_out += isa.buffers[0].slice_type(slices[0].lens()).byte_size();
    for (size_t i = 1; i < slices.size(); ++i)
      if (slices[i].buffer == 0)
        m.bytes_in += isa.buffers[0].slice_type(slices[i].lens()).byte_size();
  }
  return m;
}

std::string GenReport::to_json(const IsaDescription& isa, bool with_timings) const {
  nlohmann::json j;
  j["status"] = status == GenStatus::Ok ? "ok" : status == GenStatus::Fail ? "fail" : "bound-reached";
  j["best_cost"] = best_cost;
  j["n_candidates"] = candidates;
  j["n_pii_graphs"] = pii_graphs;
  j["n_orders"] = orders_tried;
  j["n_instructions"] = best.instructions.size();
  j["movement"] = {{"in", movement.bytes_in}, {"out", movement.bytes_out}, {"total", movement.total()}};
  j["solver"] = {{"branches", solver_branches}, {"propagations", solver_propagations}};
  if (with_timings) {
    j["timings_ms"] = {{"isel", ms_isel}, {"csp", ms_csp}, {"total", ms_total}};
    j["solver"]["wall_ms"] = ms_csp;
  }
  std::vector<std::string> lines;
  for (const ConcreteInstruction& c : best.instructions) lines.push_back(isa.instructions[c.instr].name);
  j["best_instructions"] = lines;
  return j.dump(2);
}

GenReport generate(const KernelGraph& g, const IsaDescription& isa, const CostModel& cm,
                   const GenConfig& cfg) {
  using clock = std::chrono::steady_clock;
  auto start = clock::now();
  auto elapsed_ms = [&]() {
    return std::chrono::duration<double, std::milli>(clock::now() - start).count();
  };

  if (cfg.n_factor <= 1.0) throw Error("generation config: n_factor must exceed 1");
  if (cfg.timeout_ms <= 0) throw Error("generation config: timeout must be positive");

  GenReport rep;
  KernelGraph expanded = expand_tiled_layout(g);
  IoLayout io = IoLayout::of(expanded);

  PiiEnumerator stream(expanded, isa, cfg.isel);

  double best = 0;
  bool have_best = false;
  double improve_stamp = 0;   // wall ms or candidate index of the last improvement
  bool stop = false;

  auto consider_stop = [&](double now_stamp) {
    if (!have_best) return false;
    double floor_stamp = cfg.deterministic ? 4.0 : 5.0;
    return now_stamp > cfg.n_factor * std::max(improve_stamp, floor_stamp);
  };

  while (!stop) {
    auto t0 = elapsed_ms();
    std::optional<PiiGraph> pii = stream.next();
    rep.ms_isel += elapsed_ms() - t0;
    if (!pii) break;
    ++rep.pii_graphs;

    // keep unused kernel inputs as dead leaves so their HBM regions stay
    // protected by the interference constraints
    {
      std::vector<bool> present(expanded.params.size(), false);
      for (const PiiNode& n : pii->nodes)
        if (n.kind == PiiNode::Kind::Input) present[n.input_index] = true;
      for (size_t i = 0; i < present.size(); ++i)
        if (!present[i]) pii->add_input(isa, static_cast<int32_t>(i), io.input_sizes[i]);
    }

    OrderEnumerator orders(*pii, isa, cfg.prune, cfg.max_orders);
    while (auto item = orders.next()) {
      ++rep.orders_tried;
      auto t1 = elapsed_ms();
      CspBuild build = build_csp(*pii, item->order, item->live, isa, io);
      SolveResult sol = solve_csp(build.problem, cfg.solver_budget);
      rep.ms_csp += elapsed_ms() - t1;
      rep.solver_branches += sol.branches;
      rep.solver_propagations += sol.propagations;

      if (sol.status == SolveStatus::Unsat) {
        orders.report_failure(item->live.interference);
        if (elapsed_ms() > static_cast<double>(cfg.timeout_ms)) {
          stop = true;
          break;
        }
        continue;
      }
      if (sol.status == SolveStatus::Budget) {
        // fall back to the next ordering without recording a pruning witness
        if (elapsed_ms() > static_cast<double>(cfg.timeout_ms)) {
          stop = true;
          break;
        }
        continue;
      }

      Assembly a = emit_assembly(*pii, item->order, isa, build, sol.values, io);
      double cost = evaluate_cost(a, isa, cm);
      ++rep.candidates;
      double stamp = cfg.deterministic ? static_cast<double>(rep.candidates) : elapsed_ms();
      if (!have_best || cost < best) {
        best = cost;
        have_best = true;
        improve_stamp = stamp;
        rep.best = std::move(a);
        rep.best_cost = cost;
      } else if (consider_stop(stamp)) {
        stop = true;
        break;
      }
      if (!cfg.all_sat_orders) break;  // same cost for every schedule of this graph
    }
    if (elapsed_ms() > static_cast<double>(cfg.timeout_ms)) stop = true;
    if (!stop && have_best) {
      double stamp = cfg.deterministic ? static_cast<double>(rep.candidates) : elapsed_ms();
      if (consider_stop(stamp)) stop = true;
    }
  }

  rep.ms_total = elapsed_ms();
  if (have_best) {
    rep.status = GenStatus::Ok;
    rep.movement = movement_stats(rep.best, isa);
  } else {
    rep.status = stream.status() == PiiEnumerator::End::Exhausted ? GenStatus::Fail : GenStatus::BoundReached;
  }
  return rep;
}

}  // namespace tkc
