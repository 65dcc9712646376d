// mrx: run scenarios, ablation matrices, allocation instances, trace replay.
#include "mrx/allocation.hpp"
#include "mrx/dispatch.hpp"
#include "mrx/sim.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"multi-agent exploration simulator"};
  app.require_subcommand(1);

  std::string scenario, out, mode_name, matrix, instance, trace;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("--scenario", scenario, "scenario JSON file")->required();
  run->add_option("--seed", seed, "RNG seed (overrides the file)");
  run->add_option("--mode", mode_name, "full | no-con | no-graph | greedy")
      ->check(CLI::IsMember({"full", "no-con", "no-graph", "greedy"}));
  run->add_option("--out", out, "output directory")->required();

  auto* abl = app.add_subcommand("ablate", "run an ablation matrix");
  abl->add_option("--matrix", matrix, "matrix JSON file")->required();
  abl->add_option("--out", out, "output directory")->required();

  auto* solve = app.add_subcommand("solve-instance", "solve an allocation instance file");
  solve->add_option("file", instance)->required();

  auto* replay = app.add_subcommand("replay", "print a message trace");
  replay->add_option("trace", trace)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      mrx::ScenarioConfig cfg = mrx::load_scenario_file(scenario);
      if (seed) cfg.seed = *seed;
      if (!mode_name.empty()) cfg.mode = *mrx::parse_mode(mode_name);
      const mrx::RunResult r = mrx::run(cfg, {out, true});
      const auto& m = r.metrics;
      std::cout << m.status << " ticks " << m.ticks << " time " << m.exploration_time << " s path "
                << m.total_path_length << " m coverage " << m.final_coverage << "\n";
      return m.status == "COMPLETE" ? 0 : 3;
    }
    if (*abl) {
      const auto rows = mrx::ablate(mrx::load_matrix_file(matrix), out);
      std::cout << mrx::format_table(rows);
      for (const auto& row : rows)
        if (row.incomplete) return 3;
      return 0;
    }
    if (*solve) {
      std::ifstream in(instance);
      if (!in) throw std::runtime_error("cannot open " + instance);
      std::uint64_t s = 0;
      const mrx::AllocationProblem p = mrx::read_instance(in, &s);
      mrx::write_result(std::cout, p, mrx::solve(p, s));
      return 0;
    }
    if (*replay) {
      for (const auto& e : mrx::read_trace_file(trace)) std::cout << mrx::describe(e) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
