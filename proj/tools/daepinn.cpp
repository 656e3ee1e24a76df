#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "daepinn/errors.hpp"
#include "daepinn/experiment.hpp"

namespace fs = std::filesystem;
using namespace daepinn;

namespace {

ExperimentConfig load_or_default(const std::string& path, const std::vector<std::string>& sets) {
  if (path.empty()) return parse_experiment("", sets);
  return load_experiment(path, sets);
}

fs::path out_or_default(const std::string& out, const ExperimentConfig& c, const std::string& leaf) {
  if (!out.empty()) return out;
  return default_output_root(c) / leaf;
}

void print_progress(const EpochRecord& r) {
  if (r.epoch % 1000 != 0) return;
  std::fprintf(stderr, "epoch %ld outer %d w=%g L_f=%.4e L_g=%.4e total=%.4e lr=%.2e\n", r.epoch, r.outer, r.w_f,
               r.L_f, r.L_g, r.total, r.lr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-time physics-informed networks for semi-explicit DAEs"};
  app.require_subcommand(1);

  std::string config, out, ic, ckpt, truth = "oracle", scheme = "gauss";
  std::vector<std::string> sets, ckpts;
  int stages = 3, steps = 80, ensemble = 100;
  double t_end = 8.0;
  bool quiet = false, no_svg = false;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", config, "experiment config file");
    s->add_option("--set", sets, "override as section.key=value (repeatable)");
  };

  CLI::App* tab = app.add_subcommand("tableau", "generate and verify a Butcher tableau");
  tab->add_option("--scheme", scheme, "gauss or backward_euler");
  tab->add_option("--stages", stages, "number of stages");
  tab->add_option("--out", out, "tableau file");

  CLI::App* dg = app.add_subcommand("datagen", "sample training and test initial conditions");
  add_config(dg);
  dg->add_option("--out", out, "output directory");

  CLI::App* tr = app.add_subcommand("train", "train with the penalty schedule");
  add_config(tr);
  tr->add_option("--out", out, "checkpoint path");
  tr->add_flag("--quiet", quiet, "no progress lines");

  CLI::App* orc = app.add_subcommand("oracle", "reference trajectory from the implicit Runge-Kutta solver");
  add_config(orc);
  orc->add_option("--ic", ic, "initial differential state, comma separated")->required();
  orc->add_option("--t-end", t_end, "final time");
  orc->add_option("--out", out, "output directory");

  CLI::App* sim = app.add_subcommand("simulate", "recurrent rollout of a trained checkpoint");
  sim->add_option("--ckpt", ckpt, "checkpoint")->required();
  sim->add_option("--ic", ic, "initial differential state, comma separated")->required();
  sim->add_option("--steps", steps, "number of steps N");
  sim->add_option("--truth", truth, "oracle or none")->check(CLI::IsMember({"oracle", "none"}));
  sim->add_option("--out", out, "output directory");
  sim->add_flag("--no-svg", no_svg, "skip the plots");

  CLI::App* ev = app.add_subcommand("evaluate", "ensemble L2 relative errors on held-out initial conditions");
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--ensemble", ensemble, "number of test initial conditions");
  ev->add_option("--steps", steps, "number of steps N");
  ev->add_option("--out", out, "output directory");

  CLI::App* cmp = app.add_subcommand("compare", "error curves versus step count for several checkpoints");
  cmp->add_option("--ckpt", ckpts, "checkpoint (repeatable)")->required();
  cmp->add_option("--ic", ic, "initial differential state, comma separated")->required();
  cmp->add_option("--steps", steps, "number of steps N");
  cmp->add_option("--out", out, "output directory");

  CLI::App* grid = app.add_subcommand("grid", "train one model per grid point");
  add_config(grid);
  grid->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (tab->parsed()) {
      ExperimentConfig c;
      const fs::path file = out.empty() ? default_output_root(c) / "tableau" / ("tableau_" + scheme + std::to_string(stages) + ".txt") : fs::path(out);
      const Scheme s = scheme_from_string(scheme);
      const OrderReport rep = cmd_tableau(s, stages, file);
      const int nu = s == Scheme::BackwardEuler ? 1 : stages;
      const int kb = s == Scheme::BackwardEuler ? 1 : std::min(2 * nu, 12);
      const double worst = std::max(rep.max_residual('B', kb), rep.max_residual('C', std::min(nu, 12)));
      std::printf("%s: order conditions %s (max residual %.3e)\n", file.string().c_str(),
                  worst <= 1e-9 ? "pass" : "FAIL", worst);
      return worst <= 1e-9 ? 0 : 1;
    }
    if (dg->parsed()) {
      const ExperimentConfig c = load_or_default(config, sets);
      const fs::path dir = out_or_default(out, c, "datagen");
      cmd_datagen(c, dir);
      std::printf("%s\n", dir.string().c_str());
      return 0;
    }
    if (tr->parsed()) {
      const ExperimentConfig c = load_or_default(config, sets);
      const fs::path file = out.empty() ? default_output_root(c) / "train" / "model.ckpt.json" : fs::path(out);
      const TrainedRun run = cmd_train(c, file, quiet ? ProgressFn{} : ProgressFn{print_progress});
      for (const OuterSummary& o : run.state.outer) {
        std::printf("outer %d w=%g epochs=%ld converged=%d total=%.4e L_f=%.4e L_g=%.4e\n", o.k, o.w_f, o.epochs,
                    o.converged ? 1 : 0, o.train.total, o.train.L_f, o.train.L_g);
      }
      std::printf("%s\n", file.string().c_str());
      return 0;
    }
    if (orc->parsed()) {
      const ExperimentConfig c = load_or_default(config, sets);
      const SemiExplicitDAE dae = build_model(c.model);
      const fs::path dir = out_or_default(out, c, "oracle");
      const Trajectory t = cmd_oracle(c, parse_state(ic, dae.n), t_end, dir);
      std::printf("%zu samples written to %s\n", t.size(), dir.string().c_str());
      return 0;
    }
    if (sim->parsed()) {
      const LoadedRun run = load_run(ckpt);
      const fs::path dir = out_or_default(out, run.config, "simulate");
      const RolloutResult r = cmd_simulate(ckpt, parse_state(ic, run.dae.n), steps, truth == "oracle", dir, !no_svg);
      if (r.errors) {
        const auto names = state_names(run.dae);
        for (std::size_t s = 0; s < names.size(); ++s) {
          std::printf("%s %.6e\n", names[s].c_str(), (*r.errors)(static_cast<Eigen::Index>(s)));
        }
      }
      std::printf("%s\n", dir.string().c_str());
      return 0;
    }
    if (ev->parsed()) {
      const LoadedRun run = load_run(ckpt);
      const fs::path dir = out_or_default(out, run.config, "evaluate");
      const EnsembleReport rep = cmd_evaluate(ckpt, ensemble, steps, dir);
      std::cout << ensemble_csv(rep, state_names(run.dae));
      return 0;
    }
    if (cmp->parsed()) {
      const LoadedRun run = load_run(ckpts.front());
      const fs::path dir = out_or_default(out, run.config, "compare");
      std::vector<fs::path> paths(ckpts.begin(), ckpts.end());
      cmd_compare(paths, parse_state(ic, run.dae.n), steps, dir);
      std::printf("%s\n", (dir / "curves.csv").string().c_str());
      return 0;
    }
    if (grid->parsed()) {
      const ExperimentConfig c = load_or_default(config, sets);
      const fs::path dir = out_or_default(out, c, "grid");
      const auto rows = cmd_grid(c, dir);
      int failed = 0;
      for (const GridRow& r : rows) failed += r.ok ? 0 : 1;
      std::printf("%zu points, %d failed; summary in %s\n", rows.size(), failed, (dir / "summary.csv").string().c_str());
      return 0;
    }
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
