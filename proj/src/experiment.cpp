#include "daepinn/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "daepinn/errors.hpp"
#include "daepinn/json_io.hpp"
#include "daepinn/text_io.hpp"

namespace daepinn {

namespace fs = std::filesystem;

void resolve_ic_ranges(const ExperimentConfig& c, int n, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  lo = c.train.ic_lo;
  hi = c.train.ic_hi;
  if (lo.size() == 0) {
    if (n != 4) throw InvalidArgument("training.ic_lo / ic_hi are required for model " + c.model.name);
    default_three_bus_ranges(lo, hi);
  }
}

TrainConfig resolve_train_config(const ExperimentConfig& c, int n) {
  TrainConfig t = c.train;
  resolve_ic_ranges(c, n, t.ic_lo, t.ic_hi);
  validate(t, n);
  return t;
}

PinnAssembly initial_assembly(const ExperimentConfig& c, const SemiExplicitDAE& dae) {
  Eigen::VectorXd lo, hi;
  resolve_ic_ranges(c, dae.n, lo, hi);
  if (!(c.h > 0.0)) throw InvalidArgument("discretization.h must be positive");
  return make_assembly(dae.n, dae.m, resolve_tableau(c), c.h, c.arch, lo, hi, c.train.init_seed);
}

TrainedRun run_training(const ExperimentConfig& c, const ProgressFn& progress) {
  const SemiExplicitDAE dae = build_model(c.model);
  const TrainConfig t = resolve_train_config(c, dae.n);
  TrainedRun run{c, initial_assembly(c, dae), {}, make_dataset(t, dae.n)};
  TrainResult r = penalty_train(run.assembly, run.data, dae, t, progress);
  run.assembly = std::move(r.assembly);
  run.state = std::move(r.state);
  return run;
}

CheckpointExtras checkpoint_extras(const ExperimentConfig& c) {
  CheckpointExtras e;
  e.model_json = dump17(model_to_json(c.model));
  e.config_text = to_text(c);
  e.tableau_file = c.tableau_file;
  e.data_seed = c.train.data_seed;
  e.init_seed = c.train.init_seed;
  return e;
}

LoadedRun load_run(const fs::path& checkpoint) {
  CheckpointExtras extras;
  PinnAssembly a = load_checkpoint(checkpoint, &extras);
  ExperimentConfig cfg = extras.config_text.empty() ? ExperimentConfig{} : parse_experiment(extras.config_text);
  nlohmann::json model;
  try {
    model = nlohmann::json::parse(extras.model_json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint model description: ") + e.what());
  }
  if (!model.empty()) cfg.model = model_from_json(model);
  SemiExplicitDAE dae = build_model(cfg.model);
  if (dae.n != a.n || dae.m != a.m) throw ParseError("checkpoint networks do not match model " + cfg.model.name);
  return {cfg, std::move(a), std::move(dae)};
}

Eigen::VectorXd parse_state(const std::string& text, int n) {
  std::string t = text;
  for (char& ch : t) {
    if (ch == ',') ch = ' ';
  }
  const std::vector<double> v = parse_doubles(t);
  if (static_cast<int>(v.size()) != n) {
    throw ParseError("initial condition needs " + std::to_string(n) + " values, got " + std::to_string(v.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

std::string points_csv(const Tensor& points, const std::vector<std::string>& names) {
  std::ostringstream o;
  for (std::size_t i = 0; i < names.size(); ++i) o << (i ? "," : "") << names[i];
  o << "\n";
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) o << (c ? "," : "") << fmt17(points(r, c));
    o << "\n";
  }
  return o.str();
}

namespace {

void write_manifest(const fs::path& path, const ExperimentConfig& c, const std::string& sub,
                    const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  write_text_file(path, manifest_text(c, sub, extra));
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
  const std::string name = file.filename().string();
  return file.parent_path() / (name.substr(0, name.find('.')) + suffix);
}

void write_plots(const fs::path& dir, const RolloutResult& r, const Trajectory* truth,
                 const std::vector<std::string>& names) {
  const Trajectory& p = r.trajectory;
  const auto n = p.Y.cols();
  for (std::size_t s = 0; s < names.size(); ++s) {
    const auto col = static_cast<Eigen::Index>(s);
    PlotSeries pred{"predicted", p.times, {}, false};
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(p.times.size()); ++i) {
      pred.v.push_back(col < n ? p.Y(i, col) : p.Z(i, col - n));
    }
    std::vector<PlotSeries> series{pred};
    if (truth) {
      PlotSeries tr{"reference", truth->times, {}, true};
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(truth->times.size()); ++i) {
        tr.v.push_back(col < n ? truth->Y(i, col) : truth->Z(i, col - n));
      }
      series.push_back(std::move(tr));
    }
    write_text_file(dir / ("plot_" + names[s] + ".svg"), svg_plot(names[s], series));
  }
}

}  // namespace

OrderReport cmd_tableau(Scheme scheme, int stages, const fs::path& out_file) {
  const int nu = scheme == Scheme::BackwardEuler ? 1 : stages;
  const ButcherTableau t = make_tableau(scheme, nu);
  const int kb = scheme == Scheme::BackwardEuler ? 1 : std::min(2 * nu, 12);
  const int kc = std::min(nu, 12);
  const OrderReport rep = verify_order_conditions(t, kb, 1e-9);
  save_tableau(t, out_file);
  const double worst = std::max(rep.max_residual('B', kb), rep.max_residual('C', kc));
  ExperimentConfig c;
  c.scheme = scheme;
  c.stages = nu;
  write_manifest(sibling(out_file, ".manifest.ini"), c, "tableau",
                 {{"order_conditions", std::string(worst <= 1e-9 ? "pass" : "fail")}, {"max_residual", fmt17(worst)}});
  return rep;
}

void cmd_datagen(const ExperimentConfig& c, const fs::path& out_dir) {
  const SemiExplicitDAE dae = build_model(c.model);
  const Dataset d = make_dataset(resolve_train_config(c, dae.n), dae.n);
  write_text_file(out_dir / "train.csv", points_csv(d.train, dae.y_names));
  write_text_file(out_dir / "test.csv", points_csv(d.test, dae.y_names));
  write_manifest(out_dir / "manifest.ini", c, "datagen");
}

TrainedRun cmd_train(const ExperimentConfig& c, const fs::path& checkpoint, const ProgressFn& progress) {
  TrainedRun run = run_training(c, progress);
  save_checkpoint(run.assembly, checkpoint_extras(c), checkpoint);
  write_text_file(sibling(checkpoint, ".log.csv"), training_log_csv(run.state));
  std::ostringstream outer;
  outer << "k,w_f,w_g,epochs,converged,L_f,L_g,total,test_total,lr_end\n";
  for (const OuterSummary& o : run.state.outer) {
    outer << o.k << "," << fmt17(o.w_f) << "," << fmt17(o.w_g) << "," << o.epochs << "," << (o.converged ? 1 : 0)
          << "," << fmt17(o.train.L_f) << "," << fmt17(o.train.L_g) << "," << fmt17(o.train.total) << ","
          << (o.test ? fmt17(o.test->total) : std::string("nan")) << "," << fmt17(o.lr_end) << "\n";
  }
  write_text_file(sibling(checkpoint, ".outer.csv"), outer.str());
  const OuterSummary& last = run.state.outer.back();
  write_manifest(sibling(checkpoint, ".manifest.ini"), c, "train",
                 {{"checkpoint", checkpoint.filename().string()},
                  {"final_total", fmt17(last.train.total)},
                  {"converged", last.converged ? "true" : "false"}});
  return run;
}

Trajectory cmd_oracle(const ExperimentConfig& c, const Eigen::VectorXd& y0, double t_end, const fs::path& out_dir) {
  const SemiExplicitDAE dae = build_model(c.model);
  const Trajectory t = solve(dae, y0, resolve_z_guess(c, dae.m), t_end, resolve_oracle(c));
  write_text_file(out_dir / "trajectory.csv", trajectory_csv(t, dae.y_names, dae.z_names));
  std::vector<std::pair<std::string, std::string>> extra{{"ic", join17(std::vector<double>(y0.data(), y0.data() + y0.size()), ',')},
                                                         {"t_end", fmt17(t_end)}};
  for (const auto& [k, v] : t.meta) extra.emplace_back("trajectory_" + k, v);
  write_manifest(out_dir / "manifest.ini", c, "oracle", extra);
  return t;
}

RolloutResult cmd_simulate(const fs::path& checkpoint, const Eigen::VectorXd& y0, int steps, bool truth,
                           const fs::path& out_dir, bool svg) {
  const LoadedRun run = load_run(checkpoint);
  const PinnStageModel model(run.assembly);
  RolloutResult r = simulate(model, run.dae, y0, steps);
  const std::vector<std::string> names = state_names(run.dae);
  write_text_file(out_dir / "trajectory.csv", trajectory_csv(r.trajectory, run.dae.y_names, run.dae.z_names));
  write_text_file(out_dir / "drift.csv", drift_csv(r.drift));
  std::optional<Trajectory> ref;
  if (truth) {
    ref = solve(run.dae, y0, resolve_z_guess(run.config, run.dae.m), steps * run.assembly.h, resolve_oracle(run.config));
    r.errors = l2_relative_error(r.trajectory, *ref, names);
    write_text_file(out_dir / "truth.csv", trajectory_csv(*ref, run.dae.y_names, run.dae.z_names));
    write_text_file(out_dir / "errors.csv", errors_csv(*r.errors, names));
  }
  if (svg) write_plots(out_dir, r, ref ? &*ref : nullptr, names);
  write_manifest(out_dir / "manifest.ini", run.config, "simulate",
                 {{"checkpoint", fs::absolute(checkpoint).string()},
                  {"ic", join17(std::vector<double>(y0.data(), y0.data() + y0.size()), ',')},
                  {"steps", std::to_string(steps)},
                  {"truth", truth ? "oracle" : "none"}});
  return r;
}

EnsembleReport cmd_evaluate(const fs::path& checkpoint, int ensemble, int steps, const fs::path& out_dir) {
  if (ensemble < 1 || steps < 1) throw InvalidArgument("evaluate: ensemble and steps must be >= 1");
  const LoadedRun run = load_run(checkpoint);
  const Dataset d = make_dataset(resolve_train_config(run.config, run.dae.n), run.dae.n);
  if (d.test.rows() < ensemble) {
    throw InvalidArgument("evaluate: test set has " + std::to_string(d.test.rows()) + " points, " +
                          std::to_string(ensemble) + " requested");
  }
  const Tensor ics = d.test.topRows(ensemble);
  const PinnStageModel model(run.assembly);
  const EnsembleReport rep =
      evaluate_ensemble(model, run.dae, ics, steps, resolve_oracle(run.config), resolve_z_guess(run.config, run.dae.m));
  const std::vector<std::string> names = state_names(run.dae);
  write_text_file(out_dir / "evaluation.csv", ensemble_csv(rep, names));
  std::ostringstream per;
  per << "ic";
  for (const auto& n : names) per << "," << n;
  per << "\n";
  for (std::size_t i = 0; i < rep.ok_index.size(); ++i) {
    per << rep.ok_index[i];
    for (Eigen::Index s = 0; s < rep.errors.cols(); ++s) per << "," << fmt17(rep.errors(static_cast<Eigen::Index>(i), s));
    per << "\n";
  }
  write_text_file(out_dir / "per_ic.csv", per.str());
  std::ostringstream fails;
  fails << "ic,message\n";
  for (const RolloutFailure& f : rep.failures) {
    std::string m = f.message;
    for (char& ch : m) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    fails << f.index << "," << m << "\n";
  }
  write_text_file(out_dir / "failures.csv", fails.str());
  write_manifest(out_dir / "manifest.ini", run.config, "evaluate",
                 {{"checkpoint", fs::absolute(checkpoint).string()},
                  {"ensemble", std::to_string(ensemble)},
                  {"steps", std::to_string(steps)},
                  {"failed", std::to_string(rep.failures.size())}});
  return rep;
}

std::vector<SchemeCurve> cmd_compare(const std::vector<fs::path>& checkpoints, const Eigen::VectorXd& y0, int steps,
                                     const fs::path& out_dir) {
  if (checkpoints.empty()) throw InvalidArgument("compare: no checkpoints");
  std::vector<LoadedRun> runs;
  for (const fs::path& p : checkpoints) runs.push_back(load_run(p));
  const std::string model = dump17(model_to_json(runs.front().config.model));
  std::vector<std::unique_ptr<PinnStageModel>> models;
  std::vector<std::pair<std::string, const StageModel*>> list;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (dump17(model_to_json(runs[i].config.model)) != model) {
      throw InvalidArgument("compare: " + checkpoints[i].string() + " was trained on a different model");
    }
    models.push_back(std::make_unique<PinnStageModel>(runs[i].assembly));
    const ButcherTableau& t = runs[i].assembly.tableau;
    list.emplace_back(checkpoints[i].stem().string() + ":" + to_string(t.scheme) + std::to_string(t.nu),
                      models.back().get());
  }
  const LoadedRun& first = runs.front();
  const auto curves = compare_schemes(list, first.dae, y0, steps, resolve_oracle(first.config),
                                      resolve_z_guess(first.config, first.dae.m));
  write_text_file(out_dir / "curves.csv", curves_csv(curves, state_names(first.dae)));
  std::vector<std::pair<std::string, std::string>> extra{{"steps", std::to_string(steps)}};
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    extra.emplace_back("checkpoint_" + std::to_string(i), fs::absolute(checkpoints[i]).string());
  }
  write_manifest(out_dir / "manifest.ini", first.config, "compare", extra);
  return curves;
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& c) {
  const GridSpec& g = c.grid;
  if (g.y_width.empty() && g.y_depth.empty() && g.z_width.empty() && g.z_depth.empty() && g.train_size.empty() &&
      g.mode.empty()) {
    throw InvalidArgument("grid: no axis has any values");
  }
  auto axis = [](const std::vector<long long>& v, int base) {
    std::vector<int> out;
    for (long long x : v) out.push_back(static_cast<int>(x));
    if (out.empty()) out.push_back(base);
    return out;
  };
  std::vector<AssemblyMode> modes;
  for (const std::string& m : g.mode) modes.push_back(assembly_mode_from_string(m));
  if (modes.empty()) modes.push_back(c.arch.mode);
  std::vector<GridPoint> out;
  for (AssemblyMode mode : modes) {
    for (int yw : axis(g.y_width, c.arch.y_width)) {
      for (int yd : axis(g.y_depth, c.arch.y_depth)) {
        for (int zw : axis(g.z_width, c.arch.z_width)) {
          for (int zd : axis(g.z_depth, c.arch.z_depth)) {
            for (int ts : axis(g.train_size, c.train.train_size)) {
              out.push_back({{mode, yw, yd, zw, zd}, ts});
            }
          }
        }
      }
    }
  }
  if (static_cast<int>(out.size()) > g.max_points) {
    throw InvalidArgument("grid: " + std::to_string(out.size()) + " points exceed max_points=" +
                          std::to_string(g.max_points));
  }
  return out;
}

std::vector<GridRow> cmd_grid(const ExperimentConfig& c, const fs::path& out_dir) {
  const std::vector<GridPoint> points = expand_grid(c);
  std::vector<GridRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    GridRow row;
    row.index = static_cast<int>(i);
    row.point = points[i];
    ExperimentConfig pc = c;
    pc.arch = points[i].arch;
    pc.train.train_size = points[i].train_size;
    pc.grid = GridSpec{};
    const fs::path dir = out_dir / ("point_" + std::to_string(i));
    try {
      const TrainedRun run = cmd_train(pc, dir / "model.ckpt.json");
      const OuterSummary& last = run.state.outer.back();
      row.ok = true;
      row.converged = last.converged;
      row.train_loss = last.train.total;
      row.test_loss = last.test ? last.test->total : NAN;
    } catch (const Error& e) {
      row.error = e.what();
      write_text_file(dir / "error.txt", row.error + "\n");
    }
    rows.push_back(row);
  }
  std::ostringstream o;
  o << "point,mode,y_width,y_depth,z_width,z_depth,train_size,status,converged,train_loss,test_loss\n";
  for (const GridRow& r : rows) {
    o << r.index << "," << to_string(r.point.arch.mode) << "," << r.point.arch.y_width << "," << r.point.arch.y_depth
      << "," << r.point.arch.z_width << "," << r.point.arch.z_depth << "," << r.point.train_size << ","
      << (r.ok ? "ok" : "failed") << "," << (r.converged ? 1 : 0) << "," << fmt17(r.train_loss) << ","
      << fmt17(r.test_loss) << "\n";
  }
  write_text_file(out_dir / "summary.csv", o.str());
  write_manifest(out_dir / "manifest.ini", c, "grid", {{"points", std::to_string(rows.size())}});
  return rows;
}

fs::path default_output_root(const ExperimentConfig& c) {
  if (const char* env = std::getenv("DAEPINN_OUT_ROOT"); env && *env) return env;
  if (!c.output_dir.empty()) return c.output_dir;
  return "runs";
}

}  // namespace daepinn
