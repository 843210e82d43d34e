// cpt: generate data, train, sweep reference vectors, evaluate, and score fronts.
//
// Exit codes: 0 ok, 2 usage or schema error, 3 numerical failure,
// 4 some sweep cells failed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "cpt/data.hpp"
#include "cpt/experiment.hpp"
#include "cpt/io.hpp"

namespace fs = std::filesystem;
using namespace cpt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPartial = 4;

struct UsageError : Error {
  using Error::Error;
};

std::string valid_methods() {
  std::string out;
  for (auto m : kAllMethods) out += (out.empty() ? "" : ", ") + std::string(to_string(m));
  return out;
}

Method method_or_throw(const std::string& s) {
  const auto m = parse_method(s);
  if (!m) throw UsageError("unknown method '" + s + "'; valid methods: " + valid_methods());
  return *m;
}

std::vector<double> parse_number_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (auto field : detail::split_commas(s)) {
    const auto v = detail::parse_double(field);
    if (!v) throw UsageError("bad number '" + std::string(field) + "' in " + what);
    out.push_back(*v);
  }
  return out;
}

ReferenceVector parse_reference(const std::string& s) {
  const auto v = parse_number_list(s, "--ref");
  if (v.size() != 2) throw UsageError("--ref expects two numbers: fair,acc");
  ReferenceVector r{v[0], v[1]};
  r.validate();
  return r;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (auto field : detail::split_commas(s)) {
    const auto v = detail::parse_int(field);
    if (!v || *v < 0) throw UsageError("bad seed '" + std::string(field) + "'");
    out.push_back(static_cast<std::uint64_t>(*v));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Training flags. Unset flags leave the config-file (or default) value alone.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::string> ref, method, prune_mode, loss_smoothing;
  std::optional<double> psi, gamma, beta_fair, beta_acc, beta_kl, lr, lr_decay, momentum, scalar_weight;
  std::optional<std::size_t> epochs, batch_size, hidden_dim;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app, bool with_ref_method) {
    app->add_option("--config", config_file, "JSON config file; flags override its values")->check(CLI::ExistingFile);
    if (with_ref_method) {
      app->add_option("--ref", ref, "reference vector fair,acc");
      app->add_option("--method", method, "one of: " + valid_methods());
      app->add_option("--seed", seed, "run seed (init and shuffling)");
      app->add_option("--scalar-weight", scalar_weight, "fairness weight for scalarization");
    }
    app->add_option("--psi", psi, "KL band threshold");
    app->add_option("--gamma", gamma, "pruning strength");
    app->add_option("--beta-fair", beta_fair, "moving-average weight of the fairness gradient");
    app->add_option("--beta-acc", beta_acc, "moving-average weight of the accuracy gradient");
    app->add_option("--beta-kl", beta_kl, "moving-average weight of the KL gradient");
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--lr-decay", lr_decay, "per-epoch learning-rate factor");
    app->add_option("--momentum", momentum, "SGD momentum");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--hidden-dim", hidden_dim);
    app->add_option("--prune-threshold-mode", prune_mode, "mean or l1");
    app->add_option("--loss-smoothing", loss_smoothing, "per_objective, shared or raw");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) apply_json(c, read_json_file(config_file));
    if (ref) c.reference = parse_reference(*ref);
    if (method) c.method = method_or_throw(*method);
    if (prune_mode) {
      const auto m = parse_prune_mode(*prune_mode);
      if (!m) throw UsageError("--prune-threshold-mode must be mean or l1");
      c.prune_mode = *m;
    }
    if (loss_smoothing) {
      const auto m = parse_loss_smoothing(*loss_smoothing);
      if (!m) throw UsageError("--loss-smoothing must be per_objective, shared or raw");
      c.loss_smoothing = *m;
    }
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(c.psi, psi);
    set(c.gamma, gamma);
    set(c.beta_fair, beta_fair);
    set(c.beta_acc, beta_acc);
    set(c.beta_kl, beta_kl);
    set(c.lr, lr);
    set(c.lr_decay, lr_decay);
    set(c.momentum, momentum);
    set(c.scalar_weight, scalar_weight);
    set(c.epochs, epochs);
    set(c.batch_size, batch_size);
    set(c.hidden_dim, hidden_dim);
    set(c.seed, seed);
    try {
      c.validate();
    } catch (const Error& e) {
      throw UsageError(std::string("invalid config: ") + e.what());
    }
    return c;
  }
};

// Where the training and test rows come from.
struct DataFlags {
  std::string data, test_data, preset;
  std::uint64_t data_seed = 0;
  double test_fraction = 0.25;
  std::uint64_t split_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--data", data, "dataset file")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "generate data in memory instead (conflict)");
    app->add_option("--data-seed", data_seed, "seed for --preset");
    app->add_option("--test-data", test_data, "held-out dataset file; otherwise --data is split")
        ->check(CLI::ExistingFile);
    app->add_option("--test-fraction", test_fraction, "share of rows held out when splitting");
    app->add_option("--split-seed", split_seed, "seed of the stratified split");
  }

  GroupedDataset load_full() const {
    if (!data.empty() && !preset.empty()) throw UsageError("give either --data or --preset, not both");
    if (!data.empty()) return load_dataset(data);
    if (preset == "conflict") return gen_synthetic(conflict_preset(data_seed));
    if (!preset.empty()) throw UsageError("unknown preset '" + preset + "' (available: conflict)");
    throw UsageError("no data: pass --data <file> or --preset conflict");
  }

  SplitResult load() const {
    GroupedDataset full = load_full();
    if (!test_data.empty()) {
      GroupedDataset test = load_dataset(test_data, DatasetSchema{full.input_dim()});
      full.split = SplitTag::train;
      test.split = SplitTag::test;
      return {std::move(full), std::move(test)};
    }
    return split(full, test_fraction, split_seed);
  }

  json describe() const {
    json j = {{"test_fraction", test_fraction}, {"split_seed", split_seed}};
    if (!data.empty()) j["data"] = data;
    if (!preset.empty()) j["preset"] = preset, j["data_seed"] = data_seed;
    if (!test_data.empty()) j["test_data"] = test_data;
    return j;
  }
};

void print_counts(const GroupedDataset& ds) {
  for (const auto& [cell, n] : ds.group_counts())
    std::cout << "  attribute=" << cell.first << " label=" << cell.second << " count=" << n << '\n';
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string out, preset, counts;
  std::uint64_t seed = 0;
  std::size_t dim = 8, attributes = 2, labels = 2;
  double separation = 2.0, shift = 2.0, noise = 0.0;
};

int cmd_gen_data(const GenDataArgs& a) {
  SynthConfig c;
  if (a.preset == "conflict") {
    c = conflict_preset(a.seed);
  } else if (!a.preset.empty()) {
    throw UsageError("unknown preset '" + a.preset + "' (available: conflict)");
  } else {
    if (a.counts.empty()) throw UsageError("give --preset or --counts");
    c.num_attributes = a.attributes;
    c.num_labels = a.labels;
    c.input_dim = a.dim;
    c.mean_separation = a.separation;
    c.group_shift = a.shift;
    c.label_noise = a.noise;
    c.seed = a.seed;
    for (double v : parse_number_list(a.counts, "--counts")) {
      if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) throw UsageError("--counts must be integers");
      c.n_per_group.push_back(static_cast<std::size_t>(v));
    }
  }
  const GroupedDataset ds = gen_synthetic(c);
  const json provenance = {{"generator", "gaussian"},
                           {"seed", c.seed},
                           {"n_per_group", c.n_per_group},
                           {"num_attributes", c.num_attributes},
                           {"num_labels", c.num_labels},
                           {"input_dim", c.input_dim},
                           {"mean_separation", c.mean_separation},
                           {"group_shift", c.group_shift},
                           {"label_noise", c.label_noise}};
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_dataset(a.out, ds, provenance);
  std::cout << "wrote " << a.out << " (" << ds.size() << " rows, dim " << ds.input_dim() << ")\n";
  print_counts(ds);
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

json manifest_for(const CellOutcome& cell, const json& data, const json& outputs) {
  json j = {{"config_hash", config_hash(cell.config)},
            {"method", std::string(to_string(cell.config.method))},
            {"reference", {cell.config.reference.fair, cell.config.reference.acc}},
            {"seed", cell.config.seed},
            {"data", data},
            {"outputs", outputs},
            {"wall_seconds", cell.wall_seconds},
            {"ok", cell.ok}};
  if (cell.ok) j["front_point"] = to_json(cell.point);
  else j["error"] = cell.error;
  return j;
}

void write_cell(const fs::path& dir, const CellOutcome& cell, const json& data) {
  fs::create_directories(dir);
  write_json_file(dir / "config.json", to_json(cell.config));
  json outputs = {{"config", "config.json"}, {"manifest", "manifest.json"}};
  if (cell.ok) {
    write_json_file(dir / "params.json", params_to_json(cell.result->model, cell.result->params));
    detail::write_file_atomic(dir / "trace.csv", trace_to_csv(cell.result->trace));
    detail::write_file_atomic(dir / "front_point.csv", front_points_to_csv({cell.point}));
    outputs["params"] = "params.json";
    outputs["trace"] = "trace.csv";
    outputs["front_point"] = "front_point.csv";
  }
  write_json_file(dir / "manifest.json", manifest_for(cell, data, outputs));
}

int cmd_train(const ConfigFlags& cf, const DataFlags& df, const std::string& out_dir) {
  const TrainConfig cfg = cf.resolve();
  const SplitResult parts = df.load();
  const auto start = std::chrono::steady_clock::now();
  CellOutcome cell;
  cell.config = cfg;
  cell.result = train(parts.train, cfg);
  cell.point = front_point(cfg, evaluate(Mlp(cell.result->model), cell.result->params, parts.test.as_batch()));
  cell.ok = true;
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_cell(out_dir, cell, df.describe());
  std::size_t moo = 0;
  for (const auto& r : cell.result->trace) moo += r.stage == Stage::moo;
  std::cout << "method=" << to_string(cfg.method) << " ref=" << detail::format_double(cfg.reference.fair) << ','
            << detail::format_double(cfg.reference.acc) << " seed=" << cfg.seed << " steps=" << cell.result->trace.size()
            << " moo_steps=" << moo << '\n'
            << "test accuracy=" << fmt(cell.point.accuracy) << " eodd=" << fmt(cell.point.eodd)
            << " l_fair=" << fmt(cell.point.fair_loss) << " l_acc=" << fmt(cell.point.acc_loss) << '\n'
            << "outputs in " << out_dir << '\n';
  return kExitOk;
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::vector<std::string> refs;
  std::string methods = "cpt,scalarization";
  std::string seeds = "0,1,2,3";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool report_only = false;
};

std::string cell_dir_name(const TrainConfig& c) {
  return std::string(to_string(c.method)) + "_v" + detail::format_double(c.reference.fair) + "-" +
         detail::format_double(c.reference.acc) + "_s" + std::to_string(c.seed);
}

void write_reports(const fs::path& out, const std::vector<FrontPoint>& pts) {
  detail::write_file_atomic(out / "report.csv", report_to_csv(build_report(pts)));
  detail::write_file_atomic(out / "hypervolume.csv", hypervolume_to_csv(hypervolume_by_method(pts)));
}

int cmd_sweep(const ConfigFlags& cf, const DataFlags& df, const SweepArgs& a, const fs::path& out) {
  if (a.report_only) {
    // The report is a pure function of the saved front points.
    write_reports(out, load_front_points(out / "front_points.csv"));
    std::cout << "regenerated " << (out / "report.csv").string() << " and " << (out / "hypervolume.csv").string()
              << '\n';
    return kExitOk;
  }
  SweepSpec spec;
  spec.base = cf.resolve();
  if (!a.refs.empty()) {
    spec.references.clear();
    for (const auto& r : a.refs) spec.references.push_back(parse_reference(r));
  }
  spec.methods.clear();
  for (auto m : detail::split_commas(a.methods)) spec.methods.push_back(method_or_throw(std::string(m)));
  spec.seeds = parse_seed_list(a.seeds);
  spec.validate();

  const SplitResult parts = df.load();
  fs::create_directories(out / "cells");
  const json data = df.describe();
  json refs = json::array();
  for (const auto& r : spec.references) refs.push_back({r.fair, r.acc});
  json methods = json::array();
  for (auto m : spec.methods) methods.push_back(std::string(to_string(m)));
  write_json_file(out / "sweep.json",
                  {{"base_config", to_json(spec.base)}, {"references", refs}, {"methods", methods},
                   {"seeds", spec.seeds}, {"data", data}});

  std::size_t done = 0;
  const std::size_t total = spec.methods.size() * spec.references.size() * spec.seeds.size();
  const auto cells = run_sweep(parts.train, parts.test, spec, a.jobs, [&](const CellOutcome& c) {
    write_cell(out / "cells" / cell_dir_name(c.config), c, data);
    ++done;
    std::cerr << '[' << done << '/' << total << "] " << cell_dir_name(c.config)
              << (c.ok ? "" : " FAILED: " + c.error) << '\n';
  });

  std::vector<FrontPoint> pts;
  std::map<std::string, std::size_t> ok_by_method;
  std::size_t failed = 0;
  for (const auto& c : cells) {
    ok_by_method[std::string(to_string(c.config.method))] += c.ok;
    if (c.ok) pts.push_back(c.point);
    else ++failed;
  }
  detail::write_file_atomic(out / "front_points.csv", front_points_to_csv(pts));
  write_reports(out, load_front_points(out / "front_points.csv"));

  for (const auto& h : hypervolume_by_method(pts))
    std::cout << "hypervolume " << h.method << " = " << fmt(h.mean) << '\n';
  std::cout << "outputs in " << out.string() << '\n';
  if (failed > 0) {
    for (const auto& [method, ok] : ok_by_method)
      if (ok == 0) std::cerr << "error: every cell of method " << method << " failed\n";
    std::cerr << failed << " of " << cells.size() << " cells failed\n";
    return kExitPartial;
  }
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

int cmd_eval(const std::string& params_path, const DataFlags& df, const std::string& which,
             const std::string& json_out) {
  const SavedModel saved = params_from_json(read_json_file(params_path));
  GroupedDataset ds;
  if (which == "all") {
    ds = df.load_full();
  } else if (which == "train" || which == "test") {
    SplitResult parts = df.load();
    ds = which == "train" ? std::move(parts.train) : std::move(parts.test);
  } else {
    throw UsageError("--split must be all, train or test");
  }
  if (ds.input_dim() != saved.model.input_dim)
    throw SchemaError("dataset has dim " + std::to_string(ds.input_dim()) + ", parameters expect " +
                      std::to_string(saved.model.input_dim));
  for (int y : ds.y)
    if (static_cast<std::size_t>(y) >= saved.model.num_classes)
      throw SchemaError("dataset label " + std::to_string(y) + " exceeds the model's " +
                        std::to_string(saved.model.num_classes) + " classes");
  const Mlp net(saved.model);
  const Evaluation e = evaluate(net, saved.params, ds.as_batch());
  std::cout << "rows=" << ds.size() << " accuracy=" << fmt(e.accuracy) << " eodd=" << fmt(e.eodd)
            << " l_fair=" << fmt(e.fair_loss) << " l_acc=" << fmt(e.acc_loss) << '\n';
  if (!json_out.empty())
    write_json_file(json_out, {{"rows", ds.size()},
                               {"split", which},
                               {"accuracy", e.accuracy},
                               {"eodd", e.eodd},
                               {"fair_loss", e.fair_loss},
                               {"acc_loss", e.acc_loss}});
  return kExitOk;
}

// ---- hypervolume ------------------------------------------------------------

int cmd_hypervolume(const std::string& points, const std::string& ref_point, bool raw, const std::string& out) {
  const auto r = parse_number_list(ref_point, "--ref-point");
  if (r.size() != 2) throw UsageError("--ref-point expects two numbers");
  const std::string csv = hypervolume_to_csv(hypervolume_by_method(load_front_points(points), {r[0], r[1]}, !raw));
  if (out.empty()) std::cout << csv;
  else detail::write_file_atomic(out, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controllable fairness/accuracy trade-off training"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic grouped dataset");
  gen_cmd->add_option("-o,--out", gen.out, "output dataset file")->required();
  gen_cmd->add_option("--preset", gen.preset, "named configuration (conflict)");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--counts", gen.counts, "rows per (attribute, label) cell, attribute-major");
  gen_cmd->add_option("--attributes", gen.attributes);
  gen_cmd->add_option("--labels", gen.labels);
  gen_cmd->add_option("--dim", gen.dim);
  gen_cmd->add_option("--separation", gen.separation, "label mean offset along the first axis");
  gen_cmd->add_option("--shift", gen.shift, "attribute mean offset along the second axis");
  gen_cmd->add_option("--noise", gen.noise, "label flip probability");

  ConfigFlags train_cfg;
  DataFlags train_data;
  std::string train_out = "run";
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_cfg.add_to(train_cmd, true);
  train_data.add_to(train_cmd);
  train_cmd->add_option("--out-dir", train_out, "output directory");

  ConfigFlags sweep_cfg;
  DataFlags sweep_data;
  SweepArgs sweep;
  std::string sweep_out = "sweep";
  auto* sweep_cmd = app.add_subcommand("sweep", "run methods x references x seeds");
  sweep_cfg.add_to(sweep_cmd, false);
  sweep_data.add_to(sweep_cmd);
  sweep_cmd->add_option("--ref", sweep.refs, "reference vector fair,acc (repeatable; default: six built-in)");
  sweep_cmd->add_option("--methods", sweep.methods, "comma-separated methods");
  sweep_cmd->add_option("--seeds", sweep.seeds, "comma-separated seeds");
  sweep_cmd->add_option("--jobs", sweep.jobs, "concurrent training runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out-dir", sweep_out, "output directory");
  sweep_cmd->add_flag("--report-only", sweep.report_only, "rebuild reports from <out-dir>/front_points.csv");

  std::string eval_params, eval_split = "all", eval_json;
  DataFlags eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate saved parameters on a dataset");
  eval_cmd->add_option("--params", eval_params, "params.json from train")->required()->check(CLI::ExistingFile);
  eval_data.add_to(eval_cmd);
  eval_cmd->add_option("--split", eval_split, "all, train or test");
  eval_cmd->add_option("--json", eval_json, "also write metrics to this JSON file");

  std::string hv_points, hv_ref = "2,1", hv_out;
  bool hv_raw = false;
  auto* hv_cmd = app.add_subcommand("hypervolume", "per-method hypervolume of saved front points");
  hv_cmd->add_option("--points", hv_points, "front_points.csv")->required()->check(CLI::ExistingFile);
  hv_cmd->add_option("--ref-point", hv_ref, "reference point x,y");
  hv_cmd->add_flag("--no-normalize", hv_raw, "use raw losses instead of min-max scaled ones");
  hv_cmd->add_option("-o,--out", hv_out, "write CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train_cfg, train_data, train_out);
    if (*sweep_cmd) return cmd_sweep(sweep_cfg, sweep_data, sweep, sweep_out);
    if (*eval_cmd) return cmd_eval(eval_params, eval_data, eval_split, eval_json);
    if (*hv_cmd) return cmd_hypervolume(hv_points, hv_ref, hv_raw, hv_out);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
