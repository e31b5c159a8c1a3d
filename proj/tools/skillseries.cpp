// skillseries: feature extraction, cross-validated skill reports, task
// highlights and synthetic datasets from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skillseries/config.hpp"
#include "skillseries/data.hpp"
#include "skillseries/eval.hpp"
#include "skillseries/features.hpp"
#include "skillseries/fusion.hpp"
#include "skillseries/highlights.hpp"
#include "skillseries/pipeline.hpp"

namespace fs = std::filesystem;
using namespace skillseries;

namespace {

struct Flags {
  std::string config_file;
  std::string dataset, task, scheme, families, rho_mode, out, criterion = "GRS";
  std::string pipeline, trial, family = "DCT", exclude_surgeon;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> window, stride, repeats;
  // synth
  std::size_t surgeons = 8, trials = 5, channels = 8, frames = 1000;
  std::uint64_t synth_seed = 1;
  bool no_transcripts = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "flat key = value config file");
  cmd->add_option("--dataset", f.dataset, "dataset root (JIGSAWS layout)");
  cmd->add_option("--task", f.task, "Suturing, Knot_Tying, Needle_Passing or all");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.set, "extra key=value settings, applied last");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config_file.empty()) load_config_file(f.config_file, cfg);
  if (!f.dataset.empty()) apply_setting(cfg, "dataset", f.dataset);
  if (!f.task.empty()) apply_setting(cfg, "task", f.task);
  if (!f.scheme.empty()) apply_setting(cfg, "scheme", f.scheme);
  if (!f.families.empty()) apply_setting(cfg, "families", f.families);
  if (!f.rho_mode.empty()) apply_setting(cfg, "rho_mode", f.rho_mode);
  if (!f.out.empty()) apply_setting(cfg, "out", f.out);
  if (f.seed) cfg.seed = *f.seed;
  if (f.window) cfg.window = *f.window;
  if (f.stride) cfg.stride = *f.stride;
  if (f.repeats) cfg.repeats = *f.repeats;
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw BadParam("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

Dataset load_task(const RunConfig& cfg, Task task) {
  if (cfg.dataset_root.empty()) throw BadParam("--dataset is required");
  if (!fs::is_directory(cfg.dataset_root))
    throw DataError("dataset root " + cfg.dataset_root.string() + " is not a directory");
  return load_dataset(cfg.dataset_root, task);
}

/// Tasks present under the root; an explicitly requested task must exist.
std::vector<std::pair<Task, Dataset>> load_tasks(const RunConfig& cfg, bool all_requested) {
  std::vector<std::pair<Task, Dataset>> out;
  for (auto t : cfg.tasks) {
    if (all_requested && !fs::exists(cfg.dataset_root / std::string(task_directory(t)) / "meta.csv") &&
        fs::is_directory(cfg.dataset_root)) {
      std::cerr << "note: no " << task_directory(t) << " data under " << cfg.dataset_root << ", skipped\n";
      continue;
    }
    out.emplace_back(t, load_task(cfg, t));
  }
  if (out.empty()) throw DataError("no task data found under " + cfg.dataset_root.string());
  return out;
}

std::vector<FeatureFamily> single_families(const RunConfig& cfg) {
  std::vector<FeatureFamily> out;
  for (const auto& set : cfg.feature_sets)
    for (auto f : set)
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  return out;
}

int cmd_extract(const Flags& f) {
  const RunConfig cfg = resolve(f);
  const bool all = f.task.empty() || detail::lower(f.task) == "all";
  for (auto& [task, ds] : load_tasks(cfg, all)) {
    for (auto family : single_families(cfg)) {
      std::vector<FeatureVector> rows(ds.size());
      parallel_for(ds.size(), [&](std::size_t i) {
        try {
          rows[i] = extract_features(ds[i], family, cfg.features);
        } catch (const Error& e) {
          std::throw_with_nested(ContextError(ds[i].id() + " " + std::string(to_string(family)), e));
        }
      });
      std::ostringstream csv;
      write_feature_csv(csv, rows);
      const auto path = cfg.out_dir / (std::string(task_directory(task)) + "_" +
                                       std::string(to_string(family)) + ".csv");
      atomic_write(path, csv.str());
      std::cout << path.string() << '\n';
    }
  }
  return 0;
}

int cmd_report(const Flags& f) {
  const RunConfig cfg = resolve(f);
  const bool all = f.task.empty() || detail::lower(f.task) == "all";
  std::vector<ExperimentReport> reports;
  for (auto& [task, ds] : load_tasks(cfg, all))
    for (auto scheme : cfg.schemes) reports.push_back(run_experiment(ds, cfg.experiment(scheme)));

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(report_json(r));
  atomic_write(cfg.out_dir / "report.json", j.dump(2) + "\n");
  const std::string tables = format_tables(reports);
  atomic_write(cfg.out_dir / "tables.txt", tables);
  for (const auto& r : reports) {
    std::ostringstream preds;
    write_predictions_csv(preds, r);
    atomic_write(cfg.out_dir / ("predictions_" + r.task + "_" + std::string(to_string(r.scheme)) + ".csv"),
                 preds.str());
  }
  for (const auto& r : reports)
    for (const auto& h : r.heatmaps) {
      std::ostringstream csv;
      write_heatmap_csv(csv, h.families, h.scaled);
      atomic_write(cfg.out_dir / ("weights_" + r.task + "_" + std::string(to_string(r.scheme)) + "_" +
                                  h.name + ".csv"),
                   csv.str());
    }
  std::cout << tables;
  return 0;
}

std::size_t find_trial(const Dataset& ds, const std::string& selector) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].id() == selector ||
        trial_file_stem(ds[i].task, ds[i].surgeon_id, ds[i].trial_index) == selector)
      return i;
  throw BadParam("no trial '" + selector + "' in the dataset");
}

TrainedPipeline train_dct(const Dataset& ds, const RunConfig& cfg, const std::string& exclude_surgeon) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].surgeon_id != exclude_surgeon) rows.push_back(i);
  if (rows.size() < 2) throw InsufficientTrials("too few trials left to train the DCT pipeline");
  const auto table = build_feature_table(ds, FeatureFamily::DCT, cfg.features);
  std::vector<SkillLabels> labels;
  for (auto r : rows) labels.push_back(ds[r].labels);
  TrainOptions opts;
  opts.classification = false;
  return train_pipeline(FeatureFamily::DCT, cfg.features, cfg.params.at(FeatureFamily::DCT),
                        gather_rows(table.rows, rows), labels, opts);
}

int cmd_highlights(const Flags& f) {
  const RunConfig cfg = resolve(f);
  if (f.trial.empty()) throw BadParam("--trial is required");
  if (cfg.tasks.size() != 1) throw BadParam("--task must name a single task");
  const auto criterion = parse_criterion(f.criterion);
  if (!criterion) throw BadParam("unknown criterion '" + f.criterion + "'");
  const Dataset ds = load_task(cfg, cfg.tasks.front());
  const auto& trial = ds[find_trial(ds, f.trial)];

  TrainedPipeline pipeline;
  if (!f.pipeline.empty()) {
    std::ifstream in(f.pipeline);
    if (!in) throw BadParam("cannot open pipeline bundle " + f.pipeline);
    pipeline = read_pipeline(in);
  } else {
    pipeline = train_dct(ds, cfg, trial.surgeon_id);
  }
  ImpactCurve curve = impact_curve(trial, pipeline, *criterion, cfg.window, cfg.stride);
  if (trial.transcript) curve = attach_gesture_overlay(std::move(curve), *trial.transcript);

  std::ostringstream csv;
  write_impact_csv(csv, curve);
  const auto stem = cfg.out_dir / (trial.id() + "_" + std::string(to_string(*criterion)));
  atomic_write(stem.string() + "_impact.csv", csv.str());
  atomic_write(stem.string() + "_impact.json", impact_json(curve).dump(2) + "\n");
  std::cout << stem.string() << "_impact.csv\n" << stem.string() << "_impact.json\n";
  return 0;
}

int cmd_train(const Flags& f) {
  const RunConfig cfg = resolve(f);
  if (cfg.tasks.size() != 1) throw BadParam("--task must name a single task");
  const auto family = parse_family(f.family);
  if (!family) throw BadParam("unknown family '" + f.family + "'");
  const Dataset ds = load_task(cfg, cfg.tasks.front());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].surgeon_id != f.exclude_surgeon) rows.push_back(i);
  const auto table = build_feature_table(ds, *family, cfg.features);
  std::vector<SkillLabels> labels;
  for (auto r : rows) labels.push_back(ds[r].labels);
  const auto p = train_pipeline(*family, cfg.features, cfg.params.at(*family),
                                gather_rows(table.rows, rows), labels);
  std::ostringstream out;
  write_pipeline(out, p);
  const auto path = cfg.out_dir / (std::string(task_directory(cfg.tasks.front())) + "_" +
                                   std::string(to_string(*family)) + ".pipeline");
  atomic_write(path, out.str());
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_synth(const Flags& f) {
  if (f.out.empty()) throw BadParam("--out is required");
  std::vector<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  if (!f.task.empty() && detail::lower(f.task) != "all") {
    const auto t = parse_task(f.task);
    if (!t) throw BadParam("unknown task '" + f.task + "'");
    tasks = {*t};
  }
  for (auto t : tasks) {
    SynthDatasetParams p;
    p.task = t;
    p.n_surgeons = f.surgeons;
    p.trials_per_surgeon = f.trials;
    p.n_channels = f.channels;
    p.n_frames = f.frames;
    p.seed = f.synth_seed + static_cast<std::uint64_t>(t) * 7919ULL;
    p.with_transcripts = !f.no_transcripts;
    write_dataset(f.out, synth_dataset(p));
  }
  std::cout << f.out << '\n';
  return 0;
}

void print_error(const std::exception& e, int depth = 0) {
  std::cerr << (depth ? "  caused by: " : "error: ") << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_error(inner, depth + 1);
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surgical skill features, scoring reports and task highlights"};
  app.require_subcommand(1);
  Flags f;

  auto* extract = app.add_subcommand("extract", "write one feature CSV per task and family");
  add_common(extract, f);
  extract->add_option("--families", f.families, "feature sets, e.g. DCT,DFT,DCT+DFT");

  auto* report = app.add_subcommand("report", "cross-validated classification and score prediction");
  add_common(report, f);
  report->add_option("--scheme", f.scheme, "loso, louo or both");
  report->add_option("--families", f.families, "feature sets, e.g. DCT,DFT+ApEn");
  report->add_option("--seed", f.seed, "base seed for the LOSO draws");
  report->add_option("--repeats", f.repeats, "LOSO repeats");
  report->add_option("--rho-mode", f.rho_mode, "pooled or fold-mean");

  auto* hl = app.add_subcommand("highlights", "impact curve for one trial");
  add_common(hl, f);
  hl->add_option("--trial", f.trial, "trial id (Suturing_B_1) or file stem (Suturing_B001)")->required();
  hl->add_option("--criterion", f.criterion, "RT, TM, FO, OP, QP, SH or GRS");
  hl->add_option("--pipeline", f.pipeline, "trained DCT pipeline bundle; trained on the fly if absent");
  hl->add_option("--window", f.window, "window length in frames");
  hl->add_option("--stride", f.stride, "stride in frames");

  auto* train = app.add_subcommand("train", "fit and save one family's pipeline bundle");
  add_common(train, f);
  train->add_option("--family", f.family, "SMT, DCT, DFT or ApEn");
  train->add_option("--exclude-surgeon", f.exclude_surgeon, "leave this surgeon's trials out");

  auto* synth = app.add_subcommand("synth", "write a synthetic skill-graded dataset");
  synth->add_option("--out", f.out, "dataset root to create")->required();
  synth->add_option("--task", f.task, "task or all");
  synth->add_option("--surgeons", f.surgeons);
  synth->add_option("--trials", f.trials, "trials per surgeon");
  synth->add_option("--channels", f.channels);
  synth->add_option("--frames", f.frames);
  synth->add_option("--seed", f.synth_seed);
  synth->add_flag("--no-transcripts", f.no_transcripts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*extract) return cmd_extract(f);
    if (*report) return cmd_report(f);
    if (*hl) return cmd_highlights(f);
    if (*train) return cmd_train(f);
    if (*synth) return cmd_synth(f);
  } catch (const Error& e) {
    print_error(e);
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    print_error(e);
    return 2;
  } catch (const std::exception& e) {
    print_error(e);
    return 2;
  }
  return 1;
}
