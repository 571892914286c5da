#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "hamf/ablation.hpp"
#include "hamf/config.hpp"
#include "hamf/dataset.hpp"
#include "hamf/io.hpp"
#include "hamf/render.hpp"
#include "hamf/train.hpp"

namespace fs = std::filesystem;
using namespace hamf;
using nlohmann::json;

namespace {

std::vector<Maneuver> parse_templates(const std::string& list) {
  if (list.empty() || list == "all") return all_maneuvers();
  std::vector<Maneuver> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(parse_maneuver(item));
  return out;
}

json report_json(const MetricReport& r) {
  return {{"minADE1", r.min_ade1},     {"minFDE1", r.min_fde1}, {"minADE6", r.min_ade6},
          {"minFDE6", r.min_fde6},     {"MR6", r.miss_rate6},   {"bminFDE6", r.brier_min_fde6},
          {"n_scenarios", r.n_scenarios}, {"n_excluded", r.n_excluded}};
}

void print_report(const MetricReport& r) {
  std::printf("scenarios %lld (excluded %lld)\n", static_cast<long long>(r.n_scenarios),
              static_cast<long long>(r.n_excluded));
  std::printf("minADE1 %.4f  minFDE1 %.4f  minADE6 %.4f  minFDE6 %.4f  MR6 %.4f  b-minFDE6 %.4f\n", r.min_ade1,
              r.min_fde1, r.min_ade6, r.min_fde6, r.miss_rate6, r.brier_min_fde6);
}

std::unique_ptr<HamfModel<float>> load_model(const fs::path& ckpt) {
  if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint not found: " + ckpt.string());
  const Checkpoint meta = read_checkpoint_header(ckpt);
  auto model = std::make_unique<HamfModel<float>>(meta.model, meta.init_seed);
  load_checkpoint(ckpt, *model, nullptr);
  return model;
}

std::vector<Scenario> require_dataset(const fs::path& dir, const char* what) {
  if (dir.empty()) throw std::runtime_error(std::string("no ") + what + " data directory given");
  if (!fs::exists(dir / kManifestName)) throw std::runtime_error(std::string(what) + " data not found: " + dir.string());
  return load_dataset(dir);
}

struct GenerateArgs {
  std::uint64_t seed = kDefaultTrainSeed;
  Index count = kDefaultTrainCount;
  std::string templates = "all";
  Index agents = kDefaultAgents;
  Index polylines = kDefaultPolylines;
  double noise = 1.0;
  std::string out;
  bool force = false;
};

int cmd_generate(const GenerateArgs& a) {
  DatasetSpec spec;
  spec.seed = a.seed;
  spec.count = a.count;
  spec.templates = parse_templates(a.templates);
  spec.agents = a.agents;
  spec.polylines = a.polylines;
  spec.generator.noise = a.noise;
  const GeneratedDataset data = generate_dataset(spec);
  write_dataset(a.out, data, a.force);
  std::cout << "wrote " << data.scenarios.size() << " scenarios to " << a.out << "\n";
  return 0;
}

int cmd_audit(const std::string& dir) {
  const Manifest manifest = load_manifest(dir);
  Index bad = 0;
  for (const auto& e : manifest.entries) {
    const Scenario s = load_scenario(fs::path(dir) / e.file);
    std::vector<std::string> problems = audit_generated(s);
    if (s.id != e.id) problems.push_back("id differs from manifest entry '" + e.id + "'");
    if (!problems.empty()) {
      ++bad;
      for (const auto& p : problems) std::cout << e.file << ": " << p << "\n";
    }
  }
  std::cout << manifest.entries.size() - static_cast<std::size_t>(bad) << "/" << manifest.entries.size()
            << " scenarios pass the audit\n";
  return bad == 0 ? 0 : 1;
}

struct TrainArgs {
  std::string config;
  std::string out;
  bool resume = false;
  std::optional<Index> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<Index> stop_after;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.seed) rc.train.seed = *a.seed;
  rc.train.validate();
  const fs::path out = a.out;
  fs::create_directories(out);
  const fs::path ckpt = out / "checkpoint.bin";
  const fs::path echo = out / "config.json";

  const std::vector<Scenario> train_data = require_dataset(rc.train_dir, "training");
  const std::vector<Scenario> val_data = rc.val_dir.empty() ? std::vector<Scenario>{} : require_dataset(rc.val_dir, "validation");

  HamfModel<float> model(rc.model, rc.init_seed);
  AdamWOptions ao;
  ao.weight_decay = rc.train.weight_decay;
  AdamW<float> optimizer(model.parameters(), ao);
  TrainProgress start;
  if (fs::exists(ckpt)) {
    if (!a.resume) throw std::runtime_error(ckpt.string() + " exists (pass --resume to continue that run)");
    const Checkpoint meta = load_checkpoint(ckpt, model, &optimizer);
    if (!(meta.train == rc.train) || meta.init_seed != rc.init_seed)
      throw std::runtime_error("checkpoint was written with a different training configuration");
    start = meta.progress;
    std::cout << "resuming after epoch " << start.epoch << " (step " << start.step << ")\n";
  }
  write_text_file(echo, run_config_to_string(rc));
  std::cout << "parameters: " << model.parameter_count() << "\n";

  TrainOptions options;
  options.out_dir = out;
  options.progress = a.quiet ? nullptr : &std::cout;
  options.init_seed = rc.init_seed;
  if (a.stop_after) options.stop_after_epochs = *a.stop_after;
  const std::vector<PreparedScenario> prepared = prepare_dataset(train_data);
  const TrainResult result = train(model, optimizer, rc.train, prepared, val_data, options, start);
  if (!result.epochs.empty() && result.epochs.back().val) {
    write_metrics_csv(out / "val_metrics.csv", *result.epochs.back().val);
    print_report(*result.epochs.back().val);
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string baseline;
  std::string data;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<Scenario> data = require_dataset(a.data, "evaluation");
  MetricReport report;
  if (!a.baseline.empty()) {
    if (a.baseline != "cv") throw std::runtime_error("unknown baseline '" + a.baseline + "' (expected cv)");
    report = evaluate(data, [](const Scenario& s) { return constant_velocity_baseline(s); });
  } else {
    if (a.ckpt.empty()) throw std::runtime_error("eval needs --ckpt or --baseline cv");
    const auto model = load_model(a.ckpt);
    report = evaluate_model(*model, data);
  }
  fs::create_directories(a.out);
  write_metrics_csv(fs::path(a.out) / "metrics.csv", report);
  write_text_file(fs::path(a.out) / "summary.json", report_json(report).dump(2) + "\n");
  print_report(report);
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& scenario, const std::string& out) {
  const auto model = load_model(ckpt);
  const PredictionSet p = model->predict(load_scenario(scenario));
  save_predictions(out, p);
  std::cout << "wrote " << p.modes() << " modes x " << (p.modes() ? p.trajectories.front().rows() : 0) << " steps to "
            << out << "\n";
  return 0;
}

struct AblateArgs {
  std::string suite;
  Index seeds = 3;
  std::string out;
  std::string config;
  std::optional<Index> epochs;
  std::string train_data;
  std::string val_data;
  Index train_count = kDefaultTrainCount;
  Index val_count = kDefaultValCount;
};

int cmd_ablate(const AblateArgs& a) {
  const std::vector<AblationVariant> variants = ablation_suite(a.suite);
  AblationOptions options;
  options.train.epochs = 30;
  std::vector<Scenario> train_data, val_data;
  if (!a.config.empty()) {
    const RunConfig rc = load_run_config(a.config);
    options.base = rc.model;
    options.train = rc.train;
    if (a.train_data.empty() && !rc.train_dir.empty()) train_data = require_dataset(rc.train_dir, "training");
    if (a.val_data.empty() && !rc.val_dir.empty()) val_data = require_dataset(rc.val_dir, "validation");
  }
  if (a.epochs) options.train.epochs = *a.epochs;
  if (!a.train_data.empty()) train_data = require_dataset(a.train_data, "training");
  if (!a.val_data.empty()) val_data = require_dataset(a.val_data, "validation");
  if (train_data.empty()) {
    DatasetSpec spec;
    spec.seed = kDefaultTrainSeed;
    spec.count = a.train_count;
    train_data = generate_dataset(spec).scenarios;
  }
  if (val_data.empty()) {
    DatasetSpec spec;
    spec.seed = kDefaultValSeed;
    spec.count = a.val_count;
    val_data = generate_dataset(spec).scenarios;
  }
  if (a.seeds < 1) throw std::runtime_error("--seeds must be >= 1");
  options.seeds.clear();
  for (Index s = 0; s < a.seeds; ++s) options.seeds.push_back(static_cast<std::uint64_t>(s));
  options.out_dir = fs::path(a.out) / "runs";
  options.progress = &std::cout;
  fs::create_directories(a.out);
  const auto results = run_ablation(variants, prepare_dataset(train_data), val_data, options);
  const std::string md = ablation_markdown(a.suite, results);
  write_text_file(fs::path(a.out) / ("ablation_" + a.suite + ".md"), md);
  write_text_file(fs::path(a.out) / ("ablation_" + a.suite + ".csv"), ablation_csv(results));
  std::cout << md;
  return 0;
}

int cmd_render(const std::string& scenario, const std::string& predictions, const std::string& out) {
  const Scenario s = load_scenario(scenario);
  if (predictions.empty()) {
    write_svg(out, s);
  } else {
    const PredictionSet p = load_predictions(predictions);
    write_svg(out, s, &p);
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HAMF motion forecasting: data generation, training, evaluation and figures"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write synthetic scenarios and a manifest");
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--count", gen.count, "Number of scenarios")->check(CLI::PositiveNumber);
  g->add_option("--templates", gen.templates, "Comma-separated maneuver templates or 'all'");
  g->add_option("--agents", gen.agents, "Agents per scenario")->check(CLI::PositiveNumber);
  g->add_option("--polylines", gen.polylines, "Map polylines per scenario")->check(CLI::PositiveNumber);
  g->add_option("--noise", gen.noise, "Noise scale (0 = exact kinematics)")->check(CLI::NonNegativeNumber);
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_flag("--force", gen.force, "Overwrite an existing non-empty directory");

  std::string audit_dir;
  auto* au = app.add_subcommand("audit", "Check every scenario of a dataset against the generator invariants");
  au->add_option("--data", audit_dir, "Dataset directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a run config");
  t->add_option("--config", tr.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint.bin");
  t->add_option("--epochs", tr.epochs, "Override train.epochs");
  t->add_option("--seed", tr.seed, "Override train.seed");
  t->add_option("--stop-after", tr.stop_after, "Stop after this many epochs (schedule unchanged)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or the constant-velocity baseline");
  auto* ckpt_opt = e->add_option("--ckpt", ev.ckpt, "Checkpoint file");
  auto* base_opt = e->add_option("--baseline", ev.baseline, "Baseline instead of a model (cv)");
  ckpt_opt->excludes(base_opt);
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Output directory for metrics.csv and summary.json")->required();

  std::string p_ckpt, p_scn, p_out;
  auto* p = app.add_subcommand("predict", "Predict one scenario");
  p->add_option("--ckpt", p_ckpt, "Checkpoint file")->required();
  p->add_option("--scenario", p_scn, "Scenario file")->required()->check(CLI::ExistingFile);
  p->add_option("--out", p_out, "Prediction output file")->required();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train and compare the variants of an ablation table");
  a->add_option("--suite", ab.suite, "encoder | decoder | depth | ke | arch")->required();
  a->add_option("--seeds", ab.seeds, "Number of seeds (0..N-1)");
  a->add_option("--out", ab.out, "Output directory")->required();
  a->add_option("--config", ab.config, "Run config supplying the base model and training settings");
  a->add_option("--epochs", ab.epochs, "Override the epoch count (default 30)");
  a->add_option("--train-data", ab.train_data, "Training dataset directory (default: generated split)");
  a->add_option("--val-data", ab.val_data, "Validation dataset directory (default: generated split)");
  a->add_option("--train-count", ab.train_count, "Size of the generated training split");
  a->add_option("--val-count", ab.val_count, "Size of the generated validation split");

  std::string r_scn, r_pred, r_out;
  auto* r = app.add_subcommand("render", "Draw a scenario and optional predictions as SVG");
  r->add_option("--scenario", r_scn, "Scenario file")->required()->check(CLI::ExistingFile);
  r->add_option("--predictions", r_pred, "Prediction file");
  r->add_option("--out", r_out, "SVG output file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) return cmd_generate(gen);
    if (au->parsed()) return cmd_audit(audit_dir);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (p->parsed()) return cmd_predict(p_ckpt, p_scn, p_out);
    if (a->parsed()) return cmd_ablate(ab);
    if (r->parsed()) return cmd_render(r_scn, r_pred, r_out);
  } catch (const TrainingAborted& ex) {
    std::cerr << "training aborted: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
