#include "upmnet/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "upmnet/checkpoint.hpp"
#include "upmnet/error.hpp"
#include "upmnet/eval.hpp"
#include "upmnet/gradcheck.hpp"
#include "upmnet/pipeline.hpp"
#include "upmnet/synth.hpp"

namespace upmnet {

namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

fs::path manifest_path(const fs::path& data) { return fs::is_directory(data) ? data / "manifest.json" : data; }

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Options {
  // synth
  fs::path spec;
  // shared
  fs::path data;
  fs::path out;
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trial_seed;
  // train
  fs::path resume;
  std::optional<std::uint64_t> stop_after;
  // fuse
  fs::path local_ckpt;
  fs::path global_ckpt;
  // eval
  fs::path features;
  fs::path report;
  fs::path cmc;
  std::string aggregation = "max";
  std::string source = "fused";
  int trials = 1;
  // gradcheck
  int configs = 25;
  // sweep
  std::vector<int> scales{1, 2, 4, 8};
};

int cmd_synth(const Options& o, std::ostream& out) {
  SynthSpec spec = synth_spec_from_json(read_text(o.spec));
  if (o.seed) spec.seed = *o.seed;
  const DatasetManifest m = generate_synthetic(spec, o.out);
  out << "wrote " << m.tracklets.size() << " tracklets to " << (o.out / "manifest.json").string() << '\n';
  return 0;
}

TrainConfig load_config(const Options& o) {
  TrainConfig cfg = train_config_from_json(read_text(o.config));
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

int cmd_train(const Options& o, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(manifest_path(o.data));
  const Split split = o.trial_seed ? split_protocol(manifest, *o.trial_seed) : full_protocol(manifest);
  const TrainingView view = make_training_view(manifest, split.train_tracklets);

  TrainState state;
  FeatureCache cache;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume);
    cache = build_feature_cache(view, state.config.k, state.config.pooling);
  } else {
    const TrainConfig cfg = load_config(o);
    cache = build_feature_cache(view, cfg.k, cfg.pooling);
    state = init_training(cache, cfg);
  }
  const std::uint64_t until = o.stop_after ? *o.stop_after : static_cast<std::uint64_t>(state.config.total_iterations);
  run_training(state, cache, until, [&](const std::string& line) { out << line << '\n'; });
  save_checkpoint(o.out, state);
  return 0;
}

int cmd_fuse(const Options& o, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(manifest_path(o.data));
  TrainState local = load_checkpoint(o.local_ckpt);
  TrainState global = load_checkpoint(o.global_ckpt);
  if (local.model.kind != AwareKind::Local) throw Error(ErrorCode::ValidationError, o.local_ckpt.string() + " is not a local-aware checkpoint");
  if (global.model.kind != AwareKind::Global) throw Error(ErrorCode::ValidationError, o.global_ckpt.string() + " is not a global-aware checkpoint");
  const FeatureTable table = fuse_dataset(manifest, local.model, local.config.pooling, global.model, global.config.pooling);
  save_feature_table(o.out, table);
  out << "fused " << table.image_ids.size() << " images, descriptor length " << table.fused.cols() << '\n';
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(manifest_path(o.data));
  const FeatureTable table = load_feature_table(o.features);
  const Aggregation aggregation = parse_aggregation(o.aggregation);
  const FeatureSource source = parse_feature_source(o.source);
  if (o.trials < 1) throw Error(ErrorCode::Usage, "--trials must be >= 1");

  std::vector<EvalReport> per_trial;
  for (int t = 0; t < o.trials; ++t) {
    const Split split = o.trial_seed ? split_protocol(manifest, *o.trial_seed + static_cast<std::uint64_t>(t)) : full_protocol(manifest);
    per_trial.push_back(evaluate_split(table, manifest, split, source, aggregation));
    if (!o.trial_seed) break;
  }
  const EvalReport avg = average_reports(per_trial);
  nlohmann::json config{{"aggregation", std::string(to_string(aggregation))},
                        {"source", std::string(to_string(source))},
                        {"features", o.features.generic_string()},
                        {"trial_seed", o.trial_seed ? nlohmann::json(*o.trial_seed) : nlohmann::json(nullptr)}};
  write_text(o.report, report_json(avg, per_trial, config.dump()) + "\n");
  fs::path csv = o.cmc.empty() ? fs::path(o.report).replace_extension(".csv") : o.cmc;
  write_text(csv, cmc_csv(avg));
  out << "rank1=" << fixed(avg.rank1) << " rank5=" << fixed(avg.rank5) << " rank20=" << fixed(avg.rank20)
      << " mAP=" << fixed(avg.mAP) << " trials=" << per_trial.size() << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  GradcheckOptions opt;
  opt.seed = o.seed.value_or(1);
  opt.num_configs = o.configs;
  const GradcheckReport report = run_gradcheck(opt);
  for (const auto& c : report.cases) {
    out << "c=" << c.in_dim << " c'=" << c.reduced_dim << " k=" << c.k << " batch=" << c.batch << " params=" << c.max_rel_err_params
        << " inputs=" << c.max_rel_err_inputs << " loss_features=" << c.max_rel_err_features << " checked=" << c.checked << '\n';
  }
  const bool ok = report.max_rel_err < 1e-4;
  out << "max_rel_err=" << report.max_rel_err << " over " << report.checked << " entries\n";
  out << (ok ? "max_rel_err < 1e-4" : "FAILED: max_rel_err >= 1e-4") << '\n';
  return ok ? 0 : 2;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(manifest_path(o.data));
  PipelineOptions opt;
  opt.config = load_config(o);
  opt.trial_seed = o.trial_seed;
  opt.aggregation = parse_aggregation(o.aggregation);

  std::ostringstream table;
  table << "k,rank1,mAP,local_rank1,global_rank1\n";
  out << "k  rank1   mAP\n";
  for (int k : o.scales) {
    opt.config.k = k;
    validate(opt.config);
    const PipelineResult r = run_pipeline(manifest, opt);
    out << k << (k < 10 ? "  " : " ") << fixed(r.fused.rank1) << "  " << fixed(r.fused.mAP) << '\n';
    table << k << ',' << fixed(r.fused.rank1) << ',' << fixed(r.fused.mAP) << ',' << fixed(r.local_only.rank1) << ','
          << fixed(r.global_only.rank1) << '\n';
  }
  if (!o.out.empty()) write_text(o.out / "sweep.csv", table.str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"upmnet: part-model unsupervised re-identification engine"};
  app.require_subcommand(1, 1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted identities");
  synth->add_option("--spec", o.spec, "synthetic spec JSON")->required();
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed, "override the spec seed");

  auto* train = app.add_subcommand("train", "train one network and write a checkpoint");
  train->add_option("--config", o.config, "training config JSON");
  train->add_option("--data", o.data, "dataset directory or manifest")->required();
  train->add_option("--out", o.out, "checkpoint directory")->required();
  train->add_option("--seed", o.seed, "override the config seed");
  train->add_option("--trial-seed", o.trial_seed, "train on the training half of this split");
  train->add_option("--resume", o.resume, "continue from a checkpoint");
  train->add_option("--stop-after", o.stop_after, "stop at this iteration");

  auto* fuse = app.add_subcommand("fuse", "compute fused per-image descriptors");
  fuse->add_option("--local", o.local_ckpt, "local-aware checkpoint")->required();
  fuse->add_option("--global", o.global_ckpt, "global-aware checkpoint")->required();
  fuse->add_option("--data", o.data, "dataset directory or manifest")->required();
  fuse->add_option("--out", o.out, "feature directory")->required();

  auto* eval = app.add_subcommand("eval", "score probe against gallery");
  eval->add_option("--features", o.features, "feature directory from fuse")->required();
  eval->add_option("--data", o.data, "dataset directory or manifest")->required();
  eval->add_option("--report", o.report, "report JSON path")->required();
  eval->add_option("--cmc", o.cmc, "CMC CSV path (default: report path with .csv)");
  eval->add_option("--aggregation", o.aggregation, "max|mean");
  eval->add_option("--source", o.source, "fused|local|global");
  eval->add_option("--trial-seed", o.trial_seed, "evaluate the test half of seeded splits");
  eval->add_option("--trials", o.trials, "number of consecutive trial seeds to average");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", o.seed, "generator seed");
  gradcheck->add_option("--configs", o.configs, "number of random configurations");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate for several partition scales");
  sweep->add_option("--k", o.scales, "partition scales")->delimiter(',');
  sweep->add_option("--config", o.config, "training config JSON")->required();
  sweep->add_option("--data", o.data, "dataset directory or manifest")->required();
  sweep->add_option("--out", o.out, "directory for sweep.csv");
  sweep->add_option("--seed", o.seed, "override the config seed");
  sweep->add_option("--trial-seed", o.trial_seed, "use the seeded split");
  sweep->add_option("--aggregation", o.aggregation, "max|mean");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*train) {
      if (o.config.empty() && o.resume.empty()) throw Error(ErrorCode::Usage, "train needs --config or --resume");
      return cmd_train(o, out);
    }
    if (*fuse) return cmd_fuse(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*gradcheck) return cmd_gradcheck(o, out);
    if (*sweep) return cmd_sweep(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace upmnet
