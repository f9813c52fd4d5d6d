// tard: train/adapt/detect/evaluate a streaming fault detector from one
// run-configuration file. Subcommands: synth, train, adapt, detect, stream,
// evaluate. See docs/file_formats.md for the config, manifest, bundle and
// report layouts.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tard/config.hpp"
#include "tard/errors.hpp"
#include "tard/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed_override = -1;
};

tard::RunConfig load_config(const GlobalArgs& args) {
    if (args.config_path.empty()) {
        throw tard::ConfigError("--config is required");
    }
    tard::RunConfig cfg = tard::load_run_config(args.config_path);
    if (args.seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(args.seed_override);
        cfg.settings.train.seed = cfg.seed;
    }
    return cfg;
}

fs::path config_dir(const GlobalArgs& args) {
    return fs::path(args.config_path).parent_path();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const GlobalArgs& args) {
    tard::RunConfig cfg = load_config(args);
    if (!cfg.synth) {
        throw tard::ConfigError("synth: config has no 'synth' section");
    }
    fs::create_directories(args.out_dir);

    const tard::SyntheticSeries source = tard::generate_synthetic(cfg.synth->source);
    const tard::SyntheticSeries target = tard::generate_synthetic(cfg.synth->target);

    tard::write_csv(source.observed, source.schema, fs::path(args.out_dir) / "source.csv");
    tard::write_csv(target.observed, target.schema, fs::path(args.out_dir) / "target.csv");

    tard::DatasetManifest source_manifest;
    source_manifest.schema = source.schema;
    source_manifest.rate_hz = 1.0;
    tard::save_manifest(source_manifest, fs::path(args.out_dir) / "source_manifest.json");

    tard::DatasetManifest target_manifest;
    target_manifest.schema = target.schema;
    target_manifest.rate_hz = 1.0;
    if (cfg.synth->target.fault && cfg.synth->target.fault->duration > 0) {
        const auto& f = *cfg.synth->target.fault;
        target_manifest.faults.push_back(
            {static_cast<double>(f.start), static_cast<double>(f.start + f.duration - 1)});
    }
    tard::save_manifest(target_manifest, fs::path(args.out_dir) / "target_manifest.json");

    // A ready-to-run config next to the data.
    json run;
    run["seed"] = cfg.seed;
    run["datasets"]["source"] = {{"manifest", "source_manifest.json"},
                                 {"csv", json::array({"source.csv"})}};
    json case_entry;
    case_entry["name"] = "synthetic_fault";
    case_entry["recordings"] = json::array(
        {{{"manifest", "target_manifest.json"}, {"csv", "target.csv"}}});
    run["datasets"]["cases"] = json::array({case_entry});

    json original = json::parse(cfg.raw_json);
    for (const char* key : {"split", "train", "mmd", "scoring", "stream",
                            "adaptive_output_activation", "methods"}) {
        if (original.contains(key)) run[key] = original[key];
    }
    if (!run.contains("split") || run["split"].value("target_adapt_rows", 0) == 0) {
        run["split"]["target_adapt_rows"] = cfg.synth->target.rows / 2;
        run["split"]["target_val_fraction"] = 0.2;
    }
    std::ofstream out(fs::path(args.out_dir) / "run_config.json");
    out << run.dump(1) << "\n";

    std::cout << "wrote source.csv (" << source.observed.rows() << " rows), target.csv ("
              << target.observed.rows() << " rows), manifests and run_config.json to "
              << args.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared data loading for train/adapt/evaluate
// ---------------------------------------------------------------------------

tard::SplitResult load_splits(const tard::RunConfig& cfg, const fs::path& base,
                              std::size_t case_index) {
    if (cfg.source.csv.empty()) {
        throw tard::ConfigError("config: datasets.source is required");
    }
    if (cfg.cases.empty()) {
        throw tard::ConfigError("config: datasets.cases is required");
    }
    if (case_index >= cfg.cases.size()) {
        throw tard::ConfigError("case index out of range");
    }
    const auto source_series = tard::load_dataset(cfg.source, base);
    const auto target_series = tard::load_case(cfg.cases[case_index], base);
    return tard::make_splits(source_series, target_series, cfg.split);
}

// ---------------------------------------------------------------------------
// train / adapt
// ---------------------------------------------------------------------------

int cmd_train(const GlobalArgs& args, const std::string& method_str) {
    tard::RunConfig cfg = load_config(args);
    const tard::MethodId method = tard::method_from_name(method_str);
    if (method != tard::MethodId::SourceOnly && method != tard::MethodId::Mmd) {
        throw tard::ConfigError("train: --method must be source_only or mmd");
    }
    fs::create_directories(args.out_dir);

    const fs::path base = config_dir(args);
    const auto source_series = tard::load_dataset(cfg.source, base);

    tard::ModelBundle bundle;
    bundle.seed = cfg.seed;

    // Healthy source rows per plan (0 = all).
    std::vector<tard::LabeledSeries> dummy_target;
    tard::SampleBatch source;
    {
        // make_splits needs a target; for pretraining only the source side
        // matters, so reuse the first source recording as a stand-in.
        tard::SplitPlan plan = cfg.split;
        plan.target_adapt_rows = std::max<std::size_t>(plan.target_adapt_rows, 4);
        tard::SplitResult s = tard::make_splits(source_series, {source_series.front()}, plan);
        source = std::move(s.source);
    }
    bundle.partition = source.partition;
    bundle.standardization = tard::compute_standardization(source.values);

    tard::SampleBatch std_source = source;
    bundle.standardization.apply(std_source.values);

    tard::TrainLog log;
    if (method == tard::MethodId::Mmd) {
        const tard::SplitResult splits = load_splits(cfg, base, 0);
        tard::SampleBatch std_adapt = splits.adapt_and_val();
        bundle.standardization.apply(std_adapt.values);
        bundle.ae = tard::pretrain_mmd(std_source, std_adapt, cfg.settings.train,
                                       cfg.settings.mmd, &log);
    } else {
        bundle.ae = tard::pretrain_source(std_source, cfg.settings.train, &log);
    }
    bundle.scoring.window = cfg.settings.window;
    bundle.scoring.alpha = cfg.settings.alpha;
    bundle.scoring.score_mode = cfg.settings.score_mode;

    const fs::path bundle_path = fs::path(args.out_dir) / "bundle.json";
    tard::save_bundle(bundle, bundle_path);
    std::cout << "pretrained on " << source.rows() << " source rows; initial loss "
              << log.initial_loss << ", final loss " << log.final_loss << "\n"
              << "bundle written to " << bundle_path.string()
              << " (run `tard adapt` to fit the adaptive module and threshold)\n";
    return 0;
}

int cmd_adapt(const GlobalArgs& args, const std::string& bundle_path, bool no_module,
              std::size_t case_index) {
    tard::RunConfig cfg = load_config(args);
    fs::create_directories(args.out_dir);
    tard::ModelBundle bundle = tard::load_bundle(bundle_path);

    const tard::SplitResult splits = load_splits(cfg, config_dir(args), case_index);
    const tard::SampleBatch adapt_raw = splits.adapt_and_val();
    tard::SampleBatch std_adapt = adapt_raw;
    bundle.standardization.apply(std_adapt.values);

    if (!no_module) {
        bundle.adaptive = tard::train_adaptive(std_adapt, bundle.ae, cfg.settings.train,
                                               cfg.settings.adaptive_activation);
    }
    bundle.scoring.sensor_scale = tard::sensor_scale_from(adapt_raw.sensors());
    bundle.scoring.window = cfg.settings.window;
    bundle.scoring.alpha = cfg.settings.alpha;
    bundle.scoring.score_mode = cfg.settings.score_mode;
    bundle.scoring.threshold_base = tard::compute_threshold_base(
        {adapt_raw}, bundle, cfg.settings.window, cfg.settings.score_mode);

    const fs::path out_path = fs::path(args.out_dir) / "bundle.json";
    tard::save_bundle(bundle, out_path);
    std::cout << "adapted on " << adapt_raw.rows() << " healthy target rows; threshold base "
              << bundle.scoring.threshold_base << "\n"
              << "bundle written to " << out_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// detect / stream
// ---------------------------------------------------------------------------

tard::LabeledSeries load_one_series(const GlobalArgs& args, const std::string& manifest,
                                    const std::string& csv) {
    const fs::path base = config_dir(args);
    const tard::DatasetManifest m = tard::load_manifest(base / manifest);
    return tard::ingest_csv(base / csv, m.schema, m.faults);
}

int run_detection(const GlobalArgs& args, const std::string& bundle_path,
                  const std::string& manifest, const std::string& csv, bool streaming) {
    tard::RunConfig cfg = load_config(args);
    fs::create_directories(args.out_dir);
    tard::ModelBundle bundle = tard::load_bundle(bundle_path);
    if (bundle.scoring.sensor_scale.empty()) {
        throw tard::ConfigError("bundle has no scoring statistics; run `tard adapt` first");
    }
    const tard::LabeledSeries series = load_one_series(args, manifest, csv);

    const tard::MethodId method = streaming && bundle.adaptive ? tard::MethodId::Tard
                                                               : tard::MethodId::SourceOnly;
    if (streaming && !bundle.adaptive) {
        std::cerr << "warning: bundle has no adaptive module; streaming falls back to "
                     "Eval-mode scoring\n";
    }
    cfg.settings.window = bundle.scoring.window;
    cfg.settings.alpha = bundle.scoring.alpha;
    cfg.settings.score_mode = bundle.scoring.score_mode;
    const tard::MethodResult r =
        tard::evaluate_bundle(method, streaming ? "stream" : "detect", bundle, {series},
                              cfg.settings);

    const fs::path trace_path = fs::path(args.out_dir) / (streaming ? "stream_trace.csv"
                                                                    : "detect_trace.csv");
    tard::write_trace(r.trace, trace_path);

    std::size_t detections = 0;
    for (auto l : r.trace.labels) detections += l;
    std::cout << "scored " << r.evaluated_rows << " rows (window " << bundle.scoring.window
              << ", decision delay " << bundle.scoring.window - 1 << " samples)\n"
              << "threshold " << r.trace.threshold << ", detections " << detections << "\n";
    // First alarm and its latency against the truth labels, when present.
    for (std::size_t i = 0; i < r.trace.labels.size(); ++i) {
        if (r.trace.labels[i]) {
            std::cout << "first alarm at evaluated row " << i << "\n";
            break;
        }
    }
    bool any_truth = false;
    for (auto t : r.trace.truth) any_truth |= (t != 0);
    if (any_truth) {
        std::cout << "accuracy " << r.accuracy << ", f1 " << r.f1;
        if (r.auc) std::cout << ", auc " << *r.auc;
        std::cout << ", false alarm rate " << r.false_alarm << "\n";
    }
    std::cout << "trace written to " << trace_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const GlobalArgs& args, const std::string& scope_override) {
    tard::RunConfig cfg = load_config(args);
    if (!scope_override.empty()) {
        cfg.settings.stream.adabn_scope =
            scope_override == "global" ? tard::AdabnScope::Global : tard::AdabnScope::Batch;
    }
    fs::create_directories(args.out_dir);

    std::vector<tard::MethodResult> rows;
    for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
        const tard::SplitResult splits = load_splits(cfg, config_dir(args), c);
        for (tard::MethodId m : cfg.methods) {
            std::cout << "running " << tard::method_name(m) << " on " << cfg.cases[c].name
                      << "...\n";
            rows.push_back(tard::run_method(m, cfg.cases[c].name, splits, cfg.settings));
        }
    }
    tard::emit_report(rows, cfg.raw_json, cfg.seed, args.out_dir);
    std::cout << "\n" << tard::render_table(rows) << "\nreport written to "
              << (fs::path(args.out_dir) / "report.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming fault detection with test-time adaptation"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "run configuration file (JSON)")
        ->required();
    app.add_option("--seed", args.seed_override, "override the config seed");
    app.add_option("--out", args.out_dir, "output directory (default: out)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");

    std::string train_method = "source_only";
    auto* train = app.add_subcommand("train", "pretrain the reconstruction model");
    train->add_option("--method", train_method, "source_only or mmd");

    std::string bundle_path;
    bool no_module = false;
    std::size_t case_index = 0;
    auto* adapt = app.add_subcommand(
        "adapt", "fit the adaptive module and detection threshold on target data");
    adapt->add_option("--bundle", bundle_path, "bundle file from `tard train`")->required();
    adapt->add_flag("--no-module", no_module,
                    "skip the adaptive module (threshold/statistics only)");
    adapt->add_option("--case", case_index, "index into datasets.cases (default 0)");

    std::string det_manifest, det_csv;
    auto* detect = app.add_subcommand("detect", "offline Eval-mode scoring of one recording");
    detect->add_option("--bundle", bundle_path, "bundle file")->required();
    detect->add_option("--manifest", det_manifest, "dataset manifest")->required();
    detect->add_option("--csv", det_csv, "recording to score")->required();

    auto* stream = app.add_subcommand(
        "stream", "streaming scoring with per-batch adaptive-module statistics");
    stream->add_option("--bundle", bundle_path, "bundle file")->required();
    stream->add_option("--manifest", det_manifest, "dataset manifest")->required();
    stream->add_option("--csv", det_csv, "recording to score")->required();

    std::string scope_override;
    auto* evaluate = app.add_subcommand(
        "evaluate", "run the configured methods over every fault case and emit a report");
    evaluate->add_option("--adabn-scope", scope_override,
                         "override the adabn statistics scope: batch or global")
        ->check(CLI::IsMember({"batch", "global"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(args);
        if (train->parsed()) return cmd_train(args, train_method);
        if (adapt->parsed()) return cmd_adapt(args, bundle_path, no_module, case_index);
        if (detect->parsed()) return run_detection(args, bundle_path, det_manifest, det_csv,
                                                   false);
        if (stream->parsed()) return run_detection(args, bundle_path, det_manifest, det_csv,
                                                   true);
        if (evaluate->parsed()) return cmd_evaluate(args, scope_override);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
