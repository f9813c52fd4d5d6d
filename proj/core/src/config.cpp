#include "tard/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tard/errors.hpp"

namespace tard {

namespace {

using json = nlohmann::json;

ScoreMode score_mode_from(const std::string& name) {
    if (name == "mean_plus_max") return ScoreMode::MeanPlusMax;
    if (name == "mean_plus_sum") return ScoreMode::MeanPlusSum;
    throw ConfigError("config: unknown score_mode '" + name + "'");
}

OutputActivation activation_from(const std::string& name) {
    if (name == "relu") return OutputActivation::Relu;
    if (name == "linear") return OutputActivation::Linear;
    throw ConfigError("config: unknown adaptive_output_activation '" + name + "'");
}

AdabnScope scope_from(const std::string& name) {
    if (name == "batch") return AdabnScope::Batch;
    if (name == "global") return AdabnScope::Global;
    throw ConfigError("config: unknown adabn_scope '" + name + "'");
}

DatasetRef dataset_ref_from(const json& j, const std::string& where) {
    DatasetRef ref;
    if (!j.contains("manifest") || !j.contains("csv")) {
        throw ConfigError("config: " + where + " needs 'manifest' and 'csv'");
    }
    ref.manifest = j["manifest"].get<std::string>();
    if (j["csv"].is_string()) {
        ref.csv.push_back(j["csv"].get<std::string>());
    } else {
        for (const auto& p : j["csv"]) ref.csv.push_back(p.get<std::string>());
    }
    if (ref.csv.empty()) {
        throw ConfigError("config: " + where + " has an empty csv list");
    }
    return ref;
}

FaultSpec::Type fault_type_from(const std::string& name) {
    if (name == "offset") return FaultSpec::Type::Offset;
    if (name == "drift") return FaultSpec::Type::Drift;
    if (name == "stuck") return FaultSpec::Type::Stuck;
    if (name == "oscillation") return FaultSpec::Type::Oscillation;
    throw ConfigError("config: unknown fault type '" + name + "'");
}

SynthConfig synth_config_from(const json& j) {
    SynthConfig c;
    c.system_seed = j.value("system_seed", c.system_seed);
    c.stream_seed = j.value("stream_seed", c.stream_seed);
    c.control_dim = j.value("control_dim", c.control_dim);
    c.sensor_dim = j.value("sensor_dim", c.sensor_dim);
    c.rows = j.value("rows", c.rows);
    c.setpoint_hold = j.value("setpoint_hold", c.setpoint_hold);
    c.control_jitter = j.value("control_jitter", c.control_jitter);
    c.control_wander = j.value("control_wander", c.control_wander);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.linear_map = j.value("linear_map", c.linear_map);
    if (j.contains("shift")) {
        const auto& s = j["shift"];
        if (s.contains("offset")) c.shift.offset = s["offset"].get<std::vector<double>>();
        if (s.contains("gain")) c.shift.gain = s["gain"].get<std::vector<double>>();
    }
    if (j.contains("fault") && !j["fault"].is_null()) {
        const auto& f = j["fault"];
        FaultSpec spec;
        spec.type = fault_type_from(f.value("type", std::string("offset")));
        spec.amplitude = f.value("amplitude", spec.amplitude);
        spec.start = f.value("start", spec.start);
        spec.duration = f.value("duration", spec.duration);
        spec.period = f.value("period", spec.period);
        if (f.contains("sensors")) {
            spec.sensors = f["sensors"].get<std::vector<std::size_t>>();
        }
        c.fault = spec;
    }
    return c;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("config: cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();

    json j;
    try {
        j = json::parse(buffer.str());
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path.string() + "': invalid JSON: " + e.what());
    }

    RunConfig cfg;
    cfg.raw_json = buffer.str();
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("datasets")) {
        const auto& d = j["datasets"];
        if (d.contains("source")) {
            cfg.source = dataset_ref_from(d["source"], "datasets.source");
        }
        if (d.contains("cases")) {
            for (const auto& c : d["cases"]) {
                CaseRef ref;
                ref.name = c.value("name", std::string("case"));
                if (!c.contains("recordings") || c["recordings"].empty()) {
                    throw ConfigError("config: case '" + ref.name + "' needs recordings");
                }
                for (const auto& r : c["recordings"]) {
                    if (!r.contains("manifest") || !r.contains("csv")) {
                        throw ConfigError("config: recording in case '" + ref.name +
                                          "' needs manifest and csv");
                    }
                    ref.recordings.push_back(
                        {r["manifest"].get<std::string>(), r["csv"].get<std::string>()});
                }
                cfg.cases.push_back(std::move(ref));
            }
        }
    }

    if (j.contains("split")) {
        const auto& s = j["split"];
        cfg.split.source_rows = s.value("source_rows", cfg.split.source_rows);
        cfg.split.target_adapt_rows = s.value("target_adapt_rows", cfg.split.target_adapt_rows);
        cfg.split.target_val_fraction =
            s.value("target_val_fraction", cfg.split.target_val_fraction);
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        auto& tc = cfg.settings.train;
        tc.epochs = t.value("epochs", tc.epochs);
        tc.batch_size = t.value("batch_size", tc.batch_size);
        tc.lr = t.value("lr", tc.lr);
        tc.patience = t.value("patience", tc.patience);
        tc.validation_fraction = t.value("validation_fraction", tc.validation_fraction);
    }
    cfg.settings.train.seed = cfg.seed;

    if (j.contains("mmd")) {
        const auto& m = j["mmd"];
        auto& mc = cfg.settings.mmd;
        mc.lambda = m.value("lambda", mc.lambda);
        if (m.contains("bandwidths")) {
            mc.bandwidths = m["bandwidths"].get<std::vector<double>>();
        }
        if (m.contains("bandwidth_factors")) {
            mc.bandwidth_factors = m["bandwidth_factors"].get<std::vector<double>>();
        }
    }

    if (j.contains("scoring")) {
        const auto& s = j["scoring"];
        cfg.settings.window = s.value("window", cfg.settings.window);
        cfg.settings.alpha = s.value("alpha", cfg.settings.alpha);
        if (s.contains("score_mode")) {
            cfg.settings.score_mode = score_mode_from(s["score_mode"].get<std::string>());
        }
        if (cfg.settings.window < 1) {
            throw ConfigError("config: scoring.window must be >= 1");
        }
        if (cfg.settings.alpha <= 0.0) {
            throw ConfigError("config: scoring.alpha must be positive");
        }
    }

    if (j.contains("stream")) {
        const auto& s = j["stream"];
        cfg.settings.stream.batch_size = s.value("batch_size", cfg.settings.stream.batch_size);
        if (s.contains("adabn_scope")) {
            cfg.settings.stream.adabn_scope = scope_from(s["adabn_scope"].get<std::string>());
        }
    }

    if (j.contains("adaptive_output_activation")) {
        cfg.settings.adaptive_activation =
            activation_from(j["adaptive_output_activation"].get<std::string>());
    }

    if (j.contains("methods")) {
        for (const auto& m : j["methods"]) {
            cfg.methods.push_back(method_from_name(m.get<std::string>()));
        }
    } else {
        cfg.methods = {MethodId::SourceOnly, MethodId::AdaBn, MethodId::Mmd, MethodId::Tard};
    }

    if (j.contains("synth")) {
        const auto& s = j["synth"];
        SynthSpec spec;
        if (s.contains("source")) spec.source = synth_config_from(s["source"]);
        if (s.contains("target")) spec.target = synth_config_from(s["target"]);
        cfg.synth = std::move(spec);
    }
    return cfg;
}

std::filesystem::path resolve_path(const RunConfig&, const std::filesystem::path& config_path,
                                   const std::string& entry) {
    std::filesystem::path p(entry);
    if (p.is_absolute()) return p;
    return config_path.parent_path() / p;
}

std::vector<LabeledSeries> load_dataset(const DatasetRef& ref,
                                        const std::filesystem::path& base_dir) {
    const DatasetManifest manifest = load_manifest(base_dir / ref.manifest);
    std::vector<LabeledSeries> out;
    out.reserve(ref.csv.size());
    for (const auto& csv : ref.csv) {
        out.push_back(ingest_csv(base_dir / csv, manifest.schema, manifest.faults));
    }
    return out;
}

std::vector<LabeledSeries> load_case(const CaseRef& ref,
                                     const std::filesystem::path& base_dir) {
    std::vector<LabeledSeries> out;
    out.reserve(ref.recordings.size());
    for (const auto& rec : ref.recordings) {
        const DatasetManifest manifest = load_manifest(base_dir / rec.manifest);
        out.push_back(ingest_csv(base_dir / rec.csv, manifest.schema, manifest.faults));
    }
    return out;
}

}  // namespace tard
