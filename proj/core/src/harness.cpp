#include "tard/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "tard/errors.hpp"

namespace tard {

std::string method_name(MethodId m) {
    switch (m) {
        case MethodId::SourceOnly: return "source_only";
        case MethodId::AdaBn: return "adabn";
        case MethodId::Mmd: return "mmd";
        case MethodId::Tard: return "tard";
    }
    return "unknown";
}

MethodId method_from_name(const std::string& name) {
    if (name == "source_only") return MethodId::SourceOnly;
    if (name == "adabn") return MethodId::AdaBn;
    if (name == "mmd") return MethodId::Mmd;
    if (name == "tard") return MethodId::Tard;
    throw ConfigError("unknown method '" + name +
                      "' (expected source_only|adabn|mmd|tard)");
}

ModelBundle build_bundle(MethodId method, const SplitResult& splits,
                         const RunSettings& settings) {
    ModelBundle bundle;
    bundle.partition = splits.source.partition;
    bundle.seed = settings.train.seed;
    bundle.standardization = compute_standardization(splits.source.values);

    SampleBatch std_source = splits.source;
    bundle.standardization.apply(std_source.values);

    const SampleBatch adapt_raw = splits.adapt_and_val();
    SampleBatch std_adapt = adapt_raw;
    bundle.standardization.apply(std_adapt.values);

    if (method == MethodId::Mmd) {
        bundle.ae = pretrain_mmd(std_source, std_adapt, settings.train, settings.mmd);
    } else {
        bundle.ae = pretrain_source(std_source, settings.train);
    }

    if (method == MethodId::Tard) {
        bundle.adaptive = train_adaptive(std_adapt, bundle.ae, settings.train,
                                         settings.adaptive_activation);
    }

    bundle.scoring.sensor_scale = sensor_scale_from(adapt_raw.sensors());
    bundle.scoring.window = settings.window;
    bundle.scoring.alpha = settings.alpha;
    bundle.scoring.score_mode = settings.score_mode;
    bundle.scoring.threshold_base =
        compute_threshold_base({adapt_raw}, bundle, settings.window, settings.score_mode);
    return bundle;
}

namespace {

// Scores one raw batch: standardize, predict with the given BN modes,
// de-standardize, Eqs. 2-3. The mode arguments describe the test-time
// behavior of the method being evaluated.
std::vector<double> score_batch(const SampleBatch& raw_batch, ModelBundle& bundle,
                                const ScoringConfig& cfg, BatchNormMode ae_mode,
                                BatchNormMode adaptive_mode, bool use_adaptive) {
    SampleBatch standardized = raw_batch;
    bundle.standardization.apply(standardized.values);

    bundle.ae.set_bn_mode(ae_mode);
    Matrix pred;
    if (use_adaptive) {
        if (!bundle.adaptive) {
            throw UsageError("score_batch: adaptive prediction requested without a module");
        }
        bundle.adaptive->set_bn_mode(adaptive_mode);
        pred = corrected_predict(standardized, bundle);
    } else {
        pred = ae_predict(standardized, bundle.ae);
    }
    bundle.standardization.invert_columns(pred, bundle.partition.sensor_cols);

    const Matrix residual = relative_residual(pred, raw_batch.sensors(), cfg);
    return anomaly_scores(residual, cfg.score_mode);
}

}  // namespace

MethodResult evaluate_bundle(MethodId method, const std::string& case_name, ModelBundle& bundle,
                             const std::vector<LabeledSeries>& segments,
                             const RunSettings& settings) {
    const std::size_t window = settings.window;
    const ScoringConfig cfg = scoring_config_from(bundle.scoring);
    const double threshold = cfg.alpha * cfg.threshold_base;

    MethodResult result;
    result.method = method;
    result.case_name = case_name;
    result.trace.threshold = threshold;

    // Global-scope statistics replacement happens once, over the whole test
    // stream, before any scoring.
    if (method == MethodId::AdaBn && settings.stream.adabn_scope == AdabnScope::Global) {
        Matrix all;
        for (const auto& seg : segments) all = vstack(all, seg.batch.values);
        if (all.rows() >= 2) {
            SampleBatch pooled{std::move(all), bundle.partition};
            bundle.standardization.apply(pooled.values);
            bundle.ae = adabn_transform(bundle.ae, pooled);
        }
    }

    for (const auto& segment : segments) {
        if (segment.rows() < std::max<std::size_t>(window, 2)) {
            continue;  // fully consumed by smoothing truncation
        }

        std::vector<double> scores;
        scores.reserve(segment.rows());
        switch (method) {
            case MethodId::SourceOnly:
            case MethodId::Mmd: {
                auto s = score_series_eval(segment.batch, bundle, cfg.score_mode);
                scores.insert(scores.end(), s.begin(), s.end());
                break;
            }
            case MethodId::AdaBn: {
                if (settings.stream.adabn_scope == AdabnScope::Global) {
                    auto s = score_series_eval(segment.batch, bundle, cfg.score_mode);
                    scores.insert(scores.end(), s.begin(), s.end());
                } else {
                    BatchStream stream(segment.batch, settings.stream.batch_size);
                    while (auto batch = stream.next()) {
                        auto s = score_batch(*batch, bundle, cfg, BatchNormMode::AdaBN,
                                             BatchNormMode::Eval, false);
                        scores.insert(scores.end(), s.begin(), s.end());
                    }
                }
                break;
            }
            case MethodId::Tard: {
                // The backbone stays in Eval; only the adaptive module's BN
                // follows the incoming batch statistics.
                BatchStream stream(segment.batch, settings.stream.batch_size);
                while (auto batch = stream.next()) {
                    auto s = score_batch(*batch, bundle, cfg, BatchNormMode::Eval,
                                         BatchNormMode::AdaBN, true);
                    scores.insert(scores.end(), s.begin(), s.end());
                }
                break;
            }
        }

        const std::vector<double> smoothed = smooth_scores(scores, window);
        const std::vector<std::uint8_t> labels = detect(smoothed, cfg);
        for (std::size_t i = 0; i < smoothed.size(); ++i) {
            result.trace.raw.push_back(scores[i]);
            result.trace.smoothed.push_back(smoothed[i]);
            result.trace.labels.push_back(labels[i]);
            result.trace.truth.push_back(segment.labels[i]);
        }
    }

    if (result.trace.smoothed.empty()) {
        throw ConfigError("evaluate_bundle: no test rows survive smoothing truncation");
    }

    result.evaluated_rows = result.trace.smoothed.size();
    result.accuracy = accuracy(result.trace.labels, result.trace.truth);
    result.f1 = f1_score(result.trace.labels, result.trace.truth);
    result.false_alarm = false_alarm_rate(result.trace.labels, result.trace.truth);

    const bool has_pos = std::find(result.trace.truth.begin(), result.trace.truth.end(),
                                   std::uint8_t{1}) != result.trace.truth.end();
    const bool has_neg = std::find(result.trace.truth.begin(), result.trace.truth.end(),
                                   std::uint8_t{0}) != result.trace.truth.end();
    if (has_pos && has_neg) {
        result.auc = auc(result.trace.smoothed, result.trace.truth);
    }
    return result;
}

MethodResult run_method(MethodId method, const std::string& case_name, const SplitResult& splits,
                        const RunSettings& settings) {
    ModelBundle bundle = build_bundle(method, splits, settings);
    return evaluate_bundle(method, case_name, bundle, splits.test_segments, settings);
}

namespace {

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    }
    return out;
}

std::string format2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string render_table(const std::vector<MethodResult>& rows) {
    // Case rows, method column groups in the fixed order the tables use.
    const std::vector<MethodId> order = {MethodId::SourceOnly, MethodId::AdaBn, MethodId::Mmd,
                                         MethodId::Tard};
    std::vector<std::string> cases;
    for (const auto& r : rows) {
        if (std::find(cases.begin(), cases.end(), r.case_name) == cases.end()) {
            cases.push_back(r.case_name);
        }
    }
    std::map<std::pair<std::string, MethodId>, const MethodResult*> index;
    for (const auto& r : rows) index[{r.case_name, r.method}] = &r;

    std::size_t name_width = 10;
    for (const auto& c : cases) name_width = std::max(name_width, c.size());

    std::string out;
    out += std::string(name_width, ' ');
    for (MethodId m : order) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " | %-18s", method_name(m).c_str());
        out += buf;
    }
    out += "\n";
    out += std::string(name_width, ' ');
    for (std::size_t i = 0; i < order.size(); ++i) out += " | Acc   F1    AUC  ";
    out += "\n";
    out += std::string(name_width + order.size() * 21, '-');
    out += "\n";

    for (const auto& c : cases) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(name_width), c.c_str());
        out += buf;
        for (MethodId m : order) {
            auto it = index.find({c, m});
            if (it == index.end()) {
                out += " |  -     -     -  ";
                continue;
            }
            const MethodResult& r = *it->second;
            const std::string auc_str = r.auc ? format2(*r.auc) : " -  ";
            std::snprintf(buf, sizeof(buf), " | %s  %s  %s", format2(r.accuracy).c_str(),
                          format2(r.f1).c_str(), auc_str.c_str());
            out += buf;
        }
        out += "\n";
    }
    return out;
}

void emit_report(const std::vector<MethodResult>& rows, const std::string& config_echo,
                 std::uint64_t seed, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    using json = nlohmann::ordered_json;

    fs::create_directories(out_dir / "traces");

    json report;
    report["seed"] = seed;
    if (!config_echo.empty()) {
        try {
            report["config"] = json::parse(config_echo);
        } catch (const nlohmann::json::parse_error&) {
            report["config"] = config_echo;
        }
    } else {
        report["config"] = nullptr;
    }
    report["results"] = json::array();

    for (const auto& r : rows) {
        const std::string trace_name =
            sanitize(r.case_name) + "_" + method_name(r.method) + ".csv";
        write_trace(r.trace, out_dir / "traces" / trace_name);

        json row;
        row["case"] = r.case_name;
        row["method"] = method_name(r.method);
        row["accuracy"] = r.accuracy;
        row["f1"] = r.f1;
        if (r.auc) {
            row["auc"] = *r.auc;
        } else {
            row["auc"] = nullptr;
        }
        row["false_alarm_rate"] = r.false_alarm;
        row["evaluated_rows"] = r.evaluated_rows;
        row["threshold"] = r.trace.threshold;
        row["trace_file"] = "traces/" + trace_name;
        report["results"].push_back(std::move(row));
    }

    std::ofstream jf(out_dir / "report.json");
    if (!jf) throw ParseError("report: cannot write report.json");
    jf << report.dump(1) << "\n";

    std::ofstream tf(out_dir / "report.txt");
    if (!tf) throw ParseError("report: cannot write report.txt");
    tf << render_table(rows);
}

}  // namespace tard
