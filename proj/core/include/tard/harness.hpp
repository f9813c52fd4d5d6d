#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tard/adaptation.hpp"
#include "tard/data.hpp"
#include "tard/detection.hpp"
#include "tard/metrics.hpp"
#include "tard/models.hpp"

namespace tard {

enum class MethodId { SourceOnly, AdaBn, Mmd, Tard };

std::string method_name(MethodId m);
MethodId method_from_name(const std::string& name);

enum class AdabnScope { Batch, Global };

struct StreamConfig {
    std::size_t batch_size = 64;
    AdabnScope adabn_scope = AdabnScope::Batch;
};

// Everything a method run needs besides the data splits.
struct RunSettings {
    TrainConfig train;
    MMDConfig mmd;
    std::size_t window = 10;
    double alpha = 1.0;
    ScoreMode score_mode = ScoreMode::MeanPlusMax;
    StreamConfig stream;
    OutputActivation adaptive_activation = OutputActivation::Relu;
};

struct MethodResult {
    MethodId method = MethodId::SourceOnly;
    std::string case_name;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // absent when truth has a single class
    double false_alarm = 0.0;
    std::size_t evaluated_rows = 0;
    ScoreTrace trace;
};

// Fits the method's bundle from raw-unit splits: standardization from source,
// pretraining (plain or MMD-regularized), adaptive module for tard, scoring
// statistics from the healthy target adapt+val rows.
ModelBundle build_bundle(MethodId method, const SplitResult& splits,
                         const RunSettings& settings);

// Streams the test segments through the bundle with the method's test-time
// behavior (Eval for source_only/mmd, per-batch or global statistics
// replacement for adabn, adaptive-module AdaBN for tard) and computes metrics
// on the smoothed region.
MethodResult evaluate_bundle(MethodId method, const std::string& case_name, ModelBundle& bundle,
                             const std::vector<LabeledSeries>& segments,
                             const RunSettings& settings);

// build_bundle + evaluate_bundle.
MethodResult run_method(MethodId method, const std::string& case_name, const SplitResult& splits,
                        const RunSettings& settings);

// Report: `report.json` (full precision, machine-readable), `report.txt`
// (2-decimal table matching the json), trace files under `traces/`.
// Output is deterministic for identical inputs.
void emit_report(const std::vector<MethodResult>& rows, const std::string& config_echo,
                 std::uint64_t seed, const std::filesystem::path& out_dir);

std::string render_table(const std::vector<MethodResult>& rows);

}  // namespace tard
