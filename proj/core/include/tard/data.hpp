#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tard/types.hpp"

namespace tard {

// ---------------------------------------------------------------------------
// Schemas and manifests
// ---------------------------------------------------------------------------

struct FeatureSchema {
    std::vector<std::string> names;  // feature columns, CSV order (after `t`)
    FeaturePartition partition;
    std::vector<std::string> units;  // optional, parallel to names

    std::size_t feature_dim() const { return names.size(); }
};

struct FaultWindow {
    double start_s = 0.0;
    double end_s = 0.0;  // inclusive
};

// A manifest describes one recording family: column roles, fault windows,
// sampling rate. JSON layout documented in docs/file_formats.md.
struct DatasetManifest {
    FeatureSchema schema;
    std::vector<FaultWindow> faults;
    double rate_hz = 1.0;
    std::optional<double> duration_s;  // declared length, when known
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Labeled series
// ---------------------------------------------------------------------------

struct LabeledSeries {
    SampleBatch batch;                 // raw units
    std::vector<std::uint8_t> labels;  // 1 inside a fault window
    std::vector<double> timestamps;    // seconds, non-decreasing

    std::size_t rows() const { return batch.rows(); }
};

// Reads `t,<names...>` CSV rows, labels them against the fault windows
// (inclusive bounds). Errors carry row and column positions.
LabeledSeries ingest_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                         const std::vector<FaultWindow>& faults);

void write_csv(const LabeledSeries& series, const FeatureSchema& schema,
               const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Split protocol
// ---------------------------------------------------------------------------

struct SplitPlan {
    std::size_t source_rows = 0;        // 0 = all healthy source rows
    std::size_t target_adapt_rows = 0;  // m, counts validation rows too
    double target_val_fraction = 0.2;   // tail share of the m rows
};

struct SplitResult {
    SampleBatch source;        // healthy source rows
    SampleBatch target_adapt;  // first m*(1-vf) healthy target rows
    SampleBatch target_val;    // following m*vf healthy target rows
    // Everything else, re-grouped into maximal contiguous runs per recording
    // so that window smoothing never crosses a time gap.
    std::vector<LabeledSeries> test_segments;

    SampleBatch adapt_and_val() const;  // the full m healthy rows
};

// Walks target recordings in order collecting the first m healthy rows;
// faulty rows passed over (and all later rows) form the test segments.
SplitResult make_splits(const std::vector<LabeledSeries>& source_series,
                        const std::vector<LabeledSeries>& target_series, const SplitPlan& plan);

// ---------------------------------------------------------------------------
// Streaming
// ---------------------------------------------------------------------------

// Contiguous, non-overlapping, time-ordered batches; a trailing batch of one
// row is merged into its predecessor (batch statistics need >= 2 rows).
class BatchStream {
public:
    BatchStream(const SampleBatch& series, std::size_t batch_size);

    // Row range [begin, end) of the next batch; nullopt when exhausted.
    std::optional<std::pair<std::size_t, std::size_t>> next_range();
    std::optional<SampleBatch> next();

private:
    const SampleBatch* series_;
    std::size_t batch_size_;
    std::size_t pos_ = 0;
};

std::vector<SampleBatch> stream_batches(const SampleBatch& series, std::size_t batch_size);

// ---------------------------------------------------------------------------
// Synthetic generator (stands in for the physical rigs in oracle tests)
// ---------------------------------------------------------------------------

struct FaultSpec {
    enum class Type { Offset, Drift, Stuck, Oscillation };
    Type type = Type::Offset;
    double amplitude = 1.0;
    std::size_t start = 0;     // row index
    std::size_t duration = 0;  // rows
    std::vector<std::size_t> sensors;  // empty = all sensors
    std::size_t period = 50;   // rows, oscillation only
};

struct DomainShiftSpec {
    std::vector<double> offset;  // per sensor; empty = none
    std::vector<double> gain;    // per sensor; empty = all 1.0
};

struct SynthConfig {
    std::uint64_t system_seed = 1;  // fixes the control->sensor mapping
    std::uint64_t stream_seed = 1;  // schedule, jitter, noise
    std::size_t control_dim = 2;
    std::size_t sensor_dim = 8;
    std::size_t rows = 4000;
    std::size_t setpoint_hold = 400;   // rows per operating condition
    double control_jitter = 0.05;      // fast noise on the controls
    double control_wander = 0.0;       // sd of slow AR(1) wander added to w
    double noise_sigma = 0.05;         // sensor observation noise
    bool linear_map = false;           // skip the saturating nonlinearity
    DomainShiftSpec shift;             // target streams only
    std::optional<FaultSpec> fault;
};

struct SyntheticSeries {
    LabeledSeries observed;
    Matrix clean_sensors;  // deterministic part incl. shift, no noise/fault
    FeatureSchema schema;  // sensors s0..s{k-1}, controls c0..c{n-1}
};

SyntheticSeries generate_synthetic(const SynthConfig& cfg);

}  // namespace tard
