#include "tard/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tard/errors.hpp"

namespace tard {

namespace {

using json = nlohmann::ordered_json;

}  // namespace

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("manifest: cannot open '" + path.string() + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("manifest '" + path.string() + "': invalid JSON: " + e.what());
    }

    DatasetManifest m;
    m.rate_hz = j.value("rate_hz", 1.0);
    if (m.rate_hz <= 0.0) {
        throw ParseError("manifest '" + path.string() + "': rate_hz must be positive");
    }
    if (j.contains("duration_s")) m.duration_s = j["duration_s"].get<double>();

    if (!j.contains("columns") || !j["columns"].is_array() || j["columns"].empty()) {
        throw ParseError("manifest '" + path.string() + "': missing columns array");
    }
    std::size_t idx = 0;
    for (const auto& col : j["columns"]) {
        if (!col.contains("name") || !col.contains("role")) {
            throw ParseError("manifest '" + path.string() + "': column " + std::to_string(idx) +
                             " needs name and role");
        }
        const std::string name = col["name"].get<std::string>();
        const std::string role = col["role"].get<std::string>();
        m.schema.names.push_back(name);
        m.schema.units.push_back(col.value("unit", ""));
        if (role == "sensor") {
            m.schema.partition.sensor_cols.push_back(idx);
        } else if (role == "control") {
            m.schema.partition.control_cols.push_back(idx);
        } else {
            throw ParseError("manifest '" + path.string() + "': column '" + name +
                             "' has unknown role '" + role + "'");
        }
        ++idx;
    }
    m.schema.partition.validate(m.schema.names.size());

    if (j.contains("faults")) {
        for (const auto& f : j["faults"]) {
            FaultWindow w;
            w.start_s = f.at("start_s").get<double>();
            w.end_s = f.at("end_s").get<double>();
            if (w.end_s < w.start_s) {
                throw ParseError("manifest '" + path.string() + "': fault window ends before it starts");
            }
            m.faults.push_back(w);
        }
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["rate_hz"] = manifest.rate_hz;
    if (manifest.duration_s) j["duration_s"] = *manifest.duration_s;
    j["columns"] = json::array();
    for (std::size_t i = 0; i < manifest.schema.names.size(); ++i) {
        json col;
        col["name"] = manifest.schema.names[i];
        const auto& part = manifest.schema.partition;
        const bool is_sensor =
            std::find(part.sensor_cols.begin(), part.sensor_cols.end(), i) !=
            part.sensor_cols.end();
        col["role"] = is_sensor ? "sensor" : "control";
        if (i < manifest.schema.units.size() && !manifest.schema.units[i].empty()) {
            col["unit"] = manifest.schema.units[i];
        }
        j["columns"].push_back(std::move(col));
    }
    j["faults"] = json::array();
    for (const auto& f : manifest.faults) {
        j["faults"].push_back({{"start_s", f.start_s}, {"end_s", f.end_s}});
    }
    std::ofstream out(path);
    if (!out) {
        throw ParseError("manifest: cannot open '" + path.string() + "' for writing");
    }
    out << j.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    // Allow trailing whitespace/CR only.
    while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
    if (end == begin || (end && *end != '\0')) {
        throw ParseError("csv: non-numeric cell at row " + std::to_string(row) + ", column '" +
                         column + "': '" + cell + "'");
    }
    return v;
}

}  // namespace

LabeledSeries ingest_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                         const std::vector<FaultWindow>& faults) {
    schema.partition.validate(schema.feature_dim());
    std::ifstream in(path);
    if (!in) {
        throw ParseError("csv: cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("csv '" + path.string() + "': empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "t") {
        throw ParseError("csv '" + path.string() + "': first column must be 't'");
    }
    if (header.size() != schema.feature_dim() + 1) {
        throw ParseError("csv '" + path.string() + "': expected " +
                         std::to_string(schema.feature_dim() + 1) + " columns, found " +
                         std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < schema.names.size(); ++i) {
        if (header[i + 1] != schema.names[i]) {
            throw ParseError("csv '" + path.string() + "': header column " +
                             std::to_string(i + 1) + " is '" + header[i + 1] +
                             "', manifest says '" + schema.names[i] + "'");
        }
    }

    std::vector<double> values;
    std::vector<double> timestamps;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("csv '" + path.string() + "': row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        }
        const double t = parse_cell(cells[0], row, "t");
        if (!timestamps.empty() && t < timestamps.back()) {
            throw ParseError("csv '" + path.string() + "': non-monotone time at row " +
                             std::to_string(row));
        }
        timestamps.push_back(t);
        for (std::size_t j = 0; j < schema.feature_dim(); ++j) {
            values.push_back(parse_cell(cells[j + 1], row, schema.names[j]));
        }
    }
    if (timestamps.empty()) {
        throw ParseError("csv '" + path.string() + "': no data rows");
    }

    LabeledSeries series;
    series.batch.values = Matrix(timestamps.size(), schema.feature_dim());
    series.batch.values.storage() = std::move(values);
    series.batch.partition = schema.partition;
    series.timestamps = std::move(timestamps);
    series.labels.resize(series.timestamps.size(), 0);
    for (std::size_t i = 0; i < series.timestamps.size(); ++i) {
        const double t = series.timestamps[i];
        for (const auto& w : faults) {
            if (t >= w.start_s && t <= w.end_s) {
                series.labels[i] = 1;
                break;
            }
        }
    }
    return series;
}

void write_csv(const LabeledSeries& series, const FeatureSchema& schema,
               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("csv: cannot open '" + path.string() + "' for writing");
    }
    out << "t";
    for (const auto& name : schema.names) out << "," << name;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < series.rows(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", series.timestamps[i]);
        out << buf;
        const auto row = series.batch.values.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SampleBatch SplitResult::adapt_and_val() const {
    SampleBatch out;
    out.partition = target_adapt.partition;
    out.values = vstack(target_adapt.values, target_val.values);
    return out;
}

namespace {

// Gathers the listed rows of a series into a flat feature matrix.
Matrix gather_series_rows(const LabeledSeries& s, const std::vector<std::size_t>& rows) {
    return gather_rows(s.batch.values, rows);
}

}  // namespace

SplitResult make_splits(const std::vector<LabeledSeries>& source_series,
                        const std::vector<LabeledSeries>& target_series, const SplitPlan& plan) {
    if (source_series.empty() || target_series.empty()) {
        throw ConfigError("make_splits: need at least one source and one target series");
    }
    const FeaturePartition& partition = source_series.front().batch.partition;
    for (const auto& s : source_series) {
        if (!(s.batch.partition == partition)) {
            throw ConfigError("make_splits: source series have differing partitions");
        }
    }
    for (const auto& s : target_series) {
        if (!(s.batch.partition == partition)) {
            throw ConfigError("make_splits: target partition differs from source");
        }
    }
    if (plan.target_adapt_rows == 0) {
        throw ConfigError("make_splits: target_adapt_rows must be positive");
    }
    if (plan.target_val_fraction < 0.0 || plan.target_val_fraction > 0.5) {
        throw ConfigError("make_splits: target_val_fraction must be in [0, 0.5]");
    }

    SplitResult result;
    result.source.partition = partition;
    result.target_adapt.partition = partition;
    result.target_val.partition = partition;

    // Source: healthy rows in (series, time) order, first source_rows (0 = all).
    {
        Matrix collected;
        std::size_t taken = 0;
        const std::size_t want = plan.source_rows;
        for (const auto& s : source_series) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < s.rows(); ++i) {
                if (want != 0 && taken + rows.size() >= want) break;
                if (s.labels[i] == 0) rows.push_back(i);
            }
            collected = vstack(collected, gather_series_rows(s, rows));
            taken += rows.size();
            if (want != 0 && taken >= want) break;
        }
        if (want != 0 && taken < want) {
            throw ConfigError("make_splits: source has only " + std::to_string(taken) +
                              " healthy rows, plan wants " + std::to_string(want));
        }
        if (collected.rows() == 0) {
            throw ConfigError("make_splits: source has no healthy rows");
        }
        result.source.values = std::move(collected);
    }

    // Target: first m healthy rows into adapt+val, everything else into
    // contiguous test segments.
    const std::size_t m = plan.target_adapt_rows;
    Matrix adapt_rows;
    std::size_t healthy_taken = 0;
    for (const auto& s : target_series) {
        std::vector<std::size_t> taken_rows;
        std::vector<std::uint8_t> in_adapt(s.rows(), 0);
        for (std::size_t i = 0; i < s.rows() && healthy_taken < m; ++i) {
            if (s.labels[i] == 0) {
                taken_rows.push_back(i);
                in_adapt[i] = 1;
                ++healthy_taken;
            }
        }
        adapt_rows = vstack(adapt_rows, gather_series_rows(s, taken_rows));

        // Remaining rows, grouped into maximal contiguous runs.
        std::size_t run_start = 0;
        bool in_run = false;
        auto flush = [&](std::size_t end) {
            LabeledSeries seg;
            seg.batch.partition = partition;
            seg.batch.values = slice_rows(s.batch.values, run_start, end);
            seg.labels.assign(s.labels.begin() + run_start, s.labels.begin() + end);
            seg.timestamps.assign(s.timestamps.begin() + run_start, s.timestamps.begin() + end);
            result.test_segments.push_back(std::move(seg));
        };
        for (std::size_t i = 0; i < s.rows(); ++i) {
            if (!in_adapt[i]) {
                if (!in_run) {
                    run_start = i;
                    in_run = true;
                }
            } else if (in_run) {
                flush(i);
                in_run = false;
            }
        }
        if (in_run) flush(s.rows());
    }
    if (healthy_taken < m) {
        throw ConfigError("make_splits: insufficient healthy prefix: plan wants " +
                          std::to_string(m) + " healthy target rows, found " +
                          std::to_string(healthy_taken));
    }

    const std::size_t val_count = static_cast<std::size_t>(
        std::llround(plan.target_val_fraction * static_cast<double>(m)));
    result.target_adapt.values = slice_rows(adapt_rows, 0, m - val_count);
    result.target_val.values = slice_rows(adapt_rows, m - val_count, m);
    return result;
}

// ---------------------------------------------------------------------------
// Streaming
// ---------------------------------------------------------------------------

BatchStream::BatchStream(const SampleBatch& series, std::size_t batch_size)
    : series_(&series), batch_size_(batch_size) {
    if (batch_size < 2) {
        throw ConfigError("BatchStream: batch_size must be >= 2");
    }
}

std::optional<std::pair<std::size_t, std::size_t>> BatchStream::next_range() {
    const std::size_t n = series_->rows();
    if (pos_ >= n) return std::nullopt;
    std::size_t end = std::min(pos_ + batch_size_, n);
    if (n - end == 1) end = n;  // merge a trailing singleton
    const auto range = std::make_pair(pos_, end);
    pos_ = end;
    return range;
}

std::optional<SampleBatch> BatchStream::next() {
    const auto range = next_range();
    if (!range) return std::nullopt;
    SampleBatch b;
    b.partition = series_->partition;
    b.values = slice_rows(series_->values, range->first, range->second);
    return b;
}

std::vector<SampleBatch> stream_batches(const SampleBatch& series, std::size_t batch_size) {
    BatchStream stream(series, batch_size);
    std::vector<SampleBatch> out;
    while (auto b = stream.next()) out.push_back(std::move(*b));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

SyntheticSeries generate_synthetic(const SynthConfig& cfg) {
    if (cfg.sensor_dim == 0 || cfg.control_dim == 0 || cfg.rows == 0) {
        throw ConfigError("generate_synthetic: dims and rows must be positive");
    }
    if (cfg.noise_sigma < 0.0) {
        throw ConfigError("generate_synthetic: noise_sigma must be >= 0");
    }
    if (cfg.fault) {
        if (cfg.fault->start + cfg.fault->duration > cfg.rows) {
            throw ConfigError("generate_synthetic: fault window extends past the series");
        }
        for (std::size_t s : cfg.fault->sensors) {
            if (s >= cfg.sensor_dim) {
                throw ConfigError("generate_synthetic: fault sensor index out of range");
            }
        }
    }
    if (!cfg.shift.offset.empty() && cfg.shift.offset.size() != cfg.sensor_dim) {
        throw ConfigError("generate_synthetic: shift offset length must equal sensor_dim");
    }
    if (!cfg.shift.gain.empty() && cfg.shift.gain.size() != cfg.sensor_dim) {
        throw ConfigError("generate_synthetic: shift gain length must equal sensor_dim");
    }

    const std::size_t k = cfg.sensor_dim;
    const std::size_t c = cfg.control_dim;
    const std::size_t hidden = std::max<std::size_t>(4, k);

    // Plant: u = tanh(A w + a0), x = B u + b0 (positive baselines).
    std::mt19937_64 sys_rng(cfg.system_seed);
    std::uniform_real_distribution<double> ua(-1.0, 1.0);
    Matrix a_mat(c, hidden);
    for (double& v : a_mat.storage()) v = ua(sys_rng);
    std::vector<double> a0(hidden);
    for (double& v : a0) v = 0.3 * ua(sys_rng);
    Matrix b_mat(hidden, k);
    for (double& v : b_mat.storage()) v = 0.8 * ua(sys_rng);
    std::vector<double> b0(k);
    for (double& v : b0) v = 3.0 + ua(sys_rng);

    std::mt19937_64 rng(cfg.stream_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t hold = std::max<std::size_t>(1, cfg.setpoint_hold);
    const std::size_t n_setpoints = (cfg.rows + hold - 1) / hold;
    Matrix setpoints(n_setpoints, c);
    for (double& v : setpoints.storage()) v = ua(rng);

    SyntheticSeries out;
    out.observed.batch.values = Matrix(cfg.rows, k + c);
    for (std::size_t j = 0; j < k; ++j) out.observed.batch.partition.sensor_cols.push_back(j);
    for (std::size_t j = 0; j < c; ++j) out.observed.batch.partition.control_cols.push_back(k + j);
    out.observed.labels.assign(cfg.rows, 0);
    out.observed.timestamps.resize(cfg.rows);
    out.clean_sensors = Matrix(cfg.rows, k);

    out.schema.partition = out.observed.batch.partition;
    for (std::size_t j = 0; j < k; ++j) out.schema.names.push_back("s" + std::to_string(j));
    for (std::size_t j = 0; j < c; ++j) out.schema.names.push_back("c" + std::to_string(j));
    out.schema.units.assign(k + c, "");

    std::vector<double> wander(c, 0.0);
    const double rho = 0.95;
    const double wander_innov = cfg.control_wander * std::sqrt(1.0 - rho * rho);

    std::vector<double> w(c), u(hidden), x(k);
    for (std::size_t i = 0; i < cfg.rows; ++i) {
        out.observed.timestamps[i] = static_cast<double>(i);

        const auto sp = setpoints.row(i / hold);
        for (std::size_t j = 0; j < c; ++j) {
            wander[j] = rho * wander[j] + wander_innov * gauss(rng);
            w[j] = sp[j] + wander[j] + cfg.control_jitter * gauss(rng);
        }

        for (std::size_t h = 0; h < hidden; ++h) {
            double acc = a0[h];
            for (std::size_t j = 0; j < c; ++j) acc += w[j] * a_mat(j, h);
            u[h] = cfg.linear_map ? acc : std::tanh(acc);
        }
        for (std::size_t j = 0; j < k; ++j) {
            double acc = b0[j];
            for (std::size_t h = 0; h < hidden; ++h) acc += u[h] * b_mat(h, j);
            x[j] = acc;
        }

        // Domain shift belongs to the deterministic part.
        for (std::size_t j = 0; j < k; ++j) {
            const double gain = cfg.shift.gain.empty() ? 1.0 : cfg.shift.gain[j];
            const double offset = cfg.shift.offset.empty() ? 0.0 : cfg.shift.offset[j];
            x[j] = gain * x[j] + offset;
            out.clean_sensors(i, j) = x[j];
        }

        auto row = out.observed.batch.values.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = x[j] + cfg.noise_sigma * gauss(rng);
        }
        for (std::size_t j = 0; j < c; ++j) {
            row[k + j] = w[j];
        }
    }

    if (cfg.fault && cfg.fault->duration > 0) {
        const FaultSpec& f = *cfg.fault;
        std::vector<std::size_t> sensors = f.sensors;
        if (sensors.empty()) {
            sensors.resize(k);
            std::iota(sensors.begin(), sensors.end(), std::size_t{0});
        }
        std::vector<double> frozen(sensors.size());
        for (std::size_t si = 0; si < sensors.size(); ++si) {
            frozen[si] = out.observed.batch.values(f.start, sensors[si]);
        }
        for (std::size_t i = f.start; i < f.start + f.duration; ++i) {
            out.observed.labels[i] = 1;
            const double progress =
                static_cast<double>(i - f.start) / static_cast<double>(f.duration);
            for (std::size_t si = 0; si < sensors.size(); ++si) {
                double& v = out.observed.batch.values(i, sensors[si]);
                switch (f.type) {
                    case FaultSpec::Type::Offset:
                        v += f.amplitude;
                        break;
                    case FaultSpec::Type::Drift:
                        v += f.amplitude * progress;
                        break;
                    case FaultSpec::Type::Stuck:
                        v = frozen[si];
                        break;
                    case FaultSpec::Type::Oscillation:
                        v += f.amplitude *
                             std::sin(2.0 * M_PI * static_cast<double>(i - f.start) /
                                      static_cast<double>(f.period));
                        break;
                }
            }
        }
    }
    return out;
}

}  // namespace tard
