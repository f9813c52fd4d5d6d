// Bundle file I/O. Format: a single JSON document with top-level keys
// meta / ae / adaptive / standardization / scoring; doubles are written with
// shortest round-trip decimal text, so save->load is bit-exact.
// Field names are documented in docs/file_formats.md.

#include <fstream>

#include <nlohmann/json.hpp>

#include "tard/errors.hpp"
#include "tard/models.hpp"

namespace tard {

namespace {

using json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.storage();
    return j;
}

json dense_to_json(const DenseParams& d) {
    json j;
    j["weight"] = matrix_to_json(d.weight);
    j["bias"] = d.bias;
    return j;
}

json bn_to_json(const BatchNormState& s) {
    json j;
    j["gamma"] = s.gamma;
    j["beta"] = s.beta;
    j["running_mean"] = s.running_mean;
    j["running_var"] = s.running_var;
    j["momentum"] = s.momentum;
    j["eps"] = s.eps;
    return j;
}

const char* activation_name(OutputActivation a) {
    return a == OutputActivation::Relu ? "relu" : "linear";
}

const char* score_mode_name(ScoreMode m) {
    return m == ScoreMode::MeanPlusMax ? "mean_plus_max" : "mean_plus_sum";
}

// --- validating readers ----------------------------------------------------

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ParseError("bundle: field '" + field + "': " + why);
}

const json& need(const json& j, const std::string& field, const std::string& path) {
    auto it = j.find(field);
    if (it == j.end()) fail(path.empty() ? field : path + "." + field, "missing");
    return *it;
}

std::vector<double> read_vector(const json& j, const std::string& path, std::size_t expect) {
    if (!j.is_array()) fail(path, "expected an array");
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) fail(path, "non-numeric entry");
        v.push_back(e.get<double>());
    }
    if (expect != 0 && v.size() != expect) {
        fail(path, "expected " + std::to_string(expect) + " entries, found " +
                       std::to_string(v.size()));
    }
    return v;
}

Matrix read_matrix(const json& j, const std::string& path, std::size_t rows, std::size_t cols) {
    const std::size_t r = need(j, "rows", path).get<std::size_t>();
    const std::size_t c = need(j, "cols", path).get<std::size_t>();
    if (rows != 0 && r != rows) {
        fail(path + ".rows", "expected " + std::to_string(rows) + ", found " + std::to_string(r));
    }
    if (cols != 0 && c != cols) {
        fail(path + ".cols", "expected " + std::to_string(cols) + ", found " + std::to_string(c));
    }
    std::vector<double> data = read_vector(need(j, "data", path), path + ".data", r * c);
    Matrix m(r, c);
    m.storage() = std::move(data);
    return m;
}

DenseParams read_dense(const json& j, const std::string& path, std::size_t in, std::size_t out) {
    DenseParams d;
    d.weight = read_matrix(need(j, "weight", path), path + ".weight", in, out);
    d.bias = read_vector(need(j, "bias", path), path + ".bias", d.weight.cols());
    return d;
}

BatchNormState read_bn(const json& j, const std::string& path, std::size_t dim) {
    BatchNormState s;
    s.gamma = read_vector(need(j, "gamma", path), path + ".gamma", dim);
    s.beta = read_vector(need(j, "beta", path), path + ".beta", dim);
    s.running_mean = read_vector(need(j, "running_mean", path), path + ".running_mean", dim);
    s.running_var = read_vector(need(j, "running_var", path), path + ".running_var", dim);
    s.momentum = need(j, "momentum", path).get<double>();
    s.eps = need(j, "eps", path).get<double>();
    s.mode = BatchNormMode::Eval;
    return s;
}

OutputActivation read_activation(const json& j, const std::string& path) {
    const std::string name = j.get<std::string>();
    if (name == "relu") return OutputActivation::Relu;
    if (name == "linear") return OutputActivation::Linear;
    fail(path, "unknown activation '" + name + "'");
}

ScoreMode read_score_mode(const json& j, const std::string& path) {
    const std::string name = j.get<std::string>();
    if (name == "mean_plus_max") return ScoreMode::MeanPlusMax;
    if (name == "mean_plus_sum") return ScoreMode::MeanPlusSum;
    fail(path, "unknown score mode '" + name + "'");
}

std::vector<std::size_t> read_indices(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array");
    std::vector<std::size_t> v;
    for (const auto& e : j) {
        if (!e.is_number_unsigned()) fail(path, "expected non-negative integers");
        v.push_back(e.get<std::size_t>());
    }
    return v;
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    json j;
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["sensor_dim"] = bundle.ae.sensor_dim;
    meta["control_dim"] = bundle.ae.control_dim;
    meta["input_dim"] = bundle.ae.input_dim;
    meta["sensor_cols"] = bundle.partition.sensor_cols;
    meta["control_cols"] = bundle.partition.control_cols;
    meta["seed"] = bundle.seed;
    j["meta"] = std::move(meta);

    json ae;
    ae["encoder"] = json::array();
    for (const auto& block : bundle.ae.encoder) {
        json b;
        b["dense"] = dense_to_json(block.dense);
        b["bn"] = bn_to_json(block.bn);
        ae["encoder"].push_back(std::move(b));
    }
    ae["decoder"] = json::array();
    for (const auto& d : bundle.ae.decoder) {
        ae["decoder"].push_back(dense_to_json(d));
    }
    j["ae"] = std::move(ae);

    if (bundle.adaptive) {
        json ad;
        ad["layer1"] = dense_to_json(bundle.adaptive->layer1);
        ad["bn"] = bn_to_json(bundle.adaptive->bn);
        ad["layer2"] = dense_to_json(bundle.adaptive->layer2);
        ad["output_activation"] = activation_name(bundle.adaptive->output_activation);
        j["adaptive"] = std::move(ad);
    } else {
        j["adaptive"] = nullptr;
    }

    json st;
    st["mean"] = bundle.standardization.mean;
    st["std"] = bundle.standardization.stddev;
    j["standardization"] = std::move(st);

    json sc;
    sc["sensor_scale"] = bundle.scoring.sensor_scale;
    sc["threshold_base"] = bundle.scoring.threshold_base;
    sc["window"] = bundle.scoring.window;
    sc["alpha"] = bundle.scoring.alpha;
    sc["score_mode"] = score_mode_name(bundle.scoring.score_mode);
    j["scoring"] = std::move(sc);

    std::ofstream out(path);
    if (!out) {
        throw ParseError("bundle: cannot open '" + path.string() + "' for writing");
    }
    out << j.dump(1) << "\n";
    if (!out) {
        throw ParseError("bundle: write to '" + path.string() + "' failed");
    }
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("bundle: cannot open '" + path.string() + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("bundle: invalid JSON: ") + e.what());
    }

    ModelBundle bundle;
    const json& meta = need(j, "meta", "");
    const int version = need(meta, "format_version", "meta").get<int>();
    if (version != kFormatVersion) {
        fail("meta.format_version", "unsupported version " + std::to_string(version));
    }
    const auto sensor_dim = need(meta, "sensor_dim", "meta").get<std::size_t>();
    const auto control_dim = need(meta, "control_dim", "meta").get<std::size_t>();
    const auto input_dim = need(meta, "input_dim", "meta").get<std::size_t>();
    if (input_dim != sensor_dim + control_dim) {
        fail("meta.input_dim", "must equal sensor_dim + control_dim");
    }
    bundle.partition.sensor_cols =
        read_indices(need(meta, "sensor_cols", "meta"), "meta.sensor_cols");
    bundle.partition.control_cols =
        read_indices(need(meta, "control_cols", "meta"), "meta.control_cols");
    if (bundle.partition.sensor_dim() != sensor_dim) {
        fail("meta.sensor_cols", "length disagrees with meta.sensor_dim");
    }
    if (bundle.partition.control_dim() != control_dim) {
        fail("meta.control_cols", "length disagrees with meta.control_dim");
    }
    bundle.partition.validate(input_dim);
    bundle.seed = need(meta, "seed", "meta").get<std::uint64_t>();

    AutoencoderModel& m = bundle.ae;
    m.sensor_dim = sensor_dim;
    m.control_dim = control_dim;
    m.input_dim = input_dim;
    const json& ae = need(j, "ae", "");
    const json& enc = need(ae, "encoder", "ae");
    if (!enc.is_array() || enc.size() != 3) fail("ae.encoder", "expected 3 blocks");
    std::size_t width = input_dim;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::size_t out = AutoencoderModel::kEncoderWidths[b];
        const std::string p = "ae.encoder[" + std::to_string(b) + "]";
        m.encoder[b].dense = read_dense(need(enc[b], "dense", p), p + ".dense", width, out);
        m.encoder[b].bn = read_bn(need(enc[b], "bn", p), p + ".bn", out);
        width = out;
    }
    const json& dec = need(ae, "decoder", "ae");
    if (!dec.is_array() || dec.size() != 3) fail("ae.decoder", "expected 3 layers");
    const std::array<std::size_t, 3> dec_out = {50, 50, sensor_dim};
    width = AutoencoderModel::kLatentDim;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::string p = "ae.decoder[" + std::to_string(b) + "]";
        m.decoder[b] = read_dense(dec[b], p, width, dec_out[b]);
        width = dec_out[b];
    }

    const json& ad = need(j, "adaptive", "");
    if (!ad.is_null()) {
        AdaptiveModule module;
        module.control_dim = control_dim;
        module.sensor_dim = sensor_dim;
        module.layer1 = read_dense(need(ad, "layer1", "adaptive"), "adaptive.layer1",
                                   control_dim, AdaptiveModule::kHiddenDim);
        module.bn =
            read_bn(need(ad, "bn", "adaptive"), "adaptive.bn", AdaptiveModule::kHiddenDim);
        module.layer2 = read_dense(need(ad, "layer2", "adaptive"), "adaptive.layer2",
                                   AdaptiveModule::kHiddenDim, sensor_dim);
        module.output_activation = read_activation(
            need(ad, "output_activation", "adaptive"), "adaptive.output_activation");
        bundle.adaptive = std::move(module);
    }

    const json& st = need(j, "standardization", "");
    bundle.standardization.mean =
        read_vector(need(st, "mean", "standardization"), "standardization.mean", 0);
    bundle.standardization.stddev =
        read_vector(need(st, "std", "standardization"), "standardization.std",
                    bundle.standardization.mean.size());
    if (!bundle.standardization.mean.empty() &&
        bundle.standardization.mean.size() != input_dim) {
        fail("standardization.mean", "length disagrees with meta.input_dim");
    }

    const json& sc = need(j, "scoring", "");
    bundle.scoring.sensor_scale =
        read_vector(need(sc, "sensor_scale", "scoring"), "scoring.sensor_scale", 0);
    if (!bundle.scoring.sensor_scale.empty() &&
        bundle.scoring.sensor_scale.size() != sensor_dim) {
        fail("scoring.sensor_scale", "length disagrees with meta.sensor_dim");
    }
    bundle.scoring.threshold_base = need(sc, "threshold_base", "scoring").get<double>();
    bundle.scoring.window = need(sc, "window", "scoring").get<std::size_t>();
    bundle.scoring.alpha = need(sc, "alpha", "scoring").get<double>();
    bundle.scoring.score_mode =
        read_score_mode(need(sc, "score_mode", "scoring"), "scoring.score_mode");
    if (bundle.scoring.window < 1) fail("scoring.window", "must be >= 1");

    m.set_bn_mode(BatchNormMode::Eval);
    return bundle;
}

namespace {

bool dense_equal(const DenseParams& a, const DenseParams& b) {
    return a.weight == b.weight && a.bias == b.bias;
}

bool bn_equal(const BatchNormState& a, const BatchNormState& b) {
    return a.gamma == b.gamma && a.beta == b.beta && a.running_mean == b.running_mean &&
           a.running_var == b.running_var && a.momentum == b.momentum && a.eps == b.eps;
}

}  // namespace

bool bundles_equal(const ModelBundle& a, const ModelBundle& b) {
    if (a.ae.sensor_dim != b.ae.sensor_dim || a.ae.control_dim != b.ae.control_dim) return false;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!dense_equal(a.ae.encoder[i].dense, b.ae.encoder[i].dense)) return false;
        if (!bn_equal(a.ae.encoder[i].bn, b.ae.encoder[i].bn)) return false;
        if (!dense_equal(a.ae.decoder[i], b.ae.decoder[i])) return false;
    }
    if (a.adaptive.has_value() != b.adaptive.has_value()) return false;
    if (a.adaptive) {
        if (!dense_equal(a.adaptive->layer1, b.adaptive->layer1)) return false;
        if (!bn_equal(a.adaptive->bn, b.adaptive->bn)) return false;
        if (!dense_equal(a.adaptive->layer2, b.adaptive->layer2)) return false;
        if (a.adaptive->output_activation != b.adaptive->output_activation) return false;
    }
    return a.partition == b.partition && a.standardization == b.standardization &&
           a.scoring == b.scoring && a.seed == b.seed;
}

}  // namespace tard
