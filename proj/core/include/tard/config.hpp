#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tard/data.hpp"
#include "tard/harness.hpp"

namespace tard {

struct DatasetRef {
    std::string manifest;
    std::vector<std::string> csv;
};

// Fault-case recordings carry their own manifests: each recording of a case
// has its own fault windows.
struct RecordingRef {
    std::string manifest;
    std::string csv;
};

struct CaseRef {
    std::string name;
    std::vector<RecordingRef> recordings;
};

// For the `synth` subcommand: a source stream and a target stream sharing the
// same plant (system_seed), the target optionally shifted/faulted.
struct SynthSpec {
    SynthConfig source;
    SynthConfig target;
};

// One run configuration file drives every subcommand; sections it does not
// need are ignored. JSON layout in docs/file_formats.md.
struct RunConfig {
    std::uint64_t seed = 42;
    DatasetRef source;
    std::vector<CaseRef> cases;
    SplitPlan split;
    RunSettings settings;
    std::vector<MethodId> methods;
    std::optional<SynthSpec> synth;
    std::string raw_json;  // the file content, echoed into reports
};

RunConfig load_run_config(const std::filesystem::path& path);

// Paths in the config are resolved relative to the config file's directory.
std::filesystem::path resolve_path(const RunConfig& cfg,
                                   const std::filesystem::path& config_path,
                                   const std::string& entry);

// Loads source recordings (one manifest shared by all csv files).
std::vector<LabeledSeries> load_dataset(const DatasetRef& ref,
                                        const std::filesystem::path& base_dir);

// Loads a fault case's recordings, each labeled by its own manifest's windows.
std::vector<LabeledSeries> load_case(const CaseRef& ref,
                                     const std::filesystem::path& base_dir);

}  // namespace tard
