#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nar/training.hpp"

namespace nar {

using json = nlohmann::json;

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed record files (bad JSON, wrong version, inconsistent fields).
class FormatError : public Error {
public:
    using Error::Error;
};

// Corrupt or incompatible checkpoint.
class CheckpointError : public Error {
public:
    using Error::Error;
};

inline constexpr int kRecordVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

json to_json(const AbstractInput& input);
AbstractInput input_from_json(const json& record);
json to_json(const HintStep& step);
HintStep hint_from_json(const json& record, std::size_t n);
json to_json(const Trace& trace);
Trace trace_from_json(const json& record);

// One compact JSON object per line, each tagged with kind and version.
std::string to_jsonl(const std::vector<json>& records, const std::string& kind);
std::vector<json> parse_jsonl(std::string_view text, const std::string& kind);

void save_inputs(const std::filesystem::path& path, const std::vector<AbstractInput>& inputs);
std::vector<AbstractInput> load_inputs(const std::filesystem::path& path);
void save_traces(const std::filesystem::path& path, const std::vector<Trace>& traces);
std::vector<Trace> load_traces(const std::filesystem::path& path);

// Little-endian dump of names, shapes and values.
std::string serialize_params(const ParamSet& params);
std::string params_digest(const ParamSet& params);

struct TaskHeads {
    Teacher teacher = Teacher::bellman_ford;
    ParamSet encoder;
    ParamSet decoder;

    friend bool operator==(const TaskHeads&, const TaskHeads&) = default;
};

struct Checkpoint {
    ReasonerConfig config;
    ParamSet processor;
    std::vector<TaskHeads> tasks;

    static Checkpoint of(const ReasonerParams& params);
    static Checkpoint of(const MultiTaskParams& params);
    ReasonerParams for_task(Teacher teacher) const;
    ReasonerParams single() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws CheckpointError naming every field that differs.
void require_compatible(const ReasonerConfig& expected, const ReasonerConfig& found);

struct ManifestEntry {
    std::string path;
    std::string sha256;
};

struct Manifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> outputs;
    std::size_t records = 0;

    json to_json() const;
};

// Hashes each file under `root` and records it by relative path.
ManifestEntry manifest_entry(const std::filesystem::path& root, const std::filesystem::path& file);

json metrics_to_json(const Metrics& m);

}  // namespace nar
