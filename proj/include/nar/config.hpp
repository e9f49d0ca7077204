#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nar/io.hpp"
#include "nar/transfer.hpp"

namespace nar {

struct GenerateSection {
    std::string kind = "traces";  // graphs | traces | natural
    std::size_t count = 100;
};

struct EvalSection {
    std::vector<std::size_t> sizes;
    std::size_t count = 200;
};

// Everything a CLI command may read. Relative paths are resolved against the
// directory of the config file.
struct RunConfig {
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> out;
    GraphFamily family;
    std::vector<Teacher> teachers{Teacher::bellman_ford};
    TrainConfig training;
    std::optional<std::filesystem::path> train_dataset;
    std::optional<std::filesystem::path> val_dataset;
    GenerateSection generate;
    EvalSection eval;
    CompareConfig transfer;
    std::optional<std::filesystem::path> transfer_checkpoint;

    // Copies seed, family and reasoner settings into the nested configs.
    void sync();
    // Canonical JSON of the parsed settings; hashed into manifests.
    json canonical() const;
};

// Strict parse: unknown keys and ill-typed values raise ConfigError with the
// line they appear on.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nar
