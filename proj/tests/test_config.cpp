#include <doctest.h>

#include <string>

#include "nar/config.hpp"

using namespace nar;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_run_config(text, "/base");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults") {
    RunConfig c = parse_run_config("{}");
    CHECK(c.seed == 0);
    CHECK_FALSE(c.out.has_value());
    CHECK(c.teachers == std::vector<Teacher>{Teacher::bellman_ford});
    CHECK(c.training.epochs == TrainConfig{}.epochs);
    CHECK(c.family.n_min == 8);
    CHECK_FALSE(c.family.p.has_value());
}

TEST_CASE("full config") {
    const std::string text = R"({
  "seed": 42,
  "out": "runs/a",
  "graphs": {"family": "ladder", "n_min": 4, "n_max": 6, "p": null, "weight_lo": 0.5, "weight_hi": 2.0},
  "teacher": ["bfs", "bellman_ford"],
  "reasoner": {"latent_dim": 32, "hidden_dim": 48, "rounds": 2},
  "training": {"train_size": 10, "val_size": 5, "epochs": 3, "batch_size": 2, "learning_rate": 0.01,
               "teacher_forcing": 0.5, "loss_weights": {"dist": 0.5, "pred": 2, "reach": 1},
               "dataset": "data/train.jsonl"},
  "generate": {"kind": "natural", "count": 7},
  "eval": {"sizes": [16, 32], "count": 9},
  "transfer": {"checkpoint": "/abs/ck.bin", "sizes": [8], "seeds": [3, 4], "val_size": 11,
               "natural": {"d_nat": 8, "informative": 2, "noise": 0.1, "feature_map": "linear"},
               "adapters": {"epochs": 2, "edge_interface": false, "train_decoder": true},
               "baseline": {"epochs": 7, "margin": 0.02}}
})";
    RunConfig c = parse_run_config(text, "/base/dir");
    CHECK(c.seed == 42);
    CHECK(*c.out == fs::path("/base/dir/runs/a"));
    CHECK(c.family.kind == FamilyKind::ladder);
    CHECK(c.family.weight_hi == 2.0);
    CHECK(c.teachers.size() == 2);
    CHECK(c.training.reasoner.hidden_dim == 48);
    CHECK(c.training.reasoner.rounds == 2);
    CHECK(c.training.weights.pred == 2.0);
    CHECK(*c.train_dataset == fs::path("/base/dir/data/train.jsonl"));
    CHECK(c.generate.kind == "natural");
    CHECK(c.eval.sizes == std::vector<std::size_t>{16, 32});
    CHECK(*c.transfer_checkpoint == fs::path("/abs/ck.bin"));
    CHECK(c.transfer.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(c.transfer.natural.feature_map == FeatureMap::linear);
    CHECK(c.transfer.transfer.train_decoder);
    CHECK_FALSE(c.transfer.transfer.edge_interface);
    CHECK(c.transfer.baseline.margin == 0.02);
    // sync copies the shared settings into nested configs
    CHECK(c.training.seed == 42);
    CHECK(c.training.family.kind == FamilyKind::ladder);
    CHECK(c.transfer.natural.family.kind == FamilyKind::ladder);
    CHECK(parse_run_config(c.canonical().dump(), "/base/dir").canonical() == c.canonical());
}

TEST_CASE("unknown keys are rejected with their line") {
    std::string msg = error_of("{\n  \"seed\": 1,\n  \"sed\": 2\n}");
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("sed") != std::string::npos);

    msg = error_of("{\n  \"reasoner\": {\n    \"latent_dim\": 8,\n    \"latnt\": 3\n  }\n}");
    CHECK(msg.find("line 4") != std::string::npos);
    CHECK(msg.find("/reasoner/latnt") != std::string::npos);
}

TEST_CASE("ill-typed values are rejected") {
    CHECK(error_of(R"({"seed": "one"})").find("/seed") != std::string::npos);
    CHECK(error_of(R"({"seed": -1})") != "");
    CHECK(error_of(R"({"training": {"epochs": 1.5}})").find("/training/epochs") != std::string::npos);
    CHECK(error_of(R"({"graphs": {"family": "grid"}})") != "");
    CHECK(error_of(R"({"graphs": {"p": 2}})") != "");
    CHECK(error_of(R"({"teacher": []})") != "");
    CHECK(error_of(R"({"teacher": "dijkstra"})") != "");
    CHECK(error_of(R"({"generate": {"kind": "images"}})") != "");
    CHECK(error_of(R"({"reasoner": {"latent_dim": 0}})") != "");
    CHECK(error_of(R"({"eval": {"sizes": [0]}})") != "");
    CHECK(error_of(R"({"training": "fast"})") != "");
    CHECK(error_of("{ not json").find("not valid JSON") != std::string::npos);
}

TEST_CASE("loading from disk resolves paths against the file") {
    fs::path dir = fs::temp_directory_path() / "nar_test_config";
    fs::create_directories(dir);
    write_file(dir / "c.json", R"({"out": "o", "training": {"dataset": "../d.jsonl"}})");
    RunConfig c = load_run_config(dir / "c.json");
    CHECK(*c.out == dir / "o");
    CHECK(c.train_dataset->lexically_normal() == (dir / ".." / "d.jsonl").lexically_normal());
    CHECK_THROWS(load_run_config(dir / "missing.json"));
}
