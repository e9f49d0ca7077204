#include "nar/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "nar/config.hpp"

namespace nar {

namespace {

namespace fs = std::filesystem;

class MissingInputError : public Error {
public:
    using Error::Error;
};

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string dataset;
    std::vector<std::size_t> sizes;
    bool oracle = false;
    bool random_processor = false;
};

void require_exists(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw MissingInputError(what + " not found: " + path.string());
}

RunConfig resolve_config(const Options& o, bool required) {
    RunConfig c;
    if (!o.config.empty()) {
        require_exists(o.config, "config file");
        c = load_run_config(o.config);
    } else if (required) {
        throw ConfigError("--config is required for this command");
    }
    if (o.seed) c.seed = *o.seed;
    if (!o.out.empty()) c.out = fs::path(o.out).lexically_normal();
    c.sync();
    return c;
}

fs::path output_dir(const RunConfig& c) {
    if (!c.out) throw ConfigError("no output directory: set \"out\" in the config or pass --out");
    std::error_code ec;
    fs::create_directories(*c.out, ec);
    if (ec) throw IoError("cannot create output directory " + c.out->string() + ": " + ec.message());
    return *c.out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

class Outputs {
public:
    Outputs(fs::path root, std::string command, const RunConfig& config)
        : root_(std::move(root)) {
        manifest_.command = std::move(command);
        manifest_.config_hash = sha256_hex(config.canonical().dump());
        manifest_.seed = config.seed;
    }

    void write(const std::string& name, std::string_view bytes) {
        const fs::path path = root_ / name;
        write_file(path, bytes);
        manifest_.outputs.push_back(manifest_entry(root_, path));
    }
    void write_json(const std::string& name, const json& value) { write(name, value.dump(2) + "\n"); }
    void add_records(std::size_t n) { manifest_.records += n; }

    void finish() { write_file(root_ / "manifest.json", manifest_.to_json().dump(2) + "\n"); }
    const fs::path& root() const { return root_; }

private:
    fs::path root_;
    Manifest manifest_;
};

int cmd_generate(const Options& o, std::ostream& out) {
    const RunConfig c = resolve_config(o, true);
    Outputs files(output_dir(c), "generate", c);
    const std::size_t count = c.generate.count;
    if (c.generate.kind == "graphs") {
        Rng rng = substream(c.seed, "dataset/generate");
        const auto inputs = sample_inputs(c.family, count, rng);
        std::vector<json> records;
        for (const auto& in : inputs) records.push_back(to_json(in));
        files.write("graphs.jsonl", to_jsonl(records, "graph"));
        files.add_records(inputs.size());
    } else if (c.generate.kind == "traces") {
        for (Teacher t : c.teachers) {
            Rng rng = substream(c.seed, "dataset/generate");
            const auto traces = make_trace_dataset(t, c.family, count, rng);
            std::vector<json> records;
            for (const auto& tr : traces) records.push_back(to_json(tr));
            files.write(c.teachers.size() == 1 ? "traces.jsonl" : "traces_" + to_string(t) + ".jsonl",
                        to_jsonl(records, "trace"));
            files.add_records(traces.size());
        }
    } else {
        Rng rng = substream(c.seed, "natural/generate");
        const auto samples = generate_natural(c.transfer.natural, count, rng);
        files.write("natural.jsonl", natural_jsonl(samples));
        files.add_records(samples.size());
    }
    files.finish();
    out << "generated " << c.generate.kind << " in " << files.root().string() << "\n";
    return kExitOk;
}

std::string epoch_csv_header() {
    return "epoch,train_loss,val_pred_accuracy,val_reached_accuracy,val_reach_accuracy,val_dist_mae,"
           "val_exact_match,val_postcondition_rate\n";
}

std::string epoch_csv_row(const EpochRecord& r) {
    const Metrics& m = r.validation;
    return std::to_string(r.epoch) + "," + num(r.train_loss) + "," + num(m.pred_accuracy) + "," +
           num(m.reached_accuracy) + "," + num(m.reach_accuracy) + "," + num(m.dist_mae) + "," +
           num(m.exact_match) + "," + num(m.postcondition_rate) + "\n";
}

std::vector<Trace> load_dataset(const fs::path& path, Teacher teacher) {
    require_exists(path, "dataset");
    auto traces = load_traces(path);
    if (traces.empty()) throw FormatError("dataset " + path.string() + " is empty");
    for (const auto& t : traces) {
        if (t.teacher != teacher) {
            throw ConfigError("dataset " + path.string() + " holds " + to_string(t.teacher) + " traces, expected " +
                              to_string(teacher));
        }
    }
    return traces;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const RunConfig c = resolve_config(o, true);
    if (c.train_dataset) require_exists(*c.train_dataset, "dataset");
    if (c.val_dataset) require_exists(*c.val_dataset, "validation dataset");
    Outputs files(output_dir(c), "train", c);
    const auto progress = [&](const EpochRecord& r) {
        err << "epoch " << r.epoch << " loss " << num(r.train_loss) << " val_pred " << num(r.validation.pred_accuracy)
            << " val_reach " << num(r.validation.reach_accuracy) << "\n";
    };

    if (c.teachers.size() > 1) {
        if (c.train_dataset) throw ConfigError("multi-task training generates its own datasets; drop training.dataset");
        const MultiTaskResult r = train_multitask(c.teachers, c.training);
        files.write("checkpoint.bin", encode_checkpoint(Checkpoint::of(r.params)));
        std::string csv = "teacher,pred_accuracy,reached_accuracy,reach_accuracy,dist_mae,exact_match,postcondition_rate\n";
        json summary = {{"mode", "multitask"}, {"seed", c.seed}, {"tasks", json::object()}};
        for (const auto& [t, m] : r.metrics) {
            csv += to_string(t) + "," + num(m.pred_accuracy) + "," + num(m.reached_accuracy) + "," +
                   num(m.reach_accuracy) + "," + num(m.dist_mae) + "," + num(m.exact_match) + "," +
                   num(m.postcondition_rate) + "\n";
            summary["tasks"][to_string(t)] = {{"final_validation", metrics_to_json(m)},
                                              {"val_pred_accuracy", m.pred_accuracy},
                                              {"val_reach_accuracy", m.reach_accuracy}};
        }
        files.write("metrics.csv", csv);
        files.write_json("summary.json", summary);
        files.add_records(c.training.train_size * c.teachers.size());
        files.finish();
        out << "trained multi-task model in " << files.root().string() << "\n";
        return kExitOk;
    }

    const Teacher teacher = c.teachers.front();
    std::vector<Trace> train_set, val_set;
    if (c.train_dataset) {
        train_set = load_dataset(*c.train_dataset, teacher);
    } else {
        Rng rng = substream(c.seed, "dataset/train");
        train_set = make_trace_dataset(teacher, c.family, c.training.train_size, rng);
    }
    if (c.val_dataset) {
        val_set = load_dataset(*c.val_dataset, teacher);
    } else {
        Rng rng = substream(c.seed, "dataset/val");
        val_set = make_trace_dataset(teacher, c.family, c.training.val_size, rng);
    }

    std::string csv = epoch_csv_header();
    try {
        const TrainResult r = train(teacher, c.training, train_set, val_set, [&](const EpochRecord& rec) {
            csv += epoch_csv_row(rec);
            progress(rec);
        });
        files.write("checkpoint.bin", encode_checkpoint(Checkpoint::of(r.params)));
        files.write("metrics.csv", csv);
        files.write_json("summary.json", {{"mode", "single"},
                                          {"teacher", to_string(teacher)},
                                          {"seed", c.seed},
                                          {"epochs", c.training.epochs},
                                          {"best_epoch", r.best_epoch},
                                          {"val_pred_accuracy", r.metrics.pred_accuracy},
                                          {"val_reach_accuracy", r.metrics.reach_accuracy},
                                          {"final_validation", metrics_to_json(r.metrics)}});
        files.add_records(train_set.size());
        files.finish();
        out << "trained " << to_string(teacher) << " reasoner: val_pred_accuracy " << num(r.metrics.pred_accuracy)
            << " val_reach_accuracy " << num(r.metrics.reach_accuracy) << "\n";
        return kExitOk;
    } catch (const DivergenceError& e) {
        files.write("checkpoint.bin", encode_checkpoint(Checkpoint::of(e.last_good())));
        files.write("metrics.csv", csv);
        files.write_json("summary.json", {{"mode", "single"}, {"teacher", to_string(teacher)}, {"seed", c.seed},
                                          {"diverged", true}, {"error", e.what()}});
        files.finish();
        err << "error: " << e.what() << "; last good checkpoint kept\n";
        return kExitDivergence;
    }
}

std::string size_csv(const std::vector<SizeRow>& rows) {
    std::string csv = "n,graphs,pred_accuracy,reached_accuracy,reach_accuracy,dist_mae,exact_match,postcondition_rate,"
                      "chance_pred_accuracy\n";
    for (const auto& r : rows) {
        const Metrics& m = r.metrics;
        csv += std::to_string(r.n) + "," + std::to_string(m.graphs) + "," + num(m.pred_accuracy) + "," +
               num(m.reached_accuracy) + "," + num(m.reach_accuracy) + "," + num(m.dist_mae) + "," +
               num(m.exact_match) + "," + num(m.postcondition_rate) + "," + num(m.chance_pred_accuracy) + "\n";
    }
    return csv;
}

int cmd_eval(const Options& o, std::ostream& out) {
    RunConfig c = resolve_config(o, false);
    if (!c.out) c.out = fs::path(".");
    if (o.dataset.empty()) throw ConfigError("--dataset is required");
    require_exists(o.dataset, "dataset");
    if (!o.oracle && o.checkpoint.empty()) throw ConfigError("--checkpoint is required unless --oracle is given");

    const auto dataset = load_traces(o.dataset);
    if (dataset.empty()) throw FormatError("dataset " + o.dataset + " is empty");
    std::size_t max_n = 0;
    for (const auto& t : dataset) max_n = std::max(max_n, t.input.n());
    const Teacher teacher = dataset.front().teacher;

    Outputs files(output_dir(c), "eval", c);
    json report = {{"dataset", fs::path(o.dataset).filename().generic_string()},
                   {"teacher", to_string(teacher)},
                   {"graphs", dataset.size()}};
    std::vector<SizeRow> rows;
    if (o.oracle) {
        const Metrics m = evaluate_oracle(dataset);
        report["mode"] = "oracle";
        report["metrics"] = metrics_to_json(m);
        rows.push_back({max_n, m});
    } else {
        require_exists(o.checkpoint, "checkpoint");
        const Checkpoint ckpt = load_checkpoint(o.checkpoint);
        if (!o.config.empty()) require_compatible(c.training.reasoner, ckpt.config);
        const ReasonerParams params = ckpt.for_task(teacher);
        const Metrics m = evaluate(params, dataset);
        report["mode"] = "model";
        report["metrics"] = metrics_to_json(m);
        if (o.sizes.empty()) {
            rows.push_back({max_n, m});
        } else {
            rows = size_generalisation_eval(params, c.family, o.sizes, c.eval.count, c.seed);
        }
    }
    files.write_json("eval.json", report);
    files.write("sizes.csv", size_csv(rows));
    files.add_records(dataset.size());
    files.finish();
    out << size_csv(rows);
    return kExitOk;
}

int cmd_transfer(const Options& o, std::ostream& out, std::ostream& err) {
    RunConfig c = resolve_config(o, true);
    fs::path ckpt_path = o.checkpoint.empty() ? c.transfer_checkpoint.value_or(fs::path()) : fs::path(o.checkpoint);
    ReasonerParams pretrained;
    if (o.random_processor) {
        c.transfer.run_transfer = false;
        pretrained = ReasonerParams::initialize(c.training.reasoner, Teacher::bellman_ford, c.seed);
    }
    if (!ckpt_path.empty() || !o.random_processor) {
        if (ckpt_path.empty()) throw ConfigError("no checkpoint: pass --checkpoint, set transfer.checkpoint, or use --random-processor");
        require_exists(ckpt_path, "checkpoint");
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        if (!o.config.empty()) require_compatible(c.training.reasoner, ckpt.config);
        pretrained = ckpt.for_task(Teacher::bellman_ford);
    }
    Outputs files(output_dir(c), "transfer", c);
    err << "running " << (c.transfer.run_transfer ? "transfer, " : "") << "baseline and ablation over "
        << c.transfer.sizes.size() << " sizes x " << c.transfer.seeds.size() << " seeds\n";
    const auto rows = compare_report(pretrained, c.seed, c.transfer);
    files.write("report.csv", report_csv(rows));
    json summary = report_summary(rows);
    summary["random_processor_only"] = o.random_processor;
    files.write_json("report.json", summary);
    files.add_records(rows.size());
    files.finish();
    out << report_csv(rows);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural algorithmic reasoning toolkit: generate datasets, train reasoners, evaluate, transfer"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;

    const auto common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", o.config, "JSON run configuration");
        if (config_required) opt->required();
        sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "root seed (overrides the config)");
    };
    auto* gen = app.add_subcommand("generate", "write a graph, trace or natural dataset");
    common(gen, true);
    auto* tr = app.add_subcommand("train", "train a reasoner on teacher traces");
    common(tr, true);
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a trace dataset");
    common(ev, false);
    ev->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    ev->add_option("--dataset", o.dataset, "trace dataset (JSONL)");
    ev->add_option("--sizes", o.sizes, "comma-separated graph sizes for the generalisation table")->delimiter(',');
    ev->add_flag("--oracle", o.oracle, "replay the teacher's own outputs");
    auto* tf = app.add_subcommand("transfer", "frozen-processor transfer, bottleneck baseline and ablation");
    common(tf, true);
    tf->add_option("--checkpoint", o.checkpoint, "pretrained Bellman-Ford checkpoint");
    tf->add_flag("--random-processor", o.random_processor, "ablation and baseline only, no pretrained processor");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    for (auto* sub : {gen, tr, ev, tf}) {
        if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;
    }

    try {
        if (gen->parsed()) return cmd_generate(o, out);
        if (tr->parsed()) return cmd_train(o, out, err);
        if (ev->parsed()) return cmd_eval(o, out);
        return cmd_transfer(o, out, err);
    } catch (const MissingInputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const FairnessError& e) {
        err << "error: " << e.what() << "\n";
        return kExitFairness;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace nar
