// Acceptance experiments. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Artifacts go to argv[1] (default ./acceptance_out);
// further arguments pick criteria by number. 6 to 8 reuse the model from 5.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "nar/cli.hpp"
#include "nar/config.hpp"
#include "support.hpp"

using namespace nar;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr std::size_t kOracleGraphs = 1000;
constexpr std::size_t kOracleMaxN = 12;
constexpr double kOracleTolerance = 1e-9;
constexpr double kOracleCpuSeconds = 30.0;
constexpr std::size_t kMinCorruptions = 50;
constexpr std::size_t kEquivarianceGraphs = 200;
constexpr std::size_t kLearningSeeds = 3;
constexpr std::size_t kLearningPassesNeeded = 2;
constexpr double kBfsReachTarget = 0.99;
constexpr double kBellmanFordPredTarget = 0.90;
constexpr double kRunBudgetSeconds = 30 * 60;
constexpr std::size_t kHeldOutGraphs = 500;
constexpr double kChanceFactor = 2.0;
constexpr std::size_t kGeneralisationN = 32;
constexpr double kSanityAccuracy = 1.0;

const fs::path kConfigDir = NAR_CONFIG_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << std::fixed << v;
    return s.str();
}

// 1 ------------------------------------------------------------------------

Outcome teacher_oracle() {
    const double start = cpu_seconds();
    Rng rng = substream(1, "acceptance/oracle");
    std::size_t dist_bad = 0, reach_bad = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < kOracleGraphs; ++i) {
        const AbstractInput x = testing::random_input(rng, 1, kOracleMaxN, 0.4, i % 2 == 0);
        const HintStep bf = bellman_ford_trace(x).output();
        const auto oracle = testing::exhaustive_distances(x.graph, x.source);
        for (std::size_t v = 0; v < x.n(); ++v) {
            if (std::isinf(oracle[v])) {
                dist_bad += bf.reached[v] != 0;
                continue;
            }
            const double err = std::abs(bf.dist[v] - oracle[v]);
            worst = std::max(worst, err);
            dist_bad += !bf.reached[v] || err > kOracleTolerance;
        }
        const HintStep bfs = bfs_trace(x).output();
        const auto reach = testing::dfs_reachable(x.graph, x.source);
        for (std::size_t v = 0; v < x.n(); ++v) reach_bad += (bfs.reach[v] != 0) != (reach[v] != 0);
    }
    const double cpu = cpu_seconds() - start;
    return {dist_bad == 0 && reach_bad == 0 && cpu < kOracleCpuSeconds,
            std::to_string(kOracleGraphs) + " graphs, distance mismatches " + std::to_string(dist_bad) +
                " (max abs error " + fmt(worst, 12) + "), reachability mismatches " + std::to_string(reach_bad) +
                ", cpu " + fmt(cpu, 2) + " s"};
}

// 2 ------------------------------------------------------------------------

Var contract(Tape& tape, Var out) {
    Rng rng = substream(99, "acceptance/contract");
    Var c = tape.constant(testing::random_tensor(out.value().shape(), rng, 0.5, 1.5));
    return sum(mul(out, c));
}

Tensor away_from_zero(Shape shape, Rng& rng) {
    Tensor t = testing::random_tensor(std::move(shape), rng, 0.1, 1.0);
    for (auto& v : t.values())
        if (uniform(rng, 0, 1) < 0.5) v = -v;
    return t;
}

Outcome gradient_integrity() {
    Rng rng = substream(2, "acceptance/fd");
    using testing::random_tensor;
    const std::vector<std::uint32_t> rows{2, 0, 2, 1}, seg{0, 2, 0, 2, 1}, seg_empty{0, 0, 2, 2, 2};
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1};
    const std::vector<std::uint32_t> ce_seg{0, 0, 1, 1, 1, 2}, ce_target{1, 4, 5};
    const std::vector<double> ce_weight{0.5, 1.0, 2.0}, bce_target{1, 0, 1, 0}, bce_weight{0.3, 1, 1, 2};
    struct Case {
        std::string name;
        testing::Builder build;
        std::vector<Tensor> inputs;
    };
    const std::vector<Case> cases{
        {"matmul", [](Tape& t, const auto& v) { return contract(t, matmul(v[0], v[1])); },
         {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}},
        {"add", [](Tape& t, const auto& v) { return contract(t, add(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}},
        {"add_scalar", [](Tape& t, const auto& v) { return contract(t, add(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({1}, rng)}},
        {"sub", [](Tape& t, const auto& v) { return contract(t, sub(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}},
        {"mul", [](Tape& t, const auto& v) { return contract(t, mul(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}},
        {"neg", [](Tape& t, const auto& v) { return contract(t, neg(v[0])); }, {random_tensor({4}, rng)}},
        {"relu", [](Tape& t, const auto& v) { return contract(t, relu(v[0])); }, {away_from_zero({3, 3}, rng)}},
        {"sigmoid", [](Tape& t, const auto& v) { return contract(t, sigmoid(v[0])); },
         {random_tensor({3, 3}, rng, -4, 4)}},
        {"log", [](Tape& t, const auto& v) { return contract(t, log(v[0])); }, {random_tensor({5}, rng, 0.2, 3)}},
        {"scale", [](Tape& t, const auto& v) { return contract(t, scale(v[0], -2.5)); }, {random_tensor({4}, rng)}},
        {"sum", [](Tape&, const auto& v) { return sum(mul(v[0], v[0])); }, {random_tensor({2, 2}, rng)}},
        {"reduce_sum", [](Tape& t, const auto& v) { return contract(t, reduce(ReduceOp::sum, v[0], 0)); },
         {random_tensor({3, 4}, rng)}},
        {"reduce_max", [](Tape& t, const auto& v) { return contract(t, reduce(ReduceOp::max, v[0], 1)); },
         {random_tensor({4, 3}, rng)}},
        {"gather_rows", [&](Tape& t, const auto& v) { return contract(t, gather_rows(v[0], rows)); },
         {random_tensor({3, 2}, rng)}},
        {"concat_cols", [](Tape& t, const auto& v) { return contract(t, concat_cols(std::vector<Var>{v[0], v[1]})); },
         {random_tensor({3, 2}, rng), random_tensor({3, 1}, rng)}},
        {"concat_rows", [](Tape& t, const auto& v) { return contract(t, concat_rows(std::vector<Var>{v[0], v[1]})); },
         {random_tensor({1, 3}, rng), random_tensor({2, 3}, rng)}},
        {"repeat_rows", [](Tape& t, const auto& v) { return contract(t, repeat_rows(v[0], 3)); },
         {random_tensor({1, 4}, rng)}},
        {"add_row", [](Tape& t, const auto& v) { return contract(t, add_row(v[0], v[1])); },
         {random_tensor({3, 2}, rng), random_tensor({1, 2}, rng)}},
        {"segment_max", [&](Tape& t, const auto& v) { return contract(t, segment_max(v[0], seg, 3, v[1])); },
         {random_tensor({5, 2}, rng), random_tensor({1, 2}, rng)}},
        {"segment_max_empty", [&](Tape& t, const auto& v) { return contract(t, segment_max(v[0], seg_empty, 4, v[1])); },
         {random_tensor({5, 2}, rng), random_tensor({1, 2}, rng)}},
        {"softmax_cross_entropy", [&](Tape&, const auto& v) { return softmax_cross_entropy(v[0], 3, mask); },
         {random_tensor({5}, rng, -2, 2)}},
        {"segment_softmax_cross_entropy",
         [&](Tape&, const auto& v) { return segment_softmax_cross_entropy(v[0], ce_seg, 3, ce_target, ce_weight); },
         {random_tensor({6, 1}, rng, -2, 2)}},
        {"bce_with_logits", [&](Tape&, const auto& v) { return bce_with_logits(v[0], bce_target, bce_weight); },
         {random_tensor({4, 1}, rng, -3, 3)}},
    };

    std::map<std::string, double> worst;
    for (const auto& c : cases) worst[c.name] = testing::check_gradients(c.build, c.inputs).max_relative;

    // full step loss on a 6-node graph
    GraphFamily f;
    f.n_min = f.n_max = 6;
    Rng grng = substream(2, "acceptance/fd-graph");
    const AbstractInput x = sample_inputs(f, 1, grng)[0];
    ReasonerConfig cfg;
    cfg.latent_dim = cfg.hidden_dim = 8;
    for (Teacher teacher : {Teacher::bellman_ford, Teacher::bfs}) {
        const ReasonerParams p = ReasonerParams::initialize(cfg, teacher, 3);
        const Trace trace = run_teacher(teacher, x);
        const HintStep& in = trace.steps[0];
        const HintStep& target = trace.steps.size() > 1 ? trace.steps[1] : trace.steps[0];
        const GraphView view = GraphView::of(x, teacher);
        Tape tape;
        BoundParams fe(tape, p.encoder, true), P(tape, p.processor, true), g(tape, p.decoder, true);
        tape.backward(step_loss(decode(g, process(P, encode(fe, view, x, in), view, cfg.rounds), view), target, view,
                                x, LossWeights{}));
        const Gradients grads[3] = {fe.gradients(), P.gradients(), g.gradients()};
        double w = 0.0;
        for (int part = 0; part < 3; ++part) {
            auto eval = [&](const ParamSet& set) {
                ReasonerParams q = p;
                (part == 0 ? q.encoder : part == 1 ? q.processor : q.decoder) = set;
                Tape t(false);
                return step_loss(reasoner_step(t, q, view, x, in, false), target, view, x, LossWeights{}).value().item();
            };
            const ParamSet& set = part == 0 ? p.encoder : part == 1 ? p.processor : p.decoder;
            w = std::max(w, testing::check_param_gradients(eval, set, grads[part]).max_relative);
        }
        worst["step_loss/" + to_string(teacher)] = w;
    }

    // transfer loss on a 6-node natural sample
    NaturalGenConfig nc;
    nc.family.n_min = nc.family.n_max = 6;
    nc.d_nat = 5;
    nc.informative = 2;
    Rng nrng = substream(2, "acceptance/fd-natural");
    const NaturalSample s = generate_natural(nc, 1, nrng)[0];
    ReasonerConfig rc;
    rc.latent_dim = rc.hidden_dim = 6;
    const ReasonerParams p = ReasonerParams::initialize(rc, Teacher::bellman_ford, 4);
    NaturalAdapters a = init_adapters(p, nc.d_nat, 7, true, 5);
    // the residual branch starts at zero, a flat spot for the scalar path
    Rng jitter = substream(2, "acceptance/jitter");
    auto& w2 = a.edge_encoder.get("edge_w2").value;
    w2 = testing::random_tensor(w2.shape(), jitter, -0.3, 0.3);
    Gradients ge = Gradients::zeros_like(a.edge_encoder), gn = Gradients::zeros_like(a.node_encoder),
              gd = Gradients::zeros_like(a.decoder);
    transfer_loss_and_gradients(p.processor, rc, a, s, 0, &ge, &gn, &gd);
    auto with = [&](auto member) {
        return [&, member](const ParamSet& q) {
            NaturalAdapters b = a;
            b.*member = q;
            return transfer_loss_and_gradients(p.processor, rc, b, s, 0, nullptr, nullptr, nullptr);
        };
    };
    double tw = testing::check_param_gradients(with(&NaturalAdapters::edge_encoder), a.edge_encoder, ge).max_relative;
    tw = std::max(tw, testing::check_param_gradients(with(&NaturalAdapters::node_encoder), a.node_encoder, gn).max_relative);
    tw = std::max(tw, testing::check_param_gradients(with(&NaturalAdapters::decoder), a.decoder, gd).max_relative);
    worst["transfer_loss"] = tw;

    double max_rel = 0.0;
    std::string worst_name;
    std::size_t failing = 0;
    for (const auto& [name, rel] : worst) {
        failing += !(rel < testing::kFdTolerance);
        if (rel >= max_rel) max_rel = rel, worst_name = name;
    }
    return {failing == 0, std::to_string(worst.size()) + " checks, " + std::to_string(failing) +
                              " failing, max relative error " + fmt(max_rel, 8) + " (" + worst_name + ")"};
}

// 3 ------------------------------------------------------------------------

// True when v lies on the parent chain from u.
bool descends_from(const HintStep& h, std::uint32_t u, std::uint32_t v) {
    for (std::size_t hops = 0; hops <= h.pred.size(); ++hops) {
        if (u == v) return true;
        if (h.pred[u] == u) return false;
        u = h.pred[u];
    }
    return false;
}

Outcome postcondition_contract() {
    Rng rng = substream(3, "acceptance/contract");
    GraphFamily f;
    f.n_min = 4;
    f.n_max = 12;
    std::size_t accepted = 0, outputs = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> corruptions;  // kind -> (rejected, total)
    auto reject = [&](const std::string& kind, Teacher t, const AbstractInput& x, const HintStep& bad) {
        auto& [rej, tot] = corruptions[kind];
        ++tot;
        rej += check_postcondition(t, x, bad).has_value();
    };
    for (const auto& x : sample_inputs(f, 300, rng)) {
        for (Teacher t : {Teacher::bellman_ford, Teacher::bfs}) {
            ++outputs;
            accepted += !check_postcondition(t, x, run_teacher(t, x).output()).has_value();
        }
        const HintStep out = bellman_ford_trace(x).output();
        const auto v = static_cast<std::uint32_t>(uniform_index(rng, 0, x.n() - 1));
        if (v == x.source) continue;
        for (std::uint32_t u = 0; u < x.n(); ++u)
            if (u != v && !x.graph.find_edge(u, v)) {
                HintStep bad = out;
                bad.pred[v] = u;
                reject("non-edge parent", Teacher::bellman_ford, x, bad);
                break;
            }
        HintStep inflated = out;
        inflated.dist[v] += 0.5;
        reject("inflated distance", Teacher::bellman_ford, x, inflated);
        // a consistent but non-shortest tree: reroute v through a strictly worse in-edge
        for (std::size_t e = 0; e < x.graph.edge_count(); ++e) {
            const auto& edge = x.graph.edges[e];
            if (edge.dst != v || edge.src == out.pred[v] || descends_from(out, edge.src, v)) continue;
            if (out.dist[edge.src] + x.graph.weights[e] <= out.dist[v] + 1e-6) continue;
            HintStep bad = out;
            bad.pred[v] = edge.src;
            HintStep implied = tree_distances(Teacher::bellman_ford, x, bad);
            bad.dist = implied.dist;
            reject("broken relaxation", Teacher::bellman_ford, x, bad);
            break;
        }
    }
    std::size_t rejected = 0, total = 0;
    std::string parts;
    bool every_kind = true;
    for (const auto& [kind, counts] : corruptions) {
        rejected += counts.first;
        total += counts.second;
        every_kind = every_kind && counts.second > 0;
        parts += (parts.empty() ? "" : ", ") + kind + " " + std::to_string(counts.first) + "/" +
                 std::to_string(counts.second);
    }
    return {accepted == outputs && rejected == total && total >= kMinCorruptions && every_kind &&
                corruptions.size() == 3,
            "accepted " + std::to_string(accepted) + "/" + std::to_string(outputs) + " teacher outputs; rejected " +
                std::to_string(rejected) + "/" + std::to_string(total) + " corruptions (" + parts + ")"};
}

// 4 ------------------------------------------------------------------------

Outcome equivariance() {
    Rng rng = substream(4, "acceptance/equivariance");
    GraphFamily f;
    f.n_min = 3;
    f.n_max = 16;
    ReasonerConfig cfg;
    cfg.latent_dim = cfg.hidden_dim = 32;
    std::size_t step_bad = 0, trace_bad = 0;
    for (const auto& x : sample_inputs(f, kEquivarianceGraphs, rng)) {
        const auto perm = random_permutation(x.n(), rng);
        const AbstractInput y = permute(x, perm);
        for (Teacher t : {Teacher::bellman_ford, Teacher::bfs}) {
            const Trace tx = run_teacher(t, x);
            trace_bad += !(run_teacher(t, y) == permute(tx, perm));
            const ReasonerParams p = ReasonerParams::initialize(cfg, t, 5);
            const HintStep& hint = tx.steps[tx.steps.size() / 2];
            Tape ta(false), tb(false);
            const GraphView vx = GraphView::of(x, t), vy = GraphView::of(y, t);
            StepOutput a = reasoner_step(ta, p, vx, x, hint, false);
            StepOutput b = reasoner_step(tb, p, vy, y, permute(hint, perm), false);
            const std::size_t m = x.graph.edge_count();
            bool ok = true;
            for (std::size_t v = 0; v < x.n(); ++v) {
                ok = ok && b.dist.value()[perm[v]] == a.dist.value()[v];
                ok = ok && b.reached_logit.value()[perm[v]] == a.reached_logit.value()[v];
                ok = ok && b.reach_logit.value()[perm[v]] == a.reach_logit.value()[v];
                ok = ok && b.pred_scores.value()[m + perm[v]] == a.pred_scores.value()[m + v];
            }
            for (std::size_t e = 0; e < m; ++e) {
                const auto k = y.graph.find_edge(perm[x.graph.edges[e].src], perm[x.graph.edges[e].dst]);
                ok = ok && k && b.pred_scores.value()[*k] == a.pred_scores.value()[e];
            }
            step_bad += !ok;
        }
    }
    return {step_bad == 0 && trace_bad == 0,
            std::to_string(kEquivarianceGraphs) + " graphs x 2 teachers, exact; step mismatches " +
                std::to_string(step_bad) + ", trace mismatches " + std::to_string(trace_bad)};
}

// 5 ------------------------------------------------------------------------

struct LearningRun {
    Teacher teacher;
    std::uint64_t seed;
    Metrics held_out;
    double seconds;
    TrainResult result;
};

RunConfig seeded(const fs::path& file, std::uint64_t seed) {
    RunConfig c = load_run_config(file);
    c.seed = seed;
    c.sync();
    return c;
}

std::vector<LearningRun> learning_runs;

Outcome learning(const fs::path& out) {
    std::string detail;
    std::map<Teacher, std::size_t> passes;
    std::string csv = "teacher,seed,best_epoch,held_out_pred_accuracy,held_out_reach_accuracy,seconds\n";
    bool within_budget = true;
    for (Teacher t : {Teacher::bfs, Teacher::bellman_ford}) {
        const fs::path file = kConfigDir / (t == Teacher::bfs ? "bfs.json" : "bellman_ford.json");
        for (std::uint64_t seed = 0; seed < kLearningSeeds; ++seed) {
            const RunConfig c = seeded(file, seed);
            const auto start = std::chrono::steady_clock::now();
            TrainResult r = train(t, c.training);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            Rng rng = substream(seed, "acceptance/held-out");
            const Metrics m = evaluate(r.params, make_trace_dataset(t, c.family, kHeldOutGraphs, rng));
            const double score = t == Teacher::bfs ? m.reach_accuracy : m.pred_accuracy;
            passes[t] += score >= (t == Teacher::bfs ? kBfsReachTarget : kBellmanFordPredTarget);
            within_budget = within_budget && secs <= kRunBudgetSeconds;
            csv += to_string(t) + "," + std::to_string(seed) + "," + std::to_string(r.best_epoch) + "," +
                   fmt(m.pred_accuracy, 6) + "," + fmt(m.reach_accuracy, 6) + "," + fmt(secs, 1) + "\n";
            std::cout << "  " << to_string(t) << " seed " << seed << ": held-out "
                      << (t == Teacher::bfs ? "reach " : "pred ") << fmt(score) << " (" << fmt(secs, 0) << " s)"
                      << std::endl;
            learning_runs.push_back({t, seed, m, secs, std::move(r)});
        }
    }
    write_file(out / "learning.csv", csv);
    return {passes[Teacher::bfs] >= kLearningPassesNeeded && passes[Teacher::bellman_ford] >= kLearningPassesNeeded &&
                within_budget,
            "bfs reach >= " + fmt(kBfsReachTarget, 2) + " on " + std::to_string(passes[Teacher::bfs]) + "/3 seeds, " +
                "bellman_ford pred >= " + fmt(kBellmanFordPredTarget, 2) + " on " +
                std::to_string(passes[Teacher::bellman_ford]) + "/3 seeds" +
                (within_budget ? "" : ", a run exceeded the time budget")};
}

std::optional<ReasonerParams> bellman_ford_model() {
    for (const auto& r : learning_runs)
        if (r.teacher == Teacher::bellman_ford && r.seed == 0) return r.result.params;
    return std::nullopt;
}

// 6 ------------------------------------------------------------------------

Outcome size_generalisation(const fs::path& out) {
    const auto model = bellman_ford_model();
    if (!model) return {false, "no trained bellman_ford model"};
    const RunConfig c = seeded(kConfigDir / "bellman_ford.json", 0);
    const std::vector<std::size_t> sizes{16, 32, 64};
    const auto rows = size_generalisation_eval(*model, c.family, sizes, c.eval.count, 6);
    std::string csv = "n,graphs,pred_accuracy,chance_pred_accuracy,ratio\n";
    double ratio32 = 0.0;
    std::string table;
    for (const auto& r : rows) {
        const double ratio = r.metrics.pred_accuracy / r.metrics.chance_pred_accuracy;
        if (r.n == kGeneralisationN) ratio32 = ratio;
        csv += std::to_string(r.n) + "," + std::to_string(r.metrics.graphs) + "," + fmt(r.metrics.pred_accuracy, 6) +
               "," + fmt(r.metrics.chance_pred_accuracy, 6) + "," + fmt(ratio, 3) + "\n";
        table += (table.empty() ? "" : ", ") + std::string("n=") + std::to_string(r.n) + " " +
                 fmt(r.metrics.pred_accuracy, 3) + " vs chance " + fmt(r.metrics.chance_pred_accuracy, 3);
    }
    write_file(out / "size_generalisation.csv", csv);
    return {rows.size() == sizes.size() && ratio32 >= kChanceFactor,
            table + "; ratio at n=32 " + fmt(ratio32, 2)};
}

// 7 and 8 ------------------------------------------------------------------

std::vector<ReportRow> transfer_rows;

double mean_accuracy(const std::vector<ReportRow>& rows, const std::string& method) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& r : rows)
        if (r.method == method) s += r.val_accuracy, ++k;
    return k ? s / static_cast<double>(k) : 0.0;
}

Outcome frozen_transfer(const fs::path& out) {
    const auto model = bellman_ford_model();
    if (!model) return {false, "no trained bellman_ford model"};
    const RunConfig c = seeded(kConfigDir / "transfer.json", 0);
    require_compatible(c.training.reasoner, model->config);
    transfer_rows = compare_report(*model, c.seed, c.transfer);
    write_file(out / "transfer_report.csv", report_csv(transfer_rows));
    std::size_t frozen_ok = 0, frozen_runs = 0;
    for (const auto& r : transfer_rows)
        if (r.method != "baseline") {
            ++frozen_runs;
            frozen_ok += !r.processor_digest_before.empty() && r.processor_digest_before == r.processor_digest_after;
        }
    const double transfer = mean_accuracy(transfer_rows, "transfer");
    const double ablation = mean_accuracy(transfer_rows, "ablation");
    return {transfer >= ablation && frozen_ok == frozen_runs && frozen_runs > 0,
            "pretrained P " + fmt(transfer) + " vs random P " + fmt(ablation) + " (baseline " +
                fmt(mean_accuracy(transfer_rows, "baseline")) + "); processor hash unchanged in " +
                std::to_string(frozen_ok) + "/" + std::to_string(frozen_runs) + " runs"};
}

Outcome bottleneck_artifact(const fs::path& out) {
    const RunConfig c = seeded(kConfigDir / "transfer.json", 0);
    const std::size_t expected = 3 * c.transfer.sizes.size() * c.transfer.seeds.size();
    bool fair = true;
    try {
        require_fair(transfer_rows);
    } catch (const FairnessError&) {
        fair = false;
    }
    const std::string csv = report_csv(transfer_rows);
    const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));

    RunConfig sanity = seeded(kConfigDir / "linear_sanity.json", 0);
    sanity.transfer.run_transfer = false;
    const auto rows = compare_report(ReasonerParams::initialize(sanity.training.reasoner, Teacher::bellman_ford, 0),
                                     sanity.seed, sanity.transfer);
    write_file(out / "linear_sanity_report.csv", report_csv(rows));
    double worst = 1.0;
    for (const auto& r : rows)
        if (r.method == "baseline") worst = std::min(worst, r.val_accuracy);
    return {transfer_rows.size() == expected && lines == expected + 1 && fair && worst >= kSanityAccuracy,
            std::to_string(transfer_rows.size()) + "/" + std::to_string(expected) + " rows, dataset hashes " +
                (fair ? "match" : "differ") + "; noise-free linear baseline accuracy " + fmt(worst, 6)};
}

// 9 ------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "nar");
    std::ostringstream o, e;
    return run_cli(args, o, e);
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files[fs::relative(entry.path(), root).string()] = read_file(entry.path());
    return files;
}

Outcome determinism(const fs::path& out) {
    const fs::path smoke = kConfigDir / "smoke.json";
    std::vector<std::map<std::string, std::string>> runs;
    int failures = 0;
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path root = out / ("rerun_" + std::to_string(rep));
        fs::remove_all(root);
        const std::string r = root.string(), cfg = smoke.string();
        failures += cli({"generate", "--config", cfg, "--out", r + "/generate"}) != kExitOk;
        failures += cli({"train", "--config", cfg, "--out", r + "/train"}) != kExitOk;
        failures += cli({"eval", "--config", cfg, "--checkpoint", r + "/train/checkpoint.bin", "--dataset",
                         r + "/generate/traces.jsonl", "--out", r + "/eval"}) != kExitOk;
        failures += cli({"transfer", "--config", cfg, "--checkpoint", r + "/train/checkpoint.bin", "--out",
                         r + "/transfer"}) != kExitOk;
        runs.push_back(tree_bytes(root));
    }
    // manifests name their own output directory only relatively, so whole trees compare
    std::size_t differing = 0;
    for (const auto& [name, bytes] : runs[0]) {
        auto it = runs[1].find(name);
        differing += it == runs[1].end() || it->second != bytes;
    }
    differing += runs[1].size() != runs[0].size();
    return {failures == 0 && differing == 0 && !runs[0].empty(),
            "generate, train, eval, transfer rerun twice: " + std::to_string(runs[0].size()) + " files, " +
                std::to_string(differing) + " differ, " + std::to_string(failures) + " commands failed"};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(out);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"teacher-oracle equivalence", teacher_oracle},
        {"gradient integrity", gradient_integrity},
        {"postcondition contract", postcondition_contract},
        {"equivariance", equivariance},
        {"learning smoke test", [&] { return learning(out); }},
        {"size generalisation", [&] { return size_generalisation(out); }},
        {"frozen-processor transfer", [&] { return frozen_transfer(out); }},
        {"bottleneck comparison artifact", [&] { return bottleneck_artifact(out); }},
        {"determinism", [&] { return determinism(out); }},
    };
    std::vector<bool> selected(criteria.size(), argc <= 2);
    for (int a = 2; a < argc; ++a) {
        const auto k = static_cast<std::size_t>(std::stoul(argv[a]));
        if (k >= 1 && k <= criteria.size()) selected[k - 1] = true;
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i]) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
