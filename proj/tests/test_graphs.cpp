#include <doctest.h>

#include <set>

#include "nar/graph.hpp"
#include "nar/teachers.hpp"
#include "support.hpp"

using namespace nar;
using nar::testing::dfs_reachable;

namespace {

GraphFamily er(std::size_t n_min, std::size_t n_max, std::optional<double> p) {
    GraphFamily f;
    f.n_min = n_min;
    f.n_max = n_max;
    f.p = p;
    return f;
}

// Lower bound on edges needed: unreached strongly connected components with
// no edge arriving from another unreached component.
std::size_t minimum_augmentation(const Graph& g, std::size_t source) {
    const auto from_source = dfs_reachable(g, source);
    std::vector<std::vector<std::uint8_t>> r;
    for (std::size_t v = 0; v < g.n; ++v) r.push_back(dfs_reachable(g, v));
    std::set<std::vector<std::uint32_t>> sources;
    for (std::uint32_t v = 0; v < g.n; ++v) {
        if (from_source[v]) continue;
        std::vector<std::uint32_t> comp;
        for (std::uint32_t w = 0; w < g.n; ++w)
            if (r[v][w] && r[w][v]) comp.push_back(w);
        bool entered = false;
        for (const auto& e : g.edges) {
            const bool inside_dst = std::find(comp.begin(), comp.end(), e.dst) != comp.end();
            const bool inside_src = std::find(comp.begin(), comp.end(), e.src) != comp.end();
            if (inside_dst && !inside_src) entered = true;
        }
        if (!entered) sources.insert(comp);
    }
    return sources.size();
}

}  // namespace

TEST_CASE("erdos_renyi extremes") {
    Rng rng = substream(1, "er");
    CHECK(generate(er(4, 4, 1.0), rng).edge_count() == 12);
    CHECK(generate(er(4, 4, 0.0), rng).edge_count() == 0);
    CHECK(generate(er(9, 9, 0.0), rng).edge_count() == 0);
}

TEST_CASE("erdos_renyi density matches p") {
    Rng rng = substream(2, "density");
    double edges = 0, pairs = 0;
    for (int i = 0; i < 1000; ++i) {
        Graph g = generate(er(10, 10, 0.3), rng);
        edges += static_cast<double>(g.edge_count());
        pairs += 90;
    }
    CHECK(edges / pairs == doctest::Approx(0.3).epsilon(0.1));
    CHECK(std::abs(edges / pairs - 0.3) < 0.03);
}

TEST_CASE("default edge probability") {
    GraphFamily f;
    CHECK(f.edge_probability(8) == doctest::Approx(std::min(1.0, 2 * std::log(8.0) / 8)));
    CHECK(f.edge_probability(1) == 0.0);
    f.p = 0.25;
    CHECK(f.edge_probability(8) == 0.25);
}

TEST_CASE("family validation") {
    GraphFamily f;
    f.p = 1.5;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.p = 0.5;
    f.weight_lo = 0;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.weight_lo = 0.2;
    f.n_min = 5;
    f.n_max = 4;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK_THROWS_AS(family_from_string("grid"), ConfigError);
}

TEST_CASE("every family emits valid graphs, deterministic per seed") {
    for (auto kind : {FamilyKind::erdos_renyi, FamilyKind::ladder, FamilyKind::complete}) {
        GraphFamily f;
        f.kind = kind;
        f.n_min = 1;
        f.n_max = 20;
        Rng a = substream(5, "fam"), b = substream(5, "fam"), c = substream(6, "fam");
        std::size_t differing = 0;
        for (int i = 0; i < 100; ++i) {
            Graph ga = generate(f, a);
            CHECK_NOTHROW(ga.validate());
            CHECK(ga == generate(f, b));
            if (!(ga == generate(f, c))) ++differing;
        }
        CHECK(differing > 90);
    }
}

TEST_CASE("graph invariants are enforced") {
    CHECK_THROWS_AS(make_graph(3, {{0, 0}}, {1.0}), DimensionError);
    CHECK_THROWS_AS(make_graph(3, {{0, 1}, {0, 1}}, {1.0, 1.0}), DimensionError);
    CHECK_THROWS_AS(make_graph(3, {{0, 3}}, {1.0}), DimensionError);
    CHECK_THROWS_AS(make_graph(3, {{0, 1}}, {-1.0}), DimensionError);
    Graph g = make_graph(3, {{2, 0}, {0, 1}}, {0.5, 0.7});
    CHECK(g.edges[0] == Edge{0, 1});
    CHECK(g.weights[0] == 0.7);
}

TEST_CASE("ensure_source_reaches") {
    Rng rng = substream(3, "augment");
    SUBCASE("empty 3-node graph gets a 2-edge chain from the source") {
        Graph g = ensure_source_reaches(make_graph(3, {}, {}), 0, rng);
        REQUIRE(g.edge_count() == 2);
        auto indeg = g.in_degrees();
        CHECK(indeg[0] == 0);
        CHECK(indeg[1] == 1);
        CHECK(indeg[2] == 1);
        std::size_t from_source = 0;
        for (const auto& e : g.edges) from_source += e.src == 0;
        CHECK(from_source == 1);
    }
    SUBCASE("already connected graph is unchanged") {
        Graph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}}, {1, 1, 1});
        CHECK(ensure_source_reaches(g, 1, rng) == g);
        Graph twice = ensure_source_reaches(ensure_source_reaches(make_graph(5, {}, {}), 2, rng), 2, rng);
        CHECK(dfs_reachable(twice, 2) == std::vector<std::uint8_t>(5, 1));
    }
    SUBCASE("DFS oracle on 500 random graphs, minimal and additive") {
        Rng gen = substream(4, "augment/graphs");
        for (int i = 0; i < 500; ++i) {
            AbstractInput x = testing::random_input(gen, 1, 12, 0.12, false);
            Graph h = ensure_source_reaches(x.graph, x.source, rng);
            CHECK(dfs_reachable(h, x.source) == std::vector<std::uint8_t>(h.n, 1));
            CHECK(h.edge_count() - x.graph.edge_count() == minimum_augmentation(x.graph, x.source));
            for (std::size_t e = 0; e < x.graph.edge_count(); ++e) {
                auto k = h.find_edge(x.graph.edges[e].src, x.graph.edges[e].dst);
                REQUIRE(k.has_value());
                CHECK(h.weights[*k] == x.graph.weights[e]);
            }
        }
    }
}

TEST_CASE("permute") {
    Rng rng = substream(7, "perm");
    Graph g = generate(er(6, 6, 0.5), rng);
    std::vector<std::uint32_t> id{0, 1, 2, 3, 4, 5};
    CHECK(permute(g, id) == g);
    for (int i = 0; i < 20; ++i) {
        auto perm = random_permutation(g.n, rng);
        CHECK(permute(permute(g, perm), invert_permutation(perm)) == g);
    }
    std::vector<std::uint32_t> bad{0, 0, 1, 2, 3, 4};
    CHECK_THROWS_AS(permute(g, bad), DimensionError);
}

TEST_CASE("shortest-path distances commute with permutation") {
    Rng rng = substream(8, "perm/sp");
    GraphFamily f = er(4, 12, std::nullopt);
    auto inputs = sample_inputs(f, 200, rng);
    for (const auto& x : inputs) {
        auto perm = random_permutation(x.n(), rng);
        auto d = testing::exhaustive_distances(x.graph, x.source);
        AbstractInput y = permute(x, perm);
        auto dp = testing::exhaustive_distances(y.graph, y.source);
        for (std::size_t v = 0; v < x.n(); ++v) CHECK(dp[perm[v]] == d[v]);
    }
}
