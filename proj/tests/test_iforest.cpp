#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dockflow/errors.hpp"
#include "dockflow/isolation_forest.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace dockflow;
using namespace dockflow::iforest;

namespace {

NumericMatrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    NumericMatrix m;
    m.cols = cols;
    for (std::size_t c = 0; c < cols; ++c) m.column_names.push_back("f" + std::to_string(c));
    std::vector<double> row(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (double& v : row) v = dist(rng);
        m.push_row(row);
    }
    return m;
}

// From-scratch rebuild of one tree following the documented draw order:
// subsample first, then per internal node a feature draw and a split draw,
// left subtree before right, nodes stored in creation order.
struct ReplayNode {
    int feature = -1;
    double split = 0;
    int left = -1;
    int right = -1;
    int size = 0;
};

std::vector<ReplayNode> replay_tree(const NumericMatrix& m, std::uint64_t seed,
                                    std::uint64_t tree_index, std::size_t psi, int depth_cap) {
    Rng rng = Rng::tree_stream(seed, tree_index);
    const std::size_t rows = m.rows();
    std::vector<std::size_t> pool(rows);
    for (std::size_t i = 0; i < rows; ++i) pool[i] = i;
    for (std::size_t i = 0; i < psi; ++i) {
        std::swap(pool[i], pool[i + rng.uniform_index(rows - i)]);
    }
    std::vector<std::size_t> sample(pool.begin(), pool.begin() + long(psi));

    std::vector<ReplayNode> nodes;
    auto build = [&](auto&& self, const std::vector<std::size_t>& items, int depth) -> int {
        const int idx = int(nodes.size());
        nodes.emplace_back();
        if (depth >= depth_cap || items.size() <= 1) {
            nodes[idx].size = int(items.size());
            return idx;
        }
        std::vector<std::size_t> candidates;
        std::vector<double> lo(m.cols), hi(m.cols);
        for (std::size_t c = 0; c < m.cols; ++c) {
            lo[c] = hi[c] = m.at(items[0], c);
            for (std::size_t i = 1; i < items.size(); ++i) {
                lo[c] = std::min(lo[c], m.at(items[i], c));
                hi[c] = std::max(hi[c], m.at(items[i], c));
            }
            if (hi[c] > lo[c]) candidates.push_back(c);
        }
        if (candidates.empty()) {
            nodes[idx].size = int(items.size());
            return idx;
        }
        const std::size_t f = candidates[rng.uniform_index(candidates.size())];
        const double split = rng.uniform_open(lo[f], hi[f]);
        std::vector<std::size_t> l, r;
        for (std::size_t i : items) (m.at(i, f) < split ? l : r).push_back(i);
        const int left = self(self, l, depth + 1);
        const int right = self(self, r, depth + 1);
        nodes[idx].feature = int(f);
        nodes[idx].split = split;
        nodes[idx].left = left;
        nodes[idx].right = right;
        return idx;
    };
    build(build, sample, 0);
    return nodes;
}

// Independent per-row expected path length: walk each tree by hand.
double naive_expected_path(const ForestModel& model, const std::vector<double>& row) {
    double total = 0;
    for (const IsolationTree& tree : model.trees) {
        int idx = 0;
        int depth = 0;
        while (tree.nodes[std::size_t(idx)].split_feature >= 0) {
            const TreeNode& n = tree.nodes[std::size_t(idx)];
            idx = row[std::size_t(n.split_feature)] < n.split_value ? n.left : n.right;
            ++depth;
        }
        total += depth + average_path_length_c(std::size_t(tree.nodes[std::size_t(idx)].size));
    }
    return total / double(model.trees.size());
}

}  // namespace

TEST_CASE("average path length matches the closed form at its anchors") {
    CHECK(average_path_length_c(0) == 0.0);
    CHECK(average_path_length_c(1) == 0.0);
    CHECK(average_path_length_c(2) == 1.0);
    // 2(ln 2 + gamma) - 4/3
    CHECK(average_path_length_c(3) == doctest::Approx(1.2073923576).epsilon(1e-9));
    CHECK(average_path_length_c(256) == doctest::Approx(10.2447709201).epsilon(1e-9));
    for (std::size_t n = 3; n < 2000; ++n) {
        CHECK(average_path_length_c(n) > average_path_length_c(n - 1));
    }
}

TEST_CASE("a from-scratch replay reproduces every tree node bit for bit") {
    const NumericMatrix m = random_matrix(40, 5, 2024);
    ForestConfig cfg;
    cfg.n_trees = 4;
    cfg.subsample = 16;
    cfg.seed = 12345;
    const ForestModel model = fit(m, cfg);
    CHECK(model.subsample_size == 16);
    CHECK(model.depth_cap == 4);
    CHECK(model.feature_count == 5);

    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto replay = replay_tree(m, cfg.seed, t, 16, model.depth_cap);
        const auto& nodes = model.trees[t].nodes;
        REQUIRE(replay.size() == nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            CAPTURE(t);
            CAPTURE(i);
            CHECK(nodes[i].split_feature == replay[i].feature);
            CHECK(nodes[i].split_value == replay[i].split);
            CHECK(nodes[i].left == replay[i].left);
            CHECK(nodes[i].right == replay[i].right);
            if (nodes[i].is_leaf()) CHECK(nodes[i].size == replay[i].size);
        }
    }
}

TEST_CASE("the subsample clips to the row count but still consumes draws") {
    const NumericMatrix m = random_matrix(10, 3, 7);
    ForestConfig cfg;
    cfg.n_trees = 3;
    cfg.subsample = 256;
    cfg.seed = 99;
    const ForestModel model = fit(m, cfg);
    CHECK(model.subsample_size == 10);
    CHECK(model.depth_cap == 4);  // ceil(log2(10))
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto replay = replay_tree(m, cfg.seed, t, 10, model.depth_cap);
        const auto& nodes = model.trees[t].nodes;
        REQUIRE(replay.size() == nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            CHECK(nodes[i].split_value == replay[i].split);
            CHECK(nodes[i].split_feature == replay[i].feature);
        }
    }
}

TEST_CASE("hand-walked path lengths equal the library's exactly") {
    const NumericMatrix train = random_matrix(60, 4, 11);
    ForestConfig cfg;
    cfg.n_trees = 4;
    cfg.subsample = 16;
    cfg.seed = 5;
    const ForestModel model = fit(train, cfg);

    const NumericMatrix probe = random_matrix(200, 4, 12);
    for (std::size_t r = 0; r < probe.rows(); ++r) {
        std::vector<double> row(probe.row(r).begin(), probe.row(r).end());
        CHECK(path_length(model, row) == naive_expected_path(model, row));
    }
}

TEST_CASE("scores stay strictly inside the unit interval") {
    const NumericMatrix m = random_matrix(1000, 4, 3);
    const ForestModel model = fit(m, {100, 256, 17});
    const double norm = average_path_length_c(std::size_t(model.subsample_size));
    const auto scores = score(model, m);
    REQUIRE(scores.size() == m.rows());
    for (const ScoredRow& s : scores) {
        CHECK(s.anomaly_score > 0.0);
        CHECK(s.anomaly_score < 1.0);
        CHECK(s.anomaly_score == std::exp2(-s.expected_path_length / norm));
    }
}

TEST_CASE("identical rows always receive identical scores") {
    NumericMatrix m = random_matrix(50, 3, 21);
    // Duplicate row 4 onto rows 20 and 49.
    for (std::size_t c = 0; c < m.cols; ++c) {
        m.values[20 * m.cols + c] = m.at(4, c);
        m.values[49 * m.cols + c] = m.at(4, c);
    }
    const ForestModel model = fit(m, {200, 32, 9});
    const auto scores = score(model, m);
    CHECK(scores[20].anomaly_score == scores[4].anomaly_score);
    CHECK(scores[49].anomaly_score == scores[4].anomaly_score);
}

TEST_CASE("a degenerate all-constant matrix scores exactly one half") {
    NumericMatrix m;
    m.cols = 2;
    m.column_names = {"a", "b"};
    const std::vector<double> row = {3.0, -1.0};
    for (int i = 0; i < 300; ++i) m.push_row(row);
    const ForestModel model = fit(m, {100, 256, 1});
    const auto scores = score(model, m);
    for (const ScoredRow& s : scores) {
        CHECK(s.expected_path_length ==
              doctest::Approx(average_path_length_c(256)).epsilon(1e-14));
        CHECK(s.anomaly_score == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("constant columns are never chosen as split features") {
    NumericMatrix m;
    m.cols = 3;
    m.column_names = {"const0", "vary", "const2"};
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 128; ++i) {
        const std::vector<double> row = {7.0, dist(rng), -2.5};
        m.push_row(row);
    }
    const ForestModel model = fit(m, {50, 64, 13});
    int internals = 0;
    for (const IsolationTree& tree : model.trees) {
        for (const TreeNode& n : tree.nodes) {
            if (!n.is_leaf()) {
                ++internals;
                CHECK(n.split_feature == 1);
            }
        }
    }
    CHECK(internals > 0);
}

TEST_CASE("fits are deterministic in the seed and sensitive to it") {
    const NumericMatrix m = random_matrix(300, 4, 8);
    const ForestModel a = fit(m, {20, 64, 42});
    const ForestModel b = fit(m, {20, 64, 42});
    const ForestModel c = fit(m, {20, 64, 43});
    CHECK(model_to_json(a).dump() == model_to_json(b).dump());
    CHECK(model_to_json(a).dump() != model_to_json(c).dump());
}

TEST_CASE("appending trees moves scores by at most the single-tree bound") {
    const NumericMatrix m = random_matrix(400, 4, 14);
    ForestConfig small;
    small.n_trees = 50;
    small.subsample = 128;
    small.seed = 77;
    ForestConfig big = small;
    big.n_trees = 51;
    const ForestModel ms = fit(m, small);
    const ForestModel mb = fit(m, big);
    // Same seed: the first 50 trees are shared, so tree 51 is a pure append.
    CHECK(model_to_json(ms)["trees"][49].dump() == model_to_json(mb)["trees"][49].dump());

    const double c_psi = average_path_length_c(std::size_t(ms.subsample_size));
    const double h_max = ms.depth_cap + c_psi;
    const double path_bound = h_max / double(big.n_trees);
    const double score_bound = path_bound * std::log(2.0) / c_psi;
    const auto sa = score(ms, m);
    const auto sb = score(mb, m);
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(std::abs(sa[i].expected_path_length - sb[i].expected_path_length) <=
              path_bound + 1e-12);
        CHECK(std::abs(sa[i].anomaly_score - sb[i].anomaly_score) <= score_bound + 1e-12);
    }

    // With many trees, duplicated rows converge to equal scores.
    NumericMatrix dup = random_matrix(64, 3, 15);
    for (std::size_t c = 0; c < dup.cols; ++c) dup.values[10 * dup.cols + c] = dup.at(3, c);
    const ForestModel many = fit(dup, {400, 32, 4});
    const auto sd = score(many, dup);
    CHECK(std::abs(sd[10].anomaly_score - sd[3].anomaly_score) < 1e-6);
}

TEST_CASE("uniform_open never lands on the lower bound") {
    Rng rng(1234);
    const double pairs[][2] = {{0.0, 1.0}, {-3.0, -2.9999}, {1e300, 1.0000001e300}, {-1e-9, 1e-9}};
    for (const auto& p : pairs) {
        for (int i = 0; i < 2000; ++i) {
            const double v = rng.uniform_open(p[0], p[1]);
            CHECK(v > p[0]);
            CHECK(v <= p[1]);
        }
    }
}

TEST_CASE("thresholding flags exactly the contamination share on distinct scores") {
    std::vector<ScoredRow> scores;
    for (int i = 0; i < 1000; ++i) {
        ScoredRow s;
        s.row_index = std::size_t(i);
        s.anomaly_score = 0.2 + 0.6 * double(i) / 999.0;  // 1000 distinct values
        scores.push_back(s);
    }
    const ThresholdResult r = threshold_by_contamination(scores, 0.05);
    CHECK(r.flagged == 50);
    std::size_t flagged = 0;
    for (const ScoredRow& s : scores) {
        if (s.is_anomaly) {
            ++flagged;
            CHECK(s.anomaly_score > r.threshold);
        }
    }
    CHECK(flagged == 50);
}

TEST_CASE("ties at the threshold can only reduce the flagged count") {
    std::vector<ScoredRow> scores;
    for (int i = 0; i < 1000; ++i) {
        ScoredRow s;
        s.row_index = std::size_t(i);
        s.anomaly_score = 0.5;  // all tied
        scores.push_back(s);
    }
    const ThresholdResult r = threshold_by_contamination(scores, 0.05);
    CHECK(r.flagged == 0);
    CHECK(r.threshold == 0.5);

    // Mixed: 970 low ties, 30 high ties, 5% of 1000 -> k = 50 rows in the
    // tail, but the tail is tie-heavy so only the 30 clear the threshold.
    std::vector<ScoredRow> mixed;
    for (int i = 0; i < 970; ++i) mixed.push_back({std::size_t(i), 0, 0.4, false});
    for (int i = 0; i < 30; ++i) mixed.push_back({std::size_t(970 + i), 0, 0.9, false});
    const ThresholdResult rm = threshold_by_contamination(mixed, 0.05);
    CHECK(rm.threshold == 0.4);
    CHECK(rm.flagged == 30);
}

TEST_CASE("the contamination count uses the floor of the share") {
    std::vector<ScoredRow> scores;
    for (int i = 0; i < 10; ++i) {
        ScoredRow s;
        s.row_index = std::size_t(i);
        s.anomaly_score = 0.1 * double(i);
        scores.push_back(s);
    }
    // floor(0.05 * 10) = 0: nothing can be flagged.
    const ThresholdResult r0 = threshold_by_contamination(scores, 0.05);
    CHECK(r0.flagged == 0);
    // floor(0.25 * 10) = 2.
    const ThresholdResult r2 = threshold_by_contamination(scores, 0.25);
    CHECK(r2.flagged == 2);
}

TEST_CASE("thresholding validates its inputs") {
    std::vector<ScoredRow> empty;
    CHECK_THROWS_AS(threshold_by_contamination(empty, 0.05), Error);
    std::vector<ScoredRow> one = {{0, 0, 0.5, false}};
    try {
        threshold_by_contamination(one, 0.0);
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::usage);
    }
    CHECK_THROWS_AS(threshold_by_contamination(one, 1.0), Error);
    CHECK_THROWS_AS(threshold_by_contamination(one, -0.1), Error);
}

TEST_CASE("fit validates its inputs with the right error classes") {
    const NumericMatrix ok = random_matrix(10, 2, 1);
    NumericMatrix one_row;
    one_row.cols = 2;
    one_row.column_names = {"a", "b"};
    const std::vector<double> row = {1.0, 2.0};
    one_row.push_row(row);
    try {
        fit(one_row, {});
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::data);
    }
    NumericMatrix no_cols;
    no_cols.cols = 0;
    CHECK_THROWS_AS(fit(no_cols, {}), Error);
    try {
        fit(ok, {0, 256, 0});
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::usage);
    }
    try {
        fit(ok, {10, 1, 0});
        FAIL("expected a thrown Error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::usage);
    }
}

TEST_CASE("models survive a JSON round trip unchanged") {
    const NumericMatrix m = random_matrix(100, 3, 55);
    const ForestModel model = fit(m, {8, 32, 1001});
    const nlohmann::json doc = model_to_json(model);
    const ForestModel back = model_from_json(doc);
    CHECK(model_to_json(back).dump() == doc.dump());

    // Scores computed from the round-tripped model are bit-identical.
    const auto sa = score(model, m);
    const auto sb = score(back, m);
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].anomaly_score == sb[i].anomaly_score);
    }
}

TEST_CASE("malformed model documents are rejected") {
    const NumericMatrix m = random_matrix(20, 2, 66);
    const ForestModel model = fit(m, {2, 8, 3});
    nlohmann::json good = model_to_json(model);

    nlohmann::json bad_format = good;
    bad_format["format"] = "other";
    CHECK_THROWS_AS(model_from_json(bad_format), Error);

    nlohmann::json bad_version = good;
    bad_version["version"] = 2;
    CHECK_THROWS_AS(model_from_json(bad_version), Error);

    nlohmann::json bad_node = good;
    bad_node["trees"][0][0] = nlohmann::json::array({1, 2});
    CHECK_THROWS_AS(model_from_json(bad_node), Error);

    nlohmann::json bad_count = good;
    bad_count["n_trees"] = 3;
    CHECK_THROWS_AS(model_from_json(bad_count), Error);

    CHECK_THROWS_AS(model_from_json(nlohmann::json::array()), Error);
}
