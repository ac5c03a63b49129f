#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "crowdcount/eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace crowdcount;

namespace {

Detection det(double x, double y, double score) {
    Detection d;
    d.x = x;
    d.y = y;
    d.score = score;
    d.blob_size = 1;
    return d;
}

std::vector<std::vector<Detection>> random_pool(Rng& rng, int scenes, int max_dets) {
    std::vector<std::vector<Detection>> pool(scenes);
    for (auto& dets : pool) {
        const int n = static_cast<int>(rng.uniform_int(0, max_dets));
        for (int i = 0; i < n; ++i)
            dets.push_back(det(rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0), rng.uniform01()));
        std::sort(dets.begin(), dets.end(),
                  [](const Detection& a, const Detection& b) { return a.score > b.score; });
    }
    return pool;
}

std::vector<std::vector<HeadPoint>> random_gt(Rng& rng, int scenes, int max_pts, int min_pts = 0) {
    std::vector<std::vector<HeadPoint>> gt(scenes);
    for (auto& g : gt) {
        const int n = static_cast<int>(rng.uniform_int(min_pts, max_pts));
        for (int i = 0; i < n; ++i) g.push_back({rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0)});
    }
    return gt;
}

} // namespace

TEST_CASE("counting_errors on the worked example") {
    auto [mae, mse] = counting_errors({10.0, 20.0}, {12, 16});
    CHECK(mae == doctest::Approx(3.0));
    CHECK(mse == doctest::Approx(std::sqrt(10.0)));

    auto [z1, z2] = counting_errors({4.0, 7.0}, {4, 7});
    CHECK(z1 == 0.0);
    CHECK(z2 == 0.0);

    CHECK_THROWS_AS(counting_errors({}, {}), ValidationError);
}

TEST_CASE("MAE never exceeds MSE and both respect symmetry") {
    Rng rng(41);
    for (int t = 0; t < 50; ++t) {
        const int n = static_cast<int>(rng.uniform_int(1, 20));
        std::vector<double> pred(n);
        std::vector<int> gt(n);
        for (int i = 0; i < n; ++i) {
            gt[i] = static_cast<int>(rng.uniform_int(0, 50));
            pred[i] = gt[i] + rng.uniform(-10.0, 10.0);
        }
        auto [mae, mse] = counting_errors(pred, gt);
        CHECK(mae <= mse + 1e-12);

        // negate all residuals
        std::vector<double> neg(n);
        for (int i = 0; i < n; ++i) neg[i] = 2.0 * gt[i] - pred[i];
        auto [mae2, mse2] = counting_errors(neg, gt);
        CHECK(mae == doctest::Approx(mae2).epsilon(1e-12));
        CHECK(mse == doctest::Approx(mse2).epsilon(1e-12));
    }
}

TEST_CASE("greedy_match honors the inclusive radius") {
    // distance exactly 5 counts as a hit
    const MatchResult r = greedy_match({det(3.0, 4.0, 1.0)}, {{0.0, 0.0}}, 5.0);
    REQUIRE(r.true_positives.size() == 1);
    CHECK(r.true_positives[0].distance == doctest::Approx(5.0));
    CHECK(r.false_positives.empty());
    CHECK(r.false_negatives.empty());
}

TEST_CASE("no detections means every gt is a false negative") {
    const MatchResult r = greedy_match({}, {{1, 1}, {2, 2}, {3, 3}}, 5.0);
    CHECK(r.true_positives.empty());
    CHECK(r.false_negatives.size() == 3);
}

TEST_CASE("matched gt is deleted so only the higher-scored detection wins") {
    const MatchResult r =
        greedy_match({det(1.0, 0.0, 0.9), det(0.0, 1.0, 0.4)}, {{0.0, 0.0}}, 5.0);
    REQUIRE(r.true_positives.size() == 1);
    CHECK(r.true_positives[0].detection == 0);
    REQUIRE(r.false_positives.size() == 1);
    CHECK(r.false_positives[0] == 1);
}

TEST_CASE("greedy_match rejects unsorted detections") {
    CHECK_THROWS_AS(greedy_match({det(0, 0, 0.1), det(1, 1, 0.9)}, {{0, 0}}, 5.0),
                    ValidationError);
}

TEST_CASE("match partition sizes always add up") {
    Rng rng(42);
    for (int t = 0; t < 100; ++t) {
        const auto pool = random_pool(rng, 1, 8);
        const auto gt = random_gt(rng, 1, 8);
        const MatchResult r = greedy_match(pool[0], gt[0], 5.0);
        CHECK(r.true_positives.size() + r.false_negatives.size() == gt[0].size());
        CHECK(r.true_positives.size() + r.false_positives.size() == pool[0].size());
        for (const auto& tp : r.true_positives) CHECK(tp.distance <= 5.0);
        // each gt appears at most once
        std::set<int> gts;
        for (const auto& tp : r.true_positives) CHECK(gts.insert(tp.gt).second);
    }
}

TEST_CASE("perfect detections give AP 1, hopeless ones give AP 0") {
    std::vector<std::vector<HeadPoint>> gt = {{{3, 3}, {10, 10}}, {{20, 5}}};
    std::vector<std::vector<Detection>> perfect = {{det(3, 3, 0.7), det(10, 10, 0.9)},
                                                   {det(20, 5, 0.8)}};
    for (auto& d : perfect)
        std::sort(d.begin(), d.end(),
                  [](const Detection& a, const Detection& b) { return a.score > b.score; });
    CHECK(average_precision(perfect, gt, 5.0).ap == doctest::Approx(1.0));

    const std::vector<std::vector<Detection>> far = {{det(30, 30, 0.7)}, {det(35, 35, 0.8)}};
    CHECK(average_precision(far, gt, 5.0).ap == doctest::Approx(0.0));

    CHECK_THROWS_AS(average_precision(perfect, {{}, {}}, 5.0), ValidationError);
}

TEST_CASE("AP matches the brute-force sweep oracle on random pools") {
    Rng rng(43);
    for (int t = 0; t < 60; ++t) {
        const int scenes = static_cast<int>(rng.uniform_int(1, 3));
        const auto pool = random_pool(rng, scenes, 6);
        const auto gt = random_gt(rng, scenes, 6, 1);
        const ApResult got = average_precision(pool, gt, 5.0);
        const double want = oracle::brute_force_ap(pool, gt, 5.0);
        CHECK(std::abs(got.ap - want) < 1e-9);
        // recalls non-decreasing along the curve
        for (std::size_t i = 1; i < got.curve.size(); ++i)
            CHECK(got.curve[i].recall >= got.curve[i - 1].recall);
    }
}

TEST_CASE("AP is invariant under monotone score transforms") {
    Rng rng(44);
    auto pool = random_pool(rng, 3, 6);
    const auto gt = random_gt(rng, 3, 6, 1);
    const double before = average_precision(pool, gt, 5.0).ap;
    for (auto& dets : pool)
        for (Detection& d : dets) d.score = std::exp(3.0 * d.score) + 1.0;
    const double after = average_precision(pool, gt, 5.0).ap;
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("loosest-threshold point equals single-shot matching") {
    Rng rng(45);
    const auto pool = random_pool(rng, 2, 6);
    const auto gt = random_gt(rng, 2, 6, 1);
    const ApResult res = average_precision(pool, gt, 5.0);
    if (res.curve.empty()) return;

    std::size_t tp = 0, nd = 0, ng = 0;
    for (std::size_t s = 0; s < pool.size(); ++s) {
        tp += greedy_match(pool[s], gt[s], 5.0).true_positives.size();
        nd += pool[s].size();
        ng += gt[s].size();
    }
    const PrPoint& last = res.curve.back();
    CHECK(last.recall == doctest::Approx(double(tp) / ng));
    CHECK(last.precision == doctest::Approx(double(tp) / nd));
}

TEST_CASE("density groups split quintiles with earlier groups absorbing extras") {
    auto scenes_with_counts = [](const std::vector<int>& counts) {
        std::vector<CrowdScene> scenes;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            std::vector<HeadPoint> heads(counts[i]);
            for (int k = 0; k < counts[i]; ++k)
                heads[k] = {static_cast<double>(k % 31), static_cast<double>(k / 31)};
            char id[16];
            std::snprintf(id, sizeof(id), "s%03zu", i);
            scenes.push_back(testutil::make_scene(64, 64, heads, id));
        }
        return scenes;
    };

    SUBCASE("counts 1..10 split evenly") {
        const auto scenes = scenes_with_counts({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
        const auto groups = density_groups(scenes);
        REQUIRE(groups.size() == 5);
        for (const auto& g : groups) CHECK(g.size() == 2);
        // group 1 holds counts {1, 2}
        std::set<int> g1;
        for (int idx : groups[0]) g1.insert(scenes[idx].count());
        CHECK(g1 == std::set<int>{1, 2});
    }

    SUBCASE("counts 1..11 give sizes (3,2,2,2,2)") {
        std::vector<int> counts(11);
        for (int i = 0; i < 11; ++i) counts[i] = i + 1;
        const auto groups = density_groups(scenes_with_counts(counts));
        CHECK(groups[0].size() == 3);
        for (int g = 1; g < 5; ++g) CHECK(groups[g].size() == 2);
    }

    SUBCASE("grouping is invariant under permutation") {
        Rng rng(46);
        std::vector<int> counts;
        for (int i = 0; i < 13; ++i) counts.push_back(static_cast<int>(rng.uniform_int(0, 9)));
        auto scenes = scenes_with_counts(counts);
        const auto base = density_groups(scenes);
        std::vector<std::set<std::string>> base_ids(5);
        for (int g = 0; g < 5; ++g)
            for (int idx : base[g]) base_ids[g].insert(scenes[idx].id);

        rng.shuffle(scenes);
        const auto perm = density_groups(scenes);
        for (int g = 0; g < 5; ++g) {
            std::set<std::string> ids;
            for (int idx : perm[g]) ids.insert(scenes[idx].id);
            CHECK(ids == base_ids[g]);
        }
    }

    SUBCASE("fewer than 5 scenes is an error") {
        CHECK_THROWS_AS(density_groups(scenes_with_counts({1, 2, 3, 4})), ValidationError);
    }
}
