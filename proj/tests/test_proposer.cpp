#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include <turn/proposer.hpp>

using namespace turn;

namespace {

VideoRecord feature_record(const std::string& id, std::int64_t units, std::int64_t dim,
                           std::uint64_t seed, double fps = 16.0,
                           std::int64_t unit_frames = 16) {
    VideoRecord rec;
    rec.video_id = id;
    rec.fps = fps;
    rec.unit_frames = unit_frames;
    rec.units = units;
    rec.dim = dim;
    rec.duration_s = static_cast<double>(units * unit_frames) / fps;
    rec.unit_features.resize(static_cast<std::size_t>(units * dim));
    Rng rng(seed);
    for (auto& x : rec.unit_features) x = static_cast<float>(rng.normal(0, 1));
    rec.build_prefix();
    return rec;
}

Proposal prop(double s, double e, double score, const std::string& vid = "v") {
    return {vid, {s, e}, score, {}};
}

// independent selection loop: no pre-sort, rescans the remaining set each round
std::vector<Proposal> nms_oracle(std::vector<Proposal> pool, double thr) {
    std::vector<Proposal> kept;
    std::vector<char> alive(pool.size(), 1);
    for (;;) {
        std::ptrdiff_t best = -1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!alive[i]) continue;
            if (best < 0) {
                best = static_cast<std::ptrdiff_t>(i);
                continue;
            }
            const Proposal& a = pool[i];
            const Proposal& b = pool[static_cast<std::size_t>(best)];
            bool wins = a.score > b.score ||
                        (a.score == b.score &&
                         (a.span.start_s < b.span.start_s ||
                          (a.span.start_s == b.span.start_s && a.span.length() > b.span.length())));
            if (wins) best = static_cast<std::ptrdiff_t>(i);
        }
        if (best < 0) break;
        std::size_t bi = static_cast<std::size_t>(best);
        kept.push_back(pool[bi]);
        alive[bi] = 0;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (alive[i] && tiou(pool[bi].span, pool[i].span) > thr) alive[i] = 0;
    }
    return kept;
}

bool same_proposals(const std::vector<Proposal>& a, const std::vector<Proposal>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].span != b[i].span || a[i].score != b[i].score || a[i].video_id != b[i].video_id)
            return false;
    return true;
}

} // namespace

TEST_CASE("refine inverts the offsets, rounds, clamps, and rejects collapses") {
    auto r = refine({10, 20}, 2.0, -2.0, 100);
    REQUIRE(r.has_value());
    CHECK(*r == UnitInterval{8, 22});

    // clamped at the left edge
    auto c = refine({0, 2}, 5.0, 0.0, 100);
    REQUIRE(c.has_value());
    CHECK(*c == UnitInterval{0, 2});

    // clamped at the right edge
    auto e = refine({10, 20}, 0.0, -5.0, 22);
    REQUIRE(e.has_value());
    CHECK(*e == UnitInterval{10, 22});

    // collapse is rejected rather than passed through
    CHECK_FALSE(refine({5, 10}, -10.0, 4.0, 100).has_value());
    CHECK_FALSE(refine({5, 10}, -2.0, 3.0, 100).has_value()); // s'=7, e'=7
    CHECK_FALSE(refine({0, 4}, 0.0, 4.0, 100).has_value());

    // rounding is to nearest, halves away from zero
    CHECK(refine({10, 20}, 2.5, 0.0, 100)->start == 8);   // llround(7.5)
    CHECK(refine({10, 20}, -2.5, 0.0, 100)->start == 13); // llround(12.5)
    CHECK(refine({10, 20}, 0.0, -0.4, 100)->end == 20);
    CHECK(refine({10, 20}, 0.0, -0.6, 100)->end == 21);
}

TEST_CASE("nms keeps one of two identical spans") {
    auto kept = nms({prop(2, 6, 0.9), prop(2, 6, 0.4)}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms ordering and tie-breaks") {
    // equal scores: earlier start wins, then the longer span
    auto kept = nms({prop(1, 3, 0.7), prop(0, 2, 0.7)}, 0.2);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].span.start_s == 0.0);

    auto kept2 = nms({prop(0, 2, 0.7), prop(0, 3, 0.7)}, 0.3);
    REQUIRE(kept2.size() == 1);
    CHECK(kept2[0].span.end_s == 3.0);

    // survivors come out in descending score order
    auto kept3 = nms({prop(0, 1, 0.2), prop(10, 11, 0.9), prop(20, 21, 0.5)}, 0.5);
    REQUIRE(kept3.size() == 3);
    CHECK(kept3[0].score == 0.9);
    CHECK(kept3[1].score == 0.5);
    CHECK(kept3[2].score == 0.2);
}

TEST_CASE("nms equals an independent oracle and is idempotent") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Proposal> pool;
        int n = 1 + static_cast<int>(rng.uniform_below(20));
        for (int i = 0; i < n; ++i) {
            double a = rng.uniform(0.0, 30.0);
            double len = rng.uniform(0.25, 12.0);
            // quantized scores force frequent ties
            double score = std::floor(rng.uniform01() * 8.0) / 8.0;
            pool.push_back(prop(a, a + len, score));
        }
        double thr = rng.uniform01() * 0.9;
        auto fast = nms(pool, thr);
        auto slow = nms_oracle(pool, thr);
        REQUIRE(same_proposals(fast, slow));

        // idempotent, and all surviving pairs respect the threshold
        CHECK(same_proposals(nms(fast, thr), fast));
        for (std::size_t i = 0; i < fast.size(); ++i)
            for (std::size_t j = i + 1; j < fast.size(); ++j)
                CHECK(tiou(fast[i].span, fast[j].span) <= thr);
    }
}

TEST_CASE("propose with an indifferent model keeps the whole pyramid") {
    FeatureStore store;
    store.dim = 3;
    store.unit_frames = 16;
    auto rec = feature_record("v0", 20, 3, 4);
    store.videos.emplace("v0", rec);

    ModelConfig cfg;
    cfg.dim = 3;
    cfg.hidden = 4;
    cfg.pyramid.scales = {1, 2, 4};
    cfg.pyramid.n_ctx = 2;
    ModelParams p;
    p.cfg = cfg;
    p.W1 = Eigen::MatrixXd::Zero(4, 9);
    p.b1 = Eigen::VectorXd::Zero(4);
    p.Wc = Eigen::MatrixXd::Zero(2, 4);
    p.bc = Eigen::VectorXd::Zero(2);
    p.Wr = Eigen::MatrixXd::Zero(2, 4);
    p.br = Eigen::VectorXd::Zero(2);

    ProposeOptions opt;
    opt.nms_threshold = 1.0; // nothing exceeds 1.0 strictly, so nothing is dropped
    auto props = propose(p, store, "v0", cfg.pyramid, opt);
    CHECK(props.size() == build_pyramid(20, cfg.pyramid).size());
    for (const auto& pr : props) {
        CHECK(pr.score == 0.5);
        CHECK(pr.span.start_s >= 0.0);
        CHECK(pr.span.end_s <= rec.duration_s);
        CHECK(pr.span.valid());
    }

    // zero offsets make regression a no-op: ablation output is identical
    ProposeOptions noreg = opt;
    noreg.apply_regression = false;
    CHECK(same_proposals(propose(p, store, "v0", cfg.pyramid, noreg), props));

    CHECK_THROWS_AS(propose(p, store, "absent", cfg.pyramid, opt), error);
}

TEST_CASE("propose with a live model emits bounded, ordered, deduplicated spans") {
    FeatureStore store;
    store.dim = 4;
    store.unit_frames = 16;
    store.videos.emplace("v1", feature_record("v1", 40, 4, 5));

    ModelConfig cfg;
    cfg.dim = 4;
    cfg.hidden = 8;
    cfg.pyramid.scales = {2, 4, 8};
    Rng rng(6);
    auto p = init_params(cfg, rng);

    auto props = propose(p, store, "v1", cfg.pyramid);
    REQUIRE(!props.empty());
    for (std::size_t i = 0; i < props.size(); ++i) {
        CHECK(props[i].span.valid());
        CHECK(props[i].span.start_s >= 0.0);
        CHECK(props[i].span.end_s <= store.at("v1").duration_s + 1e-12);
        CHECK(props[i].score >= 0.0);
        CHECK(props[i].score <= 1.0);
        if (i) CHECK(props[i - 1].score >= props[i].score);
        for (std::size_t j = i + 1; j < props.size(); ++j)
            CHECK(tiou(props[i].span, props[j].span) <= 0.5);
    }

    // chunked scoring must not depend on the chunk size
    auto a = score_clips(p, store.at("v1"), cfg.pyramid, 7);
    auto b = score_clips(p, store.at("v1"), cfg.pyramid, 1024);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].clip == b[i].clip);
        CHECK(std::abs(a[i].action_prob - b[i].action_prob) <= 1e-12);
        CHECK(std::abs(a[i].o_s - b[i].o_s) <= 1e-12);
    }
}

TEST_CASE("sliding windows tile the video at the documented stride") {
    auto rec = feature_record("v", 4, 1, 1); // 64 frames at 16 fps
    Rng rng(8);
    auto props = sliding_window_baseline(rec, {16}, 0.75, rng);
    // stride = round(16 * 0.25) = 4; starts 0,4,...,48
    REQUIRE(props.size() == 13);
    CHECK(props[0].span == SecondsInterval{0.0, 1.0});
    CHECK(props[1].span.start_s == 4.0 / 16.0);
    CHECK(props.back().span == SecondsInterval{3.0, 4.0});
    for (const auto& pr : props) {
        CHECK(pr.span.end_s <= rec.duration_s);
        CHECK(pr.score >= 0.0);
        CHECK(pr.score <= 1.0);
    }

    // zero overlap tiles without gaps or double coverage
    Rng rng2(8);
    auto tiles = sliding_window_baseline(rec, {16}, 0.0, rng2);
    REQUIRE(tiles.size() == 4);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        CHECK(tiles[i].span.start_s == static_cast<double>(i));
        CHECK(tiles[i].span.end_s == static_cast<double>(i + 1));
    }

    // windows longer than the video produce nothing
    CHECK(sliding_window_baseline(rec, {65}, 0.5, rng).empty());

    // multiple window lengths concatenate
    Rng rng3(9);
    auto multi = sliding_window_baseline(rec, {16, 32}, 0.0, rng3);
    CHECK(multi.size() == 4 + 2);

    CHECK_THROWS_AS(sliding_window_baseline(rec, {16}, 1.0, rng), error);
    CHECK_THROWS_AS(sliding_window_baseline(rec, {0}, 0.5, rng), error);
}

TEST_CASE("sliding scores are deterministic per seed") {
    auto rec = feature_record("v", 8, 1, 2);
    Rng a(5), b(5), c(6);
    auto pa = sliding_window_baseline(rec, {16, 32}, 0.5, a);
    auto pb = sliding_window_baseline(rec, {16, 32}, 0.5, b);
    auto pc = sliding_window_baseline(rec, {16, 32}, 0.5, c);
    REQUIRE(same_proposals(pa, pb));
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) any_diff |= pa[i].score != pc[i].score;
    CHECK(any_diff);
}

TEST_CASE("random baseline bounds and determinism") {
    auto rec = feature_record("v", 10, 1, 3);
    Rng rng(12);
    CHECK(random_baseline(rec, 0, rng).empty());

    auto props = random_baseline(rec, 500, rng);
    REQUIRE(props.size() == 500);
    for (const auto& pr : props) {
        CHECK(pr.span.start_s >= 0.0);
        CHECK(pr.span.end_s <= rec.duration_s);
        CHECK(pr.span.start_s < pr.span.end_s);
        CHECK(pr.score >= 0.0);
        CHECK(pr.score <= 1.0);
    }
    Rng r1(77), r2(77);
    CHECK(same_proposals(random_baseline(rec, 50, r1), random_baseline(rec, 50, r2)));
    CHECK_THROWS_AS(random_baseline(rec, -1, rng), error);
}
