#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "evtrack/simulator.hpp"
#include "evtrack/tracker.hpp"
#include "test_util.hpp"

using namespace evtrack;
using namespace evtrack::tracker;

namespace {

const afnet::AFNetConfig kToy{8, 4, 8, 4, 3};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrainConfig short_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 20;
    cfg.batches_per_epoch = 2;
    cfg.batch_size = 2;
    cfg.scenarios = {ScenarioKind::Plain};
    cfg.sequences_per_scenario = 2;
    cfg.net = kToy;
    cfg.head.hidden = 8;
    return cfg;
}

}  // namespace

TEST_CASE("feature coordinates") {
    CHECK(to_feature(2.0) == 0.0);
    CHECK(to_feature(6.0) == 1.0);
    CHECK(to_feature(0.0) == -0.5);
}

TEST_CASE("template kernel is deterministic and k x k") {
    std::mt19937_64 rng(1);
    const auto model = init_tracker(kToy, {}, 3);
    const auto seq = sim::simulate_sequence(sim::make_scenario(ScenarioKind::Plain, 2));
    const auto ev = events::aggregate_events(seq.events, 0, 4166);
    const auto a = init_template(model, seq.frames[0], ev, seq.init_box, afnet::FusionMode::AFNet);
    const auto b = init_template(model, seq.frames[0], ev, seq.init_box, afnet::FusionMode::AFNet);
    CHECK(a.kernel == b.kernel);
    CHECK(a.features == b.features);
    CHECK(a.kernel.shape() == std::vector<int>{1, 8, 4, 4});
    const auto tiny = init_template(model, seq.frames[0], ev, {30.0, 30.0, 1.5, 2.0}, afnet::FusionMode::AFNet);
    CHECK(tiny.kernel.shape() == std::vector<int>{1, 8, 4, 4});
    CHECK_THROWS_AS(init_template(model, seq.frames[0], ev, {60.0, 10.0, 12.0, 12.0}, afnet::FusionMode::AFNet),
                    std::invalid_argument);
    CHECK_THROWS_AS(init_template(model, seq.frames[0], ev, {-1.0, 10.0, 12.0, 12.0}, afnet::FusionMode::AFNet),
                    std::invalid_argument);
}

TEST_CASE("kernel energy vanishes exactly when the crop is zero") {
    std::mt19937_64 rng(2);
    Tensor f({1, 4, 16, 16});
    // Nonzero only far from the box.
    for (int c = 0; c < 4; ++c) f.at(0, c, 14, 14) = 1.0 + c;
    const BBox box{8.0, 8.0, 12.0, 12.0};
    CHECK(roi_sample(ag::constant(f), {{0, box}})->value.max_abs() == 0.0);
    f.at(0, 2, 3, 3) = 0.5;
    CHECK(roi_sample(ag::constant(f), {{0, box}})->value.max_abs() > 0.0);
}

TEST_CASE("shifted template features peak at the shift with score 1") {
    std::mt19937_64 rng(3);
    const auto t = Tensor::randn({1, 6, 16, 16}, rng);
    // Box centred on cell (u, v) = (5, 6).
    const BBox box = BBox::from_center(4 * 5 + 2.0, 4 * 6 + 2.0, 12.0, 12.0);
    TemplateState state;
    state.box = box;
    state.features = t;
    state.kernel = roi_sample(ag::constant(t), {{0, box}})->value;
    const int du = 2, dv = -1;
    Tensor s({1, 6, 16, 16});
    for (int c = 0; c < 6; ++c)
        for (int v = 0; v < 16; ++v)
            for (int u = 0; u < 16; ++u) {
                const int sv = v - dv, su = u - du;
                if (sv >= 0 && sv < 16 && su >= 0 && su < 16) s.at(0, c, v, u) = t.at(0, c, sv, su);
            }
    const auto map = classify(state, s);
    CHECK(map.height == 16);
    CHECK(map.width == 16);
    std::size_t best = 0;
    for (std::size_t i = 1; i < map.scores.size(); ++i)
        if (map.scores[i] > map.scores[best]) best = i;
    CHECK(best == static_cast<std::size_t>((6 + dv) * 16 + 5 + du));
    CHECK(map.scores[best] == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : map.scores) CHECK(v <= 1.0 + 1e-12);
}

TEST_CASE("zero search features give a zero score map") {
    std::mt19937_64 rng(4);
    TemplateState state;
    state.box = {10, 10, 12, 12};
    state.kernel = Tensor::randn({1, 5, 4, 4}, rng);
    const auto map = classify(state, Tensor({1, 5, 8, 8}));
    for (double v : map.scores) CHECK(v == 0.0);
    CHECK_THROWS_AS(classify(state, Tensor({1, 4, 8, 8})), std::invalid_argument);
    CHECK_THROWS_AS(classify(state, Tensor({2, 5, 8, 8})), std::invalid_argument);
}

TEST_CASE("jitter candidates") {
    const BBox prior{20, 20, 12, 10};
    const auto a = jitter_candidates(prior);
    REQUIRE(a.size() == 16);
    CHECK(a[0] == prior);
    CHECK(a == jitter_candidates(prior));
    for (const auto& c : a) {
        CHECK(c.valid());
        CHECK(std::abs(c.center_x() - prior.center_x()) <= 0.25 * prior.w + 1e-12);
        CHECK(std::abs(c.center_y() - prior.center_y()) <= 0.25 * prior.h + 1e-12);
        CHECK(c.w / prior.w <= std::exp(0.1) + 1e-12);
        CHECK(c.w / prior.w >= std::exp(-0.1) - 1e-12);
    }
    CHECK_THROWS_AS(jitter_candidates({0, 0, 0, 5}), std::invalid_argument);
}

TEST_CASE("refine_box follows the scorer") {
    const BBox gt{22, 19, 12, 12};
    const BBox prior{20, 20, 12, 10};
    const auto candidates = jitter_candidates(prior, 5);
    const auto oracle = [&](const std::vector<BBox>& boxes) {
        std::vector<double> s;
        for (const auto& b : boxes) s.push_back(eval::iou(b, gt));
        return s;
    };
    const auto picked = refine_box(candidates, oracle);
    double best = 0.0;
    for (const auto& c : candidates) best = std::max(best, eval::iou(c, gt));
    CHECK(eval::iou(picked, gt) == best);

    const std::vector<BBox> same(16, prior);
    CHECK(refine_box(same, [](const std::vector<BBox>& b) { return std::vector<double>(b.size(), 0.3); }) == prior);
    CHECK_THROWS_AS(refine_box(std::vector<BBox>{}, oracle), std::invalid_argument);
    CHECK_THROWS_AS(refine_box(candidates, [](const std::vector<BBox>&) { return std::vector<double>{1.0}; }),
                    std::invalid_argument);
}

TEST_CASE("refined boxes keep a positive size") {
    std::mt19937_64 rng(6);
    const auto model = init_tracker(kToy, {8}, 4);
    TemplateState state;
    state.box = {20, 20, 12, 12};
    state.kernel = Tensor::randn({1, 8, 4, 4}, rng);
    const auto features = Tensor::randn({1, 8, 16, 16}, rng);
    std::uniform_real_distribution<double> pos(0.0, 60.0), size(0.5, 30.0);
    for (int i = 0; i < 20; ++i) {
        const auto b = refine_box(model, state, features, {pos(rng), pos(rng), size(rng), size(rng)});
        CHECK(b.w > 0.0);
        CHECK(b.h > 0.0);
    }
}

TEST_CASE("iou head outputs lie in (0, 1)") {
    std::mt19937_64 rng(7);
    const auto model = init_tracker(kToy, {8}, 4);
    Binding head(model.head, false);
    std::vector<Roi> rois;
    for (const auto& b : jitter_candidates({10, 10, 12, 12})) rois.push_back({0, b});
    const auto p = predict_iou(head, ag::constant(Tensor::randn({1, 8, 8, 8}, rng)),
                               ag::constant(Tensor::randn({1, 8, 4, 4}, rng)), rois);
    REQUIRE(p->value.size() == 16);
    for (double v : p->value.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("gaussian label") {
    const auto l = gaussian_label(8, 8, BBox::from_center(4 * 3 + 2.0, 4 * 5 + 2.0, 12, 12), 1.0);
    CHECK(l.at(0, 0, 5, 3) == 1.0);
    CHECK(l.at(0, 0, 5, 4) == doctest::Approx(std::exp(-0.5)));
    CHECK(l.at(0, 0, 0, 0) < 1e-6);
}

TEST_CASE("loss examples") {
    LossConfig cfg;
    // One foreground cell off by 0.1 and IoU errors {1, 0}: 100 * 0.01 + 0.5.
    const auto t = compute_loss(ag::constant(Tensor({1, 1, 1, 1}, 0.9)), Tensor({1, 1, 1, 1}, 1.0),
                                ag::constant(Tensor({2}, 0.0)), {1.0, 0.0}, cfg);
    CHECK(t.cls->value[0] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(t.bb->value[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.total->value[0] == doctest::Approx(1.5).epsilon(1e-12));

    const auto label = gaussian_label(6, 6, {8, 8, 12, 12}, 1.0);
    Tensor perfect = label;
    for (auto& v : perfect.values())
        if (v <= cfg.hinge) v = 0.0;
    const auto zero = compute_loss(ag::constant(perfect), label, ag::constant(Tensor({3}, 0.4)), {0.4, 0.4, 0.4}, cfg);
    CHECK(zero.total->value[0] == 0.0);
}

TEST_CASE("background scores under the hinge cost nothing") {
    LossConfig cfg;
    Tensor label({1, 1, 1, 2}, std::vector<double>{0.0, 0.01});
    const auto below = compute_loss(ag::constant(Tensor({1, 1, 1, 2}, std::vector<double>{0.03, -0.4})), label,
                                    ag::constant(Tensor({1}, 0.0)), {0.0}, cfg);
    CHECK(below.cls->value[0] == 0.0);
    const auto above = compute_loss(ag::constant(Tensor({1, 1, 1, 2}, std::vector<double>{0.15, 0.0})), label,
                                    ag::constant(Tensor({1}, 0.0)), {0.0}, cfg);
    CHECK(above.cls->value[0] == doctest::Approx(0.1 * 0.1 / 2.0));
    CHECK_THROWS_AS(compute_loss(ag::constant(Tensor({1, 1, 1, 3})), label, ag::constant(Tensor({1})), {0.0}, cfg),
                    std::invalid_argument);
}

TEST_CASE("loss is nonnegative") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const auto label = gaussian_label(5, 5, {4, 4, 8, 8}, 1.0);
        const auto t = compute_loss(ag::constant(Tensor::uniform({1, 1, 5, 5}, rng, -1.0, 1.0)), label,
                                    ag::constant(Tensor::uniform({4}, rng, 0.0, 1.0)), {0.1, 0.5, 0.9, 0.3}, {});
        CHECK(t.total->value[0] >= 0.0);
    }
}

TEST_CASE("tracking loss passes the gradient check on five seeds") {
    for (const auto& c : tracker_gradcheck_cases()) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto r = run_case(c, seed);
            CAPTURE(r.max_rel_error);
            CAPTURE(r.worst);
            CHECK(r.passed);
        }
    }
}

TEST_CASE("fusion names") {
    for (auto f : {TrackFusion::AFNet, TrackFusion::EarlyFusion, TrackFusion::MiddleFusion, TrackFusion::FrameOnly,
                   TrackFusion::EventOnly})
        CHECK(parse_track_fusion(to_string(f)) == f);
    CHECK(parse_track_fusion("event-only") == TrackFusion::EventOnly);
    CHECK_THROWS_AS(parse_track_fusion("both"), std::invalid_argument);
}

TEST_CASE("track_sequence emits one box per event timestamp") {
    const auto model = init_tracker(kToy, {8}, 2);
    const auto seq = sim::simulate_sequence(sim::make_scenario(ScenarioKind::FM, 3));
    for (auto mode : {events::AccumulationMode::SinceLastEventFrame, events::AccumulationMode::SinceLastIntensityFrame}) {
        const auto r = track_sequence(model, seq, {TrackFusion::AFNet, mode, true});
        REQUIRE(r.boxes.size() == 120);
        const auto stamps = seq.event_timestamps();
        for (std::size_t i = 0; i < stamps.size(); ++i) {
            CHECK(r.boxes[i].t_us == stamps[i]);
            const auto& b = r.boxes[i].box;
            CHECK(b.valid());
            CHECK(b.x >= 0.0);
            CHECK(b.x + b.w <= 64.0 + 1e-9);
        }
        CHECK(r.attribute == ScenarioKind::FM);
        CHECK(track_sequence(model, seq, {TrackFusion::AFNet, mode, true}).boxes == r.boxes);
    }
}

TEST_CASE("equal frame and event rates track once per frame") {
    auto scene = sim::make_scenario(ScenarioKind::Plain, 4);
    scene.schedule = events::RateSchedule(240, 240);
    scene.duration = 100'000;
    const auto seq = sim::simulate_sequence(scene);
    const auto model = init_tracker(kToy, {8}, 2);
    const auto r = track_sequence(model, seq, {TrackFusion::AFNet, events::AccumulationMode::SinceLastIntensityFrame, false});
    REQUIRE(r.boxes.size() == seq.frames.size() - 1);
    for (std::size_t i = 0; i < r.boxes.size(); ++i) CHECK(r.boxes[i].t_us == seq.frame_times[i + 1]);
}

TEST_CASE("train config json") {
    auto cfg = short_config(9);
    cfg.optimizer = "adam";
    cfg.loss.beta = 0.0;
    const auto back = train_config_from_json(train_config_to_json(cfg));
    CHECK(train_config_to_json(back) == train_config_to_json(cfg));
    CHECK(back.net == kToy);
    CHECK(back.scenarios == cfg.scenarios);
    auto j = train_config_to_json(cfg);
    j["learning_rate"] = 0.1;
    CHECK_THROWS(train_config_from_json(j));
    CHECK_THROWS(train_config_from_json(nlohmann::json{{"epochs", 2}}));
    CHECK_NOTHROW(train_config_from_json(nlohmann::json{{"seed", 2}}));
}

TEST_CASE("training lowers the loss, is deterministic and round-trips through a checkpoint") {
    const auto cfg = short_config(11);
    const auto data = training_set(cfg);
    const auto a = train(cfg, data);
    REQUIRE(a.log.size() == 20);
    CHECK(a.log.back().loss < a.log.front().loss);
    for (const auto& e : a.log) CHECK(std::isfinite(e.loss));

    const auto b = train(cfg, data);
    const auto da = test::scratch_dir("ckpt_a");
    const auto db = test::scratch_dir("ckpt_b");
    save_checkpoint(da, a, cfg);
    save_checkpoint(db, b, cfg);
    for (const char* f : {"checkpoint.json", "params.bin", "loss_log.csv"}) CHECK(slurp(da / f) == slurp(db / f));
    CHECK(slurp(da / "loss_log.csv").rfind("epoch,loss,cls,bb\n", 0) == 0);

    const auto loaded = load_checkpoint(da);
    CHECK(loaded.net.params == a.model.net.params);
    CHECK(loaded.head == a.model.head);
    CHECK(loaded.net.norms.frame.running_mean == a.model.net.norms.frame.running_mean);
    const auto seq = data.front();
    const TrackOptions opt{TrackFusion::AFNet, events::AccumulationMode::SinceLastIntensityFrame, true};
    CHECK(track_sequence(loaded, seq, opt).boxes == track_sequence(a.model, seq, opt).boxes);
}
