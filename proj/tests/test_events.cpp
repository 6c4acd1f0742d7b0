#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "evtrack/events.hpp"
#include "evtrack/io_util.hpp"
#include "evtrack/sequence.hpp"
#include "test_util.hpp"

using namespace evtrack;
using namespace evtrack::events;

namespace {

EventStream stream_of(std::vector<Event> evs, int w = 8, int h = 6, Micros t_end = 1000) {
    return {std::move(evs), w, h, 0, t_end};
}

}  // namespace

TEST_CASE("empty window aggregates to all 127") {
    auto f = aggregate_events(stream_of({}), 0, 100);
    for (auto p : f.pixels) CHECK(p == 127);
    CHECK(f.t_start == 0);
    CHECK(f.t_end == 100);
}

TEST_CASE("single positive event marks one pixel") {
    auto f = aggregate_events(stream_of({{5, 3, 2, 1}}), 0, 10);
    CHECK(f.at(3, 2) == 255);
    int others = 0;
    for (auto p : f.pixels) others += p == 127;
    CHECK(others == 8 * 6 - 1);
}

TEST_CASE("last event at a pixel wins") {
    auto f = aggregate_events(stream_of({{10, 1, 1, 1}, {20, 1, 1, -1}}), 0, 30);
    CHECK(f.at(1, 1) == 0);
    // Same timestamp: file order decides.
    auto g = aggregate_events(stream_of({{10, 1, 1, -1}, {10, 1, 1, 1}}), 0, 30);
    CHECK(g.at(1, 1) == 255);
}

TEST_CASE("windows are half-open") {
    auto s = stream_of({{10, 0, 0, 1}, {20, 1, 0, -1}});
    auto f = aggregate_events(s, 10, 20);
    CHECK(f.at(0, 0) == 255);
    CHECK(f.at(1, 0) == 127);
}

TEST_CASE("window outside the stream span names the span") {
    auto s = stream_of({}, 4, 4, 500);
    try {
        aggregate_events(s, 100, 600);
        FAIL("expected an error");
    } catch (const std::out_of_range& e) {
        CHECK(std::string(e.what()).find("[0, 500]") != std::string::npos);
    }
    CHECK_THROWS_AS(aggregate_events(s, 50, 50), std::invalid_argument);
}

TEST_CASE("pair_frame examples") {
    RateSchedule s(20, 240);
    std::vector<Micros> frames{0, 50000};
    CHECK(pair_frame(s, 37500, frames) == FramePairing{0, 9});
    CHECK(pair_frame(s, 50000, frames) == FramePairing{0, 12});
    CHECK(pair_frame(s, 4166, frames) == FramePairing{0, 1});
    CHECK(pair_frame(s, 54166, frames) == FramePairing{1, 1});
    CHECK_THROWS(pair_frame(s, 0, frames));
    CHECK_THROWS(pair_frame(s, 4167, frames));
    CHECK_THROWS(pair_frame(s, 20000, frames));

    RateSchedule same(240, 240);
    std::vector<Micros> dense;
    for (int k = 0; k < 10; ++k) dense.push_back(k * same.frame_period());
    for (int k = 1; k < 10; ++k) CHECK(pair_frame(same, dense[k], dense).n == 1);
}

TEST_CASE("rate schedule rejects non-multiples") {
    CHECK_THROWS_AS(RateSchedule(25, 240), std::invalid_argument);
    CHECK_THROWS_AS(RateSchedule(0, 240), std::invalid_argument);
    CHECK(RateSchedule(20, 240).ratio() == 12);
}

TEST_CASE("accumulation_window examples") {
    RateSchedule s(20, 240);
    CHECK(accumulation_window(s, 0, 3, AccumulationMode::SinceLastIntensityFrame) == std::pair<Micros, Micros>{0, 12500});
    CHECK(accumulation_window(s, 0, 3, AccumulationMode::SinceLastEventFrame) == std::pair<Micros, Micros>{8333, 12500});
    CHECK(accumulation_window(s, 700, 1, AccumulationMode::SinceLastEventFrame) ==
          accumulation_window(s, 700, 1, AccumulationMode::SinceLastIntensityFrame));
    CHECK_THROWS_AS(accumulation_window(s, 0, 0, AccumulationMode::SinceLastEventFrame), std::out_of_range);
    CHECK_THROWS_AS(accumulation_window(s, 0, 13, AccumulationMode::SinceLastIntensityFrame), std::out_of_range);
}

TEST_CASE("property: mode (a) windows partition the inter-frame interval") {
    for (int ge : {20, 60, 240, 1000}) {
        RateSchedule s(20, ge);
        const Micros i = 150000;
        Micros cursor = i;
        for (int n = 1; n <= s.ratio(); ++n) {
            auto [a, b] = accumulation_window(s, i, n, AccumulationMode::SinceLastEventFrame);
            CHECK(a == cursor);
            CHECK(b > a);
            cursor = b;
        }
        CHECK(cursor == i + s.frame_period());
    }
}

TEST_CASE("property: mode (b) frames keep pixels that receive no new events") {
    std::mt19937_64 rng(5);
    auto stream = test::random_stream(rng, 12, 9, 0, 50000, 400);
    RateSchedule s(20, 240);
    for (int n = 2; n <= s.ratio(); ++n) {
        auto [a0, b0] = accumulation_window(s, 0, n - 1, AccumulationMode::SinceLastIntensityFrame);
        auto [a1, b1] = accumulation_window(s, 0, n, AccumulationMode::SinceLastIntensityFrame);
        CHECK(a0 == a1);
        CHECK(b1 > b0);
        auto prev = aggregate_events(stream, a0, b0);
        auto next = aggregate_events(stream, a1, b1);
        std::set<std::pair<int, int>> touched;
        for (const auto& e : stream.events) {
            if (e.t >= b0 && e.t < b1) touched.insert({e.x, e.y});
        }
        for (int y = 0; y < 9; ++y) {
            for (int x = 0; x < 12; ++x) {
                if (prev.at(x, y) != 127 && !touched.count({x, y})) CHECK(next.at(x, y) == prev.at(x, y));
            }
        }
    }
}

TEST_CASE("property: pairing, windowing and aggregation are pure") {
    std::mt19937_64 rng(9);
    auto stream = test::random_stream(rng, 10, 10, 0, 100000, 300);
    RateSchedule s(20, 240);
    std::vector<Micros> frames{0, 50000, 100000};
    for (Micros t : {4166LL, 37500LL, 50000LL, 62500LL}) {
        auto p1 = pair_frame(s, t, frames);
        auto p2 = pair_frame(s, t, frames);
        CHECK(p1 == p2);
        auto w = accumulation_window(s, frames[p1.frame_index], p1.n, AccumulationMode::SinceLastEventFrame);
        CHECK(aggregate_events(stream, w.first, w.second).pixels == aggregate_events(stream, w.first, w.second).pixels);
    }
}

TEST_CASE("event CSV round trip and rejection") {
    auto dir = test::scratch_dir("events_io");
    EventStream s = stream_of({{0, 0, 0, 1}, {5, 7, 5, -1}, {5, 2, 3, 1}});
    save_event_stream(s, dir / "ev.csv");
    auto back = load_event_stream(dir / "ev.csv", 8, 6, 0, 1000);
    CHECK(back.events == s.events);
    CHECK(back.sensor_width == 8);

    write_file_atomic(dir / "bad.csv", "t_us,x,y,p\n0,1,1,2\n");
    CHECK_THROWS_WITH_AS(load_event_stream(dir / "bad.csv", 8, 6, 0, 1000), doctest::Contains("bad.csv:2"),
                         std::runtime_error);
    write_file_atomic(dir / "unsorted.csv", "t_us,x,y,p\n5,1,1,1\n3,1,1,1\n");
    CHECK_THROWS(load_event_stream(dir / "unsorted.csv", 8, 6, 0, 1000));
    write_file_atomic(dir / "oob.csv", "t_us,x,y,p\n5,8,1,1\n");
    CHECK_THROWS(load_event_stream(dir / "oob.csv", 8, 6, 0, 1000));
    write_file_atomic(dir / "junk.csv", "t_us,x,y,p\n5,1,x,1\n");
    CHECK_THROWS(load_event_stream(dir / "junk.csv", 8, 6, 0, 1000));
    write_file_atomic(dir / "header.csv", "t,x,y,p\n");
    CHECK_THROWS(load_event_stream(dir / "header.csv", 8, 6, 0, 1000));

    write_file_atomic(dir / "empty.csv", "t_us,x,y,p\n");
    CHECK(load_event_stream(dir / "empty.csv", 8, 6, 0, 1000).events.empty());
}

TEST_CASE("PGM round trip") {
    auto dir = test::scratch_dir("pgm");
    GrayImage img{3, 2, {0, 10, 20, 30, 40, 255}};
    save_pgm(img, dir / "a.pgm");
    CHECK(load_pgm(dir / "a.pgm") == img);
    write_file_atomic(dir / "b.pgm", "P5\n# comment\n3 2\n255\n" + std::string("\x01\x02\x03\x04\x05\x06", 6));
    CHECK(load_pgm(dir / "b.pgm").pixels[5] == 6);
    write_file_atomic(dir / "c.pgm", "P2\n3 2\n255\n");
    CHECK_THROWS(load_pgm(dir / "c.pgm"));
}
