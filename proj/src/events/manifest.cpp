#include <cstdio>
#include <stdexcept>

#include "evtrack/io_util.hpp"
#include "evtrack/sequence.hpp"
#include "json.hpp"

namespace evtrack {

using nlohmann::json;

std::vector<events::Micros> Sequence::event_timestamps() const {
    std::vector<events::Micros> stamps;
    for (std::size_t k = 0; k + 1 < frame_times.size(); ++k) {
        for (int n = 1; n <= schedule.ratio(); ++n) {
            stamps.push_back(frame_times[k] + schedule.event_offset(n));
        }
    }
    return stamps;
}

namespace {

std::string frame_name(std::size_t index) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "frames/%04zu.pgm", index);
    return buffer;
}

}  // namespace

void save_sequence(const Sequence& sequence, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "frames");
    json manifest;
    manifest["sensor_width"] = sequence.sensor_width;
    manifest["sensor_height"] = sequence.sensor_height;
    manifest["gamma_f"] = sequence.schedule.gamma_f();
    manifest["gamma_e"] = sequence.schedule.gamma_e();
    manifest["frame_times_us"] = sequence.frame_times;
    json frames = json::array();
    for (std::size_t k = 0; k < sequence.frames.size(); ++k) {
        frames.push_back(frame_name(k));
        save_pgm(sequence.frames[k], dir / frame_name(k));
    }
    manifest["frames"] = frames;
    manifest["events"] = "events.csv";
    manifest["t_begin_us"] = sequence.events.t_begin;
    manifest["t_end_us"] = sequence.events.t_end;
    manifest["ground_truth"] = "groundtruth.csv";
    const BBox& b = sequence.init_box;
    manifest["init_box"] = {b.x, b.y, b.w, b.h};
    if (sequence.attribute) {
        manifest["scenario"] = to_string(*sequence.attribute);
    }
    manifest["seed"] = sequence.seed;

    events::save_event_stream(sequence.events, dir / "events.csv");
    save_boxes_csv(sequence.ground_truth, dir / "groundtruth.csv");
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Sequence load_sequence(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
    }
    try {
        Sequence seq;
        seq.sensor_width = manifest.at("sensor_width").get<int>();
        seq.sensor_height = manifest.at("sensor_height").get<int>();
        seq.schedule = events::RateSchedule(manifest.at("gamma_f").get<int>(), manifest.at("gamma_e").get<int>());
        seq.frame_times = manifest.at("frame_times_us").get<std::vector<events::Micros>>();
        const auto frame_files = manifest.at("frames").get<std::vector<std::string>>();
        if (frame_files.size() != seq.frame_times.size()) {
            throw std::runtime_error("frames and frame_times_us differ in length");
        }
        for (const auto& name : frame_files) {
            GrayImage image = load_pgm(dir / name);
            if (image.width != seq.sensor_width || image.height != seq.sensor_height) {
                throw std::runtime_error(name + " does not match the sensor dimensions");
            }
            seq.frames.push_back(std::move(image));
        }
        seq.events = events::load_event_stream(dir / manifest.at("events").get<std::string>(), seq.sensor_width,
                                               seq.sensor_height, manifest.at("t_begin_us").get<events::Micros>(),
                                               manifest.at("t_end_us").get<events::Micros>());
        seq.ground_truth = load_boxes_csv(dir / manifest.at("ground_truth").get<std::string>());
        const auto box = manifest.at("init_box").get<std::vector<double>>();
        if (box.size() != 4) {
            throw std::runtime_error("init_box must have 4 entries");
        }
        seq.init_box = {box[0], box[1], box[2], box[3]};
        if (manifest.contains("scenario")) {
            seq.attribute = parse_scenario_kind(manifest["scenario"].get<std::string>().c_str());
        }
        seq.seed = manifest.value("seed", std::uint64_t{0});
        return seq;
    } catch (const json::exception& e) {
        throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
    }
}

}  // namespace evtrack
