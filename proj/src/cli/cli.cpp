#include "evtrack/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "evtrack/afnet.hpp"
#include "evtrack/eval.hpp"
#include "evtrack/gradcheck.hpp"
#include "evtrack/io_util.hpp"
#include "evtrack/simulator.hpp"
#include "evtrack/tracker.hpp"

namespace evtrack {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_dir(const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) {
        throw UsageError(std::string(what) + " " + p.string() + " is not a directory");
    }
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) {
        throw UsageError(std::string(what) + " " + p.string() + " does not exist");
    }
}

events::AccumulationMode parse_mode(const std::string& s) { return events::parse_accumulation_mode(s.c_str()); }

int cmd_simulate(const std::string& scenario, std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
    const auto kind = parse_scenario_kind(scenario.c_str());
    const Sequence seq = sim::simulate_sequence(sim::make_scenario(kind, seed));
    save_sequence(seq, out_dir);
    out << "simulated " << to_string(kind) << " seed " << seed << ": " << seq.frames.size() << " frames, "
        << seq.events.events.size() << " events, " << seq.ground_truth.size() << " boxes -> " << out_dir.string()
        << "\n";
    return 0;
}

int cmd_aggregate(const fs::path& in_dir, const std::string& mode_text, int gamma_e, fs::path out_dir,
                  std::ostream& out) {
    require_dir(in_dir, "input");
    const auto mode = parse_mode(mode_text);
    const Sequence seq = load_sequence(in_dir);
    const events::RateSchedule schedule(seq.schedule.gamma_f(), gamma_e > 0 ? gamma_e : seq.schedule.gamma_e());
    if (out_dir.empty()) {
        out_dir = in_dir / (std::string("event_frames_") + events::to_string(mode) + "_" + std::to_string(schedule.gamma_e()));
    }
    std::string index = "index,t_us,frame_index,n,t_start_us,t_end_us,file\n";
    int k = 0;
    for (std::size_t f = 0; f + 1 < seq.frame_times.size(); ++f) {
        for (int n = 1; n <= schedule.ratio(); ++n) {
            const auto [start, end] = events::accumulation_window(schedule, seq.frame_times[f], n, mode);
            const auto frame = events::aggregate_events(seq.events, start, end, mode);
            char name[32];
            std::snprintf(name, sizeof(name), "%04d.pgm", k);
            save_pgm({frame.width, frame.height, frame.pixels}, out_dir / name);
            index += std::to_string(k) + "," + std::to_string(seq.frame_times[f] + schedule.event_offset(n)) + "," +
                     std::to_string(f) + "," + std::to_string(n) + "," + std::to_string(start) + "," +
                     std::to_string(end) + "," + name + "\n";
            ++k;
        }
    }
    write_file_atomic(out_dir / "index.csv", index);
    out << "wrote " << k << " event frames (mode " << events::to_string(mode) << ", gamma_e " << schedule.gamma_e()
        << ") -> " << out_dir.string() << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& op, int seeds, const fs::path& json_out, std::ostream& out) {
    std::vector<GradCheckCase> cases = tensor_gradcheck_cases();
    for (auto& c : afnet::afnet_gradcheck_cases()) cases.push_back(std::move(c));
    for (auto& c : tracker::tracker_gradcheck_cases()) cases.push_back(std::move(c));
    if (!op.empty()) {
        std::erase_if(cases, [&](const GradCheckCase& c) { return c.name != op; });
        if (cases.empty()) {
            throw UsageError("no gradient-check case named '" + op + "'");
        }
    }
    if (seeds < 1) {
        throw UsageError("--seeds must be positive");
    }
    bool all_ok = true;
    nlohmann::json report = nlohmann::json::array();
    out << std::left << std::setw(28) << "op" << std::setw(14) << "max_rel_err" << std::setw(8) << "probes"
        << std::setw(9) << "skipped" << "status\n";
    for (const auto& c : cases) {
        double worst = 0.0;
        int probes = 0, skipped = 0;
        bool ok = true;
        for (int s = 1; s <= seeds; ++s) {
            const auto r = run_case(c, static_cast<std::uint64_t>(s));
            worst = std::max(worst, r.finite ? r.max_rel_error : INFINITY);
            probes += r.probes;
            skipped += r.skipped;
            ok = ok && r.passed;
        }
        all_ok = all_ok && ok;
        std::ostringstream err;
        err << std::scientific << std::setprecision(2) << worst;
        out << std::left << std::setw(28) << c.name << std::setw(14) << err.str() << std::setw(8) << probes
            << std::setw(9) << skipped << (ok ? "ok" : "FAIL") << "\n";
        report.push_back({{"op", c.name}, {"max_rel_error", worst}, {"probes", probes}, {"skipped", skipped},
                          {"seeds", seeds}, {"passed", ok}});
    }
    if (!json_out.empty()) {
        write_file_atomic(json_out, report.dump(2) + "\n");
    }
    if (!all_ok) {
        throw std::runtime_error("gradient check failed");
    }
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& ckpt, std::ostream& out) {
    require_file(config_path, "config");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(config_path.string() + ": " + e.what());
    }
    const auto cfg = tracker::train_config_from_json(j);
    const auto result = tracker::train(cfg, [&](const tracker::EpochLog& e) {
        out << "epoch " << e.epoch << " loss " << e.loss << " cls " << e.cls << " bb " << e.bb << "\n";
    });
    tracker::save_checkpoint(ckpt, result, cfg);
    out << "checkpoint -> " << ckpt.string() << "\n";
    return 0;
}

int cmd_track(const fs::path& ckpt, const fs::path& in_dir, const std::string& fusion, const std::string& mode,
              bool no_refine, fs::path out_csv, std::ostream& out) {
    require_dir(ckpt, "checkpoint");
    require_dir(in_dir, "input");
    tracker::TrackOptions options;
    options.fusion = tracker::parse_track_fusion(fusion);
    options.mode = parse_mode(mode);
    options.refine = !no_refine;
    const auto model = tracker::load_checkpoint(ckpt);
    const Sequence seq = load_sequence(in_dir);
    const auto result = tracker::track_sequence(model, seq, options);
    if (out_csv.empty()) {
        out_csv = in_dir / ("track_" + fusion + "_" + events::to_string(options.mode) + ".csv");
    }
    save_boxes_csv(result.boxes, out_csv);
    out << "tracked " << result.boxes.size() << " timestamps -> " << out_csv.string() << "\n";
    return 0;
}

int cmd_evaluate(const fs::path& pred_path, const fs::path& gt_path, int rate, const fs::path& out_dir,
                 const std::string& label, const std::string& attribute, int threshold, std::ostream& out) {
    require_file(pred_path, "prediction");
    require_file(gt_path, "ground truth");
    eval::TrackResult pred{load_boxes_csv(pred_path), std::nullopt};
    eval::TrackResult gt{load_boxes_csv(gt_path), std::nullopt};
    if (!attribute.empty()) {
        pred.attribute = gt.attribute = parse_scenario_kind(attribute.c_str());
    }
    if (rate > 0) {
        std::vector<std::int64_t> times;
        for (const auto& b : gt.boxes) times.push_back(b.t_us);
        pred = eval::interpolate_boxes_linear(eval::subsample_at_rate(pred, rate), times);
    }
    const auto report = eval::attribute_breakdown({{pred, gt}}, threshold);
    eval::write_report(out_dir, report, label.empty() ? pred_path.stem().string() : label);
    out << std::fixed << std::setprecision(4) << "RSR " << report.overall.rsr << " RPR " << report.overall.rpr
        << " OP50 " << report.overall.op50 << " OP75 " << report.overall.op75 << " -> " << out_dir.string() << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const fs::path& out_dir, std::ostream& out) {
    nlohmann::json table = nlohmann::json::array();
    std::string csv = "label,attribute,frames,rsr,rpr,op50,op75\n";
    for (const auto& run : runs) {
        const fs::path file = fs::is_directory(run) ? fs::path(run) / "metrics.json" : fs::path(run);
        require_file(file, "report");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(file.string() + ": " + e.what());
        }
        const std::string label = j.value("label", file.parent_path().filename().string());
        auto row = [&](const std::string& attr, const nlohmann::json& s) {
            const auto sum = eval::summary_from_json(s);
            csv += label + "," + attr + "," + std::to_string(sum.curves.frames) + "," + format_double(sum.rsr) + "," +
                   format_double(sum.rpr) + "," + format_double(sum.op50) + "," + format_double(sum.op75) + "\n";
            table.push_back({{"label", label}, {"attribute", attr}, {"frames", sum.curves.frames}, {"rsr", sum.rsr},
                             {"rpr", sum.rpr}, {"op50", sum.op50}, {"op75", sum.op75}});
            out << std::left << std::setw(32) << label << std::setw(8) << attr << std::fixed << std::setprecision(4)
                << " RSR " << sum.rsr << " RPR " << sum.rpr << "\n";
        };
        row("all", j.at("overall"));
        for (const auto& [attr, s] : j.at("attributes").items()) row(attr, s);
    }
    write_file_atomic(out_dir / "comparison.csv", csv);
    write_file_atomic(out_dir / "comparison.json", table.dump(2) + "\n");
    return 0;
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Frame and event fusion tracking toolkit", "evtrack"};
    app.set_version_flag("--version", std::string("evtrack ") + kVersion);
    app.require_subcommand(1);

    std::string scenario, mode = "b", fusion = "afnet", op, label, attribute;
    std::uint64_t seed = 0;
    int gamma_e = 0, seeds = 5, rate = 0, threshold = eval::kDefaultRprThreshold;
    fs::path out_path, in_dir, config, ckpt, pred, gt, json_out;
    bool no_refine = false;
    std::vector<std::string> runs;

    auto* simulate = app.add_subcommand("simulate", "Render a synthetic sequence");
    simulate->add_option("--scenario", scenario, "hdr|ll|fm|nm|sbm|plain")->required();
    simulate->add_option("--seed", seed, "Scenario seed")->required();
    simulate->add_option("--out", out_path, "Output directory")->required();

    auto* aggregate = app.add_subcommand("aggregate", "Write event frames for every event timestamp");
    aggregate->add_option("--in", in_dir, "Sequence directory")->required();
    aggregate->add_option("--mode", mode, "Accumulation start: a (last event frame) or b (last intensity frame)");
    aggregate->add_option("--gamma-e", gamma_e, "Event-frame rate in Hz (default: the manifest's)");
    aggregate->add_option("--out", out_path, "Output directory");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gradcheck->add_option("--op", op, "Run a single case");
    gradcheck->add_option("--seeds", seeds, "Seeds per case");
    gradcheck->add_option("--json", json_out, "Write the report as JSON");

    auto* train = app.add_subcommand("train", "Train the tracker");
    train->add_option("--config", config, "Training config JSON")->required();
    train->add_option("--out", ckpt, "Checkpoint directory")->required();

    auto* track = app.add_subcommand("track", "Track a sequence at the event-frame rate");
    track->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    track->add_option("--in", in_dir, "Sequence directory")->required();
    track->add_option("--fusion", fusion, "afnet|ef|mf|frame-only|event-only");
    track->add_option("--mode", mode, "a|b");
    track->add_option("--out", out_path, "Result CSV");
    track->add_flag("--no-refine", no_refine, "Skip IoU-based box refinement");

    auto* evaluate = app.add_subcommand("evaluate", "Score a track against ground truth");
    evaluate->add_option("--pred", pred, "Predicted boxes CSV")->required();
    evaluate->add_option("--gt", gt, "Ground-truth boxes CSV")->required();
    evaluate->add_option("--interpolate-from-rate", rate, "Subsample to this rate (Hz) and interpolate back");
    evaluate->add_option("--out", out_path, "Report directory")->required();
    evaluate->add_option("--label", label, "Run label");
    evaluate->add_option("--attribute", attribute, "Scenario tag of the sequence");
    evaluate->add_option("--rpr-threshold", threshold, "RPR pixel threshold (0..50)");

    auto* report = app.add_subcommand("report", "Merge metric reports into one table");
    report->add_option("--runs", runs, "Report directories or metrics.json files")->required();
    report->add_option("--out", out_path, "Output directory")->required();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*simulate) return cmd_simulate(scenario, seed, out_path, out);
        if (*aggregate) return cmd_aggregate(in_dir, mode, gamma_e, out_path, out);
        if (*gradcheck) return cmd_gradcheck(op, seeds, json_out, out);
        if (*train) return cmd_train(config, ckpt, out);
        if (*track) return cmd_track(ckpt, in_dir, fusion, mode, no_refine, out_path, out);
        if (*evaluate) return cmd_evaluate(pred, gt, rate, out_path, label, attribute, threshold, out);
        if (*report) return cmd_report(runs, out_path, out);
    } catch (const UsageError& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 1;
}

}  // namespace evtrack
