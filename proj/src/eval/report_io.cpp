#include <string>

#include "evtrack/eval.hpp"
#include "evtrack/io_util.hpp"

namespace evtrack::eval {

nlohmann::json summary_to_json(const Summary& s) {
    return {{"rsr", s.rsr},
            {"rpr", s.rpr},
            {"op50", s.op50},
            {"op75", s.op75},
            {"frames", s.curves.frames},
            {"success_curve", s.curves.success},
            {"precision_curve", s.curves.precision}};
}

Summary summary_from_json(const nlohmann::json& j) {
    Summary s;
    s.rsr = j.at("rsr").get<double>();
    s.rpr = j.at("rpr").get<double>();
    s.op50 = j.at("op50").get<double>();
    s.op75 = j.at("op75").get<double>();
    s.curves.frames = j.value("frames", std::size_t{0});
    s.curves.success = j.at("success_curve").get<std::vector<double>>();
    s.curves.precision = j.at("precision_curve").get<std::vector<double>>();
    return s;
}

nlohmann::json report_to_json(const MetricsReport& report, const std::string& label) {
    nlohmann::json j;
    j["label"] = label;
    j["rpr_threshold_px"] = report.rpr_threshold;
    j["sequences"] = report.sequences;
    j["overall"] = summary_to_json(report.overall);
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [kind, s] : report.attributes) {
        attrs[to_string(kind)] = summary_to_json(s);
    }
    j["attributes"] = attrs;
    return j;
}

void write_report(const std::filesystem::path& dir, const MetricsReport& report, const std::string& label) {
    write_file_atomic(dir / "metrics.json", report_to_json(report, label).dump(2) + "\n");
    std::string success = "threshold,value\n";
    for (int k = 0; k < kSuccessSamples; ++k) {
        success += format_double(success_threshold(k)) + "," + format_double(report.overall.curves.success[k]) + "\n";
    }
    std::string precision = "threshold,value\n";
    for (int d = 0; d < kPrecisionSamples; ++d) {
        precision += std::to_string(d) + "," + format_double(report.overall.curves.precision[d]) + "\n";
    }
    write_file_atomic(dir / "success.csv", success);
    write_file_atomic(dir / "precision.csv", precision);
}

}  // namespace evtrack::eval
