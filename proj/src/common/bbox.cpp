#include "evtrack/bbox.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

namespace evtrack {

const char* to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::HDR: return "HDR";
        case ScenarioKind::LL: return "LL";
        case ScenarioKind::FM: return "FM";
        case ScenarioKind::NM: return "NM";
        case ScenarioKind::SBM: return "SBM";
        case ScenarioKind::Plain: return "Plain";
    }
    return "?";
}

ScenarioKind parse_scenario_kind(const char* text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto kind : kAllScenarioKinds) {
        std::string name = to_string(kind);
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (name == lower) {
            return kind;
        }
    }
    throw std::invalid_argument("unknown scenario kind '" + std::string(text) +
                                "' (expected hdr|ll|fm|nm|sbm|plain)");
}

}  // namespace evtrack

#include "evtrack/io_util.hpp"

namespace evtrack {

std::vector<TimedBox> load_boxes_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<TimedBox> boxes;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) {
            eol = text.size();
        }
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line_no == 1) {
            if (line != "t_us,x,y,w,h") {
                throw std::runtime_error(path.string() + ":1: expected header 't_us,x,y,w,h'");
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_csv_line(line);
        TimedBox row;
        if (fields.size() != 5 || !parse_int64(fields[0], row.t_us) || !parse_double(fields[1], row.box.x) ||
            !parse_double(fields[2], row.box.y) || !parse_double(fields[3], row.box.w) ||
            !parse_double(fields[4], row.box.h)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed box row");
        }
        boxes.push_back(row);
    }
    if (line_no == 0) {
        throw std::runtime_error(path.string() + ": missing header");
    }
    return boxes;
}

void save_boxes_csv(const std::vector<TimedBox>& boxes, const std::filesystem::path& path) {
    std::string out = "t_us,x,y,w,h\n";
    for (const auto& row : boxes) {
        out += std::to_string(row.t_us);
        for (double v : {row.box.x, row.box.y, row.box.w, row.box.h}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace evtrack
