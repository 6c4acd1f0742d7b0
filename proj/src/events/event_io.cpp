#include <stdexcept>
#include <string>

#include "evtrack/events.hpp"
#include "evtrack/io_util.hpp"

namespace evtrack::events {

namespace {

constexpr std::string_view kHeader = "t_us,x,y,p";

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

EventStream load_event_stream(const std::filesystem::path& path, int sensor_width, int sensor_height,
                              Micros t_begin, Micros t_end) {
    const std::string text = read_file(path);
    EventStream stream;
    stream.sensor_width = sensor_width;
    stream.sensor_height = sensor_height;
    stream.t_begin = t_begin;
    stream.t_end = t_end;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
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
        if (!header_seen) {
            if (line != kHeader) {
                fail(path, line_no, "expected header '" + std::string(kHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            fail(path, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        }
        std::int64_t t = 0, x = 0, y = 0, p = 0;
        if (!parse_int64(fields[0], t) || !parse_int64(fields[1], x) || !parse_int64(fields[2], y) ||
            !parse_int64(fields[3], p)) {
            fail(path, line_no, "malformed integer field");
        }
        if (p != 1 && p != -1) {
            fail(path, line_no, "polarity must be -1 or 1, got " + std::to_string(p));
        }
        if (x < 0 || x >= sensor_width || y < 0 || y >= sensor_height) {
            fail(path, line_no, "pixel (" + std::to_string(x) + "," + std::to_string(y) + ") outside sensor");
        }
        if (t < t_begin || t > t_end) {
            fail(path, line_no, "timestamp outside [" + std::to_string(t_begin) + ", " + std::to_string(t_end) + "]");
        }
        if (!stream.events.empty() && t < stream.events.back().t) {
            fail(path, line_no, "timestamps must be nondecreasing");
        }
        stream.events.push_back(
            {t, static_cast<std::int32_t>(x), static_cast<std::int32_t>(y), static_cast<std::int8_t>(p)});
    }
    if (!header_seen) {
        fail(path, 1, "missing header");
    }
    return stream;
}

void save_event_stream(const EventStream& stream, const std::filesystem::path& path) {
    validate_stream(stream);
    std::string out;
    out.reserve(16 + stream.events.size() * 20);
    out += kHeader;
    out += '\n';
    for (const Event& e : stream.events) {
        out += std::to_string(e.t);
        out += ',';
        out += std::to_string(e.x);
        out += ',';
        out += std::to_string(e.y);
        out += ',';
        out += std::to_string(static_cast<int>(e.p));
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace evtrack::events
