#include "evtrack/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "evtrack/io_util.hpp"

namespace evtrack {

namespace {

static_assert(sizeof(double) == 8);

void put_le(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
}

double get_le(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

std::size_t element_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor shape has a non-positive dimension");
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

std::string encode_tensor_blob(const std::vector<const Tensor*>& tensors) {
    std::string out;
    for (const Tensor* t : tensors) {
        out.reserve(out.size() + t->size() * 8);
        for (double v : t->values()) {
            put_le(out, v);
        }
    }
    return out;
}

std::vector<Tensor> decode_tensor_blob(std::string_view bytes, const std::vector<std::vector<int>>& shapes) {
    std::size_t expected = 0;
    for (const auto& s : shapes) {
        expected += element_count(s) * 8;
    }
    if (bytes.size() != expected) {
        throw std::runtime_error("tensor blob holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(expected));
    }
    std::vector<Tensor> out;
    std::size_t pos = 0;
    for (const auto& s : shapes) {
        std::vector<double> data(element_count(s));
        for (double& v : data) {
            v = get_le(bytes.data() + pos);
            pos += 8;
        }
        out.emplace_back(s, std::move(data));
    }
    return out;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["shape"] = t.shape();
    meta["dtype"] = "float64";
    meta["endian"] = "little";
    write_file_atomic(path, encode_tensor_blob({&t}));
    auto sidecar = path;
    sidecar += ".json";
    write_file_atomic(sidecar, meta.dump(2) + "\n");
}

Tensor load_tensor(const std::filesystem::path& path) {
    auto sidecar = path;
    sidecar += ".json";
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(sidecar.string() + ": " + e.what());
    }
    if (!meta.contains("shape") || !meta["shape"].is_array()) {
        throw std::runtime_error(sidecar.string() + ": missing shape array");
    }
    auto shape = meta["shape"].get<std::vector<int>>();
    return std::move(decode_tensor_blob(read_file(path), {shape}).front());
}

}  // namespace evtrack
