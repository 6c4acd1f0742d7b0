#include "evtrack/checkpoint.hpp"

#include <stdexcept>

#include "evtrack/io_util.hpp"
#include "evtrack/tensor_io.hpp"

namespace evtrack {

void write_checkpoint(const std::filesystem::path& dir, nlohmann::json meta, const ParamStore& tensors) {
    nlohmann::json list = nlohmann::json::array();
    std::vector<const Tensor*> ptrs;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        list.push_back({{"name", tensors.names()[i]}, {"shape", tensors.values()[i].shape()}});
        ptrs.push_back(&tensors.values()[i]);
    }
    meta["tensors"] = list;
    meta["blob"] = "params.bin";
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "params.bin", encode_tensor_blob(ptrs));
    write_file_atomic(dir / "checkpoint.json", meta.dump(2) + "\n");
}

ParamStore read_checkpoint(const std::filesystem::path& dir, nlohmann::json& meta) {
    const auto manifest = dir / "checkpoint.json";
    try {
        meta = nlohmann::json::parse(read_file(manifest));
        std::vector<std::string> names;
        std::vector<std::vector<int>> shapes;
        for (const auto& entry : meta.at("tensors")) {
            names.push_back(entry.at("name").get<std::string>());
            shapes.push_back(entry.at("shape").get<std::vector<int>>());
        }
        auto tensors = decode_tensor_blob(read_file(dir / meta.value("blob", "params.bin")), shapes);
        ParamStore store;
        for (std::size_t i = 0; i < names.size(); ++i) {
            store.add(names[i], std::move(tensors[i]));
        }
        return store;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(manifest.string() + ": " + e.what());
    }
}

namespace afnet {

nlohmann::json config_to_json(const AFNetConfig& c) {
    return {{"channels", c.channels}, {"stem1", c.stem1},   {"stem2", c.stem2},
            {"reduction", c.reduction}, {"kernel", c.kernel}};
}

AFNetConfig config_from_json(const nlohmann::json& j) {
    AFNetConfig c;
    c.channels = j.value("channels", c.channels);
    c.stem1 = j.value("stem1", c.stem1);
    c.stem2 = j.value("stem2", c.stem2);
    c.reduction = j.value("reduction", c.reduction);
    c.kernel = j.value("kernel", c.kernel);
    validate_config(c);
    return c;
}

void export_model(const AFNetModel& model, ParamStore& out) {
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        out.add(model.params.names()[i], model.params.values()[i]);
    }
    out.add("bn.frame.running_mean", model.norms.frame.running_mean);
    out.add("bn.frame.running_var", model.norms.frame.running_var);
    out.add("bn.event.running_mean", model.norms.event.running_mean);
    out.add("bn.event.running_var", model.norms.event.running_var);
}

AFNetModel import_model(const AFNetConfig& config, const ParamStore& tensors) {
    AFNetModel model = init_afnet(config, 0);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto& name = model.params.names()[i];
        const Tensor& t = tensors.get(name);
        if (!t.same_shape(model.params.values()[i])) {
            throw std::runtime_error("checkpoint tensor " + name + " has shape " + t.shape_string() + ", expected " +
                                     model.params.values()[i].shape_string());
        }
        model.params.values()[i] = t;
    }
    model.norms.frame.running_mean = tensors.get("bn.frame.running_mean");
    model.norms.frame.running_var = tensors.get("bn.frame.running_var");
    model.norms.event.running_mean = tensors.get("bn.event.running_mean");
    model.norms.event.running_var = tensors.get("bn.event.running_var");
    return model;
}

}  // namespace afnet

}  // namespace evtrack
