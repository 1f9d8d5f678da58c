#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "pzsl/embedding_io.hpp"
#include "pzsl/model.hpp"

namespace pzsl {

struct Checkpoint {
    ModelParams<float> model;
    nlohmann::json config;
    std::size_t epoch = 0;
};

/// Directory with manifest.json plus one raw little-endian f32 blob per tensor.
inline void save_checkpoint(const std::filesystem::path& dir, const ModelParams<float>& model,
                            const nlohmann::json& config, std::size_t epoch) {
    std::filesystem::create_directories(dir);
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& p : model.named_parameters()) {
        const std::string file = p.name + ".f32";
        detail::write_file(dir / file, encode_f32(p.tensor.value().span()));
        tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"file", file}});
    }
    nlohmann::json manifest = {
        {"version", kManifestVersion},
        {"epoch", epoch},
        {"config", config},
        {"model",
         {{"layers", model.config.layers},
          {"mlp_hidden", model.hidden},
          {"heads", model.config.heads},
          {"num_seen", model.num_seen},
          {"num_classes", model.num_classes()},
          {"dim", model.dim}}},
        {"tensors", std::move(tensors)},
    };
    detail::write_json(dir / "manifest.json", manifest);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest = detail::read_json(dir / "manifest.json");
    Checkpoint ckpt;
    try {
        ckpt.epoch = manifest.at("epoch").get<std::size_t>();
        ckpt.config = manifest.at("config");
        const auto& m = manifest.at("model");
        ModelConfig mc;
        mc.layers = m.at("layers").get<std::size_t>();
        mc.mlp_hidden = m.at("mlp_hidden").get<std::size_t>();
        mc.heads = m.at("heads").get<std::size_t>();
        const auto k = m.at("num_classes").get<std::size_t>();
        const auto d = m.at("dim").get<std::size_t>();
        ckpt.model = init_model<float>(Array<float>::matrix(k, d), m.at("num_seen").get<std::size_t>(), mc, 0);

        std::map<std::string, std::pair<Shape, std::string>> stored;
        for (const auto& t : manifest.at("tensors")) {
            stored[t.at("name").get<std::string>()] = {t.at("shape").get<Shape>(), t.at("file").get<std::string>()};
        }
        std::vector<Tensor<float>> tensors;
        for (const auto& p : ckpt.model.named_parameters()) {
            auto it = stored.find(p.name);
            if (it == stored.end()) {
                throw FormatError(dir.string() + ": checkpoint is missing tensor " + p.name);
            }
            const auto& [shape, file] = it->second;
            if (shape != p.tensor.shape()) {
                throw FormatError(dir.string() + ": tensor " + p.name + " has shape " + to_string(shape) +
                                  ", expected " + to_string(p.tensor.shape()));
            }
            const std::string bytes = detail::read_file(dir / file);
            const std::size_t n = element_count(shape);
            if (bytes.size() != 4 * n) {
                throw FormatError(dir.string() + "/" + file + ": expected " + std::to_string(4 * n) +
                                  " bytes, payload ends at byte offset " + std::to_string(bytes.size()));
            }
            tensors.push_back(Tensor<float>::parameter(Array<float>(shape, decode_f32(bytes, 0, n))));
        }
        ckpt.model.assign(tensors);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(dir.string() + ": malformed checkpoint manifest: " + e.what());
    }
    return ckpt;
}

} // namespace pzsl
