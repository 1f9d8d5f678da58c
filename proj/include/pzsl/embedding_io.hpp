#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "pzsl/array.hpp"
#include "pzsl/error.hpp"
#include "pzsl/rng.hpp"

namespace pzsl {

inline constexpr std::array<char, 8> kEmbeddingMagic{'P', 'Z', 'S', 'L', 'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 16;
inline constexpr int kManifestVersion = 1;
inline constexpr const char* kDefaultPromptTemplate = "A photo of a {}.";

/// Seen classes come first (Q of them), unseen after; K = Q + |unseen|.
struct ClassVocabulary {
    std::vector<std::string> seen;
    std::vector<std::string> unseen;
    std::string prompt_template = kDefaultPromptTemplate;

    std::size_t num_seen() const noexcept { return seen.size(); }
    std::size_t num_classes() const noexcept { return seen.size() + unseen.size(); }
    bool is_seen(std::size_t class_index) const noexcept { return class_index < seen.size(); }

    const std::string& name(std::size_t class_index) const {
        return class_index < seen.size() ? seen.at(class_index) : unseen.at(class_index - seen.size());
    }

    std::vector<std::string> all() const {
        std::vector<std::string> out = seen;
        out.insert(out.end(), unseen.begin(), unseen.end());
        return out;
    }

    void validate() const {
        std::unordered_set<std::string> names(seen.begin(), seen.end());
        if (names.size() != seen.size()) {
            throw DataError("vocabulary: duplicate seen class name");
        }
        for (const auto& u : unseen) {
            if (!names.insert(u).second) {
                throw DataError("vocabulary: class '" + u + "' is both seen and unseen or duplicated");
            }
        }
    }
};

/// One caption per class, seen then unseen, with the first "{}" replaced by the class name.
inline std::vector<std::string> build_prompts(const ClassVocabulary& vocab) {
    const auto pos = vocab.prompt_template.find("{}");
    if (pos == std::string::npos) {
        throw ParameterError("prompt template has no {} placeholder");
    }
    std::vector<std::string> out;
    for (const auto& name : vocab.all()) {
        if (name.empty()) {
            throw ParameterError("build_prompts: empty class name");
        }
        std::string caption = vocab.prompt_template;
        caption.replace(pos, 2, name);
        out.push_back(std::move(caption));
    }
    return out;
}

/// count x dim embedding rows plus one identifier per row.
struct EmbeddingStore {
    Array<float> data;
    std::vector<std::string> ids;
    ClassVocabulary vocabulary;  // carried in the manifest

    std::size_t count() const noexcept { return data.rows(); }
    std::size_t dim() const noexcept { return data.cols(); }

    void validate() const {
        if (ids.size() != count()) {
            throw DataError("embedding store: " + std::to_string(ids.size()) + " ids for " +
                            std::to_string(count()) + " rows");
        }
        std::unordered_set<std::string> seen_ids;
        for (const auto& id : ids) {
            if (!seen_ids.insert(id).second) {
                throw DataError("embedding store: duplicate id '" + id + "'");
            }
        }
    }
};

/// "dir/name.pzslemb" -> "dir/name.manifest.json"
inline std::filesystem::path manifest_path_for(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p.replace_extension(".manifest.json");
    return p;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

inline std::uint32_t get_u32(const std::string& in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("short write to " + path.string());
    }
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_file(path, j.dump(2) + "\n");
}

} // namespace detail

/// Little-endian f32 payload, row-major.
inline std::string encode_f32(std::span<const float> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (float v : values) {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline std::vector<float> decode_f32(const std::string& bytes, std::size_t offset, std::size_t count) {
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::bit_cast<float>(detail::get_u32(bytes, offset + 4 * i));
    }
    return out;
}

/// Writes the binary matrix and its sibling manifest.
inline void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
    store.validate();
    std::string bytes(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
    detail::put_u32(bytes, static_cast<std::uint32_t>(store.count()));
    detail::put_u32(bytes, static_cast<std::uint32_t>(store.dim()));
    bytes += encode_f32(store.data.span());
    detail::write_file(path, bytes);

    nlohmann::json manifest = {
        {"version", kManifestVersion},
        {"ids", store.ids},
        {"seen", store.vocabulary.seen},
        {"unseen", store.vocabulary.unseen},
        {"dim", store.dim()},
        {"count", store.count()},
    };
    detail::write_json(manifest_path_for(path), manifest);
}

struct LoadOptions {
    bool normalize = true;  // L2-normalize rows after reading
};

inline EmbeddingStore load_embeddings(const std::filesystem::path& path, LoadOptions options = {}) {
    const std::string bytes = detail::read_file(path);
    const std::string where = path.string() + ": ";
    if (bytes.size() < kEmbeddingMagic.size()) {
        throw FormatError(where + "truncated header at byte offset " + std::to_string(bytes.size()));
    }
    if (!std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin())) {
        throw FormatError(where + "bad magic at byte offset 0");
    }
    if (bytes.size() < kEmbeddingHeaderBytes) {
        throw FormatError(where + "truncated header at byte offset " + std::to_string(bytes.size()));
    }
    const std::uint32_t count = detail::get_u32(bytes, 8);
    const std::uint32_t dim = detail::get_u32(bytes, 12);
    const std::size_t expected = kEmbeddingHeaderBytes + std::size_t{4} * count * dim;
    if (bytes.size() < expected) {
        throw FormatError(where + "truncated payload: need " + std::to_string(expected) + " bytes, file ends at byte offset " +
                          std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        throw FormatError(where + "trailing data after payload at byte offset " + std::to_string(expected));
    }

    const auto manifest = detail::read_json(manifest_path_for(path));
    EmbeddingStore store;
    try {
        if (manifest.at("version").get<int>() != kManifestVersion) {
            throw FormatError(where + "unsupported manifest version");
        }
        if (manifest.at("count").get<std::size_t>() != count) {
            throw FormatError(where + "manifest count " + manifest.at("count").dump() + " disagrees with header count " +
                              std::to_string(count) + " at byte offset 8");
        }
        if (manifest.at("dim").get<std::size_t>() != dim) {
            throw FormatError(where + "manifest dim " + manifest.at("dim").dump() + " disagrees with header dim " +
                              std::to_string(dim) + " at byte offset 12");
        }
        store.ids = manifest.at("ids").get<std::vector<std::string>>();
        store.vocabulary.seen = manifest.at("seen").get<std::vector<std::string>>();
        store.vocabulary.unseen = manifest.at("unseen").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + "malformed manifest: " + e.what());
    }
    if (store.ids.size() != count) {
        throw FormatError(where + "consistency error: manifest lists " + std::to_string(store.ids.size()) +
                          " ids but header count at byte offset 8 is " + std::to_string(count));
    }
    store.data = Array<float>({count, dim}, decode_f32(bytes, kEmbeddingHeaderBytes, std::size_t{count} * dim));
    try {
        store.validate();
        store.vocabulary.validate();
    } catch (const DataError& e) {
        throw FormatError(where + e.what());
    }
    if (!store.data.all_finite()) {
        throw FormatError(where + "non-finite value in payload");
    }
    if (options.normalize) {
        normalize_rows(store.data);
    }
    return store;
}

/// Output of synth_embeddings: instances for every class plus the class prototypes.
struct SyntheticEmbeddings {
    EmbeddingStore instances;
    EmbeddingStore labels;
    std::vector<std::size_t> truth;  // generating class of each instance row
};

/// One unit-norm prototype per row, uniform on the sphere.
inline Array<float> synth_prototypes(std::size_t classes, std::size_t dim, Rng& rng) {
    Array<float> protos = Array<float>::matrix(classes, dim);
    for (float& v : protos.data()) {
        v = static_cast<float>(rng.normal(0.0, 1.0));
    }
    normalize_rows(protos);
    return protos;
}

/// normalize(prototype + N(0, sigma^2) per coordinate), n_per_class rows for each listed class.
inline Array<float> synth_instances(const Array<float>& prototypes, std::span<const std::size_t> classes,
                                    std::size_t n_per_class, double noise_sigma, Rng& rng,
                                    std::vector<std::size_t>& truth) {
    const std::size_t dim = prototypes.cols();
    Array<float> out = Array<float>::matrix(classes.size() * n_per_class, dim);
    std::size_t row = 0;
    for (std::size_t c : classes) {
        for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
            auto dst = out.row(row);
            auto proto = prototypes.row(c);
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] = proto[j] + (noise_sigma > 0 ? static_cast<float>(rng.normal(0.0, noise_sigma)) : 0.0f);
            }
            truth.push_back(c);
        }
    }
    normalize_rows(out);
    return out;
}

inline std::vector<std::string> make_ids(const std::string& prefix, std::size_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%06zu", i);
        ids.push_back(prefix + buf);
    }
    return ids;
}

/// Synthetic stand-in for an image/text encoder pair: sphere prototypes as label
/// embeddings and noisy normalized copies as instances, n_per_class for every class.
inline SyntheticEmbeddings synth_embeddings(const ClassVocabulary& vocab, std::size_t n_per_class, std::size_t dim,
                                            double noise_sigma, std::uint64_t seed) {
    if (dim < 2) {
        throw ParameterError("synth_embeddings: dim must be >= 2");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ParameterError("synth_embeddings: noise_sigma must be >= 0");
    }
    vocab.validate();
    Rng root(seed);
    Rng proto_rng = root.split(1);
    Rng inst_rng = root.split(2);

    SyntheticEmbeddings out;
    out.labels.data = synth_prototypes(vocab.num_classes(), dim, proto_rng);
    out.labels.ids = vocab.all();
    out.labels.vocabulary = vocab;

    std::vector<std::size_t> classes(vocab.num_classes());
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    out.instances.data = synth_instances(out.labels.data, classes, n_per_class, noise_sigma, inst_rng, out.truth);
    out.instances.ids = make_ids("inst_", out.instances.data.rows());
    out.instances.vocabulary = vocab;
    return out;
}

} // namespace pzsl
