#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pzsl/array.hpp"
#include "pzsl/embedding_io.hpp"
#include "pzsl/rng.hpp"

namespace pzsl {

/// Training instances with candidate label sets over the Q seen classes.
struct PartialDataset {
    std::vector<std::string> instance_ids;
    Array<std::uint8_t> candidate_mask;     // N x Q, 1 where the label is a candidate
    std::vector<std::size_t> hidden_truth;  // evaluation only; never read by the trainer's loss path
    double q = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return candidate_mask.rows(); }
    std::size_t num_classes() const noexcept { return candidate_mask.cols(); }

    std::vector<std::size_t> candidates(std::size_t i) const {
        std::vector<std::size_t> out;
        auto row = candidate_mask.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j]) {
                out.push_back(j);
            }
        }
        return out;
    }

    /// Every row nonempty; the hidden truth, when present, is always a candidate.
    void validate() const {
        for (std::size_t i = 0; i < size(); ++i) {
            auto row = candidate_mask.row(i);
            if (std::find(row.begin(), row.end(), std::uint8_t{1}) == row.end()) {
                throw DataError("instance " + std::to_string(i) + " has an empty candidate set");
            }
        }
        if (!hidden_truth.empty()) {
            if (hidden_truth.size() != size()) {
                throw DataError("truth length " + std::to_string(hidden_truth.size()) + " does not match " +
                                std::to_string(size()) + " instances");
            }
            for (std::size_t i = 0; i < size(); ++i) {
                if (hidden_truth[i] >= num_classes() || !candidate_mask(i, hidden_truth[i])) {
                    throw DataError("instance " + std::to_string(i) + ": true label is not a candidate");
                }
            }
        }
    }
};

/// Each of the Q-1 non-true labels joins the candidate set independently with probability q.
inline PartialDataset synthesize_candidates(std::span<const std::size_t> truth, std::size_t num_seen, double q,
                                            std::uint64_t seed) {
    if (!(q >= 0.0 && q <= 1.0)) {
        throw ParameterError("synthesize_candidates: q must lie in [0, 1], got " + std::to_string(q));
    }
    PartialDataset ds;
    ds.q = q;
    ds.seed = seed;
    ds.hidden_truth.assign(truth.begin(), truth.end());
    ds.candidate_mask = Array<std::uint8_t>::matrix(truth.size(), num_seen);
    Rng rng = Rng(seed).split(3);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_seen) {
            throw ParameterError("synthesize_candidates: truth index " + std::to_string(truth[i]) +
                                 " is not a seen class (Q=" + std::to_string(num_seen) + ")");
        }
        for (std::size_t j = 0; j < num_seen; ++j) {
            ds.candidate_mask(i, j) = j == truth[i] ? 1 : static_cast<std::uint8_t>(rng.bernoulli(q));
        }
    }
    ds.instance_ids = make_ids("inst_", truth.size());
    return ds;
}

struct CandidateStats {
    double mean_size = 0.0;
    std::size_t min_size = 0;
    std::size_t max_size = 0;
    double ambiguity_rate = 0.0;  // fraction of rows with more than one candidate
};

inline CandidateStats candidate_stats(const PartialDataset& ds) {
    CandidateStats s;
    if (ds.size() == 0) {
        return s;
    }
    s.min_size = ds.num_classes();
    std::size_t total = 0, ambiguous = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.candidate_mask.row(i);
        const auto n = static_cast<std::size_t>(std::count(row.begin(), row.end(), std::uint8_t{1}));
        total += n;
        ambiguous += n > 1;
        s.min_size = std::min(s.min_size, n);
        s.max_size = std::max(s.max_size, n);
    }
    s.mean_size = static_cast<double>(total) / static_cast<double>(ds.size());
    s.ambiguity_rate = static_cast<double>(ambiguous) / static_cast<double>(ds.size());
    return s;
}

/// {q, seed, rows: [[class indices]]}
inline void save_candidates(const PartialDataset& ds, const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        rows.push_back(ds.candidates(i));
    }
    detail::write_json(path, {{"q", ds.q}, {"seed", ds.seed}, {"rows", std::move(rows)}});
}

inline PartialDataset load_candidates(const std::filesystem::path& path, std::size_t num_seen) {
    const auto j = detail::read_json(path);
    PartialDataset ds;
    try {
        ds.q = j.at("q").get<double>();
        ds.seed = j.at("seed").get<std::uint64_t>();
        const auto& rows = j.at("rows");
        ds.candidate_mask = Array<std::uint8_t>::matrix(rows.size(), num_seen);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (auto c : rows[i].get<std::vector<std::size_t>>()) {
                if (c >= num_seen) {
                    throw FormatError(path.string() + ": row " + std::to_string(i) + " names class " +
                                      std::to_string(c) + " outside the " + std::to_string(num_seen) + " seen classes");
                }
                ds.candidate_mask(i, c) = 1;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    ds.instance_ids = make_ids("inst_", ds.size());
    return ds;
}

/// {version, truth: [class index over seen-then-unseen]}
inline void save_truth(std::span<const std::size_t> truth, const std::filesystem::path& path) {
    detail::write_json(path, {{"version", kManifestVersion}, {"truth", std::vector<std::size_t>(truth.begin(), truth.end())}});
}

inline std::vector<std::size_t> load_truth(const std::filesystem::path& path) {
    const auto j = detail::read_json(path);
    try {
        return j.at("truth").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace pzsl
