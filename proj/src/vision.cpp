#include "rpgd/vision.hpp"

#include "rpgd/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace rpgd {

PatchGrid::PatchGrid(std::size_t n_patches, std::size_t dim, std::vector<double> data)
    : n_patches_(n_patches), dim_(dim), data_(std::move(data)) {
    if (n_patches_ == 0) throw RangeError("n_patches", "grid needs at least one patch");
    if (dim_ == 0) throw RangeError("dim", "patch dimension must be positive");
    if (data_.size() != n_patches_ * dim_) {
        throw LengthMismatch("patch grid data", data_.size(), n_patches_ * dim_);
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw RangeError("patches", "entries must be finite");
    }
}

std::span<const double> PatchGrid::patch(std::size_t i) const {
    if (i >= n_patches_) throw IndexOutOfRange("patch grid", static_cast<long long>(i), n_patches_);
    return {data_.data() + i * dim_, dim_};
}

std::string PatchGrid::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < n_patches_; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < dim_; ++j) row.push_back(data_[i * dim_ + j]);
        rows.push_back(std::move(row));
    }
    return rows.dump();
}

PatchGrid PatchGrid::from_json(const std::string &json_text) {
    nlohmann::json rows = nlohmann::json::parse(json_text);
    if (!rows.is_array() || rows.empty()) {
        throw FormatError("patch grid JSON must be a non-empty array of rows");
    }
    const std::size_t n = rows.size();
    if (!rows[0].is_array() || rows[0].empty()) {
        throw FormatError("patch grid rows must be non-empty arrays");
    }
    const std::size_t d = rows[0].size();
    std::vector<double> data;
    data.reserve(n * d);
    for (const auto &row : rows) {
        if (!row.is_array() || row.size() != d) {
            throw FormatError("patch grid rows must all have the same dimension");
        }
        for (const auto &v : row) data.push_back(v.get<double>());
    }
    return PatchGrid(n, d, std::move(data));
}

Permutation::Permutation(std::vector<std::uint32_t> mapping) : mapping_(std::move(mapping)) {
    std::vector<bool> seen(mapping_.size(), false);
    for (std::uint32_t v : mapping_) {
        if (v >= mapping_.size() || seen[v]) {
            throw RangeError("permutation", "mapping must be a bijection on [0, N)");
        }
        seen[v] = true;
    }
}

bool Permutation::is_identity() const {
    for (std::size_t i = 0; i < mapping_.size(); ++i) {
        if (mapping_[i] != i) return false;
    }
    return true;
}

Permutation permutation_from_seed(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw RangeError("n", "permutation size must be positive");
    std::vector<std::uint32_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint32_t>(i);
    SplitMix64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::uint64_t j = rng.next_below(i + 1);
        std::swap(p[i], p[j]);
    }
    return Permutation(std::move(p));
}

PatchGrid shuffle_patches(const PatchGrid &grid, const Permutation &perm) {
    if (perm.size() != grid.patch_count()) {
        throw LengthMismatch("shuffle_patches", perm.size(), grid.patch_count());
    }
    const std::size_t d = grid.dim();
    std::vector<double> out(grid.patch_count() * d);
    for (std::size_t i = 0; i < grid.patch_count(); ++i) {
        const auto src = grid.patch(perm[i]);
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return PatchGrid(grid.patch_count(), d, std::move(out));
}

} // namespace rpgd
