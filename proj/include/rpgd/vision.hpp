#pragma once

#include "rpgd/errors.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rpgd {

// A sequence of N patch embedding vectors, all of dimension D, stored
// row-major. Immutable after construction.
class PatchGrid {
public:
    PatchGrid() = default;
    PatchGrid(std::size_t n_patches, std::size_t dim, std::vector<double> data);

    std::size_t patch_count() const { return n_patches_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> patch(std::size_t i) const;
    const std::vector<double> &data() const { return data_; }

    bool operator==(const PatchGrid &other) const {
        return n_patches_ == other.n_patches_ && dim_ == other.dim_ && data_ == other.data_;
    }

    // JSON array-of-arrays (N x D row-major).
    std::string to_json() const;
    static PatchGrid from_json(const std::string &json_text);

private:
    std::size_t n_patches_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

// A bijection on [0, N).
class Permutation {
public:
    explicit Permutation(std::vector<std::uint32_t> mapping);

    std::size_t size() const { return mapping_.size(); }
    std::uint32_t operator[](std::size_t i) const { return mapping_[i]; }
    const std::vector<std::uint32_t> &mapping() const { return mapping_; }
    bool is_identity() const;

private:
    std::vector<std::uint32_t> mapping_;
};

// Uniformly distributed permutation from a fixed procedure: SplitMix64
// seeded with `seed`, Fisher-Yates with rejection-sampled bounded draws.
// Same (n, seed) gives the identical permutation on every platform.
Permutation permutation_from_seed(std::size_t n, std::uint64_t seed);

// out patch i = in patch perm[i]. Whole embedding rows move; coordinates
// within a patch are never reordered, so the patch multiset is preserved
// exactly while positional structure is destroyed.
PatchGrid shuffle_patches(const PatchGrid &grid, const Permutation &perm);

} // namespace rpgd
