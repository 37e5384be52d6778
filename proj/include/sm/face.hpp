#pragma once

#include <filesystem>

#include "sm/rng.hpp"
#include "sm/tensor.hpp"

namespace sm::face {

/// Affine face model: shape = mean + B_exp * delta + B_id * phi.
/// mean: V x 3, bexp: V x 3 x 64, bid: V x 3 x 80, mouth_index: vertex ids.
struct FaceBasis {
    TensorF mean;         // V x 3
    TensorF bexp;         // V x 3 x n_expr
    TensorF bid;          // V x 3 x n_id
    TensorI mouth_index;  // n_mouth vertex ids

    std::size_t vertex_count() const { return mean.shape[0]; }
    std::size_t expr_dim() const { return bexp.shape[2]; }
    std::size_t id_dim() const { return bid.shape[2]; }

    void validate() const;

    /// Restriction of (mean, bexp) to the mouth rows, flattened to
    /// (3*n_mouth) x 1 and (3*n_mouth) x n_expr. Used by the sync path.
    void mouth_restriction(TensorF& mouth_mean, TensorF& mouth_basis) const;
};

/// S = mean + B_exp delta + B_id phi, returned as V x 3.
TensorF evaluate_shape(const FaceBasis& basis, const TensorF& delta, const TensorF& phi);

/// evaluate_shape restricted to the mouth rows: n_mouth x 3.
TensorF mouth_vertices(const FaceBasis& basis, const TensorF& delta);

/// Mean Euclidean distance over corresponding points (K x 3 each).
double landmark_distance(const TensorF& a, const TensorF& b);

/// Expression-basis columns ranked by mouth-vertex displacement energy,
/// largest first. The lower-face coefficient set is the top `k` of these.
std::vector<std::size_t> mouth_columns(const FaceBasis& basis, std::size_t k);

/// Deterministic stand-in for the non-redistributable bases: smooth head
/// ellipsoid mean, seeded Gaussian basis columns, mouth_index = the lowest
/// frontal vertices. Columns [0, mouth_cols) carry most of the mouth
/// displacement energy so the lower-face coefficient split is stable.
FaceBasis make_synthetic_basis(std::size_t vertices = 900, std::size_t n_mouth = 404, std::size_t expr_dim = 64,
                               std::size_t id_dim = 80, std::size_t mouth_cols = 13, std::uint64_t seed = 77);

FaceBasis load_basis(const std::filesystem::path& dir);
void save_basis(const std::filesystem::path& dir, const FaceBasis& basis);

}  // namespace sm::face
