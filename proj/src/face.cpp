#include "sm/face.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "sm/io.hpp"

namespace sm::face {

void FaceBasis::validate() const {
    if (mean.rank() != 2 || mean.shape[1] != 3) throw ShapeError("face mean must be V x 3, got " + shape_str(mean.shape));
    if (bexp.rank() != 3 || bexp.shape[0] != mean.shape[0] || bexp.shape[1] != 3)
        throw ShapeError("bexp must be V x 3 x n_expr, got " + shape_str(bexp.shape));
    if (bid.rank() != 3 || bid.shape[0] != mean.shape[0] || bid.shape[1] != 3)
        throw ShapeError("bid must be V x 3 x n_id, got " + shape_str(bid.shape));
    if (mouth_index.rank() != 1 || mouth_index.numel() == 0) throw ShapeError("mouth_index must be a non-empty vector");
    const auto v = static_cast<std::int32_t>(vertex_count());
    for (auto id : mouth_index.data)
        if (id < 0 || id >= v) throw std::out_of_range("mouth vertex id " + std::to_string(id) + " out of range");
}

void FaceBasis::mouth_restriction(TensorF& mouth_mean, TensorF& mouth_basis) const {
    const std::size_t m = mouth_index.numel(), e = expr_dim();
    mouth_mean = TensorF({3 * m, 1});
    mouth_basis = TensorF({3 * m, e});
    for (std::size_t i = 0; i < m; ++i) {
        const auto v = static_cast<std::size_t>(mouth_index[i]);
        for (std::size_t ax = 0; ax < 3; ++ax) {
            mouth_mean[(i * 3 + ax)] = mean.at(v, ax);
            for (std::size_t c = 0; c < e; ++c) mouth_basis.at(i * 3 + ax, c) = bexp.data[(v * 3 + ax) * e + c];
        }
    }
}

TensorF evaluate_shape(const FaceBasis& basis, const TensorF& delta, const TensorF& phi) {
    const std::size_t v = basis.vertex_count(), e = basis.expr_dim(), n = basis.id_dim();
    if (delta.numel() != e) throw ShapeError("delta must have " + std::to_string(e) + " coefficients");
    if (phi.numel() != n) throw ShapeError("phi must have " + std::to_string(n) + " coefficients");
    TensorF out = basis.mean;
    for (std::size_t i = 0; i < v * 3; ++i) {
        float acc = out[i];
        const float* be = &basis.bexp.data[i * e];
        for (std::size_t c = 0; c < e; ++c) acc += be[c] * delta[c];
        const float* bi = &basis.bid.data[i * n];
        for (std::size_t c = 0; c < n; ++c) acc += bi[c] * phi[c];
        out[i] = acc;
    }
    return out;
}

TensorF mouth_vertices(const FaceBasis& basis, const TensorF& delta) {
    const std::size_t m = basis.mouth_index.numel(), e = basis.expr_dim();
    if (delta.numel() != e) throw ShapeError("delta must have " + std::to_string(e) + " coefficients");
    TensorF out({m, 3});
    for (std::size_t i = 0; i < m; ++i) {
        const auto v = static_cast<std::size_t>(basis.mouth_index[i]);
        for (std::size_t ax = 0; ax < 3; ++ax) {
            float acc = basis.mean.at(v, ax);
            const float* be = &basis.bexp.data[(v * 3 + ax) * e];
            for (std::size_t c = 0; c < e; ++c) acc += be[c] * delta[c];
            out.at(i, ax) = acc;
        }
    }
    return out;
}

double landmark_distance(const TensorF& a, const TensorF& b) {
    if (!a.same_shape(b) || a.rank() != 2 || a.shape[1] != 3)
        throw ShapeError("landmark sets must be matching K x 3 arrays");
    double total = 0.0;
    for (std::size_t i = 0; i < a.shape[0]; ++i) {
        double s = 0.0;
        for (std::size_t ax = 0; ax < 3; ++ax) {
            const double d = static_cast<double>(a.at(i, ax)) - b.at(i, ax);
            s += d * d;
        }
        total += std::sqrt(s);
    }
    return total / static_cast<double>(a.shape[0]);
}

std::vector<std::size_t> mouth_columns(const FaceBasis& basis, std::size_t k) {
    const std::size_t e = basis.expr_dim();
    if (k > e) throw std::invalid_argument("requested more mouth columns than basis columns");
    std::vector<double> energy(e, 0.0);
    for (auto id : basis.mouth_index.data) {
        const auto v = static_cast<std::size_t>(id);
        for (std::size_t ax = 0; ax < 3; ++ax)
            for (std::size_t c = 0; c < e; ++c) {
                const double x = basis.bexp.data[(v * 3 + ax) * e + c];
                energy[c] += x * x;
            }
    }
    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });
    order.resize(k);
    return order;
}

FaceBasis make_synthetic_basis(std::size_t vertices, std::size_t n_mouth, std::size_t expr_dim, std::size_t id_dim,
                               std::size_t mouth_cols, std::uint64_t seed) {
    if (n_mouth > vertices) throw std::invalid_argument("n_mouth exceeds vertex count");
    if (mouth_cols > expr_dim) throw std::invalid_argument("mouth_cols exceeds expr_dim");
    Rng rng(seed);
    FaceBasis fb;

    // Head-shaped ellipsoid sampled on a deterministic spiral lattice.
    fb.mean = TensorF({vertices, 3});
    const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));  // golden angle
    for (std::size_t i = 0; i < vertices; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(vertices);
        const double y = 1.0 - 2.0 * u;  // -1..1, top to bottom of the head
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double th = ga * static_cast<double>(i);
        fb.mean.at(i, 0) = static_cast<float>(0.8 * r * std::cos(th));  // width
        fb.mean.at(i, 1) = static_cast<float>(1.0 * y);                 // height
        fb.mean.at(i, 2) = static_cast<float>(0.9 * r * std::sin(th));  // depth; z > 0 is frontal
    }

    // Mouth region: frontal (z > 0) vertices with the lowest height.
    std::vector<std::size_t> frontal;
    for (std::size_t i = 0; i < vertices; ++i)
        if (fb.mean.at(i, 2) > 0.0f) frontal.push_back(i);
    if (frontal.size() < n_mouth)
        throw std::invalid_argument("vertex count too small for requested mouth region");
    std::stable_sort(frontal.begin(), frontal.end(),
                     [&](std::size_t a, std::size_t b) { return fb.mean.at(a, 1) < fb.mean.at(b, 1); });
    frontal.resize(n_mouth);
    std::sort(frontal.begin(), frontal.end());
    fb.mouth_index = TensorI({n_mouth});
    for (std::size_t i = 0; i < n_mouth; ++i) fb.mouth_index[i] = static_cast<std::int32_t>(frontal[i]);
    std::vector<char> is_mouth(vertices, 0);
    for (auto v : frontal) is_mouth[v] = 1;

    // Gaussian basis columns. Columns [0, mouth_cols) are concentrated on
    // the mouth rows and the remaining columns are damped there, so the
    // lower-face coefficient split recovers exactly these columns.
    fb.bexp = TensorF({vertices, 3, expr_dim});
    for (std::size_t v = 0; v < vertices; ++v)
        for (std::size_t ax = 0; ax < 3; ++ax)
            for (std::size_t c = 0; c < expr_dim; ++c) {
                double g = rng.normal(0.0, 0.01);
                if (c < mouth_cols)
                    g *= is_mouth[v] ? 5.0 : 0.2;
                else if (is_mouth[v])
                    g *= 0.1;
                fb.bexp.data[(v * 3 + ax) * expr_dim + c] = static_cast<float>(g);
            }

    fb.bid = TensorF({vertices, 3, id_dim});
    for (auto& x : fb.bid.data) x = static_cast<float>(rng.normal(0.0, 0.01));

    fb.validate();
    return fb;
}

FaceBasis load_basis(const std::filesystem::path& dir) {
    FaceBasis fb;
    fb.mean = read_mtf<float>(dir / "mean.mtf");
    fb.bexp = read_mtf<float>(dir / "bexp.mtf");
    fb.bid = read_mtf<float>(dir / "bid.mtf");
    fb.mouth_index = read_mtf<std::int32_t>(dir / "mouth_index.mtf");
    fb.validate();
    return fb;
}

void save_basis(const std::filesystem::path& dir, const FaceBasis& basis) {
    basis.validate();
    std::filesystem::create_directories(dir);
    write_mtf(dir / "mean.mtf", basis.mean);
    write_mtf(dir / "bexp.mtf", basis.bexp);
    write_mtf(dir / "bid.mtf", basis.bid);
    write_mtf(dir / "mouth_index.mtf", basis.mouth_index);
}

}  // namespace sm::face
