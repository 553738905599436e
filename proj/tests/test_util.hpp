#pragma once

#include "dynabench/metrics.hpp"
#include "dynabench/random.hpp"
#include "dynabench/tensor.hpp"

#include <cmath>
#include <random>

namespace dynabench::testing {

inline TrajectoryTensor random_tensor(std::size_t c, std::size_t t, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    TrajectoryTensor x(c, t, n, {"random", seed});
    for (auto& v : x.values()) v = normal(rng);
    return x;
}

// Smooth random trajectories: a random stable linear system driven from a
// random initial state, observed through N units.
inline TrajectoryTensor random_dynamics_tensor(std::size_t c, std::size_t t, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    const auto k = static_cast<Eigen::Index>(n);
    Matrix a = random_orthogonal(k, derive_seed(seed, 1));
    a *= 0.97;
    Matrix mix = Matrix::Identity(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) mix(i, j) += 0.3 * normal(rng);
    TrajectoryTensor x(c, t, n, {"dynamics", seed});
    for (std::size_t ci = 0; ci < c; ++ci) {
        Eigen::VectorXd s(k);
        for (auto& v : s) v = normal(rng);
        for (std::size_t ti = 0; ti < t; ++ti) {
            const Eigen::VectorXd obs = mix * s;
            for (std::size_t u = 0; u < n; ++u)
                x.at(ci, ti, u) = obs(static_cast<Eigen::Index>(u)) + 0.01 * normal(rng);
            s = a * s;
        }
    }
    return x;
}

inline TrajectoryTensor rotate_units(const TrajectoryTensor& x, const Matrix& q) {
    RowMatrix rotated = x.flat() * q;
    return TrajectoryTensor::from_matrix(x.conditions(), x.steps(), rotated, x.meta());
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

}  // namespace dynabench::testing
