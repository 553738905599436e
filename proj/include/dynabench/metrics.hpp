#pragma once

#include "dynabench/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

namespace dynabench {

using Matrix = Eigen::MatrixXd;

enum class Metric { Cka, Procrustes, Dsa };

std::string_view to_string(Metric m) noexcept;
Metric metric_from_string(std::string_view name);

struct PreprocessSpec {
    bool center = true;
    bool normalize = true;
    // Number of principal components kept; 0 keeps every unit unrotated.
    std::size_t pca_components = 20;
};

struct PreprocessResult {
    TrajectoryTensor tensor;
    // Fraction of total (centered) variance carried by the kept components.
    double explained_variance = 1.0;
};

PreprocessResult preprocess(const TrajectoryTensor& x, const PreprocessSpec& spec);

struct DsaConfig {
    std::size_t n_delays = 33;
    std::size_t delay_interval = 6;
    double rank_tolerance = 0.99;
    std::size_t restarts = 10;
    std::size_t max_iters = 2000;
    double step_tolerance = 1e-8;
    std::uint64_t seed = 0;

    // Throws ConfigError for n_delays, delay_interval or restarts of zero, or
    // a rank tolerance outside (0, 1].
    void validate() const;
};

struct SimilarityScore {
    double value = 0.0;
    Metric metric = Metric::Cka;
    bool converged = true;
};

// Linear transition operator z_{t+1} = A z_t expressed in the reduced
// coordinates spanned by the columns of `basis`.
struct DynamicsMatrix {
    Matrix A;
    Matrix basis;  // embedded dimension x d
    double fit_residual = 0.0;

    Eigen::Index dim() const noexcept { return A.rows(); }
    // The operator mapped back into embedded coordinates: basis * A * basis^T.
    Matrix lifted() const { return basis * A * basis.transpose(); }
};

struct DelayEmbedding {
    Matrix prev;
    Matrix next;
    std::size_t rows_per_condition = 0;  // embedded rows, one more than pairs
};

double cka_value(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const RowMatrix>& y);
SimilarityScore cka_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y);
SimilarityScore procrustes_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y);

DelayEmbedding delay_embed(const TrajectoryTensor& x, const DsaConfig& cfg);
DynamicsMatrix fit_linear_dynamics(const Matrix& prev, const Matrix& next, const DsaConfig& cfg);
SimilarityScore orthogonal_align(const DynamicsMatrix& a, const DynamicsMatrix& b, const DsaConfig& cfg);
SimilarityScore orthogonal_align(const Matrix& a, const Matrix& b, const DsaConfig& cfg);

// delay_embed followed by fit_linear_dynamics.
DynamicsMatrix fit_dynamics(const TrajectoryTensor& x, const DsaConfig& cfg);
SimilarityScore dsa_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y, const DsaConfig& cfg);

SimilarityScore dissimilarity(Metric metric, const TrajectoryTensor& x, const TrajectoryTensor& y,
                              const DsaConfig& dsa);

// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Matrix random_orthogonal(Eigen::Index n, std::uint64_t seed);

}  // namespace dynabench
