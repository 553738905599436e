#include "dynabench/metrics.hpp"

#include "dynabench/error.hpp"
#include "dynabench/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace dynabench {

namespace {

// Flips each column so that its entry of largest magnitude is positive.
// Scores of a rotated data set differ from the originals only by these signs,
// so fixing them makes the reduced coordinates rotation invariant.
void canonicalize_signs(Matrix& scores, Matrix& basis) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
        Eigen::Index arg = 0;
        scores.col(j).cwiseAbs().maxCoeff(&arg);
        if (scores(arg, j) < 0) {
            scores.col(j) *= -1.0;
            basis.col(j) *= -1.0;
        }
    }
}

Matrix centered(const Eigen::Ref<const RowMatrix>& x) {
    Matrix m = x;
    m.rowwise() -= m.colwise().mean();
    return m;
}

}  // namespace

std::string_view to_string(Metric m) noexcept {
    switch (m) {
        case Metric::Cka: return "CKA";
        case Metric::Procrustes: return "PROCRUSTES";
        case Metric::Dsa: return "DSA";
    }
    return "?";
}

Metric metric_from_string(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "CKA") return Metric::Cka;
    if (s == "PROCRUSTES") return Metric::Procrustes;
    if (s == "DSA") return Metric::Dsa;
    throw ConfigError("unknown metric '" + std::string(name) + "'");
}

PreprocessResult preprocess(const TrajectoryTensor& x, const PreprocessSpec& spec) {
    x.validate();
    const auto n_units = x.units();
    const auto n_samples = x.samples();
    if (spec.pca_components > n_units || spec.pca_components > n_samples)
        throw DimensionError("pca_components=" + std::to_string(spec.pca_components) + " exceeds N=" +
                             std::to_string(n_units) + " or C*T=" + std::to_string(n_samples));

    Matrix data = x.flat();
    if (spec.center) data.rowwise() -= data.colwise().mean();

    double explained = 1.0;
    if (spec.pca_components > 0) {
        const Matrix cov = data.transpose() * data;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
        const Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
        const Matrix vectors = eig.eigenvectors().rowwise().reverse();
        const double total = values.sum();
        if (!(total > 0.0)) throw DegenerateInputError("preprocess: input has zero variance");
        const auto rank = (values.array() > values(0) * 1e-12).count();
        const auto k = static_cast<Eigen::Index>(spec.pca_components);
        if (k > rank)
            throw DimensionError("pca_components=" + std::to_string(k) + " exceeds available rank " +
                                 std::to_string(rank));
        Matrix basis = vectors.leftCols(k);
        Matrix scores = data * basis;
        canonicalize_signs(scores, basis);
        explained = values.head(k).sum() / total;
        data = std::move(scores);
    }

    if (spec.normalize) {
        const double norm = data.norm();
        if (!(norm > 0.0)) throw DegenerateInputError("preprocess: cannot normalize an all-zero tensor");
        data /= norm;
    }

    RowMatrix flat = data;
    return {TrajectoryTensor::from_matrix(x.conditions(), x.steps(), flat, x.meta()), explained};
}

void DsaConfig::validate() const {
    if (n_delays < 1) throw ConfigError("n_delays must be >= 1");
    if (delay_interval < 1) throw ConfigError("delay_interval must be >= 1");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
    if (!(rank_tolerance > 0.0 && rank_tolerance <= 1.0))
        throw ConfigError("rank_tolerance must lie in (0, 1]");
    if (!(step_tolerance > 0.0)) throw ConfigError("step_tolerance must be positive");
}

double cka_value(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const RowMatrix>& y) {
    if (x.rows() != y.rows())
        throw DimensionError("CKA needs equal sample counts, got " + std::to_string(x.rows()) + " and " +
                             std::to_string(y.rows()));
    const Matrix xc = centered(x);
    const Matrix yc = centered(y);
    const double xx = (xc.transpose() * xc).norm();
    const double yy = (yc.transpose() * yc).norm();
    if (!(xx > 0.0) || !(yy > 0.0)) throw DegenerateInputError("CKA: zero-variance input");
    const double xy = (xc.transpose() * yc).squaredNorm();
    return std::clamp(1.0 - xy / (xx * yy), 0.0, 1.0);
}

SimilarityScore cka_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y) {
    if (x.conditions() != y.conditions() || x.steps() != y.steps())
        throw DimensionError("CKA: tensors must share conditions and time steps");
    return {cka_value(x.flat(), y.flat()), Metric::Cka, true};
}

SimilarityScore procrustes_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y) {
    if (!x.same_shape(y)) throw DimensionError("Procrustes: tensors must share C, T and N");
    Matrix xc = centered(x.flat());
    Matrix yc = centered(y.flat());
    const double nx = xc.norm();
    const double ny = yc.norm();
    if (!(nx > 0.0) || !(ny > 0.0)) throw DegenerateInputError("Procrustes: zero-variance input");
    xc /= nx;
    yc /= ny;
    const Matrix cross = xc.transpose() * yc;
    const double nuclear = Eigen::JacobiSVD<Matrix>(cross).singularValues().sum();
    const double value = 2.0 / std::numbers::pi * std::acos(std::min(nuclear, 1.0));
    return {std::clamp(value, 0.0, 1.0), Metric::Procrustes, true};
}

DelayEmbedding delay_embed(const TrajectoryTensor& x, const DsaConfig& cfg) {
    cfg.validate();
    const auto d = cfg.n_delays;
    const auto tau = cfg.delay_interval;
    const auto span = (d - 1) * tau;
    const auto min_steps = span + 2;
    if (x.steps() < min_steps)
        throw EmbeddingError("delay embedding with " + std::to_string(d) + " delays at interval " +
                                 std::to_string(tau) + " needs at least T=" + std::to_string(min_steps) +
                                 " steps, got " + std::to_string(x.steps()),
                             min_steps);

    const auto n = x.units();
    const auto rows = x.steps() - span;
    const auto pairs = rows - 1;
    const auto cols = static_cast<Eigen::Index>(d * n);
    DelayEmbedding out;
    out.rows_per_condition = rows;
    out.prev.resize(static_cast<Eigen::Index>(x.conditions() * pairs), cols);
    out.next.resize(out.prev.rows(), cols);

    auto fill_row = [&](Matrix& dst, Eigen::Index row, std::size_t c, std::size_t t) {
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t u = 0; u < n; ++u)
                dst(row, static_cast<Eigen::Index>(k * n + u)) = x.at(c, t + k * tau, u);
    };
    for (std::size_t c = 0; c < x.conditions(); ++c) {
        for (std::size_t t = 0; t < pairs; ++t) {
            const auto row = static_cast<Eigen::Index>(c * pairs + t);
            fill_row(out.prev, row, c, t);
            fill_row(out.next, row, c, t + 1);
        }
    }
    return out;
}

DynamicsMatrix fit_linear_dynamics(const Matrix& prev, const Matrix& next, const DsaConfig& cfg) {
    if (prev.rows() != next.rows() || prev.cols() != next.cols())
        throw DimensionError("fit_linear_dynamics: prev and next must have the same shape");
    if (prev.rows() < 1) throw DimensionError("fit_linear_dynamics: need at least one row pair");
    if (!prev.allFinite() || !next.allFinite()) throw NumericError("fit_linear_dynamics: non-finite input");

    // Principal subspace of all embedded rows.
    const Matrix gram = prev.transpose() * prev + next.transpose() * next;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const double total = values.sum();
    if (!(total > 0.0)) throw DegenerateInputError("fit_linear_dynamics: all-zero input");

    const auto numeric_rank = (values.array() > values(0) * 1e-12).count();
    Eigen::Index r = 0;
    double acc = 0.0;
    const double target = cfg.rank_tolerance * (1.0 - 1e-12);
    while (r < numeric_rank) {
        acc += values(r++);
        if (acc / total >= target) break;
    }

    Matrix basis = eig.eigenvectors().rowwise().reverse().leftCols(r);
    Matrix z_prev = prev * basis;
    Matrix z_next = next * basis;
    Matrix stacked(z_prev.rows() + z_next.rows(), r);
    stacked << z_prev, z_next;
    canonicalize_signs(stacked, basis);
    z_prev = stacked.topRows(prev.rows());
    z_next = stacked.bottomRows(next.rows());

    // Row form z_next = z_prev * X; the column-vector operator is X^T.
    const Matrix x = z_prev.completeOrthogonalDecomposition().solve(z_next);
    DynamicsMatrix out;
    out.A = x.transpose();
    out.basis = std::move(basis);
    const double target_norm = z_next.norm();
    out.fit_residual = target_norm > 0.0 ? (z_next - z_prev * x).norm() / target_norm : 0.0;
    if (!out.A.allFinite()) throw NumericError("fit_linear_dynamics: non-finite solution");
    return out;
}

Matrix random_orthogonal(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Matrix g(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    return q;
}

namespace {

// Minimizes 0.5*||C A C^T - B||_F^2 over orthogonal C with a Cayley-transform
// curvilinear search (Barzilai-Borwein steps, nonmonotone Armijo condition).
class ConjugationSearch {
public:
    ConjugationSearch(const Matrix& a, const Matrix& b, double normalizer, const DsaConfig& cfg)
        : a_(a), b_(b), normalizer_(normalizer), cfg_(cfg), eye_(Matrix::Identity(a.rows(), a.rows())) {}

    struct Result {
        double value;
        bool converged;
    };

    Result run(Matrix c) const {
        Matrix e, g, w;
        double f = evaluate(c, e);
        gradient(c, e, g, w);
        Matrix dir = w * c;
        double w_norm2 = w.squaredNorm();
        double tau = 1e-3;
        double q = 1.0;
        double c_ref = f;
        double value = to_value(f);
        std::size_t still = 0;
        constexpr double rho = 1e-4;
        constexpr double eta = 0.85;
        constexpr double shrink = 0.2;

        for (std::size_t iter = 0; iter < cfg_.max_iters; ++iter) {
            if (value <= cfg_.step_tolerance * 1e-3 || w_norm2 <= 1e-30 * (1.0 + f)) return {value, true};

            const Matrix c_old = c;
            const Matrix dir_old = dir;
            Matrix trial;
            double f_trial = f;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                trial = cayley(w, tau, c_old);
                f_trial = evaluate(trial, e);
                if (f_trial <= c_ref - rho * tau * 0.5 * w_norm2) {
                    accepted = true;
                    break;
                }
                tau *= shrink;
            }
            if (!accepted) return {value, true};  // no descent left at machine precision

            c = std::move(trial);
            f = f_trial;
            if ((iter + 1) % 200 == 0) {
                reorthonormalize(c);
                f = evaluate(c, e);
            }
            gradient(c, e, g, w);
            dir = w * c;
            w_norm2 = w.squaredNorm();

            const double new_value = to_value(f);
            still = std::abs(value - new_value) < cfg_.step_tolerance ? still + 1 : 0;
            value = new_value;
            if (still >= 3) return {value, true};

            const Matrix s = c - c_old;
            const Matrix y = dir - dir_old;
            const double sy = std::abs((s.array() * y.array()).sum());
            if (sy > 0.0) {
                tau = (iter % 2 == 0) ? s.squaredNorm() / sy : sy / y.squaredNorm();
                tau = std::clamp(tau, 1e-20, 1e20);
            }
            const double q_next = eta * q + 1.0;
            c_ref = (eta * q * c_ref + f) / q_next;
            q = q_next;
        }
        return {value, false};
    }

private:
    double evaluate(const Matrix& c, Matrix& e) const {
        e.noalias() = c * a_ * c.transpose();
        e -= b_;
        return 0.5 * e.squaredNorm();
    }

    void gradient(const Matrix& c, const Matrix& e, Matrix& g, Matrix& w) const {
        g.noalias() = e * c * a_.transpose();
        g.noalias() += e.transpose() * c * a_;
        w.noalias() = g * c.transpose();
        w -= Matrix(w.transpose());
    }

    Matrix cayley(const Matrix& w, double tau, const Matrix& c) const {
        const Matrix lhs = eye_ + 0.5 * tau * w;
        const Matrix rhs = c - 0.5 * tau * (w * c);
        return lhs.partialPivLu().solve(rhs);
    }

    static void reorthonormalize(Matrix& c) {
        Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
        c = svd.matrixU() * svd.matrixV().transpose();
    }

    double to_value(double f) const { return std::sqrt(2.0 * std::max(f, 0.0)) / normalizer_; }

    const Matrix& a_;
    const Matrix& b_;
    double normalizer_;
    const DsaConfig& cfg_;
    Matrix eye_;
};

Matrix zero_pad(const Matrix& m, Eigen::Index n) {
    Matrix out = Matrix::Zero(n, n);
    out.topLeftCorner(m.rows(), m.cols()) = m;
    return out;
}

// Strict weak order used to run the search in a fixed orientation so that
// d(x, y) and d(y, x) execute the identical computation.
bool canonical_less(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a.data()[i] < b.data()[i]) return true;
        if (b.data()[i] < a.data()[i]) return false;
    }
    return false;
}

}  // namespace

SimilarityScore orthogonal_align(const Matrix& a1, const Matrix& a2, const DsaConfig& cfg) {
    cfg.validate();
    if (a1.rows() != a1.cols() || a2.rows() != a2.cols())
        throw DimensionError("orthogonal_align: dynamics matrices must be square");
    if (!a1.allFinite() || !a2.allFinite()) throw NumericError("orthogonal_align: non-finite entries");
    const Eigen::Index n = std::max(a1.rows(), a2.rows());
    if (n == 0) throw DimensionError("orthogonal_align: empty dynamics matrices");

    Matrix p = zero_pad(a1, n);
    Matrix q = zero_pad(a2, n);
    const double norm_p = p.norm();
    const double norm_q = q.norm();
    if (!(norm_p > 0.0) || !(norm_q > 0.0)) throw DegenerateInputError("orthogonal_align: zero dynamics matrix");
    if (canonical_less(q, p)) std::swap(p, q);

    const ConjugationSearch search(p, q, std::sqrt(norm_p * norm_q), cfg);
    double best = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (std::size_t k = 0; k < cfg.restarts; ++k) {
        Matrix start;
        if (k == 0) {
            start = Matrix::Identity(n, n);
        } else if (k == 1) {
            start = Matrix::Identity(n, n);
            start(n - 1, n - 1) = -1.0;
        } else {
            start = random_orthogonal(n, derive_seed(cfg.seed, {0xa11, k}));
            // Alternate between the two connected components of O(n).
            const bool want_reflection = (k % 2) == 1;
            if ((start.determinant() < 0) != want_reflection) start.col(0) *= -1.0;
        }
        const auto result = search.run(std::move(start));
        if (result.value < best) {
            best = result.value;
            converged = result.converged;
        }
        if (best <= cfg.step_tolerance * 1e-3) break;
    }
    return {best, Metric::Dsa, converged};
}

SimilarityScore orthogonal_align(const DynamicsMatrix& a, const DynamicsMatrix& b, const DsaConfig& cfg) {
    return orthogonal_align(a.A, b.A, cfg);
}

DynamicsMatrix fit_dynamics(const TrajectoryTensor& x, const DsaConfig& cfg) {
    x.validate();
    const auto emb = delay_embed(x, cfg);
    return fit_linear_dynamics(emb.prev, emb.next, cfg);
}

SimilarityScore dsa_dissimilarity(const TrajectoryTensor& x, const TrajectoryTensor& y, const DsaConfig& cfg) {
    return orthogonal_align(fit_dynamics(x, cfg), fit_dynamics(y, cfg), cfg);
}

SimilarityScore dissimilarity(Metric metric, const TrajectoryTensor& x, const TrajectoryTensor& y,
                              const DsaConfig& dsa) {
    switch (metric) {
        case Metric::Cka: return cka_dissimilarity(x, y);
        case Metric::Procrustes: return procrustes_dissimilarity(x, y);
        case Metric::Dsa: return dsa_dissimilarity(x, y, dsa);
    }
    throw ConfigError("unknown metric");
}

}  // namespace dynabench
