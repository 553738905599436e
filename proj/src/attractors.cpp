#include "dynabench/attractors.hpp"

#include "dynabench/error.hpp"
#include "dynabench/random.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

namespace dynabench {

void LorenzParams::validate() const {
    if (!(sigma > 0.0) || !(beta > 0.0)) throw ConfigError("Lorenz sigma and beta must be positive");
    if (!std::isfinite(rho)) throw ConfigError("Lorenz rho must be finite");
}

std::string_view to_string(Regime r) noexcept {
    switch (r) {
        case Regime::OneStable: return "ONE_STABLE";
        case Regime::TwoStable: return "TWO_STABLE";
        case Regime::TwoUnstable: return "TWO_UNSTABLE";
    }
    return "?";
}

Regime regime_from_string(std::string_view s) {
    for (auto r : {Regime::OneStable, Regime::TwoStable, Regime::TwoUnstable})
        if (to_string(r) == s) return r;
    throw ConfigError("unknown regime '" + std::string(s) + "'");
}

State lorenz_rhs(const LorenzParams& p, const State& s) {
    return {p.sigma * (s.y() - s.x()), s.x() * (p.rho - s.z()) - s.y(), s.x() * s.y() - p.beta * s.z()};
}

Eigen::Matrix3d lorenz_jacobian(const LorenzParams& p, const State& s) {
    Eigen::Matrix3d j;
    j << -p.sigma, p.sigma, 0.0,
         p.rho - s.z(), -1.0, -s.x(),
         s.y(), s.x(), -p.beta;
    return j;
}

State rk4_step(const LorenzParams& p, const State& s, double dt) {
    const State k1 = lorenz_rhs(p, s);
    const State k2 = lorenz_rhs(p, s + 0.5 * dt * k1);
    const State k3 = lorenz_rhs(p, s + 0.5 * dt * k2);
    const State k4 = lorenz_rhs(p, s + dt * k3);
    return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::array<State, 2> nonzero_fixed_points(const LorenzParams& p) {
    const double c = std::sqrt(p.beta * (p.rho - 1.0));
    return {State(c, c, p.rho - 1.0), State(-c, -c, p.rho - 1.0)};
}

Eigen::Matrix<double, Eigen::Dynamic, 3> integrate_lorenz(const LorenzParams& p, const State& x0, std::size_t steps,
                                                         double dt) {
    p.validate();
    Eigen::Matrix<double, Eigen::Dynamic, 3> out(static_cast<Eigen::Index>(steps) + 1, 3);
    State s = x0;
    out.row(0) = s.transpose();
    for (std::size_t k = 1; k <= steps; ++k) {
        s = rk4_step(p, s, dt);
        out.row(static_cast<Eigen::Index>(k)) = s.transpose();
    }
    return out;
}

AttractorSample simulate_lorenz(const LorenzParams& p, std::size_t trials, std::size_t steps, double dt,
                                std::uint64_t seed) {
    p.validate();
    if (trials < 1) throw ConfigError("simulate_lorenz: trials must be >= 1");
    if (steps < 2) throw ConfigError("simulate_lorenz: T must be >= 2");
    if (!(dt > 0.0)) throw ConfigError("simulate_lorenz: dt must be positive");

    AttractorSample out;
    out.params = p;
    out.regime = classify_regime(p);
    out.dt = dt;
    out.seed = seed;
    out.trajectories = TrajectoryTensor(trials, steps, 3, {"lorenz", seed});

    for (std::size_t c = 0; c < trials; ++c) {
        Rng rng(derive_seed(seed, c));
        std::uniform_real_distribution<double> xy(-15.0, 15.0);
        std::uniform_real_distribution<double> z(5.0, 40.0);
        State s(xy(rng), xy(rng), z(rng));
        for (std::size_t k = 0; k < kBurnInSteps; ++k) s = rk4_step(p, s, dt);
        for (std::size_t t = 0; t < steps; ++t) {
            if (!s.allFinite()) throw DivergenceError("Lorenz integration diverged in trial " + std::to_string(c), c);
            for (int n = 0; n < 3; ++n) out.trajectories.at(c, t, static_cast<std::size_t>(n)) = s(n);
            s = rk4_step(p, s, dt);
        }
    }
    return out;
}

Regime classify_regime(const LorenzParams& p) {
    if (p.rho < 1.0) return Regime::OneStable;
    // Both nonzero fixed points share their spectrum by symmetry.
    const auto fp = nonzero_fixed_points(p);
    const Eigen::EigenSolver<Eigen::Matrix3d> es(lorenz_jacobian(p, fp[0]));
    return es.eigenvalues().real().maxCoeff() < 0.0 ? Regime::TwoStable : Regime::TwoUnstable;
}

TrajectoryTensor rescale_unit_volume(const TrajectoryTensor& x) {
    x.validate();
    TrajectoryTensor out = x;
    auto flat = out.flat();
    const Eigen::RowVectorXd mu = flat.colwise().mean();
    flat.rowwise() -= mu;
    const double r = flat.rowwise().norm().maxCoeff();
    if (!(r > 0.0)) throw DegenerateInputError("rescale_unit_volume: all states are identical");
    flat /= r;
    return out;
}

AttractorSample rescale_unit_volume(const AttractorSample& s) {
    AttractorSample out = s;
    out.trajectories = rescale_unit_volume(s.trajectories);
    return out;
}

void NoiseSchedule::validate() const {
    if (!(std_start >= std_end && std_end >= 0.0)) throw ConfigError("noise schedule needs std_start >= std_end >= 0");
}

double NoiseSchedule::stddev(std::size_t t, std::size_t steps) const noexcept {
    if (steps < 2) return std_start;
    const double frac = static_cast<double>(t) / static_cast<double>(steps - 1);
    return std_start + (std_end - std_start) * frac;
}

void add_schedule_noise(TrajectoryTensor& x, double scale, std::uint64_t seed, const NoiseSchedule& noise) {
    noise.validate();
    if (scale < 0.0) throw ConfigError("noise scale must be >= 0");
    if (scale == 0.0) return;
    Rng rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t c = 0; c < x.conditions(); ++c)
        for (std::size_t t = 0; t < x.steps(); ++t) {
            const double sd = scale * noise.stddev(t, x.steps());
            for (std::size_t n = 0; n < x.units(); ++n) x.at(c, t, n) += sd * normal(rng);
        }
}

TrajectoryTensor compose_model(const CompositeModelSpec& spec, const NoiseSchedule& noise) {
    noise.validate();
    if (!spec.attractor_a) throw ConfigError("compose_model: attractor A is required");
    if (!spec.attractor_b && spec.b_amplitude != 0.0)
        throw ConfigError("compose_model: b_amplitude must be 0 without attractor B");
    if (spec.noise_scale < 0.0) throw ConfigError("compose_model: noise_scale must be >= 0");
    const auto& a = spec.attractor_a->trajectories;
    TrajectoryTensor out = a;
    out.meta() = {"composite", spec.noise_seed};
    if (spec.attractor_b) {
        const auto& b = spec.attractor_b->trajectories;
        if (!a.same_shape(b)) throw DimensionError("compose_model: attractors A and B differ in shape");
        out.flat() += spec.b_amplitude * b.flat();
    }
    add_schedule_noise(out, spec.noise_scale, spec.noise_seed, noise);
    return rescale_unit_volume(out);
}

void save_attractor(const std::filesystem::path& stem, const AttractorSample& s) {
    auto dynb_path = stem;
    dynb_path += ".dynb";
    dynb::write(dynb_path, s.trajectories);
    nlohmann::json j{{"sigma", s.params.sigma}, {"rho", s.params.rho},   {"beta", s.params.beta},
                     {"regime", to_string(s.regime)}, {"dt", s.dt}, {"seed", s.seed},
                     {"burn_in", kBurnInSteps}};
    auto json_path = stem;
    json_path += ".json";
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot write " + json_path.string());
    os << j.dump(1) << '\n';
}

AttractorSample load_attractor(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    std::ifstream is(json_path);
    if (!is) throw IoError("cannot read " + json_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(json_path.string() + ": " + e.what());
    }
    auto dynb_path = stem;
    dynb_path += ".dynb";
    AttractorSample s;
    s.trajectories = dynb::read(dynb_path);
    s.params = {j.at("sigma").get<double>(), j.at("rho").get<double>(), j.at("beta").get<double>()};
    s.regime = regime_from_string(j.at("regime").get<std::string>());
    s.dt = j.at("dt").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (s.trajectories.units() != 3) throw IoError(dynb_path.string() + ": attractor tensors need 3 units");
    return s;
}

}  // namespace dynabench
