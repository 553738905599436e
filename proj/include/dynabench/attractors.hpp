#pragma once

#include "dynabench/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace dynabench {

struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;

    void validate() const;
};

enum class Regime { OneStable, TwoStable, TwoUnstable };

std::string_view to_string(Regime r) noexcept;
Regime regime_from_string(std::string_view s);

struct AttractorSample {
    TrajectoryTensor trajectories;  // (trials, T, 3)
    LorenzParams params;
    Regime regime = Regime::OneStable;
    double dt = 0.01;
    std::uint64_t seed = 0;
};

using State = Eigen::Vector3d;

State lorenz_rhs(const LorenzParams& p, const State& s);
Eigen::Matrix3d lorenz_jacobian(const LorenzParams& p, const State& s);
State rk4_step(const LorenzParams& p, const State& s, double dt);

// The two symmetric fixed points (+-sqrt(beta(rho-1)), +-sqrt(beta(rho-1)), rho-1);
// only meaningful for rho > 1.
std::array<State, 2> nonzero_fixed_points(const LorenzParams& p);

// Plain RK4 from a given state, no burn-in; row k is the state after k steps.
Eigen::Matrix<double, Eigen::Dynamic, 3> integrate_lorenz(const LorenzParams& p, const State& x0, std::size_t steps,
                                                         double dt);

inline constexpr std::size_t kBurnInSteps = 1000;

// Each trial starts from a seeded random state, integrates kBurnInSteps steps
// that are discarded, then records T states. Per-trial seeds are derived from
// `seed` and the trial index.
AttractorSample simulate_lorenz(const LorenzParams& p, std::size_t trials, std::size_t steps, double dt,
                                std::uint64_t seed);

Regime classify_regime(const LorenzParams& p);

// Shift by the grand mean, then divide by the largest state norm.
TrajectoryTensor rescale_unit_volume(const TrajectoryTensor& x);
AttractorSample rescale_unit_volume(const AttractorSample& s);

struct NoiseSchedule {
    double std_start = 0.01;
    double std_end = 0.0025;

    void validate() const;
    // Linear decrease over trial time; step t of T (0-based).
    double stddev(std::size_t t, std::size_t steps) const noexcept;
};

struct CompositeModelSpec {
    const AttractorSample* attractor_a = nullptr;
    const AttractorSample* attractor_b = nullptr;
    double b_amplitude = 0.0;
    double noise_scale = 1.0;
    std::uint64_t noise_seed = 0;
};

// Adds independent Gaussian noise per condition, step and unit with standard
// deviation scale * schedule.stddev(t, T).
void add_schedule_noise(TrajectoryTensor& x, double scale, std::uint64_t seed, const NoiseSchedule& noise);

// rescale_unit_volume(A + b_amplitude * B + noise).
TrajectoryTensor compose_model(const CompositeModelSpec& spec, const NoiseSchedule& noise = {});

// DYNB tensor at `<stem>.dynb` plus a JSON sidecar at `<stem>.json`.
void save_attractor(const std::filesystem::path& stem, const AttractorSample& s);
AttractorSample load_attractor(const std::filesystem::path& stem);

}  // namespace dynabench
