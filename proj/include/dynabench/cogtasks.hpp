#pragma once

#include "dynabench/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dynabench {

// A = Pro, B = Anti, C = Delay, M = DelayAnti (Delay timing, Anti rule).
enum class TaskKind { A, B, C, M };
enum class Phase { Train, Test };

inline constexpr std::array<TaskKind, 4> kAllTasks{TaskKind::A, TaskKind::B, TaskKind::C, TaskKind::M};

std::string_view to_string(TaskKind t) noexcept;
TaskKind task_from_string(std::string_view s);

inline constexpr int kFixate = 0;
inline constexpr int kChoice1 = 1;
inline constexpr int kChoice2 = 2;
inline constexpr int kNumClasses = 3;

// Input layout: fixation, modality 1, modality 2, one-hot task (A, B, C, M).
inline constexpr std::size_t kInputChannels = 7;
inline constexpr std::size_t kFixationChannel = 0;

constexpr bool has_delay(TaskKind t) noexcept { return t == TaskKind::C || t == TaskKind::M; }
constexpr bool chooses_lower(TaskKind t) noexcept { return t == TaskKind::B || t == TaskKind::M; }
constexpr std::size_t task_index(TaskKind t) noexcept { return static_cast<std::size_t>(t); }

struct TrialTiming {
    std::size_t stimulus_steps = 200;
    std::size_t delay_steps = 0;
    std::size_t response_steps = 25;

    std::size_t total() const noexcept { return stimulus_steps + delay_steps + response_steps; }
    std::size_t response_start() const noexcept { return stimulus_steps + delay_steps; }
};

inline constexpr std::array<std::size_t, 3> kTrainDelays{25, 50, 75};
inline constexpr std::size_t kTestDelay = 100;

// Noisy amplitude-modulated sinusoid per modality:
//   v * (1 + modulation * sin(2*pi*t/period + phase)) + N(0, noise_std^2)
struct StimulusEncoding {
    double period = 50.0;
    double modulation = 0.1;
    double noise_std = 0.05;
    double value_min = 0.2;
    double value_max = 1.0;
    double min_contrast = 0.1;
};

struct Trial {
    TaskKind task = TaskKind::A;
    TrialTiming timing;
    RowMatrix inputs;          // steps x kInputChannels
    std::vector<int> targets;  // class per step
    std::vector<double> mask;  // per-step loss / accuracy weight
    double v1 = 0.0;
    double v2 = 0.0;

    std::size_t steps() const noexcept { return targets.size(); }
    int correct_choice() const noexcept { return targets.back(); }
};

// Draws the delay for one trial or batch: 0 for A/B, one of {25,50,75} in
// training and 100 in testing for C/M.
TrialTiming draw_timing(TaskKind task, Phase phase, std::uint64_t seed);

// Deterministic construction from explicit stimulus values; `noise_seed`
// drives the sinusoid phases and additive noise.
Trial make_trial(TaskKind task, const TrialTiming& timing, double v1, double v2, std::uint64_t noise_seed,
                 const StimulusEncoding& enc = {});

Trial generate_trial(TaskKind task, Phase phase, std::uint64_t seed, const StimulusEncoding& enc = {});

// One delay is drawn per batch so all trials share the same length.
std::vector<Trial> generate_batch(TaskKind task, std::size_t size, Phase phase, std::uint64_t seed,
                                  const StimulusEncoding& enc = {});

struct TrialScore {
    double weighted_accuracy = 0.0;   // response period, mask weighted
    std::size_t fixation_errors = 0;  // steps that should fixate but do not
    bool trial_choice_correct = false;  // mask-weighted vote over the response period
};

TrialScore score_trial(std::span<const int> predictions, const Trial& trial);
double weighted_accuracy(std::span<const int> predictions, const Trial& trial);

// Trial fixtures: inputs as a DYNB tensor (1 x steps x 7) at `<stem>.dynb`,
// targets, mask and metadata as JSON at `<stem>.json`.
void save_trial(const std::filesystem::path& stem, const Trial& trial);
Trial load_trial(const std::filesystem::path& stem);

}  // namespace dynabench
