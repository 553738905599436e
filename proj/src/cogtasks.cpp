#include "dynabench/cogtasks.hpp"

#include "dynabench/error.hpp"
#include "dynabench/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace dynabench {

namespace {

std::pair<double, double> draw_values(std::uint64_t seed, const StimulusEncoding& enc) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(enc.value_min, enc.value_max);
    for (;;) {
        const double v1 = u(rng);
        const double v2 = u(rng);
        if (std::abs(v1 - v2) >= enc.min_contrast) return {v1, v2};
    }
}

}  // namespace

std::string_view to_string(TaskKind t) noexcept {
    switch (t) {
        case TaskKind::A: return "A";
        case TaskKind::B: return "B";
        case TaskKind::C: return "C";
        case TaskKind::M: return "M";
    }
    return "?";
}

TaskKind task_from_string(std::string_view s) {
    for (auto t : kAllTasks)
        if (to_string(t) == s) return t;
    throw ConfigError("unknown task '" + std::string(s) + "'");
}

TrialTiming draw_timing(TaskKind task, Phase phase, std::uint64_t seed) {
    TrialTiming timing;
    if (!has_delay(task)) return timing;
    if (phase == Phase::Test) {
        timing.delay_steps = kTestDelay;
    } else {
        Rng rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, kTrainDelays.size() - 1);
        timing.delay_steps = kTrainDelays[pick(rng)];
    }
    return timing;
}

Trial make_trial(TaskKind task, const TrialTiming& timing, double v1, double v2, std::uint64_t noise_seed,
                 const StimulusEncoding& enc) {
    Trial trial;
    trial.task = task;
    trial.timing = timing;
    trial.v1 = v1;
    trial.v2 = v2;

    const auto steps = timing.total();
    const auto respond_at = timing.response_start();
    trial.inputs = RowMatrix::Zero(static_cast<Eigen::Index>(steps), kInputChannels);
    trial.targets.assign(steps, kFixate);
    trial.mask.assign(steps, 1.0);

    Rng rng(noise_seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, enc.noise_std);
    const double phi1 = phase(rng);
    const double phi2 = phase(rng);
    const double omega = 2.0 * std::numbers::pi / enc.period;

    const bool lower = chooses_lower(task);
    const int choice = ((v1 > v2) != lower) ? kChoice1 : kChoice2;

    for (std::size_t t = 0; t < steps; ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        trial.inputs(row, 3 + static_cast<Eigen::Index>(task_index(task))) = 1.0;
        if (t < respond_at) trial.inputs(row, kFixationChannel) = 1.0;
        if (t < timing.stimulus_steps) {
            const double arg = omega * static_cast<double>(t);
            trial.inputs(row, 1) = v1 * (1.0 + enc.modulation * std::sin(arg + phi1)) + noise(rng);
            trial.inputs(row, 2) = v2 * (1.0 + enc.modulation * std::sin(arg + phi2)) + noise(rng);
        }
        if (t >= respond_at) {
            trial.targets[t] = choice;
            const auto k = t - respond_at;
            const double ramp = timing.response_steps > 1
                                    ? static_cast<double>(k) / static_cast<double>(timing.response_steps - 1)
                                    : 1.0;
            trial.mask[t] = 1.0 + 4.0 * ramp;
        }
    }
    return trial;
}

Trial generate_trial(TaskKind task, Phase phase, std::uint64_t seed, const StimulusEncoding& enc) {
    const auto timing = draw_timing(task, phase, derive_seed(seed, 1));
    const auto [v1, v2] = draw_values(derive_seed(seed, 2), enc);
    return make_trial(task, timing, v1, v2, derive_seed(seed, 3), enc);
}

std::vector<Trial> generate_batch(TaskKind task, std::size_t size, Phase phase, std::uint64_t seed,
                                  const StimulusEncoding& enc) {
    if (size < 1) throw ConfigError("batch size must be >= 1");
    const auto timing = draw_timing(task, phase, derive_seed(seed, 1));
    std::vector<Trial> batch;
    batch.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const auto item = derive_seed(seed, {2, i});
        const auto [v1, v2] = draw_values(derive_seed(item, 2), enc);
        batch.push_back(make_trial(task, timing, v1, v2, derive_seed(item, 3), enc));
    }
    return batch;
}

TrialScore score_trial(std::span<const int> predictions, const Trial& trial) {
    if (predictions.size() != trial.steps())
        throw DimensionError("prediction length " + std::to_string(predictions.size()) +
                             " does not match trial length " + std::to_string(trial.steps()));
    TrialScore score;
    double hit = 0.0;
    double weight = 0.0;
    std::array<double, kNumClasses> votes{};
    const auto respond_at = trial.timing.response_start();
    for (std::size_t t = 0; t < trial.steps(); ++t) {
        if (t < respond_at) {
            if (predictions[t] != kFixate) ++score.fixation_errors;
            continue;
        }
        weight += trial.mask[t];
        if (predictions[t] == trial.targets[t]) hit += trial.mask[t];
        if (predictions[t] >= 0 && predictions[t] < kNumClasses) votes[predictions[t]] += trial.mask[t];
    }
    score.weighted_accuracy = weight > 0.0 ? hit / weight : 0.0;
    const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
    score.trial_choice_correct = best == trial.correct_choice();
    return score;
}

double weighted_accuracy(std::span<const int> predictions, const Trial& trial) {
    return score_trial(predictions, trial).weighted_accuracy;
}

void save_trial(const std::filesystem::path& stem, const Trial& trial) {
    TrajectoryTensor inputs = TrajectoryTensor::from_matrix(1, trial.steps(), trial.inputs, {"trial", 0});
    auto dynb_path = stem;
    dynb_path += ".dynb";
    dynb::write(dynb_path, inputs);

    nlohmann::json j;
    j["task"] = to_string(trial.task);
    j["stimulus_steps"] = trial.timing.stimulus_steps;
    j["delay_steps"] = trial.timing.delay_steps;
    j["response_steps"] = trial.timing.response_steps;
    j["v1"] = trial.v1;
    j["v2"] = trial.v2;
    j["targets"] = trial.targets;
    j["mask"] = trial.mask;
    auto json_path = stem;
    json_path += ".json";
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot write " + json_path.string());
    os << j.dump(1) << '\n';
}

Trial load_trial(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    std::ifstream is(json_path);
    if (!is) throw IoError("cannot read " + json_path.string());
    const auto j = nlohmann::json::parse(is);
    auto dynb_path = stem;
    dynb_path += ".dynb";
    const auto inputs = dynb::read(dynb_path);

    Trial trial;
    trial.task = task_from_string(j.at("task").get<std::string>());
    trial.timing.stimulus_steps = j.at("stimulus_steps").get<std::size_t>();
    trial.timing.delay_steps = j.at("delay_steps").get<std::size_t>();
    trial.timing.response_steps = j.at("response_steps").get<std::size_t>();
    trial.v1 = j.at("v1").get<double>();
    trial.v2 = j.at("v2").get<double>();
    trial.targets = j.at("targets").get<std::vector<int>>();
    trial.mask = j.at("mask").get<std::vector<double>>();
    if (inputs.units() != kInputChannels || inputs.steps() != trial.targets.size())
        throw IoError("trial fixture " + stem.string() + " has inconsistent shapes");
    trial.inputs = inputs.flat();
    return trial;
}

}  // namespace dynabench
