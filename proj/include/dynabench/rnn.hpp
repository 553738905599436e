#pragma once

#include "dynabench/cogtasks.hpp"
#include "dynabench/random.hpp"
#include "dynabench/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dynabench {

enum class CellKind { LeakyRnn, LeakyGru };
enum class Activation { Relu, Softplus, Tanh };

std::string_view to_string(CellKind c) noexcept;
std::string_view to_string(Activation a) noexcept;
CellKind cell_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);

struct NetConfig {
    int id = 1;
    CellKind cell = CellKind::LeakyRnn;
    Activation activation = Activation::Tanh;
    std::size_t hidden = 128;
    double lr = 1e-3;
    std::size_t batch = 64;
    double alpha = 0.2;  // leak: dt / tau
    double grad_clip = 1.0;  // global gradient-norm bound; 0 disables

    // Number of gate blocks stacked in the input / recurrent matrices.
    std::size_t blocks() const noexcept { return cell == CellKind::LeakyGru ? 3 : 1; }
};

// The 2 (cell) x 3 (activation) x 2 (hidden) x 2 (lr) x 3 (batch) grid, ids 1..72.
std::vector<NetConfig> paper_grid();

enum class ParamGroup { Input = 0, Recurrent = 1, Readout = 2 };

// Column-vector convention: h' depends on w_in * x and w_rec * h. For the GRU,
// rows are stacked as [update gate; reset gate; candidate].
struct NetParams {
    Eigen::MatrixXd w_in;    // (blocks*hidden) x 7
    Eigen::MatrixXd w_rec;   // (blocks*hidden) x hidden
    Eigen::VectorXd b;       // blocks*hidden
    Eigen::MatrixXd w_out;   // 3 x hidden
    Eigen::VectorXd b_out;   // 3

    static NetParams zeros(const NetConfig& cfg);
    static NetParams initialize(const NetConfig& cfg, std::uint64_t seed);

    bool all_finite() const;
    std::size_t size() const;

    template <typename F>
    void for_each(F&& f) {
        f("w_in", w_in, ParamGroup::Input);
        f("w_rec", w_rec, ParamGroup::Recurrent);
        f("b", b, ParamGroup::Recurrent);
        f("w_out", w_out, ParamGroup::Readout);
        f("b_out", b_out, ParamGroup::Readout);
    }
    template <typename F>
    void for_each(F&& f) const {
        f("w_in", w_in, ParamGroup::Input);
        f("w_rec", w_rec, ParamGroup::Recurrent);
        f("b", b, ParamGroup::Recurrent);
        f("w_out", w_out, ParamGroup::Readout);
        f("b_out", b_out, ParamGroup::Readout);
    }

    friend bool operator==(const NetParams& a, const NetParams& b) {
        return a.w_in == b.w_in && a.w_rec == b.w_rec && a.b == b.b && a.w_out == b.w_out && a.b_out == b.b_out;
    }
};

struct FreezeMask {
    bool input = true;
    bool recurrent = true;
    bool readout = true;

    static FreezeMask all_trainable() { return {}; }
    static FreezeMask input_only() { return {true, false, false}; }
    bool trainable(ParamGroup g) const noexcept {
        return g == ParamGroup::Input ? input : g == ParamGroup::Recurrent ? recurrent : readout;
    }
    bool any() const noexcept { return input || recurrent || readout; }
};

Eigen::VectorXd cell_step(const NetParams& params, const NetConfig& cfg, const Eigen::VectorXd& h,
                          const Eigen::VectorXd& x);

struct TrialForward {
    Eigen::MatrixXd logits;        // steps x 3
    TrajectoryTensor hidden;       // (1, stimulus steps, hidden)
    std::vector<int> predictions;  // argmax per step, ties to the lowest class
};

TrialForward forward_trial(const NetParams& params, const NetConfig& cfg, const Trial& trial);

// Hidden states over the stimulus period for a set of same-length trials:
// tensor (trials, stimulus steps, hidden).
TrajectoryTensor record_hidden(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& trials);

struct LossAndGrad {
    double loss = 0.0;
    NetParams grad;
};

// Mask-weighted cross-entropy over all steps of a same-length batch, with
// gradients by backpropagation through time.
LossAndGrad batch_loss_and_grad(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& batch);
double batch_loss(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& batch);

// Mean weighted accuracy (and trial-level choice accuracy) over a trial set.
struct Accuracy {
    double weighted = 0.0;
    double trial_level = 0.0;
};
Accuracy evaluate(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& trials);

class Adam {
public:
    Adam() = default;
    Adam(const NetParams& shape, double lr);

    void step(NetParams& params, const NetParams& grad, const FreezeMask& freeze);

    NetParams m;
    NetParams v;
    std::uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct StopRule {
    double accuracy = 0.99;
    std::size_t max_epochs = 50;
    std::size_t trials_per_epoch = 10000;  // per task
    std::size_t validation_trials = 512;   // per task
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::vector<double> accuracy;  // per listed task, weighted
    std::vector<double> trial_accuracy;  // per listed task, trial level
    double mean_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool converged = false;
    bool failed = false;  // non-finite loss or parameters
    std::string failure;
};

// Validation set for one task: seeded, shared by every network of a run.
std::vector<Trial> validation_set(TaskKind task, std::size_t count, std::uint64_t seed, Phase phase = Phase::Train);

// Stateful single-stage trainer. Every piece of state that influences the
// continuation lives in the members, so a snapshot restores bit-for-bit.
class StageTrainer {
public:
    StageTrainer(NetParams params, NetConfig cfg, std::vector<TaskKind> tasks, FreezeMask freeze, StopRule stop,
                 std::uint64_t seed, std::uint64_t validation_seed);

    // Trains one epoch (all tasks sequentially) then validates. Returns false
    // once the stage is finished (converged, failed or out of epochs).
    bool run_epoch();
    bool finished() const noexcept;

    const NetParams& params() const noexcept { return params_; }
    const TrainHistory& history() const noexcept { return history_; }
    const NetConfig& config() const noexcept { return cfg_; }
    std::size_t epoch() const noexcept { return history_.epochs.size(); }
    std::uint64_t trials_seen() const noexcept { return trials_seen_; }

    // Serialized engine state (text form of the std engine).
    std::string rng_state() const;

    struct Snapshot {
        NetParams params;
        Adam adam;
        std::string rng_state;
        TrainHistory history;
        std::uint64_t trials_seen = 0;
    };
    Snapshot snapshot() const;
    void restore(const Snapshot& s);

private:
    NetParams params_;
    NetConfig cfg_;
    std::vector<TaskKind> tasks_;
    FreezeMask freeze_;
    StopRule stop_;
    std::uint64_t validation_seed_;
    Adam adam_;
    Rng rng_;
    TrainHistory history_;
    std::uint64_t trials_seen_ = 0;
    std::vector<std::vector<Trial>> validation_;
};

struct StageResult {
    NetParams params;
    TrainHistory history;
};

using EpochCallback = std::function<void(const StageTrainer&)>;

StageResult train_stage(const NetParams& params, const NetConfig& cfg, const std::vector<TaskKind>& tasks,
                        const FreezeMask& freeze, const StopRule& stop, std::uint64_t seed,
                        std::uint64_t validation_seed, const EpochCallback& on_epoch = {});

// Training-progress windows as fractions of the total epoch count.
struct Window {
    double begin;
    double end;
};
std::vector<Window> default_windows();

struct WindowPick {
    std::size_t epoch = 1;  // 1-based epoch nearest the window midpoint
    bool duplicate = false;  // shares its epoch with an earlier window
};
std::vector<WindowPick> checkpoint_windows(std::size_t total_epochs, const std::vector<Window>& windows);

// Checkpoint: "DYNK0001", u64 header length, JSON header, u64 block count,
// then per block: u64 name length, name, u64 rank, u64 dims..., f64 values
// (column-major), all little endian.
struct Checkpoint {
    NetConfig config;
    NetParams params;
    std::size_t epoch = 0;
    std::vector<double> accuracy;
    std::uint64_t trials_seen = 0;
    std::string rng_state;
    std::optional<Adam> adam;
    std::string label;
    std::string meta;  // caller-defined JSON text, stored verbatim
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace dynabench
