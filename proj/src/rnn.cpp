#include "dynabench/rnn.hpp"

#include "dynabench/error.hpp"
#include "dynabench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dynabench {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(CellKind c) noexcept {
    return c == CellKind::LeakyRnn ? "LEAKY_RNN" : "LEAKY_GRU";
}

std::string_view to_string(Activation a) noexcept {
    switch (a) {
        case Activation::Relu: return "RELU";
        case Activation::Softplus: return "SOFTPLUS";
        case Activation::Tanh: return "TANH";
    }
    return "?";
}

CellKind cell_from_string(std::string_view s) {
    if (s == "LEAKY_RNN") return CellKind::LeakyRnn;
    if (s == "LEAKY_GRU") return CellKind::LeakyGru;
    throw ConfigError("unknown cell '" + std::string(s) + "'");
}

Activation activation_from_string(std::string_view s) {
    for (auto a : {Activation::Relu, Activation::Softplus, Activation::Tanh})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::vector<NetConfig> paper_grid() {
    std::vector<NetConfig> grid;
    int id = 1;
    for (auto cell : {CellKind::LeakyRnn, CellKind::LeakyGru})
        for (auto act : {Activation::Relu, Activation::Softplus, Activation::Tanh})
            for (std::size_t hidden : {128, 256})
                for (double lr : {1e-2, 1e-3})
                    for (std::size_t batch : {64, 128, 256}) {
                        NetConfig cfg;
                        cfg.id = id++;
                        cfg.cell = cell;
                        cfg.activation = act;
                        cfg.hidden = hidden;
                        cfg.lr = lr;
                        cfg.batch = batch;
                        grid.push_back(cfg);
                    }
    return grid;
}

namespace {

double activate(Activation a, double p) {
    switch (a) {
        case Activation::Relu: return p > 0.0 ? p : 0.0;
        case Activation::Softplus: return p > 30.0 ? p : std::log1p(std::exp(p));
        case Activation::Tanh: return std::tanh(p);
    }
    return p;
}

// Derivative expressed through the pre-activation.
double activate_grad(Activation a, double p) {
    switch (a) {
        case Activation::Relu: return p > 0.0 ? 1.0 : 0.0;
        case Activation::Softplus: return 1.0 / (1.0 + std::exp(-p));
        case Activation::Tanh: {
            const double t = std::tanh(p);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

double sigmoid(double p) { return 1.0 / (1.0 + std::exp(-p)); }

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

// Inputs, targets and loss weights of a same-length batch; column t*B + b
// holds step t of trial b.
struct BatchData {
    Eigen::Index steps = 0;
    Eigen::Index width = 0;
    MatrixXd x;
    std::vector<int> targets;
    std::vector<double> weights;

    explicit BatchData(const std::vector<Trial>& batch) {
        if (batch.empty()) throw DimensionError("empty batch");
        steps = static_cast<Eigen::Index>(batch.front().steps());
        width = static_cast<Eigen::Index>(batch.size());
        x.resize(kInputChannels, steps * width);
        targets.resize(static_cast<std::size_t>(steps * width));
        weights.resize(targets.size());
        double total = 0.0;
        for (Eigen::Index b = 0; b < width; ++b) {
            const auto& trial = batch[static_cast<std::size_t>(b)];
            if (static_cast<Eigen::Index>(trial.steps()) != steps)
                throw DimensionError("all trials in a batch must share the same length");
            for (Eigen::Index t = 0; t < steps; ++t) {
                const auto col = t * width + b;
                x.col(col) = trial.inputs.row(t).transpose();
                targets[static_cast<std::size_t>(col)] = trial.targets[static_cast<std::size_t>(t)];
                weights[static_cast<std::size_t>(col)] = trial.mask[static_cast<std::size_t>(t)];
                total += trial.mask[static_cast<std::size_t>(t)];
            }
        }
        for (auto& w : weights) w /= total;
    }

    Eigen::Index cols() const { return steps * width; }
};

// Forward pass over a batch, keeping what backpropagation needs.
struct ForwardCache {
    MatrixXd h;       // hidden x (steps+1)*width; block 0 is the zero initial state
    MatrixXd pre;     // RNN: pre-activation; GRU: candidate pre-activation
    MatrixXd act;     // RNN: f(pre); GRU: candidate f(pre)
    MatrixXd z;       // GRU update gate
    MatrixXd r;       // GRU reset gate
    MatrixXd logits;  // 3 x steps*width
};

ForwardCache run_forward(const NetParams& p, const NetConfig& cfg, const BatchData& data) {
    const auto hs = static_cast<Eigen::Index>(cfg.hidden);
    const auto w = data.width;
    const auto n = data.cols();
    const double alpha = cfg.alpha;

    ForwardCache fc;
    fc.h = MatrixXd::Zero(hs, n + w);
    // Input drive for every step at once.
    MatrixXd drive = p.w_in * data.x;
    drive.colwise() += p.b;

    if (cfg.cell == CellKind::LeakyRnn) {
        fc.pre.resize(hs, n);
        fc.act.resize(hs, n);
        for (Eigen::Index t = 0; t < data.steps; ++t) {
            auto pre = fc.pre.middleCols(t * w, w);
            pre.noalias() = p.w_rec * fc.h.middleCols(t * w, w);
            pre += drive.middleCols(t * w, w);
            auto act = fc.act.middleCols(t * w, w);
            act = pre.unaryExpr([&](double v) { return activate(cfg.activation, v); });
            fc.h.middleCols((t + 1) * w, w) = (1.0 - alpha) * fc.h.middleCols(t * w, w) + alpha * act;
        }
    } else {
        fc.pre.resize(hs, n);
        fc.act.resize(hs, n);
        fc.z.resize(hs, n);
        fc.r.resize(hs, n);
        MatrixXd gates(2 * hs, w);
        MatrixXd rh(hs, w);
        for (Eigen::Index t = 0; t < data.steps; ++t) {
            const auto h_prev = fc.h.middleCols(t * w, w);
            gates.noalias() = p.w_rec.topRows(2 * hs) * h_prev;
            gates += drive.middleCols(t * w, w).topRows(2 * hs);
            auto z = fc.z.middleCols(t * w, w);
            auto r = fc.r.middleCols(t * w, w);
            z = gates.topRows(hs).unaryExpr([](double v) { return sigmoid(v); });
            r = gates.bottomRows(hs).unaryExpr([](double v) { return sigmoid(v); });
            rh = r.cwiseProduct(h_prev);
            auto pre = fc.pre.middleCols(t * w, w);
            pre.noalias() = p.w_rec.bottomRows(hs) * rh;
            pre += drive.middleCols(t * w, w).bottomRows(hs);
            auto cand = fc.act.middleCols(t * w, w);
            cand = pre.unaryExpr([&](double v) { return activate(cfg.activation, v); });
            fc.h.middleCols((t + 1) * w, w) = h_prev + alpha * z.cwiseProduct(cand - h_prev);
        }
    }
    fc.logits.noalias() = p.w_out * fc.h.rightCols(n);
    fc.logits.colwise() += p.b_out;
    return fc;
}

// Mask-weighted cross-entropy; fills d(loss)/d(logits) when requested.
double cross_entropy(const MatrixXd& logits, const BatchData& data, MatrixXd* dlogits) {
    double loss = 0.0;
    if (dlogits) dlogits->resize(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double mx = logits.col(c).maxCoeff();
        const VectorXd e = (logits.col(c).array() - mx).exp();
        const double sum = e.sum();
        const auto target = data.targets[static_cast<std::size_t>(c)];
        const double w = data.weights[static_cast<std::size_t>(c)];
        loss -= w * (logits(target, c) - mx - std::log(sum));
        if (dlogits) {
            dlogits->col(c) = w * e / sum;
            (*dlogits)(target, c) -= w;
        }
    }
    return loss;
}

std::vector<int> argmax_columns(const MatrixXd& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index k = 1; k < logits.rows(); ++k)
            if (logits(k, c) > logits(arg, c)) arg = k;
        out[static_cast<std::size_t>(c)] = static_cast<int>(arg);
    }
    return out;
}

// Splits a set of trials into runs of equal length, at most `cap` each.
std::vector<std::vector<Trial>> same_length_chunks(const std::vector<Trial>& trials, std::size_t cap) {
    std::vector<std::vector<Trial>> chunks;
    for (const auto& trial : trials) {
        if (chunks.empty() || chunks.back().size() >= cap || chunks.back().front().steps() != trial.steps())
            chunks.emplace_back();
        chunks.back().push_back(trial);
    }
    return chunks;
}

}  // namespace

NetParams NetParams::zeros(const NetConfig& cfg) {
    const auto hs = static_cast<Eigen::Index>(cfg.hidden);
    const auto rows = static_cast<Eigen::Index>(cfg.blocks()) * hs;
    NetParams p;
    p.w_in = MatrixXd::Zero(rows, kInputChannels);
    p.w_rec = MatrixXd::Zero(rows, hs);
    p.b = VectorXd::Zero(rows);
    p.w_out = MatrixXd::Zero(kNumClasses, hs);
    p.b_out = VectorXd::Zero(kNumClasses);
    return p;
}

NetParams NetParams::initialize(const NetConfig& cfg, std::uint64_t seed) {
    const auto hs = static_cast<Eigen::Index>(cfg.hidden);
    const auto blocks = static_cast<Eigen::Index>(cfg.blocks());
    Rng rng(seed);
    NetParams p = zeros(cfg);
    p.w_in = gaussian(blocks * hs, kInputChannels, 1.0 / std::sqrt(static_cast<double>(kInputChannels)), rng);
    if (cfg.cell == CellKind::LeakyRnn)
        p.w_rec = random_orthogonal(hs, derive_seed(seed, 0x0127));
    else
        p.w_rec = gaussian(blocks * hs, hs, 1.0 / std::sqrt(static_cast<double>(hs)), rng);
    p.w_out = gaussian(kNumClasses, hs, 1.0 / std::sqrt(static_cast<double>(hs)), rng);
    return p;
}

bool NetParams::all_finite() const {
    return w_in.allFinite() && w_rec.allFinite() && b.allFinite() && w_out.allFinite() && b_out.allFinite();
}

std::size_t NetParams::size() const {
    return static_cast<std::size_t>(w_in.size() + w_rec.size() + b.size() + w_out.size() + b_out.size());
}

VectorXd cell_step(const NetParams& p, const NetConfig& cfg, const VectorXd& h, const VectorXd& x) {
    const auto hs = static_cast<Eigen::Index>(cfg.hidden);
    if (h.size() != hs || x.size() != static_cast<Eigen::Index>(kInputChannels))
        throw DimensionError("cell_step: hidden or input size mismatch");
    const double alpha = cfg.alpha;
    VectorXd out;
    if (cfg.cell == CellKind::LeakyRnn) {
        const VectorXd pre = p.w_rec * h + p.w_in * x + p.b;
        out = (1.0 - alpha) * h + alpha * pre.unaryExpr([&](double v) { return activate(cfg.activation, v); });
    } else {
        const VectorXd gates = p.w_rec.topRows(2 * hs) * h + p.w_in.topRows(2 * hs) * x + p.b.head(2 * hs);
        const VectorXd z = gates.head(hs).unaryExpr([](double v) { return sigmoid(v); });
        const VectorXd r = gates.tail(hs).unaryExpr([](double v) { return sigmoid(v); });
        const VectorXd pre = p.w_rec.bottomRows(hs) * r.cwiseProduct(h) + p.w_in.bottomRows(hs) * x + p.b.tail(hs);
        const VectorXd cand = pre.unaryExpr([&](double v) { return activate(cfg.activation, v); });
        out = h + alpha * z.cwiseProduct(cand - h);
    }
    if (!out.allFinite()) throw NumericError("cell_step produced a non-finite hidden state");
    return out;
}

TrialForward forward_trial(const NetParams& params, const NetConfig& cfg, const Trial& trial) {
    const BatchData data({trial});
    const auto fc = run_forward(params, cfg, data);
    for (Eigen::Index t = 1; t <= data.steps; ++t)
        if (!fc.h.col(t).allFinite())
            throw NumericError("forward_trial: non-finite hidden state at step " + std::to_string(t - 1));
    TrialForward out;
    out.logits = fc.logits.transpose();
    out.predictions = argmax_columns(fc.logits);
    const auto record = std::min<std::size_t>(trial.timing.stimulus_steps, trial.steps());
    RowMatrix hidden = fc.h.middleCols(1, static_cast<Eigen::Index>(record)).transpose();
    out.hidden = TrajectoryTensor::from_matrix(1, record, hidden, {"hidden", 0});
    return out;
}

TrajectoryTensor record_hidden(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& trials) {
    if (trials.empty()) throw DimensionError("record_hidden: no trials");
    const auto record = trials.front().timing.stimulus_steps;
    const auto hs = cfg.hidden;
    TrajectoryTensor out(trials.size(), record, hs, {"hidden", 0});
    std::size_t offset = 0;
    for (const auto& chunk : same_length_chunks(trials, 256)) {
        if (chunk.front().timing.stimulus_steps != record)
            throw DimensionError("record_hidden: trials must share the stimulus period");
        const BatchData data(chunk);
        const auto fc = run_forward(params, cfg, data);
        if (!fc.h.allFinite()) throw NumericError("record_hidden: non-finite hidden state");
        const auto w = data.width;
        for (Eigen::Index b = 0; b < w; ++b)
            for (std::size_t t = 0; t < record; ++t)
                for (std::size_t u = 0; u < hs; ++u)
                    out.at(offset + static_cast<std::size_t>(b), t, u) =
                        fc.h(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t + 1) * w + b);
        offset += chunk.size();
    }
    return out;
}

LossAndGrad batch_loss_and_grad(const NetParams& p, const NetConfig& cfg, const std::vector<Trial>& batch) {
    const BatchData data(batch);
    const auto fc = run_forward(p, cfg, data);
    MatrixXd dlogits;
    LossAndGrad out;
    out.loss = cross_entropy(fc.logits, data, &dlogits);
    out.grad = NetParams::zeros(cfg);
    auto& g = out.grad;

    const auto hs = static_cast<Eigen::Index>(cfg.hidden);
    const auto w = data.width;
    const auto n = data.cols();
    const double alpha = cfg.alpha;

    g.w_out.noalias() = dlogits * fc.h.rightCols(n).transpose();
    g.b_out = dlogits.rowwise().sum();
    // Readout contribution to every hidden state at once.
    const MatrixXd dh_out = p.w_out.transpose() * dlogits;

    MatrixXd carry = MatrixXd::Zero(hs, w);  // d(loss)/d(h_t) from later steps
    if (cfg.cell == CellKind::LeakyRnn) {
        MatrixXd dpre_all(hs, n);
        for (Eigen::Index t = data.steps - 1; t >= 0; --t) {
            carry += dh_out.middleCols(t * w, w);
            const auto pre = fc.pre.middleCols(t * w, w);
            auto dpre = dpre_all.middleCols(t * w, w);
            dpre = alpha * carry.cwiseProduct(pre.unaryExpr([&](double v) { return activate_grad(cfg.activation, v); }));
            carry = (1.0 - alpha) * carry;
            carry.noalias() += p.w_rec.transpose() * dpre;
        }
        g.w_rec.noalias() = dpre_all * fc.h.leftCols(n).transpose();
        g.w_in.noalias() = dpre_all * data.x.transpose();
        g.b = dpre_all.rowwise().sum();
    } else {
        MatrixXd dgate_all(3 * hs, n);  // d(loss)/d(pre-activation) for [z; r; candidate]
        MatrixXd rh_all(hs, n);
        MatrixXd drh(hs, w);
        for (Eigen::Index t = data.steps - 1; t >= 0; --t) {
            carry += dh_out.middleCols(t * w, w);
            const auto h_prev = fc.h.middleCols(t * w, w);
            const auto z = fc.z.middleCols(t * w, w);
            const auto r = fc.r.middleCols(t * w, w);
            const auto cand = fc.act.middleCols(t * w, w);
            const auto pre = fc.pre.middleCols(t * w, w);
            auto dz = dgate_all.middleCols(t * w, w).topRows(hs);
            auto dr = dgate_all.middleCols(t * w, w).middleRows(hs, hs);
            auto dc = dgate_all.middleCols(t * w, w).bottomRows(hs);

            dz = (alpha * carry.cwiseProduct(cand - h_prev)).cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
            dc = (alpha * carry.cwiseProduct(z))
                     .cwiseProduct(pre.unaryExpr([&](double v) { return activate_grad(cfg.activation, v); }));
            drh.noalias() = p.w_rec.bottomRows(hs).transpose() * dc;
            dr = drh.cwiseProduct(h_prev).cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
            rh_all.middleCols(t * w, w) = r.cwiseProduct(h_prev);

            MatrixXd next = carry.cwiseProduct((1.0 - alpha * z.array()).matrix());
            next += drh.cwiseProduct(r);
            next.noalias() += p.w_rec.topRows(2 * hs).transpose() * dgate_all.middleCols(t * w, w).topRows(2 * hs);
            carry = std::move(next);
        }
        g.w_rec.topRows(2 * hs).noalias() = dgate_all.topRows(2 * hs) * fc.h.leftCols(n).transpose();
        g.w_rec.bottomRows(hs).noalias() = dgate_all.bottomRows(hs) * rh_all.transpose();
        g.w_in.noalias() = dgate_all * data.x.transpose();
        g.b = dgate_all.rowwise().sum();
    }
    return out;
}

double batch_loss(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& batch) {
    const BatchData data(batch);
    return cross_entropy(run_forward(params, cfg, data).logits, data, nullptr);
}

Accuracy evaluate(const NetParams& params, const NetConfig& cfg, const std::vector<Trial>& trials) {
    if (trials.empty()) throw DimensionError("evaluate: no trials");
    double weighted = 0.0;
    double trial_level = 0.0;
    for (const auto& chunk : same_length_chunks(trials, 256)) {
        const BatchData data(chunk);
        const auto pred = argmax_columns(run_forward(params, cfg, data).logits);
        const auto w = static_cast<std::size_t>(data.width);
        std::vector<int> per_trial(static_cast<std::size_t>(data.steps));
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            for (std::size_t t = 0; t < per_trial.size(); ++t) per_trial[t] = pred[t * w + b];
            const auto score = score_trial(per_trial, chunk[b]);
            weighted += score.weighted_accuracy;
            trial_level += score.trial_choice_correct ? 1.0 : 0.0;
        }
    }
    const auto count = static_cast<double>(trials.size());
    return {weighted / count, trial_level / count};
}

Adam::Adam(const NetParams& shape, double learning_rate) : lr(learning_rate) {
    m = shape;
    v = shape;
    m.for_each([](const char*, auto& x, ParamGroup) { x.setZero(); });
    v.for_each([](const char*, auto& x, ParamGroup) { x.setZero(); });
}

void Adam::step(NetParams& params, const NetParams& grad, const FreezeMask& freeze) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    NetParams* moments[2] = {&m, &v};
    auto update = [&](auto& p, const auto& g, auto& mm, auto& vv, ParamGroup group) {
        if (!freeze.trainable(group)) return;
        mm = beta1 * mm + (1.0 - beta1) * g;
        vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
    };
    update(params.w_in, grad.w_in, moments[0]->w_in, moments[1]->w_in, ParamGroup::Input);
    update(params.w_rec, grad.w_rec, moments[0]->w_rec, moments[1]->w_rec, ParamGroup::Recurrent);
    update(params.b, grad.b, moments[0]->b, moments[1]->b, ParamGroup::Recurrent);
    update(params.w_out, grad.w_out, moments[0]->w_out, moments[1]->w_out, ParamGroup::Readout);
    update(params.b_out, grad.b_out, moments[0]->b_out, moments[1]->b_out, ParamGroup::Readout);
}

std::vector<Trial> validation_set(TaskKind task, std::size_t count, std::uint64_t seed, Phase phase) {
    std::vector<Trial> trials;
    trials.reserve(count);
    constexpr std::size_t chunk = 64;
    for (std::size_t k = 0; trials.size() < count; ++k) {
        const auto size = std::min(chunk, count - trials.size());
        auto batch = generate_batch(task, size, phase, derive_seed(seed, {task_index(task), k}));
        std::move(batch.begin(), batch.end(), std::back_inserter(trials));
    }
    return trials;
}

StageTrainer::StageTrainer(NetParams params, NetConfig cfg, std::vector<TaskKind> tasks, FreezeMask freeze,
                           StopRule stop, std::uint64_t seed, std::uint64_t validation_seed)
    : params_(std::move(params)), cfg_(cfg), tasks_(std::move(tasks)), freeze_(freeze), stop_(stop),
      validation_seed_(validation_seed), adam_(params_, cfg.lr), rng_(seed) {
    if (tasks_.empty()) throw ConfigError("train_stage: task list is empty");
    if (!freeze_.any()) throw ConfigError("train_stage: every parameter group is frozen");
    for (auto task : tasks_) validation_.push_back(validation_set(task, stop_.validation_trials, validation_seed_));
}

bool StageTrainer::finished() const noexcept {
    return history_.failed || history_.converged || history_.epochs.size() >= stop_.max_epochs;
}

bool StageTrainer::run_epoch() {
    if (finished()) return false;
    EpochRecord record;
    record.epoch = history_.epochs.size() + 1;
    double loss_sum = 0.0;
    std::size_t updates = 0;
    for (auto task : tasks_) {
        for (std::size_t done = 0; done < stop_.trials_per_epoch;) {
            const auto size = std::min(cfg_.batch, stop_.trials_per_epoch - done);
            const auto batch = generate_batch(task, size, Phase::Train, rng_());
            auto lg = batch_loss_and_grad(params_, cfg_, batch);
            if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
                history_.failed = true;
                history_.failure = "non-finite loss in epoch " + std::to_string(record.epoch) + " on task " +
                                   std::string(to_string(task));
                history_.epochs.push_back(record);
                return false;
            }
            double norm2 = 0.0;
            lg.grad.for_each([&](const char*, auto& x, ParamGroup group) {
                if (!freeze_.trainable(group))
                    x.setZero();
                else
                    norm2 += x.squaredNorm();
            });
            if (cfg_.grad_clip > 0.0 && std::sqrt(norm2) > cfg_.grad_clip) {
                const double scale = cfg_.grad_clip / std::sqrt(norm2);
                lg.grad.for_each([&](const char*, auto& x, ParamGroup) { x *= scale; });
            }
            adam_.step(params_, lg.grad, freeze_);
            loss_sum += lg.loss;
            ++updates;
            done += size;
            trials_seen_ += size;
        }
    }
    record.mean_loss = updates ? loss_sum / static_cast<double>(updates) : 0.0;
    if (!params_.all_finite()) {
        history_.failed = true;
        history_.failure = "non-finite parameters after epoch " + std::to_string(record.epoch);
        history_.epochs.push_back(record);
        return false;
    }
    bool all_good = true;
    for (const auto& val : validation_) {
        const auto acc = evaluate(params_, cfg_, val);
        record.accuracy.push_back(acc.weighted);
        record.trial_accuracy.push_back(acc.trial_level);
        all_good = all_good && acc.weighted >= stop_.accuracy;
    }
    history_.epochs.push_back(record);
    history_.converged = all_good;
    return !finished();
}

std::string StageTrainer::rng_state() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
}

StageTrainer::Snapshot StageTrainer::snapshot() const {
    return {params_, adam_, rng_state(), history_, trials_seen_};
}

void StageTrainer::restore(const Snapshot& s) {
    params_ = s.params;
    adam_ = s.adam;
    std::istringstream is(s.rng_state);
    is >> rng_;
    if (!is) throw IoError("cannot restore RNG state");
    history_ = s.history;
    trials_seen_ = s.trials_seen;
}

StageResult train_stage(const NetParams& params, const NetConfig& cfg, const std::vector<TaskKind>& tasks,
                        const FreezeMask& freeze, const StopRule& stop, std::uint64_t seed,
                        std::uint64_t validation_seed, const EpochCallback& on_epoch) {
    StageTrainer trainer(params, cfg, tasks, freeze, stop, seed, validation_seed);
    while (!trainer.finished()) {
        trainer.run_epoch();
        if (on_epoch) on_epoch(trainer);
    }
    return {trainer.params(), trainer.history()};
}

std::vector<Window> default_windows() {
    return {{0.10, 0.25}, {0.25, 0.40}, {0.40, 0.55}, {0.55, 0.70}, {0.70, 0.85}, {0.85, 1.00}};
}

std::vector<WindowPick> checkpoint_windows(std::size_t total_epochs, const std::vector<Window>& windows) {
    if (total_epochs == 0) throw ConfigError("checkpoint_windows: no epochs recorded");
    std::vector<WindowPick> picks;
    for (const auto& w : windows) {
        const double mid = 0.5 * (w.begin + w.end) * static_cast<double>(total_epochs);
        const auto epoch = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(mid)), 1, total_epochs);
        const bool dup = std::any_of(picks.begin(), picks.end(), [&](const WindowPick& p) { return p.epoch == epoch; });
        picks.push_back({epoch, dup});
    }
    return picks;
}

}  // namespace dynabench
