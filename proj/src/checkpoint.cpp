#include "dynabench/error.hpp"
#include "dynabench/rnn.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iterator>
#include <map>

namespace dynabench {

namespace {

constexpr char kCkptMagic[8] = {'D', 'Y', 'N', 'K', '0', '0', '0', '1'};

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    dynb::put_u64(out, s.size());
    for (char c : s) out.push_back(static_cast<std::uint8_t>(c));
}

void put_block(std::vector<std::uint8_t>& out, const std::string& name, const Eigen::MatrixXd& m, bool vector) {
    put_string(out, name);
    if (vector) {
        dynb::put_u64(out, 1);
        dynb::put_u64(out, static_cast<std::uint64_t>(m.size()));
    } else {
        dynb::put_u64(out, 2);
        dynb::put_u64(out, static_cast<std::uint64_t>(m.rows()));
        dynb::put_u64(out, static_cast<std::uint64_t>(m.cols()));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) dynb::put_f64(out, m.data()[i]);
}

void put_params(std::vector<std::uint8_t>& out, const std::string& prefix, const NetParams& p) {
    p.for_each([&](const char* name, const auto& x, ParamGroup) {
        using T = std::decay_t<decltype(x)>;
        put_block(out, prefix + name, Eigen::MatrixXd(x), T::ColsAtCompileTime == 1);
    });
}

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::string where) : bytes_(bytes), where_(std::move(where)) {}

    std::uint64_t u64() {
        need(8);
        const auto v = dynb::get_u64(bytes_.data() + pos_);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const auto n = u64();
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > bytes_.size() - pos_) throw IoError(where_ + ": truncated checkpoint");
    }

    const std::vector<std::uint8_t>& bytes_;
    std::string where_;
    std::size_t pos_ = 8;
};

nlohmann::json config_json(const NetConfig& c) {
    return {{"id", c.id},
            {"cell", to_string(c.cell)},
            {"activation", to_string(c.activation)},
            {"hidden", c.hidden},
            {"lr", c.lr},
            {"batch", c.batch},
            {"alpha", c.alpha},
            {"grad_clip", c.grad_clip}};
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.id = j.at("id").get<int>();
    c.cell = cell_from_string(j.at("cell").get<std::string>());
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.hidden = j.at("hidden").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.grad_clip = j.at("grad_clip").get<double>();
    return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["config"] = config_json(ckpt.config);
    header["epoch"] = ckpt.epoch;
    header["accuracy"] = ckpt.accuracy;
    header["trials_seen"] = ckpt.trials_seen;
    header["rng_state"] = ckpt.rng_state;
    header["label"] = ckpt.label;
    if (!ckpt.meta.empty()) header["meta"] = ckpt.meta;
    if (ckpt.adam) {
        header["adam"] = {{"t", ckpt.adam->t},
                          {"lr", ckpt.adam->lr},
                          {"beta1", ckpt.adam->beta1},
                          {"beta2", ckpt.adam->beta2},
                          {"eps", ckpt.adam->eps}};
    }
    const auto text = header.dump();

    std::vector<std::uint8_t> out;
    for (char c : kCkptMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_string(out, text);
    dynb::put_u64(out, ckpt.adam ? 15 : 5);
    put_params(out, "", ckpt.params);
    if (ckpt.adam) {
        put_params(out, "adam_m.", ckpt.adam->m);
        put_params(out, "adam_v.", ckpt.adam->v);
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a temporary then rename, so an interrupted run never leaves a
    // half-written checkpoint under the final name.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write " + tmp.string());
        os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
    if (bytes.size() < 8 || !std::equal(bytes.begin(), bytes.begin() + 8, kCkptMagic,
                                        [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); }))
        throw IoError(path.string() + ": not a checkpoint (bad magic)");

    Reader rd(bytes, path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(rd.str());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad checkpoint header: " + e.what());
    }

    std::map<std::string, Eigen::MatrixXd> blocks;
    const auto count = rd.u64();
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name = rd.str();
        const auto rank = rd.u64();
        if (rank < 1 || rank > 2) throw IoError(path.string() + ": bad block rank for " + name);
        const auto rows = rd.u64();
        const auto cols = rank == 2 ? rd.u64() : 1;
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rd.f64();
        blocks[name] = std::move(m);
    }
    if (!rd.done()) throw IoError(path.string() + ": trailing bytes in checkpoint");

    Checkpoint ckpt;
    try {
        ckpt.config = config_from_json(header.at("config"));
        ckpt.epoch = header.at("epoch").get<std::size_t>();
        ckpt.accuracy = header.at("accuracy").get<std::vector<double>>();
        ckpt.trials_seen = header.at("trials_seen").get<std::uint64_t>();
        ckpt.rng_state = header.at("rng_state").get<std::string>();
        ckpt.label = header.value("label", std::string{});
        ckpt.meta = header.value("meta", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad checkpoint header: " + e.what());
    }

    const auto expected = NetParams::zeros(ckpt.config);
    auto fill = [&](const std::string& prefix, NetParams& p) {
        p = expected;
        p.for_each([&](const char* name, auto& x, ParamGroup) {
            const auto it = blocks.find(prefix + name);
            if (it == blocks.end()) throw IoError(path.string() + ": missing block " + prefix + name);
            if (it->second.rows() != x.rows() || it->second.cols() != x.cols())
                throw IoError(path.string() + ": block " + prefix + name + " has the wrong shape");
            x = it->second;
        });
    };
    fill("", ckpt.params);
    if (header.contains("adam")) {
        const auto& a = header["adam"];
        Adam adam;
        adam.t = a.at("t").get<std::uint64_t>();
        adam.lr = a.at("lr").get<double>();
        adam.beta1 = a.at("beta1").get<double>();
        adam.beta2 = a.at("beta2").get<double>();
        adam.eps = a.at("eps").get<double>();
        fill("adam_m.", adam.m);
        fill("adam_v.", adam.v);
        ckpt.adam = std::move(adam);
    }
    return ckpt;
}

}  // namespace dynabench
