#include "dynabench/tensor.hpp"

#include "dynabench/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dynabench {

TrajectoryTensor::TrajectoryTensor(std::size_t conditions, std::size_t steps, std::size_t units, Meta meta)
    : conditions_(conditions), steps_(steps), units_(units),
      data_(conditions * steps * units, 0.0), meta_(std::move(meta)) {}

TrajectoryTensor::TrajectoryTensor(std::size_t conditions, std::size_t steps, std::vector<double> values,
                                   std::size_t units, Meta meta)
    : conditions_(conditions), steps_(steps), units_(units), data_(std::move(values)), meta_(std::move(meta)) {
    if (data_.size() != conditions_ * steps_ * units_)
        throw DimensionError("tensor value count " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(conditions_) + "x" + std::to_string(steps_) + "x" +
                             std::to_string(units_));
}

TrajectoryTensor TrajectoryTensor::from_matrix(std::size_t conditions, std::size_t steps,
                                               const Eigen::Ref<const RowMatrix>& flat, Meta meta) {
    if (static_cast<std::size_t>(flat.rows()) != conditions * steps)
        throw DimensionError("flat matrix has " + std::to_string(flat.rows()) + " rows, expected " +
                             std::to_string(conditions * steps));
    TrajectoryTensor out(conditions, steps, static_cast<std::size_t>(flat.cols()), std::move(meta));
    out.flat() = flat;
    return out;
}

void TrajectoryTensor::validate() const {
    if (conditions_ < 1 || steps_ < 2 || units_ < 1)
        throw DimensionError("tensor shape (" + std::to_string(conditions_) + ", " + std::to_string(steps_) +
                             ", " + std::to_string(units_) + ") violates C>=1, T>=2, N>=1");
    for (double v : data_)
        if (!std::isfinite(v)) throw NumericError("tensor contains non-finite entries");
}

namespace dynb {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

std::vector<std::uint8_t> encode(const TrajectoryTensor& x) {
    std::vector<std::uint8_t> out;
    out.reserve(32 + 8 * x.values().size());
    for (char ch : kMagic) out.push_back(static_cast<std::uint8_t>(ch));
    put_u64(out, x.conditions());
    put_u64(out, x.steps());
    put_u64(out, x.units());
    for (double v : x.values()) put_f64(out, v);
    return out;
}

TrajectoryTensor decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 32 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw IoError("not a DYNB container (bad magic or truncated header)");
    const auto c = get_u64(bytes.data() + 8);
    const auto t = get_u64(bytes.data() + 16);
    const auto n = get_u64(bytes.data() + 24);
    if (c == 0 || t == 0 || n == 0 || c > (1ULL << 40) / t / n)
        throw IoError("DYNB header has implausible shape");
    const std::uint64_t count = c * t * n;
    if (bytes.size() != 32 + 8 * count)
        throw IoError("DYNB payload size " + std::to_string(bytes.size() - 32) + " does not match header");
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i) values[i] = get_f64(bytes.data() + 32 + 8 * i);
    return TrajectoryTensor(c, t, std::move(values), n);
}

void write(const std::filesystem::path& path, const TrajectoryTensor& x) {
    const auto bytes = encode(x);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

TrajectoryTensor read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace dynb

}  // namespace dynabench
