#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dynabench {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TensorMeta {
    std::string source;
    std::uint64_t seed = 0;
};

// Activations indexed (condition, time, unit), stored row-major so that the
// flattened view is a (C*T) x N sample-by-feature matrix.
class TrajectoryTensor {
public:
    using Meta = TensorMeta;

    TrajectoryTensor() = default;
    TrajectoryTensor(std::size_t conditions, std::size_t steps, std::size_t units, Meta meta = {});
    TrajectoryTensor(std::size_t conditions, std::size_t steps, std::vector<double> values,
                     std::size_t units, Meta meta = {});

    // Builds a tensor from a flattened (C*T) x N matrix.
    static TrajectoryTensor from_matrix(std::size_t conditions, std::size_t steps,
                                        const Eigen::Ref<const RowMatrix>& flat, Meta meta = {});

    std::size_t conditions() const noexcept { return conditions_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t units() const noexcept { return units_; }
    std::size_t samples() const noexcept { return conditions_ * steps_; }

    double& at(std::size_t c, std::size_t t, std::size_t n) {
        return data_[(c * steps_ + t) * units_ + n];
    }
    double at(std::size_t c, std::size_t t, std::size_t n) const {
        return data_[(c * steps_ + t) * units_ + n];
    }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    Eigen::Map<RowMatrix> flat() {
        return {data_.data(), static_cast<Eigen::Index>(samples()), static_cast<Eigen::Index>(units_)};
    }
    Eigen::Map<const RowMatrix> flat() const {
        return {data_.data(), static_cast<Eigen::Index>(samples()), static_cast<Eigen::Index>(units_)};
    }

    Meta& meta() noexcept { return meta_; }
    const Meta& meta() const noexcept { return meta_; }

    // Throws DimensionError / NumericError when the tensor invariants
    // (C >= 1, T >= 2, N >= 1, finite entries) do not hold.
    void validate() const;

    bool same_shape(const TrajectoryTensor& other) const noexcept {
        return conditions_ == other.conditions_ && steps_ == other.steps_ && units_ == other.units_;
    }

    friend bool operator==(const TrajectoryTensor& a, const TrajectoryTensor& b) {
        return a.same_shape(b) && a.data_ == b.data_;
    }

private:
    std::size_t conditions_ = 0;
    std::size_t steps_ = 0;
    std::size_t units_ = 0;
    std::vector<double> data_;
    Meta meta_;
};

// DYNB container: "DYNB0001", u64 C, u64 T, u64 N (little endian), then
// C*T*N little-endian IEEE-754 doubles in (c,t,n) row-major order.
namespace dynb {

inline constexpr char kMagic[8] = {'D', 'Y', 'N', 'B', '0', '0', '0', '1'};

std::vector<std::uint8_t> encode(const TrajectoryTensor& x);
TrajectoryTensor decode(const std::vector<std::uint8_t>& bytes);

void write(const std::filesystem::path& path, const TrajectoryTensor& x);
TrajectoryTensor read(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint format.
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint64_t get_u64(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

}  // namespace dynb

}  // namespace dynabench
