#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gm {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape-tagged row-major float32 array. All reductions that feed gradients
/// accumulate in double.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<float> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> span() { return data_; }
    std::span<const float> span() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    float& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    float at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Throws TensorError naming the first non-finite entry, if any.
    void check_finite(const std::string& what) const;

    void fill(float v);

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// GMT0 file format: "GMT0" magic, u32-le header length, JSON header
/// {"dtype":"f32","shape":[...]}, raw little-endian float32 payload.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// Serialized GMT0 bytes (used for atomic writes and round-trip tests).
std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(const std::vector<std::uint8_t>& bytes);

/// Write bytes to a temp file in the target directory, then rename.
void atomic_write_file(const std::string& path, const void* data, std::size_t size);
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace gm
