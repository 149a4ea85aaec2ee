#include "gm/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace gm {

static_assert(std::endian::native == std::endian::little,
              "GMT0 I/O assumes a little-endian host");

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<float> data) {
    if (data.size() != shape_numel(shape)) {
        throw TensorError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape product " +
                          std::to_string(shape_numel(shape)));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    t.check_finite("tensor construction");
    return t;
}

void Tensor::check_finite(const std::string& what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw TensorError(what + ": non-finite value at flat offset " +
                              std::to_string(i));
        }
    }
}

void Tensor::fill(float v) {
    std::fill(data_.begin(), data_.end(), v);
}

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
    nlohmann::json header;
    header["dtype"] = "f32";
    header["shape"] = t.shape();
    const std::string hs = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + hs.size() + 4 * t.numel());
    out.insert(out.end(), {'G', 'M', 'T', '0'});
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.resize(out.size() + 4);
    std::memcpy(out.data() + 4, &hlen, 4);
    out.insert(out.end(), hs.begin(), hs.end());
    const std::size_t payload_off = out.size();
    out.resize(out.size() + 4 * t.numel());
    std::memcpy(out.data() + payload_off, t.data(), 4 * t.numel());
    return out;
}

Tensor tensor_from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "GMT0", 4) != 0) {
        throw TensorError("bad GMT0 magic");
    }
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 4, 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(hlen)) {
        throw TensorError("truncated GMT0 header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw TensorError(std::string("bad GMT0 JSON header: ") + e.what());
    }
    if (header.value("dtype", "") != "f32") {
        throw TensorError("GMT0 dtype must be f32");
    }
    std::vector<std::size_t> shape = header.at("shape").get<std::vector<std::size_t>>();
    const std::size_t n = shape_numel(shape);
    const std::size_t payload_off = 8 + hlen;
    if (bytes.size() != payload_off + 4 * n) {
        throw TensorError("GMT0 payload length " +
                          std::to_string(bytes.size() - payload_off) +
                          " bytes does not match shape, expected " +
                          std::to_string(4 * n) + " at offset " +
                          std::to_string(payload_off));
    }
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data() + payload_off, 4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(data[i])) {
            throw TensorError("GMT0 load: non-finite value at payload offset " +
                              std::to_string(payload_off + 4 * i));
        }
    }
    Tensor t;
    return Tensor::from_data(std::move(shape), std::move(data));
}

void atomic_write_file(const std::string& path, const void* data, std::size_t size) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw TensorError("cannot open " + tmp.string() + " for writing");
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!f) throw TensorError("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

void atomic_write_text(const std::string& path, const std::string& text) {
    atomic_write_file(path, text.data(), text.size());
}

void save_tensor(const std::string& path, const Tensor& t) {
    const auto bytes = tensor_to_bytes(t);
    atomic_write_file(path, bytes.data(), bytes.size());
}

Tensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TensorError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return tensor_from_bytes(bytes);
}

}  // namespace gm
