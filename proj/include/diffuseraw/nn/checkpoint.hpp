#pragma once

// Checkpoint container, little-endian:
//   "DRCK" | u16 version | u32 tensor_count |
//   per tensor: u32 name_len | name bytes | u32 rank | rank x u32 dims |
//               numel x f32 values

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "diffuseraw/error.hpp"
#include "diffuseraw/io/binary.hpp"
#include "diffuseraw/nn/layers.hpp"

namespace diffuseraw::nn {

inline constexpr std::uint16_t checkpoint_version = 1;

template <typename T>
void write_checkpoint(std::ostream& os, const NamedTensors<T>& tensors) {
    os.write("DRCK", 4);
    io::write_le<std::uint16_t>(os, checkpoint_version);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        for (T v : t.data()) io::write_le<float>(os, static_cast<float>(v));
    }
}

inline NamedTensors<float> read_checkpoint(std::istream& is) {
    io::expect_magic(is, "DRCK", "checkpoint");
    auto version = io::read_le<std::uint16_t>(is, "checkpoint version");
    if (version != checkpoint_version) {
        throw format_error("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(checkpoint_version) + ")");
    }
    auto count = io::read_le<std::uint32_t>(is, "tensor count");
    NamedTensors<float> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        auto len = io::read_le<std::uint32_t>(is, "tensor name length");
        if (len > 4096) throw format_error("checkpoint: implausible tensor name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw format_error("truncated file while reading tensor name");
        auto rank = io::read_le<std::uint32_t>(is, "rank of " + name);
        if (rank > 8) throw format_error("checkpoint: implausible rank for " + name);
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            auto d = io::read_le<std::uint32_t>(is, "dims of " + name);
            shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        if (numel > (std::size_t{1} << 30)) throw format_error("checkpoint: implausible size for " + name);
        std::vector<float> values(numel);
        for (auto& v : values) v = io::read_le<float>(is, "values of " + name);
        out.emplace_back(name, Tensor<float>(std::move(shape), std::move(values)));
    }
    return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const NamedTensors<T>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    write_checkpoint(os, tensors);
    if (!os) throw io_error("write failed: " + path.string());
}

inline NamedTensors<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    try {
        return read_checkpoint(is);
    } catch (const format_error& e) {
        throw format_error(path.string() + ": " + e.what());
    }
}

// Copies loaded values into live parameters, matching by name. Every parameter
// must be present with an identical shape and no extra names are allowed.
template <typename T>
void assign_state(const NamedTensors<T>& params, const NamedTensors<float>& loaded) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : loaded) by_name[name] = &t;
    for (const auto& [name, p] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw format_error("checkpoint: missing tensor '" + name + "'");
        if (it->second->shape() != p.shape()) {
            throw format_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_string(it->second->shape()) + ", expected " + shape_string(p.shape()));
        }
        Tensor<T> handle = p;
        auto dst = handle.data();
        auto src = it->second->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
        by_name.erase(it);
    }
    if (!by_name.empty()) {
        throw format_error("checkpoint: unknown tensor '" + by_name.begin()->first + "'");
    }
}

} // namespace diffuseraw::nn
