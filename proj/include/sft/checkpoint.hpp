#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sft/models.hpp"
#include "sft/network.hpp"

namespace sft {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    std::string phase;  // "pretrain" or "finetune"
    std::string created;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u16(std::ostream& os, std::uint16_t v) {
    os.write(reinterpret_cast<const char*>(&v), 2);
}

template <class T>
bool read_exact(std::istream& is, T* v, std::size_t n = 1) {
    is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(sizeof(T) * n));
    return static_cast<std::size_t>(is.gcount()) == sizeof(T) * n;
}

}  // namespace detail

// Layout: "STFT" | u32 version=1 | u8 arch | u32 param count |
//   per param: u16 name_len | name | u8 rank | rank*u32 dims | f32 data (LE)
inline void save_checkpoint(const Network<float>& net, const std::string& path,
                            const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write("STFT", 4);
    detail::write_u32(os, 1);
    os.put(static_cast<char>(net.arch_code));
    detail::write_u32(os, static_cast<std::uint32_t>(net.params.size()));
    for (const auto& p : net.params) {
        detail::write_u16(os, static_cast<std::uint16_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        os.put(static_cast<char>(4));
        for (int d : p.value.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p.value.data.data()),
                 static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");

    nlohmann::ordered_json j;
    j["seed"] = meta.seed;
    j["epochs"] = meta.epochs;
    j["phase"] = meta.phase;
    j["created"] = meta.created;
    std::ofstream ms(path + ".meta.json", std::ios::trunc);
    ms << j.dump(2) << "\n";
}

inline CheckpointMeta load_checkpoint_meta(const std::string& path) {
    std::ifstream ms(path + ".meta.json");
    CheckpointMeta meta;
    if (!ms) return meta;
    nlohmann::json j = nlohmann::json::parse(ms, nullptr, /*allow_exceptions=*/true);
    meta.seed = j.value("seed", std::uint64_t{0});
    meta.epochs = j.value("epochs", 0);
    meta.phase = j.value("phase", "");
    meta.created = j.value("created", "");
    return meta;
}

inline Network<float> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (!detail::read_exact(is, magic, 4) || std::memcmp(magic, "STFT", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = 0;
    if (!detail::read_exact(is, &version) || version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                                 " in '" + path + "'");
    std::uint8_t arch = 0;
    if (!detail::read_exact(is, &arch))
        throw std::runtime_error("checkpoint: truncated header in '" + path + "'");
    std::uint32_t count = 0;
    if (!detail::read_exact(is, &count))
        throw std::runtime_error("checkpoint: truncated header in '" + path + "'");

    struct Rec {
        std::string name;
        std::array<int, 4> shape;
        std::vector<float> data;
    };
    std::vector<Rec> recs;
    recs.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t name_len = 0;
        if (!detail::read_exact(is, &name_len))
            throw std::runtime_error("checkpoint: truncated while reading parameter " +
                                     std::to_string(i) + " header in '" + path + "'");
        std::string name(name_len, '\0');
        if (!detail::read_exact(is, name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated while reading parameter " +
                                     std::to_string(i) + " name in '" + path + "'");
        std::uint8_t rank = 0;
        if (!detail::read_exact(is, &rank) || rank != 4)
            throw std::runtime_error("checkpoint: truncated or non-rank-4 parameter '" + name +
                                     "' in '" + path + "'");
        std::array<int, 4> shape{};
        std::uint32_t dims[4];
        if (!detail::read_exact(is, dims, 4))
            throw std::runtime_error("checkpoint: truncated while reading dims of '" + name +
                                     "' in '" + path + "'");
        std::size_t numel = 1;
        for (int d = 0; d < 4; ++d) {
            shape[d] = static_cast<int>(dims[d]);
            numel *= dims[d];
        }
        std::vector<float> data(numel);
        if (!detail::read_exact(is, data.data(), numel))
            throw std::runtime_error("checkpoint: truncated while reading parameter '" + name +
                                     "' in '" + path + "'");
        recs.push_back({name, shape, std::move(data)});
    }
    if (recs.empty()) throw std::runtime_error("checkpoint: no parameters in '" + path + "'");

    const int K = recs.back().shape[0];  // classifier bias extent
    Network<float> net;
    if (arch == kArchLenet5_64)
        net = build_lenet5_64<float>(K);
    else if (arch == kArchAlexnetS)
        net = build_alexnet_s<float>(K);
    else
        throw std::runtime_error("checkpoint: unknown architecture id " +
                                 std::to_string(int(arch)) + " in '" + path + "'");
    if (recs.size() != net.params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch in '" + path + "'");
    for (std::size_t i = 0; i < recs.size(); ++i) {
        auto& p = net.params[i];
        if (recs[i].name != p.name || recs[i].shape != p.value.shape)
            throw std::runtime_error("checkpoint: parameter '" + recs[i].name +
                                     "' does not match architecture layout in '" + path + "'");
        p.value.data = std::move(recs[i].data);
    }
    return net;
}

// Load for continuing a run: the stored architecture must match `expected`.
inline Network<float> load_checkpoint_as(const std::string& path, const std::string& expected_arch_id) {
    Network<float> net = load_checkpoint(path);
    if (net.arch_id != expected_arch_id)
        throw std::runtime_error("checkpoint: architecture mismatch (file has '" + net.arch_id +
                                 "', run expects '" + expected_arch_id + "')");
    return net;
}

}  // namespace sft
