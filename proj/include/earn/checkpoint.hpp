#pragma once

// Checkpoint archive layout (all integers and reals little-endian):
//
//   offset 0   8 bytes   magic "EARNCKPT"
//   offset 8   u32       format version (1)
//   offset 12  u64       manifest length L in bytes
//   offset 20  L bytes   UTF-8 JSON manifest
//   offset 20+L          data blob: tensors back to back as row-major f64
//
// The manifest lists every tensor as {name, rows, cols, offset}, where offset
// is the byte offset inside the data blob, plus iteration, config, dims,
// sampler state and RNG state.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "earn/config.hpp"
#include "earn/model.hpp"

namespace earn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    TrainConfig config;
    ModelDims dims;
    int iteration = 0;
    std::map<std::string, Matrix> tensors;
    std::string rng_state;
    std::vector<int> order;
    int order_pos = 0;
};

inline constexpr char kCheckpointMagic[8] = {'E', 'A', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw CheckpointError("truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : ck.tensors) {
        tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
    }
    const nlohmann::json manifest = {{"format", "earn-checkpoint"},
                                     {"iteration", ck.iteration},
                                     {"config", to_json(ck.config)},
                                     {"dims", to_json(ck.dims)},
                                     {"rng_state", ck.rng_state},
                                     {"order", ck.order},
                                     {"order_pos", ck.order_pos},
                                     {"tensors", tensors}};
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ck.tensors) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) detail::write_le<double>(out, m(r, c));
        }
    }
    if (!out) throw CheckpointError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("not a checkpoint: " + path);
    if (detail::read_le<std::uint32_t>(in) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
    const auto len = detail::read_le<std::uint64_t>(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated manifest");

    Checkpoint ck;
    try {
        const auto manifest = nlohmann::json::parse(text);
        ck.iteration = manifest.at("iteration").get<int>();
        ck.config = train_config_from_json(manifest.at("config"));
        ck.dims = model_dims_from_json(manifest.at("dims"));
        ck.rng_state = manifest.at("rng_state").get<std::string>();
        ck.order = manifest.at("order").get<std::vector<int>>();
        ck.order_pos = manifest.at("order_pos").get<int>();
        const auto data_start = in.tellg();
        for (const auto& t : manifest.at("tensors")) {
            Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
            in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::read_le<double>(in);
            }
            ck.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    return ck;
}

inline constexpr const char* kParamPrefix = "param/";
inline constexpr const char* kTokenVectors = "const/token_vectors";
inline constexpr const char* kCategoryVectors = "const/category_vectors";

/// Rebuilds the model stored in a checkpoint.
inline EarnModel model_from_checkpoint(const Checkpoint& ck) {
    auto tensor = [&](const std::string& name) -> const Matrix& {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw CheckpointError("checkpoint lacks tensor " + name);
        return it->second;
    };
    EarnModel model(ck.config.model, ck.dims, tensor(kTokenVectors), tensor(kCategoryVectors), ck.config.seed);
    model.visit([&](const std::string& name, ad::Parameter& p) {
        const Matrix& m = tensor(kParamPrefix + name);
        if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
            throw CheckpointError("shape mismatch for " + name);
        }
        p.value = m;
    });
    return model;
}

inline void store_model(const EarnModel& model, Checkpoint& ck) {
    model.visit([&](const std::string& name, const ad::Parameter& p) { ck.tensors[kParamPrefix + name] = p.value; });
    ck.tensors[kTokenVectors] = model.token_vectors();
    ck.tensors[kCategoryVectors] = model.category_vectors();
}

}  // namespace earn
