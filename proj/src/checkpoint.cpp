#include <json.hpp>

#include <cstring>
#include <fstream>

#include "transfuse/model.hpp"

namespace transfuse {
namespace {

constexpr char kMagic[8] = {'T', 'F', 'U', 'S', 'E', 'C', 'K', 'P'};

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"cnn_channels", cfg.cnn_channels},
                          {"token_dim_global", cfg.token_dim_global},
                          {"token_dim_local", cfg.token_dim_local},
                          {"trans_channels", cfg.trans_channels},
                          {"depth", cfg.depth},
                          {"heads", cfg.heads},
                          {"mlp_ratio", cfg.mlp_ratio},
                          {"with_transformer", cfg.with_transformer},
                          {"inject_every_layer", cfg.inject_every_layer},
                          {"image_size", cfg.patch.image_size},
                          {"global_patch", cfg.patch.global_patch},
                          {"local_patch", cfg.patch.local_patch}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.cnn_channels = j.at("cnn_channels").get<int>();
    cfg.token_dim_global = j.at("token_dim_global").get<int>();
    cfg.token_dim_local = j.at("token_dim_local").get<int>();
    cfg.trans_channels = j.at("trans_channels").get<int>();
    cfg.depth = j.at("depth").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
    cfg.with_transformer = j.at("with_transformer").get<bool>();
    cfg.inject_every_layer = j.at("inject_every_layer").get<bool>();
    cfg.patch.image_size = j.at("image_size").get<int>();
    cfg.patch.global_patch = j.at("global_patch").get<int>();
    cfg.patch.local_patch = j.at("local_patch").get<int>();
    return cfg;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DecodeError("checkpoint: truncated file");
    return v;
}

}  // namespace

void Model::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());

    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kCheckpointVersion);

    const std::string cfg_json = config_to_json(cfg_).dump();
    write_pod<std::uint64_t>(out, cfg_json.size());
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(store_.entries().size()));
    for (const auto& [name, p] : store_.entries()) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.ndim()));
        for (const int d : p.value.shape) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    }
    if (!out) throw Error("short write: " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("no such checkpoint: " + path.string());

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DecodeError("checkpoint: bad magic in " + path.string());
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw DecodeError("checkpoint: unsupported format version " + std::to_string(version));

    const auto cfg_len = read_pod<std::uint64_t>(in);
    std::string cfg_json(cfg_len, '\0');
    in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
    if (!in) throw DecodeError("checkpoint: truncated config");

    ModelConfig cfg;
    try {
        cfg = config_from_json(nlohmann::json::parse(cfg_json));
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("checkpoint: bad config: ") + e.what());
    }

    Model model(cfg, LoadTag{});
    const auto n_params = read_pod<std::uint32_t>(in);
    if (n_params != model.store_.entries().size())
        throw DecodeError("checkpoint: parameter count mismatch");

    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DecodeError("checkpoint: truncated name");
        if (!model.store_.has(name))
            throw DecodeError("checkpoint: unexpected parameter " + name);
        Param& p = model.store_.at(name);
        const auto ndim = read_pod<std::uint32_t>(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(in));
        if (shape != p.value.shape) throw DecodeError("checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        if (!in) throw DecodeError("checkpoint: truncated data for " + name);
    }
    return model;
}

}  // namespace transfuse
