#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>

#include "hdn/model/parameters.hpp"
#include "hdn/nn/optim.hpp"
#include "hdn/noise/noise_model.hpp"

namespace hdn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'H', 'D', 'N', 'C', 'K', 'P', 'T', '\0'};

// Single-file container: magic, format version, JSON header (config, data
// statistics, array directory, attached noise model, optimizer metadata),
// then the flat float32 arrays in directory order.

struct OptimizerState {
    std::string method;
    float learning_rate = 0;
    std::int64_t step_count = 0;
    std::vector<Tensor<float>> moment1;
    std::vector<Tensor<float>> moment2;
};

struct Checkpoint {
    ModelParameters<float> model;
    std::optional<NoiseModel> noise_model;
    std::optional<OptimizerState> optimizer;
    std::int64_t train_step = 0;
};

namespace detail {

struct ArrayEntry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset; // in floats, from blob start
};

inline void append_array(nlohmann::json& dir, std::vector<const Tensor<float>*>& blobs,
                         std::uint64_t& offset, const std::string& name, const Tensor<float>& t) {
    dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    blobs.push_back(&t);
    offset += t.numel();
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParameters<float>& model,
                            const nn::Optimizer<float>* optimizer, const NoiseModel* noise_model,
                            std::int64_t train_step) {
    nlohmann::json header;
    header["config"] = model.config;
    header["data_mean"] = model.data_mean;
    header["data_std"] = model.data_std;
    header["train_step"] = train_step;
    header["noise_model"] = noise_model ? noise_model->to_json() : nlohmann::json(nullptr);

    nlohmann::json dir = nlohmann::json::array();
    std::vector<const Tensor<float>*> blobs;
    std::uint64_t offset = 0;
    for (const auto& [name, var] : model.params)
        detail::append_array(dir, blobs, offset, "param." + name, var.value());
    for (const auto& [name, buf] : model.buffers)
        detail::append_array(dir, blobs, offset, "buffer." + name, buf);
    if (optimizer) {
        header["optimizer"] = {{"method", optimizer->method()},
                               {"learning_rate", optimizer->learning_rate()},
                               {"step_count", optimizer->step_count()}};
        auto& m1 = const_cast<nn::Optimizer<float>*>(optimizer)->moment1();
        auto& m2 = const_cast<nn::Optimizer<float>*>(optimizer)->moment2();
        for (std::size_t i = 0; i < m1.size(); ++i)
            detail::append_array(dir, blobs, offset, "opt.m." + model.params[i].first, m1[i]);
        for (std::size_t i = 0; i < m2.size(); ++i)
            detail::append_array(dir, blobs, offset, "opt.u." + model.params[i].first, m2[i]);
    } else {
        header["optimizer"] = nullptr;
    }
    header["arrays"] = dir;

    const std::string body = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileNotFoundError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t json_len = body.size();
    out.write(reinterpret_cast<const char*>(&json_len), 8);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    for (const Tensor<float>* t : blobs)
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * sizeof(float)));
    if (!out) throw FileNotFoundError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    if (!std::filesystem::exists(path)) throw CheckpointNotFoundError("no such checkpoint: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointNotFoundError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CheckpointVersionError("not a checkpoint container: " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                     " does not match supported version " +
                                     std::to_string(kCheckpointVersion));
    std::uint64_t json_len = 0;
    in.read(reinterpret_cast<char*>(&json_len), 8);
    std::string body(json_len, '\0');
    in.read(body.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw CheckpointVersionError("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(body);

    Checkpoint ck;
    const HdnConfig config = header.at("config").get<HdnConfig>();
    ck.model = build_model<float>(config, /*seed=*/0);
    ck.model.data_mean = header.at("data_mean").get<double>();
    ck.model.data_std = header.at("data_std").get<double>();
    ck.train_step = header.at("train_step").get<std::int64_t>();
    if (!header.at("noise_model").is_null())
        ck.noise_model = NoiseModel::from_json(header.at("noise_model"));

    const std::uint64_t blob_start = 8 + 4 + 8 + json_len;
    auto read_array = [&](const nlohmann::json& entry, Tensor<float>& dst) {
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != dst.shape)
            throw CheckpointVersionError("checkpoint array shape mismatch for " +
                                         entry.at("name").get<std::string>());
        in.seekg(static_cast<std::streamoff>(blob_start +
                                             entry.at("offset").get<std::uint64_t>() * sizeof(float)));
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.numel() * sizeof(float)));
        if (!in) throw CheckpointVersionError("truncated checkpoint blob: " + path);
    };

    std::optional<OptimizerState> opt;
    if (!header.at("optimizer").is_null()) {
        opt.emplace();
        opt->method = header["optimizer"].at("method").get<std::string>();
        opt->learning_rate = header["optimizer"].at("learning_rate").get<float>();
        opt->step_count = header["optimizer"].at("step_count").get<std::int64_t>();
        opt->moment1.reserve(ck.model.params.size());
        opt->moment2.reserve(ck.model.params.size());
        for (auto& [name, var] : ck.model.params) {
            opt->moment1.emplace_back(var.value().shape);
            opt->moment2.emplace_back(var.value().shape);
        }
    }

    for (const auto& entry : header.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        if (name.rfind("param.", 0) == 0) {
            read_array(entry, ck.model.at(name.substr(6)).value());
        } else if (name.rfind("buffer.", 0) == 0) {
            read_array(entry, ck.model.buffer(name.substr(7)));
        } else if (name.rfind("opt.m.", 0) == 0 && opt) {
            for (std::size_t i = 0; i < ck.model.params.size(); ++i)
                if (ck.model.params[i].first == name.substr(6)) read_array(entry, opt->moment1[i]);
        } else if (name.rfind("opt.u.", 0) == 0 && opt) {
            for (std::size_t i = 0; i < ck.model.params.size(); ++i)
                if (ck.model.params[i].first == name.substr(6)) read_array(entry, opt->moment2[i]);
        }
    }
    ck.optimizer = std::move(opt);
    return ck;
}

inline void restore_optimizer(nn::Optimizer<float>& optimizer, const OptimizerState& state) {
    optimizer.set_learning_rate(state.learning_rate);
    optimizer.set_step_count(state.step_count);
    optimizer.moment1() = state.moment1;
    optimizer.moment2() = state.moment2;
}

} // namespace hdn
