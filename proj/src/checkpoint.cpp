#include "dncc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dncc/error.hpp"
#include "dncc/text.hpp"

namespace dncc {

namespace {

constexpr char kMagic[8] = {'D', 'N', 'C', 'C', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPrefix = 8 + 4 + 8;

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        T out;
        auto* src = reinterpret_cast<const unsigned char*>(&v);
        auto* dst = reinterpret_cast<unsigned char*>(&out);
        for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
        return out;
    } else {
        return v;
    }
}

template <class T>
void append_le(std::string& buf, T v) {
    v = to_le(v);
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(const std::string& buf, std::size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return to_le(v);
}

void append_doubles(std::string& buf, std::span<const double> values) {
    for (double v : values) append_le(buf, std::bit_cast<std::uint64_t>(v));
}

std::string hex64(std::uint64_t v) {
    char out[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xF];
        v >>= 4;
    }
    out[16] = '\0';
    return out;
}

std::uint64_t hash_bytes(const std::string& buf, std::size_t offset, std::size_t len) {
    return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf.data()) + offset, len));
}

}  // namespace

// ---- JSON forms ----------------------------------------------------------------

nlohmann::json to_json(const BackboneSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_widths", spec.hidden_widths},
            {"activation", "relu"},
            {"branch_depth", spec.branch_depth}};
}

nlohmann::json to_json(const EnsembleConfig& cfg) {
    return {{"num_heads", cfg.num_heads},
            {"feature_mode", to_string(cfg.feature_mode)},
            {"num_classes", cfg.num_classes},
            {"seed", cfg.seed}};
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"initial_lr", cfg.initial_lr},
            {"lr_decay_factor", cfg.lr_decay_factor},
            {"lr_milestones", cfg.lr_milestones},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"lambda", cfg.dncc.lambda_schedule.str()},
            {"detach_ensemble_mean", cfg.dncc.detach_ensemble_mean},
            {"seed", cfg.seed}};
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"lambda", r.lambda},
            {"lr", r.lr},
            {"train_ensemble_loss", r.train_ensemble_loss},
            {"train_mean_individual_loss", r.train_mean_individual_loss},
            {"train_bregman_information", r.train_bregman_information},
            {"val_ensemble_loss", r.val_ensemble_loss},
            {"val_mean_individual_loss", r.val_mean_individual_loss},
            {"val_bregman_information", r.val_bregman_information},
            {"val_ensemble_accuracy", r.val_ensemble_accuracy},
            {"val_head_accuracy", r.val_head_accuracy},
            {"wall_time_s", r.wall_time_s}};
}

BackboneSpec backbone_from_json(const nlohmann::json& j) {
    BackboneSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    if (j.at("activation").get<std::string>() != "relu") throw ConfigError("unsupported activation");
    s.branch_depth = j.at("branch_depth").get<std::size_t>();
    return s;
}

EnsembleConfig ensemble_config_from_json(const nlohmann::json& j) {
    EnsembleConfig c;
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.feature_mode = feature_mode_from_string(j.at("feature_mode").get<std::string>());
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.initial_lr = j.at("initial_lr").get<double>();
    c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
    c.lr_milestones = j.at("lr_milestones").get<std::vector<int>>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.dncc.lambda_schedule = LambdaSchedule::parse(j.at("lambda").get<std::string>());
    c.dncc.detach_ensemble_mean = j.at("detach_ensemble_mean").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.lambda = j.at("lambda").get<double>();
    r.lr = j.at("lr").get<double>();
    r.train_ensemble_loss = j.at("train_ensemble_loss").get<double>();
    r.train_mean_individual_loss = j.at("train_mean_individual_loss").get<double>();
    r.train_bregman_information = j.at("train_bregman_information").get<double>();
    r.val_ensemble_loss = j.at("val_ensemble_loss").get<double>();
    r.val_mean_individual_loss = j.at("val_mean_individual_loss").get<double>();
    r.val_bregman_information = j.at("val_bregman_information").get<double>();
    r.val_ensemble_accuracy = j.at("val_ensemble_accuracy").get<double>();
    r.val_head_accuracy = j.at("val_head_accuracy").get<std::vector<double>>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
}

// ---- save / load ----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const EnsembleModel& model, const TrainConfig* train_config,
                     const TrainingState* state, const nlohmann::json& extra) {
    const std::vector<Tensor> params = model.parameters();
    const std::vector<std::string> names = model.parameter_names();

    std::string payload;
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        blocks.push_back({{"name", names[i]}, {"shape", params[i].shape()}});
        append_doubles(payload, params[i].data());
    }
    if (state) {
        if (state->velocity.size() != params.size()) throw ContractError("velocity buffers do not match parameters");
        for (std::size_t i = 0; i < params.size(); ++i) {
            blocks.push_back({{"name", "velocity." + names[i]}, {"shape", params[i].shape()}});
            append_doubles(payload, state->velocity[i]);
        }
    }

    nlohmann::json header;
    header["format"] = "dncc-checkpoint";
    header["version"] = kCheckpointVersion;
    header["spec"] = to_json(model.spec());
    header["config"] = to_json(model.config());
    header["train_config"] = train_config ? to_json(*train_config) : nlohmann::json(nullptr);
    header["has_state"] = state != nullptr;
    header["epoch"] = state ? state->next_epoch : 0;
    // Batch order is a pure function of (seed, epoch), so this pair is the
    // complete generator state.
    header["rng"] = {{"batch_seed", train_config ? train_config->seed : 0},
                     {"next_epoch", state ? state->next_epoch : 0}};
    nlohmann::json metrics = nlohmann::json::array();
    if (state) {
        for (const auto& r : state->log.records) metrics.push_back(to_json(r));
    }
    header["metrics"] = metrics;
    header["blocks"] = blocks;
    header["payload_bytes"] = payload.size();
    header["payload_fnv1a"] = hex64(hash_bytes(payload, 0, payload.size()));
    header["extra"] = extra;
    const std::string header_text = header.dump();

    std::string file(kMagic, sizeof(kMagic));
    append_le(file, kCheckpointVersion);
    append_le(file, static_cast<std::uint64_t>(header_text.size()));
    file += header_text;
    file += payload;

    const std::filesystem::path tmp = path.string() + ".tmp";
    write_file(tmp.string(), file);
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string buf = read_file(path.string());
    if (buf.size() < kPrefix) throw FormatError("checkpoint truncated before header", buf.size());
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("bad checkpoint magic", 0);
    const auto version = read_le<std::uint32_t>(buf, 8);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
    }
    const auto header_len = read_le<std::uint64_t>(buf, 12);
    if (header_len > buf.size() - kPrefix) throw FormatError("checkpoint header truncated", buf.size());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.begin() + kPrefix, buf.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint header: ") + e.what(), kPrefix);
    }

    const std::size_t payload_offset = kPrefix + header_len;
    try {
        if (header.at("format").get<std::string>() != "dncc-checkpoint") {
            throw FormatError("not a dncc checkpoint", kPrefix);
        }
        const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
        if (buf.size() != payload_offset + payload_bytes) {
            throw FormatError("checkpoint payload is " + std::to_string(buf.size() - payload_offset) +
                                  " bytes, header declares " + std::to_string(payload_bytes),
                              buf.size());
        }
        if (header.at("payload_fnv1a").get<std::string>() != hex64(hash_bytes(buf, payload_offset, payload_bytes))) {
            throw FormatError("checkpoint payload hash mismatch", payload_offset);
        }

        const BackboneSpec spec = backbone_from_json(header.at("spec"));
        const EnsembleConfig cfg = ensemble_config_from_json(header.at("config"));
        EnsembleModel model = EnsembleModel::init(spec, cfg);
        std::vector<Tensor> params = model.parameters();
        const std::vector<std::string> names = model.parameter_names();
        const bool has_state = header.at("has_state").get<bool>();
        const auto& blocks = header.at("blocks");
        const std::size_t expected_blocks = params.size() * (has_state ? 2 : 1);
        if (blocks.size() != expected_blocks) throw FormatError("checkpoint block table does not match model", kPrefix);

        std::size_t offset = payload_offset;
        auto read_block = [&](std::size_t b, const std::string& name, const Shape& shape) {
            if (blocks[b].at("name").get<std::string>() != name || blocks[b].at("shape").get<Shape>() != shape) {
                throw FormatError("checkpoint block " + std::to_string(b) + " does not match " + name, kPrefix);
            }
            std::vector<double> values(shape_numel(shape));
            for (double& v : values) {
                v = std::bit_cast<double>(read_le<std::uint64_t>(buf, offset));
                offset += 8;
            }
            return values;
        };
        std::vector<std::vector<double>> param_values;
        for (std::size_t i = 0; i < params.size(); ++i) param_values.push_back(read_block(i, names[i], params[i].shape()));

        std::optional<TrainingState> state;
        if (has_state) {
            TrainingState s;
            s.next_epoch = header.at("epoch").get<int>();
            for (std::size_t i = 0; i < params.size(); ++i) {
                s.velocity.push_back(read_block(params.size() + i, "velocity." + names[i], params[i].shape()));
            }
            for (const auto& r : header.at("metrics")) s.log.records.push_back(epoch_record_from_json(r));
            state = std::move(s);
        }
        if (offset != buf.size()) throw FormatError("trailing bytes in checkpoint", offset);

        for (std::size_t i = 0; i < params.size(); ++i) {
            auto dst = params[i].mutable_data();
            std::copy(param_values[i].begin(), param_values[i].end(), dst.begin());
        }
        std::optional<TrainConfig> train_config;
        if (!header.at("train_config").is_null()) train_config = train_config_from_json(header.at("train_config"));
        return Checkpoint{std::move(model), std::move(train_config), std::move(state), header.value("extra", nlohmann::json::object())};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid checkpoint header field: ") + e.what(), kPrefix);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid checkpoint configuration: ") + e.what(), kPrefix);
    }
}

}  // namespace dncc
