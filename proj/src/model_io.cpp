#include "moodcast/model_io.hpp"

#include <cstring>
#include <set>

#include "moodcast/util.hpp"

namespace moodcast {

namespace {
constexpr char kCkptMagic[] = "MOODCAST-CKPT v1\n";
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json obj;
    obj["embedding_dim"] = cfg.embedding_dim;
    obj["hidden_size"] = cfg.hidden_size;
    obj["lstm_layers"] = cfg.lstm_layers;
    obj["dropout"] = cfg.dropout;
    obj["alpha"] = cfg.alpha;
    obj["n_levels"] = cfg.n_levels;
    obj["n_symptoms"] = cfg.n_symptoms;
    obj["head_hidden"] = cfg.head_hidden;
    obj["no_temporal_attention"] = cfg.no_temporal_attention;
    obj["no_bilstm"] = cfg.no_bilstm;
    obj["no_uncertainty"] = cfg.no_uncertainty;
    obj["no_somatic"] = cfg.no_somatic;
    obj["no_mood"] = cfg.no_mood;
    obj["single_task"] = cfg.single_task;
    return obj;
}

ModelConfig model_config_from_json(const nlohmann::json& obj) {
    if (!obj.is_object()) throw ValidationError("model config must be a JSON object");
    ModelConfig cfg;
    auto take_int = [&](const char* key, int& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number_integer())
            throw ValidationError(std::string("model config field \"") + key +
                                  "\" must be an integer");
        field = obj[key].get<int>();
    };
    auto take_double = [&](const char* key, double& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_number())
            throw ValidationError(std::string("model config field \"") + key +
                                  "\" must be a number");
        field = obj[key].get<double>();
    };
    auto take_bool = [&](const char* key, bool& field) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_boolean())
            throw ValidationError(std::string("model config field \"") + key +
                                  "\" must be a boolean");
        field = obj[key].get<bool>();
    };
    take_int("embedding_dim", cfg.embedding_dim);
    take_int("hidden_size", cfg.hidden_size);
    take_int("lstm_layers", cfg.lstm_layers);
    take_double("dropout", cfg.dropout);
    take_double("alpha", cfg.alpha);
    take_int("n_levels", cfg.n_levels);
    take_int("n_symptoms", cfg.n_symptoms);
    take_int("head_hidden", cfg.head_hidden);
    take_bool("no_temporal_attention", cfg.no_temporal_attention);
    take_bool("no_bilstm", cfg.no_bilstm);
    take_bool("no_uncertainty", cfg.no_uncertainty);
    take_bool("no_somatic", cfg.no_somatic);
    take_bool("no_mood", cfg.no_mood);
    take_bool("single_task", cfg.single_task);

    static const std::set<std::string> known = {
        "embedding_dim", "hidden_size", "lstm_layers", "dropout", "alpha",
        "n_levels", "n_symptoms", "head_hidden", "no_temporal_attention",
        "no_bilstm", "no_uncertainty", "no_somatic", "no_mood", "single_task"};
    for (const auto& [key, _] : obj.items())
        if (!known.count(key))
            throw ValidationError("model config: unknown field \"" + key + "\"");
    validate_config(cfg);
    return cfg;
}

void save_checkpoint(const Model<double>& model, const CheckpointMeta& meta,
                     const std::string& path) {
    nlohmann::ordered_json header;
    header["config"] = model_config_to_json(model.config());
    nlohmann::ordered_json m;
    m["provider"] = meta.provider;
    m["provider_dimension"] = meta.provider_dimension;
    m["seed"] = meta.seed;
    m["l_months"] = meta.l_months;
    m["m_months"] = meta.m_months;
    m["max_len"] = meta.max_len;
    header["meta"] = m;

    auto blocks = nlohmann::ordered_json::array();
    for (const auto& b : model.params().blocks) {
        nlohmann::ordered_json entry;
        entry["name"] = b.name;
        entry["rows"] = b.value.rows();
        entry["cols"] = b.value.cols();
        blocks.push_back(entry);
    }
    header["blocks"] = blocks;

    std::string out = kCkptMagic;
    out += header.dump();
    out += '\n';
    for (const auto& b : model.params().blocks) {
        const auto bytes = static_cast<std::size_t>(b.value.size()) * sizeof(double);
        const std::size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, b.value.data(), bytes);
    }
    atomic_write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string data = read_file(path);
    const std::size_t magic_len = sizeof(kCkptMagic) - 1;
    if (data.size() < magic_len || data.compare(0, magic_len, kCkptMagic) != 0)
        throw ValidationError("checkpoint \"" + path + "\" has a bad magic header");
    const std::size_t header_end = data.find('\n', magic_len);
    if (header_end == std::string::npos)
        throw ValidationError("checkpoint \"" + path + "\" is truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(data.substr(magic_len, header_end - magic_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("checkpoint \"" + path + "\" has a malformed header: " +
                              e.what());
    }

    ModelConfig cfg;
    CheckpointMeta meta;
    try {
        cfg = model_config_from_json(header.at("config"));
        const auto& m = header.at("meta");
        meta.provider = m.at("provider").get<std::string>();
        meta.provider_dimension = m.at("provider_dimension").get<int>();
        meta.seed = m.at("seed").get<std::uint64_t>();
        meta.l_months = m.at("l_months").get<int>();
        meta.m_months = m.at("m_months").get<int>();
        meta.max_len = m.at("max_len").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("checkpoint \"" + path + "\" header is incomplete: " + e.what());
    }

    LoadedCheckpoint loaded{Model<double>(cfg, 0), meta};
    auto& blocks = loaded.model.params().blocks;
    const auto& manifest = header.at("blocks");
    if (!manifest.is_array() || manifest.size() != blocks.size())
        throw ValidationError("checkpoint \"" + path + "\" block manifest mismatch");

    std::size_t at = header_end + 1;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& entry = manifest[i];
        if (entry.at("name").get<std::string>() != blocks[i].name ||
            entry.at("rows").get<Eigen::Index>() != blocks[i].value.rows() ||
            entry.at("cols").get<Eigen::Index>() != blocks[i].value.cols())
            throw ValidationError("checkpoint \"" + path + "\" block \"" + blocks[i].name +
                                  "\" does not match its config");
        const auto bytes = static_cast<std::size_t>(blocks[i].value.size()) * sizeof(double);
        if (at + bytes > data.size())
            throw ValidationError("checkpoint \"" + path + "\" is truncated");
        std::memcpy(blocks[i].value.data(), data.data() + at, bytes);
        at += bytes;
    }
    if (at != data.size())
        throw ValidationError("checkpoint \"" + path + "\" has trailing bytes");
    return loaded;
}

}  // namespace moodcast
