#include "complora/experiment_config.hpp"

#include <json.hpp>
#include <algorithm>
#include <set>

#include "complora/errors.hpp"

namespace complora {

namespace {

using nlohmann::json;

std::string join(const std::string& parent, const std::string& key) { return parent.empty() ? key : parent + "." + key; }

void require_known(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key)) throw ConfigError(join(where, key), "unknown field");
}

const json& require_object(const json& j, const std::string& field) {
    if (!j.is_object()) throw ConfigError(field, "expected an object");
    return j;
}

std::size_t get_size(const json& obj, const std::string& key, const std::string& where, std::size_t fallback,
                     std::size_t min = 0) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError(join(where, key), "expected a non-negative integer");
    const auto out = v.get<std::size_t>();
    if (out < min) throw ConfigError(join(where, key), "must be at least " + std::to_string(min));
    return out;
}

double get_double(const json& obj, const std::string& key, const std::string& where, double fallback,
                  bool positive = true) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(join(where, key), "expected a number");
    const double out = v.get<double>();
    if (!std::isfinite(out) || (positive && out <= 0.0)) throw ConfigError(join(where, key), "must be a positive number");
    return out;
}

std::string get_string(const json& obj, const std::string& key, const std::string& where, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) throw ConfigError(join(where, key), "expected a string");
    return obj.at(key).get<std::string>();
}

template <typename T>
std::vector<T> get_list(const json& obj, const std::string& key, const std::vector<T>& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(key, "expected an array");
    std::vector<T> out;
    for (const json& item : v) {
        if (!item.is_number_unsigned() && !(item.is_number_integer() && item.get<long long>() >= 0))
            throw ConfigError(key, "expected non-negative integers");
        out.push_back(item.get<T>());
    }
    return out;
}

OptimizerKind parse_optimizer(const std::string& name, const std::string& field) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError(field, "expected \"adam\" or \"sgd\"");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

Projection parse_projection(const std::string& name) {
    for (Projection p : kProjections)
        if (to_string(p) == name) return p;
    throw ConfigError("placement.projections", "expected q, k, v or o");
}

}  // namespace

std::string to_string(Command c) {
    switch (c) {
        case Command::decompose: return "decompose";
        case Command::train: return "train";
        case Command::sweep_c: return "sweep-c";
        case Command::forget: return "forget";
        case Command::compare: return "compare";
    }
    return "unknown";
}

Command parse_command(const std::string& name) {
    for (Command c : {Command::decompose, Command::train, Command::sweep_c, Command::forget, Command::compare})
        if (to_string(c) == name) return c;
    throw ConfigError("command", "unknown command '" + name + "'");
}

std::size_t ExperimentConfig::principal_dim() const {
    return p ? *p : setup.encoder.d_model - *c;
}

EpisodeConfig ExperimentConfig::episode(std::size_t n_shots) const { return {n_shots, n_query}; }

ExperimentConfig parse_config(const std::string& json_text, const std::string& command) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
    }
    require_object(root, "<document>");
    require_known(root, "", {"command", "model", "task", "pretrain", "methods", "r", "c", "p", "eta", "optimizer", "lr",
                             "epochs", "shots", "n_query", "seeds", "placement", "dims", "checkpoint", "output_dir"});

    ExperimentConfig cfg;
    if (!command.empty()) {
        cfg.command = parse_command(command);
    } else if (root.contains("command")) {
        cfg.command = parse_command(get_string(root, "command", "", ""));
    } else {
        throw ConfigError("command", "missing");
    }

    EncoderConfig& enc = cfg.setup.encoder;
    if (root.contains("model")) {
        const json& m = require_object(root.at("model"), "model");
        require_known(m, "model", {"d_model", "n_heads", "n_layers", "seq_len"});
        enc.d_model = get_size(m, "d_model", "model", enc.d_model, 1);
        enc.n_heads = get_size(m, "n_heads", "model", enc.n_heads, 1);
        enc.n_layers = get_size(m, "n_layers", "model", enc.n_layers, 1);
        enc.seq_len = get_size(m, "seq_len", "model", enc.seq_len, 1);
        if (enc.d_model % enc.n_heads != 0) throw ConfigError("model.n_heads", "must divide model.d_model");
    }
    if (root.contains("task")) {
        const json& t = require_object(root.at("task"), "task");
        require_known(t, "task", {"n_classes_task0", "n_classes_task1", "margin", "noise", "temperature"});
        cfg.setup.n_classes_task0 = get_size(t, "n_classes_task0", "task", cfg.setup.n_classes_task0, 2);
        cfg.setup.n_classes_task1 = get_size(t, "n_classes_task1", "task", cfg.setup.n_classes_task1, 2);
        cfg.setup.margin = get_double(t, "margin", "task", cfg.setup.margin);
        cfg.setup.noise = get_double(t, "noise", "task", cfg.setup.noise, false);
        cfg.setup.temperature = get_double(t, "temperature", "task", cfg.setup.temperature);
    }
    if (cfg.setup.n_classes_task0 + cfg.setup.n_classes_task1 > enc.d_model)
        throw ConfigError("task", "n_classes_task0 + n_classes_task1 must not exceed model.d_model");
    PretrainConfig& pre = cfg.setup.pretrain;
    if (root.contains("pretrain")) {
        const json& t = require_object(root.at("pretrain"), "pretrain");
        require_known(t, "pretrain", {"base_scale", "samples_per_class", "heldout_per_class", "epochs", "optimizer", "lr",
                                      "principal_dim", "gap_target", "min_accuracy"});
        pre.base_scale = get_double(t, "base_scale", "pretrain", pre.base_scale);
        pre.samples_per_class = get_size(t, "samples_per_class", "pretrain", pre.samples_per_class, 1);
        pre.heldout_per_class = get_size(t, "heldout_per_class", "pretrain", pre.heldout_per_class, 1);
        pre.epochs = get_size(t, "epochs", "pretrain", pre.epochs);
        pre.optimizer = parse_optimizer(get_string(t, "optimizer", "pretrain", "adam"), "pretrain.optimizer");
        pre.lr = get_double(t, "lr", "pretrain", pre.lr);
        pre.principal_dim = get_size(t, "principal_dim", "pretrain", pre.principal_dim, 1);
        pre.gap_target = get_double(t, "gap_target", "pretrain", pre.gap_target);
        pre.min_accuracy = get_double(t, "min_accuracy", "pretrain", pre.min_accuracy, false);
    }
    if (pre.principal_dim > enc.d_model) throw ConfigError("pretrain.principal_dim", "must not exceed model.d_model");

    if (root.contains("methods")) {
        const json& m = root.at("methods");
        if (!m.is_array() || m.empty()) throw ConfigError("methods", "expected a non-empty array");
        cfg.methods.clear();
        for (const json& item : m) {
            if (!item.is_string()) throw ConfigError("methods", "expected strings");
            try {
                cfg.methods.push_back(parse_method(item.get<std::string>()));
            } catch (const RangeError&) {
                throw ConfigError("methods", "unknown method '" + item.get<std::string>() + "'");
            }
        }
    }

    TrainConfig& tr = cfg.train;
    tr.rank = get_size(root, "r", "", tr.rank, 1);
    tr.eta = get_double(root, "eta", "", tr.eta);
    tr.optimizer = parse_optimizer(get_string(root, "optimizer", "", "adam"), "optimizer");
    tr.lr = get_double(root, "lr", "", tr.lr);
    tr.epochs = get_size(root, "epochs", "", tr.epochs);

    const bool has_c = root.contains("c");
    const bool has_p = root.contains("p");
    if (has_c == has_p) throw ConfigError(has_c ? "c" : "p", "exactly one of c or p must be given");
    if (has_c) {
        cfg.c = get_size(root, "c", "", 0, 1);
        if (*cfg.c > enc.d_model) throw ConfigError("c", "must not exceed model.d_model");
    } else {
        cfg.p = get_size(root, "p", "", 0);
        if (*cfg.p >= enc.d_model) throw ConfigError("p", "must be below model.d_model");
    }
    tr.principal_dim = cfg.principal_dim();
    if (tr.rank > enc.d_model - tr.principal_dim) throw ConfigError("r", "must not exceed the complementary dim c");

    tr.placement = AdapterPlacement::qkv(enc.n_layers);
    if (root.contains("placement")) {
        const json& pl = require_object(root.at("placement"), "placement");
        require_known(pl, "placement", {"layers", "projections"});
        std::vector<std::size_t> layers(enc.n_layers);
        for (std::size_t l = 0; l < layers.size(); ++l) layers[l] = l;
        if (pl.contains("layers")) {
            layers = get_list<std::size_t>(pl, "layers", layers);
            for (std::size_t l : layers)
                if (l >= enc.n_layers) throw ConfigError("placement.layers", "layer index out of range");
        }
        std::array<bool, 4> proj{true, true, true, false};
        if (pl.contains("projections")) {
            const json& ps = pl.at("projections");
            if (!ps.is_array() || ps.empty()) throw ConfigError("placement.projections", "expected a non-empty array");
            proj = {false, false, false, false};
            for (const json& item : ps) {
                if (!item.is_string()) throw ConfigError("placement.projections", "expected strings");
                proj[static_cast<std::size_t>(parse_projection(item.get<std::string>()))] = true;
            }
        }
        tr.placement = AdapterPlacement::none(enc.n_layers);
        for (std::size_t l : layers) tr.placement.visual[l] = proj;
        if (tr.placement.selected_count() == 0) throw ConfigError("placement", "selects no projection");
    }

    cfg.shots = get_list<std::size_t>(root, "shots", cfg.shots);
    if (cfg.shots.empty()) throw ConfigError("shots", "must not be empty");
    for (std::size_t s : cfg.shots)
        if (s == 0) throw ConfigError("shots", "shot counts must be positive");
    cfg.n_query = get_size(root, "n_query", "", cfg.n_query, 1);

    if (!root.contains("seeds")) throw ConfigError("seeds", "missing");
    cfg.seeds = get_list<std::uint64_t>(root, "seeds", {});
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must not be empty");

    cfg.dims = get_list<std::size_t>(root, "dims", {});
    for (std::size_t d : cfg.dims)
        if (d < tr.rank || d > enc.d_model) throw ConfigError("dims", "every dim must lie in [r, model.d_model]");
    cfg.checkpoint = get_string(root, "checkpoint", "", "");
    cfg.output_dir = get_string(root, "output_dir", "", cfg.output_dir);
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    const EncoderConfig& enc = cfg.setup.encoder;
    const PretrainConfig& pre = cfg.setup.pretrain;
    json j;
    j["command"] = to_string(cfg.command);
    j["model"] = {{"d_model", enc.d_model}, {"n_heads", enc.n_heads}, {"n_layers", enc.n_layers}, {"seq_len", enc.seq_len}};
    j["task"] = {{"n_classes_task0", cfg.setup.n_classes_task0},
                 {"n_classes_task1", cfg.setup.n_classes_task1},
                 {"margin", cfg.setup.margin},
                 {"noise", cfg.setup.noise},
                 {"temperature", cfg.setup.temperature}};
    j["pretrain"] = {{"base_scale", pre.base_scale},       {"samples_per_class", pre.samples_per_class},
                     {"heldout_per_class", pre.heldout_per_class}, {"epochs", pre.epochs},
                     {"optimizer", optimizer_name(pre.optimizer)}, {"lr", pre.lr},
                     {"principal_dim", pre.principal_dim}, {"gap_target", pre.gap_target},
                     {"min_accuracy", pre.min_accuracy}};
    json methods = json::array();
    for (Method m : cfg.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    j["r"] = cfg.train.rank;
    if (cfg.c) j["c"] = *cfg.c;
    if (cfg.p) j["p"] = *cfg.p;
    j["eta"] = cfg.train.eta;
    j["optimizer"] = optimizer_name(cfg.train.optimizer);
    j["lr"] = cfg.train.lr;
    j["epochs"] = cfg.train.epochs;
    j["shots"] = cfg.shots;
    j["n_query"] = cfg.n_query;
    j["seeds"] = cfg.seeds;
    json layers = json::array(), names = json::array();
    const auto& visual = cfg.train.placement.visual;
    for (std::size_t l = 0; l < visual.size(); ++l) {
        if (std::none_of(visual[l].begin(), visual[l].end(), [](bool b) { return b; })) continue;
        layers.push_back(l);
        if (names.empty())
            for (Projection p : kProjections)
                if (visual[l][static_cast<std::size_t>(p)]) names.push_back(to_string(p));
    }
    j["placement"] = {{"layers", layers}, {"projections", names}};
    if (!cfg.dims.empty()) j["dims"] = cfg.dims;
    if (!cfg.checkpoint.empty()) j["checkpoint"] = cfg.checkpoint;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2);
}

}  // namespace complora
