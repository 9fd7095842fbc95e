#include "fedsim/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace fedsim {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* what) {
    throw ConfigError("config: key '" + key + "': malformed " + what + " '" + std::string(value) + "'");
}

template <typename T>
T parse_number(const std::string& key, std::string_view value, const char* what) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, what);
    return out;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// Pulls key=value pairs out of the raw text; duplicates are errors.
std::map<std::string, std::string> split_pairs(const std::string& text) {
    std::map<std::string, std::string> pairs;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        size_t eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" +
                              std::string(body) + "'");
        std::string key(trim(body.substr(0, eq)));
        std::string value(trim(body.substr(eq + 1)));
        if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + " has an empty key");
        if (!pairs.emplace(key, value).second) throw ConfigError("config: duplicate key '" + key + "'");
    }
    return pairs;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> pairs = split_pairs(text);
    auto take = [&pairs](const char* key) -> const std::string* {
        auto it = pairs.find(key);
        if (it == pairs.end()) return nullptr;
        return &it->second;
    };

    ExperimentConfig cfg;
    auto take_int = [&](const char* key, int& out) {
        if (const std::string* v = take(key)) out = parse_number<int>(key, *v, "integer");
    };
    auto take_u64 = [&](const char* key, uint64_t& out) {
        if (const std::string* v = take(key)) out = parse_number<uint64_t>(key, *v, "integer");
    };
    auto take_double = [&](const char* key, double& out) {
        if (const std::string* v = take(key)) out = parse_number<double>(key, *v, "number");
    };
    auto take_string = [&](const char* key, std::string& out) {
        if (const std::string* v = take(key)) out = *v;
    };

    take_int("n_devices", cfg.n_devices);
    take_int("k_selected", cfg.k_selected);
    take_int("epochs", cfg.epochs);
    take_int("batch_size", cfg.batch_size);
    take_int("rounds", cfg.rounds);
    take_double("rho", cfg.rho);
    take_double("eta_l0", cfg.eta_l0);
    take_double("gamma", cfg.gamma);
    take_double("eta_g", cfg.strategy.eta_g);
    take_double("mu", cfg.strategy.mu);
    take_int("classes_per_device", cfg.classes_per_device);
    take_u64("master_seed", cfg.master_seed);
    take_int("eval_every", cfg.eval_every);
    take_int("threads", cfg.threads);

    if (const std::string* v = take("tau_max"))
        cfg.tau_max = parse_number<int>("tau_max", *v, "integer");
    else
        cfg.tau_max = cfg.epochs - 1;

    if (const std::string* v = take("strategy")) {
        try {
            cfg.strategy.variant = strategy_from_name(*v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: key 'strategy': ") + e.what());
        }
    }
    if (const std::string* v = take("model")) {
        if (*v == "logistic")
            cfg.model.kind = ModelKind::Logistic;
        else if (*v == "mlp")
            cfg.model.kind = ModelKind::Mlp;
        else
            bad_value("model", *v, "value (expected logistic|mlp)");
    }
    take_int("input_dim", cfg.model.input_dim);
    take_int("num_classes", cfg.model.num_classes);
    take_int("hidden_dim", cfg.model.hidden_dim);

    if (const std::string* v = take("data")) {
        if (*v == "synth")
            cfg.data.source = DataConfig::Source::Synth;
        else if (*v == "idx")
            cfg.data.source = DataConfig::Source::Idx;
        else
            bad_value("data", *v, "value (expected synth|idx)");
    }
    take_int("samples_per_class", cfg.data.samples_per_class);
    take_int("test_samples_per_class", cfg.data.test_samples_per_class);
    take_double("class_sep", cfg.data.class_sep);
    take_double("noise_sigma", cfg.data.noise_sigma);
    take_string("idx_images", cfg.data.idx_images);
    take_string("idx_labels", cfg.data.idx_labels);
    take_string("idx_test_images", cfg.data.idx_test_images);
    take_string("idx_test_labels", cfg.data.idx_test_labels);

    if (const std::string* v = take("target_accuracy"))
        cfg.target_accuracy = parse_number<double>("target_accuracy", *v, "number");

    static const char* known[] = {
        "n_devices", "k_selected", "epochs", "batch_size", "rounds", "rho", "tau_max", "strategy",
        "eta_l0", "eta_g", "gamma", "mu", "model", "input_dim", "num_classes", "hidden_dim",
        "data", "samples_per_class", "test_samples_per_class", "class_sep", "noise_sigma",
        "idx_images", "idx_labels", "idx_test_images", "idx_test_labels", "classes_per_device",
        "master_seed", "target_accuracy", "eval_every", "threads"};
    for (const auto& [key, value] : pairs) {
        bool found = false;
        for (const char* k : known)
            if (key == k) found = true;
        if (!found) throw ConfigError("config: unknown key '" + key + "'");
    }

    validate_config(cfg);
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    auto kv = [&out](const char* key, const std::string& value) {
        out += key;
        out += '=';
        out += value;
        out += '\n';
    };
    auto kv_int = [&kv](const char* key, long long v) { kv(key, std::to_string(v)); };
    auto kv_num = [&kv](const char* key, double v) { kv(key, format_number(v)); };

    out += "# federation\n";
    kv_int("n_devices", cfg.n_devices);
    kv_int("k_selected", cfg.k_selected);
    kv_int("epochs", cfg.epochs);
    kv_int("batch_size", cfg.batch_size);
    kv_int("rounds", cfg.rounds);
    kv_num("rho", cfg.rho);
    kv_int("tau_max", cfg.tau_max);
    out += "# strategy\n";
    kv("strategy", strategy_name(cfg.strategy.variant));
    kv_num("eta_l0", cfg.eta_l0);
    kv_num("eta_g", cfg.strategy.eta_g);
    kv_num("gamma", cfg.gamma);
    kv_num("mu", cfg.strategy.mu);
    out += "# model\n";
    kv("model", cfg.model.kind == ModelKind::Logistic ? "logistic" : "mlp");
    kv_int("input_dim", cfg.model.input_dim);
    kv_int("num_classes", cfg.model.num_classes);
    kv_int("hidden_dim", cfg.model.hidden_dim);
    out += "# data\n";
    kv("data", cfg.data.source == DataConfig::Source::Synth ? "synth" : "idx");
    kv_int("samples_per_class", cfg.data.samples_per_class);
    kv_int("test_samples_per_class", cfg.data.test_samples_per_class);
    kv_num("class_sep", cfg.data.class_sep);
    kv_num("noise_sigma", cfg.data.noise_sigma);
    if (cfg.data.source == DataConfig::Source::Idx) {
        kv("idx_images", cfg.data.idx_images);
        kv("idx_labels", cfg.data.idx_labels);
        kv("idx_test_images", cfg.data.idx_test_images);
        kv("idx_test_labels", cfg.data.idx_test_labels);
    }
    kv_int("classes_per_device", cfg.classes_per_device);
    out += "# run\n";
    kv("master_seed", std::to_string(cfg.master_seed));
    if (cfg.target_accuracy) kv_num("target_accuracy", *cfg.target_accuracy);
    kv_int("eval_every", cfg.eval_every);
    kv_int("threads", cfg.threads);
    return out;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace fedsim
