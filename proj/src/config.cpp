#include "florg/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "florg/errors.hpp"

namespace florg {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'", line);
}

double parse_double(const std::string& key, const std::string& value, int line) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0' || errno == ERANGE) bad_value(key, value, line);
    return v;
}

long long parse_int(const std::string& key, const std::string& value, int line) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0' || errno == ERANGE) bad_value(key, value, line);
    return v;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value, int line) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0' || errno == ERANGE ||
        value.find('-') != std::string::npos) {
        bad_value(key, value, line);
    }
    return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, line);
}

int parse_int32(const std::string& key, const std::string& value, int line) {
    const long long v = parse_int(key, value, line);
    if (v < -2147483647LL || v > 2147483647LL) bad_value(key, value, line);
    return static_cast<int>(v);
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value, int line) {
    if (key == "task") {
        if (value == "matrix_recovery") cfg.task.kind = TaskKind::matrix_recovery;
        else if (value == "softmax_classify") cfg.task.kind = TaskKind::softmax_classify;
        else bad_value(key, value, line);
    } else if (key == "scheme") {
        try {
            cfg.scheme = scheme_from_name(value);
        } catch (const ConfigError&) {
            bad_value(key, value, line);
        }
    } else if (key == "init") {
        if (value == "semi_orthogonal") cfg.init = InitScheme::semi_orthogonal;
        else if (value == "kaiming") cfg.init = InitScheme::kaiming;
        else if (value == "svd") cfg.init = InitScheme::svd;
        else bad_value(key, value, line);
    } else if (key == "d_out") {
        cfg.task.d_out = parse_int32(key, value, line);
    } else if (key == "d_in") {
        cfg.task.d_in = parse_int32(key, value, line);
    } else if (key == "num_samples") {
        cfg.task.num_samples = parse_int32(key, value, line);
    } else if (key == "true_rank") {
        cfg.task.true_rank = parse_int32(key, value, line);
    } else if (key == "noise_std") {
        cfg.task.noise_std = parse_double(key, value, line);
    } else if (key == "num_classes") {
        cfg.task.num_classes = parse_int32(key, value, line);
    } else if (key == "clients") {
        cfg.n_clients = parse_int32(key, value, line);
    } else if (key == "rounds") {
        cfg.rounds = parse_int32(key, value, line);
    } else if (key == "rank") {
        cfg.r = parse_int32(key, value, line);
    } else if (key == "alpha") {
        cfg.alpha = parse_double(key, value, line);
    } else if (key == "eta") {
        cfg.eta = parse_double(key, value, line);
    } else if (key == "rho") {
        cfg.rho = parse_double(key, value, line);
    } else if (key == "participation_ratio") {
        cfg.participation_ratio = parse_double(key, value, line);
    } else if (key == "batch_size") {
        cfg.batch_size = parse_int32(key, value, line);
    } else if (key == "local_epochs") {
        cfg.local_epochs = parse_int32(key, value, line);
    } else if (key == "align") {
        cfg.align = parse_bool(key, value, line);
    } else if (key == "seed") {
        cfg.seed = parse_seed(key, value, line);
    } else if (key == "target_loss") {
        cfg.target_loss = parse_double(key, value, line);
    } else if (key == "target_accuracy") {
        cfg.target_accuracy = parse_double(key, value, line);
    } else {
        throw ConfigError("unknown key '" + key + "'", line);
    }
}

} // namespace

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::florg: return "florg";
        case Scheme::fedit: return "fedit";
        case Scheme::federa: return "federa";
        case Scheme::ffa_lora: return "ffa_lora";
        case Scheme::fedsa_lora: return "fedsa_lora";
        case Scheme::fedex_lora: return "fedex_lora";
    }
    return "unknown";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "florg") return Scheme::florg;
    if (name == "fedit") return Scheme::fedit;
    if (name == "federa") return Scheme::federa;
    if (name == "ffa_lora") return Scheme::ffa_lora;
    if (name == "fedsa_lora") return Scheme::fedsa_lora;
    if (name == "fedex_lora") return Scheme::fedex_lora;
    throw ConfigError("unknown scheme '" + name + "'");
}

const char* task_name(TaskKind k) {
    return k == TaskKind::matrix_recovery ? "matrix_recovery" : "softmax_classify";
}

const char* init_name(InitScheme s) {
    switch (s) {
        case InitScheme::semi_orthogonal: return "semi_orthogonal";
        case InitScheme::kaiming: return "kaiming";
        case InitScheme::svd: return "svd";
    }
    return "unknown";
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        }
        if (!seen.insert(key).second) {
            throw ConfigError("duplicate key '" + key + "'", line_no);
        }
        set_key(cfg, key, value, line_no);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    set_key(cfg, key, value, 0);
}

void validate_config(const ExperimentConfig& cfg) {
    const TaskSpec& t = cfg.task;
    if (t.d_out < 1 || t.d_in < 1) throw ConfigError("d_out and d_in must be >= 1");
    if (t.num_samples < 1) throw ConfigError("num_samples must be >= 1");
    const int k = std::min(t.d_out, t.d_in);
    if (cfg.r < 1 || cfg.r > k) {
        throw ConfigError("rank must be in [1, min(d_out, d_in)]");
    }
    if (t.true_rank < 0 || t.true_rank > k) {
        throw ConfigError("true_rank must be in [0, min(d_out, d_in)]");
    }
    if (!(t.noise_std >= 0.0) || !std::isfinite(t.noise_std)) {
        throw ConfigError("noise_std must be >= 0");
    }
    if (t.kind == TaskKind::softmax_classify) {
        if (t.num_classes < 2) throw ConfigError("softmax_classify needs num_classes >= 2");
        if (t.d_out != t.num_classes) {
            throw ConfigError("softmax_classify needs d_out == num_classes");
        }
    } else if (t.num_classes < 1) {
        throw ConfigError("num_classes must be >= 1");
    }
    if (cfg.n_clients < 1) throw ConfigError("clients must be >= 1");
    if (t.num_samples < cfg.n_clients) throw ConfigError("need at least one sample per client");
    if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
    if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) throw ConfigError("alpha must be > 0");
    if (cfg.eta < 0.0 || !std::isfinite(cfg.eta)) throw ConfigError("eta must be >= 0");
    if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) throw ConfigError("rho must be > 0");
    if (!(cfg.participation_ratio > 0.0) || cfg.participation_ratio > 1.0) {
        throw ConfigError("participation_ratio must be in (0, 1]");
    }
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
}

std::string config_to_text(const ExperimentConfig& cfg) {
    char num[64];
    std::ostringstream out;
    auto put_d = [&](const char* key, double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        out << key << " = " << num << "\n";
    };
    out << "task = " << task_name(cfg.task.kind) << "\n";
    out << "scheme = " << scheme_name(cfg.scheme) << "\n";
    out << "d_out = " << cfg.task.d_out << "\n";
    out << "d_in = " << cfg.task.d_in << "\n";
    out << "num_samples = " << cfg.task.num_samples << "\n";
    out << "true_rank = " << cfg.task.true_rank << "\n";
    put_d("noise_std", cfg.task.noise_std);
    out << "num_classes = " << cfg.task.num_classes << "\n";
    out << "clients = " << cfg.n_clients << "\n";
    out << "rounds = " << cfg.rounds << "\n";
    out << "rank = " << cfg.r << "\n";
    put_d("alpha", cfg.alpha);
    put_d("eta", cfg.eta);
    put_d("rho", cfg.rho);
    put_d("participation_ratio", cfg.participation_ratio);
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "local_epochs = " << cfg.local_epochs << "\n";
    out << "align = " << (cfg.align ? "true" : "false") << "\n";
    out << "init = " << init_name(cfg.init) << "\n";
    out << "seed = " << cfg.seed << "\n";
    if (!std::isnan(cfg.target_loss)) put_d("target_loss", cfg.target_loss);
    if (!std::isnan(cfg.target_accuracy)) put_d("target_accuracy", cfg.target_accuracy);
    return out.str();
}

} // namespace florg
