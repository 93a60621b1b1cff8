#include "voxadv/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "voxadv/error.hpp"

namespace voxadv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    N out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("cannot parse value '" + v + "' for key '" + key + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("cannot parse boolean '" + v + "' for key '" + key + "'");
}

Extent3 parse_extent(const std::string& key, const std::string& v) {
    std::vector<int> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, 'x')) parts.push_back(parse_number<int>(key, trim(item)));
    if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
    if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
    throw ConfigError("patch size '" + v + "' must be N or HxWxD");
}

OptimizerKind parse_optimizer(const std::string& v) {
    if (v == "sgd") return OptimizerKind::sgd;
    if (v == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + v + "' (expected sgd or adam)");
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

#define VOXADV_DOUBLE_FIELD(name)                                                          \
    {#name, Field{[](const TrainConfig& c) { return fmt_double(c.name); },                 \
                  [](TrainConfig& c, const std::string& k, const std::string& v) {         \
                      c.name = parse_number<double>(k, v);                                 \
                  }}}
#define VOXADV_INT_FIELD(name)                                                             \
    {#name, Field{[](const TrainConfig& c) { return std::to_string(c.name); },             \
                  [](TrainConfig& c, const std::string& k, const std::string& v) {         \
                      c.name = parse_number<decltype(c.name)>(k, v);                       \
                  }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"preset", Field{[](const TrainConfig& c) { return to_string(c.preset); },
                         [](TrainConfig& c, const std::string&, const std::string& v) { c.preset = parse_preset(v); }}},
        VOXADV_DOUBLE_FIELD(alpha),
        VOXADV_DOUBLE_FIELD(beta),
        VOXADV_DOUBLE_FIELD(gamma_max),
        VOXADV_DOUBLE_FIELD(lambda_ema),
        VOXADV_DOUBLE_FIELD(threshold_t),
        VOXADV_INT_FIELD(t_max),
        VOXADV_INT_FIELD(batch_labeled),
        VOXADV_INT_FIELD(batch_unlabeled),
        {"student_optimizer",
         Field{[](const TrainConfig& c) { return std::string(c.student_optimizer == OptimizerKind::sgd ? "sgd" : "adam"); },
               [](TrainConfig& c, const std::string&, const std::string& v) { c.student_optimizer = parse_optimizer(v); }}},
        VOXADV_DOUBLE_FIELD(lr),
        VOXADV_INT_FIELD(lr_decay_step),
        VOXADV_DOUBLE_FIELD(lr_decay_factor),
        VOXADV_DOUBLE_FIELD(momentum),
        VOXADV_DOUBLE_FIELD(weight_decay),
        VOXADV_DOUBLE_FIELD(adam_beta1),
        VOXADV_DOUBLE_FIELD(adam_beta2),
        VOXADV_DOUBLE_FIELD(disc_lr),
        VOXADV_DOUBLE_FIELD(disc_beta1),
        VOXADV_DOUBLE_FIELD(disc_beta2),
        VOXADV_INT_FIELD(disc_steps),
        {"patch_size",
         Field{[](const TrainConfig& c) { return to_string(c.patch_size); },
               [](TrainConfig& c, const std::string& k, const std::string& v) { c.patch_size = parse_extent(k, v); }}},
        VOXADV_INT_FIELD(num_classes),
        VOXADV_INT_FIELD(base_channels),
        VOXADV_INT_FIELD(fused_channels),
        VOXADV_INT_FIELD(head_width),
        VOXADV_INT_FIELD(per_class_cap),
        {"flip_augment",
         Field{[](const TrainConfig& c) { return std::string(c.flip_augment ? "true" : "false"); },
               [](TrainConfig& c, const std::string& k, const std::string& v) { c.flip_augment = parse_bool(k, v); }}},
        VOXADV_INT_FIELD(checkpoint_every),
        VOXADV_INT_FIELD(seed),
    };
    return table;
}

#undef VOXADV_DOUBLE_FIELD
#undef VOXADV_INT_FIELD

}  // namespace

std::string to_string(Preset p) {
    switch (p) {
        case Preset::la: return "la";
        case Preset::mo: return "mo";
        case Preset::synthetic: return "synthetic";
    }
    return "synthetic";
}

Preset parse_preset(const std::string& s) {
    if (s == "la") return Preset::la;
    if (s == "mo") return Preset::mo;
    if (s == "synthetic") return Preset::synthetic;
    throw ConfigError("unknown preset '" + s + "' (expected la, mo or synthetic)");
}

TrainConfig make_preset(Preset p) {
    TrainConfig c;
    c.preset = p;
    switch (p) {
        case Preset::la:
            c.t_max = 6000;
            c.lr_decay_step = 2500;
            c.patch_size = {112, 112, 80};
            c.base_channels = 16;
            break;
        case Preset::mo:
            c.t_max = 6000;
            c.lr_decay_step = 2500;
            c.student_optimizer = OptimizerKind::adam;
            c.lr = 1e-3;
            c.beta = 100.0;
            c.patch_size = {128, 128, 64};
            c.base_channels = 16;
            c.num_classes = 9;
            break;
        case Preset::synthetic:
            // LA recipe with the decay step scaled from 2500/6000 to t_max.
            c.t_max = 2000;
            c.lr_decay_step = 833;
            break;
    }
    return c;
}

std::string ConfigReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v;
    }
    return out;
}

ConfigReport validate_config(const TrainConfig& c) {
    ConfigReport r;
    auto fail = [&](const std::string& what, const std::string& got) { r.violations.push_back(what + " (got " + got + ")"); };
    for (auto [name, v] : {std::pair{"alpha", c.alpha}, {"beta", c.beta}, {"gamma_max", c.gamma_max}}) {
        if (!(v >= 0.0)) fail(std::string(name) + " must be >= 0", fmt_double(v));
    }
    if (!(c.threshold_t >= 0.0 && c.threshold_t <= 1.0)) fail("threshold_t out of [0,1]", fmt_double(c.threshold_t));
    if (!(c.lambda_ema >= 0.0 && c.lambda_ema < 1.0)) fail("lambda_ema out of [0,1)", fmt_double(c.lambda_ema));
    if (c.t_max <= 0) fail("t_max must be > 0", std::to_string(c.t_max));
    if (c.batch_labeled < 1) fail("batch_labeled must be >= 1", std::to_string(c.batch_labeled));
    if (c.batch_unlabeled < 1) fail("batch_unlabeled must be >= 1", std::to_string(c.batch_unlabeled));
    if (!(c.lr > 0.0)) fail("lr must be > 0", fmt_double(c.lr));
    if (c.lr_decay_step <= 0) fail("lr_decay_step must be > 0", std::to_string(c.lr_decay_step));
    if (!(c.lr_decay_factor > 0.0 && c.lr_decay_factor <= 1.0)) fail("lr_decay_factor out of (0,1]", fmt_double(c.lr_decay_factor));
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum out of [0,1)", fmt_double(c.momentum));
    if (!(c.weight_decay >= 0.0)) fail("weight_decay must be >= 0", fmt_double(c.weight_decay));
    for (auto [name, v] : {std::pair{"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2},
                           {"disc_beta1", c.disc_beta1}, {"disc_beta2", c.disc_beta2}}) {
        if (!(v >= 0.0 && v < 1.0)) fail(std::string(name) + " out of [0,1)", fmt_double(v));
    }
    if (!(c.disc_lr > 0.0)) fail("disc_lr must be > 0", fmt_double(c.disc_lr));
    if (c.disc_steps < 1) fail("disc_steps must be >= 1", std::to_string(c.disc_steps));
    for (auto [name, v] : {std::pair{"h", c.patch_size.h}, {"w", c.patch_size.w}, {"d", c.patch_size.d}}) {
        if (v < 8 || v % 8 != 0) fail(std::string("patch_size axis ") + name + " must be a positive multiple of 8", std::to_string(v));
    }
    if (c.num_classes < 2 || c.num_classes > 255) fail("num_classes out of [2,255]", std::to_string(c.num_classes));
    if (c.base_channels < 1) fail("base_channels must be >= 1", std::to_string(c.base_channels));
    if (c.fused_channels < 1) fail("fused_channels must be >= 1", std::to_string(c.fused_channels));
    if (c.head_width < 1) fail("head_width must be >= 1", std::to_string(c.head_width));
    if (c.per_class_cap < 1) fail("per_class_cap must be >= 1", std::to_string(c.per_class_cap));
    if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0", std::to_string(c.checkpoint_every));
    return r;
}

const TrainConfig& require_valid(const TrainConfig& cfg) {
    const ConfigReport r = validate_config(cfg);
    if (!r.ok()) throw ConfigError("invalid config: " + r.summary());
    return cfg;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            field.set(cfg, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string serialize_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
    return out;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write config " + path.string());
    f << serialize_config(cfg);
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, field] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

}  // namespace voxadv
