#include "voxadv/run_directory.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "voxadv/error.hpp"

namespace voxadv {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::ordered_json read_info(const fs::path& p) {
    if (!fs::exists(p)) return nlohmann::ordered_json::object();
    std::ifstream in(p);
    try {
        return nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(p.string() + ": malformed run info: " + e.what());
    }
}

void write_info(const fs::path& p, const nlohmann::ordered_json& j) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, p);
}

}  // namespace

fs::path run_root(const fs::path& fallback) {
    const char* env = std::getenv("VOXADV_RUN_DIR");
    return env && *env ? fs::path(env) : fallback;
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force) throw IoError(dir.string() + " is not empty (use --force to overwrite)");
            for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
        }
    }
    fs::create_directories(dir);
}

std::vector<std::string> apply_env_overrides(TrainConfig& cfg, const std::function<const char*(const char*)>& getenv) {
    std::vector<std::string> applied;
    for (const std::string& key : config_keys()) {
        std::string var = "VOXADV_";
        for (char ch : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        const char* v = getenv ? getenv(var.c_str()) : std::getenv(var.c_str());
        if (v && *v) {
            apply_setting(cfg, key, v);
            applied.push_back(key);
        }
    }
    return applied;
}

void RunDirectory::snapshot_config(const TrainConfig& cfg) const {
    fs::create_directories(dir_);
    save_config(config_path(), cfg);
    stamp("config.txt", cfg.seed);
}

void RunDirectory::stamp(const std::string& relative, std::uint64_t seed, const std::string& note) const {
    const fs::path p = dir_ / "run_info.json";
    auto j = read_info(p);
    auto& artifacts = j["artifacts"];
    if (!artifacts.is_object()) artifacts = nlohmann::ordered_json::object();
    nlohmann::ordered_json entry;
    entry["created_utc"] = utc_now();
    entry["seed"] = seed;
    if (!note.empty()) entry["note"] = note;
    artifacts[relative] = std::move(entry);
    write_info(p, j);
}

void RunDirectory::set_info(const std::string& key, const std::string& value) const {
    fs::create_directories(dir_);
    const fs::path p = dir_ / "run_info.json";
    auto j = read_info(p);
    j[key] = value;
    write_info(p, j);
}

fs::path run_dir_of_checkpoint(const fs::path& checkpoint) {
    const fs::path parent = checkpoint.parent_path();
    if (parent.filename() == "checkpoints") return parent.parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

}  // namespace voxadv
