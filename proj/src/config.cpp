#include "jspma/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace jspma {

using nlohmann::json;

std::string_view to_string(MissedBerRule rule) {
    switch (rule) {
        case MissedBerRule::Half: return "half";
        case MissedBerRule::All: return "all";
        case MissedBerRule::Exclude: return "exclude";
    }
    return "unknown";
}

std::string_view to_string(UdsrRule rule) {
    switch (rule) {
        case UdsrRule::Verified: return "verified";
        case UdsrRule::Selected: return "selected";
    }
    return "unknown";
}

double SystemConfig::tuning_rho0_db() const {
    if (tune_rho0_db) return *tune_rho0_db;
    if (rho0_db.empty()) return 0.0;
    return rho0_db[rho0_db.size() / 2];
}

void SystemConfig::validate() const {
    if (M < 1) throw ConfigError("m", "must be positive");
    if (N < 1) throw ConfigError("n", "must be positive");
    if (Na < 1) throw ConfigError("n_a", "must be positive");
    if (Na > N) throw ConfigError("n_a", "exceeds the number of online users n");
    if (d < 1) throw ConfigError("d", "must be positive");
    if (T < 1) throw ConfigError("t", "must be positive");
    if (d >= T) throw ConfigError("d", "must be smaller than the frame length t");
    if (K < 1) throw ConfigError("k", "must be positive");
    if (!(delta >= 0.0)) throw ConfigError("delta", "must be >= 0");
    if (rho0_db.empty()) throw ConfigError("rho0_db", "sweep must not be empty");
    if (modes.empty()) throw ConfigError("mode", "at least one mode required");
    if (trials < 1) throw ConfigError("trials", "must be positive");
    if (max_iters < 0) throw ConfigError("max_iters", "must be >= 0 (0 selects n_a)");
    if (crc_bits != 16) throw ConfigError("crc_bits", "only 16 is supported");
    if (d - 6 - crc_bits < 1) throw ConfigError("d", "leaves no payload bits after CRC and trellis tail");
    if (Na + na_estimate_offset < 1) throw ConfigError("n_a_estimate_offset", "estimated n_a must stay >= 1");
    if (eviction_retries < 0) throw ConfigError("eviction_retries", "must be >= 0");
    if (!(residual_floor_eps >= 0.0)) throw ConfigError("residual_floor_eps", "must be >= 0");
    if (delta_grid.empty()) throw ConfigError("delta_grid", "must not be empty");
    for (double g : delta_grid)
        if (!(g >= 0.0)) throw ConfigError("delta_grid", "entries must be >= 0");
}

namespace {

template <typename T>
T get_as(const json& doc, const char* key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("wrong type (") + e.what() + ")");
    }
}

int get_int(const json& doc, const char* key) {
    const auto& v = doc.at(key);
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<int>();
}

}  // namespace

SystemConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("", "top level must be an object");

    static const std::set<std::string> known{
        "name", "m", "n", "n_a", "d", "t", "k", "delta", "rho0_db", "mode", "trials", "master_seed",
        "max_iters", "crc_bits", "missed_user_ber_rule", "udsr_rule", "n_a_estimate_offset",
        "eviction_retries", "residual_floor_eps", "delta_grid", "tune_rho0_db"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.contains(key)) throw ConfigError(key, "unknown key");
    }

    SystemConfig c;
    if (doc.contains("name")) c.name = get_as<std::string>(doc, "name");
    if (doc.contains("m")) c.M = get_int(doc, "m");
    if (doc.contains("n")) c.N = get_int(doc, "n");
    if (doc.contains("n_a")) c.Na = get_int(doc, "n_a");
    if (doc.contains("d")) c.d = get_int(doc, "d");
    if (doc.contains("t")) c.T = get_int(doc, "t");
    if (doc.contains("k")) c.K = get_int(doc, "k");
    if (doc.contains("delta")) c.delta = get_as<double>(doc, "delta");
    if (doc.contains("rho0_db")) c.rho0_db = get_as<std::vector<double>>(doc, "rho0_db");
    if (doc.contains("mode")) {
        const auto& m = doc.at("mode");
        std::vector<std::string> names;
        if (m.is_string()) {
            names.push_back(m.get<std::string>());
        } else {
            names = get_as<std::vector<std::string>>(doc, "mode");
        }
        c.modes.clear();
        for (const auto& n : names) {
            try {
                c.modes.push_back(parse_power_mode(n));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("mode", e.what());
            }
        }
    }
    if (doc.contains("trials")) c.trials = get_int(doc, "trials");
    if (doc.contains("master_seed")) {
        const auto& v = doc.at("master_seed");
        if (!v.is_number_integer()) throw ConfigError("master_seed", "expected an integer");
        c.master_seed = v.get<std::uint64_t>();
    }
    if (doc.contains("max_iters")) c.max_iters = get_int(doc, "max_iters");
    if (doc.contains("crc_bits")) c.crc_bits = get_int(doc, "crc_bits");
    if (doc.contains("missed_user_ber_rule")) {
        const auto v = get_as<std::string>(doc, "missed_user_ber_rule");
        if (v == "half") c.missed_user_ber_rule = MissedBerRule::Half;
        else if (v == "all") c.missed_user_ber_rule = MissedBerRule::All;
        else if (v == "exclude") c.missed_user_ber_rule = MissedBerRule::Exclude;
        else throw ConfigError("missed_user_ber_rule", "expected half, all or exclude");
    }
    if (doc.contains("udsr_rule")) {
        const auto v = get_as<std::string>(doc, "udsr_rule");
        if (v == "verified") c.udsr_rule = UdsrRule::Verified;
        else if (v == "selected") c.udsr_rule = UdsrRule::Selected;
        else throw ConfigError("udsr_rule", "expected verified or selected");
    }
    if (doc.contains("n_a_estimate_offset")) c.na_estimate_offset = get_int(doc, "n_a_estimate_offset");
    if (doc.contains("eviction_retries")) c.eviction_retries = get_int(doc, "eviction_retries");
    if (doc.contains("residual_floor_eps")) c.residual_floor_eps = get_as<double>(doc, "residual_floor_eps");
    if (doc.contains("delta_grid")) c.delta_grid = get_as<std::vector<double>>(doc, "delta_grid");
    if (doc.contains("tune_rho0_db")) c.tune_rho0_db = get_as<double>(doc, "tune_rho0_db");

    c.validate();
    return c;
}

SystemConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "' (file not found)");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_json(const SystemConfig& c) {
    json doc;
    doc["name"] = c.name;
    doc["m"] = c.M;
    doc["n"] = c.N;
    doc["n_a"] = c.Na;
    doc["d"] = c.d;
    doc["t"] = c.T;
    doc["k"] = c.K;
    doc["delta"] = c.delta;
    doc["rho0_db"] = c.rho0_db;
    std::vector<std::string> modes;
    for (auto m : c.modes) modes.emplace_back(to_string(m));
    doc["mode"] = modes;
    doc["trials"] = c.trials;
    doc["master_seed"] = c.master_seed;
    doc["max_iters"] = c.max_iters;
    doc["crc_bits"] = c.crc_bits;
    doc["missed_user_ber_rule"] = std::string(to_string(c.missed_user_ber_rule));
    doc["udsr_rule"] = std::string(to_string(c.udsr_rule));
    doc["n_a_estimate_offset"] = c.na_estimate_offset;
    doc["eviction_retries"] = c.eviction_retries;
    doc["residual_floor_eps"] = c.residual_floor_eps;
    doc["delta_grid"] = c.delta_grid;
    if (c.tune_rho0_db) doc["tune_rho0_db"] = *c.tune_rho0_db;
    return doc.dump(2);
}

double overloading_factor(int Na, int M, int T, int d) {
    return static_cast<double>(Na) / (static_cast<double>(M) * T / d);
}

}  // namespace jspma
