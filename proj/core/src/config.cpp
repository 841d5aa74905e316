#include "posekit/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace posekit {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.entries_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string KeyValueConfig::serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
    return out.str();
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("config: cannot write " + path.string());
    out << serialize();
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void KeyValueConfig::set_int(const std::string& key, int64_t value) { entries_[key] = std::to_string(value); }

void KeyValueConfig::set_double(const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    entries_[key] = os.str();
}

void KeyValueConfig::set_bool(const std::string& key, bool value) { entries_[key] = value ? "true" : "false"; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: '" + it->second + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + it->second + "'");
}

std::vector<int64_t> KeyValueConfig::get_int_list(const std::string& key,
                                                  const std::vector<int64_t>& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<int64_t> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stoll(item));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has a non-integer element: '" + item + "'");
        }
    }
    return out;
}

} // namespace posekit
