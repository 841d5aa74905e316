#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "posekit/errors.hpp"

namespace posekit {

/// Flat key=value document. Keys are sorted, so serialization is canonical:
/// parse(serialize(kv)) == kv and serialize is stable across runs.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, int64_t value);
    void set_double(const std::string& key, double value);
    void set_bool(const std::string& key, bool value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int64_t> get_int_list(const std::string& key, const std::vector<int64_t>& fallback) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace posekit
