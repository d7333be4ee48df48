#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace synthpipe::toml {

// Minimal TOML subset: [table] headers, bare keys, basic "..." strings,
// integers, floats, booleans, and flat arrays of those. Dotted table headers
// ([a.b]) are allowed; inline tables, multiline strings and arrays-of-tables
// are not. Enough for pipeline config files, nothing more.

struct Value {
    enum class Type { string, integer, floating, boolean, array };
    Type type = Type::string;
    std::string str;
    std::int64_t integer = 0;
    double floating = 0.0;
    bool boolean = false;
    std::vector<Value> array;
};

class Table {
public:
    // Keys are fully qualified with dots, e.g. "backend.type".
    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    const Value& at(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_string_array(const std::string& key) const;

    // All fully qualified keys, in file order.
    const std::vector<std::string>& keys() const { return order_; }

    void set(const std::string& key, Value v);

private:
    std::map<std::string, Value> entries_;
    std::vector<std::string> order_;
};

// Throws ValidationError with a line number on malformed input.
Table parse(std::string_view text, const std::string& origin = "<string>");
Table parse_file(const std::filesystem::path& path);

}  // namespace synthpipe::toml
