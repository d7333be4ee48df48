#include "synthpipe/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "synthpipe/error.hpp"

namespace synthpipe::toml {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    throw ValidationError(origin + ":" + std::to_string(line) + ": " + msg);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
            return false;
        }
    }
    return true;
}

class Cursor {
public:
    Cursor(std::string_view text, const std::string& origin, int line)
        : text_(text), origin_(origin), line_(line) {}

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }
    bool done() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char take() { return text_[pos_++]; }
    [[noreturn]] void fail(const std::string& msg) const { toml::fail(origin_, line_, msg); }

    Value parse_value();

private:
    Value parse_string();
    Value parse_scalar();

    std::string_view text_;
    std::string origin_;
    int line_;
    size_t pos_ = 0;
};

Value Cursor::parse_string() {
    Value v;
    v.type = Value::Type::string;
    take();  // opening quote
    while (true) {
        if (done()) fail("unterminated string");
        char c = take();
        if (c == '"') break;
        if (c == '\\') {
            if (done()) fail("unterminated escape");
            char e = take();
            switch (e) {
                case '"': v.str += '"'; break;
                case '\\': v.str += '\\'; break;
                case 'n': v.str += '\n'; break;
                case 't': v.str += '\t'; break;
                case 'r': v.str += '\r'; break;
                default: fail(std::string("unsupported escape \\") + e);
            }
        } else {
            v.str += c;
        }
    }
    return v;
}

Value Cursor::parse_scalar() {
    size_t start = pos_;
    while (!done() && peek() != ',' && peek() != ']' && peek() != '#') ++pos_;
    std::string tok = trim(text_.substr(start, pos_ - start));
    if (tok.empty()) fail("empty value");

    Value v;
    if (tok == "true" || tok == "false") {
        v.type = Value::Type::boolean;
        v.boolean = (tok == "true");
        return v;
    }
    bool looks_float = tok.find_first_of(".eE") != std::string::npos;
    if (!looks_float) {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
        if (ec == std::errc() && p == tok.data() + tok.size()) {
            v.type = Value::Type::integer;
            v.integer = i;
            return v;
        }
    }
    try {
        size_t used = 0;
        double d = std::stod(tok, &used);
        if (used == tok.size()) {
            v.type = Value::Type::floating;
            v.floating = d;
            return v;
        }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
}

Value Cursor::parse_value() {
    skip_ws();
    if (done()) fail("missing value");
    if (peek() == '"') return parse_string();
    if (peek() == '[') {
        take();
        Value v;
        v.type = Value::Type::array;
        skip_ws();
        if (!done() && peek() == ']') {
            take();
            return v;
        }
        while (true) {
            v.array.push_back(parse_value());
            skip_ws();
            if (done()) fail("unterminated array");
            char c = take();
            if (c == ']') break;
            if (c != ',') fail("expected ',' or ']' in array");
            skip_ws();
            if (!done() && peek() == ']') {  // trailing comma
                take();
                break;
            }
        }
        return v;
    }
    return parse_scalar();
}

}  // namespace

const Value& Table::at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw ValidationError("config: missing key '" + key + "'");
    }
    return it->second;
}

void Table::set(const std::string& key, Value v) {
    if (entries_.count(key) == 0) order_.push_back(key);
    entries_[key] = std::move(v);
}

std::string Table::get_string(const std::string& key) const {
    const Value& v = at(key);
    if (v.type != Value::Type::string) {
        throw ValidationError("config: key '" + key + "' is not a string");
    }
    return v.str;
}

std::string Table::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::int64_t Table::get_int(const std::string& key) const {
    const Value& v = at(key);
    if (v.type != Value::Type::integer) {
        throw ValidationError("config: key '" + key + "' is not an integer");
    }
    return v.integer;
}

std::int64_t Table::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double Table::get_double(const std::string& key) const {
    const Value& v = at(key);
    if (v.type == Value::Type::integer) return static_cast<double>(v.integer);
    if (v.type == Value::Type::floating) return v.floating;
    throw ValidationError("config: key '" + key + "' is not a number");
}

double Table::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool Table::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.type != Value::Type::boolean) {
        throw ValidationError("config: key '" + key + "' is not a boolean");
    }
    return v.boolean;
}

std::vector<std::string> Table::get_string_array(const std::string& key) const {
    const Value& v = at(key);
    if (v.type != Value::Type::array) {
        throw ValidationError("config: key '" + key + "' is not an array");
    }
    std::vector<std::string> out;
    out.reserve(v.array.size());
    for (const Value& e : v.array) {
        if (e.type != Value::Type::string) {
            throw ValidationError("config: key '" + key + "' must contain only strings");
        }
        out.push_back(e.str);
    }
    return out;
}

namespace {

// Bracket depth outside strings; decides whether an array continues on the
// next line.
int bracket_depth(std::string_view s) {
    int depth = 0;
    bool in_str = false;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
        if (in_str) continue;
        if (c == '[') ++depth;
        if (c == ']') --depth;
    }
    return depth;
}

}  // namespace

Table parse(std::string_view text, const std::string& origin) {
    Table table;
    std::string prefix;
    int line_no = 0;
    size_t pos = 0;
    std::string pending;  // logical line accumulator for multi-line arrays
    int pending_start = 0;
    int pending_depth = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++line_no;

        // Strip comments outside of strings.
        std::string stripped;
        bool in_str = false;
        for (size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (c == '"' && (i == 0 || raw[i - 1] != '\\')) in_str = !in_str;
            if (c == '#' && !in_str) break;
            stripped += c;
        }

        std::string line;
        int report_line = line_no;
        if (!pending.empty()) {
            pending += ' ';
            pending += trim(stripped);
            pending_depth += bracket_depth(stripped);
            if (pending_depth > 0) continue;
            line = pending;
            pending.clear();
            report_line = pending_start;  // report errors at the key line
        } else {
            line = trim(stripped);
            if (line.empty()) continue;
            const int depth = bracket_depth(line);
            if (depth > 0 && line.front() != '[') {  // value spans lines
                pending = line;
                pending_start = line_no;
                pending_depth = depth;
                continue;
            }
        }

        if (line.front() == '[' && bracket_depth(line) == 0 &&
            line.find('=') == std::string::npos) {
            if (line.back() != ']') fail(origin, report_line, "unterminated table header");
            std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
            if (!valid_key(name)) fail(origin, report_line, "bad table name '" + name + "'");
            prefix = name + ".";
            continue;
        }

        size_t eq = std::string::npos;
        in_str = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            if (line[i] == '=' && !in_str) {
                eq = i;
                break;
            }
        }
        if (eq == std::string::npos) fail(origin, report_line, "expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        if (!valid_key(key)) fail(origin, report_line, "bad key '" + key + "'");
        std::string full = prefix + key;
        if (table.has(full)) fail(origin, report_line, "duplicate key '" + full + "'");

        Cursor cur(std::string_view(line).substr(eq + 1), origin, report_line);
        Value v = cur.parse_value();
        cur.skip_ws();
        if (!cur.done()) cur.fail("trailing characters after value");
        table.set(full, std::move(v));
    }
    if (!pending.empty()) fail(origin, pending_start, "unterminated array");
    return table;
}

Table parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

}  // namespace synthpipe::toml
