#include "synthpipe/prompt_matrix.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "synthpipe/error.hpp"

namespace synthpipe::prompts {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trimmed(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Unbiased bounded draw; avoids std::uniform_int_distribution, whose output
// is implementation-defined and would break cross-build reproducibility.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

const ParameterAxis& axis_by_name(const std::vector<ParameterAxis>& axes, Axis name) {
    for (const ParameterAxis& a : axes) {
        if (a.name == name) return a;
    }
    throw ValidationError(std::string("missing axis: ") + std::string(axis_name(name)));
}

PromptSpec make_spec(const PromptTemplate& tmpl,
                     const std::array<const ParameterAxis*, 4>& ordered,
                     const std::array<std::uint64_t, 4>& sizes,
                     std::uint64_t combo_index) {
    // Decompose the enumeration index in odometer order, axis_order[0] most
    // significant.
    PromptSpec spec;
    spec.combo_index = combo_index;
    std::uint64_t rem = combo_index;
    for (int i = 3; i >= 0; --i) {
        std::uint64_t vi = rem % sizes[i];
        rem /= sizes[i];
        spec.values[static_cast<int>(ordered[i]->name)] = ordered[i]->values[vi];
    }
    spec.rendered = render(tmpl, spec.values);
    return spec;
}

}  // namespace

std::string_view axis_name(Axis axis) {
    switch (axis) {
        case Axis::location: return "location";
        case Axis::weather_lighting: return "weather_lighting";
        case Axis::camera_film: return "camera_film";
        case Axis::aspect_ratio: return "aspect_ratio";
    }
    return "?";
}

std::optional<Axis> axis_from_name(std::string_view name) {
    for (Axis a : kAxes) {
        if (axis_name(a) == name) return a;
    }
    return std::nullopt;
}

void validate_aspect_ratio(std::string_view value) {
    auto bad = [&] {
        throw ValidationError("axis aspect_ratio: value '" + std::string(value) +
                              "' does not match <positive-int>:<positive-int>");
    };
    size_t colon = value.find(':');
    if (colon == std::string_view::npos) bad();
    std::string_view left = value.substr(0, colon);
    std::string_view right = value.substr(colon + 1);
    for (std::string_view part : {left, right}) {
        if (part.empty()) bad();
        std::uint64_t n = 0;
        for (char c : part) {
            if (!std::isdigit(static_cast<unsigned char>(c))) bad();
            n = n * 10 + static_cast<std::uint64_t>(c - '0');
            if (n > 1'000'000) bad();
        }
        if (n == 0) bad();
    }
}

void validate_axes(const std::vector<ParameterAxis>& axes) {
    std::set<Axis> seen;
    for (const ParameterAxis& axis : axes) {
        if (!seen.insert(axis.name).second) {
            throw ValidationError(std::string("duplicate axis: ") +
                                  std::string(axis_name(axis.name)));
        }
    }
    for (Axis required : kAxes) {
        if (seen.count(required) == 0) {
            throw ValidationError(std::string("missing axis: ") +
                                  std::string(axis_name(required)));
        }
    }
    for (const ParameterAxis& axis : axes) {
        const std::string name(axis_name(axis.name));
        if (axis.values.empty()) {
            throw ValidationError("axis " + name + ": no values");
        }
        std::set<std::string> distinct;
        for (const std::string& value : axis.values) {
            std::string t = trimmed(value);
            if (t.empty()) {
                throw ValidationError("axis " + name + ": blank value");
            }
            if (!distinct.insert(t).second) {
                throw ValidationError("axis " + name + ": duplicate value '" + t + "'");
            }
            // Commas and the --ar marker would make rendered prompts ambiguous.
            if (value.find(',') != std::string::npos) {
                throw ValidationError("axis " + name + ": value '" + value +
                                      "' contains ','");
            }
            if (value.find(" --ar ") != std::string::npos) {
                throw ValidationError("axis " + name + ": value '" + value +
                                      "' contains ' --ar '");
            }
            if (axis.name == Axis::aspect_ratio) validate_aspect_ratio(value);
        }
    }
}

void validate_template(const PromptTemplate& tmpl) {
    std::set<Axis> seen;
    for (Axis a : tmpl.axis_order) seen.insert(a);
    if (seen.size() != 4) {
        throw ValidationError("template axis_order must contain each axis exactly once");
    }
    if (trimmed(tmpl.command_prefix).empty()) {
        throw ValidationError("template command_prefix is blank");
    }
    if (trimmed(tmpl.subject_clause).empty()) {
        throw ValidationError("template subject_clause is blank");
    }
}

std::uint64_t product_cardinality(const std::vector<ParameterAxis>& axes) {
    validate_axes(axes);
    std::uint64_t n = 1;
    for (const ParameterAxis& a : axes) n *= a.values.size();
    return n;
}

std::string render(const PromptTemplate& tmpl, const AxisValues& values) {
    validate_aspect_ratio(values[static_cast<int>(Axis::aspect_ratio)]);
    std::string out = tmpl.command_prefix;
    out += ' ';
    out += tmpl.subject_clause;
    bool first_clause = true;
    for (Axis a : tmpl.axis_order) {
        if (a == Axis::aspect_ratio) continue;
        out += first_clause ? " " : ", ";
        out += values[static_cast<int>(a)];
        first_clause = false;
    }
    out += " --ar ";
    out += values[static_cast<int>(Axis::aspect_ratio)];
    return out;
}

std::vector<PromptSpec> expand_full(const PromptTemplate& tmpl,
                                    const std::vector<ParameterAxis>& axes) {
    validate_template(tmpl);
    validate_axes(axes);

    std::array<const ParameterAxis*, 4> ordered{};
    std::array<std::uint64_t, 4> sizes{};
    for (int i = 0; i < 4; ++i) {
        ordered[i] = &axis_by_name(axes, tmpl.axis_order[i]);
        sizes[i] = ordered[i]->values.size();
    }
    const std::uint64_t total = sizes[0] * sizes[1] * sizes[2] * sizes[3];

    std::vector<PromptSpec> specs;
    specs.reserve(total);
    for (std::uint64_t i = 0; i < total; ++i) {
        PromptSpec spec = make_spec(tmpl, ordered, sizes, i);
        spec.id = i;
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<PromptSpec> sample(const PromptTemplate& tmpl,
                               const std::vector<ParameterAxis>& axes,
                               std::uint64_t n, std::uint64_t seed) {
    validate_template(tmpl);
    validate_axes(axes);
    const std::uint64_t total = product_cardinality(axes);
    if (n < 1 || n > total) {
        throw ValidationError("sample size " + std::to_string(n) +
                              " out of range: product cardinality is " + std::to_string(total));
    }

    std::array<const ParameterAxis*, 4> ordered{};
    std::array<std::uint64_t, 4> sizes{};
    for (int i = 0; i < 4; ++i) {
        ordered[i] = &axis_by_name(axes, tmpl.axis_order[i]);
        sizes[i] = ordered[i]->values.size();
    }

    // Seeded Fisher-Yates over the enumeration indices; only the first n
    // positions are needed.
    std::vector<std::uint64_t> indices(total);
    for (std::uint64_t i = 0; i < total; ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint64_t j = i + bounded(rng, total - i);
        std::swap(indices[i], indices[j]);
    }

    std::vector<PromptSpec> specs;
    specs.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        PromptSpec spec = make_spec(tmpl, ordered, sizes, indices[i]);
        spec.id = i;
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::string to_ndjson_line(const PromptSpec& spec) {
    ordered_json j;
    j["id"] = spec.id;
    j["combo_index"] = spec.combo_index;
    ordered_json values;
    for (Axis a : kAxes) {
        values[std::string(axis_name(a))] = spec.values[static_cast<int>(a)];
    }
    j["values"] = std::move(values);
    j["rendered"] = spec.rendered;
    return j.dump();
}

PromptSpec spec_from_json_line(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed prompt spec line: ") + e.what());
    }
    PromptSpec spec;
    try {
        spec.id = j.at("id").get<std::uint64_t>();
        spec.combo_index = j.value("combo_index", spec.id);
        for (Axis a : kAxes) {
            spec.values[static_cast<int>(a)] =
                j.at("values").at(std::string(axis_name(a))).get<std::string>();
        }
        spec.rendered = j.at("rendered").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed prompt spec line: ") + e.what());
    }
    return spec;
}

void write_prompt_file(const std::filesystem::path& path,
                       const std::vector<PromptSpec>& specs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write prompt file: " + path.string());
    for (const PromptSpec& spec : specs) {
        out << to_ndjson_line(spec) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<PromptSpec> read_prompt_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open prompt file: " + path.string());
    std::vector<PromptSpec> specs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trimmed(line).empty()) continue;
        try {
            specs.push_back(spec_from_json_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return specs;
}

}  // namespace synthpipe::prompts
