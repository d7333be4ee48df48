#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synthpipe::prompts {

// The four variable slots of the prompt template. The order of enumerators is
// the canonical clause order; templates may reorder the first three, the
// aspect ratio always renders last as "--ar <value>".
enum class Axis : int { location = 0, weather_lighting = 1, camera_film = 2, aspect_ratio = 3 };

inline constexpr std::array<Axis, 4> kAxes = {
    Axis::location, Axis::weather_lighting, Axis::camera_film, Axis::aspect_ratio};

std::string_view axis_name(Axis axis);
std::optional<Axis> axis_from_name(std::string_view name);

struct ParameterAxis {
    Axis name = Axis::location;
    std::vector<std::string> values;
};

struct PromptTemplate {
    std::string command_prefix = "/imagine prompt:";
    std::string subject_clause = "three construction workers at work";
    std::array<Axis, 4> axis_order = kAxes;
};

// One value per axis, indexed by the Axis enumerator.
using AxisValues = std::array<std::string, 4>;

struct PromptSpec {
    std::uint64_t id = 0;           // dense within a prompt set: 0..N-1
    std::uint64_t combo_index = 0;  // position in the full cartesian enumeration
    AxisValues values;
    std::string rendered;
};

// Throw ValidationError naming the offending axis on a broken invariant:
// missing/duplicate/empty axis, blank or duplicate values, values containing
// the clause separator "," or the literal " --ar ", malformed aspect ratios.
void validate_axes(const std::vector<ParameterAxis>& axes);
void validate_template(const PromptTemplate& tmpl);
void validate_aspect_ratio(std::string_view value);

std::uint64_t product_cardinality(const std::vector<ParameterAxis>& axes);

// Exact command string for one combination, e.g.
// "/imagine prompt: three construction workers at work on a highway bridge,
//  at sunset, shot on 35mm film --ar 16:9"
std::string render(const PromptTemplate& tmpl, const AxisValues& values);

// Full cartesian product in odometer order: axis_order[0] most significant,
// value index least. ids and combo_index assigned 0..N-1 in that order.
std::vector<PromptSpec> expand_full(const PromptTemplate& tmpl,
                                    const std::vector<ParameterAxis>& axes);

// n distinct combinations drawn without replacement, deterministic for a
// fixed seed. ids re-densified 0..n-1; combo_index keeps the original
// enumeration position.
std::vector<PromptSpec> sample(const PromptTemplate& tmpl,
                               const std::vector<ParameterAxis>& axes,
                               std::uint64_t n, std::uint64_t seed);

// Newline-delimited JSON, one PromptSpec per line.
std::string to_ndjson_line(const PromptSpec& spec);
PromptSpec spec_from_json_line(std::string_view line);
void write_prompt_file(const std::filesystem::path& path, const std::vector<PromptSpec>& specs);
std::vector<PromptSpec> read_prompt_file(const std::filesystem::path& path);

}  // namespace synthpipe::prompts
