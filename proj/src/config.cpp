#include "synthpipe/config.hpp"

#include <cctype>
#include <cstdlib>

#include "synthpipe/error.hpp"

namespace synthpipe {

namespace {

std::string trimmed(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

PipelineConfig PipelineConfig::from_table(const toml::Table& t) {
    PipelineConfig cfg;

    cfg.prompt_template.command_prefix =
        t.get_string("template.command_prefix", cfg.prompt_template.command_prefix);
    cfg.prompt_template.subject_clause =
        t.get_string("template.subject_clause", cfg.prompt_template.subject_clause);
    if (t.has("template.axis_order")) {
        const auto names = t.get_string_array("template.axis_order");
        if (names.size() != 4) {
            throw ValidationError("template.axis_order must list all four axes");
        }
        for (int i = 0; i < 4; ++i) {
            auto axis = prompts::axis_from_name(names[i]);
            if (!axis) throw ValidationError("template.axis_order: unknown axis '" + names[i] + "'");
            cfg.prompt_template.axis_order[i] = *axis;
        }
    }

    for (prompts::Axis axis : prompts::kAxes) {
        const std::string key = "axes." + std::string(prompts::axis_name(axis));
        if (!t.has(key)) {
            throw ValidationError("config: missing axis '" + std::string(prompts::axis_name(axis)) + "'");
        }
        prompts::ParameterAxis pa;
        pa.name = axis;
        for (const std::string& v : t.get_string_array(key)) {
            pa.values.push_back(trimmed(v));
        }
        cfg.axes.push_back(std::move(pa));
    }
    prompts::validate_template(cfg.prompt_template);
    prompts::validate_axes(cfg.axes);

    cfg.backend_type = t.get_string("backend.type", "mock");
    if (cfg.backend_type != "mock" && cfg.backend_type != "http") {
        throw ValidationError("backend.type must be 'mock' or 'http', got '" +
                              cfg.backend_type + "'");
    }
    cfg.token_env = t.get_string("backend.token_env", cfg.token_env);
    cfg.http_base_url = t.get_string("backend.base_url", "");
    cfg.http_timeout_seconds = t.get_double("backend.timeout_seconds", 30.0);
    if (cfg.backend_type == "http" && cfg.http_base_url.empty()) {
        throw ValidationError("backend.base_url is required for the http backend");
    }

    cfg.mock.polls_until_ready =
        static_cast<int>(t.get_int("backend.mock.polls_until_ready", 1));
    cfg.mock.image_width = static_cast<int>(t.get_int("backend.mock.image_width", 64));
    cfg.mock.image_height = static_cast<int>(t.get_int("backend.mock.image_height", 64));
    cfg.mock.always_error = t.get_bool("backend.mock.always_error", false);
    cfg.mock.transport_failures =
        static_cast<int>(t.get_int("backend.mock.transport_failures", 0));

    cfg.policy.max_in_flight = static_cast<int>(t.get_int("policy.max_in_flight", 3));
    cfg.policy.poll_interval_s = t.get_double("policy.poll_interval_seconds", 5.0);
    cfg.policy.per_job_timeout_s = t.get_double("policy.per_job_timeout_seconds", 120.0);
    cfg.policy.max_retries = static_cast<int>(t.get_int("policy.max_retries", 3));
    cfg.policy.validate();

    cfg.store_dir = t.get_string("paths.store_dir", "campaign");
    cfg.prompts_file = t.get_string("paths.prompts_file", "prompts.ndjson");
    cfg.manifest_path = t.get_string("paths.manifest", "manifest.json");

    auto non_negative = [&](const char* key) {
        const std::int64_t v = t.get_int(key, 0);
        if (v < 0) throw ValidationError(std::string("config: ") + key + " must be >= 0");
        return static_cast<std::uint64_t>(v);
    };
    cfg.split_counts.train = non_negative("split.train");
    cfg.split_counts.val = non_negative("split.val");
    cfg.split_counts.test = non_negative("split.test");
    cfg.split_seed = static_cast<std::uint64_t>(t.get_int("split.seed", 0));
    cfg.split_group_by_prompt = t.get_bool("split.group_by_prompt", false);

    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_table(toml::parse_file(path));
}

std::unique_ptr<gen::Backend> PipelineConfig::make_backend() const {
    if (backend_type == "mock") {
        return std::make_unique<gen::MockBackend>(mock);
    }
    gen::HttpBackendConfig http;
    http.base_url = http_base_url;
    http.timeout_seconds = http_timeout_seconds;
    if (const char* token = std::getenv(token_env.c_str())) {
        http.bearer_token = token;
    }
    return std::make_unique<gen::HttpBackend>(http);
}

}  // namespace synthpipe
