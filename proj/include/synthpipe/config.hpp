#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "synthpipe/backend.hpp"
#include "synthpipe/dataset.hpp"
#include "synthpipe/orchestrator.hpp"
#include "synthpipe/prompt_matrix.hpp"
#include "synthpipe/toml.hpp"

namespace synthpipe {

// Everything a pipeline run needs, loaded from one TOML file. Paths are
// resolved relative to the working directory. Credentials never live in the
// file: [backend].token_env names the environment variable to read.
struct PipelineConfig {
    prompts::PromptTemplate prompt_template;
    std::vector<prompts::ParameterAxis> axes;

    std::string backend_type = "mock";  // "mock" | "http"
    gen::MockBackendConfig mock;
    std::string http_base_url;
    std::string token_env = "SYNTHPIPE_BACKEND_TOKEN";
    double http_timeout_seconds = 30.0;

    gen::BackendPolicy policy;

    std::filesystem::path store_dir = "campaign";
    std::filesystem::path prompts_file = "prompts.ndjson";
    std::filesystem::path manifest_path = "manifest.json";

    data::SplitCounts split_counts;
    std::uint64_t split_seed = 0;
    bool split_group_by_prompt = false;

    static PipelineConfig from_table(const toml::Table& table);
    static PipelineConfig load(const std::filesystem::path& path);

    // Instantiates the selected backend; http reads its bearer token from
    // the environment variable named by token_env.
    std::unique_ptr<gen::Backend> make_backend() const;
};

}  // namespace synthpipe
