#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "synthpipe/backend.hpp"
#include "synthpipe/prompt_matrix.hpp"

namespace synthpipe::gen {

enum class JobState { pending, submitted, awaiting, completed, failed };

std::string_view to_string(JobState state);
std::optional<JobState> job_state_from_string(std::string_view name);

struct BackendPolicy {
    int max_in_flight = 3;
    double poll_interval_s = 5.0;
    double per_job_timeout_s = 120.0;
    // Retry budget: a failed attempt is retried while the number of attempts
    // made so far is below max_retries, so 0 means a single attempt.
    int max_retries = 3;

    void validate() const;  // throws ValidationError
};

struct JournalRecord {
    std::uint64_t seq = 0;
    std::uint64_t prompt_id = 0;
    JobState state = JobState::pending;
    int attempts = 0;  // attempts started so far (current attempt number once submitted)
    std::int64_t timestamp_ms = 0;
    std::string handle;          // set from submitted onward
    std::string failure_reason;  // set on failed
};

struct PersistedImage {
    std::string image_id;  // e.g. "img_000042_1"
    std::string file;      // store-relative path, e.g. "images/img_000042_1.png"
    int width = 0;
    int height = 0;
    std::uint64_t prompt_id = 0;
    int quadrant = 0;  // row-major: 0 TL, 1 TR, 2 BL, 3 BR
};

struct CampaignReport {
    std::uint64_t prompts_total = 0;
    std::uint64_t completed = 0;
    std::uint64_t failed = 0;
    std::uint64_t images_persisted = 0;
    double wall_time_s = 0.0;
};

std::string image_file_name(std::uint64_t prompt_id, int quadrant);

// Test instrumentation: invoked synchronously inside the serialized store
// writer. A hook that throws poisons the store, freezing it at that exact
// write -- the in-process stand-in for a hard crash.
struct CampaignHooks {
    std::function<void(const JournalRecord&)> after_journal_append;
    std::function<void(const PersistedImage&)> after_image_persist;
};

// On-disk campaign state:
//   <dir>/prompts.ndjson   frozen input prompt set
//   <dir>/journal.ndjson   append-only state transitions
//   <dir>/images.ndjson    index of persisted images
//   <dir>/images/*.png     the images themselves
class CampaignStore {
public:
    explicit CampaignStore(std::filesystem::path dir);
    ~CampaignStore();

    const std::filesystem::path& dir() const;
    bool has_journal() const;

    void write_prompts(const std::vector<prompts::PromptSpec>& specs);
    std::vector<prompts::PromptSpec> read_prompts() const;

    void append(JournalRecord record);  // assigns seq, flushes
    // Throws ValidationError naming the first malformed record.
    std::vector<JournalRecord> replay() const;

    // Atomic (tmp + rename) PNG write plus an index entry.
    void persist_image(const PersistedImage& meta, const std::vector<std::uint8_t>& png);
    // Index entries deduplicated by image_id, last record wins.
    std::vector<PersistedImage> read_image_index() const;
    // Rewrites the index without duplicates; called on campaign termination.
    void compact_image_index();
    // Removes orphaned *.tmp files left by an interrupted persist.
    void remove_stale_temp_files();

    std::uint64_t next_seq() const;
    void set_hooks(const CampaignHooks* hooks);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Drives every prompt to a terminal state with at most max_in_flight jobs in
// the backend at once. Refuses to start over an existing journal (use
// resume_campaign). Backend failures beyond the retry budget fail the job and
// the campaign continues; a store write failure aborts the campaign with the
// journal intact.
CampaignReport run_campaign(const std::vector<prompts::PromptSpec>& prompt_set,
                            const BackendPolicy& policy, Backend& backend,
                            const std::filesystem::path& store_dir,
                            const CampaignHooks* hooks = nullptr);

// Replays the journal and re-drives only non-terminal jobs; completed
// prompts are never re-downloaded. A resume over an already-complete journal
// makes no backend calls and reproduces the stored totals.
CampaignReport resume_campaign(const std::filesystem::path& store_dir,
                               const BackendPolicy& policy, Backend& backend,
                               const CampaignHooks* hooks = nullptr);

// Campaign report serialization for the CLI.
std::string report_to_json(const CampaignReport& report);

}  // namespace synthpipe::gen
