#include "synthpipe/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "synthpipe/error.hpp"

namespace synthpipe::gen {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(JobState state) {
    switch (state) {
        case JobState::pending: return "pending";
        case JobState::submitted: return "submitted";
        case JobState::awaiting: return "awaiting";
        case JobState::completed: return "completed";
        case JobState::failed: return "failed";
    }
    return "?";
}

std::optional<JobState> job_state_from_string(std::string_view name) {
    for (JobState s : {JobState::pending, JobState::submitted, JobState::awaiting,
                       JobState::completed, JobState::failed}) {
        if (to_string(s) == name) return s;
    }
    return std::nullopt;
}

void BackendPolicy::validate() const {
    if (max_in_flight < 1) throw ValidationError("policy: max_in_flight must be >= 1");
    if (poll_interval_s <= 0) throw ValidationError("policy: poll_interval must be > 0");
    if (per_job_timeout_s <= 0) throw ValidationError("policy: per_job_timeout must be > 0");
    if (per_job_timeout_s <= poll_interval_s) {
        throw ValidationError("policy: per_job_timeout must exceed poll_interval");
    }
    if (max_retries < 0) throw ValidationError("policy: max_retries must be >= 0");
}

std::string image_file_name(std::uint64_t prompt_id, int quadrant) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06llu_%d",
                  static_cast<unsigned long long>(prompt_id), quadrant);
    return buf;
}

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string journal_line(const JournalRecord& r) {
    ordered_json j;
    j["seq"] = r.seq;
    j["prompt_id"] = r.prompt_id;
    j["state"] = std::string(to_string(r.state));
    j["attempts"] = r.attempts;
    j["timestamp"] = r.timestamp_ms;
    if (!r.handle.empty()) j["handle"] = r.handle;
    if (!r.failure_reason.empty()) j["failure_reason"] = r.failure_reason;
    return j.dump();
}

JournalRecord parse_journal_line(const std::string& line) {
    ordered_json j = ordered_json::parse(line);  // json::exception on malformed
    JournalRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.prompt_id = j.at("prompt_id").get<std::uint64_t>();
    auto state = job_state_from_string(j.at("state").get<std::string>());
    if (!state) throw ValidationError("unknown state '" + j.at("state").get<std::string>() + "'");
    r.state = *state;
    r.attempts = j.at("attempts").get<int>();
    r.timestamp_ms = j.at("timestamp").get<std::int64_t>();
    r.handle = j.value("handle", "");
    r.failure_reason = j.value("failure_reason", "");
    return r;
}

std::string index_line(const PersistedImage& im) {
    ordered_json j;
    j["image_id"] = im.image_id;
    j["file"] = im.file;
    j["width"] = im.width;
    j["height"] = im.height;
    j["prompt_id"] = im.prompt_id;
    j["quadrant"] = im.quadrant;
    return j.dump();
}

PersistedImage parse_index_line(const std::string& line) {
    ordered_json j = ordered_json::parse(line);
    PersistedImage im;
    im.image_id = j.at("image_id").get<std::string>();
    im.file = j.at("file").get<std::string>();
    im.width = j.at("width").get<int>();
    im.height = j.at("height").get<int>();
    im.prompt_id = j.at("prompt_id").get<std::uint64_t>();
    im.quadrant = j.at("quadrant").get<int>();
    return im;
}

}  // namespace

struct CampaignStore::Impl {
    fs::path dir;
    fs::path journal_path;
    fs::path index_path;
    fs::path images_dir;

    std::mutex mu;  // single-writer append channel for journal and index
    std::ofstream journal;
    std::ofstream index;
    std::uint64_t seq = 0;
    bool seq_loaded = false;
    bool poisoned = false;
    const CampaignHooks* hooks = nullptr;

    void ensure_open(std::ofstream& out, const fs::path& path) {
        if (out.is_open()) return;
        out.open(path, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot open for append: " + path.string());
    }

    // Continue the sequence across resumes; a lenient scan is enough here,
    // strict validation happens in replay().
    void load_seq_locked() {
        if (seq_loaded) return;
        seq_loaded = true;
        std::ifstream in(journal_path, std::ios::binary);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                JournalRecord r = parse_journal_line(line);
                if (r.seq >= seq) seq = r.seq + 1;
            } catch (...) {
                ++seq;
            }
        }
    }

    void check_poisoned_locked() const {
        if (poisoned) throw IoError("campaign store poisoned by earlier failure");
    }
};

CampaignStore::CampaignStore(fs::path dir) : impl_(std::make_unique<Impl>()) {
    impl_->dir = std::move(dir);
    impl_->journal_path = impl_->dir / "journal.ndjson";
    impl_->index_path = impl_->dir / "images.ndjson";
    impl_->images_dir = impl_->dir / "images";
    std::error_code ec;
    fs::create_directories(impl_->images_dir, ec);
    if (ec) throw IoError("cannot create store directory: " + impl_->dir.string());
}

CampaignStore::~CampaignStore() = default;

const fs::path& CampaignStore::dir() const { return impl_->dir; }

bool CampaignStore::has_journal() const { return fs::exists(impl_->journal_path); }

void CampaignStore::set_hooks(const CampaignHooks* hooks) { impl_->hooks = hooks; }

std::uint64_t CampaignStore::next_seq() const {
    std::lock_guard lock(impl_->mu);
    impl_->load_seq_locked();
    return impl_->seq;
}

void CampaignStore::write_prompts(const std::vector<prompts::PromptSpec>& specs) {
    prompts::write_prompt_file(impl_->dir / "prompts.ndjson", specs);
    // Touching the journal marks the campaign as started; a second `run`
    // without resume refuses on it even if no transition got logged.
    std::lock_guard lock(impl_->mu);
    impl_->ensure_open(impl_->journal, impl_->journal_path);
    impl_->journal.flush();
}

std::vector<prompts::PromptSpec> CampaignStore::read_prompts() const {
    return prompts::read_prompt_file(impl_->dir / "prompts.ndjson");
}

void CampaignStore::append(JournalRecord record) {
    std::lock_guard lock(impl_->mu);
    impl_->check_poisoned_locked();
    impl_->load_seq_locked();
    impl_->ensure_open(impl_->journal, impl_->journal_path);
    record.seq = impl_->seq++;
    record.timestamp_ms = now_ms();
    impl_->journal << journal_line(record) << '\n';
    impl_->journal.flush();
    if (!impl_->journal) {
        impl_->poisoned = true;
        throw IoError("journal append failed: " + impl_->journal_path.string());
    }
    if (impl_->hooks && impl_->hooks->after_journal_append) {
        try {
            impl_->hooks->after_journal_append(record);
        } catch (...) {
            impl_->poisoned = true;
            throw;
        }
    }
}

std::vector<JournalRecord> CampaignStore::replay() const {
    std::ifstream in(impl_->journal_path, std::ios::binary);
    if (!in) throw IoError("cannot open journal: " + impl_->journal_path.string());
    std::vector<JournalRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(parse_journal_line(line));
        } catch (const std::exception& e) {
            throw ValidationError(impl_->journal_path.string() + ":" +
                                  std::to_string(line_no) + ": malformed journal record: " +
                                  e.what());
        }
    }
    return records;
}

void CampaignStore::persist_image(const PersistedImage& meta,
                                  const std::vector<std::uint8_t>& png) {
    const fs::path target = impl_->dir / meta.file;
    const fs::path tmp = target.string() + ".tmp";
    {
        std::lock_guard lock(impl_->mu);
        impl_->check_poisoned_locked();
    }
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write image: " + tmp.string());
        out.write(reinterpret_cast<const char*>(png.data()),
                  static_cast<std::streamsize>(png.size()));
        out.flush();
        if (!out) throw IoError("image write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot move image into place: " + target.string());

    std::lock_guard lock(impl_->mu);
    impl_->check_poisoned_locked();
    impl_->ensure_open(impl_->index, impl_->index_path);
    impl_->index << index_line(meta) << '\n';
    impl_->index.flush();
    if (!impl_->index) {
        impl_->poisoned = true;
        throw IoError("image index append failed: " + impl_->index_path.string());
    }
    if (impl_->hooks && impl_->hooks->after_image_persist) {
        try {
            impl_->hooks->after_image_persist(meta);
        } catch (...) {
            impl_->poisoned = true;
            throw;
        }
    }
}

std::vector<PersistedImage> CampaignStore::read_image_index() const {
    std::vector<PersistedImage> out;
    std::ifstream in(impl_->index_path, std::ios::binary);
    if (!in) return out;
    std::map<std::string, std::size_t> by_id;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        PersistedImage im;
        try {
            im = parse_index_line(line);
        } catch (const std::exception& e) {
            throw ValidationError(impl_->index_path.string() + ":" + std::to_string(line_no) +
                                  ": malformed index record: " + e.what());
        }
        auto it = by_id.find(im.image_id);
        if (it == by_id.end()) {
            by_id[im.image_id] = out.size();
            out.push_back(std::move(im));
        } else {
            out[it->second] = std::move(im);  // re-persisted after a crash: last wins
        }
    }
    return out;
}

void CampaignStore::compact_image_index() {
    std::vector<PersistedImage> unique = read_image_index();
    std::lock_guard lock(impl_->mu);
    impl_->check_poisoned_locked();
    if (impl_->index.is_open()) impl_->index.close();
    const fs::path tmp = impl_->index_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write index: " + tmp.string());
        for (const PersistedImage& im : unique) out << index_line(im) << '\n';
        out.flush();
        if (!out) throw IoError("index rewrite failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, impl_->index_path, ec);
    if (ec) throw IoError("cannot replace index: " + impl_->index_path.string());
}

void CampaignStore::remove_stale_temp_files() {
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(impl_->images_dir, ec)) {
        if (entry.path().extension() == ".tmp") fs::remove(entry.path(), ec);
    }
    fs::remove(impl_->index_path.string() + ".tmp", ec);
}

namespace {

struct JobSlot {
    const prompts::PromptSpec* spec = nullptr;
    int failures = 0;  // concluded failed attempts carried over from the journal
};

class CampaignRunner {
public:
    CampaignRunner(CampaignStore& store, const BackendPolicy& policy, Backend& backend)
        : store_(store), policy_(policy), backend_(backend) {}

    CampaignReport run(const std::vector<prompts::PromptSpec>& specs,
                       std::vector<JobSlot> queue, std::uint64_t completed_prior,
                       std::uint64_t failed_prior) {
        const auto start = std::chrono::steady_clock::now();
        completed_ = completed_prior;
        failed_ = failed_prior;
        next_job_ = 0;
        queue_ = std::move(queue);

        const int workers =
            static_cast<int>(std::min<std::size_t>(policy_.max_in_flight, queue_.size()));
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back([this] { worker_loop(); });
        }
        for (std::thread& t : pool) t.join();

        if (first_error_) std::rethrow_exception(first_error_);

        store_.compact_image_index();
        CampaignReport report;
        report.prompts_total = specs.size();
        report.completed = completed_.load();
        report.failed = failed_.load();
        report.images_persisted = 4 * report.completed;
        report.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return report;
    }

private:
    void worker_loop() {
        while (!aborted()) {
            const std::size_t i = next_job_.fetch_add(1);
            if (i >= queue_.size()) return;
            try {
                drive(queue_[i]);
            } catch (...) {
                abort_with(std::current_exception());
                return;
            }
        }
    }

    enum class Outcome { success, failure, aborted };

    void drive(JobSlot& slot) {
        const prompts::PromptSpec& spec = *slot.spec;
        int failures = std::max(0, slot.failures);
        while (!aborted()) {
            const int attempt = failures + 1;
            std::string reason;
            const Outcome outcome = run_attempt(spec, attempt, reason);
            if (outcome == Outcome::aborted) return;  // left non-terminal for resume
            if (outcome == Outcome::success) {
                ++completed_;
                return;
            }
            failures = attempt;
            append(spec.id, JobState::failed, failures, "", reason);
            if (failures >= policy_.max_retries) {
                ++failed_;
                return;
            }
            if (aborted()) return;
            append(spec.id, JobState::pending, failures, "", "");
        }
    }

    Outcome run_attempt(const prompts::PromptSpec& spec, int attempt, std::string& reason) {
        std::string handle;
        try {
            handle = backend_.submit(spec.rendered);
        } catch (const TransportError& e) {
            reason = std::string("submit: ") + e.what();
            return Outcome::failure;
        }
        append(spec.id, JobState::submitted, attempt, handle, "");
        append(spec.id, JobState::awaiting, attempt, handle, "");

        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(policy_.per_job_timeout_s));
        while (true) {
            if (interruptible_sleep(policy_.poll_interval_s)) return Outcome::aborted;
            if (std::chrono::steady_clock::now() > deadline) {
                reason = "timeout after " + std::to_string(policy_.per_job_timeout_s) + "s";
                return Outcome::failure;
            }
            PollResult result;
            try {
                result = backend_.poll(handle);
            } catch (const TransportError& e) {
                reason = std::string("poll: ") + e.what();
                return Outcome::failure;
            }
            switch (result.status) {
                case PollResult::Status::pending:
                    break;
                case PollResult::Status::error:
                    reason = result.message.empty() ? "backend error" : result.message;
                    return Outcome::failure;
                case PollResult::Status::ready: {
                    try {
                        persist_quads(spec.id, result.image_png);
                    } catch (const ValidationError& e) {
                        reason = std::string("bad image payload: ") + e.what();
                        return Outcome::failure;
                    }
                    append(spec.id, JobState::completed, attempt, handle, "");
                    return Outcome::success;
                }
            }
        }
    }

    void persist_quads(std::uint64_t prompt_id, const std::vector<std::uint8_t>& png) {
        img::Image composite = img::decode_png(png);
        std::array<img::Image, 4> quads = img::split_quad(composite);
        for (int q = 0; q < 4; ++q) {
            PersistedImage meta;
            meta.image_id = image_file_name(prompt_id, q);
            meta.file = "images/" + meta.image_id + ".png";
            meta.width = quads[q].width;
            meta.height = quads[q].height;
            meta.prompt_id = prompt_id;
            meta.quadrant = q;
            store_.persist_image(meta, img::encode_png(quads[q]));
        }
    }

    void append(std::uint64_t prompt_id, JobState state, int attempts,
                const std::string& handle, const std::string& reason) {
        JournalRecord r;
        r.prompt_id = prompt_id;
        r.state = state;
        r.attempts = attempts;
        r.handle = handle;
        r.failure_reason = reason;
        store_.append(std::move(r));
    }

    bool aborted() const { return abort_.load(); }

    void abort_with(std::exception_ptr e) {
        {
            std::lock_guard lock(abort_mu_);
            if (!first_error_) first_error_ = e;
            abort_.store(true);
        }
        abort_cv_.notify_all();
    }

    // Returns true if the campaign aborted during the sleep.
    bool interruptible_sleep(double seconds) {
        std::unique_lock lock(abort_mu_);
        return abort_cv_.wait_for(lock, std::chrono::duration<double>(seconds),
                                  [this] { return abort_.load(); });
    }

    CampaignStore& store_;
    const BackendPolicy& policy_;
    Backend& backend_;

    std::vector<JobSlot> queue_;
    std::atomic<std::size_t> next_job_{0};
    std::atomic<std::uint64_t> completed_{0};
    std::atomic<std::uint64_t> failed_{0};

    std::atomic<bool> abort_{false};
    std::mutex abort_mu_;
    std::condition_variable abort_cv_;
    std::exception_ptr first_error_;
};

void validate_prompt_set(const std::vector<prompts::PromptSpec>& specs) {
    if (specs.empty()) throw ValidationError("prompt set is empty");
    std::vector<bool> seen(specs.size(), false);
    for (const prompts::PromptSpec& s : specs) {
        if (s.id >= specs.size() || seen[s.id]) {
            throw ValidationError("prompt ids must be dense and unique: bad id " +
                                  std::to_string(s.id));
        }
        seen[s.id] = true;
    }
}

}  // namespace

CampaignReport run_campaign(const std::vector<prompts::PromptSpec>& prompt_set,
                            const BackendPolicy& policy, Backend& backend,
                            const fs::path& store_dir, const CampaignHooks* hooks) {
    policy.validate();
    validate_prompt_set(prompt_set);

    CampaignStore store(store_dir);
    if (store.has_journal()) {
        throw ValidationError("journal exists in " + store_dir.string() +
                              "; use resume to continue this campaign");
    }
    store.set_hooks(hooks);
    store.write_prompts(prompt_set);

    std::vector<JobSlot> queue;
    queue.reserve(prompt_set.size());
    for (const prompts::PromptSpec& spec : prompt_set) queue.push_back({&spec, 0});

    CampaignRunner runner(store, policy, backend);
    return runner.run(prompt_set, std::move(queue), 0, 0);
}

CampaignReport resume_campaign(const fs::path& store_dir, const BackendPolicy& policy,
                               Backend& backend, const CampaignHooks* hooks) {
    policy.validate();
    CampaignStore store(store_dir);
    if (!store.has_journal()) {
        throw ValidationError("no journal in " + store_dir.string() + "; nothing to resume");
    }
    store.set_hooks(hooks);
    store.remove_stale_temp_files();

    const std::vector<prompts::PromptSpec> specs = store.read_prompts();
    validate_prompt_set(specs);
    const std::vector<JournalRecord> journal = store.replay();

    // Last record per prompt decides its fate.
    std::map<std::uint64_t, const JournalRecord*> last;
    for (const JournalRecord& r : journal) {
        if (r.prompt_id >= specs.size()) {
            throw ValidationError("journal references unknown prompt_id " +
                                  std::to_string(r.prompt_id));
        }
        last[r.prompt_id] = &r;
    }

    std::vector<JobSlot> queue;
    std::uint64_t completed_prior = 0;
    std::uint64_t failed_prior = 0;
    for (const prompts::PromptSpec& spec : specs) {
        auto it = last.find(spec.id);
        if (it == last.end()) {
            queue.push_back({&spec, 0});
            continue;
        }
        const JournalRecord& r = *it->second;
        switch (r.state) {
            case JobState::completed:
                ++completed_prior;
                break;
            case JobState::failed:
                if (r.attempts >= policy.max_retries) {
                    ++failed_prior;
                } else {
                    queue.push_back({&spec, r.attempts});
                }
                break;
            case JobState::pending:
                queue.push_back({&spec, r.attempts});
                break;
            case JobState::submitted:
            case JobState::awaiting:
                // Attempt never concluded; it does not count against the budget.
                queue.push_back({&spec, r.attempts - 1});
                break;
        }
    }

    CampaignRunner runner(store, policy, backend);
    return runner.run(specs, std::move(queue), completed_prior, failed_prior);
}

std::string report_to_json(const CampaignReport& report) {
    ordered_json j;
    j["prompts_total"] = report.prompts_total;
    j["completed"] = report.completed;
    j["failed"] = report.failed;
    j["images_persisted"] = report.images_persisted;
    j["wall_time_seconds"] = report.wall_time_s;
    return j.dump();
}

}  // namespace synthpipe::gen
