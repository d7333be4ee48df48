#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "synthpipe/image.hpp"

namespace synthpipe::gen {

struct PollResult {
    enum class Status { pending, ready, error };
    Status status = Status::pending;
    std::vector<std::uint8_t> image_png;  // set when ready
    std::string message;                  // set when error

    static PollResult make_pending() { return {}; }
    static PollResult make_ready(std::vector<std::uint8_t> png) {
        return {Status::ready, std::move(png), {}};
    }
    static PollResult make_error(std::string msg) {
        return {Status::error, {}, std::move(msg)};
    }
};

// Asynchronous-job wire contract to a text-to-image service. submit() is
// at-most-once per job attempt; poll() is idempotent and must tolerate
// concurrent calls on distinct handles. Transport failures surface as
// TransportError (retryable); a generation failure reported by the service
// is a terminal PollResult::error for the attempt.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string submit(const std::string& rendered_prompt) = 0;
    virtual PollResult poll(const std::string& handle) = 0;
};

// Deterministic composite image for a given seed: a 2x2 grid of flat-color
// panels with a few rectangles scattered per panel. The mock backend keys the
// seed off the prompt text, so a prompt always yields the same pixels.
img::Image procedural_quad(std::uint64_t seed, int width, int height);

std::uint64_t fnv1a64(std::string_view text);

struct MockBackendConfig {
    int polls_until_ready = 1;  // poll() returns pending this many times minus one
    int image_width = 64;
    int image_height = 64;
    bool always_error = false;       // every job reports a generation failure
    int transport_failures = 0;      // first N submit() calls throw TransportError
};

class MockBackend : public Backend {
public:
    explicit MockBackend(MockBackendConfig config = {});
    ~MockBackend() override;

    std::string submit(const std::string& rendered_prompt) override;
    PollResult poll(const std::string& handle) override;

    // Totals for assertions.
    std::uint64_t submit_count() const;
    std::uint64_t poll_count() const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

struct HttpBackendConfig {
    std::string base_url;       // e.g. "http://127.0.0.1:8080"
    std::string bearer_token;   // sent as "Authorization: Bearer <token>" when set
    double timeout_seconds = 30.0;
};

// Adapter for the generic job protocol:
//   POST /jobs {"prompt": text}        -> 202 {"id": text}
//   GET  /jobs/{id}                    -> 200 {"status":"pending"}
//                                       | 200 {"status":"ready","image_b64": text}
//                                       | 200 {"status":"error","message": text}
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    std::string submit(const std::string& rendered_prompt) override;
    PollResult poll(const std::string& handle) override;

private:
    struct State;
    std::unique_ptr<State> state_;
};

}  // namespace synthpipe::gen
