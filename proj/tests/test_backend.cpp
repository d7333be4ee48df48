#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <mutex>
#include <thread>

#include "synthpipe/backend.hpp"
#include "synthpipe/base64.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/orchestrator.hpp"
#include "support/stub_server.hpp"

using namespace synthpipe;
using namespace synthpipe::gen;

TEST_CASE("base64 round-trip and error handling") {
    std::vector<std::uint8_t> data;
    for (int n = 0; n < 10; ++n) {
        CHECK(detail::base64_decode(detail::base64_encode(data)) == data);
        data.push_back(static_cast<std::uint8_t>(n * 37 + 1));
    }
    CHECK(detail::base64_encode(std::vector<std::uint8_t>{'a', 'b', 'c'}) == "YWJj");
    CHECK_THROWS_AS(detail::base64_decode("ab!c"), ValidationError);
    CHECK_THROWS_AS(detail::base64_decode("Y"), ValidationError);
}

TEST_CASE("mock backend: deterministic ready payload keyed by prompt") {
    MockBackendConfig config;
    config.polls_until_ready = 2;
    MockBackend backend(config);

    const std::string h1 = backend.submit("prompt one");
    const std::string h2 = backend.submit("prompt two");
    CHECK(h1 != h2);

    CHECK(backend.poll(h1).status == PollResult::Status::pending);
    auto r1 = backend.poll(h1);
    REQUIRE(r1.status == PollResult::Status::ready);

    backend.poll(h2);
    auto r2 = backend.poll(h2);
    REQUIRE(r2.status == PollResult::Status::ready);
    CHECK(r1.image_png != r2.image_png);  // distinct prompts, distinct pixels

    // Same prompt text on a fresh backend gives identical bytes.
    MockBackend again(config);
    const std::string h3 = again.submit("prompt one");
    again.poll(h3);
    CHECK(again.poll(h3).image_png == r1.image_png);

    // Ready image decodes to an even-dimension composite.
    auto im = img::decode_png(r1.image_png);
    CHECK(im.width == config.image_width);
    CHECK(im.height == config.image_height);
}

TEST_CASE("mock backend: unknown handle and failure modes") {
    MockBackend backend;
    CHECK(backend.poll("nope").status == PollResult::Status::error);

    MockBackendConfig always_error;
    always_error.always_error = true;
    MockBackend failing(always_error);
    const std::string h = failing.submit("p");
    CHECK(failing.poll(h).status == PollResult::Status::error);

    MockBackendConfig flaky;
    flaky.transport_failures = 2;
    MockBackend transient(flaky);
    CHECK_THROWS_AS(transient.submit("p"), TransportError);
    CHECK_THROWS_AS(transient.submit("p"), TransportError);
    CHECK_NOTHROW(transient.submit("p"));
}

TEST_CASE("http backend against a local stub server") {
    testsupport::StubServer server(/*polls_until_ready=*/2);
    HttpBackendConfig config;
    config.base_url = server.base_url();
    HttpBackend backend(config);

    const std::string handle = backend.submit("a prompt");
    CHECK(backend.poll(handle).status == PollResult::Status::pending);
    auto ready = backend.poll(handle);
    REQUIRE(ready.status == PollResult::Status::ready);
    CHECK(img::decode_png(ready.image_png).width == 32);

    SUBCASE("unknown handle reports an error, not a transport failure") {
        auto res = backend.poll("job-999");
        CHECK(res.status == PollResult::Status::error);
    }

    SUBCASE("generation failure is terminal for the attempt") {
        const std::string h = backend.submit("FAIL");
        auto res = backend.poll(h);
        CHECK(res.status == PollResult::Status::error);
        CHECK(res.message == "synthesis failed");
    }
}

TEST_CASE("http backend sends the bearer token") {
    testsupport::StubServer server(1, "sekrit");
    HttpBackendConfig config;
    config.base_url = server.base_url();

    HttpBackend unauthorized(config);
    CHECK_THROWS_AS(unauthorized.submit("p"), TransportError);

    config.bearer_token = "sekrit";
    HttpBackend authorized(config);
    CHECK_NOTHROW(authorized.submit("p"));
}

TEST_CASE("http backend surfaces unreachable hosts as transport errors") {
    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:1";  // nothing listens there
    config.timeout_seconds = 0.2;
    HttpBackend backend(config);
    CHECK_THROWS_AS(backend.submit("p"), TransportError);
}

TEST_CASE("a whole campaign runs over the http backend") {
    testsupport::StubServer server(/*polls_until_ready=*/2);
    HttpBackendConfig config;
    config.base_url = server.base_url();
    HttpBackend backend(config);

    prompts::PromptTemplate tmpl;
    std::vector<prompts::ParameterAxis> axes(4);
    axes[0] = {prompts::Axis::location, {"a", "b", "c", "d", "e"}};
    axes[1] = {prompts::Axis::weather_lighting, {"w"}};
    axes[2] = {prompts::Axis::camera_film, {"f"}};
    axes[3] = {prompts::Axis::aspect_ratio, {"1:1"}};
    const auto specs = prompts::expand_full(tmpl, axes);

    BackendPolicy policy;
    policy.max_in_flight = 3;
    policy.poll_interval_s = 0.001;
    policy.per_job_timeout_s = 5.0;
    policy.max_retries = 2;

    const auto dir = std::filesystem::temp_directory_path() /
                     ("synthpipe_http_campaign_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    const CampaignReport report = run_campaign(specs, policy, backend, dir);
    CHECK(report.prompts_total == 5);
    CHECK(report.completed == 5);
    CHECK(report.images_persisted == 20);
    std::filesystem::remove_all(dir);
}
