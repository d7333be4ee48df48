#include <httplib.h>
#include <json.hpp>

#include "synthpipe/backend.hpp"
#include "synthpipe/base64.hpp"
#include "synthpipe/error.hpp"

namespace synthpipe::detail {

namespace {
constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == data.size()) {
        std::uint32_t v = data[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == data.size()) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    size_t padding = 0;
    for (char c : text) {
        if (c == '\n' || c == '\r') continue;
        if (c == '=') {
            ++padding;
            continue;
        }
        if (padding > 0) throw ValidationError("base64: data after padding");
        int v = value_of(c);
        if (v < 0) throw ValidationError(std::string("base64: bad character '") + c + "'");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    if (padding > 2 || (bits >= 6)) throw ValidationError("base64: truncated input");
    return out;
}

}  // namespace synthpipe::detail

namespace synthpipe::gen {

struct HttpBackend::State {
    HttpBackendConfig config;
    httplib::Client client;

    explicit State(HttpBackendConfig cfg) : config(std::move(cfg)), client(config.base_url) {
        auto secs = static_cast<time_t>(config.timeout_seconds);
        auto usecs = static_cast<time_t>((config.timeout_seconds - secs) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        if (!config.bearer_token.empty()) {
            client.set_bearer_token_auth(config.bearer_token);
        }
    }
};

HttpBackend::HttpBackend(HttpBackendConfig config) {
    if (config.base_url.empty()) {
        throw ValidationError("http backend: base_url not set");
    }
    state_ = std::make_unique<State>(std::move(config));
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::submit(const std::string& rendered_prompt) {
    nlohmann::json body = {{"prompt", rendered_prompt}};
    auto res = state_->client.Post("/jobs", body.dump(), "application/json");
    if (!res) {
        throw TransportError("POST /jobs: " + httplib::to_string(res.error()));
    }
    if (res->status != 202) {
        throw TransportError("POST /jobs: unexpected status " + std::to_string(res->status));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("POST /jobs: malformed response: ") + e.what());
    }
}

PollResult HttpBackend::poll(const std::string& handle) {
    auto res = state_->client.Get("/jobs/" + handle);
    if (!res) {
        throw TransportError("GET /jobs/" + handle + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 404) {
        return PollResult::make_error("unknown handle: " + handle);
    }
    if (res->status != 200) {
        throw TransportError("GET /jobs/" + handle + ": unexpected status " +
                             std::to_string(res->status));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        const std::string status = j.at("status").get<std::string>();
        if (status == "pending") return PollResult::make_pending();
        if (status == "ready") {
            return PollResult::make_ready(
                detail::base64_decode(j.at("image_b64").get<std::string>()));
        }
        if (status == "error") {
            return PollResult::make_error(j.value("message", "backend error"));
        }
        throw TransportError("GET /jobs/" + handle + ": unknown status '" + status + "'");
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("GET /jobs: malformed response: ") + e.what());
    }
}

}  // namespace synthpipe::gen
