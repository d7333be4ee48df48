#include <map>
#include <mutex>

#include "synthpipe/backend.hpp"
#include "synthpipe/error.hpp"

namespace synthpipe::gen {

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

// SplitMix64: tiny, stable, good enough to scatter pixels.
std::uint64_t mix(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void fill_rect(img::Image& im, int x0, int y0, int w, int h,
               std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int y = y0; y < y0 + h && y < im.height; ++y) {
        for (int x = x0; x < x0 + w && x < im.width; ++x) {
            std::size_t o = im.offset(x, y);
            im.rgb[o] = r;
            im.rgb[o + 1] = g;
            im.rgb[o + 2] = b;
        }
    }
}

}  // namespace

img::Image procedural_quad(std::uint64_t seed, int width, int height) {
    if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
        throw ValidationError("procedural quad dimensions must be positive and even");
    }
    img::Image im;
    im.width = width;
    im.height = height;
    im.rgb.resize(static_cast<std::size_t>(width) * height * 3);

    const int qw = width / 2;
    const int qh = height / 2;
    for (int q = 0; q < 4; ++q) {
        std::uint64_t s = seed * 4 + static_cast<std::uint64_t>(q);
        std::uint64_t bg = mix(s);
        const int x0 = (q % 2) * qw;
        const int y0 = (q / 2) * qh;
        fill_rect(im, x0, y0, qw, qh,
                  static_cast<std::uint8_t>(bg), static_cast<std::uint8_t>(bg >> 8),
                  static_cast<std::uint8_t>(bg >> 16));
        const int figures = 2 + static_cast<int>(mix(s) % 4);  // stand-ins for workers
        for (int f = 0; f < figures; ++f) {
            std::uint64_t r = mix(s);
            int fw = 2 + static_cast<int>(r % std::max(1, qw / 4));
            int fh = 3 + static_cast<int>((r >> 16) % std::max(1, qh / 3));
            int fx = x0 + static_cast<int>((r >> 24) % std::max(1, qw - fw));
            int fy = y0 + static_cast<int>((r >> 40) % std::max(1, qh - fh));
            std::uint64_t c = mix(s);
            fill_rect(im, fx, fy, fw, fh,
                      static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(c >> 8),
                      static_cast<std::uint8_t>(c >> 16));
        }
    }
    return im;
}

struct MockBackend::State {
    MockBackendConfig config;
    std::mutex mu;
    std::uint64_t next_handle = 0;
    std::uint64_t submits = 0;
    std::uint64_t polls = 0;
    std::map<std::string, std::pair<std::uint64_t, int>> jobs;  // handle -> (seed, polls so far)
};

MockBackend::MockBackend(MockBackendConfig config) : state_(std::make_unique<State>()) {
    state_->config = config;
}

MockBackend::~MockBackend() = default;

std::string MockBackend::submit(const std::string& rendered_prompt) {
    std::lock_guard lock(state_->mu);
    ++state_->submits;
    if (state_->config.transport_failures > 0) {
        --state_->config.transport_failures;
        throw TransportError("mock transport failure");
    }
    std::string handle = "mock-" + std::to_string(state_->next_handle++);
    state_->jobs[handle] = {fnv1a64(rendered_prompt), 0};
    return handle;
}

PollResult MockBackend::poll(const std::string& handle) {
    MockBackendConfig config;
    std::uint64_t seed = 0;
    {
        std::lock_guard lock(state_->mu);
        ++state_->polls;
        auto it = state_->jobs.find(handle);
        if (it == state_->jobs.end()) {
            return PollResult::make_error("unknown handle: " + handle);
        }
        config = state_->config;
        if (config.always_error) {
            return PollResult::make_error("mock generation failure");
        }
        if (++it->second.second < config.polls_until_ready) {
            return PollResult::make_pending();
        }
        seed = it->second.first;
    }
    // Encode outside the lock; poll is idempotent and the image is pure in
    // (seed, dimensions).
    img::Image im = procedural_quad(seed, config.image_width, config.image_height);
    return PollResult::make_ready(img::encode_png(im));
}

std::uint64_t MockBackend::submit_count() const {
    std::lock_guard lock(state_->mu);
    return state_->submits;
}

std::uint64_t MockBackend::poll_count() const {
    std::lock_guard lock(state_->mu);
    return state_->polls;
}

}  // namespace synthpipe::gen
