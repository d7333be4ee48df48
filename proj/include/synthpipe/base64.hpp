#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace synthpipe::detail {

std::string base64_encode(std::span<const std::uint8_t> data);

// Throws ValidationError on characters outside the RFC 4648 alphabet or bad
// padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace synthpipe::detail
