// Copyright 2026 The conflict-engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace conflict::detail {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ArgumentError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace conflict::detail
