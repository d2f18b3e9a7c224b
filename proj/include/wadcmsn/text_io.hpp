// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"

namespace wadcmsn::text_io {

// Shortest decimal form that parses back to the same value.
std::string format_real(Real v);
void append_real(std::string& out, Real v);

// Whole-token parse; throws ParseError mentioning `context` on failure.
Real parse_real(std::string_view token, const std::string& context);
long long parse_integer(std::string_view token, const std::string& context);

std::vector<std::string_view> split(std::string_view line, char sep);
// Splits on runs of spaces/tabs, dropping empty tokens.
std::vector<std::string_view> split_whitespace(std::string_view line);

std::string_view trim(std::string_view s);

}  // namespace wadcmsn::text_io
