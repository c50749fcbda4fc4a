#pragma once

#include <optional>
#include <string>
#include <vector>

namespace sqlqg {

// Lowercase, split on whitespace, detach punctuation into separate tokens.
// A '-' stays inside a token when flanked by alphanumerics ("7-2" is one
// token) and a '.' stays inside when flanked by digits ("3.5" is one token).
// Idempotent on its own output joined with single spaces.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

std::string to_lower(std::string s);

// Strict numeric literal: optional sign, digits, optional single decimal
// point followed by digits. Anything else is not a number.
std::optional<double> parse_number(const std::string& s);

// Canonical surface form for a numeric value: integers without a decimal
// point, otherwise the shortest round-trip decimal representation.
std::string format_number(double v);

std::vector<std::string> split_ws(const std::string& s);

}  // namespace sqlqg
