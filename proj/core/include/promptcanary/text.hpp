#pragma once

#include <string>
#include <vector>

namespace canary {

/// Joins prompt parts with a single space. Empty parts contribute nothing:
/// no doubled or dangling separators. join({"a", "", "b"}) == "a b".
std::string join(const std::vector<std::string>& parts);

/// FNV-1a 64-bit hash rendered as 16 hex digits. Used wherever a value must
/// be referenced without being disclosed (key fingerprints in logs and
/// service responses).
std::string fingerprint(const std::string& value);

}  // namespace canary
