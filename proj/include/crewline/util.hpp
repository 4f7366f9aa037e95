#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace crewline {

// Whitespace trim (ASCII space, tab, CR, LF).
std::string trim(std::string_view text);

// Collapses internal whitespace runs to a single space and trims the ends.
std::string collapse_whitespace(std::string_view text);

// Current wall-clock time as an ISO-8601 UTC string, e.g. "2026-08-10T12:34:56Z".
std::string now_utc_iso8601();

// SHA-256 of the input, as 64 lowercase hex chars.
std::string sha256_hex(std::string_view data);

// Random identifier like "job-a1b2c3d4e5f6" (12 hex chars of entropy).
std::string random_id(std::string_view prefix);

// Normalizes UTF-8 text to Unicode NFC. Invalid UTF-8 is passed through unchanged.
std::string nfc_normalize(std::string_view utf8);

}  // namespace crewline
