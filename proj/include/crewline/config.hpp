#pragma once

#include "crewline/domain.hpp"

#include <map>
#include <set>
#include <string>

namespace crewline {

// Placeholders allowed in prompt templates. Exhaustive set.
const std::set<std::string>& allowed_placeholders();

// Extracts {name} placeholders from a template. Substituted values are never re-scanned.
std::set<std::string> template_placeholders(const std::string& prompt_template);

struct ModelParams {
    double temperature = 0.3;
    int max_tokens = 1024;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct AgentSpec {
    Role role = Role::translation;
    std::string goal;
    std::string backstory;
    bool allow_delegation = false;
    std::string prompt_template;
    ModelParams model_params;
    friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

struct BackendConfig {
    enum class Kind { http, scripted };

    Kind kind = Kind::scripted;
    std::string base_url;  // http only
    std::string model;     // http only (scripted runs echo it when set)
    int timeout_ms = 120000;
    std::map<std::string, std::string> script;  // scripted only: "<stage>:<rev>:<call>" -> text

    friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

struct SearchConfig {
    enum class Mode { live, fixture, disabled };

    Mode mode = Mode::disabled;
    std::string fixture_dir;  // fixture mode
    int ttl_seconds = 3600;
    int max_results = 5;
    std::string endpoint = "https://html.duckduckgo.com/html/";  // live mode

    friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

std::string to_string(BackendConfig::Kind kind);
BackendConfig::Kind backend_kind_from_string(const std::string& text);
std::string to_string(SearchConfig::Mode mode);
SearchConfig::Mode search_mode_from_string(const std::string& text);

// Engine hard cap on the revision loop, independent of configuration.
inline constexpr int kMaxRevisionsHardCap = 16;

class CrewConfig {
public:
    // Validates a parsed configuration document; collects every violation.
    static CrewConfig validate(const json& raw);

    const AgentSpec& agent(Role role) const { return agents_.at(role); }
    const std::map<Role, AgentSpec>& agents() const { return agents_; }
    int max_revisions() const { return max_revisions_; }
    int max_delegations_per_stage() const { return max_delegations_per_stage_; }
    const BackendConfig& backend() const { return backend_; }
    const SearchConfig& search() const { return search_; }

    // Overrides used by the CLI; the result is re-validated.
    CrewConfig with_backend_kind(BackendConfig::Kind kind) const;
    CrewConfig with_search_mode(SearchConfig::Mode mode) const;

    // Canonical encoding: every field explicit, keys sorted. Digest input.
    json to_json() const;

    friend bool operator==(const CrewConfig&, const CrewConfig&) = default;

private:
    CrewConfig() = default;

    std::map<Role, AgentSpec> agents_;
    int max_revisions_ = 3;
    int max_delegations_per_stage_ = 1;
    BackendConfig backend_;
    SearchConfig search_;
};

// Parses a config document. Comments (// and /* */) are permitted in the text.
CrewConfig load_config_text(const std::string& text);
CrewConfig load_config_file(const std::string& path);

// Canonical serialization of a config: compact JSON with sorted keys and all
// defaults made explicit. Stable across field reordering in the source document.
std::string canonical_config_json(const CrewConfig& config);

// SHA-256 of the canonical serialization: 64 lowercase hex chars.
std::string digest_config(const CrewConfig& config);

}  // namespace crewline
