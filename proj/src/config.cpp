#include "crewline/config.hpp"

#include "crewline/util.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace crewline {

const std::set<std::string>& allowed_placeholders() {
    static const std::set<std::string> placeholders = {
        "source_text",         "source_lang",        "target_lang",
        "cultural_domain",     "upstream_translation", "upstream_adaptation",
        "upstream_final",      "feedback",           "evidence",
    };
    return placeholders;
}

std::set<std::string> template_placeholders(const std::string& prompt_template) {
    std::set<std::string> found;
    std::size_t pos = 0;
    while (pos < prompt_template.size()) {
        std::size_t open = prompt_template.find('{', pos);
        if (open == std::string::npos) break;
        std::size_t close = prompt_template.find('}', open + 1);
        if (close == std::string::npos) break;
        std::string name = prompt_template.substr(open + 1, close - open - 1);
        // Only identifier-shaped names count as placeholders; other braces are literal text.
        bool identifier = !name.empty();
        for (char c : name) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
                identifier = false;
                break;
            }
        }
        if (identifier) {
            found.insert(name);
            pos = close + 1;
        } else {
            pos = open + 1;
        }
    }
    return found;
}

std::string to_string(BackendConfig::Kind kind) {
    return kind == BackendConfig::Kind::http ? "http" : "scripted";
}

BackendConfig::Kind backend_kind_from_string(const std::string& text) {
    if (text == "http") return BackendConfig::Kind::http;
    if (text == "scripted") return BackendConfig::Kind::scripted;
    throw ValidationError("backend.kind", "BadEnum", "unknown backend kind: '" + text + "'");
}

std::string to_string(SearchConfig::Mode mode) {
    switch (mode) {
        case SearchConfig::Mode::live: return "live";
        case SearchConfig::Mode::fixture: return "fixture";
        case SearchConfig::Mode::disabled: return "disabled";
    }
    return "?";
}

SearchConfig::Mode search_mode_from_string(const std::string& text) {
    if (text == "live") return SearchConfig::Mode::live;
    if (text == "fixture") return SearchConfig::Mode::fixture;
    if (text == "disabled") return SearchConfig::Mode::disabled;
    throw ValidationError("search.mode", "BadEnum", "unknown search mode: '" + text + "'");
}

namespace {

constexpr std::array<Role, 4> kAllRoles = {Role::translation, Role::interpretation,
                                           Role::synthesis, Role::evaluation};

class Collector {
public:
    void add(std::string path, std::string code, std::string message) {
        violations_.push_back({std::move(path), std::move(code), std::move(message)});
    }
    bool empty() const { return violations_.empty(); }
    std::vector<Violation> take() { return std::move(violations_); }

private:
    std::vector<Violation> violations_;
};

std::string get_string(const json& doc, const char* key, const std::string& path,
                       Collector& errors, const std::string& fallback = {}) {
    auto it = doc.find(key);
    if (it == doc.end()) return fallback;
    if (!it->is_string()) {
        errors.add(path, "BadType", "expected a string");
        return fallback;
    }
    return it->get<std::string>();
}

int get_int(const json& doc, const char* key, const std::string& path, Collector& errors,
            int fallback) {
    auto it = doc.find(key);
    if (it == doc.end()) return fallback;
    if (!it->is_number_integer()) {
        errors.add(path, "BadType", "expected an integer");
        return fallback;
    }
    return it->get<int>();
}

AgentSpec parse_agent(Role role, const json& doc, const std::string& path, Collector& errors) {
    AgentSpec spec;
    spec.role = role;
    spec.goal = get_string(doc, "goal", path + ".goal", errors);
    spec.backstory = get_string(doc, "backstory", path + ".backstory", errors);
    spec.prompt_template = get_string(doc, "prompt_template", path + ".prompt_template", errors);

    auto delegation_it = doc.find("allow_delegation");
    if (delegation_it != doc.end()) {
        if (!delegation_it->is_boolean()) {
            errors.add(path + ".allow_delegation", "BadType", "expected a boolean");
        } else {
            spec.allow_delegation = delegation_it->get<bool>();
        }
    }
    if (spec.allow_delegation && (role == Role::synthesis || role == Role::evaluation)) {
        errors.add(path + ".allow_delegation", "ForbiddenDelegation",
                   "the " + to_string(role) + " agent must not allow delegation");
    }

    if (spec.goal.empty()) errors.add(path + ".goal", "EmptyText", "goal is required");
    if (spec.prompt_template.empty()) {
        errors.add(path + ".prompt_template", "EmptyText", "prompt_template is required");
    } else {
        for (const std::string& name : template_placeholders(spec.prompt_template)) {
            if (!allowed_placeholders().count(name)) {
                errors.add(path + ".prompt_template", "BadPlaceholder",
                           "unknown placeholder {" + name + "}");
            }
        }
    }

    auto params_it = doc.find("model_params");
    if (params_it != doc.end()) {
        if (!params_it->is_object()) {
            errors.add(path + ".model_params", "BadType", "expected an object");
        } else {
            const json& params = *params_it;
            auto temp_it = params.find("temperature");
            if (temp_it != params.end()) {
                if (!temp_it->is_number()) {
                    errors.add(path + ".model_params.temperature", "BadType", "expected a number");
                } else {
                    spec.model_params.temperature = temp_it->get<double>();
                    if (spec.model_params.temperature < 0.0 || spec.model_params.temperature > 2.0) {
                        errors.add(path + ".model_params.temperature", "OutOfRange",
                                   "temperature must be in [0, 2]");
                    }
                }
            }
            spec.model_params.max_tokens =
                get_int(params, "max_tokens", path + ".model_params.max_tokens", errors,
                        spec.model_params.max_tokens);
            if (spec.model_params.max_tokens <= 0) {
                errors.add(path + ".model_params.max_tokens", "OutOfRange",
                           "max_tokens must be positive");
            }
        }
    }
    return spec;
}

BackendConfig parse_backend(const json& doc, Collector& errors) {
    BackendConfig backend;
    auto it = doc.find("backend");
    if (it == doc.end() || !it->is_object()) {
        errors.add("backend", "MissingSection", "backend section is required");
        return backend;
    }
    const json& section = *it;
    const std::string kind = get_string(section, "kind", "backend.kind", errors);
    if (kind.empty()) {
        errors.add("backend.kind", "MissingField", "backend.kind is required");
    } else if (kind == "http" || kind == "scripted") {
        backend.kind = backend_kind_from_string(kind);
    } else {
        errors.add("backend.kind", "BadEnum", "unknown backend kind: '" + kind + "'");
    }

    backend.base_url = get_string(section, "base_url", "backend.base_url", errors);
    backend.model = get_string(section, "model", "backend.model", errors);
    backend.timeout_ms = get_int(section, "timeout_ms", "backend.timeout_ms", errors, 120000);
    if (backend.timeout_ms <= 0) {
        errors.add("backend.timeout_ms", "OutOfRange", "timeout_ms must be positive");
    }

    auto script_it = section.find("script");
    if (script_it != section.end()) {
        if (!script_it->is_object()) {
            errors.add("backend.script", "BadType", "expected an object of key -> text");
        } else {
            for (const auto& [key, value] : script_it->items()) {
                if (!value.is_string()) {
                    errors.add("backend.script." + key, "BadType", "script entries must be strings");
                    continue;
                }
                backend.script[key] = value.get<std::string>();
            }
        }
    }

    if (kind == "http") {
        if (backend.base_url.empty()) {
            errors.add("backend.base_url", "MissingField", "http backend requires base_url");
        }
        if (backend.model.empty()) {
            errors.add("backend.model", "MissingField", "http backend requires model");
        }
    }
    if (kind == "scripted" && script_it == section.end()) {
        errors.add("backend.script", "MissingField", "scripted backend requires a script map");
    }
    return backend;
}

SearchConfig parse_search(const json& doc, Collector& errors) {
    SearchConfig search;
    auto it = doc.find("search");
    if (it == doc.end()) return search;  // defaults to disabled
    if (!it->is_object()) {
        errors.add("search", "BadType", "expected an object");
        return search;
    }
    const json& section = *it;
    const std::string mode = get_string(section, "mode", "search.mode", errors, "disabled");
    if (mode == "live" || mode == "fixture" || mode == "disabled") {
        search.mode = search_mode_from_string(mode);
    } else {
        errors.add("search.mode", "BadEnum", "unknown search mode: '" + mode + "'");
    }
    search.fixture_dir = get_string(section, "fixture_dir", "search.fixture_dir", errors);
    search.ttl_seconds = get_int(section, "ttl_seconds", "search.ttl_seconds", errors, 3600);
    if (search.ttl_seconds <= 0) {
        errors.add("search.ttl_seconds", "OutOfRange", "ttl_seconds must be positive");
    }
    search.max_results = get_int(section, "max_results", "search.max_results", errors, 5);
    if (search.max_results <= 0) {
        errors.add("search.max_results", "OutOfRange", "max_results must be positive");
    }
    const std::string endpoint = get_string(section, "endpoint", "search.endpoint", errors);
    if (!endpoint.empty()) search.endpoint = endpoint;
    if (search.mode == SearchConfig::Mode::fixture && search.fixture_dir.empty()) {
        errors.add("search.fixture_dir", "MissingField", "fixture mode requires fixture_dir");
    }
    return search;
}

}  // namespace

CrewConfig CrewConfig::validate(const json& raw) {
    Collector errors;
    CrewConfig config;

    if (!raw.is_object()) {
        throw ValidationError("", "BadType", "configuration document must be an object");
    }

    auto agents_it = raw.find("agents");
    if (agents_it == raw.end() || !agents_it->is_object()) {
        errors.add("agents", "MissingSection", "agents section with all four roles is required");
    } else {
        for (Role role : kAllRoles) {
            const std::string name = to_string(role);
            auto it = agents_it->find(name);
            if (it == agents_it->end()) {
                errors.add("agents." + name, "MissingRole", "agent for role is missing");
                continue;
            }
            if (!it->is_object()) {
                errors.add("agents." + name, "BadType", "expected an object");
                continue;
            }
            config.agents_[role] = parse_agent(role, *it, "agents." + name, errors);
        }
        for (const auto& [key, value] : agents_it->items()) {
            bool known = false;
            for (Role role : kAllRoles) known = known || key == to_string(role);
            if (!known) errors.add("agents." + key, "UnknownRole", "not a pipeline role");
        }
    }

    config.max_revisions_ = get_int(raw, "max_revisions", "max_revisions", errors, 3);
    if (config.max_revisions_ < 0) {
        errors.add("max_revisions", "OutOfRange", "max_revisions must be non-negative");
    } else if (config.max_revisions_ > kMaxRevisionsHardCap) {
        errors.add("max_revisions", "OutOfRange",
                   "max_revisions exceeds the engine hard cap of " +
                       std::to_string(kMaxRevisionsHardCap));
    }

    config.max_delegations_per_stage_ =
        get_int(raw, "max_delegations_per_stage", "max_delegations_per_stage", errors, 1);
    if (config.max_delegations_per_stage_ < 0) {
        errors.add("max_delegations_per_stage", "OutOfRange", "must be non-negative");
    }

    config.backend_ = parse_backend(raw, errors);
    config.search_ = parse_search(raw, errors);

    if (!errors.empty()) throw ValidationError(errors.take());
    return config;
}

CrewConfig CrewConfig::with_backend_kind(BackendConfig::Kind kind) const {
    json doc = to_json();
    doc["backend"]["kind"] = to_string(kind);
    return validate(doc);
}

CrewConfig CrewConfig::with_search_mode(SearchConfig::Mode mode) const {
    json doc = to_json();
    doc["search"]["mode"] = to_string(mode);
    return validate(doc);
}

json CrewConfig::to_json() const {
    json agents = json::object();
    for (const auto& [role, spec] : agents_) {
        agents[to_string(role)] = json{
            {"goal", spec.goal},
            {"backstory", spec.backstory},
            {"allow_delegation", spec.allow_delegation},
            {"prompt_template", spec.prompt_template},
            {"model_params",
             json{{"temperature", spec.model_params.temperature},
                  {"max_tokens", spec.model_params.max_tokens}}},
        };
    }

    // Fields that only one kind/mode uses stay in the encoding when set, so a
    // kind override on the same document can still validate.
    json backend{{"kind", to_string(backend_.kind)}, {"timeout_ms", backend_.timeout_ms}};
    if (!backend_.base_url.empty()) backend["base_url"] = backend_.base_url;
    if (!backend_.model.empty()) backend["model"] = backend_.model;
    if (!backend_.script.empty()) backend["script"] = backend_.script;

    json search{{"mode", to_string(search_.mode)},
                {"ttl_seconds", search_.ttl_seconds},
                {"max_results", search_.max_results}};
    if (!search_.fixture_dir.empty()) search["fixture_dir"] = search_.fixture_dir;
    if (search_.mode == SearchConfig::Mode::live || search_.endpoint != SearchConfig().endpoint) {
        search["endpoint"] = search_.endpoint;
    }

    return json{{"agents", std::move(agents)},
                {"max_revisions", max_revisions_},
                {"max_delegations_per_stage", max_delegations_per_stage_},
                {"backend", std::move(backend)},
                {"search", std::move(search)}};
}

CrewConfig load_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& err) {
        throw ValidationError("", "ParseError", err.what());
    }
    return CrewConfig::validate(doc);
}

CrewConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path, "IoError", "cannot open configuration file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_config_text(buffer.str());
}

std::string canonical_config_json(const CrewConfig& config) {
    // nlohmann objects are key-sorted maps; a compact dump is already canonical.
    return config.to_json().dump();
}

std::string digest_config(const CrewConfig& config) {
    return sha256_hex(canonical_config_json(config));
}

}  // namespace crewline
