#include "crewline/config.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace crewline;

namespace {

bool has_violation(const ValidationError& err, const std::string& path, const std::string& code) {
    return std::any_of(err.violations().begin(), err.violations().end(),
                       [&](const Violation& v) { return v.path == path && v.code == code; });
}

}  // namespace

TEST_CASE("valid config with delegation only on translation and interpretation") {
    const CrewConfig config = CrewConfig::validate(test::base_config_doc());
    CHECK(config.agent(Role::translation).allow_delegation);
    CHECK(config.agent(Role::interpretation).allow_delegation);
    CHECK_FALSE(config.agent(Role::synthesis).allow_delegation);
    CHECK_FALSE(config.agent(Role::evaluation).allow_delegation);
}

TEST_CASE("delegation enabled on evaluation is rejected at load time") {
    json doc = test::base_config_doc();
    doc["agents"]["evaluation"]["allow_delegation"] = true;
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "agents.evaluation.allow_delegation", "ForbiddenDelegation"));
    }

    json doc2 = test::base_config_doc();
    doc2["agents"]["synthesis"]["allow_delegation"] = true;
    try {
        CrewConfig::validate(doc2);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "agents.synthesis.allow_delegation", "ForbiddenDelegation"));
    }
}

TEST_CASE("missing synthesis agent is reported by path") {
    json doc = test::base_config_doc();
    doc["agents"].erase("synthesis");
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "agents.synthesis", "MissingRole"));
    }
}

TEST_CASE("unknown placeholder is rejected") {
    json doc = test::base_config_doc();
    doc["agents"]["translation"]["prompt_template"] = "Translate {unknown} now";
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "agents.translation.prompt_template", "BadPlaceholder"));
        CHECK(err.violations().size() == 1);
    }
}

TEST_CASE("every violation is reported, not just the first") {
    json doc = test::base_config_doc();
    doc["agents"].erase("synthesis");
    doc["agents"]["evaluation"]["allow_delegation"] = true;
    doc["max_revisions"] = 99;
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "agents.synthesis", "MissingRole"));
        CHECK(has_violation(err, "agents.evaluation.allow_delegation", "ForbiddenDelegation"));
        CHECK(has_violation(err, "max_revisions", "OutOfRange"));
    }
}

TEST_CASE("missing backend section is reported") {
    json doc = test::base_config_doc();
    doc.erase("backend");
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "backend", "MissingSection"));
    }
}

TEST_CASE("http backend requires base_url and model") {
    json doc = test::base_config_doc();
    doc["backend"] = json{{"kind", "http"}};
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "backend.base_url", "MissingField"));
        CHECK(has_violation(err, "backend.model", "MissingField"));
    }
}

TEST_CASE("revision hard cap of 16") {
    json doc = test::base_config_doc();
    doc["max_revisions"] = 16;
    CHECK_NOTHROW(CrewConfig::validate(doc));
    doc["max_revisions"] = 17;
    CHECK_THROWS_AS(CrewConfig::validate(doc), ValidationError);
    doc["max_revisions"] = -1;
    CHECK_THROWS_AS(CrewConfig::validate(doc), ValidationError);
}

TEST_CASE("fixture search mode requires fixture_dir") {
    json doc = test::base_config_doc();
    doc["search"] = json{{"mode", "fixture"}};
    try {
        CrewConfig::validate(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& err) {
        CHECK(has_violation(err, "search.fixture_dir", "MissingField"));
    }
}

TEST_CASE("config text may carry comments") {
    const std::string text = R"({
        // the crew
        "agents": {
          "translation": {"goal": "g", "backstory": "", "allow_delegation": true, "prompt_template": "{source_text}"},
          "interpretation": {"goal": "g", "backstory": "", "allow_delegation": false, "prompt_template": "{upstream_translation}"},
          "synthesis": {"goal": "g", "backstory": "", "allow_delegation": false, "prompt_template": "{upstream_adaptation}"},
          "evaluation": {"goal": "g", "backstory": "", "allow_delegation": false, "prompt_template": "{upstream_final}"}
        },
        /* loop limits */
        "max_revisions": 2,
        "backend": {"kind": "scripted", "script": {"k": "v"}},
        "search": {"mode": "disabled"}
    })";
    const CrewConfig config = load_config_text(text);
    CHECK(config.max_revisions() == 2);
    CHECK(config.max_delegations_per_stage() == 1);  // default
}

TEST_CASE("temperature range is validated") {
    json doc = test::base_config_doc();
    doc["agents"]["translation"]["model_params"]["temperature"] = 2.5;
    CHECK_THROWS_AS(CrewConfig::validate(doc), ValidationError);
    doc["agents"]["translation"]["model_params"]["temperature"] = 2.0;
    CHECK_NOTHROW(CrewConfig::validate(doc));
}

TEST_CASE("backend and search mode overrides re-validate") {
    json doc = test::base_config_doc();
    doc["backend"]["base_url"] = "http://localhost:9999";
    doc["backend"]["model"] = "test-model";
    const CrewConfig config = CrewConfig::validate(doc);

    const CrewConfig http = config.with_backend_kind(BackendConfig::Kind::http);
    CHECK(http.backend().kind == BackendConfig::Kind::http);

    const CrewConfig scripted = test::scripted_config({{"k", "v"}});
    // switching to http without base_url/model must fail validation
    CHECK_THROWS_AS(scripted.with_backend_kind(BackendConfig::Kind::http), ValidationError);
}
