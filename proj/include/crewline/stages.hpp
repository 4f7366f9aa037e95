#pragma once

#include "crewline/config.hpp"
#include "crewline/domain.hpp"
#include "crewline/gateway.hpp"
#include "crewline/search.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace crewline {

// Stage-dependent input: upstream artifacts are present according to the role
// (none for translation; translation for interpretation; translation+adaptation
// for synthesis; synthesized+adaptation for evaluation).
struct StageInput {
    explicit StageInput(TranslationJob job) : job(std::move(job)) {}

    TranslationJob job;
    std::optional<RawTranslation> translation;
    std::optional<CulturalAdaptation> adaptation;
    std::optional<SynthesizedText> synthesized;
    int revision_index = 0;
    std::optional<std::vector<Issue>> revision_feedback;  // engaged iff revision_index > 0
};

struct DelegationRequest {
    Role target = Role::translation;
    std::string question;

    friend bool operator==(const DelegationRequest&, const DelegationRequest&) = default;
};

using StageArtifact = std::variant<std::monostate, RawTranslation, CulturalAdaptation,
                                   SynthesizedText, EvaluationReport>;

json artifact_to_json(const StageArtifact& artifact);

struct ParsedOutput {
    StageArtifact artifact;
    std::optional<DelegationRequest> delegation;
};

class ParseFailure : public std::runtime_error {
public:
    explicit ParseFailure(std::string reason) : std::runtime_error(std::move(reason)) {}
};

class StageFailed : public std::runtime_error {
public:
    StageFailed(Role stage, std::string cause)
        : std::runtime_error(to_string(stage) + " stage failed: " + cause), stage(stage),
          cause(std::move(cause)) {}

    Role stage;
    std::string cause;
};

// Optional context that makes the context-dependent invariants checkable:
// interpretation spans are validated against the annotated input, synthesis
// annotations come from the upstream adaptation, evaluation evidence refs are
// bounded by the gathered evidence.
struct ParseContext {
    const std::string* annotated_input = nullptr;
    const std::vector<Annotation>* upstream_annotations = nullptr;
    const std::vector<SearchEvidence>* evidence = nullptr;
};

// Extracts the first well-formed JSON object from raw model text (prose and
// code fences tolerated) and validates it as the role's artifact. Throws
// ParseFailure; never crashes on arbitrary input.
ParsedOutput parse_stage_output(Role role, const std::string& raw);
ParsedOutput parse_stage_output(Role role, const std::string& raw, const ParseContext& ctx);

// Strict single-pass substitution of {name} placeholders. Unknown placeholder
// names raise BadPlaceholder; substituted values are never re-scanned.
std::string render_template(const std::string& prompt_template,
                            const std::map<std::string, std::string>& values);

// System message (goal + backstory + output contract) plus the rendered user
// message. Revision re-entries get a feedback section; evaluation gets the
// evidence block.
std::vector<ChatMessage> render_prompt(const AgentSpec& spec, const StageInput& input,
                                       const std::vector<SearchEvidence>& evidence = {});

// Executes one stage: render, chat, parse with bounded corrective retries, and
// single-hop delegation for delegation-enabled stages.
class StageRunner {
public:
    StageRunner(const CrewConfig& config, const LlmGateway& gateway, SearchTool* search)
        : config_(config), gateway_(gateway), search_(search) {}

    StageArtifact run_stage(Role role, const StageInput& input, EventRecorder& recorder) const;

    // Evaluation with annotation-driven external validation (up to 3 queries).
    EvaluationReport evaluate_with_search(const StageInput& input, EventRecorder& recorder) const;

private:
    struct Attempt {
        ParsedOutput parsed;
        std::string raw;
    };

    Attempt attempt_with_retries(const AgentSpec& spec, const StageInput& input,
                                 std::vector<ChatMessage> messages, const ParseContext& ctx,
                                 EventRecorder& recorder, int& call_index) const;

    StageArtifact run_internal(const AgentSpec& spec, const StageInput& input,
                               const std::vector<SearchEvidence>& evidence, const ParseContext& ctx,
                               EventRecorder& recorder) const;

    std::string script_key(Role role, int revision_index, int call_index) const;

    const CrewConfig& config_;
    const LlmGateway& gateway_;
    SearchTool* search_;
};

}  // namespace crewline
