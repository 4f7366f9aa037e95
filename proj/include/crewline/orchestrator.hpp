#pragma once

#include "crewline/config.hpp"
#include "crewline/domain.hpp"
#include "crewline/gateway.hpp"
#include "crewline/search.hpp"
#include "crewline/stages.hpp"

#include <optional>
#include <vector>

namespace crewline {

struct PipelineState {
    enum class Phase { translating, interpreting, synthesizing, evaluating, revising, done };

    Phase phase = Phase::translating;
    std::optional<Role> revision_target;   // set while phase == revising
    std::optional<RunStatus> done_status;  // set once phase == done
    int revision_count = 0;
    std::optional<RawTranslation> translation;
    std::optional<CulturalAdaptation> adaptation;
    std::optional<SynthesizedText> synthesized;
    std::optional<EvaluationReport> report;
};

// Most-upstream responsible role among the report's blocking issues.
// Precondition: at least one blocking issue.
Role route_revision(const EvaluationReport& report);

// Stages that must re-run after the given stage is revised, in order.
std::vector<Role> downstream_of(Role role);

// Runs the four-stage pipeline with its bounded revision loop and returns the
// finalized transcript. Stage failures finalize with status=failed; they do not
// propagate. `search` may be null (validation disabled).
Transcript run_pipeline(const TranslationJob& job, const CrewConfig& config,
                        const LlmGateway& gateway, SearchTool* search, EventRecorder& recorder);

}  // namespace crewline
