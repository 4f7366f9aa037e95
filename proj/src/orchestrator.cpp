#include "crewline/orchestrator.hpp"

namespace crewline {

namespace {

int upstream_rank(Role role) {
    switch (role) {
        case Role::translation: return 0;
        case Role::interpretation: return 1;
        case Role::synthesis: return 2;
        case Role::evaluation: return 3;
    }
    return 3;
}

std::vector<Issue> blocking_issues_for(const EvaluationReport& report, Role role) {
    std::vector<Issue> issues;
    for (const Issue& issue : report.issues()) {
        if (issue.severity == Severity::blocking && issue.responsible == role) {
            issues.push_back(issue);
        }
    }
    return issues;
}

}  // namespace

Role route_revision(const EvaluationReport& report) {
    std::optional<Role> target;
    for (const Issue& issue : report.issues()) {
        if (issue.severity != Severity::blocking) continue;
        if (!target || upstream_rank(issue.responsible) < upstream_rank(*target)) {
            target = issue.responsible;
        }
    }
    if (!target) {
        throw ValidationError("report", "NoBlockingIssue",
                              "route_revision requires at least one blocking issue");
    }
    return *target;
}

std::vector<Role> downstream_of(Role role) {
    switch (role) {
        case Role::translation: return {Role::interpretation, Role::synthesis};
        case Role::interpretation: return {Role::synthesis};
        case Role::synthesis: return {};
        case Role::evaluation: return {};
    }
    return {};
}

Transcript run_pipeline(const TranslationJob& job, const CrewConfig& config,
                        const LlmGateway& gateway, SearchTool* search, EventRecorder& recorder) {
    const StageRunner runner(config, gateway, search);
    PipelineState state;
    FinalRecord final;

    auto stage_input = [&](int revision_index,
                           std::optional<std::vector<Issue>> feedback) -> StageInput {
        StageInput input{job};
        input.translation = state.translation;
        input.adaptation = state.adaptation;
        input.synthesized = state.synthesized;
        input.revision_index = revision_index;
        input.revision_feedback = std::move(feedback);
        return input;
    };

    auto run_one = [&](Role role, int revision_index, std::optional<std::vector<Issue>> feedback) {
        recorder.emit(EventKind::stage_started, role,
                      json{{"revision_index", revision_index}});
        const StageInput input = stage_input(revision_index, std::move(feedback));
        StageArtifact artifact = role == Role::evaluation
                                     ? StageArtifact(runner.evaluate_with_search(input, recorder))
                                     : runner.run_stage(role, input, recorder);
        recorder.emit(EventKind::stage_completed, role,
                      json{{"revision_index", revision_index},
                           {"artifact", artifact_to_json(artifact)}});
        switch (role) {
            case Role::translation: state.translation = std::get<RawTranslation>(artifact); break;
            case Role::interpretation:
                state.adaptation = std::get<CulturalAdaptation>(artifact);
                break;
            case Role::synthesis: state.synthesized = std::get<SynthesizedText>(artifact); break;
            case Role::evaluation: state.report = std::get<EvaluationReport>(artifact); break;
        }
    };

    try {
        state.phase = PipelineState::Phase::translating;
        run_one(Role::translation, 0, std::nullopt);
        state.phase = PipelineState::Phase::interpreting;
        run_one(Role::interpretation, 0, std::nullopt);
        state.phase = PipelineState::Phase::synthesizing;
        run_one(Role::synthesis, 0, std::nullopt);

        while (true) {
            state.phase = PipelineState::Phase::evaluating;
            run_one(Role::evaluation, state.revision_count,
                    state.revision_count > 0
                        ? std::make_optional(blocking_issues_for(*state.report, Role::evaluation))
                        : std::nullopt);

            if (state.report->verdict() == Verdict::accept) {
                final.status = RunStatus::accepted;
                final.output = state.synthesized;
                final.report = state.report;
                break;
            }
            if (state.revision_count >= config.max_revisions()) {
                final.status = RunStatus::max_revisions_exceeded;
                final.output = state.synthesized;
                final.report = state.report;
                break;
            }

            ++state.revision_count;
            const Role target = route_revision(*state.report);
            state.phase = PipelineState::Phase::revising;
            state.revision_target = target;

            json issue_list = json::array();
            for (std::size_t i = 0; i < state.report->issues().size(); ++i) {
                const Issue& issue = state.report->issues()[i];
                if (issue.severity != Severity::blocking) continue;
                issue_list.push_back(json{{"index", i},
                                          {"category", to_string(issue.category)},
                                          {"responsible", to_string(issue.responsible)},
                                          {"description", issue.description}});
            }
            recorder.emit(EventKind::revision_triggered, std::nullopt,
                          json{{"target", to_string(target)},
                               {"revision_index", state.revision_count},
                               {"issues", std::move(issue_list)}});

            std::vector<Role> to_run{target};
            for (Role role : downstream_of(target)) to_run.push_back(role);
            for (Role role : to_run) {
                run_one(role, state.revision_count,
                        std::make_optional(blocking_issues_for(*state.report, role)));
            }
            state.revision_target.reset();
        }
    } catch (const StageFailed& failure) {
        final.status = RunStatus::failed;
        final.output.reset();
        final.report = state.report;
        final.failed_stage = to_string(failure.stage);
        final.failure_cause = failure.cause;
    }

    state.phase = PipelineState::Phase::done;
    state.done_status = final.status;

    Transcript transcript(job, digest_config(config));
    transcript.events = recorder.events();
    transcript.final = final;
    return transcript;
}

}  // namespace crewline
