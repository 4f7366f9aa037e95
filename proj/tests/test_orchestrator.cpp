#include "crewline/orchestrator.hpp"

#include "support/test_support.hpp"

#include <doctest.h>

using namespace crewline;
using namespace crewline::test;

namespace {

Issue blocking(Role responsible) {
    Issue issue;
    issue.category = IssueCategory::coherence;
    issue.severity = Severity::blocking;
    issue.responsible = responsible;
    issue.description = "blocking finding";
    return issue;
}

EvaluationReport revise_report(std::vector<Role> responsibles) {
    std::vector<Issue> issues;
    for (Role role : responsibles) issues.push_back(blocking(role));
    return EvaluationReport::create(Verdict::revise, std::move(issues), {});
}

}  // namespace

TEST_CASE("route_revision picks the most-upstream responsible stage") {
    CHECK(route_revision(revise_report({Role::synthesis})) == Role::synthesis);
    CHECK(route_revision(revise_report({Role::interpretation, Role::synthesis})) ==
          Role::interpretation);
    CHECK(route_revision(revise_report({Role::translation, Role::synthesis})) ==
          Role::translation);
    CHECK(route_revision(revise_report({Role::synthesis, Role::translation})) ==
          Role::translation);
}

TEST_CASE("route_revision ignores minor issues") {
    Issue minor = blocking(Role::translation);
    minor.severity = Severity::minor;
    const EvaluationReport report =
        EvaluationReport::create(Verdict::revise, {minor, blocking(Role::synthesis)}, {});
    CHECK(route_revision(report) == Role::synthesis);
}

TEST_CASE("downstream_of fixed pipeline order") {
    CHECK(downstream_of(Role::translation) ==
          std::vector<Role>{Role::interpretation, Role::synthesis});
    CHECK(downstream_of(Role::interpretation) == std::vector<Role>{Role::synthesis});
    CHECK(downstream_of(Role::synthesis) == std::vector<Role>{});
}

TEST_CASE("accept on first pass: trace T I S E, zero revisions") {
    EventRecorder recorder;
    const Transcript transcript = run_schedule({{true, Role::synthesis}}, 3, recorder);
    REQUIRE(transcript.final.has_value());
    CHECK(transcript.final->status == RunStatus::accepted);
    CHECK(transcript.stage_trace() == std::vector<Role>{Role::translation, Role::interpretation,
                                                        Role::synthesis, Role::evaluation});
    CHECK(transcript.revision_count() == 0);
    CHECK(transcript.final->output->final_text() == "final text r0");
}

TEST_CASE("synthesis-responsible revision: trace T I S E S E") {
    EventRecorder recorder;
    const Transcript transcript =
        run_schedule({{false, Role::synthesis}, {true, Role::synthesis}}, 3, recorder);
    REQUIRE(transcript.final.has_value());
    CHECK(transcript.final->status == RunStatus::accepted);
    CHECK(transcript.stage_trace() ==
          std::vector<Role>{Role::translation, Role::interpretation, Role::synthesis,
                            Role::evaluation, Role::synthesis, Role::evaluation});
    CHECK(transcript.revision_count() == 1);

    // the synthesis re-run carried the evaluator's feedback
    bool feedback_seen = false;
    for (const Event& event : transcript.events) {
        if (event.kind != EventKind::llm_request) continue;
        if (event.payload.at("script_key") != "synthesis:1:0") continue;
        for (const auto& message : event.payload.at("messages")) {
            if (message.at("content").get<std::string>().find("blocking") != std::string::npos) {
                feedback_seen = true;
            }
        }
    }
    CHECK(feedback_seen);
}

TEST_CASE("max_revisions=1 with always-blocking interpretation: trace T I S E I S E") {
    EventRecorder recorder;
    const Transcript transcript = run_schedule({{false, Role::interpretation}}, 1, recorder);
    REQUIRE(transcript.final.has_value());
    CHECK(transcript.final->status == RunStatus::max_revisions_exceeded);
    CHECK(transcript.stage_trace() ==
          std::vector<Role>{Role::translation, Role::interpretation, Role::synthesis,
                            Role::evaluation, Role::interpretation, Role::synthesis,
                            Role::evaluation});
    CHECK(transcript.revision_count() == 1);
    // the last report is carried in the final record
    REQUIRE(transcript.final->report.has_value());
    CHECK(transcript.final->report->verdict() == Verdict::revise);
    // output of the last synthesis still carried
    CHECK(transcript.final->output->final_text() == "final text r1");
}

TEST_CASE("stage failure finalizes with status=failed and the cause recorded") {
    // no script entry for synthesis: the stage fails on ScriptMiss
    std::map<std::string, std::string> script{
        {"translation:0:0", translation_output("t")},
        {"interpretation:0:0", adaptation_output("a")},
    };
    const CrewConfig config = scripted_config(script, 3);
    const LlmGateway gateway{config.backend()};
    EventRecorder recorder;
    const Transcript transcript = run_pipeline(test_job(), config, gateway, nullptr, recorder);
    REQUIRE(transcript.final.has_value());
    CHECK(transcript.final->status == RunStatus::failed);
    CHECK_FALSE(transcript.final->output.has_value());
    CHECK(transcript.final->failed_stage == "synthesis");
    REQUIRE(transcript.final->failure_cause.has_value());
    CHECK(transcript.final->failure_cause->find("gateway error") != std::string::npos);
}

TEST_CASE("engine equals the reference interpreter on every schedule up to depth 3") {
    int cases = 0;
    for (int max_revisions = 0; max_revisions <= 3; ++max_revisions) {
        for (std::size_t depth = 1; depth <= 3; ++depth) {
            for (const auto& schedule : all_schedules(depth)) {
                const RefResult expected = reference_run(schedule, max_revisions);
                EventRecorder recorder;
                const Transcript transcript = run_schedule(schedule, max_revisions, recorder);
                REQUIRE(transcript.final.has_value());
                INFO("depth ", depth, " max_revisions ", max_revisions, " case ", cases);
                CHECK(transcript.final->status == expected.status);
                CHECK(transcript.stage_trace() == expected.trace);
                CHECK(static_cast<int>(transcript.revision_count()) == expected.revisions);
                CHECK(valid_trace(transcript.stage_trace(), max_revisions));
                // evaluation count bookkeeping
                std::size_t evaluations = 0;
                for (Role role : transcript.stage_trace()) {
                    if (role == Role::evaluation) ++evaluations;
                }
                CHECK(evaluations == transcript.revision_count() + 1);
                ++cases;
            }
        }
    }
    CHECK(cases == 4 * (4 + 16 + 64));
}

TEST_CASE("termination bound: stage executions never exceed 4 + 4 * max_revisions") {
    for (int max_revisions = 0; max_revisions <= 3; ++max_revisions) {
        // worst case: always-revise, translation responsible (full re-run each time)
        EventRecorder recorder;
        const Transcript transcript =
            run_schedule({{false, Role::translation}}, max_revisions, recorder);
        const std::size_t executions = transcript.stage_trace().size();
        CHECK(executions <= static_cast<std::size_t>(4 + 4 * max_revisions));
        if (max_revisions == 3) CHECK(executions == 16);
        CHECK(transcript.final->status == RunStatus::max_revisions_exceeded);
    }
}

TEST_CASE("status soundness") {
    // accepted => verdict accept
    EventRecorder r1;
    const Transcript accepted = run_schedule({{true, Role::synthesis}}, 2, r1);
    CHECK(accepted.final->report->verdict() == Verdict::accept);

    // max_revisions_exceeded => at least one blocking issue in the final report
    EventRecorder r2;
    const Transcript exceeded = run_schedule({{false, Role::synthesis}}, 2, r2);
    CHECK(exceeded.final->status == RunStatus::max_revisions_exceeded);
    CHECK(exceeded.final->report->has_blocking_issue());
}

TEST_CASE("revision_triggered events carry the target and issue ids") {
    EventRecorder recorder;
    const Transcript transcript =
        run_schedule({{false, Role::interpretation}, {true, Role::synthesis}}, 3, recorder);
    int revision_events = 0;
    for (const Event& event : transcript.events) {
        if (event.kind != EventKind::revision_triggered) continue;
        ++revision_events;
        CHECK(event.payload.at("target") == "interpretation");
        CHECK(event.payload.at("revision_index") == 1);
        REQUIRE(event.payload.at("issues").size() == 1);
        CHECK(event.payload["issues"][0].at("index") == 0);
    }
    CHECK(revision_events == 1);
}

TEST_CASE("minor-only findings ride along on an accepted run") {
    std::map<std::string, std::string> script = schedule_script({{true, Role::synthesis}}, 0);
    script["evaluation:0:0"] =
        json{{"verdict", "accept"},
             {"issues", json::array({json{{"category", "grammar"},
                                          {"severity", "minor"},
                                          {"responsible", "translation"},
                                          {"description", "awkward particle"},
                                          {"evidence_refs", json::array()}}})}}
            .dump();
    const CrewConfig config = scripted_config(script, 0);
    const LlmGateway gateway{config.backend()};
    EventRecorder recorder;
    const Transcript transcript = run_pipeline(test_job(), config, gateway, nullptr, recorder);
    CHECK(transcript.final->status == RunStatus::accepted);
    REQUIRE(transcript.final->report.has_value());
    CHECK(transcript.final->report->issues().size() == 1);
    CHECK(transcript.revision_count() == 0);
}
