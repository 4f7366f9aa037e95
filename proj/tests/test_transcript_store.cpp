#include "crewline/transcript_store.hpp"

#include "crewline/orchestrator.hpp"
#include "support/test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace crewline;
using namespace crewline::test;

namespace {

Event make_event(std::uint64_t seq, EventKind kind, json payload = json::object()) {
    Event event;
    event.seq = seq;
    event.kind = kind;
    event.stage = Role::translation;
    event.payload = std::move(payload);
    event.at = "2026-01-01T00:00:00Z";
    return event;
}

FinalRecord accepted_final(const std::string& text) {
    FinalRecord final;
    final.status = RunStatus::accepted;
    final.output = SynthesizedText::create(text, {});
    final.report = EvaluationReport::create(Verdict::accept, {}, {});
    return final;
}

// A finalized transcript produced by a real scripted run.
Transcript scripted_transcript(const std::vector<SchedOutcome>& schedule, int max_revisions) {
    EventRecorder recorder;
    return run_schedule(schedule, max_revisions, recorder);
}

CrewConfig schedule_config(const std::vector<SchedOutcome>& schedule, int max_revisions) {
    return scripted_config(schedule_script(schedule, max_revisions), max_revisions);
}

}  // namespace

TEST_CASE("append three events and read them back in order") {
    TempDir dir("store");
    TranscriptStore store(dir.path);
    const TranslationJob job = test_job();
    auto writer = store.open_writer(job, "d1");
    writer.append(make_event(1, EventKind::stage_started));
    writer.append(make_event(2, EventKind::llm_request));
    writer.append(make_event(3, EventKind::llm_response));
    writer.finalize(accepted_final("done"));

    const Transcript loaded = store.load(job.job_id());
    REQUIRE(loaded.events.size() == 3);
    CHECK(loaded.events[0].seq == 1);
    CHECK(loaded.events[2].seq == 3);
    CHECK(loaded.events[1].kind == EventKind::llm_request);
    CHECK(loaded.job == job);
    CHECK(loaded.config_digest == "d1");
    CHECK(loaded.final->output->final_text() == "done");
}

TEST_CASE("non-consecutive seq is a SeqGap") {
    TempDir dir("store");
    TranscriptStore store(dir.path);
    auto writer = store.open_writer(test_job(), "d1");
    writer.append(make_event(1, EventKind::stage_started));
    writer.append(make_event(2, EventKind::stage_completed));
    writer.append(make_event(3, EventKind::stage_started));
    try {
        writer.append(make_event(5, EventKind::stage_completed));
        FAIL("expected SeqGap");
    } catch (const StoreError& err) {
        CHECK(err.kind == StoreError::Kind::seq_gap);
    }
}

TEST_CASE("truncated final line is dropped with a warning") {
    TempDir dir("store");
    TranscriptStore store(dir.path);
    const TranslationJob job = test_job();
    {
        auto writer = store.open_writer(job, "d1");
        writer.append(make_event(1, EventKind::stage_started));
        writer.append(make_event(2, EventKind::stage_completed));
        writer.finalize(accepted_final("ok"));
    }
    const auto events_path = dir.path / (job.job_id() + ".events");

    // chop the file mid-way through the final record
    const auto full_size = std::filesystem::file_size(events_path);
    std::filesystem::resize_file(events_path, full_size - 7);

    std::vector<std::string> warnings;
    const Transcript loaded = store.load(job.job_id(), &warnings);
    REQUIRE(loaded.events.size() == 1);
    CHECK(loaded.events[0].seq == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("partial trailing record") != std::string::npos);
}

TEST_CASE("reopening after a crash truncates the partial tail and resumes the seq") {
    TempDir dir("store");
    TranscriptStore store(dir.path);
    const TranslationJob job = test_job();
    {
        auto writer = store.open_writer(job, "d1");
        writer.append(make_event(1, EventKind::stage_started));
        writer.append(make_event(2, EventKind::stage_completed));
    }
    const auto events_path = dir.path / (job.job_id() + ".events");
    {
        // simulate a crash mid-append
        std::ofstream out(events_path, std::ios::binary | std::ios::app);
        out << "{\"seq\": 3, \"kind\": \"stage_sta";
    }
    std::vector<std::string> warnings;
    auto writer = store.open_writer(job, "d1", &warnings);
    CHECK(writer.last_seq() == 2);
    REQUIRE_FALSE(warnings.empty());
    writer.append(make_event(3, EventKind::stage_started));
    writer.finalize(accepted_final("ok"));
    const Transcript loaded = store.load(job.job_id());
    CHECK(loaded.events.size() == 3);
}

TEST_CASE("text is normalized to NFC on ingestion") {
    TempDir dir("store");
    TranscriptStore store(dir.path);
    const TranslationJob job = test_job();
    auto writer = store.open_writer(job, "d1");
    // "é" as NFD (e + combining acute) must come back as NFC
    const std::string nfd = "caf\x65\xcc\x81";
    const std::string nfc = "caf\xc3\xa9";
    writer.append(make_event(1, EventKind::llm_response, json{{"content", nfd}}));
    writer.finalize(accepted_final("ok"));
    const Transcript loaded = store.load(job.job_id());
    CHECK(loaded.events[0].payload.at("content").get<std::string>() == nfc);
}

TEST_CASE("store round-trip preserves scripted run transcripts") {
    const Transcript original = scripted_transcript({{false, Role::synthesis},
                                                     {true, Role::synthesis}}, 2);
    TempDir dir("store");
    TranscriptStore store(dir.path);
    auto writer = store.open_writer(original.job, original.config_digest);
    for (const Event& event : original.events) writer.append(event);
    writer.finalize(*original.final);

    const Transcript loaded = store.load(original.job.job_id());
    CHECK(loaded == original);
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

TEST_CASE("replay reproduces the accepted output byte for byte") {
    const std::vector<SchedOutcome> schedule{{false, Role::translation},
                                             {true, Role::synthesis}};
    const Transcript transcript = scripted_transcript(schedule, 2);
    REQUIRE(transcript.final->status == RunStatus::accepted);

    const SynthesizedText replayed = replay(transcript, schedule_config(schedule, 2));
    CHECK(replayed.final_text() == transcript.final->output->final_text());
}

TEST_CASE("replay with an edited config is a DigestMismatch") {
    const std::vector<SchedOutcome> schedule{{true, Role::synthesis}};
    const Transcript transcript = scripted_transcript(schedule, 2);
    const CrewConfig edited = schedule_config(schedule, 3);  // max_revisions changed
    try {
        replay(transcript, edited);
        FAIL("expected ReplayError");
    } catch (const ReplayError& err) {
        CHECK(err.kind == ReplayError::Kind::digest_mismatch);
    }
}

TEST_CASE("hand-permuted events replay to a divergence at the first swapped seq") {
    const std::vector<SchedOutcome> schedule{{true, Role::synthesis}};
    Transcript transcript = scripted_transcript(schedule, 2);

    // swap the contents of two adjacent events, keeping seq values in order
    REQUIRE(transcript.events.size() >= 4);
    const std::size_t at = 1;
    std::swap(transcript.events[at], transcript.events[at + 1]);
    std::swap(transcript.events[at].seq, transcript.events[at + 1].seq);
    const std::uint64_t expected_seq = transcript.events[at].seq;

    try {
        replay(transcript, schedule_config(schedule, 2));
        FAIL("expected ReplayError");
    } catch (const ReplayError& err) {
        CHECK(err.kind == ReplayError::Kind::divergence);
        CHECK(err.seq == expected_seq);
    }
}

TEST_CASE("replay requires an accepted transcript") {
    const Transcript failed = scripted_transcript({{false, Role::synthesis}}, 0);
    REQUIRE(failed.final->status == RunStatus::max_revisions_exceeded);
    CHECK_THROWS_AS(replay(failed, schedule_config({{false, Role::synthesis}}, 0)),
                    ValidationError);
}

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

namespace {

Transcript transcript_with_output(const std::string& text,
                                  const std::vector<Annotation>& annotations) {
    Transcript transcript(test_job(), "digest");
    Event started = make_event(1, EventKind::stage_started);
    transcript.events.push_back(started);
    FinalRecord final;
    final.status = RunStatus::accepted;
    final.output = SynthesizedText::create(text, annotations);
    final.report = EvaluationReport::create(Verdict::accept, {}, {});
    transcript.final = final;
    return transcript;
}

}  // namespace

TEST_CASE("diff of identical transcripts is empty") {
    const Transcript t = scripted_transcript({{true, Role::synthesis}}, 1);
    const DiffReport report = diff_transcripts(t, t);
    CHECK(report.identical());
    CHECK(report.to_text() == "NO DIFFERENCES\n");
}

TEST_CASE("diff of transcripts differing only in final text lists only that section") {
    const Transcript a = transcript_with_output("line one\nline two", {});
    const Transcript b = transcript_with_output("line one\nline two changed", {});
    const DiffReport report = diff_transcripts(a, b);
    CHECK_FALSE(report.identical());
    CHECK(report.fields.empty());  // status, revisions, trace all equal
    CHECK(report.final_text_only_a == std::vector<std::string>{"line two"});
    CHECK(report.final_text_only_b == std::vector<std::string>{"line two changed"});
    CHECK(report.preserve_only_a.empty());
    CHECK(report.issues_only_a.empty());
}

TEST_CASE("preserve-term symmetric difference names the dropped marker") {
    const std::vector<Annotation> with_marker{
        Annotation::create("Lakshmi Puja", AnnotationDecision::preserve, std::nullopt, "")};
    const Transcript ours = transcript_with_output("text with Lakshmi Puja", with_marker);
    const Transcript baseline = transcript_with_output("text with Lakshmi Puja", {});
    const DiffReport report = diff_transcripts(ours, baseline);
    CHECK(report.preserve_only_a == std::vector<std::string>{"Lakshmi Puja"});
    CHECK(report.preserve_only_b.empty());
}

TEST_CASE("diff is symmetric up to side labels") {
    const Transcript a = scripted_transcript({{false, Role::synthesis}, {true, Role::synthesis}}, 2);
    const Transcript b = scripted_transcript({{true, Role::synthesis}}, 2);
    const DiffReport ab = diff_transcripts(a, b);
    const DiffReport ba = diff_transcripts(b, a);
    REQUIRE(ab.fields.size() == ba.fields.size());
    for (std::size_t i = 0; i < ab.fields.size(); ++i) {
        CHECK(ab.fields[i].name == ba.fields[i].name);
        CHECK(ab.fields[i].a == ba.fields[i].b);
        CHECK(ab.fields[i].b == ba.fields[i].a);
    }
    CHECK(ab.final_text_only_a == ba.final_text_only_b);
    CHECK(ab.final_text_only_b == ba.final_text_only_a);
    CHECK(ab.preserve_only_a == ba.preserve_only_b);
    CHECK(ab.issues_only_a == ba.issues_only_b);
}
