#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crewline {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enums
// ---------------------------------------------------------------------------

enum class Role { translation, interpretation, synthesis, evaluation };
enum class CulturalDomain { festival, religion, history, general };
enum class AnnotationDecision { preserve, adapt, transliterate_with_clarifier };
enum class IssueCategory { grammar, cultural_inaccuracy, bias, factual, coherence };
enum class Severity { minor, blocking };
enum class Verdict { accept, revise };
enum class EvidenceOrigin { live, fixture, cache };
enum class RunStatus { accepted, max_revisions_exceeded, failed };

std::string to_string(Role role);
std::string to_string(CulturalDomain domain);
std::string to_string(AnnotationDecision decision);
std::string to_string(IssueCategory category);
std::string to_string(Severity severity);
std::string to_string(Verdict verdict);
std::string to_string(EvidenceOrigin origin);
std::string to_string(RunStatus status);

Role role_from_string(const std::string& text);
CulturalDomain cultural_domain_from_string(const std::string& text);
AnnotationDecision annotation_decision_from_string(const std::string& text);
IssueCategory issue_category_from_string(const std::string& text);
Severity severity_from_string(const std::string& text);
Verdict verdict_from_string(const std::string& text);
EvidenceOrigin evidence_origin_from_string(const std::string& text);
RunStatus run_status_from_string(const std::string& text);

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Violation {
    std::string path;     // field path, e.g. "agents.evaluation.allow_delegation"
    std::string code;     // e.g. "ForbiddenDelegation"
    std::string message;  // human-readable detail
};

// Carries every violated field path, not just the first one found.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<Violation> violations);
    ValidationError(std::string path, std::string code, std::string message);

    const std::vector<Violation>& violations() const { return violations_; }

private:
    static std::string format(const std::vector<Violation>& violations);
    std::vector<Violation> violations_;
};

// ---------------------------------------------------------------------------
// TranslationJob
// ---------------------------------------------------------------------------

class TranslationJob {
public:
    static TranslationJob create(std::string source_text, std::string source_lang,
                                 std::string target_lang,
                                 CulturalDomain domain = CulturalDomain::general,
                                 std::string job_id = {}, std::string created_at = {});

    const std::string& source_text() const { return source_text_; }
    const std::string& source_lang() const { return source_lang_; }
    const std::string& target_lang() const { return target_lang_; }
    CulturalDomain cultural_domain() const { return cultural_domain_; }
    const std::string& job_id() const { return job_id_; }
    const std::string& created_at() const { return created_at_; }

    json to_json() const;
    static TranslationJob from_json(const json& doc);

    friend bool operator==(const TranslationJob&, const TranslationJob&) = default;

private:
    TranslationJob() = default;
    std::string source_text_;
    std::string source_lang_;
    std::string target_lang_;
    CulturalDomain cultural_domain_ = CulturalDomain::general;
    std::string job_id_;
    std::string created_at_;
};

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

class RawTranslation {
public:
    static RawTranslation create(std::string translated_text,
                                 std::optional<std::string> notes = std::nullopt);

    const std::string& translated_text() const { return translated_text_; }
    const std::optional<std::string>& notes() const { return notes_; }

    json to_json() const;
    static RawTranslation from_json(const json& doc);

    friend bool operator==(const RawTranslation&, const RawTranslation&) = default;

private:
    RawTranslation() = default;
    std::string translated_text_;
    std::optional<std::string> notes_;
};

class Annotation {
public:
    static Annotation create(std::string source_span, AnnotationDecision decision,
                             std::optional<std::string> replacement, std::string rationale);

    const std::string& source_span() const { return source_span_; }
    AnnotationDecision decision() const { return decision_; }
    const std::optional<std::string>& replacement() const { return replacement_; }
    const std::string& rationale() const { return rationale_; }

    json to_json() const;
    static Annotation from_json(const json& doc);

    friend bool operator==(const Annotation&, const Annotation&) = default;

private:
    Annotation() = default;
    std::string source_span_;
    AnnotationDecision decision_ = AnnotationDecision::preserve;
    std::optional<std::string> replacement_;
    std::string rationale_;
};

class CulturalAdaptation {
public:
    // When annotated_input is given, every source_span must be a substring of it.
    static CulturalAdaptation create(std::string adapted_text, std::vector<Annotation> annotations,
                                     const std::string* annotated_input = nullptr);

    const std::string& adapted_text() const { return adapted_text_; }
    const std::vector<Annotation>& annotations() const { return annotations_; }

    json to_json() const;
    static CulturalAdaptation from_json(const json& doc,
                                        const std::string* annotated_input = nullptr);

    friend bool operator==(const CulturalAdaptation&, const CulturalAdaptation&) = default;

private:
    CulturalAdaptation() = default;
    std::string adapted_text_;
    std::vector<Annotation> annotations_;
};

class SynthesizedText {
public:
    // Every applied annotation with decision=preserve must occur verbatim in final_text.
    static SynthesizedText create(std::string final_text,
                                  std::vector<Annotation> applied_annotations);

    const std::string& final_text() const { return final_text_; }
    const std::vector<Annotation>& applied_annotations() const { return applied_annotations_; }

    json to_json() const;
    static SynthesizedText from_json(const json& doc);

    friend bool operator==(const SynthesizedText&, const SynthesizedText&) = default;

private:
    SynthesizedText() = default;
    std::string final_text_;
    std::vector<Annotation> applied_annotations_;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct SearchResult {
    std::string title;
    std::string snippet;
    std::string url;

    json to_json() const;
    static SearchResult from_json(const json& doc);
    friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

struct SearchEvidence {
    std::string query;
    std::vector<SearchResult> results;
    std::string fetched_at;
    EvidenceOrigin origin = EvidenceOrigin::fixture;

    json to_json() const;
    static SearchEvidence from_json(const json& doc);
    friend bool operator==(const SearchEvidence&, const SearchEvidence&) = default;
};

struct Issue {
    IssueCategory category = IssueCategory::coherence;
    Severity severity = Severity::minor;
    Role responsible = Role::synthesis;  // never evaluation
    std::string description;
    std::vector<std::size_t> evidence_refs;  // indices into the report's evidence list

    json to_json() const;
    static Issue from_json(const json& doc);
    friend bool operator==(const Issue&, const Issue&) = default;
};

class EvaluationReport {
public:
    // revise requires at least one blocking issue; accept forbids blocking issues;
    // evidence_refs must index into `evidence`.
    static EvaluationReport create(Verdict verdict, std::vector<Issue> issues,
                                   std::vector<SearchEvidence> evidence);

    Verdict verdict() const { return verdict_; }
    const std::vector<Issue>& issues() const { return issues_; }
    const std::vector<SearchEvidence>& evidence() const { return evidence_; }

    bool has_blocking_issue() const;

    json to_json() const;
    static EvaluationReport from_json(const json& doc);

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;

private:
    EvaluationReport() = default;
    Verdict verdict_ = Verdict::accept;
    std::vector<Issue> issues_;
    std::vector<SearchEvidence> evidence_;
};

// ---------------------------------------------------------------------------
// Events and transcripts
// ---------------------------------------------------------------------------

enum class EventKind {
    stage_started,
    llm_request,
    llm_response,
    tool_call,
    tool_result,
    delegation_requested,
    delegation_answered,
    revision_triggered,
    stage_completed,
    parse_retry,
};

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& text);

struct Event {
    std::uint64_t seq = 0;
    EventKind kind = EventKind::stage_started;
    std::optional<Role> stage;
    json payload;
    std::string at;  // UTC timestamp; excluded from replay equality

    json to_json() const;
    static Event from_json(const json& doc);
    friend bool operator==(const Event&, const Event&) = default;
};

struct FinalRecord {
    RunStatus status = RunStatus::failed;
    std::optional<SynthesizedText> output;
    std::optional<EvaluationReport> report;
    // Populated for status=failed: which stage broke and why.
    std::optional<std::string> failed_stage;
    std::optional<std::string> failure_cause;

    json to_json() const;
    static FinalRecord from_json(const json& doc);
    friend bool operator==(const FinalRecord&, const FinalRecord&) = default;
};

struct Transcript {
    Transcript(TranslationJob job, std::string config_digest)
        : job(std::move(job)), config_digest(std::move(config_digest)) {}

    TranslationJob job;
    std::string config_digest;
    std::vector<Event> events;
    std::optional<FinalRecord> final;

    bool finalized() const { return final.has_value(); }
    // Roles of stage_started events, in order.
    std::vector<Role> stage_trace() const;
    std::size_t revision_count() const;

    friend bool operator==(const Transcript&, const Transcript&) = default;
};

// Receives fully-formed events (seq already assigned).
class EventSink {
public:
    virtual ~EventSink() = default;
    virtual void on_event(const Event& event) = 0;
};

// Assigns monotone sequence numbers and timestamps, then fans out to sinks.
// One recorder per pipeline run.
class EventRecorder {
public:
    EventRecorder() = default;

    void add_sink(EventSink& sink) { sinks_.push_back(&sink); }

    const Event& emit(EventKind kind, std::optional<Role> stage, json payload);

    const std::vector<Event>& events() const { return events_; }
    std::vector<Event> take_events() { return std::move(events_); }

private:
    std::uint64_t next_seq_ = 1;
    std::vector<Event> events_;
    std::vector<EventSink*> sinks_;
};

}  // namespace crewline
