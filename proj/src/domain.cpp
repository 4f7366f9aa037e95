#include "crewline/domain.hpp"

#include "crewline/util.hpp"

#include <algorithm>
#include <sstream>

namespace crewline {

// ---------------------------------------------------------------------------
// Enum conversions
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad_enum(const char* type, const std::string& text) {
    throw ValidationError(type, "BadEnum", "unknown " + std::string(type) + " value: '" + text + "'");
}

}  // namespace

std::string to_string(Role role) {
    switch (role) {
        case Role::translation: return "translation";
        case Role::interpretation: return "interpretation";
        case Role::synthesis: return "synthesis";
        case Role::evaluation: return "evaluation";
    }
    return "?";
}

std::string to_string(CulturalDomain domain) {
    switch (domain) {
        case CulturalDomain::festival: return "festival";
        case CulturalDomain::religion: return "religion";
        case CulturalDomain::history: return "history";
        case CulturalDomain::general: return "general";
    }
    return "?";
}

std::string to_string(AnnotationDecision decision) {
    switch (decision) {
        case AnnotationDecision::preserve: return "preserve";
        case AnnotationDecision::adapt: return "adapt";
        case AnnotationDecision::transliterate_with_clarifier: return "transliterate_with_clarifier";
    }
    return "?";
}

std::string to_string(IssueCategory category) {
    switch (category) {
        case IssueCategory::grammar: return "grammar";
        case IssueCategory::cultural_inaccuracy: return "cultural_inaccuracy";
        case IssueCategory::bias: return "bias";
        case IssueCategory::factual: return "factual";
        case IssueCategory::coherence: return "coherence";
    }
    return "?";
}

std::string to_string(Severity severity) {
    return severity == Severity::minor ? "minor" : "blocking";
}

std::string to_string(Verdict verdict) {
    return verdict == Verdict::accept ? "accept" : "revise";
}

std::string to_string(EvidenceOrigin origin) {
    switch (origin) {
        case EvidenceOrigin::live: return "live";
        case EvidenceOrigin::fixture: return "fixture";
        case EvidenceOrigin::cache: return "cache";
    }
    return "?";
}

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::accepted: return "accepted";
        case RunStatus::max_revisions_exceeded: return "max_revisions_exceeded";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

Role role_from_string(const std::string& text) {
    if (text == "translation") return Role::translation;
    if (text == "interpretation") return Role::interpretation;
    if (text == "synthesis") return Role::synthesis;
    if (text == "evaluation") return Role::evaluation;
    bad_enum("role", text);
}

CulturalDomain cultural_domain_from_string(const std::string& text) {
    if (text == "festival") return CulturalDomain::festival;
    if (text == "religion") return CulturalDomain::religion;
    if (text == "history") return CulturalDomain::history;
    if (text == "general") return CulturalDomain::general;
    bad_enum("cultural_domain", text);
}

AnnotationDecision annotation_decision_from_string(const std::string& text) {
    if (text == "preserve") return AnnotationDecision::preserve;
    if (text == "adapt") return AnnotationDecision::adapt;
    if (text == "transliterate_with_clarifier") return AnnotationDecision::transliterate_with_clarifier;
    bad_enum("decision", text);
}

IssueCategory issue_category_from_string(const std::string& text) {
    if (text == "grammar") return IssueCategory::grammar;
    if (text == "cultural_inaccuracy") return IssueCategory::cultural_inaccuracy;
    if (text == "bias") return IssueCategory::bias;
    if (text == "factual") return IssueCategory::factual;
    if (text == "coherence") return IssueCategory::coherence;
    bad_enum("category", text);
}

Severity severity_from_string(const std::string& text) {
    if (text == "minor") return Severity::minor;
    if (text == "blocking") return Severity::blocking;
    bad_enum("severity", text);
}

Verdict verdict_from_string(const std::string& text) {
    if (text == "accept") return Verdict::accept;
    if (text == "revise") return Verdict::revise;
    bad_enum("verdict", text);
}

EvidenceOrigin evidence_origin_from_string(const std::string& text) {
    if (text == "live") return EvidenceOrigin::live;
    if (text == "fixture") return EvidenceOrigin::fixture;
    if (text == "cache") return EvidenceOrigin::cache;
    bad_enum("origin", text);
}

RunStatus run_status_from_string(const std::string& text) {
    if (text == "accepted") return RunStatus::accepted;
    if (text == "max_revisions_exceeded") return RunStatus::max_revisions_exceeded;
    if (text == "failed") return RunStatus::failed;
    bad_enum("status", text);
}

std::string to_string(EventKind kind) {
    switch (kind) {
        case EventKind::stage_started: return "stage_started";
        case EventKind::llm_request: return "llm_request";
        case EventKind::llm_response: return "llm_response";
        case EventKind::tool_call: return "tool_call";
        case EventKind::tool_result: return "tool_result";
        case EventKind::delegation_requested: return "delegation_requested";
        case EventKind::delegation_answered: return "delegation_answered";
        case EventKind::revision_triggered: return "revision_triggered";
        case EventKind::stage_completed: return "stage_completed";
        case EventKind::parse_retry: return "parse_retry";
    }
    return "?";
}

EventKind event_kind_from_string(const std::string& text) {
    if (text == "stage_started") return EventKind::stage_started;
    if (text == "llm_request") return EventKind::llm_request;
    if (text == "llm_response") return EventKind::llm_response;
    if (text == "tool_call") return EventKind::tool_call;
    if (text == "tool_result") return EventKind::tool_result;
    if (text == "delegation_requested") return EventKind::delegation_requested;
    if (text == "delegation_answered") return EventKind::delegation_answered;
    if (text == "revision_triggered") return EventKind::revision_triggered;
    if (text == "stage_completed") return EventKind::stage_completed;
    if (text == "parse_retry") return EventKind::parse_retry;
    bad_enum("event kind", text);
}

// ---------------------------------------------------------------------------
// ValidationError
// ---------------------------------------------------------------------------

std::string ValidationError::format(const std::vector<Violation>& violations) {
    std::ostringstream oss;
    oss << "validation failed (" << violations.size() << " violation"
        << (violations.size() == 1 ? "" : "s") << "):";
    for (const auto& v : violations) {
        oss << "\n  " << v.path << ": [" << v.code << "] " << v.message;
    }
    return oss.str();
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(format(violations)), violations_(std::move(violations)) {}

ValidationError::ValidationError(std::string path, std::string code, std::string message)
    : ValidationError(std::vector<Violation>{
          Violation{std::move(path), std::move(code), std::move(message)}}) {}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace {

const json& require_field(const json& doc, const char* key, const std::string& path) {
    auto it = doc.find(key);
    if (it == doc.end()) {
        throw ValidationError(path, "MissingField", "required field is absent");
    }
    return *it;
}

std::string require_string(const json& doc, const char* key, const std::string& path) {
    const json& value = require_field(doc, key, path);
    if (!value.is_string()) {
        throw ValidationError(path, "BadType", "expected a string");
    }
    return value.get<std::string>();
}

std::optional<std::string> optional_string(const json& doc, const char* key,
                                           const std::string& path) {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        throw ValidationError(path, "BadType", "expected a string");
    }
    return it->get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// TranslationJob
// ---------------------------------------------------------------------------

TranslationJob TranslationJob::create(std::string source_text, std::string source_lang,
                                      std::string target_lang, CulturalDomain domain,
                                      std::string job_id, std::string created_at) {
    std::vector<Violation> violations;
    if (trim(source_text).empty()) {
        violations.push_back({"source_text", "EmptyText", "source_text is empty after trimming"});
    }
    if (trim(source_lang).empty()) {
        violations.push_back({"source_lang", "EmptyText", "language tag is empty"});
    }
    if (trim(target_lang).empty()) {
        violations.push_back({"target_lang", "EmptyText", "language tag is empty"});
    }
    if (!source_lang.empty() && source_lang == target_lang) {
        violations.push_back(
            {"target_lang", "SameLanguage", "source_lang and target_lang must differ"});
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    TranslationJob job;
    job.source_text_ = std::move(source_text);
    job.source_lang_ = std::move(source_lang);
    job.target_lang_ = std::move(target_lang);
    job.cultural_domain_ = domain;
    job.job_id_ = job_id.empty() ? random_id("job") : std::move(job_id);
    job.created_at_ = created_at.empty() ? now_utc_iso8601() : std::move(created_at);
    return job;
}

json TranslationJob::to_json() const {
    return json{{"source_text", source_text_}, {"source_lang", source_lang_},
                {"target_lang", target_lang_}, {"cultural_domain", to_string(cultural_domain_)},
                {"job_id", job_id_},           {"created_at", created_at_}};
}

TranslationJob TranslationJob::from_json(const json& doc) {
    return create(require_string(doc, "source_text", "source_text"),
                  require_string(doc, "source_lang", "source_lang"),
                  require_string(doc, "target_lang", "target_lang"),
                  cultural_domain_from_string(require_string(doc, "cultural_domain", "cultural_domain")),
                  require_string(doc, "job_id", "job_id"),
                  require_string(doc, "created_at", "created_at"));
}

// ---------------------------------------------------------------------------
// RawTranslation
// ---------------------------------------------------------------------------

RawTranslation RawTranslation::create(std::string translated_text,
                                      std::optional<std::string> notes) {
    if (trim(translated_text).empty()) {
        throw ValidationError("translated_text", "EmptyText", "translated_text is empty");
    }
    RawTranslation artifact;
    artifact.translated_text_ = std::move(translated_text);
    artifact.notes_ = std::move(notes);
    return artifact;
}

json RawTranslation::to_json() const {
    json doc{{"translated_text", translated_text_}};
    if (notes_) doc["notes"] = *notes_;
    return doc;
}

RawTranslation RawTranslation::from_json(const json& doc) {
    return create(require_string(doc, "translated_text", "translated_text"),
                  optional_string(doc, "notes", "notes"));
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

Annotation Annotation::create(std::string source_span, AnnotationDecision decision,
                              std::optional<std::string> replacement, std::string rationale) {
    std::vector<Violation> violations;
    if (source_span.empty()) {
        violations.push_back({"source_span", "EmptyText", "source_span is empty"});
    }
    if (decision == AnnotationDecision::preserve) {
        if (replacement.has_value()) {
            violations.push_back({"replacement", "ReplacementForbidden",
                                  "decision=preserve must not carry a replacement"});
        }
    } else {
        if (!replacement.has_value() || replacement->empty()) {
            violations.push_back({"replacement", "ReplacementRequired",
                                  "decision=" + to_string(decision) +
                                      " requires a nonempty replacement"});
        }
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    Annotation annotation;
    annotation.source_span_ = std::move(source_span);
    annotation.decision_ = decision;
    annotation.replacement_ = std::move(replacement);
    annotation.rationale_ = std::move(rationale);
    return annotation;
}

json Annotation::to_json() const {
    json doc{{"source_span", source_span_},
             {"decision", to_string(decision_)},
             {"rationale", rationale_}};
    if (replacement_) doc["replacement"] = *replacement_;
    return doc;
}

Annotation Annotation::from_json(const json& doc) {
    return create(require_string(doc, "source_span", "source_span"),
                  annotation_decision_from_string(require_string(doc, "decision", "decision")),
                  optional_string(doc, "replacement", "replacement"),
                  doc.contains("rationale") ? require_string(doc, "rationale", "rationale") : "");
}

// ---------------------------------------------------------------------------
// CulturalAdaptation
// ---------------------------------------------------------------------------

namespace {

std::vector<Annotation> annotations_from_json(const json& doc, const char* key,
                                              const std::string& path) {
    std::vector<Annotation> annotations;
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return annotations;
    if (!it->is_array()) {
        throw ValidationError(path, "BadType", "expected an array of annotations");
    }
    for (const auto& entry : *it) {
        if (!entry.is_object()) {
            throw ValidationError(path, "BadType", "annotation entries must be objects");
        }
        annotations.push_back(Annotation::from_json(entry));
    }
    return annotations;
}

}  // namespace

CulturalAdaptation CulturalAdaptation::create(std::string adapted_text,
                                              std::vector<Annotation> annotations,
                                              const std::string* annotated_input) {
    std::vector<Violation> violations;
    if (trim(adapted_text).empty()) {
        violations.push_back({"adapted_text", "EmptyText", "adapted_text is empty"});
    }
    if (annotated_input != nullptr) {
        for (std::size_t i = 0; i < annotations.size(); ++i) {
            if (annotated_input->find(annotations[i].source_span()) == std::string::npos) {
                violations.push_back({"annotations[" + std::to_string(i) + "].source_span",
                                      "SpanNotFound",
                                      "source_span '" + annotations[i].source_span() +
                                          "' is not a substring of the annotated input"});
            }
        }
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    CulturalAdaptation artifact;
    artifact.adapted_text_ = std::move(adapted_text);
    artifact.annotations_ = std::move(annotations);
    return artifact;
}

json CulturalAdaptation::to_json() const {
    json annotations = json::array();
    for (const auto& annotation : annotations_) annotations.push_back(annotation.to_json());
    return json{{"adapted_text", adapted_text_}, {"annotations", std::move(annotations)}};
}

CulturalAdaptation CulturalAdaptation::from_json(const json& doc,
                                                 const std::string* annotated_input) {
    return create(require_string(doc, "adapted_text", "adapted_text"),
                  annotations_from_json(doc, "annotations", "annotations"), annotated_input);
}

// ---------------------------------------------------------------------------
// SynthesizedText
// ---------------------------------------------------------------------------

SynthesizedText SynthesizedText::create(std::string final_text,
                                        std::vector<Annotation> applied_annotations) {
    std::vector<Violation> violations;
    if (trim(final_text).empty()) {
        violations.push_back({"final_text", "EmptyText", "final_text is empty"});
    }
    for (std::size_t i = 0; i < applied_annotations.size(); ++i) {
        const Annotation& annotation = applied_annotations[i];
        if (annotation.decision() == AnnotationDecision::preserve &&
            final_text.find(annotation.source_span()) == std::string::npos) {
            violations.push_back(
                {"applied_annotations[" + std::to_string(i) + "]", "PreservedTermMissing",
                 "preserved span '" + annotation.source_span() +
                     "' does not occur verbatim in final_text"});
        }
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    SynthesizedText artifact;
    artifact.final_text_ = std::move(final_text);
    artifact.applied_annotations_ = std::move(applied_annotations);
    return artifact;
}

json SynthesizedText::to_json() const {
    json annotations = json::array();
    for (const auto& annotation : applied_annotations_) annotations.push_back(annotation.to_json());
    return json{{"final_text", final_text_}, {"applied_annotations", std::move(annotations)}};
}

SynthesizedText SynthesizedText::from_json(const json& doc) {
    return create(require_string(doc, "final_text", "final_text"),
                  annotations_from_json(doc, "applied_annotations", "applied_annotations"));
}

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

json SearchResult::to_json() const {
    return json{{"title", title}, {"snippet", snippet}, {"url", url}};
}

SearchResult SearchResult::from_json(const json& doc) {
    SearchResult result;
    result.title = require_string(doc, "title", "title");
    result.snippet = require_string(doc, "snippet", "snippet");
    result.url = require_string(doc, "url", "url");
    return result;
}

json SearchEvidence::to_json() const {
    json docs = json::array();
    for (const auto& result : results) docs.push_back(result.to_json());
    return json{{"query", query},
                {"results", std::move(docs)},
                {"fetched_at", fetched_at},
                {"origin", to_string(origin)}};
}

SearchEvidence SearchEvidence::from_json(const json& doc) {
    SearchEvidence evidence;
    evidence.query = require_string(doc, "query", "query");
    const json& results = require_field(doc, "results", "results");
    if (!results.is_array()) throw ValidationError("results", "BadType", "expected an array");
    for (const auto& entry : results) evidence.results.push_back(SearchResult::from_json(entry));
    evidence.fetched_at = require_string(doc, "fetched_at", "fetched_at");
    evidence.origin = evidence_origin_from_string(require_string(doc, "origin", "origin"));
    return evidence;
}

// ---------------------------------------------------------------------------
// Issue / EvaluationReport
// ---------------------------------------------------------------------------

json Issue::to_json() const {
    return json{{"category", to_string(category)},
                {"severity", to_string(severity)},
                {"responsible", to_string(responsible)},
                {"description", description},
                {"evidence_refs", evidence_refs}};
}

Issue Issue::from_json(const json& doc) {
    Issue issue;
    issue.category = issue_category_from_string(require_string(doc, "category", "category"));
    issue.severity = severity_from_string(require_string(doc, "severity", "severity"));
    issue.responsible = role_from_string(require_string(doc, "responsible", "responsible"));
    if (issue.responsible == Role::evaluation) {
        throw ValidationError("responsible", "BadResponsible",
                              "issues cannot hold the evaluation stage responsible");
    }
    issue.description = require_string(doc, "description", "description");
    auto it = doc.find("evidence_refs");
    if (it != doc.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ValidationError("evidence_refs", "BadType", "expected an array of indices");
        }
        for (const auto& entry : *it) {
            if (!entry.is_number_unsigned()) {
                throw ValidationError("evidence_refs", "BadType",
                                      "evidence_refs must be non-negative integers");
            }
            issue.evidence_refs.push_back(entry.get<std::size_t>());
        }
    }
    return issue;
}

bool EvaluationReport::has_blocking_issue() const {
    return std::any_of(issues_.begin(), issues_.end(),
                       [](const Issue& issue) { return issue.severity == Severity::blocking; });
}

EvaluationReport EvaluationReport::create(Verdict verdict, std::vector<Issue> issues,
                                          std::vector<SearchEvidence> evidence) {
    std::vector<Violation> violations;
    const bool blocking = std::any_of(issues.begin(), issues.end(), [](const Issue& issue) {
        return issue.severity == Severity::blocking;
    });
    if (verdict == Verdict::revise && issues.empty()) {
        violations.push_back({"issues", "EmptyIssues", "verdict=revise requires issues"});
    }
    if (verdict == Verdict::revise && !issues.empty() && !blocking) {
        violations.push_back({"verdict", "VerdictMismatch",
                              "verdict=revise requires at least one blocking issue; "
                              "minor-only findings belong on an accept verdict"});
    }
    if (verdict == Verdict::accept && blocking) {
        violations.push_back(
            {"verdict", "VerdictMismatch", "verdict=accept forbids blocking issues"});
    }
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (issues[i].responsible == Role::evaluation) {
            violations.push_back({"issues[" + std::to_string(i) + "].responsible",
                                  "BadResponsible",
                                  "issues cannot hold the evaluation stage responsible"});
        }
        for (std::size_t ref : issues[i].evidence_refs) {
            if (ref >= evidence.size()) {
                violations.push_back({"issues[" + std::to_string(i) + "].evidence_refs",
                                      "RefOutOfBounds",
                                      "evidence index " + std::to_string(ref) + " out of bounds (" +
                                          std::to_string(evidence.size()) + " entries)"});
            }
        }
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    EvaluationReport report;
    report.verdict_ = verdict;
    report.issues_ = std::move(issues);
    report.evidence_ = std::move(evidence);
    return report;
}

json EvaluationReport::to_json() const {
    json issues = json::array();
    for (const auto& issue : issues_) issues.push_back(issue.to_json());
    json evidence = json::array();
    for (const auto& entry : evidence_) evidence.push_back(entry.to_json());
    return json{{"verdict", to_string(verdict_)},
                {"issues", std::move(issues)},
                {"evidence", std::move(evidence)}};
}

EvaluationReport EvaluationReport::from_json(const json& doc) {
    std::vector<Issue> issues;
    auto issues_it = doc.find("issues");
    if (issues_it != doc.end() && !issues_it->is_null()) {
        if (!issues_it->is_array()) {
            throw ValidationError("issues", "BadType", "expected an array of issues");
        }
        for (const auto& entry : *issues_it) issues.push_back(Issue::from_json(entry));
    }
    std::vector<SearchEvidence> evidence;
    auto evidence_it = doc.find("evidence");
    if (evidence_it != doc.end() && !evidence_it->is_null()) {
        if (!evidence_it->is_array()) {
            throw ValidationError("evidence", "BadType", "expected an array of evidence");
        }
        for (const auto& entry : *evidence_it) evidence.push_back(SearchEvidence::from_json(entry));
    }
    return create(verdict_from_string(require_string(doc, "verdict", "verdict")),
                  std::move(issues), std::move(evidence));
}

// ---------------------------------------------------------------------------
// Event / FinalRecord / Transcript
// ---------------------------------------------------------------------------

json Event::to_json() const {
    json doc{{"seq", seq}, {"kind", to_string(kind)}, {"payload", payload}, {"at", at}};
    doc["stage"] = stage ? json(to_string(*stage)) : json(nullptr);
    return doc;
}

Event Event::from_json(const json& doc) {
    Event event;
    const json& seq = require_field(doc, "seq", "seq");
    if (!seq.is_number_unsigned()) {
        throw ValidationError("seq", "BadType", "expected a non-negative integer");
    }
    event.seq = seq.get<std::uint64_t>();
    event.kind = event_kind_from_string(require_string(doc, "kind", "kind"));
    const json& stage = require_field(doc, "stage", "stage");
    if (!stage.is_null()) event.stage = role_from_string(stage.get<std::string>());
    event.payload = require_field(doc, "payload", "payload");
    event.at = require_string(doc, "at", "at");
    return event;
}

json FinalRecord::to_json() const {
    json doc{{"status", to_string(status)}};
    doc["output"] = output ? output->to_json() : json(nullptr);
    doc["report"] = report ? report->to_json() : json(nullptr);
    if (failed_stage) doc["failed_stage"] = *failed_stage;
    if (failure_cause) doc["failure_cause"] = *failure_cause;
    return doc;
}

FinalRecord FinalRecord::from_json(const json& doc) {
    FinalRecord record;
    record.status = run_status_from_string(require_string(doc, "status", "status"));
    auto output_it = doc.find("output");
    if (output_it != doc.end() && !output_it->is_null()) {
        record.output = SynthesizedText::from_json(*output_it);
    }
    auto report_it = doc.find("report");
    if (report_it != doc.end() && !report_it->is_null()) {
        record.report = EvaluationReport::from_json(*report_it);
    }
    record.failed_stage = optional_string(doc, "failed_stage", "failed_stage");
    record.failure_cause = optional_string(doc, "failure_cause", "failure_cause");
    if (record.status == RunStatus::accepted && !record.output) {
        throw ValidationError("output", "MissingOutput", "status=accepted requires an output");
    }
    return record;
}

std::vector<Role> Transcript::stage_trace() const {
    std::vector<Role> trace;
    for (const Event& event : events) {
        if (event.kind == EventKind::stage_started && event.stage) trace.push_back(*event.stage);
    }
    return trace;
}

std::size_t Transcript::revision_count() const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [](const Event& event) {
            return event.kind == EventKind::revision_triggered;
        }));
}

const Event& EventRecorder::emit(EventKind kind, std::optional<Role> stage, json payload) {
    Event event;
    event.seq = next_seq_++;
    event.kind = kind;
    event.stage = stage;
    event.payload = std::move(payload);
    event.at = now_utc_iso8601();
    events_.push_back(std::move(event));
    const Event& stored = events_.back();
    for (EventSink* sink : sinks_) sink->on_event(stored);
    return stored;
}

}  // namespace crewline
