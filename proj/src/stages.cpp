#include "crewline/stages.hpp"

#include "crewline/util.hpp"

#include <cctype>
#include <sstream>

namespace crewline {

namespace {

// ---------------------------------------------------------------------------
// Output contracts
// ---------------------------------------------------------------------------

std::string output_contract(Role role, bool allow_delegation) {
    std::string contract;
    switch (role) {
        case Role::translation:
            contract =
                "Reply with exactly one JSON object:\n"
                "{\"translated_text\": \"<the translation>\", \"notes\": \"<optional remarks>\"}\n"
                "translated_text must be nonempty.";
            break;
        case Role::interpretation:
            contract =
                "Reply with exactly one JSON object:\n"
                "{\"adapted_text\": \"<culturally adapted translation>\", \"annotations\": ["
                "{\"source_span\": \"<verbatim span of the source text>\", "
                "\"decision\": \"preserve\"|\"adapt\"|\"transliterate_with_clarifier\", "
                "\"replacement\": \"<required unless decision is preserve>\", "
                "\"rationale\": \"<why>\"}]}\n"
                "Every source_span must be copied verbatim from the source text. "
                "Use preserve for culturally significant terms that must remain unchanged.";
            break;
        case Role::synthesis:
            contract =
                "Reply with exactly one JSON object:\n"
                "{\"final_text\": \"<the polished final translation>\"}\n"
                "Every span the adaptation marked preserve must appear verbatim in final_text.";
            break;
        case Role::evaluation:
            contract =
                "Reply with exactly one JSON object:\n"
                "{\"verdict\": \"accept\"|\"revise\", \"issues\": ["
                "{\"category\": \"grammar\"|\"cultural_inaccuracy\"|\"bias\"|\"factual\"|\"coherence\", "
                "\"severity\": \"minor\"|\"blocking\", "
                "\"responsible\": \"translation\"|\"interpretation\"|\"synthesis\", "
                "\"description\": \"<finding>\", "
                "\"evidence_refs\": [<indices into the numbered evidence list>]}]}\n"
                "Use verdict revise only when at least one issue is blocking; "
                "minor-only findings go on an accept verdict.";
            break;
    }
    if (allow_delegation) {
        contract +=
            "\nYou may additionally include \"delegation\": {\"target\": "
            "\"translation\"|\"interpretation\"|\"synthesis\"|\"evaluation\", "
            "\"question\": \"<one question>\"} to consult another agent before your final answer.";
    }
    return contract;
}

std::string domain_label(CulturalDomain domain) {
    switch (domain) {
        case CulturalDomain::festival: return "festival";
        case CulturalDomain::religion: return "religion";
        case CulturalDomain::history: return "history";
        case CulturalDomain::general: return "culture";
    }
    return "culture";
}

std::string format_annotations(const std::vector<Annotation>& annotations) {
    if (annotations.empty()) return "(none)";
    std::ostringstream oss;
    for (const Annotation& annotation : annotations) {
        oss << "- \"" << annotation.source_span() << "\" -> " << to_string(annotation.decision());
        if (annotation.replacement()) oss << " as \"" << *annotation.replacement() << "\"";
        if (!annotation.rationale().empty()) oss << " (" << annotation.rationale() << ")";
        oss << "\n";
    }
    std::string out = oss.str();
    out.pop_back();
    return out;
}

std::string format_feedback(const std::vector<Issue>& issues) {
    std::ostringstream oss;
    for (const Issue& issue : issues) {
        oss << "- [" << to_string(issue.category) << "/" << to_string(issue.severity) << "] "
            << issue.description << "\n";
    }
    std::string out = oss.str();
    if (!out.empty()) out.pop_back();
    return out;
}

std::string format_evidence(const std::vector<SearchEvidence>& evidence) {
    if (evidence.empty()) return "(no external evidence available)";
    std::ostringstream oss;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        oss << "[" << i << "] query: " << evidence[i].query << "\n";
        if (evidence[i].results.empty()) oss << "    (no results)\n";
        for (const SearchResult& result : evidence[i].results) {
            oss << "    - " << result.title << ": " << result.snippet << " (" << result.url
                << ")\n";
        }
    }
    std::string out = oss.str();
    out.pop_back();
    return out;
}

// ---------------------------------------------------------------------------
// JSON extraction
// ---------------------------------------------------------------------------

// First balanced {...} region that parses as a JSON object, scanning left to
// right. String-aware, so braces inside literals do not confuse the walk.
std::optional<json> first_json_object(const std::string& raw) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        std::size_t depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t end = std::string::npos;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    end = i;
                    break;
                }
            }
        }
        if (end == std::string::npos) continue;
        json parsed = json::parse(raw.substr(start, end - start + 1), nullptr,
                                  /*allow_exceptions=*/false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    }
    return std::nullopt;
}

std::optional<DelegationRequest> parse_delegation(Role requesting_role, const json& doc) {
    auto it = doc.find("delegation");
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_object()) throw ParseFailure("delegation must be an object");
    if (!it->contains("target") || !(*it)["target"].is_string()) {
        throw ParseFailure("delegation.target must be a role name");
    }
    DelegationRequest request;
    try {
        request.target = role_from_string((*it)["target"].get<std::string>());
    } catch (const ValidationError& err) {
        throw ParseFailure(std::string("delegation.target: ") + err.what());
    }
    if (request.target == requesting_role) {
        throw ParseFailure("delegation.target must differ from the requesting role");
    }
    if (!it->contains("question") || !(*it)["question"].is_string() ||
        trim((*it)["question"].get<std::string>()).empty()) {
        throw ParseFailure("delegation.question must be nonempty text");
    }
    request.question = (*it)["question"].get<std::string>();
    return request;
}

}  // namespace

json artifact_to_json(const StageArtifact& artifact) {
    return std::visit(
        [](const auto& value) -> json {
            if constexpr (std::is_same_v<std::decay_t<decltype(value)>, std::monostate>) {
                throw std::logic_error("empty stage artifact");
            } else {
                return value.to_json();
            }
        },
        artifact);
}

ParsedOutput parse_stage_output(Role role, const std::string& raw) {
    return parse_stage_output(role, raw, ParseContext{});
}

ParsedOutput parse_stage_output(Role role, const std::string& raw, const ParseContext& ctx) {
    std::optional<json> doc = first_json_object(raw);
    if (!doc) throw ParseFailure("no JSON object found in the output");

    ParsedOutput output;
    try {
        switch (role) {
            case Role::translation:
                output.artifact = RawTranslation::from_json(*doc);
                break;
            case Role::interpretation:
                output.artifact = CulturalAdaptation::from_json(*doc, ctx.annotated_input);
                break;
            case Role::synthesis: {
                if (ctx.upstream_annotations != nullptr) {
                    // The upstream adaptation is authoritative for what was applied.
                    json amended = *doc;
                    json annotations = json::array();
                    for (const Annotation& annotation : *ctx.upstream_annotations) {
                        annotations.push_back(annotation.to_json());
                    }
                    amended["applied_annotations"] = std::move(annotations);
                    output.artifact = SynthesizedText::from_json(amended);
                } else {
                    output.artifact = SynthesizedText::from_json(*doc);
                }
                break;
            }
            case Role::evaluation: {
                json amended = *doc;
                if (ctx.evidence != nullptr) {
                    json evidence = json::array();
                    for (const SearchEvidence& entry : *ctx.evidence) {
                        evidence.push_back(entry.to_json());
                    }
                    amended["evidence"] = std::move(evidence);
                }
                output.artifact = EvaluationReport::from_json(amended);
                break;
            }
        }
        output.delegation = parse_delegation(role, *doc);
    } catch (const ValidationError& err) {
        throw ParseFailure(err.what());
    } catch (const json::exception& err) {
        throw ParseFailure(std::string("malformed document: ") + err.what());
    }
    return output;
}

std::string render_template(const std::string& prompt_template,
                            const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(prompt_template.size());
    std::size_t pos = 0;
    while (pos < prompt_template.size()) {
        const std::size_t open = prompt_template.find('{', pos);
        if (open == std::string::npos) {
            out.append(prompt_template, pos, std::string::npos);
            break;
        }
        out.append(prompt_template, pos, open - pos);
        const std::size_t close = prompt_template.find('}', open + 1);
        if (close == std::string::npos) {
            out.append(prompt_template, open, std::string::npos);
            break;
        }
        const std::string name = prompt_template.substr(open + 1, close - open - 1);
        bool identifier = !name.empty();
        for (char c : name) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
                identifier = false;
                break;
            }
        }
        if (!identifier) {
            out.push_back('{');
            pos = open + 1;
            continue;
        }
        auto it = values.find(name);
        if (it == values.end()) {
            throw ValidationError("prompt_template", "BadPlaceholder",
                                  "unresolvable placeholder {" + name + "}");
        }
        out.append(it->second);
        pos = close + 1;
    }
    return out;
}

std::vector<ChatMessage> render_prompt(const AgentSpec& spec, const StageInput& input,
                                       const std::vector<SearchEvidence>& evidence) {
    const bool has_feedback = input.revision_feedback && !input.revision_feedback->empty();

    std::map<std::string, std::string> values{
        {"source_text", input.job.source_text()},
        {"source_lang", input.job.source_lang()},
        {"target_lang", input.job.target_lang()},
        {"cultural_domain", to_string(input.job.cultural_domain())},
        {"feedback", has_feedback ? format_feedback(*input.revision_feedback) : ""},
    };
    if (input.translation) {
        values["upstream_translation"] = input.translation->translated_text();
    }
    if (input.adaptation) {
        values["upstream_adaptation"] = input.adaptation->adapted_text() + "\n\nAnnotations:\n" +
                                        format_annotations(input.adaptation->annotations());
    }
    if (input.synthesized) {
        values["upstream_final"] = input.synthesized->final_text();
    }
    if (spec.role == Role::evaluation) {
        values["evidence"] = format_evidence(evidence);
    }

    std::string user = render_template(spec.prompt_template, values);

    const std::set<std::string> used = template_placeholders(spec.prompt_template);
    if (has_feedback && !used.count("feedback")) {
        user += "\n\nFeedback to address (revision " + std::to_string(input.revision_index) +
                "):\n" + format_feedback(*input.revision_feedback);
    }
    if (spec.role == Role::evaluation && !used.count("evidence")) {
        user += "\n\nExternal evidence:\n" + format_evidence(evidence);
    }

    std::string system = spec.goal;
    if (!spec.backstory.empty()) system += "\n\n" + spec.backstory;
    system += "\n\n" + output_contract(spec.role, spec.allow_delegation);

    return {ChatMessage{ChatMessage::Role::system, std::move(system)},
            ChatMessage{ChatMessage::Role::user, std::move(user)}};
}

// ---------------------------------------------------------------------------
// StageRunner
// ---------------------------------------------------------------------------

std::string StageRunner::script_key(Role role, int revision_index, int call_index) const {
    return to_string(role) + ":" + std::to_string(revision_index) + ":" +
           std::to_string(call_index);
}

StageRunner::Attempt StageRunner::attempt_with_retries(const AgentSpec& spec,
                                                       const StageInput& input,
                                                       std::vector<ChatMessage> messages,
                                                       const ParseContext& ctx,
                                                       EventRecorder& recorder,
                                                       int& call_index) const {
    constexpr int kMaxAttempts = 3;  // 1 initial + 2 parse retries
    std::string last_reason;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        ChatRequest request;
        request.model = gateway_.effective_model();
        request.messages = messages;
        request.temperature = spec.model_params.temperature;
        request.max_tokens = spec.model_params.max_tokens;
        request.script_key = script_key(spec.role, input.revision_index, call_index);
        request.correlation_id = request.script_key;
        request.stage = spec.role;
        ++call_index;

        ChatResponse response;
        try {
            response = gateway_.chat(request, recorder);
        } catch (const GatewayError& err) {
            throw StageFailed(spec.role, std::string("gateway error: ") + err.what());
        }

        try {
            Attempt attempt_result;
            attempt_result.parsed = parse_stage_output(spec.role, response.content, ctx);
            attempt_result.raw = response.content;
            return attempt_result;
        } catch (const ParseFailure& failure) {
            last_reason = failure.what();
            if (attempt + 1 == kMaxAttempts) break;
            recorder.emit(EventKind::parse_retry, spec.role,
                          json{{"attempt", attempt + 1}, {"reason", last_reason}});
            messages.push_back(ChatMessage{ChatMessage::Role::assistant, response.content});
            messages.push_back(ChatMessage{
                ChatMessage::Role::user,
                "Your previous reply could not be used: " + last_reason +
                    "\nReply again with exactly one valid JSON object per the output contract."});
        }
    }
    throw StageFailed(spec.role, "3 consecutive parse failures; last: " + last_reason);
}

StageArtifact StageRunner::run_internal(const AgentSpec& spec, const StageInput& input,
                                        const std::vector<SearchEvidence>& evidence,
                                        const ParseContext& ctx, EventRecorder& recorder) const {
    int call_index = 0;
    Attempt attempt =
        attempt_with_retries(spec, input, render_prompt(spec, input, evidence), ctx, recorder,
                             call_index);

    int delegations_used = 0;
    while (attempt.parsed.delegation) {
        const DelegationRequest request = *attempt.parsed.delegation;
        if (!spec.allow_delegation) {
            recorder.emit(EventKind::delegation_requested, spec.role,
                          json{{"target", to_string(request.target)},
                               {"question", request.question},
                               {"refused", true},
                               {"reason", "stage does not allow delegation"}});
            break;
        }
        if (delegations_used >= config_.max_delegations_per_stage()) {
            recorder.emit(EventKind::delegation_requested, spec.role,
                          json{{"target", to_string(request.target)},
                               {"question", request.question},
                               {"refused", true},
                               {"reason", "delegation budget exhausted"}});
            break;
        }
        ++delegations_used;
        recorder.emit(EventKind::delegation_requested, spec.role,
                      json{{"target", to_string(request.target)}, {"question", request.question}});

        const AgentSpec& target = config_.agent(request.target);
        std::string target_system = target.goal;
        if (!target.backstory.empty()) target_system += "\n\n" + target.backstory;
        target_system += "\n\nAnswer the question directly and concisely.";

        ChatRequest sub;
        sub.model = gateway_.effective_model();
        sub.messages = {ChatMessage{ChatMessage::Role::system, std::move(target_system)},
                        ChatMessage{ChatMessage::Role::user, request.question}};
        sub.temperature = target.model_params.temperature;
        sub.max_tokens = target.model_params.max_tokens;
        sub.script_key = script_key(spec.role, input.revision_index, call_index);
        sub.correlation_id = sub.script_key;
        sub.stage = spec.role;
        ++call_index;

        ChatResponse answer;
        try {
            answer = gateway_.chat(sub, recorder);
        } catch (const GatewayError& err) {
            throw StageFailed(spec.role, std::string("delegation gateway error: ") + err.what());
        }
        recorder.emit(EventKind::delegation_answered, spec.role,
                      json{{"target", to_string(request.target)},
                           {"question", request.question},
                           {"answer", answer.content}});

        std::vector<ChatMessage> messages = render_prompt(spec, input, evidence);
        messages.push_back(ChatMessage{ChatMessage::Role::assistant, attempt.raw});
        messages.push_back(ChatMessage{
            ChatMessage::Role::user, "Answer from the " + to_string(request.target) +
                                         " agent to your question \"" + request.question +
                                         "\":\n" + answer.content +
                                         "\nIncorporate it and emit your final output now."});
        attempt = attempt_with_retries(spec, input, std::move(messages), ctx, recorder, call_index);
    }
    return attempt.parsed.artifact;
}

namespace {

void check_input(Role role, const StageInput& input) {
    std::vector<Violation> violations;
    const bool feedback_ok =
        input.revision_feedback.has_value() == (input.revision_index > 0);
    if (!feedback_ok) {
        violations.push_back({"revision_feedback", "FeedbackMismatch",
                              "revision_feedback must be present exactly when revision_index > 0"});
    }
    auto need = [&](bool present, const char* field) {
        if (!present) {
            violations.push_back({field, "MissingUpstream",
                                  to_string(role) + " stage requires this upstream artifact"});
        }
    };
    switch (role) {
        case Role::translation: break;
        case Role::interpretation:
            need(input.translation.has_value(), "translation");
            break;
        case Role::synthesis:
            need(input.translation.has_value(), "translation");
            need(input.adaptation.has_value(), "adaptation");
            break;
        case Role::evaluation:
            need(input.synthesized.has_value(), "synthesized");
            need(input.adaptation.has_value(), "adaptation");
            break;
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));
}

}  // namespace

StageArtifact StageRunner::run_stage(Role role, const StageInput& input,
                                     EventRecorder& recorder) const {
    check_input(role, input);
    const AgentSpec& spec = config_.agent(role);

    ParseContext ctx;
    if (role == Role::interpretation) ctx.annotated_input = &input.job.source_text();
    if (role == Role::synthesis) ctx.upstream_annotations = &input.adaptation->annotations();

    return run_internal(spec, input, {}, ctx, recorder);
}

EvaluationReport StageRunner::evaluate_with_search(const StageInput& input,
                                                   EventRecorder& recorder) const {
    check_input(Role::evaluation, input);
    const AgentSpec& spec = config_.agent(Role::evaluation);

    std::vector<SearchEvidence> evidence;
    const bool searchable = search_ != nullptr &&
                            search_->config().mode != SearchConfig::Mode::disabled;
    if (searchable) {
        constexpr std::size_t kMaxQueries = 3;
        std::size_t issued = 0;
        for (const Annotation& annotation : input.adaptation->annotations()) {
            if (issued >= kMaxQueries) break;
            if (annotation.decision() != AnnotationDecision::preserve &&
                annotation.decision() != AnnotationDecision::transliterate_with_clarifier) {
                continue;
            }
            const std::string query =
                annotation.source_span() + " " + domain_label(input.job.cultural_domain());
            const std::string correlation_id =
                "evaluation:" + std::to_string(input.revision_index) + ":tool" +
                std::to_string(issued);
            ++issued;
            try {
                evidence.push_back(
                    search_->search(query, recorder, correlation_id, Role::evaluation));
            } catch (const SearchError&) {
                // degrade: keep index alignment with an empty evidence entry
                SearchEvidence empty;
                empty.query = normalize_query(query);
                empty.fetched_at = now_utc_iso8601();
                empty.origin = EvidenceOrigin::live;
                evidence.push_back(std::move(empty));
            }
        }
    }

    ParseContext ctx;
    ctx.evidence = &evidence;
    StageArtifact artifact = run_internal(spec, input, evidence, ctx, recorder);
    return std::get<EvaluationReport>(std::move(artifact));
}

}  // namespace crewline
