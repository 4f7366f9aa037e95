#include "crewline/transcript_store.hpp"

#include "crewline/gateway.hpp"
#include "crewline/orchestrator.hpp"
#include "crewline/search.hpp"
#include "crewline/util.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace crewline {

namespace {

json nfc_json(const json& value) {
    switch (value.type()) {
        case json::value_t::string:
            return json(nfc_normalize(value.get_ref<const std::string&>()));
        case json::value_t::object: {
            json out = json::object();
            for (const auto& [key, entry] : value.items()) {
                out[nfc_normalize(key)] = nfc_json(entry);
            }
            return out;
        }
        case json::value_t::array: {
            json out = json::array();
            for (const auto& entry : value) out.push_back(nfc_json(entry));
            return out;
        }
        default:
            return value;
    }
}

Event nfc_event(const Event& event) {
    Event out = event;
    out.payload = nfc_json(event.payload);
    out.at = nfc_normalize(event.at);
    return out;
}

// Event identity for replay comparison: seq, kind, stage, payload minus latency.
json replay_view(const Event& event) {
    json payload = event.payload;
    if (payload.is_object()) payload.erase("latency_ms");
    json doc{{"seq", event.seq}, {"kind", to_string(event.kind)}, {"payload", std::move(payload)}};
    doc["stage"] = event.stage ? json(to_string(*event.stage)) : json(nullptr);
    return doc;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

// ---------------------------------------------------------------------------
// TranscriptStore
// ---------------------------------------------------------------------------

TranscriptStore::TranscriptStore(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec) {
        throw StoreError(StoreError::Kind::io,
                         "cannot create output directory " + out_dir_.string() + ": " + ec.message());
    }
}

TranscriptStore::Writer TranscriptStore::open_writer(const TranslationJob& job,
                                                     const std::string& config_digest,
                                                     std::vector<std::string>* warnings) {
    Writer writer;
    writer.job_doc_ = nfc_json(job.to_json());
    writer.config_digest_ = config_digest;
    writer.events_path_ = out_dir_ / (job.job_id() + ".events");
    writer.transcript_path_ = out_dir_ / (job.job_id() + ".transcript");

    // A pre-existing log means a crashed run: keep the valid prefix, drop any
    // partial trailing record, and resume the sequence.
    if (std::filesystem::exists(writer.events_path_)) {
        std::ifstream in(writer.events_path_, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        const std::string content = buffer.str();
        in.close();

        std::string valid_prefix;
        std::uint64_t last_seq = 0;
        std::size_t line_start = 0;
        while (line_start < content.size()) {
            const std::size_t newline = content.find('\n', line_start);
            if (newline == std::string::npos) {
                if (warnings) {
                    warnings->push_back("dropped partial trailing record in " +
                                        writer.events_path_.string());
                }
                break;
            }
            const std::string line = content.substr(line_start, newline - line_start);
            json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
            if (doc.is_discarded()) {
                if (warnings) {
                    warnings->push_back("dropped unparseable trailing record in " +
                                        writer.events_path_.string());
                }
                break;
            }
            last_seq = Event::from_json(doc).seq;
            valid_prefix.append(content, line_start, newline - line_start + 1);
            line_start = newline + 1;
        }
        std::ofstream rewrite(writer.events_path_, std::ios::binary | std::ios::trunc);
        rewrite << valid_prefix;
        rewrite.close();
        writer.last_seq_ = last_seq;
    }

    writer.out_.open(writer.events_path_, std::ios::binary | std::ios::app);
    if (!writer.out_) {
        throw StoreError(StoreError::Kind::io, "cannot open " + writer.events_path_.string());
    }
    return writer;
}

void TranscriptStore::Writer::append(const Event& event) {
    if (event.seq != last_seq_ + 1) {
        throw StoreError(StoreError::Kind::seq_gap,
                         "non-consecutive seq " + std::to_string(event.seq) + " after " +
                             std::to_string(last_seq_));
    }
    out_ << nfc_event(event).to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw StoreError(StoreError::Kind::io, "write failed: " + events_path_.string());
    last_seq_ = event.seq;
}

void TranscriptStore::Writer::finalize(const FinalRecord& final) {
    json doc{{"job", job_doc_},
             {"config_digest", config_digest_},
             {"event_count", last_seq_},
             {"final", nfc_json(final.to_json())}};
    std::ofstream out(transcript_path_, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StoreError(StoreError::Kind::io, "cannot open " + transcript_path_.string());
    }
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out) throw StoreError(StoreError::Kind::io, "write failed: " + transcript_path_.string());
}

Transcript TranscriptStore::load(const std::string& job_id,
                                 std::vector<std::string>* warnings) const {
    return load_file(out_dir_ / (job_id + ".transcript"), warnings);
}

Transcript TranscriptStore::load_file(const std::filesystem::path& transcript_path,
                                      std::vector<std::string>* warnings) {
    std::ifstream in(transcript_path, std::ios::binary);
    if (!in) {
        throw StoreError(StoreError::Kind::io, "cannot open " + transcript_path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& err) {
        throw StoreError(StoreError::Kind::io,
                         transcript_path.string() + ": unparseable transcript: " + err.what());
    }
    doc = nfc_json(doc);

    std::filesystem::path events_path = transcript_path;
    events_path.replace_extension(".events");
    std::ifstream events_in(events_path, std::ios::binary);
    if (!events_in) {
        throw StoreError(StoreError::Kind::io, "cannot open " + events_path.string());
    }
    std::ostringstream buffer;
    buffer << events_in.rdbuf();
    const std::string content = buffer.str();

    Transcript transcript(TranslationJob::from_json(doc.at("job")),
                          doc.at("config_digest").get<std::string>());
    if (doc.contains("final") && !doc["final"].is_null()) {
        transcript.final = FinalRecord::from_json(doc["final"]);
    }

    const std::vector<std::string> lines = split_lines(content);
    const bool ends_with_newline = !content.empty() && content.back() == '\n';
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json event_doc = json::parse(lines[i], nullptr, /*allow_exceptions=*/false);
        const bool last = i + 1 == lines.size();
        if (event_doc.is_discarded()) {
            if (last) {
                if (warnings) {
                    warnings->push_back("dropped partial trailing record in " +
                                        events_path.string());
                }
                break;
            }
            throw StoreError(StoreError::Kind::io,
                             events_path.string() + ": corrupt record at line " +
                                 std::to_string(i + 1));
        }
        if (last && !ends_with_newline) {
            // A complete JSON line without its newline still counts as partial.
            if (warnings) {
                warnings->push_back("dropped partial trailing record in " + events_path.string());
            }
            break;
        }
        Event event = Event::from_json(nfc_json(event_doc));
        if (event.seq != transcript.events.size() + 1) {
            throw StoreError(StoreError::Kind::io,
                             events_path.string() + ": seq " + std::to_string(event.seq) +
                                 " out of order at line " + std::to_string(i + 1));
        }
        transcript.events.push_back(std::move(event));
    }
    return transcript;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

namespace {

class ComparingSink : public EventSink {
public:
    explicit ComparingSink(const std::vector<Event>& expected) : expected_(expected) {}

    void on_event(const Event& event) override {
        if (index_ >= expected_.size()) {
            throw ReplayError(ReplayError::Kind::divergence,
                              "replay emitted an extra event at seq " + std::to_string(event.seq),
                              event.seq);
        }
        const Event& expected = expected_[index_++];
        if (replay_view(event) != replay_view(expected)) {
            throw ReplayError(ReplayError::Kind::divergence,
                              "replay diverged at seq " + std::to_string(expected.seq) +
                                  ": expected " + replay_view(expected).dump() + ", got " +
                                  replay_view(event).dump(),
                              expected.seq);
        }
    }

    std::size_t consumed() const { return index_; }

private:
    const std::vector<Event>& expected_;
    std::size_t index_ = 0;
};

}  // namespace

SynthesizedText replay(const Transcript& transcript, const CrewConfig& config) {
    if (!transcript.final || transcript.final->status != RunStatus::accepted) {
        throw ValidationError("final.status", "NotAccepted",
                              "replay requires a finalized transcript with status=accepted");
    }
    if (digest_config(config) != transcript.config_digest) {
        throw ReplayError(ReplayError::Kind::digest_mismatch,
                          "config digest " + digest_config(config) +
                              " does not match transcript digest " + transcript.config_digest);
    }

    // Scripted backend reconstructed from the recorded responses.
    BackendConfig backend;
    backend.kind = BackendConfig::Kind::scripted;
    backend.model = config.backend().model;
    backend.timeout_ms = config.backend().timeout_ms;
    std::map<std::string, std::vector<SearchEvidence>> recorded_evidence;
    for (const Event& event : transcript.events) {
        if (event.kind == EventKind::llm_response && event.payload.contains("content")) {
            backend.script[event.payload.at("script_key").get<std::string>()] =
                event.payload.at("content").get<std::string>();
        }
        if (event.kind == EventKind::tool_result && event.payload.contains("evidence")) {
            SearchEvidence evidence = SearchEvidence::from_json(event.payload.at("evidence"));
            recorded_evidence[evidence.query].push_back(std::move(evidence));
        }
    }
    const LlmGateway gateway{backend};

    std::unique_ptr<SearchTool> search;
    if (config.search().mode != SearchConfig::Mode::disabled) {
        search = SearchTool::replay(std::move(recorded_evidence));
    }

    ComparingSink comparator(transcript.events);
    EventRecorder recorder;
    recorder.add_sink(comparator);

    Transcript replayed = run_pipeline(transcript.job, config, gateway, search.get(), recorder);

    if (comparator.consumed() != transcript.events.size()) {
        const std::uint64_t missing_seq = transcript.events[comparator.consumed()].seq;
        throw ReplayError(ReplayError::Kind::divergence,
                          "replay ended early; no event produced for seq " +
                              std::to_string(missing_seq),
                          missing_seq);
    }
    if (!replayed.final || replayed.final->status != RunStatus::accepted ||
        !replayed.final->output) {
        throw ReplayError(ReplayError::Kind::divergence,
                          "replay did not reach an accepted output");
    }
    const std::string& original = transcript.final->output->final_text();
    const std::string& reproduced = replayed.final->output->final_text();
    if (original != reproduced) {
        throw ReplayError(ReplayError::Kind::divergence,
                          "final text differs: expected \"" + original + "\", got \"" +
                              reproduced + "\"");
    }
    return *replayed.final->output;
}

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

namespace {

// Lines unique to each side, via a longest-common-subsequence walk.
void line_diff(const std::vector<std::string>& a, const std::vector<std::string>& b,
               std::vector<std::string>& only_a, std::vector<std::string>& only_b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> lcs(n + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
                                     : std::max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        if (a[i] == b[j]) {
            ++i, ++j;
        } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
            only_a.push_back(a[i++]);
        } else {
            only_b.push_back(b[j++]);
        }
    }
    for (; i < n; ++i) only_a.push_back(a[i]);
    for (; j < m; ++j) only_b.push_back(b[j]);
}

std::string status_text(const Transcript& t) {
    return t.final ? to_string(t.final->status) : "(not finalized)";
}

std::string trace_text(const Transcript& t) {
    std::string out;
    for (Role role : t.stage_trace()) {
        if (!out.empty()) out.push_back(' ');
        out.push_back(static_cast<char>(std::toupper(to_string(role)[0])));
    }
    return out.empty() ? "(empty)" : out;
}

std::multiset<std::string> preserve_terms(const Transcript& t) {
    std::multiset<std::string> terms;
    if (t.final && t.final->output) {
        for (const Annotation& annotation : t.final->output->applied_annotations()) {
            if (annotation.decision() == AnnotationDecision::preserve) {
                terms.insert(annotation.source_span());
            }
        }
    }
    return terms;
}

std::multiset<std::string> issue_lines(const Transcript& t) {
    std::multiset<std::string> lines;
    if (t.final && t.final->report) {
        for (const Issue& issue : t.final->report->issues()) {
            lines.insert("[" + to_string(issue.category) + "/" + to_string(issue.severity) + "] " +
                         to_string(issue.responsible) + ": " + issue.description);
        }
    }
    return lines;
}

void multiset_diff(const std::multiset<std::string>& a, const std::multiset<std::string>& b,
                   std::vector<std::string>& only_a, std::vector<std::string>& only_b) {
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
}

}  // namespace

bool DiffReport::identical() const {
    return fields.empty() && final_text_only_a.empty() && final_text_only_b.empty() &&
           preserve_only_a.empty() && preserve_only_b.empty() && issues_only_a.empty() &&
           issues_only_b.empty();
}

DiffReport diff_transcripts(const Transcript& a, const Transcript& b) {
    DiffReport report;

    auto field = [&](const std::string& name, const std::string& va, const std::string& vb) {
        if (va != vb) report.fields.push_back({name, va, vb});
    };
    field("status", status_text(a), status_text(b));
    field("revision_count", std::to_string(a.revision_count()), std::to_string(b.revision_count()));
    field("stage_trace", trace_text(a), trace_text(b));

    const std::string text_a =
        a.final && a.final->output ? a.final->output->final_text() : std::string{};
    const std::string text_b =
        b.final && b.final->output ? b.final->output->final_text() : std::string{};
    if (text_a != text_b) {
        line_diff(split_lines(text_a), split_lines(text_b), report.final_text_only_a,
                  report.final_text_only_b);
        if (report.final_text_only_a.empty() && report.final_text_only_b.empty()) {
            // Same line multiset, different layout; surface it anyway.
            report.fields.push_back({"final_text", text_a, text_b});
        }
    }

    multiset_diff(preserve_terms(a), preserve_terms(b), report.preserve_only_a,
                  report.preserve_only_b);
    multiset_diff(issue_lines(a), issue_lines(b), report.issues_only_a, report.issues_only_b);
    return report;
}

std::string DiffReport::to_text() const {
    if (identical()) return "NO DIFFERENCES\n";
    std::ostringstream oss;
    for (const FieldDiff& diff : fields) {
        oss << diff.name << ":\n  a: " << diff.a << "\n  b: " << diff.b << "\n";
    }
    auto section = [&](const char* name, const std::vector<std::string>& only_a,
                       const std::vector<std::string>& only_b) {
        if (only_a.empty() && only_b.empty()) return;
        oss << name << ":\n";
        for (const std::string& line : only_a) oss << "  - " << line << "\n";
        for (const std::string& line : only_b) oss << "  + " << line << "\n";
    };
    section("final_text", final_text_only_a, final_text_only_b);
    section("preserve_terms", preserve_only_a, preserve_only_b);
    section("issues", issues_only_a, issues_only_b);
    return oss.str();
}

json DiffReport::to_json() const {
    json fields_doc = json::array();
    for (const FieldDiff& diff : fields) {
        fields_doc.push_back(json{{"name", diff.name}, {"a", diff.a}, {"b", diff.b}});
    }
    return json{{"identical", identical()},
                {"fields", std::move(fields_doc)},
                {"final_text", json{{"only_a", final_text_only_a}, {"only_b", final_text_only_b}}},
                {"preserve_terms", json{{"only_a", preserve_only_a}, {"only_b", preserve_only_b}}},
                {"issues", json{{"only_a", issues_only_a}, {"only_b", issues_only_b}}}};
}

}  // namespace crewline
