#pragma once

#include "crewline/config.hpp"
#include "crewline/domain.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace crewline {

class StoreError : public std::runtime_error {
public:
    enum class Kind { seq_gap, io };

    StoreError(Kind kind, std::string message)
        : std::runtime_error(std::move(message)), kind(kind) {}

    Kind kind;
};

class ReplayError : public std::runtime_error {
public:
    enum class Kind { digest_mismatch, divergence };

    ReplayError(Kind kind, std::string message, std::uint64_t seq = 0)
        : std::runtime_error(std::move(message)), kind(kind), seq(seq) {}

    Kind kind;
    std::uint64_t seq;  // first diverging seq for divergence errors
};

// Append-only persistence: <out_dir>/<job_id>.events holds one event per line,
// <out_dir>/<job_id>.transcript is the finalized single-document record.
// All text is normalized to Unicode NFC on ingestion.
class TranscriptStore {
public:
    explicit TranscriptStore(std::filesystem::path out_dir);

    class Writer : public EventSink {
    public:
        // Appends one event; seq must be exactly last_seq + 1.
        void append(const Event& event);
        void on_event(const Event& event) override { append(event); }

        // Writes the finalized transcript document.
        void finalize(const FinalRecord& final);

        std::uint64_t last_seq() const { return last_seq_; }
        const std::filesystem::path& events_path() const { return events_path_; }
        const std::filesystem::path& transcript_path() const { return transcript_path_; }

    private:
        friend class TranscriptStore;
        Writer() = default;

        json job_doc_;
        std::string config_digest_;
        std::filesystem::path events_path_;
        std::filesystem::path transcript_path_;
        std::ofstream out_;
        std::uint64_t last_seq_ = 0;
    };

    // Opens the event log for a run. Reopening after a crash truncates any
    // partial trailing record and resumes from the last valid seq.
    Writer open_writer(const TranslationJob& job, const std::string& config_digest,
                       std::vector<std::string>* warnings = nullptr);

    Transcript load(const std::string& job_id, std::vector<std::string>* warnings = nullptr) const;

    // Loads from an explicit .transcript path (events file sits next to it).
    static Transcript load_file(const std::filesystem::path& transcript_path,
                                std::vector<std::string>* warnings = nullptr);

    const std::filesystem::path& out_dir() const { return out_dir_; }

private:
    std::filesystem::path out_dir_;
};

// Re-runs an accepted transcript against a backend and search tool
// reconstructed from its own events; verifies the event stream and the final
// text reproduce exactly (timestamps and latencies excluded).
SynthesizedText replay(const Transcript& transcript, const CrewConfig& config);

struct DiffReport {
    struct FieldDiff {
        std::string name;
        std::string a;
        std::string b;
        friend bool operator==(const FieldDiff&, const FieldDiff&) = default;
    };

    std::vector<FieldDiff> fields;              // status, revision_count, stage_trace
    std::vector<std::string> final_text_only_a;  // line diff
    std::vector<std::string> final_text_only_b;
    std::vector<std::string> preserve_only_a;    // preserve-term symmetric difference
    std::vector<std::string> preserve_only_b;
    std::vector<std::string> issues_only_a;
    std::vector<std::string> issues_only_b;

    bool identical() const;
    std::string to_text() const;
    json to_json() const;
};

DiffReport diff_transcripts(const Transcript& a, const Transcript& b);

}  // namespace crewline
