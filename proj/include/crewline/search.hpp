#pragma once

#include "crewline/config.hpp"
#include "crewline/domain.hpp"

#include <chrono>
#include <memory>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace crewline {

class SearchError : public std::runtime_error {
public:
    enum class Kind { disabled, upstream };

    SearchError(Kind kind, std::string message)
        : std::runtime_error(std::move(message)), kind(kind) {}

    Kind kind;
};

// Filename-safe key: lowercase, non-alphanumeric runs collapse to a single "-",
// boundary runs dropped, truncated to 100 chars (dash-trimmed). Idempotent.
std::string slug(const std::string& query);

// Cache key: trimmed, inner whitespace runs collapsed to single spaces.
std::string normalize_query(const std::string& query);

// External validation tool. Caches by normalized query with a TTL and coalesces
// concurrent identical queries into one upstream fetch.
class SearchTool {
public:
    // Returns the raw response body for a live query; throws on transport failure.
    using Fetcher = std::function<std::string(const std::string& endpoint, const std::string& query)>;
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit SearchTool(SearchConfig config);

    // Replay tool: serves recorded evidence verbatim, per query, in recorded order.
    static std::unique_ptr<SearchTool> replay(
        std::map<std::string, std::vector<SearchEvidence>> recorded);

    SearchEvidence search(const std::string& query, EventRecorder& recorder,
                          const std::string& correlation_id,
                          std::optional<Role> stage = std::nullopt);

    const SearchConfig& config() const { return config_; }

    // Test seams.
    void set_fetcher(Fetcher fetcher) { fetcher_ = std::move(fetcher); }
    void set_clock(Clock clock) { clock_ = std::move(clock); }

    // Parses a results page into (title, snippet, url) triples; tolerant of
    // markup drift, returns what it can.
    static std::vector<SearchResult> extract_results(const std::string& html, int max_results);

private:
    struct Fetched {
        std::vector<SearchResult> results;
        std::string fetched_at;
        EvidenceOrigin origin = EvidenceOrigin::fixture;
        std::string warning;  // empty when clean
    };

    struct CacheSlot {
        std::shared_future<Fetched> future;
        std::chrono::steady_clock::time_point expires_at{};
        bool ready = false;
    };

    Fetched fetch(const std::string& normalized);
    Fetched fetch_fixture(const std::string& normalized);
    Fetched fetch_live(const std::string& normalized);

    SearchConfig config_;
    Fetcher fetcher_;
    Clock clock_;

    std::mutex mutex_;
    std::map<std::string, CacheSlot> cache_;

    bool replay_mode_ = false;
    std::map<std::string, std::vector<SearchEvidence>> replay_evidence_;
    std::map<std::string, std::size_t> replay_cursor_;
};

}  // namespace crewline
