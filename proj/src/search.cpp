#include "crewline/search.hpp"

#include "crewline/util.hpp"

#include <httplib.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace crewline {

namespace {

constexpr std::size_t kSlugMaxLength = 100;
constexpr std::size_t kSnippetMaxLength = 500;

std::string strip_tags(const std::string& html) {
    std::string out;
    out.reserve(html.size());
    bool in_tag = false;
    for (char c : html) {
        if (c == '<') {
            in_tag = true;
        } else if (c == '>') {
            in_tag = false;
        } else if (!in_tag) {
            out.push_back(c);
        }
    }
    return out;
}

std::string decode_entities(std::string text) {
    static const std::pair<const char*, const char*> entities[] = {
        {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""},
        {"&#39;", "'"}, {"&#x27;", "'"}, {"&nbsp;", " "},
    };
    for (const auto& [from, to] : entities) {
        std::size_t pos = 0;
        while ((pos = text.find(from, pos)) != std::string::npos) {
            text.replace(pos, std::strlen(from), to);
            pos += std::strlen(to);
        }
    }
    return text;
}

std::string clean_text(const std::string& html) {
    return collapse_whitespace(decode_entities(strip_tags(html)));
}

std::string truncate_snippet(std::string text) {
    if (text.size() > kSnippetMaxLength) text.resize(kSnippetMaxLength);
    return text;
}

// Extracts the quoted value of an attribute from a tag's attribute text.
std::string attribute_value(const std::string& tag, const std::string& name) {
    const std::size_t at = tag.find(name + "=\"");
    if (at == std::string::npos) return {};
    const std::size_t begin = at + name.size() + 2;
    const std::size_t end = tag.find('"', begin);
    if (end == std::string::npos) return {};
    return tag.substr(begin, end - begin);
}

struct Anchor {
    std::string href;
    std::string cls;
    std::string inner;
    std::size_t pos = 0;
};

std::vector<Anchor> collect_anchors(const std::string& html) {
    std::vector<Anchor> anchors;
    std::size_t pos = 0;
    while (true) {
        const std::size_t open = html.find("<a", pos);
        if (open == std::string::npos) break;
        const std::size_t tag_end = html.find('>', open);
        if (tag_end == std::string::npos) break;
        const std::size_t close = html.find("</a>", tag_end);
        if (close == std::string::npos) break;
        const std::string tag = html.substr(open, tag_end - open);
        Anchor anchor;
        anchor.href = attribute_value(tag, "href");
        anchor.cls = attribute_value(tag, "class");
        anchor.inner = html.substr(tag_end + 1, close - tag_end - 1);
        anchor.pos = open;
        anchors.push_back(std::move(anchor));
        pos = close + 4;
    }
    return anchors;
}

}  // namespace

std::string slug(const std::string& query) {
    std::string out;
    out.reserve(query.size());
    bool pending_dash = false;
    for (unsigned char c : query) {
        if (std::isalnum(c)) {
            if (pending_dash && !out.empty()) out.push_back('-');
            pending_dash = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_dash = true;
        }
    }
    if (out.size() > kSlugMaxLength) out.resize(kSlugMaxLength);
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

std::string normalize_query(const std::string& query) {
    return collapse_whitespace(query);
}

std::vector<SearchResult> SearchTool::extract_results(const std::string& html, int max_results) {
    std::vector<SearchResult> results;
    const std::vector<Anchor> anchors = collect_anchors(html);

    // Preferred shape: result__a title anchors paired with result__snippet blocks.
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const Anchor& anchor = anchors[i];
        if (anchor.cls.find("result__a") == std::string::npos) continue;
        SearchResult result;
        result.title = clean_text(anchor.inner);
        result.url = decode_entities(anchor.href);
        for (std::size_t j = i + 1; j < anchors.size(); ++j) {
            if (anchors[j].cls.find("result__snippet") != std::string::npos) {
                result.snippet = truncate_snippet(clean_text(anchors[j].inner));
                break;
            }
            if (anchors[j].cls.find("result__a") != std::string::npos) break;
        }
        if (!result.title.empty() && !result.url.empty()) results.push_back(std::move(result));
        if (results.size() >= static_cast<std::size_t>(max_results)) return results;
    }
    if (!results.empty()) return results;

    // Fallback: any external anchor; snippet from the text that follows it.
    for (const Anchor& anchor : anchors) {
        if (anchor.href.rfind("http", 0) != 0) continue;
        SearchResult result;
        result.title = clean_text(anchor.inner);
        result.url = decode_entities(anchor.href);
        if (result.title.empty()) continue;
        results.push_back(std::move(result));
        if (results.size() >= static_cast<std::size_t>(max_results)) break;
    }
    return results;
}

SearchTool::SearchTool(SearchConfig config) : config_(std::move(config)) {
    if (config_.mode == SearchConfig::Mode::fixture &&
        !std::filesystem::is_directory(config_.fixture_dir)) {
        throw ValidationError("search.fixture_dir", "MissingDir",
                              "fixture directory does not exist: " + config_.fixture_dir);
    }
    clock_ = [] { return std::chrono::steady_clock::now(); };
    fetcher_ = [](const std::string& endpoint, const std::string& query) {
        const std::size_t scheme_end = endpoint.find("://");
        std::size_t path_start =
            scheme_end == std::string::npos ? std::string::npos : endpoint.find('/', scheme_end + 3);
        const std::string origin =
            path_start == std::string::npos ? endpoint : endpoint.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
        httplib::Client client(origin);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(10, 0);
        client.set_follow_location(true);
        httplib::Result result = client.Get(path, httplib::Params{{"q", query}}, httplib::Headers{});
        if (!result) {
            throw SearchError(SearchError::Kind::upstream,
                              "search fetch failed: " + httplib::to_string(result.error()));
        }
        if (result->status < 200 || result->status >= 300) {
            throw SearchError(SearchError::Kind::upstream,
                              "search endpoint returned HTTP " + std::to_string(result->status));
        }
        return result->body;
    };
}

std::unique_ptr<SearchTool> SearchTool::replay(
    std::map<std::string, std::vector<SearchEvidence>> recorded) {
    SearchConfig config;
    config.mode = SearchConfig::Mode::fixture;
    config.fixture_dir = ".";
    auto tool = std::make_unique<SearchTool>(std::move(config));
    tool->replay_mode_ = true;
    tool->replay_evidence_ = std::move(recorded);
    return tool;
}

SearchTool::Fetched SearchTool::fetch_fixture(const std::string& normalized) {
    Fetched fetched;
    fetched.origin = EvidenceOrigin::fixture;
    fetched.fetched_at = now_utc_iso8601();
    const std::filesystem::path path =
        std::filesystem::path(config_.fixture_dir) / (slug(normalized) + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fetched.warning = "fixture miss: " + path.string();
        return fetched;
    }
    try {
        json doc = json::parse(in);
        for (const auto& entry : doc.at("results")) {
            SearchResult result;
            result.title = clean_text(entry.value("title", ""));
            result.snippet = truncate_snippet(clean_text(entry.value("snippet", "")));
            result.url = entry.value("url", "");
            fetched.results.push_back(std::move(result));
            if (fetched.results.size() >= static_cast<std::size_t>(config_.max_results)) break;
        }
    } catch (const json::exception& err) {
        fetched.results.clear();
        fetched.warning = std::string("fixture unreadable: ") + err.what();
    }
    return fetched;
}

SearchTool::Fetched SearchTool::fetch_live(const std::string& normalized) {
    Fetched fetched;
    fetched.origin = EvidenceOrigin::live;
    fetched.fetched_at = now_utc_iso8601();
    std::string body;
    try {
        body = fetcher_(config_.endpoint, normalized);
    } catch (const std::exception&) {
        // one retry on transient failure
        try {
            body = fetcher_(config_.endpoint, normalized);
        } catch (const std::exception& err) {
            throw SearchError(SearchError::Kind::upstream,
                              std::string("live search failed after retry: ") + err.what());
        }
    }
    fetched.results = extract_results(body, config_.max_results);
    if (fetched.results.empty() && !body.empty()) {
        fetched.warning = "no results extracted from response";
    }
    return fetched;
}

SearchTool::Fetched SearchTool::fetch(const std::string& normalized) {
    return config_.mode == SearchConfig::Mode::fixture ? fetch_fixture(normalized)
                                                       : fetch_live(normalized);
}

SearchEvidence SearchTool::search(const std::string& query, EventRecorder& recorder,
                                  const std::string& correlation_id, std::optional<Role> stage) {
    if (config_.mode == SearchConfig::Mode::disabled) {
        throw SearchError(SearchError::Kind::disabled, "search tool is disabled");
    }
    const std::string normalized = normalize_query(query);
    recorder.emit(EventKind::tool_call, stage,
                  json{{"correlation_id", correlation_id}, {"query", normalized}});

    if (replay_mode_) {
        auto it = replay_evidence_.find(normalized);
        std::size_t& cursor = replay_cursor_[normalized];
        SearchEvidence evidence;
        evidence.query = normalized;
        evidence.fetched_at = now_utc_iso8601();
        std::string warning;
        if (it == replay_evidence_.end() || cursor >= it->second.size()) {
            warning = "replay: no recorded evidence for query";
        } else {
            evidence = it->second[cursor++];
        }
        json payload{{"correlation_id", correlation_id},
                     {"query", normalized},
                     {"evidence", evidence.to_json()}};
        if (!warning.empty()) payload["warning"] = warning;
        recorder.emit(EventKind::tool_result, stage, std::move(payload));
        return evidence;
    }

    bool shared_inflight = false;
    std::shared_future<Fetched> future;
    bool is_cache_hit = false;
    {
        std::unique_lock<std::mutex> lock(mutex_);
        auto it = cache_.find(normalized);
        if (it != cache_.end()) {
            if (!it->second.ready) {
                future = it->second.future;
                shared_inflight = true;
            } else if (clock_() < it->second.expires_at) {
                future = it->second.future;
                is_cache_hit = true;
            } else {
                cache_.erase(it);
            }
        }
        if (!future.valid()) {
            std::promise<Fetched> promise;
            CacheSlot slot;
            slot.future = promise.get_future().share();
            future = slot.future;
            cache_.emplace(normalized, std::move(slot));
            lock.unlock();

            try {
                Fetched fetched = fetch(normalized);
                promise.set_value(std::move(fetched));
                lock.lock();
                auto slot_it = cache_.find(normalized);
                if (slot_it != cache_.end()) {
                    slot_it->second.ready = true;
                    slot_it->second.expires_at = clock_() + std::chrono::seconds(config_.ttl_seconds);
                }
            } catch (...) {
                promise.set_exception(std::current_exception());
                lock.lock();
                cache_.erase(normalized);
            }
        }
    }

    Fetched fetched;
    try {
        fetched = future.get();
    } catch (const SearchError&) {
        recorder.emit(EventKind::tool_result, stage,
                      json{{"correlation_id", correlation_id},
                           {"query", normalized},
                           {"warning", "upstream failure"}});
        throw;
    }

    SearchEvidence evidence;
    evidence.query = normalized;
    evidence.results = fetched.results;
    evidence.fetched_at = fetched.fetched_at;
    evidence.origin = is_cache_hit ? EvidenceOrigin::cache : fetched.origin;
    (void)shared_inflight;  // coalesced waiters report the fetch's own origin

    json payload{{"correlation_id", correlation_id},
                 {"query", normalized},
                 {"evidence", evidence.to_json()}};
    if (!fetched.warning.empty()) payload["warning"] = fetched.warning;
    recorder.emit(EventKind::tool_result, stage, std::move(payload));
    return evidence;
}

}  // namespace crewline
