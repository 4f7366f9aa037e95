#include "crewline/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>

namespace crewline {

namespace {

struct ParsedUrl {
    std::string origin;       // scheme://host[:port], what httplib::Client takes
    std::string path_prefix;  // optional mount prefix, no trailing slash
};

ParsedUrl split_base_url(const std::string& base_url) {
    ParsedUrl parsed;
    const std::size_t scheme_end = base_url.find("://");
    std::size_t path_start = std::string::npos;
    if (scheme_end != std::string::npos) {
        path_start = base_url.find('/', scheme_end + 3);
    }
    if (path_start == std::string::npos) {
        parsed.origin = base_url;
    } else {
        parsed.origin = base_url.substr(0, path_start);
        parsed.path_prefix = base_url.substr(path_start);
    }
    while (!parsed.path_prefix.empty() && parsed.path_prefix.back() == '/') {
        parsed.path_prefix.pop_back();
    }
    return parsed;
}

void validate_request(const ChatRequest& request) {
    std::vector<Violation> violations;
    if (request.messages.empty()) {
        violations.push_back({"messages", "EmptyMessages", "at least one message is required"});
    } else if (request.messages.front().role != ChatMessage::Role::system) {
        violations.push_back(
            {"messages[0].role", "BadFirstMessage", "the first message must be the system message"});
    }
    if (request.temperature < 0.0 || request.temperature > 2.0) {
        violations.push_back({"temperature", "OutOfRange", "temperature must be in [0, 2]"});
    }
    if (request.max_tokens <= 0) {
        violations.push_back({"max_tokens", "OutOfRange", "max_tokens must be positive"});
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));
}

json request_event_payload(const ChatRequest& request) {
    json messages = json::array();
    for (const ChatMessage& message : request.messages) {
        messages.push_back(json{{"role", to_string(message.role)}, {"content", message.content}});
    }
    return json{{"correlation_id", request.correlation_id},
                {"script_key", request.script_key},
                {"model", request.model},
                {"temperature", request.temperature},
                {"max_tokens", request.max_tokens},
                {"messages", std::move(messages)}};
}

}  // namespace

std::string to_string(ChatMessage::Role role) {
    switch (role) {
        case ChatMessage::Role::system: return "system";
        case ChatMessage::Role::user: return "user";
        case ChatMessage::Role::assistant: return "assistant";
    }
    return "?";
}

LlmGateway::LlmGateway(BackendConfig config) : config_(std::move(config)) {}

std::string LlmGateway::effective_model() const {
    if (!config_.model.empty()) return config_.model;
    return config_.kind == BackendConfig::Kind::scripted ? "scripted" : "unknown";
}

json LlmGateway::build_wire_body(const ChatRequest& request, const std::string& model) {
    json messages = json::array();
    for (const ChatMessage& message : request.messages) {
        messages.push_back(json{{"content", message.content}, {"role", to_string(message.role)}});
    }
    // Keys sort alphabetically in the dump; temperature is always emitted, even at 0.
    return json{{"max_tokens", request.max_tokens},
                {"messages", std::move(messages)},
                {"model", model},
                {"temperature", request.temperature}};
}

ChatResponse LlmGateway::chat_scripted(const ChatRequest& request) const {
    auto it = config_.script.find(request.script_key);
    if (it == config_.script.end()) {
        throw GatewayError(GatewayError::Kind::script_miss,
                           "scripted backend has no entry for key '" + request.script_key + "'");
    }
    ChatResponse response;
    response.content = it->second;
    response.model = request.model;
    response.latency_ms = 0;
    response.correlation_id = request.correlation_id;
    return response;
}

ChatResponse LlmGateway::chat_http(const ChatRequest& request) const {
    const ParsedUrl url = split_base_url(config_.base_url);
    httplib::Client client(url.origin);
    const time_t timeout_s = config_.timeout_ms / 1000;
    const time_t timeout_us = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);

    httplib::Headers headers;
    if (const char* key = std::getenv("CREWLINE_API_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const std::string body = build_wire_body(request, config_.model).dump();
    const auto started = std::chrono::steady_clock::now();
    httplib::Result result =
        client.Post(url.path_prefix + "/v1/chat/completions", headers, body, "application/json");
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();

    if (!result) {
        const httplib::Error err = result.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               err == httplib::Error::Read || err == httplib::Error::Write;
        if (timed_out) {
            throw GatewayError(GatewayError::Kind::timeout,
                               "request timed out after " + std::to_string(elapsed) + "ms (" +
                                   httplib::to_string(err) + ")");
        }
        throw GatewayError(GatewayError::Kind::upstream,
                           "transport failure: " + httplib::to_string(err));
    }
    if (result->status < 200 || result->status >= 300) {
        throw GatewayError(GatewayError::Kind::upstream,
                           "upstream returned HTTP " + std::to_string(result->status),
                           result->status, result->body);
    }

    json doc;
    try {
        doc = json::parse(result->body);
    } catch (const json::parse_error& err) {
        throw GatewayError(GatewayError::Kind::upstream,
                           std::string("unparseable completion body: ") + err.what(), result->status,
                           result->body);
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
        !doc["choices"][0].contains("message") ||
        !doc["choices"][0]["message"].contains("content")) {
        throw GatewayError(GatewayError::Kind::upstream,
                           "completion body lacks choices[0].message.content", result->status,
                           result->body);
    }

    ChatResponse response;
    response.content = doc["choices"][0]["message"]["content"].get<std::string>();
    response.model = doc.value("model", config_.model);
    response.latency_ms = static_cast<std::uint64_t>(elapsed);
    response.correlation_id = request.correlation_id;
    return response;
}

ChatResponse LlmGateway::chat(const ChatRequest& request, EventRecorder& recorder) const {
    validate_request(request);
    recorder.emit(EventKind::llm_request, request.stage, request_event_payload(request));
    try {
        ChatResponse response = config_.kind == BackendConfig::Kind::scripted
                                    ? chat_scripted(request)
                                    : chat_http(request);
        recorder.emit(EventKind::llm_response, request.stage,
                      json{{"correlation_id", response.correlation_id},
                           {"script_key", request.script_key},
                           {"model", response.model},
                           {"content", response.content},
                           {"latency_ms", response.latency_ms}});
        return response;
    } catch (const GatewayError& err) {
        recorder.emit(EventKind::llm_response, request.stage,
                      json{{"correlation_id", request.correlation_id},
                           {"script_key", request.script_key},
                           {"error", json{{"kind", err.kind == GatewayError::Kind::timeout
                                                       ? "timeout"
                                                       : err.kind == GatewayError::Kind::upstream
                                                             ? "upstream"
                                                             : "script_miss"},
                                          {"message", err.what()}}}});
        throw;
    }
}

}  // namespace crewline
