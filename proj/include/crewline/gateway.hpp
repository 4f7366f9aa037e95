#pragma once

#include "crewline/config.hpp"
#include "crewline/domain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace crewline {

struct ChatMessage {
    enum class Role { system, user, assistant };

    Role role = Role::user;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

std::string to_string(ChatMessage::Role role);

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;  // nonempty; first message is the system message
    double temperature = 0.3;
    int max_tokens = 1024;
    std::string correlation_id;
    // "<stage>:<revision_index>:<call_index>". Resolves the scripted backend and
    // keys llm_request/llm_response events for replay.
    std::string script_key;
    std::optional<Role> stage;  // event attribution
};

struct ChatResponse {
    std::string content;
    std::string model;
    std::uint64_t latency_ms = 0;
    std::string correlation_id;
};

class GatewayError : public std::runtime_error {
public:
    enum class Kind { timeout, upstream, script_miss };

    GatewayError(Kind kind, std::string message, int status = 0, std::string body = {})
        : std::runtime_error(std::move(message)), kind(kind), status(status),
          body(std::move(body)) {}

    Kind kind;
    int status;        // HTTP status for upstream errors, 0 otherwise
    std::string body;  // captured response body for upstream errors
};

// Uniform chat-completion interface over an OpenAI-compatible HTTP endpoint and
// a deterministic scripted backend. Stateless per call; safe to share across runs.
class LlmGateway {
public:
    explicit LlmGateway(BackendConfig config);

    // Performs exactly one attempt. Emits one llm_request and one llm_response
    // event (the response event carries the error when the call fails).
    ChatResponse chat(const ChatRequest& request, EventRecorder& recorder) const;

    const BackendConfig& config() const { return config_; }

    // Model identifier this backend answers as; callers put it in ChatRequest.model.
    std::string effective_model() const;

    // OpenAI chat-completions wire body with stable key order.
    static json build_wire_body(const ChatRequest& request, const std::string& model);

private:
    ChatResponse chat_scripted(const ChatRequest& request) const;
    ChatResponse chat_http(const ChatRequest& request) const;

    BackendConfig config_;
};

}  // namespace crewline
