#include "crewline/gateway.hpp"

#include "support/test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

using namespace crewline;

namespace {

ChatRequest basic_request() {
    ChatRequest request;
    request.model = "aya-expanse:8b";
    request.messages = {
        ChatMessage{ChatMessage::Role::system, "You are a translation agent."},
        ChatMessage{ChatMessage::Role::user,
                    "Translate to Hindi: Diwali is the grand festival of lights."}};
    request.temperature = 0.3;
    request.max_tokens = 512;
    request.correlation_id = "c1";
    request.script_key = "translation:0:0";
    request.stage = Role::translation;
    return request;
}

struct StubServer {
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    httplib::Server server;
    int port = 0;
    std::thread thread;
};

}  // namespace

TEST_CASE("scripted backend returns the scripted payload") {
    BackendConfig backend;
    backend.kind = BackendConfig::Kind::scripted;
    backend.script = {{"translation:0:0",
                       "{\"translated_text\": \"mahaan prakaash utsav\"}"}};
    const LlmGateway gateway{backend};

    EventRecorder recorder;
    const ChatResponse response = gateway.chat(basic_request(), recorder);
    CHECK(response.content.find("mahaan prakaash utsav") != std::string::npos);
    CHECK(response.correlation_id == "c1");
    CHECK(response.latency_ms == 0);

    // determinism: identical call, identical content
    const ChatResponse again = gateway.chat(basic_request(), recorder);
    CHECK(again.content == response.content);

    REQUIRE(recorder.events().size() == 4);
    CHECK(recorder.events()[0].kind == EventKind::llm_request);
    CHECK(recorder.events()[1].kind == EventKind::llm_response);
    CHECK(recorder.events()[1].payload.at("script_key") == "translation:0:0");
}

TEST_CASE("scripted backend misses name the key") {
    BackendConfig backend;
    backend.kind = BackendConfig::Kind::scripted;
    backend.script = {{"other", "x"}};
    const LlmGateway gateway{backend};

    EventRecorder recorder;
    try {
        gateway.chat(basic_request(), recorder);
        FAIL("expected GatewayError");
    } catch (const GatewayError& err) {
        CHECK(err.kind == GatewayError::Kind::script_miss);
        CHECK(std::string(err.what()).find("translation:0:0") != std::string::npos);
    }
    // one request event plus one error response event
    REQUIRE(recorder.events().size() == 2);
    CHECK(recorder.events()[1].kind == EventKind::llm_response);
    CHECK(recorder.events()[1].payload.contains("error"));
}

TEST_CASE("request validation: first message must be the system message") {
    BackendConfig backend;
    backend.kind = BackendConfig::Kind::scripted;
    backend.script = {{"translation:0:0", "x"}};
    const LlmGateway gateway{backend};

    ChatRequest request = basic_request();
    request.messages.erase(request.messages.begin());
    EventRecorder recorder;
    CHECK_THROWS_AS(gateway.chat(request, recorder), ValidationError);

    request.messages.clear();
    CHECK_THROWS_AS(gateway.chat(request, recorder), ValidationError);
}

TEST_CASE("wire body structure and explicit zero temperature") {
    ChatRequest request = basic_request();
    const json body = LlmGateway::build_wire_body(request, "aya-expanse:8b");
    REQUIRE(body.at("messages").size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["role"] == "user");

    request.temperature = 0.0;
    const std::string dumped = LlmGateway::build_wire_body(request, "m").dump();
    CHECK(dumped.find("\"temperature\":0.0") != std::string::npos);
}

TEST_CASE("wire body golden file, byte for byte") {
    const std::string body = LlmGateway::build_wire_body(basic_request(), "aya-expanse:8b").dump();
    std::ifstream in(std::string(CREWLINE_SOURCE_DIR) +
                         "/tests/fixtures/wire/chat_request_golden.json",
                     std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    CHECK(body == buffer.str());
}

TEST_CASE("http backend round-trips a stub completion body") {
    StubServer stub([](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        CHECK(body.at("model") == "aya-expanse:8b");
        CHECK(body.at("messages").size() == 2);
        res.set_content(json{{"model", "aya-expanse:8b"},
                             {"choices",
                              json::array({json{{"message",
                                                 json{{"role", "assistant"},
                                                      {"content", "namaste from the stub"}}}}})}}
                            .dump(),
                        "application/json");
    });

    BackendConfig backend;
    backend.kind = BackendConfig::Kind::http;
    backend.base_url = "http://127.0.0.1:" + std::to_string(stub.port);
    backend.model = "aya-expanse:8b";
    backend.timeout_ms = 5000;
    const LlmGateway gateway{backend};

    EventRecorder recorder;
    const ChatResponse response = gateway.chat(basic_request(), recorder);
    CHECK(response.content == "namaste from the stub");
    CHECK(response.model == "aya-expanse:8b");
    CHECK(response.correlation_id == "c1");
}

TEST_CASE("http backend sends the bearer token from the environment") {
    std::string seen_auth;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content(
            json{{"choices", json::array({json{{"message", json{{"content", "ok"}}}}})}}.dump(),
            "application/json");
    });

    setenv("CREWLINE_API_KEY", "sk-test-123", 1);
    BackendConfig backend;
    backend.kind = BackendConfig::Kind::http;
    backend.base_url = "http://127.0.0.1:" + std::to_string(stub.port);
    backend.model = "m";
    const LlmGateway gateway{backend};
    EventRecorder recorder;
    gateway.chat(basic_request(), recorder);
    unsetenv("CREWLINE_API_KEY");
    CHECK(seen_auth == "Bearer sk-test-123");
}

TEST_CASE("upstream non-2xx surfaces status and captured body") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("backend exploded", "text/plain");
    });

    BackendConfig backend;
    backend.kind = BackendConfig::Kind::http;
    backend.base_url = "http://127.0.0.1:" + std::to_string(stub.port);
    backend.model = "m";
    const LlmGateway gateway{backend};
    EventRecorder recorder;
    try {
        gateway.chat(basic_request(), recorder);
        FAIL("expected GatewayError");
    } catch (const GatewayError& err) {
        CHECK(err.kind == GatewayError::Kind::upstream);
        CHECK(err.status == 500);
        CHECK(err.body == "backend exploded");
    }
}

TEST_CASE("timeout is enforced against a slow stub") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(500));
        res.set_content(
            json{{"choices", json::array({json{{"message", json{{"content", "late"}}}}})}}.dump(),
            "application/json");
    });

    BackendConfig backend;
    backend.kind = BackendConfig::Kind::http;
    backend.base_url = "http://127.0.0.1:" + std::to_string(stub.port);
    backend.model = "m";
    backend.timeout_ms = 100;
    const LlmGateway gateway{backend};
    EventRecorder recorder;
    try {
        gateway.chat(basic_request(), recorder);
        FAIL("expected timeout");
    } catch (const GatewayError& err) {
        CHECK(err.kind == GatewayError::Kind::timeout);
    }
    // the error still produced a paired response event
    REQUIRE(recorder.events().size() == 2);
    CHECK(recorder.events()[1].payload["error"]["kind"] == "timeout");
}
