#include "crewline/config.hpp"
#include "crewline/domain.hpp"
#include "crewline/gateway.hpp"
#include "crewline/orchestrator.hpp"
#include "crewline/search.hpp"
#include "crewline/stages.hpp"
#include "crewline/transcript_store.hpp"
#include "crewline/util.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace {

using namespace crewline;

constexpr int kExitAccepted = 0;
constexpr int kExitFailure = 1;
constexpr int kExitMaxRevisions = 2;
constexpr int kExitReplayDivergence = 3;
constexpr int kExitUsage = 64;

int usage_error(const std::string& message) {
    std::cerr << "usage error: " << message << "\n";
    return kExitUsage;
}

int failure(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return kExitFailure;
}

void print_violations(const ValidationError& err) {
    for (const Violation& violation : err.violations()) {
        std::cerr << "  " << violation.path << ": [" << violation.code << "] "
                  << violation.message << "\n";
    }
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Relative fixture directories resolve against the config file's directory.
// Only the tool sees the resolved path; the digest covers the config as authored.
SearchConfig resolve_fixture_dir(const SearchConfig& search,
                                 const std::filesystem::path& config_path) {
    SearchConfig resolved = search;
    const std::string dir = search.fixture_dir;
    if (!dir.empty() && !std::filesystem::path(dir).is_absolute()) {
        resolved.fixture_dir = (std::filesystem::absolute(config_path).parent_path() / dir)
                                   .lexically_normal()
                                   .string();
    }
    return resolved;
}

std::string trace_letters(const Transcript& transcript) {
    std::string out;
    for (Role role : transcript.stage_trace()) {
        if (!out.empty()) out.push_back(' ');
        out.push_back(static_cast<char>(std::toupper(to_string(role)[0])));
    }
    return out;
}

void print_summary(const Transcript& transcript, const std::filesystem::path& transcript_path) {
    const FinalRecord& final = *transcript.final;
    std::size_t blocking = 0, minor = 0;
    if (final.report) {
        for (const Issue& issue : final.report->issues()) {
            (issue.severity == Severity::blocking ? blocking : minor)++;
        }
    }
    std::cerr << "status: " << to_string(final.status) << "\n"
              << "stage trace: " << trace_letters(transcript) << "\n"
              << "revisions: " << transcript.revision_count() << "\n"
              << "issues: " << blocking << " blocking, " << minor << " minor\n"
              << "transcript: " << transcript_path.string() << "\n";
    if (final.status == RunStatus::failed && final.failed_stage) {
        std::cerr << "failed stage: " << *final.failed_stage << " ("
                  << final.failure_cause.value_or("unknown cause") << ")\n";
    }
}

struct RunOptions {
    std::string config_path;
    std::string input_path;
    std::string text;
    std::string source_lang;
    std::string target_lang;
    std::string domain = "general";
    std::string out_dir = "./runs";
    std::string backend_override;
    std::string search_override;
};

int cmd_run(const RunOptions& opts) {
    if (opts.text.empty() == opts.input_path.empty()) {
        return usage_error("exactly one of --text or --input is required");
    }
    std::string source_text = opts.text;
    if (!opts.input_path.empty()) {
        const auto content = read_file(opts.input_path);
        if (!content) return failure("cannot read input file " + opts.input_path);
        source_text = *content;
    }
    if (trim(source_text).empty()) return usage_error("the source text is empty");
    if (opts.source_lang == opts.target_lang) {
        return usage_error("--source and --target must differ");
    }

    CulturalDomain domain = CulturalDomain::general;
    try {
        domain = cultural_domain_from_string(opts.domain);
    } catch (const ValidationError&) {
        return usage_error("--domain must be one of festival|religion|history|general");
    }

    std::optional<CrewConfig> config;
    try {
        config = load_config_file(opts.config_path);
        if (!opts.backend_override.empty()) {
            config = config->with_backend_kind(backend_kind_from_string(opts.backend_override));
        }
        if (!opts.search_override.empty()) {
            config = config->with_search_mode(search_mode_from_string(opts.search_override));
        }
    } catch (const ValidationError& err) {
        std::cerr << "error: configuration invalid\n";
        print_violations(err);
        return kExitFailure;
    }

    try {
        const TranslationJob job =
            TranslationJob::create(source_text, opts.source_lang, opts.target_lang, domain);

        TranscriptStore store{opts.out_dir};
        auto writer = store.open_writer(job, digest_config(*config));

        const LlmGateway gateway{config->backend()};
        std::unique_ptr<SearchTool> search;
        if (config->search().mode != SearchConfig::Mode::disabled) {
            search = std::make_unique<SearchTool>(
                resolve_fixture_dir(config->search(), opts.config_path));
        }

        EventRecorder recorder;
        recorder.add_sink(writer);
        const Transcript transcript =
            run_pipeline(job, *config, gateway, search.get(), recorder);
        writer.finalize(*transcript.final);

        const FinalRecord& final = *transcript.final;
        if (final.status == RunStatus::max_revisions_exceeded) {
            std::cerr << "WARNING: max_revisions exceeded; the last synthesized output "
                         "still carries unresolved blocking issues.\n";
        }
        print_summary(transcript, writer.transcript_path());
        if (final.output) std::cout << final.output->final_text() << "\n";

        switch (final.status) {
            case RunStatus::accepted: return kExitAccepted;
            case RunStatus::max_revisions_exceeded: return kExitMaxRevisions;
            case RunStatus::failed: return kExitFailure;
        }
        return kExitFailure;
    } catch (const ValidationError& err) {
        std::cerr << "error: invalid run\n";
        print_violations(err);
        return kExitFailure;
    } catch (const StoreError& err) {
        return failure(err.what());
    }
}

int cmd_validate(const std::string& config_path) {
    try {
        const CrewConfig config = load_config_file(config_path);
        std::cout << "config OK (digest " << digest_config(config) << ")\n";
        return kExitAccepted;
    } catch (const ValidationError& err) {
        std::cerr << "config invalid: " << err.violations().size() << " violation"
                  << (err.violations().size() == 1 ? "" : "s") << "\n";
        print_violations(err);
        return kExitFailure;
    }
}

int cmd_replay(const std::string& transcript_path, const std::string& config_path) {
    try {
        const Transcript transcript = TranscriptStore::load_file(transcript_path);
        const CrewConfig config = load_config_file(config_path);
        const SynthesizedText output = replay(transcript, config);
        std::cout << "REPLAY OK: final text is byte-identical (" << output.final_text().size()
                  << " bytes)\n";
        return kExitAccepted;
    } catch (const ReplayError& err) {
        if (err.kind == ReplayError::Kind::divergence) {
            std::cerr << "REPLAY DIVERGED: " << err.what() << "\n";
            return kExitReplayDivergence;
        }
        return failure(err.what());
    } catch (const StoreError& err) {
        return failure(err.what());
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitFailure;
    }
}

int cmd_diff(const std::string& a_path, const std::string& b_path) {
    try {
        const Transcript a = TranscriptStore::load_file(a_path);
        const Transcript b = TranscriptStore::load_file(b_path);
        std::cout << diff_transcripts(a, b).to_text();
        return kExitAccepted;
    } catch (const StoreError& err) {
        return failure(err.what());
    } catch (const ValidationError& err) {
        return failure(err.what());
    }
}

int cmd_init_fixtures(const std::string& dir, const std::vector<std::string>& queries) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return failure("cannot create " + dir + ": " + ec.message());
    for (const std::string& query : queries) {
        const std::filesystem::path path =
            std::filesystem::path(dir) / (slug(normalize_query(query)) + ".json");
        std::ofstream out(path);
        out << json{{"query", normalize_query(query)},
                    {"results",
                     json::array({json{{"title", "Example result for " + query},
                                       {"snippet", "Replace this snippet with real content."},
                                       {"url", "https://example.org/"}}})}}
                   .dump(2)
            << "\n";
        std::cout << "wrote " << path.string() << "\n";
    }
    if (queries.empty()) std::cout << "created " << dir << "\n";
    return kExitAccepted;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crewline: culturally-adaptive four-agent translation pipeline"};
    app.require_subcommand(1);

    RunOptions run_opts;
    CLI::App* run = app.add_subcommand("run", "run the pipeline on one text");
    run->add_option("--config", run_opts.config_path, "pipeline configuration file")->required();
    run->add_option("--input", run_opts.input_path, "file with the source text");
    run->add_option("--text", run_opts.text, "source text inline");
    run->add_option("--source", run_opts.source_lang, "source language tag")->required();
    run->add_option("--target", run_opts.target_lang, "target language tag")->required();
    run->add_option("--domain", run_opts.domain, "festival|religion|history|general");
    run->add_option("--out", run_opts.out_dir, "transcript output directory (default ./runs)");
    run->add_option("--backend", run_opts.backend_override, "override backend kind: http|scripted");
    run->add_option("--search", run_opts.search_override,
                    "override search mode: live|fixture|disabled");

    std::string validate_config_path;
    CLI::App* validate = app.add_subcommand("validate", "validate a configuration file");
    validate->add_option("--config", validate_config_path, "configuration file")->required();

    std::string replay_transcript, replay_config;
    CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a transcript deterministically");
    replay_cmd->add_option("--transcript", replay_transcript, "path to the .transcript file")
        ->required();
    replay_cmd->add_option("--config", replay_config, "the config the run used")->required();

    std::string diff_a, diff_b;
    CLI::App* diff_cmd = app.add_subcommand("diff", "structurally compare two transcripts");
    diff_cmd->add_option("--a", diff_a, "first .transcript file")->required();
    diff_cmd->add_option("--b", diff_b, "second .transcript file")->required();

    std::string fixtures_dir;
    std::vector<std::string> fixture_queries;
    CLI::App* init_fixtures =
        app.add_subcommand("init-fixtures", "scaffold a search fixture directory");
    init_fixtures->add_option("--dir", fixtures_dir, "fixture directory to create")->required();
    init_fixtures->add_option("--query", fixture_queries, "query to scaffold a fixture file for");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return usage_error(e.what());
    }

    if (run->parsed()) return cmd_run(run_opts);
    if (validate->parsed()) return cmd_validate(validate_config_path);
    if (replay_cmd->parsed()) return cmd_replay(replay_transcript, replay_config);
    if (diff_cmd->parsed()) return cmd_diff(diff_a, diff_b);
    if (init_fixtures->parsed()) return cmd_init_fixtures(fixtures_dir, fixture_queries);
    return kExitUsage;
}
