#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "prefplan/planner.hpp"
#include "prefplan/world.hpp"

namespace prefplan::llm {

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
/// Transport-level failures: endpoint unreachable, missing fixture.
class TransportError : public GatewayError {
public:
    using GatewayError::GatewayError;
};
/// The model's response failed parsing or validation. Carries the raw
/// response text of the last attempt.
class ValidationError : public GatewayError {
public:
    ValidationError(const std::string& message, std::string raw)
        : GatewayError(message), raw_response(std::move(raw)) {}
    std::string raw_response;
};

struct InContextExample {
    std::string state_description;
    std::string orientation_definition;
    std::string instruction;
    std::string fixed_plan;    // optional
    std::string fixed_params;  // optional
    std::string response;      // expected return (PLAN/CONTROL/PREF blocks)
};

/// Live task context rendered into the prompt.
struct ScenarioContext {
    std::string state_description;
    std::string orientation_definition;
};

/// Prompt sections in fixed order: system text (purpose, terminology,
/// state definition, primitives, objective, function signature), the
/// building-block listing, in-context examples, the live instruction.
struct PromptBundle {
    std::string system_text;
    std::vector<std::string> example_blocks;
    std::string instruction_block;

    std::string fullText() const;
    /// The user-role message (everything after the system text).
    std::string userText() const;
};

PromptBundle buildPrompt(const ScenarioContext& scenario, const std::string& instruction,
                         const std::vector<InContextExample>& examples,
                         const std::string& fixed_plan = "", const std::string& fixed_params = "");

/// Variant of a prompt that asks for next-skill candidates (CANDIDATES
/// block) instead of a full plan.
PromptBundle asGreedyPrompt(const PromptBundle& prompt, int budget);

/// Deterministic textual description of a state for prompt assembly.
std::string describeState(const world::WorldState& state);

class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string complete(const PromptBundle& prompt) = 0;
};

struct LiveConfig {
    std::string endpoint;  // full chat-completion URL
    std::string model;
    std::string api_key;
    double temperature = 0.0;
    int max_tokens = 4096;

    /// Reads LLM_ENDPOINT, LLM_MODEL, LLM_API_KEY.
    static LiveConfig fromEnvironment();
};

/// HTTP JSON chat-completion client.
class LiveTransport : public Transport {
public:
    explicit LiveTransport(LiveConfig config);
    std::string complete(const PromptBundle& prompt) override;

private:
    LiveConfig config_;
};

/// Normalize newlines and hash with SHA-256 (the canonical prompt key).
std::string promptHash(const std::string& prompt_text);

/// Directory of recorded responses, one JSON document per fixture:
/// {"prompt_hash", "prompt_text", "response_text", "candidate_scores"?}.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir);

    void record(const std::string& prompt_text, const std::string& response_text);
    /// Byte-identical recorded response; missing fixtures are an error,
    /// never a silent live fallback.
    std::string replay(const std::string& prompt_text) const;
    bool contains(const std::string& prompt_text) const;
    std::size_t size() const;
    std::vector<std::string> hashes() const;
    const std::filesystem::path& directory() const { return dir_; }

private:
    std::filesystem::path pathFor(const std::string& hash) const;
    std::filesystem::path dir_;
};

class ReplayTransport : public Transport {
public:
    explicit ReplayTransport(const FixtureStore& store) : store_(store) {}
    std::string complete(const PromptBundle& prompt) override;

private:
    const FixtureStore& store_;
};

/// Forwards to an inner transport and records every exchange.
class RecordingTransport : public Transport {
public:
    RecordingTransport(Transport& inner, FixtureStore& store) : inner_(inner), store_(store) {}
    std::string complete(const PromptBundle& prompt) override;

private:
    Transport& inner_;
    FixtureStore& store_;
};

struct PlanStep {
    world::PrimitiveInstance primitive;
    safety::ControllerMode mode = safety::ControllerMode::kStop;
    std::string preset = "coexistence";
    std::string pref_source;
};

struct PlanResponse {
    std::vector<PlanStep> steps;

    planner::PlanSkeleton toSkeleton(const world::WorldState& state) const;
};

/// Parse a response consisting of fenced PLAN / CONTROL / PREF[t] blocks
/// and validate every preference function against the catalog.
PlanResponse parsePlanResponse(const std::string& text, const world::SceneCatalog& catalog);

struct GatewayOptions {
    int max_attempts = 3;  // re-prompts with diagnostics appended
};

/// Request a full plan; invalid responses are retried with diagnostics
/// appended to the prompt, up to max_attempts.
PlanResponse requestPlan(const PromptBundle& prompt, Transport& transport,
                         const world::SceneCatalog& catalog, const GatewayOptions& options = {});

struct CandidateProposal {
    world::PrimitiveInstance primitive;
    double raw_logprob = 0.0;
    double s_task = 1.0;  // softmax over the returned candidate set
    safety::ControllerMode mode = safety::ControllerMode::kStop;
    std::string preset = "coexistence";
    std::string pref_source;
};

/// Request up to `budget` next-skill candidates (CANDIDATES block with
/// per-candidate summed token log-probs); keeps the top `budget` by raw
/// score and converts scores to probabilities by softmax.
std::vector<CandidateProposal> requestGreedyCandidates(const PromptBundle& prompt, int budget,
                                                       Transport& transport,
                                                       const world::SceneCatalog& catalog,
                                                       const GatewayOptions& options = {});

std::vector<planner::GreedyCandidate> toGreedyCandidates(
    const std::vector<CandidateProposal>& proposals);

std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace prefplan::llm
