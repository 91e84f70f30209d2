#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "prefplan/llm.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "test_util.hpp"

using namespace prefplan;
namespace fs = std::filesystem;

namespace {

std::vector<llm::InContextExample> sampleExamples(int n) {
    std::vector<llm::InContextExample> out;
    for (int i = 0; i < n; ++i) {
        llm::InContextExample ex;
        ex.state_description = "- object 'box_" + std::to_string(i) + "' on the table";
        ex.orientation_definition = "Left is negative y.";
        ex.instruction = "Move box " + std::to_string(i) + " to the left.";
        ex.fixed_plan = "pick(box_" + std::to_string(i) + ")\nplace(box_" + std::to_string(i) +
                        ", table)";
        ex.fixed_params = "stop coexistence\nstop coexistence";
        ex.response =
            "```PLAN\npick(box_" + std::to_string(i) + ")\nplace(box_" + std::to_string(i) +
            ", table)\n```\n```CONTROL\nstop coexistence\nstop coexistence\n```\n"
            "```PREF[1]\nthreshold(0.0, -1.0)\n```\n```PREF[2]\nthreshold(0.0, -1.0)\n```\n";
        out.push_back(std::move(ex));
    }
    return out;
}

llm::PromptBundle samplePrompt(int n_examples = 3) {
    llm::ScenarioContext ctx;
    ctx.state_description = "- object 'box_red' on the table";
    ctx.orientation_definition = "Left is negative y.";
    return llm::buildPrompt(ctx, "Put the red box to the left.", sampleExamples(n_examples));
}

const char* kValidResponse =
    "```PLAN\npick(box_red)\nplace(box_red, table)\n```\n"
    "```CONTROL\nstop coexistence\ncontact beginner\n```\n"
    "```PREF[1]\nthreshold(0.0, -1.0)\n```\n"
    "```PREF[2]\nnormal(positionNorm(getPose(next_state,'box_red','world'), "
    "getPose(next_state,'box_blue','world')), 0.2, 0.1, direction=false)\n```\n";

world::SceneCatalog twoBoxCatalog() {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    return world::makeCatalog(scenario.initial);
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("prefplan_test_" + tag + "_" +
                                             std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// Transport stub with scripted responses.
class ScriptedTransport : public llm::Transport {
public:
    explicit ScriptedTransport(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}

    std::string complete(const llm::PromptBundle& prompt) override {
        prompts.push_back(prompt.fullText());
        if (calls >= responses_.size()) throw llm::TransportError("script exhausted");
        return responses_[calls++];
    }

    std::vector<std::string> prompts;
    size_t calls = 0;

private:
    std::vector<std::string> responses_;
};

}  // namespace

TEST(Prompt, DeterministicAssemblyInOrder) {
    const auto a = samplePrompt();
    const auto b = samplePrompt();
    EXPECT_EQ(a.fullText(), b.fullText());
    EXPECT_EQ(a.example_blocks.size(), 3u);

    const std::string text = a.fullText();
    // Section order: terminology before primitives before the output
    // format, building blocks after the system text, examples, then task.
    const auto pos_term = text.find("Terminology:");
    const auto pos_state = text.find("State definition:");
    const auto pos_prims = text.find("Available manipulation primitives:");
    const auto pos_obj = text.find("Objective:");
    const auto pos_sig = text.find("Preference function signature:");
    const auto pos_blocks = text.find("Building blocks:");
    const auto pos_example = text.find("## Example");
    const auto pos_task = text.find("## Task");
    ASSERT_NE(pos_term, std::string::npos);
    EXPECT_LT(pos_term, pos_state);
    EXPECT_LT(pos_state, pos_prims);
    EXPECT_LT(pos_prims, pos_obj);
    EXPECT_LT(pos_obj, pos_sig);
    EXPECT_LT(pos_sig, pos_blocks);
    EXPECT_LT(pos_blocks, pos_example);
    EXPECT_LT(pos_example, pos_task);
    EXPECT_NE(text.find("getPose"), std::string::npos);
}

TEST(Prompt, RequiresExamples) {
    llm::ScenarioContext ctx;
    EXPECT_THROW(llm::buildPrompt(ctx, "do something", {}), std::invalid_argument);
}

TEST(Prompt, RejectsExamplesWithBrokenPreferences) {
    auto examples = sampleExamples(1);
    examples[0].response = "```PLAN\npick(a)\n```\n```PREF[1]\nfrobnicate(1)\n```\n";
    llm::ScenarioContext ctx;
    EXPECT_THROW(llm::buildPrompt(ctx, "x", examples), llm::ValidationError);
}

TEST(Prompt, FixedPlanEmbedded) {
    llm::ScenarioContext ctx;
    ctx.state_description = "- empty";
    ctx.orientation_definition = "n/a";
    const auto bundle =
        llm::buildPrompt(ctx, "do it", sampleExamples(1), "pick(box_red)", "stop coexistence");
    EXPECT_NE(bundle.instruction_block.find("Fixed task plan:\npick(box_red)"), std::string::npos);
    EXPECT_NE(bundle.instruction_block.find("Fixed controller parameters:\nstop coexistence"),
              std::string::npos);
}

TEST(Response, ParsesValidBlocks) {
    const auto response = llm::parsePlanResponse(kValidResponse, twoBoxCatalog());
    ASSERT_EQ(response.steps.size(), 2u);
    EXPECT_EQ(response.steps[0].primitive.label(), "pick(box_red)");
    EXPECT_EQ(response.steps[1].primitive.label(), "place(box_red, table)");
    EXPECT_EQ(response.steps[1].mode, safety::ControllerMode::kContact);
    EXPECT_EQ(response.steps[1].preset, "beginner");

    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const auto skeleton = response.toSkeleton(scenario.initial);
    EXPECT_EQ(skeleton.horizon(), 2);
    EXPECT_NEAR(skeleton.steps[1].params.v_max,
                safety::presetParams(safety::Preset::kBeginner).v_max, 1e-12);
}

TEST(Response, StructuredErrors) {
    const auto catalog = twoBoxCatalog();
    try {
        llm::parsePlanResponse("no blocks at all", catalog);
        FAIL();
    } catch (const llm::ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("PLAN"), std::string::npos);
        EXPECT_EQ(e.raw_response, "no blocks at all");
    }
    // CONTROL count mismatch.
    EXPECT_THROW(llm::parsePlanResponse("```PLAN\npick(box_red)\n```\n"
                                        "```CONTROL\nstop coexistence\nstop coexistence\n```\n"
                                        "```PREF[1]\n0.5\n```\n",
                                        catalog),
                 llm::ValidationError);
    // Missing PREF block.
    EXPECT_THROW(llm::parsePlanResponse("```PLAN\npick(box_red)\n```\n"
                                        "```CONTROL\nstop coexistence\n```\n",
                                        catalog),
                 llm::ValidationError);
    // Unknown object inside a preference.
    try {
        llm::parsePlanResponse(
            "```PLAN\npick(box_red)\n```\n```CONTROL\nstop coexistence\n```\n"
            "```PREF[1]\nthreshold(positionNorm(getPose(state,'ghost','world'), "
            "getPose(state,'box_red','world')), 0.1)\n```\n",
            catalog);
        FAIL();
    } catch (const llm::ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    }
}

TEST(Gateway, RetriesWithDiagnosticsThenSucceeds) {
    const auto prompt = samplePrompt();
    ScriptedTransport transport({"garbage", kValidResponse});
    const auto response = llm::requestPlan(prompt, transport, twoBoxCatalog());
    EXPECT_EQ(response.steps.size(), 2u);
    ASSERT_EQ(transport.prompts.size(), 2u);
    // The second prompt carries the diagnostics of the first failure.
    EXPECT_NE(transport.prompts[1].find("previous response was rejected"), std::string::npos);
    EXPECT_NE(transport.prompts[1].find("PLAN"), std::string::npos);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
    const auto prompt = samplePrompt();
    ScriptedTransport transport({"bad", "also bad", "still bad", "never reached"});
    EXPECT_THROW(llm::requestPlan(prompt, transport, twoBoxCatalog()), llm::ValidationError);
    EXPECT_EQ(transport.calls, 3u);  // R = 3
}

TEST(Fixtures, RecordReplayRoundTrip) {
    TempDir dir("fixtures");
    llm::FixtureStore store(dir.path());
    const std::string prompt = "prompt with unicode \xE2\x9C\x93 and\r\nwindows newlines";
    const std::string response = "response \x01 bytes\nwith lines";
    store.record(prompt, response);
    EXPECT_TRUE(store.contains(prompt));
    EXPECT_EQ(store.replay(prompt), response);
    // Newline normalization: the \n variant resolves to the same fixture.
    std::string unix_prompt = prompt;
    const auto pos = unix_prompt.find("\r\n");
    unix_prompt.replace(pos, 2, "\n");
    EXPECT_EQ(store.replay(unix_prompt), response);
    // Missing fixture is an error, never a silent fallback.
    EXPECT_THROW(store.replay("unknown prompt"), llm::TransportError);
}

TEST(Fixtures, CollisionDetected) {
    TempDir dir("collision");
    llm::FixtureStore store(dir.path());
    store.record("prompt A", "response A");
    // Forge a colliding file: same hash name, different prompt text.
    const auto hash = llm::promptHash("prompt B");
    nlohmann::json j;
    j["prompt_hash"] = hash;
    j["prompt_text"] = "something else entirely";
    j["response_text"] = "x";
    std::ofstream(dir.path() / (hash + ".json")) << j.dump();
    EXPECT_THROW(store.replay("prompt B"), llm::GatewayError);
    EXPECT_THROW(store.record("prompt B", "y"), llm::GatewayError);
}

TEST(Fixtures, ThirtyTrialStoreLoadsFully) {
    TempDir dir("thirty");
    llm::FixtureStore store(dir.path());
    // Ten tasks, three trials each.
    for (int task = 0; task < 10; ++task) {
        for (int trial = 0; trial < 3; ++trial) {
            const std::string prompt =
                "task " + std::to_string(task) + " trial " + std::to_string(trial);
            store.record(prompt, "response " + std::to_string(task * 3 + trial));
        }
    }
    EXPECT_EQ(store.size(), 30u);
    for (int task = 0; task < 10; ++task) {
        for (int trial = 0; trial < 3; ++trial) {
            const std::string prompt =
                "task " + std::to_string(task) + " trial " + std::to_string(trial);
            EXPECT_EQ(store.replay(prompt), "response " + std::to_string(task * 3 + trial));
        }
    }
}

TEST(Fixtures, ReplayTransportIsByteIdentical) {
    TempDir dir("replay");
    llm::FixtureStore store(dir.path());
    const auto prompt = samplePrompt();
    store.record(prompt.fullText(), kValidResponse);
    llm::ReplayTransport transport(store);
    EXPECT_EQ(transport.complete(prompt), kValidResponse);
}

TEST(Candidates, SoftmaxValuesAndOrder) {
    const auto prompt = samplePrompt();
    ScriptedTransport transport(
        {"```CANDIDATES\npick(box_red) | -1.0\nplace(box_red, table) | -3.0\n```\n"
         "```CONTROL\nstop coexistence\nstop coexistence\n```\n"
         "```PREF[1]\nthreshold(0.0, -1.0)\n```\n```PREF[2]\nthreshold(0.0, -1.0)\n```\n"});
    const auto cands = llm::requestGreedyCandidates(prompt, 4, transport, twoBoxCatalog());
    ASSERT_EQ(cands.size(), 2u);
    EXPECT_EQ(cands[0].primitive.label(), "pick(box_red)");
    // softmax(-1, -3) = (0.8808, 0.1192)
    EXPECT_NEAR(cands[0].s_task, 0.8807970779778823, 1e-9);
    EXPECT_NEAR(cands[1].s_task, 0.1192029220221176, 1e-9);
    EXPECT_GT(cands[0].raw_logprob, cands[1].raw_logprob);

    const auto greedy = llm::toGreedyCandidates(cands);
    ASSERT_EQ(greedy.size(), 2u);
    EXPECT_NEAR(greedy[0].s_task, 0.8807970779778823, 1e-9);
}

TEST(Candidates, SingletonAndTruncation) {
    const auto prompt = samplePrompt();
    {
        ScriptedTransport transport({"```CANDIDATES\npick(box_red) | -2.5\n```\n"});
        const auto cands = llm::requestGreedyCandidates(prompt, 3, transport, twoBoxCatalog());
        ASSERT_EQ(cands.size(), 1u);
        EXPECT_DOUBLE_EQ(cands[0].s_task, 1.0);
    }
    {
        ScriptedTransport transport(
            {"```CANDIDATES\npick(box_red) | -5.0\nplace(box_red, table) | -1.0\npick(box_blue) | "
             "-2.0\n```\n"});
        const auto cands = llm::requestGreedyCandidates(prompt, 2, transport, twoBoxCatalog());
        ASSERT_EQ(cands.size(), 2u);  // top-2 by raw score
        EXPECT_EQ(cands[0].primitive.label(), "place(box_red, table)");
        EXPECT_EQ(cands[1].primitive.label(), "pick(box_blue)");
        EXPECT_NEAR(cands[0].s_task + cands[1].s_task, 1.0, 1e-12);
    }
}

TEST(Candidates, SoftmaxOrderPreservation) {
    rng::Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> logits;
        for (int i = 0; i < 6; ++i) logits.push_back(rng.uniform(-20.0, 2.0));
        const auto probs = llm::softmax(logits);
        double sum = 0.0;
        for (size_t i = 0; i < logits.size(); ++i) {
            sum += probs[i];
            for (size_t j = 0; j < logits.size(); ++j) {
                if (logits[i] > logits[j]) EXPECT_GT(probs[i], probs[j]);
            }
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(LiveTransport, TalksToLocalChatCompletionServer) {
    httplib::Server server;
    std::string seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
        nlohmann::json reply;
        reply["choices"] = {{{"message", {{"role", "assistant"}, {"content", kValidResponse}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    llm::LiveConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.model = "test-model";
    config.api_key = "sk-local";
    llm::LiveTransport transport(config);
    const auto prompt = samplePrompt();
    const std::string out = transport.complete(prompt);
    EXPECT_EQ(out, kValidResponse);

    const auto body = nlohmann::json::parse(seen_body);
    EXPECT_EQ(body.at("model"), "test-model");
    EXPECT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(body.at("messages")[0].at("role"), "system");
    EXPECT_EQ(body.at("messages")[1].at("role"), "user");
    EXPECT_EQ(seen_auth, "Bearer sk-local");

    // Error statuses surface as transport errors.
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    llm::LiveTransport broken(config);
    EXPECT_THROW(broken.complete(prompt), llm::TransportError);

    server.stop();
    worker.join();

    // Connection refused after shutdown.
    llm::LiveTransport dead(config);
    EXPECT_THROW(dead.complete(prompt), llm::TransportError);
}

TEST(LiveTransport, RecordingWrapperPersistsExchanges) {
    httplib::Server server;
    server.Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
        nlohmann::json reply;
        reply["choices"] = {{{"message", {{"content", "recorded!"}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    TempDir dir("record");
    llm::FixtureStore store(dir.path());
    llm::LiveConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/chat";
    llm::LiveTransport live(config);
    llm::RecordingTransport recording(live, store);
    const auto prompt = samplePrompt();
    EXPECT_EQ(recording.complete(prompt), "recorded!");
    server.stop();
    worker.join();

    // Offline replay now serves the recorded exchange.
    llm::ReplayTransport replay(store);
    EXPECT_EQ(replay.complete(prompt), "recorded!");
}

// Optional smoke test against a real endpoint, enabled by environment.
TEST(LiveTransport, OptionalLiveSmoke) {
    if (!std::getenv("PREFPLAN_LIVE_SMOKE") || !std::getenv("LLM_ENDPOINT")) {
        GTEST_SKIP() << "set PREFPLAN_LIVE_SMOKE=1 and LLM_ENDPOINT to run";
    }
    llm::LiveTransport transport(llm::LiveConfig::fromEnvironment());
    const auto out = transport.complete(samplePrompt());
    EXPECT_FALSE(out.empty());
}
