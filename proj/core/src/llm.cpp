#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "prefplan/llm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace prefplan::llm {

namespace {

std::string normalizeNewlines(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            out += '\n';
        } else {
            out += text[i];
        }
    }
    return out;
}

const char* kSystemText =
    "You turn a natural-language instruction into a robot skill sequence for a tabletop\n"
    "manipulator, together with motion preferences and safe-controller settings.\n"
    "\n"
    "Terminology:\n"
    "- task plan: an ordered list of primitive calls, one per step.\n"
    "- primitive: a parameterized manipulation skill with continuous action parameters.\n"
    "- control parameters: a named controller mode plus a named parameter preset that\n"
    "  bound velocity, acceleration, jerk, stiffness, damping and contact velocity.\n"
    "- preference function: an expression scoring in [0, 1] how well an action and its\n"
    "  predicted outcome align with the user's wishes.\n"
    "\n"
    "State definition: the state holds rigid objects with poses and shapes, named\n"
    "support surfaces, the robot end-effector ('ee' frame), and optionally a human\n"
    "('human' frame). Composite objects expose named part frames like 'obj/part'.\n"
    "\n"
    "Available manipulation primitives:\n"
    "- pick(obj): grasp obj; parameters are the grasp offset and grasp yaw.\n"
    "- place(obj, surface): put the held obj down; parameters are the target x, y, yaw.\n"
    "- static_handover(obj): present the held obj to the human; parameters are the\n"
    "  end-effector target position and orientation.\n"
    "\n"
    "Objective: respond with exactly these fenced blocks.\n"
    "```PLAN\n"
    "one primitive call per line, e.g. pick(mug)\n"
    "```\n"
    "```CONTROL\n"
    "one line per step: <mode> <preset>, mode in {stop, contact, compliant}, preset in\n"
    "{coexistence, critical, beginner, intermediate, expert}\n"
    "```\n"
    "```PREF[t]\n"
    "one block per step t (1-based): a single preference expression\n"
    "```\n"
    "When asked for next-skill candidates instead, respond with\n"
    "```CANDIDATES\n"
    "one line per candidate: <primitive call> | <summed token log-probability>\n"
    "```\n"
    "followed by one CONTROL line and one PREF[l] block per candidate.\n"
    "\n"
    "Preference function signature: a single expression over `state`, `next_state`\n"
    "and the building blocks below; no statements, loops or custom functions.\n";

std::string renderExample(const InContextExample& ex) {
    std::ostringstream os;
    os << "## Example\n";
    os << "State:\n" << ex.state_description << "\n";
    os << "Orientation:\n" << ex.orientation_definition << "\n";
    os << "Instruction: " << ex.instruction << "\n";
    if (!ex.fixed_plan.empty()) os << "Fixed task plan:\n" << ex.fixed_plan << "\n";
    if (!ex.fixed_params.empty()) os << "Fixed controller parameters:\n" << ex.fixed_params << "\n";
    os << "Expected response:\n" << ex.response << "\n";
    return os.str();
}

struct FencedBlock {
    std::string label;
    std::string body;
};

std::vector<FencedBlock> extractBlocks(const std::string& text) {
    std::vector<FencedBlock> blocks;
    std::istringstream is(text);
    std::string line;
    FencedBlock current;
    bool open = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("```", 0) == 0) {
            const std::string label = line.substr(3);
            if (!open && !label.empty()) {
                current = FencedBlock{label, ""};
                open = true;
            } else if (open) {
                if (!current.body.empty() && current.body.back() == '\n') current.body.pop_back();
                blocks.push_back(current);
                open = false;
            }
            continue;
        }
        if (open) {
            current.body += line;
            current.body += '\n';
        }
    }
    return blocks;
}

const FencedBlock* findBlock(const std::vector<FencedBlock>& blocks, const std::string& label) {
    for (const auto& b : blocks) {
        if (b.label == label) return &b;
    }
    return nullptr;
}

std::vector<std::string> nonEmptyLines(const std::string& body) {
    std::vector<std::string> out;
    std::istringstream is(body);
    std::string line;
    while (std::getline(is, line)) {
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t");
        out.push_back(line.substr(b, e - b + 1));
    }
    return out;
}

struct ControlLine {
    safety::ControllerMode mode;
    std::string preset;
};

ControlLine parseControlLine(const std::string& line, const std::string& raw) {
    std::istringstream is(line);
    std::string mode_s, preset_s;
    if (!(is >> mode_s >> preset_s)) {
        throw ValidationError("CONTROL line '" + line + "' must be '<mode> <preset>'", raw);
    }
    try {
        ControlLine out{safety::modeFromName(mode_s), preset_s};
        safety::presetFromName(preset_s);
        return out;
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("CONTROL line invalid: ") + e.what(), raw);
    }
}

void validatePref(const std::string& source, const world::SceneCatalog& catalog, int index,
                  const std::string& raw) {
    dsl::PreferenceExpr expr;
    try {
        expr = dsl::parse(source);
    } catch (const dsl::ParseError& e) {
        throw ValidationError("PREF[" + std::to_string(index) + "] does not parse: " + e.what(),
                              raw);
    }
    const auto diags = dsl::typecheck(expr, catalog);
    if (!diags.empty()) {
        throw ValidationError(
            "PREF[" + std::to_string(index) + "] invalid: " + diags.front().render(), raw);
    }
}

}  // namespace

std::string PromptBundle::userText() const {
    std::string out;
    for (const auto& ex : example_blocks) {
        out += ex;
        out += '\n';
    }
    out += instruction_block;
    return out;
}

std::string PromptBundle::fullText() const { return system_text + "\n" + userText(); }

PromptBundle buildPrompt(const ScenarioContext& scenario, const std::string& instruction,
                         const std::vector<InContextExample>& examples,
                         const std::string& fixed_plan, const std::string& fixed_params) {
    if (examples.empty()) {
        throw std::invalid_argument("buildPrompt: at least one in-context example is required");
    }
    // Reject examples whose preference functions do not parse; a bad
    // example poisons every downstream response.
    for (const auto& ex : examples) {
        const auto blocks = extractBlocks(ex.response);
        for (const auto& b : blocks) {
            if (b.label.rfind("PREF", 0) != 0) continue;
            try {
                dsl::parse(b.body);
            } catch (const dsl::ParseError& e) {
                throw ValidationError(
                    "in-context example preference does not parse: " + std::string(e.what()),
                    ex.response);
            }
        }
    }

    PromptBundle bundle;
    bundle.system_text = std::string(kSystemText) + "\nBuilding blocks:\n" +
                         dsl::buildingBlocksReference();
    for (const auto& ex : examples) bundle.example_blocks.push_back(renderExample(ex));

    std::ostringstream os;
    os << "## Task\n";
    os << "State:\n" << scenario.state_description << "\n";
    os << "Orientation:\n" << scenario.orientation_definition << "\n";
    os << "Instruction: " << instruction << "\n";
    if (!fixed_plan.empty()) os << "Fixed task plan:\n" << fixed_plan << "\n";
    if (!fixed_params.empty()) os << "Fixed controller parameters:\n" << fixed_params << "\n";
    bundle.instruction_block = os.str();
    return bundle;
}

PromptBundle asGreedyPrompt(const PromptBundle& prompt, int budget) {
    PromptBundle out = prompt;
    out.instruction_block += "\nPropose up to " + std::to_string(budget) +
                             " candidates for the next skill only (CANDIDATES block with one "
                             "CONTROL line and one PREF[l] block per candidate).\n";
    return out;
}

std::string describeState(const world::WorldState& state) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    for (const auto& [id, obj] : state.objects) {
        os << "- object '" << id << "' at (" << obj.pose.position.x() << ", "
           << obj.pose.position.y() << ", " << obj.pose.position.z() << ")";
        if (obj.shape.kind == world::ShapeKind::kComposite) {
            os << " with parts";
            for (const auto& part : obj.shape.parts) {
                if (!part.id.empty()) os << " '" << id << "/" << part.id << "'";
            }
        }
        os << "\n";
    }
    for (const auto& [id, surf] : state.surfaces) {
        os << "- surface '" << id << "' centered at (" << surf.center.x() << ", "
           << surf.center.y() << ", " << surf.center.z() << "), " << surf.size_x << " x "
           << surf.size_y << " m\n";
    }
    if (state.human) {
        os << "- human with " << state.human->keypoints.size() << " keypoints, reach radius "
           << state.human->reach_radius << " m\n";
    }
    if (state.held) {
        os << "- the robot currently holds '" << state.held->object << "'\n";
    } else {
        os << "- the robot hand is empty\n";
    }
    return os.str();
}

LiveConfig LiveConfig::fromEnvironment() {
    LiveConfig cfg;
    if (const char* v = std::getenv("LLM_ENDPOINT")) cfg.endpoint = v;
    if (const char* v = std::getenv("LLM_MODEL")) cfg.model = v;
    if (const char* v = std::getenv("LLM_API_KEY")) cfg.api_key = v;
    return cfg;
}

LiveTransport::LiveTransport(LiveConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw TransportError("live transport: LLM_ENDPOINT is not configured");
    }
}

std::string LiveTransport::complete(const PromptBundle& prompt) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw TransportError("live transport: endpoint URL must include a scheme");
    }
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    const std::string base =
        path_start == std::string::npos ? config_.endpoint : config_.endpoint.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_tokens;
    body["messages"] = {{{"role", "system"}, {"content", prompt.system_text}},
                        {{"role", "user"}, {"content", prompt.userText()}}};

    httplib::Client client(base);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    const auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("live transport: request to " + base + " failed: " +
                             httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("live transport: HTTP " + std::to_string(res->status) + ": " +
                             res->body);
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("live transport: malformed completion response: ") +
                             e.what());
    }
}

std::string promptHash(const std::string& prompt_text) {
    const std::string normalized = normalizeNewlines(prompt_text);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(normalized.data(), normalized.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path FixtureStore::pathFor(const std::string& hash) const {
    return dir_ / (hash + ".json");
}

void FixtureStore::record(const std::string& prompt_text, const std::string& response_text) {
    const std::string hash = promptHash(prompt_text);
    const auto path = pathFor(hash);
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        const auto existing = nlohmann::json::parse(in);
        if (normalizeNewlines(existing.at("prompt_text").get<std::string>()) !=
            normalizeNewlines(prompt_text)) {
            throw GatewayError("fixture hash collision for " + hash +
                               "; store the fixture under a manual key");
        }
    }
    nlohmann::json j;
    j["prompt_hash"] = hash;
    j["prompt_text"] = prompt_text;
    j["response_text"] = response_text;
    // Mirror candidate scores into their own field for direct inspection.
    const auto blocks = extractBlocks(response_text);
    if (const auto* cands = findBlock(blocks, "CANDIDATES")) {
        nlohmann::json scores = nlohmann::json::array();
        for (const auto& line : nonEmptyLines(cands->body)) {
            const auto bar = line.rfind('|');
            if (bar != std::string::npos) {
                scores.push_back(std::stod(line.substr(bar + 1)));
            }
        }
        j["candidate_scores"] = std::move(scores);
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << j.dump(2);
    }
    std::filesystem::rename(tmp, path);
}

std::string FixtureStore::replay(const std::string& prompt_text) const {
    const std::string hash = promptHash(prompt_text);
    const auto path = pathFor(hash);
    if (!std::filesystem::exists(path)) {
        throw TransportError("missing fixture " + hash + " in " + dir_.string());
    }
    std::ifstream in(path, std::ios::binary);
    const auto j = nlohmann::json::parse(in);
    if (normalizeNewlines(j.at("prompt_text").get<std::string>()) !=
        normalizeNewlines(prompt_text)) {
        throw GatewayError("fixture hash collision for " + hash);
    }
    return j.at("response_text").get<std::string>();
}

bool FixtureStore::contains(const std::string& prompt_text) const {
    return std::filesystem::exists(pathFor(promptHash(prompt_text)));
}

std::size_t FixtureStore::size() const { return hashes().size(); }

std::vector<std::string> FixtureStore::hashes() const {
    std::vector<std::string> out;
    if (!std::filesystem::exists(dir_)) return out;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string ReplayTransport::complete(const PromptBundle& prompt) {
    return store_.replay(prompt.fullText());
}

std::string RecordingTransport::complete(const PromptBundle& prompt) {
    const std::string response = inner_.complete(prompt);
    store_.record(prompt.fullText(), response);
    return response;
}

planner::PlanSkeleton PlanResponse::toSkeleton(const world::WorldState& state) const {
    planner::PlanSkeleton skeleton;
    for (const auto& step : steps) {
        planner::SkeletonStep out;
        out.primitive = step.primitive;
        out.preference = dsl::parse(step.pref_source);
        out.mode = step.mode;
        out.preset = step.preset;
        out.params = safety::presetParams(safety::presetFromName(step.preset));
        skeleton.steps.push_back(std::move(out));
    }
    (void)state;
    return skeleton;
}

PlanResponse parsePlanResponse(const std::string& text, const world::SceneCatalog& catalog) {
    const auto blocks = extractBlocks(text);
    const auto* plan = findBlock(blocks, "PLAN");
    if (!plan) throw ValidationError("response is missing the PLAN block", text);
    const auto plan_lines = nonEmptyLines(plan->body);
    if (plan_lines.empty()) throw ValidationError("PLAN block is empty", text);

    PlanResponse response;
    for (const auto& line : plan_lines) {
        PlanStep step;
        try {
            step.primitive = world::parsePrimitiveCall(line);
        } catch (const std::invalid_argument& e) {
            throw ValidationError(std::string("PLAN line invalid: ") + e.what(), text);
        }
        response.steps.push_back(std::move(step));
    }

    const auto* control = findBlock(blocks, "CONTROL");
    if (!control) throw ValidationError("response is missing the CONTROL block", text);
    const auto control_lines = nonEmptyLines(control->body);
    if (control_lines.size() != response.steps.size()) {
        throw ValidationError("CONTROL block has " + std::to_string(control_lines.size()) +
                                  " lines for " + std::to_string(response.steps.size()) + " steps",
                              text);
    }
    for (size_t i = 0; i < control_lines.size(); ++i) {
        const auto parsed = parseControlLine(control_lines[i], text);
        response.steps[i].mode = parsed.mode;
        response.steps[i].preset = parsed.preset;
    }

    for (size_t t = 1; t <= response.steps.size(); ++t) {
        const auto* pref = findBlock(blocks, "PREF[" + std::to_string(t) + "]");
        if (!pref) {
            throw ValidationError("response is missing PREF[" + std::to_string(t) + "]", text);
        }
        validatePref(pref->body, catalog, static_cast<int>(t), text);
        response.steps[t - 1].pref_source = pref->body;
    }
    return response;
}

namespace {

PromptBundle withDiagnostics(const PromptBundle& prompt, const std::string& diagnostics) {
    PromptBundle retry = prompt;
    retry.instruction_block += "\nThe previous response was rejected:\n" + diagnostics +
                               "\nRespond again with corrected blocks.\n";
    return retry;
}

}  // namespace

PlanResponse requestPlan(const PromptBundle& prompt, Transport& transport,
                         const world::SceneCatalog& catalog, const GatewayOptions& options) {
    PromptBundle current = prompt;
    std::string last_error;
    std::string last_raw;
    for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        const std::string response = transport.complete(current);
        try {
            return parsePlanResponse(response, catalog);
        } catch (const ValidationError& e) {
            last_error = e.what();
            last_raw = e.raw_response;
            current = withDiagnostics(current, last_error);
        }
    }
    throw ValidationError("no valid plan after " + std::to_string(options.max_attempts) +
                              " attempts; last error: " + last_error,
                          last_raw);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<CandidateProposal> requestGreedyCandidates(const PromptBundle& prompt, int budget,
                                                       Transport& transport,
                                                       const world::SceneCatalog& catalog,
                                                       const GatewayOptions& options) {
    if (budget < 1) throw std::invalid_argument("requestGreedyCandidates: budget must be >= 1");

    PromptBundle current = prompt;
    std::string last_error;
    std::string last_raw;
    for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        const std::string response = transport.complete(current);
        try {
            const auto blocks = extractBlocks(response);
            const auto* cands = findBlock(blocks, "CANDIDATES");
            if (!cands) throw ValidationError("response is missing the CANDIDATES block", response);
            const auto lines = nonEmptyLines(cands->body);
            if (lines.empty()) throw ValidationError("CANDIDATES block is empty", response);

            const auto* control = findBlock(blocks, "CONTROL");
            std::vector<ControlLine> controls;
            if (control) {
                for (const auto& line : nonEmptyLines(control->body)) {
                    controls.push_back(parseControlLine(line, response));
                }
                if (controls.size() != lines.size()) {
                    throw ValidationError("CONTROL block count does not match CANDIDATES",
                                          response);
                }
            }

            std::vector<CandidateProposal> all;
            for (size_t l = 0; l < lines.size(); ++l) {
                const auto bar = lines[l].rfind('|');
                if (bar == std::string::npos) {
                    throw ValidationError("CANDIDATES line '" + lines[l] +
                                              "' must be '<call> | <logprob>'",
                                          response);
                }
                CandidateProposal c;
                try {
                    c.primitive = world::parsePrimitiveCall(lines[l].substr(0, bar));
                    c.raw_logprob = std::stod(lines[l].substr(bar + 1));
                } catch (const std::exception& e) {
                    throw ValidationError(std::string("CANDIDATES line invalid: ") + e.what(),
                                          response);
                }
                if (!controls.empty()) {
                    c.mode = controls[l].mode;
                    c.preset = controls[l].preset;
                }
                const auto* pref = findBlock(blocks, "PREF[" + std::to_string(l + 1) + "]");
                if (pref) {
                    validatePref(pref->body, catalog, static_cast<int>(l + 1), response);
                    c.pref_source = pref->body;
                }
                all.push_back(std::move(c));
            }

            // Top `budget` by raw score; softmax over the kept set keeps
            // the raw ordering.
            std::vector<size_t> order(all.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                return all[a].raw_logprob > all[b].raw_logprob;
            });
            order.resize(std::min<size_t>(order.size(), static_cast<size_t>(budget)));

            std::vector<CandidateProposal> kept;
            std::vector<double> logits;
            for (size_t idx : order) {
                kept.push_back(all[idx]);
                logits.push_back(all[idx].raw_logprob);
            }
            const auto probs = softmax(logits);
            for (size_t i = 0; i < kept.size(); ++i) kept[i].s_task = probs[i];
            return kept;
        } catch (const ValidationError& e) {
            last_error = e.what();
            last_raw = e.raw_response;
            current = withDiagnostics(current, last_error);
        }
    }
    throw ValidationError("no valid candidates after " + std::to_string(options.max_attempts) +
                              " attempts; last error: " + last_error,
                          last_raw);
}

std::vector<planner::GreedyCandidate> toGreedyCandidates(
    const std::vector<CandidateProposal>& proposals) {
    std::vector<planner::GreedyCandidate> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals) {
        planner::GreedyCandidate c;
        c.primitive = p.primitive;
        c.s_task = p.s_task;
        if (!p.pref_source.empty()) c.preference = dsl::parse(p.pref_source);
        c.mode = p.mode;
        c.preset = p.preset;
        c.params = safety::presetParams(safety::presetFromName(p.preset));
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace prefplan::llm
