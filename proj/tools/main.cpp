#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prefplan/ablation.hpp"
#include "prefplan/llm.hpp"
#include "prefplan/planner.hpp"
#include "prefplan/safety.hpp"
#include "prefplan/world.hpp"

namespace {

using namespace prefplan;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitPlanning = 2;
constexpr int kExitTransport = 3;

std::string readFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void writeFile(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

struct PlannerFlags {
    std::uint64_t seed = 0;
    int samples = 1024;
    int cem_iters = 4;
    int threads = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "planner RNG seed");
        cmd->add_option("--samples", samples, "shooting samples per batch");
        cmd->add_option("--cem-iters", cem_iters, "CEM refinement iterations");
        cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
    }

    planner::PlannerConfig config() const {
        planner::PlannerConfig cfg;
        cfg.seed = seed;
        cfg.num_samples = samples;
        cfg.cem_iterations = cem_iters;
        cfg.threads = threads;
        return cfg;
    }
};

std::vector<llm::InContextExample> examplePool(const ablation::Suite& suite,
                                               const std::string& exclude_instruction,
                                               std::uint64_t seed, int count) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < suite.tasks.size(); ++i) {
        if (suite.tasks[i].instruction != exclude_instruction) pool.push_back(i);
    }
    rng::Rng rng(rng::deriveSeed(seed, rng::hashBytes("cli_examples")));
    std::vector<llm::InContextExample> out;
    while (!pool.empty() && static_cast<int>(out.size()) < count) {
        const size_t pick = static_cast<size_t>(rng.below(pool.size()));
        const auto& t = suite.tasks[pool[pick]];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        std::string plan_text, control_text;
        for (const auto& l : t.plan_lines) plan_text += l + "\n";
        for (const auto& l : t.control_lines) control_text += l + "\n";
        out.push_back({llm::describeState(t.scenario.initial), t.orientation_definition,
                       t.instruction, plan_text, control_text, t.canned_response});
    }
    return out;
}

safety::HumanStream humanStreamFromScript(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    auto parseKeypoints = [](const nlohmann::json& arr) {
        std::vector<Eigen::Vector3d> kps;
        for (const auto& kj : arr) {
            kps.emplace_back(kj[0].get<double>(), kj[1].get<double>(), kj[2].get<double>());
        }
        return kps;
    };
    if (j.contains("velocity")) {
        const auto base = parseKeypoints(j.at("keypoints"));
        const Eigen::Vector3d vel(j["velocity"][0].get<double>(), j["velocity"][1].get<double>(),
                                  j["velocity"][2].get<double>());
        return [base, vel](double t) {
            auto kps = base;
            for (auto& kp : kps) kp += vel * t;
            return kps;
        };
    }
    struct Frame {
        double t;
        std::vector<Eigen::Vector3d> kps;
    };
    std::vector<Frame> frames;
    for (const auto& fj : j.at("frames")) {
        frames.push_back({fj.at("t").get<double>(), parseKeypoints(fj.at("keypoints"))});
    }
    if (frames.empty()) throw std::invalid_argument("human script has no frames");
    return [frames](double t) {
        if (t <= frames.front().t) return frames.front().kps;
        if (t >= frames.back().t) return frames.back().kps;
        for (size_t i = 0; i + 1 < frames.size(); ++i) {
            if (t > frames[i + 1].t) continue;
            const double f = (t - frames[i].t) / (frames[i + 1].t - frames[i].t);
            auto kps = frames[i].kps;
            for (size_t k = 0; k < kps.size() && k < frames[i + 1].kps.size(); ++k) {
                kps[k] = (1.0 - f) * kps[k] + f * frames[i + 1].kps[k];
            }
            return kps;
        }
        return frames.back().kps;
    };
}

// ---------------------------------------------------------------------------

struct PlanArgs {
    std::string scenario_path;
    std::string instruction;
    std::string plan_path;
    std::string fixtures_dir;
    std::string examples_path;
    std::string orientation = "Left is negative y, right is positive y; the human sits toward positive x; up is positive z.";
    std::string out_dir;
    bool live = false;
    bool record = false;
    PlannerFlags flags;
};

int runPlan(const PlanArgs& args) {
    const auto scenario = world::loadScenario(readFile(args.scenario_path));
    const auto& initial = scenario.initial;
    planner::PlannerConfig config = args.flags.config();

    planner::SkeletonSource skeleton_source;
    planner::CandidateSource candidate_source;

    std::optional<llm::FixtureStore> store;
    std::unique_ptr<llm::Transport> transport;
    std::optional<ablation::Suite> examples_suite;

    if (!args.plan_path.empty()) {
        const auto skeleton = planner::skeletonFromJson(readFile(args.plan_path), initial);
        skeleton_source = [skeleton](const world::WorldState&) { return skeleton; };
        candidate_source = [skeleton](const world::WorldState& s, int) {
            std::vector<planner::GreedyCandidate> out;
            for (const auto& step : skeleton.steps) {
                planner::GreedyCandidate c;
                c.primitive = step.primitive;
                c.preference = step.preference;
                c.mode = step.mode;
                c.preset = step.preset;
                c.params = step.params;
                c.s_task = 1.0 / double(skeleton.steps.size());
                out.push_back(std::move(c));
            }
            (void)s;
            return out;
        };
    } else {
        if (args.examples_path.empty()) {
            throw std::invalid_argument("--instruction mode requires --examples (a suite file)");
        }
        examples_suite = ablation::loadSuite(readFile(args.examples_path),
                                             fs::path(args.examples_path).parent_path());
        if (args.live) {
            auto live = std::make_unique<llm::LiveTransport>(llm::LiveConfig::fromEnvironment());
            if (args.record) {
                if (args.fixtures_dir.empty()) {
                    throw std::invalid_argument("--record requires --fixtures");
                }
                store.emplace(args.fixtures_dir);
                transport = std::make_unique<llm::RecordingTransport>(*live, *store);
                // keep the live transport alive alongside the recorder
                static std::unique_ptr<llm::Transport> keep;
                keep = std::move(live);
            } else {
                transport = std::move(live);
            }
        } else {
            if (args.fixtures_dir.empty()) {
                throw std::invalid_argument("replay mode requires --fixtures (or pass --live)");
            }
            store.emplace(args.fixtures_dir);
            transport = std::make_unique<llm::ReplayTransport>(*store);
        }

        const auto examples =
            examplePool(*examples_suite, args.instruction, config.seed, 3);
        const std::string instruction = args.instruction;
        const std::string orientation = args.orientation;
        llm::Transport* tr = transport.get();
        skeleton_source = [=](const world::WorldState& s) {
            const llm::ScenarioContext ctx{llm::describeState(s), orientation};
            const auto prompt = llm::buildPrompt(ctx, instruction, examples);
            const auto response = llm::requestPlan(prompt, *tr, world::makeCatalog(s));
            return response.toSkeleton(s);
        };
        candidate_source = [=](const world::WorldState& s, int budget) {
            const llm::ScenarioContext ctx{llm::describeState(s), orientation};
            const auto prompt =
                llm::asGreedyPrompt(llm::buildPrompt(ctx, instruction, examples), budget);
            const auto proposals =
                llm::requestGreedyCandidates(prompt, budget, *tr, world::makeCatalog(s));
            return llm::toGreedyCandidates(proposals);
        };
    }

    try {
        const auto trace =
            planner::planAndExecute(initial, skeleton_source, candidate_source, config);
        const std::string json = planner::executionTraceToJson(trace, initial, config.seed);
        std::cout << json << "\n";
        if (!args.out_dir.empty()) writeFile(fs::path(args.out_dir) / "plan.json", json + "\n");
        std::cerr << "planned in " << trace.shoot_attempts.size() << " shoot attempt(s), "
                  << trace.greedy_steps.size() << " greedy step(s)\n";
        return kExitOk;
    } catch (const planner::GreedyBudgetExhausted& e) {
        const std::string json =
            planner::executionTraceToJson(e.trace, initial, config.seed);
        std::cout << json << "\n";
        if (!args.out_dir.empty()) writeFile(fs::path(args.out_dir) / "plan.json", json + "\n");
        std::cerr << "planning failed: " << e.what() << "\n";
        return kExitPlanning;
    }
}

// ---------------------------------------------------------------------------

struct ExecArgs {
    std::string plan_path;
    std::string scenario_path;
    std::string mode = "stop";
    std::string preset = "coexistence";
    std::string human_script;
    std::string out_dir = ".";
};

int runExec(const ExecArgs& args) {
    const auto scenario = world::loadScenario(readFile(args.scenario_path));
    const auto plan = nlohmann::json::parse(readFile(args.plan_path));

    const auto mode = safety::modeFromName(args.mode);
    const auto params = safety::presetParams(safety::presetFromName(args.preset));
    safety::ReachParams reach;

    safety::HumanStream human;
    if (!args.human_script.empty()) {
        human = humanStreamFromScript(readFile(args.human_script));
    } else if (scenario.initial.human) {
        const auto kps = scenario.initial.human->keypoints;
        human = [kps](double) { return kps; };
    }

    // Accept both `plan` outputs: a PlanResult ("actions") or an
    // execution trace ("executed").
    const char* key = plan.contains("actions") ? "actions" : "executed";
    if (!plan.contains(key)) throw std::invalid_argument("plan file has no actions");

    world::WorldState s = scenario.initial;
    safety::TimedTrajectory combined;
    combined.dt = safety::kDt;
    std::string events_text;
    double min_clearance = std::numeric_limits<double>::infinity();
    double max_speed_under_intersection = 0.0;
    bool all_completed = true;
    double t_offset = 0.0;

    for (const auto& aj : plan.at(key)) {
        world::PrimitiveInstance prim;
        prim.kind = world::primitiveFromName(aj.at("primitive").get<std::string>());
        prim.object = aj.at("object").get<std::string>();
        if (aj.contains("surface")) prim.surface = aj.at("surface").get<std::string>();
        world::Action action;
        for (const auto& v : aj.at("normalized")) action.params.push_back(v.get<double>());

        world::WorldState next = world::transition(s, prim, action);
        const auto traj = safety::planLinearTrajectory(s.ee_pose, next.ee_pose, params);
        auto shifted_human = human;
        if (human) {
            const double off = t_offset;
            shifted_human = [human, off](double t) { return human(t + off); };
        }
        const auto verify = safety::verifyAndScale(traj, mode, params, reach, shifted_human);

        for (const auto& wp : verify.trajectory.points) {
            auto shifted = wp;
            shifted.t += t_offset;
            combined.points.push_back(shifted);
        }
        t_offset = combined.points.empty() ? 0.0 : combined.points.back().t;
        for (const auto& e : verify.events) {
            auto ev = e;
            ev.t += 0.0;  // events carry absolute step-local times; keep step offset below
            events_text += safety::eventsToJsonLines({ev});
        }
        min_clearance = std::min(min_clearance, verify.min_human_clearance);
        max_speed_under_intersection =
            std::max(max_speed_under_intersection, verify.max_speed_under_intersection);
        all_completed = all_completed && verify.completed;
        s = std::move(next);
    }

    writeFile(fs::path(args.out_dir) / "trajectory.json", safety::trajectoryToJson(combined));
    writeFile(fs::path(args.out_dir) / "events.jsonl", events_text);
    std::cout << "completed=" << (all_completed ? "true" : "false")
              << " min_human_clearance=" << min_clearance
              << " max_speed_under_intersection=" << max_speed_under_intersection << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string suite_path;
    std::string agents = "baseline1,baseline2,oracle,ours";
    int rollouts = 100;
    std::uint64_t seed = 0;
    std::string fixtures_dir;
    std::string out_dir = ".";
    int threads = 1;
    int samples = 256;
    int cem_iters = 3;
};

int runAblate(const AblateArgs& args) {
    const auto suite = ablation::loadSuite(readFile(args.suite_path),
                                           fs::path(args.suite_path).parent_path());
    ablation::AblationConfig config;
    config.agents.clear();
    std::stringstream ss(args.agents);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (!name.empty()) config.agents.push_back(ablation::agentFromName(name));
    }
    if (config.agents.empty()) throw std::invalid_argument("no agents selected");
    config.rollouts = args.rollouts;
    config.seed = args.seed;
    config.threads = args.threads;
    config.planner.num_samples = args.samples;
    config.planner.cem_iterations = args.cem_iters;
    config.fixtures_dir = args.fixtures_dir;

    const auto report = ablation::runAblation(suite, config);
    const std::string csv = report.toCsv();
    std::cout << csv;
    writeFile(fs::path(args.out_dir) / "report.csv", csv);
    writeFile(fs::path(args.out_dir) / "report.json", report.toJson() + "\n");
    writeFile(fs::path(args.out_dir) / "rollouts.csv", report.rolloutsCsv());
    writeFile(fs::path(args.out_dir) / "whiskers.dat", report.whiskerData());
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct DslArgs {
    std::string source_path;
    std::string scenario_path;
    std::string state_path;
    std::string primitive;
    std::string action_json;
};

int runDslCheck(const DslArgs& args) {
    const std::string source = readFile(args.source_path);
    dsl::PreferenceExpr expr;
    try {
        expr = dsl::parse(source);
    } catch (const dsl::ParseError& e) {
        std::cout << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (!args.scenario_path.empty()) {
        const auto scenario = world::loadScenario(readFile(args.scenario_path));
        const auto diags = dsl::typecheck(expr, world::makeCatalog(scenario.initial));
        if (!diags.empty()) {
            for (const auto& d : diags) std::cout << "error: " << d.render() << "\n";
            return kExitInput;
        }
    }
    std::cout << "ok: " << dsl::prettyPrint(expr) << "\n";
    return kExitOk;
}

int runDslEval(const DslArgs& args) {
    const std::string source = readFile(args.source_path);
    dsl::PreferenceExpr expr;
    try {
        expr = dsl::parse(source);
    } catch (const dsl::ParseError& e) {
        std::cout << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (args.scenario_path.empty()) throw std::invalid_argument("dsl eval requires --scenario");
    auto scenario = world::loadScenario(readFile(args.scenario_path));
    if (!args.state_path.empty()) {
        scenario = world::loadScenario(readFile(args.state_path));
    }
    const auto diags = dsl::typecheck(expr, world::makeCatalog(scenario.initial));
    if (!diags.empty()) {
        for (const auto& d : diags) std::cout << "error: " << d.render() << "\n";
        return kExitInput;
    }
    double value = 0.0;
    if (!args.primitive.empty()) {
        const auto prim = world::parsePrimitiveCall(args.primitive);
        world::Action action;
        for (const auto& v : nlohmann::json::parse(args.action_json)) {
            action.params.push_back(v.get<double>());
        }
        const auto ctx = dsl::EvalContext::forSkill(scenario.initial, prim, action);
        value = dsl::evaluate(expr, ctx);
    } else {
        const dsl::EvalContext ctx(scenario.initial);
        value = dsl::evaluate(expr, ctx);
    }
    std::cout << std::setprecision(12) << value << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct FixturesArgs {
    std::string suite_path;
    std::string fixtures_dir;
    std::uint64_t seed = 0;
    int examples_per_prompt = 3;
};

int runFixturesGenerate(const FixturesArgs& args) {
    const auto suite = ablation::loadSuite(readFile(args.suite_path),
                                           fs::path(args.suite_path).parent_path());
    ablation::AblationConfig config;
    config.seed = args.seed;
    config.examples_per_prompt = args.examples_per_prompt;
    llm::FixtureStore store(args.fixtures_dir);
    const int n = ablation::generateFixtures(suite, config, store);
    std::cout << "wrote " << n << " fixtures to " << args.fixtures_dir << "\n";
    return kExitOk;
}

int runFixturesList(const FixturesArgs& args) {
    llm::FixtureStore store(args.fixtures_dir);
    for (const auto& h : store.hashes()) std::cout << h << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"preference-aware task and motion planning"};
    app.require_subcommand(1);

    PlanArgs plan_args;
    auto* plan_cmd = app.add_subcommand("plan", "plan a skill sequence for a scenario");
    plan_cmd->add_option("--scenario", plan_args.scenario_path, "scenario JSON")->required();
    plan_cmd->add_option("--instruction", plan_args.instruction, "natural-language instruction");
    plan_cmd->add_option("--plan", plan_args.plan_path, "skeleton JSON (bypasses the gateway)");
    plan_cmd->add_option("--fixtures", plan_args.fixtures_dir, "fixture directory");
    plan_cmd->add_option("--examples", plan_args.examples_path, "in-context example suite JSON");
    plan_cmd->add_option("--orientation", plan_args.orientation, "orientation definition text");
    plan_cmd->add_option("--out", plan_args.out_dir, "output directory");
    plan_cmd->add_flag("--live", plan_args.live, "use the live LLM endpoint");
    plan_cmd->add_flag("--record", plan_args.record, "record live responses as fixtures");
    plan_args.flags.attach(plan_cmd);

    ExecArgs exec_args;
    auto* exec_cmd = app.add_subcommand("exec", "execute a plan through the safety shield");
    exec_cmd->add_option("--plan", exec_args.plan_path, "plan JSON (output of `plan`)")->required();
    exec_cmd->add_option("--scenario", exec_args.scenario_path, "scenario JSON")->required();
    exec_cmd->add_option("--mode", exec_args.mode, "stop|contact|compliant");
    exec_cmd->add_option("--preset", exec_args.preset,
                         "coexistence|critical|beginner|intermediate|expert");
    exec_cmd->add_option("--human-script", exec_args.human_script, "timed human keypoints JSON");
    exec_cmd->add_option("--out", exec_args.out_dir, "output directory");

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "run the rearrangement ablation");
    ablate_cmd->add_option("--suite", ablate_args.suite_path, "trial suite JSON")->required();
    ablate_cmd->add_option("--agents", ablate_args.agents, "comma-separated agent list");
    ablate_cmd->add_option("--rollouts", ablate_args.rollouts, "rollouts per agent and task");
    ablate_cmd->add_option("--seed", ablate_args.seed, "root seed");
    ablate_cmd->add_option("--fixtures", ablate_args.fixtures_dir, "fixture directory");
    ablate_cmd->add_option("--out", ablate_args.out_dir, "output directory");
    ablate_cmd->add_option("--threads", ablate_args.threads, "rollout worker threads");
    ablate_cmd->add_option("--samples", ablate_args.samples, "shooting samples per batch");
    ablate_cmd->add_option("--cem-iters", ablate_args.cem_iters, "CEM iterations");

    DslArgs dsl_args;
    auto* dsl_cmd = app.add_subcommand("dsl", "preference-function tooling");
    auto* dsl_check = dsl_cmd->add_subcommand("check", "parse and typecheck a source file");
    dsl_check->add_option("--source", dsl_args.source_path, "DSL source file")->required();
    dsl_check->add_option("--scenario", dsl_args.scenario_path, "scenario for name resolution");
    auto* dsl_eval = dsl_cmd->add_subcommand("eval", "evaluate a source file");
    dsl_eval->add_option("--source", dsl_args.source_path, "DSL source file")->required();
    dsl_eval->add_option("--scenario", dsl_args.scenario_path, "scenario JSON")->required();
    dsl_eval->add_option("--state", dsl_args.state_path, "state override (scenario format)");
    dsl_eval->add_option("--primitive", dsl_args.primitive, "primitive call, e.g. pick(box)");
    dsl_eval->add_option("--action", dsl_args.action_json, "normalized action JSON array");

    FixturesArgs fixtures_args;
    auto* fixtures_cmd = app.add_subcommand("fixtures", "fixture store management");
    auto* fx_gen = fixtures_cmd->add_subcommand("generate", "record suite responses as fixtures");
    fx_gen->add_option("--suite", fixtures_args.suite_path, "trial suite JSON")->required();
    fx_gen->add_option("--fixtures", fixtures_args.fixtures_dir, "fixture directory")->required();
    fx_gen->add_option("--seed", fixtures_args.seed, "seed (must match the ablation seed)");
    fx_gen->add_option("--examples-per-prompt", fixtures_args.examples_per_prompt,
                       "in-context examples per prompt");
    auto* fx_list = fixtures_cmd->add_subcommand("list", "list fixture hashes");
    fx_list->add_option("--fixtures", fixtures_args.fixtures_dir, "fixture directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plan_cmd->parsed()) {
            if (plan_args.instruction.empty() == plan_args.plan_path.empty()) {
                std::cerr << "error: pass exactly one of --instruction or --plan\n";
                return kExitInput;
            }
            return runPlan(plan_args);
        }
        if (exec_cmd->parsed()) return runExec(exec_args);
        if (ablate_cmd->parsed()) return runAblate(ablate_args);
        if (dsl_cmd->parsed()) {
            if (dsl_check->parsed()) return runDslCheck(dsl_args);
            if (dsl_eval->parsed()) return runDslEval(dsl_args);
            std::cerr << "error: dsl requires a check or eval subcommand\n";
            return kExitInput;
        }
        if (fixtures_cmd->parsed()) {
            if (fx_gen->parsed()) return runFixturesGenerate(fixtures_args);
            if (fx_list->parsed()) return runFixturesList(fixtures_args);
            std::cerr << "error: fixtures requires a generate or list subcommand\n";
            return kExitInput;
        }
    } catch (const llm::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const llm::ValidationError& e) {
        std::cerr << "gateway validation error: " << e.what() << "\n";
        if (!e.raw_response.empty()) std::cerr << "raw response:\n" << e.raw_response << "\n";
        return kExitPlanning;
    } catch (const planner::PlanningError& e) {
        std::cerr << "planning error: " << e.what() << "\n";
        return kExitPlanning;
    } catch (const dsl::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
