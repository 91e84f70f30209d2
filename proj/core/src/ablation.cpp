#include "prefplan/ablation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "prefplan/collision.hpp"
#include "prefplan/parallel.hpp"

namespace prefplan::ablation {

namespace {

std::string formatDouble(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string joinLines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    if (!out.empty()) out.pop_back();
    return out;
}

}  // namespace

std::string agentName(Agent agent) {
    switch (agent) {
        case Agent::kBaseline1: return "baseline1";
        case Agent::kBaseline2: return "baseline2";
        case Agent::kOracle: return "oracle";
        case Agent::kOurs: return "ours";
    }
    return "?";
}

Agent agentFromName(const std::string& name) {
    if (name == "baseline1") return Agent::kBaseline1;
    if (name == "baseline2") return Agent::kBaseline2;
    if (name == "oracle") return Agent::kOracle;
    if (name == "ours") return Agent::kOurs;
    throw std::invalid_argument("unknown agent '" + name + "'");
}

planner::PlanSkeleton TrialSpec::baseSkeleton() const {
    planner::PlanSkeleton skeleton;
    for (size_t t = 0; t < plan_lines.size(); ++t) {
        planner::SkeletonStep step;
        step.primitive = world::parsePrimitiveCall(plan_lines[t]);
        std::istringstream is(control_lines[t]);
        std::string mode_s, preset_s;
        is >> mode_s >> preset_s;
        step.mode = safety::modeFromName(mode_s);
        step.preset = preset_s;
        step.params = safety::presetParams(safety::presetFromName(preset_s));
        skeleton.steps.push_back(std::move(step));
    }
    return skeleton;
}

const TrialSpec& Suite::byId(const std::string& id) const {
    for (const auto& t : tasks) {
        if (t.task_id == id) return t;
    }
    throw std::invalid_argument("unknown task '" + id + "'");
}

Suite loadSuite(const std::string& json_text, const std::filesystem::path& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("suite JSON: ") + e.what());
    }
    Suite suite;
    for (const auto& tj : j.at("tasks")) {
        TrialSpec spec;
        spec.task_id = tj.at("id").get<std::string>();
        const auto scenario_path = base_dir / tj.at("scenario").get<std::string>();
        std::ifstream in(scenario_path);
        if (!in) {
            throw std::invalid_argument("suite: cannot open scenario " + scenario_path.string());
        }
        std::stringstream buf;
        buf << in.rdbuf();
        spec.scenario = world::loadScenario(buf.str());
        spec.instruction = tj.at("instruction").get<std::string>();
        for (const auto& line : tj.at("plan")) spec.plan_lines.push_back(line.get<std::string>());
        for (const auto& line : tj.at("control")) {
            spec.control_lines.push_back(line.get<std::string>());
        }
        for (const auto& src : tj.at("oracle_prefs")) {
            spec.oracle_pref_sources.push_back(src.get<std::string>());
        }
        if (tj.contains("trivial_oracle")) spec.trivial_oracle = tj.at("trivial_oracle").get<bool>();
        spec.orientation_definition = tj.at("orientation").get<std::string>();
        const auto& resp = tj.at("response");
        if (resp.is_array()) {
            for (const auto& line : resp) {
                spec.canned_response += line.get<std::string>();
                spec.canned_response += '\n';
            }
        } else {
            spec.canned_response = resp.get<std::string>();
        }

        if (spec.plan_lines.empty() || spec.plan_lines.size() != spec.control_lines.size() ||
            spec.plan_lines.size() != spec.oracle_pref_sources.size()) {
            throw std::invalid_argument("suite task '" + spec.task_id +
                                        "': plan, control and oracle_prefs lengths must match");
        }
        const auto catalog = world::makeCatalog(spec.scenario.initial);
        for (const auto& src : spec.oracle_pref_sources) {
            const auto expr = dsl::parse(src);
            const auto diags = dsl::typecheck(expr, catalog);
            if (!diags.empty()) {
                throw std::invalid_argument("suite task '" + spec.task_id +
                                            "': oracle preference invalid: " +
                                            diags.front().render());
            }
        }
        spec.baseSkeleton();  // validates plan/control syntax
        suite.tasks.push_back(std::move(spec));
    }
    if (suite.tasks.empty()) throw std::invalid_argument("suite has no tasks");
    return suite;
}

world::WorldState jitterState(const world::Scenario& scenario, rng::Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        world::WorldState state = scenario.initial;
        for (auto& [id, obj] : state.objects) {
            auto jit = scenario.jitter.find(id);
            if (jit == scenario.jitter.end()) continue;
            const auto& range = jit->second;
            const Eigen::Vector3d dp(rng.uniform(-range.position.x(), range.position.x()),
                                     rng.uniform(-range.position.y(), range.position.y()),
                                     rng.uniform(-range.position.z(), range.position.z()));
            const double dyaw = rng.uniform(-range.yaw, range.yaw);
            obj.pose = geom::makePose(
                obj.pose.position + dp,
                Eigen::Quaterniond(Eigen::AngleAxisd(dyaw, Eigen::Vector3d::UnitZ())) *
                    obj.pose.orientation);
        }
        bool ok = true;
        for (auto a = state.objects.begin(); a != state.objects.end() && ok; ++a) {
            for (auto b = std::next(a); b != state.objects.end(); ++b) {
                if (collision::separation(a->second.shape, a->second.pose, b->second.shape,
                                          b->second.pose)
                        .intersecting) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) return state;
    }
    return scenario.initial;  // jitter ranges leave no room; fall back
}

llm::PromptBundle taskPrompt(const Suite& suite, size_t task_index, const AblationConfig& config) {
    const TrialSpec& task = suite.tasks.at(task_index);

    // Draw in-context examples from the other tasks, seeded per task.
    std::vector<size_t> pool;
    for (size_t i = 0; i < suite.tasks.size(); ++i) {
        if (i != task_index) pool.push_back(i);
    }
    rng::Rng rng(rng::deriveSeed(config.seed, rng::hashBytes("examples"),
                                 static_cast<std::uint64_t>(task_index)));
    std::vector<llm::InContextExample> examples;
    const int want = std::min<int>(config.examples_per_prompt, static_cast<int>(pool.size()));
    for (int k = 0; k < want; ++k) {
        const size_t pick = static_cast<size_t>(rng.below(pool.size()));
        const TrialSpec& ex = suite.tasks[pool[pick]];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        examples.push_back({llm::describeState(ex.scenario.initial), ex.orientation_definition,
                            ex.instruction, joinLines(ex.plan_lines), joinLines(ex.control_lines),
                            ex.canned_response});
    }

    const llm::ScenarioContext ctx{llm::describeState(task.scenario.initial),
                                   task.orientation_definition};
    return llm::buildPrompt(ctx, task.instruction, examples, joinLines(task.plan_lines),
                            joinLines(task.control_lines));
}

int generateFixtures(const Suite& suite, const AblationConfig& config, llm::FixtureStore& store) {
    int written = 0;
    for (size_t k = 0; k < suite.tasks.size(); ++k) {
        const TrialSpec& task = suite.tasks[k];
        // Fail at generation time if a canned response would not survive
        // the gateway's validation gate.
        const auto catalog = world::makeCatalog(task.scenario.initial);
        const auto parsed = llm::parsePlanResponse(task.canned_response, catalog);
        if (parsed.steps.size() != task.plan_lines.size()) {
            throw std::invalid_argument("task '" + task.task_id +
                                        "': canned response plan length mismatch");
        }
        store.record(taskPrompt(suite, k, config).fullText(), task.canned_response);
        ++written;
    }
    return written;
}

namespace {

struct AgentObjective {
    planner::SequenceObjective objective;
    bool uses_generated_prefs = false;
    bool uses_oracle_prefs = false;
};

AgentObjective agentObjective(Agent agent) {
    AgentObjective out;
    switch (agent) {
        case Agent::kBaseline1:
            out.objective.evaluate_preferences = false;
            out.objective.early_zero_break = true;
            out.objective.score = [](const std::vector<planner::StepScore>& f) {
                double p = 1.0;
                for (const auto& s : f) p *= s.q;
                return p;
            };
            break;
        case Agent::kBaseline2:
            out.uses_generated_prefs = true;
            out.objective.evaluate_preferences = true;
            out.objective.early_zero_break = false;  // additive score never annihilates
            out.objective.score = [](const std::vector<planner::StepScore>& f) {
                double s_sum = 0.0;
                for (const auto& s : f) s_sum += s.q + s.f;
                return s_sum;
            };
            break;
        case Agent::kOracle:
            out.uses_oracle_prefs = true;
            out.objective.evaluate_preferences = true;
            out.objective.early_zero_break = true;
            out.objective.score = [](const std::vector<planner::StepScore>& f) {
                double p = 1.0;
                for (const auto& s : f) p *= s.q * s.f;
                return p;
            };
            break;
        case Agent::kOurs:
            out.uses_generated_prefs = true;
            out.objective.evaluate_preferences = true;
            out.objective.early_zero_break = true;
            out.objective.score = [](const std::vector<planner::StepScore>& f) {
                double p = 1.0;
                for (const auto& s : f) p *= s.q * s.f;
                return p;
            };
            break;
    }
    return out;
}

double mean(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
}

}  // namespace

std::pair<double, double> bootstrapCi(const std::vector<double>& values, int resamples,
                                      std::uint64_t seed) {
    if (values.empty()) return {0.0, 0.0};
    rng::Rng rng(seed);
    std::vector<double> means(resamples);
    for (int b = 0; b < resamples; ++b) {
        double acc = 0.0;
        for (size_t i = 0; i < values.size(); ++i) {
            acc += values[rng.below(values.size())];
        }
        means[b] = acc / double(values.size());
    }
    std::sort(means.begin(), means.end());
    const auto lo_idx = static_cast<size_t>(std::floor(0.025 * (resamples - 1)));
    const auto hi_idx = static_cast<size_t>(std::ceil(0.975 * (resamples - 1)));
    const double m = mean(values);
    return {std::min(means[lo_idx], m), std::max(means[hi_idx], m)};
}

AblationReport runAblation(const Suite& suite, const AblationConfig& config) {
    AblationReport report;

    bool needs_fixtures = false;
    for (Agent a : config.agents) {
        const auto obj = agentObjective(a);
        needs_fixtures = needs_fixtures || obj.uses_generated_prefs;
    }
    std::optional<llm::FixtureStore> store;
    if (needs_fixtures) store.emplace(config.fixtures_dir);

    for (size_t k = 0; k < suite.tasks.size(); ++k) {
        const TrialSpec& task = suite.tasks[k];
        const auto catalog = world::makeCatalog(task.scenario.initial);

        std::vector<dsl::PreferenceExpr> oracle_prefs;
        for (const auto& src : task.oracle_pref_sources) oracle_prefs.push_back(dsl::parse(src));

        // Generated preference functions come from the gateway (replay).
        std::vector<dsl::PreferenceExpr> generated_prefs;
        if (needs_fixtures) {
            llm::ReplayTransport transport(*store);
            const auto response =
                llm::requestPlan(taskPrompt(suite, k, config), transport, catalog);
            if (response.steps.size() != task.plan_lines.size()) {
                throw llm::GatewayError("task '" + task.task_id +
                                        "': generated plan length mismatch");
            }
            for (const auto& step : response.steps) {
                generated_prefs.push_back(dsl::parse(step.pref_source));
            }
        }

        const planner::PlanSkeleton base = task.baseSkeleton();

        for (Agent agent : config.agents) {
            const AgentObjective ao = agentObjective(agent);
            planner::PlanSkeleton skeleton = base;
            if (ao.uses_oracle_prefs) {
                for (size_t t = 0; t < skeleton.steps.size(); ++t) {
                    skeleton.steps[t].preference = oracle_prefs[t];
                }
            } else if (ao.uses_generated_prefs) {
                for (size_t t = 0; t < skeleton.steps.size(); ++t) {
                    skeleton.steps[t].preference = generated_prefs[t];
                }
            }

            CellReport cell;
            cell.agent = agentName(agent);
            cell.task = task.task_id;
            cell.n = config.rollouts;
            cell.rollouts.resize(config.rollouts);

            const std::uint64_t agent_hash = rng::hashBytes(cell.agent);
            const std::uint64_t task_hash = rng::hashBytes(cell.task);
            parallelFor(config.rollouts, config.threads, [&](int r) {
                const std::uint64_t rollout_seed = rng::deriveSeed(
                    config.seed, task_hash, agent_hash, static_cast<std::uint64_t>(r));
                rng::Rng jitter_rng(rng::deriveSeed(rollout_seed, rng::hashBytes("jitter")));
                const world::WorldState start = jitterState(task.scenario, jitter_rng);

                planner::PlannerConfig pc = config.planner;
                pc.seed = rollout_seed;
                pc.threads = 1;  // parallelism lives at the rollout level
                const planner::PlanResult plan =
                    planner::optimizeSequence(start, skeleton, pc, ao.objective);

                RolloutRecord rec;
                rec.rollout = r;
                rec.objective = plan.objective;
                bool success = true;
                double pref = 1.0;
                for (size_t t = 0; t < skeleton.steps.size(); ++t) {
                    const auto& s_t = plan.trace[t];
                    success = success &&
                              world::hardFeasible(s_t, skeleton.steps[t].primitive, plan.actions[t]);
                    const auto ctx = dsl::EvalContext::withNextState(s_t, plan.trace[t + 1]);
                    pref *= dsl::evaluate(oracle_prefs[t], ctx);
                }
                rec.success = success;
                rec.oracle_pref = pref;
                cell.rollouts[r] = rec;
            });

            std::vector<double> succ, pref;
            succ.reserve(cell.rollouts.size());
            pref.reserve(cell.rollouts.size());
            for (const auto& r : cell.rollouts) {
                succ.push_back(r.success ? 1.0 : 0.0);
                pref.push_back(r.oracle_pref);
            }
            cell.success_mean = mean(succ);
            cell.pref_mean = mean(pref);
            const auto ci_seed_s =
                rng::deriveSeed(config.seed, rng::hashBytes("bootstrap_s"), task_hash, agent_hash);
            const auto ci_seed_p =
                rng::deriveSeed(config.seed, rng::hashBytes("bootstrap_p"), task_hash, agent_hash);
            std::tie(cell.success_ci_lo, cell.success_ci_hi) =
                bootstrapCi(succ, config.bootstrap_samples, ci_seed_s);
            std::tie(cell.pref_ci_lo, cell.pref_ci_hi) =
                bootstrapCi(pref, config.bootstrap_samples, ci_seed_p);
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

const CellReport& AblationReport::cell(const std::string& agent, const std::string& task) const {
    for (const auto& c : cells) {
        if (c.agent == agent && c.task == task) return c;
    }
    throw std::invalid_argument("no report cell for " + agent + "/" + task);
}

std::string AblationReport::toCsv() const {
    std::string out = "agent,task,success_mean,pref_mean,ci_lo,ci_hi,n\n";
    for (const auto& c : cells) {
        out += c.agent + "," + c.task + "," + formatDouble(c.success_mean) + "," +
               formatDouble(c.pref_mean) + "," + formatDouble(c.pref_ci_lo) + "," +
               formatDouble(c.pref_ci_hi) + "," + std::to_string(c.n) + "\n";
    }
    return out;
}

std::string AblationReport::toJson() const {
    nlohmann::json j;
    auto& arr = j["cells"] = nlohmann::json::array();
    for (const auto& c : cells) {
        arr.push_back(nlohmann::json{{"agent", c.agent},
                                     {"task", c.task},
                                     {"success_mean", c.success_mean},
                                     {"pref_mean", c.pref_mean},
                                     {"success_ci", {c.success_ci_lo, c.success_ci_hi}},
                                     {"pref_ci", {c.pref_ci_lo, c.pref_ci_hi}},
                                     {"n", c.n}});
    }
    return j.dump(2);
}

std::string AblationReport::rolloutsCsv() const {
    std::string out = "agent,task,rollout,success,oracle_pref,objective\n";
    for (const auto& c : cells) {
        for (const auto& r : c.rollouts) {
            out += c.agent + "," + c.task + "," + std::to_string(r.rollout) + "," +
                   (r.success ? "1" : "0") + "," + formatDouble(r.oracle_pref) + "," +
                   formatDouble(r.objective) + "\n";
        }
    }
    return out;
}

std::string AblationReport::whiskerData() const {
    // One row per cell: x-index, labels, then mean/lo/hi for preference
    // score and success rate (gnuplot `using`-friendly).
    std::string out = "# idx agent task pref_mean pref_lo pref_hi success_mean success_lo success_hi\n";
    int idx = 0;
    for (const auto& c : cells) {
        out += std::to_string(idx++) + " " + c.agent + " " + c.task + " " +
               formatDouble(c.pref_mean) + " " + formatDouble(c.pref_ci_lo) + " " +
               formatDouble(c.pref_ci_hi) + " " + formatDouble(c.success_mean) + " " +
               formatDouble(c.success_ci_lo) + " " + formatDouble(c.success_ci_hi) + "\n";
    }
    return out;
}

}  // namespace prefplan::ablation
