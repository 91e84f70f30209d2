#include <cmath>

#include "prefplan/dsl.hpp"

namespace prefplan::dsl {

namespace {

double normalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

geom::AxisSet toAxisSet(const Node& n) {
    geom::AxisSet out;
    out.x = n.axes[0];
    out.y = n.axes[1];
    out.z = n.axes[2];
    return out;
}

class Evaluator {
public:
    explicit Evaluator(const EvalContext& ctx) : ctx_(ctx) {}

    double prob(const Node& n) {
        switch (n.kind) {
            case NodeKind::kNumber:
                return n.number;
            case NodeKind::kThreshold: {
                const double m = metric(n.children[0]);
                const bool up = n.children[2].flag;
                const bool above = m >= n.children[1].number;
                return above == up ? 1.0 : 0.0;
            }
            case NodeKind::kLinear: {
                const double m = metric(n.children[0]);
                const double t1 = n.children[1].number;
                const double t2 = n.children[2].number;
                double base;
                if (m < t1) {
                    base = 0.0;
                } else if (m >= t2) {
                    base = 1.0;
                } else {
                    base = (m - t1) / (t2 - t1);
                }
                return n.children[3].flag ? base : 1.0 - base;
            }
            case NodeKind::kNormal: {
                const double m = metric(n.children[0]);
                const double z = (m - n.children[1].number) / n.children[2].number;
                const double phi = normalCdf(z);
                return n.children[3].flag ? phi : 1.0 - phi;
            }
            case NodeKind::kAnd:
                return prob(n.children[0]) * prob(n.children[1]);
            case NodeKind::kOr: {
                const double p1 = prob(n.children[0]);
                const double p2 = prob(n.children[1]);
                return p1 * p2 + p1 * (1.0 - p2) + p2 * (1.0 - p1);
            }
            default:
                throw EvalError("expression is not prob-typed");
        }
    }

private:
    double metric(const Node& n) {
        try {
            switch (n.kind) {
                case NodeKind::kNumber:
                    return n.number;
                case NodeKind::kPositionNorm:
                    return geom::positionNorm(pose(n.children[0]), pose(n.children[1]),
                                              geom::parseNorm(n.children[2].text),
                                              toAxisSet(n.children[3]));
                case NodeKind::kGreatCircleDistance:
                    return geom::greatCircleDistance(pose(n.children[0]), pose(n.children[1]));
                case NodeKind::kPointingInDirection:
                    return geom::pointingInDirectionMetric(pose(n.children[0]), pose(n.children[1]),
                                                           n.children[2].vec);
                case NodeKind::kRotationAngle:
                    return geom::rotationAngle(pose(n.children[0]), pose(n.children[1]),
                                               n.children[2].vec);
                default:
                    throw EvalError("expression is not metric-typed");
            }
        } catch (const std::invalid_argument& e) {
            throw EvalError(std::string("metric error at line ") + std::to_string(n.loc.line) +
                            ": " + e.what());
        }
    }

    geom::Pose pose(const Node& n) {
        if (n.kind != NodeKind::kGetPose) throw EvalError("expression is not pose-typed");
        const world::WorldState& st = stateOf(n.children[0]);
        try {
            return world::getPose(st, n.children[1].text, n.children[2].text);
        } catch (const world::FrameError& e) {
            throw EvalError(std::string("getPose at line ") + std::to_string(n.loc.line) + ": " +
                            e.what());
        }
    }

    const world::WorldState& stateOf(const Node& n) {
        if (n.kind == NodeKind::kStateRef) return ctx_.state();
        if (n.kind == NodeKind::kNextStateRef) return ctx_.nextState();
        throw EvalError("expected state or next_state");
    }

    const EvalContext& ctx_;
};

}  // namespace

EvalContext EvalContext::forSkill(const world::WorldState& state,
                                  const world::PrimitiveInstance& prim,
                                  const world::Action& action) {
    return EvalContext(state,
                       [&state, prim, action]() { return world::transition(state, prim, action); });
}

EvalContext EvalContext::withNextState(const world::WorldState& state, world::WorldState next) {
    EvalContext ctx(state);
    ctx.next_cache_ = std::move(next);
    return ctx;
}

const world::WorldState& EvalContext::nextState() const {
    if (!next_cache_) {
        if (!predict_) {
            throw EvalError("next_state is not available in this context (no action to predict)");
        }
        next_cache_ = predict_();
    }
    return *next_cache_;
}

double evaluate(const PreferenceExpr& expr, const EvalContext& ctx) {
    Evaluator ev(ctx);
    return ev.prob(expr.root);
}

}  // namespace prefplan::dsl
