#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefplan/world.hpp"

namespace prefplan::dsl {

enum class NodeKind {
    kGetPose,
    kPositionNorm,
    kGreatCircleDistance,
    kPointingInDirection,
    kRotationAngle,
    kThreshold,
    kLinear,
    kNormal,
    kAnd,
    kOr,
    kStateRef,
    kNextStateRef,
    kActionRef,
    kNumber,
    kString,
    kAxisList,
    kVector,
    kBool,
};

/// Static value categories. Metric positions accept non-negative number
/// literals; Prob positions accept number literals in [0, 1].
enum class ValueType { kProb, kMetric, kNumber, kPose, kState, kAction, kString, kAxisList, kVector, kBool };

struct SourceLoc {
    int line = 1;
    int column = 1;
};

struct Diagnostic {
    SourceLoc loc;
    std::string message;

    std::string render() const;
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(Diagnostic d) : std::runtime_error(d.render()), diagnostic(std::move(d)) {}
    Diagnostic diagnostic;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// AST node with value semantics. Call arguments are stored in canonical
/// parameter order with defaults materialized, so two sources that differ
/// only in keyword spelling or omitted defaults parse to equal trees.
struct Node {
    NodeKind kind = NodeKind::kNumber;
    SourceLoc loc;
    std::vector<Node> children;

    double number = 0.0;
    std::string text;           // kString
    std::array<bool, 3> axes{};  // kAxisList (x, y, z membership)
    Eigen::Vector3d vec{0.0, 0.0, 0.0};
    bool flag = false;  // kBool
};

bool structurallyEqual(const Node& a, const Node& b);

struct PreferenceExpr {
    Node root;

    bool operator==(const PreferenceExpr& other) const {
        return structurallyEqual(root, other.root);
    }
};

/// Parse one preference-function expression. Performs syntax, arity,
/// keyword, identifier and local type checking (the root must be
/// Prob-typed). Scene-dependent checks live in typecheck().
PreferenceExpr parse(std::string_view source);

/// Scene-dependent validation: object/frame names against the catalog and
/// numeric range rules (std_dev > 0, t_1 < t_2, unit axes, literal
/// ranges). Returns an empty list when the AST is valid.
std::vector<Diagnostic> typecheck(const PreferenceExpr& expr, const world::SceneCatalog& catalog);

/// Canonical source text; parse(prettyPrint(e)) is structurally equal to e.
std::string prettyPrint(const PreferenceExpr& expr);

/// Evaluation context: the current state, the action under evaluation and
/// a transition hook for `next_state`. The predicted next state is
/// computed at most once and cached.
class EvalContext {
public:
    EvalContext(const world::WorldState& state, std::function<world::WorldState()> predict_next)
        : state_(&state), predict_(std::move(predict_next)) {}

    explicit EvalContext(const world::WorldState& state) : state_(&state) {}

    static EvalContext forSkill(const world::WorldState& state,
                                const world::PrimitiveInstance& prim, const world::Action& action);

    /// Context whose next state was already computed elsewhere (shared
    /// with a planner rollout).
    static EvalContext withNextState(const world::WorldState& state, world::WorldState next);

    const world::WorldState& state() const { return *state_; }
    const world::WorldState& nextState() const;

private:
    const world::WorldState* state_;
    std::function<world::WorldState()> predict_;
    mutable std::optional<world::WorldState> next_cache_;
};

/// Evaluate a parsed and typechecked expression to a probability in
/// [0, 1]. Metric errors (e.g. coincident positions) surface as
/// EvalError, never as 0.
double evaluate(const PreferenceExpr& expr, const EvalContext& ctx);

/// The building-block reference listing embedded into LLM prompts.
const std::string& buildingBlocksReference();

/// A preference that is satisfied everywhere (used for steps without any
/// stated preference).
PreferenceExpr alwaysTrue();

}  // namespace prefplan::dsl
