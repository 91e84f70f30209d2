#include "prefplan/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

namespace prefplan::dsl {

namespace {

// ---------------------------------------------------------------------------
// Builtin signatures

enum class DefaultKind { kNone, kWorldFrame, kL2, kAllAxes, kUnitX, kTrue };

struct ParamSpec {
    const char* name;
    ValueType type;
    bool required;
    DefaultKind def = DefaultKind::kNone;
};

struct BuiltinSpec {
    const char* name;
    NodeKind kind;
    ValueType result;
    std::vector<ParamSpec> params;
};

const std::vector<BuiltinSpec>& builtins() {
    static const std::vector<BuiltinSpec> table = {
        {"getPose",
         NodeKind::kGetPose,
         ValueType::kPose,
         {{"state", ValueType::kState, true},
          {"obj", ValueType::kString, true},
          {"frame", ValueType::kString, false, DefaultKind::kWorldFrame}}},
        {"positionNorm",
         NodeKind::kPositionNorm,
         ValueType::kMetric,
         {{"pose_1", ValueType::kPose, true},
          {"pose_2", ValueType::kPose, true},
          {"norm", ValueType::kString, false, DefaultKind::kL2},
          {"axis", ValueType::kAxisList, false, DefaultKind::kAllAxes}}},
        {"greatCircleDistance",
         NodeKind::kGreatCircleDistance,
         ValueType::kMetric,
         {{"pose_1", ValueType::kPose, true}, {"pose_2", ValueType::kPose, true}}},
        {"pointingInDirectionMetric",
         NodeKind::kPointingInDirection,
         ValueType::kMetric,
         {{"pose_1", ValueType::kPose, true},
          {"pose_2", ValueType::kPose, true},
          {"main_axis", ValueType::kVector, false, DefaultKind::kUnitX}}},
        {"rotationAngle",
         NodeKind::kRotationAngle,
         ValueType::kMetric,
         {{"pose_1", ValueType::kPose, true},
          {"pose_2", ValueType::kPose, true},
          {"axis", ValueType::kVector, true}}},
        {"threshold",
         NodeKind::kThreshold,
         ValueType::kProb,
         {{"metric", ValueType::kMetric, true},
          {"t", ValueType::kNumber, true},
          {"direction", ValueType::kBool, false, DefaultKind::kTrue}}},
        {"linear",
         NodeKind::kLinear,
         ValueType::kProb,
         {{"metric", ValueType::kMetric, true},
          {"t_1", ValueType::kNumber, true},
          {"t_2", ValueType::kNumber, true},
          {"direction", ValueType::kBool, false, DefaultKind::kTrue}}},
        {"normal",
         NodeKind::kNormal,
         ValueType::kProb,
         {{"metric", ValueType::kMetric, true},
          {"mean", ValueType::kNumber, true},
          {"std_dev", ValueType::kNumber, true},
          {"direction", ValueType::kBool, false, DefaultKind::kTrue}}},
        {"AND",
         NodeKind::kAnd,
         ValueType::kProb,
         {{"prob_1", ValueType::kProb, true}, {"prob_2", ValueType::kProb, true}}},
        {"OR",
         NodeKind::kOr,
         ValueType::kProb,
         {{"prob_1", ValueType::kProb, true}, {"prob_2", ValueType::kProb, true}}},
    };
    return table;
}

const BuiltinSpec* findBuiltin(const std::string& name) {
    for (const auto& b : builtins()) {
        if (name == b.name) return &b;
    }
    return nullptr;
}

const char* typeName(ValueType t) {
    switch (t) {
        case ValueType::kProb: return "prob";
        case ValueType::kMetric: return "metric";
        case ValueType::kNumber: return "number";
        case ValueType::kPose: return "pose";
        case ValueType::kState: return "state";
        case ValueType::kAction: return "action";
        case ValueType::kString: return "string";
        case ValueType::kAxisList: return "axis list";
        case ValueType::kVector: return "vector";
        case ValueType::kBool: return "bool";
    }
    return "?";
}

ValueType nodeType(const Node& n) {
    switch (n.kind) {
        case NodeKind::kGetPose: return ValueType::kPose;
        case NodeKind::kPositionNorm:
        case NodeKind::kGreatCircleDistance:
        case NodeKind::kPointingInDirection:
        case NodeKind::kRotationAngle: return ValueType::kMetric;
        case NodeKind::kThreshold:
        case NodeKind::kLinear:
        case NodeKind::kNormal:
        case NodeKind::kAnd:
        case NodeKind::kOr: return ValueType::kProb;
        case NodeKind::kStateRef:
        case NodeKind::kNextStateRef: return ValueType::kState;
        case NodeKind::kActionRef: return ValueType::kAction;
        case NodeKind::kNumber: return ValueType::kNumber;
        case NodeKind::kString: return ValueType::kString;
        case NodeKind::kAxisList: return ValueType::kAxisList;
        case NodeKind::kVector: return ValueType::kVector;
        case NodeKind::kBool: return ValueType::kBool;
    }
    return ValueType::kNumber;
}

bool typeMatches(ValueType expected, const Node& arg) {
    const ValueType got = nodeType(arg);
    if (expected == got) return true;
    // Number literals fill metric and prob slots (ranges checked later).
    if (got == ValueType::kNumber &&
        (expected == ValueType::kMetric || expected == ValueType::kProb)) {
        return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { kIdent, kNumber, kString, kLParen, kRParen, kLBracket, kRBracket, kComma, kEquals, kEnd };

struct Token {
    Tok kind = Tok::kEnd;
    SourceLoc loc;
    std::string text;
    double number = 0.0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skipWhitespaceAndComments();
        Token t;
        t.loc = loc_;
        if (pos_ >= src_.size()) return t;
        const char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident(t);
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            return number(t);
        }
        if (c == '\'' || c == '"') return stringLit(t);
        switch (c) {
            case '(': t.kind = Tok::kLParen; break;
            case ')': t.kind = Tok::kRParen; break;
            case '[': t.kind = Tok::kLBracket; break;
            case ']': t.kind = Tok::kRBracket; break;
            case ',': t.kind = Tok::kComma; break;
            case '=': t.kind = Tok::kEquals; break;
            default:
                throw ParseError({t.loc, std::string("unexpected character '") + c + "'"});
        }
        advance();
        return t;
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++loc_.line;
            loc_.column = 1;
        } else {
            ++loc_.column;
        }
        ++pos_;
    }

    void skipWhitespaceAndComments() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    Token ident(Token t) {
        t.kind = Tok::kIdent;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            t.text += src_[pos_];
            advance();
        }
        return t;
    }

    Token number(Token t) {
        t.kind = Tok::kNumber;
        const size_t start = pos_;
        if (src_[pos_] == '-' || src_[pos_] == '+') advance();
        bool digits = false;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            advance();
            digits = true;
        }
        if (pos_ < src_.size() && src_[pos_] == '.') {
            advance();
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                advance();
                digits = true;
            }
        }
        if (!digits) throw ParseError({t.loc, "malformed number"});
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) advance();
            bool expd = false;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                advance();
                expd = true;
            }
            if (!expd) throw ParseError({t.loc, "malformed exponent"});
        }
        const std::string_view lit = src_.substr(start, pos_ - start);
        const auto res = std::from_chars(lit.data(), lit.data() + lit.size(), t.number);
        if (res.ec != std::errc{} || res.ptr != lit.data() + lit.size()) {
            throw ParseError({t.loc, "malformed number '" + std::string(lit) + "'"});
        }
        return t;
    }

    Token stringLit(Token t) {
        t.kind = Tok::kString;
        const char quote = src_[pos_];
        advance();
        while (pos_ < src_.size() && src_[pos_] != quote) {
            if (src_[pos_] == '\n') throw ParseError({t.loc, "unterminated string"});
            t.text += src_[pos_];
            advance();
        }
        if (pos_ >= src_.size()) throw ParseError({t.loc, "unterminated string"});
        advance();
        return t;
    }

    std::string_view src_;
    size_t pos_ = 0;
    SourceLoc loc_;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { shift(); }

    Node parseRoot() {
        Node root = expression();
        if (cur_.kind != Tok::kEnd) {
            throw ParseError({cur_.loc, "trailing input after expression"});
        }
        const ValueType t = nodeType(root);
        if (t != ValueType::kProb && t != ValueType::kNumber) {
            throw ParseError(
                {root.loc, std::string("root must be prob-typed, got ") + typeName(t)});
        }
        return root;
    }

private:
    void shift() { cur_ = lexer_.next(); }

    Node expression() {
        switch (cur_.kind) {
            case Tok::kIdent: return identExpr();
            case Tok::kNumber: {
                Node n;
                n.kind = NodeKind::kNumber;
                n.loc = cur_.loc;
                n.number = cur_.number;
                shift();
                return n;
            }
            case Tok::kString: {
                Node n;
                n.kind = NodeKind::kString;
                n.loc = cur_.loc;
                n.text = cur_.text;
                shift();
                return n;
            }
            case Tok::kLBracket: return listExpr();
            default:
                throw ParseError({cur_.loc, "expected an expression"});
        }
    }

    Node identExpr() {
        const Token name = cur_;
        shift();
        if (cur_.kind == Tok::kLParen) return call(name);
        Node n;
        n.loc = name.loc;
        if (name.text == "state") {
            n.kind = NodeKind::kStateRef;
        } else if (name.text == "next_state") {
            n.kind = NodeKind::kNextStateRef;
        } else if (name.text == "action") {
            n.kind = NodeKind::kActionRef;
        } else if (name.text == "true" || name.text == "True") {
            n.kind = NodeKind::kBool;
            n.flag = true;
        } else if (name.text == "false" || name.text == "False") {
            n.kind = NodeKind::kBool;
            n.flag = false;
        } else {
            throw ParseError({name.loc, "unknown identifier '" + name.text + "'"});
        }
        return n;
    }

    Node listExpr() {
        const SourceLoc loc = cur_.loc;
        shift();  // '['
        std::vector<Token> items;
        bool first = true;
        while (cur_.kind != Tok::kRBracket) {
            if (!first) {
                if (cur_.kind != Tok::kComma) throw ParseError({cur_.loc, "expected ',' in list"});
                shift();
            }
            if (cur_.kind != Tok::kNumber && cur_.kind != Tok::kString) {
                throw ParseError({cur_.loc, "list elements must be numbers or axis names"});
            }
            items.push_back(cur_);
            shift();
            first = false;
        }
        shift();  // ']'
        if (items.empty()) throw ParseError({loc, "empty list"});

        Node n;
        n.loc = loc;
        if (items[0].kind == Tok::kString) {
            n.kind = NodeKind::kAxisList;
            for (const auto& it : items) {
                if (it.kind != Tok::kString) {
                    throw ParseError({it.loc, "mixed list of axis names and numbers"});
                }
                int idx;
                if (it.text == "x") idx = 0;
                else if (it.text == "y") idx = 1;
                else if (it.text == "z") idx = 2;
                else throw ParseError({it.loc, "axis must be 'x', 'y' or 'z'"});
                if (n.axes[idx]) throw ParseError({it.loc, "duplicate axis '" + it.text + "'"});
                n.axes[idx] = true;
            }
        } else {
            if (items.size() != 3) throw ParseError({loc, "vector literal must have 3 components"});
            n.kind = NodeKind::kVector;
            for (int i = 0; i < 3; ++i) {
                if (items[i].kind != Tok::kNumber) {
                    throw ParseError({items[i].loc, "mixed list of axis names and numbers"});
                }
                n.vec[i] = items[i].number;
            }
        }
        return n;
    }

    Node call(const Token& name) {
        const BuiltinSpec* spec = findBuiltin(name.text);
        if (!spec) throw ParseError({name.loc, "unknown identifier '" + name.text + "'"});
        shift();  // '('

        std::vector<Node> positional;
        std::map<std::string, Node> keyword;
        std::vector<SourceLoc> kwloc;
        bool first = true;
        bool saw_keyword = false;
        while (cur_.kind != Tok::kRParen) {
            if (!first) {
                if (cur_.kind != Tok::kComma) {
                    throw ParseError({cur_.loc, "expected ',' between arguments"});
                }
                shift();
            }
            first = false;
            if (cur_.kind == Tok::kIdent && peekEquals()) {
                const Token kw = cur_;
                shift();  // ident
                shift();  // '='
                if (keyword.count(kw.text)) {
                    throw ParseError({kw.loc, "duplicate keyword argument '" + kw.text + "'"});
                }
                keyword.emplace(kw.text, expression());
                saw_keyword = true;
            } else {
                if (saw_keyword) {
                    throw ParseError({cur_.loc, "positional argument after keyword argument"});
                }
                positional.push_back(expression());
            }
        }
        shift();  // ')'

        Node n;
        n.kind = spec->kind;
        n.loc = name.loc;

        if (positional.size() > spec->params.size()) {
            throw ParseError({name.loc, std::string(spec->name) + " takes at most " +
                                            std::to_string(spec->params.size()) + " arguments"});
        }

        for (size_t i = 0; i < spec->params.size(); ++i) {
            const ParamSpec& p = spec->params[i];
            Node arg;
            bool have = false;
            if (i < positional.size()) {
                arg = std::move(positional[i]);
                have = true;
                if (keyword.count(p.name)) {
                    throw ParseError(
                        {name.loc, std::string("argument '") + p.name + "' given twice"});
                }
            } else if (auto it = keyword.find(p.name); it != keyword.end()) {
                arg = std::move(it->second);
                keyword.erase(it);
                have = true;
            }
            if (!have) {
                if (p.required) {
                    throw ParseError({name.loc, std::string(spec->name) + ": missing argument '" +
                                                    p.name + "'"});
                }
                arg = defaultNode(p.def);
            } else if (!typeMatches(p.type, arg)) {
                throw ParseError({arg.loc, std::string(spec->name) + ": argument '" + p.name +
                                               "' expects " + typeName(p.type) + ", got " +
                                               typeName(nodeType(arg))});
            }
            n.children.push_back(std::move(arg));
        }
        if (!keyword.empty()) {
            throw ParseError({name.loc, std::string(spec->name) + ": unknown keyword argument '" +
                                            keyword.begin()->first + "'"});
        }
        return n;
    }

    bool peekEquals() {
        // One-token lookahead for "ident =".
        Lexer probe = lexer_;
        return probe.next().kind == Tok::kEquals;
    }

    static Node defaultNode(DefaultKind def) {
        Node n;
        switch (def) {
            case DefaultKind::kWorldFrame:
                n.kind = NodeKind::kString;
                n.text = "world";
                break;
            case DefaultKind::kL2:
                n.kind = NodeKind::kString;
                n.text = "L2";
                break;
            case DefaultKind::kAllAxes:
                n.kind = NodeKind::kAxisList;
                n.axes = {true, true, true};
                break;
            case DefaultKind::kUnitX:
                n.kind = NodeKind::kVector;
                n.vec = Eigen::Vector3d::UnitX();
                break;
            case DefaultKind::kTrue:
                n.kind = NodeKind::kBool;
                n.flag = true;
                break;
            case DefaultKind::kNone:
                break;
        }
        return n;
    }

    Lexer lexer_;
    Token cur_;
};

// ---------------------------------------------------------------------------
// Pretty printer

std::string formatNumber(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

const BuiltinSpec* specForKind(NodeKind kind) {
    for (const auto& b : builtins()) {
        if (b.kind == kind) return &b;
    }
    return nullptr;
}

void printNode(const Node& n, std::string& out) {
    switch (n.kind) {
        case NodeKind::kStateRef: out += "state"; return;
        case NodeKind::kNextStateRef: out += "next_state"; return;
        case NodeKind::kActionRef: out += "action"; return;
        case NodeKind::kNumber: out += formatNumber(n.number); return;
        case NodeKind::kString:
            out += '\'';
            out += n.text;
            out += '\'';
            return;
        case NodeKind::kBool: out += n.flag ? "true" : "false"; return;
        case NodeKind::kAxisList: {
            out += '[';
            bool first = true;
            const char* names[3] = {"x", "y", "z"};
            for (int i = 0; i < 3; ++i) {
                if (!n.axes[i]) continue;
                if (!first) out += ", ";
                out += '\'';
                out += names[i];
                out += '\'';
                first = false;
            }
            out += ']';
            return;
        }
        case NodeKind::kVector:
            out += '[';
            out += formatNumber(n.vec.x()) + ", " + formatNumber(n.vec.y()) + ", " +
                   formatNumber(n.vec.z());
            out += ']';
            return;
        default:
            break;
    }
    const BuiltinSpec* spec = specForKind(n.kind);
    out += spec->name;
    out += '(';
    for (size_t i = 0; i < n.children.size(); ++i) {
        if (i > 0) out += ", ";
        if (!spec->params[i].required) {
            out += spec->params[i].name;
            out += '=';
        }
        printNode(n.children[i], out);
    }
    out += ')';
}

// ---------------------------------------------------------------------------
// Scene-dependent validation

class Checker {
public:
    explicit Checker(const world::SceneCatalog& catalog) : catalog_(catalog) {}

    void check(const Node& n, ValueType expected) {
        if (n.kind == NodeKind::kNumber) {
            if (expected == ValueType::kProb && (n.number < 0.0 || n.number > 1.0)) {
                diags_.push_back({n.loc, "probability literal must be in [0, 1]"});
            }
            if (expected == ValueType::kMetric && n.number < 0.0) {
                diags_.push_back({n.loc, "metric literal must be non-negative"});
            }
            return;
        }
        const BuiltinSpec* spec = specForKind(n.kind);
        if (!spec) return;
        for (size_t i = 0; i < n.children.size(); ++i) {
            check(n.children[i], spec->params[i].type);
        }
        switch (n.kind) {
            case NodeKind::kGetPose:
                checkName(n.children[1]);
                checkName(n.children[2]);
                break;
            case NodeKind::kPositionNorm: {
                const std::string& norm = n.children[2].text;
                if (norm != "L1" && norm != "L2" && norm != "Linf") {
                    diags_.push_back(
                        {n.children[2].loc, "norm must be 'L1', 'L2' or 'Linf', got '" + norm + "'"});
                }
                break;
            }
            case NodeKind::kPointingInDirection:
                checkUnit(n.children[2], "main_axis");
                break;
            case NodeKind::kRotationAngle:
                checkUnit(n.children[2], "axis");
                break;
            case NodeKind::kLinear:
                if (!(n.children[1].number < n.children[2].number)) {
                    diags_.push_back({n.loc, "linear: t_1 must be strictly less than t_2"});
                }
                break;
            case NodeKind::kNormal:
                if (!(n.children[2].number > 0.0)) {
                    diags_.push_back({n.loc, "normal: std_dev must be positive"});
                }
                break;
            default:
                break;
        }
    }

    std::vector<Diagnostic> take() { return std::move(diags_); }

private:
    void checkName(const Node& n) {
        if (!catalog_.has(n.text)) {
            diags_.push_back({n.loc, "unknown object or frame '" + n.text + "'"});
        }
    }

    void checkUnit(const Node& n, const char* what) {
        if (std::abs(n.vec.norm() - 1.0) > 1e-6) {
            diags_.push_back({n.loc, std::string(what) + " must be a unit vector"});
        }
    }

    const world::SceneCatalog& catalog_;
    std::vector<Diagnostic> diags_;
};

}  // namespace

std::string Diagnostic::render() const {
    std::ostringstream os;
    os << "line " << loc.line << ", col " << loc.column << ": " << message;
    return os.str();
}

bool structurallyEqual(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    if (a.children.size() != b.children.size()) return false;
    switch (a.kind) {
        case NodeKind::kNumber:
            if (a.number != b.number) return false;
            break;
        case NodeKind::kString:
            if (a.text != b.text) return false;
            break;
        case NodeKind::kAxisList:
            if (a.axes != b.axes) return false;
            break;
        case NodeKind::kVector:
            if (a.vec != b.vec) return false;
            break;
        case NodeKind::kBool:
            if (a.flag != b.flag) return false;
            break;
        default:
            break;
    }
    for (size_t i = 0; i < a.children.size(); ++i) {
        if (!structurallyEqual(a.children[i], b.children[i])) return false;
    }
    return true;
}

PreferenceExpr parse(std::string_view source) {
    Parser parser(source);
    return PreferenceExpr{parser.parseRoot()};
}

std::vector<Diagnostic> typecheck(const PreferenceExpr& expr, const world::SceneCatalog& catalog) {
    Checker checker(catalog);
    checker.check(expr.root, ValueType::kProb);
    return checker.take();
}

std::string prettyPrint(const PreferenceExpr& expr) {
    std::string out;
    printNode(expr.root, out);
    return out;
}

const std::string& buildingBlocksReference() {
    static const std::string text =
        "# Get the pose of an object in a given frame. The first argument is `state`\n"
        "# (before the action) or `next_state` (predicted outcome of the action).\n"
        "pose = getPose(state, obj, frame='world')\n"
        "# L1, L2 or Linf norm of the position difference, restricted to the given axes.\n"
        "metric = positionNorm(pose_1, pose_2, norm='L2', axis=['x', 'y', 'z'])\n"
        "# Rotation difference of two poses as the great circle distance (radians).\n"
        "metric = greatCircleDistance(pose_1, pose_2)\n"
        "# Angle between main_axis rotated by pose_1.orientation and the direction\n"
        "# from pose_1.position to pose_2.position (radians).\n"
        "metric = pointingInDirectionMetric(pose_1, pose_2, main_axis=[1, 0, 0])\n"
        "# Rotation difference between pose_1 and pose_2 around the given axis (radians).\n"
        "metric = rotationAngle(pose_1, pose_2, axis)\n"
        "# 1.0 if metric >= t, 0.0 otherwise. Vice versa if not direction.\n"
        "prob = threshold(metric, t, direction=true)\n"
        "# 1.0 if metric >= t_2, 0.0 if metric < t_1, linear in between. Flipped if not direction.\n"
        "prob = linear(metric, t_1, t_2, direction=true)\n"
        "# Normal cumulative distribution function with the given mean and standard deviation.\n"
        "prob = normal(metric, mean, std_dev, direction=true)\n"
        "prob = AND(prob_1, prob_2)\n"
        "prob = OR(prob_1, prob_2)\n";
    return text;
}

PreferenceExpr alwaysTrue() { return parse("threshold(0.0, -1.0, direction=true)"); }

}  // namespace prefplan::dsl
