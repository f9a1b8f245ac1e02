#include "quasilin/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace quasilin {

using nlohmann::json;

ConfigError::ConfigError(const std::string& what, int line)
    : InvalidArgument(line > 0 ? "config line " + std::to_string(line) + ": " + what : "config: " + what), line_(line) {}

namespace {

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    json run() {
        json root = json::object();
        json* table = &root;
        std::set<std::string> headers;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++i_;
                skip_inline();
                std::vector<std::string> path{key()};
                skip_inline();
                while (peek() == '.') {
                    ++i_;
                    skip_inline();
                    path.push_back(key());
                    skip_inline();
                }
                expect(']');
                std::string joined;
                table = &root;
                for (const auto& part : path) {
                    joined += (joined.empty() ? "" : ".") + part;
                    if (!table->contains(part)) (*table)[part] = json::object();
                    table = &(*table)[part];
                    if (!table->is_object()) fail("'" + joined + "' is not a table");
                }
                if (!headers.insert(joined).second) fail("table [" + joined + "] defined twice");
                end_of_statement();
                continue;
            }
            const std::string k = key();
            skip_inline();
            expect('=');
            skip_inline();
            json v = value();
            if (table->contains(k)) fail("duplicate key '" + k + "'");
            (*table)[k] = std::move(v);
            end_of_statement();
        }
        return root;
    }

private:
    const std::string& s_;
    std::size_t i_ = 0;
    int line_ = 1;

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(what, line_); }
    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'" + (eof() ? " before end of file" : ""));
        ++i_;
    }
    void skip_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++i_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++i_;
    }
    void skip_blank_lines() {
        while (!eof()) {
            skip_inline();
            skip_comment();
            if (peek() != '\n') return;
            ++i_;
            ++line_;
        }
    }
    // inside arrays and inline tables newlines and comments are whitespace
    void skip_any() {
        while (!eof()) {
            skip_inline();
            skip_comment();
            if (peek() != '\n') return;
            ++i_;
            ++line_;
        }
    }
    void end_of_statement() {
        skip_inline();
        skip_comment();
        if (eof()) return;
        if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
        ++i_;
        ++line_;
    }

    static bool key_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    }
    std::string key() {
        const std::size_t start = i_;
        while (!eof() && key_char(peek())) ++i_;
        if (i_ == start) fail(eof() ? "expected a key" : std::string("expected a key, found '") + peek() + "'");
        return s_.substr(start, i_ - start);
    }

    json value() {
        const char c = peek();
        if (c == '"') return string_value();
        if (c == '[') {
            ++i_;
            json arr = json::array();
            skip_any();
            while (peek() != ']') {
                arr.push_back(value());
                skip_any();
                if (peek() == ',') {
                    ++i_;
                    skip_any();
                } else if (peek() != ']') {
                    fail("expected ',' or ']' in array");
                }
            }
            ++i_;
            return arr;
        }
        if (c == '{') {
            ++i_;
            json obj = json::object();
            skip_any();
            while (peek() != '}') {
                const std::string k = key();
                skip_inline();
                expect('=');
                skip_inline();
                if (obj.contains(k)) fail("duplicate key '" + k + "' in inline table");
                obj[k] = value();
                skip_any();
                if (peek() == ',') {
                    ++i_;
                    skip_any();
                } else if (peek() != '}') {
                    fail("expected ',' or '}' in inline table");
                }
            }
            ++i_;
            return obj;
        }
        const std::size_t start = i_;
        while (!eof() && (key_char(peek()) || peek() == '.' || peek() == '+')) ++i_;
        const std::string word = s_.substr(start, i_ - start);
        if (word.empty()) fail(eof() ? "missing value" : std::string("unexpected '") + c + "'");
        if (word == "true") return true;
        if (word == "false") return false;
        if (word == "inf" || word == "+inf") return std::numeric_limits<double>::infinity();
        if (word == "-inf") return -std::numeric_limits<double>::infinity();
        char* end = nullptr;
        const bool integral = word.find_first_of(".eE") == std::string::npos;
        if (integral) {
            const long long v = std::strtoll(word.c_str(), &end, 10);
            if (end && *end == '\0') return v;
        } else {
            const double v = std::strtod(word.c_str(), &end);
            if (end && *end == '\0') return v;
        }
        fail("cannot parse value '" + word + "' (strings need double quotes)");
    }

    json string_value() {
        ++i_;
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = s_[i_++];
            if (c == '"') break;
            if (c == '\\') {
                if (eof()) fail("unterminated escape");
                const char e = s_[i_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail(std::string("unknown escape '\\") + e + "'");
                }
            } else {
                out += c;
            }
        }
        return out;
    }
};

std::string resolve(const std::string& base, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base) / p).string();
}

double num(const json& spec, const char* key, std::optional<double> fallback = std::nullopt) {
    if (!spec.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(std::string("missing numeric field '") + key + "' in " + spec.dump());
    }
    const json& v = spec.at(key);
    if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

Index count(const json& spec, const char* key, std::optional<Index> fallback = std::nullopt) {
    if (!spec.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(std::string("missing integer field '") + key + "'");
    }
    const json& v = spec.at(key);
    if (!v.is_number_integer()) throw ConfigError(std::string("field '") + key + "' must be an integer");
    return v.get<Index>();
}

std::string str(const json& spec, const char* key, std::optional<std::string> fallback = std::nullopt) {
    if (!spec.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(std::string("missing string field '") + key + "'");
    }
    const json& v = spec.at(key);
    if (!v.is_string()) throw ConfigError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const char* what) {
    if (!v.is_array()) throw ConfigError(std::string(what) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(std::string(what) + " must be an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

std::array<double, 2> point(const json& v, const char* what) {
    const std::vector<double> xs = numbers(v, what);
    if (xs.empty() || xs.size() > 2) throw ConfigError(std::string(what) + " must have 1 or 2 coordinates");
    return {xs[0], xs.size() > 1 ? xs[1] : 0.0};
}

const std::vector<std::array<double, 2>>& coords_of(const GraphSpace& space, const std::string& kind) {
    if (static_cast<Index>(space.coordinates().size()) != space.vertex_count())
        throw ConfigError("field kind '" + kind + "' needs vertex coordinates");
    return space.coordinates();
}

}  // namespace

json parse_config(const std::string& text) { return Parser(text).run(); }

json parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

Conductivity make_conductivity(const json& spec, const std::string& base_dir) {
    if (!spec.is_object()) throw ConfigError("conductivity spec must be a table");
    const std::string kind = str(spec, "kind");
    if (kind == "p_power") return p_power(num(spec, "p"));
    if (kind == "p_delta") return p_delta(num(spec, "p"), num(spec, "delta"));
    if (kind == "minimal_surface") return minimal_surface();
    if (kind == "min" || kind == "max") {
        if (!spec.contains("of") || !spec.at("of").is_array() || spec.at("of").size() < 2)
            throw ConfigError("'" + kind + "' needs of = [spec, spec, ...]");
        Conductivity acc = make_conductivity(spec.at("of")[0], base_dir);
        for (std::size_t i = 1; i < spec.at("of").size(); ++i) {
            const Conductivity next = make_conductivity(spec.at("of")[i], base_dir);
            acc = kind == "min" ? min_of(acc, next) : max_of(acc, next);
        }
        return acc;
    }
    if (kind == "tabulated") {
        std::optional<double> p;
        if (spec.contains("p")) p = num(spec, "p");
        return read_tabulated_csv(resolve(base_dir, str(spec, "path")), p);
    }
    if (kind == "truncate" || kind == "regularize") {
        if (!spec.contains("base")) throw ConfigError("'" + kind + "' needs a base conductivity");
        const Conductivity base = make_conductivity(spec.at("base"), base_dir);
        return kind == "truncate" ? truncate_M(base, num(spec, "M")) : regularize_delta(base, num(spec, "delta"));
    }
    throw ConfigError("unknown conductivity kind '" + kind + "'");
}

GraphSpace make_space(const json& spec, const std::string& base_dir) {
    if (!spec.is_object()) throw ConfigError("space spec must be a table");
    const std::string kind = str(spec, "kind");
    GraphSpace space = [&] {
        if (kind == "file") return read_graph_file(resolve(base_dir, str(spec, "path")));
        DomainSpec d;
        d.kind = kind;
        const std::string policy = str(spec, "policy", std::string("trapezoid"));
        if (policy == "trapezoid") {
            d.policy = CellPolicy::trapezoid;
        } else if (policy == "full") {
            d.policy = CellPolicy::full;
        } else {
            throw ConfigError("unknown cell policy '" + policy + "'");
        }
        if (kind == "path" || kind == "cycle" || kind == "weighted_interval") {
            d.n = count(spec, "n");
            d.h = num(spec, "h", d.n > 1 ? 1.0 / static_cast<double>(kind == "cycle" ? d.n : d.n - 1) : 1.0);
            if (kind == "weighted_interval") {
                const double scale = num(spec, "potential_scale", 1.0);
                d.potential = [scale](double x) { return 0.5 * scale * x * x; };
            }
        } else if (kind == "grid2d") {
            d.nx = count(spec, "nx");
            d.ny = count(spec, "ny", d.nx);
            d.h = num(spec, "h", d.nx > 1 ? 1.0 / static_cast<double>(d.nx - 1) : 1.0);
        } else if (kind == "annulus2d") {
            d.r_in = num(spec, "r_in");
            d.r_out = num(spec, "r_out");
            d.h = num(spec, "h");
        } else {
            throw ConfigError("unknown space kind '" + kind + "'");
        }
        return build_space(d);
    }();
    if (spec.contains("curvature")) {
        const json& c = spec.at("curvature");
        space.set_curvature({num(c, "K", 0.0), num(c, "N", std::numeric_limits<double>::infinity())});
    }
    return space;
}

VertexFunction make_field(const json& spec, const GraphSpace& space, const std::string& base_dir) {
    const Index n = space.vertex_count();
    if (spec.is_number()) return VertexFunction::Constant(n, spec.get<double>());
    if (!spec.is_object()) throw ConfigError("field spec must be a number or a table");
    const std::string kind = str(spec, "kind");
    VertexFunction out(n);
    if (kind == "constant") {
        out.setConstant(num(spec, "value"));
    } else if (kind == "bump") {
        // smooth compactly supported bump with peak `height`
        const auto& xy = coords_of(space, kind);
        const auto c = point(spec.at("center"), "bump center");
        const double w = num(spec, "width"), height = num(spec, "height");
        if (!(w > 0.0)) throw ConfigError("bump width must be positive");
        for (Index x = 0; x < n; ++x) {
            const double dx = xy[static_cast<std::size_t>(x)][0] - c[0], dy = xy[static_cast<std::size_t>(x)][1] - c[1];
            const double r2 = (dx * dx + dy * dy) / (w * w);
            out[x] = r2 < 1.0 ? height * std::exp(1.0 - 1.0 / (1.0 - r2)) : 0.0;
        }
    } else if (kind == "affine") {
        const auto& xy = coords_of(space, kind);
        const auto slope = point(spec.at("slope"), "affine slope");
        const double offset = num(spec, "offset", 0.0);
        for (Index x = 0; x < n; ++x)
            out[x] = offset + slope[0] * xy[static_cast<std::size_t>(x)][0] + slope[1] * xy[static_cast<std::size_t>(x)][1];
    } else if (kind == "spike") {
        out.setConstant(num(spec, "base", 0.0));
        Index at = -1;
        if (spec.contains("vertex")) {
            at = count(spec, "vertex");
        } else {
            const auto& xy = coords_of(space, kind);
            const auto c = point(spec.at("at"), "spike position");
            double best = std::numeric_limits<double>::infinity();
            for (Index x = 0; x < n; ++x) {
                const double d = std::hypot(xy[static_cast<std::size_t>(x)][0] - c[0], xy[static_cast<std::size_t>(x)][1] - c[1]);
                if (d < best) {
                    best = d;
                    at = x;
                }
            }
        }
        if (at < 0 || at >= n) throw ConfigError("spike vertex out of range");
        out[at] = num(spec, "height");
    } else if (kind == "radial") {
        out = radial_p_harmonic(space, num(spec, "p"));
        out = out * num(spec, "scale", 1.0) + VertexFunction::Constant(n, num(spec, "offset", 0.0));
    } else if (kind == "csv") {
        const std::string path = resolve(base_dir, str(spec, "path"));
        std::ifstream in(path);
        if (!in) throw Error("cannot open field file '" + path + "'");
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
            std::istringstream ss(line);
            std::string a, b;
            if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'vertex,value'");
            const Index v = std::stol(a);
            if (v < 0 || v >= n) throw ConfigError(path + ":" + std::to_string(lineno) + ": vertex out of range");
            out[v] = std::stod(b);
            seen[static_cast<std::size_t>(v)] = 1;
        }
        for (char c : seen)
            if (!c) throw ConfigError(path + ": not every vertex has a value");
    } else {
        throw ConfigError("unknown field kind '" + kind + "'");
    }
    return out;
}

const json& ExperimentConfig::section(const std::string& name) const {
    static const json empty = json::object();
    if (!raw.contains(name)) return empty;
    return raw.at(name);
}

GraphSpace ExperimentConfig::space() const {
    if (!raw.contains("space")) throw ConfigError("missing [space] section");
    return make_space(raw.at("space"), base_dir);
}

Conductivity ExperimentConfig::psi() const {
    if (!raw.contains("psi")) throw ConfigError("missing psi conductivity spec");
    return make_conductivity(raw.at("psi"), base_dir);
}

DirichletProblem ExperimentConfig::problem() const {
    GraphSpace s = space();
    const Index n = s.vertex_count();
    VertexFunction f = raw.contains("f") ? make_field(raw.at("f"), s, base_dir) : VertexFunction::Zero(n);
    VertexFunction g = raw.contains("g") ? make_field(raw.at("g"), s, base_dir) : VertexFunction::Zero(n);
    std::optional<VertexFunction> a;
    double A = 1.0;
    if (raw.contains("a")) {
        a = make_field(raw.at("a"), s, base_dir);
        A = raw.at("a").is_object() && raw.at("a").contains("A") ? num(raw.at("a"), "A")
                                                                  : std::max(a->maxCoeff(), 1.0 / a->minCoeff());
    }
    DirichletProblem p{std::move(s), psi(), std::move(f), std::move(g), std::move(a), A};
    validate(p);
    return p;
}

std::string ExperimentConfig::method() const {
    const std::string m = str(section("solver"), "method", std::string("full"));
    if (m != "galerkin" && m != "direct" && m != "full") throw ConfigError("unknown solver method '" + m + "'");
    return m;
}

double ExperimentConfig::tol() const {
    const double t = num(section("solver"), "tol", 1e-10);
    if (!(t > 0.0)) throw ConfigError("solver tol must be > 0");
    return t;
}

int ExperimentConfig::max_iter() const { return static_cast<int>(count(section("solver"), "max_iter", -1)); }

SolveStrategy ExperimentConfig::strategy() const {
    SolveStrategy s = SolveStrategy::defaults();
    const json& c = section("continuation");
    if (c.contains("Ms")) s.Ms = numbers(c.at("Ms"), "Ms");
    if (c.contains("deltas")) s.deltas = numbers(c.at("deltas"), "deltas");
    s.tol = tol();
    s.certify_tol = num(section("solver"), "certify_tol", s.certify_tol);
    if (!(s.certify_tol > 0.0)) throw ConfigError("certify_tol must be > 0");
    if (c.contains("exact_final")) s.exact_final = c.at("exact_final").get<bool>();
    if (c.contains("experimental_delta_first")) s.experimental_delta_first = c.at("experimental_delta_first").get<bool>();
    return s;
}

ExperimentConfig config_from_text(const std::string& text, const std::string& base_dir) {
    ExperimentConfig cfg;
    cfg.raw = parse_config(text);
    cfg.base_dir = base_dir;
    if (cfg.raw.contains("seed")) {
        const json& s = cfg.raw.at("seed");
        if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("seed must be a nonnegative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    return config_from_text(ss.str(), dir.empty() ? "." : dir.string());
}

}  // namespace quasilin
