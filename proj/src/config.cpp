#include "bh/config.hpp"

#include "bh/error.hpp"
#include "bh/hash.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace bh {

const char* preset_name(Preset p) {
    switch (p) {
        case Preset::Zero: return "zero";
        case Preset::SinProduct: return "sin-product";
        case Preset::GaussianBump: return "gaussian-bump";
    }
    return "?";
}

Preset parse_preset(const std::string& s) {
    for (Preset p : {Preset::Zero, Preset::SinProduct, Preset::GaussianBump})
        if (s == preset_name(p)) return p;
    throw Error(ErrorCode::ConfigInvalid, "unknown preset '" + s + "' (zero, sin-product, gaussian-bump)");
}

SpaceFunction preset_function(Preset p, int dim) {
    switch (p) {
        case Preset::Zero: return {};
        case Preset::SinProduct:
            return [dim](const Point& x) {
                double s = 1.0;
                for (int d = 0; d < dim; ++d) s *= std::sin(std::numbers::pi * x[d]);
                return s;
            };
        case Preset::GaussianBump:
            // Bubble-weighted Gaussian so the datum vanishes on the boundary.
            return [dim](const Point& x) {
                double r2 = 0.0, b = 1.0;
                for (int d = 0; d < dim; ++d) {
                    r2 += (x[d] - 0.5) * (x[d] - 0.5);
                    b *= 4.0 * x[d] * (1.0 - x[d]);
                }
                return b * std::exp(-20.0 * r2);
            };
    }
    return {};
}

SpaceTimeFunction preset_source(Preset p, int dim) {
    SpaceFunction g = preset_function(p, dim);
    if (!g) return {};
    return [g](const Point& x, double) { return g(x); };
}

Regime RunConfig::regime() const {
    if (k > 1.0) return Regime::KGreaterThan1;
    if (k < 1.0) return Regime::KLessThan1;
    return geometry.kind == GeometryKind::Disk2D ? Regime::K1ConnectedDisconnected : Regime::K1ConnectedConnected;
}

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string num_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s;
}

double to_double(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    double x = 0.0;
    std::string rest;
    if (!(is >> x) || (is >> rest)) throw Error(ErrorCode::ConfigInvalid, key + ": '" + text + "' is not a number");
    if (!std::isfinite(x)) throw Error(ErrorCode::ConfigInvalid, key + " must be finite");
    return x;
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, key + " is empty");
    return out;
}

bool to_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw Error(ErrorCode::ConfigInvalid, key + ": expected true or false, got '" + text + "'");
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "geometry.kind",      "geometry.r0",        "geometry.a",          "geometry.b",
        "geometry.rho",       "geometry.h",         "coefficients.lambda_int", "coefficients.lambda_out",
        "coefficients.alpha", "scaling.k",          "kernel.horizon",      "kernel.dt",
        "macro.horizon",      "macro.dt",           "macro.n",             "data.u0",
        "data.f",             "micro.eps_list",     "micro.eta_list",      "micro.membrane_eps",
        "micro.strip_boundary_inclusions",          "output.dir"};
    return keys;
}

}  // namespace

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "geometry.kind = " << geometry_name(geometry.kind) << '\n';
    for (const auto& [name, v] : geometry.params) os << "geometry." << name << " = " << num(v) << '\n';
    os << "geometry.h = " << num(geometry.h) << '\n';
    os << "coefficients.lambda_int = " << num(coeffs.lambda_int) << '\n';
    os << "coefficients.lambda_out = " << num(coeffs.lambda_out) << '\n';
    os << "coefficients.alpha = " << num(coeffs.alpha) << '\n';
    os << "scaling.k = " << num(k) << '\n';
    os << "kernel.horizon = " << num(kernel_horizon) << '\n';
    os << "kernel.dt = " << num(kernel_dt) << '\n';
    os << "macro.horizon = " << num(macro_horizon) << '\n';
    os << "macro.dt = " << num(macro_dt) << '\n';
    os << "macro.n = " << macro_n << '\n';
    os << "data.u0 = " << preset_name(u0) << '\n';
    os << "data.f = " << preset_name(f) << '\n';
    os << "micro.eps_list = " << num_list(eps_list) << '\n';
    os << "micro.eta_list = " << num_list(eta_list) << '\n';
    os << "micro.membrane_eps = " << num(membrane_eps) << '\n';
    os << "micro.strip_boundary_inclusions = " << (strip_boundary_inclusions ? "true" : "false") << '\n';
    return os.str();
}

std::string RunConfig::hash() const { return hash_text(canonical()); }

RunConfig parse_config(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("malformed config: ") + e.what());
    }
    std::map<std::string, std::string> kv;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw Error(ErrorCode::ConfigInvalid, "key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            if (!known_keys().count(full)) throw Error(ErrorCode::ConfigInvalid, "unknown key '" + full + "'");
            kv[full] = value.data();
        }
    }
    auto get = [&](const std::string& key, auto apply) {
        auto it = kv.find(key);
        if (it != kv.end()) apply(it->second);
    };
    auto dbl = [&](const std::string& key, double& out) { get(key, [&](const std::string& s) { out = to_double(key, s); }); };

    RunConfig c;
    get("geometry.kind", [&](const std::string& s) {
        try {
            c.geometry.kind = parse_geometry_kind(s);
        } catch (const Error&) {
            throw Error(ErrorCode::ConfigInvalid, "geometry.kind must be Disk2D, Layered2D or TubeLattice3D");
        }
    });
    switch (c.geometry.kind) {
        case GeometryKind::Disk2D: c.geometry.params = {{"r0", 0.25}}; break;
        case GeometryKind::Layered2D: c.geometry.params = {{"a", 0.25}, {"b", 0.75}}; break;
        case GeometryKind::TubeLattice3D:
            c.geometry.params = {{"rho", 0.25}};
            c.geometry.h = 0.125;
            break;
    }
    for (const char* p : {"r0", "a", "b", "rho"}) {
        const std::string key = std::string("geometry.") + p;
        if (!kv.count(key)) continue;
        if (!c.geometry.params.count(p))
            throw Error(ErrorCode::ConfigInvalid, key + " does not apply to " + geometry_name(c.geometry.kind));
        c.geometry.params[p] = to_double(key, kv[key]);
    }
    dbl("geometry.h", c.geometry.h);
    dbl("coefficients.lambda_int", c.coeffs.lambda_int);
    dbl("coefficients.lambda_out", c.coeffs.lambda_out);
    dbl("coefficients.alpha", c.coeffs.alpha);
    dbl("scaling.k", c.k);
    dbl("kernel.horizon", c.kernel_horizon);
    dbl("kernel.dt", c.kernel_dt);
    dbl("macro.horizon", c.macro_horizon);
    dbl("macro.dt", c.macro_dt);
    get("macro.n", [&](const std::string& s) {
        const double n = to_double("macro.n", s);
        if (n != std::floor(n) || n < 1 || n > 1e6) throw Error(ErrorCode::ConfigInvalid, "macro.n must be a positive integer");
        c.macro_n = static_cast<int>(n);
    });
    get("data.u0", [&](const std::string& s) { c.u0 = parse_preset(s); });
    get("data.f", [&](const std::string& s) { c.f = parse_preset(s); });
    get("micro.eps_list", [&](const std::string& s) { c.eps_list = to_list("micro.eps_list", s); });
    get("micro.eta_list", [&](const std::string& s) { c.eta_list = to_list("micro.eta_list", s); });
    dbl("micro.membrane_eps", c.membrane_eps);
    get("micro.strip_boundary_inclusions",
        [&](const std::string& s) { c.strip_boundary_inclusions = to_bool("micro.strip_boundary_inclusions", s); });
    get("output.dir", [&](const std::string& s) { c.output_dir = s; });
    validate_config(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config '" + path.string() + "'");
    return parse_config(in);
}

void validate_config(const RunConfig& c) {
    auto positive = [](const char* name, double x) {
        if (!(x > 0.0)) throw Error(ErrorCode::ConfigInvalid, std::string(name) + " must be positive");
    };
    for (const auto& [name, v] : c.geometry.params) positive(("geometry." + name).c_str(), v);
    positive("geometry.h", c.geometry.h);
    positive("coefficients.lambda_int", c.coeffs.lambda_int);
    positive("coefficients.lambda_out", c.coeffs.lambda_out);
    positive("coefficients.alpha", c.coeffs.alpha);
    positive("kernel.horizon", c.kernel_horizon);
    positive("kernel.dt", c.kernel_dt);
    positive("macro.horizon", c.macro_horizon);
    positive("macro.dt", c.macro_dt);
    if (c.macro_horizon > c.kernel_horizon * (1.0 + 1e-12))
        throw Error(ErrorCode::ConfigInvalid, "macro.horizon exceeds kernel.horizon; the memory kernel would be extrapolated");
    c.kernel_grid();
    c.macro_grid();
    if (c.geometry.kind == GeometryKind::Layered2D && !(c.geometry.param("a") < c.geometry.param("b") && c.geometry.param("b") < 1.0))
        throw Error(ErrorCode::ConfigInvalid, "layered geometry needs 0 < a < b < 1");
    auto reciprocal = [](const char* name, double e) {
        const double inv = 1.0 / e;
        if (!(e > 0.0) || e > 1.0 || std::abs(inv - std::round(inv)) > 1e-9 * inv)
            throw Error(ErrorCode::ConfigInvalid, std::string(name) + " entries must be reciprocals of integers");
    };
    for (double e : c.eps_list) {
        reciprocal("micro.eps_list", e);
        // Local averages are compared element by element with the macro solution.
        if (c.macro_n % std::lround(1.0 / e) != 0)
            throw Error(ErrorCode::ConfigInvalid, "macro.n must be a multiple of 1/eps for every eps in micro.eps_list");
    }
    reciprocal("micro.membrane_eps", c.membrane_eps);
    for (double eta : c.eta_list)
        if (!(eta > 0.0) || eta > 0.2) throw Error(ErrorCode::ConfigInvalid, "micro.eta_list entries must lie in (0, 0.2]");
}

}  // namespace bh
