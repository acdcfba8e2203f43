#pragma once

// Flat key=value configuration (one key per line, '#' comments). Typed
// accessors, validation of the Diophantine-exponent chain, JSON echo.

#include <fstream>
#include <map>
#include <sstream>

#include "kamred/core.hpp"

namespace kamred {

enum class FamilyKind { Constant, Oscillatory, TwoLevel, Custom };

inline const char* family_name(FamilyKind k) {
    switch (k) {
        case FamilyKind::Constant: return "constant";
        case FamilyKind::Oscillatory: return "oscillatory";
        case FamilyKind::TwoLevel: return "two-level";
        case FamilyKind::Custom: return "custom";
    }
    return "?";
}

struct WaveConfig {
    // model
    double mass = 1.0;
    double epsilon = 1e-4;
    int d = 2;
    int L = 16;
    int Kx = 2;
    int M = 24;
    // Diophantine constants
    double gamma = 0.05;
    double tau0 = 2.5;
    double tau1 = 5.0;
    double tau = 16.0;
    // perturbation family
    FamilyKind family = FamilyKind::Oscillatory;
    double c_star = 0.3;
    double c_star2 = 0.5;    // second level of the two-level family
    double v_amp = 1.0;      // oscillatory amplitude on cos(theta_1)cos(x)
    double v_amp2 = 0.0;     // oscillatory amplitude on cos(theta_2)cos(x)
    double lower_amp = 0.0;  // order-0 trig-poly addition (constant family)
    double e_decay = 1.0;    // Condition II decay exponent e
    std::string custom_symbol_path; // family = custom
    bool unchecked = false;         // warn instead of reject on Condition II
    // frequency vector (empty -> callers must supply one)
    RVec omega;
    // iteration
    int N0 = 3;
    int n_max = 9;
    double target_norm = 1e-10;
    double s = 4.0; // working Sobolev index for the norm diagnostics
    // simulation defaults
    double sim_T = 100.0;
    double sim_dt = 0.01;
    // randomness
    std::uint64_t seed = 1234;

    double s0() const { return sobolev_s0(d); }
    double rho_cond() const { return std::min(1.0, e_decay); }

    // Validates the exponent chain; returns the name of the violated
    // inequality, or empty when everything holds.
    std::string violated_inequality() const {
        if (mass <= 0) return "m > 0";
        if (epsilon <= 0) return "epsilon > 0";
        if (gamma <= 0) return "gamma > 0";
        if (!(tau0 > d)) return "tau0 > d";
        if (!(tau1 > tau0 + d)) return "tau1 > tau0 + d";
        double rho = rho_cond();
        double need = std::max(d + tau1 / rho - 1.0 / rho, d + tau0 / rho - 1.0);
        if (!(tau > need)) return "tau > max{d + tau1/rho - 1/rho, d + tau0/rho - 1}";
        if (s < s0()) return "s >= s0";
        if (L < 1 || M < 1 || Kx < 0 || d < 1) return "positive truncations";
        if (N0 < 2) return "N0 >= 2";
        return {};
    }
    void validate() const {
        std::string v = violated_inequality();
        if (!v.empty()) throw ConfigError("config violates: " + v);
        if (omega.size() != 0 && omega.size() != d)
            throw ConfigError("config: omega dimension != d");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

} // namespace detail

struct KeyValueFile {
    std::map<std::string, std::string> kv;

    static KeyValueFile parse(std::istream& in) {
        KeyValueFile f;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            std::string k = detail::trim(line.substr(0, eq));
            std::string v = detail::trim(line.substr(eq + 1));
            if (k.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            f.kv[k] = v;
        }
        return f;
    }
    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in);
    }

    bool has(const std::string& k) const { return kv.count(k) != 0; }
    std::string str(const std::string& k, const std::string& dflt) const {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : it->second;
    }
    double num(const std::string& k, double dflt) const {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config key '" + k + "': not a number: " + it->second);
        }
    }
    long long integer(const std::string& k, long long dflt) const {
        double v = num(k, double(dflt));
        long long i = std::llround(v);
        if (double(i) != v) throw ConfigError("config key '" + k + "': not an integer");
        return i;
    }
    std::vector<double> numbers(const std::string& k) const {
        auto it = kv.find(k);
        if (it == kv.end()) return {};
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            if (tok.empty()) continue;
            out.push_back(std::stod(tok));
        }
        return out;
    }
};

inline WaveConfig load_wave_config(const std::string& path) {
    KeyValueFile f = KeyValueFile::load(path);
    WaveConfig c;
    c.mass = f.num("mass", c.mass);
    c.epsilon = f.num("epsilon", c.epsilon);
    c.d = int(f.integer("d", c.d));
    c.L = int(f.integer("L", c.L));
    c.Kx = int(f.integer("Kx", c.Kx));
    c.M = int(f.integer("M", c.M));
    c.gamma = f.num("gamma", c.gamma);
    c.tau0 = f.num("tau0", c.tau0);
    c.tau1 = f.num("tau1", c.tau1);
    c.tau = f.num("tau", c.tau);
    std::string fam = f.str("family", "oscillatory");
    if (fam == "constant") c.family = FamilyKind::Constant;
    else if (fam == "oscillatory") c.family = FamilyKind::Oscillatory;
    else if (fam == "two-level") c.family = FamilyKind::TwoLevel;
    else if (fam == "custom") c.family = FamilyKind::Custom;
    else throw ConfigError("config: unknown family '" + fam + "'");
    c.c_star = f.num("c_star", c.c_star);
    c.c_star2 = f.num("c_star2", c.c_star2);
    c.v_amp = f.num("v_amp", c.v_amp);
    c.v_amp2 = f.num("v_amp2", c.v_amp2);
    c.lower_amp = f.num("lower_amp", c.lower_amp);
    c.e_decay = f.num("e_decay", c.e_decay);
    c.custom_symbol_path = f.str("custom_symbol", "");
    c.unchecked = f.integer("unchecked", 0) != 0;
    auto om = f.numbers("omega");
    c.omega = RVec::Zero(long(om.size()));
    for (std::size_t i = 0; i < om.size(); ++i) c.omega[long(i)] = om[i];
    c.N0 = int(f.integer("N0", c.N0));
    c.n_max = int(f.integer("n_max", c.n_max));
    c.target_norm = f.num("target_norm", c.target_norm);
    c.s = f.num("s", c.s);
    c.sim_T = f.num("sim_T", c.sim_T);
    c.sim_dt = f.num("sim_dt", c.sim_dt);
    c.seed = std::uint64_t(f.integer("seed", (long long)c.seed));
    c.validate();
    return c;
}

} // namespace kamred
