#pragma once

// On-disk containers.
//
// Binary container ("KRC1"): 4-byte magic, u64 little-endian header length,
// JSON header, then the payload as little-endian float64 pairs (re, im) in
// the order declared by the header. Operators store only their nonzero
// l-slices (the header lists the flattened slice indices).
//
// Symbols can also round-trip through a plain JSON container with
// {order, d, L, Kx, M, coeffs: [[l_1..l_d, k, xi, re, im], ...]} holding the
// nonzero coefficients. Exact layouts are documented in FORMATS.md.

#include <cstring>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "kamred/qpoperator.hpp"
#include "kamred/symbol.hpp"

namespace kamred {

using json = nlohmann::json;

namespace detail {

inline void write_exact(std::ostream& os, const void* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
    if (!os) throw std::runtime_error("serialize: write failed");
}
inline void read_exact(std::istream& is, void* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), std::streamsize(n));
    if (!is) throw std::runtime_error("serialize: short read");
}

inline void write_container(std::ostream& os, const json& header,
                            const std::vector<const cplx*>& chunks, std::size_t chunk_len) {
    std::string h = header.dump();
    std::uint64_t hl = h.size();
    write_exact(os, "KRC1", 4);
    write_exact(os, &hl, 8);
    write_exact(os, h.data(), h.size());
    for (const cplx* c : chunks) write_exact(os, c, chunk_len * sizeof(cplx));
}

inline json read_container(std::istream& is, std::vector<cplx>& payload,
                           std::size_t expected_len_hint = 0) {
    char magic[4];
    read_exact(is, magic, 4);
    if (std::memcmp(magic, "KRC1", 4) != 0)
        throw std::runtime_error("serialize: bad magic (not a KRC1 container)");
    std::uint64_t hl = 0;
    read_exact(is, &hl, 8);
    std::string h(hl, '\0');
    read_exact(is, h.data(), hl);
    json header = json::parse(h);
    std::size_t count = header.at("payload_count").get<std::size_t>();
    if (expected_len_hint && count != expected_len_hint)
        throw std::runtime_error("serialize: payload length mismatch");
    payload.resize(count);
    if (count) read_exact(is, payload.data(), count * sizeof(cplx));
    return header;
}

} // namespace detail

// ---------------------------------------------------------------- operators
inline void save_qpoperator(std::ostream& os, const QPOperator& A, const std::string& kind) {
    std::vector<std::size_t> slices;
    std::vector<const cplx*> chunks;
    const std::size_t n2 = std::size_t(A.n()) * std::size_t(A.n());
    for (std::size_t l = 0; l < A.mats.size(); ++l) {
        if (A.mats[l].isZero(0)) continue;
        slices.push_back(l);
        chunks.push_back(A.mats[l].data());
    }
    json h{{"type", "qpoperator"}, {"kind", kind},         {"d", A.d},
           {"L", A.L},             {"M", A.M},             {"slices", slices},
           {"payload_count", slices.size() * n2}};
    detail::write_container(os, h, chunks, n2);
}

inline QPOperator load_qpoperator(std::istream& is, std::string* kind = nullptr) {
    std::vector<cplx> payload;
    json h = detail::read_container(is, payload);
    if (h.at("type") != "qpoperator") throw std::runtime_error("serialize: not a qpoperator");
    QPOperator A(h.at("d").get<int>(), h.at("L").get<int>(), h.at("M").get<int>());
    if (kind) *kind = h.value("kind", "");
    const std::size_t n2 = std::size_t(A.n()) * std::size_t(A.n());
    auto slices = h.at("slices").get<std::vector<std::size_t>>();
    if (payload.size() != slices.size() * n2) throw std::runtime_error("serialize: bad payload");
    for (std::size_t i = 0; i < slices.size(); ++i)
        std::memcpy(A.mats[slices[i]].data(), payload.data() + i * n2, n2 * sizeof(cplx));
    return A;
}

inline void save_matrix_pair(std::ostream& os, const MatrixPair& P, const std::string& kind) {
    save_qpoperator(os, P.diag, kind + ".diag");
    save_qpoperator(os, P.anti, kind + ".anti");
}
inline MatrixPair load_matrix_pair(std::istream& is) {
    MatrixPair P;
    P.diag = load_qpoperator(is);
    P.anti = load_qpoperator(is);
    return P;
}

// ------------------------------------------------------------------ symbols
inline void save_symbol(std::ostream& os, const Symbol& a) {
    json h{{"type", "symbol"}, {"order", a.order}, {"d", a.d},     {"L", a.L},
           {"Kx", a.Kx},       {"M", a.M},         {"payload_count", a.c.size()}};
    detail::write_container(os, h, {a.c.data()}, a.c.size());
}

inline Symbol load_symbol(std::istream& is) {
    std::vector<cplx> payload;
    json h = detail::read_container(is, payload);
    if (h.at("type") != "symbol") throw std::runtime_error("serialize: not a symbol");
    Symbol a(h.at("order").get<double>(), h.at("d").get<int>(), h.at("L").get<int>(),
             h.at("Kx").get<int>(), h.at("M").get<int>());
    if (payload.size() != a.c.size()) throw std::runtime_error("serialize: bad payload");
    a.c = std::move(payload);
    return a;
}

// JSON text form (nonzero coefficients as (l..., k, xi, re, im) tuples)
inline json symbol_to_json(const Symbol& a) {
    json coeffs = json::array();
    const LatticeBox b = a.box();
    std::vector<int> ell(std::size_t(a.d), 0);
    for (std::size_t l = 0; l < b.size(); ++l) {
        b.unflatten(l, ell.data());
        for (int k = -a.Kx; k <= a.Kx; ++k)
            for (int xi = -a.M; xi <= a.M; ++xi) {
                cplx v = a.at(l, k, xi);
                if (v == cplx(0, 0)) continue;
                json row = json::array();
                for (int i = 0; i < a.d; ++i) row.push_back(ell[std::size_t(i)]);
                row.push_back(k);
                row.push_back(xi);
                row.push_back(v.real());
                row.push_back(v.imag());
                coeffs.push_back(std::move(row));
            }
    }
    return json{{"type", "symbol"}, {"order", a.order}, {"d", a.d},      {"L", a.L},
                {"Kx", a.Kx},       {"M", a.M},         {"coeffs", coeffs}};
}

inline Symbol symbol_from_json(const json& j) {
    Symbol a(j.at("order").get<double>(), j.at("d").get<int>(), j.at("L").get<int>(),
             j.at("Kx").get<int>(), j.at("M").get<int>());
    std::vector<int> ell(std::size_t(a.d), 0);
    for (const auto& row : j.at("coeffs")) {
        if (int(row.size()) != a.d + 4) throw std::runtime_error("symbol_from_json: bad tuple");
        for (int i = 0; i < a.d; ++i) ell[std::size_t(i)] = row[std::size_t(i)].get<int>();
        int k = row[std::size_t(a.d)].get<int>();
        int xi = row[std::size_t(a.d) + 1].get<int>();
        a.set(ell, k, xi, cplx(row[std::size_t(a.d) + 2].get<double>(),
                               row[std::size_t(a.d) + 3].get<double>()));
    }
    return a;
}

// -------------------------------------------------------------------- files
template <typename F>
inline void with_output_file(const std::string& path, F&& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    f(os);
}
template <typename F>
inline void with_input_file(const std::string& path, F&& f) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    f(is);
}

// --------------------------------------------------------------------- CSV
struct CsvWriter {
    std::ofstream os;
    explicit CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : os(path) {
        if (!os) throw std::runtime_error("cannot open for writing: " + path);
        for (std::size_t i = 0; i < header.size(); ++i)
            os << (i ? "," : "") << header[i];
        os << "\n";
    }
    void row(const std::vector<double>& vals) {
        os << std::setprecision(17);
        for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? "," : "") << vals[i];
        os << "\n";
    }
    void row_mixed(const std::vector<std::string>& vals) {
        for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? "," : "") << vals[i];
        os << "\n";
    }
};

inline std::string fmt_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

// flatten a JSON summary into key,value CSV rows (machine-greppable mirror)
inline void json_numbers_to_csv(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "key,value\n" << std::setprecision(17);
    std::function<void(const json&, const std::string&)> walk = [&](const json& v,
                                                                    const std::string& prefix) {
        if (v.is_object()) {
            for (auto it = v.begin(); it != v.end(); ++it)
                walk(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
        } else if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i)
                walk(v[i], prefix + "[" + std::to_string(i) + "]");
        } else if (v.is_number()) {
            os << prefix << "," << v.get<double>() << "\n";
        } else if (v.is_boolean()) {
            os << prefix << "," << (v.get<bool>() ? 1 : 0) << "\n";
        }
    };
    walk(j, "");
}

} // namespace kamred
