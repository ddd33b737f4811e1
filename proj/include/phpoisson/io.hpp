#pragma once

// Model files (JSON), sample and severity files (CSV), number formatting.
//
// Lines starting with '#' are comments in every input format, so a file
// written by the CLI (which appends a '#' footer) reads back unchanged.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "phpoisson/compound.hpp"
#include "phpoisson/em.hpp"
#include "phpoisson/errors.hpp"
#include "phpoisson/genab0.hpp"
#include "phpoisson/ph_poisson.hpp"
#include "phpoisson/sample.hpp"

namespace phpoisson {

/// Malformed input text.
class ParseError : public Error {
public:
    using Error::Error;
};

namespace io {

using Json = nlohmann::json;

/// %.{digits}g with ".0" appended to integral values, so every number reads
/// back as floating point.
inline std::string format_number(double x, int digits = 17) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    std::string s(buf);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline std::string strip_comments(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first != std::string::npos && line[first] == '#') continue;
        out << line << '\n';
    }
    return out.str();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// JSON models
// ---------------------------------------------------------------------------

struct GenAB1Model {
    GenAB1Rep rep;
};

using Model = std::variant<GenAB0Rep, GenAB1Model, PHPoissonRep, PhysicalRep>;

inline std::string kind_of(const Model& m) {
    switch (m.index()) {
        case 0: return "genab0";
        case 1: return "genab1";
        case 2: return "ph-poisson";
        default: return "physical";
    }
}

namespace detail {

inline const Json& field(const Json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("model: missing field '") + key + "'");
    return j.at(key);
}

inline double number(const Json& j, const char* what) {
    if (!j.is_number()) throw ParseError(std::string("model: '") + what + "' must be a number");
    return j.get<double>();
}

inline RowVector row_vector(const Json& j, const char* what) {
    if (!j.is_array()) throw ParseError(std::string("model: '") + what + "' must be an array of numbers");
    RowVector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], what);
    return v;
}

inline Matrix matrix(const Json& j, const char* what) {
    if (!j.is_array()) throw ParseError(std::string("model: '") + what + "' must be an array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? (j[0].is_array() ? j[0].size() : 0) : 0;
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) {
            throw ParseError(std::string("model: '") + what + "' rows must be arrays of equal length");
        }
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = number(j[r][c], what);
    }
    return m;
}

inline Json to_json(const RowVector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

}  // namespace detail

/// Parses a model. ph-poisson models are scaled to beta e^B 1 = 1 when
/// `renormalize` is set or the file has "normalize": true.
inline Model parse_model(const std::string& text, bool renormalize = false) {
    Json j;
    try {
        j = Json::parse(strip_comments(text));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("model: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("model: top level must be an object");
    const Json& kind_j = detail::field(j, "kind");
    if (!kind_j.is_string()) throw ParseError("model: 'kind' must be a string");
    const std::string kind = kind_j.get<std::string>();
    if (kind == "genab0") {
        GenAB0Rep rep{detail::row_vector(detail::field(j, "beta"), "beta"), detail::matrix(detail::field(j, "A"), "A"),
                      detail::matrix(detail::field(j, "B"), "B")};
        rep.validate();
        return rep;
    }
    if (kind == "genab1") {
        GenAB1Rep rep{detail::number(detail::field(j, "p0"), "p0"), detail::row_vector(detail::field(j, "beta1"), "beta1"),
                      detail::matrix(detail::field(j, "A"), "A"), detail::matrix(detail::field(j, "B"), "B")};
        rep.validate();
        return GenAB1Model{rep};
    }
    if (kind == "ph-poisson") {
        const RowVector beta = detail::row_vector(detail::field(j, "beta"), "beta");
        const Matrix b = detail::matrix(detail::field(j, "B"), "B");
        const bool norm = renormalize || (j.contains("normalize") && j.at("normalize").is_boolean() &&
                                          j.at("normalize").get<bool>());
        if (norm) return PHPoissonRep::normalize(beta, b);
        return PHPoissonRep(beta, b);
    }
    if (kind == "physical") {
        PhysicalRep phys{detail::number(detail::field(j, "nu"), "nu"), detail::row_vector(detail::field(j, "alpha"), "alpha"),
                         detail::matrix(detail::field(j, "P"), "P")};
        phys.validate();
        return phys;
    }
    throw ParseError("model: unknown kind '" + kind + "'");
}

inline Model read_model(const std::string& path, bool renormalize = false) {
    return parse_model(read_file(path), renormalize);
}

/// JSON text with numbers at the given significant digits.
inline std::string dump_model(const Model& model, int digits = 17, bool pretty = false) {
    Json j;
    j["kind"] = kind_of(model);
    if (const auto* g = std::get_if<GenAB0Rep>(&model)) {
        j["beta"] = detail::to_json(g->beta);
        j["A"] = detail::to_json(g->A);
        j["B"] = detail::to_json(g->B);
    } else if (const auto* g1 = std::get_if<GenAB1Model>(&model)) {
        j["p0"] = g1->rep.p0;
        j["beta1"] = detail::to_json(g1->rep.beta1);
        j["A"] = detail::to_json(g1->rep.A);
        j["B"] = detail::to_json(g1->rep.B);
    } else if (const auto* ph = std::get_if<PHPoissonRep>(&model)) {
        j["beta"] = detail::to_json(ph->beta());
        j["B"] = detail::to_json(ph->B());
    } else {
        const auto& p = std::get<PhysicalRep>(model);
        j["nu"] = p.nu;
        j["alpha"] = detail::to_json(p.alpha);
        j["P"] = detail::to_json(p.P);
    }
    // nlohmann prints shortest round-trip doubles; rewrite at fixed digits.
    std::function<void(Json&)> fix = [&](Json& node) {
        if (node.is_number_float()) {
            node = Json::parse(format_number(node.get<double>(), digits));
        } else if (node.is_array() || node.is_object()) {
            for (auto& child : node) fix(child);
        }
    };
    fix(j);
    return j.dump(pretty ? 2 : -1);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != ' ' && c != '\t') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool parse_uint(const std::string& s, std::uint64_t& v) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
    try {
        v = std::stoull(s);
    } catch (...) {
        return false;
    }
    return true;
}

inline bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(v);
}

/// Non-comment, non-empty lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> csv_rows(const std::string& text) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        rows.emplace_back(no, split_fields(line));
    }
    return rows;
}

}  // namespace detail

/// One count per line, or `value,count` histogram lines. A non-numeric first
/// row is taken as a header.
inline SampleData parse_sample(const std::string& text) {
    SampleData d;
    const auto rows = detail::csv_rows(text);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& [no, f] = rows[r];
        std::uint64_t value = 0;
        std::uint64_t count = 1;
        const bool ok = f.size() <= 2 && detail::parse_uint(f[0], value) && (f.size() == 1 || detail::parse_uint(f[1], count));
        if (!ok) {
            if (r == 0) continue;
            throw ParseError("sample: line " + std::to_string(no) + ": expected a nonnegative integer or value,count");
        }
        d.observations.insert(d.observations.end(), count, value);
    }
    return d;
}

inline SampleData read_sample(const std::string& path) { return parse_sample(read_file(path)); }

/// `n,f` rows; missing n are zero.
inline SeverityDensity parse_severity(const std::string& text) {
    std::map<std::uint64_t, double> entries;
    const auto rows = detail::csv_rows(text);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& [no, f] = rows[r];
        std::uint64_t n = 0;
        double v = 0.0;
        const bool ok = f.size() == 2 && detail::parse_uint(f[0], n) && detail::parse_double(f[1], v);
        if (!ok) {
            if (r == 0) continue;
            throw ParseError("severity: line " + std::to_string(no) + ": expected n,f");
        }
        if (entries.count(n)) throw ParseError("severity: line " + std::to_string(no) + ": duplicate n");
        entries[n] = v;
    }
    if (entries.empty()) throw ParseError("severity: no rows");
    std::vector<double> f(entries.rbegin()->first + 1, 0.0);
    for (const auto& [n, v] : entries) f[n] = v;
    return SeverityDensity(std::move(f));
}

inline SeverityDensity read_severity(const std::string& path) { return parse_severity(read_file(path)); }

// ---------------------------------------------------------------------------
// Fit configuration
// ---------------------------------------------------------------------------

struct FitConfig {
    std::optional<EMParams> theta0;
    std::optional<std::size_t> max_iter;
    std::optional<double> tol;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> phases;
};

/// {"theta0": {"nu":..,"alpha":[..],"P":[[..]]}, "max_iter":.., "tol":..,
///  "seed":.., "phases":..}; every field optional.
inline FitConfig parse_fit_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(strip_comments(text));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config: top level must be an object");
    FitConfig c;
    if (j.contains("theta0")) {
        const Json& t = j.at("theta0");
        EMParams p{detail::number(detail::field(t, "nu"), "nu"), detail::row_vector(detail::field(t, "alpha"), "alpha"),
                   detail::matrix(detail::field(t, "P"), "P")};
        p.validate();
        c.theta0 = p;
    }
    auto count_field = [&](const char* key) -> std::optional<std::uint64_t> {
        if (!j.contains(key)) return std::nullopt;
        if (!j.at(key).is_number_unsigned()) throw ParseError(std::string("config: '") + key + "' must be a nonnegative integer");
        return j.at(key).get<std::uint64_t>();
    };
    if (auto v = count_field("max_iter")) c.max_iter = static_cast<std::size_t>(*v);
    if (auto v = count_field("seed")) c.seed = *v;
    if (auto v = count_field("phases")) c.phases = static_cast<std::size_t>(*v);
    if (j.contains("tol")) c.tol = detail::number(j.at("tol"), "tol");
    return c;
}

}  // namespace io
}  // namespace phpoisson
