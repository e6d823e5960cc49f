#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ade/date.hpp"

namespace ade {

using json = nlohmann::ordered_json;

/// The nine claim-code families carried by an encounter record.
enum class CodeType : uint8_t { ICD, CPT, POS, GPI, TOB, REVENUE, HCPCS, DISCHARGE, LOINC };

inline constexpr std::array<const char*, 9> kCodeTypeNames = {
    "ICD", "CPT", "POS", "GPI", "TOB", "REVENUE", "HCPCS", "DISCHARGE", "LOINC"};

inline const char* to_string(CodeType t) { return kCodeTypeNames[static_cast<size_t>(t)]; }

inline CodeType parse_code_type(const std::string& s) {
    for (size_t i = 0; i < kCodeTypeNames.size(); ++i)
        if (s == kCodeTypeNames[i]) return static_cast<CodeType>(i);
    throw std::invalid_argument("unknown code type: '" + s + "'");
}

struct ClaimCode {
    CodeType type;
    std::string code;  // non-empty, no whitespace

    friend bool operator==(const ClaimCode&, const ClaimCode&) = default;
};

/// "TYPE:code" — the canonical flat key for a claim code.
inline std::string code_key(const ClaimCode& c) {
    return std::string(to_string(c.type)) + ":" + c.code;
}

struct Encounter {
    Date date;
    std::vector<ClaimCode> codes;  // non-empty, order preserved as given

    friend bool operator==(const Encounter&, const Encounter&) = default;
};

struct ClaimHistory {
    std::string patient_id;
    std::vector<Encounter> encounters;  // sorted non-decreasing by date

    friend bool operator==(const ClaimHistory&, const ClaimHistory&) = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

namespace detail {

inline bool has_whitespace(const std::string& s) {
    return s.find_first_of(" \t\r\n\f\v") != std::string::npos;
}

inline ClaimCode claim_code_from_json(const json& j) {
    if (!j.is_object() || !j.contains("type") || !j.contains("code"))
        throw std::invalid_argument("code entry must be an object with 'type' and 'code'");
    ClaimCode c{parse_code_type(j.at("type").get<std::string>()), j.at("code").get<std::string>()};
    if (c.code.empty()) throw std::invalid_argument("empty code string");
    if (has_whitespace(c.code)) throw std::invalid_argument("code contains whitespace: '" + c.code + "'");
    return c;
}

inline Encounter encounter_from_json(const json& j) {
    if (!j.is_object() || !j.contains("date") || !j.contains("codes"))
        throw std::invalid_argument("encounter must be an object with 'date' and 'codes'");
    Encounter e;
    e.date = parse_date(j.at("date").get<std::string>());
    const json& codes = j.at("codes");
    if (!codes.is_array() || codes.empty())
        throw std::invalid_argument("encounter 'codes' must be a non-empty array");
    for (const json& c : codes) e.codes.push_back(claim_code_from_json(c));
    return e;
}

inline json encounter_to_json(const Encounter& e) {
    json codes = json::array();
    for (const ClaimCode& c : e.codes)
        codes.push_back(json{{"type", to_string(c.type)}, {"code", c.code}});
    return json{{"date", to_string(e.date)}, {"codes", std::move(codes)}};
}

inline ClaimHistory history_from_json(const json& j) {
    if (!j.is_object() || !j.contains("patient_id") || !j.contains("encounters"))
        throw std::invalid_argument("record must be an object with 'patient_id' and 'encounters'");
    ClaimHistory h;
    h.patient_id = j.at("patient_id").get<std::string>();
    if (h.patient_id.empty()) throw std::invalid_argument("empty patient_id");
    for (const json& e : j.at("encounters")) h.encounters.push_back(encounter_from_json(e));
    // Out-of-order input is tolerated; stable sort keeps same-date order as given.
    std::stable_sort(h.encounters.begin(), h.encounters.end(),
                     [](const Encounter& a, const Encounter& b) { return a.date < b.date; });
    return h;
}

inline json history_to_json(const ClaimHistory& h) {
    json encounters = json::array();
    for (const Encounter& e : h.encounters) encounters.push_back(encounter_to_json(e));
    return json{{"patient_id", h.patient_id}, {"encounters", std::move(encounters)}};
}

inline bool blank_line(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

/// Reads claims JSONL, one patient per line. Blank lines are skipped.
/// Throws ParseError naming the offending line on any malformed record.
inline std::vector<ClaimHistory> parse_cohort(std::istream& in) {
    std::vector<ClaimHistory> out;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;
        try {
            json j = json::parse(line);
            ClaimHistory h = detail::history_from_json(j);
            if (!seen_ids.insert(h.patient_id).second)
                throw std::invalid_argument("duplicate patient_id '" + h.patient_id + "'");
            out.push_back(std::move(h));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

inline void write_cohort(const std::vector<ClaimHistory>& histories, std::ostream& out) {
    for (const ClaimHistory& h : histories) {
        out << detail::history_to_json(h).dump() << '\n';
        if (!out) throw std::runtime_error("write failure while emitting cohort");
    }
}

inline std::vector<ClaimHistory> read_cohort_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cohort file: " + path.string());
    return parse_cohort(in);
}

inline void write_cohort_file(const std::vector<ClaimHistory>& histories,
                              const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    write_cohort(histories, out);
}

struct CohortStats {
    size_t patients = 0;
    size_t unique_codes = 0;
    double mean_encounters = 0.0;
    double mean_codes_per_encounter = 0.0;
};

inline CohortStats cohort_stats(const std::vector<ClaimHistory>& histories) {
    CohortStats s;
    s.patients = histories.size();
    size_t total_encounters = 0, total_codes = 0;
    std::unordered_set<std::string> codes;
    for (const ClaimHistory& h : histories) {
        total_encounters += h.encounters.size();
        for (const Encounter& e : h.encounters) {
            total_codes += e.codes.size();
            for (const ClaimCode& c : e.codes) codes.insert(code_key(c));
        }
    }
    s.unique_codes = codes.size();
    if (s.patients > 0) s.mean_encounters = static_cast<double>(total_encounters) / s.patients;
    if (total_encounters > 0)
        s.mean_codes_per_encounter = static_cast<double>(total_codes) / total_encounters;
    return s;
}

}  // namespace ade
