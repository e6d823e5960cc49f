#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ade/claims.hpp"
#include "ade/parallel.hpp"
#include "ade/rng.hpp"

namespace ade {

/// The four indication-code categories. A code in any category marks an
/// encounter as recording a drug-induced or drug-poisoning condition.
struct IndicationCodeSet {
    std::set<std::string> a1, a2, b1, b2;

    bool contains(const std::string& icd) const {
        return a1.count(icd) || a2.count(icd) || b1.count(icd) || b2.count(icd);
    }
    bool all_categories_populated() const {
        return !a1.empty() && !a2.empty() && !b1.empty() && !b2.empty();
    }
};

/// Indication-set file: JSON with keys "A1","A2","B1","B2", each a list of
/// ICD code strings.
inline IndicationCodeSet load_indication_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open indication-set file: " + path.string());
    json j = json::parse(in);
    auto read = [&](const char* key) {
        if (!j.contains(key))
            throw std::runtime_error("indication-set file missing category '" + std::string(key) + "'");
        std::set<std::string> out;
        for (const json& v : j.at(key)) out.insert(v.get<std::string>());
        return out;
    };
    IndicationCodeSet s{read("A1"), read("A2"), read("B1"), read("B2")};
    return s;
}

struct LabelingConfig {
    std::string target_drug;            // GPI code
    std::set<std::string> target_ades;  // ICD codes
    IndicationCodeSet indications;
    int window_days = 90;  // post-intake attribution window, inclusive at both ends
};

struct LabeledInstance {
    std::string patient_id;
    int cut_index = 0;    // encounters strictly before first drug intake; >= 1
    ClaimHistory prefix;  // the first cut_index encounters
    int label = -1;       // +1 or -1

    friend bool operator==(const LabeledInstance&, const LabeledInstance&) = default;
};

struct AdeEvent {
    size_t encounter_index;
    std::string ade_code;
};

/// An encounter records an ADE when it contains at least one target-ADE ICD
/// code and at least one indication ICD code. Emits one event per distinct
/// matching ADE code, in first-occurrence order.
inline std::vector<AdeEvent> detect_ade_events(const ClaimHistory& history,
                                               const LabelingConfig& config) {
    std::vector<AdeEvent> events;
    for (size_t i = 0; i < history.encounters.size(); ++i) {
        const Encounter& e = history.encounters[i];
        bool has_indication = false;
        for (const ClaimCode& c : e.codes)
            if (c.type == CodeType::ICD && config.indications.contains(c.code)) {
                has_indication = true;
                break;
            }
        if (!has_indication) continue;
        std::set<std::string> seen;
        for (const ClaimCode& c : e.codes)
            if (c.type == CodeType::ICD && config.target_ades.count(c.code) &&
                seen.insert(c.code).second)
                events.push_back({i, c.code});
    }
    return events;
}

/// Applies the intake-window labeling rule to one patient. Returns nothing
/// when the patient never takes the target drug, when a qualifying ADE event
/// occurs at or before the first drug encounter, or when no encounter
/// precedes the drug.
inline std::optional<LabeledInstance> label_patient(const ClaimHistory& history,
                                                    const LabelingConfig& config) {
    size_t drug_index = history.encounters.size();
    for (size_t i = 0; i < history.encounters.size(); ++i) {
        for (const ClaimCode& c : history.encounters[i].codes)
            if (c.type == CodeType::GPI && c.code == config.target_drug) {
                drug_index = i;
                break;
            }
        if (drug_index != history.encounters.size()) break;
    }
    if (drug_index == history.encounters.size()) return std::nullopt;
    if (drug_index == 0) return std::nullopt;  // empty prefix

    const Date drug_date = history.encounters[drug_index].date;
    int label = -1;
    for (const AdeEvent& ev : detect_ade_events(history, config)) {
        if (ev.encounter_index <= drug_index) return std::nullopt;  // prior-ADE exclusion
        const int gap = days_between(drug_date, history.encounters[ev.encounter_index].date);
        if (gap <= config.window_days) label = +1;
    }

    LabeledInstance inst;
    inst.patient_id = history.patient_id;
    inst.cut_index = static_cast<int>(drug_index);
    inst.prefix.patient_id = history.patient_id;
    inst.prefix.encounters.assign(history.encounters.begin(),
                                  history.encounters.begin() + drug_index);
    inst.label = label;
    return inst;
}

/// Output order follows input order regardless of the worker count:
/// results are gathered by input index.
inline std::vector<LabeledInstance> build_cohort(const std::vector<ClaimHistory>& histories,
                                                 const LabelingConfig& config,
                                                 unsigned threads = 1) {
    std::vector<std::optional<LabeledInstance>> slots(histories.size());
    parallel_for(histories.size(), threads,
                 [&](size_t i) { slots[i] = label_patient(histories[i], config); });
    std::vector<LabeledInstance> out;
    for (auto& slot : slots)
        if (slot) out.push_back(std::move(*slot));
    return out;
}

struct CohortSplit {
    std::vector<LabeledInstance> train, test, validation;
};

/// Deterministic seeded shuffle, then floor(0.7n) / floor(0.2n) / remainder.
inline CohortSplit split_cohort(const std::vector<LabeledInstance>& instances, uint64_t seed) {
    const size_t n = instances.size();
    if (n < 10)
        throw std::invalid_argument("split_cohort requires at least 10 instances, got " +
                                    std::to_string(n));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const size_t n_train = 7 * n / 10;  // floor(0.7 n)
    const size_t n_test = 2 * n / 10;   // floor(0.2 n)
    CohortSplit split;
    for (size_t i = 0; i < n; ++i) {
        const LabeledInstance& inst = instances[order[i]];
        if (i < n_train)
            split.train.push_back(inst);
        else if (i < n_train + n_test)
            split.test.push_back(inst);
        else
            split.validation.push_back(inst);
    }
    return split;
}

// ---- labeled-instance JSONL ----

inline void write_instances(const std::vector<LabeledInstance>& instances, std::ostream& out) {
    for (const LabeledInstance& inst : instances) {
        json encounters = json::array();
        for (const Encounter& e : inst.prefix.encounters)
            encounters.push_back(detail::encounter_to_json(e));
        json j{{"patient_id", inst.patient_id},
               {"cut_index", inst.cut_index},
               {"label", inst.label},
               {"prefix", std::move(encounters)}};
        out << j.dump() << '\n';
    }
}

inline std::vector<LabeledInstance> parse_instances(std::istream& in) {
    std::vector<LabeledInstance> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank_line(line)) continue;
        try {
            json j = json::parse(line);
            LabeledInstance inst;
            inst.patient_id = j.at("patient_id").get<std::string>();
            inst.cut_index = j.at("cut_index").get<int>();
            inst.label = j.at("label").get<int>();
            if (inst.label != 1 && inst.label != -1)
                throw std::invalid_argument("label must be 1 or -1");
            if (inst.cut_index < 1) throw std::invalid_argument("cut_index must be >= 1");
            inst.prefix.patient_id = inst.patient_id;
            for (const json& e : j.at("prefix"))
                inst.prefix.encounters.push_back(detail::encounter_from_json(e));
            out.push_back(std::move(inst));
        } catch (const std::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

inline std::vector<LabeledInstance> read_instances_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file: " + path.string());
    return parse_instances(in);
}

inline void write_instances_file(const std::vector<LabeledInstance>& instances,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    write_instances(instances, out);
}

}  // namespace ade
