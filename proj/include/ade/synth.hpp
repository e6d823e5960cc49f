#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "ade/claims.hpp"
#include "ade/parallel.hpp"
#include "ade/rng.hpp"

namespace ade {

/// Settings for the planted-rule cohort generator. The planted signal is
/// presence + recency: patients exposed to risk_code within risk_window_days
/// before the target drug get an ADE encounter with probability
/// p_ade_given_risk, everyone else with p_ade_base.
struct GeneratorConfig {
    size_t patient_count = 1000;
    size_t vocab_size = 100;  // synthetic codes per code type
    double mean_encounters = 40.0;
    double mean_codes_per_encounter = 6.6;
    double drug_take_prob = 0.5;
    ClaimCode risk_code{CodeType::ICD, "ICD_0007"};
    int risk_window_days = 60;
    double risk_plant_prob = 0.3;  // chance a drug-taker gets risk_code deliberately planted
    double p_ade_given_risk = 0.9;
    double p_ade_base = 0.05;
    std::string target_drug = "3320003010";
    std::string target_ade = "L29.9";
    std::string indication_code = "T46.9";
    uint64_t seed = 0;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(drug_take_prob) || !prob(risk_plant_prob) || !prob(p_ade_given_risk) ||
            !prob(p_ade_base))
            throw std::invalid_argument("generator probabilities must lie in [0,1]");
        if (p_ade_given_risk <= p_ade_base)
            throw std::invalid_argument("p_ade_given_risk must exceed p_ade_base");
        if (mean_encounters <= 0 || mean_codes_per_encounter <= 0)
            throw std::invalid_argument("generator means must be positive");
        if (risk_window_days < 1) throw std::invalid_argument("risk_window_days must be >= 1");
        if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
    }
};

namespace detail {

inline ClaimCode synthetic_code(CodeType type, size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu", to_string(type), index);
    return ClaimCode{type, buf};
}

inline ClaimCode random_code(Rng& rng, size_t vocab_size) {
    const auto type = static_cast<CodeType>(rng.next_below(kCodeTypeNames.size()));
    return synthetic_code(type, rng.next_below(vocab_size));
}

inline Encounter random_encounter(Rng& rng, Date date, const GeneratorConfig& cfg) {
    Encounter e{date, {}};
    const int n = std::max(1, rng.poisson(cfg.mean_codes_per_encounter));
    for (int i = 0; i < n; ++i) e.codes.push_back(random_code(rng, cfg.vocab_size));
    return e;
}

// Insert keeping date order; new encounter goes after existing same-date ones.
inline void insert_encounter(std::vector<Encounter>& encounters, Encounter e) {
    auto pos = std::upper_bound(encounters.begin(), encounters.end(), e.date,
                                [](Date d, const Encounter& x) { return d < x.date; });
    encounters.insert(pos, std::move(e));
}

inline ClaimHistory generate_patient(const GeneratorConfig& cfg, size_t index) {
    Rng rng = Rng::derived(cfg.seed, index);
    ClaimHistory h;
    char id[16];
    std::snprintf(id, sizeof id, "P%06zu", index);
    h.patient_id = id;

    const Date base = add_days(parse_date("2016-01-01"), static_cast<int>(rng.next_below(365)));
    const int n_enc = rng.poisson(cfg.mean_encounters);
    Date date = base;
    for (int i = 0; i < n_enc; ++i) {
        if (i > 0) date = add_days(date, rng.geometric(9.0));  // zero gaps allowed: same-day visits
        h.encounters.push_back(random_encounter(rng, date, cfg));
    }

    if (h.encounters.size() < 2 || !rng.bernoulli(cfg.drug_take_prob)) return h;

    // Drug intake after at least one encounter.
    const size_t slot = 1 + rng.next_below(h.encounters.size() - 1);
    const Date prev = h.encounters[slot - 1].date;
    const Date next = h.encounters[slot].date;
    const Date drug_date{static_cast<int32_t>(rng.uniform_int(prev.days, next.days))};
    Encounter drug_enc = random_encounter(rng, drug_date, cfg);
    drug_enc.codes.insert(drug_enc.codes.begin(), ClaimCode{CodeType::GPI, cfg.target_drug});
    insert_encounter(h.encounters, std::move(drug_enc));

    if (rng.bernoulli(cfg.risk_plant_prob)) {
        const int back = static_cast<int>(rng.uniform_int(1, cfg.risk_window_days));
        Encounter risk_enc = random_encounter(rng, add_days(drug_date, -back), cfg);
        risk_enc.codes.insert(risk_enc.codes.begin(), cfg.risk_code);
        insert_encounter(h.encounters, std::move(risk_enc));
    }

    // Exposure is decided by scanning what actually ended up in the record,
    // planted or organic.
    bool exposed = false;
    for (const Encounter& e : h.encounters) {
        if (e.date > drug_date) break;
        const int gap = days_between(e.date, drug_date);
        if (gap < 0 || gap > cfg.risk_window_days) continue;
        bool has_drug = false, has_risk = false;
        for (const ClaimCode& c : e.codes) {
            if (c.type == CodeType::GPI && c.code == cfg.target_drug) has_drug = true;
            if (c == cfg.risk_code) has_risk = true;
        }
        if (has_risk && !has_drug) {
            exposed = true;
            break;
        }
    }

    const double p_ade = exposed ? cfg.p_ade_given_risk : cfg.p_ade_base;
    if (rng.bernoulli(p_ade)) {
        const int fwd = static_cast<int>(rng.uniform_int(1, cfg.risk_window_days));
        Encounter ade_enc = random_encounter(rng, add_days(drug_date, fwd), cfg);
        ade_enc.codes.insert(ade_enc.codes.begin(), ClaimCode{CodeType::ICD, cfg.indication_code});
        ade_enc.codes.insert(ade_enc.codes.begin(), ClaimCode{CodeType::ICD, cfg.target_ade});
        insert_encounter(h.encounters, std::move(ade_enc));
    }
    return h;
}

}  // namespace detail

/// Deterministic given cfg.seed; patients come from independent per-patient
/// streams, so the output is stable under patient_count changes and under
/// the worker count.
inline std::vector<ClaimHistory> generate(const GeneratorConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    std::vector<ClaimHistory> out(cfg.patient_count);
    parallel_for(cfg.patient_count, threads,
                 [&](size_t i) { out[i] = detail::generate_patient(cfg, i); });
    return out;
}

}  // namespace ade
