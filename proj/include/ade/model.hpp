#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ade/claims.hpp"
#include "ade/embedding.hpp"
#include "ade/layers.hpp"

namespace ade {

inline constexpr const char* kCheckpointVersion = "htnnr-ckpt-1";

/// An instance lowered to what the networks consume: per-encounter code ids
/// plus day gaps between consecutive encounters (gap of the first kept
/// encounter is 0 and is clamped to the one-day floor downstream).
struct PreparedInstance {
    std::vector<std::vector<int>> encounter_codes;
    std::vector<int> day_gaps;
    int label = -1;
};

inline PreparedInstance prepare_history(const ClaimHistory& history, const Vocabulary& vocab,
                                        size_t max_encounters, int label = -1) {
    if (history.encounters.empty())
        throw std::invalid_argument("cannot prepare an empty claim history");
    const size_t n = history.encounters.size();
    const size_t start = n > max_encounters ? n - max_encounters : 0;  // keep most recent
    PreparedInstance prep;
    prep.label = label;
    for (size_t i = start; i < n; ++i) {
        const Encounter& e = history.encounters[i];
        std::vector<int> ids;
        ids.reserve(e.codes.size());
        for (const ClaimCode& c : e.codes) ids.push_back(vocab.id_of(c));
        prep.encounter_codes.push_back(std::move(ids));
        prep.day_gaps.push_back(
            i == start ? 0 : days_between(history.encounters[i - 1].date, e.date));
    }
    return prep;
}

/// Embedding rows wrapped as shared constant tensors, one per id, built
/// up front so lookups are read-only and safe to share across worker
/// threads. Rows never carry gradients: embeddings stay frozen during
/// classifier training.
class EmbeddingSource {
public:
    explicit EmbeddingSource(const EmbeddingMatrix& emb) {
        rows_.reserve(emb.vocab_size());
        for (size_t id = 0; id < emb.vocab_size(); ++id) {
            const double* r = emb.row(static_cast<int>(id));
            rows_.push_back(make_constant({emb.dim}, std::vector<real>(r, r + emb.dim)));
        }
        dim_ = emb.dim;
    }

    size_t dim() const { return dim_; }

    TensorPtr row(int id) const { return rows_.at(static_cast<size_t>(id)); }

private:
    size_t dim_ = 0;
    std::vector<TensorPtr> rows_;
};

/// Per-forward attention tensors, exposed for inspection.
struct ForwardTrace {
    std::vector<TensorPtr> code_alphas;
    TensorPtr encounter_alpha;
};

struct HtnnrDims {
    size_t embed_dim = 100;
    size_t bi_hidden = 64;  // per direction; encounter vectors have 2x this
    size_t tlstm_hidden = 128;
    size_t max_encounters = 200;
};

/// The hierarchical classifier: Bi-LSTM + attention over the codes of each
/// encounter, a time-aware LSTM + attention over the encounter sequence,
/// and a sigmoid head.
class HtnnrModel {
public:
    static constexpr const char* kKind = "htnnr";

    explicit HtnnrModel(const HtnnrDims& dims, uint64_t seed = 0) : dims_(dims) {
        encounter_encoder_ = BiLstmEncoder(params_, "encounter.bilstm", dims.embed_dim, dims.bi_hidden);
        code_attention_ = AttentionLayer(params_, "encounter.attn.w", 2 * dims.bi_hidden);
        history_cell_ = TlstmCell(params_, "history.tlstm", 2 * dims.bi_hidden, dims.tlstm_hidden);
        encounter_attention_ = AttentionLayer(params_, "history.attn.w", dims.tlstm_hidden);
        cls_w_ = params_.add("classifier.w", {dims.tlstm_hidden});
        cls_b_ = params_.add("classifier.b", {1});
        Rng rng(seed);
        encounter_encoder_.init(rng);
        code_attention_.init(rng);
        history_cell_.init(rng);
        encounter_attention_.init(rng);
        detail::init_uniform(rng, cls_w_, dims.tlstm_hidden);
        detail::fill(cls_b_, real(0));
    }

    const HtnnrDims& dims() const { return dims_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    /// Attention-weighted encounter vector from one encounter's code ids.
    TensorPtr encode_encounter(Tape& t, const std::vector<int>& code_ids, const EmbeddingSource& src,
                               TensorPtr* alpha_out = nullptr) const {
        if (code_ids.empty()) throw std::invalid_argument("encounter has no codes");
        std::vector<TensorPtr> inputs;
        inputs.reserve(code_ids.size());
        for (int id : code_ids) inputs.push_back(src.row(id));
        auto h_stack = encounter_encoder_.encode(t, inputs);
        auto att = code_attention_.apply(t, h_stack);
        if (alpha_out) *alpha_out = att.alpha;
        return att.context;
    }

    /// ADE probability for one prepared instance, strictly inside (0,1).
    TensorPtr forward(Tape& t, const PreparedInstance& inst, const EmbeddingSource& src,
                      ForwardTrace* trace = nullptr, bool bypass_decay = false) const {
        if (inst.encounter_codes.empty())
            throw std::invalid_argument("forward: instance has no encounters");
        const size_t m = inst.encounter_codes.size();
        std::vector<TensorPtr> hidden(m);
        LstmCell::State state = history_cell_.zero_state();
        for (size_t i = 0; i < m; ++i) {
            TensorPtr alpha;
            auto v_enc = encode_encounter(t, inst.encounter_codes[i], src,
                                          trace ? &alpha : nullptr);
            if (trace) trace->code_alphas.push_back(alpha);
            state = history_cell_.step(t, v_enc, state, inst.day_gaps[i], bypass_decay);
            hidden[i] = state.h;
        }
        auto att = encounter_attention_.apply(t, stack_cols(t, hidden));
        if (trace) trace->encounter_alpha = att.alpha;
        auto logit = add(t, matmul(t, cls_w_, att.context), cls_b_);
        return sigmoid(t, logit);
    }

private:
    HtnnrDims dims_;
    ParamSet params_;
    BiLstmEncoder encounter_encoder_;
    AttentionLayer code_attention_;
    TlstmCell history_cell_;
    AttentionLayer encounter_attention_;
    TensorPtr cls_w_, cls_b_;
};

struct FlatLstmDims {
    size_t embed_dim = 100;
    size_t hidden = 128;
    size_t max_encounters = 200;
};

/// Baseline: one LSTM over the flattened code sequence, ignoring encounter
/// boundaries and timestamps; classifies from the final hidden state.
class FlatLstmModel {
public:
    static constexpr const char* kKind = "flat-lstm";

    explicit FlatLstmModel(const FlatLstmDims& dims, uint64_t seed = 0) : dims_(dims) {
        cell_ = LstmCell(params_, "flat.lstm", dims.embed_dim, dims.hidden);
        cls_w_ = params_.add("classifier.w", {dims.hidden});
        cls_b_ = params_.add("classifier.b", {1});
        Rng rng(seed);
        cell_.init(rng);
        detail::init_uniform(rng, cls_w_, dims.hidden);
        detail::fill(cls_b_, real(0));
    }

    const FlatLstmDims& dims() const { return dims_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    TensorPtr forward(Tape& t, const PreparedInstance& inst, const EmbeddingSource& src,
                      ForwardTrace* = nullptr, bool = false) const {
        if (inst.encounter_codes.empty())
            throw std::invalid_argument("forward: instance has no encounters");
        LstmCell::State state = cell_.zero_state();
        for (const auto& ids : inst.encounter_codes)
            for (int id : ids) state = cell_.step(t, src.row(id), state);
        auto logit = add(t, matmul(t, cls_w_, state.h), cls_b_);
        return sigmoid(t, logit);
    }

private:
    FlatLstmDims dims_;
    ParamSet params_;
    LstmCell cell_;
    TensorPtr cls_w_, cls_b_;
};

// ---- checkpoint format ----
// {"version":"htnnr-ckpt-1","model":...,"dims":{...},
//  "params":{name:{"shape":[...],"values":[...]}}}

namespace detail {

inline json params_to_json(const ParamSet& params) {
    json out = json::object();
    for (const auto& [name, t] : params.items()) {
        json shape = json::array();
        for (size_t d : t->shape()) shape.push_back(d);
        out[name] = json{{"shape", std::move(shape)}, {"values", t->values()}};
    }
    return out;
}

inline void params_from_json(const json& j, ParamSet& params) {
    for (auto& [name, t] : params.items()) {
        if (!j.contains(name)) throw std::runtime_error("checkpoint missing parameter '" + name + "'");
        const json& entry = j.at(name);
        std::vector<size_t> shape = entry.at("shape").get<std::vector<size_t>>();
        if (shape != t->shape())
            throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                     shape_string(shape) + ", expected " + shape_string(t->shape()));
        auto values = entry.at("values").get<std::vector<real>>();
        if (values.size() != t->numel())
            throw std::runtime_error("checkpoint parameter '" + name + "' has " +
                                     std::to_string(values.size()) + " values, expected " +
                                     std::to_string(t->numel()));
        t->values() = std::move(values);
    }
}

}  // namespace detail

inline void save_checkpoint(const HtnnrModel& model, std::ostream& out) {
    json j{{"version", kCheckpointVersion},
           {"model", HtnnrModel::kKind},
           {"dims",
            {{"embed_dim", model.dims().embed_dim},
             {"bi_hidden", model.dims().bi_hidden},
             {"tlstm_hidden", model.dims().tlstm_hidden},
             {"max_encounters", model.dims().max_encounters}}},
           {"params", detail::params_to_json(model.params())}};
    out << j.dump() << '\n';
}

inline void save_checkpoint(const FlatLstmModel& model, std::ostream& out) {
    json j{{"version", kCheckpointVersion},
           {"model", FlatLstmModel::kKind},
           {"dims",
            {{"embed_dim", model.dims().embed_dim},
             {"hidden", model.dims().hidden},
             {"max_encounters", model.dims().max_encounters}}},
           {"params", detail::params_to_json(model.params())}};
    out << j.dump() << '\n';
}

template <class Model>
inline void save_checkpoint_file(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    save_checkpoint(model, out);
}

/// Parsed but not yet materialized checkpoint.
struct Checkpoint {
    std::string model;
    json dims;
    json params;
};

inline Checkpoint parse_checkpoint(std::istream& in) {
    json j = json::parse(in);
    if (!j.contains("version") || j.at("version").get<std::string>() != kCheckpointVersion)
        throw std::runtime_error(std::string("checkpoint version mismatch, expected '") +
                                 kCheckpointVersion + "'");
    return Checkpoint{j.at("model").get<std::string>(), j.at("dims"), j.at("params")};
}

inline Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    return parse_checkpoint(in);
}

inline HtnnrModel htnnr_from_checkpoint(const Checkpoint& ck) {
    if (ck.model != HtnnrModel::kKind)
        throw std::runtime_error("checkpoint holds model '" + ck.model + "', expected 'htnnr'");
    HtnnrDims dims;
    dims.embed_dim = ck.dims.at("embed_dim").get<size_t>();
    dims.bi_hidden = ck.dims.at("bi_hidden").get<size_t>();
    dims.tlstm_hidden = ck.dims.at("tlstm_hidden").get<size_t>();
    dims.max_encounters = ck.dims.at("max_encounters").get<size_t>();
    HtnnrModel model(dims);
    detail::params_from_json(ck.params, model.params());
    return model;
}

inline FlatLstmModel flat_lstm_from_checkpoint(const Checkpoint& ck) {
    if (ck.model != FlatLstmModel::kKind)
        throw std::runtime_error("checkpoint holds model '" + ck.model + "', expected 'flat-lstm'");
    FlatLstmDims dims;
    dims.embed_dim = ck.dims.at("embed_dim").get<size_t>();
    dims.hidden = ck.dims.at("hidden").get<size_t>();
    dims.max_encounters = ck.dims.at("max_encounters").get<size_t>();
    FlatLstmModel model(dims);
    detail::params_from_json(ck.params, model.params());
    return model;
}

}  // namespace ade
