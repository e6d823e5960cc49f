#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ade/autodiff.hpp"
#include "ade/rng.hpp"

namespace ade {

/// Ordered, name-addressable collection of learnable tensors.
class ParamSet {
public:
    TensorPtr add(const std::string& name, std::vector<size_t> shape) {
        auto t = make_param(std::move(shape));
        items_.emplace_back(name, t);
        return t;
    }

    TensorPtr find(const std::string& name) const {
        for (const auto& [n, t] : items_)
            if (n == name) return t;
        throw std::out_of_range("no parameter named '" + name + "'");
    }

    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    std::vector<std::pair<std::string, TensorPtr>>& items() { return items_; }

    size_t total_size() const {
        size_t n = 0;
        for (const auto& [name, t] : items_) n += t->numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : items_) t->zero_grad();
    }

    std::vector<std::vector<real>> snapshot() const {
        std::vector<std::vector<real>> s;
        s.reserve(items_.size());
        for (const auto& [name, t] : items_) s.push_back(t->values());
        return s;
    }

    void restore(const std::vector<std::vector<real>>& s) {
        for (size_t i = 0; i < items_.size(); ++i) items_[i].second->values() = s[i];
    }

private:
    std::vector<std::pair<std::string, TensorPtr>> items_;
};

namespace detail {

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline void init_uniform(Rng& rng, const TensorPtr& t, size_t fan_in) {
    const real bound = real(1) / std::sqrt(static_cast<real>(fan_in));
    for (real& x : t->values()) x = static_cast<real>(rng.uniform_real(-bound, bound));
}

inline void fill(const TensorPtr& t, real v) { std::fill(t->values().begin(), t->values().end(), v); }

}  // namespace detail

/// One LSTM cell: separate sigmoid gates and a tanh candidate, each an
/// affine map of [input, previous hidden].
struct LstmCell {
    size_t input_dim = 0;
    size_t hidden_dim = 0;
    TensorPtr w_i, b_i, w_f, b_f, w_o, b_o, w_c, b_c;

    LstmCell() = default;

    LstmCell(ParamSet& params, const std::string& prefix, size_t input_dim, size_t hidden_dim)
        : input_dim(input_dim), hidden_dim(hidden_dim) {
        const size_t z = input_dim + hidden_dim;
        w_i = params.add(prefix + ".W_i", {hidden_dim, z});
        b_i = params.add(prefix + ".b_i", {hidden_dim});
        w_f = params.add(prefix + ".W_f", {hidden_dim, z});
        b_f = params.add(prefix + ".b_f", {hidden_dim});
        w_o = params.add(prefix + ".W_o", {hidden_dim, z});
        b_o = params.add(prefix + ".b_o", {hidden_dim});
        w_c = params.add(prefix + ".W_c", {hidden_dim, z});
        b_c = params.add(prefix + ".b_c", {hidden_dim});
    }

    void init(Rng& rng) const {
        const size_t z = input_dim + hidden_dim;
        for (const TensorPtr& w : {w_i, w_f, w_o, w_c}) detail::init_uniform(rng, w, z);
        for (const TensorPtr& b : {b_i, b_o, b_c}) detail::fill(b, real(0));
        detail::fill(b_f, real(1));  // standard forget-gate bias
    }

    struct State {
        TensorPtr h, c;
    };

    State zero_state() const {
        return {make_tensor({hidden_dim}), make_tensor({hidden_dim})};
    }

    /// Standard update: c = f.c_prev + i.tanh(Wc z + bc), h = o.tanh(c).
    State step(Tape& t, const TensorPtr& x, const State& prev) const {
        return step_with_memory(t, x, prev.h, prev.c);
    }

    /// Same gates, but the memory fed into the cell update is supplied by
    /// the caller (the time-aware cell passes an adjusted memory here).
    State step_with_memory(Tape& t, const TensorPtr& x, const TensorPtr& h_prev,
                           const TensorPtr& c_eff) const {
        auto z = concat(t, x, h_prev);
        auto i = sigmoid(t, add(t, matmul(t, w_i, z), b_i));
        auto f = sigmoid(t, add(t, matmul(t, w_f, z), b_f));
        auto o = sigmoid(t, add(t, matmul(t, w_o, z), b_o));
        auto cand = ade::tanh(t, add(t, matmul(t, w_c, z), b_c));
        auto c = add(t, mul(t, f, c_eff), mul(t, i, cand));
        auto h = mul(t, o, ade::tanh(t, c));
        return {h, c};
    }
};

/// Attention over a {D, T} matrix of stacked states: E = tanh(H),
/// alpha = softmax(w'E), v = H alpha.
struct AttentionLayer {
    TensorPtr w;

    AttentionLayer() = default;
    AttentionLayer(ParamSet& params, const std::string& name, size_t dim) {
        w = params.add(name, {dim});
    }

    void init(Rng& rng) const { detail::init_uniform(rng, w, w->dim(0)); }

    struct Result {
        TensorPtr context;  // {D}
        TensorPtr alpha;    // {T}
    };

    Result apply(Tape& t, const TensorPtr& h_stack) const {
        auto e = ade::tanh(t, h_stack);
        auto scores = matmul(t, w, e);
        auto alpha = softmax(t, scores);
        auto context = matmul(t, h_stack, alpha);
        return {context, alpha};
    }
};

/// Bi-directional LSTM; output j concatenates the forward state after
/// consuming positions 1..j and the backward state after consuming T..j.
struct BiLstmEncoder {
    LstmCell fwd, bwd;

    BiLstmEncoder() = default;
    BiLstmEncoder(ParamSet& params, const std::string& prefix, size_t input_dim,
                  size_t hidden_dim)
        : fwd(params, prefix + ".fwd", input_dim, hidden_dim),
          bwd(params, prefix + ".bwd", input_dim, hidden_dim) {}

    void init(Rng& rng) const {
        fwd.init(rng);
        bwd.init(rng);
    }

    size_t output_dim() const { return 2 * fwd.hidden_dim; }

    /// Returns the {2H, T} matrix of per-position outputs.
    TensorPtr encode(Tape& t, const std::vector<TensorPtr>& inputs) const {
        if (inputs.empty()) throw std::invalid_argument("BiLstmEncoder: empty input sequence");
        const size_t n = inputs.size();
        std::vector<TensorPtr> hf(n), hb(n);
        LstmCell::State sf = fwd.zero_state();
        for (size_t j = 0; j < n; ++j) {
            sf = fwd.step(t, inputs[j], sf);
            hf[j] = sf.h;
        }
        LstmCell::State sb = bwd.zero_state();
        for (size_t j = n; j-- > 0;) {
            sb = bwd.step(t, inputs[j], sb);
            hb[j] = sb.h;
        }
        std::vector<TensorPtr> cols(n);
        for (size_t j = 0; j < n; ++j) cols[j] = concat(t, hf[j], hb[j]);
        return stack_cols(t, cols);
    }
};

/// Time-aware LSTM cell: the previous memory is split into a learned
/// short-term subspace cS = tanh(Wd c + bd) and its complement cL = c - cS;
/// the short-term part is decayed by g(dt) = 1/dt before the ordinary
/// update runs on cL + g*cS. dt is clamped below at one day.
struct TlstmCell {
    LstmCell gates;
    TensorPtr w_d, b_d;

    TlstmCell() = default;
    TlstmCell(ParamSet& params, const std::string& prefix, size_t input_dim, size_t hidden_dim)
        : gates(params, prefix, input_dim, hidden_dim) {
        w_d = params.add(prefix + ".W_d", {hidden_dim, hidden_dim});
        b_d = params.add(prefix + ".b_d", {hidden_dim});
    }

    void init(Rng& rng) const {
        gates.init(rng);
        detail::init_uniform(rng, w_d, gates.hidden_dim);
        detail::fill(b_d, real(0));
    }

    static real decay(int delta_days) {
        if (delta_days < 0) throw std::invalid_argument("TlstmCell: negative time span");
        return real(1) / static_cast<real>(std::max(delta_days, 1));
    }

    LstmCell::State zero_state() const { return gates.zero_state(); }

    LstmCell::State step(Tape& t, const TensorPtr& x, const LstmCell::State& prev,
                         int delta_days, bool bypass_decomposition = false) const {
        const real g = decay(delta_days);
        TensorPtr c_eff;
        if (bypass_decomposition) {
            c_eff = prev.c;
        } else {
            auto c_short = ade::tanh(t, add(t, matmul(t, w_d, prev.c), b_d));
            auto c_long = sub(t, prev.c, c_short);
            c_eff = add(t, c_long, scalar_mul(t, c_short, g));
        }
        return gates.step_with_memory(t, x, prev.h, c_eff);
    }
};

}  // namespace ade
