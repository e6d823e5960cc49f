#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ade/rng.hpp"
#include "ade/vocab.hpp"

namespace ade {

struct EmbeddingMatrix {
    size_t dim = 0;
    std::vector<double> data;  // vocab_size x dim, row-major

    size_t vocab_size() const { return dim == 0 ? 0 : data.size() / dim; }
    const double* row(int id) const { return data.data() + static_cast<size_t>(id) * dim; }
    double* row(int id) { return data.data() + static_cast<size_t>(id) * dim; }
};

struct SkipgramConfig {
    size_t dim = 100;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double lr = 0.025;  // linear decay to lr * 1e-4
    uint64_t min_count = 1;
    uint64_t seed = 0;
};

namespace detail {

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Negative-sampling table over the unigram distribution raised to 0.75.
inline std::vector<int> build_unigram_table(const Vocabulary& vocab, size_t table_size) {
    std::vector<int> table;
    table.reserve(table_size);
    double total = 0.0;
    for (size_t id = 0; id < vocab.size(); ++id)
        total += std::pow(static_cast<double>(vocab.count_of(static_cast<int>(id))), 0.75);
    if (total == 0.0) {
        table.assign(table_size, 0);
        return table;
    }
    double cumulative = 0.0;
    size_t id = 0;
    auto mass = [&](size_t i) {
        return std::pow(static_cast<double>(vocab.count_of(static_cast<int>(i))), 0.75) / total;
    };
    cumulative = mass(0);
    for (size_t slot = 0; slot < table_size; ++slot) {
        const double frac = (static_cast<double>(slot) + 0.5) / static_cast<double>(table_size);
        while (frac > cumulative && id + 1 < vocab.size()) cumulative += mass(++id);
        table.push_back(static_cast<int>(id));
    }
    return table;
}

inline std::vector<std::vector<int>> flatten_to_ids(const std::vector<ClaimHistory>& histories,
                                                    const Vocabulary& vocab) {
    std::vector<std::vector<int>> corpus;
    corpus.reserve(histories.size());
    for (const ClaimHistory& h : histories) {
        std::vector<int> seq;
        for (const Encounter& e : h.encounters)
            for (const ClaimCode& c : e.codes) seq.push_back(vocab.id_of(c));
        if (!seq.empty()) corpus.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace detail

/// Skip-gram with negative sampling over per-patient flattened code
/// sequences; encounter boundaries do not break the context window.
/// Single-threaded and deterministic given cfg.seed. When epoch_loss is
/// given it receives the mean pair loss of each epoch.
inline EmbeddingMatrix train_skipgram(const std::vector<ClaimHistory>& histories,
                                      const Vocabulary& vocab, const SkipgramConfig& cfg,
                                      std::vector<double>* epoch_loss = nullptr) {
    if (vocab.size() <= 1)
        throw std::invalid_argument("skip-gram needs a vocabulary with at least 2 entries");
    if (cfg.dim < 2 || cfg.window < 1 || cfg.negatives < 1)
        throw std::invalid_argument("skip-gram requires dim >= 2, window >= 1, negatives >= 1");

    const size_t v = vocab.size();
    const size_t d = cfg.dim;
    Rng rng(cfg.seed);

    EmbeddingMatrix emb;
    emb.dim = d;
    emb.data.resize(v * d);
    for (double& x : emb.data) x = (rng.next_unit() - 0.5) / static_cast<double>(d);
    std::vector<double> ctx(v * d, 0.0);  // context-side weights, discarded after training

    const auto corpus = detail::flatten_to_ids(histories, vocab);
    size_t corpus_tokens = 0;
    for (const auto& seq : corpus) corpus_tokens += seq.size();
    const double total_tokens =
        static_cast<double>(corpus_tokens) * static_cast<double>(cfg.epochs) + 1.0;

    const size_t table_size = std::clamp<size_t>(v * 64, 1 << 16, 1 << 22);
    const auto table = detail::build_unigram_table(vocab, table_size);

    std::vector<double> grad_center(d);
    size_t tokens_done = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        size_t pair_count = 0;
        for (const auto& seq : corpus) {
            const int n = static_cast<int>(seq.size());
            for (int pos = 0; pos < n; ++pos) {
                const double progress = static_cast<double>(tokens_done) / total_tokens;
                const double alpha = std::max(cfg.lr * (1.0 - progress), cfg.lr * 1e-4);
                ++tokens_done;
                const int center = seq[pos];
                double* vc = emb.row(center);
                for (int off = -cfg.window; off <= cfg.window; ++off) {
                    if (off == 0) continue;
                    const int cpos = pos + off;
                    if (cpos < 0 || cpos >= n) continue;
                    const int context = seq[cpos];

                    std::fill(grad_center.begin(), grad_center.end(), 0.0);
                    double pair_loss = 0.0;
                    for (int s = 0; s <= cfg.negatives; ++s) {
                        int target;
                        double y;
                        if (s == 0) {
                            target = context;
                            y = 1.0;
                        } else {
                            target = table[rng.next_below(table.size())];
                            if (target == context) continue;
                            y = 0.0;
                        }
                        double* u = ctx.data() + static_cast<size_t>(target) * d;
                        double dot = 0.0;
                        for (size_t k = 0; k < d; ++k) dot += vc[k] * u[k];
                        const double pred = detail::stable_sigmoid(dot);
                        pair_loss -= y > 0.5 ? std::log(std::max(pred, 1e-12))
                                             : std::log(std::max(1.0 - pred, 1e-12));
                        const double g = (pred - y) * alpha;
                        for (size_t k = 0; k < d; ++k) {
                            grad_center[k] += g * u[k];
                            u[k] -= g * vc[k];
                        }
                    }
                    for (size_t k = 0; k < d; ++k) vc[k] -= grad_center[k];
                    loss_sum += pair_loss;
                    ++pair_count;
                }
            }
        }
        if (epoch_loss)
            epoch_loss->push_back(pair_count ? loss_sum / static_cast<double>(pair_count) : 0.0);
    }
    return emb;
}

/// Maps codes to their embedding rows; out-of-vocabulary codes get the
/// unknown row.
inline std::vector<std::vector<double>> embed_sequence(const std::vector<ClaimCode>& codes,
                                                       const Vocabulary& vocab,
                                                       const EmbeddingMatrix& emb) {
    std::vector<std::vector<double>> out;
    out.reserve(codes.size());
    for (const ClaimCode& c : codes) {
        const double* r = emb.row(vocab.id_of(c));
        out.emplace_back(r, r + emb.dim);
    }
    return out;
}

// ---- embedding file ----
// First line: "vocab_size dim". Then one line per code, "TYPE:code v1 ... vdim";
// the reserved unknown row is written with the key "<unk>".

inline void write_embedding(const Vocabulary& vocab, const EmbeddingMatrix& emb,
                            std::ostream& out) {
    out << emb.vocab_size() << ' ' << emb.dim << '\n';
    char buf[32];
    for (size_t id = 0; id < emb.vocab_size(); ++id) {
        out << vocab.key_of(static_cast<int>(id));
        const double* r = emb.row(static_cast<int>(id));
        for (size_t k = 0; k < emb.dim; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", r[k]);
            out << ' ' << buf;
        }
        out << '\n';
    }
}

struct LoadedEmbedding {
    Vocabulary vocab;
    EmbeddingMatrix matrix;
};

inline LoadedEmbedding parse_embedding(std::istream& in) {
    LoadedEmbedding loaded;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("embedding file is empty");
    size_t v = 0, d = 0;
    {
        std::istringstream header(line);
        if (!(header >> v >> d) || v == 0 || d == 0)
            throw std::runtime_error("embedding header must be 'vocab_size dim'");
    }
    loaded.matrix.dim = d;
    loaded.matrix.data.resize(v * d);
    for (size_t id = 0; id < v; ++id) {
        if (!std::getline(in, line))
            throw std::runtime_error("embedding file truncated at row " + std::to_string(id));
        std::istringstream row(line);
        std::string key;
        if (!(row >> key)) throw std::runtime_error("bad embedding row " + std::to_string(id));
        if (id == 0) {
            if (key != Vocabulary::kUnknownKey)
                throw std::runtime_error("embedding row 0 must be the reserved '<unk>' entry");
        } else {
            loaded.vocab.add_entry(key, 0);
        }
        double* r = loaded.matrix.row(static_cast<int>(id));
        for (size_t k = 0; k < d; ++k)
            if (!(row >> r[k]))
                throw std::runtime_error("embedding row for '" + key + "' has fewer than " +
                                         std::to_string(d) + " values");
    }
    return loaded;
}

inline void write_embedding_file(const Vocabulary& vocab, const EmbeddingMatrix& emb,
                                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    write_embedding(vocab, emb, out);
}

inline LoadedEmbedding read_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());
    return parse_embedding(in);
}

}  // namespace ade
