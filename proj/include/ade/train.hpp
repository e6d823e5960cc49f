#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <vector>

#include "ade/metrics.hpp"
#include "ade/model.hpp"
#include "ade/parallel.hpp"

namespace ade {

struct TrainConfig {
    size_t batch_size = 256;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    size_t max_epochs = 50;
    size_t patience = 5;
    uint64_t seed = 0;
    size_t max_encounters = 200;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    }
};

class AdamOptimizer {
public:
    AdamOptimizer(ParamSet& params, double lr, double beta1, double beta2, double epsilon)
        : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
        for (const auto& [name, t] : params.items()) {
            m_.emplace_back(t->numel(), 0.0);
            v_.emplace_back(t->numel(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        size_t idx = 0;
        for (auto& [name, p] : params_->items()) {
            real* val = p->data();
            const real* grad = p->grad();
            auto& m = m_[idx];
            auto& v = v_[idx];
            for (size_t i = 0; i < p->numel(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                val[i] -= static_cast<real>(lr_ * m_hat / (std::sqrt(v_hat) + epsilon_));
            }
            ++idx;
        }
    }

private:
    ParamSet* params_;
    double lr_, beta1_, beta2_, epsilon_;
    uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

class TrainingError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EpochStats {
    size_t epoch;  // 1-based
    double train_loss;
    double val_loss;
};

struct TrainResult {
    std::vector<EpochStats> curve;
    size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Scores land by index, so the result is independent of the worker count.
template <class Model>
inline std::vector<double> predict_all(const Model& model,
                                       std::span<const PreparedInstance> instances,
                                       const EmbeddingSource& src, unsigned threads = 1) {
    std::vector<double> probs(instances.size());
    parallel_for(instances.size(), threads, [&](size_t i) {
        Tape tape;
        probs[i] = static_cast<double>(model.forward(tape, instances[i], src)->at(0));
    });
    return probs;
}

template <class Model>
inline double validation_loss(const Model& model, std::span<const PreparedInstance> instances,
                              const EmbeddingSource& src, unsigned threads = 1) {
    const auto probs = predict_all(model, instances, src, threads);
    std::vector<int> labels(instances.size());
    for (size_t i = 0; i < instances.size(); ++i) labels[i] = instances[i].label;
    return bce_mean(probs, labels);
}

/// Adam on seeded shuffled mini-batches with gradient accumulation, one
/// instance at a time. Tracks validation BCE after each epoch, keeps the
/// best parameter snapshot, and stops after `patience` epochs without
/// improvement. The model is left holding the best parameters. `threads`
/// only parallelizes the validation pass, which is worker-count-invariant.
template <class Model>
inline TrainResult train(Model& model, std::span<const PreparedInstance> train_set,
                         std::span<const PreparedInstance> val_set, const EmbeddingSource& src,
                         const TrainConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: training and validation sets must be non-empty");

    AdamOptimizer adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    Rng rng(cfg.seed);
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    auto best_params = model.params().snapshot();
    size_t epochs_without_improvement = 0;

    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t batch_start = 0; batch_start < order.size(); batch_start += cfg.batch_size) {
            const size_t batch_end = std::min(order.size(), batch_start + cfg.batch_size);
            const real inv_batch = real(1) / static_cast<real>(batch_end - batch_start);
            model.params().zero_grad();
            double batch_loss = 0.0;
            for (size_t k = batch_start; k < batch_end; ++k) {
                const PreparedInstance& inst = train_set[order[k]];
                Tape tape;
                auto prob = model.forward(tape, inst, src);
                auto loss = scalar_mul(tape, bce(tape, prob, inst.label), inv_batch);
                tape.backward(loss);
                batch_loss += static_cast<double>(loss->at(0));
            }
            if (!std::isfinite(batch_loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_start / cfg.batch_size + 1));
            adam.step();
            epoch_loss += batch_loss * static_cast<double>(batch_end - batch_start);
        }
        epoch_loss /= static_cast<double>(order.size());

        const double val_loss = validation_loss(model, val_set, src, threads);
        result.curve.push_back({epoch, epoch_loss, val_loss});
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            best_params = model.params().snapshot();
            epochs_without_improvement = 0;
        } else {
            ++epochs_without_improvement;
            if (epochs_without_improvement >= cfg.patience) break;
        }
    }

    model.params().restore(best_params);
    return result;
}

template <class Model>
inline MetricsReport evaluate(const Model& model, std::span<const PreparedInstance> test_set,
                              const EmbeddingSource& src, double threshold = 0.5, unsigned threads = 1) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    const auto probs = predict_all(model, test_set, src, threads);
    std::vector<int> labels(test_set.size());
    for (size_t i = 0; i < test_set.size(); ++i) labels[i] = test_set[i].label;
    return compute_metrics(probs, labels, threshold);
}

inline void write_loss_curve(const std::vector<EpochStats>& curve, std::ostream& out) {
    out << "epoch,train_loss,val_loss\n";
    char buf[96];
    for (const EpochStats& e : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
        out << buf;
    }
}

}  // namespace ade
