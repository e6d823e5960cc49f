#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ade/model.hpp"
#include "oracles.hpp"

using namespace ade;

namespace {

struct TinyWorld {
    Vocabulary vocab;
    EmbeddingMatrix emb;
};

TinyWorld tiny_world(size_t dim, const std::vector<std::pair<std::string, std::vector<real>>>& rows) {
    TinyWorld w;
    w.emb.dim = dim;
    w.emb.data.assign(dim, real(0));  // unknown row
    for (const auto& [key, values] : rows) {
        w.vocab.add_entry(key, 1);
        w.emb.data.insert(w.emb.data.end(), values.begin(), values.end());
    }
    return w;
}

TinyWorld random_world(Rng& rng, size_t dim, size_t codes) {
    TinyWorld w;
    w.emb.dim = dim;
    w.emb.data.assign(dim * (codes + 1), real(0));
    for (size_t i = 0; i < codes; ++i) w.vocab.add_entry("ICD:c" + std::to_string(i), 1);
    for (real& x : w.emb.data) x = static_cast<real>(rng.uniform_real(-0.6, 0.6));
    return w;
}

PreparedInstance random_instance(Rng& rng, size_t codes_in_vocab, int encounters, int max_gap,
                                 int label = 1) {
    PreparedInstance inst;
    inst.label = label;
    for (int e = 0; e < encounters; ++e) {
        std::vector<int> ids;
        const int n = 1 + static_cast<int>(rng.next_below(4));
        for (int i = 0; i < n; ++i)
            ids.push_back(1 + static_cast<int>(rng.next_below(codes_in_vocab)));
        inst.encounter_codes.push_back(std::move(ids));
        inst.day_gaps.push_back(e == 0 ? 0 : static_cast<int>(rng.next_below(max_gap + 1)));
    }
    return inst;
}

void zero_params(ParamSet& params) {
    for (auto& [name, t] : params.items()) std::fill(t->values().begin(), t->values().end(), real(0));
}

void randomize_params(Rng& rng, ParamSet& params, double scale = 0.7) {
    for (auto& [name, t] : params.items())
        for (real& x : t->values()) x = static_cast<real>(rng.uniform_real(-scale, scale));
}

}  // namespace

TEST_CASE("all-zero parameters give probability exactly 0.5") {
    auto w = tiny_world(2, {{"ICD:a", {real(0.3), real(-0.2)}}});
    EmbeddingSource src(w.emb);

    HtnnrModel model({.embed_dim = 2, .bi_hidden = 3, .tlstm_hidden = 4}, 0);
    zero_params(model.params());
    PreparedInstance inst{{{1}, {1, 1}}, {0, 5}, 1};
    Tape tape;
    CHECK(model.forward(tape, inst, src)->at(0) == real(0.5));

    FlatLstmModel flat({.embed_dim = 2, .hidden = 3}, 0);
    zero_params(flat.params());
    Tape tape2;
    CHECK(flat.forward(tape2, inst, src)->at(0) == real(0.5));
}

TEST_CASE("single-encounter single-code forward matches the scalar trace") {
    auto w = tiny_world(1, {{"ICD:a", {real(0.9)}}});
    EmbeddingSource src(w.emb);
    HtnnrModel model({.embed_dim = 1, .bi_hidden = 1, .tlstm_hidden = 1}, 0);
    auto set = [&](const char* name, std::vector<real> v) {
        model.params().find(name)->values() = std::move(v);
    };
    set("encounter.bilstm.fwd.W_i", {real(0.4), real(0.2)});
    set("encounter.bilstm.fwd.b_i", {real(0)});
    set("encounter.bilstm.fwd.W_f", {real(0.4), real(0.2)});
    set("encounter.bilstm.fwd.b_f", {real(1.0)});
    set("encounter.bilstm.fwd.W_o", {real(0.4), real(0.2)});
    set("encounter.bilstm.fwd.b_o", {real(0.1)});
    set("encounter.bilstm.fwd.W_c", {real(0.4), real(0.2)});
    set("encounter.bilstm.fwd.b_c", {real(-0.2)});
    set("encounter.bilstm.bwd.W_i", {real(-0.5), real(0.3)});
    set("encounter.bilstm.bwd.b_i", {real(0.2)});
    set("encounter.bilstm.bwd.W_f", {real(-0.5), real(0.3)});
    set("encounter.bilstm.bwd.b_f", {real(1.0)});
    set("encounter.bilstm.bwd.W_o", {real(-0.5), real(0.3)});
    set("encounter.bilstm.bwd.b_o", {real(0)});
    set("encounter.bilstm.bwd.W_c", {real(-0.5), real(0.3)});
    set("encounter.bilstm.bwd.b_c", {real(0.4)});
    set("encounter.attn.w", {real(0.8), real(-0.4)});  // T=1: value is irrelevant
    set("history.tlstm.W_i", {real(0.3), real(-0.2), real(0.1)});
    set("history.tlstm.b_i", {real(0.05)});
    set("history.tlstm.W_f", {real(-0.1), real(0.4), real(0.2)});
    set("history.tlstm.b_f", {real(1.0)});
    set("history.tlstm.W_o", {real(0.2), real(0.2), real(-0.3)});
    set("history.tlstm.b_o", {real(0)});
    set("history.tlstm.W_c", {real(0.5), real(0.1), real(-0.4)});
    set("history.tlstm.b_c", {real(-0.1)});
    set("history.tlstm.W_d", {real(0.6)});
    set("history.tlstm.b_d", {real(0)});
    set("history.attn.w", {real(0.9)});
    set("classifier.w", {real(1.2)});
    set("classifier.b", {real(-0.3)});

    PreparedInstance inst{{{1}}, {0}, 1};
    Tape tape;
    ForwardTrace trace;
    auto p = model.forward(tape, inst, src, &trace);
    CHECK(static_cast<double>(p->at(0)) == Catch::Approx(0.420068304752458).margin(1e-12));
    REQUIRE(trace.code_alphas.size() == 1);
    CHECK(trace.code_alphas[0]->at(0) == real(1));
    CHECK(trace.encounter_alpha->at(0) == real(1));
}

TEST_CASE("flat baseline matches its scalar trace and is order-sensitive") {
    auto w = tiny_world(1, {{"ICD:a", {real(0.9)}},
                            {"ICD:b", {real(-0.7)}},
                            {"ICD:c", {real(0.2)}}});
    EmbeddingSource src(w.emb);
    FlatLstmModel model({.embed_dim = 1, .hidden = 1}, 0);
    auto set = [&](const char* name, std::vector<real> v) {
        model.params().find(name)->values() = std::move(v);
    };
    set("flat.lstm.W_i", {real(0.4), real(0.2)});
    set("flat.lstm.b_i", {real(0)});
    set("flat.lstm.W_f", {real(-0.1), real(0.3)});
    set("flat.lstm.b_f", {real(1.0)});
    set("flat.lstm.W_o", {real(0.5), real(-0.2)});
    set("flat.lstm.b_o", {real(0.1)});
    set("flat.lstm.W_c", {real(0.3), real(0.1)});
    set("flat.lstm.b_c", {real(-0.2)});
    set("classifier.w", {real(0.8)});
    set("classifier.b", {real(0.05)});

    PreparedInstance inst{{{1, 2}, {3}}, {0, 30}, 1};
    Tape tape;
    auto p = model.forward(tape, inst, src);
    CHECK(static_cast<double>(p->at(0)) == Catch::Approx(0.493526322855374).margin(1e-12));

    // Moving a code across encounter boundaries changes the flattened
    // sequence and, in general, the output.
    PreparedInstance reordered{{{3, 1}, {2}}, {0, 30}, 1};
    Tape tape2;
    auto p2 = model.forward(tape2, reordered, src);
    CHECK(p->at(0) != p2->at(0));
}

TEST_CASE("probabilities stay strictly inside (0,1)") {
    Rng rng(31);
    auto w = random_world(rng, 4, 6);
    EmbeddingSource src(w.emb);
    HtnnrModel model({.embed_dim = 4, .bi_hidden = 3, .tlstm_hidden = 5}, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = random_instance(rng, 6, 1 + static_cast<int>(rng.next_below(5)), 40);
        Tape tape;
        const double p = static_cast<double>(model.forward(tape, inst, src)->at(0));
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("attention weights are normalized for random models and inputs") {
    Rng rng(47);
    auto w = random_world(rng, 4, 8);
    EmbeddingSource src(w.emb);
    for (int trial = 0; trial < 100; ++trial) {
        HtnnrModel model({.embed_dim = 4, .bi_hidden = 2, .tlstm_hidden = 3}, rng.next_u64());
        randomize_params(rng, model.params(), 1.5);
        const auto inst = random_instance(rng, 8, 2 + static_cast<int>(rng.next_below(4)), 60);
        Tape tape;
        ForwardTrace trace;
        model.forward(tape, inst, src, &trace);
        auto check_alpha = [](const TensorPtr& alpha) {
            double total = 0;
            for (size_t i = 0; i < alpha->numel(); ++i) {
                CHECK(alpha->at(i) >= real(0));
                total += static_cast<double>(alpha->at(i));
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
        };
        for (const auto& a : trace.code_alphas) check_alpha(a);
        check_alpha(trace.encounter_alpha);
    }
}

TEST_CASE("unit gaps make the decomposition a no-op") {
    Rng rng(53);
    auto w = random_world(rng, 5, 7);
    EmbeddingSource src(w.emb);
    for (int trial = 0; trial < 100; ++trial) {
        HtnnrModel model({.embed_dim = 5, .bi_hidden = 3, .tlstm_hidden = 4}, rng.next_u64());
        auto inst = random_instance(rng, 7, 1 + static_cast<int>(rng.next_below(6)), 1);
        for (auto& g : inst.day_gaps) g = 1;
        inst.day_gaps[0] = 0;  // clamped to the floor anyway
        Tape t1, t2;
        auto full = model.forward(t1, inst, src, nullptr, false);
        auto bypassed = model.forward(t2, inst, src, nullptr, true);
        CHECK(std::abs(static_cast<double>(full->at(0) - bypassed->at(0))) < 1e-10);
    }
}

TEST_CASE("full-model gradients match central finite differences") {
    Rng rng(61);
    auto w = random_world(rng, 8, 6);
    EmbeddingSource src(w.emb);
    HtnnrModel model({.embed_dim = 8, .bi_hidden = 8, .tlstm_hidden = 8}, 7);

    PreparedInstance inst;
    inst.label = 1;
    inst.encounter_codes = {{1, 2, 3}, {4, 5, 6}};
    inst.day_gaps = {0, 11};

    std::vector<TensorPtr> tensors;
    for (auto& [name, t] : model.params().items()) tensors.push_back(t);

    model.params().zero_grad();
    Tape tape;
    tape.backward(bce(tape, model.forward(tape, inst, src), inst.label));
    std::vector<std::vector<real>> analytic;
    for (auto& t : tensors) analytic.push_back(t->grads());

    auto loss_fn = [&]() {
        Tape t;
        return static_cast<double>(bce(t, model.forward(t, inst, src), inst.label)->at(0));
    };
    const auto report = oracle::finite_difference_check(tensors, loss_fn, analytic);
    INFO("params " << model.params().total_size() << ", worst " << report.worst_index);
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("prepare_history truncates to the most recent encounters") {
    Vocabulary vocab;
    vocab.add_entry("ICD:x", 1);
    ClaimHistory h;
    h.patient_id = "P";
    Date d = parse_date("2018-01-01");
    for (int i = 0; i < 6; ++i) {
        h.encounters.push_back({d, {{CodeType::ICD, "x"}}});
        d = add_days(d, 10);
    }
    const auto prep = prepare_history(h, vocab, 4);
    REQUIRE(prep.encounter_codes.size() == 4);
    CHECK(prep.day_gaps == std::vector<int>{0, 10, 10, 10});
    CHECK_THROWS(prepare_history(ClaimHistory{"P", {}}, vocab, 4));
}

TEST_CASE("checkpoints round-trip exactly") {
    Rng rng(71);
    HtnnrModel model({.embed_dim = 3, .bi_hidden = 2, .tlstm_hidden = 4, .max_encounters = 50}, 9);
    randomize_params(rng, model.params());

    std::ostringstream out;
    save_checkpoint(model, out);
    std::istringstream in(out.str());
    const auto ck = parse_checkpoint(in);
    CHECK(ck.model == std::string("htnnr"));
    auto restored = htnnr_from_checkpoint(ck);
    CHECK(restored.dims().max_encounters == 50);
    for (size_t i = 0; i < model.params().items().size(); ++i) {
        const auto& [name, t] = model.params().items()[i];
        CHECK(restored.params().find(name)->values() == t->values());
    }

    auto w = random_world(rng, 3, 5);
    EmbeddingSource src(w.emb);
    const auto inst = random_instance(rng, 5, 3, 20);
    Tape t1, t2;
    CHECK(model.forward(t1, inst, src)->at(0) == restored.forward(t2, inst, src)->at(0));

    SECTION("version mismatch is rejected") {
        std::string text = out.str();
        const auto pos = text.find("htnnr-ckpt-1");
        text.replace(pos, 12, "htnnr-ckpt-9");
        std::istringstream bad(text);
        CHECK_THROWS_WITH(parse_checkpoint(bad), Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("flat checkpoints carry their own kind") {
        FlatLstmModel flat({.embed_dim = 3, .hidden = 2}, 1);
        std::ostringstream fout;
        save_checkpoint(flat, fout);
        std::istringstream fin(fout.str());
        const auto fck = parse_checkpoint(fin);
        CHECK(fck.model == std::string("flat-lstm"));
        CHECK_THROWS(htnnr_from_checkpoint(fck));
        auto frestored = flat_lstm_from_checkpoint(fck);
        CHECK(frestored.params().total_size() == flat.params().total_size());
    }
}
