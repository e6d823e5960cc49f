// ade: claims-sequence ADE risk pipeline.
// Subcommands: gen, label, embed, train, eval, predict.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "ade/kvconfig.hpp"
#include "ade/labeling.hpp"
#include "ade/manifest.hpp"
#include "ade/synth.hpp"
#include "ade/train.hpp"

namespace {

using namespace ade;

std::map<std::string, std::string> config_map(const KeyValueConfig& cfg) {
    return cfg.entries();
}

ClaimCode parse_claim_code(const std::string& text) {
    const size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw std::runtime_error("expected TYPE:code, got '" + text + "'");
    return ClaimCode{parse_code_type(text.substr(0, colon)), text.substr(colon + 1)};
}

std::set<std::string> parse_code_list(const std::string& text) {
    std::set<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

struct GenArgs {
    std::string config_path;
    std::string out_path;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> patients;
    unsigned threads = 1;
};

int run_gen(const GenArgs& args) {
    Stopwatch watch;
    KeyValueConfig kv =
        args.config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(args.config_path);
    if (args.seed) kv.set("seed", std::to_string(*args.seed));
    if (args.patients) kv.set("patient_count", std::to_string(*args.patients));

    GeneratorConfig cfg;
    cfg.patient_count = kv.get_uint("patient_count", cfg.patient_count);
    cfg.vocab_size = kv.get_uint("vocab_size", cfg.vocab_size);
    cfg.mean_encounters = kv.get_double("mean_encounters", cfg.mean_encounters);
    cfg.mean_codes_per_encounter =
        kv.get_double("mean_codes_per_encounter", cfg.mean_codes_per_encounter);
    cfg.drug_take_prob = kv.get_double("drug_take_prob", cfg.drug_take_prob);
    cfg.risk_code = parse_claim_code(kv.get_string("risk_code", code_key(cfg.risk_code)));
    cfg.risk_window_days = static_cast<int>(kv.get_int("risk_window_days", cfg.risk_window_days));
    cfg.risk_plant_prob = kv.get_double("risk_plant_prob", cfg.risk_plant_prob);
    cfg.p_ade_given_risk = kv.get_double("p_ade_given_risk", cfg.p_ade_given_risk);
    cfg.p_ade_base = kv.get_double("p_ade_base", cfg.p_ade_base);
    cfg.target_drug = kv.get_string("target_drug", cfg.target_drug);
    cfg.target_ade = kv.get_string("target_ade", cfg.target_ade);
    cfg.indication_code = kv.get_string("indication_code", cfg.indication_code);
    cfg.seed = kv.get_uint("seed", cfg.seed);
    kv.reject_unknown_keys();

    const auto cohort = generate(cfg, args.threads);
    write_cohort_file(cohort, args.out_path);
    const auto stats = cohort_stats(cohort);
    std::cout << "patients " << stats.patients << ", unique codes " << stats.unique_codes
              << ", mean encounters/patient " << stats.mean_encounters
              << ", mean codes/encounter " << stats.mean_codes_per_encounter << "\n";

    RunManifest manifest{"gen", config_map(kv), {}, {{"cohort", args.out_path}}, cfg.seed};
    manifest.write(args.out_path, watch.seconds());
    return 0;
}

struct LabelArgs {
    std::string config_path;
    std::string cohort_path;
    std::string out_path;
    std::string drug;
    std::string ades;
    std::string indications_path;
    std::optional<int> window;
    unsigned threads = 1;
};

int run_label(const LabelArgs& args) {
    Stopwatch watch;
    KeyValueConfig kv =
        args.config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(args.config_path);
    if (!args.drug.empty()) kv.set("target_drug", args.drug);
    if (!args.ades.empty()) kv.set("target_ades", args.ades);
    if (!args.indications_path.empty()) kv.set("indication_file", args.indications_path);
    if (args.window) kv.set("window_days", std::to_string(*args.window));

    LabelingConfig cfg;
    cfg.target_drug = kv.get_string("target_drug", "");
    if (cfg.target_drug.empty()) throw std::runtime_error("no target drug given (--drug)");
    cfg.target_ades = parse_code_list(kv.get_string("target_ades", ""));
    if (cfg.target_ades.empty()) throw std::runtime_error("no target ADE codes given (--ades)");
    const std::string ind_path = kv.get_string("indication_file", "");
    if (ind_path.empty()) throw std::runtime_error("no indication-set file given (--indications)");
    cfg.indications = load_indication_set(ind_path);
    cfg.window_days = static_cast<int>(kv.get_int("window_days", cfg.window_days));
    if (cfg.window_days < 1) throw std::runtime_error("window_days must be >= 1");
    kv.reject_unknown_keys();

    const auto cohort = read_cohort_file(args.cohort_path);
    const auto instances = build_cohort(cohort, cfg, args.threads);
    write_instances_file(instances, args.out_path);

    size_t positives = 0;
    for (const auto& inst : instances)
        if (inst.label == +1) ++positives;
    std::cout << "instances " << instances.size() << " of " << cohort.size() << " patients, "
              << positives << " positive";
    if (!instances.empty())
        std::cout << " (" << 100.0 * static_cast<double>(positives) /
                                 static_cast<double>(instances.size())
                  << "%)";
    std::cout << "\n";

    RunManifest manifest{"label",
                         config_map(kv),
                         {{"cohort", args.cohort_path}, {"indications", ind_path}},
                         {{"instances", args.out_path}},
                         0};
    manifest.write(args.out_path, watch.seconds());
    return 0;
}

struct EmbedArgs {
    std::string config_path;
    std::string cohort_path;
    std::string out_path;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> dim;
    std::optional<uint64_t> epochs;
};

int run_embed(const EmbedArgs& args) {
    Stopwatch watch;
    KeyValueConfig kv =
        args.config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(args.config_path);
    if (args.seed) kv.set("seed", std::to_string(*args.seed));
    if (args.dim) kv.set("dim", std::to_string(*args.dim));
    if (args.epochs) kv.set("epochs", std::to_string(*args.epochs));

    SkipgramConfig cfg;
    cfg.dim = kv.get_uint("dim", cfg.dim);
    cfg.window = static_cast<int>(kv.get_int("window", cfg.window));
    cfg.negatives = static_cast<int>(kv.get_int("negatives", cfg.negatives));
    cfg.epochs = static_cast<int>(kv.get_int("epochs", cfg.epochs));
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.min_count = kv.get_uint("min_count", cfg.min_count);
    cfg.seed = kv.get_uint("seed", cfg.seed);
    kv.reject_unknown_keys();

    const auto cohort = read_cohort_file(args.cohort_path);
    const auto vocab = build_vocabulary(cohort, cfg.min_count);
    std::vector<double> losses;
    const auto emb = train_skipgram(cohort, vocab, cfg, &losses);
    write_embedding_file(vocab, emb, args.out_path);
    std::cout << "vocabulary " << vocab.size() << ", dim " << cfg.dim << ", final epoch loss "
              << (losses.empty() ? 0.0 : losses.back()) << "\n";

    RunManifest manifest{"embed", config_map(kv),          {{"cohort", args.cohort_path}},
                         {{"embeddings", args.out_path}},  cfg.seed};
    manifest.write(args.out_path, watch.seconds());
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string instances_path;
    std::string embeddings_path;
    std::string out_path;
    std::string curve_path;
    std::string test_out_path;
    std::string model = "htnnr";
    std::optional<uint64_t> seed;
    unsigned threads = 1;
};

// Tokens mapping to the unknown id across all prefixes; a rate past 0.5
// means the embedding file does not belong to these instances.
double unknown_code_rate(const std::vector<LabeledInstance>& instances, const Vocabulary& vocab) {
    size_t total = 0, unknown = 0;
    for (const auto& inst : instances)
        for (const auto& e : inst.prefix.encounters)
            for (const auto& c : e.codes) {
                ++total;
                if (vocab.id_of(c) == Vocabulary::kUnknownId) ++unknown;
            }
    return total == 0 ? 1.0 : static_cast<double>(unknown) / static_cast<double>(total);
}

int run_train(const TrainArgs& args) {
    Stopwatch watch;
    KeyValueConfig kv =
        args.config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(args.config_path);
    if (args.seed) kv.set("seed", std::to_string(*args.seed));

    TrainConfig cfg;
    cfg.batch_size = kv.get_uint("batch_size", cfg.batch_size);
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.beta1 = kv.get_double("beta1", cfg.beta1);
    cfg.beta2 = kv.get_double("beta2", cfg.beta2);
    cfg.epsilon = kv.get_double("epsilon", cfg.epsilon);
    cfg.max_epochs = kv.get_uint("max_epochs", cfg.max_epochs);
    cfg.patience = kv.get_uint("patience", cfg.patience);
    cfg.seed = kv.get_uint("seed", cfg.seed);
    cfg.max_encounters = kv.get_uint("max_encounters", cfg.max_encounters);
    const size_t bi_hidden = kv.get_uint("bi_hidden", 64);
    const size_t tlstm_hidden = kv.get_uint("tlstm_hidden", 128);
    const size_t flat_hidden = kv.get_uint("flat_hidden", 128);
    kv.reject_unknown_keys();

    const auto loaded = read_embedding_file(args.embeddings_path);
    const auto instances = read_instances_file(args.instances_path);
    if (instances.size() < 10)
        throw std::runtime_error("need at least 10 instances to train, got " +
                                 std::to_string(instances.size()));
    const double unk = unknown_code_rate(instances, loaded.vocab);
    if (unk > 0.5) {
        std::ostringstream msg;
        msg << "instance/embedding vocabulary mismatch: " << 100.0 * unk
            << "% of instance codes are unknown to the embedding file";
        throw std::runtime_error(msg.str());
    }

    const auto split = split_cohort(instances, cfg.seed);
    auto lower = [&](const std::vector<LabeledInstance>& set) {
        std::vector<PreparedInstance> out;
        out.reserve(set.size());
        for (const auto& inst : set)
            out.push_back(prepare_history(inst.prefix, loaded.vocab, cfg.max_encounters, inst.label));
        return out;
    };
    const auto train_set = lower(split.train);
    const auto val_set = lower(split.validation);

    EmbeddingSource src(loaded.matrix);
    TrainResult result;
    if (args.model == "htnnr") {
        HtnnrModel model({.embed_dim = loaded.matrix.dim,
                          .bi_hidden = bi_hidden,
                          .tlstm_hidden = tlstm_hidden,
                          .max_encounters = cfg.max_encounters},
                         cfg.seed);
        result = train(model, train_set, val_set, src, cfg, args.threads);
        save_checkpoint_file(model, args.out_path);
    } else if (args.model == "flat-lstm") {
        FlatLstmModel model({.embed_dim = loaded.matrix.dim,
                             .hidden = flat_hidden,
                             .max_encounters = cfg.max_encounters},
                            cfg.seed);
        result = train(model, train_set, val_set, src, cfg, args.threads);
        save_checkpoint_file(model, args.out_path);
    } else {
        throw std::runtime_error("unknown model '" + args.model + "' (htnnr or flat-lstm)");
    }

    const std::string curve_path =
        args.curve_path.empty() ? args.out_path + ".curve.csv" : args.curve_path;
    {
        std::ofstream out(curve_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + curve_path);
        write_loss_curve(result.curve, out);
    }
    const std::string test_path =
        args.test_out_path.empty() ? args.out_path + ".test.jsonl" : args.test_out_path;
    write_instances_file(split.test, test_path);

    std::cout << "trained " << args.model << " for " << result.curve.size() << " epochs, best epoch "
              << result.best_epoch << " (validation loss " << result.best_val_loss << "), "
              << split.test.size() << " held-out instances -> " << test_path << "\n";

    RunManifest manifest{
        "train",
        config_map(kv),
        {{"instances", args.instances_path}, {"embeddings", args.embeddings_path}},
        {{"checkpoint", args.out_path}, {"curve", curve_path}, {"test_instances", test_path}},
        cfg.seed};
    manifest.write(args.out_path, watch.seconds());
    return 0;
}

struct EvalArgs {
    std::string ckpt_path;
    std::string instances_path;
    std::string embeddings_path;
    std::string out_path;
    double threshold = 0.5;
    unsigned threads = 1;
};

int run_eval(const EvalArgs& args) {
    Stopwatch watch;
    const auto loaded = read_embedding_file(args.embeddings_path);
    const auto instances = read_instances_file(args.instances_path);
    if (instances.empty()) throw std::runtime_error("no instances to evaluate");
    const auto ck = read_checkpoint_file(args.ckpt_path);

    EmbeddingSource src(loaded.matrix);
    MetricsReport report;
    auto lower = [&](size_t max_encounters) {
        std::vector<PreparedInstance> out;
        out.reserve(instances.size());
        for (const auto& inst : instances)
            out.push_back(prepare_history(inst.prefix, loaded.vocab, max_encounters, inst.label));
        return out;
    };
    if (ck.model == HtnnrModel::kKind) {
        const auto model = htnnr_from_checkpoint(ck);
        report = evaluate(model, lower(model.dims().max_encounters), src, args.threshold,
                          args.threads);
    } else {
        const auto model = flat_lstm_from_checkpoint(ck);
        report = evaluate(model, lower(model.dims().max_encounters), src, args.threshold,
                          args.threads);
    }

    std::cout << metrics_table(report);
    std::cout << metrics_to_json(report).dump() << "\n";
    if (!args.out_path.empty()) {
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + args.out_path);
        out << metrics_to_json(report).dump(2) << "\n";
        RunManifest manifest{"eval",
                             {{"threshold", std::to_string(args.threshold)}},
                             {{"checkpoint", args.ckpt_path},
                              {"instances", args.instances_path},
                              {"embeddings", args.embeddings_path}},
                             {{"metrics", args.out_path}},
                             0};
        manifest.write(args.out_path, watch.seconds());
    }
    return 0;
}

struct PredictArgs {
    std::string ckpt_path;
    std::string patient_path;
    std::string embeddings_path;
    std::string drug;
};

int run_predict(const PredictArgs& args) {
    const auto loaded = read_embedding_file(args.embeddings_path);
    const auto histories = read_cohort_file(args.patient_path);
    if (histories.size() != 1)
        throw std::runtime_error("expected exactly one patient record, got " +
                                 std::to_string(histories.size()));
    if (histories[0].encounters.empty()) throw std::runtime_error("patient history is empty");
    const auto ck = read_checkpoint_file(args.ckpt_path);

    EmbeddingSource src(loaded.matrix);
    double prob = 0.0;
    // The full history feeds the model: prediction asks what happens if the
    // drug is taken now, so there is no intake cut.
    if (ck.model == HtnnrModel::kKind) {
        const auto model = htnnr_from_checkpoint(ck);
        const auto prep = prepare_history(histories[0], loaded.vocab, model.dims().max_encounters);
        Tape tape;
        prob = static_cast<double>(model.forward(tape, prep, src)->at(0));
    } else {
        const auto model = flat_lstm_from_checkpoint(ck);
        const auto prep = prepare_history(histories[0], loaded.vocab, model.dims().max_encounters);
        Tape tape;
        prob = static_cast<double>(model.forward(tape, prep, src)->at(0));
    }

    char line[64];
    std::snprintf(line, sizeof line, "%.6f %s\n", prob, prob >= 0.5 ? "+1" : "-1");
    std::cout << "patient " << histories[0].patient_id << ", drug " << args.drug << "\n" << line;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ade: personalized adverse-drug-event risk prediction from claims sequences"};
    app.require_subcommand(1);

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "generate a synthetic claims cohort");
    gen->add_option("--config", gen_args.config_path, "key=value generator config");
    gen->add_option("--out", gen_args.out_path, "output cohort JSONL")->required();
    gen->add_option("--seed", gen_args.seed, "override the config seed");
    gen->add_option("--patients", gen_args.patients, "override patient_count");
    gen->add_option("--threads", gen_args.threads, "worker threads (output is thread-count-invariant)");

    LabelArgs label_args;
    auto* label = app.add_subcommand("label", "build labeled instances for a target drug");
    label->add_option("--config", label_args.config_path, "key=value labeling config");
    label->add_option("--cohort", label_args.cohort_path, "input cohort JSONL")->required();
    label->add_option("--out", label_args.out_path, "output instances JSONL")->required();
    label->add_option("--drug", label_args.drug, "target drug GPI code");
    label->add_option("--ades", label_args.ades, "comma-separated target ADE ICD codes");
    label->add_option("--indications", label_args.indications_path, "indication-set JSON file");
    label->add_option("--window", label_args.window, "attribution window in days (default 90)");
    label->add_option("--threads", label_args.threads,
                      "worker threads (output is thread-count-invariant)");

    EmbedArgs embed_args;
    auto* embed = app.add_subcommand("embed", "train skip-gram claim-code embeddings");
    embed->add_option("--config", embed_args.config_path, "key=value embedding config");
    embed->add_option("--cohort", embed_args.cohort_path, "input cohort JSONL")->required();
    embed->add_option("--out", embed_args.out_path, "output embedding file")->required();
    embed->add_option("--seed", embed_args.seed, "override the config seed");
    embed->add_option("--dim", embed_args.dim, "embedding dimension (default 100)");
    embed->add_option("--epochs", embed_args.epochs, "training epochs (default 5)");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "train a classifier on labeled instances");
    tr->add_option("--config", train_args.config_path, "key=value training config");
    tr->add_option("--instances", train_args.instances_path, "labeled instances JSONL")->required();
    tr->add_option("--embeddings", train_args.embeddings_path, "embedding file")->required();
    tr->add_option("--out", train_args.out_path, "output checkpoint JSON")->required();
    tr->add_option("--curve", train_args.curve_path, "loss-curve CSV (default <out>.curve.csv)");
    tr->add_option("--test-out", train_args.test_out_path,
                   "held-out test instances (default <out>.test.jsonl)");
    tr->add_option("--model", train_args.model, "htnnr or flat-lstm (default htnnr)");
    tr->add_option("--seed", train_args.seed, "override the config seed");
    tr->add_option("--threads", train_args.threads, "worker threads (default 1, deterministic)");

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on labeled instances");
    ev->add_option("--ckpt", eval_args.ckpt_path, "checkpoint JSON")->required();
    ev->add_option("--instances", eval_args.instances_path, "labeled instances JSONL")->required();
    ev->add_option("--embeddings", eval_args.embeddings_path, "embedding file")->required();
    ev->add_option("--out", eval_args.out_path, "also write the metrics JSON here");
    ev->add_option("--threshold", eval_args.threshold, "classification threshold (default 0.5)");
    ev->add_option("--threads", eval_args.threads, "worker threads (default 1, deterministic)");

    PredictArgs predict_args;
    auto* pred = app.add_subcommand("predict", "score one patient for one drug");
    pred->add_option("--ckpt", predict_args.ckpt_path, "checkpoint JSON")->required();
    pred->add_option("--patient", predict_args.patient_path, "single-patient claims JSONL")
        ->required();
    pred->add_option("--embeddings", predict_args.embeddings_path, "embedding file")->required();
    pred->add_option("--drug", predict_args.drug, "target drug GPI code")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen(gen_args);
        if (label->parsed()) return run_label(label_args);
        if (embed->parsed()) return run_embed(embed_args);
        if (tr->parsed()) return run_train(train_args);
        if (ev->parsed()) return run_eval(eval_args);
        if (pred->parsed()) return run_predict(predict_args);
    } catch (const std::exception& e) {
        std::cerr << "ade: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
