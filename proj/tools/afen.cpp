#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "afen/error.hpp"
#include "afen/pipeline.hpp"
#include "afen/synth.hpp"

using namespace afen;
using namespace afen::pipeline;

namespace {

struct GlobalOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string corpus, output, split_by;
    bool force = false;
    bool quiet = false;
};

Context make_context(const GlobalOptions& g) {
    Context ctx;
    ctx.config = RunConfig::from_environment();
    if (!g.config_file.empty()) ctx.config.apply_file(g.config_file);
    if (!g.corpus.empty()) ctx.config.corpus_dir = g.corpus;
    if (!g.output.empty()) ctx.config.output_dir = g.output;
    if (g.seed) ctx.config.set("seed", std::to_string(*g.seed));
    if (!g.split_by.empty()) ctx.config.set("split.by", g.split_by);
    for (const auto& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(Errc::ConfigError, "--set expects key=value, got '" + kv + "'");
        ctx.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    ctx.config.sync_seeds();
    ctx.force = g.force;
    if (!g.quiet) ctx.log = [](const std::string& line) { std::cerr << line << '\n'; };
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Respiratory-sound classification pipeline: augmentation, features, CNN + GBDT ensemble."};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("-c,--config", g.config_file, "JSON config of dotted keys");
    app.add_option("--set", g.overrides, "override one key, e.g. --set cnn.epochs=20")->take_all();
    app.add_option("--seed", g.seed, "run seed (overrides the config file and AFEN_SEED)");
    app.add_option("--corpus", g.corpus, "corpus directory (config key corpus_dir)");
    app.add_option("-o,--output", g.output, "run directory (config key output_dir)");
    app.add_option("--split-by", g.split_by, "recording | patient (config key split.by)");
    app.add_flag("--force", g.force, "rerun stages even when their outputs are current");
    app.add_flag("-q,--quiet", g.quiet, "no progress output");
    app.fallthrough();

    auto* prepare_cmd = app.add_subcommand("prepare", "split the corpus and cache standardized and augmented clips");
    auto* extract_cmd = app.add_subcommand("extract", "compute the five feature matrices and summary vectors");
    auto* train_cmd = app.add_subcommand("train", "train cnn, gbdt or ensemble and write reports");
    std::string train_model = "ensemble";
    train_cmd->add_option("model", train_model, "cnn | gbdt | ensemble")->check(CLI::IsMember({"cnn", "gbdt", "ensemble"}));
    auto* evaluate_cmd = app.add_subcommand("evaluate", "recompute the test reports from saved models");
    auto* run_cmd = app.add_subcommand("run", "prepare, extract and train the ensemble");

    auto* predict_cmd = app.add_subcommand("predict", "classify one recording with a trained model bundle");
    std::string models_dir, wav, predict_model = "ensemble";
    std::size_t top_k = 3;
    predict_cmd->add_option("wav", wav, "recording to classify")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("-m,--models", models_dir, "models directory of a run (default <output>/models)");
    predict_cmd->add_option("--model", predict_model, "cnn | gbdt | ensemble")->check(CLI::IsMember({"cnn", "gbdt", "ensemble"}));
    predict_cmd->add_option("-k,--top-k", top_k, "number of classes to print")->check(CLI::PositiveNumber);

    auto* synth_cmd = app.add_subcommand("synth-corpus", "write the synthetic 8-class acceptance corpus");
    synth::SynthOptions synth_options;
    std::string synth_dir;
    synth_cmd->add_option("dir", synth_dir, "output directory")->required();
    synth_cmd->add_option("--clips", synth_options.clips, "number of recordings")->check(CLI::PositiveNumber);

    auto* config_cmd = app.add_subcommand("config", "print the effective config, or the documented keys");
    bool list_keys = false;
    config_cmd->add_flag("--keys", list_keys, "list every key with its meaning");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Context ctx = make_context(g);
        if (*prepare_cmd) {
            prepare(ctx);
        } else if (*extract_cmd) {
            extract(ctx);
        } else if (*train_cmd) {
            train(ctx, parse_model(train_model));
        } else if (*evaluate_cmd) {
            evaluate(ctx);
        } else if (*run_cmd) {
            prepare(ctx);
            extract(ctx);
            train(ctx, Model::Ensemble);
            evaluate(ctx);
        } else if (*predict_cmd) {
            const auto dir = models_dir.empty() ? Layout{ctx.config.output_dir}.models_dir() : std::filesystem::path(models_dir);
            std::cout << predictions_json(predict(dir, wav, parse_model(predict_model), top_k)) << '\n';
        } else if (*synth_cmd) {
            synth_options.seed = ctx.config.seed;
            const auto recs = synth::write_corpus(synth_dir, synth_options);
            ctx.log("synth-corpus: wrote " + std::to_string(recs.size()) + " recordings to " + synth_dir);
        } else if (*config_cmd) {
            if (list_keys) {
                for (const auto& k : config_keys()) std::printf("%-28s %s\n", k.name.c_str(), k.doc.c_str());
            } else {
                std::cout << ctx.config.to_json() << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "afen: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "afen: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
