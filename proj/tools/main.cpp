// SPDX-License-Identifier: Apache-2.0
//
// rnnlab command-line driver: dataset generation, training, evaluation,
// decay analysis and gradient verification.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "rnnlab/cli.hpp"

using namespace rnnlab;

int main(int argc, char** argv) {
    CLI::App app{"rnnlab: recurrent-network training laboratory"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a Temporal Order dataset");
    std::string gen_mode = "short", gen_out;
    int gen_n = 0;
    std::uint64_t gen_seed = 1;
    gen->add_option("--mode", gen_mode, "short | medium");
    gen->add_option("--n", gen_n, "number of sequences")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output file")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train a model from a config file");
    std::string tr_config, tr_out;
    std::vector<std::string> tr_sets;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    tr->add_option("--config", tr_config, "run config file")->required();
    tr->add_option("--set", tr_sets, "override: section.key=value (repeatable)");
    tr->add_option("--out", tr_out, "output directory (overrides output.dir)");
    tr->add_option("--seed", tr_seed, "seed override")->each([&](const std::string&) {
        tr_seed_set = true;
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_task, ev_out = "metrics.csv";
    int ev_batch = 16, ev_seq = 100;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json")->required();
    ev->add_option("--data", ev_data, "dataset / text file")->required();
    ev->add_option("--task", ev_task, "temporal-order | lm-char | lm-word")->required();
    ev->add_option("--out", ev_out, "metrics CSV path");
    ev->add_option("--batch", ev_batch, "LM evaluation batch");
    ev->add_option("--seq-len", ev_seq, "LM window length");

    // decay
    auto* de = app.add_subcommand("decay", "Hidden-state decay coefficients per scheme");
    std::vector<double> de_p;
    int de_t = 20;
    std::string de_out = "decay.csv";
    de->add_option("--p", de_p, "keep probabilities in (0,1]")->required();
    de->add_option("--t-max", de_t, "largest timestep");
    de->add_option("--out", de_out, "output CSV");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string gc_arch = "lstm", gc_variant = "update-drop", gc_mode = "per-step";
    std::string gc_out = "gradcheck.csv";
    std::uint64_t gc_seed = 7;
    bool gc_sweep = false;
    gc->add_option("--arch", gc_arch, "rnn | lstm | gru");
    gc->add_option("--variant", gc_variant, "none | moon | gal | update-drop");
    gc->add_option("--mode", gc_mode, "per-step | per-sequence");
    gc->add_option("--seed", gc_seed, "mask seed");
    gc->add_option("--out", gc_out, "report CSV");
    gc->add_flag("--sweep", gc_sweep, "run every architecture/variant/mode combination");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            cmd_gen_data(gen_mode, gen_n, gen_seed, gen_out);
        } else if (tr->parsed()) {
            RunConfig cfg = [&] {
                try {
                    return load_run_config(tr_config);
                } catch (const UsageError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw UsageError(e.what());
                }
            }();
            for (const auto& kv : tr_sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw UsageError("--set expects section.key=value");
                apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (tr_seed_set) cfg.train.seed = tr_seed;
            if (!tr_out.empty()) cfg.out_dir = tr_out;
            RunLog log = cmd_train(cfg);
            if (const auto* test = log.last("test")) {
                std::printf("test loss %.6f metric %.6f\n", test->loss, test->metric);
            }
        } else if (ev->parsed()) {
            cmd_eval(ev_ckpt, ev_data, ev_task, ev_out, ev_batch, ev_seq);
        } else if (de->parsed()) {
            cmd_decay(de_p, de_t, de_out);
        } else if (gc->parsed()) {
            bool ok = gc_sweep ? cmd_gradcheck_sweep(gc_seed, gc_out)
                               : cmd_gradcheck(gc_arch, gc_variant, gc_mode, gc_seed, gc_out);
            if (!ok) {
                std::fprintf(stderr, "gradient check FAILED (report: %s)\n", gc_out.c_str());
                return 2;
            }
            std::printf("gradient check passed (report: %s)\n", gc_out.c_str());
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
