// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "rnnlab/decay.hpp"
#include "rnnlab/io.hpp"

namespace rnnlab {

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v) {
    try {
        std::size_t pos;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("expected a number, got '" + v + "'");
    }
}

long parse_long(const std::string& v) {
    try {
        std::size_t pos;
        long n = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw UsageError("expected an integer, got '" + v + "'");
    }
}

Optimizer parse_optimizer(const std::string& v) {
    if (v == "sgd") return Optimizer::sgd;
    if (v == "adam") return Optimizer::adam;
    throw UsageError("unknown optimizer: " + v);
}

DecayRule parse_decay_rule(const std::string& v) {
    if (v == "none") return DecayRule::none;
    if (v == "plateau-div-1.5") return DecayRule::plateau_div_1_5;
    if (v == "exp-0.97-after-epoch-10") return DecayRule::exp_0_97_after_epoch_10;
    throw UsageError("unknown decay rule: " + v);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void set_key(RunConfig& c, const std::string& section, const std::string& key,
             const std::string& value) {
    const std::string full = section + "." + key;
    try {
        if (full == "model.arch") c.arch = parse_arch(value);
        else if (full == "model.hidden") c.hidden = static_cast<int>(parse_long(value));
        else if (full == "model.emb_dim") c.emb_dim = static_cast<int>(parse_long(value));
        else if (full == "model.activation") c.act = parse_activation(value);
        else if (full == "dropout.variant") c.recurrent.variant = parse_variant(value);
        else if (full == "dropout.rate") c.recurrent.rate = parse_double(value);
        else if (full == "dropout.mode") c.recurrent.mode = parse_mask_mode(value);
        else if (full == "dropout.scaling") c.recurrent.scaling = parse_scaling(value);
        else if (full == "dropout.gal_tied") c.recurrent.gal_tied = parse_bool(value);
        else if (full == "dropout.input_rate") c.input_rate = parse_double(value);
        else if (full == "dropout.output_rate") c.output_rate = parse_double(value);
        else if (full == "train.optimizer") c.train.optimizer = parse_optimizer(value);
        else if (full == "train.lr") c.train.lr = parse_double(value);
        else if (full == "train.clip") c.train.clip = parse_double(value);
        else if (full == "train.batch") c.train.batch = static_cast<int>(parse_long(value));
        else if (full == "train.bptt_len") c.train.bptt_len = static_cast<int>(parse_long(value));
        else if (full == "train.epochs") c.train.epochs = static_cast<int>(parse_long(value));
        else if (full == "train.decay_rule") c.train.decay_rule = parse_decay_rule(value);
        else if (full == "train.seed") c.train.seed = static_cast<std::uint64_t>(parse_long(value));
        else if (full == "train.init_range") c.train.init_range = parse_double(value);
        else if (full == "train.forget_bias") c.train.forget_bias = parse_double(value);
        else if (full == "train.stop_accuracy") c.train.stop_accuracy = parse_double(value);
        else if (full == "task.kind") c.task = parse_task_kind(value);
        else if (full == "task.train_path") c.train_path = value;
        else if (full == "task.val_path") c.val_path = value;
        else if (full == "task.test_path") c.test_path = value;
        else if (full == "task.data_path") c.data_path = value;
        else if (full == "task.vocab_cap") c.vocab_cap = static_cast<int>(parse_long(value));
        else if (full == "task.train_frac") c.train_frac = parse_double(value);
        else if (full == "task.valid_frac") c.valid_frac = parse_double(value);
        else if (full == "output.dir") c.out_dir = value;
        else throw UsageError("unknown config key: " + full);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string(e.what()) + " (at " + full + ")");
    }
}

}  // namespace

DropoutConfig RunConfig::dropout_config() const {
    return DropoutConfig::with_forward(recurrent, input_rate, output_rate);
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + " is not key=value");
        }
        if (section.empty()) {
            throw UsageError("config line " + std::to_string(lineno) + " precedes any [section]");
        }
        set_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) {
        throw UsageError("override key must be section.key, got '" + dotted_key + "'");
    }
    set_key(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
}

void cmd_gen_data(const std::string& mode, int n, std::uint64_t seed, const std::string& out_path) {
    TemporalOrderMode m;
    if (mode == "short") m = TemporalOrderMode::kShort;
    else if (mode == "medium") m = TemporalOrderMode::kMedium;
    else throw UsageError("mode must be short or medium, got '" + mode + "'");
    if (n < 1) throw UsageError("n must be >= 1");
    Rng rng(seed);
    SequenceBatch data = gen_temporal_order(m, n, rng);
    write_file_atomic(out_path, temporal_order_to_text(data));
}

std::string run_log_csv(const RunLog& log) {
    CsvWriter csv({"epoch", "split", "loss", "metric", "lr"});
    for (const auto& r : log.rows) {
        csv.add_row({std::to_string(r.epoch), r.split, format_double(r.loss),
                     format_double(r.metric), format_double(r.lr)});
    }
    return csv.content();
}

RunLog cmd_train(const RunConfig& cfg) {
    cfg.recurrent.validate();
    cfg.train.validate();
    if (cfg.hidden < 1 || cfg.emb_dim < 1) throw UsageError("model sizes must be positive");

    TaskData data;
    data.kind = cfg.task;
    ModelConfig mc;
    mc.arch = cfg.arch;
    mc.act = cfg.act;
    mc.emb_dim = cfg.emb_dim;
    mc.hidden = cfg.hidden;

    std::vector<std::string> vocab;
    if (cfg.task == TaskKind::temporal_order) {
        if (cfg.train_path.empty()) throw UsageError("temporal-order training needs task.train_path");
        data.train_cls = temporal_order_from_text(read_file(cfg.train_path));
        if (!cfg.val_path.empty()) data.valid_cls = temporal_order_from_text(read_file(cfg.val_path));
        if (!cfg.test_path.empty()) data.test_cls = temporal_order_from_text(read_file(cfg.test_path));
        mc.vocab = kTemporalOrderVocab;
        mc.out_dim = kTemporalOrderClasses;
    } else {
        if (cfg.data_path.empty()) throw UsageError("language modeling needs task.data_path");
        const Unit unit = cfg.task == TaskKind::lm_char ? Unit::character : Unit::word;
        data.corpus = load_text_corpus(cfg.data_path, unit, cfg.vocab_cap, cfg.train_frac,
                                       cfg.valid_frac);
        vocab = data.corpus.vocab;
        mc.vocab = static_cast<int>(vocab.size());
        mc.out_dim = mc.vocab;
    }

    Model model = make_model(mc);
    model.vocab = vocab;
    RunLog log = train(model, data, cfg.train, cfg.dropout_config());

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    write_file_atomic((fs::path(cfg.out_dir) / "run_log.csv").string(), run_log_csv(log));
    save_checkpoint(model, (fs::path(cfg.out_dir) / "checkpoint.json").string());
    return log;
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& task, const std::string& out_path, int batch, int seq_len) {
    const TaskKind kind = parse_task_kind(task);
    Model model = load_checkpoint(checkpoint_path);

    CsvWriter csv({"split", "loss", "metric_name", "metric"});
    if (kind == TaskKind::temporal_order) {
        if (model.cfg.vocab != kTemporalOrderVocab || model.cfg.out_dim != kTemporalOrderClasses) {
            throw std::runtime_error("checkpoint architecture does not match the temporal-order task");
        }
        SequenceBatch data = temporal_order_from_text(read_file(data_path));
        EvalResult ev = evaluate_classification(model, data, DropoutConfig{}, Phase::infer);
        csv.add_row({"data", format_double(ev.mean_nll), "accuracy",
                     format_double(accuracy_metric(ev.correct, ev.sequences))});
    } else {
        if (model.vocab.empty()) {
            throw std::runtime_error("checkpoint carries no vocabulary; cannot evaluate text");
        }
        // Re-map the text through the checkpoint's vocabulary.
        std::map<std::string, int> ids;
        for (std::size_t i = 0; i < model.vocab.size(); ++i) ids[model.vocab[i]] = static_cast<int>(i);
        const auto unk = ids.find("<unk>");
        const std::string text = read_file(data_path);
        std::vector<int> stream;
        auto push_tok = [&](const std::string& tok) {
            auto it = ids.find(tok);
            if (it != ids.end()) {
                stream.push_back(it->second);
            } else if (unk != ids.end()) {
                stream.push_back(unk->second);
            } else {
                throw std::runtime_error("token '" + tok + "' missing from checkpoint vocabulary");
            }
        };
        if (kind == TaskKind::lm_char) {
            for (char c : text) push_tok(std::string(1, c));
        } else {
            std::istringstream in(text);
            std::string w;
            while (in >> w) push_tok(w);
        }
        EvalResult ev = evaluate_lm(model, stream, DropoutConfig{}, batch, seq_len);
        const Metric metric = task_metric(kind);
        csv.add_row({"data", format_double(ev.mean_nll), metric_name(metric),
                     format_double(metrics(std::vector<double>{ev.mean_nll}, metric))});
    }
    csv.write(out_path);
}

void cmd_decay(const std::vector<double>& p_values, int t_max, const std::string& out_path) {
    if (p_values.empty()) throw UsageError("decay needs at least one p value");
    for (double p : p_values) {
        if (p <= 0.0 || p > 1.0) throw UsageError("p values must lie in (0, 1]");
    }
    if (t_max < 0) throw UsageError("t_max must be >= 0");
    write_file_atomic(out_path, decay_report_csv(decay_report(p_values, t_max)));
}

GradCheckReport run_grad_check_combo(Arch arch, Variant variant, MaskMode mode, Scaling scaling,
                                     std::uint64_t seed) {
    ModelConfig mc;
    mc.arch = arch;
    mc.act = Activation::tanh;
    mc.vocab = 20;
    mc.emb_dim = 8;
    mc.hidden = 16;
    mc.out_dim = 20;
    Model m = make_model(mc);
    Rng rng(seed);
    Rng init_rng = rng.split();
    Rng data_rng = rng.split();
    init_uniform(m, 0.5, 0.0, init_rng);

    SequenceBatch batch;
    batch.batch = 4;
    batch.time = 12;
    batch.vocab_size = mc.vocab;
    batch.tokens.resize(static_cast<std::size_t>(batch.batch) * batch.time);
    batch.targets.resize(batch.tokens.size());
    for (auto& t : batch.tokens) t = static_cast<int>(data_rng.below(mc.vocab));
    for (auto& t : batch.targets) t = static_cast<int>(data_rng.below(mc.out_dim));

    DropoutSpec spec;
    spec.variant = variant;
    spec.rate = variant == Variant::none ? 0.0 : 0.5;
    spec.mode = mode;
    spec.scaling = scaling;
    DropoutConfig drop = DropoutConfig::recurrent_only(spec);

    return grad_check(m, batch, drop, seed ^ 0xabcdefULL, 1e-5, 200);
}

namespace {

const char* kSweepArchs[] = {"rnn", "lstm", "gru"};
const char* kSweepVariants[] = {"none", "moon", "gal", "update-drop"};
const char* kSweepModes[] = {"per-step", "per-sequence"};

}  // namespace

bool cmd_gradcheck(const std::string& arch, const std::string& variant, const std::string& mode,
                   std::uint64_t seed, const std::string& out_path) {
    Arch a;
    Variant v;
    MaskMode mm;
    try {
        a = parse_arch(arch);
        v = parse_variant(variant);
        mm = parse_mask_mode(mode);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (v == Variant::forward) throw UsageError("forward is not a recurrent variant");

    GradCheckReport report = run_grad_check_combo(a, v, mm, Scaling::test_scale, seed);
    CsvWriter csv({"tensor", "index", "analytic", "numeric", "rel_error"});
    for (const auto& row : report.rows) {
        csv.add_row({row.tensor, std::to_string(row.index), format_double(row.analytic),
                     format_double(row.numeric), format_double(row.rel_err)});
    }
    if (!out_path.empty()) csv.write(out_path);
    return report.max_rel_err < kGradCheckTolerance;
}

bool cmd_gradcheck_sweep(std::uint64_t seed, const std::string& out_path,
                         std::vector<GradCheckSummaryRow>* rows_out) {
    CsvWriter csv({"arch", "variant", "mode", "max_rel_error", "pass"});
    bool all_pass = true;
    for (const char* arch : kSweepArchs) {
        for (const char* variant : kSweepVariants) {
            for (const char* mode : kSweepModes) {
                GradCheckReport report = run_grad_check_combo(
                    parse_arch(arch), parse_variant(variant), parse_mask_mode(mode),
                    Scaling::test_scale, seed);
                const bool pass = report.max_rel_err < kGradCheckTolerance;
                all_pass = all_pass && pass;
                csv.add_row({arch, variant, mode, format_double(report.max_rel_err),
                             pass ? "1" : "0"});
                if (rows_out) {
                    rows_out->push_back({arch, variant, mode, "test-scale", report.max_rel_err, pass});
                }
            }
        }
    }
    if (!out_path.empty()) write_file_atomic(out_path, csv.content());
    return all_pass;
}

}  // namespace rnnlab
