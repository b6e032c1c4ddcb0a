// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main rnnlab operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rnnlab/bptt.hpp"
#include "rnnlab/cells.hpp"
#include "rnnlab/cli.hpp"
#include "rnnlab/decay.hpp"
#include "rnnlab/dropout.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/tasks.hpp"

namespace py = pybind11;
using namespace rnnlab;

namespace {

DropoutSpec make_spec(const std::string& variant, double rate, const std::string& mode,
                      const std::string& scaling, bool gal_tied) {
    DropoutSpec s;
    s.variant = parse_variant(variant);
    s.rate = rate;
    s.mode = parse_mask_mode(mode);
    s.scaling = parse_scaling(scaling);
    s.gal_tied = gal_tied;
    s.validate();
    return s;
}

Phase parse_phase(const std::string& s) {
    if (s == "train") return Phase::train;
    if (s == "infer") return Phase::infer;
    throw std::invalid_argument("phase must be train or infer");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Recurrent-network training laboratory: cells, recurrent dropout, BPTT";

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("next_u64", &Rng::next_u64)
        .def("uniform", py::overload_cast<>(&Rng::uniform))
        .def("split", &Rng::split);

    py::class_<DropoutSpec>(m, "DropoutSpec")
        .def(py::init(&make_spec), py::arg("variant") = "none", py::arg("rate") = 0.0,
             py::arg("mode") = "per-step", py::arg("scaling") = "test-scale",
             py::arg("gal_tied") = true)
        .def_readwrite("rate", &DropoutSpec::rate)
        .def("__repr__", [](const DropoutSpec& s) {
            return "DropoutSpec(" + variant_name(s.variant) + ", rate=" + std::to_string(s.rate) +
                   ", " + mask_mode_name(s.mode) + ", " + scaling_name(s.scaling) + ")";
        });

    py::class_<Mask>(m, "Mask")
        .def_property_readonly("values", [](const Mask& m_) { return m_.values; })
        .def_readonly("born_at", &Mask::born_at);

    m.def(
        "sample_mask",
        [](int len, double p, Rng& rng) { return sample_mask(len, p, rng); },
        py::arg("len"), py::arg("p"), py::arg("rng"));
    m.def("apply_dropout",
          [](const Vector& x, const Mask& mask, double p, const std::string& phase,
             const std::string& scaling) {
              return apply_dropout(x, mask, p, parse_phase(phase), parse_scaling(scaling));
          },
          py::arg("x"), py::arg("mask"), py::arg("p"), py::arg("phase") = "train",
          py::arg("scaling") = "test-scale");
    m.def("mask_plan", &mask_plan, py::arg("spec"), py::arg("seq_len"), py::arg("width"),
          py::arg("rng"));

    m.def("affine", &affine, py::arg("w"), py::arg("inputs"), py::arg("b"));
    m.def("activation",
          [](const std::string& kind, const Vector& x) {
              return activation(parse_activation(kind), x);
          },
          py::arg("kind"), py::arg("x"));

    // Single-sequence cell steps.
    py::class_<CellState>(m, "CellState")
        .def(py::init([](const Vector& h, const Vector& c) {
                 CellState s;
                 s.h = h;
                 s.c = c;
                 return s;
             }),
             py::arg("h"), py::arg("c") = Vector())
        .def_readwrite("h", &CellState::h)
        .def_readwrite("c", &CellState::c);

    py::class_<LstmParams>(m, "LstmParams")
        .def(py::init<>())
        .def_readwrite("w_i", &LstmParams::w_i)
        .def_readwrite("w_f", &LstmParams::w_f)
        .def_readwrite("w_o", &LstmParams::w_o)
        .def_readwrite("w_g", &LstmParams::w_g)
        .def_readwrite("b_i", &LstmParams::b_i)
        .def_readwrite("b_f", &LstmParams::b_f)
        .def_readwrite("b_o", &LstmParams::b_o)
        .def_readwrite("b_g", &LstmParams::b_g);

    m.def("lstm_step",
          [](const LstmParams& p, const Vector& x, const CellState& st, const DropoutSpec& spec,
             const std::vector<Mask>& masks, const std::string& phase) {
              return lstm_step(p, x, st, spec, masks, parse_phase(phase));
          },
          py::arg("params"), py::arg("x"), py::arg("state"), py::arg("drop") = DropoutSpec{},
          py::arg("masks") = std::vector<Mask>{}, py::arg("phase") = "infer");

    // Model-level API.
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](const std::string& arch, int vocab, int emb_dim, int hidden, int out_dim,
                         const std::string& act) {
                 ModelConfig c;
                 c.arch = parse_arch(arch);
                 c.act = parse_activation(act);
                 c.vocab = vocab;
                 c.emb_dim = emb_dim;
                 c.hidden = hidden;
                 c.out_dim = out_dim;
                 return c;
             }),
             py::arg("arch"), py::arg("vocab"), py::arg("emb_dim"), py::arg("hidden"),
             py::arg("out_dim"), py::arg("act") = "tanh")
        .def_readonly("vocab", &ModelConfig::vocab)
        .def_readonly("hidden", &ModelConfig::hidden);

    py::class_<Model>(m, "Model")
        .def(py::init([](const ModelConfig& cfg, double init_range, std::uint64_t seed,
                         double forget_bias) {
                 Model mm = make_model(cfg);
                 Rng rng(seed);
                 init_uniform(mm, init_range, forget_bias, rng);
                 return mm;
             }),
             py::arg("cfg"), py::arg("init_range") = 0.05, py::arg("seed") = 1,
             py::arg("forget_bias") = 0.0)
        .def_property_readonly("cfg", [](const Model& mm) { return mm.cfg; })
        .def("save", [](const Model& mm, const std::string& path) { save_checkpoint(mm, path); })
        .def_static("load", &load_checkpoint);

    py::class_<SequenceBatch>(m, "SequenceBatch")
        .def(py::init([](int batch, int time, std::vector<int> tokens, std::vector<int> targets,
                         std::vector<int> labels, int vocab_size) {
                 SequenceBatch b;
                 b.batch = batch;
                 b.time = time;
                 b.tokens = std::move(tokens);
                 b.targets = std::move(targets);
                 b.labels = std::move(labels);
                 b.vocab_size = vocab_size;
                 b.validate();
                 return b;
             }),
             py::arg("batch"), py::arg("time"), py::arg("tokens"),
             py::arg("targets") = std::vector<int>{}, py::arg("labels") = std::vector<int>{},
             py::arg("vocab_size") = 0)
        .def_readonly("batch", &SequenceBatch::batch)
        .def_readonly("time", &SequenceBatch::time)
        .def_readonly("tokens", &SequenceBatch::tokens)
        .def_readonly("labels", &SequenceBatch::labels)
        .def_readonly("vocab_size", &SequenceBatch::vocab_size);

    m.def("sequence_loss",
          [](const Model& mm, const SequenceBatch& b, const DropoutSpec& rec, double input_rate,
             double output_rate, std::uint64_t seed, const std::string& phase) {
              DropoutConfig drop = DropoutConfig::with_forward(rec, input_rate, output_rate);
              Rng rng(seed);
              return run_sequence(mm, b, drop, &rng, parse_phase(phase)).loss;
          },
          py::arg("model"), py::arg("batch"), py::arg("recurrent") = DropoutSpec{},
          py::arg("input_rate") = 0.0, py::arg("output_rate") = 0.0, py::arg("seed") = 1,
          py::arg("phase") = "infer");

    m.def("grad_check_max_err",
          [](Model& mm, const SequenceBatch& b, const DropoutSpec& rec, std::uint64_t seed,
             double eps, int n_coords) {
              return grad_check(mm, b, DropoutConfig::recurrent_only(rec), seed, eps, n_coords)
                  .max_rel_err;
          },
          py::arg("model"), py::arg("batch"), py::arg("recurrent") = DropoutSpec{},
          py::arg("seed") = 1, py::arg("eps") = 1e-5, py::arg("n_coords") = 200);

    // Temporal Order task.
    m.def("gen_temporal_order",
          [](const std::string& mode, int n, std::uint64_t seed) {
              Rng rng(seed);
              return gen_temporal_order(
                  mode == "short" ? TemporalOrderMode::kShort : TemporalOrderMode::kMedium, n, rng);
          },
          py::arg("mode"), py::arg("n"), py::arg("seed") = 1);

    // Decay analysis.
    py::class_<DecayScenario>(m, "DecayScenario")
        .def(py::init([](double keep_prob, const Vector& h0, const std::vector<Vector>& updates,
                         const std::string& scheme) {
                 DecayScenario s;
                 s.keep_prob = keep_prob;
                 s.h0 = h0;
                 s.updates = updates;
                 s.scheme = scheme == "hidden-drop" ? DecayScheme::hidden_drop
                                                    : DecayScheme::update_drop;
                 s.validate();
                 return s;
             }),
             py::arg("keep_prob"), py::arg("h0"), py::arg("updates"),
             py::arg("scheme") = "hidden-drop");
    m.def("closed_form", &closed_form);
    m.def("simulate_forced_gates", &simulate_forced_gates);

    // Metrics.
    m.def("perplexity", [](const std::vector<double>& nll) {
        return metrics(nll, Metric::perplexity);
    });
    m.def("bpc", [](const std::vector<double>& nll) { return metrics(nll, Metric::bpc); });
}
