// SPDX-License-Identifier: Apache-2.0
#include "rnnlab/model.hpp"

#include <json.hpp>
#include <stdexcept>

#include "rnnlab/io.hpp"

namespace rnnlab {

using nlohmann::json;

Arch parse_arch(const std::string& name) {
    if (name == "rnn") return Arch::rnn;
    if (name == "lstm") return Arch::lstm;
    if (name == "gru") return Arch::gru;
    throw std::invalid_argument("unknown architecture: " + name);
}

std::string arch_name(Arch a) {
    switch (a) {
        case Arch::rnn: return "rnn";
        case Arch::lstm: return "lstm";
        case Arch::gru: return "gru";
    }
    return "?";
}

namespace {

CellParams make_cell(const ModelConfig& cfg) {
    const int width = cfg.emb_dim + cfg.hidden;
    switch (cfg.arch) {
        case Arch::rnn: {
            RnnParams p;
            p.w_h = Matrix::Zero(cfg.hidden, width);
            p.b_h = Vector::Zero(cfg.hidden);
            p.act = cfg.act;
            return p;
        }
        case Arch::lstm: {
            LstmParams p;
            for (Matrix* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) *w = Matrix::Zero(cfg.hidden, width);
            for (Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) *b = Vector::Zero(cfg.hidden);
            p.act = cfg.act;
            return p;
        }
        case Arch::gru: {
            GruParams p;
            for (Matrix* w : {&p.w_z, &p.w_r, &p.w_g}) *w = Matrix::Zero(cfg.hidden, width);
            for (Vector* b : {&p.b_z, &p.b_r, &p.b_g}) *b = Vector::Zero(cfg.hidden);
            p.act = cfg.act;
            return p;
        }
    }
    throw std::logic_error("unreachable");
}

template <typename ParamSetT, typename Fn>
void visit_tensors(ParamSetT& p, Fn&& fn) {
    fn("embedding", p.embedding.data(), p.embedding.size());
    std::visit(
        [&](auto& cell) {
            using T = std::decay_t<decltype(cell)>;
            if constexpr (std::is_same_v<T, RnnParams>) {
                fn("w_h", cell.w_h.data(), cell.w_h.size());
                fn("b_h", cell.b_h.data(), cell.b_h.size());
            } else if constexpr (std::is_same_v<T, LstmParams>) {
                fn("w_i", cell.w_i.data(), cell.w_i.size());
                fn("w_f", cell.w_f.data(), cell.w_f.size());
                fn("w_o", cell.w_o.data(), cell.w_o.size());
                fn("w_g", cell.w_g.data(), cell.w_g.size());
                fn("b_i", cell.b_i.data(), cell.b_i.size());
                fn("b_f", cell.b_f.data(), cell.b_f.size());
                fn("b_o", cell.b_o.data(), cell.b_o.size());
                fn("b_g", cell.b_g.data(), cell.b_g.size());
            } else {
                fn("w_z", cell.w_z.data(), cell.w_z.size());
                fn("w_r", cell.w_r.data(), cell.w_r.size());
                fn("w_g", cell.w_g.data(), cell.w_g.size());
                fn("b_z", cell.b_z.data(), cell.b_z.size());
                fn("b_r", cell.b_r.data(), cell.b_r.size());
                fn("b_g", cell.b_g.data(), cell.b_g.size());
            }
        },
        p.cell);
    fn("w_out", p.w_out.data(), p.w_out.size());
    fn("b_out", p.b_out.data(), p.b_out.size());
}

}  // namespace

Model make_model(const ModelConfig& cfg) {
    if (cfg.vocab < 1 || cfg.emb_dim < 1 || cfg.hidden < 1 || cfg.out_dim < 1) {
        throw std::invalid_argument("model sizes must all be positive");
    }
    Model m;
    m.cfg = cfg;
    m.params.embedding = Matrix::Zero(cfg.vocab, cfg.emb_dim);
    m.params.cell = make_cell(cfg);
    m.params.w_out = Matrix::Zero(cfg.out_dim, cfg.hidden);
    m.params.b_out = Vector::Zero(cfg.out_dim);
    return m;
}

Gradients zeros_like(const ModelConfig& cfg) { return make_model(cfg).params; }

void init_uniform(Model& m, double range, double forget_bias, Rng& rng) {
    for_each_tensor(m.params, [&](const std::string&, double* data, Eigen::Index size) {
        for (Eigen::Index i = 0; i < size; ++i) data[i] = rng.uniform(-range, range);
    });
    if (auto* lstm = std::get_if<LstmParams>(&m.params.cell); lstm && forget_bias != 0.0) {
        lstm->b_f.array() += forget_bias;
    }
}

void for_each_tensor(ParamSet& p, const TensorVisitor& fn) { visit_tensors(p, fn); }
void for_each_tensor(const ParamSet& p, const ConstTensorVisitor& fn) { visit_tensors(p, fn); }

Eigen::Index param_count(const ParamSet& p) {
    Eigen::Index n = 0;
    for_each_tensor(p, [&](const std::string&, const double*, Eigen::Index size) { n += size; });
    return n;
}

void save_checkpoint(const Model& m, const std::string& path) {
    json j;
    j["format"] = "rnnlab-checkpoint";
    j["version"] = 1;
    j["arch"] = arch_name(m.cfg.arch);
    j["activation"] = activation_name(m.cfg.act);
    j["vocab"] = m.cfg.vocab;
    j["emb_dim"] = m.cfg.emb_dim;
    j["hidden"] = m.cfg.hidden;
    j["out_dim"] = m.cfg.out_dim;
    if (!m.vocab.empty()) j["vocab_tokens"] = m.vocab;
    json tensors = json::object();
    for_each_tensor(m.params, [&](const std::string& name, const double* data, Eigen::Index size) {
        tensors[name] = std::vector<double>(data, data + size);
    });
    j["tensors"] = std::move(tensors);
    write_file_atomic(path, j.dump());
}

Model load_checkpoint(const std::string& path) {
    json j = json::parse(read_file(path));
    if (j.value("format", "") != "rnnlab-checkpoint") {
        throw std::runtime_error(path + " is not a rnnlab checkpoint");
    }
    if (j.value("version", 0) != 1) {
        throw std::runtime_error("unsupported checkpoint version in " + path);
    }
    ModelConfig cfg;
    cfg.arch = parse_arch(j.at("arch").get<std::string>());
    cfg.act = parse_activation(j.at("activation").get<std::string>());
    cfg.vocab = j.at("vocab").get<int>();
    cfg.emb_dim = j.at("emb_dim").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.out_dim = j.at("out_dim").get<int>();
    Model m = make_model(cfg);
    if (j.contains("vocab_tokens")) {
        m.vocab = j.at("vocab_tokens").get<std::vector<std::string>>();
        if (static_cast<int>(m.vocab.size()) != cfg.vocab) {
            throw std::runtime_error("checkpoint vocab list does not match vocab size");
        }
    }
    const json& tensors = j.at("tensors");
    for_each_tensor(m.params, [&](const std::string& name, double* data, Eigen::Index size) {
        const auto& arr = tensors.at(name);
        if (static_cast<Eigen::Index>(arr.size()) != size) {
            throw std::runtime_error("checkpoint tensor " + name + " has wrong size");
        }
        for (Eigen::Index i = 0; i < size; ++i) data[i] = arr[i].get<double>();
    });
    return m;
}

}  // namespace rnnlab
