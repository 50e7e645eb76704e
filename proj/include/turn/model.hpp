#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "turn/core.hpp"
#include "turn/featurestore.hpp"
#include "turn/rng.hpp"
#include "turn/sampling.hpp"

namespace turn {

struct ModelConfig {
    std::int64_t dim = 0; // per-unit feature dimension D; the input layer sees 3*D
    std::int64_t hidden = 1000;
    PyramidConfig pyramid;

    std::int64_t input_dim() const { return 3 * dim; }
    void validate() const {
        if (dim < 1) throw error(errc::config, "model dim must be positive");
        if (hidden < 1) throw error(errc::config, "model hidden size must be positive");
        pyramid.validate();
    }
};

// Shared hidden layer, two heads: classification logits (row 0 = background,
// row 1 = action) and boundary-offset regression (row 0 = o_s, row 1 = o_e).
struct ModelParams {
    ModelConfig cfg;
    Eigen::MatrixXd W1; // hidden x 3D
    Eigen::VectorXd b1; // hidden
    Eigen::MatrixXd Wc; // 2 x hidden
    Eigen::VectorXd bc; // 2
    Eigen::MatrixXd Wr; // 2 x hidden
    Eigen::VectorXd br; // 2
};

namespace detail {
// Glorot-uniform fill in row-major order so initialization is
// reproducible independently of the matrix storage layout.
inline void glorot_fill(Eigen::MatrixXd& m, std::int64_t fan_in, std::int64_t fan_out,
                        Rng& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-a, a);
}
} // namespace detail

inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    std::int64_t in = cfg.input_dim(), h = cfg.hidden;
    p.W1.resize(h, in);
    p.b1 = Eigen::VectorXd::Zero(h);
    p.Wc.resize(2, h);
    p.bc = Eigen::VectorXd::Zero(2);
    p.Wr.resize(2, h);
    p.br = Eigen::VectorXd::Zero(2);
    detail::glorot_fill(p.W1, in, h, rng);
    detail::glorot_fill(p.Wc, h, 2, rng);
    detail::glorot_fill(p.Wr, h, 2, rng);
    return p;
}

struct ForwardCache {
    Eigen::MatrixXd H; // hidden x B, post-relu
    Eigen::MatrixXd Z; // 2 x B, classification logits
    Eigen::MatrixXd P; // 2 x B, softmax probabilities
    Eigen::MatrixXd O; // 2 x B, predicted offsets (o_s; o_e)
};

inline void forward(const ModelParams& p, const Eigen::MatrixXd& X, ForwardCache& c) {
    c.H.noalias() = p.W1 * X;
    c.H.colwise() += p.b1;
    c.H = c.H.cwiseMax(0.0);
    c.Z.noalias() = p.Wc * c.H;
    c.Z.colwise() += p.bc;
    c.O.noalias() = p.Wr * c.H;
    c.O.colwise() += p.br;
    c.P.resize(2, X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        double m = std::max(c.Z(0, i), c.Z(1, i));
        double e0 = std::exp(c.Z(0, i) - m), e1 = std::exp(c.Z(1, i) - m);
        c.P(0, i) = e0 / (e0 + e1);
        c.P(1, i) = e1 / (e0 + e1);
    }
}

struct Gradients {
    Eigen::MatrixXd W1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd Wc;
    Eigen::VectorXd bc;
    Eigen::MatrixXd Wr;
    Eigen::VectorXd br;
};

struct LossParts {
    double total = 0.0, cls = 0.0, reg = 0.0;
};

struct BatchData {
    Eigen::MatrixXd X;                   // 3D x B
    std::vector<int> labels;             // 1 = action, 0 = background
    std::vector<std::uint8_t> is_pos;    // regression applies to these columns
    Eigen::MatrixXd targets;             // 2 x B; meaningful where is_pos
};

// L = L_cls + lambda * L_reg.
//   L_cls: softmax cross-entropy averaged over the whole batch.
//   L_reg: L1 on each offset coordinate, summed per sample, averaged over the
//          positives only; zero (with zero gradient) when the batch has none.
// Subgradient conventions: d|0|/dx = 0 and drelu(0)/dx = 0.
inline LossParts loss_and_grad(const ModelParams& p, const BatchData& b,
                               const ForwardCache& c, double lambda, Gradients& g) {
    const Eigen::Index B = b.X.cols();
    if (B == 0) throw error(errc::internal, "empty batch");
    LossParts parts;
    Eigen::MatrixXd dZ = c.P;
    for (Eigen::Index i = 0; i < B; ++i) {
        int y = b.labels[static_cast<std::size_t>(i)];
        double m = std::max(c.Z(0, i), c.Z(1, i));
        double lse = m + std::log(std::exp(c.Z(0, i) - m) + std::exp(c.Z(1, i) - m));
        parts.cls += lse - c.Z(y, i);
        dZ(y, i) -= 1.0;
    }
    parts.cls /= static_cast<double>(B);
    dZ /= static_cast<double>(B);

    std::int64_t n_pos = 0;
    for (std::uint8_t f : b.is_pos) n_pos += f;
    Eigen::MatrixXd dO = Eigen::MatrixXd::Zero(2, B);
    if (n_pos > 0) {
        double w = lambda / static_cast<double>(n_pos);
        for (Eigen::Index i = 0; i < B; ++i) {
            if (!b.is_pos[static_cast<std::size_t>(i)]) continue;
            for (int k = 0; k < 2; ++k) {
                double d = c.O(k, i) - b.targets(k, i);
                parts.reg += std::abs(d);
                dO(k, i) = d > 0.0 ? w : (d < 0.0 ? -w : 0.0);
            }
        }
        parts.reg /= static_cast<double>(n_pos);
    }
    parts.total = parts.cls + lambda * parts.reg;

    Eigen::MatrixXd dH = p.Wc.transpose() * dZ + p.Wr.transpose() * dO;
    dH = (c.H.array() > 0.0).select(dH, 0.0);
    g.W1.noalias() = dH * b.X.transpose();
    g.b1 = dH.rowwise().sum();
    g.Wc.noalias() = dZ * c.H.transpose();
    g.bc = dZ.rowwise().sum();
    g.Wr.noalias() = dO * c.H.transpose();
    g.br = dO.rowwise().sum();
    return parts;
}

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Gradients m, v;
    std::int64_t t = 0;

    static AdamState zeros_like(const ModelParams& p) {
        AdamState s;
        auto zm = [](const Eigen::MatrixXd& x) {
            return Eigen::MatrixXd::Zero(x.rows(), x.cols()).eval();
        };
        auto zv = [](const Eigen::VectorXd& x) {
            return Eigen::VectorXd::Zero(x.size()).eval();
        };
        s.m = {zm(p.W1), zv(p.b1), zm(p.Wc), zv(p.bc), zm(p.Wr), zv(p.br)};
        s.v = s.m;
        return s;
    }
};

namespace detail {
template <typename T>
void adam_update(T& theta, const T& grad, T& m, T& v, const AdamConfig& a, double bc1,
                 double bc2) {
    m = a.beta1 * m + (1.0 - a.beta1) * grad;
    v = a.beta2 * v.array().matrix() + (1.0 - a.beta2) * grad.array().square().matrix();
    theta.array() -= a.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + a.eps);
}
} // namespace detail

inline void adam_step(ModelParams& p, const Gradients& g, AdamState& s,
                      const AdamConfig& a) {
    s.t += 1;
    double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(s.t));
    double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(s.t));
    detail::adam_update(p.W1, g.W1, s.m.W1, s.v.W1, a, bc1, bc2);
    detail::adam_update(p.b1, g.b1, s.m.b1, s.v.b1, a, bc1, bc2);
    detail::adam_update(p.Wc, g.Wc, s.m.Wc, s.v.Wc, a, bc1, bc2);
    detail::adam_update(p.bc, g.bc, s.m.bc, s.v.bc, a, bc1, bc2);
    detail::adam_update(p.Wr, g.Wr, s.m.Wr, s.v.Wr, a, bc1, bc2);
    detail::adam_update(p.br, g.br, s.m.br, s.v.br, a, bc1, bc2);
}

struct TrainConfig {
    ModelConfig model;
    AdamConfig adam;
    double lambda = 2.0;
    std::int64_t batch_size = 128;
    std::int64_t bg_ratio = 10;
    std::int64_t steps = 8000;
    std::uint64_t seed = 0;
    std::int64_t trace_every = 100;

    void validate() const {
        model.validate();
        if (lambda < 0.0) throw error(errc::config, "lambda must be non-negative");
        if (batch_size < 2) throw error(errc::config, "batch size must be at least 2");
        if (bg_ratio < 0) throw error(errc::config, "bg ratio must be non-negative");
        if (steps < 0) throw error(errc::config, "steps must be non-negative");
        if (adam.lr <= 0.0) throw error(errc::config, "learning rate must be positive");
    }
};

struct TraceRow {
    std::int64_t step = 0;
    double loss = 0.0, cls = 0.0, reg = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<TraceRow> trace;
    std::int64_t pool_positives = 0;
    std::int64_t pool_negatives = 0;
};

namespace detail {
struct PoolEntry {
    const VideoRecord* rec;
    UnitInterval clip;
    double os, oe;
};

// Without replacement (partial Fisher-Yates on a persistent index vector)
// when the pool covers the quota, with replacement otherwise. Matches the
// policy in sample_minibatch.
inline void draw_into(std::vector<std::uint32_t>& ids, std::int64_t quota, Rng& rng,
                      std::vector<std::uint32_t>& out) {
    if (static_cast<std::int64_t>(ids.size()) >= quota) {
        for (std::int64_t k = 0; k < quota; ++k) {
            std::size_t j = static_cast<std::size_t>(k) + rng.uniform_below(ids.size() - k);
            std::swap(ids[static_cast<std::size_t>(k)], ids[j]);
            out.push_back(ids[static_cast<std::size_t>(k)]);
        }
    } else {
        for (std::int64_t k = 0; k < quota; ++k)
            out.push_back(ids[rng.uniform_below(ids.size())]);
    }
}
} // namespace detail

inline TrainResult train(const FeatureStore& store, const AnnotationSet& anns,
                         const TrainConfig& tc) {
    tc.validate();
    if (tc.model.dim != store.dim)
        throw error(errc::config, "model dim does not match feature store dim");

    std::vector<detail::PoolEntry> pos_pool, neg_pool;
    for (const auto& [vid, rec] : store.videos) {
        auto it = anns.find(vid);
        std::vector<GroundTruth> gts;
        if (it != anns.end())
            for (const auto& a : it->second.actions) gts.push_back(a);
        auto clips = build_pyramid(rec.units, tc.model.pyramid);
        auto labeled = assign_labels(clips, gts, rec);
        for (const auto& s : labeled) {
            if (s.label == SampleLabel::positive)
                pos_pool.push_back({&rec, s.clip, s.target_os, s.target_oe});
            else if (s.label == SampleLabel::negative)
                neg_pool.push_back({&rec, s.clip, 0.0, 0.0});
        }
    }
    if (pos_pool.empty() || neg_pool.empty())
        throw error(errc::data, "training pool needs positives and negatives");

    Rng init_rng(sub_seed(tc.seed, "train/init"));
    Rng sample_rng(sub_seed(tc.seed, "train/sampler"));
    TrainResult res;
    res.params = init_params(tc.model, init_rng);
    res.pool_positives = static_cast<std::int64_t>(pos_pool.size());
    res.pool_negatives = static_cast<std::int64_t>(neg_pool.size());

    std::int64_t n_pos = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(tc.batch_size) /
                        static_cast<double>(tc.bg_ratio + 1)));
    std::int64_t n_neg = tc.batch_size - n_pos;

    std::vector<std::uint32_t> pos_ids(pos_pool.size()), neg_ids(neg_pool.size());
    std::iota(pos_ids.begin(), pos_ids.end(), 0u);
    std::iota(neg_ids.begin(), neg_ids.end(), 0u);

    AdamState adam = AdamState::zeros_like(res.params);
    Gradients grads;
    ForwardCache cache;
    BatchData batch;
    const std::int64_t in_dim = tc.model.input_dim();
    batch.X.resize(in_dim, tc.batch_size);
    batch.targets = Eigen::MatrixXd::Zero(2, tc.batch_size);
    batch.labels.assign(static_cast<std::size_t>(tc.batch_size), 0);
    batch.is_pos.assign(static_cast<std::size_t>(tc.batch_size), 0);
    std::vector<std::uint32_t> picked;

    for (std::int64_t step = 1; step <= tc.steps; ++step) {
        picked.clear();
        detail::draw_into(pos_ids, n_pos, sample_rng, picked);
        detail::draw_into(neg_ids, n_neg, sample_rng, picked);
        for (std::int64_t i = 0; i < tc.batch_size; ++i) {
            bool is_pos = i < n_pos;
            const auto& pool = is_pos ? pos_pool : neg_pool;
            const auto& e = pool[picked[static_cast<std::size_t>(i)]];
            clip_feature_into(*e.rec, e.clip, tc.model.pyramid.n_ctx,
                              tc.model.pyramid.use_context, batch.X.col(i).data());
            batch.labels[static_cast<std::size_t>(i)] = is_pos ? 1 : 0;
            batch.is_pos[static_cast<std::size_t>(i)] = is_pos ? 1 : 0;
            batch.targets(0, i) = e.os;
            batch.targets(1, i) = e.oe;
        }
        forward(res.params, batch.X, cache);
        LossParts parts = loss_and_grad(res.params, batch, cache, tc.lambda, grads);
        adam_step(res.params, grads, adam, tc.adam);
        if (tc.trace_every > 0 && (step % tc.trace_every == 0 || step == 1 || step == tc.steps))
            res.trace.push_back({step, parts.total, parts.cls, parts.reg});
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON header line, '\n', then raw little-endian float64
// blocks in row-major order: W1, b1, Wc, bc, Wr, br.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    double lr = 0.005, lambda = 2.0;
    std::int64_t batch_size = 128, bg_ratio = 10, steps = 8000;
    std::uint64_t seed = 0;
};

namespace detail {
inline void put_f64(std::string& buf, double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double x;
    std::memcpy(&x, &u, 8);
    return x;
}

inline void append_matrix(std::string& buf, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(buf, m(r, c));
}

inline void append_vector(std::string& buf, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(buf, v(i));
}
} // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& p,
                            const CheckpointMeta& meta) {
    nlohmann::json hdr;
    hdr["format"] = "turn-checkpoint";
    hdr["version"] = 1;
    hdr["dim"] = p.cfg.dim;
    hdr["hidden"] = p.cfg.hidden;
    hdr["n_ctx"] = p.cfg.pyramid.n_ctx;
    hdr["scales"] = p.cfg.pyramid.scales;
    hdr["use_context"] = p.cfg.pyramid.use_context;
    hdr["lr"] = meta.lr;
    hdr["lambda"] = meta.lambda;
    hdr["batch_size"] = meta.batch_size;
    hdr["bg_ratio"] = meta.bg_ratio;
    hdr["steps"] = meta.steps;
    hdr["seed"] = meta.seed;
    std::string buf = hdr.dump();
    buf.push_back('\n');
    detail::append_matrix(buf, p.W1);
    detail::append_vector(buf, p.b1);
    detail::append_matrix(buf, p.Wc);
    detail::append_vector(buf, p.bc);
    detail::append_matrix(buf, p.Wr);
    detail::append_vector(buf, p.br);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw error(errc::io, "cannot open checkpoint for writing: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw error(errc::io, "failed writing checkpoint: " + path);
}

inline ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw error(errc::io, "cannot open checkpoint: " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::size_t nl = data.find('\n');
    if (nl == std::string::npos)
        throw error(errc::format, "checkpoint " + path + ": missing header line");
    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(data.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::format, "checkpoint " + path + ": bad header: " + e.what());
    }
    if (!hdr.is_object() || hdr.value("format", "") != "turn-checkpoint")
        throw error(errc::format, "checkpoint " + path + ": not a turn checkpoint header");
    if (hdr.value("version", 0) != 1)
        throw error(errc::format, "checkpoint " + path + ": unsupported version");
    ModelParams p;
    try {
        p.cfg.dim = hdr.at("dim").get<std::int64_t>();
        p.cfg.hidden = hdr.at("hidden").get<std::int64_t>();
        p.cfg.pyramid.n_ctx = hdr.at("n_ctx").get<std::int64_t>();
        p.cfg.pyramid.scales = hdr.at("scales").get<std::vector<std::int64_t>>();
        p.cfg.pyramid.use_context = hdr.at("use_context").get<bool>();
        if (meta) {
            meta->lr = hdr.at("lr").get<double>();
            meta->lambda = hdr.at("lambda").get<double>();
            meta->batch_size = hdr.at("batch_size").get<std::int64_t>();
            meta->bg_ratio = hdr.at("bg_ratio").get<std::int64_t>();
            meta->steps = hdr.at("steps").get<std::int64_t>();
            meta->seed = hdr.at("seed").get<std::uint64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(errc::format, "checkpoint " + path + ": bad header field: " + e.what());
    }
    p.cfg.validate();
    std::int64_t in = p.cfg.input_dim(), h = p.cfg.hidden;
    std::size_t need = static_cast<std::size_t>(h * in + h + 2 * h + 2 + 2 * h + 2) * 8;
    std::size_t have = data.size() - nl - 1;
    if (have != need)
        throw error(errc::format, "checkpoint " + path + ": payload is " +
                                      std::to_string(have) + " bytes, expected " +
                                      std::to_string(need));
    const auto* q = reinterpret_cast<const unsigned char*>(data.data()) + nl + 1;
    auto read_mat = [&](Eigen::MatrixXd& m, std::int64_t rows, std::int64_t cols) {
        m.resize(rows, cols);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c, q += 8) m(r, c) = detail::get_f64(q);
    };
    auto read_vec = [&](Eigen::VectorXd& v, std::int64_t n) {
        v.resize(n);
        for (std::int64_t i = 0; i < n; ++i, q += 8) v(i) = detail::get_f64(q);
    };
    read_mat(p.W1, h, in);
    read_vec(p.b1, h);
    read_mat(p.Wc, 2, h);
    read_vec(p.bc, 2);
    read_mat(p.Wr, 2, h);
    read_vec(p.br, 2);
    return p;
}

} // namespace turn
