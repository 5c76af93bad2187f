#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "prn/core.hpp"
#include "prn/errors.hpp"
#include "prn/ingest.hpp"
#include "prn/manifest.hpp"
#include "prn/matrix.hpp"
#include "prn/rng.hpp"

namespace prn::relation {

/*
 * Proposal relation module: each proposal is embedded as a pooled feature
 * vector, a single self-attention layer with a residual connection mixes
 * information across the proposal set of a video, and a small MLP turns
 * the mixed representation into a refined confidence in (0, 1).
 *
 * The backward pass is written out by hand (including the softmax Jacobian)
 * and is verified against central finite differences in the test suite.
 */

// ---------------------------------------------------------------------------
// proposal feature pooling
// ---------------------------------------------------------------------------

/*
 * k average-pooling bins over the proposal span, k over a left context
 * window, k over a right context window, then (center, width, score).
 * Snippets are unit cells [r, r+1) on the snippet axis; bins weight each
 * cell by its overlap with the bin interval. Feature dimension: 3k + 3.
 */
inline std::vector<double> pool_proposal_feature(const ingest::FeatureSequence& seq,
                                                 const Proposal& p, std::size_t k,
                                                 double context_ratio) {
    if (k < 1)
        throw ValueError("pooling bins must be >= 1");
    if (context_ratio < 0.0)
        throw ValueError("context ratio must be >= 0");

    const std::size_t t = seq.t();
    const std::size_t c = seq.c();
    const double td = static_cast<double>(t);

    // per-snippet channel means
    std::vector<double> rowmean(t, 0.0);
    for (std::size_t r = 0; r < t; ++r) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
            acc += seq.data(r, ch);
        rowmean[r] = acc / static_cast<double>(c);
    }

    // weighted mean of rowmean over [lo, hi) in snippet units
    auto window_bin = [&](double lo, double hi) {
        if (!(hi > lo))
            return 0.0;
        double wsum = 0.0;
        double acc = 0.0;
        const std::size_t r0 = static_cast<std::size_t>(std::max(0.0, std::floor(lo)));
        for (std::size_t r = r0; r < t; ++r) {
            const double cell_lo = static_cast<double>(r);
            if (cell_lo >= hi)
                break;
            const double w = std::min(cell_lo + 1.0, hi) - std::max(cell_lo, lo);
            if (w > 0.0) {
                wsum += w;
                acc += w * rowmean[r];
            }
        }
        return wsum > 0.0 ? acc / wsum : 0.0;
    };

    auto pool_window = [&](double lo_norm, double hi_norm, std::vector<double>& out) {
        const double lo = lo_norm * td;
        const double hi = hi_norm * td;
        if (!(hi > lo)) {
            out.insert(out.end(), k, 0.0);
            return;
        }
        const double width = hi - lo;
        for (std::size_t b = 0; b < k; ++b) {
            const double a = lo + width * static_cast<double>(b) / static_cast<double>(k);
            const double z = lo + width * static_cast<double>(b + 1) / static_cast<double>(k);
            out.push_back(window_bin(a, z));
        }
    };

    const double s = p.segment.start;
    const double e = p.segment.end;
    const double ctx = context_ratio * (e - s);

    std::vector<double> feat;
    feat.reserve(3 * k + 3);
    pool_window(s, e, feat);
    pool_window(std::max(0.0, s - ctx), s, feat); // empty after clamping -> zeros
    pool_window(e, std::min(1.0, e + ctx), feat);
    feat.push_back((s + e) / 2.0);
    feat.push_back(e - s);
    feat.push_back(p.score);
    return feat;
}

// ---------------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------------

struct RelationWeights {
    std::size_t d_in = 0;
    std::size_t d_att = 0;
    std::size_t h_r = 0;

    Matrix wq; // d_in x d_att
    Matrix wk; // d_in x d_att
    Matrix wv; // d_in x d_att
    Matrix wo; // d_att x d_in
    Matrix w1; // d_in x h_r
    std::vector<double> b1;
    Matrix w2; // h_r x 1
    double b2 = 0.0;

    bool finite() const {
        auto ok = [](const std::vector<double>& xs) {
            return std::all_of(xs.begin(), xs.end(),
                               [](double x) { return std::isfinite(x); });
        };
        return ok(wq.v) && ok(wk.v) && ok(wv.v) && ok(wo.v) && ok(w1.v) && ok(b1) &&
               ok(w2.v) && std::isfinite(b2);
    }
};

// Uniform weight init in [-1/sqrt(d_in), 1/sqrt(d_in)], biases zero.
// Draw order is fixed (wq, wk, wv, wo, w1, w2) so a seed pins every value.
inline RelationWeights init_relation_weights(std::size_t d_in, std::size_t d_att,
                                             std::size_t h_r, std::uint64_t seed) {
    RelationWeights w;
    w.d_in = d_in;
    w.d_att = d_att;
    w.h_r = h_r;
    Rng rng(seed);
    const double a = 1.0 / std::sqrt(static_cast<double>(d_in));
    auto fill = [&rng, a](Matrix& m, std::size_t r, std::size_t c) {
        m = Matrix(r, c);
        for (double& x : m.v)
            x = rng.uniform(-a, a);
    };
    fill(w.wq, d_in, d_att);
    fill(w.wk, d_in, d_att);
    fill(w.wv, d_in, d_att);
    fill(w.wo, d_att, d_in);
    fill(w.w1, d_in, h_r);
    w.b1.assign(h_r, 0.0);
    fill(w.w2, h_r, 1);
    w.b2 = 0.0;
    return w;
}

inline manifest::TensorFile to_manifest(const RelationWeights& w) {
    manifest::TensorFile tf;
    tf.dims["d_in"] = static_cast<std::int64_t>(w.d_in);
    tf.dims["d_att"] = static_cast<std::int64_t>(w.d_att);
    tf.dims["h_r"] = static_cast<std::int64_t>(w.h_r);
    auto add = [&tf](const std::string& name, std::vector<std::size_t> shape,
                     std::vector<double> data) {
        manifest::Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(data);
        tf.tensors.emplace_back(name, std::move(t));
    };
    add("attn.q.weight", {w.d_in, w.d_att}, w.wq.v);
    add("attn.k.weight", {w.d_in, w.d_att}, w.wk.v);
    add("attn.v.weight", {w.d_in, w.d_att}, w.wv.v);
    add("attn.out.weight", {w.d_att, w.d_in}, w.wo.v);
    add("mlp.w1", {w.d_in, w.h_r}, w.w1.v);
    add("mlp.b1", {w.h_r}, w.b1);
    add("mlp.w2", {w.h_r, 1}, w.w2.v);
    add("mlp.b2", {1}, {w.b2});
    return tf;
}

inline RelationWeights relation_weights_from_manifest(const manifest::TensorFile& tf) {
    RelationWeights w;
    w.d_in = static_cast<std::size_t>(tf.dim("d_in"));
    w.d_att = static_cast<std::size_t>(tf.dim("d_att"));
    w.h_r = static_cast<std::size_t>(tf.dim("h_r"));
    auto mat = [&tf](const std::string& name, std::size_t rows, std::size_t cols) {
        const manifest::Tensor& t = tf.get(name);
        if (t.count() != rows * cols)
            throw ShapeMismatch("tensor '" + name + "' has " + std::to_string(t.count()) +
                                " values, expected " + std::to_string(rows * cols));
        Matrix m(rows, cols);
        m.v = t.data;
        return m;
    };
    w.wq = mat("attn.q.weight", w.d_in, w.d_att);
    w.wk = mat("attn.k.weight", w.d_in, w.d_att);
    w.wv = mat("attn.v.weight", w.d_in, w.d_att);
    w.wo = mat("attn.out.weight", w.d_att, w.d_in);
    w.w1 = mat("mlp.w1", w.d_in, w.h_r);
    w.b1 = tf.get("mlp.b1").data;
    if (w.b1.size() != w.h_r)
        throw ShapeMismatch("mlp.b1 has wrong length");
    w.w2 = mat("mlp.w2", w.h_r, 1);
    w.b2 = tf.get("mlp.b2").data.at(0);
    if (!w.finite())
        throw FormatError("relation weights contain non-finite values");
    return w;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
    Matrix x;  // N x d_in
    Matrix q;  // N x d_att
    Matrix k;  // N x d_att
    Matrix v;  // N x d_att
    Matrix a;  // N x N, row-stochastic
    Matrix z;  // N x d_att, a * v
    Matrix h;  // N x d_in, residual sum
    Matrix m1; // N x h_r, pre-activation
    Matrix a1; // N x h_r, relu(m1)
    std::vector<double> scores;
};

inline ForwardCache attention_forward(const Matrix& x, const RelationWeights& w) {
    if (x.rows < 1)
        throw ShapeMismatch("attention: empty input");
    if (x.cols != w.d_in)
        throw ShapeMismatch("attention: input dim " + std::to_string(x.cols) +
                            " does not match weights d_in " + std::to_string(w.d_in));

    ForwardCache cache;
    cache.x = x;
    cache.q = matmul(x, w.wq);
    cache.k = matmul(x, w.wk);
    cache.v = matmul(x, w.wv);

    const std::size_t n = x.rows;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.d_att));

    // row-softmax of q k^T / sqrt(d_att), shifted by the row max
    cache.a = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        std::vector<double> logits(n);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < w.d_att; ++d)
                acc += cache.q(i, d) * cache.k(j, d);
            logits[j] = acc * inv_sqrt;
            row_max = std::max(row_max, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            logits[j] = std::exp(logits[j] - row_max);
            denom += logits[j];
        }
        for (std::size_t j = 0; j < n; ++j)
            cache.a(i, j) = logits[j] / denom;
    }

    cache.z = matmul(cache.a, cache.v);
    cache.h = cache.x + matmul(cache.z, w.wo);

    cache.m1 = matmul(cache.h, w.w1);
    cache.a1 = Matrix(n, w.h_r);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w.h_r; ++j) {
            cache.m1(i, j) += w.b1[j];
            cache.a1(i, j) = cache.m1(i, j) > 0.0 ? cache.m1(i, j) : 0.0;
        }

    cache.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = w.b2;
        for (std::size_t j = 0; j < w.h_r; ++j)
            acc += cache.a1(i, j) * w.w2(j, 0);
        cache.scores[i] = 1.0 / (1.0 + std::exp(-acc));
    }
    return cache;
}

struct RelationGradients {
    Matrix dwq, dwk, dwv, dwo, dw1, dw2;
    std::vector<double> db1;
    double db2 = 0.0;
    Matrix dx;
};

inline RelationGradients attention_backward(const ForwardCache& cache,
                                            const RelationWeights& w,
                                            const std::vector<double>& d_scores) {
    const std::size_t n = cache.x.rows;
    if (d_scores.size() != n)
        throw ShapeMismatch("backward: upstream gradient length " +
                            std::to_string(d_scores.size()) + " != batch size " +
                            std::to_string(n));

    RelationGradients g;

    // sigmoid head
    Matrix dm2(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = cache.scores[i];
        dm2(i, 0) = d_scores[i] * s * (1.0 - s);
    }

    g.dw2 = matmul(transpose(cache.a1), dm2);
    g.db2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        g.db2 += dm2(i, 0);

    // MLP hidden layer (relu)
    Matrix dm1 = matmul(dm2, transpose(w.w2));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w.h_r; ++j)
            if (cache.m1(i, j) <= 0.0)
                dm1(i, j) = 0.0;

    g.dw1 = matmul(transpose(cache.h), dm1);
    g.db1.assign(w.h_r, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w.h_r; ++j)
            g.db1[j] += dm1(i, j);

    const Matrix dh = matmul(dm1, transpose(w.w1));

    // residual: h = x + (a v) wo
    g.dx = dh;
    g.dwo = matmul(transpose(cache.z), dh);
    const Matrix dz = matmul(dh, transpose(w.wo));

    const Matrix dv = matmul(transpose(cache.a), dz);
    const Matrix da = matmul(dz, transpose(cache.v));

    // softmax Jacobian per row: ds_j = a_j * (da_j - sum_k da_k a_k)
    Matrix ds(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            dot += da(i, j) * cache.a(i, j);
        for (std::size_t j = 0; j < n; ++j)
            ds(i, j) = cache.a(i, j) * (da(i, j) - dot);
    }

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.d_att));
    const Matrix dq = scaled(matmul(ds, cache.k), inv_sqrt);
    const Matrix dk = scaled(matmul(transpose(ds), cache.q), inv_sqrt);

    g.dwq = matmul(transpose(cache.x), dq);
    g.dwk = matmul(transpose(cache.x), dk);
    g.dwv = matmul(transpose(cache.x), dv);

    g.dx += matmul(dq, transpose(w.wq));
    g.dx += matmul(dk, transpose(w.wk));
    g.dx += matmul(dv, transpose(w.wv));
    return g;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct RelationSample {
    Matrix x;                    // N x d_in
    std::vector<double> targets; // N values in [0, 1]
};

enum class BatchOrder { Fixed, Shuffle };

inline BatchOrder batch_order_from_string(const std::string& s) {
    if (s == "fixed")
        return BatchOrder::Fixed;
    if (s == "shuffle")
        return BatchOrder::Shuffle;
    throw ConfigError("unknown batch order '" + s + "'");
}

struct TrainHyper {
    double lr = 0.05;
    std::size_t epochs = 200;
    std::uint64_t seed = 7;
    BatchOrder order = BatchOrder::Fixed;
};

struct TrainResult {
    RelationWeights weights;
    // loss_trace[0] is the MSE of the freshly initialised weights;
    // loss_trace[e] the MSE after epoch e. Mean over videos of the
    // per-video mean squared error.
    std::vector<double> loss_trace;
};

namespace detail {

inline double dataset_mse(const std::vector<RelationSample>& dataset,
                          const RelationWeights& w) {
    double total = 0.0;
    for (const RelationSample& s : dataset) {
        const ForwardCache cache = attention_forward(s.x, w);
        double mse = 0.0;
        for (std::size_t i = 0; i < cache.scores.size(); ++i) {
            const double d = cache.scores[i] - s.targets[i];
            mse += d * d;
        }
        total += mse / static_cast<double>(cache.scores.size());
    }
    return total / static_cast<double>(dataset.size());
}

inline void sgd_step(RelationWeights& w, const RelationGradients& g, double lr) {
    auto upd = [lr](Matrix& p, const Matrix& dp) {
        for (std::size_t i = 0; i < p.v.size(); ++i)
            p.v[i] -= lr * dp.v[i];
    };
    upd(w.wq, g.dwq);
    upd(w.wk, g.dwk);
    upd(w.wv, g.dwv);
    upd(w.wo, g.dwo);
    upd(w.w1, g.dw1);
    upd(w.w2, g.dw2);
    for (std::size_t i = 0; i < w.b1.size(); ++i)
        w.b1[i] -= lr * g.db1[i];
    w.b2 -= lr * g.db2;
}

} // namespace detail

/*
 * Full-batch-per-video gradient descent on MSE against the tIoU targets,
 * starting from caller-provided weights. Entirely deterministic: seeded
 * init, fixed (or seeded-shuffle) video order, fixed summation order.
 */
inline TrainResult train_relation_from(const std::vector<RelationSample>& dataset,
                                       RelationWeights init, const TrainHyper& hyper) {
    if (dataset.empty())
        throw ValueError("training dataset is empty");
    for (const RelationSample& s : dataset) {
        if (s.x.cols != init.d_in)
            throw ShapeMismatch("training samples disagree on feature dimension");
        if (s.x.rows != s.targets.size())
            throw ShapeMismatch("targets length does not match proposal count");
        for (double t : s.targets)
            if (!(t >= 0.0 && t <= 1.0))
                throw ValueError("training target outside [0, 1]");
    }
    TrainResult result;
    result.weights = std::move(init);
    result.loss_trace.push_back(detail::dataset_mse(dataset, result.weights));

    Rng order_rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        if (hyper.order == BatchOrder::Shuffle) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[order_rng.uniform_int(i)]);
        }
        for (std::size_t idx : order) {
            const RelationSample& s = dataset[idx];
            const ForwardCache cache = attention_forward(s.x, result.weights);
            const std::size_t n = cache.scores.size();
            std::vector<double> d_scores(n);
            for (std::size_t i = 0; i < n; ++i)
                d_scores[i] = 2.0 * (cache.scores[i] - s.targets[i]) / static_cast<double>(n);
            const RelationGradients g =
                attention_backward(cache, result.weights, d_scores);
            detail::sgd_step(result.weights, g, hyper.lr);
        }
        const double mse = detail::dataset_mse(dataset, result.weights);
        if (!std::isfinite(mse))
            throw DivergenceError("loss became non-finite at epoch " +
                                  std::to_string(epoch + 1));
        result.loss_trace.push_back(mse);
    }
    return result;
}

inline TrainResult train_relation(const std::vector<RelationSample>& dataset,
                                  const TrainHyper& hyper, std::size_t d_att = 64,
                                  std::size_t h_r = 64) {
    if (dataset.empty())
        throw ValueError("training dataset is empty");
    const std::size_t d_in = dataset.front().x.cols;
    return train_relation_from(
        dataset, init_relation_weights(d_in, d_att, h_r, hyper.seed), hyper);
}

inline void save_loss_trace(const std::vector<double>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << "epoch,mse\n";
    out.precision(17);
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << "," << trace[i] << "\n";
}

// ---------------------------------------------------------------------------
// rescoring
// ---------------------------------------------------------------------------

enum class CombineMode { Replace, Multiply, Average };

inline CombineMode combine_mode_from_string(const std::string& s) {
    if (s == "replace")
        return CombineMode::Replace;
    if (s == "multiply")
        return CombineMode::Multiply;
    if (s == "average")
        return CombineMode::Average;
    throw ConfigError("unknown combine mode '" + s + "'");
}

inline double apply_combine(double original, double refined, CombineMode mode) {
    switch (mode) {
    case CombineMode::Replace:
        return refined;
    case CombineMode::Average:
        return 0.5 * (original + refined);
    case CombineMode::Multiply:
    default:
        return original * refined;
    }
}

struct PoolingConfig {
    std::size_t k = 8;
    double context_ratio = 0.5;
};

inline Matrix stack_proposal_features(const ingest::FeatureSequence& seq,
                                      const std::vector<Proposal>& proposals,
                                      const PoolingConfig& cfg) {
    if (proposals.empty())
        throw ValueError("no proposals to embed");
    const std::size_t d_in = 3 * cfg.k + 3;
    Matrix x(proposals.size(), d_in);
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        const std::vector<double> f =
            pool_proposal_feature(seq, proposals[i], cfg.k, cfg.context_ratio);
        for (std::size_t j = 0; j < d_in; ++j)
            x(i, j) = f[j];
    }
    return x;
}

inline std::vector<Proposal> rescore_proposals(std::vector<Proposal> proposals,
                                               const ingest::FeatureSequence& seq,
                                               const RelationWeights& w,
                                               const PoolingConfig& pooling,
                                               CombineMode mode) {
    if (proposals.empty())
        return proposals;
    const Matrix x = stack_proposal_features(seq, proposals, pooling);
    const ForwardCache cache = attention_forward(x, w);
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        const double refined = cache.scores[i];
        proposals[i].refined_score = refined;
        switch (mode) {
        case CombineMode::Replace:
            proposals[i].score = refined;
            break;
        case CombineMode::Average:
            proposals[i].score = 0.5 * (proposals[i].score + refined);
            break;
        case CombineMode::Multiply:
        default:
            proposals[i].score *= refined;
            break;
        }
    }
    std::stable_sort(proposals.begin(), proposals.end(), proposal_order);
    return proposals;
}

} // namespace prn::relation
