#include "complora/model.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "complora/errors.hpp"
#include "complora/subspace.hpp"

namespace complora {

void EncoderConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || n_layers < 1 || seq_len < 1) {
        throw RangeError("encoder config counts must all be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw RangeError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                         std::to_string(n_heads));
    }
}

MiniEncoder MiniEncoder::random(const EncoderConfig& config, double scale, RandomSource& rng) {
    config.validate();
    MiniEncoder m;
    m.config = config;
    const double stddev = scale / std::sqrt(static_cast<double>(config.d_model));
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        AttentionLayer layer;
        for (auto& w : layer.weight) w = rng.gaussian(config.d_model, config.d_model, stddev);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

namespace {

void fnv_mix(std::uint64_t& h, const Matrix& m) {
    for (double x : m.data()) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    }
}

}  // namespace

std::uint64_t MiniEncoder::frozen_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& layer : layers) {
        for (std::size_t p = 0; p < 4; ++p) {
            fnv_mix(h, layer.weight[p]);
            if (const auto* c = std::get_if<CompLoraAdapter>(&layer.adapter[p])) {
                fnv_mix(h, c->proj_in);
                fnv_mix(h, c->proj_out);
            }
        }
    }
    return h;
}

ClassifierHead make_head(Matrix class_embeddings, double temperature) {
    if (!(temperature > 0.0)) throw RangeError("temperature must be positive");
    for (std::size_t i = 0; i < class_embeddings.rows(); ++i) {
        auto row = class_embeddings.row(i);
        const double n = norm2(row);
        if (!(n > 0.0)) throw NumericError("class embedding " + std::to_string(i) + " has zero norm");
        for (double& x : row) x /= n;
    }
    return {std::move(class_embeddings), temperature};
}

Matrix mha_forward(const AttentionLayer& layer, const Matrix& x, std::size_t n_heads, std::size_t seq_len,
                   MhaCache* cache) {
    const std::size_t d = x.cols();
    if (seq_len == 0) seq_len = x.rows();
    if (n_heads == 0 || d % n_heads != 0) throw ShapeError("head count does not divide token width");
    if (x.rows() % seq_len != 0) throw ShapeError("token rows are not a multiple of seq_len");
    for (const Matrix& w : layer.weight) {
        if (w.rows() != d || w.cols() != d) {
            throw ShapeError("attention weight " + shape_str(w.rows(), w.cols()) + " does not fit tokens " +
                             shape_str(x.rows(), x.cols()));
        }
    }
    const std::size_t batch = x.rows() / seq_len;
    const std::size_t dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    MhaCache local;
    MhaCache& c = cache ? *cache : local;
    c.q = linear_forward(layer.w(Projection::query), layer.ad(Projection::query), x, cache ? &c.proj[0] : nullptr);
    c.k = linear_forward(layer.w(Projection::key), layer.ad(Projection::key), x, cache ? &c.proj[1] : nullptr);
    c.v = linear_forward(layer.w(Projection::value), layer.ad(Projection::value), x, cache ? &c.proj[2] : nullptr);
    c.concat = Matrix(x.rows(), d);
    c.attn.assign(cache ? batch * n_heads : 0, Matrix());

    Matrix scores(seq_len, seq_len);
    for (std::size_t s = 0; s < batch; ++s) {
        const std::size_t r0 = s * seq_len;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < seq_len; ++i) {
                const double* qi = c.q.row(r0 + i).data() + c0;
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double* kj = c.k.row(r0 + j).data() + c0;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < dh; ++t) acc += qi[t] * kj[t];
                    scores(i, j) = acc * scale;
                }
            }
            Matrix attn = softmax_rows(scores);
            for (std::size_t i = 0; i < seq_len; ++i) {
                double* out = c.concat.row(r0 + i).data() + c0;
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double pij = attn(i, j);
                    const double* vj = c.v.row(r0 + j).data() + c0;
                    for (std::size_t t = 0; t < dh; ++t) out[t] += pij * vj[t];
                }
            }
            if (cache) c.attn[s * n_heads + h] = std::move(attn);
        }
    }
    return linear_forward(layer.w(Projection::output), layer.ad(Projection::output), c.concat,
                          cache ? &c.proj[3] : nullptr);
}

MhaGrad mha_backward(const AttentionLayer& layer, const MhaCache& cache, const Matrix& dy, std::size_t n_heads,
                     std::size_t seq_len) {
    const std::size_t d = cache.q.cols();
    const std::size_t dh = d / n_heads;
    const std::size_t batch = cache.q.rows() / seq_len;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (cache.attn.size() != batch * n_heads) throw std::logic_error("mha cache was not recorded");

    MhaGrad out;
    LinearGrad go = linear_backward(layer.w(Projection::output), layer.ad(Projection::output), cache.proj[3], dy);
    out.adapter[3] = std::move(go.adapter);
    const Matrix& dconcat = go.dx;

    Matrix dq(cache.q.rows(), d), dk(cache.k.rows(), d), dv(cache.v.rows(), d);
    Matrix dattn(seq_len, seq_len);
    for (std::size_t s = 0; s < batch; ++s) {
        const std::size_t r0 = s * seq_len;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t c0 = h * dh;
            const Matrix& attn = cache.attn[s * n_heads + h];
            // dP = dO V^T, dV = P^T dO
            for (std::size_t i = 0; i < seq_len; ++i) {
                const double* doi = dconcat.row(r0 + i).data() + c0;
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double* vj = cache.v.row(r0 + j).data() + c0;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < dh; ++t) acc += doi[t] * vj[t];
                    dattn(i, j) = acc;
                    double* dvj = dv.row(r0 + j).data() + c0;
                    const double pij = attn(i, j);
                    for (std::size_t t = 0; t < dh; ++t) dvj[t] += pij * doi[t];
                }
            }
            // softmax backward, then through the scaled scores
            for (std::size_t i = 0; i < seq_len; ++i) {
                double rowdot = 0.0;
                for (std::size_t j = 0; j < seq_len; ++j) rowdot += dattn(i, j) * attn(i, j);
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double ds = attn(i, j) * (dattn(i, j) - rowdot) * scale;
                    const double* qi = cache.q.row(r0 + i).data() + c0;
                    const double* kj = cache.k.row(r0 + j).data() + c0;
                    double* dqi = dq.row(r0 + i).data() + c0;
                    double* dkj = dk.row(r0 + j).data() + c0;
                    for (std::size_t t = 0; t < dh; ++t) {
                        dqi[t] += ds * kj[t];
                        dkj[t] += ds * qi[t];
                    }
                }
            }
        }
    }

    LinearGrad gq = linear_backward(layer.w(Projection::query), layer.ad(Projection::query), cache.proj[0], dq);
    LinearGrad gk = linear_backward(layer.w(Projection::key), layer.ad(Projection::key), cache.proj[1], dk);
    LinearGrad gv = linear_backward(layer.w(Projection::value), layer.ad(Projection::value), cache.proj[2], dv);
    out.dx = std::move(gq.dx);
    out.dx += gk.dx;
    out.dx += gv.dx;
    out.adapter[0] = std::move(gq.adapter);
    out.adapter[1] = std::move(gk.adapter);
    out.adapter[2] = std::move(gv.adapter);
    return out;
}

Matrix encode_batch(const MiniEncoder& model, const Matrix& tokens, GradientTape* tape) {
    const EncoderConfig& cfg = model.config;
    if (tokens.cols() != cfg.d_model || tokens.rows() % cfg.seq_len != 0 || tokens.rows() == 0) {
        throw ShapeError("tokens " + shape_str(tokens.rows(), tokens.cols()) + " are not a stack of " +
                         shape_str(cfg.seq_len, cfg.d_model) + " inputs");
    }
    const std::size_t batch = tokens.rows() / cfg.seq_len;
    if (tape) {
        *tape = GradientTape();
        tape->batch_ = batch;
        tape->blocks_.resize(model.layers.size());
    }
    Matrix x = tokens;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        x += mha_forward(model.layers[l], x, cfg.n_heads, cfg.seq_len, tape ? &tape->blocks_[l] : nullptr);
    }

    Matrix emb(batch, cfg.d_model);
    std::vector<double> norms(batch);
    const double inv_len = 1.0 / static_cast<double>(cfg.seq_len);
    for (std::size_t s = 0; s < batch; ++s) {
        auto e = emb.row(s);
        for (std::size_t t = 0; t < cfg.seq_len; ++t) {
            const auto tok = x.row(s * cfg.seq_len + t);
            for (std::size_t j = 0; j < cfg.d_model; ++j) e[j] += tok[j];
        }
        for (double& v : e) v *= inv_len;
        norms[s] = norm2(e);
        if (!(norms[s] > 0.0) || !std::isfinite(norms[s])) {
            throw NumericError("degenerate input: pooled embedding " + std::to_string(s) + " has zero norm");
        }
        for (double& v : e) v /= norms[s];
    }
    if (tape) {
        tape->pooled_norm_ = std::move(norms);
        tape->embeddings_ = emb;
    }
    return emb;
}

std::vector<double> encode(const MiniEncoder& model, const Matrix& tokens) {
    if (tokens.rows() != model.config.seq_len) throw ShapeError("encode expects exactly one sequence");
    const Matrix e = encode_batch(model, tokens);
    return {e.data().begin(), e.data().end()};
}

EncoderGrads backward(const MiniEncoder& model, GradientTape& tape, const Matrix& d_embeddings) {
    if (tape.consumed_) throw std::logic_error("gradient tape already consumed");
    if (tape.blocks_.size() != model.layers.size()) throw std::logic_error("tape does not match model");
    const EncoderConfig& cfg = model.config;
    if (d_embeddings.rows() != tape.batch_ || d_embeddings.cols() != cfg.d_model) {
        throw ShapeError("embedding gradient " + shape_str(d_embeddings.rows(), d_embeddings.cols()) +
                         " does not match tape batch " + shape_str(tape.batch_, cfg.d_model));
    }
    tape.consumed_ = true;

    // normalization, then mean pooling
    Matrix dx(tape.batch_ * cfg.seq_len, cfg.d_model);
    const double inv_len = 1.0 / static_cast<double>(cfg.seq_len);
    for (std::size_t s = 0; s < tape.batch_; ++s) {
        const auto e = tape.embeddings_.row(s);
        const auto de = d_embeddings.row(s);
        const double proj = dot(e, de);
        for (std::size_t t = 0; t < cfg.seq_len; ++t) {
            auto row = dx.row(s * cfg.seq_len + t);
            for (std::size_t j = 0; j < cfg.d_model; ++j) {
                row[j] = (de[j] - e[j] * proj) / tape.pooled_norm_[s] * inv_len;
            }
        }
    }

    EncoderGrads grads;
    grads.adapter.resize(model.layers.size());
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        MhaGrad g = mha_backward(model.layers[l], tape.blocks_[l], dx, cfg.n_heads, cfg.seq_len);
        dx += g.dx;
        grads.adapter[l] = std::move(g.adapter);
    }
    grads.d_input = std::move(dx);
    tape.blocks_.clear();
    return grads;
}

Matrix logits(const ClassifierHead& head, const Matrix& embeddings) {
    return (1.0 / head.temperature) * matmul_bt(embeddings, head.class_embeddings);
}

std::vector<double> logits(const ClassifierHead& head, std::span<const double> embedding) {
    const Matrix e(1, embedding.size(), std::vector<double>(embedding.begin(), embedding.end()));
    const Matrix s = logits(head, e);
    return {s.data().begin(), s.data().end()};
}

Matrix logits_backward(const ClassifierHead& head, const Matrix& d_logits) {
    return (1.0 / head.temperature) * matmul(d_logits, head.class_embeddings);
}

std::vector<int> predict(const Matrix& scores) {
    std::vector<int> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

void attach_adapters(MiniEncoder& model, const AdapterPlacement& placement, Method method, std::size_t rank,
                     std::size_t principal_dim, double eta, RandomSource& rng) {
    if (placement.visual.size() > model.layers.size()) {
        throw RangeError("adapter placement names more layers than the encoder has");
    }
    for (const auto& flags : placement.textual)
        for (bool f : flags)
            if (f) throw RangeError("the textual tower is a frozen embedding table and cannot take adapters");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Projection p : kProjections) {
            if (!placement.selects(l, p)) continue;
            const auto idx = static_cast<std::size_t>(p);
            const Matrix& w = model.layers[l].weight[idx];
            if (method == Method::lora) {
                model.layers[l].adapter[idx] = init_lora(w.cols(), w.rows(), rank, eta, rng);
            } else {
                model.layers[l].adapter[idx] = init_comp(split_weight(w, principal_dim), rank, eta, rng);
            }
        }
    }
}

void clear_adapters(MiniEncoder& model) {
    for (auto& layer : model.layers)
        for (auto& ad : layer.adapter) ad = std::monostate{};
}

void merge_adapters(MiniEncoder& model) {
    for (auto& layer : model.layers) {
        for (std::size_t p = 0; p < 4; ++p) {
            layer.weight[p] = merge(layer.weight[p], layer.adapter[p]);
            layer.adapter[p] = std::monostate{};
        }
    }
}

std::vector<Matrix*> trainable_parameters(MiniEncoder& model, bool include_a) {
    std::vector<Matrix*> out;
    for (auto& layer : model.layers) {
        for (auto& ad : layer.adapter) {
            if (auto* l = std::get_if<LoraAdapter>(&ad)) {
                if (include_a) out.push_back(&l->a);
                out.push_back(&l->b);
            } else if (auto* c = std::get_if<CompLoraAdapter>(&ad)) {
                if (include_a) out.push_back(&c->a);
                out.push_back(&c->b);
            }
        }
    }
    return out;
}

std::vector<Matrix> flatten_gradients(const MiniEncoder& model, const EncoderGrads& grads, bool include_a) {
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (std::size_t p = 0; p < 4; ++p) {
            if (!has_adapter(model.layers[l].adapter[p])) continue;
            const auto& g = grads.adapter.at(l)[p];
            if (!g) throw std::logic_error("missing gradient for an attached adapter");
            if (include_a) out.push_back(g->da);
            out.push_back(g->db);
        }
    }
    return out;
}

std::size_t learnable_parameter_count(const MiniEncoder& model) {
    std::size_t n = 0;
    for (const auto& layer : model.layers)
        for (const auto& ad : layer.adapter) n += param_count(ad).learnable;
    return n;
}

void store_model(Checkpoint& ckpt, const MiniEncoder& model, const ClassifierHead* head) {
    ckpt.scalars["config.d_model"] = static_cast<double>(model.config.d_model);
    ckpt.scalars["config.n_heads"] = static_cast<double>(model.config.n_heads);
    ckpt.scalars["config.n_layers"] = static_cast<double>(model.config.n_layers);
    ckpt.scalars["config.seq_len"] = static_cast<double>(model.config.seq_len);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Projection p : kProjections) {
            const std::string name = "layer" + std::to_string(l) + "." + to_string(p);
            ckpt.tensors[name + ".weight"] = model.layers[l].w(p);
            store_adapter(ckpt, name + ".adapter", model.layers[l].ad(p));
        }
    }
    if (head) {
        ckpt.tensors["head.class_embeddings"] = head->class_embeddings;
        ckpt.scalars["head.temperature"] = head->temperature;
    }
}

MiniEncoder load_model(const Checkpoint& ckpt) {
    MiniEncoder m;
    m.config.d_model = static_cast<std::size_t>(ckpt.scalar("config.d_model"));
    m.config.n_heads = static_cast<std::size_t>(ckpt.scalar("config.n_heads"));
    m.config.n_layers = static_cast<std::size_t>(ckpt.scalar("config.n_layers"));
    m.config.seq_len = static_cast<std::size_t>(ckpt.scalar("config.seq_len"));
    m.config.validate();
    for (std::size_t l = 0; l < m.config.n_layers; ++l) {
        AttentionLayer layer;
        for (Projection p : kProjections) {
            const std::string name = "layer" + std::to_string(l) + "." + to_string(p);
            const auto idx = static_cast<std::size_t>(p);
            layer.weight[idx] = ckpt.tensor(name + ".weight");
            if (layer.weight[idx].rows() != m.config.d_model || layer.weight[idx].cols() != m.config.d_model) {
                throw ShapeError("checkpoint weight " + name + " does not match d_model");
            }
            layer.adapter[idx] = load_adapter(ckpt, name + ".adapter");
            check_adapter_shape(layer.adapter[idx], m.config.d_model, m.config.d_model);
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::optional<ClassifierHead> load_head(const Checkpoint& ckpt) {
    if (!ckpt.tensors.contains("head.class_embeddings")) return std::nullopt;
    return ClassifierHead{ckpt.tensor("head.class_embeddings"), ckpt.scalar("head.temperature")};
}

}  // namespace complora
