#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "complora/adapters.hpp"
#include "complora/checkpoint.hpp"
#include "complora/grad.hpp"
#include "complora/matrix.hpp"
#include "complora/random.hpp"

namespace complora {

struct EncoderConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t seq_len = 8;

    std::size_t head_dim() const { return d_model / n_heads; }
    /// Throws RangeError unless all counts are >= 1 and n_heads divides d_model.
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

/// One multi-head attention block. Weights are d_model x d_model in
/// (d_out x d_in) orientation and applied as x W^T to row tokens; the
/// projections carry no bias.
struct AttentionLayer {
    std::array<Matrix, 4> weight;  // indexed by Projection
    std::array<Adapter, 4> adapter;

    const Matrix& w(Projection p) const { return weight[static_cast<std::size_t>(p)]; }
    const Adapter& ad(Projection p) const { return adapter[static_cast<std::size_t>(p)]; }
};

/// Stack of attention blocks with residual connections:
///   x_{l+1} = x_l + MHA_l(x_l),
/// followed by mean pooling over tokens and unit normalization.
struct MiniEncoder {
    EncoderConfig config;
    std::vector<AttentionLayer> layers;

    /// Random N(0, scale^2 / d_model) weights, no adapters.
    static MiniEncoder random(const EncoderConfig& config, double scale, RandomSource& rng);

    /// FNV-1a over the bit patterns of every frozen weight and projection.
    std::uint64_t frozen_checksum() const;
};

/// Frozen class-embedding table standing in for the text tower.
struct ClassifierHead {
    Matrix class_embeddings;  // n_classes x d_model, unit rows
    double temperature = 0.05;

    std::size_t n_classes() const { return class_embeddings.rows(); }
};

/// Unit-normalizes every row. Throws NumericError on a zero row.
ClassifierHead make_head(Matrix class_embeddings, double temperature);

struct MhaCache {
    std::array<LinearCache, 4> proj;
    Matrix q, k, v;
    std::vector<Matrix> attn;  // softmax matrices, index sample * n_heads + head
    Matrix concat;
};

/// Multi-head scaled dot-product attention over row tokens. `x` stacks
/// whole sequences of `seq_len` tokens (0 means one sequence of x.rows()).
/// Scores are scaled by 1/sqrt(head_dim).
Matrix mha_forward(const AttentionLayer& layer, const Matrix& x, std::size_t n_heads, std::size_t seq_len = 0,
                   MhaCache* cache = nullptr);

struct MhaGrad {
    Matrix dx;
    std::array<std::optional<AdapterGrad>, 4> adapter;
};

MhaGrad mha_backward(const AttentionLayer& layer, const MhaCache& cache, const Matrix& dy, std::size_t n_heads,
                     std::size_t seq_len);

struct EncoderGrads {
    /// Per layer, per projection; set only where an adapter is attached.
    std::vector<std::array<std::optional<AdapterGrad>, 4>> adapter;
    Matrix d_input;
};

/// Record of one batched forward pass, consumed by backward().
class GradientTape {
public:
    std::size_t batch() const { return batch_; }
    bool consumed() const { return consumed_; }
    const Matrix& embeddings() const { return embeddings_; }

private:
    friend Matrix encode_batch(const MiniEncoder&, const Matrix&, GradientTape*);
    friend EncoderGrads backward(const MiniEncoder&, GradientTape&, const Matrix&);

    std::size_t batch_ = 0;
    std::vector<MhaCache> blocks_;
    std::vector<double> pooled_norm_;
    Matrix embeddings_;
    bool consumed_ = false;
};

/// Embeddings (batch x d_model, unit rows) of `tokens`, which stacks
/// batch * seq_len rows. Throws NumericError on a zero pooled vector.
Matrix encode_batch(const MiniEncoder& model, const Matrix& tokens, GradientTape* tape = nullptr);

/// Unit-norm embedding of a single seq_len x d_model input.
std::vector<double> encode(const MiniEncoder& model, const Matrix& tokens);

/// Reverse pass for an upstream gradient on the embeddings. Consumes the
/// tape; a second call throws std::logic_error.
EncoderGrads backward(const MiniEncoder& model, GradientTape& tape, const Matrix& d_embeddings);

/// Temperature-scaled cosine scores (embeddings are unit rows).
Matrix logits(const ClassifierHead& head, const Matrix& embeddings);
std::vector<double> logits(const ClassifierHead& head, std::span<const double> embedding);

/// d loss / d embeddings given d loss / d logits.
Matrix logits_backward(const ClassifierHead& head, const Matrix& d_logits);

/// Argmax per row with ties resolved to the lowest class index.
std::vector<int> predict(const Matrix& scores);

/// Attaches fresh adapters to every placed projection. For comp_lora each
/// projection's weight is decomposed and split at `principal_dim`.
void attach_adapters(MiniEncoder& model, const AdapterPlacement& placement, Method method, std::size_t rank,
                     std::size_t principal_dim, double eta, RandomSource& rng);

void clear_adapters(MiniEncoder& model);

/// Folds every adapter into its weight and removes it.
void merge_adapters(MiniEncoder& model);

/// Pointers to trainable matrices in a fixed order (layer, projection, a
/// then b) and gradients flattened in the same order.
std::vector<Matrix*> trainable_parameters(MiniEncoder& model, bool include_a = true);
std::vector<Matrix> flatten_gradients(const MiniEncoder& model, const EncoderGrads& grads, bool include_a = true);

std::size_t learnable_parameter_count(const MiniEncoder& model);

void store_model(Checkpoint& ckpt, const MiniEncoder& model, const ClassifierHead* head = nullptr);
MiniEncoder load_model(const Checkpoint& ckpt);
std::optional<ClassifierHead> load_head(const Checkpoint& ckpt);

}  // namespace complora
