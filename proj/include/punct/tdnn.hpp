#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "punct/dataset.hpp"
#include "punct/fusion.hpp"
#include "punct/types.hpp"

namespace punct {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Valid (no-padding) convolution, stride 1: output length for a given kernel
// and dilation. Throws NonPositiveOutput when nothing remains.
int conv_out_len(int len_in, int kernel, int dilation);

struct ConvSpec {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;
    int dilation = 1;
};

// Architecture of the trainable network: per-frame fusion layer, a stack of
// dilated 1-D convolutions (each followed by ReLU then batch norm), and a
// two-linear head shared across the final 4 channels.
struct TdnnConfig {
    // The standard stack: channels 256->128,128,128->64,64,64->32,32->16,
    // 16->4 with kernels 9,9,5,5,7,7,5 and dilations 1,2,1,2,1,2,1.
    static std::vector<ConvSpec> default_convs();

    int input_dim = kFusedDim;  // rows of the raw window
    int d_fused = 256;          // fusion layer output channels
    std::vector<ConvSpec> convs = default_convs();
    int head_hidden = 32;
    int window_len = kWindowFrames;
    double batchnorm_eps = 1e-5;
    double batchnorm_momentum = 0.1;

    static TdnnConfig standard() { return {}; }

    // Same stack shape scaled down for reduced embedding widths (fast test
    // and fixture profile).
    static TdnnConfig reduced(int input_dim, int d_fused = 16, int head_hidden = 8);

    // Throws ConfigError on inconsistent channel wiring, a non-4 final
    // channel count, increasing channel counts, or conv arithmetic that
    // exhausts the window.
    void validate() const;

    // Window length after the whole conv stack (243 for the standard stack).
    int conv_output_len() const;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ConvLayer {
    int in_ch = 0, out_ch = 0, kernel = 1, dilation = 1;
    std::vector<double> weight;  // [out][in][kernel], row-major
    std::vector<double> bias;    // [out]
};

struct BatchNormLayer {
    int channels = 0;
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
};

struct LinearLayer {
    int out_dim = 0, in_dim = 0;
    std::vector<double> weight;  // [out][in], row-major
    std::vector<double> bias;    // [out]
};

enum class Mode { Train, Eval };

struct TdnnModel {
    TdnnConfig cfg;
    FusionLayer fusion;
    std::vector<ConvLayer> convs;
    std::vector<BatchNormLayer> bns;
    LinearLayer head1;  // conv_output_len -> head_hidden, shared across channels
    LinearLayer head2;  // head_hidden -> 1, shared across channels
    Mode mode = Mode::Eval;
    uint64_t revision = 0;  // bumped by parameter updates; guards stale caches

    // Fan-in-scaled uniform weights, zero biases, identity batch norm.
    static TdnnModel init(const TdnnConfig& cfg, uint64_t seed);
};

// References to every trainable tensor, in the fixed order used by
// gradients, the optimizer, and checkpoints.
struct TensorRef {
    std::string name;
    std::vector<double>* tensor;
};
struct ConstTensorRef {
    std::string name;
    const std::vector<double>* tensor;
};
std::vector<TensorRef> parameter_tensors(TdnnModel& model);
std::vector<ConstTensorRef> parameter_tensors(const TdnnModel& model);

struct ParamCount {
    std::vector<std::pair<std::string, int64_t>> per_layer;
    int64_t total = 0;
};
// Trainable parameters only (running statistics excluded).
ParamCount count_parameters(const TdnnModel& model);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct BatchCache {
    uint64_t model_revision = 0;
    Mode mode = Mode::Eval;
    int batch = 0;
    std::vector<const MatrixF*> windows;

    std::vector<std::vector<double>> fused;  // fusion output per example
    struct LayerCache {
        std::vector<std::vector<double>> conv_out;  // pre-ReLU
        std::vector<std::vector<double>> xhat;      // batch-norm normalized
        std::vector<std::vector<double>> bn_out;    // layer output
        std::vector<double> mean, inv_std;          // statistics used
    };
    std::vector<LayerCache> layers;
    std::vector<std::vector<double>> head_hidden;  // per example, 4*head_hidden
    std::vector<std::array<double, 4>> logits;
    std::vector<std::array<double, 4>> probs;
};

struct ForwardResult {
    std::vector<std::array<double, 4>> probs;
    BatchCache cache;
};

// Runs the pipeline fusion -> [conv -> ReLU -> batchnorm] x L -> shared head
// -> softmax for a batch of windows. Train mode normalizes with batch
// statistics (over batch x time per channel) and updates running statistics;
// Eval mode uses running statistics, making each example independent of the
// batch. Throws ShapeMismatch on wrong window shapes and NonFiniteActivation
// if the network blows up.
ForwardResult forward_batch(TdnnModel& model, const std::vector<const MatrixF*>& windows);

// Single-window convenience wrapper (batch of one).
ForwardResult forward(TdnnModel& model, const MatrixF& window);

// Cross-entropy with the probability floored at 1e-12.
double loss(const std::array<double, 4>& probs, PunctClass label);

// Numerically stable softmax, and the closed-form gradient of
// loss(softmax(logits), label) with respect to the logits.
std::array<double, 4> softmax4(const std::array<double, 4>& logits);
std::array<double, 4> softmax_ce_dlogits(const std::array<double, 4>& probs, PunctClass label);

// Gradient tensors, ordered and shaped like parameter_tensors().
struct Gradients {
    std::vector<std::vector<double>> tensors;
};

// Gradients of the summed cross-entropy of the cached batch with respect to
// every trainable tensor (fusion, convs, batch-norm gamma/beta, head). The
// batch-statistics path of batch norm is differentiated exactly. The cache
// must come from a Train-mode forward on the current model revision, else
// StaleCache.
Gradients backward_batch(const TdnnModel& model, const BatchCache& cache,
                         const std::vector<PunctClass>& labels);

// Single-label convenience wrapper for a batch-of-one cache.
Gradients backward(const TdnnModel& model, const BatchCache& cache, PunctClass label);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct OptimizerState {
    double learning_rate = 1e-5;
    double momentum = 0.9;
    std::vector<std::vector<double>> velocity;  // mirrors parameter tensors

    static OptimizerState init(const TdnnModel& model, double learning_rate = 1e-5,
                               double momentum = 0.9);
};

// v <- momentum*v + g, p <- p - lr*v, with g = grads/batch_size. Pass the
// number of examples the gradients were summed over (1 if already averaged).
void sgd_step(TdnnModel& model, const Gradients& grads, OptimizerState& opt, int batch_size);

struct TrainOptions {
    int epochs = 1;
    int batch_size = 32;
    int64_t epoch_size = 0;  // 0 -> training set size
    SampleMode sample_mode = SampleMode::Balanced;
    uint64_t sampler_seed = 0;
    double stop_accuracy = -1.0;  // <=0 disables early stopping
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    bool has_val = false;
    double val_overall_f1 = 0.0;
};

struct TrainingLog {
    std::vector<EpochStats> epochs;
};

// Runs epochs x (epoch_size / batch_size) SGD steps over class-rebalanced
// samples. Deterministic given model/optimizer state and seeds. Computes
// validation overall F1 per epoch when a validation set is supplied.
TrainingLog train(TdnnModel& model, OptimizerState& opt,
                  const std::vector<WindowExample>& train_set, const TrainOptions& opts,
                  const std::vector<WindowExample>* val_set = nullptr,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// Argmax with ties broken toward the lowest class code.
PunctClass argmax_class(const std::array<double, 4>& probs);

// Eval-mode predictions for a set of windows (batched internally).
std::vector<PunctClass> predict_labels(TdnnModel& model,
                                       const std::vector<WindowExample>& examples,
                                       int batch_size = 32);

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

// Versioned little-endian binary, value-exact for all tensors including
// running statistics and optimizer velocities. Layout documented in the
// README. Throws VersionMismatch / CorruptCheckpoint.
void save_checkpoint(const TdnnModel& model, const OptimizerState& opt,
                     const std::filesystem::path& path);
std::pair<TdnnModel, OptimizerState> load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

// Worker threads for batch-internal parallelism. Affects wall time only;
// outputs are bit-identical for any setting.
void set_num_threads(int n);
int num_threads();

}  // namespace punct
