#include "punct/tdnn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "punct/detail/bytes.hpp"
#include "punct/ensemble.hpp"
#include "punct/rng.hpp"

namespace punct {

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

namespace {

std::atomic<int> g_num_threads{1};

// Runs fn(i) for i in [0, n). Work items write only to disjoint buffers, so
// any thread count yields identical results; reductions stay with callers.
void parallel_for(int n, const std::function<void(int)>& fn) {
    int threads = std::min(g_num_threads.load(), n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (std::thread& th : pool) th.join();
}

}  // namespace

void set_num_threads(int n) { g_num_threads.store(std::max(1, n)); }
int num_threads() { return g_num_threads.load(); }

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

int conv_out_len(int len_in, int kernel, int dilation) {
    int span = (kernel - 1) * dilation;
    if (len_in <= span)
        throw NonPositiveOutput("convolution consumes the whole input: length " +
                                std::to_string(len_in) + " with kernel " + std::to_string(kernel) +
                                " dilation " + std::to_string(dilation));
    return len_in - span;
}

std::vector<ConvSpec> TdnnConfig::default_convs() {
    return {{256, 128, 9, 1}, {128, 128, 9, 2}, {128, 64, 5, 1}, {64, 64, 5, 2},
            {64, 32, 7, 1},   {32, 16, 7, 2},   {16, 4, 5, 1}};
}

TdnnConfig TdnnConfig::reduced(int input_dim, int d_fused, int head_hidden) {
    TdnnConfig cfg;
    cfg.input_dim = input_dim;
    cfg.d_fused = d_fused;
    int mid = std::max(4, d_fused / 2);
    cfg.convs = {{d_fused, mid, 9, 1}, {mid, mid, 9, 2}, {mid, mid, 5, 1}, {mid, mid, 5, 2},
                 {mid, mid, 7, 1},     {mid, mid, 7, 2}, {mid, 4, 5, 1}};
    cfg.head_hidden = head_hidden;
    return cfg;
}

void TdnnConfig::validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be positive");
    if (d_fused < 1) throw ConfigError("d_fused must be positive");
    if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
    if (window_len < 1) throw ConfigError("window_len must be positive");
    if (batchnorm_eps <= 0.0) throw ConfigError("batchnorm_eps must be positive");
    if (batchnorm_momentum < 0.0 || batchnorm_momentum > 1.0)
        throw ConfigError("batchnorm_momentum must lie in [0,1]");
    if (convs.empty()) throw ConfigError("at least one convolution layer required");

    int prev_out = d_fused;
    for (size_t l = 0; l < convs.size(); ++l) {
        const ConvSpec& c = convs[l];
        std::string layer = "conv layer " + std::to_string(l);
        if (c.kernel < 1 || c.dilation < 1) throw ConfigError(layer + ": bad kernel/dilation");
        if (c.in_ch != prev_out)
            throw ConfigError(layer + ": input channels " + std::to_string(c.in_ch) +
                              " do not match previous output " + std::to_string(prev_out));
        if (c.out_ch < 1) throw ConfigError(layer + ": output channels must be positive");
        if (c.out_ch > c.in_ch)
            throw ConfigError(layer + ": channel counts must be non-increasing");
        prev_out = c.out_ch;
    }
    if (convs.back().out_ch != kNumClasses)
        throw ConfigError("last conv layer must have " + std::to_string(kNumClasses) +
                          " output channels (one per class)");
    conv_output_len();  // throws NonPositiveOutput if the stack exhausts the window
}

int TdnnConfig::conv_output_len() const {
    int len = window_len;
    for (const ConvSpec& c : convs) len = conv_out_len(len, c.kernel, c.dilation);
    return len;
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

namespace {

void fill_uniform(std::vector<double>& w, int fan_in, uint64_t seed) {
    SplitMix64 rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = (2.0 * rng.next_unit() - 1.0) * bound;
}

}  // namespace

TdnnModel TdnnModel::init(const TdnnConfig& cfg, uint64_t seed) {
    cfg.validate();
    TdnnModel m;
    m.cfg = cfg;
    m.fusion = FusionLayer(cfg.d_fused, cfg.input_dim);
    fill_uniform(m.fusion.weight, cfg.input_dim, SplitMix64::derive(seed, 0));

    uint64_t stream = 1;
    for (const ConvSpec& spec : cfg.convs) {
        ConvLayer conv;
        conv.in_ch = spec.in_ch;
        conv.out_ch = spec.out_ch;
        conv.kernel = spec.kernel;
        conv.dilation = spec.dilation;
        conv.weight.assign(static_cast<size_t>(spec.out_ch) * spec.in_ch * spec.kernel, 0.0);
        conv.bias.assign(spec.out_ch, 0.0);
        fill_uniform(conv.weight, spec.in_ch * spec.kernel, SplitMix64::derive(seed, stream++));
        m.convs.push_back(std::move(conv));

        BatchNormLayer bn;
        bn.channels = spec.out_ch;
        bn.gamma.assign(spec.out_ch, 1.0);
        bn.beta.assign(spec.out_ch, 0.0);
        bn.running_mean.assign(spec.out_ch, 0.0);
        bn.running_var.assign(spec.out_ch, 1.0);
        m.bns.push_back(std::move(bn));
    }

    int conv_len = cfg.conv_output_len();
    m.head1.out_dim = cfg.head_hidden;
    m.head1.in_dim = conv_len;
    m.head1.weight.assign(static_cast<size_t>(cfg.head_hidden) * conv_len, 0.0);
    m.head1.bias.assign(cfg.head_hidden, 0.0);
    fill_uniform(m.head1.weight, conv_len, SplitMix64::derive(seed, stream++));

    m.head2.out_dim = 1;
    m.head2.in_dim = cfg.head_hidden;
    m.head2.weight.assign(cfg.head_hidden, 0.0);
    m.head2.bias.assign(1, 0.0);
    fill_uniform(m.head2.weight, cfg.head_hidden, SplitMix64::derive(seed, stream++));
    return m;
}

namespace {

template <typename Ref, typename Model>
std::vector<Ref> collect_tensors(Model& model) {
    std::vector<Ref> refs;
    refs.push_back({"fusion.weight", &model.fusion.weight});
    refs.push_back({"fusion.bias", &model.fusion.bias});
    for (size_t l = 0; l < model.convs.size(); ++l) {
        std::string p = "conv" + std::to_string(l + 1);
        refs.push_back({p + ".weight", &model.convs[l].weight});
        refs.push_back({p + ".bias", &model.convs[l].bias});
        refs.push_back({"bn" + std::to_string(l + 1) + ".gamma", &model.bns[l].gamma});
        refs.push_back({"bn" + std::to_string(l + 1) + ".beta", &model.bns[l].beta});
    }
    refs.push_back({"head1.weight", &model.head1.weight});
    refs.push_back({"head1.bias", &model.head1.bias});
    refs.push_back({"head2.weight", &model.head2.weight});
    refs.push_back({"head2.bias", &model.head2.bias});
    return refs;
}

}  // namespace

std::vector<TensorRef> parameter_tensors(TdnnModel& model) {
    return collect_tensors<TensorRef>(model);
}

std::vector<ConstTensorRef> parameter_tensors(const TdnnModel& model) {
    return collect_tensors<ConstTensorRef>(model);
}

ParamCount count_parameters(const TdnnModel& model) {
    ParamCount pc;
    auto add = [&pc](const std::string& name, int64_t n) {
        pc.per_layer.emplace_back(name, n);
        pc.total += n;
    };
    add("fusion", static_cast<int64_t>(model.fusion.weight.size() + model.fusion.bias.size()));
    for (size_t l = 0; l < model.convs.size(); ++l) {
        const ConvLayer& c = model.convs[l];
        add("conv" + std::to_string(l + 1),
            static_cast<int64_t>(c.weight.size() + c.bias.size()));
        const BatchNormLayer& bn = model.bns[l];
        add("bn" + std::to_string(l + 1),
            static_cast<int64_t>(bn.gamma.size() + bn.beta.size()));
    }
    add("head1", static_cast<int64_t>(model.head1.weight.size() + model.head1.bias.size()));
    add("head2", static_cast<int64_t>(model.head2.weight.size() + model.head2.bias.size()));
    return pc;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

// out[o][t] = bias[o] + sum_i sum_k w[o][i][k] * in[i][t + k*dilation]
void conv1d_forward(const ConvLayer& layer, const double* in, int len_in, double* out,
                    int len_out) {
    for (int o = 0; o < layer.out_ch; ++o) {
        double* yrow = out + static_cast<size_t>(o) * len_out;
        std::fill(yrow, yrow + len_out, layer.bias[o]);
        const double* wrow = layer.weight.data() + static_cast<size_t>(o) * layer.in_ch * layer.kernel;
        for (int i = 0; i < layer.in_ch; ++i) {
            const double* xrow = in + static_cast<size_t>(i) * len_in;
            for (int k = 0; k < layer.kernel; ++k) {
                double w = wrow[static_cast<size_t>(i) * layer.kernel + k];
                const double* xs = xrow + static_cast<size_t>(k) * layer.dilation;
                for (int t = 0; t < len_out; ++t) yrow[t] += w * xs[t];
            }
        }
    }
}

void fusion_forward(const FusionLayer& layer, const MatrixF& window, double* out, int len) {
    // out laid out channel-major: out[o*len + t]
    for (int t = 0; t < len; ++t) {
        const float* x = window.col(t);
        for (int o = 0; o < layer.out_dim; ++o) {
            const double* w = layer.weight.data() + static_cast<size_t>(o) * layer.in_dim;
            double acc = layer.bias[o];
            for (int i = 0; i < layer.in_dim; ++i) acc += w[i] * static_cast<double>(x[i]);
            out[static_cast<size_t>(o) * len + t] = acc;
        }
    }
}

}  // namespace

std::array<double, 4> softmax4(const std::array<double, 4>& logits) {
    double mx = std::max(std::max(logits[0], logits[1]), std::max(logits[2], logits[3]));
    std::array<double, 4> e{};
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
        e[k] = std::exp(logits[k] - mx);
        sum += e[k];
    }
    for (int k = 0; k < 4; ++k) e[k] /= sum;
    return e;
}

double loss(const std::array<double, 4>& probs, PunctClass label) {
    double p = std::max(probs[punct_code(label)], 1e-12);
    return -std::log(p);
}

std::array<double, 4> softmax_ce_dlogits(const std::array<double, 4>& probs, PunctClass label) {
    std::array<double, 4> d = probs;
    d[punct_code(label)] -= 1.0;
    return d;
}

PunctClass argmax_class(const std::array<double, 4>& probs) {
    int best = 0;
    for (int k = 1; k < 4; ++k)
        if (probs[k] > probs[best]) best = k;
    return punct_from_code(best);
}

ForwardResult forward_batch(TdnnModel& model, const std::vector<const MatrixF*>& windows) {
    const TdnnConfig& cfg = model.cfg;
    const int batch = static_cast<int>(windows.size());
    if (batch == 0) throw EmptyDataset("forward_batch needs at least one window");
    for (int b = 0; b < batch; ++b) {
        const MatrixF* w = windows[b];
        if (w == nullptr || w->rows != cfg.input_dim || w->cols != cfg.window_len)
            throw ShapeMismatch("window " + std::to_string(b) + " must be " +
                                std::to_string(cfg.input_dim) + "x" +
                                std::to_string(cfg.window_len));
    }

    ForwardResult result;
    BatchCache& cache = result.cache;
    cache.model_revision = model.revision;
    cache.mode = model.mode;
    cache.batch = batch;
    cache.windows = windows;

    const int len0 = cfg.window_len;
    cache.fused.assign(batch, std::vector<double>(static_cast<size_t>(cfg.d_fused) * len0));
    parallel_for(batch, [&](int b) {
        fusion_forward(model.fusion, *windows[b], cache.fused[b].data(), len0);
    });

    const size_t num_layers = model.convs.size();
    cache.layers.resize(num_layers);
    int len_in = len0;
    for (size_t l = 0; l < num_layers; ++l) {
        const ConvLayer& conv = model.convs[l];
        BatchNormLayer& bn = model.bns[l];
        const int len_out = conv_out_len(len_in, conv.kernel, conv.dilation);
        const int ch = conv.out_ch;
        BatchCache::LayerCache& lc = cache.layers[l];
        lc.conv_out.assign(batch, std::vector<double>(static_cast<size_t>(ch) * len_out));
        lc.xhat.assign(batch, std::vector<double>(static_cast<size_t>(ch) * len_out));
        lc.bn_out.assign(batch, std::vector<double>(static_cast<size_t>(ch) * len_out));

        const int cur_len_in = len_in;
        parallel_for(batch, [&, l, cur_len_in, len_out](int b) {
            const double* in = l == 0 ? cache.fused[b].data() : cache.layers[l - 1].bn_out[b].data();
            conv1d_forward(conv, in, cur_len_in, lc.conv_out[b].data(), len_out);
        });

        // Catch blow-ups where they happen; ReLU would otherwise silently
        // squash NaN to zero downstream.
        for (int b = 0; b < batch; ++b)
            for (double z : lc.conv_out[b])
                if (!std::isfinite(z))
                    throw NonFiniteActivation("non-finite activation in conv layer " +
                                              std::to_string(l + 1) + ", batch element " +
                                              std::to_string(b));

        // Batch statistics over batch x time per channel (Train), or running
        // statistics (Eval). ReLU precedes normalization.
        lc.mean.assign(ch, 0.0);
        lc.inv_std.assign(ch, 0.0);
        const double inv_n = 1.0 / (static_cast<double>(batch) * len_out);
        if (model.mode == Mode::Train) {
            for (int c = 0; c < ch; ++c) {
                double sum = 0.0, sum_sq = 0.0;
                for (int b = 0; b < batch; ++b) {
                    const double* z = lc.conv_out[b].data() + static_cast<size_t>(c) * len_out;
                    for (int t = 0; t < len_out; ++t) {
                        double r = z[t] > 0.0 ? z[t] : 0.0;
                        sum += r;
                        sum_sq += r * r;
                    }
                }
                double mean = sum * inv_n;
                double var = std::max(0.0, sum_sq * inv_n - mean * mean);
                lc.mean[c] = mean;
                lc.inv_std[c] = 1.0 / std::sqrt(var + cfg.batchnorm_eps);
                bn.running_mean[c] =
                    (1.0 - cfg.batchnorm_momentum) * bn.running_mean[c] + cfg.batchnorm_momentum * mean;
                bn.running_var[c] =
                    (1.0 - cfg.batchnorm_momentum) * bn.running_var[c] + cfg.batchnorm_momentum * var;
            }
        } else {
            for (int c = 0; c < ch; ++c) {
                lc.mean[c] = bn.running_mean[c];
                lc.inv_std[c] = 1.0 / std::sqrt(bn.running_var[c] + cfg.batchnorm_eps);
            }
        }

        parallel_for(batch, [&, len_out](int b) {
            for (int c = 0; c < ch; ++c) {
                const double* z = lc.conv_out[b].data() + static_cast<size_t>(c) * len_out;
                double* xh = lc.xhat[b].data() + static_cast<size_t>(c) * len_out;
                double* y = lc.bn_out[b].data() + static_cast<size_t>(c) * len_out;
                const double mean = lc.mean[c], inv_std = lc.inv_std[c];
                const double gamma = bn.gamma[c], beta = bn.beta[c];
                for (int t = 0; t < len_out; ++t) {
                    double r = z[t] > 0.0 ? z[t] : 0.0;
                    double v = (r - mean) * inv_std;
                    xh[t] = v;
                    y[t] = gamma * v + beta;
                }
            }
        });
        len_in = len_out;
    }

    // Shared two-linear head per channel: len -> head_hidden -> 1.
    const int conv_len = len_in;
    const int hh = cfg.head_hidden;
    cache.head_hidden.assign(batch, std::vector<double>(static_cast<size_t>(kNumClasses) * hh));
    cache.logits.assign(batch, {});
    cache.probs.assign(batch, {});
    parallel_for(batch, [&](int b) {
        const double* z = cache.layers.back().bn_out[b].data();
        double* hid = cache.head_hidden[b].data();
        std::array<double, 4> logits{};
        for (int c = 0; c < kNumClasses; ++c) {
            const double* zc = z + static_cast<size_t>(c) * conv_len;
            double* hc = hid + static_cast<size_t>(c) * hh;
            for (int o = 0; o < hh; ++o) {
                const double* w = model.head1.weight.data() + static_cast<size_t>(o) * conv_len;
                double acc = model.head1.bias[o];
                for (int t = 0; t < conv_len; ++t) acc += w[t] * zc[t];
                hc[o] = acc;
            }
            double acc = model.head2.bias[0];
            for (int o = 0; o < hh; ++o) acc += model.head2.weight[o] * hc[o];
            logits[c] = acc;
        }
        cache.logits[b] = logits;
        cache.probs[b] = softmax4(logits);
    });

    for (int b = 0; b < batch; ++b)
        for (int k = 0; k < 4; ++k)
            if (!std::isfinite(cache.probs[b][k]))
                throw NonFiniteActivation("non-finite network output for batch element " +
                                          std::to_string(b));

    result.probs = cache.probs;
    return result;
}

ForwardResult forward(TdnnModel& model, const MatrixF& window) {
    return forward_batch(model, {&window});
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

Gradients backward_batch(const TdnnModel& model, const BatchCache& cache,
                         const std::vector<PunctClass>& labels) {
    if (cache.mode != Mode::Train)
        throw StaleCache("backward requires a cache from a Train-mode forward");
    if (cache.model_revision != model.revision)
        throw StaleCache("cache is stale: model parameters changed since forward");
    if (static_cast<int>(labels.size()) != cache.batch)
        throw LengthMismatch("label count does not match cached batch size");

    const TdnnConfig& cfg = model.cfg;
    const int batch = cache.batch;
    const int conv_len = cfg.conv_output_len();
    const int hh = cfg.head_hidden;

    Gradients grads;
    for (const ConstTensorRef& ref : parameter_tensors(model))
        grads.tensors.emplace_back(ref.tensor->size(), 0.0);
    size_t idx = 0;
    std::vector<double>& d_fusion_w = grads.tensors[idx++];
    std::vector<double>& d_fusion_b = grads.tensors[idx++];
    std::vector<std::vector<double>*> d_conv_w, d_conv_b, d_gamma, d_beta;
    for (size_t l = 0; l < model.convs.size(); ++l) {
        d_conv_w.push_back(&grads.tensors[idx++]);
        d_conv_b.push_back(&grads.tensors[idx++]);
        d_gamma.push_back(&grads.tensors[idx++]);
        d_beta.push_back(&grads.tensors[idx++]);
    }
    std::vector<double>& d_head1_w = grads.tensors[idx++];
    std::vector<double>& d_head1_b = grads.tensors[idx++];
    std::vector<double>& d_head2_w = grads.tensors[idx++];
    std::vector<double>& d_head2_b = grads.tensors[idx++];

    // Head backward; d_z becomes the gradient at the last bn output.
    std::vector<std::vector<double>> d_out(batch,
                                           std::vector<double>(static_cast<size_t>(kNumClasses) * conv_len));
    for (int b = 0; b < batch; ++b) {
        std::array<double, 4> dlogits = softmax_ce_dlogits(cache.probs[b], labels[b]);
        const double* z = cache.layers.back().bn_out[b].data();
        const double* hid = cache.head_hidden[b].data();
        for (int c = 0; c < kNumClasses; ++c) {
            const double dl = dlogits[c];
            const double* hc = hid + static_cast<size_t>(c) * hh;
            const double* zc = z + static_cast<size_t>(c) * conv_len;
            double* dzc = d_out[b].data() + static_cast<size_t>(c) * conv_len;
            d_head2_b[0] += dl;
            for (int o = 0; o < hh; ++o) d_head2_w[o] += dl * hc[o];
            for (int o = 0; o < hh; ++o) {
                const double dh = dl * model.head2.weight[o];
                d_head1_b[o] += dh;
                double* dw1 = d_head1_w.data() + static_cast<size_t>(o) * conv_len;
                const double* w1 = model.head1.weight.data() + static_cast<size_t>(o) * conv_len;
                for (int t = 0; t < conv_len; ++t) {
                    dw1[t] += dh * zc[t];
                    dzc[t] += dh * w1[t];
                }
            }
        }
    }

    // Conv stack backward, last layer first.
    std::vector<int> lens(model.convs.size() + 1);
    lens[0] = cfg.window_len;
    for (size_t l = 0; l < model.convs.size(); ++l)
        lens[l + 1] = conv_out_len(lens[l], model.convs[l].kernel, model.convs[l].dilation);

    for (int l = static_cast<int>(model.convs.size()) - 1; l >= 0; --l) {
        const ConvLayer& conv = model.convs[l];
        const BatchNormLayer& bn = model.bns[l];
        const BatchCache::LayerCache& lc = cache.layers[l];
        const int len_out = lens[l + 1];
        const int len_in = lens[l];
        const int ch = conv.out_ch;
        const double n = static_cast<double>(batch) * len_out;

        // Batch-norm backward through the batch-statistics path:
        //   dr = gamma*inv_std * (dy - mean(dy) - xhat*mean(dy*xhat))
        std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < ch; ++c) {
                const double* dy = d_out[b].data() + static_cast<size_t>(c) * len_out;
                const double* xh = lc.xhat[b].data() + static_cast<size_t>(c) * len_out;
                double s1 = 0.0, s2 = 0.0;
                for (int t = 0; t < len_out; ++t) {
                    s1 += dy[t];
                    s2 += dy[t] * xh[t];
                }
                sum_dy[c] += s1;
                sum_dy_xhat[c] += s2;
            }
        for (int c = 0; c < ch; ++c) {
            (*d_beta[l])[c] += sum_dy[c];
            (*d_gamma[l])[c] += sum_dy_xhat[c];
        }

        // dz (through ReLU) replaces d_out in place.
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < ch; ++c) {
                double* dy = d_out[b].data() + static_cast<size_t>(c) * len_out;
                const double* xh = lc.xhat[b].data() + static_cast<size_t>(c) * len_out;
                const double* z = lc.conv_out[b].data() + static_cast<size_t>(c) * len_out;
                const double scale = bn.gamma[c] * lc.inv_std[c];
                const double mean_dy = sum_dy[c] / n;
                const double mean_dy_xhat = sum_dy_xhat[c] / n;
                for (int t = 0; t < len_out; ++t) {
                    double dr = scale * (dy[t] - mean_dy - xh[t] * mean_dy_xhat);
                    dy[t] = z[t] > 0.0 ? dr : 0.0;
                }
            }

        // Conv parameter gradients and input gradient.
        std::vector<std::vector<double>> d_in(batch,
                                              std::vector<double>(static_cast<size_t>(conv.in_ch) * len_in));
        for (int b = 0; b < batch; ++b) {
            const double* in =
                l == 0 ? cache.fused[b].data() : cache.layers[l - 1].bn_out[b].data();
            const double* dz = d_out[b].data();
            double* din = d_in[b].data();
            for (int o = 0; o < ch; ++o) {
                const double* dzrow = dz + static_cast<size_t>(o) * len_out;
                double bias_acc = 0.0;
                for (int t = 0; t < len_out; ++t) bias_acc += dzrow[t];
                (*d_conv_b[l])[o] += bias_acc;
                const size_t wbase = static_cast<size_t>(o) * conv.in_ch * conv.kernel;
                for (int i = 0; i < conv.in_ch; ++i) {
                    const double* xrow = in + static_cast<size_t>(i) * len_in;
                    double* dinrow = din + static_cast<size_t>(i) * len_in;
                    for (int k = 0; k < conv.kernel; ++k) {
                        const double* xs = xrow + static_cast<size_t>(k) * conv.dilation;
                        double* ds = dinrow + static_cast<size_t>(k) * conv.dilation;
                        const double w = conv.weight[wbase + static_cast<size_t>(i) * conv.kernel + k];
                        double w_acc = 0.0;
                        for (int t = 0; t < len_out; ++t) {
                            w_acc += dzrow[t] * xs[t];
                            ds[t] += w * dzrow[t];
                        }
                        (*d_conv_w[l])[wbase + static_cast<size_t>(i) * conv.kernel + k] += w_acc;
                    }
                }
            }
        }
        d_out = std::move(d_in);
    }

    // Fusion layer backward (input gradients are not needed).
    const int len0 = cfg.window_len;
    for (int b = 0; b < batch; ++b) {
        const MatrixF& win = *cache.windows[b];
        const double* dy = d_out[b].data();
        for (int o = 0; o < cfg.d_fused; ++o) {
            const double* dyrow = dy + static_cast<size_t>(o) * len0;
            double bias_acc = 0.0;
            double* dwrow = d_fusion_w.data() + static_cast<size_t>(o) * cfg.input_dim;
            for (int t = 0; t < len0; ++t) {
                const double d = dyrow[t];
                bias_acc += d;
                const float* x = win.col(t);
                for (int i = 0; i < cfg.input_dim; ++i) dwrow[i] += d * static_cast<double>(x[i]);
            }
            d_fusion_b[o] += bias_acc;
        }
    }

    return grads;
}

Gradients backward(const TdnnModel& model, const BatchCache& cache, PunctClass label) {
    return backward_batch(model, cache, std::vector<PunctClass>{label});
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

OptimizerState OptimizerState::init(const TdnnModel& model, double learning_rate,
                                    double momentum) {
    OptimizerState opt;
    opt.learning_rate = learning_rate;
    opt.momentum = momentum;
    for (const ConstTensorRef& ref : parameter_tensors(model))
        opt.velocity.emplace_back(ref.tensor->size(), 0.0);
    return opt;
}

void sgd_step(TdnnModel& model, const Gradients& grads, OptimizerState& opt, int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<TensorRef> params = parameter_tensors(model);
    if (grads.tensors.size() != params.size() || opt.velocity.size() != params.size())
        throw ShapeMismatch("gradient/velocity tensor count does not match the model");
    const double inv_batch = 1.0 / batch_size;
    for (size_t j = 0; j < params.size(); ++j) {
        std::vector<double>& p = *params[j].tensor;
        const std::vector<double>& g = grads.tensors[j];
        std::vector<double>& v = opt.velocity[j];
        if (g.size() != p.size() || v.size() != p.size())
            throw ShapeMismatch("tensor " + params[j].name + " has mismatched gradient shape");
        for (size_t e = 0; e < p.size(); ++e) {
            v[e] = opt.momentum * v[e] + g[e] * inv_batch;
            p[e] -= opt.learning_rate * v[e];
        }
    }
    ++model.revision;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::vector<PunctClass> predict_labels(TdnnModel& model,
                                       const std::vector<WindowExample>& examples,
                                       int batch_size) {
    Mode saved = model.mode;
    model.mode = Mode::Eval;
    std::vector<PunctClass> preds;
    preds.reserve(examples.size());
    for (size_t start = 0; start < examples.size(); start += batch_size) {
        size_t end = std::min(examples.size(), start + batch_size);
        std::vector<const MatrixF*> windows;
        windows.reserve(end - start);
        for (size_t i = start; i < end; ++i) windows.push_back(&examples[i].window);
        ForwardResult r = forward_batch(model, windows);
        for (const std::array<double, 4>& p : r.probs) preds.push_back(argmax_class(p));
    }
    model.mode = saved;
    return preds;
}

TrainingLog train(TdnnModel& model, OptimizerState& opt,
                  const std::vector<WindowExample>& train_set, const TrainOptions& opts,
                  const std::vector<WindowExample>* val_set,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    if (train_set.empty()) throw EmptyDataset("training set is empty");
    if (opts.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const int64_t epoch_size =
        opts.epoch_size > 0 ? opts.epoch_size : static_cast<int64_t>(train_set.size());
    const int64_t steps = epoch_size / opts.batch_size;
    if (opts.epochs > 0 && steps == 0)
        throw ConfigError("epoch_size " + std::to_string(epoch_size) +
                          " smaller than batch_size " + std::to_string(opts.batch_size));

    std::vector<PunctClass> labels_all;
    labels_all.reserve(train_set.size());
    for (const WindowExample& ex : train_set) labels_all.push_back(ex.label);

    TrainingLog log;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        SamplerConfig scfg;
        scfg.seed = SplitMix64::derive(opts.sampler_seed, static_cast<uint64_t>(epoch));
        scfg.epoch_size = epoch_size;
        scfg.mode = opts.sample_mode;
        std::vector<size_t> order = sample_epoch(labels_all, scfg);

        model.mode = Mode::Train;
        double loss_sum = 0.0;
        int64_t correct = 0, seen = 0;
        for (int64_t step = 0; step < steps; ++step) {
            std::vector<const MatrixF*> windows;
            std::vector<PunctClass> labels;
            windows.reserve(opts.batch_size);
            labels.reserve(opts.batch_size);
            for (int b = 0; b < opts.batch_size; ++b) {
                const WindowExample& ex = train_set[order[step * opts.batch_size + b]];
                windows.push_back(&ex.window);
                labels.push_back(ex.label);
            }
            ForwardResult fwd = forward_batch(model, windows);
            for (int b = 0; b < opts.batch_size; ++b) {
                loss_sum += loss(fwd.probs[b], labels[b]);
                if (argmax_class(fwd.probs[b]) == labels[b]) ++correct;
                ++seen;
            }
            Gradients grads = backward_batch(model, fwd.cache, labels);
            sgd_step(model, grads, opt, opts.batch_size);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
        stats.train_accuracy = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        if (val_set != nullptr && !val_set->empty()) {
            std::vector<PunctClass> preds = predict_labels(model, *val_set, opts.batch_size);
            std::vector<PunctClass> golds;
            golds.reserve(val_set->size());
            for (const WindowExample& ex : *val_set) golds.push_back(ex.label);
            stats.has_val = true;
            stats.val_overall_f1 = evaluate(preds, golds).overall_f1;
        }
        log.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats);
        if (opts.stop_accuracy > 0.0 && stats.train_accuracy >= opts.stop_accuracy) break;
    }
    model.mode = Mode::Eval;
    return log;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'E', 'P', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

struct ByteWriter {
    std::vector<unsigned char> bytes;
    void u32(uint32_t v) {
        size_t n = bytes.size();
        bytes.resize(n + 4);
        detail::store_u32le(bytes.data() + n, v);
    }
    void f64(double v) {
        size_t n = bytes.size();
        bytes.resize(n + 8);
        detail::store_f64le(bytes.data() + n, v);
    }
    void f64_array(const std::vector<double>& a) {
        size_t n = bytes.size();
        bytes.resize(n + 8 * a.size());
        for (size_t i = 0; i < a.size(); ++i)
            detail::store_f64le(bytes.data() + n + 8 * i, a[i]);
    }
};

struct ByteReader {
    const std::vector<unsigned char>& bytes;
    size_t pos = 0;
    void need(size_t n) {
        if (pos + n > bytes.size())
            throw CorruptCheckpoint("checkpoint truncated at byte " + std::to_string(pos));
    }
    uint32_t u32() {
        need(4);
        uint32_t v = detail::load_u32le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        double v = detail::load_f64le(bytes.data() + pos);
        pos += 8;
        return v;
    }
    void f64_array(std::vector<double>& a) {
        need(8 * a.size());
        for (size_t i = 0; i < a.size(); ++i) a[i] = detail::load_f64le(bytes.data() + pos + 8 * i);
        pos += 8 * a.size();
    }
};

}  // namespace

void save_checkpoint(const TdnnModel& model, const OptimizerState& opt,
                     const std::filesystem::path& path) {
    const TdnnConfig& cfg = model.cfg;
    ByteWriter w;
    w.bytes.insert(w.bytes.end(), kCkptMagic, kCkptMagic + sizeof(kCkptMagic));
    w.u32(kCkptVersion);
    w.u32(static_cast<uint32_t>(cfg.input_dim));
    w.u32(static_cast<uint32_t>(cfg.d_fused));
    w.u32(static_cast<uint32_t>(cfg.convs.size()));
    for (const ConvSpec& c : cfg.convs) {
        w.u32(static_cast<uint32_t>(c.in_ch));
        w.u32(static_cast<uint32_t>(c.out_ch));
        w.u32(static_cast<uint32_t>(c.kernel));
        w.u32(static_cast<uint32_t>(c.dilation));
    }
    w.u32(static_cast<uint32_t>(cfg.head_hidden));
    w.u32(static_cast<uint32_t>(cfg.window_len));
    w.f64(cfg.batchnorm_eps);
    w.f64(cfg.batchnorm_momentum);

    for (const ConstTensorRef& ref : parameter_tensors(model)) w.f64_array(*ref.tensor);
    for (const BatchNormLayer& bn : model.bns) {
        w.f64_array(bn.running_mean);
        w.f64_array(bn.running_var);
    }
    w.f64(opt.learning_rate);
    w.f64(opt.momentum);
    for (const std::vector<double>& v : opt.velocity) w.f64_array(v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    out.flush();
    if (!out) throw IoFailure("write failed on " + path.string());
}

std::pair<TdnnModel, OptimizerState> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kCkptMagic) + 4 ||
        std::memcmp(bytes.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
        throw CorruptCheckpoint(path.string() + ": not a checkpoint file");

    ByteReader r{bytes, sizeof(kCkptMagic)};
    uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw VersionMismatch(path.string() + ": checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kCkptVersion));

    TdnnConfig cfg;
    cfg.input_dim = static_cast<int>(r.u32());
    cfg.d_fused = static_cast<int>(r.u32());
    uint32_t n_convs = r.u32();
    if (n_convs == 0 || n_convs > 1024)
        throw CorruptCheckpoint(path.string() + ": implausible conv layer count");
    cfg.convs.clear();
    for (uint32_t l = 0; l < n_convs; ++l) {
        ConvSpec c;
        c.in_ch = static_cast<int>(r.u32());
        c.out_ch = static_cast<int>(r.u32());
        c.kernel = static_cast<int>(r.u32());
        c.dilation = static_cast<int>(r.u32());
        cfg.convs.push_back(c);
    }
    cfg.head_hidden = static_cast<int>(r.u32());
    cfg.window_len = static_cast<int>(r.u32());
    cfg.batchnorm_eps = r.f64();
    cfg.batchnorm_momentum = r.f64();
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw CorruptCheckpoint(path.string() + ": invalid stored config: " + e.what());
    }

    TdnnModel model = TdnnModel::init(cfg, 0);
    for (const TensorRef& ref : parameter_tensors(model)) r.f64_array(*ref.tensor);
    for (BatchNormLayer& bn : model.bns) {
        r.f64_array(bn.running_mean);
        r.f64_array(bn.running_var);
    }
    OptimizerState opt = OptimizerState::init(model);
    opt.learning_rate = r.f64();
    opt.momentum = r.f64();
    for (std::vector<double>& v : opt.velocity) r.f64_array(v);
    if (r.pos != bytes.size())
        throw CorruptCheckpoint(path.string() + ": trailing bytes after checkpoint payload");
    model.mode = Mode::Eval;
    return {std::move(model), std::move(opt)};
}

}  // namespace punct
