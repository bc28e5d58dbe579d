#include <cmath>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "punct/rng.hpp"
#include "punct/tdnn.hpp"

using namespace punct;
using namespace punct::test;

namespace {

TdnnConfig miniature_config() {
    TdnnConfig cfg;
    cfg.input_dim = 6;
    cfg.d_fused = 8;
    cfg.convs = {{8, 8, 3, 1}, {8, 4, 3, 2}, {4, 4, 3, 1}};
    cfg.head_hidden = 4;
    cfg.window_len = 17;
    return cfg;
}

MatrixF random_window(int rows, int cols, uint64_t seed) {
    MatrixF w(rows, cols);
    SplitMix64 rng(seed);
    for (float& v : w.data) v = static_cast<float>(2.0 * rng.next_unit() - 1.0);
    return w;
}

// Straight-loop single-example reference: recomputes the whole pipeline with
// naive nested loops, independent of the production kernels.
std::array<double, 4> naive_forward_train(const TdnnModel& m, const MatrixF& win) {
    const TdnnConfig& cfg = m.cfg;
    int len = cfg.window_len;
    std::vector<std::vector<double>> act(static_cast<size_t>(cfg.d_fused),
                                         std::vector<double>(len, 0.0));
    for (int o = 0; o < cfg.d_fused; ++o)
        for (int t = 0; t < len; ++t) {
            double acc = m.fusion.bias[o];
            for (int i = 0; i < cfg.input_dim; ++i)
                acc += m.fusion.weight[static_cast<size_t>(o) * cfg.input_dim + i] * win.at(i, t);
            act[o][t] = acc;
        }

    for (size_t l = 0; l < m.convs.size(); ++l) {
        const ConvLayer& conv = m.convs[l];
        const BatchNormLayer& bn = m.bns[l];
        int len_out = len - (conv.kernel - 1) * conv.dilation;
        std::vector<std::vector<double>> next(static_cast<size_t>(conv.out_ch),
                                              std::vector<double>(len_out, 0.0));
        for (int o = 0; o < conv.out_ch; ++o)
            for (int t = 0; t < len_out; ++t) {
                double acc = conv.bias[o];
                for (int i = 0; i < conv.in_ch; ++i)
                    for (int k = 0; k < conv.kernel; ++k)
                        acc += conv.weight[(static_cast<size_t>(o) * conv.in_ch + i) * conv.kernel +
                                           k] *
                               act[i][t + k * conv.dilation];
                next[o][t] = acc > 0.0 ? acc : 0.0;  // ReLU
            }
        // Batch norm over the time axis (single example, Train mode).
        for (int o = 0; o < conv.out_ch; ++o) {
            double mean = 0.0;
            for (double v : next[o]) mean += v;
            mean /= len_out;
            double var = 0.0;
            for (double v : next[o]) var += (v - mean) * (v - mean);
            var /= len_out;
            for (double& v : next[o])
                v = bn.gamma[o] * (v - mean) / std::sqrt(var + cfg.batchnorm_eps) + bn.beta[o];
        }
        act = std::move(next);
        len = len_out;
    }

    std::array<double, 4> logits{};
    for (int c = 0; c < 4; ++c) {
        std::vector<double> hidden(cfg.head_hidden, 0.0);
        for (int o = 0; o < cfg.head_hidden; ++o) {
            double acc = m.head1.bias[o];
            for (int t = 0; t < len; ++t)
                acc += m.head1.weight[static_cast<size_t>(o) * len + t] * act[c][t];
            hidden[o] = acc;
        }
        double acc = m.head2.bias[0];
        for (int o = 0; o < cfg.head_hidden; ++o) acc += m.head2.weight[o] * hidden[o];
        logits[c] = acc;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    std::array<double, 4> probs{};
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
        probs[k] = std::exp(logits[k] - mx);
        sum += probs[k];
    }
    for (int k = 0; k < 4; ++k) probs[k] /= sum;
    return probs;
}

}  // namespace

TEST_CASE("conv_out_len follows valid-convolution arithmetic") {
    CHECK(conv_out_len(301, 9, 1) == 293);
    CHECK(conv_out_len(100, 1, 1) == 100);
    CHECK(conv_out_len(17, 1, 7) == 17);
    CHECK_THROWS_AS(conv_out_len(8, 9, 1), NonPositiveOutput);
    CHECK_THROWS_AS(conv_out_len(16, 9, 2), NonPositiveOutput);
}

TEST_CASE("the standard stack maps 301 frames to 243") {
    TdnnConfig cfg = TdnnConfig::standard();
    cfg.validate();
    int len = cfg.window_len;
    int shrink = 0;
    for (const ConvSpec& c : cfg.convs) {
        int next = conv_out_len(len, c.kernel, c.dilation);
        shrink += len - next;
        len = next;
    }
    CHECK(shrink == 58);
    CHECK(len == 243);
    CHECK(cfg.conv_output_len() == 243);
}

TEST_CASE("config validation rejects broken stacks") {
    TdnnConfig cfg = TdnnConfig::standard();
    cfg.convs[3].in_ch = 99;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = TdnnConfig::standard();
    cfg.convs.back().out_ch = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = TdnnConfig::standard();
    cfg.convs[1].out_ch = 200;  // 128 -> 200 increases
    cfg.convs[2].in_ch = 200;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = TdnnConfig::standard();
    cfg.window_len = 50;  // stack consumes 58 frames
    CHECK_THROWS_AS(cfg.validate(), NonPositiveOutput);
}

TEST_CASE("parameter counts stay within the inference budget") {
    TdnnModel model = TdnnModel::init(TdnnConfig::standard(), 1);
    ParamCount pc = count_parameters(model);
    CHECK(pc.total <= 3'000'000);

    int64_t sum = 0;
    for (const auto& [name, n] : pc.per_layer) sum += n;
    CHECK(sum == pc.total);

    // Hand arithmetic for the default schedule.
    int64_t expected = 0;
    expected += 256LL * 1792 + 256;                       // fusion
    expected += 128LL * 256 * 9 + 128 + 2 * 128;          // conv1 + bn1
    expected += 128LL * 128 * 9 + 128 + 2 * 128;          // conv2 + bn2
    expected += 64LL * 128 * 5 + 64 + 2 * 64;             // conv3 + bn3
    expected += 64LL * 64 * 5 + 64 + 2 * 64;              // conv4 + bn4
    expected += 32LL * 64 * 7 + 32 + 2 * 32;              // conv5 + bn5
    expected += 16LL * 32 * 7 + 16 + 2 * 16;              // conv6 + bn6
    expected += 4LL * 16 * 5 + 4 + 2 * 4;                 // conv7 + bn7
    expected += 32LL * 243 + 32;                          // head1
    expected += 32 + 1;                                   // head2
    CHECK(pc.total == expected);
}

TEST_CASE("zero model on zero input is maximally uncertain") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 3);
    for (const TensorRef& ref : parameter_tensors(model))
        if (ref.name.find("gamma") == std::string::npos)
            std::fill(ref.tensor->begin(), ref.tensor->end(), 0.0);

    MatrixF zero(cfg.input_dim, cfg.window_len);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
        model.mode = mode;
        ForwardResult r = forward_batch(model, {&zero});
        for (int k = 0; k < 4; ++k) CHECK(r.probs[0][k] == doctest::Approx(0.25).epsilon(1e-9));
    }
}

TEST_CASE("forward always emits a probability vector") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 17);
    model.mode = Mode::Train;
    for (int trial = 0; trial < 10; ++trial) {
        MatrixF win = random_window(cfg.input_dim, cfg.window_len, 100 + trial);
        ForwardResult r = forward(model, win);
        double sum = 0.0;
        for (int k = 0; k < 4; ++k) {
            CHECK(r.probs[0][k] > 0.0);
            CHECK(r.probs[0][k] < 1.0);
            sum += r.probs[0][k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("forward matches the straight-loop oracle") {
    TdnnConfig cfg = miniature_config();
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        TdnnModel model = TdnnModel::init(cfg, seed);
        model.mode = Mode::Train;
        MatrixF win = random_window(cfg.input_dim, cfg.window_len, seed * 7 + 1);
        ForwardResult r = forward(model, win);
        std::array<double, 4> expect = naive_forward_train(model, win);
        for (int k = 0; k < 4; ++k)
            CHECK(std::abs(r.probs[0][k] - expect[k]) <=
                  1e-5 * std::max(1.0, std::abs(expect[k])));
    }
}

TEST_CASE("cross-entropy loss values") {
    CHECK(loss({1.0, 0.0, 0.0, 0.0}, PunctClass::Comma) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(loss({0.25, 0.25, 0.25, 0.25}, PunctClass::Question) ==
          doctest::Approx(std::log(4.0)));
    CHECK(loss({0.7, 0.1, 0.1, 0.1}, PunctClass::FullStop) == doctest::Approx(-std::log(0.1)));
    // The floor keeps zero probabilities finite.
    CHECK(loss({0.0, 1.0, 0.0, 0.0}, PunctClass::Comma) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("softmax cross-entropy logit gradient is probs minus one-hot") {
    SplitMix64 rng(404);
    std::array<double, 4> logits;
    for (double& v : logits) v = 4.0 * rng.next_unit() - 2.0;
    std::array<double, 4> probs = softmax4(logits);
    PunctClass label = PunctClass::Question;
    std::array<double, 4> analytic = softmax_ce_dlogits(probs, label);

    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
        std::array<double, 4> up = logits, down = logits;
        up[k] += h;
        down[k] -= h;
        double numeric =
            (loss(softmax4(up), label) - loss(softmax4(down), label)) / (2.0 * h);
        CHECK(std::abs(numeric - analytic[k]) < 1e-6);
    }
    double expect_label = probs[punct_code(label)] - 1.0;
    CHECK(analytic[punct_code(label)] == doctest::Approx(expect_label));
}

TEST_CASE("analytic gradients match central finite differences (h=1e-3, smooth point)") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 2024);
    move_to_smooth_point(model);
    std::vector<MatrixF> windows;
    for (int b = 0; b < 3; ++b)
        windows.push_back(random_window(cfg.input_dim, cfg.window_len, 500 + b));
    std::vector<const MatrixF*> ptrs;
    for (const MatrixF& w : windows) ptrs.push_back(&w);
    std::vector<PunctClass> labels = {PunctClass::Comma, PunctClass::NoPunct,
                                      PunctClass::Question};

    REQUIRE(min_abs_conv_out(model, ptrs) > 0.5);  // probes stay far from ReLU kinks
    GradCheckResult r = gradcheck(model, ptrs, labels, 1e-3);
    INFO("worst tensor " << r.worst_tensor << "[" << r.worst_index << "] analytic "
                         << r.worst_analytic << " numeric " << r.worst_numeric);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("analytic gradients match finite differences at a generic point (h=1e-5)") {
    // Random init leaves activations on both sides of every ReLU, so the mask
    // path of the backward pass is exercised; the smaller step keeps the
    // probes from crossing kinks.
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 2024);
    std::vector<MatrixF> windows;
    for (int b = 0; b < 3; ++b)
        windows.push_back(random_window(cfg.input_dim, cfg.window_len, 500 + b));
    std::vector<const MatrixF*> ptrs;
    for (const MatrixF& w : windows) ptrs.push_back(&w);
    std::vector<PunctClass> labels = {PunctClass::Comma, PunctClass::NoPunct,
                                      PunctClass::Question};

    GradCheckResult r = gradcheck(model, ptrs, labels, 1e-5);
    INFO("worst tensor " << r.worst_tensor << "[" << r.worst_index << "] analytic "
                         << r.worst_analytic << " numeric " << r.worst_numeric);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("gradients vanish along dead paths") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 77);
    std::fill(model.fusion.bias.begin(), model.fusion.bias.end(), 0.0);
    MatrixF zero(cfg.input_dim, cfg.window_len);  // all-zero input
    model.mode = Mode::Train;
    ForwardResult fwd = forward(model, zero);
    Gradients grads = backward(model, fwd.cache, PunctClass::Comma);
    // Fusion weights multiply an all-zero window: loss cannot depend on them.
    for (double g : grads.tensors[0]) CHECK(g == 0.0);
}

TEST_CASE("backward rejects stale or eval caches") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 5);
    MatrixF win = random_window(cfg.input_dim, cfg.window_len, 6);

    model.mode = Mode::Eval;
    ForwardResult eval_fwd = forward(model, win);
    CHECK_THROWS_AS(backward(model, eval_fwd.cache, PunctClass::Comma), StaleCache);

    model.mode = Mode::Train;
    ForwardResult fwd = forward(model, win);
    Gradients grads = backward(model, fwd.cache, PunctClass::Comma);
    OptimizerState opt = OptimizerState::init(model, 1e-3, 0.0);
    sgd_step(model, grads, opt, 1);
    CHECK_THROWS_AS(backward(model, fwd.cache, PunctClass::Comma), StaleCache);
}

TEST_CASE("sgd_step honors learning rate and momentum") {
    TdnnConfig cfg = miniature_config();

    SUBCASE("zero learning rate leaves parameters untouched") {
        TdnnModel model = TdnnModel::init(cfg, 8);
        TdnnModel before = model;
        OptimizerState opt = OptimizerState::init(model, 0.0, 0.9);
        Gradients grads;
        for (const TensorRef& ref : parameter_tensors(model))
            grads.tensors.emplace_back(ref.tensor->size(), 1.0);
        sgd_step(model, grads, opt, 1);
        std::vector<TensorRef> a = parameter_tensors(model), b = parameter_tensors(before);
        for (size_t j = 0; j < a.size(); ++j) CHECK(*a[j].tensor == *b[j].tensor);
    }

    SUBCASE("momentum zero reduces to plain SGD") {
        TdnnModel model = TdnnModel::init(cfg, 8);
        TdnnModel before = model;
        OptimizerState opt = OptimizerState::init(model, 0.5, 0.0);
        Gradients grads;
        for (const TensorRef& ref : parameter_tensors(model))
            grads.tensors.emplace_back(ref.tensor->size(), 2.0);
        sgd_step(model, grads, opt, 1);
        std::vector<TensorRef> a = parameter_tensors(model), b = parameter_tensors(before);
        for (size_t j = 0; j < a.size(); ++j)
            for (size_t e = 0; e < a[j].tensor->size(); ++e)
                CHECK((*a[j].tensor)[e] == doctest::Approx((*b[j].tensor)[e] - 0.5 * 2.0));
    }

    SUBCASE("two steps with constant gradient displace by 2.9 g") {
        TdnnModel model = TdnnModel::init(cfg, 8);
        TdnnModel before = model;
        OptimizerState opt = OptimizerState::init(model, 1.0, 0.9);
        Gradients grads;
        for (const TensorRef& ref : parameter_tensors(model))
            grads.tensors.emplace_back(ref.tensor->size(), 3.0);
        sgd_step(model, grads, opt, 1);
        sgd_step(model, grads, opt, 1);
        std::vector<TensorRef> a = parameter_tensors(model), b = parameter_tensors(before);
        for (size_t j = 0; j < a.size(); ++j)
            for (size_t e = 0; e < a[j].tensor->size(); ++e)
                CHECK((*a[j].tensor)[e] ==
                      doctest::Approx((*b[j].tensor)[e] - 2.9 * 3.0).epsilon(1e-12));
    }

    SUBCASE("batch_size divides the gradient") {
        TdnnModel model = TdnnModel::init(cfg, 8);
        TdnnModel before = model;
        OptimizerState opt = OptimizerState::init(model, 1.0, 0.0);
        Gradients grads;
        for (const TensorRef& ref : parameter_tensors(model))
            grads.tensors.emplace_back(ref.tensor->size(), 4.0);
        sgd_step(model, grads, opt, 4);
        std::vector<TensorRef> a = parameter_tensors(model), b = parameter_tensors(before);
        for (size_t j = 0; j < a.size(); ++j)
            for (size_t e = 0; e < a[j].tensor->size(); ++e)
                CHECK((*a[j].tensor)[e] == doctest::Approx((*b[j].tensor)[e] - 1.0));
    }
}

TEST_CASE("a tiny step along the gradient decreases the batch loss") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 99);
    std::vector<MatrixF> windows;
    for (int b = 0; b < 4; ++b)
        windows.push_back(random_window(cfg.input_dim, cfg.window_len, 900 + b));
    std::vector<const MatrixF*> ptrs;
    for (const MatrixF& w : windows) ptrs.push_back(&w);
    std::vector<PunctClass> labels = {PunctClass::Comma, PunctClass::FullStop,
                                      PunctClass::Question, PunctClass::NoPunct};

    double before = mean_batch_loss(model, ptrs, labels);
    model.mode = Mode::Train;
    ForwardResult fwd = forward_batch(model, ptrs);
    Gradients grads = backward_batch(model, fwd.cache, labels);
    OptimizerState opt = OptimizerState::init(model, 1e-6, 0.0);
    sgd_step(model, grads, opt, static_cast<int>(labels.size()));
    double after = mean_batch_loss(model, ptrs, labels);
    CHECK(after < before);
}

TEST_CASE("eval forward is independent of batch composition") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 55);
    model.mode = Mode::Eval;
    MatrixF a = random_window(cfg.input_dim, cfg.window_len, 1);
    MatrixF b = random_window(cfg.input_dim, cfg.window_len, 2);
    MatrixF c = random_window(cfg.input_dim, cfg.window_len, 3);

    ForwardResult alone = forward(model, a);
    ForwardResult batched = forward_batch(model, {&b, &a, &c});
    for (int k = 0; k < 4; ++k) CHECK(alone.probs[0][k] == batched.probs[1][k]);
}

TEST_CASE("train-mode and eval-mode agree once running stats converge") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 21);
    MatrixF win = random_window(cfg.input_dim, cfg.window_len, 77);

    model.mode = Mode::Train;
    ForwardResult train_out = forward(model, win);
    for (int i = 0; i < 400; ++i) forward(model, win);  // stats -> this window's stats

    model.mode = Mode::Eval;
    ForwardResult eval_out = forward(model, win);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(train_out.probs[0][k] - eval_out.probs[0][k]) < 1e-6);
}

TEST_CASE("exploding weights raise NonFiniteActivation") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 1);
    for (double& w : model.fusion.weight) w = 1e300;
    for (double& w : model.convs[0].weight) w = 1e300;
    model.mode = Mode::Train;
    MatrixF win = random_window(cfg.input_dim, cfg.window_len, 4);
    CHECK_THROWS_AS(forward(model, win), NonFiniteActivation);
}

TEST_CASE("forward rejects wrong window shapes") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 1);
    MatrixF wrong(cfg.input_dim + 1, cfg.window_len);
    CHECK_THROWS_AS(forward(model, wrong), ShapeMismatch);
}

namespace {

std::vector<WindowExample> tiny_labeled_set(const TdnnConfig& cfg, int n, uint64_t seed) {
    std::vector<WindowExample> out;
    SplitMix64 rng(seed);
    for (int i = 0; i < n; ++i) {
        WindowExample ex;
        ex.label = punct_from_code(i % 4);
        ex.window = MatrixF(cfg.input_dim, cfg.window_len);
        for (float& v : ex.window.data) v = static_cast<float>(2.0 * rng.next_unit() - 1.0);
        // Plant a crude class cue so training has something to find.
        for (int t = 0; t < cfg.window_len; ++t)
            ex.window.at(punct_code(ex.label), t) += 2.0f;
        ex.utterance_id = "synthetic";
        ex.transition_frame = i;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

TEST_CASE("train with zero epochs changes nothing") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 10);
    TdnnModel before = model;
    OptimizerState opt = OptimizerState::init(model, 1e-2, 0.9);
    std::vector<WindowExample> data = tiny_labeled_set(cfg, 8, 3);
    TrainOptions opts;
    opts.epochs = 0;
    opts.batch_size = 4;
    TrainingLog log = train(model, opt, data, opts);
    CHECK(log.epochs.empty());
    std::vector<TensorRef> a = parameter_tensors(model), b = parameter_tensors(before);
    for (size_t j = 0; j < a.size(); ++j) CHECK(*a[j].tensor == *b[j].tensor);
}

TEST_CASE("train rejects an empty dataset") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 10);
    OptimizerState opt = OptimizerState::init(model);
    std::vector<WindowExample> empty;
    TrainOptions opts;
    CHECK_THROWS_AS(train(model, opt, empty, opts), EmptyDataset);
}

TEST_CASE("identical seeds give bit-identical checkpoints") {
    TempDir dir("det");
    TdnnConfig cfg = miniature_config();
    auto run = [&](const std::filesystem::path& out) {
        TdnnModel model = TdnnModel::init(cfg, 42);
        OptimizerState opt = OptimizerState::init(model, 1e-3, 0.9);
        std::vector<WindowExample> data = tiny_labeled_set(cfg, 16, 9);
        TrainOptions opts;
        opts.epochs = 3;
        opts.batch_size = 4;
        opts.epoch_size = 16;
        opts.sampler_seed = 7;
        train(model, opt, data, opts);
        save_checkpoint(model, opt, out);
    };
    run(dir / "a.ckpt");
    run(dir / "b.ckpt");

    std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    REQUIRE(!ba.empty());
    CHECK(ba == bb);
}

TEST_CASE("training drives loss down on a learnable fixture") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 123);
    OptimizerState opt = OptimizerState::init(model, 3e-3, 0.9);
    std::vector<WindowExample> data = tiny_labeled_set(cfg, 32, 5);
    TrainOptions opts;
    opts.epochs = 30;
    opts.batch_size = 8;
    opts.epoch_size = 32;
    opts.sampler_seed = 11;
    TrainingLog log = train(model, opt, data, opts);
    REQUIRE(!log.epochs.empty());
    CHECK(log.epochs.back().mean_loss < log.epochs.front().mean_loss);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    TempDir dir("ckpt");
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 31);
    OptimizerState opt = OptimizerState::init(model, 2e-4, 0.8);
    // Give running stats and velocities non-trivial values first.
    std::vector<WindowExample> data = tiny_labeled_set(cfg, 8, 13);
    TrainOptions opts;
    opts.epochs = 2;
    opts.batch_size = 4;
    train(model, opt, data, opts);

    std::filesystem::path p = dir / "model.ckpt";
    save_checkpoint(model, opt, p);
    auto [loaded, loaded_opt] = load_checkpoint(p);
    CHECK(loaded_opt.learning_rate == opt.learning_rate);
    CHECK(loaded_opt.momentum == opt.momentum);
    CHECK(loaded_opt.velocity == opt.velocity);

    MatrixF win = random_window(cfg.input_dim, cfg.window_len, 1001);
    model.mode = Mode::Eval;
    ForwardResult a = forward(model, win);
    ForwardResult b = forward(loaded, win);
    for (int k = 0; k < 4; ++k) CHECK(a.probs[0][k] == b.probs[0][k]);

    // Saving the loaded pair reproduces the file byte-for-byte.
    save_checkpoint(loaded, loaded_opt, dir / "again.ckpt");
    std::ifstream fa(p, std::ios::binary), fb(dir / "again.ckpt", std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
}

TEST_CASE("corrupt and mismatched checkpoints are rejected") {
    TempDir dir("ckptbad");
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 31);
    OptimizerState opt = OptimizerState::init(model);
    std::filesystem::path p = dir / "model.ckpt";
    save_checkpoint(model, opt, p);

    auto rewrite = [&](const std::filesystem::path& dst,
                       const std::function<void(std::vector<char>&)>& mutate) {
        std::ifstream in(p, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        mutate(bytes);
        std::ofstream out(dst, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    rewrite(dir / "trunc.ckpt", [](std::vector<char>& b) { b.resize(b.size() / 2); });
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CorruptCheckpoint);

    rewrite(dir / "version.ckpt", [](std::vector<char>& b) { b[8] = 99; });
    CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), VersionMismatch);

    rewrite(dir / "magic.ckpt", [](std::vector<char>& b) { b[0] = 'X'; });
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CorruptCheckpoint);

    rewrite(dir / "trailing.ckpt", [](std::vector<char>& b) { b.push_back(0); });
    CHECK_THROWS_AS(load_checkpoint(dir / "trailing.ckpt"), CorruptCheckpoint);
}

TEST_CASE("thread count never changes results") {
    TdnnConfig cfg = miniature_config();
    TdnnModel model = TdnnModel::init(cfg, 61);
    model.mode = Mode::Train;
    std::vector<MatrixF> windows;
    for (int b = 0; b < 5; ++b)
        windows.push_back(random_window(cfg.input_dim, cfg.window_len, 700 + b));
    std::vector<const MatrixF*> ptrs;
    for (const MatrixF& w : windows) ptrs.push_back(&w);

    BnSnapshot snap = BnSnapshot::take(model);
    set_num_threads(1);
    ForwardResult serial = forward_batch(model, ptrs);
    snap.restore(model);
    set_num_threads(4);
    ForwardResult parallel = forward_batch(model, ptrs);
    snap.restore(model);
    set_num_threads(1);

    for (int b = 0; b < 5; ++b)
        for (int k = 0; k < 4; ++k) CHECK(serial.probs[b][k] == parallel.probs[b][k]);
}
