#include "punct/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace punct {

namespace {

using nlohmann::json;

std::string line_col(const std::string& text, size_t byte) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ":" + line_col(text, e.byte) + ": " + e.what());
    }
}

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

void require_version(const json& root, const std::string& where) {
    if (!root.contains("version")) throw ConfigError(where + ": missing \"version\"");
    int v = get_or<int>(root, where, "version", -1);
    if (v != 1) throw ConfigError(where + ": unsupported version " + std::to_string(v));
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    json root = parse_file(path);
    std::string where = path.filename().string();
    check_keys(root, where, {"version", "model", "optimizer", "training", "ensemble"});
    require_version(root, where);

    RunConfig cfg;
    if (root.contains("model")) {
        const json& m = root.at("model");
        std::string mw = where + ".model";
        check_keys(m, mw,
                   {"profile", "input_dim", "d_fused", "channels", "kernels", "dilations",
                    "head_hidden", "window_len", "batchnorm_eps", "batchnorm_momentum"});
        std::string profile = get_or<std::string>(m, mw, "profile", "standard");
        if (profile == "standard") {
            cfg.model = TdnnConfig::standard();
        } else if (profile == "mini") {
            cfg.model = TdnnConfig::reduced(SynthSpec::mini().text_dim +
                                            SynthSpec::mini().audio_dim);
        } else {
            throw ConfigError(mw + ".profile: expected \"standard\" or \"mini\"");
        }
        cfg.model.input_dim = get_or<int>(m, mw, "input_dim", cfg.model.input_dim);
        cfg.model.d_fused = get_or<int>(m, mw, "d_fused", cfg.model.d_fused);
        cfg.model.head_hidden = get_or<int>(m, mw, "head_hidden", cfg.model.head_hidden);
        cfg.model.window_len = get_or<int>(m, mw, "window_len", cfg.model.window_len);
        cfg.model.batchnorm_eps = get_or<double>(m, mw, "batchnorm_eps", cfg.model.batchnorm_eps);
        cfg.model.batchnorm_momentum =
            get_or<double>(m, mw, "batchnorm_momentum", cfg.model.batchnorm_momentum);

        if (m.contains("channels")) {
            auto pairs = get_or<std::vector<std::vector<int>>>(m, mw, "channels", {});
            std::vector<int> kernels = get_or<std::vector<int>>(m, mw, "kernels", {});
            std::vector<int> dilations = get_or<std::vector<int>>(m, mw, "dilations", {});
            if (kernels.empty()) for (const ConvSpec& c : TdnnConfig::standard().convs) kernels.push_back(c.kernel);
            if (dilations.empty()) for (const ConvSpec& c : TdnnConfig::standard().convs) dilations.push_back(c.dilation);
            if (pairs.size() != kernels.size() || pairs.size() != dilations.size())
                throw ConfigError(mw + ": channels, kernels, and dilations must have equal length");
            cfg.model.convs.clear();
            for (size_t l = 0; l < pairs.size(); ++l) {
                if (pairs[l].size() != 2)
                    throw ConfigError(mw + ".channels[" + std::to_string(l) +
                                      "]: expected [in, out]");
                cfg.model.convs.push_back({pairs[l][0], pairs[l][1], kernels[l], dilations[l]});
            }
        } else if (m.contains("kernels") || m.contains("dilations")) {
            throw ConfigError(mw + ": kernels/dilations require channels");
        }
    }

    if (root.contains("optimizer")) {
        const json& o = root.at("optimizer");
        std::string ow = where + ".optimizer";
        check_keys(o, ow, {"learning_rate", "momentum"});
        cfg.learning_rate = get_or<double>(o, ow, "learning_rate", cfg.learning_rate);
        cfg.momentum = get_or<double>(o, ow, "momentum", cfg.momentum);
        if (cfg.learning_rate < 0.0) throw ConfigError(ow + ".learning_rate: must be >= 0");
        if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
            throw ConfigError(ow + ".momentum: must lie in [0,1)");
    }

    if (root.contains("training")) {
        const json& t = root.at("training");
        std::string tw = where + ".training";
        check_keys(t, tw,
                   {"epochs", "batch_size", "epoch_size", "sample_mode", "seed",
                    "stop_accuracy"});
        cfg.training.epochs = get_or<int>(t, tw, "epochs", cfg.training.epochs);
        cfg.training.batch_size = get_or<int>(t, tw, "batch_size", cfg.training.batch_size);
        cfg.training.epoch_size = get_or<int64_t>(t, tw, "epoch_size", cfg.training.epoch_size);
        cfg.training.sampler_seed = get_or<uint64_t>(t, tw, "seed", cfg.training.sampler_seed);
        cfg.training.stop_accuracy =
            get_or<double>(t, tw, "stop_accuracy", cfg.training.stop_accuracy);
        std::string mode = get_or<std::string>(t, tw, "sample_mode", "balanced");
        if (mode == "balanced") {
            cfg.training.sample_mode = SampleMode::Balanced;
        } else if (mode == "natural") {
            cfg.training.sample_mode = SampleMode::Natural;
        } else {
            throw ConfigError(tw + ".sample_mode: expected \"balanced\" or \"natural\"");
        }
        if (cfg.training.epochs < 0) throw ConfigError(tw + ".epochs: must be >= 0");
        if (cfg.training.batch_size < 1) throw ConfigError(tw + ".batch_size: must be >= 1");
    }

    if (root.contains("ensemble")) {
        const json& e = root.at("ensemble");
        std::string ew = where + ".ensemble";
        check_keys(e, ew, {"alpha"});
        cfg.ensemble.alpha = get_or<double>(e, ew, "alpha", cfg.ensemble.alpha);
        cfg.ensemble.validate();
    }

    cfg.model.validate();
    return cfg;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    json root = parse_file(path);
    std::string where = path.filename().string();
    check_keys(root, where,
               {"version", "profile", "seed", "num_utterances", "tokens_per_utterance",
                "frames_per_token", "text_dim", "audio_dim", "pause_full_frames",
                "pause_comma_frames", "pitch_rise_magnitude", "pitch_ramp_frames",
                "text_cue_magnitude", "noise_sigma", "text_posterior_accuracy"});
    require_version(root, where);

    SynthSpec spec;
    std::string profile = get_or<std::string>(root, where, "profile", "standard");
    if (profile == "mini") {
        spec = SynthSpec::mini();
    } else if (profile != "standard") {
        throw ConfigError(where + ".profile: expected \"standard\" or \"mini\"");
    }
    spec.seed = get_or<uint64_t>(root, where, "seed", spec.seed);
    spec.num_utterances = get_or<int>(root, where, "num_utterances", spec.num_utterances);
    if (root.contains("tokens_per_utterance")) {
        auto range = get_or<std::vector<int>>(root, where, "tokens_per_utterance", {});
        if (range.size() != 2)
            throw ConfigError(where + ".tokens_per_utterance: expected [min, max]");
        spec.min_tokens = range[0];
        spec.max_tokens = range[1];
    }
    if (root.contains("frames_per_token")) {
        auto range = get_or<std::vector<int>>(root, where, "frames_per_token", {});
        if (range.size() != 2)
            throw ConfigError(where + ".frames_per_token: expected [min, max]");
        spec.min_frames_per_token = range[0];
        spec.max_frames_per_token = range[1];
    }
    spec.text_dim = get_or<int>(root, where, "text_dim", spec.text_dim);
    spec.audio_dim = get_or<int>(root, where, "audio_dim", spec.audio_dim);
    spec.pause_full_frames = get_or<int>(root, where, "pause_full_frames", spec.pause_full_frames);
    spec.pause_comma_frames =
        get_or<int>(root, where, "pause_comma_frames", spec.pause_comma_frames);
    spec.pitch_rise_magnitude =
        get_or<double>(root, where, "pitch_rise_magnitude", spec.pitch_rise_magnitude);
    spec.pitch_ramp_frames = get_or<int>(root, where, "pitch_ramp_frames", spec.pitch_ramp_frames);
    spec.text_cue_magnitude =
        get_or<double>(root, where, "text_cue_magnitude", spec.text_cue_magnitude);
    spec.noise_sigma = get_or<double>(root, where, "noise_sigma", spec.noise_sigma);
    spec.text_posterior_accuracy =
        get_or<double>(root, where, "text_posterior_accuracy", spec.text_posterior_accuracy);
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return spec;
}

}  // namespace punct
