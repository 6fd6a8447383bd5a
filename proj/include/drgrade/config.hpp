#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "drgrade/augment.hpp"
#include "drgrade/backbone.hpp"
#include "drgrade/ensemble.hpp"
#include "drgrade/objectives.hpp"
#include "drgrade/optim.hpp"
#include "drgrade/pipeline.hpp"
#include "drgrade/sampling.hpp"

namespace drgrade {

inline std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::state, "sha256: digest failed");
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

inline std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for hashing");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

// ---------------------------------------------------------------------------
// Key/value text format
//
//   # comment
//   key = value
//
// Keys are unique. Lists are comma separated. Serialization sorts keys, so the
// hash does not depend on the order fields were written in.

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>")
{
    KeyValues kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty() || line == "\r") continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(line_no);
        if (eq == std::string::npos) fail(ErrorKind::parse, where + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (!value.empty() && value.back() == '\r') value.pop_back();
        if (key.empty()) fail(ErrorKind::parse, where + ": empty key");
        if (!kv.emplace(key, value).second) fail(ErrorKind::parse, where + ": duplicate key '" + key + "'");
    }
    return kv;
}

inline std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // shortest form that still round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        char trial[64];
        std::snprintf(trial, sizeof trial, "%.*g", prec, v);
        if (std::strtod(trial, nullptr) == v) return trial;
    }
    return buf;
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::parse, "config: '" + key + "' expects a number, got '" + v + "'");
}

inline long long parse_int(const std::string& key, const std::string& v)
{
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        fail(ErrorKind::parse, "config: '" + key + "' expects an integer, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(ErrorKind::parse, "config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    for (auto& f : split_csv_line(v)) out.push_back(trim(f));
    return out;
}

template <class Enum, std::size_t N>
Enum parse_enum(const std::string& key, const std::string& v, const std::array<Enum, N>& all)
{
    for (Enum e : all)
        if (v == to_string(e)) return e;
    std::string options;
    for (Enum e : all) options += std::string(options.empty() ? "" : ", ") + to_string(e);
    fail(ErrorKind::parse, "config: '" + key + "' must be one of {" + options + "}, got '" + v + "'");
}

template <class T>
std::string join(const std::vector<T>& xs)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
    return out;
}

} // namespace detail

/// Everything that determines a training run.
struct RunConfig {
    std::string data_dir = "data";
    PreprocessOptions preprocess{};
    LossSpec loss{LossKind::mse};
    ScheduleSpec schedule{ScheduleKind::cosine, 0.0003};
    std::string augmentation = "flip";
    SamplerSpec sampler{};
    std::vector<std::size_t> channels{8, 16, 32, 64};
    bool residual = false;
    int epochs = 15;
    std::size_t batch_size = 16;
    std::size_t epoch_size = 0; ///< draws per epoch; 0 means the training-set size
    double momentum = 0.9;
    double weight_decay = 0.0005;
    bool fusion = false;
    int fusion_epochs = 20;
    double fusion_lr = 0.005;
    EnsembleSpec ensemble{};
    std::uint64_t seed = 0;

    AugmentationSpec augmentation_spec() const
    {
        auto spec = find_augmentation_preset(augmentation);
        if (!spec) {
            std::string names;
            for (const auto& p : augmentation_presets()) names += std::string(names.empty() ? "" : ", ") + p.name;
            fail(ErrorKind::parse, "config: unknown augmentation preset '" + augmentation + "' (one of " + names + ")");
        }
        return *spec;
    }

    BackboneConfig backbone() const
    {
        BackboneConfig b;
        b.conv_channels = channels;
        b.feature_dim = channels.empty() ? 0 : channels.back();
        b.head = loss.head();
        b.class_count = static_cast<std::size_t>(loss.class_count);
        b.input_side = preprocess.side;
        b.residual = residual;
        return b;
    }

    ScheduleSpec effective_schedule() const
    {
        ScheduleSpec s = schedule;
        s.total_epochs = epochs;
        return s;
    }

    void validate() const
    {
        require(epochs >= 1, "config: epochs must be >= 1");
        require(batch_size >= 1, "config: batch_size must be >= 1");
        require(preprocess.side >= 8, "config: side must be >= 8");
        require(fusion_epochs >= 1, "config: fusion.epochs must be >= 1");
        require(fusion_lr > 0.0, "config: fusion.lr must be > 0");
        loss.validate();
        effective_schedule().validate();
        backbone().validate();
        ensemble.validate();
        OptimizerState{momentum, weight_decay, {}}.validate();
        (void)augmentation_spec();
        require(sampler.alpha >= 0.0 && sampler.alpha <= 1.0, "config: sampler.alpha must lie in [0, 1]");
    }

    KeyValues to_key_values() const
    {
        KeyValues kv;
        kv["data_dir"] = data_dir;
        kv["side"] = std::to_string(preprocess.side);
        kv["graham"] = preprocess.graham ? "true" : "false";
        kv["clahe"] = preprocess.clahe ? "true" : "false";
        kv["loss"] = to_string(loss.kind);
        kv["loss.gamma"] = format_double(loss.gamma);
        kv["loss.mix"] = format_double(loss.mix);
        kv["schedule"] = to_string(schedule.kind);
        kv["lr"] = format_double(schedule.base_lr);
        kv["schedule.milestones"] = detail::join(schedule.milestones);
        kv["schedule.factor"] = format_double(schedule.factor);
        kv["schedule.gamma"] = format_double(schedule.gamma);
        kv["augmentation"] = augmentation;
        kv["sampler"] = to_string(sampler.kind);
        kv["sampler.alpha"] = format_double(sampler.alpha);
        kv["backbone.channels"] = detail::join(channels);
        kv["backbone.residual"] = residual ? "true" : "false";
        kv["epochs"] = std::to_string(epochs);
        kv["batch_size"] = std::to_string(batch_size);
        kv["epoch_size"] = std::to_string(epoch_size);
        kv["momentum"] = format_double(momentum);
        kv["weight_decay"] = format_double(weight_decay);
        kv["fusion"] = fusion ? "true" : "false";
        kv["fusion.epochs"] = std::to_string(fusion_epochs);
        kv["fusion.lr"] = format_double(fusion_lr);
        kv["ensemble"] = to_string(ensemble.kind);
        kv["ensemble.seeds"] = detail::join(ensemble.seeds);
        kv["ensemble.views"] = std::to_string(ensemble.view_count);
        kv["seed"] = std::to_string(seed);
        return kv;
    }

    /// Applies every key in `kv` on top of the current values. Unknown keys are errors.
    void apply(const KeyValues& kv)
    {
        using namespace detail;
        for (const auto& [k, v] : kv) {
            if (k == "data_dir") data_dir = v;
            else if (k == "side") preprocess.side = static_cast<std::size_t>(parse_int(k, v));
            else if (k == "graham") preprocess.graham = parse_bool(k, v);
            else if (k == "clahe") preprocess.clahe = parse_bool(k, v);
            else if (k == "loss")
                loss.kind = parse_enum(k, v, std::array{LossKind::ce, LossKind::focal, LossKind::kappa,
                                                        LossKind::kappa_plus_ce, LossKind::mae, LossKind::mse,
                                                        LossKind::smooth_l1});
            else if (k == "loss.gamma") loss.gamma = parse_double(k, v);
            else if (k == "loss.mix") loss.mix = parse_double(k, v);
            else if (k == "schedule")
                schedule.kind = parse_enum(k, v, std::array{ScheduleKind::constant, ScheduleKind::multistep,
                                                            ScheduleKind::exponential, ScheduleKind::cosine});
            else if (k == "lr") schedule.base_lr = parse_double(k, v);
            else if (k == "schedule.milestones") {
                schedule.milestones.clear();
                for (const auto& m : split_list(v)) schedule.milestones.push_back(static_cast<int>(parse_int(k, m)));
            } else if (k == "schedule.factor") schedule.factor = parse_double(k, v);
            else if (k == "schedule.gamma") schedule.gamma = parse_double(k, v);
            else if (k == "augmentation") augmentation = v;
            else if (k == "sampler")
                sampler.kind = parse_enum(k, v, std::array{SamplerKind::instance, SamplerKind::class_balanced,
                                                           SamplerKind::progressive});
            else if (k == "sampler.alpha") sampler.alpha = parse_double(k, v);
            else if (k == "backbone.channels") {
                channels.clear();
                for (const auto& c : split_list(v)) channels.push_back(static_cast<std::size_t>(parse_int(k, c)));
            } else if (k == "backbone.residual") residual = parse_bool(k, v);
            else if (k == "epochs") epochs = static_cast<int>(parse_int(k, v));
            else if (k == "batch_size") batch_size = static_cast<std::size_t>(parse_int(k, v));
            else if (k == "epoch_size") epoch_size = static_cast<std::size_t>(parse_int(k, v));
            else if (k == "momentum") momentum = parse_double(k, v);
            else if (k == "weight_decay") weight_decay = parse_double(k, v);
            else if (k == "fusion") fusion = parse_bool(k, v);
            else if (k == "fusion.epochs") fusion_epochs = static_cast<int>(parse_int(k, v));
            else if (k == "fusion.lr") fusion_lr = parse_double(k, v);
            else if (k == "ensemble")
                ensemble.kind = parse_enum(k, v, std::array{EnsembleKind::none, EnsembleKind::multi_model,
                                                            EnsembleKind::multi_view});
            else if (k == "ensemble.seeds") {
                ensemble.seeds.clear();
                for (const auto& s : split_list(v)) ensemble.seeds.push_back(static_cast<std::uint64_t>(parse_int(k, s)));
            } else if (k == "ensemble.views") ensemble.view_count = static_cast<int>(parse_int(k, v));
            else if (k == "seed") seed = static_cast<std::uint64_t>(parse_int(k, v));
            else fail(ErrorKind::parse, "config: unknown key '" + k + "'");
        }
    }

    std::string serialize() const
    {
        std::string out;
        for (const auto& [k, v] : to_key_values()) out += k + " = " + v + "\n";
        return out;
    }

    /// SHA-256 of the canonical serialization.
    std::string hash() const { return sha256_hex(serialize()); }

    friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.serialize() == b.serialize(); }
};

inline RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>")
{
    RunConfig cfg;
    const KeyValues kv = parse_key_values(in, source);
    try {
        cfg.apply(kv);
    } catch (const Error& e) {
        throw Error(e.kind(), source + ": " + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config '" + path.string() + "'");
    return parse_run_config(in, path.string());
}

inline void save_run_config(const fs::path& path, const RunConfig& cfg)
{
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write config '" + path.string() + "'");
    out << cfg.serialize();
}

} // namespace drgrade
