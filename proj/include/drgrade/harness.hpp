#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drgrade/checkpoint.hpp"
#include "drgrade/config.hpp"
#include "drgrade/ensemble.hpp"
#include "drgrade/fusion.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/pipeline.hpp"
#include "drgrade/svg.hpp"

namespace drgrade {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Preprocessed dataset

inline const std::array<const char*, 3> kSplits{"train", "validation", "test"};

struct SplitData {
    Manifest manifest;
    std::vector<Image> images; ///< preprocessed, values in [0, 1]
    std::vector<Grade> labels;
};

struct Dataset {
    fs::path root;
    PreprocessOptions preprocess;
    std::map<std::string, SplitData> splits;

    const SplitData& split(const std::string& name) const
    {
        auto it = splits.find(name);
        if (it == splits.end()) fail(ErrorKind::io, "dataset: split '" + name + "' is not loaded");
        return it->second;
    }
};

inline SplitData load_split(const fs::path& manifest_path, const PreprocessOptions& opt)
{
    SplitData s;
    s.manifest = load_manifest(manifest_path);
    if (s.manifest.size() == 0) fail(ErrorKind::io, "dataset: '" + manifest_path.string() + "' has no rows");
    s.images = load_split_images(s.manifest, opt);
    s.labels = s.manifest.labels();
    return s;
}

/// Reads <root>/{train,validation,test}.csv and preprocesses every image.
inline Dataset load_dataset(const fs::path& root, const PreprocessOptions& opt)
{
    Dataset d;
    d.root = root;
    d.preprocess = opt;
    for (const char* split : kSplits) {
        const fs::path p = root / (std::string(split) + ".csv");
        if (!fs::exists(p)) fail(ErrorKind::io, "dataset: missing manifest '" + p.string() + "'");
        d.splits[split] = load_split(p, opt);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_kappa = 0.0;
    double validation_kappa = 0.0;
    std::vector<std::size_t> sampler_histogram;
};

struct TrainResult {
    Model model; ///< parameters of the best validation epoch
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_validation_kappa = 0.0;
};

inline Grade output_to_grade(const Tensor& output, std::size_t row, HeadKind head)
{
    if (head == HeadKind::regression) return score_to_grade(output.at(row, 0), 4);
    std::size_t best = 0;
    for (std::size_t c = 1; c < output.dim(1); ++c)
        if (output.at(row, c) > output.at(row, best)) best = c;
    return static_cast<Grade>(best);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains one backbone with `seed` and keeps the epoch with the highest
/// validation Kappa (first one on ties). Train Kappa is measured on the
/// augmented training draws of the epoch, before each update.
inline TrainResult train_backbone(const RunConfig& cfg, const Dataset& data, std::uint64_t seed,
                                  const EpochCallback& on_epoch = {})
{
    cfg.validate();
    const SplitData& train = data.split("train");
    const SplitData& val = data.split("validation");
    const BackboneConfig bcfg = cfg.backbone();
    const AugmentationSpec aug = cfg.augmentation_spec();
    const ScheduleSpec schedule = cfg.effective_schedule();

    Model model{bcfg, make_backbone_params(bcfg), compute_norm_stats(train.images)};
    Rng init = Rng::derive(seed, {0xB0});
    he_init(model.params, init);
    std::optional<PcaColorBasis> basis;
    if (aug.krizhevsky) basis = fit_pca_basis(train.images);

    OptimizerState opt{cfg.momentum, cfg.weight_decay, {}};
    SamplerState sampler{cfg.sampler, train.labels, 0};
    const std::size_t epoch_size = cfg.epoch_size ? cfg.epoch_size : train.images.size();

    TrainResult result;
    result.model = model;
    for (int t = 0; t < cfg.epochs; ++t) {
        EpochRecord rec;
        rec.epoch = t;
        rec.lr = lr_at(schedule, t);
        sampler.epoch = t;
        Rng plan_rng = Rng::derive(seed, {0x5A, static_cast<std::uint64_t>(t)});
        EpochPlan plan = draw_epoch(sampler, plan_rng, epoch_size);
        rec.sampler_histogram = plan_histogram(plan, train.labels);

        BatchStream stream(train.images, train.labels, std::move(plan), cfg.batch_size, aug, seed,
                           static_cast<std::uint64_t>(t), basis ? &*basis : nullptr);
        std::vector<Grade> seen, predicted;
        double loss_sum = 0.0;
        std::size_t batches = 0;
        Batch batch;
        while (stream.next(batch)) {
            zscore_batch(batch.images, model.norm);
            ForwardResult fr = forward(bcfg, model.params, batch.images);
            const LossOutput loss = evaluate_loss(cfg.loss, fr.output, batch.labels);
            for (std::size_t i = 0; i < batch.labels.size(); ++i) {
                seen.push_back(batch.labels[i]);
                predicted.push_back(output_to_grade(fr.output, i, bcfg.head));
            }
            backward(bcfg, model.params, fr.cache, loss.grad);
            sgd_step(model.params, opt, rec.lr);
            loss_sum += loss.value;
            ++batches;
        }
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.train_kappa = quadratic_weighted_kappa(seen, predicted);
        rec.validation_kappa = quadratic_weighted_kappa(val.labels, predict_images(model, val.images).grades());
        if (result.best_epoch < 0 || rec.validation_kappa > result.best_validation_kappa) {
            result.best_epoch = t;
            result.best_validation_kappa = rec.validation_kappa;
            result.model = model;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Paired feature fusion on a frozen backbone

inline Tensor extract_features(const Model& model, std::span<const Image> images, std::size_t chunk = 64)
{
    require(!images.empty(), "extract_features: no images");
    Tensor out({images.size(), model.config.feature_dim});
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t end = std::min(images.size(), start + chunk);
        Tensor batch = stack_images(images.subspan(start, end - start));
        zscore_batch(batch, model.norm);
        const ForwardResult r = forward(model.config, model.params, batch);
        std::copy(r.features.raw(), r.features.raw() + r.features.size(), out.raw() + start * model.config.feature_dim);
    }
    return out;
}

inline PairedFeatures paired_features(const Model& model, const SplitData& split)
{
    PairedFeatures pf;
    pf.features = extract_features(model, split.images);
    pf.partner = split.manifest.partners(&pf.self_paired);
    pf.labels = split.labels;
    return pf;
}

inline FusionConfig fusion_config(const Model& model) { return FusionConfig{model.config.feature_dim, {}, 2, false}; }

inline FusionHead train_fusion(const RunConfig& cfg, const Model& model, const Dataset& data, std::uint64_t seed)
{
    FusionTrainOptions opt;
    opt.epochs = cfg.fusion_epochs;
    opt.lr = cfg.fusion_lr;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    opt.seed = seed;
    return train_fusion_head(fusion_config(model), paired_features(model, data.split("train")), opt);
}

inline Prediction fused_prediction(const Model& model, const FusionHead& fusion, const SplitData& split)
{
    const auto scores = fusion_scores(fusion, paired_features(model, split));
    return {HeadKind::regression, Tensor({scores.size(), 1}, scores)};
}

// ---------------------------------------------------------------------------
// Reports

struct EvalSummary {
    double kappa = 0.0;
    ConfusionMatrix confusion{5};
    double mean_quadratic_distance = 0.0;
};

inline EvalSummary summarize(std::span<const Grade> labels, std::span<const Grade> preds)
{
    EvalSummary s;
    s.confusion = confusion(labels, preds, 5);
    s.kappa = quadratic_weighted_kappa(s.confusion);
    s.mean_quadratic_distance = mean_quadratic_distance(s.confusion);
    return s;
}

struct MemberReport {
    std::uint64_t seed = 0;
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_validation_kappa = 0.0;
    double test_kappa = 0.0;          ///< this member alone, final stage (fused when fusion is on)
    double backbone_test_kappa = 0.0; ///< this member alone, backbone head only
    std::string checkpoint;
    std::string checkpoint_sha256;
};

struct RunReport {
    std::string config_hash;
    std::string config_text;
    std::vector<MemberReport> members;
    double validation_kappa = 0.0;
    EvalSummary test;
    std::optional<double> backbone_test_kappa; ///< before fusion, when fusion is on
    std::map<std::string, std::size_t> self_paired; ///< fusion runs: eyes without a partner, per split
    std::string pairing_sha256;                     ///< fusion runs: digest of the training manifest
    double wall_seconds = 0.0;                 ///< kept out of report.json so reports compare bit-for-bit

    const MemberReport& primary() const { return members.at(0); }
};

inline json matrix_json(const ConfusionMatrix& cm)
{
    json rows = json::array();
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < cm.classes(); ++j) row.push_back(cm.at(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json matrix_json(const Tensor& m)
{
    json rows = json::array();
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.dim(1); ++j) row.push_back(m.at(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json to_json(const EpochRecord& r)
{
    return json{{"epoch", r.epoch},
                {"lr", r.lr},
                {"train_loss", r.train_loss},
                {"train_kappa", r.train_kappa},
                {"validation_kappa", r.validation_kappa},
                {"sampler_histogram", r.sampler_histogram}};
}

inline json to_json(const RunReport& r)
{
    json members = json::array();
    for (const auto& m : r.members) {
        json hist = json::array();
        for (const auto& e : m.history) hist.push_back(to_json(e));
        members.push_back(json{{"seed", m.seed},
                               {"best_epoch", m.best_epoch},
                               {"best_validation_kappa", m.best_validation_kappa},
                               {"backbone_test_kappa", m.backbone_test_kappa},
                               {"test_kappa", m.test_kappa},
                               {"checkpoint", m.checkpoint},
                               {"checkpoint_sha256", m.checkpoint_sha256},
                               {"epochs", hist}});
    }
    json j{{"config_hash", r.config_hash},
           {"config", r.config_text},
           {"validation_kappa", r.validation_kappa},
           {"test_kappa", r.test.kappa},
           {"test_mean_quadratic_distance", r.test.mean_quadratic_distance},
           {"test_confusion", matrix_json(r.test.confusion)},
           {"test_confusion_normalized", matrix_json(normalize_rows(r.test.confusion))}};
    if (r.backbone_test_kappa) j["backbone_test_kappa"] = *r.backbone_test_kappa;
    if (!r.pairing_sha256.empty()) j["fusion_pairing"] = json{{"manifest_sha256", r.pairing_sha256}, {"self_paired", r.self_paired}};
    j["members"] = members;
    return j;
}

inline void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << text;
}

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string curves_csv(const std::vector<EpochRecord>& history)
{
    std::string out = "epoch,lr,train_loss,train_kappa,validation_kappa\n";
    for (const auto& e : history)
        out += std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.train_loss) + "," +
               format_double(e.train_kappa) + "," + format_double(e.validation_kappa) + "\n";
    return out;
}

inline std::string curves_svg(const std::vector<EpochRecord>& history, const std::string& title)
{
    svg::Series train{"train kappa", "#d62728", {}, {}}, val{"validation kappa", "#1f77b4", {}, {}};
    for (const auto& e : history) {
        train.x.push_back(e.epoch);
        train.y.push_back(e.train_kappa);
        val.x.push_back(e.epoch);
        val.y.push_back(e.validation_kappa);
    }
    return svg::line_chart({train, val}, title, "epoch", "kappa");
}

inline std::string confusion_csv(const ConfusionMatrix& cm)
{
    std::string out = "truth\\pred";
    for (std::size_t j = 0; j < cm.classes(); ++j) out += "," + std::to_string(j);
    out += "\n";
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < cm.classes(); ++j) out += "," + std::to_string(cm.at(i, j));
        out += "\n";
    }
    return out;
}

/// report.json, curves.csv/svg (primary member), confusion.csv, config.txt and timing.json.
inline void write_run_outputs(const fs::path& out_dir, const RunReport& report)
{
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", to_json(report).dump(2) + "\n");
    write_text(out_dir / "config.txt", report.config_text);
    write_text(out_dir / "curves.csv", curves_csv(report.primary().history));
    write_text(out_dir / "curves.svg", curves_svg(report.primary().history, "Kappa per epoch"));
    write_text(out_dir / "confusion.csv", confusion_csv(report.test.confusion));
    write_text(out_dir / "timing.json", json{{"wall_seconds", report.wall_seconds}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
    fs::path out_dir;            ///< empty: nothing is written
    EpochCallback on_epoch = {}; ///< progress hook
};

/// Final-stage outputs of one trained member on a split.
struct MemberOutputs {
    Prediction backbone;
    Prediction final;
};

inline MemberOutputs member_outputs(const RunConfig& cfg, const Model& model, const std::optional<FusionHead>& fusion,
                                    const SplitData& split, std::uint64_t seed, bool allow_views)
{
    MemberOutputs out;
    if (allow_views && cfg.ensemble.kind == EnsembleKind::multi_view)
        out.backbone = predict_multi_view(model, split.images, cfg.ensemble.view_count, seed);
    else
        out.backbone = predict_images(model, split.images);
    out.final = fusion ? fused_prediction(model, *fusion, split) : out.backbone;
    return out;
}

/// Trains every member (one for plain runs, one per seed for multi-model
/// ensembles), evaluates on the test split and writes outputs when asked.
inline RunReport run(const RunConfig& cfg, const Dataset& data, const RunOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    if (!(data.preprocess == cfg.preprocess))
        fail(ErrorKind::invalid_argument, "run: dataset was preprocessed with different options than the config");
    RunReport report;
    report.config_text = cfg.serialize();
    report.config_hash = cfg.hash();
    if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

    std::vector<std::uint64_t> seeds{cfg.seed};
    if (cfg.ensemble.kind == EnsembleKind::multi_model) seeds = cfg.ensemble.seeds;

    const SplitData& val = data.split("validation");
    const SplitData& test = data.split("test");
    std::vector<Prediction> val_final, test_final, test_backbone;
    for (std::size_t m = 0; m < seeds.size(); ++m) {
        const std::uint64_t seed = seeds[m];
        TrainResult tr = train_backbone(cfg, data, seed, opts.on_epoch);
        std::optional<FusionHead> fusion;
        if (cfg.fusion) fusion = train_fusion(cfg, tr.model, data, seed);

        const MemberOutputs vo = member_outputs(cfg, tr.model, fusion, val, seed, false);
        const MemberOutputs to = member_outputs(cfg, tr.model, fusion, test, seed, true);
        MemberReport mr;
        mr.seed = seed;
        mr.history = tr.history;
        mr.best_epoch = tr.best_epoch;
        mr.best_validation_kappa = tr.best_validation_kappa;
        mr.backbone_test_kappa = quadratic_weighted_kappa(test.labels, to.backbone.grades());
        mr.test_kappa = quadratic_weighted_kappa(test.labels, to.final.grades());
        if (!opts.out_dir.empty()) {
            Checkpoint ck{cfg, tr.model.params, tr.model.norm, fusion, tr.best_epoch, tr.best_validation_kappa};
            const std::string name = seeds.size() == 1 ? "checkpoint.bin" : "checkpoint_seed" + std::to_string(seed) + ".bin";
            save_checkpoint(opts.out_dir / name, ck);
            mr.checkpoint = name;
            mr.checkpoint_sha256 = sha256_file(opts.out_dir / name);
        } else {
            mr.checkpoint_sha256 = sha256_hex(serialize_checkpoint(
                {cfg, tr.model.params, tr.model.norm, fusion, tr.best_epoch, tr.best_validation_kappa}));
        }
        report.members.push_back(std::move(mr));
        val_final.push_back(vo.final);
        test_final.push_back(to.final);
        test_backbone.push_back(to.backbone);
    }
    report.validation_kappa = quadratic_weighted_kappa(val.labels, average_predictions(val_final).grades());
    report.test = summarize(test.labels, average_predictions(test_final).grades());
    if (cfg.fusion) {
        report.backbone_test_kappa = quadratic_weighted_kappa(test.labels, average_predictions(test_backbone).grades());
        for (const char* name : kSplits) {
            std::vector<bool> self;
            data.split(name).manifest.partners(&self);
            report.self_paired[name] = static_cast<std::size_t>(std::count(self.begin(), self.end(), true));
        }
        std::ostringstream manifest;
        write_manifest(manifest, data.split("train").manifest);
        report.pairing_sha256 = sha256_hex(manifest.str());
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!opts.out_dir.empty()) write_run_outputs(opts.out_dir, report);
    return report;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateReport {
    std::string split;
    std::size_t samples = 0;
    EvalSummary backbone;
    std::optional<EvalSummary> fused;
    std::vector<std::string> checkpoints;
    int view_count = 1;

    const EvalSummary& final() const { return fused ? *fused : backbone; }
};

inline json to_json(const EvaluateReport& r)
{
    json j{{"split", r.split},
           {"samples", r.samples},
           {"view_count", r.view_count},
           {"checkpoints", r.checkpoints},
           {"kappa", r.backbone.kappa},
           {"mean_quadratic_distance", r.backbone.mean_quadratic_distance},
           {"confusion", matrix_json(r.backbone.confusion)},
           {"confusion_normalized", matrix_json(normalize_rows(r.backbone.confusion))}};
    if (r.fused) {
        j["fused_kappa"] = r.fused->kappa;
        j["fused_confusion"] = matrix_json(r.fused->confusion);
    }
    return j;
}

/// Evaluates one checkpoint, or the mean of several (multi-model), on a split.
/// `view_count` > 1 adds flip/rotation views. Fusion is used when every
/// checkpoint carries a fusion head.
inline EvaluateReport evaluate(std::span<const Checkpoint> checkpoints, const SplitData& split, int view_count = 1,
                               std::uint64_t seed = 0)
{
    require(!checkpoints.empty(), "evaluate: no checkpoints");
    require(view_count >= 1, "evaluate: view_count must be >= 1");
    EvaluateReport r;
    r.split = split.manifest.split;
    r.samples = split.images.size();
    r.view_count = view_count;
    const BackboneConfig bcfg = checkpoints[0].config.backbone();
    bool all_fused = true;
    std::vector<Prediction> backbone, fused;
    for (const auto& ck : checkpoints) {
        if (!(ck.config.backbone() == bcfg))
            fail(ErrorKind::invalid_argument, "evaluate: checkpoints have different backbone configs");
        if (split.images.front().dim(1) != bcfg.input_side)
            fail(ErrorKind::invalid_argument, "evaluate: images are " + std::to_string(split.images.front().dim(1)) +
                                                  " px but the checkpoint expects " + std::to_string(bcfg.input_side));
        const Model model{ck.config.backbone(), ck.backbone, ck.norm};
        backbone.push_back(view_count > 1 ? predict_multi_view(model, split.images, view_count, seed)
                                          : predict_images(model, split.images));
        if (ck.fusion) fused.push_back(fused_prediction(model, *ck.fusion, split));
        else all_fused = false;
    }
    r.backbone = summarize(split.labels, average_predictions(backbone).grades());
    if (all_fused) r.fused = summarize(split.labels, average_predictions(fused).grades());
    return r;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
    std::string name;      ///< "component" or "component/variant"
    RunConfig config;
    std::vector<std::string> flags; ///< refinements active in this row (stacked tables)
};

struct AblationEntry {
    std::string name;
    std::vector<std::string> flags;
    std::string config_hash;
    double validation_kappa = 0.0;
    double test_kappa = 0.0;
    double delta = 0.0; ///< test Kappa minus the previous row's (0 for the first row)
};

/// Matrix file: base keys first, then one `[name]` section per row. With
/// `mode = stacked` (default) each section adds to the previous row;
/// with `mode = independent` each section applies to the base alone.
inline std::vector<AblationRow> parse_ablation(std::istream& in, const RunConfig& defaults,
                                               const std::string& source = "<matrix>")
{
    KeyValues base;
    std::vector<std::pair<std::string, KeyValues>> sections;
    std::string line, mode = "stacked";
    std::size_t line_no = 0;
    std::string text_block;
    auto flush = [&](KeyValues& target) {
        std::istringstream block(text_block);
        for (auto& [k, v] : parse_key_values(block, source)) {
            if (k == "mode" && &target == &base) mode = v;
            else target[k] = v;
        }
        text_block.clear();
    };
    KeyValues* current = &base;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
            flush(*current);
            sections.push_back({detail::trim(t.substr(1, t.size() - 2)), {}});
            current = &sections.back().second;
            continue;
        }
        text_block += line + "\n";
    }
    flush(*current);
    if (mode != "stacked" && mode != "independent")
        fail(ErrorKind::parse, source + ": mode must be 'stacked' or 'independent'");
    if (sections.empty()) fail(ErrorKind::parse, source + ": no [row] sections");

    std::vector<AblationRow> rows;
    RunConfig acc = defaults;
    acc.apply(base);
    const RunConfig base_cfg = acc;
    std::vector<std::string> flags;
    for (const auto& [name, kv] : sections) {
        RunConfig cfg = mode == "stacked" ? acc : base_cfg;
        cfg.apply(kv);
        cfg.validate();
        if (mode == "stacked") {
            acc = cfg;
            if (!rows.empty()) flags.push_back(name);
        }
        rows.push_back({name, cfg, mode == "stacked" ? flags : std::vector<std::string>{}});
    }
    return rows;
}

inline const std::array<const char*, 6> kStackedColumns{"HR", "MSE", "CD", "DA", "PFF", "ENS"};

/// The seven-row refinement stack: a low-resolution CE baseline with constant
/// learning rate and flip/rotation augmentation, then high resolution, MSE,
/// cosine decay, stronger augmentation, paired fusion and a seed ensemble.
inline std::vector<AblationRow> stacked_preset(const RunConfig& base, std::size_t low_side = 0,
                                               std::size_t ensemble_members = 5)
{
    require(ensemble_members >= 1, "stacked preset: ensemble needs at least one member");
    RunConfig cfg = base;
    const std::size_t high = base.preprocess.side;
    cfg.preprocess.side = low_side ? low_side : std::max<std::size_t>(16, high / 2);
    cfg.loss.kind = LossKind::ce;
    cfg.schedule.kind = ScheduleKind::constant;
    cfg.augmentation = "flip_rotate";
    cfg.fusion = false;
    cfg.ensemble = {};
    std::vector<AblationRow> rows;
    std::vector<std::string> flags;
    rows.push_back({"baseline", cfg, flags});
    auto step = [&](const char* name, auto&& mutate) {
        mutate(cfg);
        flags.push_back(name);
        rows.push_back({name, cfg, flags});
    };
    step("HR", [&](RunConfig& c) { c.preprocess.side = high; });
    step("MSE", [](RunConfig& c) { c.loss.kind = LossKind::mse; });
    step("CD", [](RunConfig& c) { c.schedule.kind = ScheduleKind::cosine; });
    step("DA", [](RunConfig& c) { c.augmentation = "flip_rotate_crop_jitter"; });
    step("PFF", [](RunConfig& c) { c.fusion = true; });
    step("ENS", [&](RunConfig& c) {
        c.ensemble.kind = EnsembleKind::multi_model;
        c.ensemble.seeds.clear();
        for (std::size_t i = 0; i < ensemble_members; ++i) c.ensemble.seeds.push_back(c.seed + i);
    });
    for (auto& r : rows) r.config.validate();
    return rows;
}

/// Loads each distinct (data_dir, preprocessing) once.
class DatasetCache {
public:
    const Dataset& get(const RunConfig& cfg)
    {
        const std::string key = cfg.data_dir + "|" + std::to_string(cfg.preprocess.side) + "|" +
                                (cfg.preprocess.graham ? "g" : "-") + (cfg.preprocess.clahe ? "c" : "-");
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, load_dataset(cfg.data_dir, cfg.preprocess)).first;
        return it->second;
    }

private:
    std::map<std::string, Dataset> cache_;
};

inline std::vector<AblationEntry> ablation_table(const std::vector<AblationRow>& rows, const std::vector<RunReport>& reports)
{
    require(rows.size() == reports.size(), "ablation: one report per row");
    std::vector<AblationEntry> table;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        AblationEntry e{rows[i].name, rows[i].flags, reports[i].config_hash, reports[i].validation_kappa,
                        reports[i].test.kappa, 0.0};
        if (i > 0) e.delta = e.test_kappa - table.back().test_kappa;
        table.push_back(e);
    }
    return table;
}

inline std::string format_delta_percent(double delta)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f%%", 100.0 * delta);
    return buf;
}

inline std::string ablation_csv(const std::vector<AblationEntry>& table, bool stacked_columns)
{
    std::string out = "name,";
    if (stacked_columns)
        for (const char* c : kStackedColumns) out += std::string(c) + ",";
    out += "validation_kappa,test_kappa,delta_test_kappa,delta_percent\n";
    for (const auto& e : table) {
        out += e.name + ",";
        if (stacked_columns)
            for (const char* c : kStackedColumns)
                out += std::string(std::find(e.flags.begin(), e.flags.end(), c) != e.flags.end() ? "x" : "") + ",";
        out += format_double(e.validation_kappa) + "," + format_double(e.test_kappa) + "," + format_double(e.delta) +
               "," + format_delta_percent(e.delta) + "\n";
    }
    return out;
}

inline json to_json(const std::vector<AblationEntry>& table)
{
    json rows = json::array();
    for (const auto& e : table)
        rows.push_back(json{{"name", e.name},
                            {"flags", e.flags},
                            {"config_hash", e.config_hash},
                            {"validation_kappa", e.validation_kappa},
                            {"test_kappa", e.test_kappa},
                            {"delta_test_kappa", e.delta},
                            {"delta_percent", format_delta_percent(e.delta)}});
    return rows;
}

/// Box plot of test Kappa grouped by the part of the row name before '/'.
inline std::string ablation_box_plot(const std::vector<AblationEntry>& table)
{
    std::vector<svg::BoxGroup> groups;
    for (const auto& e : table) {
        const std::string group = e.name.substr(0, e.name.find('/'));
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.label == group; });
        if (it == groups.end()) {
            groups.push_back({group, {}});
            it = groups.end() - 1;
        }
        it->values.push_back(e.test_kappa);
    }
    return svg::box_plot(groups, "Test Kappa per component", "test kappa");
}

inline std::vector<AblationEntry> ablate(const std::vector<AblationRow>& rows, DatasetCache& cache, const fs::path& out_dir,
                                         bool stacked_columns, const EpochCallback& on_epoch = {})
{
    require(!rows.empty(), "ablate: empty matrix");
    std::vector<RunReport> reports;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        RunOptions opts;
        if (!out_dir.empty()) {
            std::string dir = rows[i].name;
            std::replace(dir.begin(), dir.end(), '/', '_');
            opts.out_dir = out_dir / (std::to_string(i) + "_" + dir);
        }
        opts.on_epoch = on_epoch;
        reports.push_back(run(rows[i].config, cache.get(rows[i].config), opts));
    }
    auto table = ablation_table(rows, reports);
    if (!out_dir.empty()) {
        write_text(out_dir / "ablation.csv", ablation_csv(table, stacked_columns));
        write_text(out_dir / "ablation.json", to_json(table).dump(2) + "\n");
        write_text(out_dir / "ablation_box.svg", ablation_box_plot(table));
    }
    return table;
}

} // namespace drgrade
