// drgrade: command-line harness for the grading toolkit.
//
//   drgrade generate   --out data [--side 64] [--train 2000] [--seed 1] ...
//   drgrade preprocess --input data/train.csv --out prep [--side 64 --graham --clahe]
//   drgrade train      [--config run.cfg] [--lr 0.0003 --loss mse ...] --out runs/a
//   drgrade evaluate   --checkpoint runs/a/checkpoint.bin [--split test] [--views 4]
//   drgrade fuse       --checkpoint runs/a/checkpoint.bin --out runs/a_fused
//   drgrade ablate     (--matrix table.ini | --preset stacked) --out runs/abl
//   drgrade report     --run runs/a [--run runs/b ...]
//
// Failures print {"error": <kind>, "message": ...} on stderr and exit nonzero.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "drgrade/drgrade.hpp"

namespace {

using namespace drgrade;

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2 };

int emit_error(const std::string& kind, const std::string& message, int code)
{
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

/// RunConfig keys as flags: "loss.gamma" -> --loss-gamma, "data_dir" -> --data-dir.
std::string flag_for_key(std::string key)
{
    for (char& c : key)
        if (c == '.' || c == '_') c = '-';
    return "--" + key;
}

struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values; ///< key -> raw flag value
    std::vector<std::string> sets;             ///< --set key=value
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags)
{
    cmd->add_option("--config", flags.config_file, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", flags.sets, "override one config key (key=value), repeatable");
    for (const auto& [key, value] : RunConfig{}.to_key_values()) {
        if (key == "seed") continue; // handled by the shared --seed flag
        cmd->add_option(flag_for_key(key), flags.values[key], "config key '" + key + "' (default " + value + ")");
    }
}

RunConfig resolve_config(const CLI::App* cmd, const ConfigFlags& flags, const std::optional<std::uint64_t>& seed)
{
    RunConfig cfg;
    if (!flags.config_file.empty()) cfg = load_run_config(flags.config_file);
    KeyValues kv;
    for (const auto& [key, value] : flags.values)
        if (cmd->count(flag_for_key(key))) kv[key] = value;
    for (const auto& s : flags.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail(ErrorKind::parse, "--set expects key=value, got '" + s + "'");
        kv[detail::trim(s.substr(0, eq))] = detail::trim(s.substr(eq + 1));
    }
    if (seed) kv["seed"] = std::to_string(*seed);
    cfg.apply(kv);
    cfg.validate();
    return cfg;
}

EpochCallback progress(bool quiet)
{
    if (quiet) return {};
    return [](const EpochRecord& r) {
        std::fprintf(stderr, "epoch %3d  lr %.3g  loss %.4f  train_kappa %.4f  validation_kappa %.4f\n", r.epoch, r.lr,
                     r.train_loss, r.train_kappa, r.validation_kappa);
    };
}

fs::path default_out(const std::string& prefix, const std::string& hash)
{
    return fs::path("runs") / (prefix + "_" + hash.substr(0, 12));
}

json run_summary(const RunReport& r, const fs::path& out)
{
    json j{{"out", out.string()},
           {"config_hash", r.config_hash},
           {"validation_kappa", r.validation_kappa},
           {"test_kappa", r.test.kappa},
           {"test_mean_quadratic_distance", r.test.mean_quadratic_distance}};
    if (r.backbone_test_kappa) j["backbone_test_kappa"] = *r.backbone_test_kappa;
    return j;
}

SplitData load_checkpoint_split(const Checkpoint& ck, const fs::path& data_dir, const std::string& split)
{
    const fs::path root = data_dir.empty() ? fs::path(ck.config.data_dir) : data_dir;
    return load_split(root / (split + ".csv"), ck.config.preprocess);
}

// ---------------------------------------------------------------------------

int cmd_generate(const fs::path& out, std::optional<std::uint64_t> seed, int side, int train_total, int val_total,
                 int test_total, double corrupt, double jitter, const std::vector<int>& counts)
{
    SyntheticSpec spec;
    spec.image_side = side;
    spec.train_counts = default_class_counts(train_total);
    if (!counts.empty()) {
        require(counts.size() == 5, "generate: --counts takes five per-grade image counts");
        std::copy(counts.begin(), counts.end(), spec.train_counts.begin());
    }
    spec.validation_total = val_total;
    spec.test_total = test_total;
    spec.corrupt_fraction = corrupt;
    spec.pair_grade_jitter = jitter;
    if (seed) spec.seed = *seed;
    const SyntheticDataset ds = generate_synthetic(spec, out);
    json splits = json::object();
    for (const auto& [name, m] : ds.splits) {
        std::array<int, 5> hist{};
        for (const auto& row : m.rows) ++hist[static_cast<std::size_t>(row.grade)];
        splits[name] = json{{"images", m.size()}, {"grade_counts", hist}};
    }
    const json summary{{"root", out.string()}, {"seed", spec.seed}, {"image_side", spec.image_side}, {"splits", splits}};
    write_text(out / "generate.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return kOk;
}

int cmd_preprocess(const fs::path& input, const fs::path& out, const PreprocessOptions& opt)
{
    fs::create_directories(out);
    std::vector<fs::path> files;
    if (input.extension() == ".csv") {
        const Manifest m = load_manifest(input);
        for (std::size_t i = 0; i < m.size(); ++i) files.push_back(m.image_path(i));
    } else {
        files.push_back(input);
    }
    for (const auto& f : files) write_image(out / f.filename(), rescale(preprocess_image(read_image(f), opt), 255.0));
    std::cout << json{{"out", out.string()}, {"images", files.size()}, {"side", opt.side}, {"graham", opt.graham},
                      {"clahe", opt.clahe}}
                     .dump(2)
              << "\n";
    return kOk;
}

int cmd_train(const RunConfig& cfg, fs::path out, bool quiet)
{
    if (out.empty()) out = default_out("train", cfg.hash());
    const Dataset data = load_dataset(cfg.data_dir, cfg.preprocess);
    RunOptions opts{out, progress(quiet)};
    const RunReport report = run(cfg, data, opts);
    std::cout << run_summary(report, out).dump(2) << "\n";
    return kOk;
}

int cmd_evaluate(const std::vector<fs::path>& checkpoints, const fs::path& data_dir, const std::string& split, int views,
                 std::uint64_t seed, const fs::path& out)
{
    std::vector<Checkpoint> cks;
    for (const auto& p : checkpoints) cks.push_back(load_checkpoint(p));
    const SplitData data = load_checkpoint_split(cks.front(), data_dir, split);
    EvaluateReport r = evaluate(cks, data, views, seed);
    for (const auto& p : checkpoints) r.checkpoints.push_back(p.string());
    json j = to_json(r);
    if (cks.size() == 1) j["stored_best_validation_kappa"] = cks.front().best_validation_kappa;
    if (!out.empty()) {
        fs::create_directories(out);
        write_text(out / ("evaluate_" + split + ".json"), j.dump(2) + "\n");
        write_text(out / ("confusion_" + split + ".csv"), confusion_csv(r.final().confusion));
    }
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_fuse(const fs::path& checkpoint, const fs::path& data_dir, std::optional<std::uint64_t> seed,
             std::optional<int> epochs, std::optional<double> lr, fs::path out)
{
    Checkpoint ck = load_checkpoint(checkpoint);
    RunConfig cfg = ck.config;
    if (!data_dir.empty()) cfg.data_dir = data_dir.string();
    if (epochs) cfg.fusion_epochs = *epochs;
    if (lr) cfg.fusion_lr = *lr;
    cfg.fusion = true;
    cfg.validate();
    const std::uint64_t s = seed.value_or(cfg.seed);
    if (out.empty()) out = default_out("fuse", cfg.hash());
    fs::create_directories(out);

    const Dataset data = load_dataset(cfg.data_dir, cfg.preprocess);
    const Model model{cfg.backbone(), ck.backbone, ck.norm};
    const FusionHead head = train_fusion(cfg, model, data, s);
    json j{{"checkpoint", checkpoint.string()}, {"seed", s}, {"fusion_epochs", cfg.fusion_epochs}, {"fusion_lr", cfg.fusion_lr}};
    for (const char* split : {"validation", "test"}) {
        const SplitData& sd = data.split(split);
        std::vector<bool> self;
        sd.manifest.partners(&self);
        j[split] = json{{"backbone_kappa", quadratic_weighted_kappa(sd.labels, predict_images(model, sd.images).grades())},
                        {"fused_kappa", quadratic_weighted_kappa(sd.labels, fused_prediction(model, head, sd).grades())},
                        {"self_paired", std::count(self.begin(), self.end(), true)}};
    }
    ck.config = cfg;
    ck.fusion = head;
    save_checkpoint(out / "checkpoint.bin", ck);
    j["out_checkpoint"] = (out / "checkpoint.bin").string();
    j["out_checkpoint_sha256"] = sha256_file(out / "checkpoint.bin");
    write_text(out / "fuse.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_ablate(const RunConfig& base, const fs::path& matrix, const std::string& preset, std::size_t low_side,
               std::size_t members, fs::path out, bool quiet)
{
    std::vector<AblationRow> rows;
    bool stacked_columns = false;
    if (!matrix.empty()) {
        std::ifstream in(matrix);
        if (!in) fail(ErrorKind::io, "cannot open matrix '" + matrix.string() + "'");
        rows = parse_ablation(in, base, matrix.string());
    } else if (preset == "stacked") {
        rows = stacked_preset(base, low_side, members);
        stacked_columns = true;
    } else {
        fail(ErrorKind::invalid_argument, "ablate: give --matrix <file> or --preset stacked");
    }
    if (out.empty()) out = default_out("ablate", base.hash());
    DatasetCache cache;
    const auto table = ablate(rows, cache, out, stacked_columns, progress(quiet));
    std::cout << to_json(table).dump(2) << "\n";
    return kOk;
}

int cmd_report(const std::vector<fs::path>& runs, const fs::path& out)
{
    json rows = json::array();
    std::string md = "| run | config | validation kappa | test kappa | best epoch |\n|---|---|---|---|---|\n";
    for (const auto& dir : runs) {
        const json r = json::parse(read_text(dir / "report.json"));
        const json& primary = r.at("members").at(0);
        rows.push_back(json{{"run", dir.string()},
                            {"config_hash", r.at("config_hash")},
                            {"validation_kappa", r.at("validation_kappa")},
                            {"test_kappa", r.at("test_kappa")},
                            {"best_epoch", primary.at("best_epoch")},
                            {"members", r.at("members").size()}});
        char line[512];
        std::snprintf(line, sizeof line, "| %s | %.12s | %.4f | %.4f | %d |\n", dir.string().c_str(),
                      r.at("config_hash").get<std::string>().c_str(), r.at("validation_kappa").get<double>(),
                      r.at("test_kappa").get<double>(), primary.at("best_epoch").get<int>());
        md += line;

        std::vector<EpochRecord> history;
        for (const auto& e : primary.at("epochs")) {
            EpochRecord rec;
            rec.epoch = e.at("epoch");
            rec.train_kappa = e.at("train_kappa");
            rec.validation_kappa = e.at("validation_kappa");
            history.push_back(rec);
        }
        write_text(dir / "curves.svg", curves_svg(history, "Kappa per epoch: " + dir.filename().string()));
    }
    if (!out.empty()) {
        fs::create_directories(out);
        write_text(out / "summary.json", rows.dump(2) + "\n");
        write_text(out / "summary.md", md);
    }
    std::cout << md;
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Ordinal grading toolkit: synthetic data, training, evaluation and ablations"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    fs::path out;
    bool quiet = false;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--out", out, "output directory");
    };

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic paired-eye dataset");
    add_common(gen);
    int gen_side = 64, gen_train = 2000, gen_val = 500, gen_test = 500;
    double gen_corrupt = 0.0, gen_jitter = 0.04;
    std::vector<int> gen_counts;
    gen->add_option("--side", gen_side, "image side in pixels");
    gen->add_option("--train", gen_train, "training images (geometric class profile)");
    gen->add_option("--counts", gen_counts, "explicit training counts for grades 0..4")->expected(5);
    gen->add_option("--validation", gen_val, "validation images");
    gen->add_option("--test", gen_test, "test images");
    gen->add_option("--corrupt-fraction", gen_corrupt, "fraction of blurred images (one eye per pair)");
    gen->add_option("--pair-jitter", gen_jitter, "probability that the two eyes differ by one grade");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "write preprocessed images for inspection");
    add_common(pre);
    fs::path pre_input;
    PreprocessOptions pre_opt;
    pre->add_option("--input", pre_input, "image file or manifest CSV")->required()->check(CLI::ExistingFile);
    pre->add_option("--side", pre_opt.side, "output side");
    pre->add_flag("--graham", pre_opt.graham, "apply Graham contrast normalization");
    pre->add_flag("--clahe", pre_opt.clahe, "apply CLAHE");
    pre->add_option("--graham-theta", pre_opt.graham_params.theta, "Gaussian sigma at 512 px width");
    pre->add_option("--clahe-clip", pre_opt.clahe_params.clip_limit, "CLAHE clip limit");
    pre->add_option("--clahe-grid", pre_opt.clahe_params.tile_grid, "CLAHE tile grid");

    // train
    auto* train = app.add_subcommand("train", "train one run (or one multi-model ensemble)");
    add_common(train);
    ConfigFlags train_flags;
    add_config_flags(train, train_flags);
    train->add_flag("--quiet", quiet, "no per-epoch progress");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "evaluate checkpoints on a split");
    add_common(eval);
    std::vector<fs::path> eval_cks;
    fs::path eval_data;
    std::string eval_split = "test";
    int eval_views = 1;
    eval->add_option("--checkpoint", eval_cks, "checkpoint file; several are averaged")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "dataset root (default: the checkpoint's data_dir)");
    eval->add_option("--split", eval_split, "train, validation or test")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    eval->add_option("--views", eval_views, "test-time views per image (1 = plain)");

    // fuse
    auto* fuse = app.add_subcommand("fuse", "train a paired-eye fusion head on a frozen checkpoint");
    add_common(fuse);
    fs::path fuse_ck, fuse_data;
    std::optional<int> fuse_epochs;
    std::optional<double> fuse_lr;
    fuse->add_option("--checkpoint", fuse_ck, "backbone checkpoint")->required()->check(CLI::ExistingFile);
    fuse->add_option("--data", fuse_data, "dataset root (default: the checkpoint's data_dir)");
    fuse->add_option("--fusion-epochs", fuse_epochs, "fusion training epochs");
    fuse->add_option("--fusion-lr", fuse_lr, "fusion learning rate");

    // ablate
    auto* abl = app.add_subcommand("ablate", "run an ablation matrix");
    add_common(abl);
    ConfigFlags abl_flags;
    add_config_flags(abl, abl_flags);
    fs::path abl_matrix;
    std::string abl_preset;
    std::size_t abl_low = 0, abl_members = 5;
    abl->add_option("--matrix", abl_matrix, "matrix file: base keys, then [row] sections")->check(CLI::ExistingFile);
    abl->add_option("--preset", abl_preset, "built-in matrix")->check(CLI::IsMember({"stacked"}));
    abl->add_option("--low-side", abl_low, "baseline side of the stacked preset (default side/2)");
    abl->add_option("--members", abl_members, "ensemble size of the stacked preset");
    abl->add_flag("--quiet", quiet, "no per-epoch progress");

    // report
    auto* rep = app.add_subcommand("report", "summarize run directories and redraw their curves");
    add_common(rep);
    std::vector<fs::path> rep_runs;
    rep->add_option("--run", rep_runs, "run directory holding report.json")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("usage", e.what(), kUsage);
    }

    try {
        if (*gen) {
            if (out.empty()) fail(ErrorKind::invalid_argument, "generate: --out <dir> is required");
            return cmd_generate(out, seed, gen_side, gen_train, gen_val, gen_test, gen_corrupt, gen_jitter, gen_counts);
        }
        if (*pre) {
            if (out.empty()) fail(ErrorKind::invalid_argument, "preprocess: --out <dir> is required");
            return cmd_preprocess(pre_input, out, pre_opt);
        }
        if (*train) return cmd_train(resolve_config(train, train_flags, seed), out, quiet);
        if (*eval) return cmd_evaluate(eval_cks, eval_data, eval_split, eval_views, seed.value_or(0), out);
        if (*fuse) return cmd_fuse(fuse_ck, fuse_data, seed, fuse_epochs, fuse_lr, out);
        if (*abl) return cmd_ablate(resolve_config(abl, abl_flags, seed), abl_matrix, abl_preset, abl_low, abl_members, out, quiet);
        if (*rep) return cmd_report(rep_runs, out);
    } catch (const Error& e) {
        return emit_error(to_string(e.kind()), e.what(), kFailure);
    } catch (const json::exception& e) {
        return emit_error("parse", e.what(), kFailure);
    } catch (const std::exception& e) {
        return emit_error("internal", e.what(), kFailure);
    }
    return kOk;
}
