#include <gtest/gtest.h>

#include <sstream>

#include "drgrade/harness.hpp"

using namespace drgrade;

namespace {

class HarnessTest : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        root_ = fs::temp_directory_path() / "drgrade_test_harness";
        fs::remove_all(root_);
        SyntheticSpec spec;
        spec.image_side = 32;
        spec.train_counts = {20, 8, 8, 6, 6};
        spec.validation_total = 16;
        spec.test_total = 16;
        spec.seed = 3;
        generate_synthetic(spec, root_ / "data");
    }

    static void TearDownTestSuite() { fs::remove_all(root_); }

    static RunConfig tiny_config()
    {
        RunConfig cfg;
        cfg.data_dir = (root_ / "data").string();
        cfg.preprocess.side = 16;
        cfg.channels = {4, 8};
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.fusion_epochs = 2;
        cfg.seed = 5;
        return cfg;
    }

    static const Dataset& data()
    {
        static const Dataset d = load_dataset(root_ / "data", tiny_config().preprocess);
        return d;
    }

    static RunOptions to(const fs::path& dir)
    {
        RunOptions o;
        o.out_dir = dir;
        return o;
    }

    static inline fs::path root_;
};

} // namespace

TEST(Config, HashIgnoresKeyOrderAndRoundTrips)
{
    std::istringstream a("lr = 0.001\nloss = ce\n# comment\nside = 32\n");
    std::istringstream b("side = 32\nloss = ce\nlr = 0.001\n");
    const RunConfig ca = parse_run_config(a), cb = parse_run_config(b);
    EXPECT_EQ(ca.hash(), cb.hash());
    EXPECT_NE(ca.hash(), RunConfig{}.hash());
    std::istringstream text(ca.serialize());
    EXPECT_EQ(parse_run_config(text).serialize(), ca.serialize());
}

TEST(Config, ErrorsNameTheSource)
{
    std::istringstream unknown("sidee = 3\n");
    try {
        parse_run_config(unknown, "x.cfg");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("x.cfg"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("sidee"), std::string::npos);
    }
    RunConfig bad;
    bad.epochs = 0;
    EXPECT_THROW(bad.validate(), Error);
    bad = RunConfig{};
    bad.augmentation = "sideways";
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_THROW(load_run_config("/nonexistent.cfg"), Error);
}

TEST(Config, DefaultsDescribeTheReferenceRun)
{
    const RunConfig cfg;
    EXPECT_EQ(cfg.loss.kind, LossKind::mse);
    EXPECT_EQ(cfg.schedule.kind, ScheduleKind::cosine);
    EXPECT_EQ(cfg.preprocess.side, 64u);
    EXPECT_EQ(cfg.backbone().feature_dim, 64u);
    EXPECT_NO_THROW(cfg.validate());
}

TEST_F(HarnessTest, RunIsBitReproducibleAndCheckpointRoundTrips)
{
    RunConfig cfg = tiny_config();
    cfg.fusion = true;
    const fs::path a = root_ / "run_a", b = root_ / "run_b";
    const RunReport ra = run(cfg, data(), to(a));
    const RunReport rb = run(cfg, data(), to(b));
    EXPECT_EQ(read_text(a / "report.json"), read_text(b / "report.json"));
    EXPECT_EQ(sha256_file(a / "checkpoint.bin"), sha256_file(b / "checkpoint.bin"));
    EXPECT_EQ(ra.primary().checkpoint_sha256, sha256_file(a / "checkpoint.bin"));
    EXPECT_FALSE(ra.pairing_sha256.empty());
    EXPECT_EQ(ra.self_paired.at("train"), 0u);

    const Checkpoint ck = load_checkpoint(a / "checkpoint.bin");
    ASSERT_TRUE(ck.fusion.has_value());
    EXPECT_FALSE(ck.fusion->scaler.empty());
    EXPECT_EQ(serialize_checkpoint(ck), read_text(a / "checkpoint.bin"));
    EXPECT_EQ(ck.config.hash(), cfg.hash());

    // the fused head leaves the backbone's own predictions untouched
    const std::vector<Checkpoint> cks{ck};
    const EvaluateReport ev = evaluate(cks, data().split("test"));
    ASSERT_TRUE(ev.fused.has_value());
    EXPECT_NEAR(ev.backbone.kappa, ra.primary().backbone_test_kappa, 1e-12);
    EXPECT_NEAR(ev.fused->kappa, ra.test.kappa, 1e-12);
}

TEST_F(HarnessTest, EvaluatingTheValidationSplitReproducesTheStoredKappa)
{
    const RunConfig cfg = tiny_config();
    const fs::path out = root_ / "run_eval";
    run(cfg, data(), to(out));
    const std::vector<Checkpoint> cks{load_checkpoint(out / "checkpoint.bin")};
    const EvaluateReport ev = evaluate(cks, data().split("validation"));
    EXPECT_NEAR(ev.backbone.kappa, cks[0].best_validation_kappa, 1e-9);
    EXPECT_FALSE(ev.fused.has_value());
    EXPECT_EQ(ev.samples, data().split("validation").images.size());
}

TEST_F(HarnessTest, CorruptCheckpointIsAnIoError)
{
    const fs::path p = root_ / "junk.bin";
    write_text(p, "DRGCKPT1 but then nothing useful");
    try {
        load_checkpoint(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::io || e.kind() == ErrorKind::parse) << e.what();
    }
}

TEST_F(HarnessTest, MismatchedPreprocessingIsRejected)
{
    RunConfig cfg = tiny_config();
    cfg.preprocess.side = 24;
    EXPECT_THROW(run(cfg, data()), Error);
}

TEST(Ablation, StackedMatrixAccumulatesSections)
{
    std::istringstream in("epochs = 3\n[baseline]\nloss = ce\n[MSE]\nloss = mse\n[CD]\nschedule = cosine\n");
    RunConfig defaults;
    defaults.schedule.kind = ScheduleKind::constant;
    const auto rows = parse_ablation(in, defaults);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].config.loss.kind, LossKind::ce);
    EXPECT_EQ(rows[2].config.loss.kind, LossKind::mse);
    EXPECT_EQ(rows[2].config.schedule.kind, ScheduleKind::cosine);
    EXPECT_EQ(rows[2].config.epochs, 3);
    EXPECT_EQ(rows[2].flags, (std::vector<std::string>{"MSE", "CD"}));

    std::istringstream ind("mode = independent\n[a]\nloss = ce\n[b]\nschedule = cosine\n");
    const auto irows = parse_ablation(ind, defaults);
    EXPECT_EQ(irows[1].config.loss.kind, defaults.loss.kind);

    std::istringstream none("epochs = 3\n");
    EXPECT_THROW(parse_ablation(none, defaults), Error);
    std::istringstream bad("[a]\nwidth = 3\n");
    EXPECT_THROW(parse_ablation(bad, defaults), Error);
}

TEST(Ablation, StackedPresetColumns)
{
    const auto rows = stacked_preset(RunConfig{}, 32, 3);
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0].config.preprocess.side, 32u);
    EXPECT_EQ(rows[0].config.loss.kind, LossKind::ce);
    EXPECT_EQ(rows[1].config.preprocess.side, 64u);
    EXPECT_TRUE(rows[5].config.fusion);
    EXPECT_EQ(rows[6].config.ensemble.seeds.size(), 3u);
    EXPECT_EQ(rows[6].flags.size(), 6u);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].flags.back(), kStackedColumns[i - 1]);
}

TEST(Ablation, DeltasAreRowToRowDifferences)
{
    std::vector<AblationRow> rows{{"a", {}, {}}, {"b", {}, {"HR"}}, {"c", {}, {"HR", "MSE"}}};
    std::vector<RunReport> reports(3);
    reports[0].test.kappa = 0.5;
    reports[1].test.kappa = 0.6;
    reports[2].test.kappa = 0.55;
    const auto table = ablation_table(rows, reports);
    EXPECT_EQ(table[0].delta, 0.0);
    EXPECT_NEAR(table[1].delta, 0.1, 1e-15);
    EXPECT_NEAR(table[2].delta, -0.05, 1e-15);
    EXPECT_EQ(format_delta_percent(0.1), "+10.00%");
    const std::string csv = ablation_csv(table, true);
    EXPECT_NE(csv.find("c,x,x,,,,,"), std::string::npos) << csv;
    EXPECT_NE(ablation_box_plot(table).find("<svg"), std::string::npos);
}
