#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = ACE_CLI_PATH;
const fs::path kConfigs = ACE_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ace_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + kCli.string() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const std::string kSmall = " --set epochs=3 --set n_samples=20 --set eval_every=1";

}  // namespace

TEST(Cli, ZeroEpochsWritesOneRow) {
  const fs::path out = scratch("zero");
  ASSERT_EQ(run("train --config " + (kConfigs / "c4_square.json").string() + " --set epochs=0 --set output_dir=" +
                out.string()),
            0);
  EXPECT_EQ(lines(out / "trace.csv"), 2u);  // header + one row
  for (const char* f : {"summary.json", "checkpoint.bin", "gamma.svg", "lambda.svg", "u.svg", "eq_error.svg"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Cli, SameSeedGivesIdenticalTrace) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const std::string cfg = "train --config " + (kConfigs / "set_regression.json").string() + kSmall;
  ASSERT_EQ(run(cfg + " --set output_dir=" + a.string()), 0);
  ASSERT_EQ(run(cfg + " --set output_dir=" + b.string()), 0);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  // Re-running into the same directory overwrites with identical bytes.
  const std::string first = slurp(a / "trace.csv");
  ASSERT_EQ(run(cfg + " --set output_dir=" + a.string()), 0);
  EXPECT_EQ(slurp(a / "trace.csv"), first);
}

TEST(Cli, AceSeedEnvironmentOverridesConfigBelowSet) {
  const fs::path a = scratch("env_a"), b = scratch("env_b"), c = scratch("env_c");
  const std::string cfg = "train --config " + (kConfigs / "set_regression.json").string() + kSmall;
  ASSERT_EQ(run(cfg + " --set output_dir=" + a.string(), "ACE_SEED=3"), 0);
  ASSERT_EQ(run(cfg + " --set seed=3 --set output_dir=" + b.string()), 0);
  ASSERT_EQ(run(cfg + " --set seed=0 --set output_dir=" + c.string(), "ACE_SEED=3"), 0);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
  EXPECT_NE(slurp(a / "trace.csv"), slurp(c / "trace.csv"));
}

TEST(Cli, InvalidConfigFailsBeforeWork) {
  const fs::path out = scratch("invalid");
  EXPECT_NE(run("train --set bogus_key=1 --set output_dir=" + out.string()), 0);
  EXPECT_NE(run("train --set epochs=-3 --set output_dir=" + out.string()), 0);
  EXPECT_NE(run("train --set mode=sideways --set output_dir=" + out.string()), 0);
  EXPECT_FALSE(fs::exists(out / "trace.csv"));
  std::ofstream(out / "broken.json") << "{ not json";
  EXPECT_NE(run("train --config " + (out / "broken.json").string()), 0);
}

TEST(Cli, ConfigFileIsNotModified) {
  const fs::path cfg = kConfigs / "set_regression.json";
  const std::string before = slurp(cfg);
  const fs::path out = scratch("nomutate");
  ASSERT_EQ(run("train --config " + cfg.string() + kSmall + " --set output_dir=" + out.string()), 0);
  EXPECT_EQ(slurp(cfg), before);
}

TEST(Cli, DivergenceExitsNonzero) {
  const fs::path out = scratch("diverge");
  EXPECT_NE(run("train --config " + (kConfigs / "set_regression.json").string() +
                " --set eta_p=80 --set epochs=20 --set output_dir=" + out.string()),
            0);
}

TEST(Cli, ResumeReproducesTrace) {
  const fs::path full = scratch("resume_full"), half = scratch("resume_half");
  const std::string cfg = "train --config " + (kConfigs / "set_regression.json").string() + " --set n_samples=20";
  ASSERT_EQ(run(cfg + " --set epochs=6 --set output_dir=" + full.string()), 0);
  ASSERT_EQ(run(cfg + " --set epochs=3 --set output_dir=" + half.string()), 0);
  ASSERT_EQ(run("train --resume " + (half / "checkpoint.bin").string() + " --set epochs=6"), 0);
  EXPECT_EQ(slurp(full / "trace.csv"), slurp(half / "trace.csv"));
}

TEST(Cli, Gradcheck) {
  EXPECT_EQ(run("gradcheck --seed 3"), 0);
  EXPECT_NE(run("gradcheck --seed 3 --corrupt-fixture"), 0);
}

TEST(Cli, VerifyBounds) {
  const fs::path out = scratch("verify");
  EXPECT_EQ(run("verify-bounds --set n_models=10 --set output_dir=" + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "bounds.csv"));
}

TEST(Cli, SweepAndPlot) {
  const fs::path out = scratch("sweep");
  EXPECT_EQ(run("sweep --config " + (kConfigs / "set_regression.json").string() + kSmall +
                " --param epsilon --values 0,0.5 --set output_dir=" + out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "sweep.svg"));
  EXPECT_NE(run("sweep --param seed --values 1 --set output_dir=" + out.string()), 0);
  const fs::path plots = scratch("plots");
  EXPECT_EQ(run("plot " + (out / "epsilon=0" / "trace.csv").string() + " --out " + plots.string()), 0);
  EXPECT_TRUE(fs::exists(plots / "eq_error.svg"));
}
