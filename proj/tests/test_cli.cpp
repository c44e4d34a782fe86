#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" HYPERSCORE_CLI_PATH "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stdout.txt"), slurp(dir / "stderr.txt")};
}

const char* kSmall = R"({
  "dims": {"D": 16, "D_q": 8, "L": 2, "M": 2, "N_t": 3, "N_v": 4, "channels": 2, "grid": 2,
           "encoder_rank": 8, "mlp_hidden": 16},
  "synth": {"num_samples": 12, "num_methods": 3},
  "train": {"epochs": 3, "batch_size": 4},
  "paths": {"output_dir": "syn", "manifest": "syn/manifest.json", "labels": "syn/labels.csv"}
})";

fs::path small_dir(const std::string& name) {
  const auto dir = hstest::temp_dir("cli_" + name);
  std::ofstream(dir / "small.json") << kSmall;
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

}  // namespace

TEST(Cli, SynthIsByteDeterministic) {
  const auto a = small_dir("det_a");
  const auto b = small_dir("det_b");
  ASSERT_EQ(cli(a, "synth -c small.json").code, 0);
  ASSERT_EQ(cli(b, "synth -c small.json").code, 0);
  for (const auto& e : fs::recursive_directory_iterator(a / "syn")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  EXPECT_TRUE(fs::exists(a / "syn/features/s0011.hsf"));
}

TEST(Cli, HeaderLineOnStdoutAndOutputs) {
  const auto dir = small_dir("header");
  const auto r = cli(dir, "synth -c small.json");
  ASSERT_EQ(r.code, 0);
  const std::string first = r.out.substr(0, r.out.find('\n'));
  EXPECT_EQ(first.rfind("# hyperscore config_hash=", 0), 0u) << first;
  EXPECT_NE(first.find(" seed=0"), std::string::npos);
  const std::string labels = slurp(dir / "syn/labels.csv");
  EXPECT_EQ(labels.substr(0, labels.find('\n')), first);
}

TEST(Cli, OverridesChangeConfig) {
  const auto dir = small_dir("override");
  const auto r = cli(dir, "synth -c small.json --synth.num_samples 5 --seed 7 --paths.output_dir other");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed=7"), std::string::npos);
  EXPECT_EQ(read_csv(dir / "other/labels.csv").size(), 6u);  // header + 5
}

TEST(Cli, ExitCodes) {
  const auto dir = small_dir("exit");
  EXPECT_EQ(cli(dir, "").code, 1);
  EXPECT_EQ(cli(dir, "nosuch").code, 1);
  EXPECT_EQ(cli(dir, "--help").code, 0);
  EXPECT_EQ(cli(dir, "synth -c small.json --bogus.key 1").code, 1);
  EXPECT_EQ(cli(dir, "synth -c small.json --dims.D 0").code, 1);
  EXPECT_EQ(cli(dir, "gradcheck -c small.json --modes.gradcheck_precision f16").code, 1);
  EXPECT_EQ(cli(dir, "synth -c missing.json").code, 1);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(cli(dir, "synth -c broken.json").code, 1);

  ASSERT_EQ(cli(dir, "synth -c small.json").code, 0);
  // feature width disagrees with the configured D
  EXPECT_EQ(cli(dir, "train -c small.json --dims.D 32 --paths.output_dir tr").code, 1);
  // a labels file missing one manifest sample
  {
    auto rows = slurp(dir / "syn/labels.csv");
    rows.erase(rows.rfind("s0011"));
    std::ofstream(dir / "short.csv") << rows;
  }
  EXPECT_EQ(cli(dir, "train -c small.json --paths.labels short.csv --paths.output_dir tr").code, 2);
  std::ofstream(dir / "garbage.hsf") << "not a container";
  fs::copy_file(dir / "garbage.hsf", dir / "syn/features/s0003.hsf", fs::copy_options::overwrite_existing);
  EXPECT_EQ(cli(dir, "train -c small.json --paths.output_dir tr").code, 2);
}

TEST(Cli, GradcheckPasses) {
  const auto dir = small_dir("grad");
  const auto r = cli(dir, "gradcheck --paths.output_dir gc");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "gc/gradcheck_report.json"));
  EXPECT_TRUE(report.at("passed").get<bool>());
  EXPECT_EQ(report.at("worst_by_group").size(), 3u);
  EXPECT_FALSE(report.at("tensors").empty());
}

TEST(Cli, TrainScoreAndTeacherReload) {
  const auto dir = small_dir("pipeline");
  ASSERT_EQ(cli(dir, "synth -c small.json").code, 0);
  auto r = cli(dir, "train -c small.json --paths.output_dir tr");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "tr/model.ckpt"));
  std::ifstream log(dir / "tr/train_log.jsonl");
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(log, line))
    if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_TRUE(lines[0].contains("header"));
  EXPECT_EQ(lines[3].at("epoch"), 2);

  r = cli(dir, "score -c small.json --paths.checkpoint tr/model.ckpt --paths.output_dir sc");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto scores = read_csv(dir / "sc/scores.csv");
  ASSERT_EQ(scores.size(), 13u);
  EXPECT_EQ(scores[0].size(), 9u);  // id + K raw + K clamped
  for (std::size_t i = 1; i < scores.size(); ++i)
    for (std::size_t k = 5; k < 9; ++k) {
      const double v = std::stod(scores[i][k]);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }

  // the frozen teacher reproduces its own labels
  r = cli(dir, "score -c small.json --paths.checkpoint syn/teacher.ckpt --paths.output_dir teach");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto teacher = read_csv(dir / "teach/scores.csv");
  const auto labels = read_csv(dir / "syn/labels.csv");
  ASSERT_EQ(teacher.size(), labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i) {
    EXPECT_EQ(teacher[i][0], labels[i][0]);
    for (std::size_t k = 1; k <= 4; ++k) EXPECT_NEAR(std::stod(teacher[i][k]), std::stod(labels[i][k]), 1e-7);
  }

  r = cli(dir, "score -c small.json --paths.checkpoint tr/model.ckpt --paths.output_dir sc --score.sample_ids "
               "'[\"s0002\",\"nope\"]'");
  EXPECT_EQ(r.code, 2);
  r = cli(dir, "score -c small.json --paths.checkpoint tr/model.ckpt --paths.output_dir one --score.sample_ids "
               "'[\"s0002\"]'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_csv(dir / "one/scores.csv").size(), 2u);
}

TEST(Cli, CrossvalAndStats) {
  const auto dir = small_dir("cv");
  ASSERT_EQ(cli(dir, "synth -c small.json").code, 0);
  // four prompts cannot be split five ways
  EXPECT_EQ(cli(dir, "crossval -c small.json --paths.output_dir cv").code, 1);
  auto r = cli(dir, "crossval -c small.json --train.folds 2 --train.epochs 2 --paths.output_dir cv");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "cv/crossval_report.json"));
  EXPECT_TRUE(report.contains("header"));
  EXPECT_TRUE(fs::exists(dir / "cv/fold_0.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "cv/fold_1.ckpt"));

  ASSERT_EQ(cli(dir, "score -c small.json --paths.checkpoint cv/fold_0.ckpt --paths.output_dir sc").code, 0);
  r = cli(dir, "stats -c small.json --paths.predictions sc/scores.csv --paths.output_dir st");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"category_means.csv", "category_means.json", "correlations.csv", "correlations.json",
                        "category_srcc.csv", "category_srcc.json"})
    EXPECT_TRUE(fs::exists(dir / "st" / f)) << f;
  const auto corr = nlohmann::json::parse(slurp(dir / "st/correlations.json"));
  EXPECT_TRUE(corr.contains("header"));
}

TEST(Cli, MosRejectsPlantedErraticSubject) {
  const auto dir = small_dir("mos");
  // 14 raters rotate a bell-shaped set; u00 alternates between the extremes
  const std::vector<int> bell{2, 3, 4, 4, 5, 5, 5, 5, 5, 5, 6, 6, 7, 8};
  const std::vector<std::string> dims{"alignment", "geometry", "texture", "overall"};
  std::ofstream csv(dir / "ann.csv");
  csv << "subject_id,sample_id,dimension,score\n";
  for (int s = 0; s < 15; ++s)
    for (int n = 0; n < 20; ++n)
      for (const auto& d : dims) {
        const int v = s == 0 ? (n % 2 == 0 ? 10 : 0) : bell[(s + n) % bell.size()];
        csv << "u" << (s < 10 ? "0" : "") << s << ",x" << (n < 10 ? "0" : "") << n << "," << d << "," << v << "\n";
      }
  csv.close();
  const auto r = cli(dir, "mos -c small.json --paths.annotations ann.csv --paths.output_dir mos");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "mos/screening_report.json"));
  ASSERT_EQ(report.at("rejected").size(), 1u);
  EXPECT_EQ(report.at("rejected")[0].at("subject"), "u00");
  EXPECT_EQ(report.at("rejected")[0].at("stage"), "bt500");
  EXPECT_FALSE(report.at("trapping_checked").get<bool>());
  const auto labels = read_csv(dir / "mos/labels.csv");
  ASSERT_EQ(labels.size(), 21u);
  EXPECT_EQ(labels[1].back(), "14");

  // the sentinel x00 got 10 from u00, above the default t_low of 3
  const auto t = cli(dir, "mos -c small.json --paths.annotations ann.csv --paths.output_dir mos2 "
                          "--screening.sentinel_ids '[\"x00\"]' --screening.t_low 8");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto rep2 = nlohmann::json::parse(slurp(dir / "mos2/screening_report.json"));
  ASSERT_EQ(rep2.at("rejected").size(), 1u);
  EXPECT_EQ(rep2.at("rejected")[0].at("stage"), "trapping");
  EXPECT_EQ(read_csv(dir / "mos2/labels.csv").size(), 20u);  // sentinel row dropped

  std::ofstream(dir / "empty.csv") << "";
  EXPECT_EQ(cli(dir, "mos -c small.json --paths.annotations empty.csv --paths.output_dir e").code, 2);
  std::ofstream(dir / "bad.csv") << "u0,x0,overall,11\n";
  EXPECT_EQ(cli(dir, "mos -c small.json --paths.annotations bad.csv --paths.output_dir e").code, 2);
}
