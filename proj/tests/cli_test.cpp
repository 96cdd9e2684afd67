#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>

#include "imt/io.hpp"
#include "imt/service.hpp"
#include "support/fixtures.hpp"

namespace imt {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(IMT_CLI_PATH) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// One toy-data directory and trained model shared by the whole suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    ASSERT_EQ(run("toy-data --out " + q(data())).exit_code, 0);
    ASSERT_EQ(run("train --parallel " + q(data() / "shift.train.tsv") + " --out " + q(model()))
                  .exit_code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return dir_->path() / "data"; }
  static fs::path model() { return dir_->path() / "model"; }
  static fs::path tmp() { return dir_->path(); }

  static testing::TempDir* dir_;
};

testing::TempDir* CliTest::dir_ = nullptr;

std::string sources_of(const fs::path& tsv, std::size_t limit) {
  std::string out;
  const auto pairs = io::read_pairs(tsv).pairs;
  for (std::size_t i = 0; i < pairs.size() && i < limit; ++i) out += pairs[i].first + "\n";
  return out;
}

TEST_F(CliTest, MissingInputExitsWithTwo) {
  EXPECT_EQ(run("translate --model " + q(model()) + " --input " + q(tmp() / "nope.txt")).exit_code,
            2);
  EXPECT_EQ(run("train --parallel " + q(tmp() / "nope.tsv") + " --out " + q(tmp() / "m2"))
                .exit_code,
            2);
  EXPECT_EQ(run("eval bleu --hyp " + q(tmp() / "a") + " --ref " + q(tmp() / "b")).exit_code, 2);
  EXPECT_EQ(run("translate --model " + q(tmp() / "nomodel") + " --input " +
                q(data() / "shift.test.tsv"))
                .exit_code,
            2);
}

TEST_F(CliTest, RetrainingIsByteIdentical) {
  const auto again = tmp() / "model-again";
  ASSERT_EQ(run("train --parallel " + q(data() / "shift.train.tsv") + " --out " + q(again))
                .exit_code,
            0);
  for (const char* f : {ModelBundle::kSourceVocabFile, ModelBundle::kTargetVocabFile,
                        ModelBundle::kModelFile, ModelBundle::kLmFile}) {
    EXPECT_EQ(io::read_file(model() / f), io::read_file(again / f)) << f;
  }
}

TEST_F(CliTest, EmptyInputGivesEmptyOutput) {
  io::write_file(tmp() / "empty.txt", "");
  const auto r = run("translate --model " + q(model()) + " --input " + q(tmp() / "empty.txt"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "");
}

TEST_F(CliTest, KnnWithZeroLambdaEqualsPlain) {
  io::write_file(tmp() / "src.txt", sources_of(data() / "shift.test.tsv", 10));
  const auto input = " --model " + q(model()) + " --input " + q(tmp() / "src.txt");
  const auto plain = run("translate" + input);
  const auto knn = run("translate" + input + " --engine knn --knn-lambda 0 --tm " +
                       q(data() / "shift.tm.tsv"));
  ASSERT_EQ(plain.exit_code, 0);
  ASSERT_EQ(knn.exit_code, 0);
  EXPECT_EQ(plain.out, knn.out);
  EXPECT_EQ(std::count(plain.out.begin(), plain.out.end(), '\n'), 10);
}

TEST_F(CliTest, TranslateMatchesServiceDrafts) {
  const auto sources = sources_of(data() / "shift.test.tsv", 5);
  io::write_file(tmp() / "src5.txt", sources);
  const auto r = run("translate --model " + q(model()) + " --input " + q(tmp() / "src5.txt"));
  ASSERT_EQ(r.exit_code, 0);
  testing::TempDir sd;
  Service service(sd.path(), ModelBundle::load(model()));
  const auto p = service.create_project("cli");
  std::string drafts;
  for (const auto& s : service.ingest_document(p.id, sources)) drafts += s.segment.mt_draft + "\n";
  EXPECT_EQ(r.out, drafts);
}

TEST_F(CliTest, EvalBleuAndNgram) {
  io::write_file(tmp() / "h.txt", "the cat the cat sat on the mat\n");
  io::write_file(tmp() / "r.txt", "the cat sat on the mat\n");
  auto r = run("eval bleu --json --hyp " + q(tmp() / "h.txt") + " --ref " + q(tmp() / "r.txt"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NEAR(nlohmann::json::parse(r.out).at("bleu").get<double>(), 68.03749333171201, 1e-9);

  r = run("eval ngram-acc --json --n 1,2 --model " + q(model()) + " --test " +
          q(data() / "shift.dev.tsv") + " --engine knn --tm " + q(data() / "shift.tm.tsv"));
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GT(j.at("ngram_acc").at("1").get<double>(), 0.5);
  EXPECT_EQ(j.at("counts").at("engine_failures"), 0);

  r = run("eval simulate --json --policy type_through --model " + q(model()) + " --test " +
          q(data() / "shift.dev.tsv"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_DOUBLE_EQ(nlohmann::json::parse(r.out).at("keystroke_savings").get<double>(), 0.0);
}

TEST_F(CliTest, TuneKnn) {
  const auto common = " --model " + q(model()) + " --dev " + q(data() / "shift.dev.tsv") +
                      " --tm " + q(data() / "shift.tm.tsv");
  auto r = run("tune-knn" + common +
               " --grid-k 4 --grid-lambda 0.4 --grid-temperature 5 --grid-tau 5");
  ASSERT_EQ(r.exit_code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(knn_config_from_json(j.at("best")), KnnConfig{});
  EXPECT_EQ(j.at("trials").size(), 1u);

  r = run("tune-knn" + common + " --grid-k 4 --grid-lambda 0,0.4 --grid-temperature 5 --grid-tau 5");
  ASSERT_EQ(r.exit_code, 0);
  j = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("best").at("lambda").get<double>(), 0.4);

  r = run("tune-knn" + common + " --grid-k 4 --grid-lambda 0.4 --grid-temperature 5 --grid-tau inf");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("best").at("tau"), "inf");
}

}  // namespace
}  // namespace imt
