#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cmcl/runlog.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(CMCL_BIN) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p) != nullptr) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) {
    if (!l.empty() && l[0] != '#') lines.push_back(l);
  }
  return lines;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cmcl_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("bench --strategies bogus --sizes 100 --out " + path("b.csv")).code, 1);
  EXPECT_EQ(cli("fixture nonexistent --out " + path("fx")).code, 1);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(Cli, MissingMapNamesPath) {
  const auto r = cli("record --map /no/such/dir/room.map --out " + path("runs"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("/no/such/dir/room.map"), std::string::npos) << r.out;
}

TEST_F(Cli, RecordIsDeterministic) {
  const auto a = cli("record --map symmetric --seed 4 --out " + path("a"));
  const auto b = cli("record --map symmetric --seed 4 --out " + path("b"));
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(a.out, b.out);
  std::size_t runs = 0;
  for (const auto& e : fs::directory_iterator(path("a"))) runs += e.path().extension() == ".jsonl" ? 1 : 0;
  EXPECT_EQ(runs, 1u);
  EXPECT_EQ(cmcl::read_file(path("a/run_4_0.jsonl")), cmcl::read_file(path("b/run_4_0.jsonl")));
  // printed digest matches the file contents
  const auto log = cmcl::parse_jsonl(cmcl::read_file(path("a/run_4_0.jsonl")));
  EXPECT_NE(a.out.find(cmcl::digest(log)), std::string::npos);
}

TEST_F(Cli, EvaluateArityAndSchemaCheck) {
  ASSERT_EQ(cli("record --map symmetric --seed 2 --seeds 2 --out " + path("runs")).code, 0);
  const auto r = cli("evaluate " + path("runs") + " --strategies mcl,compresspp,naive:0 --particles 300 --out " +
                     path("eval"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(data_lines(path("eval/runs.csv")).size(), 1u + 3u * 2u);
  EXPECT_EQ(data_lines(path("eval/aggregate.csv")).size(), 1u + 3u);
  EXPECT_TRUE(fs::exists(path("eval/success.svg")));
  EXPECT_GT(data_lines(path("eval/convergence.csv")).size(), 2u);

  // bump the schema version of one run
  const std::string f = path("runs/run_2_1.jsonl");
  std::string text = cmcl::read_file(f);
  const auto pos = text.find("\"schema\":1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, "\"schema\":9");
  cmcl::write_file(f, text);
  const auto bad = cli("evaluate " + path("runs") + " --strategies mcl --out " + path("eval2"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("run_2_1.jsonl"), std::string::npos) << bad.out;
}

TEST_F(Cli, FixtureOutputs) {
  const auto r = cli("fixture diamond_center --out " + path("fx"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto input = data_lines(path("fx/points.csv"));
  EXPECT_EQ(input.size(), 1u + 100u);
  std::set<std::string> regions;
  for (std::size_t i = 1; i < input.size(); ++i) regions.insert(input[i].substr(input[i].rfind(',') + 1));
  EXPECT_EQ(regions.size(), 5u);
  for (const char* m : {"naive", "std_thinning", "det", "prorok", "kmeans", "compresspp"}) {
    EXPECT_TRUE(fs::exists(path(std::string("fx/") + m + ".csv"))) << m;
  }
  const auto cpp = data_lines(path("fx/compresspp.csv"));
  EXPECT_EQ(cpp.size(), 1u + 8u);
  const std::set<std::string> all(input.begin() + 1, input.end());
  for (std::size_t i = 1; i < cpp.size(); ++i) EXPECT_TRUE(all.count(cpp[i])) << cpp[i];
  EXPECT_TRUE(fs::exists(path("fx/diamond_center.svg")));
}

TEST_F(Cli, BenchWritesCsv) {
  const auto r = cli("bench --strategies kmeans,compresspp --sizes 200 --repeats 1 --out " + path("bench.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = data_lines(path("bench.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "strategy,n,compression_ms,fusion_ms,bytes");
  EXPECT_EQ(rows[1].rfind("kmeans,200,", 0), 0u);
  EXPECT_EQ(rows[1].substr(rows[1].rfind(',') + 1), "192");
}

TEST_F(Cli, ConfigPresetsResolveMaps) {
  for (const char* preset : {"symmetric", "office", "sparse"}) {
    const auto r = cli(std::string("map-info --config ") + CMCL_DATA_DIR + "/configs/" + preset + ".cfg");
    EXPECT_EQ(r.code, 0) << preset << ": " << r.out;
  }
}
