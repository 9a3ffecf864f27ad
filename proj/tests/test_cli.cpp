// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "dualfield/meshing.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the command-line tool with stderr discarded.
Result run(const std::string& args) {
  const std::string cmd = std::string(DUALFIELD_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dualfield_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--no-such-flag").code, 2);
  EXPECT_EQ(run("generate --views 1 -o " + scratch("one").string()).code, 2);
  EXPECT_EQ(run("train -d /nonexistent/dataset -o " + scratch("missing").string()).code, 2);
  EXPECT_EQ(run("mesh --checkpoint /nonexistent/ckpt.bin -o x.obj").code, 2);
  EXPECT_EQ(run("eval").code, 2);
}

TEST(Cli, ConfigListsDefaults) {
  const auto r = run("config");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("losses.lambda_rgb = 50"), std::string::npos);
  EXPECT_NE(r.out.find("losses.lambda_align = 1"), std::string::npos);
  EXPECT_NE(r.out.find("train.rays_per_iter = 6144"), std::string::npos);
  const auto toy = run("config --toy");
  EXPECT_NE(toy.out.find("train.iters = 2000"), std::string::npos);
}

TEST(Cli, GenerateTrainMeshEval) {
  const auto data = scratch("data"), out = scratch("run");
  auto g = run("generate -o " + data.string() + " --views 10 --seed 3");
  ASSERT_EQ(g.code, 0) << g.out;
  EXPECT_TRUE(fs::exists(data / "gt_mesh.obj"));
  EXPECT_TRUE(fs::exists(data / "rgb" / "00009.png"));

  const std::string small =
      " --set train.iters=2 --set train.rays_per_iter=32 --set sampling.coarse=16"
      " --set sampling.fine_rounds=1 --set sampling.fine_per_round=4 --set hash.log2_table_size=10"
      " --set hash.max_resolution=64 --set hash.levels=4 --set train.eval_frames=1";
  auto t = run("train -d " + data.string() + " -o " + out.string() + " --toy" + small);
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("lambda_rgb = 50"), std::string::npos);
  EXPECT_NE(t.out.find("lambda_align = 1"), std::string::npos);
  EXPECT_NE(t.out.find("validation_psnr = "), std::string::npos);
  ASSERT_TRUE(fs::exists(out / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(out / "losses.csv"));

  const auto ckpt = (out / "checkpoint.bin").string();
  const auto mesh = (out / "mesh.obj").string();
  auto m = run("mesh --checkpoint " + ckpt + " -o " + mesh + " --voxel 0.1 --cull " + data.string());
  ASSERT_EQ(m.code, 0) << m.out;
  EXPECT_NO_THROW(dualfield::read_obj(mesh));

  auto e = run("eval --mesh " + (data / "gt_mesh.obj").string() + " --gt " + (data / "gt_mesh.obj").string() +
               " --samples 2000");
  ASSERT_EQ(e.code, 0);
  EXPECT_NE(e.out.find("fscore = 1"), std::string::npos) << e.out;

  auto r = run("render --checkpoint " + ckpt + " -d " + data.string() + " -o " + (out / "views").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(out / "views"));

  auto p = run("pfa --checkpoint " + ckpt + " -d " + data.string() + " -o " + (out / "poses").string());
  ASSERT_EQ(p.code, 0);
  EXPECT_TRUE(fs::exists(out / "poses" / "00009.txt"));

  fs::remove_all(data);
  fs::remove_all(out);
}
