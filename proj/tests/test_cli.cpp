#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ifrp/dataset.hpp"
#include "tmpdir.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using ifrp::testing::read_bytes;
using ifrp::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(IFRP_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof(buf), p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_bytes(p)); }

}  // namespace

TEST_CASE("version and usage errors") {
  const auto v = run("--version");
  CHECK(v.code == 0);
  CHECK(v.output.find("ifrp 1.0.0") != std::string::npos);
  CHECK(v.output.find("report schema") != std::string::npos);

  const auto unknown = run("frobnicate");
  CHECK(unknown.code == 2);
  CHECK(unknown.output.find("Usage") != std::string::npos);
  CHECK(run("").code == 2);
  CHECK(run("evaluate --manifest m.json --checkpoint c --out r.json --k many").code == 2);
  CHECK(run("train --out x").code == 2);
  CHECK(run("--log-level chatty gen-faces --out /tmp/never").code == 2);
}

TEST_CASE("runtime failures exit 1 with a category") {
  TempDir tmp("cli_err");
  const auto missing = run("train --manifest " + (tmp / "nope.json").string() + " --out " + (tmp / "run").string());
  CHECK(missing.code == 1);
  CHECK(missing.output.find("error [dataset]") != std::string::npos);

  run("gen-faces --out " + (tmp / "src").string() + " --count 4");
  REQUIRE(run("synthesize --sources " + (tmp / "src").string() + " --out " + (tmp / "data").string() +
              " --styles candy --size 16")
              .code == 0);
  std::ofstream(tmp / "bad.json") << R"({"epochs": 1, "learning_rate_typo": 3})";
  const auto bad = run("train --manifest " + (tmp / "data/manifest.json").string() + " --out " + (tmp / "run").string() +
                       " --config " + (tmp / "bad.json").string());
  CHECK(bad.code == 1);
  CHECK(bad.output.find("error [config]") != std::string::npos);
  CHECK(bad.output.find("learning_rate_typo") != std::string::npos);
  CHECK(run("synthesize --sources " + (tmp / "src").string() + " --out " + (tmp / "d2").string() + " --styles starry").code == 1);
}

TEST_CASE("train resolves config with flags winning") {
  TempDir tmp("cli_train");
  run("gen-faces --out " + (tmp / "src").string() + " --count 8 --seed 2");
  REQUIRE(run("synthesize --sources " + (tmp / "src").string() + " --out " + (tmp / "data").string() +
              " --styles candy,sketch --size 16 --seed 2")
              .code == 0);
  std::ofstream(tmp / "cfg.json") << R"({"epochs": 3, "batch_size": 4, "base_channels": 4, "residual_blocks": 1, "image_size": 16})";
  const auto r = run("train --manifest " + (tmp / "data/manifest.json").string() + " --out " + (tmp / "run").string() +
                     " --config " + (tmp / "cfg.json").string() + " --epochs 1 --styles sketch",
                     "IFRP_SEED=77");
  REQUIRE(r.code == 0);
  const auto cfg = read_json(tmp / "run/config.json");
  CHECK(cfg.at("epochs") == 1);
  CHECK(cfg.at("batch_size") == 4);
  CHECK(cfg.at("seed") == 77);
  CHECK(cfg.at("train_styles") == std::vector<std::string>{"sketch"});
  CHECK(r.output.find("resolved config") != std::string::npos);
  CHECK(fs::exists(tmp / "run/final.ckpt"));

  const auto rec = run("recover --checkpoint " + (tmp / "run/final.ckpt").string() + " --input " +
                       (tmp / "data/sf").string() + " --output " + (tmp / "out").string());
  CHECK(rec.code == 0);
  CHECK(std::distance(fs::directory_iterator(tmp / "out"), fs::directory_iterator{}) == 16);

  const auto resumed = run("train --manifest " + (tmp / "data/manifest.json").string() + " --out " + (tmp / "run").string() +
                           " --config " + (tmp / "cfg.json").string() + " --epochs 2 --styles sketch --resume " +
                           (tmp / "run/final.ckpt").string(),
                           "IFRP_SEED=77");
  CHECK(resumed.code == 0);
  const auto refused = run("train --manifest " + (tmp / "data/manifest.json").string() + " --out " +
                           (tmp / "run2").string() + " --config " + (tmp / "cfg.json").string() +
                           " --lr 0.5 --styles sketch --resume " + (tmp / "run/final.ckpt").string(),
                           "IFRP_SEED=77");
  CHECK(refused.code == 1);
  CHECK(refused.output.find("error [checkpoint]") != std::string::npos);
}

TEST_CASE("select-styles from image directories") {
  TempDir tmp("cli_sel");
  ifrp::write_synthetic_faces(tmp / "faces", 6, 4);
  fs::create_directories(tmp / "styles");
  const auto exemplar = ifrp::center_crop_resize(ifrp::render_face(99), 64);
  for (const auto& id : ifrp::builtin_stylizers())
    ifrp::save_png(ifrp::quantize_8bit(ifrp::make_stylizer(id)->apply(exemplar)), tmp / "styles" / (id + ".png"));
  const auto r = run("select-styles --styles-dir " + (tmp / "styles").string() + " --faces " + (tmp / "faces").string() +
                     " --k 2 --out " + (tmp / "sel.json").string());
  REQUIRE(r.code == 0);
  const auto j = read_json(tmp / "sel.json");
  CHECK(j.at("selected").size() == 2);
  CHECK(j.at("ranking").size() == 3);
  CHECK(j.at("ranking")[0].at("distance").get<double>() >= j.at("ranking")[1].at("distance").get<double>());
  CHECK(j.at("selected")[0] == j.at("ranking")[0].at("style_id"));
  CHECK(run("select-styles --styles-dir " + (tmp / "styles").string() + " --out " + (tmp / "x.json").string()).code == 2);
  CHECK(run("select-styles --styles-dir " + (tmp / "styles").string() + " --faces " + (tmp / "faces").string() +
            " --k 4 --out " + (tmp / "x.json").string())
            .code == 1);
}

TEST_CASE("smoke pipeline is reproducible") {
  TempDir tmp("cli_smoke");
  const auto a = run("smoke --out " + (tmp / "a").string() + " --seed 5");
  const auto b = run("smoke --out " + (tmp / "b").string(), "IFRP_SEED=5 IFRP_LOG=warn");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(b.output.find("[info]") == std::string::npos);
  for (const auto* f : {"dataset/manifest.json", "run/metrics.csv", "report.json", "styles.json", "run/final.ckpt"})
    CHECK_MESSAGE(read_bytes(tmp / "a" / f) == read_bytes(tmp / "b" / f), f);

  const auto report = read_json(tmp / "a/report.json");
  CHECK(report.at("schema_version") == "1.0");
  const auto& all = report.at("quality").at("groups").at("all");
  CHECK(all.at("count") == 24);
  CHECK(all.at("ssim").get<double>() >= -1.0);
  CHECK(all.at("ssim").get<double>() <= 1.0);
  CHECK(all.at("fsim").get<double>() >= 0.0);
  CHECK(all.at("fsim").get<double>() <= 1.0);
  for (const auto& [k, v] : report.at("identity").at("frr_per_style").items()) {
    CHECK(v.get<double>() >= 0.0);
    CHECK(v.get<double>() <= 100.0);
  }
  CHECK(report.at("styles").at("seen").size() == 2);
  CHECK(report.at("styles").at("unseen").size() == 1);

  const auto lines = read_bytes(tmp / "a/run/metrics.csv");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 51);
  CHECK(fs::exists(tmp / "a/grid.png"));
}
