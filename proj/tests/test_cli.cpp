// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/cli.hpp"
#include "mdmixer/config.hpp"
#include "mdmixer/data.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <regex>
#include <sstream>

using namespace mdmixer;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

/// A small two-channel dataset and a config that trains on it in well under a second.
struct Workspace {
  test::TempDir dir{"cli"};
  fs::path config = dir / "run.cfg";

  explicit Workspace(const std::string& extra = "") {
    const std::vector<SynthChannel> ch{{12.0, 1.0, 0.0, 0.1}, {6.0, 0.5, 0.002, 0.1}};
    write_csv(synth_multiscale(240, ch, 5), dir / "synth.csv");
    write(extra);
  }

  void write(const std::string& extra) const {
    test::spit(config, "dataset = synth.csv\n"
                       "out = " + (dir / "out").string() + "\n"
                       "seeds = 1,2,3\n"
                       "lookback = 8\nhorizon = 4\npatch_len = 4\nstride = 2\nembed_dim = 3\n"
                       "heads = 2\nhidden = 4\nkernel = 3\nmax_epochs = 2\nbatch_size = 16\n" +
                           extra);
  }

  std::string cfg() const { return config.string(); }
  fs::path out() const { return dir / "out"; }
};

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in("# comment\nheads = 4 # trailing\nuse_mim = false\nseeds = 5, 6\nsplit = 0.7,0.1,0.2\n");
  const RunConfig c = parse_run_config(in);
  CHECK(c.model_config.heads == 4);
  CHECK_FALSE(c.model_config.use_mim);
  CHECK(c.seeds == std::vector<std::uint64_t>{5, 6});
  CHECK(c.split.ratios[0] == 0.7);

  std::istringstream bad("hedas = 4\n");
  CHECK_THROWS_WITH_AS(parse_run_config(bad), "config line 1: unknown key 'hedas'", ConfigError);
  std::istringstream typed("lookback = ninety\n");
  CHECK_THROWS_WITH_AS(parse_run_config(typed), doctest::Contains("'lookback'"), ConfigError);

  std::istringstream round(c.to_text());
  CHECK(parse_run_config(round).to_text() == c.to_text());
}

TEST_CASE("gradcheck command") {
  Workspace ws("channels = 2\nseeds = 7\n");
  const Run r = cli({"gradcheck", "--config", ws.cfg()});
  CHECK(r.code == kExitOk);
  std::smatch m;
  REQUIRE(std::regex_search(r.out, m, std::regex("max relative error ([0-9.e+-]+)")));
  CHECK(std::stod(m[1]) < 1e-4);
}

TEST_CASE("train writes per-seed artifacts and a summary") {
  Workspace ws;
  const Run r = cli({"train", "--config", ws.cfg()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (int s = 1; s <= 3; ++s) {
    const fs::path d = ws.out() / ("seed_" + std::to_string(s));
    CHECK(fs::exists(d / "model.manifest"));
    CHECK(fs::exists(d / "model.bin"));
    CHECK(fs::exists(d / "report.csv"));
    CHECK(fs::exists(d / "report.txt"));
  }
  CHECK(fs::exists(ws.out() / "summary.csv"));
  CHECK(fs::exists(ws.out() / "config.resolved"));
  std::istringstream summary(test::slurp(ws.out() / "summary.csv"));
  std::string header;
  std::string line;
  std::getline(summary, header);
  std::getline(summary, line);
  CHECK(line.rfind("synth,4,3,", 0) == 0);
}

TEST_CASE("parallel seeds match sequential seeds") {
  Workspace a;
  Workspace b;
  REQUIRE(cli({"train", "--config", a.cfg()}).code == kExitOk);
  REQUIRE(cli({"train", "--config", b.cfg(), "--parallel-seeds"}).code == kExitOk);
  CHECK(test::slurp(a.out() / "metrics.csv") == test::slurp(b.out() / "metrics.csv"));
  CHECK(test::slurp(a.out() / "seed_2" / "report.csv") == test::slurp(b.out() / "seed_2" / "report.csv"));
}

TEST_CASE("invalid configs exit with code 2") {
  Workspace ws("horizon = 96\nheads = 7\n");
  const Run r = cli({"train", "--config", ws.cfg()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("heads must divide horizon") != std::string::npos);

  Workspace missing("dataset = nowhere/absent.csv\n");
  const Run m = cli({"train", "--config", missing.cfg()});
  CHECK(m.code == kExitUsage);
  CHECK(m.err.find("nowhere/absent.csv") != std::string::npos);

  CHECK(cli({"train"}).code == kExitUsage);
  CHECK(cli({"frobnicate", "--config", ws.cfg()}).code == kExitUsage);
  CHECK(cli({"train", "--config", (ws.dir / "none.cfg").string()}).code == kExitUsage);
}

TEST_CASE("divergence exits with code 3") {
  Workspace ws("lr = 1e30\nseeds = 1\nmax_epochs = 5\n");
  const Run r = cli({"train", "--config", ws.cfg()});
  CHECK(r.code == kExitDivergence);
  CHECK(r.err.find("non-finite") != std::string::npos);
}

TEST_CASE("eval, forecast and export on a trained checkpoint") {
  Workspace ws("seeds = 4\n");
  REQUIRE(cli({"train", "--config", ws.cfg()}).code == kExitOk);
  const std::string ckpt = (ws.out() / "seed_4" / "model").string();

  const fs::path e1 = ws.dir / "e1";
  const fs::path e2 = ws.dir / "e2";
  REQUIRE(cli({"eval", "--config", ws.cfg(), "--checkpoint", ckpt, "--out", e1.string()}).code == kExitOk);
  REQUIRE(cli({"eval", "--config", ws.cfg(), "--checkpoint", ckpt + ".manifest", "--out", e2.string()}).code == kExitOk);
  CHECK(test::slurp(e1 / "metrics.csv") == test::slurp(e2 / "metrics.csv"));
  CHECK(test::slurp(e1 / "metrics.csv") == test::slurp(ws.out() / "seed_4" / "metrics.csv"));

  const fs::path f = ws.dir / "fc";
  REQUIRE(cli({"forecast", "--config", ws.cfg(), "--checkpoint", ckpt, "--window", "2", "--out", f.string()}).code ==
          kExitOk);
  CHECK(fs::exists(f / "head_1.csv"));
  CHECK(fs::exists(f / "head_2.csv"));
  CHECK(fs::exists(f / "final.csv"));
  CHECK(fs::exists(f / "amwg.csv"));
  CHECK(cli({"forecast", "--config", ws.cfg(), "--checkpoint", ckpt, "--window", "100000"}).code == kExitUsage);
  CHECK(cli({"forecast", "--config", ws.cfg(), "--checkpoint", ckpt, "--window", "-1"}).code == kExitUsage);

  const fs::path h = ws.dir / "heat.csv";
  REQUIRE(cli({"export-weights", "--config", ws.cfg(), "--checkpoint", ckpt, "--out", h.string()}).code == kExitOk);
  CHECK(test::slurp(h).rfind("channel_0,channel_1\n", 0) == 0);

  ws.write("seeds = 4\nhidden = 6\n");
  const Run mismatch = cli({"eval", "--config", ws.cfg(), "--checkpoint", ckpt});
  CHECK(mismatch.code == kExitUsage);
  CHECK(mismatch.err.find("trend_heads.1.fc1.weight") != std::string::npos);

  ws.write("seeds = 4\nmodel = dual_branch\n");
  CHECK(cli({"eval", "--config", ws.cfg(), "--checkpoint", ckpt}).code == kExitUsage);
}

TEST_CASE("baselines train through the same command") {
  Workspace ws("model = dual_branch\nseeds = 1\n");
  const Run r = cli({"train", "--config", ws.cfg()});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const std::string ckpt = (ws.out() / "seed_1" / "model").string();
  const fs::path f = ws.dir / "fc";
  CHECK(cli({"forecast", "--config", ws.cfg(), "--checkpoint", ckpt, "--out", f.string()}).code == kExitOk);
  CHECK(fs::exists(f / "final.csv"));
  CHECK(cli({"export-weights", "--config", ws.cfg(), "--checkpoint", ckpt}).code == kExitUsage);
}
