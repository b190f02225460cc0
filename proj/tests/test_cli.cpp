#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("tdcm_cli_" + std::to_string(std::rand()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  // Exit status of the CLI run inside the sandbox, with stdout kept in `out.txt`.
  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" TDCM_CLI_PATH "' " + args + " > out.txt 2> err.txt";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir / name);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::size_t count_files(const std::string& sub) const {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir / sub)) n += e.is_regular_file();
    return n;
  }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate writes two CSVs and two sidecars per pair, deterministically") {
  Sandbox sb;
  REQUIRE(sb.run("generate --k 2 --num-pairs 10 --out data") == 0);
  CHECK(sb.count_files("data") == 40);
  const std::string first = sb.read("data/pair_003_target.csv");
  REQUIRE(sb.run("generate --k 2 --num-pairs 10 --out data") == 0);
  CHECK(sb.read("data/pair_003_target.csv") == first);
  CHECK(sb.read("data/pair_000_source.json").find("\"config\"") != std::string::npos);
}

TEST_CASE("zero perturbation is recorded in the sidecar") {
  Sandbox sb;
  REQUIRE(sb.run("generate --perturbation 0 --out d") == 0);
  const std::string meta = sb.read("d/pair_000_source.json");
  CHECK(meta.find("\"perturbation_scale\": 0.0") != std::string::npos);
  const auto s = meta.find("\"source_centers\"");
  const auto t = meta.find("\"target_centers\"");
  const auto f = meta.find("\"target_seed\"");
  REQUIRE(s != std::string::npos);
  REQUIRE(t != std::string::npos);
  REQUIRE(f != std::string::npos);
  std::string src = meta.substr(s + 16, t - s - 16);
  std::string tgt = meta.substr(t + 16, f - t - 16);
  src.erase(std::remove(src.begin(), src.end(), ' '), src.end());
  tgt.erase(std::remove(tgt.begin(), tgt.end(), ' '), tgt.end());
  CHECK(src.substr(0, src.rfind(']')) == tgt.substr(0, tgt.rfind(']')));
}

TEST_CASE("train, eval, baseline and report") {
  Sandbox sb;
  REQUIRE(sb.run("generate --n-per-cluster 60 --out d") == 0);
  REQUIRE(sb.run("train --pair d/pair_000 --epochs 20 --checkpoint m.json --variant-O") == 0);
  CHECK(sb.read("out.txt").find("NMI/ARI/ACC source") != std::string::npos);
  CHECK(sb.read("m.record.json").find("\"variant_o\": \"true\"") != std::string::npos);
  REQUIRE(sb.run("eval --pair d/pair_000 --checkpoint m.json --record e.json") == 0);
  CHECK(sb.read("e.json").find("\"diff\"") != std::string::npos);
  REQUIRE(sb.run("baseline --algo gmm --pair d/pair_000 --record b.json") == 0);
  REQUIRE(sb.run("report m.record.json b.json") == 0);
  const std::string table = sb.read("out.txt");
  CHECK(table.find("tdcm-O") != std::string::npos);
  CHECK(table.find("gmm") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2 and write nothing") {
  Sandbox sb;
  REQUIRE(sb.run("generate --n-per-cluster 20 --out d") == 0);
  CHECK(sb.run("train --pair d/missing --checkpoint m.json") == 2);
  CHECK_FALSE(fs::exists(sb.dir / "m.json"));
  CHECK_FALSE(fs::exists(sb.dir / "m.record.json"));
  CHECK(sb.run("train --pair d/pair_000 --checkpoint m.json --tau 0") == 2);
  CHECK_FALSE(fs::exists(sb.dir / "m.json"));
  CHECK(sb.run("train --pair d/pair_000 --checkpoint m.json --no-such-flag 1") == 2);
  CHECK(sb.run("baseline --algo spectral --pair d/pair_000 --record b.json") == 2);
  CHECK(sb.read("err.txt").find("kmeans, gmm, soft-kmeans") != std::string::npos);
  CHECK(sb.run("sweep --axis tau --values '' --out s.csv") == 2);
  CHECK(sb.run("sweep --axis width --values 1 --epochs 1 --out s.csv") == 2);
  CHECK_FALSE(fs::exists(sb.dir / "s.csv"));
  CHECK(sb.run("generate --out /proc/forbidden/dir") == 2);
  CHECK(sb.run("") == 2);
}

TEST_CASE("sweep emits one row per value and seed") {
  Sandbox sb;
  REQUIRE(sb.run("sweep --axis tau --values 0.1,0.5,1,2,5 --seeds 2 --epochs 2 --n-per-cluster 20 --jobs 2 --out t.csv") == 0);
  CHECK(count_lines(sb.read("t.csv")) == 1 + 5 * 2);
  CHECK(sb.read("t.csv.config.json").find("\"seeds\": \"2\"") != std::string::npos);
  REQUIRE(sb.run("sweep --axis L --values 2,4,8,16 --seeds 2 --epochs 2 --n-per-cluster 20 --out l.csv") == 0);
  CHECK(count_lines(sb.read("l.csv")) == 1 + 4 * 2);
}

TEST_CASE("trace-centroids") {
  Sandbox sb;
  REQUIRE(sb.run("generate --n-per-cluster 40 --out d") == 0);
  REQUIRE(sb.run("train --pair d/pair_000 --num-blocks 3 --epochs 5 --checkpoint m.json") == 0);
  REQUIRE(sb.run("trace-centroids --checkpoint m.json --data d/pair_000_target.csv --out t1.json") == 0);
  REQUIRE(sb.run("trace-centroids --checkpoint m.json --data d/pair_000_target.csv --out t2.json") == 0);
  const std::string a = sb.read("t1.json");
  CHECK(a == sb.read("t2.json"));
  std::size_t snapshots = 0;
  for (auto at = a.find("\"block_index\""); at != std::string::npos; at = a.find("\"block_index\"", at + 1)) ++snapshots;
  CHECK(snapshots == 4);
}

TEST_CASE("relative outputs honour TDCM_OUTPUT_ROOT") {
  Sandbox sb;
  fs::create_directories(sb.dir / "root");
  REQUIRE(sb.run("generate --n-per-cluster 10 --out d") == 0);
  const std::string cmd = "cd '" + sb.dir.string() + "' && TDCM_OUTPUT_ROOT=root '" TDCM_CLI_PATH
                          "' baseline --pair d/pair_000 --record b.json > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(sb.dir / "root" / "b.json"));
}

}  // TEST_SUITE
