// CLI: exit codes, deterministic stdout, tokenize round trip, config snapshot.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sonamix/frontend.hpp"
#include "sonamix/quantizer.hpp"

using namespace sonamix;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const auto out_file = fs::temp_directory_path() / "sonamix_cli_out.txt";
  const std::string cmd = g_cli_path + " " + args + " > " + out_file.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(out_file);
  std::stringstream ss;
  ss << f.rdbuf();
  r.out = ss.str();
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-sonamix-binary>\n");
    return 2;
  }
  g_cli_path = argv[1];
  doctest::Context ctx;
  ctx.applyCommandLine(1, argv);
  return ctx.run();
}

TEST_CASE("census runs, exits 0, and prints byte-identical output across runs") {
  const std::string args =
      "--out /tmp/sonamix_cli_census census --block branchformer --branch summary_mixing "
      "--dim 1024 --layers 12";
  const auto a = run_cli(args);
  const auto b = run_cli(args);
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("total") != std::string::npos);
  CHECK(a.out.find("global_branch") != std::string::npos);
}

TEST_CASE("unknown flags are usage errors with exit code 2") {
  const auto r = run_cli("census --no-such-flag");
  CHECK(r.exit_code == 2);
}

TEST_CASE("runtime failures exit 1") {
  const auto r = run_cli("probe --checkpoint /nonexistent.smxc");
  CHECK(r.exit_code == 1);
}

TEST_CASE("every run writes a resolved-config snapshot into the output directory") {
  const std::string out_dir = (fs::temp_directory_path() / "sonamix_cli_snap").string();
  fs::remove_all(out_dir);
  const auto r = run_cli("--out " + out_dir + " census --dim 64 --layers 1");
  CHECK(r.exit_code == 0);
  std::ifstream f(fs::path(out_dir) / "resolved_config.toml");
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str().find("dim") != std::string::npos);
  fs::remove_all(out_dir);
}

TEST_CASE("tokenize on a feature file matches the library path") {
  const std::string dir = (fs::temp_directory_path() / "sonamix_cli_tok").string();
  fs::create_directories(dir);
  SynthParams p;
  p.duration_s = 1.0;
  const Waveform w = synthesize_test_waveform(SynthKind::ToneMixture, 4, p);
  const auto stacked = stack_frames(compute_log_mel(w), 4);
  const std::string feat_path = dir + "/clip.smxf";
  write_features(feat_path, stacked.frames, stacked.frame_rate);

  QuantizerConfig qc;
  qc.codebook_size = 256;
  qc.codebook_dim = 8;
  qc.seed = 9;
  const RandomQuantizer quant(qc);
  const auto expected = quant.quantize_sequence(stacked);

  const auto r = run_cli("--seed 9 --out " + dir + " tokenize --input " + feat_path +
                         " --codebook-size 256 --codebook-dim 8");
  CHECK(r.exit_code == 0);
  std::istringstream is(r.out);
  std::vector<int> tokens;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) tokens.push_back(std::stoi(line));
  CHECK(tokens == expected);

  // Binary output round trip.
  const auto rb = run_cli("--seed 9 --out " + dir + " tokenize --input " + feat_path +
                          " --codebook-size 256 --codebook-dim 8 --binary --output " + dir +
                          "/tokens.u32");
  CHECK(rb.exit_code == 0);
  std::ifstream bf(dir + "/tokens.u32", std::ios::binary);
  std::vector<int> btokens;
  uint32_t v = 0;
  while (bf.read(reinterpret_cast<char*>(&v), 4)) btokens.push_back(static_cast<int>(v));
  CHECK(btokens == expected);
  fs::remove_all(dir);
}
