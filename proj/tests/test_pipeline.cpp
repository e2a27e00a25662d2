#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "ppm/correlation.hpp"
#include "ppm/errors.hpp"
#include "ppm/nifti.hpp"
#include "ppm/phantom.hpp"
#include "ppm/pipeline.hpp"
#include "ppm/render.hpp"

namespace fs = std::filesystem;
using ppm::PhantomSpec;
using ppm::PipelineConfig;

namespace {

fs::path temp_root() {
  const fs::path d = fs::temp_directory_path() / "ppm_pipeline_tests";
  fs::create_directories(d);
  return d;
}

// One shared phantom on disk for the pipeline tests.
struct Fixture {
  fs::path dir = temp_root() / "phantom";
  fs::path ct = dir / "ct.nii.gz";
  fs::path cta = dir / "cta.nii.gz";
  ppm::PhantomBundle bundle;

  Fixture() {
    PhantomSpec spec;
    spec.dims = {48, 48, 48};
    spec.root = {24, 24, 24};
    spec.branches = 5;
    spec.branch_length_range = {10, 18};
    spec.noise_sigma = 1.0;  // 1% of contrast
    spec.rng_seed = 1234;
    bundle = ppm::generate_phantom(spec);
    fs::create_directories(dir);
    ppm::save_nifti(bundle.ct, ct);
    ppm::save_nifti(bundle.cta, cta);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<char>((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("pipeline produces a PPM that tracks the phantom ground truth") {
  const auto& fx = fixture();
  PipelineConfig config;
  config.out_dir = temp_root() / "run_main";
  config.keep_intermediates = true;
  const auto result = ppm::run_pipeline(fx.ct, fx.cta, config);

  CHECK(fs::exists(result.ppm_path));
  for (const char* name : {"dsa.nii.gz", "vsp.nii.gz", "mask.nii.gz", "skel.nii.gz",
                           "seeds.csv", "manifest.jsonl"})
    CHECK(fs::exists(config.out_dir / name));

  const auto ppm_vol = ppm::load_nifti(result.ppm_path);
  const auto report = ppm::compare_maps(ppm_vol, fx.bundle.true_arrival, nullptr, 10.0);
  CHECK(report.rho_smoothed >= 0.9);
  CHECK(report.rho_raw >= 0.8);

  // stage records cover the full chain
  REQUIRE(result.stages.size() == 7);
  CHECK(result.stages[1].name == "dsa");
  CHECK(result.stages.back().name == "fastmarch");
}

TEST_CASE("re-running yields identical checksums and identical bytes") {
  const auto& fx = fixture();
  PipelineConfig config;
  config.out_dir = temp_root() / "det_a";
  const auto a = ppm::run_pipeline(fx.ct, fx.cta, config);
  config.out_dir = temp_root() / "det_b";
  const auto b = ppm::run_pipeline(fx.ct, fx.cta, config);

  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t s = 0; s < a.stages.size(); ++s)
    CHECK(a.stages[s].checksums == b.stages[s].checksums);
  CHECK(read_bytes(a.ppm_path) == read_bytes(b.ppm_path));
}

TEST_CASE("batch mode is independent of the job count") {
  const auto& fx = fixture();
  std::vector<ppm::BatchSubject> subjects{{"s1", fx.ct, fx.cta}, {"s2", fx.ct, fx.cta},
                                          {"s3", fx.ct, fx.cta}};
  PipelineConfig config;
  config.out_dir = temp_root() / "batch_serial";
  const auto serial = ppm::run_pipeline_batch(subjects, config, 1);
  config.out_dir = temp_root() / "batch_parallel";
  const auto parallel = ppm::run_pipeline_batch(subjects, config, 3);

  REQUIRE(serial.size() == parallel.size());
  for (std::size_t s = 0; s < serial.size(); ++s)
    CHECK(read_bytes(serial[s].ppm_path) == read_bytes(parallel[s].ppm_path));
}

TEST_CASE("config validation fires before any stage output") {
  const auto& fx = fixture();
  PipelineConfig config;
  config.out_dir = temp_root() / "invalid_run";
  config.diffusion.time_step = 0.07;  // unstable
  CHECK_THROWS_AS(ppm::run_pipeline(fx.ct, fx.cta, config), ppm::ValidationError);
  CHECK(!fs::exists(config.out_dir / "manifest.jsonl"));
}

TEST_CASE("a failing stage names itself and removes partial outputs") {
  const auto& fx = fixture();
  PipelineConfig config;
  config.out_dir = temp_root() / "failing_run";
  config.threshold = 1e9;  // nothing survives binarization -> empty skeleton
  try {
    ppm::run_pipeline(fx.ct, fx.cta, config);
    FAIL("expected a stage failure");
  } catch (const ppm::Error& e) {
    CHECK(std::string(e.what()).find("seeds") != std::string::npos);
  }
  CHECK(!fs::exists(config.out_dir / "ppm.nii.gz"));
}

TEST_CASE("manifest lines are valid JSON with the expected events") {
  const auto& fx = fixture();
  PipelineConfig config;
  config.out_dir = temp_root() / "manifest_run";
  const auto result = ppm::run_pipeline(fx.ct, fx.cta, config);

  std::ifstream f(result.manifest_path);
  std::string line;
  int runs = 0, stages = 0, done = 0;
  while (std::getline(f, line)) {
    CHECK(line.front() == '{');
    if (line.find("\"event\":\"run\"") != std::string::npos) ++runs;
    if (line.find("\"event\":\"stage\"") != std::string::npos) ++stages;
    if (line.find("\"event\":\"done\"") != std::string::npos) ++done;
  }
  CHECK(runs == 1);
  CHECK(stages == 7);
  CHECK(done == 1);
}

TEST_CASE("PNG renders carry the PNG signature and plausible sizes") {
  const auto& fx = fixture();
  const auto paths =
      ppm::render_orthoslices(fx.bundle.true_arrival, temp_root() / "render" / "truth");
  REQUIRE(paths.size() == 3);
  for (const auto& p : paths) {
    const auto bytes = read_bytes(p);
    REQUIRE(bytes.size() > 100);
    const unsigned char sig[8] = {137, 'P', 'N', 'G', '\r', '\n', 26, '\n'};
    for (int i = 0; i < 8; ++i)
      CHECK(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]) == sig[i]);
    // IHDR width/height for the axial slice must be 48x48
  }
  const auto axial = read_bytes(paths[0]);
  const auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(axial[off])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(axial[off + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(axial[off + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(axial[off + 3]));
  };
  CHECK(be32(16) == 48);  // width
  CHECK(be32(20) == 48);  // height
}

TEST_CASE("fnv1a64 is stable and sensitive") {
  const std::string a = "abc";
  const std::string b = "abd";
  CHECK(ppm::fnv1a64_hex(a.data(), a.size()) == ppm::fnv1a64_hex(a.data(), a.size()));
  CHECK(ppm::fnv1a64_hex(a.data(), a.size()) != ppm::fnv1a64_hex(b.data(), b.size()));
}
