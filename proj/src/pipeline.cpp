#include "ppm/pipeline.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "ppm/dsa.hpp"
#include "ppm/eikonal.hpp"
#include "ppm/errors.hpp"
#include "ppm/nifti.hpp"

namespace ppm {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string volume_checksum(const ScalarVolume& v) {
  return fnv1a64_hex(v.data.data(), v.data.size() * sizeof(float));
}

std::string mask_checksum(const BinaryMask& m) {
  return fnv1a64_hex(m.data.data(), m.data.size());
}

std::string seeds_checksum(const SeedSet& s) {
  return fnv1a64_hex(s.voxels.data(), s.voxels.size() * sizeof(s.voxels[0]));
}

json config_json(const PipelineConfig& c) {
  return json{{"threshold", c.threshold},
              {"seed_quantile", c.seed_quantile},
              {"seed_population",
               c.seed_population == SeedPopulation::kSkeleton ? "skeleton" : "volume"},
              {"diffusion_iterations", c.diffusion.iterations},
              {"diffusion_time_step", c.diffusion.time_step},
              {"diffusion_conductance", c.diffusion.conductance},
              {"epsilon", c.epsilon},
              {"smoothing_fwhm", c.smoothing_fwhm},
              {"keep_intermediates", c.keep_intermediates}};
}

}  // namespace

std::string fnv1a64_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void PipelineConfig::validate() const {
  ppm::validate(diffusion);  // stability bound and iteration count
  if (!(seed_quantile >= 0.0 && seed_quantile <= 1.0))
    throw ValidationError("seed quantile must be in [0,1]");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError("speed floor epsilon must lie in (0,1)");
  if (!(smoothing_fwhm > 0.0))
    throw ValidationError("smoothing FWHM must be > 0");
  if (out_dir.empty()) throw ValidationError("output directory must be set");
}

PipelineResult run_pipeline(const std::filesystem::path& ct_path,
                            const std::filesystem::path& cta_path,
                            const PipelineConfig& config) {
  config.validate();

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (!std::filesystem::exists(config.out_dir))
    throw IoError("cannot create output directory '" + config.out_dir.string() + "'");

  PipelineResult result;
  result.manifest_path = config.out_dir / "manifest.jsonl";
  std::ofstream manifest(result.manifest_path, std::ios::trunc);
  if (!manifest)
    throw IoError("cannot write manifest '" + result.manifest_path.string() + "'");

  std::vector<std::filesystem::path> written{result.manifest_path};
  const auto cleanup_partial = [&]() {
    if (config.keep_intermediates) return;
    for (const auto& p : written) std::filesystem::remove(p, ec);
  };

  manifest << json{{"event", "run"},
                   {"ct", ct_path.string()},
                   {"cta", cta_path.string()},
                   {"params", config_json(config)}}
                  .dump()
           << "\n";

  const char* stage_name = "load";
  try {
    auto start = Clock::now();
    const ScalarVolume ct = load_nifti(ct_path);
    const ScalarVolume cta = load_nifti(cta_path);
    check_compatible(ct.geometry(), cta.geometry());
    StageRecord load_rec{"load", elapsed_ms(start),
                         {{"ct", volume_checksum(ct)}, {"cta", volume_checksum(cta)}}};
    result.stages.push_back(load_rec);

    const auto save_intermediate = [&](const ScalarVolume& v, const std::string& name) {
      if (!config.keep_intermediates) return;
      const auto p = config.out_dir / name;
      save_nifti(v, p);
      written.push_back(p);
    };

    stage_name = "dsa";
    start = Clock::now();
    const ScalarVolume dsa = subtract_normalize(cta, ct);
    result.stages.push_back({"dsa", elapsed_ms(start), {{"dsa", volume_checksum(dsa)}}});
    save_intermediate(dsa, "dsa.nii.gz");

    stage_name = "enhance";
    start = Clock::now();
    const ScalarVolume vsp = perona_malik(dsa, config.diffusion);
    result.stages.push_back({"enhance", elapsed_ms(start), {{"vsp", volume_checksum(vsp)}}});
    save_intermediate(vsp, "vsp.nii.gz");

    stage_name = "segment";
    start = Clock::now();
    const BinaryMask vessel_mask = binarize(vsp, config.threshold);
    result.stages.push_back(
        {"segment", elapsed_ms(start), {{"mask", mask_checksum(vessel_mask)}}});
    save_intermediate(to_volume(vessel_mask), "mask.nii.gz");

    stage_name = "skeletonize";
    start = Clock::now();
    const BinaryMask skel = thin3d(vessel_mask);
    result.stages.push_back(
        {"skeletonize", elapsed_ms(start), {{"skel", mask_checksum(skel)}}});
    save_intermediate(to_volume(skel), "skel.nii.gz");

    stage_name = "seeds";
    start = Clock::now();
    const SeedSet seeds =
        extract_seeds(skel, vsp, config.seed_quantile, config.seed_population);
    result.stages.push_back({"seeds", elapsed_ms(start), {{"seeds", seeds_checksum(seeds)}}});
    if (config.keep_intermediates) {
      const auto p = config.out_dir / "seeds.csv";
      save_seeds_csv(seeds, p);
      written.push_back(p);
    }

    stage_name = "fastmarch";
    start = Clock::now();
    const SpeedField speed = build_speed(dsa, config.epsilon);
    const ArrivalMap arrival = fast_march(speed, seeds);
    const ScalarVolume ppm = arrival.to_volume();
    result.stages.push_back(
        {"fastmarch", elapsed_ms(start), {{"ppm", volume_checksum(ppm)}}});

    result.ppm_path = config.out_dir / "ppm.nii.gz";
    save_nifti(ppm, result.ppm_path);
    written.push_back(result.ppm_path);
  } catch (const std::exception& e) {
    manifest << json{{"event", "error"}, {"stage", stage_name}, {"message", e.what()}}.dump()
             << "\n";
    manifest.close();
    cleanup_partial();
    throw Error("pipeline stage '" + std::string(stage_name) + "' failed: " + e.what());
  }

  for (const StageRecord& s : result.stages) {
    json rec{{"event", "stage"}, {"name", s.name}, {"wall_ms", s.wall_ms}};
    rec["checksums"] = s.checksums;
    manifest << rec.dump() << "\n";
  }
  manifest << json{{"event", "done"}, {"ppm", result.ppm_path.string()}}.dump() << "\n";
  if (!manifest) throw IoError("write failed for manifest");
  return result;
}

std::vector<PipelineResult> run_pipeline_batch(const std::vector<BatchSubject>& subjects,
                                               const PipelineConfig& config, int jobs) {
  config.validate();
  if (jobs < 1) throw ValidationError("--jobs must be >= 1");
  for (const auto& s : subjects)
    if (s.subject_id.empty() ||
        s.subject_id.find_first_of("/\\") != std::string::npos)
      throw ValidationError("invalid subject id '" + s.subject_id + "'");

  std::vector<PipelineResult> results(subjects.size());
  std::vector<std::string> errors(subjects.size());
  std::atomic<std::size_t> next{0};

  const auto worker = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= subjects.size()) return;
      PipelineConfig sub_config = config;
      sub_config.out_dir = config.out_dir / subjects[idx].subject_id;
      try {
        results[idx] =
            run_pipeline(subjects[idx].ct_path, subjects[idx].cta_path, sub_config);
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(subjects.size()));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (!errors[i].empty())
      throw Error("subject '" + subjects[i].subject_id + "': " + errors[i]);
  return results;
}

}  // namespace ppm
