#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ppm/diffusion.hpp"
#include "ppm/vesselseg.hpp"
#include "ppm/volume.hpp"

namespace ppm {

/// Every tunable of the CT/CTA -> PPM chain, validated as a whole before any
/// stage runs.
struct PipelineConfig {
  double threshold = 0.2;        // vessel intensity threshold on the VSP
  double seed_quantile = 0.75;   // strict percentile cut for seed points
  SeedPopulation seed_population = SeedPopulation::kSkeleton;
  DiffusionParams diffusion;     // {iterations=5, time_step=0.0625, conductance=1}
  double epsilon = 1e-3;         // speed floor for fast marching
  double smoothing_fwhm = 10.0;  // voxels, used by downstream comparison
  std::filesystem::path out_dir = ".";
  bool keep_intermediates = false;

  void validate() const;
};

struct StageRecord {
  std::string name;
  double wall_ms = 0.0;
  // Logical output name -> checksum of the in-memory payload (fnv1a64 over
  // the raw data bytes), so determinism can be checked without re-reading
  // files.
  std::map<std::string, std::string> checksums;
};

struct PipelineResult {
  std::filesystem::path ppm_path;
  std::filesystem::path manifest_path;
  std::vector<StageRecord> stages;
};

/// CT/CTA -> dsa -> diffusion -> binarize -> thin3d -> extract_seeds ->
/// build_speed -> fast_march. Writes ppm.nii.gz (plus intermediates and
/// seeds.csv when keep_intermediates) and a JSON-lines manifest recording
/// parameters, stage wall times, and payload checksums. On a stage failure
/// the error names the stage and partial outputs are removed unless
/// keep_intermediates.
PipelineResult run_pipeline(const std::filesystem::path& ct_path,
                            const std::filesystem::path& cta_path,
                            const PipelineConfig& config);

struct BatchSubject {
  std::string subject_id;
  std::filesystem::path ct_path;
  std::filesystem::path cta_path;
};

/// Runs subjects independently (each into out_dir/<subject_id>/) on up to
/// `jobs` worker threads; no shared mutable state, so results are identical
/// for any job count.
std::vector<PipelineResult> run_pipeline_batch(const std::vector<BatchSubject>& subjects,
                                               const PipelineConfig& config, int jobs);

/// FNV-1a 64-bit checksum, hex-encoded.
std::string fnv1a64_hex(const void* data, std::size_t size);

}  // namespace ppm
