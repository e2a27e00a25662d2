// Command-line front end: one subcommand per pipeline stage, a one-shot
// `pipeline` command, the validation utilities (`compare`, `glm`), the
// synthetic `phantom` generator, and PNG `render` output.
//
// Exit codes: 0 success, 2 validation error (bad flags, malformed or
// incompatible inputs), 1 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ppm/correlation.hpp"
#include "ppm/diffusion.hpp"
#include "ppm/dsa.hpp"
#include "ppm/eikonal.hpp"
#include "ppm/errors.hpp"
#include "ppm/glm.hpp"
#include "ppm/nifti.hpp"
#include "ppm/phantom.hpp"
#include "ppm/pipeline.hpp"
#include "ppm/render.hpp"
#include "ppm/vesselseg.hpp"
#include "ppm/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ppm::SeedPopulation parse_population(const std::string& s) {
  if (s == "skeleton") return ppm::SeedPopulation::kSkeleton;
  if (s == "volume") return ppm::SeedPopulation::kVolume;
  throw ppm::ValidationError("--population must be 'skeleton' or 'volume'");
}

ppm::BinaryMask load_mask(const fs::path& path) {
  return ppm::to_mask(ppm::load_nifti(path));
}

std::vector<ppm::BatchSubject> load_batch_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ppm::ValidationError("cannot open batch CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line) || line != "subject_id,ct_path,cta_path")
    throw ppm::ValidationError(
        "batch CSV must start with header 'subject_id,ct_path,cta_path'");
  std::vector<ppm::BatchSubject> subjects;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ppm::ValidationError("malformed batch CSV row '" + line + "'");
    subjects.push_back({line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1),
                        line.substr(c2 + 1)});
  }
  if (subjects.empty()) throw ppm::ValidationError("batch CSV has no subjects");
  return subjects;
}

int run(int argc, char** argv) {
  CLI::App app{"Predicted perfusion mapping from plain CT and CT angiography"};
  app.require_subcommand(1);

  // ---- dsa ----------------------------------------------------------------
  auto* sc_dsa = app.add_subcommand(
      "dsa", "Subtract CT from CTA, clamp negatives, normalize by the maximum");
  fs::path dsa_cta, dsa_ct, dsa_out;
  sc_dsa->add_option("--cta", dsa_cta, "CTA volume (NIfTI)")->required();
  sc_dsa->add_option("--ct", dsa_ct, "CT volume (NIfTI)")->required();
  sc_dsa->add_option("--out", dsa_out, "output DSA volume")->required();
  sc_dsa->callback([&]() {
    const auto dsa = ppm::subtract_normalize(ppm::load_nifti(dsa_cta), ppm::load_nifti(dsa_ct));
    ppm::save_nifti(dsa, dsa_out);
  });

  // ---- enhance ------------------------------------------------------------
  auto* sc_enh = app.add_subcommand(
      "enhance", "Edge-preserving gradient anisotropic diffusion (vessel enhancement)");
  fs::path enh_in, enh_out;
  ppm::DiffusionParams enh_params;
  sc_enh->add_option("--in", enh_in, "input DSA volume")->required();
  sc_enh->add_option("--out", enh_out, "output VSP volume")->required();
  sc_enh->add_option("--iterations", enh_params.iterations, "diffusion iterations (default 5)");
  sc_enh->add_option("--time-step", enh_params.time_step,
                     "explicit time step, <= 0.0625 for 3D stability (default 0.0625)");
  sc_enh->add_option("--conductance", enh_params.conductance,
                     "edge conductance kappa (default 1.0)");
  sc_enh->callback([&]() {
    ppm::save_nifti(ppm::perona_malik(ppm::load_nifti(enh_in), enh_params), enh_out);
  });

  // ---- segment ------------------------------------------------------------
  auto* sc_seg = app.add_subcommand("segment", "Binarize the VSP into a vessel mask");
  fs::path seg_in, seg_out;
  double seg_threshold = 0.2;
  sc_seg->add_option("--in", seg_in, "input VSP volume")->required();
  sc_seg->add_option("--out", seg_out, "output mask volume")->required();
  sc_seg->add_option("--threshold", seg_threshold,
                     "vessel intensity threshold, strict > (default 0.2)");
  sc_seg->callback([&]() {
    ppm::save_nifti(ppm::to_volume(ppm::binarize(ppm::load_nifti(seg_in), seg_threshold)),
                    seg_out);
  });

  // ---- skeletonize ----------------------------------------------------------
  auto* sc_skel = app.add_subcommand(
      "skeletonize", "Thin a vessel mask to its one-voxel-wide centerline");
  fs::path skel_in, skel_out;
  sc_skel->add_option("--in", skel_in, "input binary mask")->required();
  sc_skel->add_option("--out", skel_out, "output skeleton mask")->required();
  sc_skel->callback([&]() {
    ppm::save_nifti(ppm::to_volume(ppm::thin3d(load_mask(skel_in))), skel_out);
  });

  // ---- seeds ----------------------------------------------------------------
  auto* sc_seeds = app.add_subcommand(
      "seeds", "Select seed points: skeleton voxels above a VSP percentile");
  fs::path seeds_skel, seeds_vsp, seeds_out;
  double seeds_quantile = 0.75;
  std::string seeds_population = "skeleton";
  sc_seeds->add_option("--skel", seeds_skel, "skeleton mask")->required();
  sc_seeds->add_option("--vsp", seeds_vsp, "VSP volume")->required();
  sc_seeds->add_option("--out", seeds_out, "output seeds CSV")->required();
  sc_seeds->add_option("--quantile", seeds_quantile,
                       "percentile fraction, strict > (default 0.75)");
  sc_seeds->add_option("--population", seeds_population,
                       "percentile population: skeleton|volume (default skeleton)");
  sc_seeds->callback([&]() {
    const auto seeds =
        ppm::extract_seeds(load_mask(seeds_skel), ppm::load_nifti(seeds_vsp),
                           seeds_quantile, parse_population(seeds_population));
    ppm::save_seeds_csv(seeds, seeds_out);
  });

  // ---- fastmarch ------------------------------------------------------------
  auto* sc_fm = app.add_subcommand(
      "fastmarch", "Multi-source time-of-arrival solve over the speed potential");
  fs::path fm_speed, fm_seeds, fm_out;
  double fm_epsilon = 1e-3;
  sc_fm->add_option("--speed", fm_speed, "speed potential volume (the DSA)")->required();
  sc_fm->add_option("--seeds", fm_seeds, "seeds CSV")->required();
  sc_fm->add_option("--out", fm_out, "output arrival-time volume (the PPM)")->required();
  sc_fm->add_option("--epsilon", fm_epsilon, "positive speed floor (default 1e-3)");
  sc_fm->callback([&]() {
    const auto dsa = ppm::load_nifti(fm_speed);
    auto seeds = ppm::load_seeds_csv(fm_seeds);
    seeds.source_geometry = dsa.geometry();
    seeds.validate();
    const auto arrival = ppm::fast_march(ppm::build_speed(dsa, fm_epsilon), seeds);
    ppm::save_nifti(arrival.to_volume(), fm_out);
  });

  // ---- pipeline -------------------------------------------------------------
  auto* sc_pipe = app.add_subcommand(
      "pipeline", "CT+CTA -> DSA -> enhance -> segment -> skeletonize -> seeds -> fastmarch");
  sc_pipe->set_config("--config", "", "key=value config file (flags override it)");
  fs::path pipe_ct, pipe_cta, pipe_batch;
  ppm::PipelineConfig pipe_config;
  int pipe_jobs = 1;
  std::string pipe_population = "skeleton";
  sc_pipe->add_option("--ct", pipe_ct, "CT volume");
  sc_pipe->add_option("--cta", pipe_cta, "CTA volume");
  sc_pipe->add_option("--batch", pipe_batch,
                      "CSV of subject_id,ct_path,cta_path rows (instead of --ct/--cta)");
  sc_pipe->add_option("--out-dir", pipe_config.out_dir, "output directory")->required();
  sc_pipe->add_option("--threshold", pipe_config.threshold,
                      "vessel intensity threshold (default 0.2)");
  sc_pipe->add_option("--seed-quantile", pipe_config.seed_quantile,
                      "seed percentile fraction (default 0.75)");
  sc_pipe->add_option("--seed-population", pipe_population,
                      "seed percentile population: skeleton|volume (default skeleton)");
  sc_pipe->add_option("--iterations", pipe_config.diffusion.iterations,
                      "diffusion iterations (default 5)");
  sc_pipe->add_option("--time-step", pipe_config.diffusion.time_step,
                      "diffusion time step (default 0.0625)");
  sc_pipe->add_option("--conductance", pipe_config.diffusion.conductance,
                      "diffusion conductance (default 1.0)");
  sc_pipe->add_option("--epsilon", pipe_config.epsilon, "speed floor (default 1e-3)");
  sc_pipe->add_option("--fwhm", pipe_config.smoothing_fwhm,
                      "smoothing FWHM in voxels recorded for downstream use (default 10)");
  sc_pipe->add_flag("--keep-intermediates", pipe_config.keep_intermediates,
                    "keep per-stage volumes and seeds.csv");
  sc_pipe->add_option("--jobs", pipe_jobs, "parallel subjects in batch mode (default 1)");
  sc_pipe->callback([&]() {
    pipe_config.seed_population = parse_population(pipe_population);
    if (!pipe_batch.empty()) {
      ppm::run_pipeline_batch(load_batch_csv(pipe_batch), pipe_config, pipe_jobs);
      return;
    }
    if (pipe_ct.empty() || pipe_cta.empty())
      throw ppm::ValidationError("pipeline needs --ct and --cta (or --batch)");
    const auto result = ppm::run_pipeline(pipe_ct, pipe_cta, pipe_config);
    std::cout << result.ppm_path.string() << "\n";
  });

  // ---- compare ----------------------------------------------------------------
  auto* sc_cmp = app.add_subcommand(
      "compare", "Spearman rank agreement between a PPM and a reference map");
  fs::path cmp_ppm, cmp_ref, cmp_mask, cmp_out, cmp_render;
  double cmp_fwhm = 10.0;
  bool cmp_no_smooth = false;
  std::string cmp_units = "voxels";
  sc_cmp->add_option("--ppm", cmp_ppm, "predicted perfusion map")->required();
  sc_cmp->add_option("--reference", cmp_ref, "reference map (e.g. T-max)")->required();
  sc_cmp->add_option("--mask", cmp_mask, "optional analysis mask");
  sc_cmp->add_option("--fwhm", cmp_fwhm, "smoothing FWHM (default 10)");
  sc_cmp->add_option("--fwhm-units", cmp_units, "voxels|mm (default voxels)");
  sc_cmp->add_flag("--no-smooth", cmp_no_smooth, "report raw correlation only");
  sc_cmp->add_option("--out", cmp_out, "report CSV path")->required();
  sc_cmp->add_option("--render", cmp_render,
                     "prefix for orthogonal-slice PNGs of both smoothed maps");
  sc_cmp->callback([&]() {
    const auto ppm_vol = ppm::load_nifti(cmp_ppm);
    const auto ref_vol = ppm::load_nifti(cmp_ref);
    ppm::BinaryMask mask;
    const bool have_mask = !cmp_mask.empty();
    if (have_mask) mask = load_mask(cmp_mask);

    double fwhm = cmp_no_smooth ? 0.0 : cmp_fwhm;
    if (fwhm > 0.0 && cmp_units == "mm") {
      // Converted with the mean spacing of the reference grid.
      const auto& s = ref_vol.spacing;
      fwhm = fwhm / ((s[0] + s[1] + s[2]) / 3.0);
    } else if (cmp_units != "voxels" && cmp_units != "mm") {
      throw ppm::ValidationError("--fwhm-units must be 'voxels' or 'mm'");
    }

    const auto report =
        ppm::compare_maps(ppm_vol, ref_vol, have_mask ? &mask : nullptr, fwhm);
    if (!cmp_out.parent_path().empty())
      fs::create_directories(cmp_out.parent_path());
    std::ofstream f(cmp_out, std::ios::trunc);
    if (!f) throw ppm::IoError("cannot write '" + cmp_out.string() + "'");
    f << "rho_raw,rho_smoothed,p_value,n_voxels,fwhm_used\n";
    f << report.rho_raw << "," << report.rho_smoothed << "," << report.p_value << ","
      << report.n_voxels << "," << report.fwhm_used << "\n";
    std::cout << "rho_raw=" << report.rho_raw << " rho_smoothed=" << report.rho_smoothed
              << " p=" << report.p_value << " n=" << report.n_voxels << "\n";

    if (!cmp_render.empty()) {
      const double used = report.fwhm_used;
      const auto ppm_s = used > 0.0 ? ppm::gaussian_smooth(ppm_vol, used) : ppm_vol;
      const auto ref_s = used > 0.0 ? ppm::gaussian_smooth(ref_vol, used) : ref_vol;
      ppm::render_orthoslices(ppm_s, cmp_render.string() + "_ppm");
      ppm::render_orthoslices(ref_s, cmp_render.string() + "_reference");
    }
  });

  // ---- glm ----------------------------------------------------------------
  auto* sc_glm = app.add_subcommand(
      "glm", "Voxelwise GLM of PPM vs a symptom score with permutation FWE");
  fs::path glm_cohort, glm_outdir;
  std::vector<double> glm_contrast{0.0, 1.0, 0.0, 0.0};
  int glm_nperm = 1000, glm_extent = 100;
  double glm_alpha = 0.05, glm_fwhm = 0.0;
  std::uint64_t glm_seed = 0;
  bool glm_two_sided = false;
  sc_glm->add_option("--cohort", glm_cohort,
                     "CSV with subject_id,ppm_path,score,age,gender")->required();
  sc_glm->add_option("--out-dir", glm_outdir, "output directory")->required();
  sc_glm->add_option("--contrast", glm_contrast,
                     "4 contrast weights for [intercept,score,age,gender] "
                     "(default 0 1 0 0)")->expected(4);
  sc_glm->add_option("--n-perm", glm_nperm, "permutations, >= 100 (default 1000)");
  sc_glm->add_option("--alpha", glm_alpha, "FWE level (default 0.05)");
  sc_glm->add_option("--extent", glm_extent, "cluster extent threshold (default 100)");
  sc_glm->add_option("--seed", glm_seed, "permutation RNG seed (default 0)");
  sc_glm->add_option("--smooth-fwhm", glm_fwhm,
                     "smooth input PPMs with this FWHM in voxels before fitting "
                     "(default 0 = raw)");
  sc_glm->add_flag("--two-sided", glm_two_sided, "two-sided inference on |t|");
  sc_glm->callback([&]() {
    const ppm::CohortTable cohort = ppm::load_cohort_csv(glm_cohort);
    std::vector<ppm::ScalarVolume> volumes;
    volumes.reserve(cohort.rows.size());
    for (const auto& row : cohort.rows) {
      ppm::ScalarVolume v = ppm::load_nifti(row.ppm_path);
      if (glm_fwhm > 0.0) v = ppm::gaussian_smooth(v, glm_fwhm);
      volumes.push_back(std::move(v));
    }

    ppm::DesignMatrix design = ppm::make_design(cohort);
    for (int c = 0; c < 4; ++c) design.contrast(c) = glm_contrast[static_cast<std::size_t>(c)];

    const auto fit = ppm::fit_voxelwise(volumes, design);
    const double threshold = ppm::permutation_fwe(volumes, design, glm_nperm, glm_alpha,
                                                  glm_seed, glm_two_sided);
    const auto t_map = fit.t_volume();
    const auto clusters = ppm::cluster_extent(t_map, threshold, glm_extent);

    fs::create_directories(glm_outdir);
    static const char* kBetaNames[4] = {"beta_intercept.nii.gz", "beta_score.nii.gz",
                                        "beta_age.nii.gz", "beta_gender.nii.gz"};
    for (int c = 0; c < 4; ++c)
      ppm::save_nifti(fit.beta_volume(c), glm_outdir / kBetaNames[c]);
    ppm::save_nifti(t_map, glm_outdir / "t_map.nii.gz");
    ppm::save_nifti(ppm::to_volume(clusters.significant_mask),
                    glm_outdir / "significant_mask.nii.gz");
    ppm::save_clusters_csv(clusters, glm_outdir / "clusters.csv");

    std::ofstream info(glm_outdir / "run_info.json", std::ios::trunc);
    info << json{{"n_subjects", cohort.rows.size()},
                 {"contrast", glm_contrast},
                 {"n_perm", glm_nperm},
                 {"alpha", glm_alpha},
                 {"extent", glm_extent},
                 {"seed", glm_seed},
                 {"two_sided", glm_two_sided},
                 {"input_smoothing_fwhm", glm_fwhm},
                 {"fwe_threshold", threshold},
                 {"n_clusters", clusters.clusters.size()}}
                .dump(2)
         << "\n";
    std::cout << "fwe_threshold=" << threshold
              << " clusters=" << clusters.clusters.size() << "\n";
  });

  // ---- phantom ----------------------------------------------------------------
  auto* sc_ph = app.add_subcommand(
      "phantom", "Synthetic CT/CTA pair with a known vascular tree and arrival truth");
  fs::path ph_outdir;
  ppm::PhantomSpec ph_spec;
  std::vector<int> ph_dims{96, 96, 96};
  std::vector<int> ph_root;
  std::vector<int> ph_lengths{15, 30};
  sc_ph->set_config("--spec", "", "key=value spec file (flags override it)");
  sc_ph->add_option("--out-dir", ph_outdir, "output directory")->required();
  sc_ph->add_option("--dims", ph_dims, "grid size (default 96 96 96)")->expected(3);
  sc_ph->add_option("--root", ph_root, "root voxel (default grid center)")->expected(3);
  sc_ph->add_option("--branches", ph_spec.branches, "branch count (default 8)");
  sc_ph->add_option("--branch-length", ph_lengths,
                    "min and max branch length in voxels (default 15 30)")->expected(2);
  sc_ph->add_option("--radius", ph_spec.vessel_radius, "vessel radius in voxels (default 2)");
  sc_ph->add_option("--contrast", ph_spec.contrast_intensity,
                    "CTA-CT intensity inside vessels (default 100)");
  sc_ph->add_option("--tissue", ph_spec.tissue_intensity, "CT tissue intensity (default 30)");
  sc_ph->add_option("--noise", ph_spec.noise_sigma, "Gaussian noise sigma (default 0)");
  sc_ph->add_option("--seed", ph_spec.rng_seed, "RNG seed (default 42)");
  sc_ph->callback([&]() {
    ph_spec.dims = {ph_dims[0], ph_dims[1], ph_dims[2]};
    ph_spec.root = ph_root.size() == 3
                       ? std::array<int, 3>{ph_root[0], ph_root[1], ph_root[2]}
                       : std::array<int, 3>{ph_dims[0] / 2, ph_dims[1] / 2, ph_dims[2] / 2};
    ph_spec.branch_length_range = {ph_lengths[0], ph_lengths[1]};
    const auto bundle = ppm::generate_phantom(ph_spec);
    fs::create_directories(ph_outdir);
    ppm::save_nifti(bundle.ct, ph_outdir / "ct.nii.gz");
    ppm::save_nifti(bundle.cta, ph_outdir / "cta.nii.gz");
    ppm::save_nifti(ppm::to_volume(bundle.true_vessel_mask),
                    ph_outdir / "true_vessel_mask.nii.gz");
    ppm::save_nifti(bundle.true_arrival, ph_outdir / "true_arrival.nii.gz");
    ppm::save_seeds_csv(bundle.centerline_seeds(), ph_outdir / "true_centerline.csv");
  });

  // ---- render ----------------------------------------------------------------
  auto* sc_render = app.add_subcommand(
      "render", "Orthogonal mid-slice PNGs with a diverging colormap");
  fs::path render_in, render_prefix;
  sc_render->add_option("--in", render_in, "input volume")->required();
  sc_render->add_option("--out-prefix", render_prefix, "output path prefix")->required();
  sc_render->callback([&]() {
    for (const auto& p : ppm::render_orthoslices(ppm::load_nifti(render_in), render_prefix))
      std::cout << p.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ppm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
