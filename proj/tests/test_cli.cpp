#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mcseg/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace mcseg;
using testutil::read_file_bytes;
using testutil::same_bytes;
using testutil::work_dir;

#ifndef MCSEG_CLI_PATH
#define MCSEG_CLI_PATH "mcseg"
#endif

namespace {

// Runs the CLI with stdout+stderr captured into `log`; returns the exit code.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(MCSEG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

int run_cli(const std::string& args) {
  static const fs::path log = work_dir("cli") / "scratch.log";
  return run_cli(args, log);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// A small synthetic scene every pipeline test can share.
fs::path make_phantom(const fs::path& dir, int seed = 9) {
  const int code =
      run_cli("phantom --width 256 --height 256 --blobs 12 --min-dist 20"
              " --bg-amplitude 0.01 --noise 0.002 --seed " + std::to_string(seed) +
              " --prefix scene --output-dir " + dir.string(),
              dir / "phantom.log");
  REQUIRE(code == 0);
  return dir / "scene.pgm";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes distinguish usage, parameter, and format problems") {
  const fs::path dir = work_dir("cli_exit");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);                    // a subcommand is required
  CHECK(run_cli("hdog") == 1);                // --image is required
  CHECK(run_cli("hdog --image " + (dir / "missing.pgm").string()) == 2);

  make_phantom(dir);
  const std::string image = " --image " + (dir / "scene.pgm").string() +
                            " --output-dir " + dir.string();
  CHECK(run_cli("hdog" + image + " --t-dog -1") == 1);
  CHECK(run_cli("hdog" + image + " --n-scales 1") == 1);

  write_file(dir / "bad_key.json", "{\"sigma_mim\": 2.0}\n");
  CHECK(run_cli("hdog" + image + " --config " + (dir / "bad_key.json").string()) == 1);
  write_file(dir / "not_json.json", "{ not json\n");
  CHECK(run_cli("hdog" + image + " --config " + (dir / "not_json.json").string()) == 2);
  CHECK(run_cli("hdog" + image + " --config " + (dir / "absent.json").string()) == 2);

  CHECK(run_cli("segment" + image) == 1);  // needs --model xor --proximity
}

TEST_CASE("phantom bundles are reproducible per seed") {
  const fs::path a = work_dir("cli_phantom_a");
  const fs::path b = work_dir("cli_phantom_b");
  const fs::path c = work_dir("cli_phantom_c");
  make_phantom(a);
  make_phantom(b);
  const char* names[] = {"scene.pgm",       "scene_truth.pgm", "scene_labels.mcf1",
                         "scene_annotations.pgm", "scene_blobs.csv", "scene_meta.json"};
  for (const char* name : names) CHECK(same_bytes(a / name, b / name));

  make_phantom(c, 10);
  CHECK_FALSE(read_file_bytes(a / "scene.pgm") == read_file_bytes(c / "scene.pgm"));
}

TEST_CASE("staged commands compose to the same mask as segment") {
  const fs::path dir = work_dir("cli_compose");
  const fs::path image = make_phantom(dir);
  const std::string common = " --output-dir " + dir.string();

  CHECK(run_cli("proximity --annotations " + (dir / "scene_annotations.pgm").string() +
                " --xi 10 --alpha 1 --out prox.mcf1" + common,
                dir / "prox.log") == 0);
  CHECK(run_cli("hdog --image " + image.string() + common, dir / "hdog.log") == 0);
  CHECK(run_cli("combine --candidates " + (dir / "hdog_mask.pgm").string() +
                " --proximity " + (dir / "prox.mcf1").string() +
                " --p-thr 0.4 --out staged.pgm" + common,
                dir / "combine.log") == 0);
  CHECK(run_cli("segment --image " + image.string() + " --proximity " +
                (dir / "prox.mcf1").string() + " --p-thr 0.4 --out direct.pgm" + common,
                dir / "segment.log") == 0);

  CHECK(same_bytes(dir / "staged.pgm", dir / "direct.pgm"));

  // The final mask is a subset of the candidates, never a superset.
  const BinaryMask final_mask = read_mask_pgm((dir / "direct.pgm").string());
  const BinaryMask candidates = read_mask_pgm((dir / "hdog_mask.pgm").string());
  for (std::size_t i = 0; i < final_mask.bits.size(); ++i)
    if (final_mask.bits[i]) CHECK(candidates.bits[i] == 1);
}

TEST_CASE("hdog and segment are byte-stable across reruns and thread counts") {
  const fs::path dir = work_dir("cli_threads");
  const fs::path image = make_phantom(dir);
  CHECK(run_cli("proximity --annotations " + (dir / "scene_annotations.pgm").string() +
                " --out prox.mcf1 --output-dir " + dir.string(),
                dir / "prox.log") == 0);

  const auto variant = [&](const std::string& tag, const std::string& threads) {
    CHECK(run_cli("hdog --image " + image.string() + " --threads " + threads +
                  " --mask-out mask_" + tag + ".pgm --blobs-out blobs_" + tag +
                  ".csv --output-dir " + dir.string(),
                  dir / ("hdog_" + tag + ".log")) == 0);
    CHECK(run_cli("segment --image " + image.string() + " --proximity " +
                  (dir / "prox.mcf1").string() + " --threads " + threads +
                  " --out seg_" + tag + ".pgm --output-dir " + dir.string(),
                  dir / ("seg_" + tag + ".log")) == 0);
  };
  variant("s1", "1");
  variant("s1b", "1");
  variant("t4", "4");

  CHECK(same_bytes(dir / "mask_s1.pgm", dir / "mask_s1b.pgm"));
  CHECK(same_bytes(dir / "mask_s1.pgm", dir / "mask_t4.pgm"));
  CHECK(same_bytes(dir / "blobs_s1.csv", dir / "blobs_t4.csv"));
  CHECK(same_bytes(dir / "seg_s1.pgm", dir / "seg_s1b.pgm"));
  CHECK(same_bytes(dir / "seg_s1.pgm", dir / "seg_t4.pgm"));
}

TEST_CASE("train and predict run end to end deterministically") {
  const fs::path dir = work_dir("cli_train");
  CHECK(run_cli("phantom --width 96 --height 96 --blobs 6 --radius-min 3"
                " --radius-max 4 --bg-amplitude 0.01 --noise 0.002 --seed 5"
                " --prefix small --output-dir " + dir.string(),
                dir / "phantom.log") == 0);
  CHECK(run_cli("proximity --annotations " + (dir / "small_annotations.pgm").string() +
                " --out small_prox.mcf1 --output-dir " + dir.string(),
                dir / "prox.log") == 0);

  write_file(dir / "manifest.json",
             "[{\"image\": \"" + (dir / "small.pgm").string() +
                 "\", \"target\": \"" + (dir / "small_prox.mcf1").string() + "\"}]\n");

  const auto train_once = [&](const std::string& tag) {
    CHECK(run_cli("train --manifest " + (dir / "manifest.json").string() +
                  " --patch 64 --stride 32 --epochs 2 --batch 2 --keep-empty"
                  " --seed 3 --model-out model_" + tag + ".mcm1 --trace-out trace_" +
                  tag + ".csv --output-dir " + dir.string(),
                  dir / ("train_" + tag + ".log")) == 0);
  };
  train_once("a");
  train_once("b");
  CHECK(same_bytes(dir / "model_a.mcm1", dir / "model_b.mcm1"));
  CHECK(same_bytes(dir / "trace_a.csv", dir / "trace_b.csv"));
  CHECK(read_file_bytes(dir / "trace_a.csv").rfind("epoch,dice_loss\n", 0) == 0);

  const auto predict_once = [&](const std::string& tag, const std::string& threads) {
    CHECK(run_cli("predict --model " + (dir / "model_a.mcm1").string() + " --image " +
                  (dir / "small.pgm").string() + " --tile 64 --overlap 16 --threads " +
                  threads + " --out pred_" + tag + ".mcf1 --output-dir " + dir.string(),
                  dir / ("pred_" + tag + ".log")) == 0);
  };
  predict_once("s1", "1");
  predict_once("t4", "4");
  CHECK(same_bytes(dir / "pred_s1.mcf1", dir / "pred_t4.mcf1"));

  const ProximityMap pred = read_mcf1((dir / "pred_s1.mcf1").string());
  CHECK(pred.width == 96);
  CHECK(pred.height == 96);
  for (double v : pred.values) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  // A model-driven segment runs off the same checkpoint.
  CHECK(run_cli("segment --image " + (dir / "small.pgm").string() + " --model " +
                (dir / "model_a.mcm1").string() + " --tile 64 --overlap 16" +
                " --out seg_model.pgm --output-dir " + dir.string(),
                dir / "seg_model.log") == 0);
  CHECK(fs::file_size(dir / "seg_model.pgm") > 0);
}

TEST_CASE("evaluation commands emit the expected tables") {
  const fs::path dir = work_dir("cli_eval");
  const fs::path image = make_phantom(dir);
  const std::string common = " --output-dir " + dir.string();
  CHECK(run_cli("proximity --annotations " + (dir / "scene_annotations.pgm").string() +
                " --out prox.mcf1" + common, dir / "prox.log") == 0);
  CHECK(run_cli("hdog --image " + image.string() + common, dir / "hdog.log") == 0);

  CHECK(run_cli("eval iou --pred " + (dir / "scene_truth.pgm").string() + " --ref " +
                (dir / "scene_truth.pgm").string() + common,
                dir / "iou.log") == 0);
  const std::string summary = read_file_bytes(dir / "iou_summary.csv");
  CHECK(summary.rfind("index,pred,ref,iou,mean_iou,ref_objects,object_iou_mean", 0) == 0);
  CHECK(summary.find(",1,") != std::string::npos);  // self-comparison scores iou 1
  CHECK(read_file_bytes(dir / "iou_objects.csv").rfind("index,ref_label,pred_label,iou", 0) == 0);

  write_file(dir / "froc.json",
             "[{\"candidates\": \"" + (dir / "hdog_mask.pgm").string() +
                 "\", \"proximity\": \"" + (dir / "prox.mcf1").string() +
                 "\", \"reference\": \"" + (dir / "scene_labels.mcf1").string() +
                 "\"}]\n");
  const auto froc_once = [&](const std::string& tag, const std::string& threads) {
    CHECK(run_cli("eval froc --manifest " + (dir / "froc.json").string() +
                  " --seed 11 --threads " + threads + " --curve-out curve_" + tag +
                  ".csv --summary-out pauc_" + tag + ".csv --svg-out plot_" + tag +
                  ".svg" + common,
                  dir / ("froc_" + tag + ".log")) == 0);
  };
  froc_once("a", "1");
  froc_once("b", "1");
  froc_once("t4", "4");
  CHECK(same_bytes(dir / "curve_a.csv", dir / "curve_b.csv"));
  CHECK(same_bytes(dir / "curve_a.csv", dir / "curve_t4.csv"));
  CHECK(same_bytes(dir / "pauc_a.csv", dir / "pauc_t4.csv"));

  const std::string curve = read_file_bytes(dir / "curve_a.csv");
  CHECK(curve.find("p_thr") != std::string::npos);
  CHECK(curve.find("fp_per_cm2") != std::string::npos);
  CHECK(read_file_bytes(dir / "pauc_a.csv").rfind("pauc_mean,pauc_low95", 0) == 0);
  CHECK(read_file_bytes(dir / "plot_a.svg").find("<svg") != std::string::npos);
}

TEST_CASE("cluster characterizes separated groups and rejects thin data") {
  const fs::path dir = work_dir("cli_cluster");

  // Two tight groups of six single-pixel objects, far apart: OPTICS finds two
  // spatial clusters, giving two feature rows for k-means.
  BinaryMask mask(340, 340);
  for (int i = 0; i < 6; ++i) {
    mask.at(20 + 3 * (i % 3), 20 + 3 * (i / 3)) = 1;
    mask.at(300 + 3 * (i % 3), 300 + 3 * (i / 3)) = 1;
  }
  write_mask_pgm(mask, (dir / "objects.pgm").string());

  const auto cluster_once = [&](const std::string& tag) {
    CHECK(run_cli("cluster --mask " + (dir / "objects.pgm").string() +
                  " --image-id case --k 2 --features-out feat_" + tag +
                  ".csv --summary-out sum_" + tag + ".csv --output-dir " + dir.string(),
                  dir / ("cluster_" + tag + ".log")) == 0);
  };
  cluster_once("a");
  cluster_once("b");
  CHECK(same_bytes(dir / "feat_a.csv", dir / "feat_b.csv"));

  const std::string features = read_file_bytes(dir / "feat_a.csv");
  CHECK(features.rfind("image_id,cluster,point_count", 0) == 0);
  CHECK(features.find("case,0,6,") != std::string::npos);
  CHECK(features.find("case,1,6,") != std::string::npos);
  const std::string summary = read_file_bytes(dir / "sum_a.csv");
  CHECK(summary.rfind("images,objects,clusters,noise_points,kmeans_k,inertia,homogeneity", 0) == 0);
  CHECK(summary.find("1,12,2,0,2,") != std::string::npos);

  // Fewer feature rows than k is a data problem, not a crash.
  CHECK(run_cli("cluster --mask " + (dir / "objects.pgm").string() +
                " --k 99 --output-dir " + dir.string(),
                dir / "cluster_thin.log") == 3);
}

}  // TEST_SUITE
