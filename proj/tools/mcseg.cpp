// Command-line surface for the microcalcification segmentation toolkit.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcseg/clustering.hpp"
#include "mcseg/combiner.hpp"
#include "mcseg/config.hpp"
#include "mcseg/core.hpp"
#include "mcseg/hessian_blob.hpp"
#include "mcseg/io.hpp"
#include "mcseg/metrics.hpp"
#include "mcseg/phantom.hpp"
#include "mcseg/pipeline.hpp"
#include "mcseg/proximity.hpp"
#include "mcseg/regressor.hpp"
#include "mcseg/scale_space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcseg;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output_dir = ".";
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma_min, sigma_max, t_dog, o_dog, h_thr;
  std::optional<double> xi, alpha, p_thr, o_thr, spacing;
  std::optional<int> n_scales;
  std::optional<std::string> overlap_mode;
  std::optional<int> optics_min_samples, kmeans_k, kmeans_restarts;
  std::optional<double> optics_max_eps, eps_cut;
};

PipelineConfig resolve_config(const CommonOpts& o) {
  PipelineConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (o.threads) cfg.threads = *o.threads;
  if (o.seed) cfg.seed = *o.seed;
  if (o.sigma_min) cfg.sigma_min = *o.sigma_min;
  if (o.sigma_max) cfg.sigma_max = *o.sigma_max;
  if (o.n_scales) cfg.n_scales = *o.n_scales;
  if (o.t_dog) cfg.t_dog = *o.t_dog;
  if (o.o_dog) cfg.o_dog = *o.o_dog;
  if (o.h_thr) cfg.h_thr = *o.h_thr;
  if (o.xi) cfg.xi = *o.xi;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.p_thr) cfg.p_thr = *o.p_thr;
  if (o.o_thr) cfg.o_thr = *o.o_thr;
  if (o.spacing) cfg.pixel_spacing_mm = *o.spacing;
  if (o.overlap_mode) cfg.overlap_mode = *o.overlap_mode;
  if (o.optics_min_samples) cfg.optics_min_samples = *o.optics_min_samples;
  if (o.optics_max_eps) cfg.optics_max_eps_mm = *o.optics_max_eps;
  if (o.eps_cut) cfg.eps_cut_mm = *o.eps_cut;
  if (o.kmeans_k) cfg.kmeans_k = *o.kmeans_k;
  if (o.kmeans_restarts) cfg.kmeans_restarts = *o.kmeans_restarts;
  validate_config(cfg);
  return cfg;
}

fs::path out_path(const CommonOpts& o, const std::string& name) {
  fs::path p(name);
  if (p.is_absolute()) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
  fs::create_directories(o.output_dir);
  return fs::path(o.output_dir) / p;
}

bool has_extension(const std::string& path, const char* ext) {
  const fs::path p(path);
  return p.extension() == ext;
}

GrayImage read_image(const std::string& path, double spacing_mm) {
  if (has_extension(path, ".mcf1")) {
    const ProximityMap map = read_mcf1(path);
    GrayImage img;
    img.width = map.width;
    img.height = map.height;
    img.pixel_spacing_mm = map.pixel_spacing_mm;
    img.data = map.values;
    return img;
  }
  return read_pgm(path, spacing_mm);
}

LabeledMask read_labels_any(const std::string& path) {
  if (has_extension(path, ".mcf1")) return read_labels_mcf1(path);
  return label_components(read_mask_pgm(path));
}

json read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest '" + path + "' must be a JSON array");
  return doc;
}

std::string manifest_field(const json& entry, const char* key, const std::string& path) {
  if (!entry.is_object() || !entry.contains(key) || !entry[key].is_string())
    throw FormatError("manifest '" + path + "' entries need a string '" +
                      std::string(key) + "' field");
  return entry[key].get<std::string>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_blob_csv(const std::vector<Blob>& blobs, const fs::path& path) {
  std::string text = "x,y,sigma,response\n";
  for (const Blob& b : blobs)
    text += std::to_string(b.x) + "," + std::to_string(b.y) + "," + num(b.sigma) +
            "," + num(b.response) + "\n";
  write_text(path, text);
}

// ---- subcommand bodies ----

void cmd_hdog(const CommonOpts& o, const std::string& image_path,
              const std::string& mask_out, const std::string& blobs_out) {
  const PipelineConfig cfg = resolve_config(o);
  const GrayImage image = read_image(image_path, cfg.pixel_spacing_mm);
  const HdogResult result = hdog_segment(image, hdog_params_from(cfg), cfg.threads);
  const LabeledMask objects = label_components(result.mask);
  write_mask_pgm(result.mask, out_path(o, mask_out));
  write_blob_csv(result.blobs, out_path(o, blobs_out));
  const double cm = image.pixel_spacing_mm / 10.0;
  const double area_cm2 = image.width * image.height * cm * cm;
  std::printf("blobs %zu objects %d density %s per cm^2\n", result.blobs.size(),
              objects.count, num(objects.count / area_cm2).c_str());
}

void cmd_proximity(const CommonOpts& o, const std::string& annotations_path,
                   const std::string& out) {
  const PipelineConfig cfg = resolve_config(o);
  const BinaryMask annotations = read_mask_pgm(annotations_path);
  ProximityParams params;
  params.xi = cfg.xi;
  params.alpha = cfg.alpha;
  const ProximityMap map = proximity_map(annotations, params, cfg.pixel_spacing_mm);
  write_mcf1(map, out_path(o, out));
  std::printf("proximity map %dx%d written\n", map.width, map.height);
}

void cmd_train(const CommonOpts& o, const std::string& manifest_path, int patch,
               int stride, bool keep_empty, bool augment,
               const std::string& val_manifest_path, int epochs, int batch,
               double lr, const std::string& model_out,
               const std::string& trace_out) {
  const PipelineConfig cfg = resolve_config(o);

  const auto load_set = [&](const std::string& path) {
    PatchSet set;
    const json doc = read_manifest(path);
    for (const json& entry : doc) {
      const GrayImage image =
          read_image(manifest_field(entry, "image", path), cfg.pixel_spacing_mm);
      ProximityMap target = read_mcf1(manifest_field(entry, "target", path));
      if (target.width != image.width || target.height != image.height)
        throw DataError("image/target dimensions disagree in '" + path + "'");
      PatchSet part = extract_patches(image, target, patch, stride, !keep_empty);
      set.patch = part.patch;
      set.stride = part.stride;
      for (Patch& p : part.items) set.items.push_back(std::move(p));
    }
    return set;
  };

  const PatchSet patches = load_set(manifest_path);
  PatchSet val;
  if (!val_manifest_path.empty()) val = load_set(val_manifest_path);

  RegressorConfig rc;
  rc.epochs = epochs;
  rc.batch_size = batch;
  rc.learning_rate = lr;
  rc.rng_seed = cfg.seed;

  std::vector<double> trace;
  const Model model = train(patches, rc, augment,
                            val_manifest_path.empty() ? nullptr : &val, &trace);
  save_model(model, out_path(o, model_out).string());

  std::string text = "epoch,dice_loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e)
    text += std::to_string(e + 1) + "," + num(trace[e]) + "\n";
  write_text(out_path(o, trace_out), text);
  std::printf("trained on %zu patches for %d epochs, final loss %s\n",
              patches.items.size(), epochs, num(trace.back()).c_str());
}

void cmd_predict(const CommonOpts& o, const std::string& model_path,
                 const std::string& image_path, int tile, int overlap,
                 const std::string& out) {
  const PipelineConfig cfg = resolve_config(o);
  const Model model = load_model(model_path);
  const GrayImage image = read_image(image_path, cfg.pixel_spacing_mm);
  const ProximityMap map = predict_full(model, image, tile, overlap, cfg.threads);
  write_mcf1(map, out_path(o, out));
  std::printf("prediction %dx%d written\n", map.width, map.height);
}

void cmd_combine(const CommonOpts& o, const std::string& candidates_path,
                 const std::string& proximity_path, const std::string& out) {
  const PipelineConfig cfg = resolve_config(o);
  const LabeledMask candidates = read_labels_any(candidates_path);
  const ExternalProximity prox = load_external_proximity(proximity_path);
  if (prox.clamped > 0)
    std::printf("clamped %ld out-of-range proximity values\n", prox.clamped);
  const BinaryMask region = threshold_map(prox.map, cfg.p_thr);
  const BinaryMask final_mask =
      combine(candidates, region, cfg.o_thr, overlap_mode_from_string(cfg.overlap_mode));
  write_mask_pgm(final_mask, out_path(o, out));
  const LabeledMask kept = label_components(final_mask);
  std::printf("candidates %d retained %d\n", candidates.count, kept.count);
}

void cmd_segment(const CommonOpts& o, const std::string& image_path,
                 const std::string& model_path, const std::string& proximity_path,
                 int tile, int overlap, const std::string& out,
                 const std::string& candidates_out, const std::string& region_out,
                 const std::string& blobs_out) {
  const PipelineConfig cfg = resolve_config(o);
  if (model_path.empty() == proximity_path.empty())
    throw ParameterError("segment needs exactly one of --model or --proximity");

  const GrayImage image = read_image(image_path, cfg.pixel_spacing_mm);
  ProximityMap map;
  if (!model_path.empty()) {
    const Model model = load_model(model_path);
    map = predict_full(model, image, tile, overlap, cfg.threads);
  } else {
    const ExternalProximity prox = load_external_proximity(proximity_path);
    if (prox.clamped > 0)
      std::printf("clamped %ld out-of-range proximity values\n", prox.clamped);
    map = std::move(prox.map);
  }

  const SegmentResult result = run_segment(image, map, cfg);
  write_mask_pgm(result.final_mask, out_path(o, out));
  if (!candidates_out.empty()) write_mask_pgm(result.hdog.mask, out_path(o, candidates_out));
  if (!region_out.empty()) write_mask_pgm(result.region, out_path(o, region_out));
  if (!blobs_out.empty()) write_blob_csv(result.hdog.blobs, out_path(o, blobs_out));
  const LabeledMask kept = label_components(result.final_mask);
  std::printf("candidates %d retained %d\n", result.candidates.count, kept.count);
}

void cmd_eval_iou(const CommonOpts& o, const std::string& manifest_path,
                  const std::string& pred_path, const std::string& ref_path,
                  const std::string& summary_out, const std::string& objects_out) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!manifest_path.empty()) {
    const json doc = read_manifest(manifest_path);
    for (const json& entry : doc)
      pairs.emplace_back(manifest_field(entry, "pred", manifest_path),
                         manifest_field(entry, "ref", manifest_path));
  } else if (!pred_path.empty() && !ref_path.empty()) {
    pairs.emplace_back(pred_path, ref_path);
  } else {
    throw ParameterError("eval iou needs --manifest or both --pred and --ref");
  }

  std::string summary = "index,pred,ref,iou,mean_iou,ref_objects,object_iou_mean\n";
  std::string objects = "index,ref_label,pred_label,iou\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const BinaryMask pred = read_mask_pgm(pairs[i].first);
    const BinaryMask ref = read_mask_pgm(pairs[i].second);
    const double img_iou = iou(pred, ref);
    const double mean_iou = mean_iou_per_image(pred, ref);
    const std::vector<ObjectIou> per_object =
        iou_per_object(label_components(pred), label_components(ref));
    double object_sum = 0.0;
    for (const ObjectIou& obj : per_object) {
      object_sum += obj.value;
      objects += std::to_string(i) + "," + std::to_string(obj.ref_label) + "," +
                 std::to_string(obj.pred_label) + "," + num(obj.value) + "\n";
    }
    summary += std::to_string(i) + "," + pairs[i].first + "," + pairs[i].second + "," +
               num(img_iou) + "," + num(mean_iou) + "," +
               std::to_string(per_object.size()) + ",";
    summary += per_object.empty() ? "na" : num(object_sum / per_object.size());
    summary += "\n";
  }
  write_text(out_path(o, summary_out), summary);
  write_text(out_path(o, objects_out), objects);
  std::printf("evaluated %zu image pair(s)\n", pairs.size());
}

void cmd_eval_froc(const CommonOpts& o, const std::string& manifest_path,
                   const std::string& curve_out, const std::string& summary_out,
                   const std::string& svg_out) {
  const PipelineConfig cfg = resolve_config(o);
  const json doc = read_manifest(manifest_path);
  std::vector<FrocImage> images;
  for (const json& entry : doc) {
    FrocImage fi;
    fi.candidates = read_labels_any(manifest_field(entry, "candidates", manifest_path));
    fi.proximity = read_mcf1(manifest_field(entry, "proximity", manifest_path));
    fi.refs = read_labels_any(manifest_field(entry, "reference", manifest_path));
    fi.pixel_spacing_mm = fi.proximity.pixel_spacing_mm;
    images.push_back(std::move(fi));
  }
  if (images.empty()) throw DataError("froc manifest lists no images");

  MatchRule rule;
  rule.max_centroid_dist_px = cfg.match_max_dist_px;
  rule.min_iou = cfg.match_min_iou;
  const std::vector<double> thresholds = threshold_grid(cfg.froc_thresholds);
  const std::vector<ImageTally> tallies =
      froc_tallies(images, thresholds, cfg.o_thr,
                   overlap_mode_from_string(cfg.overlap_mode), rule, cfg.threads);
  const std::vector<FrocPoint> curve = froc_curve(tallies, thresholds);
  write_froc_csv(curve, out_path(o, curve_out).string());

  const PaucSummary pauc = pauc_bootstrap(tallies, thresholds, cfg.pauc_fp_max,
                                          cfg.pauc_samples, cfg.seed);
  const std::size_t op = operating_point(curve);
  std::string summary =
      "pauc_mean,pauc_low95,pauc_high95,samples,seed,op_p_thr,op_tpr,op_fp_per_cm2\n";
  summary += num(pauc.mean) + "," + num(pauc.low95) + "," + num(pauc.high95) + "," +
             std::to_string(pauc.samples) + "," + std::to_string(pauc.seed) + "," +
             num(curve[op].p_thr) + "," + num(curve[op].tpr) + "," +
             num(curve[op].fp_per_cm2) + "\n";
  write_text(out_path(o, summary_out), summary);
  if (!svg_out.empty()) write_froc_svg(curve, out_path(o, svg_out).string());
  std::printf("froc over %zu image(s): pauc %s [%s, %s]\n", images.size(),
              num(pauc.mean).c_str(), num(pauc.low95).c_str(),
              num(pauc.high95).c_str());
}

void cmd_cluster(const CommonOpts& o, const std::string& manifest_path,
                 const std::string& mask_path, const std::string& image_id,
                 const std::string& features_out, const std::string& summary_out) {
  const PipelineConfig cfg = resolve_config(o);

  struct Entry {
    std::string id;
    std::string mask;
    std::vector<std::string> labels;
  };
  std::vector<Entry> entries;
  if (!manifest_path.empty()) {
    const json doc = read_manifest(manifest_path);
    for (const json& entry : doc) {
      Entry e;
      e.mask = manifest_field(entry, "mask", manifest_path);
      e.id = entry.contains("image_id") && entry["image_id"].is_string()
                 ? entry["image_id"].get<std::string>()
                 : e.mask;
      if (entry.contains("labels")) {
        if (!entry["labels"].is_array())
          throw FormatError("manifest '" + manifest_path + "': labels must be an array");
        for (const json& l : entry["labels"]) {
          if (!l.is_string())
            throw FormatError("manifest '" + manifest_path + "': labels must be strings");
          e.labels.push_back(l.get<std::string>());
        }
      }
      entries.push_back(std::move(e));
    }
  } else if (!mask_path.empty()) {
    entries.push_back({image_id.empty() ? mask_path : image_id, mask_path, {}});
  } else {
    throw ParameterError("cluster needs --manifest or --mask");
  }
  if (entries.empty()) throw DataError("cluster manifest lists no images");

  long total_objects = 0, noise_points = 0;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, int>> row_ids;  // (image id, cluster id)
  std::map<std::string, std::vector<std::string>> image_labels;
  bool all_labeled = true;

  for (const Entry& entry : entries) {
    const LabeledMask mask = read_labels_any(entry.mask);
    const std::vector<ObjectShape> shapes = measure_objects(mask, cfg.pixel_spacing_mm);
    total_objects += shapes.size();
    if (!entry.labels.empty()) image_labels[entry.id] = entry.labels;
    all_labeled = all_labeled && !entry.labels.empty();
    if (shapes.empty()) continue;

    std::vector<PointMm> points(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
      points[i] = {shapes[i].cx_mm, shapes[i].cy_mm};
    const OpticsProfile profile =
        optics_order(points, cfg.optics_min_samples, cfg.optics_max_eps_mm);
    const std::vector<int> labels = extract_clusters(profile, cfg.eps_cut_mm);

    int n_clusters = 0;
    for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
    for (int l : labels) noise_points += l < 0;
    for (int c = 0; c < n_clusters; ++c) {
      std::vector<ObjectShape> members;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) members.push_back(shapes[i]);
      const ClusterFeatures f = cluster_features(members);
      rows.emplace_back(f.begin(), f.end());
      row_ids.emplace_back(entry.id, c);
    }
  }

  std::vector<int> kmeans_labels;
  double inertia = 0.0;
  if (static_cast<int>(rows.size()) < cfg.kmeans_k)
    throw DataError("found " + std::to_string(rows.size()) +
                    " clusters, fewer than kmeans_k = " + std::to_string(cfg.kmeans_k));
  const KmeansResult km = kmeans(standardize(rows), cfg.kmeans_k, cfg.seed,
                                 cfg.kmeans_restarts);
  kmeans_labels = km.labels;
  inertia = km.inertia;

  std::string features = "image_id,cluster";
  for (const std::string& name : cluster_feature_names()) features += "," + name;
  features += ",kmeans_label\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features += row_ids[i].first + "," + std::to_string(row_ids[i].second);
    for (double v : rows[i]) features += "," + num(v);
    features += "," + std::to_string(kmeans_labels[i]) + "\n";
  }
  write_text(out_path(o, features_out), features);

  std::string homogeneity_text = "na";
  if (all_labeled) {
    std::vector<std::pair<int, std::string>> cluster_image(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      cluster_image[i] = {static_cast<int>(i), row_ids[i].first};
    const std::vector<ClusterLabelRow> expanded =
        duplicate_multilabel(cluster_image, image_labels);
    std::map<std::string, int> label_ids;
    std::vector<int> truth, pred;
    for (const ClusterLabelRow& row : expanded) {
      truth.push_back(label_ids.emplace(row.label, static_cast<int>(label_ids.size()))
                          .first->second);
      pred.push_back(kmeans_labels[row.cluster]);
    }
    homogeneity_text = num(homogeneity(truth, pred));
  }

  std::string summary = "images,objects,clusters,noise_points,kmeans_k,inertia,homogeneity\n";
  summary += std::to_string(entries.size()) + "," + std::to_string(total_objects) +
             "," + std::to_string(rows.size()) + "," + std::to_string(noise_points) +
             "," + std::to_string(cfg.kmeans_k) + "," + num(inertia) + "," +
             homogeneity_text + "\n";
  write_text(out_path(o, summary_out), summary);
  std::printf("clusters %zu homogeneity %s\n", rows.size(), homogeneity_text.c_str());
}

void cmd_phantom(const CommonOpts& o, const PhantomSpec& spec,
                 const std::string& prefix) {
  const PipelineConfig cfg = resolve_config(o);
  PhantomSpec s = spec;
  if (o.spacing) s.pixel_spacing_mm = *o.spacing;
  const Phantom phantom = generate_phantom(s, cfg.seed);

  write_pgm16(phantom.image, out_path(o, prefix + ".pgm"));
  write_mask_pgm(phantom.truth, out_path(o, prefix + "_truth.pgm"));
  write_labels_mcf1(phantom.truth_labels, s.pixel_spacing_mm,
                    out_path(o, prefix + "_labels.mcf1"));
  write_mask_pgm(phantom.annotations, out_path(o, prefix + "_annotations.pgm"));

  std::string blobs = "cx,cy,radius_px,sigma_px,contrast,cluster\n";
  for (const PhantomBlob& b : phantom.blobs)
    blobs += num(b.cx) + "," + num(b.cy) + "," + num(b.radius_px) + "," +
             num(b.sigma_px) + "," + num(b.contrast) + "," +
             std::to_string(b.cluster) + "\n";
  write_text(out_path(o, prefix + "_blobs.csv"), blobs);

  json meta;
  meta["archetype"] = phantom.archetype;
  meta["blob_count"] = phantom.blobs.size();
  meta["seed"] = cfg.seed;
  meta["pixel_spacing_mm"] = s.pixel_spacing_mm;
  write_text(out_path(o, prefix + "_meta.json"), meta.dump(2) + "\n");
  std::printf("phantom with %zu blob(s) written\n", phantom.blobs.size());
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--output-dir", o.output_dir, "directory for outputs");
  cmd->add_option("--threads", o.threads, "worker threads (default 1)");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--spacing", o.spacing, "pixel spacing in mm");
}

void add_hdog_params(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--sigma-min", o.sigma_min, "smallest blob scale");
  cmd->add_option("--sigma-max", o.sigma_max, "largest blob scale");
  cmd->add_option("--n-scales", o.n_scales, "scale count");
  cmd->add_option("--t-dog", o.t_dog, "blob response threshold");
  cmd->add_option("--o-dog", o.o_dog, "blob overlap pruning fraction");
  cmd->add_option("--h-thr", o.h_thr, "Hessian blobness threshold");
}

void add_combine_params(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--p-thr", o.p_thr, "proximity threshold");
  cmd->add_option("--o-thr", o.o_thr, "object overlap fraction");
  cmd->add_option("--overlap-mode", o.overlap_mode, "geq or leq");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microcalcification segmentation toolkit"};
  app.require_subcommand(1);

  try {
    // hdog
    CommonOpts hdog_opts;
    std::string hdog_image, hdog_mask_out = "hdog_mask.pgm",
                            hdog_blobs_out = "hdog_blobs.csv";
    CLI::App* hdog_cmd = app.add_subcommand("hdog", "detect candidate objects");
    add_common(hdog_cmd, hdog_opts);
    add_hdog_params(hdog_cmd, hdog_opts);
    hdog_cmd->add_option("--image", hdog_image, "input image (PGM or MCF1)")->required();
    hdog_cmd->add_option("--mask-out", hdog_mask_out, "candidate mask output");
    hdog_cmd->add_option("--blobs-out", hdog_blobs_out, "blob CSV output");
    hdog_cmd->callback(
        [&] { cmd_hdog(hdog_opts, hdog_image, hdog_mask_out, hdog_blobs_out); });

    // proximity
    CommonOpts prox_opts;
    std::string prox_annotations, prox_out = "proximity.mcf1";
    CLI::App* prox_cmd = app.add_subcommand("proximity", "annotation mask to proximity map");
    add_common(prox_cmd, prox_opts);
    prox_cmd->add_option("--xi", prox_opts.xi, "proximity reach in pixels");
    prox_cmd->add_option("--alpha", prox_opts.alpha, "proximity shape");
    prox_cmd->add_option("--annotations", prox_annotations, "annotation mask (PGM)")
        ->required();
    prox_cmd->add_option("--out", prox_out, "MCF1 output");
    prox_cmd->callback([&] { cmd_proximity(prox_opts, prox_annotations, prox_out); });

    // train
    CommonOpts train_opts;
    std::string train_manifest, train_val_manifest, train_model_out = "model.mcm1",
                                train_trace_out = "loss_trace.csv";
    int train_patch = 512, train_stride = 480, train_epochs = 40, train_batch = 8;
    double train_lr = 1e-4;
    bool train_keep_empty = false, train_augment = false;
    CLI::App* train_cmd = app.add_subcommand("train", "train the proximity regressor");
    add_common(train_cmd, train_opts);
    train_cmd->add_option("--manifest", train_manifest, "JSON [{image,target}]")->required();
    train_cmd->add_option("--val-manifest", train_val_manifest, "validation manifest");
    train_cmd->add_option("--patch", train_patch, "patch size");
    train_cmd->add_option("--stride", train_stride, "patch stride");
    train_cmd->add_option("--epochs", train_epochs, "training epochs");
    train_cmd->add_option("--batch", train_batch, "batch size");
    train_cmd->add_option("--lr", train_lr, "learning rate");
    train_cmd->add_flag("--keep-empty", train_keep_empty, "keep patches without targets");
    train_cmd->add_flag("--augment", train_augment, "enable augmentation");
    train_cmd->add_option("--model-out", train_model_out, "checkpoint output");
    train_cmd->add_option("--trace-out", train_trace_out, "loss trace CSV output");
    train_cmd->callback([&] {
      cmd_train(train_opts, train_manifest, train_patch, train_stride,
                train_keep_empty, train_augment, train_val_manifest, train_epochs,
                train_batch, train_lr, train_model_out, train_trace_out);
    });

    // predict
    CommonOpts pred_opts;
    std::string pred_model, pred_image, pred_out = "prediction.mcf1";
    int pred_tile = 256, pred_overlap = 32;
    CLI::App* pred_cmd = app.add_subcommand("predict", "model + image to proximity map");
    add_common(pred_cmd, pred_opts);
    pred_cmd->add_option("--model", pred_model, "MCM1 checkpoint")->required();
    pred_cmd->add_option("--image", pred_image, "input image")->required();
    pred_cmd->add_option("--tile", pred_tile, "inference tile size");
    pred_cmd->add_option("--overlap", pred_overlap, "tile overlap");
    pred_cmd->add_option("--out", pred_out, "MCF1 output");
    pred_cmd->callback([&] {
      cmd_predict(pred_opts, pred_model, pred_image, pred_tile, pred_overlap, pred_out);
    });

    // combine
    CommonOpts comb_opts;
    std::string comb_candidates, comb_proximity, comb_out = "final_mask.pgm";
    CLI::App* comb_cmd = app.add_subcommand("combine", "fuse candidates with region mask");
    add_common(comb_cmd, comb_opts);
    add_combine_params(comb_cmd, comb_opts);
    comb_cmd->add_option("--candidates", comb_candidates, "candidate mask (PGM or MCF1 labels)")
        ->required();
    comb_cmd->add_option("--proximity", comb_proximity, "proximity map (MCF1)")->required();
    comb_cmd->add_option("--out", comb_out, "final mask output");
    comb_cmd->callback(
        [&] { cmd_combine(comb_opts, comb_candidates, comb_proximity, comb_out); });

    // segment
    CommonOpts seg_opts;
    std::string seg_image, seg_model, seg_proximity, seg_out = "final_mask.pgm";
    std::string seg_candidates_out, seg_region_out, seg_blobs_out;
    int seg_tile = 256, seg_overlap = 32;
    CLI::App* seg_cmd = app.add_subcommand("segment", "full image-to-mask pipeline");
    add_common(seg_cmd, seg_opts);
    add_hdog_params(seg_cmd, seg_opts);
    add_combine_params(seg_cmd, seg_opts);
    seg_cmd->add_option("--image", seg_image, "input image")->required();
    seg_cmd->add_option("--model", seg_model, "MCM1 checkpoint");
    seg_cmd->add_option("--proximity", seg_proximity, "external proximity map (MCF1)");
    seg_cmd->add_option("--tile", seg_tile, "inference tile size");
    seg_cmd->add_option("--overlap", seg_overlap, "tile overlap");
    seg_cmd->add_option("--out", seg_out, "final mask output");
    seg_cmd->add_option("--candidates-out", seg_candidates_out, "candidate mask output");
    seg_cmd->add_option("--region-out", seg_region_out, "region mask output");
    seg_cmd->add_option("--blobs-out", seg_blobs_out, "blob CSV output");
    seg_cmd->callback([&] {
      cmd_segment(seg_opts, seg_image, seg_model, seg_proximity, seg_tile, seg_overlap,
                  seg_out, seg_candidates_out, seg_region_out, seg_blobs_out);
    });

    // eval
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluation metrics");
    eval_cmd->require_subcommand(1);

    CommonOpts iou_opts;
    std::string iou_manifest, iou_pred, iou_ref, iou_summary_out = "iou_summary.csv",
                              iou_objects_out = "iou_objects.csv";
    CLI::App* iou_cmd = eval_cmd->add_subcommand("iou", "overlap metrics");
    add_common(iou_cmd, iou_opts);
    iou_cmd->add_option("--manifest", iou_manifest, "JSON [{pred,ref}]");
    iou_cmd->add_option("--pred", iou_pred, "prediction mask");
    iou_cmd->add_option("--ref", iou_ref, "reference mask");
    iou_cmd->add_option("--summary-out", iou_summary_out, "per-image CSV");
    iou_cmd->add_option("--objects-out", iou_objects_out, "per-object CSV");
    iou_cmd->callback([&] {
      cmd_eval_iou(iou_opts, iou_manifest, iou_pred, iou_ref, iou_summary_out,
                   iou_objects_out);
    });

    CommonOpts froc_opts;
    std::string froc_manifest, froc_curve_out = "froc_curve.csv",
                               froc_summary_out = "froc_summary.csv", froc_svg_out;
    CLI::App* froc_cmd = eval_cmd->add_subcommand("froc", "detection FROC and pAUC");
    add_common(froc_cmd, froc_opts);
    add_combine_params(froc_cmd, froc_opts);
    froc_cmd->add_option("--manifest", froc_manifest,
                         "JSON [{candidates,proximity,reference}]")
        ->required();
    froc_cmd->add_option("--curve-out", froc_curve_out, "curve CSV");
    froc_cmd->add_option("--summary-out", froc_summary_out, "pAUC summary CSV");
    froc_cmd->add_option("--svg-out", froc_svg_out, "optional SVG plot");
    froc_cmd->callback([&] {
      cmd_eval_froc(froc_opts, froc_manifest, froc_curve_out, froc_summary_out,
                    froc_svg_out);
    });

    // cluster
    CommonOpts clus_opts;
    std::string clus_manifest, clus_mask, clus_image_id,
        clus_features_out = "cluster_features.csv",
        clus_summary_out = "cluster_summary.csv";
    CLI::App* clus_cmd = app.add_subcommand("cluster", "group and characterize objects");
    add_common(clus_cmd, clus_opts);
    clus_cmd->add_option("--manifest", clus_manifest, "JSON [{mask,image_id,labels}]");
    clus_cmd->add_option("--mask", clus_mask, "single final mask");
    clus_cmd->add_option("--image-id", clus_image_id, "id for --mask");
    clus_cmd->add_option("--min-samples", clus_opts.optics_min_samples, "OPTICS min_samples");
    clus_cmd->add_option("--max-eps", clus_opts.optics_max_eps, "OPTICS max_eps (mm)");
    clus_cmd->add_option("--eps-cut", clus_opts.eps_cut, "cluster extraction cut (mm)");
    clus_cmd->add_option("--k", clus_opts.kmeans_k, "k-means cluster count");
    clus_cmd->add_option("--restarts", clus_opts.kmeans_restarts, "k-means restarts");
    clus_cmd->add_option("--features-out", clus_features_out, "features CSV");
    clus_cmd->add_option("--summary-out", clus_summary_out, "summary CSV");
    clus_cmd->callback([&] {
      cmd_cluster(clus_opts, clus_manifest, clus_mask, clus_image_id,
                  clus_features_out, clus_summary_out);
    });

    // phantom
    CommonOpts ph_opts;
    PhantomSpec ph_spec;
    std::string ph_prefix = "phantom";
    CLI::App* ph_cmd = app.add_subcommand("phantom", "generate a synthetic image bundle");
    add_common(ph_cmd, ph_opts);
    ph_cmd->add_option("--width", ph_spec.width, "image width");
    ph_cmd->add_option("--height", ph_spec.height, "image height");
    ph_cmd->add_option("--blobs", ph_spec.blob_count, "blob count");
    ph_cmd->add_option("--radius-min", ph_spec.radius_min_px, "min half-max radius (px)");
    ph_cmd->add_option("--radius-max", ph_spec.radius_max_px, "max half-max radius (px)");
    ph_cmd->add_option("--contrast-min", ph_spec.contrast_min, "min bump contrast");
    ph_cmd->add_option("--contrast-max", ph_spec.contrast_max, "max bump contrast");
    ph_cmd->add_option("--min-dist", ph_spec.min_center_dist_px, "min center distance (px)");
    ph_cmd->add_option("--archetype", ph_spec.archetype,
                       "diffuse|grouped|regional|linear|segmental");
    ph_cmd->add_option("--clusters", ph_spec.clusters, "group count for grouped layout");
    ph_cmd->add_option("--spread", ph_spec.cluster_spread_px, "layout spread (px)");
    ph_cmd->add_option("--noise", ph_spec.noise_stdev, "iid noise stdev");
    ph_cmd->add_option("--bg-amplitude", ph_spec.background_amplitude,
                       "background field amplitude");
    ph_cmd->add_option("--bg-correlation", ph_spec.background_correlation_px,
                       "background correlation length (px)");
    ph_cmd->add_option("--bg-level", ph_spec.background_level, "background gray level");
    ph_cmd->add_option("--prefix", ph_prefix, "output filename prefix");
    ph_cmd->callback([&] { cmd_phantom(ph_opts, ph_spec, ph_prefix); });

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
  return 0;
}
