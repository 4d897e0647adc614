#include "mcseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mcseg/core.hpp"

namespace mcseg {
namespace {

// Intersection counts between every (pred, ref) object pair, as a dense
// pred_count x ref_count matrix.
std::vector<long> pair_intersections(const LabeledMask& pred, const LabeledMask& ref) {
  std::vector<long> inter(static_cast<std::size_t>(pred.count) * ref.count, 0);
  const std::size_t n = pred.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int p = pred.labels[i];
    const int r = ref.labels[i];
    if (p > 0 && r > 0) ++inter[static_cast<std::size_t>(p - 1) * ref.count + (r - 1)];
  }
  return inter;
}

double object_pair_iou(long inter, long area_a, long area_b) {
  const long uni = area_a + area_b - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct CandidatePair {
  double dist;
  int cand;  // 1-based labels
  int ref;
};

// Qualifying (candidate, ref) pairs under `rule`, sorted for greedy matching.
std::vector<CandidatePair> qualifying_pairs(const LabeledMask& pred,
                                            const LabeledMask& ref,
                                            const std::vector<ObjectStats>& pstats,
                                            const std::vector<ObjectStats>& rstats,
                                            const std::vector<long>& inter,
                                            const MatchRule& rule) {
  std::vector<CandidatePair> pairs;
  for (int p = 1; p <= pred.count; ++p) {
    for (int r = 1; r <= ref.count; ++r) {
      const double dx = pstats[p - 1].cx - rstats[r - 1].cx;
      const double dy = pstats[p - 1].cy - rstats[r - 1].cy;
      const double dist = std::sqrt(dx * dx + dy * dy);
      const long ov = inter[static_cast<std::size_t>(p - 1) * ref.count + (r - 1)];
      const double pair_iou = object_pair_iou(ov, pstats[p - 1].area, rstats[r - 1].area);
      if (dist <= rule.max_centroid_dist_px || pair_iou >= rule.min_iou)
        pairs.push_back({dist, p, r});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const CandidatePair& a, const CandidatePair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.cand != b.cand) return a.cand < b.cand;
    return a.ref < b.ref;
  });
  return pairs;
}

}  // namespace

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw DataError("mask dimensions disagree");
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool pa = a.bits[i] != 0;
    const bool pb = b.bits[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

double mean_iou_per_image(const BinaryMask& pred, const BinaryMask& ref) {
  if (pred.width != ref.width || pred.height != ref.height)
    throw DataError("mask dimensions disagree");
  long inter_fg = 0, uni_fg = 0, inter_bg = 0, uni_bg = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool pa = pred.bits[i] != 0;
    const bool pb = ref.bits[i] != 0;
    inter_fg += pa && pb;
    uni_fg += pa || pb;
    inter_bg += !pa && !pb;
    uni_bg += !pa || !pb;
  }
  const double fg = uni_fg > 0 ? static_cast<double>(inter_fg) / uni_fg : 1.0;
  const double bg = uni_bg > 0 ? static_cast<double>(inter_bg) / uni_bg : 1.0;
  return 0.5 * (fg + bg);
}

std::vector<ObjectStats> object_stats(const LabeledMask& mask) {
  std::vector<ObjectStats> stats(mask.count);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int l = mask.labels[static_cast<std::size_t>(y) * mask.width + x];
      if (l <= 0) continue;
      ObjectStats& s = stats[l - 1];
      ++s.area;
      s.cx += x;
      s.cy += y;
    }
  }
  for (ObjectStats& s : stats) {
    if (s.area > 0) {
      s.cx /= s.area;
      s.cy /= s.area;
    }
  }
  return stats;
}

std::vector<ObjectIou> iou_per_object(const LabeledMask& pred, const LabeledMask& ref) {
  if (pred.width != ref.width || pred.height != ref.height)
    throw DataError("mask dimensions disagree");
  const std::vector<ObjectStats> pstats = object_stats(pred);
  const std::vector<ObjectStats> rstats = object_stats(ref);
  const std::vector<long> inter = pair_intersections(pred, ref);

  std::vector<ObjectIou> result;
  for (int r = 1; r <= ref.count; ++r) {
    if (rstats[r - 1].area < 2) continue;
    int best_pred = 0;
    long best_inter = 0;
    double best_iou = 0.0;
    for (int p = 1; p <= pred.count; ++p) {
      const long ov = inter[static_cast<std::size_t>(p - 1) * ref.count + (r - 1)];
      if (ov <= 0) continue;
      const double v = object_pair_iou(ov, pstats[p - 1].area, rstats[r - 1].area);
      if (ov > best_inter || (ov == best_inter && v > best_iou)) {
        best_pred = p;
        best_inter = ov;
        best_iou = v;
      }
    }
    result.push_back({r, best_pred, best_iou});
  }
  return result;
}

MatchResult match_objects(const LabeledMask& pred, const LabeledMask& ref,
                          const MatchRule& rule) {
  if (pred.width != ref.width || pred.height != ref.height)
    throw DataError("mask dimensions disagree");
  const std::vector<ObjectStats> pstats = object_stats(pred);
  const std::vector<ObjectStats> rstats = object_stats(ref);
  const std::vector<long> inter = pair_intersections(pred, ref);
  const std::vector<CandidatePair> pairs =
      qualifying_pairs(pred, ref, pstats, rstats, inter, rule);

  std::vector<char> pred_used(pred.count, 0), ref_used(ref.count, 0);
  MatchResult out;
  for (const CandidatePair& pr : pairs) {
    if (pred_used[pr.cand - 1] || ref_used[pr.ref - 1]) continue;
    pred_used[pr.cand - 1] = 1;
    ref_used[pr.ref - 1] = 1;
    out.pairs.emplace_back(pr.cand, pr.ref);
  }
  out.tp = static_cast<long>(out.pairs.size());
  out.fp = pred.count - out.tp;
  out.fn = ref.count - out.tp;
  return out;
}

ImageTally image_tally(const FrocImage& image, const std::vector<double>& thresholds,
                       double o_thr, OverlapMode mode, const MatchRule& rule) {
  const LabeledMask& cand = image.candidates;
  const LabeledMask& refs = image.refs;
  if (cand.width != refs.width || cand.height != refs.height ||
      cand.width != image.proximity.width || cand.height != image.proximity.height)
    throw DataError("candidate, proximity, and reference dimensions disagree");
  if (!(o_thr >= 0.0 && o_thr <= 1.0))
    throw ParameterError("o_thr must be in [0, 1]");

  // Proximity values per candidate object, ascending, so the count of values
  // >= p is a single binary search at each threshold.
  std::vector<std::vector<double>> values(cand.count);
  for (std::size_t i = 0; i < cand.labels.size(); ++i) {
    const int l = cand.labels[i];
    if (l > 0) values[l - 1].push_back(image.proximity.values[i]);
  }
  for (std::vector<double>& v : values) std::sort(v.begin(), v.end());

  const std::vector<ObjectStats> cstats = object_stats(cand);
  const std::vector<ObjectStats> rstats = object_stats(refs);
  const std::vector<long> inter = pair_intersections(cand, refs);
  const std::vector<CandidatePair> pairs =
      qualifying_pairs(cand, refs, cstats, rstats, inter, rule);

  ImageTally tally;
  tally.n_ref = refs.count;
  const double cm = image.pixel_spacing_mm / 10.0;
  tally.area_cm2 = static_cast<double>(cand.width) * cand.height * cm * cm;
  tally.tp.resize(thresholds.size(), 0);
  tally.fp.resize(thresholds.size(), 0);

  std::vector<char> retained(cand.count, 0), cand_used(cand.count, 0),
      ref_used(refs.count, 0);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const double p = thresholds[t];
    long retained_count = 0;
    for (int c = 0; c < cand.count; ++c) {
      const std::vector<double>& v = values[c];
      const long total = static_cast<long>(v.size());
      const long inside =
          total - (std::lower_bound(v.begin(), v.end(), p) - v.begin());
      const bool meets =
          static_cast<double>(inside) >= o_thr * static_cast<double>(total);
      retained[c] = ((mode == OverlapMode::geq) == meets) ? 1 : 0;
      retained_count += retained[c];
    }
    std::fill(cand_used.begin(), cand_used.end(), 0);
    std::fill(ref_used.begin(), ref_used.end(), 0);
    long tp = 0;
    for (const CandidatePair& pr : pairs) {
      if (!retained[pr.cand - 1] || cand_used[pr.cand - 1] || ref_used[pr.ref - 1])
        continue;
      cand_used[pr.cand - 1] = 1;
      ref_used[pr.ref - 1] = 1;
      ++tp;
    }
    tally.tp[t] = tp;
    tally.fp[t] = retained_count - tp;
  }
  return tally;
}

std::vector<ImageTally> froc_tallies(const std::vector<FrocImage>& images,
                                     const std::vector<double>& thresholds, double o_thr,
                                     OverlapMode mode, const MatchRule& rule,
                                     int threads) {
  std::vector<ImageTally> tallies(images.size());
  parallel_for(static_cast<int>(images.size()), threads, [&](int i) {
    tallies[i] = image_tally(images[i], thresholds, o_thr, mode, rule);
  });
  return tallies;
}

std::vector<FrocPoint> froc_curve(const std::vector<ImageTally>& tallies,
                                  const std::vector<double>& thresholds) {
  std::vector<FrocPoint> points(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    FrocPoint& pt = points[t];
    pt.p_thr = thresholds[t];
    double area = 0.0;
    for (const ImageTally& tally : tallies) {
      pt.tp += tally.tp[t];
      pt.fp += tally.fp[t];
      pt.n_ref += tally.n_ref;
      area += tally.area_cm2;
    }
    pt.tpr = pt.n_ref > 0 ? static_cast<double>(pt.tp) / pt.n_ref : 1.0;
    pt.fp_per_cm2 = area > 0.0 ? static_cast<double>(pt.fp) / area : 0.0;
  }
  return points;
}

std::vector<double> threshold_grid(int count) {
  if (count < 2) throw ParameterError("threshold grid needs at least 2 points");
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) grid[i] = static_cast<double>(i) / (count - 1);
  return grid;
}

double partial_auc(const std::vector<FrocPoint>& points, double fp_max) {
  if (!(fp_max > 0.0)) throw ParameterError("fp_max must be positive");
  if (points.empty()) return 0.0;
  std::vector<std::pair<double, double>> xy;  // (fp, tpr) left to right
  xy.reserve(points.size());
  for (const FrocPoint& p : points) xy.emplace_back(p.fp_per_cm2, p.tpr);
  std::sort(xy.begin(), xy.end());

  double area = 0.0;
  // Constant extension from the leftmost observed point back to FP = 0.
  const double x0 = std::min(xy.front().first, fp_max);
  area += x0 * xy.front().second;
  for (std::size_t i = 1; i < xy.size(); ++i) {
    const double xa = xy[i - 1].first, ya = xy[i - 1].second;
    const double xb = xy[i].first, yb = xy[i].second;
    if (xa >= fp_max) break;
    const double hi = std::min(xb, fp_max);
    if (hi <= xa) continue;
    // Clip the trapezoid at fp_max, interpolating the right ordinate.
    const double yhi = xb > xa ? ya + (yb - ya) * (hi - xa) / (xb - xa) : yb;
    area += 0.5 * (ya + yhi) * (hi - xa);
  }
  // Constant extension past the rightmost observed point up to fp_max.
  if (xy.back().first < fp_max) area += (fp_max - xy.back().first) * xy.back().second;
  return area / fp_max;
}

PaucSummary pauc_bootstrap(const std::vector<ImageTally>& tallies,
                           const std::vector<double>& thresholds, double fp_max,
                           int samples, std::uint64_t seed) {
  if (tallies.empty()) throw DataError("no images to bootstrap");
  if (samples < 1) throw ParameterError("bootstrap sample count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, tallies.size() - 1);

  std::vector<double> paucs(samples);
  std::vector<ImageTally> sample(tallies.size());
  for (int s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < tallies.size(); ++i) sample[i] = tallies[pick(rng)];
    paucs[s] = partial_auc(froc_curve(sample, thresholds), fp_max);
  }

  PaucSummary out;
  out.samples = samples;
  out.seed = seed;
  for (double v : paucs) out.mean += v;
  out.mean /= samples;

  std::sort(paucs.begin(), paucs.end());
  const auto percentile = [&](double q) {
    const double h = q * (samples - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min<std::size_t>(lo + 1, samples - 1);
    return paucs[lo] + (h - lo) * (paucs[hi] - paucs[lo]);
  };
  out.low95 = percentile(0.025);
  out.high95 = percentile(0.975);
  return out;
}

std::size_t operating_point(const std::vector<FrocPoint>& points) {
  if (points.empty()) throw DataError("empty curve");
  std::size_t best = 0;
  double best_d2 = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double dt = 1.0 - points[i].tpr;
    const double d2 = dt * dt + points[i].fp_per_cm2 * points[i].fp_per_cm2;
    if (i == 0 || d2 < best_d2 ||
        (d2 == best_d2 && points[i].tpr > points[best].tpr)) {
      best = i;
      best_d2 = d2;
    }
  }
  return best;
}

void write_froc_csv(const std::vector<FrocPoint>& points, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "p_thr,tp,fp,n_ref,tpr,fp_per_cm2\n";
  char line[160];
  for (const FrocPoint& p : points) {
    std::snprintf(line, sizeof line, "%.6f,%ld,%ld,%ld,%.6f,%.6f\n", p.p_thr, p.tp,
                  p.fp, p.n_ref, p.tpr, p.fp_per_cm2);
    out << line;
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

void write_froc_svg(const std::vector<FrocPoint>& points, const std::string& path) {
  const double left = 64, right = 616, top = 24, bottom = 432;
  double fp_hi = 1.0;
  for (const FrocPoint& p : points) fp_hi = std::max(fp_hi, p.fp_per_cm2);

  std::vector<std::pair<double, double>> xy;
  xy.reserve(points.size());
  for (const FrocPoint& p : points) xy.emplace_back(p.fp_per_cm2, p.tpr);
  std::sort(xy.begin(), xy.end());

  const auto sx = [&](double fp) { return left + (right - left) * fp / fp_hi; };
  const auto sy = [&](double tpr) { return bottom - (bottom - top) * tpr; };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n"
         "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                left, bottom, right, bottom);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                left, bottom, left, top);
  out << buf;
  for (int i = 0; i <= 4; ++i) {
    const double fx = fp_hi * i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"452\" font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"middle\">%.2f</text>\n",
                  sx(fx), fx);
    out << buf;
    const double fy = i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                  "text-anchor=\"end\">%.2f</text>\n",
                  left - 8, sy(fy) + 4, fy);
    out << buf;
  }
  out << "<text x=\"340\" y=\"474\" font-family=\"sans-serif\" font-size=\"13\" "
         "text-anchor=\"middle\">false positives per cm^2</text>\n"
         "<text x=\"16\" y=\"228\" font-family=\"sans-serif\" font-size=\"13\" "
         "text-anchor=\"middle\" transform=\"rotate(-90 16 228)\">object "
         "sensitivity</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xy.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", sx(xy[i].first),
                  sy(xy[i].second));
    out << buf;
  }
  out << "\"/>\n</svg>\n";
  if (!out) throw FormatError("short write to '" + path + "'");
}

}  // namespace mcseg
