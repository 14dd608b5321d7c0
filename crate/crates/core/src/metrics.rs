//! Detection metrics: volumetric IOU, greedy matching, precision/recall,
//! interpolated average precision, and point-density statistics.

use crate::detector::Detection;
use crate::geometry::{bev_intersection_area, count_points_in_box, OrientedBox3D};
use crate::preprocess::PointCloud;

/// Volumetric intersection over union of two yaw-only boxes.
pub fn iou3d(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (az0, az1) = a.z_range();
    let (bz0, bz1) = b.z_range();
    let dz = az1.min(bz1) - az0.max(bz0);
    if dz <= 0.0 {
        return 0.0;
    }
    let area = bev_intersection_area(a, b);
    if area == 0.0 {
        return 0.0;
    }
    let inter = area * dz;
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(gt index, detection index, iou)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    /// Detections at or above the score threshold that found no match.
    pub unmatched_det: Vec<usize>,
    pub kappa: f64,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn false_positives(&self) -> usize {
        self.unmatched_det.len()
    }

    /// Precision, or `None` when no detection passed the threshold.
    pub fn precision(&self) -> Option<f64> {
        let n = self.pairs.len() + self.unmatched_det.len();
        (n > 0).then(|| self.pairs.len() as f64 / n as f64)
    }

    /// Recall, or `None` without ground truth.
    pub fn recall(&self) -> Option<f64> {
        let n = self.pairs.len() + self.unmatched_gt.len();
        (n > 0).then(|| self.pairs.len() as f64 / n as f64)
    }
}

/// Detection indices with `score >= tau`, by descending score then index.
fn ranked(det: &[Detection], tau: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..det.len()).filter(|&i| det[i].score >= tau).collect();
    order.sort_by(|&i, &j| det[j].score.total_cmp(&det[i].score).then(i.cmp(&j)));
    order
}

/// Greedy one-to-one matching. Detections with `score >= tau` are taken by
/// descending score; each claims the unmatched ground-truth box of highest
/// IOU (lowest index on ties) if that IOU is at least `kappa`.
pub fn match_detections(gt: &[OrientedBox3D], det: &[Detection], kappa: f64, tau: f64) -> MatchResult {
    let mut taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    let mut unmatched_det = Vec::new();
    for d in ranked(det, tau) {
        let mut best: Option<(usize, f64)> = None;
        for (g, b) in gt.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = iou3d(&det[d].bbox, b);
            if best.is_none_or(|(_, v)| iou > v) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) if iou >= kappa => {
                taken[g] = true;
                pairs.push((g, d, iou));
            }
            _ => unmatched_det.push(d),
        }
    }
    MatchResult {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&g| !taken[g]).collect(),
        unmatched_det,
        kappa,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at each distinct detection score, by descending score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub num_gt: usize,
}

/// Builds the precision/recall curve over a set of frames.
///
/// Greedy matching visits detections in score order, so the matching at
/// threshold `tau` is the prefix of the full matching; one pass suffices.
pub fn precision_recall(gt_frames: &[Vec<OrientedBox3D>], det_frames: &[Vec<Detection>], kappa: f64) -> PrCurve {
    assert_eq!(gt_frames.len(), det_frames.len(), "one detection list per frame");
    let num_gt: usize = gt_frames.iter().map(Vec::len).sum();
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (gt, det) in gt_frames.iter().zip(det_frames) {
        let m = match_detections(gt, det, kappa, f64::NEG_INFINITY);
        scored.extend(m.pairs.iter().map(|&(_, d, _)| (det[d].score, true)));
        scored.extend(m.unmatched_det.iter().map(|&d| (det[d].score, false)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &(score, hit)) in scored.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        // close a tie group
        if scored.get(k + 1).is_none_or(|next| next.0 != score) {
            points.push(PrPoint {
                tau: score,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
            });
        }
    }
    PrCurve { points, num_gt }
}

impl PrCurve {
    /// All-point interpolated AP: the sum over curve points of the recall
    /// increment times the best precision at that recall or beyond. `None`
    /// without ground truth; 0 without detections.
    pub fn average_precision(&self) -> Option<f64> {
        if self.num_gt == 0 {
            return None;
        }
        let n = self.points.len();
        let mut interp = vec![0.0; n];
        let mut best: f64 = 0.0;
        for i in (0..n).rev() {
            best = best.max(self.points[i].precision);
            interp[i] = best;
        }
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for (p, pi) in self.points.iter().zip(&interp) {
            ap += (p.recall - prev_r) * pi;
            prev_r = p.recall;
        }
        Some(ap)
    }

    /// Largest recall reached with precision at least `min_precision`.
    pub fn recall_at_precision(&self, min_precision: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.precision >= min_precision)
            .map(|p| p.recall)
            .fold(0.0, f64::max)
    }
}

pub fn average_precision(gt_frames: &[Vec<OrientedBox3D>], det_frames: &[Vec<Detection>], kappa: f64) -> Option<f64> {
    precision_recall(gt_frames, det_frames, kappa).average_precision()
}

/// Points of the union of `clouds` inside each box.
pub fn object_densities(clouds: &[&PointCloud], boxes: &[OrientedBox3D]) -> Vec<usize> {
    boxes
        .iter()
        .map(|b| clouds.iter().map(|c| count_points_in_box(&c.points, b)).sum())
        .collect()
}

/// Empirical CDF of object point densities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityCdf {
    /// Distinct densities, ascending, each with `F(d)`.
    pub steps: Vec<(usize, f64)>,
    pub count: usize,
}

impl DensityCdf {
    /// `F(d)`, the fraction of objects with density at most `d`.
    pub fn eval(&self, d: usize) -> f64 {
        let k = self.steps.partition_point(|&(x, _)| x <= d);
        if k == 0 {
            0.0
        } else {
            self.steps[k - 1].1
        }
    }

    /// Whether `self` never exceeds `other`, i.e. `self` has at least as
    /// much mass at high densities everywhere.
    pub fn dominates(&self, other: &DensityCdf) -> bool {
        self.steps
            .iter()
            .chain(&other.steps)
            .all(|&(d, _)| self.eval(d) <= other.eval(d) + 1e-12)
    }
}

pub fn density_cdf(densities: &[usize]) -> DensityCdf {
    let mut sorted = densities.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut steps = Vec::new();
    for (k, &d) in sorted.iter().enumerate() {
        if sorted.get(k + 1) != Some(&d) {
            steps.push((d, (k + 1) as f64 / n as f64));
        }
    }
    DensityCdf { steps, count: n }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityBin {
    pub center: f64,
    pub mean_iou: f64,
    pub count: usize,
}

/// Mean IOU of matched pairs in `bins` uniform density bins spanning the
/// observed range. Empty bins are omitted.
pub fn iou_vs_density(samples: &[(usize, f64)], bins: usize) -> Vec<DensityBin> {
    if samples.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = samples.iter().map(|s| s.0).min().unwrap() as f64;
    let hi = samples.iter().map(|s| s.0).max().unwrap() as f64;
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for &(d, iou) in samples {
        let k = (((d as f64 - lo) / width) as usize).min(bins - 1);
        sum[k] += iou;
        count[k] += 1;
    }
    (0..bins)
        .filter(|&k| count[k] > 0)
        .map(|k| DensityBin {
            center: lo + (k as f64 + 0.5) * width,
            mean_iou: sum[k] / count[k] as f64,
            count: count[k],
        })
        .collect()
}

/// Weighted least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, n2) = blocks.pop().unwrap();
            let (m1, w1, n1) = blocks.pop().unwrap();
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            blocks.push((m, w, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, n)| std::iter::repeat_n(m, n)).collect()
}

/// Weighted RMS distance between `values` and `fit`.
pub fn weighted_rms(values: &[f64], fit: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    if w == 0.0 {
        return 0.0;
    }
    let ss: f64 = values.iter().zip(fit).zip(weights).map(|((v, f), w)| w * (v - f).powi(2)).sum();
    (ss / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ObjectClass, Point3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn bx(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> OrientedBox3D {
        OrientedBox3D::new(Point3::new(x, y, 0.5), l, w, 1.0, yaw, ObjectClass::Car).unwrap()
    }

    fn det(b: OrientedBox3D, score: f64) -> Detection {
        Detection::new(b, score, None).unwrap()
    }

    #[test]
    fn analytic_iou_cases() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((iou3d(&a, &a) - 1.0).abs() < 1e-12);
        assert!((iou3d(&a, &bx(0.5, 0.0, 1.0, 1.0, 0.0)) - 1.0 / 3.0).abs() < 1e-12);
        let r = bx(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert!((iou3d(&a, &r) - inter / (2.0 - inter)).abs() < 1e-12);
        assert_eq!(iou3d(&a, &bx(5.0, 0.0, 1.0, 1.0, 0.0)), 0.0);
        let mut high = a;
        high.center.z = 3.0;
        assert_eq!(iou3d(&a, &high), 0.0);
    }

    #[test]
    fn iou_matches_sampling_on_a_few_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = bx(0.0, 0.0, 4.0, 2.0, rng.random_range(-3.0..3.0));
            let b = bx(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), 3.5, 1.8, rng.random_range(-3.0..3.0));
            let (lo, hi) = a.aabb();
            let n = 200_000;
            let (mut in_a, mut in_both) = (0usize, 0usize);
            for _ in 0..n {
                let p = Point3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
                if a.contains(&p) {
                    in_a += 1;
                    if b.contains(&p) {
                        in_both += 1;
                    }
                }
            }
            let inter = a.volume() * in_both as f64 / in_a as f64;
            let mc = inter / (a.volume() + b.volume() - inter);
            assert!((mc - iou3d(&a, &b)).abs() < 0.01);
        }
    }

    #[test]
    fn perfect_detections_match_everything() {
        let gt = vec![bx(0.0, 0.0, 4.0, 2.0, 0.0), bx(10.0, 0.0, 4.0, 2.0, 1.0)];
        let dets: Vec<_> = gt.iter().map(|b| det(*b, 0.9)).collect();
        let m = match_detections(&gt, &dets, 0.7, 0.0);
        assert_eq!(m.true_positives(), 2);
        assert_eq!((m.precision(), m.recall()), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn duplicate_detection_is_a_false_positive() {
        let gt = vec![bx(0.0, 0.0, 4.0, 2.0, 0.0)];
        let dets = vec![det(bx(0.1, 0.0, 4.0, 2.0, 0.0), 0.6), det(gt[0], 0.9)];
        let m = match_detections(&gt, &dets, 0.5, 0.0);
        assert_eq!(m.pairs[0].1, 1);
        assert_eq!(m.unmatched_det, vec![0]);
        // tau drops the low-score detection entirely
        let m = match_detections(&gt, &dets, 0.5, 0.7);
        assert!(m.unmatched_det.is_empty());
    }

    /// Largest one-to-one matching with IOU >= kappa, by exhaustive search.
    fn max_matching(iou: &[Vec<f64>], kappa: f64, d: usize, used: &mut Vec<bool>) -> usize {
        if d == iou.len() {
            return 0;
        }
        let mut best = max_matching(iou, kappa, d + 1, used);
        for g in 0..used.len() {
            if !used[g] && iou[d][g] >= kappa {
                used[g] = true;
                best = best.max(1 + max_matching(iou, kappa, d + 1, used));
                used[g] = false;
            }
        }
        best
    }

    #[test]
    fn greedy_vs_exhaustive_matching() {
        // Greedy can lose matches when a high-score box steals the ground
        // truth another box needed; count how often.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut equal, trials) = (0, 200);
        for _ in 0..trials {
            let gt: Vec<_> = (0..5)
                .map(|_| bx(rng.random_range(0.0..8.0), rng.random_range(0.0..3.0), 4.0, 2.0, 0.0))
                .collect();
            let dets: Vec<_> = (0..5)
                .map(|_| det(bx(rng.random_range(0.0..8.0), rng.random_range(0.0..3.0), 4.0, 2.0, 0.0), rng.random_range(0.0..1.0)))
                .collect();
            let kappa = 0.3;
            let greedy = match_detections(&gt, &dets, kappa, 0.0).true_positives();
            let iou: Vec<Vec<f64>> = dets.iter().map(|d| gt.iter().map(|g| iou3d(&d.bbox, g)).collect()).collect();
            let best = max_matching(&iou, kappa, 0, &mut vec![false; gt.len()]);
            assert!(greedy <= best);
            if greedy == best {
                equal += 1;
            }
        }
        assert!(equal as f64 / trials as f64 > 0.9, "{equal}/{trials}");
    }

    #[test]
    fn ap_examples() {
        let g = bx(0.0, 0.0, 4.0, 2.0, 0.0);
        let gt = vec![vec![g]];
        assert_eq!(average_precision(&gt, &[vec![det(g, 0.9)]], 0.7), Some(1.0));
        let fp = det(bx(20.0, 0.0, 4.0, 2.0, 0.0), 0.8);
        assert_eq!(average_precision(&gt, &[vec![det(g, 0.9), fp]], 0.7), Some(1.0));
        // a false positive ranked first halves the precision at recall 1
        let fp_high = det(bx(20.0, 0.0, 4.0, 2.0, 0.0), 0.95);
        assert_eq!(average_precision(&gt, &[vec![det(g, 0.9), fp_high]], 0.7), Some(0.5));
        assert_eq!(average_precision(&gt, &[vec![]], 0.7), Some(0.0));
        assert_eq!(average_precision(&[vec![]], &[vec![det(g, 0.9)]], 0.7), None);
    }

    #[test]
    fn recall_at_precision_reads_the_curve() {
        let gts: Vec<_> = (0..4).map(|k| bx(10.0 * k as f64, 0.0, 4.0, 2.0, 0.0)).collect();
        let dets = vec![
            det(gts[0], 0.9),
            det(gts[1], 0.8),
            det(bx(100.0, 0.0, 4.0, 2.0, 0.0), 0.7),
            det(gts[2], 0.6),
        ];
        let c = precision_recall(&[gts], &[dets], 0.7);
        assert_eq!(c.recall_at_precision(0.95), 0.5);
        assert_eq!(c.recall_at_precision(0.7), 0.75);
        assert!(c.points.windows(2).all(|w| w[1].recall >= w[0].recall && w[1].tau < w[0].tau));
    }

    #[test]
    fn cdf_examples() {
        let c = density_cdf(&[0, 0, 0]);
        assert_eq!(c.eval(0), 1.0);
        let c = density_cdf(&[10]);
        assert_eq!((c.eval(9), c.eval(10)), (0.0, 1.0));
        let c = density_cdf(&[5, 1, 9, 1, 30]);
        assert!(c.steps.windows(2).all(|w| w[1].1 >= w[0].1 && w[1].0 > w[0].0));
        assert_eq!(c.steps.last().unwrap().1, 1.0);
        let more = density_cdf(&[6, 2, 9, 3, 40]);
        assert!(more.dominates(&c));
        assert!(!c.dominates(&more));
    }

    #[test]
    fn density_bins() {
        let one = iou_vs_density(&[(50, 0.5), (50, 0.7)], 200);
        assert_eq!(one.len(), 1);
        assert!((one[0].mean_iou - 0.6).abs() < 1e-12);
        let samples: Vec<_> = (0..1000).map(|k| (k, 1.0)).collect();
        let bins = iou_vs_density(&samples, 200);
        assert_eq!(bins.len(), 200);
        assert!(bins.iter().all(|b| b.mean_iou == 1.0));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 1000);
    }

    #[test]
    fn isotonic_fit_pools_violators() {
        let fit = isotonic_fit(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(fit, vec![1.0, 2.5, 2.5, 4.0]);
        let fit = isotonic_fit(&[3.0, 1.0], &[3.0, 1.0]);
        assert_eq!(fit, vec![2.5, 2.5]);
        assert_eq!(isotonic_fit(&[], &[]), Vec::<f64>::new());
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox3D> {
        (-3.0f64..3.0, -3.0f64..3.0, 0.0f64..1.0, 0.5f64..5.0, 0.5f64..3.0, 0.5f64..2.0, -3.2f64..3.2).prop_map(
            |(x, y, z, l, w, h, yaw)| OrientedBox3D::new(Point3::new(x, y, z), l, w, h, yaw, ObjectClass::Car).unwrap(),
        )
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded_and_rigid_invariant(a in arb_box(), b in arb_box(), th in -3.1f64..3.1, tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
            let ab = iou3d(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - iou3d(&b, &a)).abs() < 1e-9);
            let (s, c) = th.sin_cos();
            let move_box = |bx: &OrientedBox3D| {
                let mut m = *bx;
                m.center = Point3::new(c * bx.center.x - s * bx.center.y + tx, s * bx.center.x + c * bx.center.y + ty, bx.center.z);
                m.set_yaw(bx.yaw() + th);
                m
            };
            prop_assert!((iou3d(&move_box(&a), &move_box(&b)) - ab).abs() < 1e-9);
        }

        #[test]
        fn ap_invariant_under_monotone_score_maps(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<_> = (0..6).map(|_| bx(rng.random_range(0.0..20.0), rng.random_range(0.0..6.0), 4.0, 2.0, 0.0)).collect();
            let dets: Vec<_> = (0..8)
                .map(|_| det(bx(rng.random_range(0.0..20.0), rng.random_range(0.0..6.0), 4.0, 2.0, 0.0), rng.random_range(0.0..1.0)))
                .collect();
            let mapped: Vec<_> = dets.iter().map(|d| det(d.bbox, d.score.powi(3) * 0.5)).collect();
            let a = average_precision(std::slice::from_ref(&gt), std::slice::from_ref(&dets), 0.3);
            let b = average_precision(std::slice::from_ref(&gt), &[mapped], 0.3);
            prop_assert_eq!(a, b);
            // recall shrinks as kappa or tau grows
            let r = |k, t| match_detections(&gt, &dets, k, t).recall().unwrap();
            prop_assert!(r(0.5, 0.0) <= r(0.3, 0.0));
            prop_assert!(r(0.3, 0.5) <= r(0.3, 0.0));
        }
    }
}
