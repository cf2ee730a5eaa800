//! Default boxes (priors), overlap computation, ground-truth matching, box
//! regression offsets, and hard negative selection.
//!
//! Boxes live in normalized image coordinates: centers in [0, 1], extents
//! positive (decoded boxes may spill past the image and are clipped later).
//! An action segment becomes a box spanning the full image height, so box
//! geometry degenerates gracefully to interval geometry along the time axis.

use crate::encoding::ActionImage;
use crate::error::{Error, Result};
use crate::skeleton::GroundTruthSegment;

/// Axis-aligned box in normalized center-size form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Corner form `(x_lo, y_lo, x_hi, y_hi)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Aspect ratios used for default boxes, w/h. Mirrors the detector's design
/// for temporal segments: wide boxes for long actions, tall (narrow) ones
/// for short actions.
pub const DEFAULT_ASPECT_RATIOS: [f64; 9] = [
    1.0 / 7.0,
    1.0 / 5.0,
    1.0 / 3.0,
    1.0 / 2.0,
    1.0,
    2.0,
    3.0,
    5.0,
    7.0,
];

/// Layout of the prior set: which scales and aspect ratios to place on which
/// feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Box aspect ratios (w/h), shared across layers.
    pub aspect_ratios: Vec<f64>,
    /// One box scale per output layer, strictly increasing in (0, 1].
    pub layer_scales: Vec<f64>,
    /// Per-layer feature map shape as (rows, cols).
    pub feature_map_shapes: Vec<(usize, usize)>,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aspect_ratios.is_empty() {
            return Err(Error::Config("aspect_ratios must be nonempty".to_string()));
        }
        if self.aspect_ratios.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("aspect ratios must be positive finite".to_string()));
        }
        if self.layer_scales.len() != self.feature_map_shapes.len() {
            return Err(Error::Config(format!(
                "{} layer scales for {} feature maps",
                self.layer_scales.len(),
                self.feature_map_shapes.len()
            )));
        }
        for pair in self.layer_scales.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::Config(
                    "layer scales must be strictly increasing".to_string(),
                ));
            }
        }
        for &s in &self.layer_scales {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Config(format!("layer scale {} outside (0, 1]", s)));
            }
        }
        for &(r, c) in &self.feature_map_shapes {
            if r == 0 || c == 0 {
                return Err(Error::Config("feature map with zero extent".to_string()));
            }
        }
        Ok(())
    }

    /// Total prior count: Σ over layers of rows * cols * |ratios|.
    pub fn num_priors(&self) -> usize {
        let per_cell = self.aspect_ratios.len();
        self.feature_map_shapes
            .iter()
            .map(|&(r, c)| r * c * per_cell)
            .sum()
    }
}

impl Default for PriorConfig {
    /// Six-layer layout with SSD-like linearly spaced scales. The feature
    /// map shapes here suit the full-size detector; the scaled-down preset
    /// supplies its own.
    fn default() -> Self {
        PriorConfig {
            aspect_ratios: DEFAULT_ASPECT_RATIOS.to_vec(),
            layer_scales: vec![0.1, 0.2, 0.375, 0.55, 0.725, 0.9],
            feature_map_shapes: vec![(12, 64), (12, 32), (12, 16), (12, 8), (12, 4), (12, 2)],
        }
    }
}

/// Places one box per (layer, row, col, ratio) in exactly that order: cell
/// centers at `((c+0.5)/cols, (r+0.5)/rows)`, extents `w = scale * sqrt(a)`,
/// `h = scale / sqrt(a)`. The ordering is a contract: detection heads emit
/// predictions in the same order.
pub fn generate_priors(config: &PriorConfig) -> Vec<BBox> {
    let mut priors = Vec::with_capacity(config.num_priors());
    for (layer, &(rows, cols)) in config.feature_map_shapes.iter().enumerate() {
        let scale = config.layer_scales[layer];
        for r in 0..rows {
            for c in 0..cols {
                let cx = (c as f64 + 0.5) / cols as f64;
                let cy = (r as f64 + 0.5) / rows as f64;
                for &a in &config.aspect_ratios {
                    let root = a.sqrt();
                    priors.push(BBox { cx, cy, w: scale * root, h: scale / root });
                }
            }
        }
    }
    priors
}

/// Intersection-over-union of two boxes; 0 when disjoint. Areas are derived
/// from the same corner coordinates as the intersection so that identical
/// boxes yield exactly 1.0.
pub fn iou_box(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    inter / (area_a + area_b - inter)
}

/// Intersection-over-union of two half-open intervals; 0 when disjoint or
/// merely touching.
pub fn iou_interval(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter / union
}

/// Outcome of prior/ground-truth matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// For each prior: `None` if unmatched, else `(gt_index, iou)`.
    pub prior_matches: Vec<Option<(usize, f64)>>,
    /// For each ground truth: the prior claimed for it in stage 1.
    pub gt_best_prior: Vec<usize>,
}

impl MatchResult {
    pub fn num_matched(&self) -> usize {
        self.prior_matches.iter().filter(|m| m.is_some()).count()
    }
}

/// Two-stage SSD matching. Stage 1 assigns each ground truth its highest-IoU
/// prior among those not yet claimed (ties → lower prior index; ground
/// truths processed in order, so an earlier gt wins a contested prior and a
/// later gt falls back to its best unclaimed one). Stage 2 assigns every
/// remaining prior whose best-gt IoU strictly exceeds `threshold` to that
/// gt (ties → lower gt index). Stage 1 runs regardless of threshold, so
/// every gt ends up with at least one prior.
pub fn match_gt(priors: &[BBox], gts: &[BBox], threshold: f64) -> MatchResult {
    let mut prior_matches: Vec<Option<(usize, f64)>> = vec![None; priors.len()];
    let mut gt_best_prior = Vec::with_capacity(gts.len());
    if gts.is_empty() {
        return MatchResult { prior_matches, gt_best_prior };
    }
    assert!(
        gts.len() <= priors.len(),
        "{} ground truths cannot each claim one of {} priors",
        gts.len(),
        priors.len()
    );
    // IoU matrix, prior-major.
    let mut iou = vec![0.0f64; priors.len() * gts.len()];
    for (i, p) in priors.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            iou[i * gts.len() + g] = iou_box(p, gt);
        }
    }
    // Stage 1: per-gt best unclaimed prior.
    for g in 0..gts.len() {
        let mut best = None;
        let mut best_iou = f64::NEG_INFINITY;
        for i in 0..priors.len() {
            if prior_matches[i].is_some() {
                continue;
            }
            let v = iou[i * gts.len() + g];
            if v > best_iou {
                best_iou = v;
                best = Some(i);
            }
        }
        let i = best.expect("more gts than free priors");
        prior_matches[i] = Some((g, best_iou));
        gt_best_prior.push(i);
    }
    // Stage 2: remaining priors above threshold join their best gt.
    for i in 0..priors.len() {
        if prior_matches[i].is_some() {
            continue;
        }
        let mut best_g = 0;
        let mut best_iou = f64::NEG_INFINITY;
        for g in 0..gts.len() {
            let v = iou[i * gts.len() + g];
            if v > best_iou {
                best_iou = v;
                best_g = g;
            }
        }
        if best_iou > threshold {
            prior_matches[i] = Some((best_g, best_iou));
        }
    }
    MatchResult { prior_matches, gt_best_prior }
}

/// Box regression offsets relative to a prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOffsets {
    pub t_cx: f64,
    pub t_cy: f64,
    pub t_w: f64,
    pub t_h: f64,
}

/// Center offsets scaled by the prior's extent, log-ratio for size. No
/// variance scaling: this is the plain parameterization, exactly inverted by
/// [`decode_offsets`].
pub fn encode_offsets(prior: &BBox, gt: &BBox) -> BoxOffsets {
    BoxOffsets {
        t_cx: (gt.cx - prior.cx) / prior.w,
        t_cy: (gt.cy - prior.cy) / prior.h,
        t_w: (gt.w / prior.w).ln(),
        t_h: (gt.h / prior.h).ln(),
    }
}

/// Inverse of [`encode_offsets`].
pub fn decode_offsets(prior: &BBox, offsets: &BoxOffsets) -> BBox {
    BBox {
        cx: prior.cx + offsets.t_cx * prior.w,
        cy: prior.cy + offsets.t_cy * prior.h,
        w: prior.w * offsets.t_w.exp(),
        h: prior.h * offsets.t_h.exp(),
    }
}

/// Picks the hardest negatives: unmatched priors ranked by confidence loss
/// descending (ties → lower prior index), capped at `floor(ratio * N_pos)`.
/// Returns prior indices in ascending order for deterministic iteration.
pub fn hard_negative_mine(
    conf_losses: &[f64],
    match_result: &MatchResult,
    ratio: f64,
) -> Vec<usize> {
    assert_eq!(conf_losses.len(), match_result.prior_matches.len());
    let n_pos = match_result.num_matched();
    let quota = (ratio * n_pos as f64).floor() as usize;
    if quota == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<usize> = (0..conf_losses.len())
        .filter(|&i| match_result.prior_matches[i].is_none())
        .collect();
    candidates.sort_by(|&a, &b| {
        conf_losses[b]
            .partial_cmp(&conf_losses[a])
            .expect("confidence losses must not be NaN")
            .then(a.cmp(&b))
    });
    candidates.truncate(quota);
    candidates.sort_unstable();
    candidates
}

/// Converts a labelled frame interval to a normalized box on the image: full
/// height, horizontal extent from the image's column-to-frame map.
pub fn gt_segment_to_box(seg: &GroundTruthSegment, img: &ActionImage) -> Result<BBox> {
    if seg.start >= seg.end || seg.end > img.source_len {
        return Err(Error::Validation(format!(
            "segment [{}, {}) outside sequence of {} frames",
            seg.start, seg.end, img.source_len
        )));
    }
    let x_lo = img.x_of_frame_time(seg.start as f64);
    let x_hi = img.x_of_frame_time(seg.end as f64);
    let w = img.width as f64;
    Ok(BBox {
        cx: (x_lo + x_hi) / (2.0 * w),
        cy: 0.5,
        w: (x_hi - x_lo) / w,
        h: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode_invariant, JointOrder};
    use crate::skeleton::{Frame, SkeletonSequence, JOINTS_PER_PERSON};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sq(cx: f64, cy: f64, s: f64) -> BBox {
        BBox { cx, cy, w: s, h: s }
    }

    #[test]
    fn prior_count_and_layout() {
        let cfg = PriorConfig {
            aspect_ratios: DEFAULT_ASPECT_RATIOS.to_vec(),
            layer_scales: vec![0.3],
            feature_map_shapes: vec![(1, 8)],
        };
        cfg.validate().unwrap();
        let priors = generate_priors(&cfg);
        assert_eq!(priors.len(), 72);
        assert_eq!(cfg.num_priors(), 72);
        // First cell center, ratio-minor ordering.
        assert_eq!(priors[0].cx, 0.5 / 8.0);
        assert_eq!(priors[0].cy, 0.5);
        assert_eq!(priors[9].cx, 1.5 / 8.0);
    }

    #[test]
    fn unit_ratio_gives_square_priors() {
        let cfg = PriorConfig {
            aspect_ratios: vec![1.0],
            layer_scales: vec![0.25],
            feature_map_shapes: vec![(2, 2)],
        };
        for p in generate_priors(&cfg) {
            assert_eq!(p.w, 0.25);
            assert_eq!(p.h, 0.25);
        }
    }

    #[test]
    fn ratio_four_splits_scale() {
        let cfg = PriorConfig {
            aspect_ratios: vec![4.0],
            layer_scales: vec![0.2],
            feature_map_shapes: vec![(1, 1)],
        };
        let p = generate_priors(&cfg)[0];
        assert!((p.w - 0.4).abs() < 1e-15);
        assert!((p.h - 0.1).abs() < 1e-15);
        assert!((p.w / p.h - 4.0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let good = PriorConfig::default();
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.aspect_ratios.clear();
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.layer_scales[1] = bad.layer_scales[0];
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.layer_scales.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iou_box_cases() {
        let a = sq(0.5, 0.5, 1.0);
        assert_eq!(iou_box(&a, &a), 1.0);
        let far = sq(5.0, 5.0, 1.0);
        assert_eq!(iou_box(&a, &far), 0.0);
        // Unit squares offset by 0.5 horizontally: 0.5/1.5.
        let b = sq(1.0, 0.5, 1.0);
        assert!((iou_box(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou_box(&a, &b), iou_box(&b, &a));
    }

    #[test]
    fn iou_interval_cases() {
        assert!((iou_interval((0.0, 10.0), (5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou_interval((2.0, 4.0), (2.0, 4.0)), 1.0);
        assert_eq!(iou_interval((0.0, 5.0), (5.0, 9.0)), 0.0);
    }

    #[test]
    fn match_exact_prior_wins() {
        let priors = vec![
            sq(0.1, 0.1, 0.1),
            sq(0.3, 0.3, 0.1),
            sq(0.5, 0.5, 0.1),
            sq(0.7, 0.7, 0.1),
        ];
        let gts = vec![sq(0.7, 0.7, 0.1)];
        let m = match_gt(&priors, &gts, 0.5);
        assert_eq!(m.prior_matches[3], Some((0, 1.0)));
        assert_eq!(m.gt_best_prior, vec![3]);
        assert_eq!(m.num_matched(), 1);
    }

    #[test]
    fn stage_two_respects_strict_threshold() {
        // Prior A overlaps the gt at 0.6, prior B at ~0.4: with threshold
        // 0.5, A is taken in stage 1 and B stays unmatched.
        let gt = BBox { cx: 0.5, cy: 0.5, w: 0.4, h: 1.0 };
        let a = BBox { cx: 0.6, cy: 0.5, w: 0.4, h: 1.0 }; // IoU 0.6
        let b = BBox { cx: 0.675, cy: 0.5, w: 0.4, h: 1.0 }; // IoU ~0.39
        assert!((iou_box(&a, &gt) - 0.6).abs() < 1e-12);
        assert!(iou_box(&b, &gt) < 0.5);
        let m = match_gt(&[a, b], &[gt], 0.5);
        assert!(m.prior_matches[0].is_some());
        assert_eq!(m.prior_matches[1], None);
    }

    #[test]
    fn contested_prior_goes_to_earlier_gt() {
        // Both gts are nearest prior 0; gt 0 takes it, gt 1 falls back.
        let priors = vec![sq(0.5, 0.5, 0.2), sq(0.9, 0.9, 0.2)];
        let gts = vec![sq(0.5, 0.5, 0.2), sq(0.52, 0.5, 0.2)];
        let m = match_gt(&priors, &gts, 0.5);
        assert_eq!(m.gt_best_prior, vec![0, 1]);
        assert_eq!(m.prior_matches[0].unwrap().0, 0);
        assert_eq!(m.prior_matches[1].unwrap().0, 1);
    }

    #[test]
    fn every_gt_matched_even_below_threshold() {
        let priors = vec![sq(0.2, 0.2, 0.1), sq(0.8, 0.8, 0.1)];
        let gts = vec![sq(0.5, 0.5, 0.05)]; // tiny IoU with everything
        let m = match_gt(&priors, &gts, 0.5);
        assert_eq!(m.num_matched(), 1);
        assert_eq!(m.gt_best_prior.len(), 1);
    }

    #[test]
    fn offset_worked_example() {
        let prior = BBox { cx: 0.5, cy: 0.5, w: 0.2, h: 1.0 };
        let gt = BBox { cx: 0.6, cy: 0.5, w: 0.4, h: 1.0 };
        let t = encode_offsets(&prior, &gt);
        assert!((t.t_cx - 0.5).abs() < 1e-15);
        assert_eq!(t.t_cy, 0.0);
        assert!((t.t_w - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(t.t_h, 0.0);
        // Identity and inverse checks.
        let zero = encode_offsets(&prior, &prior);
        assert_eq!(zero, BoxOffsets { t_cx: 0.0, t_cy: 0.0, t_w: 0.0, t_h: 0.0 });
        assert_eq!(decode_offsets(&prior, &zero), prior);
        let back = decode_offsets(&prior, &t);
        assert!((back.cx - gt.cx).abs() < 1e-15);
        assert!((back.w - gt.w).abs() < 1e-15);
    }

    #[test]
    fn offset_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let prior = BBox {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                w: rng.gen_range(0.01..1.5),
                h: rng.gen_range(0.01..1.5),
            };
            let gt = BBox {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                w: rng.gen_range(0.01..1.5),
                h: rng.gen_range(0.01..1.5),
            };
            let back = decode_offsets(&prior, &encode_offsets(&prior, &gt));
            for (got, want) in [
                (back.cx, gt.cx),
                (back.cy, gt.cy),
                (back.w, gt.w),
                (back.h, gt.h),
            ] {
                let rel = (got - want).abs() / want.abs().max(1.0);
                assert!(rel < 1e-12, "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn hard_negative_quota_and_order() {
        // 2 matched priors, 10 unmatched, ratio 3 → 6 highest-loss kept.
        let mut prior_matches = vec![None; 12];
        prior_matches[0] = Some((0, 0.9));
        prior_matches[1] = Some((1, 0.8));
        let m = MatchResult { prior_matches, gt_best_prior: vec![0, 1] };
        let losses: Vec<f64> =
            vec![9.0, 9.0, 0.1, 0.9, 0.5, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6, 0.35];
        let negs = hard_negative_mine(&losses, &m, 3.0);
        assert_eq!(negs.len(), 6);
        // Highest-loss unmatched: indices 3 (.9), 6 (.8), 8 (.7), 10 (.6),
        // 4 (.5), 9 (.4); returned ascending.
        assert_eq!(negs, vec![3, 4, 6, 8, 9, 10]);
    }

    #[test]
    fn hard_negative_ties_break_by_index() {
        let mut prior_matches = vec![None; 4];
        prior_matches[0] = Some((0, 1.0));
        let m = MatchResult { prior_matches, gt_best_prior: vec![0] };
        let losses = vec![0.0, 0.5, 0.5, 0.5];
        let negs = hard_negative_mine(&losses, &m, 2.0);
        assert_eq!(negs, vec![1, 2]);
    }

    #[test]
    fn hard_negative_degenerate_cases() {
        let m = MatchResult { prior_matches: vec![None; 5], gt_best_prior: vec![] };
        assert!(hard_negative_mine(&[1.0; 5], &m, 3.0).is_empty());
        let mut prior_matches = vec![None; 3];
        prior_matches[0] = Some((0, 1.0));
        prior_matches[1] = Some((1, 1.0));
        let m = MatchResult { prior_matches, gt_best_prior: vec![0, 1] };
        // Quota 6 but only one negative available.
        assert_eq!(hard_negative_mine(&[0.0, 0.0, 2.0], &m, 3.0), vec![2]);
    }

    fn ramp_image(frames: usize) -> ActionImage {
        let coords: Vec<Frame> = (0..frames)
            .map(|n| Frame {
                persons: [Some([[n as f64; 3]; JOINTS_PER_PERSON]), None],
            })
            .collect();
        let seq = SkeletonSequence {
            frames: coords,
            frame_rate: 30.0,
            source_id: "ramp".to_string(),
        };
        encode_invariant(&seq, &JointOrder::kinect_v2()).unwrap()
    }

    #[test]
    fn full_sequence_segment_is_unit_box() {
        let img = ramp_image(40);
        let seg = GroundTruthSegment { label: 0, start: 0, end: 40, confidence: 1.0 };
        let b = gt_segment_to_box(&seg, &img).unwrap();
        assert_eq!(b, BBox { cx: 0.5, cy: 0.5, w: 1.0, h: 1.0 });
    }

    #[test]
    fn half_segment_maps_to_half_box() {
        let img = ramp_image(100);
        let seg = GroundTruthSegment { label: 0, start: 25, end: 75, confidence: 1.0 };
        let b = gt_segment_to_box(&seg, &img).unwrap();
        assert!((b.cx - 0.5).abs() < 1e-15);
        assert!((b.w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_box_survives_resampling() {
        let img = ramp_image(100);
        let wide = crate::encoding::resample_width(&img, 250).unwrap();
        let seg = GroundTruthSegment { label: 0, start: 25, end: 75, confidence: 1.0 };
        let b = gt_segment_to_box(&seg, &wide).unwrap();
        assert!((b.cx - 0.5).abs() < 1e-12);
        assert!((b.w - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_segments_stay_disjoint() {
        let img = ramp_image(60);
        let a = GroundTruthSegment { label: 0, start: 0, end: 20, confidence: 1.0 };
        let b = GroundTruthSegment { label: 1, start: 30, end: 55, confidence: 1.0 };
        let ba = gt_segment_to_box(&a, &img).unwrap();
        let bb = gt_segment_to_box(&b, &img).unwrap();
        assert!(ba.cx + 0.5 * ba.w <= bb.cx - 0.5 * bb.w);
    }

    #[test]
    fn out_of_range_segment_rejected() {
        let img = ramp_image(30);
        let seg = GroundTruthSegment { label: 0, start: 10, end: 31, confidence: 1.0 };
        assert!(gt_segment_to_box(&seg, &img).is_err());
    }

    #[test]
    fn segment_round_trips_through_box_within_one_frame() {
        let img = ramp_image(97);
        for (s, e) in [(0usize, 97usize), (3, 11), (40, 41), (90, 97)] {
            let seg = GroundTruthSegment { label: 0, start: s, end: e, confidence: 1.0 };
            let b = gt_segment_to_box(&seg, &img).unwrap();
            let t0 = img.frame_time_of_x((b.cx - 0.5 * b.w) * img.width as f64);
            let t1 = img.frame_time_of_x((b.cx + 0.5 * b.w) * img.width as f64);
            assert!((t0 - s as f64).abs() <= 1.0);
            assert!((t1 - e as f64).abs() <= 1.0);
        }
    }
}
