//! Encoding of skeleton sequences as color action images.
//!
//! Each frame becomes one column of an RGB image: row = joint (in part-based
//! order, one block of 25 rows per person slot), column = frame, and the
//! (x, y, z) joint coordinates quantize to the (R, G, B) channels. Two
//! quantization mappings are provided:
//!
//! * **Global**: channels are scaled by a single dataset-wide coordinate
//!   range, so images from different sequences share one color scale.
//! * **Invariant**: each person's channels are shifted by that person's own
//!   per-channel minimum and scaled by the *largest* of their three channel
//!   ranges. Translating a skeleton, or scaling it uniformly about any
//!   point, then leaves the image (nearly) unchanged: exactly for power-of-
//!   two scale factors, and within one quantization level otherwise because
//!   only float rounding differs.
//!
//! Using one shared denominator across channels (rather than normalizing
//! each channel separately) is what keeps the mapping faithful to uniform
//! scaling: per-channel normalization would also erase anisotropic scaling
//! and distort relative axis magnitudes.

use crate::error::{Error, Result};
use crate::skeleton::{SkeletonSequence, JOINTS_PER_PERSON, PERSON_SLOTS};

/// Left arm kinematic chain: shoulder, elbow, wrist, hand, hand tip, thumb.
pub const PART_LEFT_ARM: &[usize] = &[4, 5, 6, 7, 21, 22];
/// Right arm kinematic chain: shoulder, elbow, wrist, hand, hand tip, thumb.
pub const PART_RIGHT_ARM: &[usize] = &[8, 9, 10, 11, 23, 24];
/// Trunk chain, top-down: head, neck, spine shoulder, spine mid, spine base.
pub const PART_TRUNK: &[usize] = &[3, 2, 20, 1, 0];
/// Left leg chain: hip, knee, ankle, foot.
pub const PART_LEFT_LEG: &[usize] = &[12, 13, 14, 15];
/// Right leg chain: hip, knee, ankle, foot.
pub const PART_RIGHT_LEG: &[usize] = &[16, 17, 18, 19];

/// Body parts in row order. Joints that are adjacent on a limb occupy
/// adjacent image rows, so limb motion produces spatially coherent texture.
pub const PARTS: [&[usize]; 5] = [
    PART_LEFT_ARM,
    PART_RIGHT_ARM,
    PART_TRUNK,
    PART_LEFT_LEG,
    PART_RIGHT_LEG,
];

/// Assignment of joints to image rows within one person block: row `i`
/// displays joint `permutation()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOrder {
    permutation: [usize; JOINTS_PER_PERSON],
}

impl JointOrder {
    /// Part-based ordering for the 25-joint Kinect v2 layout.
    pub fn kinect_v2() -> Self {
        let mut permutation = [0usize; JOINTS_PER_PERSON];
        let mut i = 0;
        for part in PARTS {
            for &joint in part {
                permutation[i] = joint;
                i += 1;
            }
        }
        debug_assert_eq!(i, JOINTS_PER_PERSON);
        JointOrder { permutation }
    }

    /// Custom row ordering. Fails unless `permutation` visits every joint
    /// index exactly once.
    pub fn custom(permutation: [usize; JOINTS_PER_PERSON]) -> Result<Self> {
        let mut seen = [false; JOINTS_PER_PERSON];
        for &j in &permutation {
            if j >= JOINTS_PER_PERSON || seen[j] {
                return Err(Error::Validation(format!(
                    "row order is not a permutation of 0..{}",
                    JOINTS_PER_PERSON
                )));
            }
            seen[j] = true;
        }
        Ok(JointOrder { permutation })
    }

    pub fn permutation(&self) -> &[usize; JOINTS_PER_PERSON] {
        &self.permutation
    }
}

impl Default for JointOrder {
    fn default() -> Self {
        JointOrder::kinect_v2()
    }
}

/// Affine map from image column index to the source frame index sampled at
/// that column's center: column `c` shows (approximately) frame
/// `scale * c + offset`. A freshly encoded image has the identity map
/// `(1, 0)`; resampling and cropping update it so detections can always be
/// projected back to source frame numbers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColToFrame {
    pub scale: f64,
    pub offset: f64,
}

/// A skeleton sequence rendered as an RGB image, plus the bookkeeping needed
/// to map columns back to source frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionImage {
    /// Row-major RGB bytes, `height * width * 3` long.
    pub pixels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    /// Rows per person block (25 for the Kinect v2 layout).
    pub rows_per_person: usize,
    /// Person blocks present: 1 if the second slot is absent in every frame,
    /// 2 otherwise. `height == rows_per_person * persons_encoded`.
    pub persons_encoded: usize,
    pub col_to_frame: ColToFrame,
    /// Frame count of the source sequence (unchanged by resampling/cropping).
    pub source_len: usize,
}

impl ActionImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Intercept of the continuous time map `t(x) = scale * x + intercept`,
    /// where `x` is a continuous image coordinate (column `c` spans
    /// `[c, c + 1)`) and `t` a continuous frame time (frame `n` spans
    /// `[n, n + 1)`). `col_to_frame` stores the column-center form of the
    /// same map, hence the half-pixel correction.
    fn frame_intercept(&self) -> f64 {
        self.col_to_frame.offset + 0.5 - 0.5 * self.col_to_frame.scale
    }

    /// Continuous frame time at continuous image coordinate `x`.
    pub fn frame_time_of_x(&self, x: f64) -> f64 {
        self.col_to_frame.scale * x + self.frame_intercept()
    }

    /// Continuous image coordinate at frame time `t`.
    pub fn x_of_frame_time(&self, t: f64) -> f64 {
        (t - self.frame_intercept()) / self.col_to_frame.scale
    }
}

/// Dataset-wide coordinate range used by the global mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub c_min: f64,
    pub c_max: f64,
}

/// Scans sequences for the minimum and maximum coordinate over all present
/// joints and all three axes. Fails if no joint is present anywhere.
pub fn compute_dataset_stats(seqs: &[SkeletonSequence]) -> Result<DatasetStats> {
    let mut c_min = f64::INFINITY;
    let mut c_max = f64::NEG_INFINITY;
    for seq in seqs {
        for frame in &seq.frames {
            for slot in frame.persons.iter().flatten() {
                for joint in slot.iter() {
                    for &c in joint.iter() {
                        c_min = c_min.min(c);
                        c_max = c_max.max(c);
                    }
                }
            }
        }
    }
    if !c_min.is_finite() || !c_max.is_finite() {
        return Err(Error::DegenerateStats(
            "no joints present in any sequence".to_string(),
        ));
    }
    Ok(DatasetStats { c_min, c_max })
}

/// Quantizes to a byte with floor, clamping to [0, 255].
fn quantize(v: f64) -> u8 {
    let q = v.floor();
    if !(q >= 0.0) {
        0
    } else if q > 255.0 {
        255
    } else {
        q as u8
    }
}

fn persons_encoded(seq: &SkeletonSequence) -> usize {
    if seq.frames.iter().any(|f| f.persons[PERSON_SLOTS - 1].is_some()) {
        PERSON_SLOTS
    } else {
        1
    }
}

fn blank_image(seq: &SkeletonSequence) -> Result<ActionImage> {
    if seq.is_empty() {
        return Err(Error::Validation(format!(
            "cannot encode empty sequence {:?}",
            seq.source_id
        )));
    }
    let persons = persons_encoded(seq);
    let height = JOINTS_PER_PERSON * persons;
    let width = seq.len();
    Ok(ActionImage {
        pixels: vec![0u8; height * width * 3],
        height,
        width,
        rows_per_person: JOINTS_PER_PERSON,
        persons_encoded: persons,
        col_to_frame: ColToFrame { scale: 1.0, offset: 0.0 },
        source_len: seq.len(),
    })
}

/// Encodes with the global mapping: every channel of every pixel is
/// `floor(255 * (c - c_min) / (c_max - c_min))`, clamped to [0, 255] so
/// coordinates outside the supplied range saturate instead of wrapping.
/// Absent persons encode as all-zero rows.
pub fn encode_global(
    seq: &SkeletonSequence,
    order: &JointOrder,
    stats: &DatasetStats,
) -> Result<ActionImage> {
    if !(stats.c_max > stats.c_min) {
        return Err(Error::DegenerateStats(format!(
            "dataset coordinate range [{}, {}] is empty",
            stats.c_min, stats.c_max
        )));
    }
    let mut img = blank_image(seq)?;
    let den = stats.c_max - stats.c_min;
    for (col, frame) in seq.frames.iter().enumerate() {
        for (p, slot) in frame.persons.iter().enumerate().take(img.persons_encoded) {
            let Some(pose) = slot else { continue };
            for (i, &joint_idx) in order.permutation().iter().enumerate() {
                let c = pose[joint_idx];
                let rgb = [
                    quantize(255.0 * (c[0] - stats.c_min) / den),
                    quantize(255.0 * (c[1] - stats.c_min) / den),
                    quantize(255.0 * (c[2] - stats.c_min) / den),
                ];
                img.set_pixel(p * JOINTS_PER_PERSON + i, col, rgb);
            }
        }
    }
    Ok(img)
}

/// Encodes with the translation- and scale-invariant mapping. For each
/// person, each channel is shifted by that person's per-channel minimum
/// (taken over the frames where the person is present) and all three
/// channels are divided by the largest of the three channel ranges:
/// `floor(255 * (c - min_k) / max_k(range_k))`.
///
/// A person whose pose never varies (all three ranges zero) cannot be
/// normalized; their rows are left all-zero and a warning is logged.
pub fn encode_invariant(seq: &SkeletonSequence, order: &JointOrder) -> Result<ActionImage> {
    let mut img = blank_image(seq)?;
    for p in 0..img.persons_encoded {
        let mut mins = [f64::INFINITY; 3];
        let mut maxs = [f64::NEG_INFINITY; 3];
        let mut present = false;
        for frame in &seq.frames {
            let Some(pose) = &frame.persons[p] else { continue };
            present = true;
            for joint in pose.iter() {
                for k in 0..3 {
                    mins[k] = mins[k].min(joint[k]);
                    maxs[k] = maxs[k].max(joint[k]);
                }
            }
        }
        if !present {
            continue;
        }
        let den = (0..3).map(|k| maxs[k] - mins[k]).fold(0.0f64, f64::max);
        if den == 0.0 {
            log::warn!(
                "sequence {:?}: person {} has a constant pose; rows left zero",
                seq.source_id,
                p + 1
            );
            continue;
        }
        for (col, frame) in seq.frames.iter().enumerate() {
            let Some(pose) = &frame.persons[p] else { continue };
            for (i, &joint_idx) in order.permutation().iter().enumerate() {
                let c = pose[joint_idx];
                let rgb = [
                    quantize(255.0 * (c[0] - mins[0]) / den),
                    quantize(255.0 * (c[1] - mins[1]) / den),
                    quantize(255.0 * (c[2] - mins[2]) / den),
                ];
                img.set_pixel(p * JOINTS_PER_PERSON + i, col, rgb);
            }
        }
    }
    Ok(img)
}

/// Resamples to `target_w` columns with nearest-neighbor sampling: target
/// column `c` copies source column `floor((c + 0.5) * width / target_w)`.
/// The column-to-frame map is rescaled to match.
pub fn resample_width(img: &ActionImage, target_w: usize) -> Result<ActionImage> {
    if target_w == 0 {
        return Err(Error::Validation("cannot resample to zero width".to_string()));
    }
    let ratio = img.width as f64 / target_w as f64;
    let mut out = ActionImage {
        pixels: vec![0u8; img.height * target_w * 3],
        height: img.height,
        width: target_w,
        rows_per_person: img.rows_per_person,
        persons_encoded: img.persons_encoded,
        col_to_frame: ColToFrame {
            scale: img.col_to_frame.scale * ratio,
            offset: 0.0,
        },
        source_len: img.source_len,
    };
    // Same continuous time map, re-expressed for the new column width.
    out.col_to_frame.offset = img.frame_intercept() + 0.5 * out.col_to_frame.scale - 0.5;
    for c in 0..target_w {
        let src = (((c as f64 + 0.5) * ratio).floor() as usize).min(img.width - 1);
        for r in 0..img.height {
            let rgb = img.pixel(r, src);
            out.set_pixel(r, c, rgb);
        }
    }
    Ok(out)
}

/// Extracts columns `[c0, c1)`, shifting the column-to-frame map so the crop
/// still reports correct source frames.
pub fn crop_cols(img: &ActionImage, c0: usize, c1: usize) -> Result<ActionImage> {
    if c0 >= c1 || c1 > img.width {
        return Err(Error::Validation(format!(
            "crop [{}, {}) invalid for width {}",
            c0, c1, img.width
        )));
    }
    let w = c1 - c0;
    let mut out = ActionImage {
        pixels: vec![0u8; img.height * w * 3],
        height: img.height,
        width: w,
        rows_per_person: img.rows_per_person,
        persons_encoded: img.persons_encoded,
        col_to_frame: ColToFrame {
            scale: img.col_to_frame.scale,
            offset: img.col_to_frame.offset + img.col_to_frame.scale * c0 as f64,
        },
        source_len: img.source_len,
    };
    for c in 0..w {
        for r in 0..img.height {
            let rgb = img.pixel(r, c0 + c);
            out.set_pixel(r, c, rgb);
        }
    }
    Ok(out)
}
