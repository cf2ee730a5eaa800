//! Post-processing and scoring: decode raw head outputs into scored frame
//! intervals, suppress near-duplicates per class, and score detection sets
//! with interval-IoU precision/recall and interpolated mean average
//! precision.

use crate::boxes::{decode_offsets, iou_interval, BBox, BoxOffsets};
use crate::encoding::ActionImage;
use crate::error::{Error, Result};
use crate::loss::softmax;
use crate::skeleton::GroundTruthSegment;

/// A scored temporal detection: frames `[start, end)` of one action class
/// (0-based label).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub label: usize,
    pub score: f64,
    pub start: usize,
    pub end: usize,
}

/// One point of a ranked precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Total order used wherever detections are ranked: score descending, ties
/// by label, then start, then end.
fn rank_cmp(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.label.cmp(&b.label))
        .then(a.start.cmp(&b.start))
        .then(a.end.cmp(&b.end))
}

/// Turn flattened network outputs into pre-NMS detections. Confidences are
/// softmaxed per prior; every non-background class with probability above
/// `conf_threshold` yields a candidate whose decoded box is clipped to the
/// image, projected through the image's column-to-frame map, and rounded to
/// whole frames. The `top_k` highest-scoring candidates are returned.
pub fn decode_detections(
    loc: &[f64],
    conf: &[f64],
    priors: &[BBox],
    img: &ActionImage,
    num_classes: usize,
    conf_threshold: f64,
    top_k: usize,
) -> Result<Vec<Detection>> {
    let slots = num_classes + 1;
    if loc.len() != 4 * priors.len() || conf.len() != slots * priors.len() {
        return Err(Error::Shape(format!(
            "{} loc and {} conf values for {} priors with {} classes",
            loc.len(),
            conf.len(),
            priors.len(),
            num_classes
        )));
    }
    let frames = img.source_len;
    if frames == 0 {
        return Err(Error::Validation("image maps to an empty sequence".to_string()));
    }
    let w = img.width as f64;
    let mut out = Vec::new();
    for (i, prior) in priors.iter().enumerate() {
        let probs = softmax(&conf[slots * i..slots * (i + 1)]);
        let best: f64 = probs[1..].iter().cloned().fold(0.0, f64::max);
        if best <= conf_threshold {
            continue;
        }
        let offsets = BoxOffsets {
            t_cx: loc[4 * i],
            t_cy: loc[4 * i + 1],
            t_w: loc[4 * i + 2],
            t_h: loc[4 * i + 3],
        };
        let b = decode_offsets(prior, &offsets);
        let x0 = (b.cx - 0.5 * b.w).clamp(0.0, 1.0);
        let x1 = (b.cx + 0.5 * b.w).clamp(0.0, 1.0);
        if x1 <= x0 {
            continue;
        }
        let t0 = img.frame_time_of_x(x0 * w);
        let t1 = img.frame_time_of_x(x1 * w);
        let start = (t0.round().max(0.0) as usize).min(frames - 1);
        let mut end = (t1.round().max(0.0) as usize).min(frames);
        if end <= start {
            end = start + 1;
        }
        for (k, &p) in probs.iter().enumerate().skip(1) {
            if p > conf_threshold {
                out.push(Detection { label: k - 1, score: p, start, end });
            }
        }
    }
    out.sort_by(rank_cmp);
    out.truncate(top_k);
    Ok(out)
}

/// Greedy per-class non-maximum suppression: visit each class's detections
/// by score (ties: earlier start, then lower index), keep a detection unless
/// its interval IoU with an already-kept one strictly exceeds `iou_thresh`.
/// The surviving set is returned sorted by score descending.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut labels: Vec<usize> = dets.iter().map(|d| d.label).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut kept = Vec::new();
    for label in labels {
        let mut order: Vec<usize> =
            (0..dets.len()).filter(|&i| dets[i].label == label).collect();
        order.sort_by(|&a, &b| {
            dets[b]
                .score
                .partial_cmp(&dets[a].score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(dets[a].start.cmp(&dets[b].start))
                .then(a.cmp(&b))
        });
        let mut class_kept: Vec<usize> = Vec::new();
        for i in order {
            let x = (dets[i].start as f64, dets[i].end as f64);
            let suppressed = class_kept.iter().any(|&j| {
                iou_interval(x, (dets[j].start as f64, dets[j].end as f64)) > iou_thresh
            });
            if !suppressed {
                class_kept.push(i);
            }
        }
        kept.extend(class_kept.into_iter().map(|i| dets[i]));
    }
    kept.sort_by(rank_cmp);
    kept
}

/// A per-class scoring query pooled over videos: detections and ground-truth
/// intervals tagged with the video they came from, so a detection can only
/// claim ground truth from its own video.
#[derive(Debug, Clone, Default)]
pub struct ClassQuery {
    /// (video index, detection)
    pub dets: Vec<(usize, Detection)>,
    /// (video index, label, start, end)
    pub gts: Vec<(usize, usize, usize, usize)>,
}

/// Ranked precision/recall for one query: detections are visited best score
/// first; a detection is a true positive iff it has interval IoU strictly
/// above `theta` with an unclaimed same-video, same-label ground truth
/// (claiming the highest-IoU one). One PR point is emitted per rank.
pub fn query_precision_recall(query: &ClassQuery, theta: f64) -> Vec<PRPoint> {
    let m = query.gts.len();
    let mut order: Vec<usize> = (0..query.dets.len()).collect();
    order.sort_by(|&a, &b| {
        rank_cmp(&query.dets[a].1, &query.dets[b].1).then(a.cmp(&b))
    });
    let mut claimed = vec![false; m];
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (rank, &di) in order.iter().enumerate() {
        let (video, det) = &query.dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, &(gv, glabel, gs, ge)) in query.gts.iter().enumerate() {
            if claimed[gi] || gv != *video || glabel != det.label {
                continue;
            }
            let iou = iou_interval(
                (det.start as f64, det.end as f64),
                (gs as f64, ge as f64),
            );
            if iou > theta && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            claimed[gi] = true;
            tp += 1;
        }
        points.push(PRPoint {
            recall: if m == 0 { 0.0 } else { tp as f64 / m as f64 },
            precision: tp as f64 / (rank + 1) as f64,
        });
    }
    points
}

/// Precision/recall over plain detection and ground-truth lists (one video).
pub fn precision_recall(
    dets: &[Detection],
    gts: &[GroundTruthSegment],
    theta: f64,
) -> Vec<PRPoint> {
    let query = ClassQuery {
        dets: dets.iter().map(|&d| (0, d)).collect(),
        gts: gts.iter().map(|g| (0, g.label, g.start, g.end)).collect(),
    };
    query_precision_recall(&query, theta)
}

/// Highest precision among PR points whose recall is at least `r`; 0 when no
/// point reaches that recall.
pub fn interpolated_precision(points: &[PRPoint], r: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.recall >= r)
        .map(|p| p.precision)
        .fold(0.0, f64::max)
}

/// Interpolated average precision of one query: the mean of the
/// interpolated precisions at recall levels k/m for k = 1..m, where m is the
/// query's ground-truth count. `None` when the query has no ground truth.
pub fn average_precision(query: &ClassQuery, theta: f64) -> Option<f64> {
    let m = query.gts.len();
    if m == 0 {
        return None;
    }
    let points = query_precision_recall(query, theta);
    let sum: f64 = (1..=m)
        .map(|k| interpolated_precision(&points, k as f64 / m as f64))
        .sum();
    Some(sum / m as f64)
}

/// Mean of the per-query average precisions. Queries without ground truth
/// are excluded; it is an error if every query is empty.
pub fn mean_average_precision(queries: &[ClassQuery], theta: f64) -> Result<f64> {
    let aps: Vec<f64> = queries.iter().filter_map(|q| average_precision(q, theta)).collect();
    if aps.is_empty() {
        return Err(Error::Validation(
            "no query has any ground truth; mAP is undefined".to_string(),
        ));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Partition detections and ground truths by class into scoring queries,
/// pooling across videos. Inputs are (video index, item) pairs.
pub fn build_class_queries(
    dets: &[(usize, Detection)],
    gts: &[(usize, GroundTruthSegment)],
    num_classes: usize,
) -> Vec<ClassQuery> {
    let mut queries = vec![ClassQuery::default(); num_classes];
    for &(video, det) in dets {
        if det.label < num_classes {
            queries[det.label].dets.push((video, det));
        }
    }
    for (video, gt) in gts {
        if gt.label < num_classes {
            queries[gt.label].gts.push((*video, gt.label, gt.start, gt.end));
        }
    }
    queries
}

/// Render detections as CSV (`video_id,label,start_frame,end_frame,score`),
/// with labels 1-based on disk like the label files.
pub fn render_detections_csv(rows: &[(String, Detection)]) -> String {
    let mut out = String::from("video_id,label,start_frame,end_frame,score\n");
    for (video, d) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            video,
            d.label + 1,
            d.start,
            d.end,
            d.score
        ));
    }
    out
}

/// Parse the CSV produced by [`render_detections_csv`].
pub fn parse_detections_csv(text: &str) -> Result<Vec<(String, Detection)>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "video_id,label,start_frame,end_frame,score" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing detections CSV header".to_string(),
            })
        }
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let parse_num = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad {}: {:?}", what, s),
            })
        };
        let label = parse_num(fields[1], "label")?;
        if label == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "labels are 1-based on disk".to_string(),
            });
        }
        let start = parse_num(fields[2], "start_frame")?;
        let end = parse_num(fields[3], "end_frame")?;
        if start >= end {
            return Err(Error::Parse {
                line: line_no,
                message: format!("empty interval [{}, {})", start, end),
            });
        }
        let score: f64 = fields[4].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad score: {:?}", fields[4]),
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("score {} outside [0, 1]", score),
            });
        }
        rows.push((
            fields[0].trim().to_string(),
            Detection { label: label - 1, score, start, end },
        ));
    }
    Ok(rows)
}
