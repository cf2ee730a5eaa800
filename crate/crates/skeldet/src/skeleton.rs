//! Skeleton sequence and ground-truth types plus the plain-text file formats.
//!
//! A skeleton file holds one frame per line: 150 whitespace-separated floats,
//! i.e. two person slots x 25 joints x (x, y, z) in meters, person-major and
//! joint-major. A person slot whose 75 values are all exactly zero is absent
//! in that frame.
//!
//! A label file holds one action segment per line as CSV:
//! `label,start,end,confidence` with 1-based class labels on disk and frame
//! indices forming the half-open interval `[start, end)`. Labels are 0-based
//! in memory; class 0 on disk is reserved and rejected.

use crate::error::{Error, Result};

/// Number of joints tracked per person (Kinect v2 layout).
pub const JOINTS_PER_PERSON: usize = 25;

/// Number of person slots per frame.
pub const PERSON_SLOTS: usize = 2;

/// Floats per line in a skeleton file.
pub const VALUES_PER_FRAME: usize = PERSON_SLOTS * JOINTS_PER_PERSON * 3;

/// One joint position in meters: `[x, y, z]`.
pub type Joint = [f64; 3];

/// All joints of one person in one frame.
pub type Pose = [Joint; JOINTS_PER_PERSON];

/// One frame: two person slots, each either a full pose or absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub persons: [Option<Pose>; PERSON_SLOTS],
}

impl Frame {
    /// Frame with both person slots absent.
    pub fn empty() -> Self {
        Frame { persons: [None, None] }
    }
}

/// A skeleton video: an ordered list of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<Frame>,
    /// Nominal capture rate in frames per second. Informational only; all
    /// interval arithmetic is in frame units.
    pub frame_rate: f64,
    /// Identifier for reports and detection output, typically the file stem.
    pub source_id: String,
}

impl SkeletonSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One labelled action instance over the half-open frame interval
/// `[start, end)`. `label` is 0-based in memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthSegment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

impl GroundTruthSegment {
    /// Checks the segment against a sequence of `seq_len` frames.
    pub fn validate(&self, seq_len: usize) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Validation(format!(
                "segment [{}, {}) is empty or reversed",
                self.start, self.end
            )));
        }
        if self.end > seq_len {
            return Err(Error::Validation(format!(
                "segment [{}, {}) exceeds sequence length {}",
                self.start, self.end, seq_len
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Validation(format!(
                "segment confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

fn parse_float(token: &str, line: usize) -> Result<f64> {
    token.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("invalid float {:?}", token),
    })
}

/// Parses skeleton file text. Blank lines are ignored; every other line must
/// hold exactly [`VALUES_PER_FRAME`] floats. Errors carry 1-based line
/// numbers.
pub fn parse_skeleton_file(text: &str, source_id: &str) -> Result<SkeletonSequence> {
    let mut frames = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != VALUES_PER_FRAME {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} values per frame, found {}",
                    VALUES_PER_FRAME,
                    tokens.len()
                ),
            });
        }
        let mut values = [0.0f64; VALUES_PER_FRAME];
        for (v, token) in values.iter_mut().zip(&tokens) {
            *v = parse_float(token, line_no)?;
        }
        let mut frame = Frame::empty();
        for (p, slot) in frame.persons.iter_mut().enumerate() {
            let block = &values[p * JOINTS_PER_PERSON * 3..(p + 1) * JOINTS_PER_PERSON * 3];
            if block.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mut pose = [[0.0f64; 3]; JOINTS_PER_PERSON];
            for (j, joint) in pose.iter_mut().enumerate() {
                joint.copy_from_slice(&block[j * 3..j * 3 + 3]);
            }
            *slot = Some(pose);
        }
        frames.push(frame);
    }
    Ok(SkeletonSequence {
        frames,
        frame_rate: 30.0,
        source_id: source_id.to_string(),
    })
}

/// Renders a sequence back to skeleton file text. Absent person slots become
/// 75 zeros. Floats use the shortest representation that round-trips, so
/// parse -> render -> parse is exact.
pub fn render_skeleton_file(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    for frame in &seq.frames {
        let mut first = true;
        for slot in &frame.persons {
            match slot {
                Some(pose) => {
                    for joint in pose.iter() {
                        for &v in joint.iter() {
                            if !first {
                                out.push(' ');
                            }
                            out.push_str(&format!("{}", v));
                            first = false;
                        }
                    }
                }
                None => {
                    for _ in 0..JOINTS_PER_PERSON * 3 {
                        if !first {
                            out.push(' ');
                        }
                        out.push('0');
                        first = false;
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Parses label file text: one `label,start,end,confidence` record per line,
/// 1-based labels on disk. Blank lines are ignored.
pub fn parse_label_file(text: &str) -> Result<Vec<GroundTruthSegment>> {
    let mut segments = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 comma-separated fields, found {}", fields.len()),
            });
        }
        let label_on_disk: i64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid label {:?}", fields[0]),
        })?;
        if label_on_disk < 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label {} is not a positive class id", label_on_disk),
            });
        }
        let start: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid start frame {:?}", fields[1]),
        })?;
        let end: usize = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid end frame {:?}", fields[2]),
        })?;
        if start >= end {
            return Err(Error::Parse {
                line: line_no,
                message: format!("segment [{}, {}) is empty or reversed", start, end),
            });
        }
        let confidence = parse_float(fields[3], line_no)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("confidence {} outside [0, 1]", confidence),
            });
        }
        segments.push(GroundTruthSegment {
            label: (label_on_disk - 1) as usize,
            start,
            end,
            confidence,
        });
    }
    Ok(segments)
}

/// Renders segments to label file text with 1-based labels on disk.
pub fn render_label_file(segments: &[GroundTruthSegment]) -> String {
    let mut out = String::new();
    for seg in segments {
        out.push_str(&format!(
            "{},{},{},{}\n",
            seg.label + 1,
            seg.start,
            seg.end,
            seg.confidence
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_line(p1: f64, p2: Option<f64>) -> String {
        let mut vals = Vec::new();
        for i in 0..75 {
            vals.push(format!("{}", p1 + i as f64 * 0.001));
        }
        match p2 {
            Some(base) => {
                for i in 0..75 {
                    vals.push(format!("{}", base + i as f64 * 0.002));
                }
            }
            None => {
                for _ in 0..75 {
                    vals.push("0".to_string());
                }
            }
        }
        vals.join(" ")
    }

    #[test]
    fn parses_two_person_frame() {
        let text = frame_line(1.0, Some(2.0));
        let seq = parse_skeleton_file(&text, "t").unwrap();
        assert_eq!(seq.len(), 1);
        let f = &seq.frames[0];
        assert!(f.persons[0].is_some());
        assert!(f.persons[1].is_some());
        assert_eq!(f.persons[0].unwrap()[0], [1.0, 1.001, 1.002]);
        assert_eq!(f.persons[1].unwrap()[24], [2.144, 2.146, 2.148]);
    }

    #[test]
    fn all_zero_person_block_is_absent() {
        let text = frame_line(1.0, None);
        let seq = parse_skeleton_file(&text, "t").unwrap();
        assert_eq!(seq.frames[0].persons[1], None);
    }

    #[test]
    fn wrong_value_count_reports_line_number() {
        let good = frame_line(1.0, Some(2.0));
        let text = format!("{}\n1.0 2.0 3.0\n", good);
        let err = parse_skeleton_file(&text, "t").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn bad_float_reports_line_number() {
        let mut line = frame_line(1.0, Some(2.0));
        line = line.replacen("1.001", "oops", 1);
        let err = parse_skeleton_file(&line, "t").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("oops"));
            }
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn skeleton_round_trip_is_exact() {
        let text = format!(
            "{}\n{}\n",
            frame_line(0.12345678901234567, Some(-3.25)),
            frame_line(-0.001, None)
        );
        let seq = parse_skeleton_file(&text, "t").unwrap();
        let rendered = render_skeleton_file(&seq);
        let reparsed = parse_skeleton_file(&rendered, "t").unwrap();
        assert_eq!(seq, reparsed);
    }

    #[test]
    fn label_round_trip_and_indexing() {
        let text = "2,10,25,1\n1,30,31,0.5\n";
        let segs = parse_label_file(text).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].label, 1);
        assert_eq!(segs[0].start, 10);
        assert_eq!(segs[0].end, 25);
        assert_eq!(segs[1].label, 0);
        let rendered = render_label_file(&segs);
        assert_eq!(rendered, text);
    }

    #[test]
    fn label_zero_is_rejected() {
        let err = parse_label_file("0,10,20,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn empty_or_reversed_segment_is_rejected() {
        assert!(parse_label_file("1,10,10,1\n").is_err());
        assert!(parse_label_file("1,20,10,1\n").is_err());
    }

    #[test]
    fn segment_validate_checks_bounds() {
        let seg = GroundTruthSegment { label: 0, start: 5, end: 12, confidence: 1.0 };
        assert!(seg.validate(12).is_ok());
        assert!(seg.validate(11).is_err());
        let bad = GroundTruthSegment { label: 0, start: 5, end: 5, confidence: 1.0 };
        assert!(bad.validate(12).is_err());
    }
}
