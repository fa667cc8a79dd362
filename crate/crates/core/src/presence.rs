//! Person presence from two independent detectors.
//!
//! A frame counts as a human appearance only when both the pose detector and
//! the object detector report a person probability strictly above one half.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::RawFrame;
use crate::geom::{BBox, BoundsAccumulator};

/// Both detectors must strictly exceed this probability.
pub const PRESENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum PresenceError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub joint: u8,
    pub x: f32,
    pub y: f32,
    pub confidence: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub probability: f64,
    pub bbox: Option<BBox>,
    pub keypoints: Option<Vec<Keypoint>>,
    /// Set when the detector failed and reported probability 0 instead.
    pub diagnostic: Option<String>,
}

impl DetectorOutput {
    pub fn nothing() -> Self {
        Self::default()
    }

    pub fn failure(reason: impl Into<String>) -> Self {
        Self { diagnostic: Some(reason.into()), ..Self::default() }
    }

    /// Checks the output invariants against the frame it came from.
    pub fn check(&self, width: u32, height: u32) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.probability) || self.probability.is_nan() {
            return Err(format!("probability {} outside [0, 1]", self.probability));
        }
        if let Some(b) = &self.bbox {
            if b.is_empty() || !b.fits_within(width, height) {
                return Err(format!("bbox {b:?} outside {width}x{height} frame"));
            }
        }
        if let Some(kps) = &self.keypoints {
            if kps.iter().any(|k| !(0.0..=1.0).contains(&k.confidence)) {
                return Err("keypoint confidence outside [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Simulator sidecar: what a scenario-channel detector sees for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub timestamp_ms: u64,
    /// Ground-truth occupancy; detectors must not read it.
    pub present: bool,
    pub p_pose: f64,
    pub p_obj: f64,
    pub bbox: Option<BBox>,
    #[serde(default)]
    pub keypoints: Vec<Keypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorRole {
    Pose,
    Object,
}

/// A person detector plug-in. Returns every candidate it finds; the
/// pipeline keeps the most probable one.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, frame: &RawFrame, sidecar: Option<&SceneSample>) -> Vec<DetectorOutput>;
}

/// Reads the simulator sidecar channel instead of pixels.
#[derive(Debug, Clone)]
pub struct ScenarioDetector {
    role: DetectorRole,
}

impl ScenarioDetector {
    pub fn new(role: DetectorRole) -> Self {
        Self { role }
    }
}

impl Detector for ScenarioDetector {
    fn name(&self) -> &str {
        "scenario"
    }

    fn detect(&self, _frame: &RawFrame, sidecar: Option<&SceneSample>) -> Vec<DetectorOutput> {
        let Some(s) = sidecar else {
            return vec![DetectorOutput::failure("scenario detector has no sidecar sample")];
        };
        let (probability, keypoints) = match self.role {
            DetectorRole::Pose => (s.p_pose, (!s.keypoints.is_empty()).then(|| s.keypoints.clone())),
            DetectorRole::Object => (s.p_obj, None),
        };
        vec![DetectorOutput { probability, bbox: s.bbox, keypoints, diagnostic: None }]
    }
}

/// Naive foreground-blob detector for fixture frames. A pixel is foreground
/// when its summed RGB distance from the frame's median colour exceeds
/// `contrast`; each 4-connected foreground component is one candidate with
/// probability `min(1, area / min_area)`.
#[derive(Debug, Clone)]
pub struct BlobDetector {
    pub contrast: u32,
    pub min_area: u32,
}

impl Default for BlobDetector {
    fn default() -> Self {
        Self { contrast: 90, min_area: 64 }
    }
}

fn median_colour(frame: &RawFrame) -> [u8; 3] {
    let mut hist = [[0u32; 256]; 3];
    for px in frame.rgb().chunks_exact(3) {
        for c in 0..3 {
            hist[c][px[c] as usize] += 1;
        }
    }
    let half = (frame.width() * frame.height()).div_ceil(2);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let mut seen = 0;
        for (v, n) in hist[c].iter().enumerate() {
            seen += n;
            if seen >= half {
                out[c] = v as u8;
                break;
            }
        }
    }
    out
}

impl Detector for BlobDetector {
    fn name(&self) -> &str {
        "blob"
    }

    fn detect(&self, frame: &RawFrame, _sidecar: Option<&SceneSample>) -> Vec<DetectorOutput> {
        let (w, h) = (frame.width() as usize, frame.height() as usize);
        if w == 0 || h == 0 {
            return Vec::new();
        }
        let bg = median_colour(frame);
        let fg: Vec<bool> = frame
            .rgb()
            .chunks_exact(3)
            .map(|px| (0..3).map(|c| px[c].abs_diff(bg[c]) as u32).sum::<u32>() > self.contrast)
            .collect();
        let mut seen = vec![false; w * h];
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        for start in 0..w * h {
            if !fg[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut area = 0u32;
            let mut bounds = BoundsAccumulator::default();
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                area += 1;
                bounds.add(x as u32, y as u32);
                let mut visit = |j: usize| {
                    if fg[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            out.push(DetectorOutput {
                probability: (area as f64 / self.min_area.max(1) as f64).min(1.0),
                bbox: bounds.finish(),
                keypoints: None,
                diagnostic: None,
            });
        }
        out
    }
}

/// The most probable valid candidate, or probability 0 (with a diagnostic
/// if the detector produced something invalid).
fn best_candidate(frame: &RawFrame, candidates: Vec<DetectorOutput>) -> DetectorOutput {
    let mut failure = None;
    let mut best: Option<DetectorOutput> = None;
    for c in candidates {
        if let Err(reason) = c.check(frame.width(), frame.height()) {
            failure.get_or_insert(reason);
            continue;
        }
        if c.diagnostic.is_some() && c.probability == 0.0 {
            failure.get_or_insert_with(|| c.diagnostic.clone().unwrap_or_default());
            continue;
        }
        if best.as_ref().is_none_or(|b| c.probability > b.probability) {
            best = Some(c);
        }
    }
    match (best, failure) {
        (Some(b), _) => b,
        (None, Some(reason)) => DetectorOutput::failure(reason),
        (None, None) => DetectorOutput::nothing(),
    }
}

/// Run both detectors on one frame, keeping the single most probable
/// detection from each (single-occupancy model).
pub fn run_detectors(
    frame: &RawFrame,
    sidecar: Option<&SceneSample>,
    pose_detector: &dyn Detector,
    obj_detector: &dyn Detector,
) -> (DetectorOutput, DetectorOutput) {
    let pose = best_candidate(frame, pose_detector.detect(frame, sidecar));
    let obj = best_candidate(frame, obj_detector.detect(frame, sidecar));
    (pose, obj)
}

pub fn fuse_presence(p_pose: f64, p_obj: f64) -> Result<bool, PresenceError> {
    for p in [p_pose, p_obj] {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(PresenceError::ProbabilityRange(p));
        }
    }
    Ok(p_pose > PRESENCE_THRESHOLD && p_obj > PRESENCE_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceRecord {
    pub timestamp_ms: u64,
    pub present: bool,
    pub p_pose: f64,
    pub p_obj: f64,
    pub body_bbox: Option<BBox>,
    pub keypoints: Option<Vec<Keypoint>>,
}

impl PresenceRecord {
    /// Fuse two detector outputs. Outputs have already been validated by
    /// [`run_detectors`], so probabilities are in range.
    ///
    /// Body box precedence: object detector, then pose detector, then the
    /// bounds of the keypoints, then the whole frame.
    pub fn fuse(frame: &RawFrame, pose: &DetectorOutput, obj: &DetectorOutput) -> Self {
        let present = fuse_presence(pose.probability, obj.probability).unwrap_or(false);
        let keypoints = pose.keypoints.clone().or_else(|| obj.keypoints.clone());
        let body_bbox = if present {
            obj.bbox
                .or(pose.bbox)
                .or_else(|| keypoints.as_deref().and_then(|k| keypoint_bounds(k, frame.width(), frame.height())))
                .or(Some(BBox::new(0, 0, frame.width(), frame.height())))
        } else {
            None
        };
        Self {
            timestamp_ms: frame.timestamp_ms(),
            present,
            p_pose: pose.probability,
            p_obj: obj.probability,
            body_bbox,
            keypoints: if present { keypoints } else { None },
        }
    }
}

fn keypoint_bounds(kps: &[Keypoint], width: u32, height: u32) -> Option<BBox> {
    let mut acc = BoundsAccumulator::default();
    for k in kps.iter().filter(|k| k.confidence > 0.0) {
        let x = k.x.clamp(0.0, width.saturating_sub(1) as f32) as u32;
        let y = k.y.clamp(0.0, height.saturating_sub(1) as f32) as u32;
        acc.add(x, y);
    }
    acc.finish()
}

type DetectorFactory = Arc<dyn Fn(DetectorRole) -> Box<dyn Detector> + Send + Sync>;

/// Named detector plug-ins. `"scenario"` and `"blob"` are always present.
#[derive(Clone)]
pub struct DetectorRegistry {
    factories: BTreeMap<String, DetectorFactory>,
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("scenario", |role| Box::new(ScenarioDetector::new(role)));
        r.register("blob", |_| Box::new(BlobDetector::default()));
        r
    }
}

impl DetectorRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(DetectorRole) -> Box<dyn Detector> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn load(&self, name: &str, role: DetectorRole) -> Result<Box<dyn Detector>, PresenceError> {
        self.factories
            .get(name)
            .map(|f| f(role))
            .ok_or_else(|| PresenceError::UnknownDetector(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dark_frame(w: u32, h: u32) -> Vec<u8> {
        vec![10; (w * h * 3) as usize]
    }

    fn paint(buf: &mut [u8], w: u32, region: BBox, value: u8) {
        for y in region.y..region.bottom() {
            for x in region.x..region.right() {
                let i = ((y * w + x) * 3) as usize;
                buf[i..i + 3].fill(value);
            }
        }
    }

    #[test]
    fn fusion_boundaries() {
        assert_eq!(fuse_presence(0.9, 0.9), Ok(true));
        assert_eq!(fuse_presence(0.5, 0.9), Ok(false));
        assert_eq!(fuse_presence(0.51, 0.49), Ok(false));
        assert_eq!(fuse_presence(1.2, 0.9), Err(PresenceError::ProbabilityRange(1.2)));
        assert!(fuse_presence(f64::NAN, 0.9).is_err());
    }

    #[test]
    fn scenario_detector_passes_truth_through() {
        let frame = RawFrame::new(40, 64, 48, dark_frame(64, 48), None).unwrap();
        let truth = BBox::new(10, 5, 16, 30);
        let sample = SceneSample {
            timestamp_ms: 40,
            present: true,
            p_pose: 1.0,
            p_obj: 1.0,
            bbox: Some(truth),
            keypoints: vec![],
        };
        let pose = ScenarioDetector::new(DetectorRole::Pose);
        let obj = ScenarioDetector::new(DetectorRole::Object);
        let (p, o) = run_detectors(&frame, Some(&sample), &pose, &obj);
        assert_eq!(o.probability, 1.0);
        assert_eq!(o.bbox, Some(truth));
        let rec = PresenceRecord::fuse(&frame, &p, &o);
        assert!(rec.present);
        assert_eq!(rec.body_bbox, Some(truth));
    }

    #[test]
    fn scenario_detector_without_sidecar_reports_failure() {
        let frame = RawFrame::new(0, 8, 8, dark_frame(8, 8), None).unwrap();
        let det = ScenarioDetector::new(DetectorRole::Object);
        let (_, o) = run_detectors(&frame, None, &det, &det);
        assert_eq!(o.probability, 0.0);
        assert!(o.diagnostic.is_some());
    }

    #[test]
    fn invalid_candidate_becomes_failure() {
        struct Broken;
        impl Detector for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn detect(&self, _: &RawFrame, _: Option<&SceneSample>) -> Vec<DetectorOutput> {
                vec![DetectorOutput { probability: 0.9, bbox: Some(BBox::new(60, 0, 10, 10)), ..Default::default() }]
            }
        }
        let frame = RawFrame::new(0, 64, 48, dark_frame(64, 48), None).unwrap();
        let (p, _) = run_detectors(&frame, None, &Broken, &BlobDetector::default());
        assert_eq!(p.probability, 0.0);
        assert!(p.diagnostic.unwrap().contains("outside"));
    }

    #[test]
    fn blob_on_empty_frame() {
        let frame = RawFrame::new(0, 64, 48, dark_frame(64, 48), None).unwrap();
        let det = BlobDetector::default();
        let (p, o) = run_detectors(&frame, None, &det, &det);
        assert_eq!(p.probability, 0.0);
        assert_eq!(o.bbox, None);
        assert!(!PresenceRecord::fuse(&frame, &p, &o).present);
    }

    #[test]
    fn blob_finds_bright_region() {
        let (w, h) = (160, 120);
        let mut buf = dark_frame(w, h);
        let region = BBox::new(37, 21, 40, 80);
        paint(&mut buf, w, region, 230);
        let frame = RawFrame::new(0, w, h, buf, None).unwrap();
        let det = BlobDetector::default();
        let (_, o) = run_detectors(&frame, None, &det, &det);
        let b = o.bbox.unwrap();
        assert_eq!(o.probability, 1.0);
        for (got, want) in [(b.x, region.x), (b.y, region.y), (b.right(), region.right()), (b.bottom(), region.bottom())] {
            assert!(got.abs_diff(want) <= 2, "{b:?} vs {region:?}");
        }
    }

    #[test]
    fn blob_keeps_largest_person() {
        let (w, h) = (100, 80);
        let mut buf = dark_frame(w, h);
        paint(&mut buf, w, BBox::new(2, 2, 5, 5), 230);
        paint(&mut buf, w, BBox::new(40, 10, 20, 40), 230);
        let frame = RawFrame::new(0, w, h, buf, None).unwrap();
        let det = BlobDetector::default();
        let (_, o) = run_detectors(&frame, None, &det, &det);
        assert_eq!(o.bbox, Some(BBox::new(40, 10, 20, 40)));
    }

    #[test]
    fn object_bbox_wins_over_pose_bbox() {
        let frame = RawFrame::new(0, 64, 48, dark_frame(64, 48), None).unwrap();
        let pose = DetectorOutput { probability: 0.8, bbox: Some(BBox::new(0, 0, 4, 4)), ..Default::default() };
        let obj = DetectorOutput { probability: 0.8, bbox: Some(BBox::new(10, 10, 8, 8)), ..Default::default() };
        assert_eq!(PresenceRecord::fuse(&frame, &pose, &obj).body_bbox, Some(BBox::new(10, 10, 8, 8)));
        let obj = DetectorOutput { probability: 0.8, ..Default::default() };
        assert_eq!(PresenceRecord::fuse(&frame, &pose, &obj).body_bbox, Some(BBox::new(0, 0, 4, 4)));
        let pose = DetectorOutput {
            probability: 0.8,
            keypoints: Some(vec![
                Keypoint { joint: 0, x: 3.0, y: 4.0, confidence: 0.9 },
                Keypoint { joint: 1, x: 9.0, y: 20.0, confidence: 0.9 },
            ]),
            ..Default::default()
        };
        assert_eq!(PresenceRecord::fuse(&frame, &pose, &obj).body_bbox, Some(BBox::new(3, 4, 7, 17)));
    }

    #[test]
    fn registry_lookup() {
        let reg = DetectorRegistry::default();
        assert_eq!(reg.load("blob", DetectorRole::Pose).unwrap().name(), "blob");
        assert!(matches!(reg.load("yolov5", DetectorRole::Object), Err(PresenceError::UnknownDetector(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn fusion_is_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(fuse_presence(a, b), fuse_presence(b, a));
        }

        #[test]
        fn fusion_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, da in 0.0f64..=1.0, db in 0.0f64..=1.0) {
            let raised = fuse_presence((a + da).min(1.0), (b + db).min(1.0)).unwrap();
            prop_assert!(!fuse_presence(a, b).unwrap() || raised);
        }

        #[test]
        fn present_implies_both_above_half(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            if fuse_presence(a, b).unwrap() {
                prop_assert!(a.min(b) > 0.5);
            }
        }
    }
}
