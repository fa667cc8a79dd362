//! Sitting / standing / other classification of a 2D skeleton.
//!
//! Classifiers are plug-ins looked up by name. The shipped
//! `geometric-baseline` classifier uses two similarity-invariant cues: the
//! hip-knee-ankle angle and the ratio of torso height to leg height.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::presence::Keypoint;

#[derive(Debug, Error, PartialEq)]
pub enum PostureError {
    #[error("unknown posture classifier {0:?}")]
    UnknownClassifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostureClass {
    Sitting,
    Standing,
    Other,
}

impl PostureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Sitting => "sitting",
            Self::Standing => "standing",
            Self::Other => "other",
        }
    }
}

impl std::str::FromStr for PostureClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sitting" => Ok(Self::Sitting),
            "standing" => Ok(Self::Standing),
            "other" => Ok(Self::Other),
            _ => Err(format!("unknown posture {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostureLabel {
    pub label: PostureClass,
    pub confidence: f64,
}

/// The 13 joints of a skeleton, in keypoint-id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Joint {
    Head = 0,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

pub const JOINT_COUNT: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPosition {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Skeleton {
    pub joints: [Option<JointPosition>; JOINT_COUNT],
}

impl Skeleton {
    pub fn get(&self, j: Joint) -> Option<JointPosition> {
        self.joints[j as usize]
    }

    pub fn set(&mut self, j: Joint, x: f64, y: f64, confidence: f64) {
        self.joints[j as usize] = Some(JointPosition { x, y, confidence });
    }

    /// Keypoints with ids outside the joint table are ignored.
    pub fn from_keypoints(kps: &[Keypoint]) -> Self {
        let mut s = Self::default();
        for k in kps {
            if let Some(slot) = s.joints.get_mut(k.joint as usize) {
                *slot = Some(JointPosition { x: k.x as f64, y: k.y as f64, confidence: k.confidence as f64 });
            }
        }
        s
    }

    pub fn to_keypoints(&self) -> Vec<Keypoint> {
        self.joints
            .iter()
            .enumerate()
            .filter_map(|(i, j)| {
                j.map(|p| Keypoint { joint: i as u8, x: p.x as f32, y: p.y as f32, confidence: p.confidence as f32 })
            })
            .collect()
    }

    /// Apply `(x, y) -> (s*x + a, s*y + b)` to every joint.
    pub fn transformed(&self, s: f64, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        for p in out.joints.iter_mut().flatten() {
            p.x = s * p.x + a;
            p.y = s * p.y + b;
        }
        out
    }
}

pub trait PostureClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, skeleton: &Skeleton) -> PostureLabel;
}

/// Thresholds of the geometric baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometricBaseline {
    pub min_leg_confidence: f64,
    pub standing_min_knee_deg: f64,
    pub standing_max_ratio: f64,
    pub sitting_max_knee_deg: f64,
    pub sitting_min_ratio: f64,
}

impl Default for GeometricBaseline {
    fn default() -> Self {
        Self {
            min_leg_confidence: 0.3,
            standing_min_knee_deg: 150.0,
            standing_max_ratio: 0.9,
            sitting_max_knee_deg: 120.0,
            sitting_min_ratio: 1.3,
        }
    }
}

const LEGS: [(Joint, Joint, Joint); 2] = [
    (Joint::LeftHip, Joint::LeftKnee, Joint::LeftAnkle),
    (Joint::RightHip, Joint::RightKnee, Joint::RightAnkle),
];

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn mean_y(s: &Skeleton, joints: [Joint; 2]) -> Option<f64> {
    mean(joints.iter().filter_map(|&j| s.get(j)).map(|p| p.y))
}

/// Interior angle at `b` in degrees.
fn angle_deg(a: JointPosition, b: JointPosition, c: JointPosition) -> Option<f64> {
    let (ux, uy) = (a.x - b.x, a.y - b.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    let norm = (ux * ux + uy * uy).sqrt() * (vx * vx + vy * vy).sqrt();
    if norm == 0.0 {
        return None;
    }
    Some(((ux * vx + uy * vy) / norm).clamp(-1.0, 1.0).acos().to_degrees())
}

impl GeometricBaseline {
    /// Mean hip-knee-ankle angle over the legs that have all three joints.
    pub fn knee_angle(skeleton: &Skeleton) -> Option<f64> {
        mean(LEGS.iter().filter_map(|&(h, k, a)| {
            angle_deg(skeleton.get(h)?, skeleton.get(k)?, skeleton.get(a)?)
        }))
    }

    /// `|shoulder_y - hip_y| / |hip_y - ankle_y|`, each side averaged.
    pub fn torso_leg_ratio(skeleton: &Skeleton) -> Option<f64> {
        let shoulder = mean_y(skeleton, [Joint::LeftShoulder, Joint::RightShoulder])?;
        let hip = mean_y(skeleton, [Joint::LeftHip, Joint::RightHip])?;
        let ankle = mean_y(skeleton, [Joint::LeftAnkle, Joint::RightAnkle])?;
        let ratio = (shoulder - hip).abs() / (hip - ankle).abs();
        (!ratio.is_nan()).then_some(ratio)
    }

    fn leg_confidence(skeleton: &Skeleton) -> f64 {
        let joints = LEGS.iter().flat_map(|&(h, k, a)| [h, k, a]);
        let total: f64 = joints.map(|j| skeleton.get(j).map_or(0.0, |p| p.confidence)).sum();
        total / 6.0
    }
}

impl PostureClassifier for GeometricBaseline {
    fn name(&self) -> &str {
        "geometric-baseline"
    }

    fn classify(&self, skeleton: &Skeleton) -> PostureLabel {
        let other = |confidence: f64| PostureLabel { label: PostureClass::Other, confidence };
        if skeleton.get(Joint::LeftHip).is_none() && skeleton.get(Joint::RightHip).is_none() {
            return other(0.0);
        }
        let leg_conf = Self::leg_confidence(skeleton);
        if leg_conf < self.min_leg_confidence {
            return other(1.0 - leg_conf);
        }
        let angle = Self::knee_angle(skeleton);
        let ratio = Self::torso_leg_ratio(skeleton);
        let standing = matches!((angle, ratio), (Some(a), Some(r))
            if a >= self.standing_min_knee_deg && r <= self.standing_max_ratio);
        let sitting = angle.is_some_and(|a| a <= self.sitting_max_knee_deg)
            || ratio.is_some_and(|r| r >= self.sitting_min_ratio);
        let label = if standing {
            PostureClass::Standing
        } else if sitting {
            PostureClass::Sitting
        } else {
            PostureClass::Other
        };
        PostureLabel { label, confidence: leg_conf }
    }
}

pub type ClassifierHandle = Arc<dyn PostureClassifier>;

/// Named classifier plug-ins; `geometric-baseline` is always registered.
#[derive(Clone)]
pub struct ClassifierRegistry {
    entries: BTreeMap<String, ClassifierHandle>,
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        let mut entries: BTreeMap<String, ClassifierHandle> = BTreeMap::new();
        entries.insert("geometric-baseline".into(), Arc::new(GeometricBaseline::default()));
        Self { entries }
    }
}

impl ClassifierRegistry {
    pub fn register(&mut self, name: &str, classifier: ClassifierHandle) {
        self.entries.insert(name.to_string(), classifier);
    }

    pub fn load(&self, name: &str) -> Result<ClassifierHandle, PostureError> {
        self.entries.get(name).cloned().ok_or_else(|| PostureError::UnknownClassifier(name.to_string()))
    }
}

/// Load from the default registry.
pub fn load_classifier(name: &str) -> Result<ClassifierHandle, PostureError> {
    ClassifierRegistry::default().load(name)
}
