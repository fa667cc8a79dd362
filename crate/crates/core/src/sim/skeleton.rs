//! Skeletons posed inside an occupant box, and a labelled corpus built from
//! them for checking posture classifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::BBox;
use crate::posture::{Joint, PostureClass, Skeleton};

/// Fractions of the box: `(joint, fx, fy)`.
type Pose = [(Joint, f64, f64); 13];

const STANDING: Pose = [
    (Joint::Head, 0.50, 0.06),
    (Joint::LeftShoulder, 0.25, 0.20),
    (Joint::RightShoulder, 0.75, 0.20),
    (Joint::LeftElbow, 0.15, 0.36),
    (Joint::RightElbow, 0.85, 0.36),
    (Joint::LeftWrist, 0.12, 0.50),
    (Joint::RightWrist, 0.88, 0.50),
    (Joint::LeftHip, 0.35, 0.52),
    (Joint::RightHip, 0.65, 0.52),
    (Joint::LeftKnee, 0.35, 0.75),
    (Joint::RightKnee, 0.65, 0.75),
    (Joint::LeftAnkle, 0.35, 0.98),
    (Joint::RightAnkle, 0.65, 0.98),
];

// Side view, facing right.
const SITTING: Pose = [
    (Joint::Head, 0.30, 0.07),
    (Joint::LeftShoulder, 0.27, 0.25),
    (Joint::RightShoulder, 0.33, 0.25),
    (Joint::LeftElbow, 0.45, 0.45),
    (Joint::RightElbow, 0.50, 0.45),
    (Joint::LeftWrist, 0.60, 0.50),
    (Joint::RightWrist, 0.65, 0.50),
    (Joint::LeftHip, 0.28, 0.68),
    (Joint::RightHip, 0.32, 0.68),
    (Joint::LeftKnee, 0.75, 0.66),
    (Joint::RightKnee, 0.78, 0.66),
    (Joint::LeftAnkle, 0.75, 0.97),
    (Joint::RightAnkle, 0.78, 0.97),
];

// Lying on the floor, head to the left.
const LYING: Pose = [
    (Joint::Head, 0.05, 0.40),
    (Joint::LeftShoulder, 0.20, 0.30),
    (Joint::RightShoulder, 0.20, 0.70),
    (Joint::LeftElbow, 0.32, 0.25),
    (Joint::RightElbow, 0.32, 0.75),
    (Joint::LeftWrist, 0.42, 0.30),
    (Joint::RightWrist, 0.42, 0.70),
    (Joint::LeftHip, 0.52, 0.40),
    (Joint::RightHip, 0.52, 0.60),
    (Joint::LeftKnee, 0.74, 0.40),
    (Joint::RightKnee, 0.74, 0.60),
    (Joint::LeftAnkle, 0.95, 0.40),
    (Joint::RightAnkle, 0.95, 0.60),
];

const LEG_JOINTS: [Joint; 6] = [
    Joint::LeftHip,
    Joint::RightHip,
    Joint::LeftKnee,
    Joint::RightKnee,
    Joint::LeftAnkle,
    Joint::RightAnkle,
];

fn place(pose: &Pose, body: BBox) -> Skeleton {
    let mut s = Skeleton::default();
    for &(j, fx, fy) in pose {
        s.set(j, body.x as f64 + fx * body.w as f64, body.y as f64 + fy * body.h as f64, 0.9);
    }
    s
}

/// The skeleton the scenario channel reports for an occupant box.
/// Lying figures are reported with low leg confidence, as an occluded
/// detector would.
pub fn skeleton_for(posture: PostureClass, body: BBox) -> Skeleton {
    match posture {
        PostureClass::Standing => place(&STANDING, body),
        PostureClass::Sitting => place(&SITTING, body),
        PostureClass::Other => {
            let mut s = place(&LYING, body);
            for j in LEG_JOINTS {
                if let Some(p) = s.get(j) {
                    s.set(j, p.x, p.y, 0.1);
                }
            }
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// A clean sitting or standing pose with jittered proportions.
    Canonical,
    /// Missing hips or unreliable legs; the right answer is `Other`.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub kind: CorpusKind,
    pub skeleton: Skeleton,
    pub expected: PostureClass,
}

fn jittered(pose: &Pose, body: BBox, rng: &mut ChaCha8Rng, amount: f64) -> Skeleton {
    let mut s = place(pose, body);
    for p in s.joints.iter_mut().flatten() {
        p.x += rng.gen_range(-amount..=amount) * body.w as f64;
        p.y += rng.gen_range(-amount..=amount) * body.h as f64;
        p.confidence = rng.gen_range(0.6..=1.0);
    }
    s
}

fn random_box(rng: &mut ChaCha8Rng, aspect: f64) -> BBox {
    let h = rng.gen_range(40..=400);
    let w = ((h as f64 * aspect) as u32).max(8);
    BBox::new(rng.gen_range(0..1000), rng.gen_range(0..1000), w, h)
}

/// 200 standing, 200 sitting and 100 degenerate skeletons.
pub fn synthetic_corpus(seed: u64) -> Vec<CorpusItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(500);
    for _ in 0..200 {
        let aspect = rng.gen_range(0.3..0.5);
        let body = random_box(&mut rng, aspect);
        let skeleton = jittered(&STANDING, body, &mut rng, 0.02);
        out.push(CorpusItem { kind: CorpusKind::Canonical, skeleton, expected: PostureClass::Standing });
    }
    for _ in 0..200 {
        let aspect = rng.gen_range(0.8..1.4);
        let body = random_box(&mut rng, aspect);
        let skeleton = jittered(&SITTING, body, &mut rng, 0.02);
        out.push(CorpusItem { kind: CorpusKind::Canonical, skeleton, expected: PostureClass::Sitting });
    }
    for i in 0..100 {
        let standing = i % 2 == 0;
        let body = random_box(&mut rng, if standing { 0.4 } else { 1.0 });
        let mut skeleton = jittered(if standing { &STANDING } else { &SITTING }, body, &mut rng, 0.02);
        if i < 50 {
            for j in LEG_JOINTS {
                if let Some(p) = skeleton.get(j) {
                    skeleton.set(j, p.x, p.y, rng.gen_range(0.0..0.25));
                }
            }
        } else {
            skeleton.joints[Joint::LeftHip as usize] = None;
            skeleton.joints[Joint::RightHip as usize] = None;
        }
        out.push(CorpusItem { kind: CorpusKind::Degenerate, skeleton, expected: PostureClass::Other });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posture::{GeometricBaseline, PostureClassifier};

    #[test]
    fn scenario_skeletons_classify_as_their_posture() {
        let clf = GeometricBaseline::default();
        for (posture, body) in [
            (PostureClass::Standing, BBox::new(26, 16, 12, 30)),
            (PostureClass::Sitting, BBox::new(23, 26, 18, 20)),
            (PostureClass::Other, BBox::new(18, 36, 27, 10)),
        ] {
            assert_eq!(clf.classify(&skeleton_for(posture, body)).label, posture);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = synthetic_corpus(7);
        let b = synthetic_corpus(7);
        assert_eq!(a.len(), 500);
        assert!(a.iter().zip(&b).all(|(x, y)| x.skeleton == y.skeleton));
    }
}
