//! Per-frame movement features: inactivity, movement scale and movement
//! speed, computed from two consecutive frames and the body box.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{dense_flow_with, FlowField, FlowParams};
use crate::frame::RawFrame;
use crate::geom::{BBox, BoundsAccumulator};

/// Default summed |ΔR|+|ΔG|+|ΔB| threshold (30 per channel).
pub const DEFAULT_ACTIVE_THRESHOLD: u32 = 90;
pub const MAX_ACTIVE_THRESHOLD: u32 = 765;

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("active-pixel threshold {0} outside [1, 765]")]
    Threshold(u32),
    #[error("body box {0:?} has zero area")]
    ZeroAreaBody(BBox),
    #[error("box {0:?} lies outside the {1}x{2} frame")]
    OutsideFrame(BBox, u32, u32),
    #[error("flow field is empty")]
    EmptyFlow,
}

/// Pixels of the body box whose colour changed significantly.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveRegion {
    pub count: u64,
    /// Bounding box of the active pixels, absent iff `count == 0`.
    pub bbox: Option<BBox>,
    pub threshold: u32,
    /// Row-major activity mask over the body box.
    mask: Vec<bool>,
    area: BBox,
}

impl ActiveRegion {
    pub fn none(area: BBox, threshold: u32) -> Self {
        Self { count: 0, bbox: None, threshold, mask: vec![false; area.area() as usize], area }
    }

    pub fn is_active(&self, x: u32, y: u32) -> bool {
        self.area.contains(x, y)
            && self.mask[((y - self.area.y) * self.area.w + (x - self.area.x)) as usize]
    }

    /// The box the mask covers.
    pub fn area(&self) -> BBox {
        self.area
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFeatures {
    pub inactive: bool,
    pub movement_scale: f64,
    pub movement_speed: f64,
}

/// Which pixels the speed average runs over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedDomain {
    #[default]
    Bbox,
    Active,
}

impl std::str::FromStr for SpeedDomain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbox" => Ok(Self::Bbox),
            "active" => Ok(Self::Active),
            other => Err(format!("unknown speed domain {other:?} (expected bbox|active)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    pub threshold: u32,
    pub speed_domain: SpeedDomain,
    pub flow: FlowParams,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_ACTIVE_THRESHOLD, speed_domain: SpeedDomain::Bbox, flow: FlowParams::default() }
    }
}

fn check_pair(prev: &RawFrame, cur: &RawFrame) -> Result<(), MotionError> {
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(MotionError::DimensionMismatch(prev.width(), prev.height(), cur.width(), cur.height()));
    }
    Ok(())
}

/// A pixel inside `body` is active iff the sum over R, G, B of
/// `|cur - prev|` exceeds `threshold`.
pub fn active_pixels(
    prev: &RawFrame,
    cur: &RawFrame,
    body: BBox,
    threshold: u32,
) -> Result<ActiveRegion, MotionError> {
    check_pair(prev, cur)?;
    if !(1..=MAX_ACTIVE_THRESHOLD).contains(&threshold) {
        return Err(MotionError::Threshold(threshold));
    }
    if !body.fits_within(cur.width(), cur.height()) {
        return Err(MotionError::OutsideFrame(body, cur.width(), cur.height()));
    }
    let stride = cur.width() as usize * 3;
    let (a, b) = (prev.rgb(), cur.rgb());
    let mut mask = Vec::with_capacity(body.area() as usize);
    let mut bounds = BoundsAccumulator::default();
    let mut count = 0u64;
    for y in body.y..body.bottom() {
        let row = y as usize * stride;
        let start = row + body.x as usize * 3;
        let end = row + body.right() as usize * 3;
        for (i, (pa, pb)) in a[start..end].chunks_exact(3).zip(b[start..end].chunks_exact(3)).enumerate() {
            let diff = pa[0].abs_diff(pb[0]) as u32 + pa[1].abs_diff(pb[1]) as u32 + pa[2].abs_diff(pb[2]) as u32;
            let active = diff > threshold;
            if active {
                count += 1;
                bounds.add(body.x + i as u32, y);
            }
            mask.push(active);
        }
    }
    Ok(ActiveRegion { count, bbox: bounds.finish(), threshold, mask, area: body })
}

/// `area(active bbox ∩ body) / area(body)`, 0 when nothing moved.
pub fn movement_scale(active: &ActiveRegion, body: BBox) -> Result<f64, MotionError> {
    if body.area() == 0 {
        return Err(MotionError::ZeroAreaBody(body));
    }
    let covered = active
        .bbox
        .and_then(|b| b.intersect(&body))
        .map_or(0, |b| b.area());
    Ok((covered as f64 / body.area() as f64).clamp(0.0, 1.0))
}

/// Mean flow magnitude over every pixel of the field, in pixels per frame.
pub fn movement_speed(flow: &FlowField) -> Result<f64, MotionError> {
    if flow.is_empty() {
        return Err(MotionError::EmptyFlow);
    }
    let total: f64 = flow.magnitudes().map(f64::from).sum();
    Ok(total / flow.len() as f64)
}

/// Mean flow magnitude over the active pixels only; 0 if none are active.
pub fn movement_speed_active(flow: &FlowField, active: &ActiveRegion) -> f64 {
    let b = flow.bbox();
    let mut total = 0.0;
    let mut n = 0u64;
    for (i, m) in flow.magnitudes().enumerate() {
        let x = b.x + i as u32 % b.w;
        let y = b.y + i as u32 / b.w;
        if active.is_active(x, y) {
            total += m as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Present, with not a single active pixel in the body box.
pub fn inactivity_flag(present: bool, active: &ActiveRegion) -> bool {
    present && active.count == 0
}

/// All three features for a frame where a person is present. Flow is only
/// evaluated when something moved; a still frame has speed 0.
pub fn compute_motion(
    prev: &RawFrame,
    cur: &RawFrame,
    body: BBox,
    config: &MotionConfig,
) -> Result<MotionFeatures, MotionError> {
    let active = active_pixels(prev, cur, body, config.threshold)?;
    let inactive = inactivity_flag(true, &active);
    let movement_scale = movement_scale(&active, body)?;
    let movement_speed = if active.count == 0 {
        0.0
    } else {
        let flow = dense_flow_with(prev, cur, body, &config.flow)?;
        match config.speed_domain {
            SpeedDomain::Bbox => movement_speed(&flow)?,
            SpeedDomain::Active => movement_speed_active(&flow, &active),
        }
    };
    Ok(MotionFeatures { inactive, movement_scale, movement_speed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(w: u32, h: u32, rgb: Vec<u8>) -> RawFrame {
        RawFrame::new(0, w, h, rgb, None).unwrap()
    }

    fn full(w: u32, h: u32) -> BBox {
        BBox::new(0, 0, w, h)
    }

    /// Brute-force reference: an explicit double loop over the frame.
    fn naive_active(prev: &RawFrame, cur: &RawFrame, body: BBox, threshold: u32) -> (u64, Option<BBox>) {
        let mut count = 0;
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..cur.height() {
            for x in 0..cur.width() {
                if !body.contains(x, y) {
                    continue;
                }
                let (p, c) = (prev.pixel(x, y), cur.pixel(x, y));
                let d: i32 = (0..3).map(|k| (p[k] as i32 - c[k] as i32).abs()).sum();
                if d > threshold as i32 {
                    count += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (count, (count > 0).then(|| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)))
    }

    #[test]
    fn identical_frames_are_still() {
        let a = frame(8, 8, vec![50; 192]);
        let b = frame(8, 8, vec![50; 192]);
        let r = active_pixels(&a, &b, full(8, 8), 90).unwrap();
        assert_eq!((r.count, r.bbox), (0, None));
        assert!(inactivity_flag(true, &r));
        assert_eq!(movement_scale(&r, full(8, 8)).unwrap(), 0.0);
    }

    #[test]
    fn single_changed_pixel() {
        let a = frame(8, 8, vec![50; 192]);
        let mut buf = vec![50; 192];
        let i = (3 * 8 + 5) * 3;
        buf[i..i + 3].copy_from_slice(&[90, 90, 90]);
        let b = frame(8, 8, buf);
        let r = active_pixels(&a, &b, full(8, 8), 100).unwrap();
        assert_eq!(r.count, 1);
        assert_eq!(r.bbox, Some(BBox::new(5, 3, 1, 1)));
        assert!(r.is_active(5, 3));
        // 120 is not above a threshold of 120
        let r = active_pixels(&a, &b, full(8, 8), 120).unwrap();
        assert_eq!(r.count, 0);
    }

    #[test]
    fn shifted_block_covers_union_footprint() {
        let (w, h) = (40, 30);
        let draw = |bx: u32, by: u32| {
            let mut buf = vec![20u8; (w * h * 3) as usize];
            for y in by..by + 10 {
                for x in bx..bx + 10 {
                    let i = ((y * w + x) * 3) as usize;
                    buf[i..i + 3].copy_from_slice(&[200, 180, 160]);
                }
            }
            frame(w, h, buf)
        };
        let (a, b) = (draw(5, 6), draw(9, 8));
        let r = active_pixels(&a, &b, full(w, h), 90).unwrap();
        assert_eq!(naive_active(&a, &b, full(w, h), 90), (r.count, r.bbox));
        assert_eq!(r.bbox, Some(BBox::new(5, 6, 14, 12)));
    }

    #[test]
    fn errors() {
        let a = frame(8, 8, vec![0; 192]);
        let b = frame(4, 4, vec![0; 48]);
        assert!(matches!(active_pixels(&a, &b, full(4, 4), 90), Err(MotionError::DimensionMismatch(..))));
        assert_eq!(active_pixels(&a, &a, full(8, 8), 0).unwrap_err(), MotionError::Threshold(0));
        assert_eq!(active_pixels(&a, &a, full(8, 8), 766).unwrap_err(), MotionError::Threshold(766));
        assert!(matches!(active_pixels(&a, &a, full(9, 8), 90), Err(MotionError::OutsideFrame(..))));
        let none = ActiveRegion::none(full(8, 8), 90);
        assert!(matches!(movement_scale(&none, BBox::new(1, 1, 0, 5)), Err(MotionError::ZeroAreaBody(_))));
    }

    #[test]
    fn scale_examples() {
        let body = BBox::new(10, 10, 40, 60);
        let mut r = ActiveRegion::none(body, 90);
        assert_eq!(movement_scale(&r, body).unwrap(), 0.0);
        r.count = 1;
        r.bbox = Some(body);
        assert_eq!(movement_scale(&r, body).unwrap(), 1.0);
        r.bbox = Some(BBox::new(15, 20, 20, 30));
        // 600 / 2400
        assert_eq!(movement_scale(&r, body).unwrap(), 0.25);
    }

    #[test]
    fn speed_examples() {
        let b = BBox::new(0, 0, 4, 2);
        assert_eq!(movement_speed(&FlowField::zeros(b)).unwrap(), 0.0);
        let f = FlowField::from_parts(b, vec![3.0; 8], vec![4.0; 8]);
        assert_eq!(movement_speed(&f).unwrap(), 5.0);
        let f = FlowField::from_parts(b, vec![0.0; 8], vec![0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(movement_speed(&f).unwrap(), 1.0);
        let empty = FlowField::zeros(BBox::new(0, 0, 0, 0));
        assert_eq!(movement_speed(&empty), Err(MotionError::EmptyFlow));
    }

    #[test]
    fn active_domain_speed() {
        let body = BBox::new(0, 0, 4, 2);
        let mut r = ActiveRegion::none(body, 90);
        r.mask[5] = true;
        r.count = 1;
        let f = FlowField::from_parts(body, vec![0.0; 8], vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(movement_speed_active(&f, &r), 2.0);
        assert_eq!(movement_speed_active(&f, &ActiveRegion::none(body, 90)), 0.0);
    }

    #[test]
    fn inactivity_examples() {
        let body = BBox::new(0, 0, 4, 4);
        let none = ActiveRegion::none(body, 90);
        assert!(inactivity_flag(true, &none));
        assert!(!inactivity_flag(false, &none));
        let mut some = none.clone();
        some.count = 17;
        assert!(!inactivity_flag(true, &some));
    }

    #[test]
    fn matches_naive_oracle_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let prev: Vec<u8> = (0..64 * 48 * 3).map(|_| rng.gen()).collect();
            let mut cur = prev.clone();
            for v in cur.iter_mut() {
                if rng.gen_bool(0.3) {
                    *v = rng.gen();
                }
            }
            let (a, b) = (frame(64, 48, prev), frame(64, 48, cur));
            let body = BBox::new(rng.gen_range(0..32), rng.gen_range(0..24), rng.gen_range(1..32), rng.gen_range(1..24));
            let t = rng.gen_range(1..=765);
            let r = active_pixels(&a, &b, body, t).unwrap();
            assert_eq!((r.count, r.bbox), naive_active(&a, &b, body, t));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn scale_in_unit_interval_and_zero_when_inactive(
            seed in any::<u64>(),
            bx in 0u32..20, by in 0u32..20, bw in 1u32..12, bh in 1u32..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (32u32, 32u32);
            let prev: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
            let cur: Vec<u8> = prev.iter().map(|&v| if rng.gen_bool(0.02) { rng.gen() } else { v }).collect();
            let (a, b) = (frame(w, h, prev), frame(w, h, cur));
            let body = BBox::new(bx, by, bw, bh);
            let r = active_pixels(&a, &b, body, rng.gen_range(1..=200)).unwrap();
            let s = movement_scale(&r, body).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            if inactivity_flag(true, &r) {
                prop_assert_eq!(s, 0.0);
            }
        }
    }
}
