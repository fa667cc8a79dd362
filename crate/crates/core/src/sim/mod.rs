//! Synthetic occupant scenarios.
//!
//! A scenario is a TOML file describing phases of days, each with a daily
//! schedule of segments. The simulator steps through the frames of every
//! day, renders a textured rectangle for the occupant, and records what it
//! drew in a ground-truth ledger.
//!
//! ```toml
//! name = "example"
//! start_date = "2024-03-04"      # local date of the first day
//! tz_offset_min = 0              # local time = UTC + offset
//! frame_interval_ms = 200        # must divide one hour
//! seed = 42
//! width = 64
//! height = 48
//!
//! [occupant]                     # standing box; other postures derive from it
//! width = 12
//! height = 30
//!
//! [noise]
//! detector_sigma = 0.0           # jitter of scenario-channel probabilities
//! pixel_amplitude = 0            # per-channel pixel noise, at most 15
//!
//! [[phase]]
//! label = "normal"
//! days = 8
//! inactive_jitter = 0.1          # sd of the per-day inactive-fraction shift
//!
//! [[phase.segment]]
//! start = "07:00"
//! end = "09:00"
//! posture = "standing"           # standing | sitting | other
//! motion = "small"               # none | small | large
//! displacement = [2, 1]          # limb shift per moving frame, |dx|,|dy| <= 4
//! inactive_fraction = 0.3        # share of still frames in each bout
//! bout_frames = 20
//! end_jitter_s = 0               # uniform jitter of the end time per day
//! ```
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed`: stream 0 plans the
//! days, stream 1 jitters the detector channel, stream 2 picks noise planes.

mod ledger;
mod render;
pub mod skeleton;

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{Phase, PhaseMap, MS_PER_DAY, MS_PER_HOUR};
use crate::frame::{CapturedFrame, FixtureWriter};
use crate::geom::BBox;
use crate::posture::PostureClass;
use crate::presence::SceneSample;

pub use ledger::{oracle_summaries, DayTruth, FrameTruth, GroundTruthLedger, SegmentTruth};
pub use render::{palette_index, Renderer, BACKGROUND, MAX_PIXEL_NOISE, PALETTE};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Seconds since local midnight, written `HH:MM` or `HH:MM:SS`; `24:00` is
/// the end of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LocalTime(pub u32);

impl TryFrom<String> for LocalTime {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<u32>().map_err(|_| format!("bad time {s:?}"));
        let (h, m, sec) = match parts.as_slice() {
            [h, m] => (num(h)?, num(m)?, 0),
            [h, m, sec] => (num(h)?, num(m)?, num(sec)?),
            _ => return Err(format!("bad time {s:?}, expected HH:MM[:SS]")),
        };
        let t = h * 3600 + m * 60 + sec;
        if m > 59 || sec > 59 || t > 86_400 {
            return Err(format!("time {s:?} is out of range"));
        }
        Ok(Self(t))
    }
}

impl From<LocalTime> for String {
    fn from(t: LocalTime) -> Self {
        let (h, m, s) = (t.0 / 3600, t.0 / 60 % 60, t.0 % 60);
        if s == 0 {
            format!("{h:02}:{m:02}")
        } else {
            format!("{h:02}:{m:02}:{s:02}")
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionLevel {
    #[default]
    None,
    /// A limb patch covering about an eighth of the body.
    Small,
    /// The whole upper half of the body.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub start: LocalTime,
    pub end: LocalTime,
    pub posture: PostureClass,
    #[serde(default)]
    pub motion: MotionLevel,
    #[serde(default)]
    pub displacement: [i32; 2],
    #[serde(default)]
    pub inactive_fraction: f64,
    #[serde(default = "default_bout")]
    pub bout_frames: u32,
    #[serde(default)]
    pub end_jitter_s: u32,
}

fn default_bout() -> u32 {
    20
}

impl SegmentConfig {
    /// Nominal limb speed in pixels per moving frame.
    pub fn speed(&self) -> f64 {
        let [dx, dy] = self.displacement;
        ((dx * dx + dy * dy) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub label: Phase,
    pub days: u32,
    #[serde(default)]
    pub inactive_jitter: f64,
    #[serde(default, rename = "segment")]
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupantConfig {
    pub width: u32,
    pub height: u32,
    /// Horizontal centre; defaults to the frame centre.
    #[serde(default)]
    pub center_x: Option<u32>,
    /// Row just below the feet; defaults to two rows above the bottom edge.
    #[serde(default)]
    pub floor_y: Option<u32>,
}

impl Default for OccupantConfig {
    fn default() -> Self {
        Self { width: 12, height: 30, center_x: None, floor_y: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub detector_sigma: f64,
    #[serde(default)]
    pub pixel_amplitude: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub start_date: NaiveDate,
    #[serde(default)]
    pub tz_offset_min: i32,
    #[serde(default = "default_interval")]
    pub frame_interval_ms: u32,
    pub seed: u64,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    /// Stop after this many frames.
    #[serde(default)]
    pub max_frames: Option<u64>,
    #[serde(default)]
    pub occupant: OccupantConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(rename = "phase")]
    pub phases: Vec<PhaseConfig>,
}

fn default_interval() -> u32 {
    crate::frame::DEFAULT_FRAME_INTERVAL_MS
}

fn default_width() -> u32 {
    64
}

fn default_height() -> u32 {
    48
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn total_days(&self) -> u32 {
        self.phases.iter().map(|p| p.days).sum()
    }

    pub fn frames_per_day(&self) -> u64 {
        MS_PER_DAY as u64 / self.frame_interval_ms as u64
    }

    pub fn total_frames(&self) -> u64 {
        let all = self.total_days() as u64 * self.frames_per_day();
        self.max_frames.map_or(all, |m| m.min(all))
    }

    /// UTC timestamp of local midnight on the first day.
    pub fn start_timestamp_ms(&self) -> i64 {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        self.start_date.signed_duration_since(epoch).num_days() * MS_PER_DAY - self.tz_offset_min as i64 * 60_000
    }

    pub fn date_of_day(&self, day: u32) -> NaiveDate {
        self.start_date + chrono::Duration::days(day as i64)
    }

    pub fn phase_of_day(&self, day: u32) -> Option<Phase> {
        let mut left = day;
        for p in &self.phases {
            if left < p.days {
                return Some(p.label);
            }
            left -= p.days;
        }
        None
    }

    /// Date to phase for every day of the scenario.
    pub fn phase_map(&self) -> PhaseMap {
        let mut m = PhaseMap::default();
        for day in 0..self.total_days() {
            m.insert(self.date_of_day(day), self.phase_of_day(day).expect("day within scenario"));
        }
        m
    }

    fn phase_config_of_day(&self, day: u32) -> &PhaseConfig {
        let mut left = day;
        for p in &self.phases {
            if left < p.days {
                return p;
            }
            left -= p.days;
        }
        unreachable!("day {day} beyond the scenario")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.frame_interval_ms == 0 || !(MS_PER_HOUR as u64).is_multiple_of(self.frame_interval_ms as u64) {
            return Err(invalid(format!("frame_interval_ms {} must divide one hour", self.frame_interval_ms)));
        }
        if !(16..=4096).contains(&self.width) || !(16..=4096).contains(&self.height) {
            return Err(invalid(format!("frame size {}x{} outside 16..=4096", self.width, self.height)));
        }
        if self.phases.is_empty() || self.total_days() == 0 {
            return Err(invalid("scenario has no days"));
        }
        if self.start_timestamp_ms() < 0 {
            return Err(invalid("scenario starts before 1970"));
        }
        if !(0.0..=1.0).contains(&self.noise.detector_sigma) {
            return Err(invalid("detector_sigma must be within 0..=1"));
        }
        if self.noise.pixel_amplitude > MAX_PIXEL_NOISE {
            return Err(invalid(format!("pixel_amplitude must be at most {MAX_PIXEL_NOISE}")));
        }
        if self.occupant.width < 8 || self.occupant.height < 8 {
            return Err(invalid("occupant must be at least 8x8"));
        }
        for posture in [PostureClass::Standing, PostureClass::Sitting, PostureClass::Other] {
            let b = self.body_box(posture);
            if b.is_empty() || !b.fits_within(self.width, self.height) {
                return Err(invalid(format!("{} occupant box {b:?} does not fit the frame", posture.as_str())));
            }
        }
        for (pi, phase) in self.phases.iter().enumerate() {
            if !(0.0..=1.0).contains(&phase.inactive_jitter) {
                return Err(invalid(format!("phase {pi}: inactive_jitter must be within 0..=1")));
            }
            let mut last_end = 0;
            for (si, s) in phase.segments.iter().enumerate() {
                let at = format!("phase {pi} segment {si}");
                if s.start >= s.end {
                    return Err(invalid(format!("{at}: start must be before end")));
                }
                if s.start.0 < last_end {
                    return Err(invalid(format!("{at}: overlaps the previous segment")));
                }
                last_end = s.end.0;
                if !(0.0..=1.0).contains(&s.inactive_fraction) {
                    return Err(invalid(format!("{at}: inactive_fraction must be within 0..=1")));
                }
                if s.bout_frames == 0 {
                    return Err(invalid(format!("{at}: bout_frames must be positive")));
                }
                let [dx, dy] = s.displacement;
                if dx.abs() > 4 || dy.abs() > 4 {
                    return Err(invalid(format!("{at}: displacement components must be within -4..=4")));
                }
                if s.motion != MotionLevel::None && dx == 0 && dy == 0 {
                    return Err(invalid(format!("{at}: moving segment needs a nonzero displacement")));
                }
            }
        }
        Ok(())
    }

    /// Occupant box for a posture. Sitting is wider and lower than standing,
    /// lying is the standing box turned on its side.
    pub fn body_box(&self, posture: PostureClass) -> BBox {
        let (ow, oh) = (self.occupant.width as f64, self.occupant.height as f64);
        let (w, h) = match posture {
            PostureClass::Standing => (ow, oh),
            PostureClass::Sitting => (ow * 1.5, oh * 0.65),
            PostureClass::Other => (oh * 0.9, ow * 0.8),
        };
        let (w, h) = (w.round() as u32, h.round() as u32);
        let cx = self.occupant.center_x.unwrap_or(self.width / 2);
        let floor = self.occupant.floor_y.unwrap_or(self.height.saturating_sub(2));
        BBox::new(cx.saturating_sub(w / 2), floor.saturating_sub(h), w, h)
    }
}

/// The moving part of the occupant for a motion level.
pub fn limb_box(body: BBox, motion: MotionLevel) -> Option<BBox> {
    match motion {
        MotionLevel::None => None,
        MotionLevel::Small => Some(BBox::new(
            body.x + body.w / 2,
            body.y + body.h / 5,
            (body.w - body.w / 2).max(1),
            (body.h / 4).max(1),
        )),
        MotionLevel::Large => Some(BBox::new(body.x, body.y, body.w, (body.h / 2).max(1))),
    }
}

/// A segment as realised on one day, in milliseconds since local midnight.
#[derive(Debug, Clone, PartialEq)]
struct PlannedSegment {
    start_ms: u64,
    end_ms: u64,
    posture: PostureClass,
    motion: MotionLevel,
    displacement: (i32, i32),
    inactive_fraction: f64,
    bout_frames: u32,
}

#[derive(Debug, Clone, PartialEq)]
struct DayPlan {
    phase: Phase,
    inactive_shift: f64,
    segments: Vec<PlannedSegment>,
}

fn plan_days(cfg: &ScenarioConfig) -> Vec<DayPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    (0..cfg.total_days())
        .map(|day| {
            let phase = cfg.phase_config_of_day(day);
            let z: f64 = rng.sample(StandardNormal);
            let inactive_shift = z * phase.inactive_jitter;
            let segs = &phase.segments;
            let mut segments = Vec::with_capacity(segs.len());
            for (i, s) in segs.iter().enumerate() {
                let jitter = rng.gen_range(-(s.end_jitter_s as i64)..=s.end_jitter_s as i64);
                let next_start = segs.get(i + 1).map_or(86_400, |n| n.start.0) as i64;
                let end = (s.end.0 as i64 + jitter).clamp(s.start.0 as i64 + 1, next_start);
                segments.push(PlannedSegment {
                    start_ms: s.start.0 as u64 * 1000,
                    end_ms: end as u64 * 1000,
                    posture: s.posture,
                    motion: s.motion,
                    displacement: (s.displacement[0], s.displacement[1]),
                    inactive_fraction: (s.inactive_fraction + inactive_shift).clamp(0.0, 1.0),
                    bout_frames: s.bout_frames,
                });
            }
            DayPlan { phase: phase.label, inactive_shift, segments }
        })
        .collect()
}

/// Where the occupant is and how its limb texture is shifted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub posture: PostureClass,
    pub body: BBox,
    pub limb: Option<BBox>,
    pub offset: (i32, i32),
}

impl Occupancy {
    /// Palette index drawn at a pixel of the body box.
    pub fn index_at(&self, x: u32, y: u32) -> usize {
        let (mut dx, mut dy) = (x as i32 - self.body.x as i32, y as i32 - self.body.y as i32);
        if self.limb.is_some_and(|l| l.contains(x, y)) {
            dx -= self.offset.0;
            dy -= self.offset.1;
        }
        palette_index(dx, dy)
    }
}

/// Pixels of the current body box whose palette entry differs from the
/// previous frame, computed on the scene description rather than pixels.
pub fn footprint(prev: Option<&Occupancy>, cur: &Occupancy) -> (u32, Option<BBox>) {
    let mut count = 0;
    let mut bounds = crate::geom::BoundsAccumulator::default();
    let b = cur.body;
    for y in b.y..b.bottom() {
        for x in b.x..b.right() {
            let before = prev.filter(|p| p.body.contains(x, y)).map(|p| p.index_at(x, y));
            if before != Some(cur.index_at(x, y)) {
                count += 1;
                bounds.add(x, y);
            }
        }
    }
    (count, bounds.finish())
}

/// Truth for one frame, shared by the renderer and the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub index: u64,
    pub timestamp_ms: u64,
    pub day: u32,
    pub occupancy: Option<Occupancy>,
    /// Limb shift applied since the previous frame.
    pub displacement: (i32, i32),
    /// Changed pixels in the body box; `None` on the first frame or when absent.
    pub footprint: Option<(u32, Option<BBox>)>,
    pub p_pose: f64,
    pub p_obj: f64,
}

/// Frame-by-frame truth of a scenario.
pub struct Stepper {
    cfg: ScenarioConfig,
    plans: Vec<DayPlan>,
    next: u64,
    total: u64,
    start_ts: u64,
    prev: Option<Occupancy>,
    segment: Option<(u32, usize)>,
    segment_frame: u64,
    offset: (i32, i32),
    rng: ChaCha8Rng,
}

impl Stepper {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            plans: plan_days(cfg),
            next: 0,
            total: cfg.total_frames(),
            start_ts: cfg.start_timestamp_ms() as u64,
            prev: None,
            segment: None,
            segment_frame: 0,
            offset: (0, 0),
            rng,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    fn jitter(&mut self, present: bool) -> f64 {
        let sigma = self.cfg.noise.detector_sigma;
        let e = if sigma > 0.0 { (self.rng.sample::<f64, _>(StandardNormal) * sigma).abs() } else { 0.0 };
        if present { (1.0 - e).max(0.0) } else { e.min(1.0) }
    }

    fn locate(&self, day: u32, ms_of_day: u64) -> Option<usize> {
        self.plans[day as usize]
            .segments
            .iter()
            .position(|s| s.start_ms <= ms_of_day && ms_of_day < s.end_ms)
    }
}

impl Iterator for Stepper {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        if self.next >= self.total {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let elapsed = index * self.cfg.frame_interval_ms as u64;
        let day = (elapsed / MS_PER_DAY as u64) as u32;
        let ms_of_day = elapsed % MS_PER_DAY as u64;
        let located = self.locate(day, ms_of_day).map(|i| (day, i));

        let mut displacement = (0, 0);
        let occupancy = located.map(|(d, i)| {
            let seg = &self.plans[d as usize].segments[i];
            if self.segment != located {
                self.segment = located;
                self.segment_frame = 0;
                self.offset = (0, 0);
            } else {
                self.segment_frame += 1;
                let bout = seg.bout_frames as u64;
                let still = (seg.inactive_fraction * bout as f64).round() as u64;
                if seg.motion != MotionLevel::None && self.segment_frame % bout >= still {
                    let new = if self.offset == (0, 0) { seg.displacement } else { (0, 0) };
                    displacement = (new.0 - self.offset.0, new.1 - self.offset.1);
                    self.offset = new;
                }
            }
            let body = self.cfg.body_box(seg.posture);
            Occupancy { posture: seg.posture, body, limb: limb_box(body, seg.motion), offset: self.offset }
        });
        if located.is_none() {
            self.segment = None;
        }

        let footprint = match (&occupancy, index) {
            (Some(cur), i) if i > 0 => Some(footprint(self.prev.as_ref(), cur)),
            _ => None,
        };
        let present = occupancy.is_some();
        let p_pose = self.jitter(present);
        let p_obj = self.jitter(present);
        self.prev = occupancy;
        Some(Step {
            index,
            timestamp_ms: self.start_ts + elapsed,
            day,
            occupancy,
            displacement,
            footprint,
            p_pose,
            p_obj,
        })
    }
}

impl Step {
    /// The scenario-channel record a detector would read for this frame.
    pub fn sample(&self) -> SceneSample {
        SceneSample {
            timestamp_ms: self.timestamp_ms,
            present: self.occupancy.is_some(),
            p_pose: self.p_pose,
            p_obj: self.p_obj,
            bbox: self.occupancy.map(|o| o.body),
            keypoints: self
                .occupancy
                .map(|o| skeleton::skeleton_for(o.posture, o.body).to_keypoints())
                .unwrap_or_default(),
        }
    }
}

/// Rendered frames of a scenario with their scenario-channel samples.
pub struct ScenarioFrames {
    stepper: Stepper,
    renderer: Renderer,
}

impl ScenarioFrames {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        Ok(Self { stepper: Stepper::new(cfg)?, renderer: Renderer::new(cfg) })
    }

    /// Frames together with the truth they were drawn from.
    pub fn with_truth(self) -> impl Iterator<Item = (CapturedFrame, Step)> {
        let Self { stepper, mut renderer } = self;
        stepper.map(move |step| {
            let frame = renderer.render(&step);
            (CapturedFrame { frame, sidecar: Some(step.sample()) }, step)
        })
    }
}

impl Iterator for ScenarioFrames {
    type Item = CapturedFrame;

    fn next(&mut self) -> Option<CapturedFrame> {
        let step = self.stepper.next()?;
        let frame = self.renderer.render(&step);
        Some(CapturedFrame { frame, sidecar: Some(step.sample()) })
    }
}

/// Ledger only, without drawing any pixels.
pub fn generate_ledger(cfg: &ScenarioConfig) -> Result<GroundTruthLedger, ScenarioError> {
    let mut ledger = GroundTruthLedger::start(cfg, &plan_days(cfg));
    for step in Stepper::new(cfg)? {
        ledger.record(&step);
    }
    Ok(ledger)
}

/// Write the fixture and, optionally, the scenario-channel sidecar (one
/// JSON object per frame), returning the ledger.
pub fn generate<W: Write, S: Write>(
    cfg: &ScenarioConfig,
    fixture: &mut FixtureWriter<W>,
    mut sidecar: Option<&mut S>,
) -> Result<GroundTruthLedger, ScenarioError> {
    let mut ledger = GroundTruthLedger::start(cfg, &plan_days(cfg));
    for (captured, step) in ScenarioFrames::new(cfg)?.with_truth() {
        fixture.write_frame(&captured.frame)?;
        if let (Some(out), Some(sample)) = (sidecar.as_deref_mut(), &captured.sidecar) {
            serde_json::to_writer(&mut *out, sample).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        ledger.record(&step);
    }
    Ok(ledger)
}
