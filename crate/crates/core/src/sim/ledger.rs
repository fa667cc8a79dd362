use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DayPlan, MotionLevel, ScenarioConfig, Step};
use crate::aggregate::{DailySummary, Phase, MS_PER_DAY, MS_PER_HOUR};
use crate::geom::BBox;
use crate::posture::PostureClass;

/// What the simulator drew on a frame with the occupant in view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub timestamp_ms: u64,
    pub posture: PostureClass,
    pub body: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limb: Option<BBox>,
    pub displacement: [i32; 2],
    /// Changed body pixels; absent on the first frame of the stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_bbox: Option<BBox>,
}

impl FrameTruth {
    pub fn motion_defined(&self) -> bool {
        self.active_count.is_some()
    }

    pub fn inactive(&self) -> bool {
        self.active_count == Some(0)
    }

    pub fn movement_scale(&self) -> f64 {
        let covered = self.active_bbox.and_then(|b| b.intersect(&self.body)).map_or(0, |b| b.area());
        covered as f64 / self.body.area() as f64
    }

    /// Mean displacement over the body box if flow were recovered exactly.
    pub fn ideal_speed(&self) -> f64 {
        let [dx, dy] = self.displacement;
        let limb = self.limb.map_or(0, |l| l.area());
        ((dx * dx + dy * dy) as f64).sqrt() * limb as f64 / self.body.area() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub start_ms: u64,
    pub end_ms: u64,
    pub posture: PostureClass,
    pub motion: MotionLevel,
    pub inactive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub date: NaiveDate,
    pub phase: Phase,
    /// Frames emitted for this day.
    pub frames: u64,
    /// Presence per local hour, from the realised schedule alone.
    pub presence_minutes: [f64; 24],
    pub inactive_shift: f64,
    pub segments: Vec<SegmentTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub scenario: String,
    pub seed: u64,
    pub frame_interval_ms: u32,
    pub tz_offset_min: i32,
    pub width: u32,
    pub height: u32,
    pub start_timestamp_ms: u64,
    pub total_frames: u64,
    pub days: Vec<DayTruth>,
    /// Frames with the occupant present, in stream order.
    pub frames: Vec<FrameTruth>,
}

/// Frames `k` with `k * interval` in `[lo, hi)`.
fn frames_in(lo: u64, hi: u64, interval: u64) -> u64 {
    hi.div_ceil(interval).saturating_sub(lo.div_ceil(interval))
}

impl GroundTruthLedger {
    pub(super) fn start(cfg: &ScenarioConfig, plans: &[DayPlan]) -> Self {
        let iv = cfg.frame_interval_ms as u64;
        let per_day = cfg.frames_per_day();
        let total = cfg.total_frames();
        let days = plans
            .iter()
            .enumerate()
            .map(|(d, plan)| {
                let frames = total.saturating_sub(d as u64 * per_day).min(per_day);
                let covered = frames * iv;
                let mut presence = [0.0; 24];
                for s in &plan.segments {
                    for (h, bin) in presence.iter_mut().enumerate() {
                        let h0 = h as u64 * MS_PER_HOUR as u64;
                        let lo = s.start_ms.max(h0);
                        let hi = s.end_ms.min(h0 + MS_PER_HOUR as u64).min(covered);
                        if hi > lo {
                            *bin += (frames_in(lo, hi, iv) * iv) as f64 / 60_000.0;
                        }
                    }
                }
                DayTruth {
                    date: cfg.date_of_day(d as u32),
                    phase: plan.phase,
                    frames,
                    presence_minutes: presence,
                    inactive_shift: plan.inactive_shift,
                    segments: plan
                        .segments
                        .iter()
                        .map(|s| SegmentTruth {
                            start_ms: s.start_ms,
                            end_ms: s.end_ms,
                            posture: s.posture,
                            motion: s.motion,
                            inactive_fraction: s.inactive_fraction,
                        })
                        .collect(),
                }
            })
            .collect();
        Self {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            frame_interval_ms: cfg.frame_interval_ms,
            tz_offset_min: cfg.tz_offset_min,
            width: cfg.width,
            height: cfg.height,
            start_timestamp_ms: cfg.start_timestamp_ms() as u64,
            total_frames: total,
            days,
            frames: Vec::new(),
        }
    }

    pub(super) fn record(&mut self, step: &Step) {
        let Some(occ) = &step.occupancy else { return };
        let (active_count, active_bbox) = match step.footprint {
            Some((n, b)) => (Some(n), b),
            None => (None, None),
        };
        self.frames.push(FrameTruth {
            timestamp_ms: step.timestamp_ms,
            posture: occ.posture,
            body: occ.body,
            limb: occ.limb,
            displacement: [step.displacement.0, step.displacement.1],
            active_count,
            active_bbox,
        });
    }

    /// Presence transitions (absent to present or back) on one day.
    pub fn transitions_on(&self, day: usize) -> u64 {
        let iv = self.frame_interval_ms as u64;
        let mut n = 0;
        let mut prev_end = None;
        for s in &self.days[day].segments {
            let (a, b) = (s.start_ms.div_ceil(iv), s.end_ms.div_ceil(iv));
            if a == b {
                continue;
            }
            if prev_end != Some(a) {
                n += 2;
            }
            prev_end = Some(b);
        }
        n
    }
}

/// Daily summaries computed straight from the ledger's per-frame truth.
pub fn oracle_summaries(ledger: &GroundTruthLedger) -> Vec<DailySummary> {
    #[derive(Default)]
    struct Tally {
        present: [u64; 24],
        sitting: u64,
        standing: u64,
        other: u64,
        motion: u64,
        inactive: u64,
        scale: f64,
        speed: f64,
    }
    let mut tallies: Vec<Tally> = ledger.days.iter().map(|_| Tally::default()).collect();
    for f in &ledger.frames {
        let elapsed = f.timestamp_ms - ledger.start_timestamp_ms;
        let day = (elapsed / MS_PER_DAY as u64) as usize;
        let hour = (elapsed % MS_PER_DAY as u64 / MS_PER_HOUR as u64) as usize;
        let t = &mut tallies[day];
        t.present[hour] += 1;
        match f.posture {
            PostureClass::Sitting => t.sitting += 1,
            PostureClass::Standing => t.standing += 1,
            PostureClass::Other => t.other += 1,
        }
        if f.motion_defined() {
            t.motion += 1;
            t.inactive += f.inactive() as u64;
            t.scale += f.movement_scale();
            t.speed += f.ideal_speed();
        }
    }
    let iv = ledger.frame_interval_ms as f64;
    ledger
        .days
        .iter()
        .zip(tallies)
        .map(|(day, t)| {
            let mut profile = [0.0; 24];
            for (bin, n) in profile.iter_mut().zip(t.present) {
                *bin = n as f64 * iv / 60_000.0;
            }
            let present: u64 = t.present.iter().sum();
            let share = |n: u64, of: u64| (of > 0).then(|| n as f64 / of as f64);
            DailySummary {
                date: day.date,
                phase: day.phase,
                appearance_minutes: profile.iter().sum(),
                hourly_profile: profile,
                sitting_ratio: share(t.sitting, present),
                standing_ratio: share(t.standing, present),
                other_ratio: share(t.other, present),
                inactivity_ratio: share(t.inactive, t.motion),
                mean_scale: (t.motion > 0).then(|| t.scale / t.motion as f64),
                mean_speed: (t.motion > 0).then(|| t.speed / t.motion as f64),
                present_frames: present,
                classified_frames: present,
                motion_frames: t.motion,
                coverage: day.frames as f64 * iv / MS_PER_DAY as f64,
            }
        })
        .collect()
}
