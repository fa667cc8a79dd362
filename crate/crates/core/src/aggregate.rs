//! Hourly and daily rollups of per-frame features.
//!
//! Hours are local wall-clock hours at a fixed timezone offset; there is no
//! daylight-saving handling. Posture ratios are taken over present frames
//! that carry a posture label, movement ratios over present frames that
//! carry motion features. Hours without presence add zero minutes to a
//! profile and nothing to any ratio.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::MotionFeatures;
use crate::posture::{PostureClass, PostureLabel};

pub const MS_PER_HOUR: i64 = 3_600_000;
pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no frames to aggregate")]
    Empty,
    #[error("frames span more than one local hour ({0} {1:02}h and {2} {3:02}h)")]
    SpansHours(NaiveDate, u8, NaiveDate, u8),
    #[error("day {date} is missing hour {hour}")]
    MissingHour { date: NaiveDate, hour: u8 },
    #[error("day {date} has hour {hour} more than once")]
    DuplicateHour { date: NaiveDate, hour: u8 },
    #[error("hourly aggregates belong to different dates ({0} and {1})")]
    MixedDates(NaiveDate, NaiveDate),
    #[error("hourly profile needs at least one day")]
    EmptyProfile,
    #[error("band {0}..={1} is not within 0..=23")]
    BandRange(u8, u8),
    #[error("baseline band total is zero")]
    ZeroBaseline,
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Normal,
    Intervention,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Intervention => "intervention",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" | "baseline" => Ok(Self::Normal),
            "intervention" => Ok(Self::Intervention),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

/// The anonymised per-frame record, the only thing that outlives a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFeatures {
    pub timestamp_ms: u64,
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posture: Option<PostureLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionFeatures>,
}

/// Local date and hour of a UTC timestamp at a fixed offset.
pub fn local_date_hour(timestamp_ms: u64, tz_offset_min: i32) -> (NaiveDate, u8) {
    let local = timestamp_ms as i64 + tz_offset_min as i64 * 60_000;
    let day = local.div_euclid(MS_PER_DAY);
    let hour = (local.rem_euclid(MS_PER_DAY) / MS_PER_HOUR) as u8;
    let date = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(day);
    (date, hour)
}

/// Counts for one local hour. Ratios are derived from the counts, so a day
/// can be rolled up exactly as a present-frame-weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyAggregate {
    pub date: NaiveDate,
    pub hour: u8,
    pub frame_interval_ms: u32,
    pub frames_seen: u64,
    pub present_frames: u64,
    pub classified_frames: u64,
    pub sitting_frames: u64,
    pub standing_frames: u64,
    pub other_frames: u64,
    pub motion_frames: u64,
    pub inactive_frames: u64,
    pub scale_sum: f64,
    pub speed_sum: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl HourlyAggregate {
    pub fn empty(date: NaiveDate, hour: u8, frame_interval_ms: u32) -> Self {
        Self {
            date,
            hour,
            frame_interval_ms,
            frames_seen: 0,
            present_frames: 0,
            classified_frames: 0,
            sitting_frames: 0,
            standing_frames: 0,
            other_frames: 0,
            motion_frames: 0,
            inactive_frames: 0,
            scale_sum: 0.0,
            speed_sum: 0.0,
        }
    }

    fn push(&mut self, f: &FrameFeatures) {
        self.frames_seen += 1;
        if !f.present {
            return;
        }
        self.present_frames += 1;
        if let Some(p) = &f.posture {
            self.classified_frames += 1;
            match p.label {
                PostureClass::Sitting => self.sitting_frames += 1,
                PostureClass::Standing => self.standing_frames += 1,
                PostureClass::Other => self.other_frames += 1,
            }
        }
        if let Some(m) = &f.motion {
            self.motion_frames += 1;
            self.inactive_frames += u64::from(m.inactive);
            self.scale_sum += m.movement_scale;
            self.speed_sum += m.movement_speed;
        }
    }

    pub fn presence_minutes(&self) -> f64 {
        self.present_frames as f64 * self.frame_interval_ms as f64 / 60_000.0
    }

    pub fn monitored_minutes(&self) -> f64 {
        self.frames_seen as f64 * self.frame_interval_ms as f64 / 60_000.0
    }

    pub fn sitting_ratio(&self) -> Option<f64> {
        ratio(self.sitting_frames, self.classified_frames)
    }

    pub fn standing_ratio(&self) -> Option<f64> {
        ratio(self.standing_frames, self.classified_frames)
    }

    pub fn other_ratio(&self) -> Option<f64> {
        ratio(self.other_frames, self.classified_frames)
    }

    pub fn inactivity_ratio(&self) -> Option<f64> {
        ratio(self.inactive_frames, self.motion_frames)
    }

    pub fn mean_scale(&self) -> Option<f64> {
        (self.motion_frames > 0).then(|| self.scale_sum / self.motion_frames as f64)
    }

    pub fn mean_speed(&self) -> Option<f64> {
        (self.motion_frames > 0).then(|| self.speed_sum / self.motion_frames as f64)
    }
}

/// Aggregate frames that all fall in one local hour.
pub fn frames_to_hour(
    features: &[FrameFeatures],
    frame_interval_ms: u32,
    tz_offset_min: i32,
) -> Result<HourlyAggregate, AggregateError> {
    let first = features.first().ok_or(AggregateError::Empty)?;
    let (date, hour) = local_date_hour(first.timestamp_ms, tz_offset_min);
    let mut agg = HourlyAggregate::empty(date, hour, frame_interval_ms);
    for f in features {
        let (d, h) = local_date_hour(f.timestamp_ms, tz_offset_min);
        if (d, h) != (date, hour) {
            return Err(AggregateError::SpansHours(date, hour, d, h));
        }
        agg.push(f);
    }
    Ok(agg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub phase: Phase,
    pub appearance_minutes: f64,
    pub hourly_profile: [f64; 24],
    pub sitting_ratio: Option<f64>,
    pub standing_ratio: Option<f64>,
    pub other_ratio: Option<f64>,
    pub inactivity_ratio: Option<f64>,
    pub mean_scale: Option<f64>,
    pub mean_speed: Option<f64>,
    pub present_frames: u64,
    pub classified_frames: u64,
    pub motion_frames: u64,
    /// Monitored fraction of the day.
    pub coverage: f64,
}

impl DailySummary {
    pub fn weekday(&self) -> Weekday {
        self.date.weekday()
    }

    /// Mean of the 24 hourly bins, in minutes.
    pub fn mean_minutes_per_hour(&self) -> f64 {
        self.hourly_profile.iter().sum::<f64>() / 24.0
    }
}

/// Roll 24 hourly aggregates of one date into a day.
pub fn hours_to_day(hours: &[HourlyAggregate], phase: Phase) -> Result<DailySummary, AggregateError> {
    let date = hours.first().ok_or(AggregateError::Empty)?.date;
    let mut slots: [Option<&HourlyAggregate>; 24] = [None; 24];
    for h in hours {
        if h.date != date {
            return Err(AggregateError::MixedDates(date, h.date));
        }
        let slot = slots.get_mut(h.hour as usize).ok_or(AggregateError::MissingHour { date, hour: h.hour })?;
        if slot.replace(h).is_some() {
            return Err(AggregateError::DuplicateHour { date, hour: h.hour });
        }
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(AggregateError::MissingHour { date, hour: missing as u8 });
    }
    let hours: Vec<&HourlyAggregate> = slots.into_iter().flatten().collect();
    let sum = |f: fn(&HourlyAggregate) -> u64| hours.iter().map(|h| f(h)).sum::<u64>();
    let mut profile = [0.0; 24];
    for (bin, h) in profile.iter_mut().zip(&hours) {
        *bin = h.presence_minutes();
    }
    let classified = sum(|h| h.classified_frames);
    let motion = sum(|h| h.motion_frames);
    let scale: f64 = hours.iter().map(|h| h.scale_sum).sum();
    let speed: f64 = hours.iter().map(|h| h.speed_sum).sum();
    let monitored: f64 = hours.iter().map(|h| h.monitored_minutes()).sum();
    Ok(DailySummary {
        date,
        phase,
        appearance_minutes: profile.iter().sum(),
        hourly_profile: profile,
        sitting_ratio: ratio(sum(|h| h.sitting_frames), classified),
        standing_ratio: ratio(sum(|h| h.standing_frames), classified),
        other_ratio: ratio(sum(|h| h.other_frames), classified),
        inactivity_ratio: ratio(sum(|h| h.inactive_frames), motion),
        mean_scale: (motion > 0).then(|| scale / motion as f64),
        mean_speed: (motion > 0).then(|| speed / motion as f64),
        present_frames: sum(|h| h.present_frames),
        classified_frames: classified,
        motion_frames: motion,
        coverage: (monitored / 1440.0).min(1.0),
    })
}

/// Which phase each local date belongs to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseMap {
    dates: BTreeMap<NaiveDate, Phase>,
    intervention_from: Option<NaiveDate>,
}

impl PhaseMap {
    /// Dates before `date` are normal, `date` and later are intervention.
    pub fn split_at(date: NaiveDate) -> Self {
        Self { dates: BTreeMap::new(), intervention_from: Some(date) }
    }

    pub fn insert(&mut self, date: NaiveDate, phase: Phase) {
        self.dates.insert(date, phase);
    }

    pub fn phase_of(&self, date: NaiveDate) -> Option<Phase> {
        if let Some(p) = self.dates.get(&date) {
            return Some(*p);
        }
        self.intervention_from
            .map(|from| if date < from { Phase::Normal } else { Phase::Intervention })
    }

    /// Parse `date,phase` lines; a header line and blank lines are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, AggregateError> {
        let mut map = Self::default();
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            if rec.len() < 2 || rec.get(0) == Some("date") {
                continue;
            }
            let date = rec[0]
                .parse()
                .map_err(|e| AggregateError::Format { line, reason: format!("bad date {:?}: {e}", &rec[0]) })?;
            let phase = rec[1].parse().map_err(|reason| AggregateError::Format { line, reason })?;
            map.insert(date, phase);
        }
        Ok(map)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AggregateError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "phase"])?;
        for (d, p) in &self.dates {
            w.write_record([d.to_string(), p.as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming rollup of a feature stream into hours and days.
#[derive(Debug, Clone)]
pub struct Aggregator {
    frame_interval_ms: u32,
    tz_offset_min: i32,
    hours: BTreeMap<(NaiveDate, u8), HourlyAggregate>,
    current: Option<HourlyAggregate>,
}

impl Aggregator {
    pub fn new(frame_interval_ms: u32, tz_offset_min: i32) -> Self {
        Self { frame_interval_ms, tz_offset_min, hours: BTreeMap::new(), current: None }
    }

    pub fn push(&mut self, f: &FrameFeatures) {
        let key = local_date_hour(f.timestamp_ms, self.tz_offset_min);
        if self.current.as_ref().map(|c| (c.date, c.hour)) != Some(key) {
            self.stash_current();
            let agg = self
                .hours
                .remove(&key)
                .unwrap_or_else(|| HourlyAggregate::empty(key.0, key.1, self.frame_interval_ms));
            self.current = Some(agg);
        }
        self.current.as_mut().unwrap().push(f);
    }

    fn stash_current(&mut self) {
        if let Some(c) = self.current.take() {
            self.hours.insert((c.date, c.hour), c);
        }
    }

    /// Every hour of every date seen, with unseen hours filled as empty.
    pub fn hourly(&mut self) -> Vec<HourlyAggregate> {
        self.stash_current();
        let dates: Vec<NaiveDate> = self.hours.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let mut out = Vec::with_capacity(dates.len() * 24);
        for d in dates {
            for h in 0..24u8 {
                out.push(
                    self.hours
                        .get(&(d, h))
                        .cloned()
                        .unwrap_or_else(|| HourlyAggregate::empty(d, h, self.frame_interval_ms)),
                );
            }
        }
        out
    }

    /// Daily summaries for dates that have a phase; others are skipped.
    pub fn finish(mut self, phases: &PhaseMap) -> Result<(Vec<HourlyAggregate>, Vec<DailySummary>), AggregateError> {
        let hourly = self.hourly();
        let mut days = Vec::new();
        for chunk in hourly.chunks(24) {
            if let Some(phase) = phases.phase_of(chunk[0].date) {
                days.push(hours_to_day(chunk, phase)?);
            }
        }
        Ok((hourly, days))
    }
}

/// Days whose monitored fraction is at least `min_coverage`.
pub fn filter_by_coverage(days: Vec<DailySummary>, min_coverage: f64) -> Vec<DailySummary> {
    days.into_iter().filter(|d| d.coverage >= min_coverage).collect()
}

/// Per-bin mean minutes across days.
pub fn mean_hourly_profile(days: &[DailySummary]) -> Result<[f64; 24], AggregateError> {
    if days.is_empty() {
        return Err(AggregateError::EmptyProfile);
    }
    let mut out = [0.0; 24];
    for d in days {
        for (o, v) in out.iter_mut().zip(&d.hourly_profile) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= days.len() as f64);
    Ok(out)
}

/// Signed percent change of the band total from `a` to `b`; positive means
/// `b` is lower. The band is an inclusive hour range.
pub fn band_change(a: &[f64; 24], b: &[f64; 24], band: (u8, u8)) -> Result<f64, AggregateError> {
    let (lo, hi) = band;
    if lo > hi || hi > 23 {
        return Err(AggregateError::BandRange(lo, hi));
    }
    let range = lo as usize..=hi as usize;
    let total_a: f64 = a[range.clone()].iter().sum();
    let total_b: f64 = b[range].iter().sum();
    if total_a <= 0.0 {
        return Err(AggregateError::ZeroBaseline);
    }
    Ok((total_a - total_b) / total_a * 100.0)
}

pub fn argmax_bin(profile: &[f64; 24]) -> usize {
    profile
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

// ---- JSONL / CSV ----------------------------------------------------------

pub fn write_features_jsonl<W: Write>(out: &mut W, f: &FrameFeatures) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, f)?;
    out.write_all(b"\n")
}

/// Parse a JSONL feature stream; errors carry the 1-based line number.
pub fn read_features_jsonl<R: BufRead>(input: R) -> impl Iterator<Item = Result<FrameFeatures, AggregateError>> {
    input.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(AggregateError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str(&l).map_err(|e| AggregateError::Format { line: line_no, reason: e.to_string() }),
            ),
        }
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub const HOURLY_HEADER: [&str; 13] = [
    "date",
    "hour",
    "frames_seen",
    "present_frames",
    "presence_minutes",
    "sitting_ratio",
    "standing_ratio",
    "other_ratio",
    "inactivity_ratio",
    "mean_scale",
    "mean_speed",
    "classified_frames",
    "motion_frames",
];

pub fn write_hourly_csv<W: Write>(out: W, hours: &[HourlyAggregate]) -> Result<(), AggregateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HOURLY_HEADER)?;
    for h in hours {
        w.write_record([
            h.date.to_string(),
            h.hour.to_string(),
            h.frames_seen.to_string(),
            h.present_frames.to_string(),
            format!("{}", h.presence_minutes()),
            opt(h.sitting_ratio()),
            opt(h.standing_ratio()),
            opt(h.other_ratio()),
            opt(h.inactivity_ratio()),
            opt(h.mean_scale()),
            opt(h.mean_speed()),
            h.classified_frames.to_string(),
            h.motion_frames.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const DAILY_FIXED: [&str; 14] = [
    "date",
    "weekday",
    "phase",
    "appearance_minutes",
    "sitting_ratio",
    "standing_ratio",
    "other_ratio",
    "inactivity_ratio",
    "mean_scale",
    "mean_speed",
    "present_frames",
    "classified_frames",
    "motion_frames",
    "coverage",
];

/// `date,weekday,phase,appearance_minutes,..,coverage,h00..h23`
pub fn daily_header() -> Vec<String> {
    DAILY_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..24).map(|h| format!("h{h:02}")))
        .collect()
}

pub fn write_daily_csv<W: Write>(out: W, days: &[DailySummary]) -> Result<(), AggregateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(daily_header())?;
    for d in days {
        let mut rec = vec![
            d.date.to_string(),
            d.weekday().to_string(),
            d.phase.as_str().to_string(),
            format!("{}", d.appearance_minutes),
            opt(d.sitting_ratio),
            opt(d.standing_ratio),
            opt(d.other_ratio),
            opt(d.inactivity_ratio),
            opt(d.mean_scale),
            opt(d.mean_speed),
            d.present_frames.to_string(),
            d.classified_frames.to_string(),
            d.motion_frames.to_string(),
            format!("{}", d.coverage),
        ];
        rec.extend(d.hourly_profile.iter().map(|v| format!("{v}")));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_daily_csv<R: Read>(input: R) -> Result<Vec<DailySummary>, AggregateError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != daily_header() {
        return Err(AggregateError::Format { line: 1, reason: "unexpected daily CSV header".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |col: &str, v: &str| AggregateError::Format { line, reason: format!("bad {col} value {v:?}") };
        let num = |idx: usize| -> Result<f64, AggregateError> {
            rec[idx].parse::<f64>().map_err(|_| bad(DAILY_FIXED.get(idx).copied().unwrap_or("hour bin"), &rec[idx]))
        };
        let opt_num = |idx: usize| -> Result<Option<f64>, AggregateError> {
            if rec[idx].is_empty() {
                Ok(None)
            } else {
                num(idx).map(Some)
            }
        };
        let count = |idx: usize| -> Result<u64, AggregateError> {
            rec[idx].parse::<u64>().map_err(|_| bad(DAILY_FIXED[idx], &rec[idx]))
        };
        let mut profile = [0.0; 24];
        for (h, bin) in profile.iter_mut().enumerate() {
            *bin = num(DAILY_FIXED.len() + h)?;
        }
        out.push(DailySummary {
            date: rec[0].parse().map_err(|_| bad("date", &rec[0]))?,
            phase: rec[2].parse().map_err(|_| bad("phase", &rec[2]))?,
            appearance_minutes: num(3)?,
            hourly_profile: profile,
            sitting_ratio: opt_num(4)?,
            standing_ratio: opt_num(5)?,
            other_ratio: opt_num(6)?,
            inactivity_ratio: opt_num(7)?,
            mean_scale: opt_num(8)?,
            mean_speed: opt_num(9)?,
            present_frames: count(10)?,
            classified_frames: count(11)?,
            motion_frames: count(12)?,
            coverage: num(13)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DAY0: u64 = 1_709_510_400_000; // 2024-03-04T00:00:00Z

    fn present(ts: u64, label: PostureClass, inactive: bool) -> FrameFeatures {
        FrameFeatures {
            timestamp_ms: ts,
            present: true,
            posture: Some(PostureLabel { label, confidence: 0.9 }),
            motion: Some(MotionFeatures {
                inactive,
                movement_scale: if inactive { 0.0 } else { 0.5 },
                movement_speed: if inactive { 0.0 } else { 2.0 },
            }),
        }
    }

    fn absent(ts: u64) -> FrameFeatures {
        FrameFeatures { timestamp_ms: ts, present: false, posture: None, motion: None }
    }

    #[test]
    fn local_hours_follow_offset() {
        assert_eq!(local_date_hour(DAY0, 0), (NaiveDate::from_ymd_opt(2024, 3, 4).unwrap(), 0));
        assert_eq!(local_date_hour(DAY0, -60), (NaiveDate::from_ymd_opt(2024, 3, 3).unwrap(), 23));
        assert_eq!(local_date_hour(DAY0 + 30 * 60_000, 90).1, 2);
    }

    #[test]
    fn empty_hour_has_no_ratios() {
        let frames: Vec<_> = (0..10).map(|i| absent(DAY0 + i * 1000)).collect();
        let h = frames_to_hour(&frames, 1000, 0).unwrap();
        assert_eq!(h.presence_minutes(), 0.0);
        assert_eq!(h.sitting_ratio(), None);
        assert_eq!(h.inactivity_ratio(), None);
        assert_eq!(h.mean_speed(), None);
    }

    #[test]
    fn presence_minutes_from_frame_count() {
        let frames: Vec<_> = (0..300).map(|i| present(DAY0 + i * 1000, PostureClass::Standing, false)).collect();
        assert_eq!(frames_to_hour(&frames, 1000, 0).unwrap().presence_minutes(), 5.0);
    }

    #[test]
    fn ratios_use_their_own_denominators() {
        let mut frames = vec![
            present(DAY0, PostureClass::Sitting, true),
            present(DAY0 + 1000, PostureClass::Standing, false),
            present(DAY0 + 2000, PostureClass::Standing, false),
            present(DAY0 + 3000, PostureClass::Standing, true),
            absent(DAY0 + 4000),
        ];
        frames[0].motion = None;
        let h = frames_to_hour(&frames, 1000, 0).unwrap();
        assert_eq!(h.standing_ratio(), Some(0.75));
        assert_eq!(h.inactivity_ratio(), Some(1.0 / 3.0));
        assert_eq!(h.mean_speed(), Some(4.0 / 3.0));
    }

    #[test]
    fn frames_spanning_hours_are_rejected() {
        let frames = vec![absent(DAY0), absent(DAY0 + MS_PER_HOUR as u64)];
        assert!(matches!(frames_to_hour(&frames, 1000, 0), Err(AggregateError::SpansHours(..))));
        assert!(matches!(frames_to_hour(&[], 1000, 0), Err(AggregateError::Empty)));
    }

    fn day_hours(date: NaiveDate) -> Vec<HourlyAggregate> {
        (0..24).map(|h| HourlyAggregate::empty(date, h, 1000)).collect()
    }

    #[test]
    fn day_rollup() {
        let date = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let d = hours_to_day(&day_hours(date), Phase::Normal).unwrap();
        assert_eq!(d.appearance_minutes, 0.0);
        assert_eq!(d.coverage, 0.0);

        let mut hours = day_hours(date);
        hours[9].frames_seen = 3600;
        hours[9].present_frames = 1800;
        let d = hours_to_day(&hours, Phase::Intervention).unwrap();
        assert_eq!(d.appearance_minutes, 30.0);
        assert_eq!(d.hourly_profile.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(d.hourly_profile[9], 30.0);
    }

    #[test]
    fn day_rollup_errors() {
        let date = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let mut hours = day_hours(date);
        hours.pop();
        assert!(matches!(hours_to_day(&hours, Phase::Normal), Err(AggregateError::MissingHour { hour: 23, .. })));
        let mut hours = day_hours(date);
        hours[23].hour = 5;
        assert!(matches!(hours_to_day(&hours, Phase::Normal), Err(AggregateError::DuplicateHour { hour: 5, .. })));
        let mut hours = day_hours(date);
        hours[3].date = date.succ_opt().unwrap();
        assert!(matches!(hours_to_day(&hours, Phase::Normal), Err(AggregateError::MixedDates(..))));
    }

    #[test]
    fn day_ratios_are_weighted_by_frames() {
        let date = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let mut hours = day_hours(date);
        let frames: Vec<_> = (0..9).map(|i| present(DAY0 + 8 * 3_600_000 + i * 1000, PostureClass::Standing, false)).collect();
        hours[8] = frames_to_hour(&frames, 1000, 0).unwrap();
        let frames = vec![present(DAY0 + 14 * 3_600_000, PostureClass::Sitting, true)];
        hours[14] = frames_to_hour(&frames, 1000, 0).unwrap();
        let d = hours_to_day(&hours, Phase::Normal).unwrap();
        // a plain mean of hourly ratios would give 0.5
        assert_eq!(d.sitting_ratio, Some(0.1));
        assert_eq!(d.inactivity_ratio, Some(0.1));
    }

    fn summary(date: NaiveDate, profile: [f64; 24]) -> DailySummary {
        let mut hours = day_hours(date);
        for (h, v) in hours.iter_mut().zip(profile) {
            h.present_frames = (v * 60.0) as u64;
            h.frames_seen = 3600;
        }
        hours_to_day(&hours, Phase::Normal).unwrap()
    }

    #[test]
    fn profile_means() {
        let d0 = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let mut p = [0.0; 24];
        p[8] = 10.0;
        let a = summary(d0, p);
        assert_eq!(mean_hourly_profile(std::slice::from_ref(&a)).unwrap(), a.hourly_profile);
        p[8] = 16.0;
        let b = summary(d0.succ_opt().unwrap(), p);
        assert_eq!(mean_hourly_profile(&[a, b]).unwrap()[8], 13.0);
        assert!(matches!(mean_hourly_profile(&[]), Err(AggregateError::EmptyProfile)));
    }

    #[test]
    fn band_change_examples() {
        let mut a = [0.0; 24];
        let mut b = [0.0; 24];
        a[0] = 60.0;
        a[3] = 40.0;
        b[1] = 18.7;
        assert!((band_change(&a, &b, (0, 5)).unwrap() - 81.3).abs() < 1e-9);
        assert_eq!(band_change(&a, &a, (0, 5)).unwrap(), 0.0);
        let mut a = [0.0; 24];
        let mut b = [0.0; 24];
        a[2] = 50.0;
        b[2] = 75.0;
        assert_eq!(band_change(&a, &b, (0, 5)).unwrap(), -50.0);
        assert!(matches!(band_change(&[0.0; 24], &b, (0, 5)), Err(AggregateError::ZeroBaseline)));
        assert!(matches!(band_change(&a, &b, (5, 24)), Err(AggregateError::BandRange(5, 24))));
    }

    #[test]
    fn aggregator_fills_days_and_assigns_phases() {
        let mut agg = Aggregator::new(1000, 0);
        for i in 0..120 {
            agg.push(&present(DAY0 + 7 * 3_600_000 + i * 1000, PostureClass::Standing, false));
        }
        agg.push(&absent(DAY0 + MS_PER_DAY as u64 + 5));
        let phases = PhaseMap::split_at(NaiveDate::from_ymd_opt(2024, 3, 5).unwrap());
        let (hourly, days) = agg.finish(&phases).unwrap();
        assert_eq!(hourly.len(), 48);
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].phase, Phase::Normal);
        assert_eq!(days[1].phase, Phase::Intervention);
        assert_eq!(days[0].appearance_minutes, 2.0);
        assert_eq!(days[0].standing_ratio, Some(1.0));
    }

    #[test]
    fn timezone_shift_rotates_profile() {
        let frames: Vec<_> = (0..600).map(|i| present(DAY0 + 9 * 3_600_000 + i * 1000, PostureClass::Sitting, true)).collect();
        let profile = |tz: i32| {
            let mut agg = Aggregator::new(1000, tz);
            frames.iter().for_each(|f| agg.push(f));
            let (_, days) = agg.finish(&PhaseMap::split_at(NaiveDate::MAX)).unwrap();
            days[0].hourly_profile
        };
        let (base, shifted) = (profile(0), profile(60));
        for h in 0..24 {
            assert_eq!(shifted[(h + 1) % 24], base[h]);
        }
    }

    #[test]
    fn daily_csv_round_trip_and_header() {
        let d0 = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let mut p = [0.0; 24];
        p[8] = 12.5;
        let mut d = summary(d0, p);
        d.inactivity_ratio = Some(0.25);
        let mut buf = Vec::new();
        write_daily_csv(&mut buf, std::slice::from_ref(&d)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("date,weekday,phase,appearance_minutes,"));
        assert!(text.lines().next().unwrap().ends_with(",h22,h23"));
        assert_eq!(read_daily_csv(buf.as_slice()).unwrap(), vec![d]);
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let text = "{\"timestamp_ms\":1,\"present\":false}\n\n{oops\n";
        let out: Vec<_> = read_features_jsonl(text.as_bytes()).collect();
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(AggregateError::Format { line: 3, .. })));
    }

    #[test]
    fn phase_map_csv() {
        let m = PhaseMap::read_csv("date,phase\n2024-03-04,normal\n2024-03-05,intervention\n".as_bytes()).unwrap();
        assert_eq!(m.phase_of(NaiveDate::from_ymd_opt(2024, 3, 5).unwrap()), Some(Phase::Intervention));
        assert_eq!(m.phase_of(NaiveDate::from_ymd_opt(2024, 3, 6).unwrap()), None);
        assert!(PhaseMap::read_csv("2024-03-04,weekend\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn day_invariants(seed in proptest::collection::vec((0u64..3600, 0u8..3, any::<bool>(), any::<bool>()), 0..400)) {
            let mut agg = Aggregator::new(1000, 0);
            for (i, (sec, posture, inactive, here)) in seed.iter().enumerate() {
                let ts = DAY0 + (i as u64 % 24) * 3_600_000 + sec * 1000;
                let label = [PostureClass::Sitting, PostureClass::Standing, PostureClass::Other][*posture as usize];
                agg.push(&if *here { present(ts, label, *inactive) } else { absent(ts) });
            }
            let (_, days) = agg.finish(&PhaseMap::split_at(NaiveDate::MAX)).unwrap();
            for d in days {
                prop_assert!((d.appearance_minutes - d.hourly_profile.iter().sum::<f64>()).abs() < 1e-6);
                if let (Some(a), Some(b), Some(c)) = (d.sitting_ratio, d.standing_ratio, d.other_ratio) {
                    prop_assert!((a + b + c - 1.0).abs() < 1e-9);
                }
                for r in [d.sitting_ratio, d.standing_ratio, d.other_ratio, d.inactivity_ratio, d.mean_scale].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&r));
                }
            }
        }
    }
}
