//! Paired comparison of normal and intervention days.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::DailySummary;

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degrees of freedom must be at least 1, got {0}")]
    Dof(u32),
    #[error("need at least 2 pairs, got {0}")]
    Insufficient(usize),
    #[error("differences have zero variance")]
    Degenerate,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("{0} phase has no days")]
    EmptyPhase(&'static str),
    #[error("pairing produced no pairs")]
    NoPairs,
}

// ---- special functions ----------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_tailed_p(t: f64, dof: u32) -> Result<f64, StatsError> {
    if dof < 1 {
        return Err(StatsError::Dof(dof));
    }
    if t.is_nan() {
        return Err(StatsError::NonFinite);
    }
    let nu = dof as f64;
    Ok(incomplete_beta(nu / (nu + t * t), nu / 2.0, 0.5).clamp(0.0, 1.0))
}

// ---- paired t-test ----------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingStrategy {
    #[default]
    ByIndex,
    ByWeekday,
}

impl PairingStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ByIndex => "by-index",
            Self::ByWeekday => "by-weekday",
        }
    }
}

impl std::str::FromStr for PairingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "by-index" => Ok(Self::ByIndex),
            "by-weekday" => Ok(Self::ByWeekday),
            other => Err(format!("unknown pairing strategy {other:?} (expected by-index|by-weekday)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub feature: String,
    /// `(normal, intervention)`
    pub pairs: Vec<(f64, f64)>,
    pub strategy: PairingStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub feature: String,
    pub n: usize,
    /// Mean of intervention minus normal.
    pub mean_difference: f64,
    pub t: f64,
    pub dof: u32,
    pub p: f64,
    pub significant: bool,
}

pub fn paired_t_test(sample: &PairedSample) -> Result<PairedComparison, StatsError> {
    let n = sample.pairs.len();
    if n < 2 {
        return Err(StatsError::Insufficient(n));
    }
    if sample.pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let d: Vec<f64> = sample.pairs.iter().map(|(a, b)| b - a).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 || !var.is_finite() {
        return Err(StatsError::Degenerate);
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dof = (n - 1) as u32;
    let p = student_t_two_tailed_p(t, dof)?;
    Ok(PairedComparison {
        feature: sample.feature.clone(),
        n,
        mean_difference: mean,
        t,
        dof,
        p,
        significant: p < ALPHA,
    })
}

// ---- pairing ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayPairing {
    /// Indices into the normal and intervention day slices.
    pub pairs: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

fn date_order(days: &[DailySummary]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..days.len()).collect();
    idx.sort_by_key(|&i| days[i].date);
    idx
}

/// Match days of the two phases. Days are taken in date order.
pub fn pair_days(
    normal: &[DailySummary],
    intervention: &[DailySummary],
    strategy: PairingStrategy,
) -> Result<DayPairing, StatsError> {
    if normal.is_empty() {
        return Err(StatsError::EmptyPhase("normal"));
    }
    if intervention.is_empty() {
        return Err(StatsError::EmptyPhase("intervention"));
    }
    let (a, b) = (date_order(normal), date_order(intervention));
    let mut warnings = Vec::new();
    let pairs: Vec<(usize, usize)> = match strategy {
        PairingStrategy::ByIndex => {
            if a.len() != b.len() {
                warnings.push(format!(
                    "phases differ in length ({} normal, {} intervention); truncated to {} pairs",
                    a.len(),
                    b.len(),
                    a.len().min(b.len())
                ));
            }
            a.into_iter().zip(b).collect()
        }
        PairingStrategy::ByWeekday => {
            let group = |days: &[DailySummary], order: Vec<usize>| {
                let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
                for i in order {
                    m.entry(days[i].date.weekday().num_days_from_monday()).or_default().push(i);
                }
                m
            };
            let (ga, gb) = (group(normal, a), group(intervention, b));
            let mut pairs = Vec::new();
            for wd in 0..7u32 {
                let (xs, ys) = (ga.get(&wd).map_or(&[][..], Vec::as_slice), gb.get(&wd).map_or(&[][..], Vec::as_slice));
                if xs.len() != ys.len() {
                    let name = Weekday::try_from(wd as u8).map(|w| w.to_string()).unwrap_or_default();
                    warnings.push(format!(
                        "{name}: {} normal vs {} intervention days; {} unmatched dropped",
                        xs.len(),
                        ys.len(),
                        xs.len().abs_diff(ys.len())
                    ));
                }
                pairs.extend(xs.iter().copied().zip(ys.iter().copied()));
            }
            pairs.sort_by_key(|&(i, _)| normal[i].date);
            pairs
        }
    };
    if pairs.is_empty() {
        return Err(StatsError::NoPairs);
    }
    Ok(DayPairing { pairs, warnings })
}

// ---- comparison table -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    StandingRatio,
    SittingRatio,
    InactivityRatio,
    MovementScale,
    MovementSpeed,
    AppearanceDuration,
    AppearancePerHour,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::StandingRatio,
        Feature::SittingRatio,
        Feature::InactivityRatio,
        Feature::MovementScale,
        Feature::MovementSpeed,
        Feature::AppearanceDuration,
        Feature::AppearancePerHour,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Self::StandingRatio => "standing ratio",
            Self::SittingRatio => "sitting ratio",
            Self::InactivityRatio => "inactivity ratio",
            Self::MovementScale => "movement scale",
            Self::MovementSpeed => "movement speed",
            Self::AppearanceDuration => "appearance duration",
            Self::AppearancePerHour => "appearance per hour",
        }
    }

    /// The day's value, or `None` when the day has no data for it.
    pub fn value(&self, d: &DailySummary) -> Option<f64> {
        match self {
            Self::StandingRatio => d.standing_ratio,
            Self::SittingRatio => d.sitting_ratio,
            Self::InactivityRatio => d.inactivity_ratio,
            Self::MovementScale => d.mean_scale,
            Self::MovementSpeed => d.mean_speed,
            Self::AppearanceDuration => Some(d.appearance_minutes),
            Self::AppearancePerHour => Some(d.mean_minutes_per_hour()),
        }
    }
}

/// How the hourly appearance row is paired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HourlyPairing {
    /// Each day's mean over its 24 bins, paired by day.
    #[default]
    PerDay,
    /// The 24 bins of the two phase-mean profiles, paired by hour.
    PerHourSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub feature: Feature,
    pub label: String,
    pub n: usize,
    pub dof: Option<u32>,
    pub normal_mean: Option<f64>,
    pub intervention_mean: Option<f64>,
    pub mean_difference: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub significant: bool,
    /// `None` when the row was tested, else why it was not.
    pub not_testable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub strategy: PairingStrategy,
    pub hourly_pairing: HourlyPairing,
    pub normal_days: usize,
    pub intervention_days: usize,
    pub pairs: usize,
    pub warnings: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn row(feature: Feature, sample: &PairedSample, warnings: &mut Vec<String>) -> ComparisonRow {
    let n = sample.pairs.len();
    let mut r = ComparisonRow {
        feature,
        label: feature.label().to_string(),
        n,
        dof: (n >= 2).then(|| (n - 1) as u32),
        normal_mean: mean(sample.pairs.iter().map(|p| p.0)),
        intervention_mean: mean(sample.pairs.iter().map(|p| p.1)),
        mean_difference: None,
        t: None,
        p: None,
        significant: false,
        not_testable: None,
    };
    match paired_t_test(sample) {
        Ok(c) => {
            r.mean_difference = Some(c.mean_difference);
            r.t = Some(c.t);
            r.p = Some(c.p);
            r.significant = c.significant;
        }
        Err(e) => {
            warnings.push(format!("{}: not testable ({e})", feature.label()));
            r.not_testable = Some(e.to_string());
        }
    }
    r
}

/// One paired t-test per feature. Pairs where either day lacks a value for
/// the feature are left out of that row.
pub fn comparison_table(
    normal: &[DailySummary],
    intervention: &[DailySummary],
    strategy: PairingStrategy,
    hourly: HourlyPairing,
) -> Result<ComparisonReport, StatsError> {
    let pairing = pair_days(normal, intervention, strategy)?;
    let mut warnings = pairing.warnings.clone();
    let mut rows = Vec::with_capacity(Feature::ALL.len());
    for feature in Feature::ALL {
        let pairs: Vec<(f64, f64)> = if feature == Feature::AppearancePerHour && hourly == HourlyPairing::PerHourSlot {
            let profile = |days: &[DailySummary], pick: &dyn Fn(&(usize, usize)) -> usize| {
                let mut out = [0.0; 24];
                for p in &pairing.pairs {
                    for (o, v) in out.iter_mut().zip(&days[pick(p)].hourly_profile) {
                        *o += v / pairing.pairs.len() as f64;
                    }
                }
                out
            };
            let a = profile(normal, &|p| p.0);
            let b = profile(intervention, &|p| p.1);
            a.into_iter().zip(b).collect()
        } else {
            pairing
                .pairs
                .iter()
                .filter_map(|&(i, j)| Some((feature.value(&normal[i])?, feature.value(&intervention[j])?)))
                .collect()
        };
        let dropped = if feature == Feature::AppearancePerHour && hourly == HourlyPairing::PerHourSlot {
            0
        } else {
            pairing.pairs.len() - pairs.len()
        };
        if dropped > 0 {
            warnings.push(format!("{}: {dropped} pair(s) without data left out", feature.label()));
        }
        let sample = PairedSample { feature: feature.label().to_string(), pairs, strategy };
        rows.push(row(feature, &sample, &mut warnings));
    }
    Ok(ComparisonReport {
        strategy,
        hourly_pairing: hourly,
        normal_days: normal.len(),
        intervention_days: intervention.len(),
        pairs: pairing.pairs.len(),
        warnings,
        rows,
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl ComparisonReport {
    /// Aligned plain-text table; significant rows are marked with `*`.
    pub fn to_text(&self) -> String {
        let header = ["feature", "normal", "intervention", "diff", "t", "dof", "p", ""];
        let mut lines: Vec<[String; 8]> = vec![header.map(String::from)];
        for r in &self.rows {
            lines.push([
                r.label.clone(),
                cell(r.normal_mean, 4),
                cell(r.intervention_mean, 4),
                cell(r.mean_difference, 4),
                cell(r.t, 3),
                r.dof.map_or_else(|| "-".into(), |d| d.to_string()),
                r.p.map_or_else(|| "not testable".into(), |p| format!("{p:.4}")),
                if r.significant { "*".into() } else { String::new() },
            ]);
        }
        let widths: Vec<usize> = (0..8).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let mut line = format!("{:<w$}", l[0], w = widths[0]);
            for c in 1..8 {
                let _ = write!(line, "  {:>w$}", l[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "\n{} pairs ({}), {} normal / {} intervention days; * p < {ALPHA}",
            self.pairs,
            self.strategy.as_str(),
            self.normal_days,
            self.intervention_days
        );
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
