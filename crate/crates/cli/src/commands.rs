use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ambientis::aggregate::{
    argmax_bin, band_change, filter_by_coverage, mean_hourly_profile, read_daily_csv, read_features_jsonl,
    write_daily_csv, write_features_jsonl, write_hourly_csv, Aggregator, DailySummary, Phase, PhaseMap,
};
use ambientis::frame::{open_stream, FixtureWriter, SourceKind, StreamConfig, DEFAULT_FRAME_INTERVAL_MS};
use ambientis::pipeline::{Pipeline, PipelineError};
use ambientis::privacy::scan_dir;
use ambientis::sim::{generate, generate_ledger, oracle_summaries, ScenarioConfig};
use ambientis::stats::{comparison_table, HourlyPairing, PairingStrategy};
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::error::CliError;
use crate::{AggregateArgs, CompareArgs, ReportArgs, RunArgs, ScanArgs, SimulateArgs};

/// Written next to `features.jsonl` so later stages need no repeated flags.
#[derive(Debug, Serialize, Deserialize)]
struct RunMeta {
    frame_interval_ms: u32,
    tz_offset_min: i32,
    frames: u64,
    width: u32,
    height: u32,
    room: String,
}

const RUN_META: &str = "run.json";
const PHASES: &str = "phases.csv";

fn out_dir(flag: Option<PathBuf>, cfg: &FileConfig, fallback: &Path) -> Result<PathBuf, CliError> {
    let dir = flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| fallback.to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn parent_of(p: &Path) -> PathBuf {
    p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn flush(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    flush(w, path)
}

fn write_daily(path: &Path, days: &[DailySummary]) -> Result<(), CliError> {
    let w = create(path)?;
    write_daily_csv(w, days)?;
    Ok(())
}

fn read_daily(path: &Path) -> Result<Vec<DailySummary>, CliError> {
    read_daily_csv(open(path)?).map_err(|e| CliError::from(e).context(path))
}

pub fn simulate(cfg: &FileConfig, args: SimulateArgs) -> Result<(), CliError> {
    let scenario = ScenarioConfig::load(&args.scenario)?;
    let dir = out_dir(args.out, cfg, Path::new("out"))?;
    let ledger = if args.ledger_only {
        generate_ledger(&scenario)?
    } else {
        let frames_path = dir.join("frames.ambf");
        let sidecar_path = dir.join("sidecar.jsonl");
        let mut fixture = FixtureWriter::create(&frames_path).map_err(|e| CliError::io(&frames_path, e))?;
        let mut sidecar = create(&sidecar_path)?;
        let ledger = generate(&scenario, &mut fixture, Some(&mut sidecar))?;
        fixture.finish().map_err(|e| CliError::io(&frames_path, e))?;
        flush(sidecar, &sidecar_path)?;
        ledger
    };
    write_json(&dir.join("ledger.json"), &ledger)?;
    scenario.phase_map().write_csv(create(&dir.join(PHASES))?)?;
    write_daily(&dir.join("oracle_daily.csv"), &oracle_summaries(&ledger))?;
    println!(
        "{}: {} days, {} frames at {} ms, {} with the occupant present -> {}",
        scenario.name,
        scenario.total_days(),
        ledger.total_frames,
        scenario.frame_interval_ms,
        ledger.frames.len(),
        dir.display()
    );
    Ok(())
}

pub fn run(cfg: &FileConfig, args: RunArgs) -> Result<(), CliError> {
    let scenario_path = args.scenario.clone().or(if args.fixture.is_some() { None } else { cfg.stream.scenario.clone() });
    let scenario = scenario_path.as_deref().map(ScenarioConfig::load).transpose()?;
    let source = match (&scenario, args.fixture.clone().or_else(|| cfg.stream.fixture.clone())) {
        (Some(s), _) => SourceKind::Scenario(Box::new(s.clone())),
        (None, Some(path)) => {
            SourceKind::Recorded { path, sidecar: args.sidecar.clone().or_else(|| cfg.stream.sidecar.clone()) }
        }
        (None, None) => return Err(CliError::Input("no input: give --scenario or --fixture".into())),
    };
    let frame_interval_ms = args
        .frame_interval_ms
        .or(cfg.stream.frame_interval_ms)
        .or(scenario.as_ref().map(|s| s.frame_interval_ms))
        .unwrap_or(DEFAULT_FRAME_INTERVAL_MS);
    let tz_offset_min =
        args.tz_offset_min.or(cfg.stream.tz_offset_min).or(scenario.as_ref().map(|s| s.tz_offset_min)).unwrap_or(0);
    let room = cfg.stream.room.clone().unwrap_or_else(|| "room".into());
    let mut settings = cfg.pipeline.clone();
    if let Some(v) = args.threshold {
        settings.threshold = v;
    }
    if let Some(v) = args.speed_domain {
        settings.speed_domain = v;
    }
    if let Some(v) = args.pose_detector {
        settings.pose_detector = v;
    }
    if let Some(v) = args.object_detector {
        settings.object_detector = v;
    }
    if let Some(v) = args.classifier {
        settings.classifier = v;
    }

    let mut pipeline = Pipeline::new(&settings)?;
    let stream = open_stream(&StreamConfig { source, frame_interval_ms, room: room.clone(), tz_offset_min })?;
    let dir = out_dir(args.out, cfg, Path::new("out"))?;
    let features_path = dir.join("features.jsonl");
    let mut out = create(&features_path)?;
    let mut dims = (0, 0);
    let mut present = 0u64;
    let frames = stream.map(|r| {
        r.inspect(|c| dims = (c.frame.width(), c.frame.height()))
    });
    let n = pipeline.run(frames, |f| {
        present += f.present as u64;
        write_features_jsonl(&mut out, &f).map_err(|e| PipelineError::Ingest(e.into()))
    })?;
    flush(out, &features_path)?;
    let meta = RunMeta { frame_interval_ms, tz_offset_min, frames: n, width: dims.0, height: dims.1, room };
    write_json(&dir.join(RUN_META), &meta)?;
    if let Some(s) = &scenario {
        s.phase_map().write_csv(create(&dir.join(PHASES))?)?;
    }
    println!("{n} frames, {present} with presence -> {}", features_path.display());
    Ok(())
}

/// Smallest positive gap between consecutive timestamps.
fn infer_interval(path: &Path) -> Result<Option<u32>, CliError> {
    let mut last: Option<u64> = None;
    let mut best: Option<u64> = None;
    for f in read_features_jsonl(open(path)?) {
        let f = f.map_err(|e| CliError::from(e).context(path))?;
        if let Some(prev) = last {
            let gap = f.timestamp_ms.saturating_sub(prev);
            if gap > 0 {
                best = Some(best.map_or(gap, |b| b.min(gap)));
            }
        }
        last = Some(f.timestamp_ms);
    }
    Ok(best.and_then(|b| u32::try_from(b).ok()))
}

pub fn aggregate(cfg: &FileConfig, args: AggregateArgs) -> Result<(), CliError> {
    let input_dir = parent_of(&args.features);
    let meta: Option<RunMeta> = match fs::read_to_string(input_dir.join(RUN_META)) {
        Ok(text) => serde_json::from_str(&text).ok(),
        Err(_) => None,
    };
    let frame_interval_ms = match args
        .frame_interval_ms
        .or(cfg.stream.frame_interval_ms)
        .or(meta.as_ref().map(|m| m.frame_interval_ms))
    {
        Some(v) => v,
        None => {
            let v = infer_interval(&args.features)?.unwrap_or(DEFAULT_FRAME_INTERVAL_MS);
            eprintln!("warning: frame interval not given; using {v} ms");
            v
        }
    };
    if frame_interval_ms == 0 {
        return Err(CliError::Input("frame interval must be > 0".into()));
    }
    let tz_offset_min =
        args.tz_offset_min.or(cfg.stream.tz_offset_min).or(meta.as_ref().map(|m| m.tz_offset_min)).unwrap_or(0);
    let sibling = input_dir.join(PHASES);
    let phases = if let Some(p) = &args.phases {
        PhaseMap::read_csv(open(p)?).map_err(|e| CliError::from(e).context(p))?
    } else if let Some(d) = args.intervention_from {
        PhaseMap::split_at(d)
    } else if sibling.is_file() {
        PhaseMap::read_csv(open(&sibling)?).map_err(|e| CliError::from(e).context(&sibling))?
    } else {
        eprintln!("warning: no phase labels given; every day is treated as normal");
        PhaseMap::default()
    };

    let mut agg = Aggregator::new(frame_interval_ms, tz_offset_min);
    let mut last_ts: Option<u64> = None;
    for (i, f) in read_features_jsonl(open(&args.features)?).enumerate() {
        let f = f.map_err(|e| CliError::from(e).context(&args.features))?;
        if last_ts.is_some_and(|t| f.timestamp_ms <= t) {
            return Err(CliError::Format(format!(
                "{}: record {}: timestamp {} is not after {}",
                args.features.display(),
                i + 1,
                f.timestamp_ms,
                last_ts.unwrap_or_default()
            )));
        }
        last_ts = Some(f.timestamp_ms);
        agg.push(&f);
    }
    if last_ts.is_none() {
        return Err(CliError::Format(format!("{}: no feature records", args.features.display())));
    }
    let (hourly, days) = agg.finish(&phases)?;
    let min_coverage = args.min_coverage.or(cfg.compare.min_coverage).unwrap_or(0.0);
    let total = days.len();
    let days = filter_by_coverage(days, min_coverage);
    if days.len() < total {
        eprintln!("warning: {} day(s) below coverage {min_coverage} left out", total - days.len());
    }

    let dir = out_dir(args.out, cfg, &input_dir)?;
    write_hourly_csv(create(&dir.join("hourly.csv"))?, &hourly)?;
    write_daily(&dir.join("daily.csv"), &days)?;
    for phase in [Phase::Normal, Phase::Intervention] {
        let subset: Vec<DailySummary> = days.iter().filter(|d| d.phase == phase).cloned().collect();
        write_daily(&dir.join(format!("daily_{}.csv", phase.as_str())), &subset)?;
    }
    let count = |p: Phase| days.iter().filter(|d| d.phase == p).count();
    println!(
        "{} hours, {} days ({} normal, {} intervention) -> {}",
        hourly.len(),
        days.len(),
        count(Phase::Normal),
        count(Phase::Intervention),
        dir.display()
    );
    Ok(())
}

pub fn compare(cfg: &FileConfig, args: CompareArgs) -> Result<(), CliError> {
    let min_coverage = args.min_coverage.or(cfg.compare.min_coverage).unwrap_or(0.0);
    let normal = filter_by_coverage(read_daily(&args.normal)?, min_coverage);
    let intervention = filter_by_coverage(read_daily(&args.intervention)?, min_coverage);
    let strategy = args.strategy.or(cfg.compare.strategy).unwrap_or(PairingStrategy::ByIndex);
    let hourly = if args.per_hour_slot || cfg.compare.per_hour_slot.unwrap_or(false) {
        HourlyPairing::PerHourSlot
    } else {
        HourlyPairing::PerDay
    };
    let report = comparison_table(&normal, &intervention, strategy, hourly)?;
    let dir = out_dir(args.out, cfg, &parent_of(&args.normal))?;
    write_json(&dir.join("comparison.json"), &report)?;
    let text = report.to_text();
    let txt_path = dir.join("comparison.txt");
    fs::write(&txt_path, &text).map_err(|e| CliError::io(&txt_path, e))?;
    print!("{text}");
    Ok(())
}

fn parse_band(s: &str) -> Result<(u8, u8), CliError> {
    let bad = || CliError::Input(format!("band {s:?}: expected LO-HI with hours 0..=23"));
    let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
    let lo: u8 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u8 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || hi > 23 {
        return Err(bad());
    }
    Ok((lo, hi))
}

#[derive(Debug, Serialize)]
struct BandReport {
    band: (u8, u8),
    normal_days: usize,
    intervention_days: usize,
    normal_band_minutes: f64,
    intervention_band_minutes: f64,
    change_percent: f64,
    normal_peak_hour: usize,
    intervention_peak_hour: usize,
}

pub fn report(cfg: &FileConfig, args: ReportArgs) -> Result<(), CliError> {
    let band = match &args.band {
        Some(s) => parse_band(s)?,
        None => cfg.compare.band.unwrap_or((0, 5)),
    };
    let min_coverage = args.min_coverage.or(cfg.compare.min_coverage).unwrap_or(0.0);
    let days = filter_by_coverage(read_daily(&args.daily)?, min_coverage);
    let split = |p: Phase| days.iter().filter(|d| d.phase == p).cloned().collect::<Vec<_>>();
    let (normal, intervention) = (split(Phase::Normal), split(Phase::Intervention));
    let a = mean_hourly_profile(&normal).map_err(|_| CliError::Stats("no normal days to profile".into()))?;
    let b = mean_hourly_profile(&intervention).map_err(|_| CliError::Stats("no intervention days to profile".into()))?;
    let change = band_change(&a, &b, band)?;

    let dir = out_dir(args.out, cfg, &parent_of(&args.daily))?;
    let profile_path = dir.join("profile.csv");
    let mut w = csv::Writer::from_writer(create(&profile_path)?);
    let csv_err = |e: csv::Error| CliError::Input(format!("{}: {e}", profile_path.display()));
    w.write_record(["hour", "normal_minutes", "intervention_minutes"]).map_err(csv_err)?;
    for h in 0..24 {
        w.write_record([h.to_string(), format!("{:.6}", a[h]), format!("{:.6}", b[h])]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&profile_path, e))?;
    write_daily(&dir.join("series.csv"), &days)?;
    let sum = |p: &[f64; 24]| p[band.0 as usize..=band.1 as usize].iter().sum::<f64>();
    let out = BandReport {
        band,
        normal_days: normal.len(),
        intervention_days: intervention.len(),
        normal_band_minutes: sum(&a),
        intervention_band_minutes: sum(&b),
        change_percent: change,
        normal_peak_hour: argmax_bin(&a),
        intervention_peak_hour: argmax_bin(&b),
    };
    write_json(&dir.join("band.json"), &out)?;
    println!(
        "hours {:02}-{:02}: {:.2} -> {:.2} min/day, change {:.2}%; peak hour {} -> {}",
        band.0,
        band.1,
        out.normal_band_minutes,
        out.intervention_band_minutes,
        change,
        out.normal_peak_hour,
        out.intervention_peak_hour
    );
    Ok(())
}

pub fn scan(args: ScanArgs) -> Result<(), CliError> {
    let findings = scan_dir(&args.dir, args.width, args.height).map_err(|e| CliError::io(&args.dir, e))?;
    if findings.is_empty() {
        println!("{}: clean", args.dir.display());
        return Ok(());
    }
    for f in &findings {
        let loc = if f.location.is_empty() { String::new() } else { format!(" ({})", f.location) };
        println!("{}{loc}: {}", f.file.display(), f.reason);
    }
    Err(CliError::Format(format!("{} finding(s) in {}", findings.len(), args.dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_parse() {
        assert_eq!(parse_band("0-5").unwrap(), (0, 5));
        assert_eq!(parse_band("22-23").unwrap(), (22, 23));
        assert!(parse_band("5-0").is_err());
        assert!(parse_band("0-24").is_err());
        assert!(parse_band("night").is_err());
    }
}
