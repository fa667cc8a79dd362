//! Frame ingest: timestamped pixel buffers from a synthetic scenario or a
//! recorded fixture file.
//!
//! [`RawFrame`] is the privacy boundary. It is neither `Clone` nor
//! `Serialize`, its buffers are zeroed when it is released or dropped, and
//! nothing downstream of feature extraction holds one.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::presence::SceneSample;
use crate::sim::{ScenarioConfig, ScenarioError, ScenarioFrames};

/// Magic bytes opening every recorded fixture.
pub const FIXTURE_MAGIC: &[u8; 4] = b"AMBF";

/// Default capture interval for fixtures (5 fps).
pub const DEFAULT_FRAME_INTERVAL_MS: u32 = 200;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read frame source {path}: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a frame fixture (bad magic bytes)")]
    BadMagic,
    #[error("malformed frame record {index}: {reason}")]
    Malformed { index: u64, reason: String },
    #[error("buffer length {actual} does not match {width}x{height} ({expected} expected)")]
    BufferLength { width: u32, height: u32, expected: usize, actual: usize },
    #[error("non-monotonic timestamps: {cur} follows {prev}")]
    NonMonotonic { prev: u64, cur: u64 },
    #[error("sidecar out of step with frames at timestamp {frame_ts} (sidecar has {sidecar_ts:?})")]
    SidecarMismatch { frame_ts: u64, sidecar_ts: Option<u64> },
    #[error("sidecar line {line}: {reason}")]
    SidecarFormat { line: usize, reason: String },
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// One camera sample. Lives only as long as feature extraction needs it.
pub struct RawFrame {
    timestamp_ms: u64,
    width: u32,
    height: u32,
    rgb: Vec<u8>,
    depth: Option<Vec<u16>>,
    released: bool,
}

impl RawFrame {
    pub fn new(
        timestamp_ms: u64,
        width: u32,
        height: u32,
        rgb: Vec<u8>,
        depth: Option<Vec<u16>>,
    ) -> Result<Self, IngestError> {
        let pixels = width as usize * height as usize;
        if rgb.len() != pixels * 3 {
            return Err(IngestError::BufferLength { width, height, expected: pixels * 3, actual: rgb.len() });
        }
        if let Some(d) = &depth {
            if d.len() != pixels {
                return Err(IngestError::BufferLength { width, height, expected: pixels, actual: d.len() });
            }
        }
        Ok(Self { timestamp_ms, width, height, rgb, depth, released: false })
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGB bytes; empty once released.
    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn depth(&self) -> Option<&[u16]> {
        self.depth.as_deref()
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn is_released(&self) -> bool {
        self.released
    }

    /// Zero and free the pixel buffers. Calling it again is a no-op.
    pub fn release(&mut self) {
        if self.released {
            return;
        }
        self.rgb.iter_mut().for_each(|b| *b = 0);
        self.rgb = Vec::new();
        if let Some(d) = self.depth.as_mut() {
            d.iter_mut().for_each(|v| *v = 0);
        }
        self.depth = None;
        self.released = true;
    }
}

impl Drop for RawFrame {
    fn drop(&mut self) {
        self.release();
    }
}

impl std::fmt::Debug for RawFrame {
    // Never print pixel data.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RawFrame")
            .field("timestamp_ms", &self.timestamp_ms)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("has_depth", &self.depth.is_some())
            .field("released", &self.released)
            .finish()
    }
}

/// Consume a processed frame, destroying its pixel payload.
pub fn release_frame(mut frame: RawFrame) {
    frame.release();
}

/// A frame plus the optional simulator sidecar sample for the same instant.
#[derive(Debug)]
pub struct CapturedFrame {
    pub frame: RawFrame,
    pub sidecar: Option<SceneSample>,
}

#[derive(Debug, Clone)]
pub enum SourceKind {
    Scenario(Box<ScenarioConfig>),
    Recorded { path: PathBuf, sidecar: Option<PathBuf> },
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub source: SourceKind,
    pub frame_interval_ms: u32,
    pub room: String,
    pub tz_offset_min: i32,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.frame_interval_ms == 0 {
            return Err(IngestError::InvalidConfig("frame interval must be > 0".into()));
        }
        if let SourceKind::Scenario(s) = &self.source {
            if s.frame_interval_ms != self.frame_interval_ms {
                return Err(IngestError::InvalidConfig(format!(
                    "scenario frame interval {} ms disagrees with stream interval {} ms",
                    s.frame_interval_ms, self.frame_interval_ms
                )));
            }
        }
        Ok(())
    }
}

/// Iterator over captured frames in timestamp order.
pub struct FrameStream {
    inner: StreamInner,
    last_ts: Option<u64>,
    failed: bool,
}

enum StreamInner {
    Recorded { frames: FixtureReader<BufReader<File>>, sidecar: Option<SidecarReader> },
    Scenario(Box<ScenarioFrames>),
}

pub fn open_stream(config: &StreamConfig) -> Result<FrameStream, IngestError> {
    config.validate()?;
    let inner = match &config.source {
        SourceKind::Recorded { path, sidecar } => {
            let file = File::open(path)
                .map_err(|source| IngestError::Unreadable { path: path.clone(), source })?;
            let frames = FixtureReader::new(BufReader::new(file))?;
            let sidecar = sidecar.as_deref().map(SidecarReader::open).transpose()?;
            StreamInner::Recorded { frames, sidecar }
        }
        SourceKind::Scenario(scenario) => StreamInner::Scenario(Box::new(ScenarioFrames::new(scenario)?)),
    };
    Ok(FrameStream { inner, last_ts: None, failed: false })
}

impl FrameStream {
    fn next_unchecked(&mut self) -> Option<Result<CapturedFrame, IngestError>> {
        match &mut self.inner {
            StreamInner::Scenario(frames) => frames.next().map(Ok),
            StreamInner::Recorded { frames, sidecar } => {
                let frame = match frames.next()? {
                    Ok(f) => f,
                    Err(e) => return Some(Err(e)),
                };
                let sample = match sidecar {
                    None => None,
                    Some(reader) => match reader.next_for(frame.timestamp_ms()) {
                        Ok(s) => Some(s),
                        Err(e) => return Some(Err(e)),
                    },
                };
                Some(Ok(CapturedFrame { frame, sidecar: sample }))
            }
        }
    }
}

impl Iterator for FrameStream {
    type Item = Result<CapturedFrame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_unchecked()?;
        let item = item.and_then(|captured| {
            let ts = captured.frame.timestamp_ms();
            match self.last_ts {
                Some(prev) if ts <= prev => Err(IngestError::NonMonotonic { prev, cur: ts }),
                _ => {
                    self.last_ts = Some(ts);
                    Ok(captured)
                }
            }
        });
        if item.is_err() {
            self.failed = true;
        }
        Some(item)
    }
}

/// Writes the length-prefixed binary fixture format:
/// `"AMBF"`, then per frame `u64 ts_ms, u16 width, u16 height, u8 has_depth`,
/// the RGB payload and, when flagged, a `u16` depth payload. Little-endian.
pub struct FixtureWriter<W: Write> {
    out: W,
}

impl FixtureWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        FixtureWriter::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> FixtureWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(FIXTURE_MAGIC)?;
        Ok(Self { out })
    }

    pub fn write_frame(&mut self, frame: &RawFrame) -> io::Result<()> {
        let width = u16::try_from(frame.width()).map_err(|_| invalid_data("width exceeds u16"))?;
        let height = u16::try_from(frame.height()).map_err(|_| invalid_data("height exceeds u16"))?;
        self.out.write_all(&frame.timestamp_ms().to_le_bytes())?;
        self.out.write_all(&width.to_le_bytes())?;
        self.out.write_all(&height.to_le_bytes())?;
        self.out.write_all(&[u8::from(frame.depth().is_some())])?;
        self.out.write_all(frame.rgb())?;
        if let Some(depth) = frame.depth() {
            for v in depth {
                self.out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn invalid_data(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Reads frames written by [`FixtureWriter`]. A zero-length input is an
/// empty stream.
pub struct FixtureReader<R: Read> {
    input: R,
    index: u64,
    done: bool,
}

impl<R: Read> FixtureReader<R> {
    pub fn new(mut input: R) -> Result<Self, IngestError> {
        let mut magic = [0u8; 4];
        let n = read_fully(&mut input, &mut magic)?;
        if n == 0 {
            return Ok(Self { input, index: 0, done: true });
        }
        if n < 4 || &magic != FIXTURE_MAGIC {
            return Err(IngestError::BadMagic);
        }
        Ok(Self { input, index: 0, done: false })
    }

    fn read_frame(&mut self) -> Result<Option<RawFrame>, IngestError> {
        let mut header = [0u8; 13];
        let n = read_fully(&mut self.input, &mut header)?;
        if n == 0 {
            return Ok(None);
        }
        let malformed = |reason: &str| IngestError::Malformed { index: self.index, reason: reason.to_string() };
        if n < header.len() {
            return Err(malformed("truncated header"));
        }
        let ts = u64::from_le_bytes(header[0..8].try_into().unwrap());
        let width = u16::from_le_bytes([header[8], header[9]]) as u32;
        let height = u16::from_le_bytes([header[10], header[11]]) as u32;
        let has_depth = match header[12] {
            0 => false,
            1 => true,
            _ => return Err(malformed("has_depth flag must be 0 or 1")),
        };
        let pixels = width as usize * height as usize;
        let mut rgb = vec![0u8; pixels * 3];
        if read_fully(&mut self.input, &mut rgb)? < rgb.len() {
            return Err(malformed("truncated rgb payload"));
        }
        let depth = if has_depth {
            let mut raw = vec![0u8; pixels * 2];
            if read_fully(&mut self.input, &mut raw)? < raw.len() {
                return Err(malformed("truncated depth payload"));
            }
            Some(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
        } else {
            None
        };
        self.index += 1;
        RawFrame::new(ts, width, height, rgb, depth).map(Some)
    }
}

impl<R: Read> Iterator for FixtureReader<R> {
    type Item = Result<RawFrame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Like `read_exact`, but reports how many bytes were read before EOF.
fn read_fully<R: Read>(input: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Sidecar channel reader: one [`SceneSample`] JSON object per line, in
/// lockstep with the fixture frames.
struct SidecarReader {
    lines: io::Lines<BufReader<File>>,
    line: usize,
}

impl SidecarReader {
    fn open(path: &Path) -> Result<Self, IngestError> {
        use std::io::BufRead;
        let file =
            File::open(path).map_err(|source| IngestError::Unreadable { path: path.to_path_buf(), source })?;
        Ok(Self { lines: BufReader::new(file).lines(), line: 0 })
    }

    fn next_for(&mut self, frame_ts: u64) -> Result<SceneSample, IngestError> {
        let text = loop {
            self.line += 1;
            match self.lines.next() {
                None => return Err(IngestError::SidecarMismatch { frame_ts, sidecar_ts: None }),
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let sample: SceneSample = serde_json::from_str(&text)
            .map_err(|e| IngestError::SidecarFormat { line: self.line, reason: e.to_string() })?;
        if sample.timestamp_ms != frame_ts {
            return Err(IngestError::SidecarMismatch { frame_ts, sidecar_ts: Some(sample.timestamp_ms) });
        }
        Ok(sample)
    }
}
