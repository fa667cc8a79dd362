//! Frame stream to per-frame features. Each frame is dropped, and its
//! buffers zeroed, as soon as the next frame has been compared with it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::FrameFeatures;
use crate::frame::{release_frame, CapturedFrame, IngestError, RawFrame};
use crate::motion::{compute_motion, MotionConfig, MotionError, SpeedDomain, DEFAULT_ACTIVE_THRESHOLD, MAX_ACTIVE_THRESHOLD};
use crate::posture::{ClassifierHandle, ClassifierRegistry, PostureError, Skeleton};
use crate::presence::{run_detectors, Detector, DetectorRegistry, DetectorRole, PresenceError, PresenceRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Presence(#[from] PresenceError),
    #[error(transparent)]
    Posture(#[from] PostureError),
    #[error("frame {timestamp_ms}: {source}")]
    Motion { timestamp_ms: u64, source: MotionError },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("active-pixel threshold {0} outside 1..={MAX_ACTIVE_THRESHOLD}")]
    Threshold(u32),
}

/// Plug-in names and motion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub pose_detector: String,
    pub object_detector: String,
    pub classifier: String,
    pub threshold: u32,
    pub speed_domain: SpeedDomain,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            pose_detector: "scenario".into(),
            object_detector: "scenario".into(),
            classifier: "geometric-baseline".into(),
            threshold: DEFAULT_ACTIVE_THRESHOLD,
            speed_domain: SpeedDomain::Bbox,
        }
    }
}

pub struct Pipeline {
    pose: Box<dyn Detector>,
    object: Box<dyn Detector>,
    classifier: ClassifierHandle,
    motion: MotionConfig,
    prev: Option<RawFrame>,
}

impl Pipeline {
    pub fn new(settings: &PipelineSettings) -> Result<Self, PipelineError> {
        Self::with_registries(settings, &DetectorRegistry::default(), &ClassifierRegistry::default())
    }

    pub fn with_registries(
        settings: &PipelineSettings,
        detectors: &DetectorRegistry,
        classifiers: &ClassifierRegistry,
    ) -> Result<Self, PipelineError> {
        if !(1..=MAX_ACTIVE_THRESHOLD).contains(&settings.threshold) {
            return Err(PipelineError::Threshold(settings.threshold));
        }
        Ok(Self {
            pose: detectors.load(&settings.pose_detector, DetectorRole::Pose)?,
            object: detectors.load(&settings.object_detector, DetectorRole::Object)?,
            classifier: classifiers.load(&settings.classifier)?,
            motion: MotionConfig {
                threshold: settings.threshold,
                speed_domain: settings.speed_domain,
                ..MotionConfig::default()
            },
            prev: None,
        })
    }

    /// Features for one frame. The frame is kept only until the next call.
    pub fn process(&mut self, captured: CapturedFrame) -> Result<FrameFeatures, PipelineError> {
        let CapturedFrame { frame, sidecar } = captured;
        let (pose, obj) = run_detectors(&frame, sidecar.as_ref(), self.pose.as_ref(), self.object.as_ref());
        let record = PresenceRecord::fuse(&frame, &pose, &obj);
        let mut features = FrameFeatures {
            timestamp_ms: record.timestamp_ms,
            present: record.present,
            posture: None,
            motion: None,
        };
        if let (true, Some(body)) = (record.present, record.body_bbox) {
            features.posture = record
                .keypoints
                .as_deref()
                .filter(|k| !k.is_empty())
                .map(|k| self.classifier.classify(&Skeleton::from_keypoints(k)));
            if let Some(prev) = &self.prev {
                let m = compute_motion(prev, &frame, body, &self.motion)
                    .map_err(|source| PipelineError::Motion { timestamp_ms: record.timestamp_ms, source })?;
                features.motion = Some(m);
            }
        }
        if let Some(old) = self.prev.replace(frame) {
            release_frame(old);
        }
        Ok(features)
    }

    /// Drop the retained frame, e.g. at the end of a stream.
    pub fn reset(&mut self) {
        if let Some(old) = self.prev.take() {
            release_frame(old);
        }
    }

    /// Run a whole stream, handing each feature record to `sink`.
    pub fn run<I, F>(&mut self, frames: I, mut sink: F) -> Result<u64, PipelineError>
    where
        I: IntoIterator<Item = Result<CapturedFrame, IngestError>>,
        F: FnMut(FrameFeatures) -> Result<(), PipelineError>,
    {
        let mut n = 0;
        for captured in frames {
            sink(self.process(captured?)?)?;
            n += 1;
        }
        self.reset();
        Ok(n)
    }
}
