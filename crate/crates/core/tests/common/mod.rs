#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use snowframe::detect::{load_cascade, CascadeModel};
use snowframe::frame::Rgba8Frame;
use snowframe::runtime::{
    EngineConfig, FrameSink, FrameSource, SinkError, SourceError, SourceRead, Timestamp,
};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub const DEFAULT_CASCADE: &str = "cascades/haarcascade_frontalface_default.xml";

pub fn default_model() -> Arc<CascadeModel> {
    Arc::new(load_cascade(data(DEFAULT_CASCADE)).expect("stock cascade loads"))
}

/// Default config pointing at the repository's data directory.
pub fn repo_config() -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.cascade = data(DEFAULT_CASCADE);
    cfg.background.dir = Some(data("background"));
    cfg.source.faces_dir = Some(data("faces"));
    cfg.normalize();
    cfg
}

/// A cheaper config: 640x360 capture, 320x200 output.
pub fn small_config() -> EngineConfig {
    let mut cfg = repo_config();
    cfg.background.dir = None;
    cfg.source.faces_dir = None;
    cfg.pipeline.capture_width = 640;
    cfg.pipeline.capture_height = 360;
    cfg.pipeline.output_width = 320;
    cfg.pipeline.output_height = 200;
    cfg.slots = snowframe::compose::SlotGeometry::evenly_spaced(320, 200);
    cfg.normalize();
    cfg
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub size: (u32, u32),
    pub sha256: String,
}

/// Keeps a size and digest per frame instead of the pixels.
#[derive(Debug, Default, Clone)]
pub struct RecordingSink {
    pub frames: Arc<Mutex<Vec<FrameRecord>>>,
    closed: bool,
}

impl FrameSink for RecordingSink {
    fn describe(&self) -> String {
        "recording".into()
    }

    fn write(&mut self, frame: &Rgba8Frame) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        self.frames.lock().unwrap().push(FrameRecord {
            size: frame.size(),
            sha256: hex::encode(Sha256::digest(frame.data())),
        });
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        self.closed = true;
        Ok(())
    }

    fn written(&self) -> u64 {
        self.frames.lock().unwrap().len() as u64
    }
}

/// Logs the index of every frame the wrapped source hands out.
pub struct CountingSource {
    pub inner: Box<dyn FrameSource>,
    pub delivered: Arc<Mutex<Vec<u64>>>,
    pub opens: Arc<Mutex<u32>>,
}

impl CountingSource {
    pub fn new(inner: Box<dyn FrameSource>) -> Self {
        Self {
            inner,
            delivered: Arc::default(),
            opens: Arc::default(),
        }
    }
}

impl FrameSource for CountingSource {
    fn describe(&self) -> String {
        self.inner.describe()
    }

    fn fps(&self) -> u32 {
        self.inner.fps()
    }

    fn open(&mut self) -> Result<(), SourceError> {
        *self.opens.lock().unwrap() += 1;
        self.inner.open()
    }

    fn read(&mut self, at: Timestamp) -> Result<SourceRead, SourceError> {
        let r = self.inner.read(at)?;
        if let SourceRead::Frame { frame, .. } = &r {
            self.delivered.lock().unwrap().push(frame.index);
        }
        Ok(r)
    }

    fn release(&mut self) {
        self.inner.release()
    }
}

/// Greedy one-to-one pairing at `IoU >= threshold`; returns matched pairs
/// (reference index, candidate index).
pub fn pair_by_iou(
    reference: &[snowframe::geom::Rect],
    candidates: &[snowframe::geom::Rect],
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, r) in reference.iter().enumerate() {
        for (j, c) in candidates.iter().enumerate() {
            let iou = r.iou(c);
            if iou >= threshold {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut used_r = vec![false; reference.len()];
    let mut used_c = vec![false; candidates.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_r[i] && !used_c[j] {
            used_r[i] = true;
            used_c[j] = true;
            out.push((i, j));
        }
    }
    out
}
