//! Camera-frame sources.
//!
//! Sources are time-indexed: `read(at)` returns the newest frame whose
//! capture time is at or before `at`, never blocking. The engine supplies
//! simulated or wall-clock time measured from the moment the source was
//! (re)opened.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frame::{FrameError, Rgba8Frame};
use crate::geom::Rect;
use crate::runtime::clock::{Due, FrameCursor, Timestamp};
use crate::runtime::config::EngineConfig;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("frame source unavailable: {0}")]
    Unavailable(String),
    #[error("frame source not open")]
    NotOpen,
    #[error("frame source I/O: {0}")]
    Frame(#[from] FrameError),
    #[error("cannot list {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Spec(String),
}

/// A captured camera frame.
#[derive(Debug, Clone)]
pub struct CapturedFrame {
    /// Position in the source's stream since it was opened.
    pub index: u64,
    pub at: Timestamp,
    pub frame: Arc<Rgba8Frame>,
}

#[derive(Debug, Clone)]
pub enum SourceRead {
    /// A frame not returned before. `skipped` frames became due and were
    /// superseded since the previous read.
    Frame { frame: CapturedFrame, skipped: u64 },
    /// Nothing new.
    Pending,
    /// A non-looping source ran out.
    EndOfStream,
}

pub trait FrameSource: Send {
    fn describe(&self) -> String;
    fn fps(&self) -> u32;
    /// (Re)acquires the device; the stream restarts at frame 0.
    fn open(&mut self) -> Result<(), SourceError>;
    fn read(&mut self, at: Timestamp) -> Result<SourceRead, SourceError>;
    fn release(&mut self);
}

/// Produces no frames at all.
#[derive(Debug, Default)]
pub struct NullSource;

impl FrameSource for NullSource {
    fn describe(&self) -> String {
        "null".into()
    }

    fn fps(&self) -> u32 {
        1
    }

    fn open(&mut self) -> Result<(), SourceError> {
        Ok(())
    }

    fn read(&mut self, _at: Timestamp) -> Result<SourceRead, SourceError> {
        Ok(SourceRead::Pending)
    }

    fn release(&mut self) {}
}

/// A moving face patch on the synthetic card.
#[derive(Debug, Clone)]
struct Planted {
    patch: Arc<Rgba8Frame>,
    center: (f64, f64),
    amp: (f64, f64),
    freq: (f64, f64),
    phase: (f64, f64),
}

/// Generated test card: a smooth gradient with sparse grid lines and face
/// patches drifting along Lissajous paths.
#[derive(Debug)]
pub struct SyntheticSource {
    card: Arc<Rgba8Frame>,
    planted: Vec<Planted>,
    cursor: FrameCursor,
    open: bool,
}

impl SyntheticSource {
    pub fn new(width: u32, height: u32, fps: u32, patches: Vec<Rgba8Frame>, seed: u64) -> Self {
        let card = Rgba8Frame::new(
            width,
            height,
            (0..height)
                .flat_map(|y| {
                    (0..width).flat_map(move |x| {
                        let grid = x % 160 == 0 || y % 160 == 0;
                        let g = 70 + (60 * (x + y) / (width + height).max(1)) as u8;
                        let v = if grid { g + 30 } else { g };
                        [v, v, g + 10, 255]
                    })
                })
                .collect(),
            true,
        )
        .expect("card dimensions match");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = patches.len().max(1) as f64;
        let planted = patches
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let (pw, ph) = (f64::from(p.width()), f64::from(p.height()));
                let lane = f64::from(width) * (i as f64 + 0.5) / n;
                let room_x = ((f64::from(width) / n - pw) / 2.0).max(0.0);
                let room_y = ((f64::from(height) - ph) / 2.0).max(0.0);
                Planted {
                    patch: Arc::new(p),
                    center: (lane, f64::from(height) / 2.0),
                    amp: (room_x * rng.gen_range(0.3..0.9), room_y * rng.gen_range(0.3..0.9)),
                    freq: (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4)),
                    phase: (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)),
                }
            })
            .collect();
        Self {
            card: Arc::new(card),
            planted,
            cursor: FrameCursor::new(fps),
            open: false,
        }
    }

    /// Loads up to `count` PNG patches from `dir` (sorted by name).
    pub fn with_faces_dir(
        width: u32,
        height: u32,
        fps: u32,
        dir: &Path,
        count: usize,
        seed: u64,
    ) -> Result<Self, SourceError> {
        let patches = list_pngs(dir)?
            .into_iter()
            .take(count)
            .map(Rgba8Frame::load_png)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(width, height, fps, patches, seed))
    }

    /// Where each planted face sits in frame `index`.
    pub fn face_rects(&self, index: u64) -> Vec<Rect> {
        let t = index as f64 / f64::from(self.cursor.fps());
        let (w, h) = self.card.size();
        self.planted
            .iter()
            .map(|p| {
                let (pw, ph) = p.patch.size();
                let cx = p.center.0 + p.amp.0 * (p.freq.0 * t * std::f64::consts::TAU + p.phase.0).sin();
                let cy = p.center.1 + p.amp.1 * (p.freq.1 * t * std::f64::consts::TAU + p.phase.1).sin();
                let x = (cx - f64::from(pw) / 2.0).round().clamp(0.0, f64::from(w.saturating_sub(pw)));
                let y = (cy - f64::from(ph) / 2.0).round().clamp(0.0, f64::from(h.saturating_sub(ph)));
                Rect::new(x as i32, y as i32, pw as i32, ph as i32)
            })
            .collect()
    }

    pub fn render(&self, index: u64) -> Rgba8Frame {
        let mut frame = (*self.card).clone();
        let (w, h) = frame.size();
        for (p, r) in self.planted.iter().zip(self.face_rects(index)) {
            let patch = p.patch.to_straight();
            for py in 0..patch.height().min(h) {
                let y = r.y as u32 + py;
                if y >= h {
                    break;
                }
                for px in 0..patch.width().min(w) {
                    let x = r.x as u32 + px;
                    if x >= w {
                        break;
                    }
                    let [cr, cg, cb, _] = patch.pixel(px, py);
                    frame.set_pixel(x, y, [cr, cg, cb, 255]);
                }
            }
        }
        frame
    }
}

impl FrameSource for SyntheticSource {
    fn describe(&self) -> String {
        format!("synthetic ({} faces)", self.planted.len())
    }

    fn fps(&self) -> u32 {
        self.cursor.fps()
    }

    fn open(&mut self) -> Result<(), SourceError> {
        self.cursor.reset();
        self.open = true;
        Ok(())
    }

    fn read(&mut self, at: Timestamp) -> Result<SourceRead, SourceError> {
        if !self.open {
            return Err(SourceError::NotOpen);
        }
        match self.cursor.advance(at) {
            Due::Same => Ok(SourceRead::Pending),
            Due::Fresh { index, skipped } => Ok(SourceRead::Frame {
                frame: CapturedFrame {
                    index,
                    at: Timestamp::new(index, self.cursor.fps()),
                    frame: Arc::new(self.render(index)),
                },
                skipped,
            }),
        }
    }

    fn release(&mut self) {
        self.open = false;
    }
}

/// Numbered PNG frames, played at a fixed rate, optionally looping.
#[derive(Debug)]
pub struct DirSource {
    dir: PathBuf,
    files: Vec<PathBuf>,
    looping: bool,
    cursor: FrameCursor,
    open: bool,
}

pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, SourceError> {
    let entries = std::fs::read_dir(dir).map_err(|source| SourceError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

impl DirSource {
    pub fn new(dir: impl Into<PathBuf>, fps: u32, looping: bool) -> Result<Self, SourceError> {
        let dir = dir.into();
        let files = list_pngs(&dir)?;
        if files.is_empty() {
            return Err(SourceError::Spec(format!("no PNG frames in {}", dir.display())));
        }
        Ok(Self {
            dir,
            files,
            looping,
            cursor: FrameCursor::new(fps),
            open: false,
        })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for DirSource {
    fn describe(&self) -> String {
        format!("dir:{} ({} frames)", self.dir.display(), self.files.len())
    }

    fn fps(&self) -> u32 {
        self.cursor.fps()
    }

    fn open(&mut self) -> Result<(), SourceError> {
        self.cursor.reset();
        self.open = true;
        Ok(())
    }

    fn read(&mut self, at: Timestamp) -> Result<SourceRead, SourceError> {
        if !self.open {
            return Err(SourceError::NotOpen);
        }
        let n = self.files.len() as u64;
        if !self.looping && self.cursor.index_at(at) >= n {
            return Ok(SourceRead::EndOfStream);
        }
        match self.cursor.advance(at) {
            Due::Same => Ok(SourceRead::Pending),
            Due::Fresh { index, skipped } => {
                let frame = Rgba8Frame::load_png(&self.files[(index % n) as usize])?;
                Ok(SourceRead::Frame {
                    frame: CapturedFrame {
                        index,
                        at: Timestamp::new(index, self.cursor.fps()),
                        frame: Arc::new(frame),
                    },
                    skipped,
                })
            }
        }
    }

    fn release(&mut self) {
        self.open = false;
    }
}

/// Which source to build, as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSpec {
    Null,
    Synthetic,
    Dir(PathBuf),
    Camera,
}

impl FromStr for SourceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "null" => Ok(SourceSpec::Null),
            "synthetic" => Ok(SourceSpec::Synthetic),
            "camera" => Ok(SourceSpec::Camera),
            _ => match s.strip_prefix("dir:") {
                Some(p) if !p.is_empty() => Ok(SourceSpec::Dir(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown source {s:?} (expected synthetic, dir:PATH, camera or null)"
                )),
            },
        }
    }
}

impl SourceSpec {
    pub fn build(&self, config: &EngineConfig) -> Result<Box<dyn FrameSource>, SourceError> {
        let p = &config.pipeline;
        Ok(match self {
            SourceSpec::Null => Box::new(NullSource),
            SourceSpec::Synthetic => {
                let src = match &config.source.faces_dir {
                    Some(dir) => SyntheticSource::with_faces_dir(
                        p.capture_width,
                        p.capture_height,
                        p.capture_fps,
                        dir,
                        config.source.face_count,
                        config.source.seed,
                    )?,
                    None => SyntheticSource::new(
                        p.capture_width,
                        p.capture_height,
                        p.capture_fps,
                        Vec::new(),
                        config.source.seed,
                    ),
                };
                Box::new(src)
            }
            SourceSpec::Dir(dir) => {
                Box::new(DirSource::new(dir, p.capture_fps, config.source.loop_dir)?)
            }
            SourceSpec::Camera => {
                return Err(SourceError::Unavailable(
                    "no camera backend is compiled into this build; use synthetic or dir:PATH"
                        .into(),
                ))
            }
        })
    }
}
