//! Destinations for composed output frames.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::frame::{FrameError, Rgba8Frame};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("sink closed")]
    Closed,
    #[error("sink I/O: {0}")]
    Frame(#[from] FrameError),
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Unavailable(String),
}

pub trait FrameSink: Send {
    fn describe(&self) -> String;
    fn write(&mut self, frame: &Rgba8Frame) -> Result<(), SinkError>;
    fn flush(&mut self) -> Result<(), SinkError> {
        Ok(())
    }
    /// Further writes fail with [`SinkError::Closed`]. Idempotent.
    fn close(&mut self) -> Result<(), SinkError>;
    fn written(&self) -> u64;
}

/// Accepts every frame and keeps nothing.
#[derive(Debug, Default)]
pub struct NullSink {
    written: u64,
    closed: bool,
}

impl FrameSink for NullSink {
    fn describe(&self) -> String {
        "null".into()
    }

    fn write(&mut self, _frame: &Rgba8Frame) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        self.written += 1;
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        self.closed = true;
        Ok(())
    }

    fn written(&self) -> u64 {
        self.written
    }
}

/// Writes `frame_000000.png`, `frame_000001.png`, ... into a directory.
#[derive(Debug)]
pub struct PngSequenceSink {
    dir: PathBuf,
    written: u64,
    closed: bool,
}

impl PngSequenceSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SinkError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| SinkError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            written: 0,
            closed: false,
        })
    }

    pub fn frame_path(&self, index: u64) -> PathBuf {
        self.dir.join(format!("frame_{index:06}.png"))
    }
}

impl FrameSink for PngSequenceSink {
    fn describe(&self) -> String {
        format!("dir:{}", self.dir.display())
    }

    fn write(&mut self, frame: &Rgba8Frame) -> Result<(), SinkError> {
        if self.closed {
            return Err(SinkError::Closed);
        }
        frame.save_png(self.frame_path(self.written))?;
        self.written += 1;
        Ok(())
    }

    fn close(&mut self) -> Result<(), SinkError> {
        self.closed = true;
        Ok(())
    }

    fn written(&self) -> u64 {
        self.written
    }
}

#[cfg(feature = "window")]
pub use window::WindowSink;

#[cfg(feature = "window")]
mod window {
    use minifb::{Window, WindowOptions};

    use super::*;

    /// Desktop preview window. Must be used from one thread only, so the
    /// window is created lazily on first write.
    pub struct WindowSink {
        title: String,
        window: Option<Window>,
        buffer: Vec<u32>,
        written: u64,
        closed: bool,
    }

    // minifb windows are not Send; this sink is created on the engine thread
    // and never leaves it once a window exists.
    unsafe impl Send for WindowSink {}

    impl WindowSink {
        pub fn new(title: impl Into<String>) -> Self {
            Self {
                title: title.into(),
                window: None,
                buffer: Vec::new(),
                written: 0,
                closed: false,
            }
        }
    }

    impl FrameSink for WindowSink {
        fn describe(&self) -> String {
            "window".into()
        }

        fn write(&mut self, frame: &Rgba8Frame) -> Result<(), SinkError> {
            if self.closed {
                return Err(SinkError::Closed);
            }
            let (w, h) = (frame.width() as usize, frame.height() as usize);
            if self.window.is_none() {
                let win = Window::new(&self.title, w, h, WindowOptions::default())
                    .map_err(|e| SinkError::Unavailable(e.to_string()))?;
                self.window = Some(win);
            }
            self.buffer.clear();
            self.buffer.extend(frame.data().chunks_exact(4).map(|p| {
                (u32::from(p[0]) << 16) | (u32::from(p[1]) << 8) | u32::from(p[2])
            }));
            let win = self.window.as_mut().expect("created above");
            if !win.is_open() {
                return Err(SinkError::Unavailable("preview window was closed".into()));
            }
            win.update_with_buffer(&self.buffer, w, h)
                .map_err(|e| SinkError::Unavailable(e.to_string()))?;
            self.written += 1;
            Ok(())
        }

        fn close(&mut self) -> Result<(), SinkError> {
            self.closed = true;
            self.window = None;
            Ok(())
        }

        fn written(&self) -> u64 {
            self.written
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    Null,
    Dir(PathBuf),
    Window,
}

impl FromStr for SinkSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "null" => Ok(SinkSpec::Null),
            "window" => Ok(SinkSpec::Window),
            _ => match s.strip_prefix("dir:") {
                Some(p) if !p.is_empty() => Ok(SinkSpec::Dir(PathBuf::from(p))),
                _ => Err(format!("unknown sink {s:?} (expected window, dir:PATH or null)")),
            },
        }
    }
}

impl SinkSpec {
    pub fn build(&self) -> Result<Box<dyn FrameSink>, SinkError> {
        match self {
            SinkSpec::Null => Ok(Box::new(NullSink::default())),
            SinkSpec::Dir(dir) => Ok(Box::new(PngSequenceSink::new(dir)?)),
            #[cfg(feature = "window")]
            SinkSpec::Window => Ok(Box::new(WindowSink::new("snowframe"))),
            #[cfg(not(feature = "window"))]
            SinkSpec::Window => Err(SinkError::Unavailable(
                "built without the `window` feature; use dir:PATH or null".into(),
            )),
        }
    }
}
