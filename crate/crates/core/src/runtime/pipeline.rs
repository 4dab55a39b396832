//! One output tick: fold in camera frames and detections, update tracks,
//! advance snow and background, composite.

use std::path::Path;
use std::sync::Arc;

use crate::compose::{build_scene, composite, extract_face_sprite, ComposeError};
use crate::detect::{Detection, Detector};
use crate::frame::{FrameError, Rgba8Frame};
use crate::geom::Rect;
use crate::runtime::clock::Timestamp;
use crate::runtime::config::EngineConfig;
use crate::runtime::source::{list_pngs, CapturedFrame, SourceError};
use crate::snow::{snow_raster, SnowState};
use crate::track::{Tracker, SLOT_COUNT};

/// Looping pre-rendered background animation.
#[derive(Debug, Clone)]
pub struct Background {
    frames: Vec<Arc<Rgba8Frame>>,
    fps: u32,
}

impl Background {
    pub fn new(frames: Vec<Arc<Rgba8Frame>>, fps: u32) -> Self {
        assert!(!frames.is_empty() && fps > 0);
        Self { frames, fps }
    }

    pub fn load_dir(dir: &Path, fps: u32) -> Result<Self, SourceError> {
        let files = list_pngs(dir)?;
        if files.is_empty() {
            return Err(SourceError::Spec(format!("no PNG frames in {}", dir.display())));
        }
        let frames = files
            .iter()
            .map(|f| Rgba8Frame::load_png(f).map(|fr| Arc::new(fr.into_premultiplied())))
            .collect::<Result<Vec<_>, FrameError>>()?;
        Ok(Self::new(frames, fps))
    }

    /// Dark blue vertical gradient, used when no animation is configured.
    pub fn night(width: u32, height: u32) -> Self {
        let data = (0..height)
            .flat_map(|y| {
                let v = (f64::from(y) / f64::from(height.max(1)) * 40.0) as u8;
                (0..width).flat_map(move |_| [10 + v / 2, 20 + v / 2, 50 + v, 255])
            })
            .collect();
        let frame = Rgba8Frame::new(width, height, data, true).expect("dimensions match");
        Self::new(vec![Arc::new(frame)], 1)
    }

    pub fn from_config(config: &EngineConfig) -> Result<Self, SourceError> {
        match &config.background.dir {
            Some(dir) => Self::load_dir(dir, config.background.fps),
            None => Ok(Self::night(
                config.pipeline.output_width,
                config.pipeline.output_height,
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_at(&self, at: Timestamp) -> Arc<Rgba8Frame> {
        let i = at.periods(self.fps) % self.frames.len() as u64;
        Arc::clone(&self.frames[i as usize])
    }
}

/// Detections of one camera frame, in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

/// Grayscale, downscale, detect, and map rects back to camera pixels.
pub fn detect_faces(detector: &Detector, camera: &Rgba8Frame, downscale: f64) -> Vec<Detection> {
    let small = camera.luma().downscale(downscale);
    let bounds = Rect::new(0, 0, camera.width() as i32, camera.height() as i32);
    detector
        .detect(&small)
        .into_iter()
        .filter_map(|d| {
            let r = d.rect.to_f64().scaled(1.0 / downscale).round();
            r.intersect(&bounds).map(|rect| Detection { rect, ..d })
        })
        .collect()
}

/// Mirrors the frame when the config asks for it.
pub fn prepare_camera(frame: CapturedFrame, mirror: bool) -> CapturedFrame {
    if mirror {
        CapturedFrame {
            frame: Arc::new(frame.frame.mirrored_horizontally()),
            ..frame
        }
    } else {
        frame
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CachedSprite {
    track_id: u64,
    frame_index: u64,
    rect: Rect,
    sprite: Arc<Rgba8Frame>,
}

/// Everything the render stage owns. Deterministic given its inputs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: Arc<EngineConfig>,
    background: Background,
    pub tracker: Tracker,
    pub snow: SnowState,
    camera: Option<CapturedFrame>,
    sprites: [Option<CachedSprite>; SLOT_COUNT],
    ticks: u64,
}

/// What a tick produced.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub frame: Arc<Rgba8Frame>,
    pub slot_occupancy: [bool; SLOT_COUNT],
}

impl Pipeline {
    pub fn new(config: Arc<EngineConfig>, background: Background) -> Self {
        let snow = SnowState::new(&config.snow);
        Self {
            config,
            background,
            tracker: Tracker::new(),
            snow,
            camera: None,
            sprites: Default::default(),
            ticks: 0,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Output ticks rendered so far (time stands still while asleep).
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Animation time of the next tick.
    pub fn time(&self) -> Timestamp {
        Timestamp::new(self.ticks, self.config.pipeline.output_hz)
    }

    pub fn camera(&self) -> Option<&CapturedFrame> {
        self.camera.as_ref()
    }

    pub fn set_camera(&mut self, frame: CapturedFrame) {
        self.camera = Some(frame);
    }

    /// Forgets the camera frame (the source was released).
    pub fn drop_camera(&mut self) {
        self.camera = None;
        self.sprites = Default::default();
    }

    pub fn apply_detections(&mut self, result: &DetectionResult) {
        self.tracker
            .update(&result.detections, &self.config.tracker);
        self.tracker.assign_slots();
    }

    fn slot_sprites(&mut self) -> Result<Vec<(usize, Arc<Rgba8Frame>)>, ComposeError> {
        let Some(camera) = &self.camera else {
            return Ok(Vec::new());
        };
        let bounds = Rect::new(0, 0, camera.frame.width() as i32, camera.frame.height() as i32);
        let mut out = Vec::new();
        let slots = self.tracker.slots();
        for (slot, track) in slots.iter().enumerate() {
            let Some(track) = track else {
                self.sprites[slot] = None;
                continue;
            };
            let Some(rect) = track.rect.round().intersect(&bounds) else {
                self.sprites[slot] = None;
                continue;
            };
            let key = (track.id, camera.index, rect);
            let cached = self.sprites[slot]
                .as_ref()
                .filter(|c| (c.track_id, c.frame_index, c.rect) == key)
                .map(|c| Arc::clone(&c.sprite));
            let sprite = match cached {
                Some(s) => s,
                None => {
                    let s = Arc::new(extract_face_sprite(
                        &camera.frame,
                        rect,
                        self.config.sprite.padding,
                        self.config.sprite.feather,
                    )?);
                    self.sprites[slot] = Some(CachedSprite {
                        track_id: track.id,
                        frame_index: camera.index,
                        rect,
                        sprite: Arc::clone(&s),
                    });
                    s
                }
            };
            out.push((slot, sprite));
        }
        Ok(out)
    }

    /// Renders the frame for the current tick and advances animation time.
    pub fn render(&mut self) -> Result<TickOutput, ComposeError> {
        let p = &self.config.pipeline;
        let (w, h) = (p.output_width, p.output_height);
        let dt = 1.0 / f64::from(p.output_hz);
        let background = self.background.frame_at(self.time());
        let sprites = self.slot_sprites()?;
        let snow = Arc::new(snow_raster(&self.snow, w, h));
        let scene = build_scene(background, &sprites, &self.config.slots, snow, w, h)?;
        let frame = Arc::new(composite(&scene)?);
        self.snow.step(&self.config.snow, dt);
        self.ticks += 1;
        let mut occupancy = [false; SLOT_COUNT];
        for (slot, _) in &sprites {
            occupancy[*slot] = true;
        }
        Ok(TickOutput {
            frame,
            slot_occupancy: occupancy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> Arc<EngineConfig> {
        let mut cfg = EngineConfig::default();
        cfg.pipeline.output_width = 320;
        cfg.pipeline.output_height = 200;
        cfg.slots = crate::compose::SlotGeometry::evenly_spaced(320, 200);
        cfg.normalize();
        cfg.validate().unwrap();
        Arc::new(cfg)
    }

    #[test]
    fn background_loops_at_its_rate() {
        let frames = (0..3u8)
            .map(|i| Arc::new(Rgba8Frame::filled(1, 1, [i, 0, 0, 255]).unwrap()))
            .collect();
        let bg = Background::new(frames, 12);
        assert_eq!(bg.frame_at(Timestamp::new(0, 60)).pixel(0, 0)[0], 0);
        assert_eq!(bg.frame_at(Timestamp::new(5, 60)).pixel(0, 0)[0], 1);
        assert_eq!(bg.frame_at(Timestamp::new(15, 60)).pixel(0, 0)[0], 0);
    }

    #[test]
    fn no_camera_renders_background_and_snow() {
        let cfg = small_config();
        let mut p = Pipeline::new(Arc::clone(&cfg), Background::night(320, 200));
        for _ in 0..5 {
            let out = p.render().unwrap();
            assert_eq!(out.frame.size(), (320, 200));
            assert!(out.frame.is_opaque());
            assert_eq!(out.slot_occupancy, [false; 4]);
        }
        assert_eq!(p.ticks(), 5);
    }

    #[test]
    fn identical_pipelines_render_identically() {
        let cfg = small_config();
        let mut a = Pipeline::new(Arc::clone(&cfg), Background::night(320, 200));
        let mut b = a.clone();
        for _ in 0..30 {
            assert_eq!(a.render().unwrap().frame.data(), b.render().unwrap().frame.data());
        }
    }
}
