//! Engine runtime: lifecycle, pacing, sources and sinks, the per-tick
//! pipeline, thermal model and telemetry.

pub mod clock;
pub mod config;
pub mod engine;
pub mod lifecycle;
pub mod mailbox;
pub mod pipeline;
pub mod sink;
pub mod source;
pub mod telemetry;
pub mod thermal;

pub use clock::{Timestamp, FrameCursor};
pub use config::{ConfigError, EngineConfig, Mode, PipelineConfig};
pub use engine::{
    ClockMode, Engine, EngineError, EngineHandle, EngineOptions, HandleError, RunSummary,
    SlotFace, TransitionOutcome, TransitionRecord,
};
pub use lifecycle::{transition, Action, EngineState, LifecycleEvent, Transition};
pub use pipeline::{detect_faces, Background, DetectionResult, Pipeline};
pub use sink::{FrameSink, NullSink, PngSequenceSink, SinkError, SinkSpec};
pub use source::{CapturedFrame, DirSource, FrameSource, NullSource, SourceError, SourceRead, SourceSpec, SyntheticSource};
pub use telemetry::Telemetry;
pub use thermal::{thermal_step, ThermalError, ThermalModel};
