//! Engine for a camera-and-projector installation: visitors' faces are
//! detected, tracked onto four painted figures and composited with falling
//! snow over a looping background, with a lifecycle and remote control
//! surface suited to unattended kiosk operation.

pub mod detect;
pub mod frame;
pub mod geom;
pub mod compose;
pub mod snow;
pub mod track;
pub mod runtime;
pub mod control;
