//! Mountain-style scene-text detection toolkit: exact ground-truth map
//! generation for quad and curved text (text score, center-border
//! probability, center-direction), the corresponding training losses, a
//! parallel pixel-grouping post-processor that climbs the probability
//! mountain to its peak, polygon fitting, and polygon-IoU evaluation.

pub mod detect;
pub mod eval;
pub mod geometry;
pub mod grouping;
pub mod io;
pub mod labelgen;
pub mod loss;
pub mod synth;

pub use detect::{detect_pipeline, DetectMode, Detection, PredictedMaps};
pub use geometry::{Point, PolyKind, TextPolygon};
pub use grouping::{GraphSource, GroupConfig, InstanceMap};
pub use labelgen::{generate_labels, LabelSet, RasterMap};
pub use loss::{LossReport, LossWeights};
