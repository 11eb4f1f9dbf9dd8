//! Configuration, experiment orchestration, metrics and SVG rendering.

mod config;
mod experiment;
mod metrics;
mod render;

pub use config::{
    CollectionSection, EvaluationSection, ExperimentConfig, ExperimentSection, Method, ToolsSection, TrainingSection,
};
pub use experiment::*;
pub use metrics::*;
pub use render::{render_grid, render_svg, Sketch, ViewBox, ARROW_LENGTH, MARGIN};
