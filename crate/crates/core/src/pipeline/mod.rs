//! End-to-end series registration: manifest ingestion, preprocessing,
//! pairwise registration, propagation and output emission.

mod config;
mod manifest;
mod overlay;
mod pair;
mod preprocess;
mod run;

pub use config::{Method, OutputToggles, PipelineConfig, PreprocessConfig, StageSelection};
pub use manifest::{load_manifest, SectionEntry, SeriesManifest, StainLabel};
pub use overlay::{draw_boxes, draw_points, render_overlay, GREEN, RED, STROKE_WIDTH, YELLOW};
pub use pair::{register_pair, PairOutcome};
pub use preprocess::{preprocess, raw_to_working, to_gray8, working_size, Preprocessed};
pub use run::{evaluate_files, run_pipeline, write_metrics, write_outputs, RunOutputs, Timings};
