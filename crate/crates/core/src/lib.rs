//! Entropy-ordered curriculum training for deforestation detection.
//!
//! The pipeline segments a masked multi-band raster into superpixels
//! ([`segmentation`]), aggregates crowd votes per segment into majority labels
//! and Shannon entropies ([`crowd`]), describes each segment by 52 Haralick
//! texture values ([`texture`]), and trains a linear SVM ([`learner`]) on
//! entropy-ordered subsets to produce balanced-accuracy learning curves
//! ([`curriculum`]). [`synth`] generates scenes with ground truth so the whole
//! chain runs without satellite data, and [`pipeline`] wires the stages
//! together in memory.

pub mod crowd;
pub mod curriculum;
pub mod error;
pub mod fsio;
pub mod grid;
pub mod learner;
pub mod pipeline;
mod png_io;
pub mod raster;
pub mod segmentation;
pub mod stats;
pub mod synth;
pub mod texture;

pub use crowd::{Class, HorRecord, SegmentLabel, VoteRecord};
pub use error::{Error, Result};
pub use grid::Grid;
pub use raster::{BandId, CompositeImage, GroundTruthMask, LabImage, MaskClass, MultibandRaster};
pub use segmentation::SegmentMap;
