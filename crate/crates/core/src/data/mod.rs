//! Dataset generation, tensorisation, normalisation and storage.

pub mod container;
pub mod darcy;
pub mod dataset;
pub mod generate;
pub mod grf;
pub mod normalize;
pub mod timesample;
pub mod wells;

pub use container::{Container, Metadata, Payload, Record};
pub use darcy::{solve_darcy, solve_darcy_with, CgOptions};
pub use dataset::Dataset;
pub use generate::{gen_darcy, gen_transient_synthetic, TransientSpec};
pub use grf::{grf_to_permeability, sample_grf, GrfSampler};
pub use normalize::{NormMode, Normalizer};
pub use timesample::log_time_sample;
pub use wells::{bitmask_embed, bitmask_extract, WellMask, WellRole};
