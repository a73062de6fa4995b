//! Random walks on crystal lattices: stationary data, harmonic realizations,
//! the Albanese metric, the drift-removing change of measure, exact n-step
//! kernels and Monte Carlo checks of the limit theorems.

pub mod error;
pub mod girsanov;
pub mod harmonic;
pub mod lattice;
pub mod montecarlo;
pub mod report;
pub mod stationary;
pub mod transition;

pub use error::{Error, Result};
pub use girsanov::{change_kernel, interpolation_family, ChangedKernel, Frame, FreeEnergyContext};
pub use harmonic::{albanese, modified_harmonic_realization, AlbaneseMetric, OneForm, Realization};
pub use lattice::{
    build_lattice, builtin, Builtin, CrystalLattice, DartId, LatticeDescription, LatticeState, QuotientGraph,
    TransitionKernel, VertexId,
};
pub use montecarlo::{CltStats, KernelChoice, WalkConfig};
pub use report::{analyze, AnalysisReport};
pub use stationary::{stationary_measure, CycleBasis, StationaryMeasure};
pub use transition::{n_step, CellDistribution, RatioRow};
