//! Bergman measures on toric Kähler manifolds: norming constants, density of
//! states, lattice measures and their entropy asymptotics.

pub mod asymptotics;
pub mod bergman;
pub mod error;
pub mod logspace;
pub mod measures;
pub mod polytope;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod tolerances;

pub use bergman::{NormingTable, NormingTableData, TableMethod};
pub use error::{Error, Result};
pub use polytope::{DelzantPolytope, Facet, LatticePointSet, SurfaceMeasure};
pub use potentials::{GaugeShift, PotentialKind, PotentialPair};
pub use report::{CheckReport, Verdict};
