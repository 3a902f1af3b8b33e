//! Sparse Grassmannian constellations for noncoherent MIMO.
//!
//! The crate covers the full design/evaluation loop:
//!
//! * [`grassmann`]: points on the complex Grassmann manifold, principal angles and distances.
//! * [`schubert`]: Schubert cells, column-orthogonal sparsity patterns and their parametrization.
//! * [`baselines`]: Exp-Map and Haar-random constructions.
//! * [`designer`]: MCD/MCPD manifold optimization and the sparse parametric design.
//! * [`analysis`]: pairwise error probability bounds, union bound and the AMI lower bound.
//! * [`simulator`]: Monte Carlo SER/AMI estimation with dense and sparse GLRT detectors.
//! * [`io`]: constellation files, ELLPACK storage and CSV results.

pub mod analysis;
pub mod baselines;
pub mod designer;
pub mod error;
pub mod grassmann;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod schubert;
pub mod simulator;

pub use error::{Error, Result};
pub use grassmann::{Constellation, DistanceMetric, GrassmannPoint, PrincipalAngles};
pub use io::SparseConstellationStore;
pub use linalg::{CMatrix, C64};
pub use schubert::{ParamSet, SchubertCell, SparsityPattern};
