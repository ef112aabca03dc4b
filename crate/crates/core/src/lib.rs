//! Point counts and zeta functions of curves and glued curve-like spaces
//! over prime fields, computed two independent ways: a truncated
//! overconvergent de Rham cohomology pipeline (Frobenius trace formula) and
//! a brute-force finite-field enumeration oracle that certifies it.

pub mod algebra;
pub mod cech;
pub mod cohomology;
pub mod frobenius;
pub mod nuclear;
pub mod qseries;
pub mod oracle;
pub mod padic;
pub mod poly;
pub mod series;
pub mod suites;

pub use algebra::{AlgebraError, AlgebraPresentation, DifferentialForm, FamilyTag};
pub use padic::{PadicError, PadicScalar, Valuation};
pub use series::{DaggerSeries, DecayWitness, MonomialExp, SeriesError};
