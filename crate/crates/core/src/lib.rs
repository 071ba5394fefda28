//! Exact and empirical fractal dimensions of Moran sets and Moran
//! measures on the line.
//!
//! The crate is organized around a symbolic codetree description of a
//! spatially symmetric Moran construction ([`codetree`]), from which it
//! computes:
//!
//! - exact per-level dimension numbers and their liminf/limsup, the
//!   Hausdorff and packing dimensions of the limit set ([`dimension`]);
//! - measures on the codetree, entropy averages along paths, convergence
//!   diagnostics, and L^q spectra ([`measure`]);
//! - general filtrations of diameter-crossing collections and local
//!   dimensions computed through them ([`filtration`]);
//! - interval realizations with certified axiom checks ([`realization`]);
//! - empirical estimators (box counting, local slopes, packing sums,
//!   ball-to-word cover conversion) that cross-check the exact values
//!   ([`estimation`]).
//!
//! Numerics shared across modules (compensated summation, bisection,
//! trend extrapolation) live in [`numeric`]; all fallible APIs return
//! [`error::MoranError`].

// Guards like `!(x > 0.0)` are deliberate: they reject NaN along with
// out-of-range values, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codetree;
pub mod dimension;
pub mod error;
pub mod estimation;
pub mod filtration;
pub mod measure;
pub mod numeric;
pub mod realization;

pub use codetree::{ConstructionSpec, CylinderGeometry, LevelSpec, SpecKind, TailRule, Word};
pub use dimension::{
    cover_comparison_witness, dimension_report, homogeneous_dimension, solve_level_dimension,
    CoverClaim, CoverWitness, DimensionReport,
};
pub use error::{MoranError, Result};
pub use estimation::{
    ball_mass, ball_to_cylinder_cover, box_count_dimension, local_dimension_slope,
    sq_packing_sum, BoxCountReport, LocalSlopeReport, PointCloud, ScaleRange, SqPackingReport,
};
pub use filtration::{
    local_dim_via_filtration, verify_filtration_axioms, FiltrationAxiomReport, GeneralFiltration,
};
pub use measure::{
    check_entropy_conditions, dim_at_one_sandwich_check, entropy_average_ratio, lq_dimension,
    lq_spectrum_symbolic, ConditionReport, EntropyAverageTrace, LqEstimate, MoranMeasure,
    SandwichReport, Verdict, WeightRule,
};
pub use realization::{
    realize_on_interval, uniformly_perfect_example, verify_moran_axioms, GapRule,
    IntervalRealization, MoranAxiomReport,
};
