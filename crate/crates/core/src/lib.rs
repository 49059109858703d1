//! Hyponormality of Toeplitz operators T_{zⁿ + C|z|ˢ} on weighted Bergman spaces
//! A²(ν) with radial weight dν = dμ(r) dθ/2π.
//!
//! The operator is hyponormal iff |C| ≤ 1/‖J(ν)‖ for a banded symmetric Jacobi
//! operator J(ν) built from the moments of μ. The crate evaluates those moments
//! ([`measures`]), builds J(ν) lazily ([`jacobi`]), brackets its norm with
//! certified bounds ([`spectral`]) and turns the bracket into the threshold, with
//! an independent check through the variational form of the commutator
//! ([`hyponormality`]).
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! `f64`.
//!
//! ```
//! use std::sync::Arc;
//! use hyponorm::{threshold, Jacobi, Moments, Params, Policy};
//!
//! let params = Params::new(1, 2.0).unwrap();
//! let op = Jacobi::new(params, Arc::new(Moments::area()));
//! let report = threshold(&op, params, 1e-6, &Policy::default()).unwrap();
//! assert!((report.c_max - 0.5).abs() < 1e-6);
//! ```

pub mod error;
pub mod hyponormality;
pub mod jacobi;
pub mod measures;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use hyponormality::{
    commutator_form, form_parts, leading_section_coefficients, oracle_crosscheck, rayleigh_kappa,
    section_coefficients, threshold, Classification, CoefficientVector, FormParts, HyponormalityReport, MomentForm,
    VariationalForm,
};
pub use jacobi::{
    build_truncated, decouple, BandedOperator, Chain, ChainDecomposition, ConstantChain, JacobiOperator, SymbolParams,
    TruncatedMatrix,
};
pub use measures::{
    Atom, MeasureKind, MeasureSpec, MomentMethod, MomentProvider, ProviderOptions, ValidationReport,
};
pub use scalar::Scalar;
pub use spectral::{
    chain_eigenvalues, chain_extreme_eigenvalue, essential_edge, operator_norm, spectrum_scan, NormEstimate,
    NormStatus, SpectrumScan, TraceRecord, TruncationPolicy, Witness,
};

pub type Measure = MeasureSpec<f64>;
pub type Moments = MomentProvider<f64>;
pub type Params = SymbolParams<f64>;
pub type Jacobi = JacobiOperator<f64>;
pub type Policy = TruncationPolicy<f64>;
pub type Norm = NormEstimate<f64>;
pub type Report = HyponormalityReport<f64>;
