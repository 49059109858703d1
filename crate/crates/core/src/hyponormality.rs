//! Hyponormality of T_{zⁿ + C|z|ˢ}: the threshold C_max = 1/‖J(ν)‖ and the
//! variational form it comes from.
//!
//! The commutator condition is reduced to nonnegative real Taylor coefficients u
//! and c = |C|: multiplying the k-th coefficient by a unimodular factor chosen so
//! that every cross term is real and nonpositive can only decrease the form, so
//! the worst case over complex sequences is attained by nonnegative ones, and the
//! phase of C drops out. What is left is
//!
//! Q(u, c) = Σ_k u_k² w_k − 2c Σ_k u_k u_{k+n} b_k
//!
//! with w_k = γ_{2k+2n} for k < n, w_k = γ_{2k+2n} − γ_{2k}²/γ_{2k−2n} for k ≥ n and
//! b_k = γ_{2k+2n+s} − γ_{2k+2n}γ_{2k+s}/γ_{2k}. The operator is hyponormal iff
//! Q(u, c) ≥ 0 for every finite u ≥ 0, i.e. iff c·κ ≤ 1 where κ is the supremum of
//! the quotient 2Σu_k u_{k+n} b_k / Σu_k² w_k. Substituting v_k = u_k√w_k turns the
//! quotient into the Rayleigh quotient of J(ν), so κ = ‖J(ν)‖.
//!
//! Both differences in w_k and b_k cancel badly for large k, so the form is
//! evaluated in logarithms through log-convexity excesses rather than from raw
//! moments.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::jacobi::{BandedOperator, ConstantChain, JacobiOperator, SymbolParams};
use crate::measures::MomentProvider;
use crate::scalar::{from_usize, lit, Scalar};
use crate::spectral::{
    chain_extreme_eigenvalue, chain_top_eigenvector, operator_norm, NormEstimate, TruncationPolicy, Witness,
};

/// Diagonal weights and couplings of Q, in logarithms.
pub trait VariationalForm<F: Scalar>: Sync {
    /// Offset n between the coupled coefficients u_k and u_{k+n}.
    fn coupling_offset(&self) -> usize;

    /// ln w_k.
    fn ln_weight(&self, k: usize) -> Result<F>;

    /// ln b_k; −∞ when the coupling vanishes.
    fn ln_coupling(&self, k: usize) -> Result<F>;
}

/// The form of a measure and symbol.
#[derive(Debug, Clone, Copy)]
pub struct MomentForm<'a, F: Scalar> {
    pub provider: &'a MomentProvider<F>,
    pub params: SymbolParams<F>,
}

impl<F: Scalar> VariationalForm<F> for MomentForm<'_, F> {
    fn coupling_offset(&self) -> usize {
        self.params.n()
    }

    fn ln_weight(&self, k: usize) -> Result<F> {
        let n = self.params.n();
        let shift = lit::<F>(2.0) * from_usize(n);
        let t = lit::<F>(2.0) * from_usize(k);
        if k < n {
            self.provider.ln_moment(t + shift)
        } else {
            // (γ_{2k+2n}γ_{2k−2n} − γ_{2k}²)/γ_{2k−2n}
            Ok(self.provider.ln_pair_integral(t - shift, shift, shift)? - self.provider.ln_moment(t - shift)?)
        }
    }

    fn ln_coupling(&self, k: usize) -> Result<F> {
        let shift = lit::<F>(2.0) * from_usize(self.params.n());
        let t = lit::<F>(2.0) * from_usize(k);
        Ok(self.provider.ln_pair_integral(t, shift, self.params.s())? - self.provider.ln_moment(t)?)
    }
}

impl<F: Scalar> VariationalForm<F> for JacobiOperator<F> {
    fn coupling_offset(&self) -> usize {
        self.params().n()
    }

    fn ln_weight(&self, k: usize) -> Result<F> {
        MomentForm { provider: self.provider(), params: self.params() }.ln_weight(k)
    }

    fn ln_coupling(&self, k: usize) -> Result<F> {
        MomentForm { provider: self.provider(), params: self.params() }.ln_coupling(k)
    }
}

/// w_k = 1 and b_k = value, so that κ is the norm of the constant chain.
impl<F: Scalar> VariationalForm<F> for ConstantChain<F> {
    fn coupling_offset(&self) -> usize {
        self.band
    }

    fn ln_weight(&self, _k: usize) -> Result<F> {
        Ok(F::zero())
    }

    fn ln_coupling(&self, _k: usize) -> Result<F> {
        Ok(self.value.ln())
    }
}

/// Finitely supported nonnegative coefficients u_{start + j·stride} =
/// values[j]·exp(log_scale), all other coefficients zero.
///
/// The scale factor keeps vectors recovered deep in a chain representable when
/// the weights there under- or overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector<F> {
    start: usize,
    stride: usize,
    values: Vec<F>,
    log_scale: F,
}

impl<F: Scalar> CoefficientVector<F> {
    /// u_0, …, u_{m−1}.
    pub fn dense(values: Vec<F>) -> Result<Self> {
        Self::strided(0, 1, values, F::zero())
    }

    pub fn strided(start: usize, stride: usize, values: Vec<F>, log_scale: F) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= F::zero())) || !log_scale.is_finite() {
            return Err(Error::InvalidParameter("coefficients must be finite and nonnegative".into()));
        }
        if values.iter().all(|v| *v == F::zero()) {
            return Err(Error::ZeroVector);
        }
        Ok(Self { start, stride, values, log_scale })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn log_scale(&self) -> F {
        self.log_scale
    }

    /// Index of values[j].
    pub fn index(&self, j: usize) -> usize {
        self.start + j * self.stride
    }

    /// The coefficients as a dense vector u_0, …, u_K; only sensible for short
    /// supports near the origin.
    pub fn to_dense(&self) -> Vec<F> {
        let scale = self.log_scale.exp();
        let mut out = vec![F::zero(); self.index(self.values.len() - 1) + 1];
        for (j, &v) in self.values.iter().enumerate() {
            out[self.index(j)] = v * scale;
        }
        out
    }
}

/// Q(u, c) split as exp(ln_scale)·(diagonal − 2c·coupling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormParts<F> {
    pub diagonal: F,
    pub coupling: F,
    pub ln_scale: F,
}

impl<F: Scalar> FormParts<F> {
    pub fn value(&self, c: F) -> F {
        self.ln_scale.exp() * self.normalized(c) * self.diagonal
    }

    /// Q(u, c) / Σu_k²w_k.
    pub fn normalized(&self, c: F) -> F {
        F::one() - lit::<F>(2.0) * c * self.coupling / self.diagonal
    }

    pub fn kappa(&self) -> F {
        lit::<F>(2.0) * self.coupling / self.diagonal
    }
}

/// The two sums of Q for `u`, relative to a common scale.
pub fn form_parts<F: Scalar, V: VariationalForm<F> + ?Sized>(form: &V, u: &CoefficientVector<F>) -> Result<FormParts<F>> {
    let n = form.coupling_offset();
    if n % u.stride != 0 {
        return Err(Error::InvalidParameter(format!("stride {} does not divide n = {n}", u.stride)));
    }
    let partner = n / u.stride;
    let first = u.values.iter().position(|v| *v > F::zero()).expect("validated nonzero");
    let reference = form.ln_weight(u.index(first))?;
    let mut diagonal = F::zero();
    let mut coupling = F::zero();
    for (j, &v) in u.values.iter().enumerate() {
        if v == F::zero() {
            continue;
        }
        let k = u.index(j);
        diagonal += v * v * (form.ln_weight(k)? - reference).exp();
        if let Some(&w) = u.values.get(j + partner) {
            if w > F::zero() {
                coupling += v * w * (form.ln_coupling(k)? - reference).exp();
            }
        }
    }
    if !(diagonal > F::zero() && diagonal.is_finite()) {
        return Err(Error::DegenerateDenominator { k: u.index(first) });
    }
    Ok(FormParts {
        diagonal,
        coupling,
        ln_scale: reference + lit::<F>(2.0) * u.log_scale,
    })
}

/// Q(u, c); hyponormality with |C| = c holds iff this is ≥ 0 for every u.
pub fn commutator_form<F: Scalar, V: VariationalForm<F> + ?Sized>(form: &V, u: &CoefficientVector<F>, c: F) -> Result<F> {
    Ok(form_parts(form, u)?.value(c))
}

/// 2Σu_k u_{k+n} b_k / Σu_k² w_k, whose supremum over u is ‖J(ν)‖.
pub fn rayleigh_kappa<F: Scalar, V: VariationalForm<F> + ?Sized>(form: &V, u: &CoefficientVector<F>) -> Result<F> {
    Ok(form_parts(form, u)?.kappa())
}

/// Maps the top eigenvector of a chain section back to Taylor coefficients
/// through u_k = v_k / √w_k. Returns the vector and the section eigenvalue.
pub fn section_coefficients<F, O>(op: &O, residue: usize, first_slot: usize, slots: usize) -> Result<(CoefficientVector<F>, F)>
where
    F: Scalar,
    O: BandedOperator<F> + VariationalForm<F> + ?Sized,
{
    let n = op.band();
    if slots < 2 {
        return Err(Error::InvalidParameter("section needs at least two slots".into()));
    }
    let entries = op.chain_entries(residue, first_slot, slots - 1)?;
    let lambda = chain_extreme_eigenvalue(&entries, F::zero())?;
    let v = chain_top_eigenvector(&entries, lambda);
    let start = residue + first_slot * n;
    let reference = op.ln_weight(start)?;
    let half = lit::<F>(0.5);
    let values = v
        .iter()
        .enumerate()
        .map(|(j, &x)| Ok(x * (-half * (op.ln_weight(start + j * n)? - reference)).exp()))
        .collect::<Result<Vec<F>>>()?;
    Ok((CoefficientVector::strided(start, n, values, -half * reference)?, lambda))
}

/// Coefficients from the leading N×N section: the chain with the largest top
/// eigenvalue wins.
pub fn leading_section_coefficients<F, O>(op: &O, size: usize) -> Result<(CoefficientVector<F>, F)>
where
    F: Scalar,
    O: BandedOperator<F> + VariationalForm<F> + ?Sized,
{
    let n = op.band();
    if size < n + 1 {
        return Err(Error::InvalidParameter(format!("truncation size {size} must be at least n + 1 = {}", n + 1)));
    }
    let mut best: Option<(CoefficientVector<F>, F)> = None;
    for r in 0..n {
        let slots = (size - r).div_ceil(n);
        if slots < 2 {
            continue;
        }
        let candidate = section_coefficients(op, r, 0, slots)?;
        if best.as_ref().is_none_or(|b| candidate.1 > b.1) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("chain 0 has at least two slots"))
}

/// |κ(u) − lower| for u recovered from the section that attains the lower norm
/// bound of `estimate`.
pub fn oracle_crosscheck<F, O>(op: &O, estimate: &NormEstimate<F>) -> Result<F>
where
    F: Scalar,
    O: BandedOperator<F> + VariationalForm<F> + ?Sized,
{
    let Witness { residue, first_slot, slots, .. } = estimate.witness;
    let (u, _) = section_coefficients(op, residue, first_slot, slots)?;
    Ok((rayleigh_kappa(op, &u)? - estimate.lower).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Hyponormal,
    NotHyponormal,
    /// |C| lies inside the threshold bracket; tighten the tolerance.
    Undecided,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hyponormal => "Hyponormal",
            Self::NotHyponormal => "NotHyponormal",
            Self::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyponormalityReport<F> {
    pub params: SymbolParams<F>,
    pub norm: NormEstimate<F>,
    /// 1 / upper norm bound.
    pub threshold_lower: F,
    /// 1 / lower norm bound.
    pub threshold_upper: F,
    /// Midpoint of the threshold bracket.
    pub c_max: F,
    pub oracle_residual: F,
    pub certified: bool,
    pub banner: Option<String>,
}

impl<F: Scalar> HyponormalityReport<F> {
    /// Only |C| matters. A modulus within a few ulps of the lower threshold still
    /// counts as hyponormal so that C = C_max·e^{iθ} lands on the right side.
    pub fn classify(&self, c: Complex<F>) -> Classification {
        self.classify_modulus(c.norm())
    }

    pub fn classify_modulus(&self, modulus: F) -> Classification {
        let slack = F::one() + lit::<F>(8.0) * F::epsilon();
        if modulus <= self.threshold_lower * slack {
            Classification::Hyponormal
        } else if modulus > self.threshold_upper {
            Classification::NotHyponormal
        } else {
            Classification::Undecided
        }
    }
}

/// Threshold bracket for a Jacobi operator (or any operator that carries its own
/// variational form), with the oracle residual attached.
pub fn threshold<F, O>(op: &O, params: SymbolParams<F>, tol: F, policy: &TruncationPolicy<F>) -> Result<HyponormalityReport<F>>
where
    F: Scalar,
    O: BandedOperator<F> + VariationalForm<F> + ?Sized,
{
    let norm = operator_norm(op, tol, policy)?;
    let oracle_residual = oracle_crosscheck(op, &norm)?;
    let threshold_lower = norm.upper.recip();
    let threshold_upper = norm.lower.recip();
    Ok(HyponormalityReport {
        params,
        threshold_lower,
        threshold_upper,
        c_max: lit::<F>(0.5) * (threshold_lower + threshold_upper),
        oracle_residual,
        certified: norm.certified,
        banner: op.banner(),
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn area(n: usize, s: f64) -> JacobiOperator<f64> {
        JacobiOperator::new(SymbolParams::new(n, s).unwrap(), Arc::new(MomentProvider::area()))
    }

    #[test]
    fn small_form_by_hand() {
        let op = area(1, 2.0);
        let u = CoefficientVector::dense(vec![1.0, 1.0]).unwrap();
        for c in [0.0, 0.5, 3.0] {
            assert_relative_eq!(commutator_form(&op, &u, c).unwrap(), 7.0 / 12.0 - c / 6.0, max_relative = 1e-14);
        }
        assert_relative_eq!(rayleigh_kappa(&op, &u).unwrap(), 2.0 / 7.0, max_relative = 1e-14);
    }

    #[test]
    fn leading_coefficient_only() {
        let op = area(3, 1.0);
        let u = CoefficientVector::dense(vec![2.0]).unwrap();
        assert_relative_eq!(commutator_form(&op, &u, 10.0).unwrap(), 4.0 * 2.0 / 8.0, max_relative = 1e-14);
        assert_eq!(rayleigh_kappa(&op, &u).unwrap(), 0.0);
    }

    #[test]
    fn vector_validation() {
        assert!(matches!(CoefficientVector::<f64>::dense(vec![0.0, 0.0]), Err(Error::ZeroVector)));
        assert!(CoefficientVector::dense(vec![1.0, -1.0]).is_err());
        assert_eq!(
            CoefficientVector::strided(1, 2, vec![1.0, 3.0], 0.0).unwrap().to_dense(),
            vec![0.0, 1.0, 0.0, 3.0]
        );
    }

    #[test]
    fn recovered_vector_reproduces_section_eigenvalue() {
        let op = area(2, 3.0);
        let (u, lambda) = section_coefficients(&op, 1, 0, 40).unwrap();
        assert_relative_eq!(rayleigh_kappa(&op, &u).unwrap(), lambda, max_relative = 1e-12);
        let (u, lambda) = section_coefficients(&op, 0, 5000, 40).unwrap();
        assert_relative_eq!(rayleigh_kappa(&op, &u).unwrap(), lambda, max_relative = 1e-12);
    }

    #[test]
    fn boundary_classification() {
        let op = area(1, 2.0);
        let report = threshold(&op, op.params(), 1e-6, &TruncationPolicy::default()).unwrap();
        assert!(report.certified);
        assert!((report.c_max - 0.5).abs() <= 1e-6);
        let phase = Complex::from_polar(0.5, std::f64::consts::PI / 7.0);
        assert_eq!(report.classify(phase), Classification::Hyponormal);
        assert_eq!(report.classify(Complex::new(0.3, 0.0)), Classification::Hyponormal);
        assert_eq!(report.classify(Complex::new(0.6, 0.0)), Classification::NotHyponormal);
        assert!(report.oracle_residual <= 1e-5);
    }
}
