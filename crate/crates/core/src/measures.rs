//! Radial probability measures on [0, 1] and their moment functional.
//!
//! A measure μ on [0, 1] induces the rotation-invariant measure
//! dν(re^{iθ}) = dμ(r) dθ/2π on the disk, and everything downstream depends on μ
//! only through the moments γ_t = ∫ x^t dμ(x), t ≥ 0 real.
//!
//! Entries of the Jacobi operator are built from differences of nearly equal moment
//! products, so besides γ_t the provider exposes two derived quantities that each
//! measure family evaluates without that subtraction where it can:
//!
//! * the log ratio ln(γ_{t+h}/γ_t), and
//! * the log-convexity excess E(t; p, q) = γ_{t+p+q}γ_t / (γ_{t+p}γ_{t+q}) − 1 ≥ 0.
//!
//! For the beta family with an even-integer shift p = 2m the excess reduces to a
//! finite product of rational factors; for atoms it is a positive double sum.
//! Sampled densities and quadrature-backed providers fall back to differencing
//! log moments and report how many digits that cost.

use std::collections::HashMap;
use std::io::Read;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk15, linear_interpolant_moment};
use crate::scalar::{lit, Scalar};
use crate::special::{ln_gamma, ln_gamma_ratio};

const MASS_TOLERANCE: f64 = 1e-12;
const QUADRATURE_PANELS: usize = 10_000;
/// Digits lost to cancellation above which a value is flagged.
pub const CANCELLATION_DIGITS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<F> {
    pub x: F,
    pub mass: F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample<F> {
    pub x: F,
    pub w: F,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind<F> {
    /// dμ = 2r dr, so that ν is normalized area measure.
    Area,
    /// dμ = (β+1)(1−r²)^β 2r dr, β > −1.
    Beta { beta: F },
    /// Finite sum of point masses, strictly increasing in x.
    Atoms(Vec<Atom<F>>),
    /// Tabulated density w(x) on an increasing grid in [0, 1], interpolated
    /// linearly between nodes.
    SampledDensity(Vec<DensitySample<F>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec<F> {
    pub kind: MeasureKind<F>,
    /// Set once validation rescaled the mass to 1.
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub mass: f64,
    pub mass_ok: bool,
    pub atom_at_one: bool,
    pub sup_support_lt_one: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// `1 ∈ supp μ` and `μ({1}) = 0`.
    pub fn hypotheses_hold(&self) -> bool {
        !self.atom_at_one && !self.sup_support_lt_one
    }

    /// Banner carried by every downstream result computed from a measure that
    /// violates the hypotheses.
    pub fn banner(&self) -> Option<String> {
        let mut reasons = Vec::new();
        if self.atom_at_one {
            reasons.push("mu has an atom at 1");
        }
        if self.sup_support_lt_one {
            reasons.push("1 is not in the support of mu");
        }
        if reasons.is_empty() {
            None
        } else {
            Some(format!("ASSUMPTIONS VIOLATED: {}", reasons.join("; ")))
        }
    }
}

impl<F: Scalar> MeasureSpec<F> {
    pub fn area() -> Self {
        Self::from_kind(MeasureKind::Area)
    }

    pub fn beta(beta: F) -> Self {
        Self::from_kind(MeasureKind::Beta { beta })
    }

    pub fn atoms(points: impl IntoIterator<Item = (F, F)>) -> Self {
        Self::from_kind(MeasureKind::Atoms(
            points.into_iter().map(|(x, mass)| Atom { x, mass }).collect(),
        ))
    }

    pub fn density(samples: impl IntoIterator<Item = (F, F)>) -> Self {
        Self::from_kind(MeasureKind::SampledDensity(
            samples.into_iter().map(|(x, w)| DensitySample { x, w }).collect(),
        ))
    }

    fn from_kind(kind: MeasureKind<F>) -> Self {
        Self { kind, normalized: false }
    }

    /// Reads an atom list from CSV with header `x,mass`.
    pub fn atoms_from_csv<R: Read>(reader: R) -> Result<Self> {
        Ok(Self::atoms(read_pairs(reader, ["x", "mass"])?))
    }

    /// Reads a tabulated density from CSV with header `x,w`.
    pub fn density_from_csv<R: Read>(reader: R) -> Result<Self> {
        Ok(Self::density(read_pairs(reader, ["x", "w"])?))
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            MeasureKind::Area => "area".to_string(),
            MeasureKind::Beta { beta } => format!("beta:{beta}"),
            MeasureKind::Atoms(a) => format!("atoms[{}]", a.len()),
            MeasureKind::SampledDensity(d) => format!("density[{}]", d.len()),
        }
    }

    /// Total mass, computed the same way moments are.
    pub fn total_mass(&self) -> F {
        match &self.kind {
            MeasureKind::Area | MeasureKind::Beta { .. } => F::one(),
            MeasureKind::Atoms(atoms) => atoms.iter().fold(F::zero(), |acc, a| acc + a.mass),
            MeasureKind::SampledDensity(samples) => {
                let (x, w): (Vec<F>, Vec<F>) = samples.iter().map(|s| (s.x, s.w)).unzip();
                linear_interpolant_moment(&x, &w, F::zero()).value
            }
        }
    }

    fn check_structure(&self) -> Result<()> {
        let in_unit = |x: F| x >= F::zero() && x <= F::one();
        match &self.kind {
            MeasureKind::Area => Ok(()),
            MeasureKind::Beta { beta } => {
                if beta.is_finite() && *beta > -F::one() {
                    Ok(())
                } else {
                    Err(Error::InvalidMeasure(format!("beta must be finite and > -1, got {beta}")))
                }
            }
            MeasureKind::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::EmptySupport);
                }
                for a in atoms {
                    if !in_unit(a.x) || !(a.mass.is_finite() && a.mass > F::zero()) {
                        return Err(Error::InvalidMeasure(format!(
                            "atom ({}, {}) needs x in [0,1] and positive mass",
                            a.x, a.mass
                        )));
                    }
                }
                if atoms.windows(2).any(|w| w[1].x <= w[0].x) {
                    return Err(Error::InvalidMeasure("atom locations must be strictly increasing".into()));
                }
                Ok(())
            }
            MeasureKind::SampledDensity(samples) => {
                if samples.len() < 2 {
                    return Err(Error::InvalidMeasure("density grid needs at least two nodes".into()));
                }
                for s in samples {
                    if !in_unit(s.x) || !(s.w.is_finite() && s.w >= F::zero()) {
                        return Err(Error::InvalidMeasure(format!(
                            "density sample ({}, {}) needs x in [0,1] and w >= 0",
                            s.x, s.w
                        )));
                    }
                }
                if samples.windows(2).any(|w| w[1].x <= w[0].x) {
                    return Err(Error::InvalidMeasure("density grid must be strictly increasing".into()));
                }
                if samples.iter().all(|s| s.w == F::zero()) {
                    return Err(Error::EmptySupport);
                }
                Ok(())
            }
        }
    }

    /// Checks that this is a probability measure satisfying `1 ∈ supp μ` and
    /// `μ({1}) = 0`.
    ///
    /// With `normalize` the mass is rescaled to 1 instead of failing with
    /// [`Error::NonProbabilityMass`]. An atom at 1 is an error unless `force` is
    /// set. A support bounded away from 1 only produces a warning here; the
    /// [`MomentProvider`] refuses such measures unless forced.
    pub fn validate(&mut self, normalize: bool, force: bool) -> Result<ValidationReport> {
        self.check_structure()?;
        let mass = self.total_mass();
        if !(mass > F::zero()) {
            return Err(Error::EmptySupport);
        }
        let mut warnings = Vec::new();
        let mass_ok = (mass - F::one()).abs() <= lit::<F>(MASS_TOLERANCE) * mass.max(F::one());
        if !mass_ok {
            if !normalize {
                return Err(Error::NonProbabilityMass {
                    mass: mass.to_f64().unwrap_or(f64::NAN),
                });
            }
            match &mut self.kind {
                MeasureKind::Atoms(atoms) => atoms.iter_mut().for_each(|a| a.mass = a.mass / mass),
                MeasureKind::SampledDensity(s) => s.iter_mut().for_each(|p| p.w = p.w / mass),
                MeasureKind::Area | MeasureKind::Beta { .. } => unreachable!("analytic families have unit mass"),
            }
            self.normalized = true;
            warnings.push(format!("mass {mass} rescaled to 1"));
        }

        let (atom_at_one, sup_support_lt_one) = match &self.kind {
            MeasureKind::Area | MeasureKind::Beta { .. } => (false, false),
            MeasureKind::Atoms(atoms) => {
                let top = atoms.last().expect("non-empty").x;
                (top == F::one(), top < F::one())
            }
            MeasureKind::SampledDensity(samples) => {
                let len = samples.len();
                let tail = ((len as f64) * 0.05).ceil().max(2.0) as usize;
                let reaches_one = samples[len - 1].x == F::one();
                let tail_mass = samples[len - tail.min(len)..].iter().any(|s| s.w > F::zero());
                (false, !(reaches_one && tail_mass))
            }
        };
        if atom_at_one {
            if !force {
                return Err(Error::AtomAtOne);
            }
            warnings.push("atom at x = 1 accepted because of force".into());
        }
        if sup_support_lt_one {
            warnings.push("support of mu does not reach 1; moments decay exponentially".into());
        }
        Ok(ValidationReport {
            mass: mass.to_f64().unwrap_or(f64::NAN),
            mass_ok: true,
            atom_at_one,
            sup_support_lt_one,
            warnings,
        })
    }
}

fn read_pairs<F: Scalar, R: Read>(reader: R, header: [&str; 2]) -> Result<Vec<(F, F)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::InvalidMeasure(format!(
            "expected CSV header `{}`, found `{}`",
            header.join(","),
            found.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let parse = |i: usize| -> Result<F> {
            record[i]
                .parse::<f64>()
                .ok()
                .and_then(F::from_f64)
                .ok_or_else(|| Error::InvalidMeasure(format!("cannot parse `{}` as a number", &record[i])))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// How moments are evaluated for the analytic families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMethod<F> {
    ClosedForm,
    Quadrature { tolerance: F },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProviderOptions<F> {
    pub normalize: bool,
    pub force: bool,
    pub method: MomentMethod<F>,
}

impl<F: Scalar> Default for ProviderOptions<F> {
    fn default() -> Self {
        Self {
            normalize: false,
            force: false,
            method: MomentMethod::ClosedForm,
        }
    }
}

/// γ_t with an absolute error estimate (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentValue<F> {
    pub value: F,
    pub error: F,
}

/// A quantity obtained by cancelling nearly equal terms, with the number of
/// significant digits lost doing so (0 when an exact rearrangement was used).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cancelled<F> {
    pub value: F,
    pub digits_lost: F,
}

impl<F: Scalar> Cancelled<F> {
    fn exact(value: F) -> Self {
        Self { value, digits_lost: F::zero() }
    }

    pub fn cancellation_warning(&self) -> bool {
        self.digits_lost > lit(CANCELLATION_DIGITS)
    }
}

/// Evaluator for t ↦ γ_t over a validated measure.
///
/// Moments are cached by the exact bit pattern of t; repeated calls return
/// bit-identical values. Safe to share across threads: concurrent callers may
/// compute the same moment twice but always store the same value.
#[derive(Debug)]
pub struct MomentProvider<F: Scalar> {
    measure: MeasureSpec<F>,
    report: ValidationReport,
    method: MomentMethod<F>,
    density_tail: Option<DensityTail<F>>,
    cache: RwLock<HashMap<u64, MomentValue<F>>>,
}

impl<F: Scalar> MomentProvider<F> {
    /// Validates `measure` and builds a provider for it.
    ///
    /// Measures violating `1 ∈ supp μ` or `μ({1}) = 0` are refused with
    /// [`Error::HypothesesViolated`] unless `options.force` is set.
    pub fn new(mut measure: MeasureSpec<F>, options: ProviderOptions<F>) -> Result<Self> {
        let report = measure.validate(options.normalize, options.force)?;
        if !report.hypotheses_hold() && !options.force {
            return Err(Error::HypothesesViolated(report.warnings.join("; ")));
        }
        let method = match (&measure.kind, options.method) {
            (MeasureKind::Atoms(_), _) => MomentMethod::ClosedForm,
            (MeasureKind::SampledDensity(_), MomentMethod::ClosedForm) => MomentMethod::Quadrature {
                tolerance: lit(1e-10),
            },
            (_, m) => m,
        };
        if let MomentMethod::Quadrature { tolerance } = method {
            if !(tolerance > F::zero()) {
                return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
            }
        }
        let density_tail = match &measure.kind {
            MeasureKind::SampledDensity(samples) => DensityTail::new(samples),
            _ => None,
        };
        Ok(Self {
            measure,
            report,
            method,
            density_tail,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Area measure with closed-form moments γ_t = 2/(t+2).
    pub fn area() -> Self {
        Self::new(MeasureSpec::area(), ProviderOptions::default()).expect("area measure is valid")
    }

    pub fn beta(beta: F) -> Result<Self> {
        Self::new(MeasureSpec::beta(beta), ProviderOptions::default())
    }

    pub fn measure(&self) -> &MeasureSpec<F> {
        &self.measure
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn method(&self) -> MomentMethod<F> {
        self.method
    }

    pub fn banner(&self) -> Option<String> {
        self.report.banner()
    }

    /// Whether log ratios and excesses stay accurate for arbitrarily large t
    /// (closed forms and atoms), as opposed to degrading with quadrature error.
    pub fn far_field_reliable(&self) -> bool {
        matches!(
            (&self.measure.kind, self.method),
            (MeasureKind::Atoms(_), _) | (MeasureKind::Area | MeasureKind::Beta { .. }, MomentMethod::ClosedForm)
        ) || self.density_tail.is_some()
    }

    fn far_tail(&self, t: F) -> Option<&DensityTail<F>> {
        self.density_tail.as_ref().filter(|tail| t >= tail.onset)
    }

    fn check_order(t: F) -> Result<()> {
        if t.is_finite() && t >= F::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("moment order must be finite and >= 0, got {t}")))
        }
    }

    /// γ_t with its error estimate.
    pub fn moment(&self, t: F) -> Result<MomentValue<F>> {
        Self::check_order(t)?;
        if t == F::zero() {
            return Ok(MomentValue { value: F::one(), error: F::zero() });
        }
        if let Some(v) = self.cache.read().expect("moment cache poisoned").get(&t.key()) {
            return Ok(*v);
        }
        let v = self.compute_moment(t)?;
        self.cache.write().expect("moment cache poisoned").entry(t.key()).or_insert(v);
        Ok(v)
    }

    fn compute_moment(&self, t: F) -> Result<MomentValue<F>> {
        let two = lit::<F>(2.0);
        match (&self.measure.kind, self.method) {
            (MeasureKind::Area | MeasureKind::Beta { .. } | MeasureKind::Atoms(_), MomentMethod::ClosedForm) => {
                Ok(MomentValue {
                    value: self.closed_ln_moment(t).exp(),
                    error: F::zero(),
                })
            }
            (MeasureKind::Area, MomentMethod::Quadrature { tolerance }) => {
                let est = adaptive_gk15(|r: F| two * r.powf(t + F::one()), F::zero(), F::one(), &breakpoints(), tolerance, QUADRATURE_PANELS)?;
                Ok(MomentValue { value: est.value, error: est.error })
            }
            (MeasureKind::Beta { beta }, MomentMethod::Quadrature { tolerance }) => {
                // y = (1 − r²)^{β+1} maps the weight to dy on [0, 1] and leaves a
                // bounded integrand that piles up near y = 0 as t grows.
                let exponent = (*beta + F::one()).recip();
                let half_t = t / two;
                let integrand = |y: F| (F::one() - y.powf(exponent)).max(F::zero()).powf(half_t);
                let cuts: Vec<F> = (1..=48).rev().map(|i| lit::<F>(0.5f64.powi(i))).collect();
                let est = adaptive_gk15(integrand, F::zero(), F::one(), &cuts, tolerance, QUADRATURE_PANELS)?;
                Ok(MomentValue { value: est.value, error: est.error })
            }
            (MeasureKind::SampledDensity(_), _) if self.far_tail(t).is_some() => {
                let tail = self.far_tail(t).expect("checked");
                let value = tail.ln_moment(t).exp();
                Ok(MomentValue { value, error: value * lit::<F>(TAIL_CUTOFF) })
            }
            (MeasureKind::SampledDensity(samples), _) => {
                let (x, w): (Vec<F>, Vec<F>) = samples.iter().map(|s| (s.x, s.w)).unzip();
                let est = linear_interpolant_moment(&x, &w, t);
                Ok(MomentValue { value: est.value, error: est.error })
            }
            (MeasureKind::Atoms(_), MomentMethod::Quadrature { .. }) => unreachable!("atoms always use sums"),
        }
    }

    fn closed_ln_moment(&self, t: F) -> F {
        let two = lit::<F>(2.0);
        match &self.measure.kind {
            MeasureKind::Area => two.ln() - (t + two).ln(),
            MeasureKind::Beta { beta } => {
                ln_gamma(*beta + two) - ln_gamma_ratio(t / two + F::one(), *beta + F::one())
            }
            MeasureKind::Atoms(atoms) => {
                let top = atoms.last().expect("validated").x;
                top.ln() * t + scaled_atom_sum(atoms, t).ln()
            }
            MeasureKind::SampledDensity(_) => unreachable!("density has no closed form"),
        }
    }

    /// ln γ_t.
    pub fn ln_moment(&self, t: F) -> Result<F> {
        Self::check_order(t)?;
        if t == F::zero() {
            return Ok(F::zero());
        }
        if self.method == MomentMethod::ClosedForm && !matches!(self.measure.kind, MeasureKind::SampledDensity(_)) {
            return Ok(self.closed_ln_moment(t));
        }
        if let Some(tail) = self.far_tail(t) {
            return Ok(tail.ln_moment(t));
        }
        Ok(self.moment(t)?.value.ln())
    }

    /// ln(γ_{t+h} / γ_t) for h ≥ 0.
    pub fn ln_moment_ratio(&self, t: F, h: F) -> Result<F> {
        Self::check_order(t)?;
        Self::check_order(h)?;
        let two = lit::<F>(2.0);
        if self.method == MomentMethod::ClosedForm {
            match &self.measure.kind {
                MeasureKind::Area => return Ok(-(h / (t + two)).ln_1p()),
                MeasureKind::Beta { beta } => {
                    let x = t / two;
                    let half = h / two;
                    return Ok(ln_gamma_ratio(x + F::one(), half) - ln_gamma_ratio(x + *beta + two, half));
                }
                MeasureKind::Atoms(atoms) => {
                    let top = atoms.last().expect("validated").x;
                    return Ok(top.ln() * h + scaled_atom_sum(atoms, t + h).ln() - scaled_atom_sum(atoms, t).ln());
                }
                MeasureKind::SampledDensity(_) => {}
            }
        }
        if let Some(tail) = self.far_tail(t) {
            return Ok(tail.ln_ratio(t, h));
        }
        Ok(self.ln_moment(t + h)? - self.ln_moment(t)?)
    }

    /// Log-convexity excess E(t; p, q) = γ_{t+p+q}γ_t / (γ_{t+p}γ_{t+q}) − 1.
    pub fn excess(&self, t: F, p: F, q: F) -> Result<Cancelled<F>> {
        Self::check_order(t)?;
        if !(p > F::zero() && q > F::zero() && p.is_finite() && q.is_finite()) {
            return Err(Error::InvalidParameter("excess shifts must be positive".into()));
        }
        let two = lit::<F>(2.0);
        if self.method == MomentMethod::ClosedForm {
            match &self.measure.kind {
                MeasureKind::Area => {
                    return Ok(Cancelled::exact(p * q / ((t + p + q + two) * (t + two))));
                }
                MeasureKind::Beta { beta } => {
                    if let Some(m) = even_integer_half(p) {
                        return Ok(Cancelled::exact(beta_excess_product(t / two, m, q / two, *beta)));
                    }
                    if let Some(m) = even_integer_half(q) {
                        return Ok(Cancelled::exact(beta_excess_product(t / two, m, p / two, *beta)));
                    }
                }
                MeasureKind::Atoms(atoms) => return Ok(Cancelled::exact(atom_excess(atoms, t, p, q))),
                MeasureKind::SampledDensity(_) => {}
            }
        }
        if let Some(tail) = self.far_tail(t) {
            return Ok(Cancelled::exact(tail.excess(t, p, q)));
        }
        let upper = self.ln_moment_ratio(t + q, p)?;
        let lower = self.ln_moment_ratio(t, p)?;
        let d = upper - lower;
        let scale = upper.abs().max(lower.abs());
        let digits_lost = if d == F::zero() {
            lit(17.0)
        } else {
            (scale / d.abs()).log10().max(F::zero())
        };
        Ok(Cancelled {
            value: d.exp_m1().max(F::zero()),
            digits_lost,
        })
    }

    /// γ_{t+p+q}γ_t − γ_{t+p}γ_{t+q} = ½∬(xy)^t (x^p−y^p)(x^q−y^q) dμ(x)dμ(y) at real t.
    pub fn pair_integral(&self, t: F, p: F, q: F) -> Result<Cancelled<F>> {
        let e = self.excess(t, p, q)?;
        let prefactor = (self.ln_moment(t + p)? + self.ln_moment(t + q)?).exp();
        Ok(Cancelled {
            value: prefactor * e.value,
            digits_lost: e.digits_lost,
        })
    }

    /// Natural log of [`Self::pair_integral`]; −∞ when it vanishes.
    pub fn ln_pair_integral(&self, t: F, p: F, q: F) -> Result<F> {
        let e = self.excess(t, p, q)?;
        Ok(self.ln_moment(t + p)? + self.ln_moment(t + q)? + e.value.ln())
    }

    /// ½∬(xy)^{2k}(x^p − y^p)(x^q − y^q) dμ(x)dμ(y).
    pub fn symmetrized_pair_integral(&self, k: usize, p: F, q: F) -> Result<Cancelled<F>> {
        self.pair_integral(lit::<F>(2.0) * order(k), p, q)
    }

    /// Coefficient of z^k in P_ν(z^k |z|^t), namely γ_{2k+t}/γ_{2k}.
    pub fn projection_coefficient(&self, k: usize, t: F) -> Result<F> {
        if !(t > F::zero()) {
            return Err(Error::InvalidParameter(format!("projection exponent must be > 0, got {t}")));
        }
        Ok(self.ln_moment_ratio(lit::<F>(2.0) * order(k), t)?.exp())
    }

    /// k-th roots of ∬(xy)^k (x^{2n} − y^{2n})² dμ(x)dμ(y) for each k in `ks`.
    ///
    /// The roots tend to 1 when 1 ∈ supp μ and stay below 1 otherwise.
    pub fn subexponential_diagnostic(&self, n: usize, ks: &[usize]) -> Result<Vec<F>> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if ks.first().is_some_and(|&k| k == 0) || ks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("k list must be positive and strictly increasing".into()));
        }
        let p = lit::<F>(2.0) * order(n);
        ks.iter()
            .map(|&k| {
                let ln_half = self.ln_pair_integral(order(k), p, p)?;
                if ln_half == F::neg_infinity() {
                    return Ok(F::zero());
                }
                Ok(((ln_half + lit::<F>(2.0).ln()) / order(k)).exp())
            })
            .collect()
    }
}

/// Relative size of the contribution a tabulated density's far-field form drops.
const TAIL_CUTOFF: f64 = 1e-18;

/// Large-t form of a tabulated density that reaches x = 1.
///
/// Once a^t is negligible for the second-to-last node a, only the last interval
/// [a, 1] contributes, where the interpolant is w₁ + σ(x − 1). Then
/// γ_t = (w₁(t+2) − σ)/((t+1)(t+2)) exactly, and log ratios and excesses follow
/// from products of linear factors without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DensityTail<F> {
    a: F,
    w1: F,
    sigma: F,
    onset: F,
}

impl<F: Scalar> DensityTail<F> {
    fn new(samples: &[DensitySample<F>]) -> Option<Self> {
        let m = samples.len();
        let (prev, last) = (samples[m - 2], samples[m - 1]);
        if last.x != F::one() || (last.w == F::zero() && prev.w == F::zero()) {
            return None;
        }
        let h = F::one() - prev.x;
        let mut tail = Self {
            a: prev.x,
            w1: last.w,
            sigma: (last.w - prev.w) / h,
            onset: h.recip().max(F::one()),
        };
        let cutoff = lit::<F>(TAIL_CUTOFF);
        while !(tail.numerator(tail.onset) > F::zero()
            && tail.a.powf(tail.onset + F::one()) <= cutoff * tail.ln_moment(tail.onset).exp())
        {
            tail.onset = tail.onset * lit(2.0);
            if !tail.onset.is_finite() {
                return None;
            }
        }
        Some(tail)
    }

    fn numerator(&self, t: F) -> F {
        self.w1 * (t + lit(2.0)) - self.sigma
    }

    fn ln_moment(&self, t: F) -> F {
        self.numerator(t).ln() - (t + F::one()).ln() - (t + lit(2.0)).ln()
    }

    fn ln_ratio(&self, t: F, h: F) -> F {
        let two = lit::<F>(2.0);
        let linear = if self.w1 > F::zero() {
            (h * self.w1 / self.numerator(t)).ln_1p()
        } else {
            F::zero()
        };
        linear - (h / (t + F::one())).ln_1p() - (h / (t + two)).ln_1p()
    }

    fn excess(&self, t: F, p: F, q: F) -> F {
        // each linear factor (t + c) contributes 1 − pq/((t+c+p)(t+c+q)) to 1 + E
        let shrink = |c: F| (-(p * q) / ((t + c + p) * (t + c + q))).ln_1p();
        let linear = if self.w1 > F::zero() {
            shrink(lit::<F>(2.0) - self.sigma / self.w1)
        } else {
            F::zero()
        };
        (linear - shrink(F::one()) - shrink(lit(2.0))).exp_m1().max(F::zero())
    }
}

fn order<F: Scalar>(k: usize) -> F {
    F::from_usize(k).expect("index representable")
}

fn breakpoints<F: Scalar>() -> Vec<F> {
    // Geometric refinement toward r = 1 where (1 − r²)^β and r^t concentrate.
    (1..=12).map(|i| F::one() - lit::<F>(0.5f64.powi(i))).collect()
}

/// Returns m when p = 2m for a positive integer m (bounded to keep products short).
fn even_integer_half<F: Scalar>(p: F) -> Option<usize> {
    let half = p / lit(2.0);
    if half.fract() == F::zero() && half >= F::one() && half <= lit(10_000.0) {
        half.to_usize()
    } else {
        None
    }
}

/// E(2x; 2m, 2h) for the beta family:
/// ∏_{i=1}^{m} [1 + h(β+1) / ((x+i)(x+h+β+1+i))] − 1.
fn beta_excess_product<F: Scalar>(x: F, m: usize, h: F, beta: F) -> F {
    let b1 = beta + F::one();
    let mut log_sum = F::zero();
    for i in 1..=m {
        let i = order::<F>(i);
        log_sum += (h * b1 / ((x + i) * (x + h + b1 + i))).ln_1p();
    }
    log_sum.exp_m1()
}

/// Σ w_i (x_i / x_max)^t.
fn scaled_atom_sum<F: Scalar>(atoms: &[Atom<F>], t: F) -> F {
    let top = atoms.last().expect("validated").x;
    atoms.iter().fold(F::zero(), |acc, a| acc + a.mass * (a.x / top).powf(t))
}

fn atom_excess<F: Scalar>(atoms: &[Atom<F>], t: F, p: F, q: F) -> F {
    let top = atoms.last().expect("validated").x;
    if top == F::zero() {
        return F::zero();
    }
    let mut numerator = F::zero();
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            let weight = a.mass * b.mass * (a.x / top * (b.x / top)).powf(t);
            numerator += weight * (a.x.powf(p) - b.x.powf(p)) * (a.x.powf(q) - b.x.powf(q));
        }
    }
    let sp = atoms.iter().fold(F::zero(), |acc, a| acc + a.mass * (a.x / top).powf(t) * a.x.powf(p));
    let sq = atoms.iter().fold(F::zero(), |acc, a| acc + a.mass * (a.x / top).powf(t) * a.x.powf(q));
    numerator / (sp * sq)
}
