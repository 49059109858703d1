//! Norm brackets and spectrum scans for banded operators.
//!
//! Every section of a banded operator splits into zero-diagonal tridiagonal
//! chains, and the spectrum of each chain is symmetric about 0, so the norm of a
//! section is the largest chain eigenvalue. That eigenvalue is located by
//! bisection on Sturm sign counts.
//!
//! The norm of the infinite operator is bracketed as follows.
//!
//! * Lower bound: the top eigenvalue of any principal section is ≤ ‖J‖. Leading
//!   sections are used, together with "window" sections taken far down each chain
//!   where the entries are already close to their limit.
//! * Upper bound: λ ≥ ‖J‖ for a chain as soon as every LDLᵀ pivot of λ − J is
//!   positive. On the computed head the pivots are evaluated directly. On the tail,
//!   where every entry is at most T, the pivot map d ↦ λ − T²/d keeps d above its
//!   repelling fixed point d₋ = (λ − √(λ² − 4T²))/2 once it starts there, so
//!   reaching d₋ at the end of the head suffices. T is read off a lookahead window
//!   and the asymptote; the bound is certified only when that window approaches
//!   the asymptote monotonically.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jacobi::{decouple, BandedOperator, SymbolParams};
use crate::scalar::{lit, Scalar};

const MAX_BISECTIONS: usize = 256;

fn pivot_floor<F: Scalar>(offdiag: &[F]) -> F {
    let max_sq = offdiag.iter().fold(F::one(), |m, &b| m.max(b * b));
    F::min_positive_value() * max_sq
}

/// Number of eigenvalues below `lambda` of the zero-diagonal symmetric tridiagonal
/// matrix with the given off-diagonal (size `offdiag.len() + 1`).
pub fn sturm_count<F: Scalar>(offdiag: &[F], lambda: F) -> usize {
    sturm_count_with_floor(offdiag, lambda, pivot_floor(offdiag))
}

fn sturm_count_with_floor<F: Scalar>(offdiag: &[F], lambda: F, floor: F) -> usize {
    let mut q = -lambda;
    if q.abs() < floor {
        q = -floor;
    }
    let mut count = usize::from(q < F::zero());
    for &b in offdiag {
        q = -lambda - b * b / q;
        if q.abs() < floor {
            q = -floor;
        }
        if q < F::zero() {
            count += 1;
        }
    }
    count
}

/// Gershgorin radius: max over rows of the off-diagonal row sum.
pub fn gershgorin<F: Scalar>(offdiag: &[F]) -> F {
    let m = offdiag.len();
    (0..=m)
        .map(|i| {
            let left = if i > 0 { offdiag[i - 1].abs() } else { F::zero() };
            let right = if i < m { offdiag[i].abs() } else { F::zero() };
            left + right
        })
        .fold(F::zero(), F::max)
}

fn check_chain<F: Scalar>(offdiag: &[F]) -> Result<()> {
    if offdiag.is_empty() {
        return Err(Error::InvalidParameter("chain needs at least one off-diagonal entry".into()));
    }
    if offdiag.iter().any(|b| !(b.is_finite() && *b > F::zero())) {
        return Err(Error::InvalidParameter("chain off-diagonal entries must be positive".into()));
    }
    Ok(())
}

/// Largest eigenvalue of the zero-diagonal tridiagonal matrix with positive
/// off-diagonal `offdiag`, which is also its spectral norm.
///
/// Returns the lower end of a Sturm bisection bracket of width at most `tol`, or
/// the narrowest bracket the precision allows when `tol` is smaller than that.
pub fn chain_extreme_eigenvalue<F: Scalar>(offdiag: &[F], tol: F) -> Result<F> {
    check_chain(offdiag)?;
    let size = offdiag.len() + 1;
    let floor = pivot_floor(offdiag);
    let mut lo = F::zero();
    let mut hi = gershgorin(offdiag) * (F::one() + lit::<F>(4.0) * F::epsilon()) + floor;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            return Ok(lo);
        }
        let mid = lit::<F>(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(lo);
        }
        if sturm_count_with_floor(offdiag, mid, floor) < size {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(format!("bisection exceeded {MAX_BISECTIONS} steps")))
}

/// All eigenvalues of a zero-diagonal tridiagonal chain, ascending.
pub fn chain_eigenvalues<F: Scalar>(offdiag: &[F]) -> Vec<F> {
    if offdiag.is_empty() {
        return vec![F::zero()];
    }
    let size = offdiag.len() + 1;
    let floor = pivot_floor(offdiag);
    let g = gershgorin(offdiag) * (F::one() + lit::<F>(4.0) * F::epsilon()) + floor;
    (0..size)
        .map(|i| {
            let (mut lo, mut hi) = (-g, g);
            for _ in 0..MAX_BISECTIONS {
                let mid = lit::<F>(0.5) * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count_with_floor(offdiag, mid, floor) <= i {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lit::<F>(0.5) * (lo + hi)
        })
        .collect()
}

/// Unit-norm eigenvector for the top eigenvalue `lambda` of a chain, by inverse
/// iteration with a shift just above `lambda` (so the shifted matrix is definite
/// and factors without pivoting). Entries are nonnegative.
pub fn chain_top_eigenvector<F: Scalar>(offdiag: &[F], lambda: F) -> Vec<F> {
    let size = offdiag.len() + 1;
    let scale = lambda.abs().max(gershgorin(offdiag)).max(F::min_positive_value());
    let mut delta = scale * F::epsilon() * lit::<F>(1e4);
    loop {
        let sigma = lambda + delta;
        // σI − J = L D Lᵀ with unit lower bidiagonal L.
        let mut d = Vec::with_capacity(size);
        d.push(sigma);
        let mut definite = sigma > F::zero();
        for &b in offdiag {
            let prev = *d.last().expect("non-empty");
            let next = sigma - b * b / prev;
            if !(next > F::zero()) {
                definite = false;
                break;
            }
            d.push(next);
        }
        if !definite {
            delta = delta * lit::<F>(16.0);
            continue;
        }
        let mut x = vec![F::one(); size];
        for _ in 0..4 {
            // L z = x, with l_i = −b_i / d_i
            for i in 0..offdiag.len() {
                let l = -offdiag[i] / d[i];
                x[i + 1] = x[i + 1] - l * x[i];
            }
            for i in 0..size {
                x[i] = x[i] / d[i];
            }
            for i in (0..offdiag.len()).rev() {
                let l = -offdiag[i] / d[i];
                x[i] = x[i] - l * x[i + 1];
            }
            let norm = x.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt();
            x.iter_mut().for_each(|v| *v = *v / norm);
        }
        return x.into_iter().map(F::abs).collect();
    }
}

/// Rayleigh quotient ⟨x, Jx⟩ / ⟨x, x⟩ of a chain.
pub fn chain_rayleigh<F: Scalar>(offdiag: &[F], x: &[F]) -> F {
    assert_eq!(x.len(), offdiag.len() + 1);
    let two = lit::<F>(2.0);
    let num = offdiag
        .iter()
        .enumerate()
        .fold(F::zero(), |acc, (i, &b)| acc + two * b * x[i] * x[i + 1]);
    num / x.iter().fold(F::zero(), |acc, &v| acc + v * v)
}

fn pivots_stay_positive<F: Scalar>(head: &[F], tail_sup: F, lambda: F) -> bool {
    let mut d = lambda;
    if !(d > F::zero()) {
        return false;
    }
    for &b in head {
        d = lambda - b * b / d;
        if !(d > F::zero()) {
            return false;
        }
    }
    let disc = (lambda * lambda - lit::<F>(4.0) * tail_sup * tail_sup).max(F::zero());
    let fixed_point = if tail_sup == F::zero() {
        F::zero()
    } else {
        lit::<F>(2.0) * tail_sup * tail_sup / (lambda + disc.sqrt())
    };
    d >= fixed_point
}

/// Smallest λ (to bisection precision) for which λ ≥ ‖J‖ is certified for the
/// infinite chain whose first couplings are `head` and whose remaining couplings
/// are all at most `tail_sup`.
pub fn chain_upper_bound<F: Scalar>(head: &[F], tail_sup: F) -> F {
    let two = lit::<F>(2.0);
    let lo_start = two * tail_sup;
    if pivots_stay_positive(head, tail_sup, lo_start) {
        return lo_start;
    }
    let last = head.last().copied().unwrap_or(F::zero());
    let mut hi = (gershgorin(head).max(last + tail_sup).max(lo_start) * (F::one() + lit::<F>(1e-12)))
        .max(F::min_positive_value());
    while !pivots_stay_positive(head, tail_sup, hi) {
        hi = hi * two;
    }
    let mut lo = lo_start;
    for _ in 0..MAX_BISECTIONS {
        let mid = lit::<F>(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pivots_stay_positive(head, tail_sup, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Truncation schedule for [`operator_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy<F> {
    /// First section size N; defaults to max(64, 8n).
    pub initial_size: Option<usize>,
    /// Doubling stops once a chain would exceed this many slots.
    pub max_chain_slots: usize,
    /// Lookahead window length, in multiples of the current chain length.
    pub lookahead_factor: usize,
    /// Relative distance from the asymptote the lookahead must reach for the
    /// tail bound to count as certified.
    pub tail_margin: F,
    /// Also evaluate sections far down each chain for the lower bound.
    pub window_probes: bool,
    /// Largest entry index a window probe may touch.
    pub max_window_index: usize,
}

impl<F: Scalar> Default for TruncationPolicy<F> {
    fn default() -> Self {
        Self {
            initial_size: None,
            max_chain_slots: 1 << 20,
            lookahead_factor: 4,
            tail_margin: lit::<F>(1e-3),
            window_probes: true,
            max_window_index: 1 << 36,
        }
    }
}

/// One doubling step of [`operator_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<F> {
    /// Section size N.
    pub size: usize,
    /// Norm of the leading N×N section alone.
    pub section_lower: F,
    /// Running lower bound (leading sections and window probes).
    pub lower: F,
    /// Running upper bound.
    pub upper: F,
}

/// The chain section that attains the lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness<F> {
    pub residue: usize,
    /// Index of the first chain slot; 0 for a leading section.
    pub first_slot: usize,
    /// Number of slots (matrix size) of the section.
    pub slots: usize,
    pub eigenvalue: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormStatus {
    /// Gap ≤ tol and the lower bound stopped moving.
    Converged,
    /// The slot budget ran out first.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate<F> {
    pub lower: F,
    pub upper: F,
    /// Last section size N.
    pub truncation_size: usize,
    pub certified: bool,
    pub status: NormStatus,
    /// Every chain's lookahead approached the asymptote monotonically.
    pub tail_monotone: bool,
    /// The tail-based upper bound never fell below a computed lower bound.
    pub tail_consistent: bool,
    pub trace: Vec<TraceRecord<F>>,
    pub witness: Witness<F>,
}

impl<F: Scalar> NormEstimate<F> {
    pub fn gap(&self) -> F {
        self.upper - self.lower
    }

    pub fn contains(&self, x: F) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug)]
struct ChainLevel<F> {
    lead: Witness<F>,
    window: Option<Witness<F>>,
    upper: F,
    tail_ok: bool,
}

fn monotone_toward<F: Scalar>(values: &[F], target: F, margin: F) -> bool {
    let Some(&last) = values.last() else {
        return false;
    };
    if (last - target).abs() > margin * target.abs() {
        return false;
    }
    let noise = lit::<F>(1e-13) * target.abs().max(F::min_positive_value());
    let rising = last < target;
    values.windows(2).all(|w| {
        let step = w[1] - w[0];
        step.abs() <= noise || (step > F::zero()) == rising
    })
}

fn analyze_chain<F: Scalar, O: BandedOperator<F> + ?Sized>(
    op: &O,
    residue: usize,
    size: usize,
    policy: &TruncationPolicy<F>,
) -> Result<ChainLevel<F>> {
    let n = op.band();
    let asymptote = op.asymptote();
    let slots = (size - residue).div_ceil(n);
    let head = op.chain_entries(residue, 0, slots - 1)?;
    let lead_value = if head.is_empty() {
        F::zero()
    } else {
        chain_extreme_eigenvalue(&head, F::zero())?
    };
    let lead = Witness {
        residue,
        first_slot: 0,
        slots,
        eigenvalue: lead_value,
    };

    let look_len = (policy.lookahead_factor * slots).max(1);
    let look = op.chain_entries(residue, slots - 1, look_len)?;
    let mut tail_sup = look.iter().fold(asymptote, |m, &v| m.max(v));
    let tail_ok = monotone_toward(&look, asymptote, policy.tail_margin);

    let mut window = None;
    if policy.window_probes && op.far_field_reliable() && slots >= 2 {
        let look_end = slots - 1 + look_len;
        let cap = (policy.max_window_index.saturating_sub(residue) / n).saturating_sub(slots);
        let first = slots.saturating_mul(slots).min(cap);
        if first > look_end {
            if let Ok(entries) = op.chain_entries(residue, first, slots - 1) {
                if entries.iter().all(|b| b.is_finite() && *b > F::zero()) {
                    tail_sup = entries.iter().fold(tail_sup, |m, &v| m.max(v));
                    window = Some(Witness {
                        residue,
                        first_slot: first,
                        slots,
                        eigenvalue: chain_extreme_eigenvalue(&entries, F::zero())?,
                    });
                }
            }
        }
    }

    Ok(ChainLevel {
        lead,
        window,
        upper: chain_upper_bound(&head, tail_sup),
        tail_ok,
    })
}

/// Brackets ‖J‖ by doubling the section size until the bracket is narrower than
/// `tol` and the lower bound has settled, or the policy budget runs out.
///
/// Running out of budget is not an error: the best bracket comes back with
/// `certified = false` and [`NormStatus::BudgetExhausted`].
pub fn operator_norm<F: Scalar, O: BandedOperator<F> + ?Sized>(
    op: &O,
    tol: F,
    policy: &TruncationPolicy<F>,
) -> Result<NormEstimate<F>> {
    if !(tol > F::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = op.band();
    let mut size = policy.initial_size.unwrap_or((8 * n).max(64)).max(n + 1);
    let mut lower = F::zero();
    let mut upper = F::infinity();
    let mut witness = None;
    let mut trace: Vec<TraceRecord<F>> = Vec::new();
    let mut tail_monotone;
    let mut tail_consistent = true;
    let quarter = tol / lit::<F>(4.0);

    let status = loop {
        let levels = (0..n)
            .into_par_iter()
            .map(|r| analyze_chain(op, r, size, policy))
            .collect::<Result<Vec<_>>>()?;

        let mut section_lower = F::zero();
        let mut level_upper = F::zero();
        tail_monotone = true;
        for level in &levels {
            section_lower = section_lower.max(level.lead.eigenvalue);
            level_upper = level_upper.max(level.upper);
            tail_monotone &= level.tail_ok;
            for candidate in std::iter::once(&level.lead).chain(level.window.as_ref()) {
                if witness.is_none() || candidate.eigenvalue > lower {
                    lower = candidate.eigenvalue.max(lower);
                    witness = Some(*candidate);
                }
            }
        }
        upper = upper.min(level_upper);
        if upper < lower {
            tail_consistent = false;
            upper = lower;
        }
        trace.push(TraceRecord {
            size,
            section_lower,
            lower,
            upper,
        });

        let settled = trace.len() >= 3
            && trace[trace.len() - 3..].windows(2).all(|w| w[1].lower - w[0].lower <= quarter);
        if upper - lower <= tol && settled {
            break NormStatus::Converged;
        }
        if size.div_ceil(n) >= policy.max_chain_slots {
            break NormStatus::BudgetExhausted;
        }
        size *= 2;
    };

    let certified = status == NormStatus::Converged && tail_monotone && tail_consistent && op.hypotheses_hold();
    Ok(NormEstimate {
        lower,
        upper,
        truncation_size: size,
        certified,
        status,
        tail_monotone,
        tail_consistent,
        trace,
        witness: witness.expect("at least one level evaluated"),
    })
}

/// Edge s/n of the essential spectrum.
pub fn essential_edge<F: Scalar>(params: &SymbolParams<F>) -> F {
    params.essential_edge()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanEntry<F> {
    pub value: F,
    pub residue: usize,
    /// |value| exceeds the essential edge by more than the margin.
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumScan<F> {
    pub size: usize,
    pub essential_edge: F,
    pub margin: F,
    /// Sorted ascending.
    pub eigenvalues: Vec<ScanEntry<F>>,
}

impl<F: Scalar> SpectrumScan<F> {
    /// Eigenvalues beyond the essential edge: candidates for isolated points of the
    /// spectrum of the infinite operator, never certified as such.
    pub fn outliers(&self) -> impl Iterator<Item = &ScanEntry<F>> {
        self.eigenvalues.iter().filter(|e| e.outlier)
    }
}

/// All eigenvalues of the leading N×N section, tagged with their residue chain,
/// with those beyond the essential edge + `margin` flagged.
pub fn spectrum_scan<F: Scalar, O: BandedOperator<F> + ?Sized>(op: &O, size: usize, margin: F) -> Result<SpectrumScan<F>> {
    let chains = decouple(op, size)?;
    let edge = lit::<F>(2.0) * op.asymptote();
    let mut eigenvalues: Vec<ScanEntry<F>> = chains
        .chains
        .par_iter()
        .map(|chain| {
            chain_eigenvalues(&chain.offdiag)
                .into_iter()
                .map(|value| ScanEntry {
                    value,
                    residue: chain.residue,
                    outlier: value.abs() > edge + margin,
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    eigenvalues.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("finite eigenvalues").then(a.residue.cmp(&b.residue)));
    Ok(SpectrumScan {
        size,
        essential_edge: edge,
        margin,
        eigenvalues,
    })
}

/// Number of chain slots of the residue-r chain in an N×N section.
pub fn chain_slots(size: usize, band: usize, residue: usize) -> usize {
    (size - residue).div_ceil(band)
}
