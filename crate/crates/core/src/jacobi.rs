//! The banded operator J(ν) and its finite sections.
//!
//! J(ν) acts on ℓ²(ℕ₀) with zero diagonal and a single pair of bands at ±n:
//! the only nonzero entries are a_k = J(ν)_{n+k,k} = J(ν)_{k,n+k}. With
//! E(t; p, q) the log-convexity excess of the moment sequence,
//!
//! ```text
//! k <  n:  a_k = γ_{2k+s} / √(γ_{2k} γ_{2k+2n}) · E(2k; 2n, s) / √E(2k; 2n, 2n)
//! k >= n:  a_k = γ_{2k+s} √γ_{2k−2n} / γ_{2k}^{3/2}
//!                · E(2k; 2n, s) / √(E(2k−2n; 2n, 2n) E(2k; 2n, 2n))
//! ```
//!
//! which is the quotient (γ_{2k+2n+s} − γ_{2k+2n}γ_{2k+s}/γ_{2k}) / (√w_k √w_{k+n})
//! with w_k = γ_{2k+2n} for k < n and w_k = γ_{2k+2n} − γ_{2k}²/γ_{2k−2n} for k ≥ n,
//! rearranged so no difference of nearly equal moments is formed.
//!
//! Because J(ν) only couples indices differing by n, a permutation splits any
//! section into n independent tridiagonal chains, one per residue class mod n.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::measures::MomentProvider;
use crate::scalar::{from_usize, lit, tiny, Scalar};

/// Entries with index below this are memoized.
const CACHE_LIMIT: usize = 1 << 22;

/// Exponents of the symbol zⁿ + C|z|ˢ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolParams<F> {
    n: usize,
    s: F,
}

impl<F: Scalar> SymbolParams<F> {
    pub fn new(n: usize, s: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(s.is_finite() && s > F::zero()) {
            return Err(Error::InvalidParameter(format!("s must be finite and > 0, got {s}")));
        }
        Ok(Self { n, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> F {
        self.s
    }

    /// Limit of a_k as k → ∞: s/(2n).
    pub fn asymptote(&self) -> F {
        self.s / (lit::<F>(2.0) * from_usize(self.n))
    }

    /// Edge of the essential spectrum [−s/n, s/n].
    pub fn essential_edge(&self) -> F {
        self.s / from_usize(self.n)
    }
}

/// A symmetric operator on ℓ²(ℕ₀) whose only nonzero entries sit at (k, k+n) and
/// (k+n, k), generated lazily.
pub trait BandedOperator<F: Scalar>: Sync {
    /// Band offset n.
    fn band(&self) -> usize;

    /// Limit of the entries, which fixes the essential spectrum edge 2·asymptote.
    fn asymptote(&self) -> F;

    /// Entry a_k at (k+n, k).
    fn entry(&self, k: usize) -> Result<F>;

    /// Entries a_{r + (first + j) n} for j in 0..count: the off-diagonal of the
    /// residue-r chain starting at its `first`-th coupling.
    fn chain_entries(&self, residue: usize, first: usize, count: usize) -> Result<Vec<F>> {
        let n = self.band();
        (0..count).map(|j| self.entry(residue + (first + j) * n)).collect()
    }

    /// Whether entries far down the chain are trustworthy.
    fn far_field_reliable(&self) -> bool {
        true
    }

    fn hypotheses_hold(&self) -> bool {
        true
    }

    fn banner(&self) -> Option<String> {
        None
    }
}

/// J(ν) for a given measure and symbol exponents.
///
/// Immutable after construction apart from its entry cache; share freely across
/// threads.
#[derive(Debug)]
pub struct JacobiOperator<F: Scalar> {
    params: SymbolParams<F>,
    provider: Arc<MomentProvider<F>>,
    cache: RwLock<Vec<F>>,
    cancellations: AtomicUsize,
}

impl<F: Scalar> JacobiOperator<F> {
    pub fn new(params: SymbolParams<F>, provider: Arc<MomentProvider<F>>) -> Self {
        Self {
            params,
            provider,
            cache: RwLock::new(Vec::new()),
            cancellations: AtomicUsize::new(0),
        }
    }

    pub fn params(&self) -> SymbolParams<F> {
        self.params
    }

    pub fn provider(&self) -> &MomentProvider<F> {
        &self.provider
    }

    /// Number of entries whose evaluation lost more than 8 digits to cancellation.
    pub fn cancellation_warnings(&self) -> usize {
        self.cancellations.load(Ordering::Relaxed)
    }

    fn cached(&self, k: usize) -> Option<F> {
        let cache = self.cache.read().expect("entry cache poisoned");
        cache.get(k).copied().filter(|v| !v.is_nan())
    }

    fn store(&self, values: &[(usize, F)]) {
        let mut cache = self.cache.write().expect("entry cache poisoned");
        for &(k, v) in values {
            if k >= CACHE_LIMIT {
                continue;
            }
            if cache.len() <= k {
                cache.resize(k + 1, F::nan());
            }
            cache[k] = v;
        }
    }

    fn compute_entry(&self, k: usize) -> Result<F> {
        let p = &self.provider;
        let n = self.params.n;
        let two = lit::<F>(2.0);
        let half = lit::<F>(0.5);
        let shift = two * from_usize(n);
        let s = self.params.s;
        let t = two * from_usize(k);
        let guard = tiny::<F>(1e-300);

        let ln_ratio_s = p.ln_moment_ratio(t, s)?;
        let numerator = p.excess(t, shift, s)?;
        let outer = p.excess(t, shift, shift)?;
        let mut flagged = numerator.cancellation_warning() || outer.cancellation_warning();
        if !(outer.value > guard) {
            return Err(Error::DegenerateDenominator { k });
        }
        let (ln_prefactor, denominator) = if k < n {
            (ln_ratio_s - half * p.ln_moment_ratio(t, shift)?, outer.value.sqrt())
        } else {
            let inner = p.excess(t - shift, shift, shift)?;
            flagged |= inner.cancellation_warning();
            if !(inner.value > guard) {
                return Err(Error::DegenerateDenominator { k });
            }
            (
                ln_ratio_s - half * p.ln_moment_ratio(t - shift, shift)?,
                inner.value.sqrt() * outer.value.sqrt(),
            )
        };
        if flagged {
            self.cancellations.fetch_add(1, Ordering::Relaxed);
        }
        let a = ln_prefactor.exp() * numerator.value / denominator;
        if a.is_finite() {
            Ok(a)
        } else {
            Err(Error::DegenerateDenominator { k })
        }
    }
}

impl<F: Scalar> BandedOperator<F> for JacobiOperator<F> {
    fn band(&self) -> usize {
        self.params.n
    }

    fn asymptote(&self) -> F {
        self.params.asymptote()
    }

    fn entry(&self, k: usize) -> Result<F> {
        if let Some(v) = self.cached(k) {
            return Ok(v);
        }
        let v = self.compute_entry(k)?;
        self.store(&[(k, v)]);
        Ok(v)
    }

    fn chain_entries(&self, residue: usize, first: usize, count: usize) -> Result<Vec<F>> {
        let n = self.params.n;
        let mut out = Vec::with_capacity(count);
        let mut fresh = Vec::new();
        {
            let cache = self.cache.read().expect("entry cache poisoned");
            for j in 0..count {
                let k = residue + (first + j) * n;
                match cache.get(k).copied().filter(|v| !v.is_nan()) {
                    Some(v) => out.push(v),
                    None => {
                        out.push(F::nan());
                        fresh.push((j, k));
                    }
                }
            }
        }
        let mut computed = Vec::with_capacity(fresh.len());
        for (j, k) in fresh {
            let v = self.compute_entry(k)?;
            out[j] = v;
            computed.push((k, v));
        }
        if computed.first().is_some_and(|&(k, _)| k < CACHE_LIMIT) {
            self.store(&computed);
        }
        Ok(out)
    }

    fn far_field_reliable(&self) -> bool {
        self.provider.far_field_reliable()
    }

    fn hypotheses_hold(&self) -> bool {
        self.provider.report().hypotheses_hold()
    }

    fn banner(&self) -> Option<String> {
        self.provider.banner()
    }
}

/// Test operator with every entry equal to `value`. With n = 1 and value 1 this is
/// the free Jacobi matrix, whose spectrum is [−2, 2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantChain<F> {
    pub band: usize,
    pub value: F,
}

impl<F: Scalar> BandedOperator<F> for ConstantChain<F> {
    fn band(&self) -> usize {
        self.band
    }

    fn asymptote(&self) -> F {
        self.value
    }

    fn entry(&self, _k: usize) -> Result<F> {
        Ok(self.value)
    }

    fn chain_entries(&self, _residue: usize, _first: usize, count: usize) -> Result<Vec<F>> {
        Ok(vec![self.value; count])
    }
}

/// Leading N×N section of a banded operator, stored as its band.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMatrix<F> {
    size: usize,
    band: usize,
    /// a_k for k in 0..size−band, placed at (k, k+band) and (k+band, k).
    entries: Vec<F>,
}

impl<F: Scalar> TruncatedMatrix<F> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn entries(&self) -> &[F] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        assert!(i < self.size && j < self.size, "index out of range");
        if i + self.band == j {
            self.entries[i]
        } else if j + self.band == i {
            self.entries[j]
        } else {
            F::zero()
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<F>> {
        (0..self.size).map(|i| (0..self.size).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn decouple(&self) -> ChainDecomposition<F> {
        let chains = (0..self.band.min(self.size))
            .map(|residue| {
                let slots = (self.size - residue).div_ceil(self.band);
                let offdiag = (0..slots.saturating_sub(1))
                    .map(|j| self.entries[residue + j * self.band])
                    .collect();
                Chain { residue, slots, offdiag }
            })
            .collect();
        ChainDecomposition {
            size: self.size,
            band: self.band,
            chains,
        }
    }
}

/// One residue class of a section: a zero-diagonal tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain<F> {
    pub residue: usize,
    /// Matrix size of the chain.
    pub slots: usize,
    /// Off-diagonal (a_r, a_{r+n}, …), length `slots − 1`.
    pub offdiag: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDecomposition<F> {
    pub size: usize,
    pub band: usize,
    pub chains: Vec<Chain<F>>,
}

/// The leading N×N section. Requires N ≥ n + 1.
pub fn build_truncated<F: Scalar, O: BandedOperator<F> + ?Sized>(op: &O, size: usize) -> Result<TruncatedMatrix<F>> {
    let band = op.band();
    if size < band + 1 {
        return Err(Error::InvalidParameter(format!("truncation size {size} must be at least n + 1 = {}", band + 1)));
    }
    let entries = (0..size - band).map(|k| op.entry(k)).collect::<Result<Vec<_>>>()?;
    Ok(TruncatedMatrix { size, band, entries })
}

/// Residue-class chains of the leading N×N section.
pub fn decouple<F: Scalar, O: BandedOperator<F> + ?Sized>(op: &O, size: usize) -> Result<ChainDecomposition<F>> {
    Ok(build_truncated(op, size)?.decouple())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn area_op(n: usize, s: f64) -> JacobiOperator<f64> {
        JacobiOperator::new(SymbolParams::new(n, s).unwrap(), Arc::new(MomentProvider::area()))
    }

    #[test]
    fn params_validation() {
        assert!(SymbolParams::new(0, 1.0).is_err());
        assert!(SymbolParams::new(1, 0.0).is_err());
        assert!(SymbolParams::new(1, f64::INFINITY).is_err());
        assert_eq!(SymbolParams::new(1, 2.0).unwrap().asymptote(), 1.0);
        assert_relative_eq!(SymbolParams::new(3, 2.0).unwrap().asymptote(), 1.0 / 3.0);
        assert_eq!(SymbolParams::new(2, 4.0).unwrap().asymptote(), 1.0);
        assert_relative_eq!(SymbolParams::new(3, 2.0).unwrap().essential_edge(), 2.0 / 3.0);
    }

    #[test]
    fn area_entries_n1_s2() {
        let op = area_op(1, 2.0);
        assert_relative_eq!(op.entry(0).unwrap(), 6f64.sqrt() / 6.0, max_relative = 1e-15);
        assert_relative_eq!(op.entry(1).unwrap(), 1.0 / 3f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn entries_match_naive_moment_formula() {
        // The literal quotient of moment differences, evaluated directly.
        let prov = MomentProvider::<f64>::beta(0.75).unwrap();
        let g = |t: f64| prov.moment(t).unwrap().value;
        for &(n, s) in &[(1usize, 2.0), (2, 1.0), (3, 0.5)] {
            let op = JacobiOperator::new(SymbolParams::new(n, s).unwrap(), Arc::new(MomentProvider::beta(0.75).unwrap()));
            let nf = n as f64;
            for k in 0..8usize {
                let kf = k as f64;
                let num = g(2.0 * kf + 2.0 * nf + s) - g(2.0 * kf + 2.0 * nf) * g(2.0 * kf + s) / g(2.0 * kf);
                let d2 = (g(2.0 * kf + 4.0 * nf) - g(2.0 * kf + 2.0 * nf).powi(2) / g(2.0 * kf)).sqrt();
                let d1 = if k < n {
                    g(2.0 * kf + 2.0 * nf).sqrt()
                } else {
                    (g(2.0 * kf + 2.0 * nf) - g(2.0 * kf).powi(2) / g(2.0 * kf - 2.0 * nf)).sqrt()
                };
                assert_relative_eq!(op.entry(k).unwrap(), num / (d1 * d2), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn single_atom_is_degenerate() {
        use crate::measures::{MeasureSpec, ProviderOptions};
        let prov = MomentProvider::new(
            MeasureSpec::atoms([(0.8, 1.0)]),
            ProviderOptions { force: true, ..Default::default() },
        )
        .unwrap();
        let op = JacobiOperator::new(SymbolParams::new(1, 1.0).unwrap(), Arc::new(prov));
        assert!(matches!(op.entry(0), Err(Error::DegenerateDenominator { k: 0 })));
    }

    #[test]
    fn truncation_layout() {
        let op = area_op(1, 2.0);
        let m = build_truncated(&op, 3).unwrap();
        assert_eq!(m.entries().len(), 2);
        assert_relative_eq!(m.get(0, 1), 6f64.sqrt() / 6.0, max_relative = 1e-15);
        assert_relative_eq!(m.get(2, 1), 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(build_truncated(&op, 2).unwrap().entries().len(), 1);
        assert!(build_truncated(&op, 1).is_err());

        let op2 = area_op(2, 1.0);
        let m2 = build_truncated(&op2, 4).unwrap();
        assert_eq!(m2.get(0, 2), op2.entry(0).unwrap());
        assert_eq!(m2.get(3, 1), op2.entry(1).unwrap());
        assert_eq!(m2.get(0, 1), 0.0);
        let dense = m2.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dense[i][j], dense[j][i]);
            }
        }
    }

    #[test]
    fn decoupling_bookkeeping() {
        let op = area_op(2, 1.0);
        let d = decouple(&op, 5).unwrap();
        assert_eq!(d.chains.len(), 2);
        assert_eq!(d.chains[0].slots, 3);
        assert_eq!(d.chains[0].offdiag, vec![op.entry(0).unwrap(), op.entry(2).unwrap()]);
        assert_eq!(d.chains[1].slots, 2);
        assert_eq!(d.chains[1].offdiag, vec![op.entry(1).unwrap()]);

        let single = decouple(&area_op(1, 2.0), 6).unwrap();
        assert_eq!(single.chains.len(), 1);
        assert_eq!(single.chains[0].offdiag, build_truncated(&area_op(1, 2.0), 6).unwrap().entries());
    }

    #[test]
    fn chain_entries_use_and_fill_cache() {
        let op = area_op(3, 2.5);
        let batch = op.chain_entries(1, 2, 5).unwrap();
        for (j, v) in batch.iter().enumerate() {
            assert_eq!(*v, op.entry(1 + (2 + j) * 3).unwrap());
        }
        let far = op.chain_entries(0, 1 << 30, 2).unwrap();
        assert!((far[0] - op.params().asymptote()).abs() < 1e-8);
    }
}
