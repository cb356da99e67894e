//! Cross-correlation bias analytics: moment matrices and their closed-form
//! inverses, continuum-coefficient prediction, critical-noise brackets, and
//! the full-recovery diagnostic μ*.
//!
//! Polynomial and trigonometric trial functions transform linearly under
//! cross-correlation with a symmetric noise distribution ρ: monomial columns
//! mix through an upper-triangular moment matrix and trigonometric columns
//! scale by the characteristic-function value ρ̂(ω). The continuum
//! least-squares solution is then `w̄⁰ = A⁻¹ w*`, which is what thresholding
//! sees in the large-data limit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::monomials_grlex;
use crate::sparsereg::threshold_feasibility;
use crate::weaksys::{LibrarySpec, TrialFunction};

/// Noise distribution descriptor. Only the even moments (and for the trig
/// multiplier, the characteristic function) enter the analytics.
#[derive(Debug, Clone)]
pub enum Distribution {
    Gaussian { sigma: f64 },
    /// Uniform on [−a, a] with a = σ·sqrt(3).
    Uniform { sigma: f64 },
    /// Explicit moment sequence M_0..M_p (odd entries zero for symmetric ρ).
    CustomMoments { moments: Vec<f64> },
}

impl Distribution {
    /// The k-th raw moment M_k.
    pub fn moment(&self, k: usize) -> Result<f64> {
        match self {
            Distribution::Gaussian { sigma } => Ok(if k % 2 == 0 {
                double_factorial(k as i64 - 1) * sigma.powi(k as i32)
            } else {
                0.0
            }),
            Distribution::Uniform { sigma } => {
                let a = sigma * 3f64.sqrt();
                Ok(if k % 2 == 0 { a.powi(k as i32) / (k as f64 + 1.0) } else { 0.0 })
            }
            Distribution::CustomMoments { moments } => moments.get(k).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("moment M_{k} missing from custom sequence"))
            }),
        }
    }

    /// Characteristic-function value ρ̂(ω) for a scalar frequency component.
    pub fn char_fn(&self, omega: f64) -> Result<f64> {
        match self {
            Distribution::Gaussian { sigma } => Ok((-sigma * sigma * omega * omega / 2.0).exp()),
            Distribution::Uniform { sigma } => {
                let a = sigma * 3f64.sqrt();
                let x = a * omega;
                Ok(if x.abs() < 1e-12 { 1.0 - x * x / 6.0 } else { x.sin() / x })
            }
            Distribution::CustomMoments { .. } => Err(Error::InvalidArgument(
                "characteristic function unavailable for a bare moment sequence".into(),
            )),
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Distribution::Gaussian { sigma } | Distribution::Uniform { sigma } => *sigma,
            Distribution::CustomMoments { moments } => {
                moments.get(2).copied().unwrap_or(0.0).sqrt()
            }
        }
    }
}

fn double_factorial(n: i64) -> f64 {
    if n <= 0 {
        return 1.0;
    }
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Univariate moment-matrix entry for monomial pair (i, j): the coefficient
/// of x^i in x^j ⋆ ρ, which is `C(j, i)·M_{j−i}`.
fn univariate_entry(dist: &Distribution, i: u32, j: u32) -> Result<f64> {
    if j < i {
        return Ok(0.0);
    }
    Ok(binomial(j, i) * dist.moment((j - i) as usize)?)
}

/// Gaussian moment block over all monomials of total degree ≤ `p_max` in `n`
/// variables, graded-lex ordered. Entry for exponent pair (i⃗, j⃗) is the
/// product of univariate factors `C(j_k, i_k)(j_k−i_k−1)!!σ^{j_k−i_k}`.
pub fn gaussian_moment_block(p_max: u32, sigma: f64, n: usize) -> DMatrix<f64> {
    moment_block(&Distribution::Gaussian { sigma }, p_max, n).expect("gaussian moments exist")
}

/// Moment block for an arbitrary symmetric distribution (product measure over
/// independent components for n > 1).
pub fn moment_block(dist: &Distribution, p_max: u32, n: usize) -> Result<DMatrix<f64>> {
    let monomials = monomials_grlex(n, p_max);
    let dim = monomials.len();
    let mut a = DMatrix::zeros(dim, dim);
    for (col, j) in monomials.iter().enumerate() {
        for (row, i) in monomials.iter().enumerate() {
            a[(row, col)] = product_entry(dist, i, j)?;
        }
    }
    Ok(a)
}

fn product_entry(dist: &Distribution, i: &[u32], j: &[u32]) -> Result<f64> {
    let mut acc = 1.0;
    for (&ik, &jk) in i.iter().zip(j) {
        if jk < ik {
            return Ok(0.0);
        }
        acc *= univariate_entry(dist, ik, jk)?;
        if acc == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(acc)
}

/// Closed-form inverse of the Gaussian moment block: entrywise
/// `(−1)^{Σ(j_k−i_k)/2}` times the forward entry. No numerical inversion.
pub fn gaussian_moment_inverse(p_max: u32, sigma: f64, n: usize) -> DMatrix<f64> {
    let dist = Distribution::Gaussian { sigma };
    let monomials = monomials_grlex(n, p_max);
    let dim = monomials.len();
    let mut inv = DMatrix::zeros(dim, dim);
    for (col, j) in monomials.iter().enumerate() {
        for (row, i) in monomials.iter().enumerate() {
            let entry = product_entry(&dist, i, j).unwrap();
            if entry != 0.0 {
                let gap: u32 = j.iter().zip(i).map(|(&a, &b)| a - b).sum();
                inv[(row, col)] = if (gap / 2) % 2 == 0 { entry } else { -entry };
            }
        }
    }
    inv
}

/// Factors of the general closed-form inverse: `(A⁻¹)_{ij} = f(j−i)·A_{ij}`
/// where f obeys the recurrence
/// `f(q) = −Σ_{ℓ<q} C(q,ℓ)(M_{q−ℓ}M_ℓ/M_q)f(ℓ)`, `f(0) = 1`.
/// A vanishing M_q is only an error when the numerator is nonzero (for
/// symmetric ρ both vanish at odd q and f(q) = 0).
pub fn general_moment_inverse_factor(moments: &[f64]) -> Result<Vec<f64>> {
    if moments.is_empty() || moments[0] != 1.0 {
        return Err(Error::InvalidArgument("moment sequence must start with M_0 = 1".into()));
    }
    let p = moments.len() - 1;
    let mut f = vec![0.0; p + 1];
    f[0] = 1.0;
    for q in 1..=p {
        let mut num = 0.0;
        for l in 0..q {
            num += binomial(q as u32, l as u32) * moments[q - l] * moments[l] * f[l];
        }
        if moments[q] != 0.0 {
            f[q] = -num / moments[q];
        } else if num == 0.0 {
            f[q] = 0.0;
        } else {
            return Err(Error::InvalidArgument(format!(
                "inverse factor undefined at q = {q}: M_q = 0 with nonzero numerator"
            )));
        }
    }
    Ok(f)
}

/// Per-component product of characteristic-function values,
/// `ρ̂(ω) = ∏_k ρ̂₁(ω_k)` for i.i.d. components.
pub fn trig_multiplier(omega: &[f64], dist: &Distribution) -> Result<f64> {
    let mut acc = 1.0;
    for &w in omega {
        acc *= dist.char_fn(w)?;
    }
    Ok(acc)
}

/// How each library column is treated by the bias map.
#[derive(Debug, Clone)]
enum ColumnKind {
    /// Position in the per-block monomial table.
    Monomial(usize),
    /// ρ̂(ω) multiplier shared by the cos/sin pair.
    Trig(f64),
}

/// The cross-correlation bias operator for a full library: block diagonal
/// over derivative indices, each block acting as the monomial moment matrix
/// plus a diagonal trig multiplier table. In blocks whose derivative order is
/// ≥ 1, bias onto the constant column is annihilated (the derivative of a
/// constant convolution vanishes), which is what makes purely quadratic
/// models unconditionally recoverable.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    library: LibrarySpec,
    distribution: Distribution,
    monomial_exponents: Vec<Vec<u32>>,
    /// Map trial index -> kind, shared by every block.
    kinds: Vec<ColumnKind>,
    /// Monomial sub-block (forward) and its closed-form inverse factors.
    block: DMatrix<f64>,
    block_inv: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn new(library: &LibrarySpec, distribution: Distribution) -> Result<Self> {
        let mut monomial_exponents = Vec::new();
        let mut kinds = Vec::with_capacity(library.trials().len());
        for trial in library.trials() {
            match trial {
                TrialFunction::Monomial(p) => {
                    kinds.push(ColumnKind::Monomial(monomial_exponents.len()));
                    monomial_exponents.push(p.clone());
                }
                TrialFunction::Cos(w) | TrialFunction::Sin(w) => {
                    kinds.push(ColumnKind::Trig(trig_multiplier(w, &distribution)?));
                }
            }
        }

        // Closure check: every even-gap reduction of a library monomial must
        // itself be present (the constant is exempt when every trial block
        // differentiates, since that bias is annihilated).
        let all_blocks_differentiate = library
            .rhs_alphas()
            .iter()
            .all(|a| a.iter().any(|&o| o > 0));
        for j in &monomial_exponents {
            for i in even_gap_reductions(j) {
                if i == *j {
                    continue;
                }
                let present = monomial_exponents.iter().any(|m| *m == i);
                if !present {
                    let is_constant = i.iter().all(|&e| e == 0);
                    if is_constant && all_blocks_differentiate {
                        continue;
                    }
                    return Err(Error::InvalidArgument(format!(
                        "library is not closed under cross-correlation: monomial {i:?} \
                         (bias of {j:?}) is missing"
                    )));
                }
            }
        }

        let dim = monomial_exponents.len();
        let mut block = DMatrix::zeros(dim, dim);
        let mut block_inv = DMatrix::zeros(dim, dim);
        let f_factors = inverse_factors(&distribution, &monomial_exponents)?;
        for (col, j) in monomial_exponents.iter().enumerate() {
            for (row, i) in monomial_exponents.iter().enumerate() {
                let entry = product_entry(&distribution, i, j)?;
                block[(row, col)] = entry;
                if entry != 0.0 {
                    let mut factor = 1.0;
                    for (&jk, &ik) in j.iter().zip(i) {
                        factor *= f_factors[(jk - ik) as usize];
                    }
                    block_inv[(row, col)] = factor * entry;
                }
            }
        }

        Ok(Self {
            library: library.clone(),
            distribution,
            monomial_exponents,
            kinds,
            block,
            block_inv,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.distribution.sigma()
    }

    pub fn distribution(&self) -> &Distribution {
        &self.distribution
    }

    /// The dense 𝔍×𝔍 operator `A` with `Ḡ = G* A`.
    pub fn dense(&self) -> DMatrix<f64> {
        self.assemble(&self.block, false)
    }

    /// The dense closed-form inverse `A⁻¹` (errors if some ρ̂(ω) = 0, to
    /// rounding: multipliers below 1e−12 count as vanished).
    pub fn dense_inverse(&self) -> Result<DMatrix<f64>> {
        for kind in &self.kinds {
            if let ColumnKind::Trig(m) = kind {
                if m.abs() < 1e-12 {
                    return Err(Error::SingularBias(
                        "a trigonometric multiplier vanishes; the bias map is singular".into(),
                    ));
                }
            }
        }
        Ok(self.assemble(&self.block_inv, true))
    }

    fn assemble(&self, poly: &DMatrix<f64>, invert_trig: bool) -> DMatrix<f64> {
        let j_count = self.library.j_per_block();
        let s_count = self.library.num_blocks();
        let total = j_count * s_count;
        let mut a = DMatrix::zeros(total, total);
        for (s, alpha) in self.library.rhs_alphas().iter().enumerate() {
            let differentiates = alpha.iter().any(|&o| o > 0);
            let base = s * j_count;
            for (cj, ckind) in self.kinds.iter().enumerate() {
                match ckind {
                    ColumnKind::Trig(m) => {
                        a[(base + cj, base + cj)] = if invert_trig { 1.0 / m } else { *m };
                    }
                    ColumnKind::Monomial(pj) => {
                        for (ri, rkind) in self.kinds.iter().enumerate() {
                            if let ColumnKind::Monomial(pi) = rkind {
                                let is_constant_row =
                                    self.monomial_exponents[*pi].iter().all(|&e| e == 0);
                                if differentiates && is_constant_row && pi != pj {
                                    continue;
                                }
                                a[(base + ri, base + cj)] = poly[(*pi, *pj)];
                            }
                        }
                    }
                }
            }
        }
        a
    }

    /// `w̄⁰ = A⁻¹ w*`: the continuum least-squares coefficients seen by
    /// thresholding in the large-data limit.
    pub fn predict_continuum_coefficients(&self, w_true: &[f64]) -> Result<Vec<f64>> {
        let total = self.library.total_columns();
        if w_true.len() != total {
            return Err(Error::InvalidArgument(format!(
                "w_true has {} entries, library has {total} columns",
                w_true.len()
            )));
        }
        let inv = self.dense_inverse()?;
        let w = DVector::from_column_slice(w_true);
        Ok((inv * w).as_slice().to_vec())
    }

    /// `A w*`: how the true model expands under cross-correlation, exposing
    /// the spurious-term pattern each true term generates (e.g. a cubic term
    /// `c·u³` contributes `3cσ²·u`).
    pub fn cross_correlation_expansion(&self, w_true: &[f64]) -> Result<Vec<f64>> {
        let total = self.library.total_columns();
        if w_true.len() != total {
            return Err(Error::InvalidArgument(format!(
                "w_true has {} entries, library has {total} columns",
                w_true.len()
            )));
        }
        let a = self.dense();
        let w = DVector::from_column_slice(w_true);
        Ok((a * w).as_slice().to_vec())
    }
}

fn inverse_factors(dist: &Distribution, exponents: &[Vec<u32>]) -> Result<Vec<f64>> {
    let max_gap = exponents
        .iter()
        .flat_map(|e| e.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let moments: Vec<f64> = (0..=max_gap).map(|k| dist.moment(k)).collect::<Result<_>>()?;
    general_moment_inverse_factor(&moments)
}

fn even_gap_reductions(j: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &jk in j {
        let mut next = Vec::new();
        for prefix in &out {
            let mut ik = jk as i64;
            while ik >= 0 {
                let mut v = prefix.clone();
                v.push(ik as u32);
                next.push(v);
                ik -= 2;
            }
        }
        out = next;
    }
    out
}

/// Which consistency regime a model falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalNoiseCase {
    /// Degree ≤ 2 with no un-differentiated square term: support recovery at
    /// any finite noise level.
    Unconditional,
    /// A finite critical noise exists; the bracket applies.
    Bracketed,
}

#[derive(Debug, Clone)]
pub struct CriticalNoiseBounds {
    pub case: CriticalNoiseCase,
    /// Bracket on σ_c² (both +∞ in the unconditional case).
    pub lower_sigma_sq: f64,
    pub upper_sigma_sq: f64,
    /// When the spurious-term pattern admits an exact flip point (the δ₁ root
    /// of the continuum coefficients), the σ at which it crosses zero.
    pub exact_flip_sigma: Option<f64>,
}

fn true_support(w_true: &[f64]) -> Vec<usize> {
    w_true
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn is_case_one(w_true: &[f64], library: &LibrarySpec) -> (bool, u32) {
    let idx = library.column_index();
    let mut p_max_on_support = 0u32;
    let mut square_under_identity = false;
    for c in true_support(w_true) {
        let (alpha, trial) = idx.descriptor(c);
        if let Some(d) = trial.degree() {
            p_max_on_support = p_max_on_support.max(d);
            let has_square = matches!(trial, TrialFunction::Monomial(p) if p.iter().any(|&e| e >= 2));
            let identity_op = alpha.iter().all(|&o| o == 0);
            if has_square && identity_op {
                square_under_identity = true;
            }
        }
    }
    (p_max_on_support <= 2 && !square_under_identity, p_max_on_support)
}

/// Brackets the critical noise from the one-shot feasibility analysis, for
/// Gaussian noise:
/// `min|w*|/max|w*| / (2·C(p,2)·e) ≤ σ_c² ≤ 1/C(p,2)` with p the largest
/// monomial degree in the true model; unconditional when p ≤ 2 without an
/// un-differentiated square. Also reports the exact δ₁ flip point when one
/// exists.
pub fn critical_noise_bounds(w_true: &[f64], library: &LibrarySpec) -> Result<CriticalNoiseBounds> {
    let support = true_support(w_true);
    if support.is_empty() {
        return Err(Error::InvalidArgument("true support is empty".into()));
    }
    let (case_one, p) = is_case_one(w_true, library);
    if case_one {
        return Ok(CriticalNoiseBounds {
            case: CriticalNoiseCase::Unconditional,
            lower_sigma_sq: f64::INFINITY,
            upper_sigma_sq: f64::INFINITY,
            exact_flip_sigma: None,
        });
    }
    let c = binomial(p, 2);
    let min_w = support.iter().map(|&j| w_true[j].abs()).fold(f64::INFINITY, f64::min);
    let max_w = support.iter().map(|&j| w_true[j].abs()).fold(0.0f64, f64::max);
    let lower = min_w / max_w / (2.0 * c * std::f64::consts::E);
    let upper = 1.0 / c;
    let flip = delta1_flip_point(w_true, library)?;
    Ok(CriticalNoiseBounds {
        case: CriticalNoiseCase::Bracketed,
        lower_sigma_sq: lower,
        upper_sigma_sq: upper,
        exact_flip_sigma: flip,
    })
}

/// σ at which the one-shot feasibility gap δ₁ of the predicted continuum
/// coefficients crosses zero (Gaussian noise), located by bisection; `None`
/// when δ₁ stays positive over the searched range.
pub fn delta1_flip_point(w_true: &[f64], library: &LibrarySpec) -> Result<Option<f64>> {
    let support = true_support(w_true);
    let delta1_at = |sigma: f64| -> Result<f64> {
        let mm = MomentMatrix::new(library, Distribution::Gaussian { sigma })?;
        let w_bar = mm.predict_continuum_coefficients(w_true)?;
        threshold_feasibility(&w_bar, &support)
    };
    let mut lo = 0.0f64;
    if delta1_at(lo + 1e-12)? <= 0.0 {
        return Ok(Some(0.0));
    }
    let mut hi = None;
    let mut probe = 1e-3;
    while probe <= 1e3 {
        if delta1_at(probe)? < 0.0 {
            hi = Some(probe);
            break;
        }
        lo = probe;
        probe *= 2.0;
    }
    let Some(mut hi) = hi else { return Ok(None) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta1_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Critical-noise bracket for the full one-shot MSTLS line search:
/// `(1/(e·C(p,2)))·min{‖G*w*‖/(𝔍‖G*_p‖‖w*‖), min|w*|/(2max|w*|)} ≤ σ_c²
/// ≤ 1/C(p,2)`; unconditional in the same case as the STLS bracket.
pub fn mstls_critical_bounds(
    g_star: &DMatrix<f64>,
    w_true: &[f64],
    library: &LibrarySpec,
) -> Result<(f64, f64)> {
    let support = true_support(w_true);
    if support.is_empty() {
        return Err(Error::InvalidArgument("true support is empty".into()));
    }
    let (case_one, p) = is_case_one(w_true, library);
    if case_one {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let c = binomial(p, 2);
    let idx = library.column_index();
    let poly_cols: Vec<usize> = (0..library.total_columns())
        .filter(|&col| {
            idx.descriptor(col)
                .1
                .degree()
                .map(|d| d <= p)
                .unwrap_or(false)
        })
        .collect();
    let g_p = g_star.select_columns(poly_cols.iter());
    let spectral = |m: &DMatrix<f64>| -> f64 {
        m.clone().svd(false, false).singular_values.max()
    };
    let w = DVector::from_column_slice(w_true);
    let gw_norm = (g_star * &w).norm();
    let total = library.total_columns() as f64;
    let term1 = gw_norm / (total * spectral(&g_p) * w.norm());
    let min_w = support.iter().map(|&j| w_true[j].abs()).fold(f64::INFINITY, f64::min);
    let max_w = support.iter().map(|&j| w_true[j].abs()).fold(0.0f64, f64::max);
    let term2 = min_w / (2.0 * max_w);
    let lower = term1.min(term2) / (std::f64::consts::E * c);
    Ok((lower, 1.0 / c))
}

/// The full-recovery diagnostic: minimum over nonempty proper subsets
/// S ⊊ S* of `‖P⊥_{G*_{S*∖S}} b*‖/‖b*‖ − (|S|+1)/𝔍`. Positive μ* means every
/// subset of true terms contributes enough orthogonal signal for the line
/// search to keep it. Exhaustive enumeration, budgeted at |S*| ≤ 20.
pub fn mu_star(
    g_star: &DMatrix<f64>,
    b_star: &DVector<f64>,
    true_support: &[usize],
    total_columns: usize,
) -> Result<f64> {
    let k = true_support.len();
    if k == 0 {
        return Err(Error::InvalidArgument("true support is empty".into()));
    }
    if k > 20 {
        return Err(Error::Budget(format!(
            "subset enumeration over |S*| = {k} exceeds the 2^20 budget"
        )));
    }
    let b_norm = b_star.norm();
    if b_norm == 0.0 {
        return Err(Error::InvalidArgument("b* is zero".into()));
    }
    let mut best = f64::INFINITY;
    // Bitmask over S*; skip the empty set and the full set.
    for mask in 1u32..((1u32 << k) - 1) {
        let dropped: Vec<usize> = (0..k)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| true_support[i])
            .collect();
        let kept: Vec<usize> = (0..k)
            .filter(|&i| mask & (1 << i) == 0)
            .map(|i| true_support[i])
            .collect();
        let sub = g_star.select_columns(kept.iter());
        let svd = sub.clone().svd(true, true);
        let eps = crate::sparsereg::RANK_TOLERANCE * svd.singular_values.max().max(1e-300);
        let x = svd.solve(b_star, eps).expect("svd solve");
        let residual = (b_star - sub * x).norm();
        let value = residual / b_norm - (dropped.len() as f64 + 1.0) / total_columns as f64;
        if value < best {
            best = value;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct NormBoundsReport {
    pub p: u32,
    pub sigma: f64,
    pub a_norm_1: f64,
    pub a_norm_2: f64,
    pub a_norm_inf: f64,
    pub l_norm_1: f64,
    pub a_bound: f64,
    pub l_bound: f64,
    pub a_holds: bool,
    pub l_holds: bool,
}

/// Checks the Gaussian moment-matrix norm bounds
/// `‖A‖₁ ≤ exp(σ²C(p,2))` and `‖L‖₁ ≤ σ²C(p,2)·exp(σ²C(p,2))` with
/// `A = I + L`, and records measured norms alongside the bounds.
pub fn moment_norm_bounds_check(p: u32, sigma: f64) -> NormBoundsReport {
    let a = gaussian_moment_block(p, sigma, 1);
    let dim = a.nrows();
    let l = &a - DMatrix::<f64>::identity(dim, dim);
    let col_sum = |m: &DMatrix<f64>| -> f64 {
        (0..m.ncols())
            .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    let row_sum = |m: &DMatrix<f64>| -> f64 {
        (0..m.nrows())
            .map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    let alpha = sigma * sigma * binomial(p, 2);
    let a_norm_1 = col_sum(&a);
    let a_norm_2 = a.clone().svd(false, false).singular_values.max();
    let a_norm_inf = row_sum(&a);
    let l_norm_1 = col_sum(&l);
    let a_bound = alpha.exp();
    let l_bound = alpha * alpha.exp();
    NormBoundsReport {
        p,
        sigma,
        a_norm_1,
        a_norm_2,
        a_norm_inf,
        l_norm_1,
        a_bound,
        l_bound,
        a_holds: a_norm_1 <= a_bound + 1e-12,
        l_holds: l_norm_1 <= l_bound + 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as _, StandardNormal};

    fn ode_poly_library(n: usize, p_max: u32) -> LibrarySpec {
        LibrarySpec::polynomial(n, p_max, vec![vec![1], vec![0]]).unwrap()
    }

    #[test]
    fn gaussian_block_known_entries() {
        let a = gaussian_moment_block(4, 1.0, 1);
        // Columns/rows indexed by degree 0..=4.
        assert_relative_eq!(a[(0, 4)], 3.0);
        assert_relative_eq!(a[(2, 4)], 6.0);
        assert_relative_eq!(a[(1, 3)], 3.0);
        assert_relative_eq!(a[(0, 2)], 1.0);
        for d in 0..5 {
            assert_relative_eq!(a[(d, d)], 1.0);
        }
        // Odd superdiagonals vanish.
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 2)], 0.0);
        assert_eq!(a[(0, 3)], 0.0);
    }

    #[test]
    fn gaussian_block_sigma_zero_is_identity() {
        let a = gaussian_moment_block(6, 0.0, 2);
        assert_eq!(a, DMatrix::identity(a.nrows(), a.ncols()));
    }

    #[test]
    fn closed_form_inverse_identity() {
        for &sigma in &[0.1, 0.5, 1.0] {
            for p in [3u32, 6, 10] {
                let a = gaussian_moment_block(p, sigma, 1);
                let inv = gaussian_moment_inverse(p, sigma, 1);
                let prod = &a * &inv;
                let err = (&prod - DMatrix::<f64>::identity(prod.nrows(), prod.ncols()))
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err <= 1e-10, "p={p} sigma={sigma} err={err}");
            }
            // Two-variable product blocks.
            let a = gaussian_moment_block(5, sigma, 2);
            let inv = gaussian_moment_inverse(5, sigma, 2);
            let prod = &a * &inv;
            let err = (&prod - DMatrix::<f64>::identity(prod.nrows(), prod.ncols()))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-10, "bivariate sigma={sigma} err={err}");
        }
    }

    #[test]
    fn inverse_known_entry_p3() {
        let sigma = 0.4;
        let inv = gaussian_moment_inverse(3, sigma, 1);
        assert_relative_eq!(inv[(1, 3)], -3.0 * sigma * sigma, max_relative = 1e-14);
    }

    #[test]
    fn inverse_matches_numerical_inversion() {
        let a = gaussian_moment_block(8, 0.6, 1);
        let numeric = a.clone().try_inverse().unwrap();
        let closed = gaussian_moment_inverse(8, 0.6, 1);
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                assert_relative_eq!(closed[(r, c)], numeric[(r, c)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bivariate_block_cross_term() {
        // Column u1²u2 = (2,1): its bias onto u2 = (0,1) is σ² since
        // u1² ⋆ ρ = u1² + σ².
        let sigma = 0.37;
        let a = gaussian_moment_block(3, sigma, 2);
        let monos = monomials_grlex(2, 3);
        let col = monos.iter().position(|m| m == &vec![2, 1]).unwrap();
        let row = monos.iter().position(|m| m == &vec![0, 1]).unwrap();
        assert_relative_eq!(a[(row, col)], sigma * sigma, max_relative = 1e-14);
    }

    #[test]
    fn bivariate_cross_term_monte_carlo() {
        // E[(u1+e1)²(u2+e2)] = u1²u2 + σ²u2 at a few test points, 2e6 draws.
        let sigma = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (u1, u2) in [(0.3, -0.7), (1.1, 0.4)] {
            let n = 2_000_000usize;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let v = (u1 + sigma * e1) * (u1 + sigma * e1) * (u2 + sigma * e2);
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
            let predicted = u1 * u1 * u2 + sigma * sigma * u2;
            assert!(
                (mean - predicted).abs() <= 3.0 * se,
                "mean {mean} vs {predicted} (3se {})",
                3.0 * se
            );
        }
    }

    #[test]
    fn recurrence_reproduces_gaussian_signs() {
        let dist = Distribution::Gaussian { sigma: 0.8 };
        let moments: Vec<f64> = (0..=8).map(|k| dist.moment(k).unwrap()).collect();
        let f = general_moment_inverse_factor(&moments).unwrap();
        for q in 0..=8usize {
            let expected = if q % 2 == 1 {
                0.0
            } else if (q / 2) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            assert_relative_eq!(f[q], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn recurrence_inverts_uniform_moment_matrix() {
        let dist = Distribution::Uniform { sigma: 0.5 };
        let p = 4usize;
        let a = moment_block(&dist, p as u32, 1).unwrap();
        let moments: Vec<f64> = (0..=p).map(|k| dist.moment(k).unwrap()).collect();
        let f = general_moment_inverse_factor(&moments).unwrap();
        let mut closed = DMatrix::zeros(p + 1, p + 1);
        for c in 0..=p {
            for r in 0..=c {
                closed[(r, c)] = f[c - r] * a[(r, c)];
            }
        }
        let numeric = a.clone().try_inverse().unwrap();
        for r in 0..=p {
            for c in 0..=p {
                assert_relative_eq!(closed[(r, c)], numeric[(r, c)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn trig_multiplier_examples() {
        let g = Distribution::Gaussian { sigma: 1.0 };
        assert_relative_eq!(trig_multiplier(&[0.0], &g).unwrap(), 1.0);
        let omega = 2.0f64;
        let g99 = Distribution::Gaussian { sigma: 0.14 / omega };
        assert!(trig_multiplier(&[omega], &g99).unwrap() >= 0.99);
        let sigma = 0.3;
        let a = sigma * 3f64.sqrt();
        let u = Distribution::Uniform { sigma };
        let at_zero = trig_multiplier(&[std::f64::consts::PI / a], &u).unwrap();
        assert!(at_zero.abs() < 1e-12, "sinc zero {at_zero}");
    }

    #[test]
    fn trig_consistency_monte_carlo() {
        // E[cos(ω(u+ε))] = exp(−σ²ω²/2)·cos(ωu).
        let sigma = 0.4;
        let omega = 1.7;
        let u = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 2_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = (omega * (u + sigma * e)).cos();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let predicted = (-sigma * sigma * omega * omega / 2.0).exp() * (omega * u).cos();
        assert!((mean - predicted).abs() <= 4.0 * se);
    }

    fn cubic_oscillator_w(library: &LibrarySpec) -> (Vec<f64>, Vec<f64>) {
        // du1 = 2u1³ − 0.1u2³ ; du2 = −0.1u1³ − 2u2³
        let monos = monomials_grlex(2, library.poly_max_total_degree().unwrap());
        let pos = |e: &[u32]| monos.iter().position(|m| m.as_slice() == e).unwrap();
        let mut w1 = vec![0.0; library.total_columns()];
        let mut w2 = vec![0.0; library.total_columns()];
        w1[pos(&[3, 0])] = 2.0;
        w1[pos(&[0, 3])] = -0.1;
        w2[pos(&[3, 0])] = -0.1;
        w2[pos(&[0, 3])] = -2.0;
        (w1, w2)
    }

    #[test]
    fn cubic_oscillator_continuum_coefficients() {
        let lib = ode_poly_library(2, 3);
        let (w1, _) = cubic_oscillator_w(&lib);
        let sigma = 0.2;
        let mm = MomentMatrix::new(&lib, Distribution::Gaussian { sigma }).unwrap();
        let w_bar = mm.predict_continuum_coefficients(&w1).unwrap();
        let monos = monomials_grlex(2, 3);
        let pos = |e: &[u32]| monos.iter().position(|m| m.as_slice() == e).unwrap();
        // The 2u1³ term contributes −6σ² to u1; the −0.1u2³ term +0.3σ².
        assert_relative_eq!(w_bar[pos(&[1, 0])], -6.0 * sigma * sigma, max_relative = 1e-12);
        assert_relative_eq!(w_bar[pos(&[0, 1])], 0.3 * sigma * sigma, max_relative = 1e-12);
        assert_relative_eq!(w_bar[pos(&[3, 0])], 2.0);
        // σ = 0 keeps w* exactly.
        let mm0 = MomentMatrix::new(&lib, Distribution::Gaussian { sigma: 0.0 }).unwrap();
        assert_eq!(mm0.predict_continuum_coefficients(&w1).unwrap(), w1);
    }

    #[test]
    fn cubic_oscillator_delta1_boundary() {
        let lib = ode_poly_library(2, 6);
        let (w1, _) = cubic_oscillator_w(&lib);
        let support = true_support(&w1);
        let sigma_c = (0.1f64 / 6.0).sqrt();
        for (scale, positive) in [(0.999, true), (1.001, false)] {
            let mm = MomentMatrix::new(&lib, Distribution::Gaussian { sigma: scale * sigma_c })
                .unwrap();
            let w_bar = mm.predict_continuum_coefficients(&w1).unwrap();
            let d1 = threshold_feasibility(&w_bar, &support).unwrap();
            assert_eq!(d1 > 0.0, positive, "scale {scale} gave δ1 = {d1}");
        }
        let flip = delta1_flip_point(&w1, &lib).unwrap().unwrap();
        assert_relative_eq!(flip, sigma_c, max_relative = 1e-6);
    }

    #[test]
    fn critical_noise_bracket_cases() {
        // Linear model: unconditional.
        let lib = ode_poly_library(1, 2);
        let monos = monomials_grlex(1, 2);
        let pos = |e: &[u32]| monos.iter().position(|m| m.as_slice() == e).unwrap();
        let mut w = vec![0.0; lib.total_columns()];
        w[pos(&[1])] = -3.0;
        let b = critical_noise_bounds(&w, &lib).unwrap();
        assert_eq!(b.case, CriticalNoiseCase::Unconditional);
        assert!(b.lower_sigma_sq.is_infinite());

        // p = 3 with equal magnitudes: bracket [1/(6e), 1/3].
        let lib3 = ode_poly_library(1, 3);
        let monos3 = monomials_grlex(1, 3);
        let pos3 = |e: &[u32]| monos3.iter().position(|m| m.as_slice() == e).unwrap();
        let mut w3 = vec![0.0; lib3.total_columns()];
        w3[pos3(&[3])] = 1.5;
        w3[pos3(&[1])] = -1.5;
        let b3 = critical_noise_bounds(&w3, &lib3).unwrap();
        assert_eq!(b3.case, CriticalNoiseCase::Bracketed);
        assert_relative_eq!(b3.lower_sigma_sq, 1.0 / (6.0 * std::f64::consts::E), max_relative = 1e-12);
        assert_relative_eq!(b3.upper_sigma_sq, 1.0 / 3.0, max_relative = 1e-12);
        assert!(b3.lower_sigma_sq <= b3.upper_sigma_sq);
    }

    #[test]
    fn quadratic_under_derivative_is_unconditional() {
        // u² appearing only under ∂_x falls in the unconditional case.
        let lib = LibrarySpec::polynomial(1, 2, vec![vec![0, 1], vec![1, 0], vec![2, 0]]).unwrap();
        let monos = monomials_grlex(1, 2);
        let pos = |e: &[u32]| monos.iter().position(|m| m.as_slice() == e).unwrap();
        let mut w = vec![0.0; lib.total_columns()];
        // block s=1 is ∂_x: place u² there.
        w[pos(&[2])] = -0.5;
        let b = critical_noise_bounds(&w, &lib).unwrap();
        assert_eq!(b.case, CriticalNoiseCase::Unconditional);
        // And the continuum coefficients are exactly w*.
        let mm = MomentMatrix::new(&lib, Distribution::Gaussian { sigma: 0.7 }).unwrap();
        assert_eq!(mm.predict_continuum_coefficients(&w).unwrap(), w);
    }

    #[test]
    fn mstls_bounds_orthonormal_example() {
        let lib = ode_poly_library(1, 3);
        let monos = monomials_grlex(1, 3);
        let pos = |e: &[u32]| monos.iter().position(|m| m.as_slice() == e).unwrap();
        let total = lib.total_columns();
        let g = DMatrix::<f64>::identity(total, total);
        let mut w = vec![0.0; total];
        w[pos(&[3])] = 1.0;
        let (lower, upper) = mstls_critical_bounds(&g, &w, &lib).unwrap();
        let expected =
            (1.0f64 / total as f64).min(0.5) / (3.0 * std::f64::consts::E);
        assert_relative_eq!(lower, expected, max_relative = 1e-12);
        assert_relative_eq!(upper, 1.0 / 3.0, max_relative = 1e-12);
        assert!(lower <= upper);
    }

    #[test]
    fn mu_star_orthonormal_and_oracle() {
        // Orthonormal columns, equal coefficients on |S*| = 2 of 20:
        // each singleton drop leaves ‖P⊥b‖/‖b‖ = 1/√2 and penalty 2/20.
        let total = 20usize;
        let g = DMatrix::<f64>::identity(24, total);
        let mut b = DVector::zeros(24);
        b[3] = 1.0;
        b[7] = 1.0;
        let mu = mu_star(&g, &b, &[3, 7], total).unwrap();
        assert_relative_eq!(mu, 1.0 / 2f64.sqrt() - 2.0 / 20.0, max_relative = 1e-12);

        // Brute-force oracle on a random system with explicit projections.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: DMatrix<f64> = DMatrix::from_fn(30, 8, |_, _| StandardNormal.sample(&mut rng));
        let support = [1usize, 4, 6];
        let mut w = DVector::zeros(8);
        w[1] = 1.0;
        w[4] = -2.0;
        w[6] = 0.5;
        let b = &g * &w;
        let mu = mu_star(&g, &b, &support, 8).unwrap();
        let mut oracle = f64::INFINITY;
        for mask in 1u32..7 {
            let kept: Vec<usize> = (0..3).filter(|&i| mask & (1 << i) == 0).map(|i| support[i]).collect();
            let dropped_len = 3 - kept.len();
            let sub = g.select_columns(kept.iter());
            // Explicit normal-equations projection.
            let gtg = sub.transpose() * &sub;
            let x = gtg.try_inverse().unwrap() * sub.transpose() * &b;
            let resid = (&b - sub * x).norm();
            let val = resid / b.norm() - (dropped_len as f64 + 1.0) / 8.0;
            oracle = oracle.min(val);
        }
        assert_relative_eq!(mu, oracle, max_relative = 1e-9);
    }

    #[test]
    fn mu_star_monotone_in_total_columns() {
        let g = DMatrix::<f64>::identity(10, 10);
        let mut b = DVector::zeros(10);
        b[0] = 1.0;
        b[1] = 1.0;
        let small = mu_star(&g, &b, &[0, 1], 10).unwrap();
        let large = mu_star(&g, &b, &[0, 1], 1000).unwrap();
        assert!(large > small);
        assert!(mu_star(&g, &b, &(0..21).collect::<Vec<_>>(), 30).is_err());
    }

    #[test]
    fn norm_bounds_hold() {
        let r0 = moment_norm_bounds_check(4, 0.0);
        assert_eq!(r0.l_norm_1, 0.0);
        assert!(r0.a_holds && r0.l_holds);

        let r = moment_norm_bounds_check(6, (1.0f64 / 15.0).sqrt());
        assert!(r.a_holds && r.l_holds, "report {r:?}");

        let r2 = moment_norm_bounds_check(4, 0.3);
        assert!(r2.a_norm_2 <= r2.a_norm_1 + 1e-12);
    }

    #[test]
    fn predict_errors_on_vanishing_trig_multiplier() {
        let sigma = 0.3;
        let a = sigma * 3f64.sqrt();
        let lib = ode_poly_library(1, 1)
            .with_trig(vec![vec![std::f64::consts::PI / a]])
            .unwrap();
        let mm = MomentMatrix::new(&lib, Distribution::Uniform { sigma }).unwrap();
        let w = vec![0.1; lib.total_columns()];
        assert!(matches!(
            mm.predict_continuum_coefficients(&w),
            Err(Error::SingularBias(_))
        ));
        // The forward map still exists.
        assert!(mm.cross_correlation_expansion(&w).is_ok());
    }
}
