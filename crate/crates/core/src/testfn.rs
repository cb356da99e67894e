//! The compactly supported reference test function, its exact derivatives to
//! arbitrary order, and the discrete convolution stencils built from it.
//!
//! The reference bump is `φ(v) = exp(c/(v²−1))` on (−1,1) and 0 outside, with
//! shape constant c = 9. Derivatives are generated symbolically through the
//! rational-prefactor recurrence
//!
//! ```text
//! φ⁽ᵏ⁾(v) = Pₖ(v)/(v²−1)^{2k} · φ(v),
//! Pₖ₊₁ = (v²−1)²Pₖ' − (4kv(v²−1) + 2cv)Pₖ,   P₀ = 1,
//! ```
//!
//! never by numerical differentiation; orders up to 8 are required by the
//! derivative libraries and finite differences would be unusable there.

use ndarray::{ArrayD, IxDyn};

use crate::data::Grid;
use crate::error::{Error, Result};

/// Values of 1 − v² below this are treated as outside the support. φ decays
/// faster than the rational prefactor blows up, so the limit is 0.
const EDGE_GUARD: f64 = 1e-10;

/// Polynomial utilities on dense ascending-power coefficient vectors.
fn poly_derivative(p: &[f64]) -> Vec<f64> {
    if p.len() <= 1 {
        return vec![0.0];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &ai) in a.iter().enumerate() {
        out[i] += ai;
    }
    for (i, &bi) in b.iter().enumerate() {
        out[i] -= bi;
    }
    out
}

fn poly_eval(p: &[f64], v: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * v + c)
}

/// The reference bump function with its derivative prefactors cached up to a
/// fixed maximum order. Evaluation is pure; the cache is immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct BumpFunction {
    shape_constant: f64,
    prefactors: Vec<Vec<f64>>,
}

impl BumpFunction {
    /// Builds the derivative cache for orders `0..=max_order`.
    pub fn new(shape_constant: f64, max_order: usize) -> Self {
        let c = shape_constant;
        let mut prefactors = Vec::with_capacity(max_order + 1);
        prefactors.push(vec![1.0]);
        // (v²−1)² = v⁴ − 2v² + 1 and the two multiplier pieces of the recurrence.
        let sq = [1.0, 0.0, -2.0, 0.0, 1.0];
        for k in 0..max_order {
            let pk = &prefactors[k];
            let dpk = poly_derivative(pk);
            let term1 = poly_mul(&sq, &dpk);
            // (4k·v(v²−1) + 2c·v) = [0, 2c − 4k, 0, 4k]
            let mult = vec![0.0, 2.0 * c - 4.0 * k as f64, 0.0, 4.0 * k as f64];
            let term2 = poly_mul(&mult, pk);
            prefactors.push(poly_sub(&term1, &term2));
        }
        Self { shape_constant: c, prefactors }
    }

    /// The paper-standard bump with shape constant 9.
    pub fn standard(max_order: usize) -> Self {
        Self::new(9.0, max_order)
    }

    pub fn max_order(&self) -> usize {
        self.prefactors.len() - 1
    }

    /// φ⁽ᵏ⁾(v); exactly 0 for |v| ≥ 1.
    pub fn eval(&self, order: usize, v: f64) -> f64 {
        assert!(
            order <= self.max_order(),
            "derivative order {order} beyond cached max {}",
            self.max_order()
        );
        let w = v * v - 1.0;
        if w >= -EDGE_GUARD {
            return 0.0;
        }
        let phi = (self.shape_constant / w).exp();
        if order == 0 {
            return phi;
        }
        poly_eval(&self.prefactors[order], v) * phi / w.powi(2 * order as i32)
    }
}

/// Convenience wrapper used by tests and examples: evaluates φ⁽ᵏ⁾(v) for the
/// standard bump.
pub fn bump_eval(order: usize, v: f64) -> f64 {
    BumpFunction::standard(order).eval(order, v)
}

/// A sampled derivative of the separable reference test function times the
/// trapezoidal volume element, ready for discrete convolution.
#[derive(Debug, Clone)]
pub struct Stencil {
    /// Derivative multi-index, one order per axis.
    pub alpha: Vec<u32>,
    /// Per-axis half-widths in grid points; the footprint covers 2m_q+1 points.
    pub radii: Vec<usize>,
    /// Dense weight tensor of shape (2m_1+1) × … × (2m_{d+1}+1).
    pub weights: ArrayD<f64>,
    /// The per-axis 1-D factors whose outer product forms `weights`; each
    /// already carries its chain-rule scale and grid spacing.
    pub axis_factors: Vec<Vec<f64>>,
}

impl Stencil {
    /// Total number of footprint points ∏(2m_q+1).
    pub fn support_size(&self) -> usize {
        self.radii.iter().map(|m| 2 * m + 1).product()
    }

    pub fn weights_flat(&self) -> &[f64] {
        self.weights.as_slice().expect("stencil weights are standard layout")
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights_flat().iter().map(|w| w.abs()).sum()
    }

    pub fn weight_sum(&self) -> f64 {
        crate::numeric::pairwise_sum(self.weights_flat())
    }
}

/// Samples `∂^α ψ` on a centered reference grid scaled so [−1,1] per axis maps
/// to [−m_q h_q, m_q h_q], applies the chain-rule factor (m_q h_q)^{−α_q}, and
/// multiplies by the uniform trapezoidal weight ∏ h_q.
pub fn build_stencil(grid: &Grid, radii: &[usize], alpha: &[u32]) -> Result<Stencil> {
    if radii.len() != grid.dims() || alpha.len() != grid.dims() {
        return Err(Error::InvalidArgument(format!(
            "radii/alpha must have {} axes, got {}/{}",
            grid.dims(),
            radii.len(),
            alpha.len()
        )));
    }
    for (q, (&m, &n)) in radii.iter().zip(grid.counts()).enumerate() {
        if 2 * m + 1 > n {
            return Err(Error::InvalidArgument(format!(
                "axis {q}: stencil footprint {} exceeds grid count {n}",
                2 * m + 1
            )));
        }
        if m == 0 && alpha[q] > 0 {
            return Err(Error::InvalidArgument(format!(
                "axis {q}: cannot differentiate across a zero-radius support"
            )));
        }
    }
    let max_order = *alpha.iter().max().unwrap() as usize;
    let bump = BumpFunction::standard(max_order);

    let mut axis_factors = Vec::with_capacity(grid.dims());
    for q in 0..grid.dims() {
        let m = radii[q];
        let h = grid.resolution()[q];
        let scale = if alpha[q] == 0 {
            1.0
        } else {
            (m as f64 * h).powi(-(alpha[q] as i32))
        };
        let mut factor = Vec::with_capacity(2 * m + 1);
        for i in -(m as i64)..=(m as i64) {
            let v = if m == 0 { 0.0 } else { i as f64 / m as f64 };
            factor.push(bump.eval(alpha[q] as usize, v) * scale * h);
        }
        axis_factors.push(factor);
    }

    let shape: Vec<usize> = radii.iter().map(|m| 2 * m + 1).collect();
    let mut weights = ArrayD::zeros(IxDyn(&shape));
    {
        let flat = weights.as_slice_mut().unwrap();
        let mut strides = vec![1usize; shape.len()];
        for q in (0..shape.len().saturating_sub(1)).rev() {
            strides[q] = strides[q + 1] * shape[q + 1];
        }
        for (lin, w) in flat.iter_mut().enumerate() {
            let mut rem = lin;
            let mut value = 1.0;
            for q in 0..shape.len() {
                let idx = rem / strides[q];
                rem %= strides[q];
                value *= axis_factors[q][idx];
            }
            *w = value;
        }
    }

    Ok(Stencil { alpha: alpha.to_vec(), radii: radii.to_vec(), weights, axis_factors })
}

/// Number of grid points inside the test-function support, the discretization
/// level `m` used throughout the experiment sweeps.
pub fn support_size(stencil: &Stencil) -> usize {
    stencil.support_size()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Fornberg's algorithm: finite-difference weights for derivative order m
    /// at x0 over the given nodes. Test-only oracle, independent of the
    /// symbolic recurrence it checks.
    fn fornberg_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
        let n = nodes.len();
        let mut c = vec![vec![0.0; m + 1]; n];
        let mut c1 = 1.0;
        let mut c4 = nodes[0] - x0;
        c[0][0] = 1.0;
        for i in 1..n {
            let mn = i.min(m);
            let mut c2 = 1.0;
            let c5 = c4;
            c4 = nodes[i] - x0;
            for j in 0..i {
                let c3 = nodes[i] - nodes[j];
                c2 *= c3;
                if j == i - 1 {
                    for k in (1..=mn).rev() {
                        c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                    }
                    c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
                }
                for k in (1..=mn).rev() {
                    c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
                }
                c[j][0] = c4 * c[j][0] / c3;
            }
            c1 = c2;
        }
        c.iter().map(|row| row[m]).collect()
    }

    #[test]
    fn bump_at_zero() {
        assert_relative_eq!(bump_eval(0, 0.0), (-9.0f64).exp(), max_relative = 1e-14);
        assert!((bump_eval(0, 0.0) - 1.2341e-4).abs() < 1e-8);
        assert_eq!(bump_eval(1, 0.0), 0.0);
    }

    #[test]
    fn bump_vanishes_outside_and_at_edges() {
        for k in 0..=8 {
            assert_eq!(bump_eval(k, 1.0), 0.0);
            assert_eq!(bump_eval(k, -1.0), 0.0);
            assert_eq!(bump_eval(k, 1.7), 0.0);
            assert_eq!(bump_eval(k, -(1.0 - 1e-12)), 0.0);
        }
    }

    #[test]
    fn bump_parity() {
        let bump = BumpFunction::standard(8);
        for k in 0..=8usize {
            for &v in &[0.1, 0.33, 0.5, 0.77, 0.9] {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_relative_eq!(
                    bump.eval(k, -v),
                    sign * bump.eval(k, v),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn bump_third_derivative_matches_finite_difference_oracle() {
        let h = 1e-3;
        let nodes: Vec<f64> = (-5..=5).map(|i| 0.5 + i as f64 * h).collect();
        let w = fornberg_weights(0.5, &nodes, 3);
        let fd: f64 = nodes
            .iter()
            .zip(&w)
            .map(|(&x, &c)| c * bump_eval(0, x))
            .sum();
        let exact = bump_eval(3, 0.5);
        assert_relative_eq!(exact, fd, max_relative = 1e-6);
    }

    #[test]
    fn bump_higher_orders_match_finite_difference_oracle() {
        // Step sizes balance truncation against the eps/h^k roundoff blowup.
        for (k, h, tol) in [(2usize, 1e-3, 1e-9), (4, 1e-2, 1e-7), (5, 1e-2, 1e-7), (6, 2e-2, 1e-5)] {
            let nodes: Vec<f64> = (-6..=6).map(|i| 0.3 + i as f64 * h).collect();
            let w = fornberg_weights(0.3, &nodes, k);
            let fd: f64 = nodes
                .iter()
                .zip(&w)
                .map(|(&x, &c)| c * bump_eval(0, x))
                .sum();
            let exact = bump_eval(k, 0.3);
            assert_relative_eq!(exact, fd, max_relative = tol);
        }
    }

    fn grid_1d(n: usize, h: f64) -> Grid {
        Grid::new(vec![(0.0, h * (n - 1) as f64)], vec![n]).unwrap()
    }

    /// Trapezoid of φ over [−1, 1] at `pts` samples per unit half-width;
    /// oracle for the stencil weight sum (which equals h·Σφ(v_i)·scale).
    fn refined_bump_integral(refine: usize) -> f64 {
        let m = refine;
        let mut sum = 0.0;
        for i in -(m as i64)..=(m as i64) {
            sum += bump_eval(0, i as f64 / m as f64);
        }
        sum / m as f64
    }

    #[test]
    fn stencil_weight_sum_matches_refined_quadrature() {
        let m = 40;
        let h = 0.01;
        let grid = grid_1d(201, h);
        let s = build_stencil(&grid, &[m], &[0]).unwrap();
        // weight_sum = Σ φ(i/m)·h = (m·h)·[Σφ(v_i)/m] ≈ (m·h)·∫φ.
        let oracle = (m as f64 * h) * refined_bump_integral(10 * m);
        assert_relative_eq!(s.weight_sum(), oracle, max_relative = 1e-4);
    }

    #[test]
    fn derivative_stencil_sums_to_zero() {
        // Odd orders cancel exactly by parity; even orders rely on the
        // superalgebraic quadrature decay, which clears 1e-8 from m = 20 up.
        let grid = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![64, 64]).unwrap();
        let s = build_stencil(&grid, &[12, 12], &[0, 1]).unwrap();
        assert!(s.weight_sum().abs() <= 1e-8 * s.l1_norm());
        let s2 = build_stencil(&grid, &[20, 20], &[2, 0]).unwrap();
        assert!(s2.weight_sum().abs() <= 1e-8 * s2.l1_norm());
    }

    #[test]
    fn refinement_leaves_weight_sum_invariant() {
        let coarse = build_stencil(&grid_1d(101, 0.02), &[25], &[0]).unwrap();
        let fine = build_stencil(&grid_1d(201, 0.01), &[50], &[0]).unwrap();
        assert_relative_eq!(coarse.weight_sum(), fine.weight_sum(), max_relative = 1e-6);
    }

    #[test]
    fn support_size_examples() {
        let g1 = grid_1d(64, 0.1);
        assert_eq!(build_stencil(&g1, &[10], &[0]).unwrap().support_size(), 21);
        assert_eq!(build_stencil(&g1, &[0], &[0]).unwrap().support_size(), 1);
        let g2 = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![86, 86]).unwrap();
        assert_eq!(build_stencil(&g2, &[15, 15], &[0, 0]).unwrap().support_size(), 961);
    }

    #[test]
    fn stencil_rejects_oversized_footprint_and_bad_axes() {
        let g = grid_1d(10, 0.1);
        assert!(build_stencil(&g, &[5], &[0]).is_err());
        assert!(build_stencil(&g, &[0], &[1]).is_err());
    }

    #[test]
    fn weights_flip_with_derivative_parity() {
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![40, 40]).unwrap();
        let s = build_stencil(&g, &[8, 6], &[1, 2]).unwrap();
        let w = &s.weights;
        let (nx, nt) = (2 * 8, 2 * 6);
        for i in 0..=nx {
            for j in 0..=nt {
                let a = w[[i, j]];
                let b = w[[nx - i, nt - j]];
                // (−1)^{α_x} per x-reversal, (−1)^{α_t} per t-reversal.
                assert_relative_eq!(a, -b * 1.0, max_relative = 1e-12, epsilon = 1e-18);
            }
        }
    }

    #[test]
    fn quadrature_error_decays_with_order_at_least_two() {
        // Smooth compactly supported integrand: superalgebraic trapezoid
        // convergence, so the empirical slope easily clears 2.
        let reference = refined_bump_integral(1 << 14);
        let mut logs_h = Vec::new();
        let mut logs_e = Vec::new();
        for m in [4usize, 6, 8, 12] {
            let err = (refined_bump_integral(m) - reference).abs();
            logs_h.push((1.0 / m as f64).ln());
            logs_e.push(err.ln());
        }
        let slope = crate::numeric::fit_slope(&logs_h, &logs_e);
        assert!(slope >= 2.0, "quadrature slope {slope}");
    }
}
