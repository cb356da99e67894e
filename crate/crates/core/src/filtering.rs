//! Moving-average pre-filtering, annihilating-stencil noise estimation, and
//! filter-width selection (the static heuristic and the adaptive iteration).

use crate::data::{DataKind, Dataset, Grid};
use crate::error::{Error, Result};

/// A separable simple moving-average filter: per-axis odd widths, every
/// weight equal to 1/∏widths. Weights sum to one and are strictly positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSpec {
    widths: Vec<usize>,
}

impl FilterSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidArgument("filter needs at least one axis".into()));
        }
        if widths.iter().any(|&w| w == 0 || w % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "filter widths must be odd and >= 1, got {widths:?}"
            )));
        }
        Ok(Self { widths })
    }

    pub fn identity(dims: usize) -> Self {
        Self { widths: vec![1; dims] }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Total width m^(ν) = ∏ widths.
    pub fn total_width(&self) -> usize {
        self.widths.iter().product()
    }

    pub fn is_identity(&self) -> bool {
        self.widths.iter().all(|&w| w == 1)
    }
}

/// Reflects an out-of-range index back into [0, n) with the edge sample
/// participating in the reflection (…, u1, u0 | u0, u1, …). This padding
/// keeps the filter mass-preserving: the global mean is exact.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Centered mean over the filter footprint with symmetric boundary
/// reflection; output lives on the same grid. Separable passes per axis.
pub fn moving_average(dataset: &Dataset, spec: &FilterSpec) -> Result<Dataset> {
    let dims = dataset.grid.dims();
    if spec.widths().len() != dims {
        return Err(Error::InvalidArgument(format!(
            "filter has {} axes, dataset has {dims}",
            spec.widths().len()
        )));
    }
    for (q, (&w, &n)) in spec.widths().iter().zip(dataset.grid.counts()).enumerate() {
        if w > n {
            return Err(Error::InvalidArgument(format!(
                "axis {q}: filter width {w} exceeds axis count {n}"
            )));
        }
    }

    let mut shape: Vec<usize> = dataset.grid.counts().to_vec();
    shape.push(dataset.state_dim);
    let mut buf = dataset.flat().to_vec();
    let mut strides = vec![1usize; shape.len()];
    for q in (0..shape.len() - 1).rev() {
        strides[q] = strides[q + 1] * shape[q + 1];
    }

    let mut lane = Vec::new();
    let mut out_lane = Vec::new();
    for axis in 0..dims {
        let w = spec.widths()[axis];
        if w == 1 {
            continue;
        }
        let half = (w / 2) as i64;
        let n = shape[axis];
        let stride = strides[axis];
        let lanes: usize = buf.len() / n;
        lane.resize(n, 0.0);
        out_lane.resize(n, 0.0);
        // Enumerate lane base offsets: all indices with axis-coordinate 0.
        for lane_id in 0..lanes {
            let mut rem = lane_id;
            let mut base = 0usize;
            for (q, &s) in strides.iter().enumerate() {
                if q == axis {
                    continue;
                }
                let extent = shape[q];
                let coord = rem % extent;
                rem /= extent;
                base += coord * s;
            }
            for i in 0..n {
                lane[i] = buf[base + i * stride];
            }
            for i in 0..n as i64 {
                let mut acc = 0.0;
                for d in -half..=half {
                    acc += lane[reflect(i + d, n)];
                }
                out_lane[i as usize] = acc / w as f64;
            }
            for i in 0..n {
                buf[base + i * stride] = out_lane[i];
            }
        }
    }

    let values = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&shape), buf).unwrap();
    Dataset::new(
        dataset.grid.clone(),
        dataset.state_dim,
        values,
        dataset.kind,
        dataset.sigma,
        dataset.seed,
    )
}

#[derive(Debug, Clone)]
pub struct NoiseEstimate {
    pub sigma_est: f64,
    pub per_axis: Vec<f64>,
    pub method: &'static str,
}

/// Unit-norm 7-point stencil annihilating polynomials of degree ≤ 5 (6th
/// binomial differences scaled to ‖f‖₂ = 1), so its response to smooth data
/// is ≈ 0 and to white noise has root-mean-square σ.
const ANNIHILATOR: [f64; 7] = {
    let raw = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];
    // ‖raw‖₂² = 924.
    let norm = 30.397368307141326; // sqrt(924)
    [
        raw[0] / norm,
        raw[1] / norm,
        raw[2] / norm,
        raw[3] / norm,
        raw[4] / norm,
        raw[5] / norm,
        raw[6] / norm,
    ]
};

/// Estimates the noise standard deviation by convolving the annihilating
/// stencil along each grid axis (valid region only, all state components
/// pooled), taking the per-axis root-mean-square, and combining axes by the
/// median.
pub fn estimate_sigma(dataset: &Dataset) -> Result<NoiseEstimate> {
    let dims = dataset.grid.dims();
    let mut shape: Vec<usize> = dataset.grid.counts().to_vec();
    shape.push(dataset.state_dim);
    for (q, &n) in dataset.grid.counts().iter().enumerate() {
        if n < 7 {
            return Err(Error::InvalidArgument(format!(
                "axis {q} has {n} < 7 points; the 7-point stencil does not fit"
            )));
        }
    }
    let buf = dataset.flat();
    let mut strides = vec![1usize; shape.len()];
    for q in (0..shape.len() - 1).rev() {
        strides[q] = strides[q + 1] * shape[q + 1];
    }

    let mut per_axis = Vec::with_capacity(dims);
    for axis in 0..dims {
        let n = shape[axis];
        let stride = strides[axis];
        let lanes: usize = buf.len() / n;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for lane_id in 0..lanes {
            let mut rem = lane_id;
            let mut base = 0usize;
            for (q, &s) in strides.iter().enumerate() {
                if q == axis {
                    continue;
                }
                let extent = shape[q];
                let coord = rem % extent;
                rem /= extent;
                base += coord * s;
            }
            for start in 0..=(n - 7) {
                let mut acc = 0.0;
                for (t, &c) in ANNIHILATOR.iter().enumerate() {
                    acc += c * buf[base + (start + t) * stride];
                }
                sum_sq += acc * acc;
                count += 1;
            }
        }
        per_axis.push((sum_sq / count as f64).sqrt());
    }

    let mut sorted = per_axis.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sigma_est = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(NoiseEstimate { sigma_est, per_axis, method: "annihilating-6th-difference" })
}

fn force_odd_down(w: usize) -> usize {
    if w == 0 {
        1
    } else if w % 2 == 0 {
        w - 1
    } else {
        w
    }
}

/// Static filter-width rule: per-axis width
/// `⌊min(2·(C(p_max,2)·σ_est²/τ*)^{1/(d+1)}, m^{1/(d+1)}/2)⌋`, forced odd
/// (rounded down), never below 1. The first argument shrinks the filtered
/// variance enough to cancel spurious terms under the prior τ*; the cap keeps
/// the filter within half the test-function footprint per axis.
pub fn filter_width_heuristic(
    sigma_est: f64,
    p_max: u32,
    tau_star: f64,
    d: usize,
    support_size: usize,
) -> Vec<usize> {
    let axes = d + 1;
    let c = (p_max as f64) * (p_max as f64 - 1.0) / 2.0;
    let need = (c * sigma_est * sigma_est / tau_star).powf(1.0 / axes as f64) * 2.0;
    let cap = (support_size as f64).powf(1.0 / axes as f64) / 2.0;
    let width = force_odd_down(need.min(cap).floor().max(0.0) as usize);
    vec![width; axes]
}

/// Positive root of p(n) = n⁵ − n³ − ratio, unique on n > sqrt(3/5), located
/// by bisection on [1, 2·max(1, ratio^{1/3})].
pub fn smaf_root(ratio: f64) -> f64 {
    debug_assert!(ratio >= 0.0);
    if ratio == 0.0 {
        return 1.0;
    }
    let p = |n: f64| n.powi(5) - n.powi(3) - ratio;
    let mut lo = 1.0f64;
    let mut hi = 2.0 * ratio.powf(1.0 / 3.0).max(1.0);
    debug_assert!(p(lo) <= 0.0 && p(hi) >= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn snapped_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmafResult {
    pub width: usize,
    pub iterations: usize,
    /// False when the iteration exited on a cycle or the iteration cap
    /// rather than a fixed point.
    pub fixed_point: bool,
}

/// Least-squares quadratic coefficient a₂ averaged over sliding windows.
fn mean_abs_a2(series: &[f64], window: usize, h: f64) -> f64 {
    let w = window.max(3).min(series.len());
    // Centered abscissas x_i = (i − (w−1)/2)·h; symmetric, so the quadratic
    // coefficient decouples: a₂ = Σ(x_i² − S₂/w)y_i / Σ(x_i² − S₂/w)x_i².
    let half = (w as f64 - 1.0) / 2.0;
    let xs: Vec<f64> = (0..w).map(|i| (i as f64 - half) * h).collect();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let mean_x2 = s2 / w as f64;
    let denom: f64 = xs.iter().map(|x| (x * x - mean_x2) * x * x).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for start in 0..=(series.len() - w) {
        let a2: f64 = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x * x - mean_x2) * series[start + i])
            .sum::<f64>()
            / denom;
        total += a2.abs();
        count += 1;
    }
    total / count as f64
}

/// Adaptive moving-average width for a 1-D series: iterate local quadratic
/// fits (curvature proxy d = 2⟨|a₂|⟩), the stabilized scale
/// L = (d+τ)²h⁴/144, and the positive root of n⁵ − n³ − σ²/L, with the
/// result clamped to [3, n_max] and forced odd. Stops on a repeated width or
/// after 20 iterations (non-fixed-point exits are flagged).
pub fn adaptive_smaf_width(
    series: &[f64],
    sigma_est: f64,
    h: f64,
    gamma: f64,
    tau: f64,
    n_max: usize,
) -> SmafResult {
    let clamp_odd = |n: usize| -> usize {
        let n = n.clamp(3, n_max.max(3));
        if n % 2 == 0 {
            if n + 1 <= n_max.max(3) {
                n + 1
            } else {
                n - 1
            }
        } else {
            n
        }
    };
    let mut n = 3usize;
    let mut seen = vec![n];
    let mut iterations = 0;
    let mut fixed_point = false;
    while iterations < 20 {
        iterations += 1;
        let window = ((gamma * n as f64).round() as usize).max(3);
        let d = 2.0 * mean_abs_a2(series, window, h);
        let l = (d + tau) * (d + tau) * h.powi(4) / 144.0;
        let ratio = sigma_est * sigma_est / l;
        let next = clamp_odd(snapped_ceil(smaf_root(ratio)));
        if next == n {
            fixed_point = true;
            break;
        }
        if seen.contains(&next) {
            n = next;
            break;
        }
        seen.push(next);
        n = next;
    }
    SmafResult { width: n, iterations, fixed_point }
}

/// Convenience: heuristic-width moving average of a dataset given the
/// library degree, prior, and test-function support size. Returns the
/// filtered dataset and the spec used.
pub fn heuristic_filter(
    dataset: &Dataset,
    p_max: u32,
    tau_star: f64,
    support_size: usize,
) -> Result<(Dataset, FilterSpec)> {
    let est = estimate_sigma(dataset)?;
    let widths = filter_width_heuristic(
        est.sigma_est,
        p_max,
        tau_star,
        dataset.grid.dims() - 1,
        support_size,
    );
    let spec = FilterSpec::new(widths)?;
    let filtered = moving_average(dataset, &spec)?;
    Ok((filtered, spec))
}

/// Test helper: builds a 1-D dataset on [0, h·(n−1)].
#[doc(hidden)]
pub fn series_dataset(values: Vec<f64>, h: f64) -> Dataset {
    let n = values.len();
    let grid = Grid::new(vec![(0.0, h * (n - 1) as f64)], vec![n]).unwrap();
    let arr = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[n, 1]), values).unwrap();
    Dataset::new(grid, 1, arr, DataKind::Clean, 0.0, None).unwrap()
}
