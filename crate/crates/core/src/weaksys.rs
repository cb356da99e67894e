//! Trial-function libraries and assembly of the weak-form linear system
//! `(G, b)` at query points.
//!
//! Each row of `G` pairs one query point with the discrete convolution of a
//! derivative stencil `Ψ^s` against a trial-function field `f_j(U)`; the
//! right-hand side `b` convolves the left-hand-side stencil `Ψ^0` against the
//! state components. Columns are laid out as `c = (s−1)·J + j`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::ArrayD;
use rayon::prelude::*;

use crate::data::{Dataset, Grid};
use crate::error::{Error, Result};
use crate::numeric::{monomials_grlex, pairwise_dot};
use crate::testfn::{build_stencil, Stencil};

/// One dictionary entry: a multivariate monomial or a trigonometric function
/// of a frequency vector applied to the state.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialFunction {
    /// `∏_i u_i^{p_i}` with the exponent vector over state components.
    Monomial(Vec<u32>),
    /// `cos(ωᵀu)`.
    Cos(Vec<f64>),
    /// `sin(ωᵀu)`.
    Sin(Vec<f64>),
}

impl TrialFunction {
    pub fn eval(&self, state: &[f64]) -> f64 {
        match self {
            TrialFunction::Monomial(p) => p
                .iter()
                .zip(state)
                .map(|(&e, &u)| u.powi(e as i32))
                .product(),
            TrialFunction::Cos(w) => dot(w, state).cos(),
            TrialFunction::Sin(w) => dot(w, state).sin(),
        }
    }

    /// Total polynomial degree; `None` for trigonometric entries.
    pub fn degree(&self) -> Option<u32> {
        match self {
            TrialFunction::Monomial(p) => Some(p.iter().sum()),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TrialFunction::Monomial(p) => {
                if p.iter().all(|&e| e == 0) {
                    return "1".to_string();
                }
                let mut s = String::new();
                for (i, &e) in p.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    if !s.is_empty() {
                        s.push('*');
                    }
                    if e == 1 {
                        let _ = write!(s, "u{}", i + 1);
                    } else {
                        let _ = write!(s, "u{}^{}", i + 1, e);
                    }
                }
                s
            }
            TrialFunction::Cos(w) => format!("cos({})", freq_label(w)),
            TrialFunction::Sin(w) => format!("sin({})", freq_label(w)),
        }
    }
}

fn freq_label(w: &[f64]) -> String {
    w.iter()
        .enumerate()
        .map(|(i, v)| format!("{v}u{}", i + 1))
        .collect::<Vec<_>>()
        .join("+")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The model library: trial functions crossed with derivative multi-indices.
/// `derivative_multi_indices[0]` is the left-hand-side operator α⁰; the
/// remaining S entries index the blocks of `G`.
#[derive(Debug, Clone)]
pub struct LibrarySpec {
    state_dim: usize,
    trials: Vec<TrialFunction>,
    derivative_multi_indices: Vec<Vec<u32>>,
    poly_max_total_degree: Option<u32>,
    trig_frequencies: Vec<Vec<f64>>,
}

impl LibrarySpec {
    /// Multivariate monomials of total degree ≤ `p_max` in graded
    /// lexicographic order. `alphas[0]` is the LHS operator.
    pub fn polynomial(state_dim: usize, p_max: u32, alphas: Vec<Vec<u32>>) -> Result<Self> {
        let trials = monomials_grlex(state_dim, p_max)
            .into_iter()
            .map(TrialFunction::Monomial)
            .collect();
        let mut lib = Self::custom(state_dim, trials, alphas)?;
        lib.poly_max_total_degree = Some(p_max);
        Ok(lib)
    }

    /// Appends a cosine and a sine column per frequency, after the monomials.
    pub fn with_trig(mut self, frequencies: Vec<Vec<f64>>) -> Result<Self> {
        for w in &frequencies {
            if w.len() != self.state_dim {
                return Err(Error::InvalidArgument(format!(
                    "frequency vector has {} components, state_dim is {}",
                    w.len(),
                    self.state_dim
                )));
            }
            self.trials.push(TrialFunction::Cos(w.clone()));
            self.trials.push(TrialFunction::Sin(w.clone()));
        }
        self.trig_frequencies.extend(frequencies);
        Ok(self)
    }

    /// A library over an explicit trial list (used for sub-libraries such as
    /// the degree-1 concentration checks).
    pub fn custom(
        state_dim: usize,
        trials: Vec<TrialFunction>,
        alphas: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be >= 1".into()));
        }
        if trials.is_empty() {
            return Err(Error::InvalidArgument("library has no trial functions".into()));
        }
        if alphas.len() < 2 {
            return Err(Error::InvalidArgument(
                "need the LHS multi-index plus at least one trial operator".into(),
            ));
        }
        let arity = alphas[0].len();
        if alphas.iter().any(|a| a.len() != arity) {
            return Err(Error::InvalidArgument("derivative multi-indices of mixed arity".into()));
        }
        if alphas[1..].iter().any(|a| *a == alphas[0]) {
            return Err(Error::InvalidArgument(
                "the LHS operator must not repeat among the trial operators".into(),
            ));
        }
        Ok(Self {
            state_dim,
            trials,
            derivative_multi_indices: alphas,
            poly_max_total_degree: None,
            trig_frequencies: Vec::new(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn trials(&self) -> &[TrialFunction] {
        &self.trials
    }

    pub fn poly_max_total_degree(&self) -> Option<u32> {
        self.poly_max_total_degree
    }

    pub fn trig_frequencies(&self) -> &[Vec<f64>] {
        &self.trig_frequencies
    }

    /// α⁰, the left-hand-side operator.
    pub fn lhs_alpha(&self) -> &[u32] {
        &self.derivative_multi_indices[0]
    }

    /// α¹..α^S, the operators applied to trial functions.
    pub fn rhs_alphas(&self) -> &[Vec<u32>] {
        &self.derivative_multi_indices[1..]
    }

    /// J: trial functions per derivative block.
    pub fn j_per_block(&self) -> usize {
        self.trials.len()
    }

    /// S: number of derivative blocks.
    pub fn num_blocks(&self) -> usize {
        self.derivative_multi_indices.len() - 1
    }

    /// 𝔍 = S·J, the total column count.
    pub fn total_columns(&self) -> usize {
        self.num_blocks() * self.j_per_block()
    }

    pub fn column_index(&self) -> ColumnIndex {
        ColumnIndex::from_library(self)
    }
}

/// Bijective map between flat column indices `c = (s−1)·J + j` and
/// (derivative block, trial function) pairs, `s ∈ 1..=S`, `j ∈ 1..=J`.
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    j_per_block: usize,
    descriptors: Vec<(Vec<u32>, TrialFunction)>,
}

impl ColumnIndex {
    pub fn from_library(lib: &LibrarySpec) -> Self {
        let mut descriptors = Vec::with_capacity(lib.total_columns());
        for alpha in lib.rhs_alphas() {
            for trial in lib.trials() {
                descriptors.push((alpha.clone(), trial.clone()));
            }
        }
        Self { j_per_block: lib.j_per_block(), descriptors }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// 0-based flat index for 1-based (s, j).
    pub fn flat(&self, s: usize, j: usize) -> usize {
        (s - 1) * self.j_per_block + (j - 1)
    }

    /// 1-based (s, j) for a 0-based flat index.
    pub fn split(&self, c: usize) -> (usize, usize) {
        (c / self.j_per_block + 1, c % self.j_per_block + 1)
    }

    pub fn descriptor(&self, c: usize) -> &(Vec<u32>, TrialFunction) {
        &self.descriptors[c]
    }

    pub fn label(&self, c: usize) -> String {
        let (alpha, trial) = &self.descriptors[c];
        if alpha.iter().all(|&a| a == 0) {
            trial.label()
        } else {
            let d: Vec<String> = alpha.iter().map(|a| a.to_string()).collect();
            format!("d[{}]({})", d.join(","), trial.label())
        }
    }
}

/// The assembled weak-form system.
#[derive(Debug, Clone)]
pub struct WeakSystem {
    /// K×𝔍 design matrix.
    pub g: DMatrix<f64>,
    /// K×n right-hand side, one column per state component.
    pub b: DMatrix<f64>,
    /// Grid indices of the K query points.
    pub query_points: Vec<Vec<usize>>,
    pub column_index: ColumnIndex,
    pub stencil_radii: Vec<usize>,
    pub grid: Grid,
}

impl WeakSystem {
    /// Relative residual ‖G w − b_col‖₂ / ‖b_col‖₂.
    pub fn relative_residual(&self, w: &[f64], response: usize) -> f64 {
        let w = nalgebra::DVector::from_column_slice(w);
        let b = self.b.column(response);
        let r = &self.g * w - b;
        r.norm() / b.norm()
    }

    /// Dumps `(G|b)` as CSV with a descriptor header row, for
    /// cross-implementation diffing.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header: Vec<String> = (0..self.column_index.len())
            .map(|c| self.column_index.label(c))
            .collect();
        for r in 0..self.b.ncols() {
            header.push(format!("b{}", r + 1));
        }
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.g.nrows() {
            let mut row: Vec<String> = (0..self.g.ncols()).map(|c| format!("{}", self.g[(k, c)])).collect();
            for r in 0..self.b.ncols() {
                row.push(format!("{}", self.b[(k, r)]));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Equally spaced interior query points whose stencil footprints stay inside
/// the grid. If fewer admissible points exist than requested, all of them are
/// returned; otherwise per-axis counts are chosen to maximize the lattice
/// size subject to ∏ counts ≤ `requested`, incrementing axes round-robin.
pub fn choose_query_points(
    grid: &Grid,
    stencil_radii: &[usize],
    requested: usize,
) -> Result<Vec<Vec<usize>>> {
    if requested == 0 {
        return Err(Error::InvalidArgument("requested query count must be >= 1".into()));
    }
    let dims = grid.dims();
    if stencil_radii.len() != dims {
        return Err(Error::InvalidArgument("stencil radii arity mismatch".into()));
    }
    let mut admissible = Vec::with_capacity(dims);
    for q in 0..dims {
        let n = grid.counts()[q];
        let m = stencil_radii[q];
        if 2 * m + 1 > n {
            return Err(Error::InvalidArgument(format!(
                "axis {q}: no admissible interior point (footprint {} > count {n})",
                2 * m + 1
            )));
        }
        admissible.push(n - 2 * m);
    }
    let total: usize = admissible.iter().product();

    let per_axis: Vec<usize> = if total <= requested {
        admissible.clone()
    } else {
        let ratio = (requested as f64 / total as f64).powf(1.0 / dims as f64);
        let mut counts: Vec<usize> = admissible
            .iter()
            .map(|&a| ((a as f64 * ratio).floor() as usize).clamp(1, a))
            .collect();
        loop {
            let mut grew = false;
            for q in 0..dims {
                if counts[q] < admissible[q] {
                    let product: usize = counts
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| if i == q { c + 1 } else { c })
                        .product();
                    if product <= requested {
                        counts[q] += 1;
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        counts
    };

    let mut axis_positions: Vec<Vec<usize>> = Vec::with_capacity(dims);
    for q in 0..dims {
        let m = stencil_radii[q];
        let span = admissible[q];
        let k = per_axis[q];
        let positions: Vec<usize> = if k == 1 {
            vec![m + ((span - 1) as f64 / 2.0).round() as usize]
        } else {
            (0..k)
                .map(|j| m + (j as f64 * (span - 1) as f64 / (k - 1) as f64).round() as usize)
                .collect()
        };
        axis_positions.push(positions);
    }

    let mut points = Vec::with_capacity(per_axis.iter().product());
    let mut cursor = vec![0usize; dims];
    'outer: loop {
        points.push(cursor.iter().enumerate().map(|(q, &i)| axis_positions[q][i]).collect());
        for q in (0..dims).rev() {
            cursor[q] += 1;
            if cursor[q] < axis_positions[q].len() {
                continue 'outer;
            }
            cursor[q] = 0;
        }
        break;
    }
    Ok(points)
}

/// Pointwise trial-function field `f(U)` over the dataset grid.
pub fn eval_trial(trial: &TrialFunction, dataset: &Dataset) -> ArrayD<f64> {
    let n = dataset.state_dim;
    let flat = dataset.flat();
    let points = dataset.grid.num_points();
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        out.push(trial.eval(&flat[k * n..(k + 1) * n]));
    }
    ArrayD::from_shape_vec(ndarray::IxDyn(dataset.grid.counts()), out).unwrap()
}

/// Stencil weights reversed along every axis, so row assembly is a plain dot
/// product against an ascending-order data window.
fn reversed_weights(stencil: &Stencil) -> Vec<f64> {
    let mut w = stencil.weights_flat().to_vec();
    w.reverse();
    w
}

struct WindowGather<'a> {
    field_strides: Vec<usize>,
    window_shape: Vec<usize>,
    fields: &'a [Vec<f64>],
}

impl WindowGather<'_> {
    /// Copies the footprint of `field` anchored at `start` (per-axis lowest
    /// corner) into `buf`, innermost axis contiguous.
    fn gather(&self, field: &[f64], start: &[usize], buf: &mut [f64]) {
        let dims = self.window_shape.len();
        let inner = self.window_shape[dims - 1];
        let outer: usize = self.window_shape[..dims - 1].iter().product();
        let mut idx = vec![0usize; dims - 1];
        for block in 0..outer.max(1) {
            let mut offset = start[dims - 1];
            for q in 0..dims - 1 {
                offset += (start[q] + idx[q]) * self.field_strides[q];
            }
            let dst = &mut buf[block * inner..(block + 1) * inner];
            dst.copy_from_slice(&field[offset..offset + inner]);
            for q in (0..dims - 1).rev() {
                idx[q] += 1;
                if idx[q] < self.window_shape[q] {
                    break;
                }
                idx[q] = 0;
            }
        }
    }
}

/// Assembles the weak system: `b_k = Ψ⁰ ∗ U(x_k)` componentwise and
/// `G_{k,(s−1)J+j} = Ψ^s ∗ f_j(U)(x_k)`, by direct dense accumulation per
/// query point with pairwise summation.
pub fn assemble(
    dataset: &Dataset,
    library: &LibrarySpec,
    stencil_radii: &[usize],
    query_points: &[Vec<usize>],
) -> Result<WeakSystem> {
    if library.state_dim() != dataset.state_dim {
        return Err(Error::InvalidArgument(format!(
            "library state_dim {} vs dataset {}",
            library.state_dim(),
            dataset.state_dim
        )));
    }
    if library.total_columns() == 0 {
        return Err(Error::InvalidArgument("library has no columns".into()));
    }
    if query_points.is_empty() {
        return Err(Error::InvalidArgument("need at least one query point".into()));
    }
    let grid = &dataset.grid;
    let dims = grid.dims();
    for p in query_points {
        if p.len() != dims {
            return Err(Error::InvalidArgument("query point arity mismatch".into()));
        }
        for q in 0..dims {
            let m = stencil_radii[q];
            if p[q] < m || p[q] + m >= grid.counts()[q] {
                return Err(Error::InvalidArgument(format!(
                    "query point {p:?} violates the interior condition on axis {q}"
                )));
            }
        }
    }

    let lhs_stencil = build_stencil(grid, stencil_radii, library.lhs_alpha())?;
    let rhs_stencils: Vec<Stencil> = library
        .rhs_alphas()
        .iter()
        .map(|a| build_stencil(grid, stencil_radii, a))
        .collect::<Result<_>>()?;
    let lhs_rev = reversed_weights(&lhs_stencil);
    let rhs_rev: Vec<Vec<f64>> = rhs_stencils.iter().map(reversed_weights).collect();

    // Trial-function fields and state-component fields, flattened row-major.
    let trial_fields: Vec<Vec<f64>> = library
        .trials()
        .iter()
        .map(|t| eval_trial(t, dataset).into_raw_vec_and_offset().0)
        .collect();
    let n = dataset.state_dim;
    let state_fields: Vec<Vec<f64>> = (0..n)
        .map(|c| dataset.component(c).into_raw_vec_and_offset().0)
        .collect();

    let mut field_strides = vec![1usize; dims];
    for q in (0..dims.saturating_sub(1)).rev() {
        field_strides[q] = field_strides[q + 1] * grid.counts()[q + 1];
    }
    let window_shape: Vec<usize> = stencil_radii.iter().map(|m| 2 * m + 1).collect();
    let window_len: usize = window_shape.iter().product();
    let gather = WindowGather {
        field_strides,
        window_shape,
        fields: &trial_fields,
    };

    let j_count = library.j_per_block();
    let s_count = library.num_blocks();
    let cols = library.total_columns();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = query_points
        .par_iter()
        .map(|p| {
            let start: Vec<usize> = p.iter().zip(stencil_radii).map(|(&q, &m)| q - m).collect();
            let mut window = vec![0.0; window_len];
            let mut g_row = vec![0.0; cols];
            for (j, field) in gather.fields.iter().enumerate() {
                gather.gather(field, &start, &mut window);
                for s in 0..s_count {
                    g_row[s * j_count + j] = pairwise_dot(&rhs_rev[s], &window);
                }
            }
            let mut b_row = vec![0.0; n];
            for (c, field) in state_fields.iter().enumerate() {
                gather.gather(field, &start, &mut window);
                b_row[c] = pairwise_dot(&lhs_rev, &window);
            }
            (g_row, b_row)
        })
        .collect();

    let k = query_points.len();
    let mut g = DMatrix::zeros(k, cols);
    let mut b = DMatrix::zeros(k, n);
    for (row_idx, (g_row, b_row)) in rows.iter().enumerate() {
        for (c, &v) in g_row.iter().enumerate() {
            g[(row_idx, c)] = v;
        }
        for (c, &v) in b_row.iter().enumerate() {
            b[(row_idx, c)] = v;
        }
    }

    Ok(WeakSystem {
        g,
        b,
        query_points: query_points.to_vec(),
        column_index: library.column_index(),
        stencil_radii: stencil_radii.to_vec(),
        grid: grid.clone(),
    })
}
