//! Uniform grids, datasets, noise injection, subsampling, and the WSD1
//! on-disk dataset format.
//!
//! A [`Grid`] is a uniform (d+1)-dimensional sample lattice (d spatial axes
//! plus time). A [`Dataset`] attaches an n-component state tensor to a grid;
//! the tensor is stored row-major with the state component as the innermost
//! axis. All types are immutable after construction and operations are pure
//! given the recorded seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn, SliceInfoElem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, population_mean_std};

/// Uniform sample lattice over a box `[a_1,b_1] x ... x [a_{d+1},b_{d+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<(f64, f64)>,
    counts: Vec<usize>,
    resolution: Vec<f64>,
}

impl Grid {
    /// Builds a grid from per-axis extents and point counts; spacings are
    /// derived as `h_q = (b_q - a_q) / (N_q - 1)`.
    pub fn new(extents: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() != counts.len() {
            return Err(Error::InvalidArgument(format!(
                "extents/counts must be nonempty and of equal length, got {} and {}",
                extents.len(),
                counts.len()
            )));
        }
        for (q, (&(a, b), &n)) in extents.iter().zip(&counts).enumerate() {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "axis {q}: degenerate extent [{a}, {b}]"
                )));
            }
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "axis {q}: count {n} < 2"
                )));
            }
        }
        let resolution = extents
            .iter()
            .zip(&counts)
            .map(|(&(a, b), &n)| (b - a) / (n - 1) as f64)
            .collect();
        Ok(Self { extents, counts, resolution })
    }

    /// Number of axes (spatial dimension d plus one time axis).
    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn resolution(&self) -> &[f64] {
        &self.resolution
    }

    /// Physical coordinate of sample `idx` on `axis`.
    pub fn coordinate(&self, axis: usize, idx: usize) -> f64 {
        self.extents[axis].0 + self.resolution[axis] * idx as f64
    }

    /// Total number of lattice points.
    pub fn num_points(&self) -> usize {
        self.counts.iter().product()
    }
}

/// Whether a dataset carries injected measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Clean,
    Noisy,
}

/// Noise distribution for [`Dataset::add_noise`]. A uniform distribution with
/// standard deviation σ has half-width `a = σ·sqrt(3)` (mean zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDistribution {
    Gaussian,
    Uniform,
}

/// How the noise level is interpreted: an absolute standard deviation, or a
/// ratio multiplying the population standard deviation of the data being
/// corrupted (computed at the resolution being corrupted; the realized
/// absolute σ is recorded in the output metadata).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelMode {
    AbsoluteSigma,
    NoiseRatio,
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub level_mode: LevelMode,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian_ratio(level: f64, seed: u64) -> Self {
        Self { distribution: NoiseDistribution::Gaussian, level_mode: LevelMode::NoiseRatio, level, seed }
    }

    pub fn gaussian_absolute(level: f64, seed: u64) -> Self {
        Self { distribution: NoiseDistribution::Gaussian, level_mode: LevelMode::AbsoluteSigma, level, seed }
    }
}

/// State samples on a [`Grid`]. `values` has shape `counts × state_dim`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: Grid,
    pub state_dim: usize,
    pub values: ArrayD<f64>,
    pub kind: DataKind,
    pub sigma: f64,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(
        grid: Grid,
        state_dim: usize,
        values: ArrayD<f64>,
        kind: DataKind,
        sigma: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be >= 1".into()));
        }
        let mut shape: Vec<usize> = grid.counts().to_vec();
        shape.push(state_dim);
        if values.shape() != shape.as_slice() {
            return Err(Error::InvalidArgument(format!(
                "values shape {:?} does not match grid counts x state_dim {:?}",
                values.shape(),
                shape
            )));
        }
        if kind == DataKind::Clean && sigma != 0.0 {
            return Err(Error::InvalidArgument("clean dataset must have sigma = 0".into()));
        }
        Ok(Self { grid, state_dim, values, kind, sigma, seed })
    }

    pub fn clean(grid: Grid, state_dim: usize, values: ArrayD<f64>) -> Result<Self> {
        Self::new(grid, state_dim, values, DataKind::Clean, 0.0, None)
    }

    /// Population standard deviation of every tensor entry flattened into one
    /// vector (all components pooled).
    pub fn stdev_all(&self) -> f64 {
        let flat = self.values.as_slice().expect("dataset tensor is standard layout");
        population_mean_std(flat).1
    }

    /// Keeps every `factor`-th sample per axis starting at index 0, on a
    /// correspondingly coarsened grid. Noise metadata is preserved.
    pub fn subsample(&self, factor_per_axis: &[usize]) -> Result<Dataset> {
        if factor_per_axis.len() != self.grid.dims() {
            return Err(Error::InvalidArgument(format!(
                "expected {} subsampling factors, got {}",
                self.grid.dims(),
                factor_per_axis.len()
            )));
        }
        if factor_per_axis.iter().any(|&f| f < 1) {
            return Err(Error::InvalidArgument("subsampling factor must be >= 1".into()));
        }
        let mut slices: Vec<SliceInfoElem> = factor_per_axis
            .iter()
            .map(|&f| SliceInfoElem::Slice { start: 0, end: None, step: f as isize })
            .collect();
        slices.push(SliceInfoElem::Slice { start: 0, end: None, step: 1 });
        let view = self.values.slice(slices.as_slice());
        let values = view.as_standard_layout().to_owned();

        let mut extents = Vec::with_capacity(self.grid.dims());
        let mut counts = Vec::with_capacity(self.grid.dims());
        for (q, &f) in factor_per_axis.iter().enumerate() {
            let n_old = self.grid.counts()[q];
            let n_new = (n_old + f - 1) / f;
            let a = self.grid.extents()[q].0;
            let b = a + self.grid.resolution()[q] * (f * (n_new - 1)) as f64;
            extents.push((a, b));
            counts.push(n_new);
        }
        Dataset::new(Grid::new(extents, counts)?, self.state_dim, values, self.kind, self.sigma, self.seed)
    }

    /// Adds i.i.d. mean-zero noise with standard deviation σ to every entry,
    /// drawing in row-major tensor order from a ChaCha stream seeded by
    /// `spec.seed`. In `NoiseRatio` mode σ = level · stdev_all(self).
    pub fn add_noise(&self, spec: &NoiseSpec) -> Result<Dataset> {
        if self.kind != DataKind::Clean {
            return Err(Error::InvalidArgument("add_noise expects a clean dataset".into()));
        }
        if !(spec.level >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level {} < 0", spec.level)));
        }
        let sigma = match spec.level_mode {
            LevelMode::AbsoluteSigma => spec.level,
            LevelMode::NoiseRatio => spec.level * self.stdev_all(),
        };
        let mut values = self.values.clone();
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let flat = values.as_slice_mut().expect("dataset tensor is standard layout");
            match spec.distribution {
                NoiseDistribution::Gaussian => {
                    let normal = Normal::new(0.0, sigma)
                        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                    for v in flat.iter_mut() {
                        *v += normal.sample(&mut rng);
                    }
                }
                NoiseDistribution::Uniform => {
                    let a = sigma * 3f64.sqrt();
                    let uniform = Uniform::new_inclusive(-a, a);
                    for v in flat.iter_mut() {
                        *v += uniform.sample(&mut rng);
                    }
                }
            }
        } else {
            // Zero level: keep values bit-identical but mark the output noisy.
            let _ = ChaCha8Rng::seed_from_u64(spec.seed);
        }
        Dataset::new(self.grid.clone(), self.state_dim, values, DataKind::Noisy, sigma, Some(spec.seed))
    }

    /// Flat row-major view of the tensor.
    pub fn flat(&self) -> &[f64] {
        self.values.as_slice().expect("dataset tensor is standard layout")
    }

    /// The field of one state component as a `counts`-shaped tensor.
    pub fn component(&self, c: usize) -> ArrayD<f64> {
        let view = self.values.index_axis(ndarray::Axis(self.grid.dims()), c);
        view.as_standard_layout().to_owned().into_dyn()
    }
}

/// `make_grid` in operation terms; see [`Grid::new`].
pub fn make_grid(extents: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Grid> {
    Grid::new(extents, counts)
}

const MAGIC: &[u8; 8] = b"WSDATA1\0";

/// Writes a dataset in the WSD1 format: the 8-byte magic `WSDATA1\0`, a
/// 4-byte little-endian header length, a UTF-8 `key=value` header, then the
/// row-major little-endian f64 payload with the state component innermost.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut header = String::new();
    header.push_str(&format!("dims={}\n", dataset.grid.dims()));
    let counts: Vec<String> = dataset.grid.counts().iter().map(|c| c.to_string()).collect();
    header.push_str(&format!("counts={}\n", counts.join(",")));
    let extents: Vec<String> = dataset
        .grid
        .extents()
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect();
    header.push_str(&format!("extents={}\n", extents.join(",")));
    header.push_str(&format!("state_dim={}\n", dataset.state_dim));
    header.push_str(&format!(
        "kind={}\n",
        match dataset.kind {
            DataKind::Clean => "clean",
            DataKind::Noisy => "noisy",
        }
    ));
    header.push_str(&format!("sigma={}\n", dataset.sigma));
    if let Some(seed) = dataset.seed {
        header.push_str(&format!("seed={seed}\n"));
    }

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in dataset.flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a WSD1 file".into()));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(|_| Error::Format("truncated header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|_| Error::Format("truncated header".into()))?;
    let header = String::from_utf8(header_bytes).map_err(|_| Error::Format("header is not UTF-8".into()))?;

    let mut dims = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut extents: Option<Vec<(f64, f64)>> = None;
    let mut state_dim = None;
    let mut kind = None;
    let mut sigma = None;
    let mut seed = None;
    for line in header.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line without '=': {line:?}")))?;
        match key {
            "dims" => dims = Some(parse::<usize>(value, "dims")?),
            "counts" => {
                counts = Some(
                    value
                        .split(',')
                        .map(|v| parse::<usize>(v, "counts"))
                        .collect::<Result<_>>()?,
                )
            }
            "extents" => {
                extents = Some(
                    value
                        .split(',')
                        .map(|pair| {
                            let (a, b) = pair
                                .split_once(':')
                                .ok_or_else(|| Error::Format(format!("bad extent {pair:?}")))?;
                            Ok((parse::<f64>(a, "extent")?, parse::<f64>(b, "extent")?))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            "state_dim" => state_dim = Some(parse::<usize>(value, "state_dim")?),
            "kind" => {
                kind = Some(match value {
                    "clean" => DataKind::Clean,
                    "noisy" => DataKind::Noisy,
                    other => return Err(Error::Format(format!("unknown kind {other:?}"))),
                })
            }
            "sigma" => sigma = Some(parse::<f64>(value, "sigma")?),
            "seed" => seed = Some(parse::<u64>(value, "seed")?),
            other => return Err(Error::Format(format!("unknown header key {other:?}"))),
        }
    }
    let counts = counts.ok_or_else(|| Error::Format("missing counts".into()))?;
    let extents = extents.ok_or_else(|| Error::Format("missing extents".into()))?;
    let state_dim = state_dim.ok_or_else(|| Error::Format("missing state_dim".into()))?;
    let kind = kind.ok_or_else(|| Error::Format("missing kind".into()))?;
    let sigma = sigma.ok_or_else(|| Error::Format("missing sigma".into()))?;
    if let Some(d) = dims {
        if d != counts.len() {
            return Err(Error::Format(format!(
                "dims={} disagrees with {} counts",
                d,
                counts.len()
            )));
        }
    }

    let expected: usize = counts.iter().product::<usize>() * state_dim;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes but header implies {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut flat = Vec::with_capacity(expected);
    for chunk in payload.chunks_exact(8) {
        flat.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut shape = counts.clone();
    shape.push(state_dim);
    let values = ArrayD::from_shape_vec(IxDyn(&shape), flat)
        .map_err(|e| Error::Format(e.to_string()))?;
    let grid = Grid::new(extents, counts).map_err(|e| Error::Format(e.to_string()))?;
    Dataset::new(grid, state_dim, values, kind, sigma, seed).map_err(|e| Error::Format(e.to_string()))
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Format(format!("cannot parse {key} value {value:?}")))
}

/// The mean of all entries; used by tests and the filtering invariants.
pub fn mean_all(values: &ArrayD<f64>) -> f64 {
    let flat = values.as_slice().expect("standard layout");
    pairwise_sum(flat) / flat.len() as f64
}
