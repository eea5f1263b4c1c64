//! Two-scale observation grids and exact-in-law simulation of the companion
//! SDE on a fine grid.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::linalg::{expm, integrated_covariance, integrated_expm, psd_sqrt};
use crate::model::{stationary_moments, CompanionSystem, GrouParams};
use crate::noise::LevySpec;
use crate::rng::stream_rng;

/// Fine grid `𝒫` with a coarsening `𝒬 ⊆ 𝒫` given by indices into it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleGrid {
    fine: Vec<f64>,
    coarse_idx: Vec<usize>,
}

impl TwoScaleGrid {
    pub fn new(fine: Vec<f64>, coarse_idx: Vec<usize>) -> Result<Self> {
        if fine.len() < 2 {
            return Err(GrouError::Length("grid needs at least two points".into()));
        }
        if fine.windows(2).any(|w| !(w[1] > w[0])) || fine.iter().any(|t| !t.is_finite()) {
            return Err(GrouError::Config("fine grid must be strictly increasing".into()));
        }
        if coarse_idx.is_empty()
            || coarse_idx.windows(2).any(|w| w[1] <= w[0])
            || *coarse_idx.last().unwrap() >= fine.len()
        {
            return Err(GrouError::Config(
                "coarse grid must be an increasing subset of the fine grid".into(),
            ));
        }
        Ok(TwoScaleGrid { fine, coarse_idx })
    }

    /// Coarse grid taking every `ratio`-th fine point from the first one.
    pub fn with_ratio(fine: Vec<f64>, ratio: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(GrouError::Config("grid ratio must be >= 1".into()));
        }
        let idx = (0..fine.len()).step_by(ratio).collect();
        TwoScaleGrid::new(fine, idx)
    }

    pub fn fine(&self) -> &[f64] {
        &self.fine
    }

    pub fn coarse_idx(&self) -> &[usize] {
        &self.coarse_idx
    }

    pub fn coarse(&self) -> Vec<f64> {
        self.coarse_idx.iter().map(|&i| self.fine[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.fine[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.fine.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn mesh_fine(&self) -> f64 {
        max_spacing(&self.fine)
    }

    pub fn mesh_coarse(&self) -> f64 {
        max_spacing(&self.coarse())
    }

    /// `min spacing / max spacing` of the fine grid.
    pub fn uniformity(&self) -> f64 {
        let min = self.fine.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        min / self.mesh_fine()
    }

    /// Restriction to fine indices `0..n`, keeping coarse points inside it.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        let idx = self.coarse_idx.iter().copied().filter(|&i| i < n).collect();
        TwoScaleGrid::new(self.fine[..n].to_vec(), idx)
    }
}

fn max_spacing(t: &[f64]) -> f64 {
    t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Uniform grids on `[0, T]`, with `T` rounded up to a whole number of
/// coarse steps.
pub fn make_uniform_grids(t_end: f64, mesh_fine: f64, ratio: usize) -> Result<TwoScaleGrid> {
    if !(mesh_fine > 0.0) || !(t_end > 0.0) || ratio == 0 {
        return Err(GrouError::Config(format!(
            "invalid grid: t_end = {t_end}, mesh = {mesh_fine}, ratio = {ratio}"
        )));
    }
    let coarse_step = mesh_fine * ratio as f64;
    let n_coarse = ((t_end / coarse_step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let n_fine = n_coarse * ratio;
    let fine = (0..=n_fine).map(|i| i as f64 * mesh_fine).collect();
    let idx = (0..=n_coarse).map(|m| m * ratio).collect();
    TwoScaleGrid::new(fine, idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub size: Vec<f64>,
}

/// What the simulator knows that an observer would not.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTruth {
    pub params: Option<GrouParams>,
    pub lag_matrices: Vec<DMatrix<f64>>,
    pub noise: LevySpec,
    pub seed: u64,
    pub stream: u64,
    pub jumps: Vec<JumpEvent>,
    /// Gamma-difference increment per fine interval (symmetric Gamma regime).
    pub gamma_increments: Option<DMatrix<f64>>,
    pub initial_state: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub grid: TwoScaleGrid,
    /// One row per fine-grid point, one column per edge.
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
    pub truth: Option<PathTruth>,
}

pub fn default_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("e_{i}")).collect()
}

impl SampledPath {
    pub fn new(grid: TwoScaleGrid, values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(GrouError::Length(format!(
                "{} rows of data for a grid of {} points",
                values.nrows(),
                grid.len()
            )));
        }
        if labels.len() != values.ncols() {
            return Err(GrouError::Config("one label per column required".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(GrouError::Numerical("path contains non-finite values".into()));
        }
        Ok(SampledPath {
            grid,
            values,
            labels,
            truth: None,
        })
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn row(&self, n: usize) -> DVector<f64> {
        self.values.row(n).transpose()
    }

    /// First `n` observations; truth metadata is dropped.
    pub fn head(&self, n: usize) -> Result<Self> {
        let grid = self.grid.truncate(n)?;
        let n = grid.len();
        SampledPath::new(grid, self.values.rows(0, n).into_owned(), self.labels.clone())
    }

    /// Subset of edge columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.iter().any(|&c| c >= self.k()) {
            return Err(GrouError::Index("column out of range".into()));
        }
        let values = self.values.select_columns(cols);
        let labels = cols.iter().map(|&c| self.labels[c].clone()).collect();
        SampledPath::new(self.grid.clone(), values, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitState {
    Stationary,
    Explicit(DVector<f64>),
}

/// Which parts of the driving noise enter the state. Random draws are made
/// regardless, so masked runs share randomness with the full run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseMask {
    pub continuous: bool,
    pub jumps: bool,
}

impl NoiseMask {
    pub const ALL: NoiseMask = NoiseMask {
        continuous: true,
        jumps: true,
    };
}

struct StepKernel {
    phi: DMatrix<f64>,
    drift: DVector<f64>,
    chol: DMatrix<f64>,
}

struct Stepper<'a> {
    system: &'a CompanionSystem,
    noise: &'a LevySpec,
    drift_in: DVector<f64>,
    noise_cov: DMatrix<f64>,
    kernels: HashMap<u64, StepKernel>,
    mask: NoiseMask,
    z: DVector<f64>,
    tmp: DVector<f64>,
}

impl<'a> Stepper<'a> {
    fn new(system: &'a CompanionSystem, noise: &'a LevySpec, mask: NoiseMask) -> Self {
        let n = system.state_dim();
        let k = system.k();
        let mut drift_in = DVector::zeros(n);
        drift_in.rows_mut(n - k, k).copy_from(noise.b());
        let mut noise_cov = DMatrix::zeros(n, n);
        noise_cov.view_mut((n - k, n - k), (k, k)).copy_from(noise.sigma());
        Stepper {
            system,
            noise,
            drift_in,
            noise_cov,
            kernels: HashMap::new(),
            mask,
            z: DVector::zeros(n),
            tmp: DVector::zeros(n),
        }
    }

    fn kernel(&mut self, dt: f64) -> Result<&StepKernel> {
        let key = dt.to_bits();
        if !self.kernels.contains_key(&key) {
            let q = self.system.bbq();
            let phi = expm(&(q * dt))?;
            let drift = integrated_expm(q, dt)? * &self.drift_in;
            let chol = psd_sqrt(&integrated_covariance(q, &self.noise_cov, dt)?)?;
            if self.kernels.len() > 64 {
                self.kernels.clear();
            }
            self.kernels.insert(key, StepKernel { phi, drift, chol });
        }
        Ok(&self.kernels[&key])
    }

    /// Advances `x` over `(t, t + dt]` in place.
    fn step<R: Rng + ?Sized>(
        &mut self,
        x: &mut DVector<f64>,
        t: f64,
        dt: f64,
        rng: &mut R,
        jumps_out: Option<&mut Vec<JumpEvent>>,
        gamma_out: Option<&mut DVector<f64>>,
    ) -> Result<()> {
        let n = x.len();
        let k = self.system.k();
        for i in 0..n {
            self.z[i] = StandardNormal.sample(rng);
        }
        let mask = self.mask;
        let mut z = std::mem::take(&mut self.z);
        let mut tmp = std::mem::take(&mut self.tmp);
        {
            let kern = self.kernel(dt)?;
            tmp.gemv(1.0, &kern.phi, x, 0.0);
            if mask.continuous {
                tmp += &kern.drift;
                tmp.gemv(1.0, &kern.chol, &z, 1.0);
            }
        }
        std::mem::swap(x, &mut tmp);
        let arrivals = self.noise.sample_arrivals(rng, dt);
        if !arrivals.is_empty() {
            let mut rec = jumps_out;
            for (offset, size) in arrivals {
                if mask.jumps {
                    let prop = expm(&(self.system.bbq() * (dt - offset)))?;
                    x.gemv(1.0, &prop.columns(n - k, k), &size, 1.0);
                }
                if let Some(r) = rec.as_deref_mut() {
                    r.push(JumpEvent {
                        time: t + offset,
                        size: size.iter().copied().collect(),
                    });
                }
            }
        }
        if let Some(g) = self.noise.sample_gamma(rng, dt) {
            if mask.jumps {
                let mut tail = x.rows_mut(n - k, k);
                tail += &g;
            }
            if let Some(out) = gamma_out {
                out.copy_from(&g);
            }
        }
        z.fill(0.0);
        self.z = z;
        self.tmp = tmp;
        Ok(())
    }
}

/// Simulates `Y = A X` on the fine grid of `grid` with the given random
/// source.
pub fn simulate_path_with<R: Rng + ?Sized>(
    system: &CompanionSystem,
    noise: &LevySpec,
    grid: &TwoScaleGrid,
    init: &InitState,
    mask: NoiseMask,
    rng: &mut R,
) -> Result<SampledPath> {
    let k = system.k();
    let n = system.state_dim();
    if noise.k() != k {
        return Err(GrouError::Config(format!(
            "noise dimension {} does not match K = {k}",
            noise.k()
        )));
    }
    let mut stepper = Stepper::new(system, noise, mask);
    let mut x = match init {
        InitState::Explicit(x0) => {
            if x0.len() != n {
                return Err(GrouError::Config(format!(
                    "initial state has length {}, expected {n}",
                    x0.len()
                )));
            }
            x0.clone()
        }
        InitState::Stationary => {
            let m = stationary_moments(system, noise)?;
            let root = psd_sqrt(&m.state_cov)?;
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let mut x = &m.state_mean + root * z;
            let relax = 5.0 / system.spectral_abscissa()?.abs();
            let dt = grid.mesh_fine().max(relax / 1000.0);
            let steps = (relax / dt).ceil() as usize;
            for _ in 0..steps {
                stepper.step(&mut x, 0.0, dt, rng, None, None)?;
            }
            x
        }
    };
    let initial_state = x.clone();
    let times = grid.fine();
    let mut values = DMatrix::zeros(times.len(), k);
    values.row_mut(0).copy_from(&x.rows(0, k).transpose());
    let mut jumps = Vec::new();
    let mut gamma = noise.is_infinite_activity().then(|| DMatrix::zeros(times.len() - 1, k));
    let mut g_buf = DVector::zeros(k);
    for i in 0..times.len() - 1 {
        let dt = times[i + 1] - times[i];
        stepper.step(&mut x, times[i], dt, rng, Some(&mut jumps), Some(&mut g_buf))?;
        if let Some(g) = gamma.as_mut() {
            g.row_mut(i).copy_from(&g_buf.transpose());
        }
        for e in 0..k {
            values[(i + 1, e)] = x[e];
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GrouError::Numerical("simulated path diverged".into()));
    }
    let mut path = SampledPath::new(grid.clone(), values, default_labels(k))?;
    path.truth = Some(PathTruth {
        params: None,
        lag_matrices: (1..=system.lags()).map(|l| system.lag_matrix(l).clone()).collect(),
        noise: noise.clone(),
        seed: 0,
        stream: 0,
        jumps,
        gamma_increments: gamma,
        initial_state,
    });
    Ok(path)
}

/// Path number `stream` of the family rooted at `rng_seed`.
pub fn simulate_path(
    system: &CompanionSystem,
    noise: &LevySpec,
    grid: &TwoScaleGrid,
    init: &InitState,
    rng_seed: u64,
    stream: u64,
) -> Result<SampledPath> {
    simulate_path_masked(system, noise, grid, init, rng_seed, stream, NoiseMask::ALL)
}

pub fn simulate_path_masked(
    system: &CompanionSystem,
    noise: &LevySpec,
    grid: &TwoScaleGrid,
    init: &InitState,
    rng_seed: u64,
    stream: u64,
    mask: NoiseMask,
) -> Result<SampledPath> {
    let mut rng = stream_rng(rng_seed, stream);
    let mut path = simulate_path_with(system, noise, grid, init, mask, &mut rng)?;
    if let Some(t) = path.truth.as_mut() {
        t.seed = rng_seed;
        t.stream = stream;
    }
    Ok(path)
}

/// Paths `0..n_paths` of the family rooted at `rng_seed`, in parallel.
pub fn simulate_paths(
    system: &CompanionSystem,
    noise: &LevySpec,
    grid: &TwoScaleGrid,
    init: &InitState,
    rng_seed: u64,
    n_paths: usize,
) -> Result<Vec<SampledPath>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(system, noise, grid, init, rng_seed, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{weight_matrices, EdgeGraph};
    use crate::model::{build_companion, stationary_moments, ModelShape};
    use crate::noise::JumpSpec;

    fn scalar(q: f64) -> CompanionSystem {
        CompanionSystem::from_lag_matrices(vec![DMatrix::from_element(1, 1, q)]).unwrap()
    }

    fn consistency_system() -> CompanionSystem {
        let g = EdgeGraph::new(3, false, vec![(0, 1), (1, 2)]).unwrap();
        let w = weight_matrices(&g, 1).unwrap();
        let p = GrouParams::new(
            ModelShape::new(vec![1, 1]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[4.0, 3.0, 2.0, 1.0]),
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        build_companion(&p, &w).unwrap()
    }

    fn cp_noise(k: usize, rate: f64) -> LevySpec {
        LevySpec::new(
            DVector::zeros(k),
            DMatrix::identity(k, k),
            JumpSpec::CompoundPoisson {
                rate,
                jump_cov: DMatrix::identity(k, k),
            },
        )
        .unwrap()
    }

    #[test]
    fn grid_fixtures() {
        let g = make_uniform_grids(2.0, 1.0 / 64.0, 16).unwrap();
        assert_eq!(g.len(), 129);
        assert_eq!(g.mesh_coarse(), 0.25);
        assert_eq!(g.coarse().len(), 9);
        assert_eq!(g.uniformity(), 1.0);

        let same = make_uniform_grids(1.0, 0.1, 1).unwrap();
        assert_eq!(same.coarse(), same.fine());

        let snapped = make_uniform_grids(1.0, 0.01, 18).unwrap();
        assert!((snapped.mesh_coarse() - 0.18).abs() < 1e-12);
        // six coarse steps of 0.18 cover [0, 1]
        assert!((snapped.t_end() - 1.08).abs() < 1e-12);
        assert_eq!(snapped.coarse_idx().len(), 7);
    }

    #[test]
    fn with_ratio_leaves_trailing_fine_points() {
        let fine: Vec<f64> = (0..2187).map(|i| i as f64).collect();
        let g = TwoScaleGrid::with_ratio(fine, 81).unwrap();
        assert_eq!(g.coarse_idx().len(), 27);
        assert_eq!(*g.coarse_idx().last().unwrap(), 2106);
    }

    #[test]
    fn noiseless_flow_is_exact() {
        let s = consistency_system();
        let zero = LevySpec::brownian(DMatrix::zeros(2, 2)).unwrap();
        let grid = make_uniform_grids(2.0, 1.0 / 64.0, 4).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let p = simulate_path(&s, &zero, &grid, &InitState::Explicit(x0.clone()), 1, 0).unwrap();
        for (n, &t) in grid.fine().iter().enumerate() {
            let y = (expm(&(s.bbq() * t)).unwrap() * &x0).rows(0, 2).into_owned();
            assert!((p.row(n) - y).abs().max() < 1e-10, "row {n}");
        }
    }

    #[test]
    fn scalar_ou_stationary_variance() {
        let s = scalar(2.0);
        let noise = LevySpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let grid = make_uniform_grids(1.0, 0.05, 1).unwrap();
        let paths = simulate_paths(&s, &noise, &grid, &InitState::Stationary, 17, 10_000).unwrap();
        let last: Vec<f64> = paths.iter().map(|p| p.values[(p.len() - 1, 0)]).collect();
        let n = last.len() as f64;
        let mean = last.iter().sum::<f64>() / n;
        let var = last.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Var of the sample variance for a Gaussian: 2σ⁴/(n−1)
        let se = (2.0 * 0.25f64.powi(2) / (n - 1.0)).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se, "variance {var}");
        assert!(mean.abs() < 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn superposition_of_noise_parts() {
        let s = consistency_system();
        let grid = make_uniform_grids(2.0, 1.0 / 64.0, 16).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.4]);
        let init = InitState::Explicit(x0);
        for noise in [
            cp_noise(2, 3.0),
            LevySpec::new(
                DVector::from_vec(vec![0.2, -0.1]),
                DMatrix::identity(2, 2),
                JumpSpec::SymmetricGamma { shape: 1.0, scale: 1.0 },
            )
            .unwrap(),
        ] {
            let full = simulate_path(&s, &noise, &grid, &init, 5, 2).unwrap();
            let cont = simulate_path_masked(
                &s,
                &noise,
                &grid,
                &init,
                5,
                2,
                NoiseMask {
                    continuous: true,
                    jumps: false,
                },
            )
            .unwrap();
            let jump = simulate_path_masked(
                &s,
                &noise,
                &grid,
                &init,
                5,
                2,
                NoiseMask {
                    continuous: false,
                    jumps: true,
                },
            )
            .unwrap();
            let none = simulate_path_masked(
                &s,
                &noise,
                &grid,
                &init,
                5,
                2,
                NoiseMask {
                    continuous: false,
                    jumps: false,
                },
            )
            .unwrap();
            // Y = flow(x0) + continuous response + jump response
            let recombined = &cont.values + &jump.values - &none.values;
            assert!((recombined - &full.values).abs().max() < 1e-10);
        }
        let cp = simulate_path(&s, &cp_noise(2, 3.0), &grid, &init, 5, 2).unwrap();
        assert!(!cp.truth.unwrap().jumps.is_empty());
    }

    #[test]
    fn stationary_marginal_time_invariant() {
        let s = consistency_system();
        let noise = cp_noise(2, 1.0);
        let grid = make_uniform_grids(2.0, 1.0 / 64.0, 16).unwrap();
        let paths = simulate_paths(&s, &noise, &grid, &InitState::Stationary, 3, 4000).unwrap();
        let m = stationary_moments(&s, &noise).unwrap();
        let mid = grid.len() / 2;
        for idx in [mid, grid.len() - 1] {
            for e in 0..2 {
                let xs: Vec<f64> = paths.iter().map(|p| p.values[(idx, e)]).collect();
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
                let se_var = ((m4 - var * var) / n).sqrt();
                assert!((mean - m.mean[e]).abs() < 3.5 * (var / n).sqrt());
                assert!(
                    (var - m.variance[(e, e)]).abs() < 3.5 * se_var,
                    "{var} vs {}",
                    m.variance[(e, e)]
                );
            }
        }
    }

    #[test]
    fn refinement_changes_little() {
        // KS distance between coarse-point marginals on a grid and its 4x refinement
        let s = scalar(1.0);
        let noise = cp_noise(1, 2.0);
        let coarse = make_uniform_grids(1.0, 0.25, 1).unwrap();
        let fine = make_uniform_grids(1.0, 0.0625, 4).unwrap();
        let init = InitState::Explicit(DVector::from_vec(vec![0.0]));
        let n = 10_000;
        let mut a: Vec<f64> = (0..n as u64)
            .map(|i| simulate_path(&s, &noise, &coarse, &init, 1, i).unwrap().values[(4, 0)])
            .collect();
        let mut b: Vec<f64> = (0..n as u64)
            .map(|i| simulate_path(&s, &noise, &fine, &init, 2, i).unwrap().values[(16, 0)])
            .collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ks = ks_distance(&a, &b);
        // the two-sample KS statistic under the null has 99.9% quantile ≈ 1.95·√(2/n)
        assert!(ks < 1.95 * (2.0 / n as f64).sqrt(), "KS {ks}");
    }

    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn deterministic_by_seed_and_stream() {
        let s = consistency_system();
        let noise = cp_noise(2, 1.0);
        let grid = make_uniform_grids(1.0, 1.0 / 32.0, 4).unwrap();
        let a = simulate_path(&s, &noise, &grid, &InitState::Stationary, 9, 3).unwrap();
        let b = simulate_paths(&s, &noise, &grid, &InitState::Stationary, 9, 5).unwrap();
        assert_eq!(a.values, b[3].values);
        assert_ne!(b[0].values, b[1].values);
    }

    #[test]
    fn non_hurwitz_stationary_init_fails() {
        let noise = LevySpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let grid = make_uniform_grids(1.0, 0.1, 1).unwrap();
        let r = simulate_path(&scalar(-1.0), &noise, &grid, &InitState::Stationary, 0, 0);
        assert!(matches!(r, Err(GrouError::Stationarity(_))));
    }
}
