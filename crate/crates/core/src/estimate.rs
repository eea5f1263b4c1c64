//! Discretised maximum-likelihood drift estimation from a two-scale sampled
//! path: forward finite differences on the fine grid, thresholded increments
//! and score/information sums on the coarse grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::graph::WeightMatrices;
use crate::model::{build_companion, CompanionSystem, GrouParams, ModelShape};
use crate::noise::{JumpSpec, LevySpec};
use crate::simulate::SampledPath;

const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Finite,
    Infinite,
}

/// How the cutoff `(Δ^m)^β` is scaled per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ThresholdScale {
    /// `ν = (Δ^m)^β`.
    Unit,
    /// `ν = multiplier · √Σ_ii · (Δ^m)^β`.
    Sigma { multiplier: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    /// One exponent for all components, or one per component.
    pub beta_exp: Vec<f64>,
    pub activity: Activity,
    pub scale: ThresholdScale,
}

impl ThresholdPolicy {
    pub fn new(beta_exp: Vec<f64>, activity: Activity, scale: ThresholdScale) -> Result<Self> {
        let upper = match activity {
            Activity::Finite => 0.5,
            Activity::Infinite => 0.25,
        };
        if beta_exp.is_empty() || beta_exp.iter().any(|&b| !(b > 0.0 && b < upper)) {
            return Err(GrouError::Config(format!(
                "threshold exponents must lie in (0, {upper}) for {activity:?} activity"
            )));
        }
        if let ThresholdScale::Sigma { multiplier } = scale {
            if !(multiplier > 0.0) {
                return Err(GrouError::Config("threshold multiplier must be positive".into()));
            }
        }
        Ok(ThresholdPolicy {
            beta_exp,
            activity,
            scale,
        })
    }

    /// β = 0.4 (finite) or 0.24 (infinite activity), cutoff at three local
    /// standard deviations.
    pub fn default_for(activity: Activity) -> Self {
        let beta = match activity {
            Activity::Finite => 0.4,
            Activity::Infinite => 0.24,
        };
        ThresholdPolicy {
            beta_exp: vec![beta],
            activity,
            scale: ThresholdScale::Sigma { multiplier: 3.0 },
        }
    }

    /// The unscaled cutoff `(Δ^m)^β`.
    pub fn literal(activity: Activity) -> Self {
        ThresholdPolicy {
            scale: ThresholdScale::Unit,
            ..Self::default_for(activity)
        }
    }

    pub fn for_noise(noise: &LevySpec) -> Self {
        Self::default_for(if noise.is_infinite_activity() {
            Activity::Infinite
        } else {
            Activity::Finite
        })
    }

    pub fn exponent(&self, i: usize) -> f64 {
        if self.beta_exp.len() == 1 {
            self.beta_exp[0]
        } else {
            self.beta_exp[i]
        }
    }

    pub fn cutoff(&self, i: usize, dt: f64, sigma_ii: f64) -> f64 {
        let base = dt.powf(self.exponent(i));
        match self.scale {
            ThresholdScale::Unit => base,
            ThresholdScale::Sigma { multiplier } => multiplier * sigma_ii.max(0.0).sqrt() * base,
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if self.beta_exp.len() != 1 && self.beta_exp.len() != k {
            return Err(GrouError::Config(format!(
                "{} threshold exponents for {k} components",
                self.beta_exp.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgePolicy {
    Fixed(f64),
    /// `1e-8 · tr([K]) / dim`, escalated ×10 until the system factorises.
    Auto,
}

/// Linear parameterisation of the drift `Q_1..Q_L`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftStructure {
    /// grOU: diagonal α per lag plus β-weighted neighbourhood matrices.
    /// `R_l = 0` everywhere gives the diagonal OU/CAR model.
    Graph { weights: WeightMatrices, shape: ModelShape },
    /// Full `Q_l` per lag, θ = [vec(Q_1), …, vec(Q_L)] row-major.
    Unstructured { lags: usize },
}

impl DriftStructure {
    pub fn graph(weights: WeightMatrices, shape: ModelShape) -> Self {
        DriftStructure::Graph { weights, shape }
    }

    pub fn lags(&self) -> usize {
        match self {
            DriftStructure::Graph { shape, .. } => shape.l,
            DriftStructure::Unstructured { lags } => *lags,
        }
    }

    pub fn n_params(&self, k: usize) -> usize {
        match self {
            DriftStructure::Graph { shape, .. } => shape.n_params(k),
            DriftStructure::Unstructured { lags } => lags * k * k,
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        match self {
            DriftStructure::Graph { weights, shape } => {
                if shape.l == 0 || shape.r.len() != shape.l {
                    return Err(GrouError::Config(format!("malformed shape {shape}")));
                }
                if shape.max_stage() > weights.max_stage() {
                    return Err(GrouError::Config(format!(
                        "{shape} needs {} stages, weights provide {}",
                        shape.max_stage(),
                        weights.max_stage()
                    )));
                }
                if shape.max_stage() > 0 && weights.k() != k {
                    return Err(GrouError::Config(format!(
                        "weights are for {} edges, path has {k}",
                        weights.k()
                    )));
                }
            }
            DriftStructure::Unstructured { lags } => {
                if *lags == 0 {
                    return Err(GrouError::Config("need at least one lag".into()));
                }
            }
        }
        Ok(())
    }

    /// Writes `Ĥ` (p×K) given `derivs[j] = D̂^{L-1-j} Y` at one coarse point,
    /// so that `drift = −Ĥᵀθ`.
    fn fill_h(&self, derivs: &[DVector<f64>], h: &mut DMatrix<f64>) {
        h.fill(0.0);
        let k = derivs[0].len();
        let mut row = 0;
        match self {
            DriftStructure::Graph { weights, shape } => {
                for (l, d) in derivs.iter().enumerate() {
                    for e in 0..k {
                        h[(row + e, e)] = d[e];
                    }
                    row += k;
                    for r in 1..=shape.r[l] {
                        let wd = weights.stage(r) * d;
                        for e in 0..k {
                            h[(row, e)] = wd[e];
                        }
                        row += 1;
                    }
                }
            }
            DriftStructure::Unstructured { .. } => {
                for d in derivs {
                    for i in 0..k {
                        for j in 0..k {
                            h[(row + i * k + j, i)] = d[j];
                        }
                    }
                    row += k * k;
                }
            }
        }
    }

    pub fn lag_matrices(&self, k: usize, theta: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        if theta.len() != self.n_params(k) {
            return Err(GrouError::Config(format!(
                "θ has length {}, expected {}",
                theta.len(),
                self.n_params(k)
            )));
        }
        match self {
            DriftStructure::Graph { weights, shape } => {
                let p = GrouParams::unflatten(shape, k, theta)?;
                let sys = build_companion(&p, weights)?;
                Ok((1..=shape.l).map(|l| sys.lag_matrix(l).clone()).collect())
            }
            DriftStructure::Unstructured { lags } => Ok((0..*lags)
                .map(|l| DMatrix::from_row_slice(k, k, &theta.as_slice()[l * k * k..(l + 1) * k * k]))
                .collect()),
        }
    }

    pub fn system(&self, k: usize, theta: &DVector<f64>) -> Result<CompanionSystem> {
        CompanionSystem::from_lag_matrices(self.lag_matrices(k, theta)?)
    }
}

/// Forward differences of orders `0..=order`; entry `l` has `N − l` rows.
pub fn finite_differences(values: &DMatrix<f64>, times: &[f64], order: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = values.nrows();
    if n <= order || times.len() != n {
        return Err(GrouError::Length(format!(
            "{n} observations cannot support differences of order {order}"
        )));
    }
    let k = values.ncols();
    let mut out = vec![values.clone()];
    for l in 1..=order {
        let prev = &out[l - 1];
        let rows = prev.nrows() - 1;
        let next = DMatrix::from_fn(rows, k, |i, e| {
            (prev[(i + 1, e)] - prev[(i, e)]) / (times[i + 1] - times[i])
        });
        out.push(next);
    }
    Ok(out)
}

/// Coarse intervals usable with `lags` lags: indices `m` with
/// `u_{m+1} ≤ s_{N−L}`.
fn usable_intervals(path: &SampledPath, lags: usize) -> Result<usize> {
    let last = path
        .len()
        .checked_sub(lags)
        .ok_or_else(|| GrouError::Length("path shorter than the lag order".into()))?;
    let idx = path.grid.coarse_idx();
    Ok(idx.windows(2).take_while(|w| w[1] <= last).count())
}

/// Coarse increments of `D̂^{L−1} Y` and the interval lengths.
pub fn coarse_increments(path: &SampledPath, lags: usize) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    if lags == 0 {
        return Err(GrouError::Config("lag order must be >= 1".into()));
    }
    let d = finite_differences(&path.values, path.grid.fine(), lags - 1)?;
    let top = &d[lags - 1];
    let m_t = usable_intervals(path, lags)?;
    let idx = path.grid.coarse_idx();
    let t = path.grid.fine();
    let mut incs = Vec::with_capacity(m_t);
    let mut dts = Vec::with_capacity(m_t);
    for w in idx.windows(2).take(m_t) {
        incs.push((top.row(w[1]) - top.row(w[0])).transpose());
        dts.push(t[w[1]] - t[w[0]]);
    }
    Ok((incs, dts))
}

/// Drift-corrected increments with exceeding components set to zero.
pub fn threshold_increments(
    path: &SampledPath,
    policy: &ThresholdPolicy,
    triplet: &LevySpec,
    lags: usize,
) -> Result<Vec<DVector<f64>>> {
    let (incs, dts) = coarse_increments(path, lags)?;
    check_dims(path, triplet)?;
    policy.check_k(path.k())?;
    Ok(apply_threshold(&incs, &dts, policy, triplet.b(), triplet.sigma()).0)
}

fn apply_threshold(
    incs: &[DVector<f64>],
    dts: &[f64],
    policy: &ThresholdPolicy,
    b: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> (Vec<DVector<f64>>, usize) {
    let mut kept = 0;
    let out = incs
        .iter()
        .zip(dts)
        .map(|(x, &dt)| {
            DVector::from_fn(x.len(), |i, _| {
                let c = x[i] - b[i] * dt;
                if c.abs() <= policy.cutoff(i, dt, sigma[(i, i)]) {
                    kept += 1;
                    c
                } else {
                    0.0
                }
            })
        })
        .collect();
    (out, kept)
}

fn check_dims(path: &SampledPath, triplet: &LevySpec) -> Result<()> {
    if triplet.k() != path.k() {
        return Err(GrouError::Config(format!(
            "triplet has dimension {}, path has {} edges",
            triplet.k(),
            path.k()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Fraction of increment components that survived thresholding.
    pub surviving_fraction: f64,
    /// `t · Δ_𝒬`, which should be small.
    pub horizon_times_coarse_mesh: f64,
    /// `Δ_𝒫 · t / Δ_𝒬²`, which should be small.
    pub fine_mesh_ratio: f64,
    /// `min / max` fine spacing.
    pub grid_uniformity: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub structure: DriftStructure,
    pub k: usize,
    pub theta_hat: DVector<f64>,
    pub score_k: DVector<f64>,
    pub info_k: DMatrix<f64>,
    pub loglik: f64,
    pub bic: f64,
    pub n_coarse: usize,
    pub ridge_used: f64,
    pub triplet_used: LevySpec,
    pub diagnostics: Diagnostics,
}

impl EstimationResult {
    pub fn system(&self) -> Result<CompanionSystem> {
        self.structure.system(self.k, &self.theta_hat)
    }

    /// Structured parameters for graph-shaped fits.
    pub fn params(&self) -> Option<GrouParams> {
        match &self.structure {
            DriftStructure::Graph { shape, .. } => GrouParams::unflatten(shape, self.k, &self.theta_hat).ok(),
            DriftStructure::Unstructured { .. } => None,
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta_hat.len()
    }
}

/// Score 𝐊 and information [𝐊] for a given sequence of (already corrected)
/// increments.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftStatistics {
    pub score: DVector<f64>,
    pub info: DMatrix<f64>,
    pub n_coarse: usize,
}

fn working_precision(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.nrows();
    let eig = nalgebra::SymmetricEigen::new(sigma.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let work = if !(min > 1e-10 * max.max(1e-300)) {
        sigma + DMatrix::identity(k, k) * (1e-8 * if max > 0.0 { max } else { 1.0 })
    } else {
        sigma.clone()
    };
    work.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| GrouError::Singular("working noise covariance is not invertible".into()))
}

pub fn drift_statistics(
    path: &SampledPath,
    structure: &DriftStructure,
    sigma: &DMatrix<f64>,
    increments: &[DVector<f64>],
) -> Result<DriftStatistics> {
    let k = path.k();
    structure.check(k)?;
    let lags = structure.lags();
    let m_t = usable_intervals(path, lags)?;
    if increments.len() != m_t {
        return Err(GrouError::Length(format!(
            "{} increments for {m_t} usable coarse intervals",
            increments.len()
        )));
    }
    if m_t < 2 {
        return Err(GrouError::Length(format!(
            "only {m_t} coarse increments; need at least 2"
        )));
    }
    let d = finite_differences(&path.values, path.grid.fine(), lags - 1)?;
    let prec = working_precision(sigma)?;
    let idx = path.grid.coarse_idx();
    let t = path.grid.fine();
    let p = structure.n_params(k);

    let partial = |range: std::ops::Range<usize>| {
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let mut h = DMatrix::zeros(p, k);
        let mut derivs: Vec<DVector<f64>> = vec![DVector::zeros(k); lags];
        for m in range {
            let c = idx[m];
            for (j, dv) in derivs.iter_mut().enumerate() {
                dv.copy_from(&d[lags - 1 - j].row(c).transpose());
            }
            structure.fill_h(&derivs, &mut h);
            let hp = &h * &prec;
            score.gemv(-1.0, &hp, &increments[m], 1.0);
            info.gemm(t[idx[m + 1]] - t[c], &hp, &h.transpose(), 1.0);
        }
        (score, info)
    };

    let chunks: Vec<std::ops::Range<usize>> = (0..m_t).step_by(CHUNK).map(|s| s..(s + CHUNK).min(m_t)).collect();
    let mut parts: Vec<(DVector<f64>, DMatrix<f64>)> = if chunks.len() > 4 {
        chunks.into_par_iter().map(partial).collect()
    } else {
        chunks.into_iter().map(partial).collect()
    };
    // pairwise tree, independent of how the chunks were scheduled
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((s1, i1)) = it.next() {
            match it.next() {
                Some((s2, i2)) => next.push((s1 + s2, i1 + i2)),
                None => next.push((s1, i1)),
            }
        }
        parts = next;
    }
    let (score, info) = parts.pop().unwrap();
    Ok(DriftStatistics {
        score,
        info: crate::linalg::symmetrize(&info),
        n_coarse: m_t,
    })
}

/// Solves `([𝐊] + ridge·I) θ = 𝐊`; returns θ and the ridge used.
pub fn solve_ridge(info: &DMatrix<f64>, score: &DVector<f64>, ridge: RidgePolicy) -> Result<(DVector<f64>, f64)> {
    let p = info.nrows();
    let attempt = |r: f64| (info + DMatrix::identity(p, p) * r).cholesky().map(|c| c.solve(score));
    match ridge {
        RidgePolicy::Fixed(r) => {
            if !(r >= 0.0) {
                return Err(GrouError::Config(format!("ridge {r} must be >= 0")));
            }
            let sol = if r == 0.0 {
                // positive semi-definite information: LU with a rank check
                let lu = info.clone().lu();
                let scale = info.abs().max().max(f64::MIN_POSITIVE);
                let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
                if min_pivot <= 1e-13 * scale {
                    None
                } else {
                    lu.solve(score)
                }
            } else {
                attempt(r)
            };
            sol.map(|s| (s, r))
                .ok_or_else(|| GrouError::Singular("information matrix is singular; retry with a ridge".into()))
        }
        RidgePolicy::Auto => {
            let tr = info.trace();
            let mut r = 1e-8 * (tr / p as f64).abs();
            if !(r > 0.0) {
                r = 1e-12;
            }
            for _ in 0..30 {
                if let Some(s) = attempt(r) {
                    if s.iter().all(|x| x.is_finite()) {
                        return Ok((s, r));
                    }
                }
                r *= 10.0;
            }
            Err(GrouError::Singular("information matrix not regularisable".into()))
        }
    }
}

fn diagnostics(path: &SampledPath, kept: usize, total: usize) -> Diagnostics {
    let g = &path.grid;
    let t = g.duration();
    let dq = g.mesh_coarse();
    Diagnostics {
        surviving_fraction: if total == 0 { 1.0 } else { kept as f64 / total as f64 },
        horizon_times_coarse_mesh: t * dq,
        fine_mesh_ratio: g.mesh_fine() * t / (dq * dq),
        grid_uniformity: g.uniformity(),
    }
}

/// Drift estimate given the increments to use as `dY^c`.
pub fn estimate_from_increments(
    path: &SampledPath,
    structure: &DriftStructure,
    triplet: &LevySpec,
    increments: &[DVector<f64>],
    ridge: RidgePolicy,
) -> Result<EstimationResult> {
    check_dims(path, triplet)?;
    let stats = drift_statistics(path, structure, triplet.sigma(), increments)?;
    let (theta, ridge_used) = solve_ridge(&stats.info, &stats.score, ridge)?;
    let quad = (theta.transpose() * &stats.info * &theta)[(0, 0)];
    let loglik = theta.dot(&stats.score) - 0.5 * quad;
    let p = theta.len();
    let bic = -quad + p as f64 * (stats.n_coarse as f64).ln();
    let kept = increments.iter().flat_map(|v| v.iter()).filter(|&&x| x != 0.0).count();
    let total = increments.len() * path.k();
    if log::log_enabled!(log::Level::Warn) && path.grid.uniformity() < 0.5 {
        log::warn!("fine grid is irregular (min/max spacing {:.3})", path.grid.uniformity());
    }
    Ok(EstimationResult {
        structure: structure.clone(),
        k: path.k(),
        theta_hat: theta,
        score_k: stats.score,
        info_k: stats.info,
        loglik,
        bic,
        n_coarse: stats.n_coarse,
        ridge_used,
        triplet_used: triplet.clone(),
        diagnostics: diagnostics(path, kept, total),
    })
}

pub fn estimate_drift_structured(
    path: &SampledPath,
    structure: &DriftStructure,
    triplet: &LevySpec,
    policy: &ThresholdPolicy,
    ridge: RidgePolicy,
) -> Result<EstimationResult> {
    structure.check(path.k())?;
    let incs = threshold_increments(path, policy, triplet, structure.lags())?;
    estimate_from_increments(path, structure, triplet, &incs, ridge)
}

pub fn estimate_drift(
    path: &SampledPath,
    weights: &WeightMatrices,
    shape: &ModelShape,
    triplet: &LevySpec,
    policy: &ThresholdPolicy,
    ridge: RidgePolicy,
) -> Result<EstimationResult> {
    let structure = DriftStructure::graph(weights.clone(), shape.clone());
    estimate_drift_structured(path, &structure, triplet, policy, ridge)
}

/// Truncated realised covariance of the coarse increments of `D̂^{L−1} Y`.
///
/// Returns a triplet with `b̂`, `Σ̂` and, when any increment exceeds the
/// cutoff, a compound-Poisson jump part matching the exceedance second
/// moment.
pub fn estimate_triplet(path: &SampledPath, policy: &ThresholdPolicy, lags: usize) -> Result<LevySpec> {
    let k = path.k();
    policy.check_k(k)?;
    let (incs, dts) = coarse_increments(path, lags)?;
    if incs.is_empty() {
        return Err(GrouError::Length("no coarse increments".into()));
    }
    let t: f64 = dts.iter().sum();

    // jump-robust scale for the cutoff: bipower variation per unit time
    let mut sigma0 = DMatrix::zeros(k, k);
    for i in 0..k {
        let bv: f64 = incs.windows(2).map(|w| w[0][i].abs() * w[1][i].abs()).sum();
        let dur: f64 = dts.iter().skip(1).sum::<f64>().max(f64::MIN_POSITIVE);
        sigma0[(i, i)] = if incs.len() > 1 {
            std::f64::consts::FRAC_PI_2 * bv / dur
        } else {
            incs[0][i].powi(2) / dts[0]
        };
    }

    let mut b = DVector::zeros(k);
    for i in 0..k {
        let (sum, dur) = incs
            .iter()
            .zip(&dts)
            .filter(|(x, &dt)| x[i].abs() <= policy.cutoff(i, dt, sigma0[(i, i)]))
            .fold((0.0, 0.0), |(s, d), (x, &dt)| (s + x[i], d + dt));
        b[i] = if dur > 0.0 { sum / dur } else { 0.0 };
    }

    let mut sigma = DMatrix::zeros(k, k);
    let mut kept_dur = 0.0;
    let mut exceed = DMatrix::zeros(k, k);
    let mut n_exceed = 0usize;
    for (x, &dt) in incs.iter().zip(&dts) {
        let c = x - &b * dt;
        let inside = (0..k).all(|i| c[i].abs() <= policy.cutoff(i, dt, sigma0[(i, i)]));
        if inside {
            sigma += &c * c.transpose();
            kept_dur += dt;
        } else {
            exceed += &c * c.transpose();
            n_exceed += 1;
        }
    }
    if kept_dur == 0.0 {
        return Err(GrouError::Estimation(
            "no coarse increment survived thresholding".into(),
        ));
    }
    sigma /= kept_dur;
    let sigma = crate::linalg::symmetrize(&sigma);
    let jumps = if n_exceed > 0 {
        JumpSpec::CompoundPoisson {
            rate: n_exceed as f64 / t,
            jump_cov: crate::linalg::symmetrize(&(exceed / n_exceed as f64)),
        }
    } else {
        JumpSpec::None
    };
    LevySpec::new(b, sigma, jumps).map_err(|e| GrouError::Estimation(e.to_string()))
}
