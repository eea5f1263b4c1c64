//! Driving Lévy noise: triplet description, closed-form moments and sampling
//! under the three jump regimes (none, compound Poisson, symmetric Gamma).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::linalg::{is_psd, psd_sqrt};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec {
    None,
    /// Common arrival times with rate `rate`; sizes `N(0, jump_cov)`.
    CompoundPoisson {
        rate: f64,
        jump_cov: DMatrix<f64>,
    },
    /// Per component, the difference of two independent Gamma subordinators
    /// with shape `shape` per unit time and scale `scale`.
    SymmetricGamma {
        shape: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LevySpec {
    b: DVector<f64>,
    sigma: DMatrix<f64>,
    jumps: JumpSpec,
    sigma_sqrt: DMatrix<f64>,
    jump_sqrt: Option<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    b: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    #[serde(default = "RawJumps::none")]
    jumps: RawJumps,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawJumps {
    None,
    CompoundPoisson { rate: f64, jump_cov: Vec<Vec<f64>> },
    SymGamma { shape: f64, scale: f64 },
}

impl RawJumps {
    fn none() -> Self {
        RawJumps::None
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(GrouError::Format(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<RawSpec> for LevySpec {
    type Error = GrouError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let b = DVector::from_vec(raw.b);
        let sigma = matrix_from_rows(&raw.sigma, "sigma")?;
        let jumps = match raw.jumps {
            RawJumps::None => JumpSpec::None,
            RawJumps::CompoundPoisson { rate, jump_cov } => JumpSpec::CompoundPoisson {
                rate,
                jump_cov: matrix_from_rows(&jump_cov, "jump_cov")?,
            },
            RawJumps::SymGamma { shape, scale } => JumpSpec::SymmetricGamma { shape, scale },
        };
        LevySpec::new(b, sigma, jumps)
    }
}

impl From<LevySpec> for RawSpec {
    fn from(s: LevySpec) -> Self {
        RawSpec {
            b: s.b.iter().copied().collect(),
            sigma: matrix_to_rows(&s.sigma),
            jumps: match s.jumps {
                JumpSpec::None => RawJumps::None,
                JumpSpec::CompoundPoisson { rate, jump_cov } => RawJumps::CompoundPoisson {
                    rate,
                    jump_cov: matrix_to_rows(&jump_cov),
                },
                JumpSpec::SymmetricGamma { shape, scale } => RawJumps::SymGamma { shape, scale },
            },
        }
    }
}

impl LevySpec {
    pub fn new(b: DVector<f64>, sigma: DMatrix<f64>, jumps: JumpSpec) -> Result<Self> {
        let k = b.len();
        if sigma.nrows() != k || sigma.ncols() != k {
            return Err(GrouError::Spec(format!(
                "sigma is {}x{} but b has length {k}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !b.iter().chain(sigma.iter()).all(|x| x.is_finite()) {
            return Err(GrouError::Spec("non-finite entry in b or sigma".into()));
        }
        if !is_psd(&sigma, 1e-10) {
            return Err(GrouError::Spec("sigma is not symmetric positive semi-definite".into()));
        }
        let sigma_sqrt = psd_sqrt(&sigma)?;
        let jump_sqrt = match &jumps {
            JumpSpec::None => None,
            JumpSpec::CompoundPoisson { rate, jump_cov } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(GrouError::Spec(format!("jump rate {rate} must be >= 0")));
                }
                if jump_cov.nrows() != k || jump_cov.ncols() != k || !is_psd(jump_cov, 1e-10) {
                    return Err(GrouError::Spec(
                        "jump covariance must be a PSD matrix matching the dimension".into(),
                    ));
                }
                Some(psd_sqrt(jump_cov)?)
            }
            JumpSpec::SymmetricGamma { shape, scale } => {
                if !(*shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite()) {
                    return Err(GrouError::Spec(format!(
                        "gamma shape {shape} and scale {scale} must be positive"
                    )));
                }
                None
            }
        };
        Ok(LevySpec {
            b,
            sigma,
            jumps,
            sigma_sqrt,
            jump_sqrt,
        })
    }

    /// Driftless Brownian motion with covariance `sigma`.
    pub fn brownian(sigma: DMatrix<f64>) -> Result<Self> {
        let k = sigma.nrows();
        LevySpec::new(DVector::zeros(k), sigma, JumpSpec::None)
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn is_infinite_activity(&self) -> bool {
        matches!(self.jumps, JumpSpec::SymmetricGamma { .. })
    }

    /// `(E[L_1], Var[L_1])`.
    pub fn triplet_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k();
        let jump_var = match &self.jumps {
            JumpSpec::None => DMatrix::zeros(k, k),
            JumpSpec::CompoundPoisson { rate, jump_cov } => jump_cov * *rate,
            JumpSpec::SymmetricGamma { shape, scale } => DMatrix::identity(k, k) * (2.0 * shape * scale * scale),
        };
        (self.b.clone(), &self.sigma + jump_var)
    }

    /// Restriction to a subset of components, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.b[i]));
        let sub = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |a, c| m[(idx[a], idx[c])]);
        let jumps = match &self.jumps {
            JumpSpec::None => JumpSpec::None,
            JumpSpec::CompoundPoisson { rate, jump_cov } => JumpSpec::CompoundPoisson {
                rate: *rate,
                jump_cov: sub(jump_cov),
            },
            g @ JumpSpec::SymmetricGamma { .. } => g.clone(),
        };
        LevySpec::new(b, sub(&self.sigma), jumps)
    }

    pub(crate) fn sigma_sqrt(&self) -> &DMatrix<f64> {
        &self.sigma_sqrt
    }

    pub(crate) fn sample_jump_size<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let root = self.jump_sqrt.as_ref().expect("compound Poisson jump factor");
        root * standard_normal(rng, self.k())
    }

    /// Gamma-difference increment over a span of length `dt`, or `None` for
    /// the other regimes.
    pub(crate) fn sample_gamma<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> Option<DVector<f64>> {
        match self.jumps {
            JumpSpec::SymmetricGamma { shape, scale } => {
                let g = Gamma::new(shape * dt, scale).expect("validated gamma parameters");
                Some(DVector::from_fn(self.k(), |_, _| g.sample(rng) - g.sample(rng)))
            }
            _ => None,
        }
    }

    /// Jump arrivals in a span of length `dt`: (offset into the span, size).
    pub(crate) fn sample_arrivals<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> Vec<(f64, DVector<f64>)> {
        match self.jumps {
            JumpSpec::CompoundPoisson { rate, .. } if rate > 0.0 => {
                let n = Poisson::new(rate * dt).expect("positive Poisson mean").sample(rng) as usize;
                let mut out: Vec<(f64, DVector<f64>)> = (0..n)
                    .map(|_| {
                        let offset = rng.random::<f64>() * dt;
                        (offset, self.sample_jump_size(rng))
                    })
                    .collect();
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                out
            }
            _ => Vec::new(),
        }
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Increments of `L` over the intervals of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementBatch {
    pub times: Vec<f64>,
    /// Drift plus Brownian part, one K-vector per interval.
    pub continuous: Vec<DVector<f64>>,
    /// Pure-jump part (compound Poisson sum or Gamma difference).
    pub jumps: Vec<DVector<f64>>,
}

impl IncrementBatch {
    pub fn total(&self, m: usize) -> DVector<f64> {
        &self.continuous[m] + &self.jumps[m]
    }

    pub fn len(&self) -> usize {
        self.continuous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.continuous.is_empty()
    }

    /// Sums over a coarsening given by indices into `times`.
    pub fn aggregate(&self, coarse_idx: &[usize]) -> Result<IncrementBatch> {
        if coarse_idx.windows(2).any(|w| w[0] >= w[1]) || coarse_idx.last().is_some_and(|&i| i >= self.times.len()) {
            return Err(GrouError::Config("coarse indices must increase within the grid".into()));
        }
        let k = self.continuous.first().map_or(0, |v| v.len());
        let sum =
            |parts: &[DVector<f64>], a: usize, b: usize| parts[a..b].iter().fold(DVector::zeros(k), |acc, v| acc + v);
        let mut out = IncrementBatch {
            times: coarse_idx.iter().map(|&i| self.times[i]).collect(),
            continuous: Vec::new(),
            jumps: Vec::new(),
        };
        for w in coarse_idx.windows(2) {
            out.continuous.push(sum(&self.continuous, w[0], w[1]));
            out.jumps.push(sum(&self.jumps, w[0], w[1]));
        }
        Ok(out)
    }
}

pub fn sample_increments(spec: &LevySpec, grid: &[f64], rng_seed: u64) -> Result<IncrementBatch> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GrouError::Config("grid must be strictly increasing".into()));
    }
    let mut rng = stream_rng(rng_seed, 0);
    let k = spec.k();
    let mut batch = IncrementBatch {
        times: grid.to_vec(),
        continuous: Vec::with_capacity(grid.len().saturating_sub(1)),
        jumps: Vec::with_capacity(grid.len().saturating_sub(1)),
    };
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let z = standard_normal(&mut rng, k);
        batch.continuous.push(spec.b() * dt + spec.sigma_sqrt() * z * dt.sqrt());
        let jump = match spec.jumps() {
            JumpSpec::None => DVector::zeros(k),
            JumpSpec::CompoundPoisson { .. } => spec
                .sample_arrivals(&mut rng, dt)
                .into_iter()
                .fold(DVector::zeros(k), |acc, (_, j)| acc + j),
            JumpSpec::SymmetricGamma { .. } => spec.sample_gamma(&mut rng, dt).unwrap(),
        };
        batch.jumps.push(jump);
    }
    Ok(batch)
}
