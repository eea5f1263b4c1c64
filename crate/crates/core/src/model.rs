//! grOU(L, [R_1..R_L]) parameters, the companion state-space form and its
//! stationary and conditional moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::graph::WeightMatrices;
use crate::linalg::{eigenvalues, expm, integrated_covariance, integrated_expm, solve_lyapunov, symmetrize};
use crate::noise::{matrix_from_rows, matrix_to_rows, LevySpec};

pub const HURWITZ_MARGIN: f64 = 1e-10;

/// Lag count and neighbourhood stages per lag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelShape {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "R")]
    pub r: Vec<usize>,
}

impl ModelShape {
    pub fn new(r: Vec<usize>) -> Result<Self> {
        if r.is_empty() {
            return Err(GrouError::Config("model needs at least one lag".into()));
        }
        Ok(ModelShape { l: r.len(), r })
    }

    pub fn n_params(&self, k: usize) -> usize {
        self.l * k + self.r.iter().sum::<usize>()
    }

    pub fn max_stage(&self) -> usize {
        self.r.iter().copied().max().unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        if self.l == 0 || self.r.len() != self.l {
            return Err(GrouError::Config(format!(
                "shape has L = {} but {} stage counts",
                self.l,
                self.r.len()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for ModelShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r: Vec<String> = self.r.iter().map(|x| x.to_string()).collect();
        write!(f, "grOU({},[{}])", self.l, r.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GrouParams {
    shape: ModelShape,
    /// L×K; row l holds α_{·,l+1}.
    alpha: DMatrix<f64>,
    beta: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "R")]
    r: Vec<usize>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl TryFrom<RawParams> for GrouParams {
    type Error = GrouError;

    fn try_from(raw: RawParams) -> Result<Self> {
        let shape = ModelShape { l: raw.l, r: raw.r };
        let alpha = matrix_from_rows(&raw.alpha, "alpha").map_err(|e| GrouError::Config(e.to_string()))?;
        GrouParams::new(shape, alpha, raw.beta)
    }
}

impl From<GrouParams> for RawParams {
    fn from(p: GrouParams) -> Self {
        RawParams {
            l: p.shape.l,
            r: p.shape.r.clone(),
            alpha: matrix_to_rows(&p.alpha),
            beta: p.beta,
        }
    }
}

impl GrouParams {
    pub fn new(shape: ModelShape, alpha: DMatrix<f64>, beta: Vec<Vec<f64>>) -> Result<Self> {
        shape.check()?;
        if alpha.nrows() != shape.l {
            return Err(GrouError::Config(format!(
                "alpha has {} rows, expected L = {}",
                alpha.nrows(),
                shape.l
            )));
        }
        if beta.len() != shape.l || beta.iter().zip(&shape.r).any(|(b, &r)| b.len() != r) {
            return Err(GrouError::Config("beta lengths do not match R".into()));
        }
        if !alpha.iter().chain(beta.iter().flatten()).all(|x| x.is_finite()) {
            return Err(GrouError::Config("non-finite parameter".into()));
        }
        Ok(GrouParams { shape, alpha, beta })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn k(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    /// θ = [α_1, β_1, …, α_L, β_L].
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.shape.n_params(self.k()));
        for l in 0..self.shape.l {
            out.extend(self.alpha.row(l).iter());
            out.extend(self.beta[l].iter());
        }
        DVector::from_vec(out)
    }

    pub fn unflatten(shape: &ModelShape, k: usize, theta: &DVector<f64>) -> Result<Self> {
        shape.check()?;
        if theta.len() != shape.n_params(k) {
            return Err(GrouError::Config(format!(
                "θ has length {}, shape {shape} with K = {k} needs {}",
                theta.len(),
                shape.n_params(k)
            )));
        }
        let mut alpha = DMatrix::zeros(shape.l, k);
        let mut beta = Vec::with_capacity(shape.l);
        let mut pos = 0;
        for l in 0..shape.l {
            for e in 0..k {
                alpha[(l, e)] = theta[pos + e];
            }
            pos += k;
            beta.push(theta.rows(pos, shape.r[l]).iter().copied().collect());
            pos += shape.r[l];
        }
        GrouParams::new(shape.clone(), alpha, beta)
    }
}

/// Companion state-space form `dX = ℚ X dt + ℰ dL`, `Y = A X`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSystem {
    k: usize,
    lag_matrices: Vec<DMatrix<f64>>,
    bbq: DMatrix<f64>,
}

impl CompanionSystem {
    /// Builds ℚ from `Q_1..Q_L`.
    pub fn from_lag_matrices(lag_matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let l = lag_matrices.len();
        if l == 0 {
            return Err(GrouError::Config("need at least one lag matrix".into()));
        }
        let k = lag_matrices[0].nrows();
        if lag_matrices.iter().any(|q| q.nrows() != k || q.ncols() != k) {
            return Err(GrouError::Config("lag matrices must all be KxK".into()));
        }
        let n = l * k;
        let mut bbq = DMatrix::zeros(n, n);
        for b in 0..l - 1 {
            bbq.view_mut((b * k, (b + 1) * k), (k, k)).fill_with_identity();
        }
        for (col, q) in lag_matrices.iter().rev().enumerate() {
            bbq.view_mut(((l - 1) * k, col * k), (k, k)).copy_from(&(-q));
        }
        Ok(CompanionSystem { k, lag_matrices, bbq })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lags(&self) -> usize {
        self.lag_matrices.len()
    }

    pub fn state_dim(&self) -> usize {
        self.k * self.lags()
    }

    /// `Q_l` for `l = 1..=L`.
    pub fn lag_matrix(&self, l: usize) -> &DMatrix<f64> {
        &self.lag_matrices[l - 1]
    }

    pub fn bbq(&self) -> &DMatrix<f64> {
        &self.bbq
    }

    pub fn selector_e(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.state_dim(), self.k);
        e.view_mut((self.state_dim() - self.k, 0), (self.k, self.k))
            .fill_with_identity();
        e
    }

    pub fn selector_a(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.k, self.state_dim());
        a.view_mut((0, 0), (self.k, self.k)).fill_with_identity();
        a
    }

    /// `ℰ M ℰᵀ` without forming ℰ.
    pub(crate) fn embed_noise(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut g = DMatrix::zeros(n, n);
        g.view_mut((n - self.k, n - self.k), (self.k, self.k)).copy_from(m);
        g
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(eigenvalues(&self.bbq)?
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

pub fn build_companion(params: &GrouParams, weights: &WeightMatrices) -> Result<CompanionSystem> {
    let shape = params.shape();
    let k = params.k();
    if shape.max_stage() > 0 && weights.k() != k {
        return Err(GrouError::Config(format!(
            "weights are {}x{} but parameters have K = {k}",
            weights.k(),
            weights.k()
        )));
    }
    if shape.max_stage() > weights.max_stage() {
        return Err(GrouError::Config(format!(
            "{shape} needs {} neighbourhood stages, weights provide {}",
            shape.max_stage(),
            weights.max_stage()
        )));
    }
    let lags = (0..shape.l)
        .map(|l| {
            let mut q = DMatrix::from_diagonal(&params.alpha().row(l).transpose());
            for (r, b) in params.beta()[l].iter().enumerate() {
                q += weights.stage(r + 1) * *b;
            }
            q
        })
        .collect();
    CompanionSystem::from_lag_matrices(lags)
}

pub fn is_hurwitz(system: &CompanionSystem) -> Result<bool> {
    is_hurwitz_with_margin(system, HURWITZ_MARGIN)
}

pub fn is_hurwitz_with_margin(system: &CompanionSystem, margin: f64) -> Result<bool> {
    Ok(system.spectral_abscissa()? < -margin)
}

fn require_hurwitz(system: &CompanionSystem) -> Result<()> {
    let a = system.spectral_abscissa()?;
    if a < -HURWITZ_MARGIN {
        Ok(())
    } else {
        Err(GrouError::Stationarity(format!(
            "companion matrix has an eigenvalue with real part {a:.6e}"
        )))
    }
}

fn check_noise(system: &CompanionSystem, noise: &LevySpec) -> Result<()> {
    if noise.k() != system.k() {
        return Err(GrouError::Config(format!(
            "noise has dimension {}, model has K = {}",
            noise.k(),
            system.k()
        )));
    }
    Ok(())
}

/// Explicit block inverse of ℚ.
pub fn companion_inverse(system: &CompanionSystem) -> Result<DMatrix<f64>> {
    let k = system.k();
    let l = system.lags();
    let lu = system.lag_matrix(l).clone().lu();
    let ql_inv = lu
        .try_inverse()
        .ok_or_else(|| GrouError::Singular("Q_L is not invertible".into()))?;
    let n = l * k;
    let mut inv = DMatrix::zeros(n, n);
    // first block row: −Q_L⁻¹Q_{L−1}, …, −Q_L⁻¹Q_1, −Q_L⁻¹
    for col in 0..l - 1 {
        let q = system.lag_matrix(l - 1 - col);
        inv.view_mut((0, col * k), (k, k)).copy_from(&(-&ql_inv * q));
    }
    inv.view_mut((0, (l - 1) * k), (k, k)).copy_from(&(-&ql_inv));
    for b in 1..l {
        inv.view_mut((b * k, (b - 1) * k), (k, k)).fill_with_identity();
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean: DVector<f64>,
    pub variance: DMatrix<f64>,
    pub state_mean: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    bbq: DMatrix<f64>,
    k: usize,
}

impl MomentSet {
    /// `Cov(Y_h, Y_0) = A e^{hℚ} Γ Aᵀ`.
    pub fn autocov(&self, h: f64) -> Result<DMatrix<f64>> {
        if h < 0.0 {
            return Err(GrouError::Domain(format!("negative lag {h}")));
        }
        let e = expm(&(&self.bbq * h))?;
        let eg = e.rows(0, self.k) * &self.state_cov;
        Ok(eg.columns(0, self.k).into_owned())
    }
}

fn stationary_mean(system: &CompanionSystem, mu: &DVector<f64>) -> Result<DVector<f64>> {
    system
        .lag_matrix(system.lags())
        .clone()
        .lu()
        .solve(mu)
        .ok_or_else(|| GrouError::Numerical("Q_L is numerically singular".into()))
}

/// `E[X_0] = −ℚ⁻¹ ℰ μ_L`, by a dense solve on ℚ.
fn stationary_state_mean(system: &CompanionSystem, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let n = system.state_dim();
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(n - system.k(), system.k()).copy_from(&(-mu));
    system
        .bbq()
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GrouError::Numerical("companion matrix is numerically singular".into()))
}

pub fn stationary_moments(system: &CompanionSystem, noise: &LevySpec) -> Result<MomentSet> {
    check_noise(system, noise)?;
    require_hurwitz(system)?;
    let (mu, sigma_l) = noise.triplet_moments();
    let mean = stationary_mean(system, &mu)?;
    let state_mean = stationary_state_mean(system, &mu)?;
    let gamma = solve_lyapunov(system.bbq(), &system.embed_noise(&sigma_l))?;
    let k = system.k();
    let variance = gamma.view((0, 0), (k, k)).into_owned();
    Ok(MomentSet {
        mean,
        variance,
        state_mean,
        state_cov: gamma,
        bbq: system.bbq().clone(),
        k,
    })
}

/// Conditional law of `Y_{t+h}` given `X_t = x`, precomputed for a fixed `h`
/// so it can be applied to many states.
///
/// The mean is evaluated in flow form `e^{hℚ}x + ∫_0^h e^{uℚ}du ℰμ_L`, which
/// equals `E[X_0] + e^{hℚ}(x − E[X_0])` for Hurwitz ℚ.
#[derive(Debug, Clone)]
pub struct ConditionalPropagator {
    k: usize,
    transition: DMatrix<f64>,
    offset: DVector<f64>,
    state_variance: DMatrix<f64>,
}

impl ConditionalPropagator {
    pub fn new(system: &CompanionSystem, noise: &LevySpec, h: f64) -> Result<Self> {
        check_noise(system, noise)?;
        require_hurwitz(system)?;
        Self::transient(system, noise, h)
    }

    /// Same law without the stationarity requirement; meaningful for any
    /// finite `h`.
    pub fn transient(system: &CompanionSystem, noise: &LevySpec, h: f64) -> Result<Self> {
        check_noise(system, noise)?;
        if !(h >= 0.0 && h.is_finite()) {
            return Err(GrouError::Domain(format!("horizon {h} must be finite and >= 0")));
        }
        let (mu, sigma_l) = noise.triplet_moments();
        let n = system.state_dim();
        let mut mu_state = DVector::zeros(n);
        mu_state.rows_mut(n - system.k(), system.k()).copy_from(&mu);
        let transition = expm(&(system.bbq() * h))?;
        let offset = integrated_expm(system.bbq(), h)? * mu_state;
        let state_variance = integrated_covariance(system.bbq(), &system.embed_noise(&sigma_l), h)?;
        Ok(ConditionalPropagator {
            k: system.k(),
            transition,
            offset,
            state_variance,
        })
    }

    /// `E[X_{t+h} | X_t = x]`.
    pub fn state_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.offset
    }

    pub fn mean(&self, x: &DVector<f64>) -> DVector<f64> {
        self.state_mean(x).rows(0, self.k).into_owned()
    }

    pub fn variance(&self) -> DMatrix<f64> {
        symmetrize(&self.state_variance.view((0, 0), (self.k, self.k)).into_owned())
    }

    pub fn state_variance(&self) -> &DMatrix<f64> {
        &self.state_variance
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }
}

pub fn conditional_moments(
    system: &CompanionSystem,
    noise: &LevySpec,
    state_x: &DVector<f64>,
    horizon_h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if state_x.len() != system.state_dim() {
        return Err(GrouError::Config(format!(
            "state has length {}, expected {}",
            state_x.len(),
            system.state_dim()
        )));
    }
    let p = ConditionalPropagator::new(system, noise, horizon_h)?;
    Ok((p.mean(state_x), p.variance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{weight_matrices, EdgeGraph};
    use proptest::prelude::*;

    fn scalar(q: f64) -> CompanionSystem {
        CompanionSystem::from_lag_matrices(vec![DMatrix::from_element(1, 1, q)]).unwrap()
    }

    fn unit_noise(k: usize) -> LevySpec {
        LevySpec::brownian(DMatrix::identity(k, k)).unwrap()
    }

    pub(crate) fn consistency_params() -> (GrouParams, WeightMatrices) {
        let g = EdgeGraph::new(3, false, vec![(0, 1), (1, 2)]).unwrap();
        let w = weight_matrices(&g, 1).unwrap();
        let p = GrouParams::new(
            ModelShape::new(vec![1, 1]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[4.0, 3.0, 2.0, 1.0]),
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        (p, w)
    }

    #[test]
    fn scalar_companion() {
        let s = scalar(2.0);
        assert_eq!(s.bbq(), &DMatrix::from_element(1, 1, -2.0));
        assert_eq!(s.selector_e(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(s.selector_a(), DMatrix::from_element(1, 1, 1.0));
        assert!(is_hurwitz(&s).unwrap());
        assert!(!is_hurwitz(&scalar(0.0)).unwrap());
    }

    #[test]
    fn consistency_setup_bottom_row() {
        let (p, w) = consistency_params();
        let s = build_companion(&p, &w).unwrap();
        let w1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let q1 = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0])) + &w1;
        let q2 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])) + &w1;
        assert_eq!(s.lag_matrix(1), &q1);
        assert_eq!(s.lag_matrix(2), &q2);
        assert_eq!(s.bbq().view((2, 0), (2, 2)).into_owned(), -q2);
        assert_eq!(s.bbq().view((2, 2), (2, 2)).into_owned(), -q1);
        assert_eq!(s.bbq().view((0, 2), (2, 2)).into_owned(), DMatrix::identity(2, 2));
        assert_eq!(s.bbq().view((0, 0), (2, 2)).into_owned(), DMatrix::zeros(2, 2));
        assert!(is_hurwitz(&s).unwrap());
        let inv = companion_inverse(&s).unwrap();
        let dense = s.bbq().clone().try_inverse().unwrap();
        assert!((inv - dense).abs().max() < 1e-10);
    }

    #[test]
    fn stage_shortfall_is_config_error() {
        let (p, _) = consistency_params();
        let g = EdgeGraph::new(3, false, vec![(0, 1), (1, 2)]).unwrap();
        let w0 = weight_matrices(&g, 0).unwrap();
        assert!(matches!(build_companion(&p, &w0), Err(GrouError::Config(_))));
    }

    #[test]
    fn one_lag_inverse_is_negated_q_inverse() {
        let q = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.5, 2.0]);
        let s = CompanionSystem::from_lag_matrices(vec![q.clone()]).unwrap();
        let inv = companion_inverse(&s).unwrap();
        assert!((inv + q.try_inverse().unwrap()).abs().max() < 1e-14);
    }

    #[test]
    fn scalar_ou_stationary() {
        let m = stationary_moments(&scalar(2.0), &unit_noise(1)).unwrap();
        assert_eq!(m.mean[0], 0.0);
        assert!((m.variance[(0, 0)] - 0.25).abs() < 1e-14);
        for h in [0.0, 0.3, 1.7] {
            let ac = m.autocov(h).unwrap()[(0, 0)];
            assert!((ac - (-2.0 * h).exp() / 4.0).abs() < 1e-14);
        }
        let drift = LevySpec::new(
            DVector::from_vec(vec![4.0]),
            DMatrix::identity(1, 1),
            crate::noise::JumpSpec::None,
        )
        .unwrap();
        let m = stationary_moments(&scalar(2.0), &drift).unwrap();
        assert!((m.mean[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_hurwitz_rejected() {
        assert!(matches!(
            stationary_moments(&scalar(-0.5), &unit_noise(1)),
            Err(GrouError::Stationarity(_))
        ));
    }

    #[test]
    fn scalar_ou_conditional() {
        let s = scalar(2.0);
        let x = DVector::from_vec(vec![1.3]);
        for h in [0.0, 0.01, 0.5, 3.0] {
            let (m, v) = conditional_moments(&s, &unit_noise(1), &x, h).unwrap();
            assert!((m[0] - 1.3 * (-2.0 * h).exp()).abs() < 1e-12);
            assert!((v[(0, 0)] - (1.0 - (-4.0 * h).exp()) / 4.0).abs() < 1e-12);
        }
        assert!(matches!(
            conditional_moments(&s, &unit_noise(1), &x, -1.0),
            Err(GrouError::Domain(_))
        ));
    }

    #[test]
    fn conditional_limits_to_stationary() {
        let (p, w) = consistency_params();
        let s = build_companion(&p, &w).unwrap();
        let noise = unit_noise(2);
        let m = stationary_moments(&s, &noise).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.3]);
        let h = 50.0 / s.spectral_abscissa().unwrap().abs();
        let (cm, cv) = conditional_moments(&s, &noise, &x, h).unwrap();
        assert!((cm - &m.mean).abs().max() < 1e-6);
        assert!((cv - &m.variance).abs().max() < 1e-6);
        let (m0, v0) = conditional_moments(&s, &noise, &x, 0.0).unwrap();
        assert_eq!(m0, x.rows(0, 2).into_owned());
        assert_eq!(v0, DMatrix::zeros(2, 2));
    }

    #[test]
    fn conditional_variance_monotone() {
        let (p, w) = consistency_params();
        let s = build_companion(&p, &w).unwrap();
        let noise = unit_noise(2);
        let hs = [0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 5.0];
        let vars: Vec<DMatrix<f64>> = hs
            .iter()
            .map(|&h| {
                ConditionalPropagator::new(&s, &noise, h)
                    .unwrap()
                    .state_variance()
                    .clone()
            })
            .collect();
        for w in vars.windows(2) {
            let diff = symmetrize(&(&w[1] - &w[0]));
            let eig = nalgebra::SymmetricEigen::new(diff).eigenvalues;
            assert!(eig.iter().all(|&l| l > -1e-12), "{eig}");
        }
    }

    fn random_hurwitz(k: usize, l: usize, seed: u64) -> CompanionSystem {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, 0);
        loop {
            let lags: Vec<DMatrix<f64>> = (0..l)
                .map(|_| {
                    DMatrix::from_fn(k, k, |i, j| {
                        if i == j {
                            rng.random_range(1.0..4.0)
                        } else {
                            rng.random_range(-0.5..0.5)
                        }
                    })
                })
                .collect();
            let s = CompanionSystem::from_lag_matrices(lags).unwrap();
            if s.spectral_abscissa().unwrap() < -0.05 {
                return s;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flatten_round_trip(k in 1usize..6, r in prop::collection::vec(0usize..4, 1..4), seed in any::<u64>()) {
            use rand::Rng;
            let shape = ModelShape::new(r).unwrap();
            let mut rng = crate::rng::stream_rng(seed, 0);
            let theta = DVector::from_fn(shape.n_params(k), |_, _| rng.random_range(-5.0..5.0));
            let p = GrouParams::unflatten(&shape, k, &theta).unwrap();
            prop_assert_eq!(p.flatten(), theta);
            let again = GrouParams::unflatten(&shape, k, &p.flatten()).unwrap();
            prop_assert_eq!(again, p);
        }

        #[test]
        fn moment_identities(k in 1usize..6, l in 1usize..4, seed in any::<u64>()) {
            use rand::Rng;
            let s = random_hurwitz(k, l, seed);
            let mut rng = crate::rng::stream_rng(seed, 1);
            let mu = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
            let noise = LevySpec::new(mu.clone(), DMatrix::identity(k, k), crate::noise::JumpSpec::None).unwrap();
            let m = stationary_moments(&s, &noise).unwrap();
            let g = s.embed_noise(&DMatrix::identity(k, k));
            let resid = s.bbq() * &m.state_cov + &m.state_cov * s.bbq().transpose() + &g;
            prop_assert!(resid.norm() <= 1e-8 * g.norm());
            prop_assert!((s.selector_a() * &m.state_mean - &m.mean).abs().max() < 1e-10);
            let block = companion_inverse(&s).unwrap();
            let via_block = -(&block * s.selector_e() * &mu);
            prop_assert!((&via_block - &m.state_mean).abs().max() < 1e-10);
            let dense = s.bbq().clone().try_inverse().unwrap();
            prop_assert!((&block - dense).abs().max() < 1e-10);
            prop_assert!((block * s.bbq() - DMatrix::identity(k * l, k * l)).abs().max() < 1e-10);
            prop_assert!(crate::linalg::is_psd(&m.state_cov, 1e-10));
            prop_assert!((m.autocov(0.0).unwrap() - &m.variance).abs().max() < 1e-12);
        }

        #[test]
        fn semigroup_and_chapman_kolmogorov(k in 1usize..4, l in 1usize..3, seed in any::<u64>(), h in 0.01f64..1.0) {
            use rand::Rng;
            let s = random_hurwitz(k, l, seed);
            let noise = LevySpec::new(DVector::from_element(k, 0.5), DMatrix::identity(k, k), crate::noise::JumpSpec::None).unwrap();
            let mut rng = crate::rng::stream_rng(seed, 2);
            let x = DVector::from_fn(k * l, |_, _| rng.random_range(-3.0..3.0));
            let p1 = ConditionalPropagator::new(&s, &noise, h).unwrap();
            let p2 = ConditionalPropagator::new(&s, &noise, 2.0 * h).unwrap();
            let two_step = p1.mean(&p1.state_mean(&x));
            prop_assert!((two_step - p2.mean(&x)).abs().max() < 1e-10);
            let v1 = p1.state_variance();
            let composed = v1 + p1.transition() * v1 * p1.transition().transpose();
            prop_assert!((&composed - p2.state_variance()).norm() <= 1e-8 * p2.state_variance().norm());
        }
    }

    #[test]
    fn params_json() {
        let js = r#"{"L": 2, "R": [1, 1], "alpha": [[4, 3], [2, 1]], "beta": [[1], [1]]}"#;
        let p: GrouParams = serde_json::from_str(js).unwrap();
        assert_eq!(p, consistency_params().0);
        assert_eq!(p.flatten().as_slice(), &[4.0, 3.0, 1.0, 2.0, 1.0, 1.0]);
        let back: GrouParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"L": 1, "R": [1], "alpha": [[1]], "beta": [[]]}"#;
        assert!(serde_json::from_str::<GrouParams>(bad).is_err());
    }
}
