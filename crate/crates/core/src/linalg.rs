//! Dense linear-algebra kernels shared by the model, simulator and estimator.
//!
//! * `expm`: scaling and squaring with a degree-13 Padé approximant
//!   (Higham 2005), with lower-degree approximants for small norms.
//! * `integrated_expm`, `integrated_covariance`: Van Loan block exponentials
//!   for the drift and noise integrals of a linear SDE.
//! * `solve_lyapunov`: `A X + X Aᵀ + C = 0`, by Kronecker vectorisation for
//!   small systems and by Bartels–Stewart on the real Schur form otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{GrouError, Result};

/// Systems up to this size are solved by the vectorised Kronecker form.
pub const KRONECKER_LYAPUNOV_MAX: usize = 16;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut u = &ident * b[1];
    let mut v = &ident * b[0];
    let mut pow = ident.clone();
    let m = b.len() - 1;
    let mut k = 2;
    while k <= m {
        pow = &pow * &a2;
        v += &pow * b[k];
        if k + 1 <= m {
            u += &pow * b[k + 1];
        }
        k += 2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// Matrix exponential `e^A`.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(GrouError::Numerical("expm: non-finite input".into()));
    }
    let nrm = norm1(a);
    let (u, v, squarings) = if nrm <= THETA[0] {
        let (u, v) = pade_low(a, &PADE3);
        (u, v, 0)
    } else if nrm <= THETA[1] {
        let (u, v) = pade_low(a, &PADE5);
        (u, v, 0)
    } else if nrm <= THETA[2] {
        let (u, v) = pade_low(a, &PADE7);
        (u, v, 0)
    } else if nrm <= THETA[3] {
        let (u, v) = pade_low(a, &PADE9);
        (u, v, 0)
    } else {
        let s = ((nrm / THETA[4]).log2().ceil()).max(0.0) as i32;
        let scaled = a * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| GrouError::Numerical("expm: singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// `∫_0^h e^{uA} du` via the top-right block of `exp(h [[A, I], [0, 0]])`.
pub fn integrated_expm(a: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    m.view_mut((0, n), (n, n))
        .copy_from(&(DMatrix::<f64>::identity(n, n) * h));
    let e = expm(&m)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// `∫_0^h e^{uA} G e^{uAᵀ} du` for symmetric `G`.
///
/// Van Loan's block exponential is applied on a step small enough that the
/// anti-stable block `e^{-hAᵀ}` stays bounded, and the result is doubled up
/// to `h` with `V(2s) = V(s) + e^{sA} V(s) e^{sAᵀ}`.
pub fn integrated_covariance(a: &DMatrix<f64>, g: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if h == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let nrm = norm1(a) * h;
    let doublings = if nrm > 1.0 { nrm.log2().ceil() as i32 } else { 0 };
    let step = h * 2f64.powi(-doublings);

    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * step));
    m.view_mut((0, n), (n, n)).copy_from(&(g * step));
    m.view_mut((n, n), (n, n)).copy_from(&(-a.transpose() * step));
    let e = expm(&m)?;
    let phi = e.view((0, 0), (n, n)).into_owned();
    let mut v = e.view((0, n), (n, n)) * phi.transpose();
    let mut phi = phi;
    for _ in 0..doublings {
        v = &v + &phi * &v * phi.transpose();
        phi = &phi * &phi;
    }
    Ok(symmetrize(&v))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Solves `A X + X Aᵀ + C = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() <= KRONECKER_LYAPUNOV_MAX {
        lyapunov_kronecker(a, c)
    } else {
        lyapunov_schur(a, c)
    }
}

pub fn lyapunov_kronecker(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let op = ident.kronecker(a) + a.kronecker(&ident);
    let rhs = DVector::from_iterator(n * n, c.iter().map(|x| -x));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GrouError::Singular("Lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

/// Diagonal blocks (start, size) of a real quasi-upper-triangular matrix.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves the small Sylvester system `P Y + Y Mᵀ = R` by vectorisation.
fn small_sylvester(p: &DMatrix<f64>, m: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rp, rm) = (p.nrows(), m.nrows());
    let op = DMatrix::<f64>::identity(rm, rm).kronecker(p) + m.kronecker(&DMatrix::identity(rp, rp));
    let rhs = DVector::from_column_slice(r.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GrouError::Singular("Lyapunov operator is singular".into()))?;
    Ok(DMatrix::from_column_slice(rp, rm, sol.as_slice()))
}

/// Bartels–Stewart on the real Schur form `A = U T Uᵀ`.
pub fn lyapunov_schur(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| GrouError::Numerical("real Schur decomposition did not converge".into()))?;
    let (u, t) = schur.unpack();
    let f = -(u.transpose() * c * &u);
    let blocks = schur_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(j0, js) in blocks.iter().rev() {
        let tjj = t.view((j0, j0), (js, js)).into_owned();
        for &(i0, is) in blocks.iter().rev() {
            let mut r = f.view((i0, j0), (is, js)).into_owned();
            // Y_IK T_JKᵀ for column blocks K after J.
            if j0 + js < n {
                let k0 = j0 + js;
                let yik = y.view((i0, k0), (is, n - k0));
                let tjk = t.view((j0, k0), (js, n - k0));
                r -= yik * tjk.transpose();
            }
            // T_IK Y_KJ for row blocks K after I.
            if i0 + is < n {
                let k0 = i0 + is;
                let tik = t.view((i0, k0), (is, n - k0));
                let ykj = y.view((k0, j0), (n - k0, js));
                r -= tik * ykj;
            }
            let tii = t.view((i0, i0), (is, is)).into_owned();
            let sol = small_sylvester(&tii, &tjj, &r)?;
            y.view_mut((i0, j0), (is, js)).copy_from(&sol);
        }
    }
    Ok(symmetrize(&(&u * y * u.transpose())))
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| GrouError::Numerical("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Lower Cholesky factor of a symmetric PSD matrix, tolerating exact zeros.
///
/// Falls back to an eigen-decomposition with clipped eigenvalues when the
/// matrix is only semi-definite.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.iter().all(|x| *x == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale.max(1.0)) {
        return Err(GrouError::Spec("matrix is not positive semi-definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d)
}

pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let asym = (a - a.transpose()).abs().max();
    let scale = a.abs().max().max(1.0);
    if asym > tol * scale {
        return false;
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(symmetrize(a));
    eig.eigenvalues.iter().all(|&l| l >= -tol * scale)
}
