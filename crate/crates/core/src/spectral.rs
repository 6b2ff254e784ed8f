//! Eigendecomposition of graph Laplacians and stationary covariances.
//!
//! Symmetric Laplacians go through an orthogonal decomposition. General
//! Laplacians get a biorthogonal system (right vectors `v_i`, left vectors
//! `w_i`, `w_i^T v_j = delta_ij`) built from the real Schur eigenvalues plus
//! complex inverse iteration. Complex arithmetic is kept internally even when
//! the spectrum is real; results are realified with residue checks.
//!
//! Two independent routes to the stationary covariance of `dX = LX dt + B dW`
//! are provided: the spectral double sum over nonzero modes and a deflated
//! Lyapunov solve. They cross-check each other in the test suites.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

type CMatrix = DMatrix<Complex<f64>>;
type CVector = DVector<Complex<f64>>;

/// Eigenvalues sorted by decreasing real part, with right and left
/// eigenvectors normalized so that `w_i^T v_j = delta_ij` (plain transpose,
/// no conjugation, matching the bilinear pairing of the covariance formulas).
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Right eigenvectors as columns, unit 2-norm.
    pub right: CMatrix,
    /// Left eigenvectors as columns.
    pub left: CMatrix,
    pub symmetric: bool,
    /// Max-abs entry of the decomposed matrix; tolerance reference.
    pub scale: f64,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// |Re lambda_2|: slowest relaxation rate of the nonzero modes.
    pub fn relaxation_rate(&self) -> f64 {
        self.eigenvalues.get(1).map(|l| l.re.abs()).unwrap_or(0.0)
    }

    /// max |Re lambda_i|: fastest decay rate; bounds explicit step sizes.
    pub fn stiffest_rate(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re.abs()).fold(0.0, f64::max)
    }

    /// Largest deviation of `w_i^T v_j` from the identity.
    pub fn biorthogonality_residual(&self) -> f64 {
        let g = self.left.transpose() * &self.right;
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - Complex::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Decompose a graph Laplacian. `symmetric_hint` only short-circuits the
/// symmetry detection; a non-symmetric matrix is never forced through the
/// orthogonal path.
pub fn eigendecompose(l: &DMatrix<f64>, symmetric_hint: bool) -> Result<EigenSystem> {
    let n = l.nrows();
    if n != l.ncols() || n == 0 {
        return Err(Error::DimensionMismatch { context: "L must be square and nonempty".into() });
    }
    let scale = max_abs(l).max(1e-300);
    let symmetric = is_symmetric(l, 1e-12 * scale) && (symmetric_hint || true);
    let eig = if symmetric { decompose_symmetric(l, scale) } else { decompose_general(l, scale)? };

    // Laplacian sanity: leading eigenvalue 0, remaining modes strictly stable.
    if eig.eigenvalues[0].norm() > 1e-10 * scale {
        return Err(Error::InvalidInput {
            context: format!("leading eigenvalue {} is not the neutral mode", eig.eigenvalues[0]),
        });
    }
    for lam in &eig.eigenvalues[1..] {
        if lam.re >= 0.0 {
            return Err(Error::InvalidInput {
                context: format!("non-leading eigenvalue {lam} has nonnegative real part"),
            });
        }
    }
    check_residuals(l, &eig)?;
    Ok(eig)
}

fn decompose_symmetric(l: &DMatrix<f64>, scale: f64) -> EigenSystem {
    let se = nalgebra::SymmetricEigen::new(l.clone());
    let n = l.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .unwrap()
            .then_with(|| lex_cmp(&se.eigenvectors.column(a).into_owned(), &se.eigenvectors.column(b).into_owned()))
    });
    let mut right = CMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (slot, &idx) in order.iter().enumerate() {
        let mut v = se.eigenvectors.column(idx).into_owned();
        v /= v.norm();
        fix_sign_real(&mut v);
        for r in 0..n {
            right[(r, slot)] = Complex::new(v[r], 0.0);
        }
        eigenvalues.push(Complex::new(se.eigenvalues[idx], 0.0));
    }
    let left = right.clone();
    EigenSystem { eigenvalues, right, left, symmetric: true, scale }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len() {
        match a[i].partial_cmp(&b[i]) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn fix_sign_real(v: &mut DVector<f64>) {
    let tol = 1e-9 * v.amax();
    for i in 0..v.len() {
        if v[i].abs() > tol {
            if v[i] < 0.0 {
                *v *= -1.0;
            }
            return;
        }
    }
}

/// Phase-normalize a complex vector: unit norm, largest-modulus entry made
/// real and positive.
fn fix_phase(v: &mut CVector) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        *v /= Complex::new(norm, 0.0);
    }
    let mut best = 0usize;
    let mut best_norm = 0.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_norm {
            best_norm = z.norm();
            best = i;
        }
    }
    if best_norm > 0.0 {
        let phase = v[best] / Complex::new(best_norm, 0.0);
        *v /= phase;
    }
}

fn decompose_general(l: &DMatrix<f64>, scale: f64) -> Result<EigenSystem> {
    let n = l.nrows();
    let schur = nalgebra::Schur::try_new(l.clone(), 1e-14, 100_000)
        .ok_or(Error::DefectiveMatrix { cluster: vec![] })?;
    let mut lambdas: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    lambdas.sort_by(|a, b| {
        b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap())
    });

    // Group numerically coincident eigenvalues; each cluster needs as many
    // independent eigenvectors as its multiplicity. A defective double root
    // splits by ~sqrt(eps)*scale under rounding, so the cluster width must
    // sit above that or the defect masquerades as two simple eigenvalues.
    let cluster_tol = 1e-6 * scale;
    let lc: CMatrix = l.map(|x| Complex::new(x, 0.0));
    let mut right = CMatrix::zeros(n, n);
    let mut slot = 0usize;
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && (lambdas[end] - lambdas[start]).norm() <= cluster_tol {
            end += 1;
        }
        let mult = end - start;
        let vectors = cluster_eigenvectors(&lc, lambdas[start], mult, scale, n).map_err(|_| {
            Error::DefectiveMatrix { cluster: lambdas[start..end].iter().map(|z| z.re).collect() }
        })?;
        for v in vectors {
            for r in 0..n {
                right[(r, slot)] = v[r];
            }
            slot += 1;
        }
        start = end;
    }

    // Left vectors from the inverse: V^T W = I  =>  w_i^T v_j = delta_ij.
    let identity = CMatrix::identity(n, n);
    let left = right
        .transpose()
        .lu()
        .solve(&identity)
        .ok_or(Error::DefectiveMatrix { cluster: lambdas.iter().map(|z| z.re).collect() })?;

    Ok(EigenSystem { eigenvalues: lambdas, right, left, symmetric: false, scale })
}

/// Inverse iteration for a cluster of `mult` coincident eigenvalues.
fn cluster_eigenvectors(
    lc: &CMatrix,
    lambda: Complex<f64>,
    mult: usize,
    scale: f64,
    n: usize,
) -> std::result::Result<Vec<CVector>, ()> {
    let mut found: Vec<CVector> = Vec::with_capacity(mult);
    for attempt in 0..mult {
        // Tiny complex shift keeps the LU factor nonsingular.
        let shift = lambda + Complex::new(1e-13 * scale, 1e-13 * scale);
        let mut a = lc.clone();
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut x = pseudo_random_unit(n, 0x9e37 + attempt as u64);
        let mut ok = false;
        for _ in 0..6 {
            let mut y = lu.solve(&x).ok_or(())?;
            // Project out previously found directions (Hermitian inner
            // product; the bilinear one can vanish on complex vectors) so
            // repeated eigenvalues yield independent vectors. A defective
            // cluster has nothing independent left and fails the residual
            // gate below.
            for f in &found {
                let num: Complex<f64> = f.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum();
                let den: f64 = f.iter().map(|a| a.norm_sqr()).sum();
                let coef = num / den;
                y -= f.map(|z| z * coef);
            }
            let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-280 {
                return Err(());
            }
            y /= Complex::new(norm, 0.0);
            let residual = (lc * &y - y.map(|z| z * lambda)).norm();
            x = y;
            if residual <= 1e-9 * scale {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(());
        }
        fix_phase(&mut x);
        found.push(x);
    }
    Ok(found)
}

fn pseudo_random_unit(n: usize, salt: u64) -> CVector {
    let key = crate::rng::StreamKey::new(0xeda7_5eed, 0, salt);
    let mut v = CVector::zeros(n);
    for i in 0..n {
        v[i] = Complex::new(key.uniform(i as u64, 0) - 0.5, key.uniform(i as u64, 1) - 0.5);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v / Complex::new(norm, 0.0)
}

fn check_residuals(l: &DMatrix<f64>, eig: &EigenSystem) -> Result<()> {
    let n = eig.dim();
    let lc: CMatrix = l.map(|x| Complex::new(x, 0.0));
    for i in 0..n {
        let v = eig.right.column(i).into_owned();
        let res = (&lc * &v - v.map(|z| z * eig.eigenvalues[i])).norm();
        if res > 1e-8 * eig.scale {
            return Err(Error::DefectiveMatrix { cluster: vec![eig.eigenvalues[i].re] });
        }
    }
    let bio = eig.biorthogonality_residual();
    if bio > 1e-8 {
        return Err(Error::DefectiveMatrix {
            cluster: eig.eigenvalues.iter().map(|z| z.re).collect(),
        });
    }
    Ok(())
}

/// Real symmetric stationary covariance matrix with `Sigma . 1 = 0`.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    pub entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn projected_variance(&self, m: &DVector<f64>) -> f64 {
        (m.transpose() * &self.entries * m)[(0, 0)]
    }
}

/// Stationary covariance via the spectral double sum over nonzero modes:
/// `Sigma = sum_k sigma_k^2 sum_{i,j>=2} (-1/(li+lj)) (v_i w_i^T) z_k z_k^T (w_j v_j^T)`.
pub fn stationary_covariance_spectral(eig: &EigenSystem, b: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let n = eig.dim();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch { context: "B rows must match L".into() });
    }
    let modes = n - 1;
    // c[i][k] = w_{i+1}^T b_k
    let mut c = CMatrix::zeros(modes, b.ncols());
    for i in 0..modes {
        let w = eig.left.column(i + 1);
        for k in 0..b.ncols() {
            let mut s = Complex::new(0.0, 0.0);
            for r in 0..n {
                s += w[r] * Complex::new(b[(r, k)], 0.0);
            }
            c[(i, k)] = s;
        }
    }
    // h[i][j] = -(sum_k c_ik c_jk) / (li + lj)
    let mut h = CMatrix::zeros(modes, modes);
    for i in 0..modes {
        for j in 0..modes {
            let li = eig.eigenvalues[i + 1];
            let lj = eig.eigenvalues[j + 1];
            let denom = li + lj;
            if denom.norm() <= 1e-12 * eig.scale.max(1.0) {
                return Err(Error::SpectralSingularity);
            }
            let mut num = Complex::new(0.0, 0.0);
            for k in 0..b.ncols() {
                num += c[(i, k)] * c[(j, k)];
            }
            h[(i, j)] = -num / denom;
        }
    }
    // Sigma = V' H V'^T over nonzero modes.
    let vprime = eig.right.columns(1, modes).into_owned();
    let sigma_c = &vprime * h * vprime.transpose();
    realify(&sigma_c).map(|entries| CovarianceMatrix { entries })
}

fn realify(m: &CMatrix) -> Result<DMatrix<f64>> {
    let max_mod = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let max_im = m.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if max_im > 1e-10 * max_mod.max(1.0) {
        return Err(Error::SpectralSingularity);
    }
    Ok(m.map(|z| z.re))
}

/// Orthonormal basis of the subspace orthogonal to the all-ones vector
/// (Helmert construction), as an n x (n-1) matrix.
pub fn ones_complement_basis(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n - 1);
    for c in 0..(n - 1) {
        let k = (c + 1) as f64;
        let norm = (k * (k + 1.0)).sqrt();
        for r in 0..(c + 1) {
            p[(r, c)] = 1.0 / norm;
        }
        p[(c + 1, c)] = -k / norm;
    }
    p
}

/// Independent covariance oracle: solves `L Sigma + Sigma L^T + B B^T = 0`
/// restricted to the complement of the neutral mode, then embeds back.
pub fn lyapunov_oracle(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let n = l.nrows();
    if n != l.ncols() || b.nrows() != n {
        return Err(Error::DimensionMismatch { context: "L square, B rows must match".into() });
    }
    if n < 2 {
        return Err(Error::DimensionMismatch { context: "need at least 2 states".into() });
    }
    let p = ones_complement_basis(n);
    let ld = p.transpose() * l * &p; // (n-1) x (n-1)
    let bbt = b * b.transpose();
    let cd = p.transpose() * &bbt * &p;
    let d = n - 1;
    // (I (x) Ld + Ld (x) I) vec(X) = -vec(Cd), column-major vec.
    let mut big = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let row = i + j * d;
            for pcol in 0..d {
                big[(row, pcol + j * d)] += ld[(i, pcol)];
                big[(row, i + pcol * d)] += ld[(j, pcol)];
            }
        }
    }
    let mut rhs = DVector::zeros(d * d);
    for i in 0..d {
        for j in 0..d {
            rhs[i + j * d] = -cd[(i, j)];
        }
    }
    let sol = big.lu().solve(&rhs).ok_or(Error::SpectralSingularity)?;
    let mut xd = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            xd[(i, j)] = sol[i + j * d];
        }
    }
    let sigma = &p * xd * p.transpose();
    // Solutions are symmetric up to solver rounding.
    let entries = (&sigma + sigma.transpose()) * 0.5;
    Ok(CovarianceMatrix { entries })
}
