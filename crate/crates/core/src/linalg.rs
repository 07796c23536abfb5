//! Dense linear-algebra kernel: Cholesky, symmetric eigensolver,
//! symmetric-definite generalized eigensolver, correlation measures.
//!
//! Everything here is deterministic: identical inputs produce bitwise
//! identical outputs, which keeps trained filters and benchmark reports
//! reproducible.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative ridge added to a generalized-eigenproblem denominator.
pub const DENOMINATOR_RIDGE: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 64;

fn check_finite(m: &ArrayView2<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(())
}

fn check_square(m: &ArrayView2<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn max_abs(m: &ArrayView2<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn check_symmetric(m: &ArrayView2<f64>, what: &str) -> Result<()> {
    let scale = max_abs(m);
    let tol = 1e-10 * scale.max(1.0e-300);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "{what} is not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &ArrayView2<f64>) -> Result<Array2<f64>> {
    check_square(m, "cholesky input")?;
    check_finite(m, "cholesky input")?;
    let n = m.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::Decomposition(format!(
                "matrix not positive definite: pivot {diag} at column {j}"
            )));
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut sum = m[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = sum / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`, column by column.
pub fn solve_lower(l: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut v = x[[i, col]];
            for k in 0..i {
                v -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = v / l[[i, i]];
        }
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in (0..n).rev() {
            let mut v = x[[i, col]];
            for k in (i + 1)..n {
                v -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = v / l[[i, i]];
        }
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(m)?;
    let eye = Array2::eye(m.nrows());
    let linv = solve_lower(&l.view(), &eye.view());
    // (L L^T)^-1 = L^-T L^-1; forming it as a Gram product keeps it symmetric.
    Ok(linv.t().dot(&linv))
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
///
/// Cyclic Jacobi rotations; each returned eigenvector column has its
/// largest-magnitude component positive.
pub fn sym_eig(m: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    check_square(m, "sym_eig input")?;
    check_finite(m, "sym_eig input")?;
    check_symmetric(m, "sym_eig input")?;
    let n = m.nrows();
    // Symmetrize so rounding noise in the input cannot bias rotations.
    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (m[[i, j]] + m[[j, i]]));
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = 1e-14 * frob.max(1e-300);

    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[j, j]]
            .partial_cmp(&a[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = v.select(Axis(1), &order);
    for mut col in eigenvectors.columns_mut() {
        fix_sign(&mut col);
    }
    Ok((eigenvalues, eigenvectors))
}

/// Largest-magnitude component made positive; first such index wins ties.
fn fix_sign(v: &mut ndarray::ArrayViewMut1<f64>) {
    let mut idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Numerator/denominator pair of a symmetric generalized eigenproblem.
#[derive(Debug, Clone)]
pub struct SymmetricPencil {
    numerator: Array2<f64>,
    denominator: Array2<f64>,
}

impl SymmetricPencil {
    pub fn new(numerator: Array2<f64>, denominator: Array2<f64>) -> Result<Self> {
        check_square(&numerator.view(), "pencil numerator")?;
        check_finite(&numerator.view(), "pencil numerator")?;
        check_symmetric(&numerator.view(), "pencil numerator")?;
        check_square(&denominator.view(), "pencil denominator")?;
        check_finite(&denominator.view(), "pencil denominator")?;
        check_symmetric(&denominator.view(), "pencil denominator")?;
        if numerator.nrows() != denominator.nrows() {
            return Err(Error::InvalidInput(format!(
                "pencil dimensions differ: {} vs {}",
                numerator.nrows(),
                denominator.nrows()
            )));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    pub fn numerator(&self) -> &Array2<f64> {
        &self.numerator
    }

    pub fn denominator(&self) -> &Array2<f64> {
        &self.denominator
    }

    pub fn dim(&self) -> usize {
        self.numerator.nrows()
    }
}

/// Principal eigenpair of `S w = lambda Q w` by Cholesky whitening.
///
/// The denominator is ridged to `Q + eps*tr(Q)/n*I`, factored as `L L^T`,
/// the standard problem `L^-1 S L^-T u = lambda u` is solved, and the
/// filter is mapped back as `w = L^-T u`, unit-normalized, with the
/// largest-magnitude component positive.
///
/// The 1e-8 relative residual holds for pencils whose numerator range
/// lies within the denominator range, which is true of every covariance
/// pencil built in this crate; a rank-deficient `Q` paired with numerator
/// mass in its null space would make the quotient unbounded and the
/// ridged solution is then only as accurate as the ridge allows.
pub fn gen_eig_max(pencil: &SymmetricPencil) -> Result<(f64, Array1<f64>)> {
    let n = pencil.dim();
    let q = pencil.denominator();
    let s = pencil.numerator();
    let trace = q.diag().sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "denominator trace {trace} is not positive"
        )));
    }
    let ridge = DENOMINATOR_RIDGE * trace / n as f64;
    let mut q_r = q.clone();
    for i in 0..n {
        q_r[[i, i]] += ridge;
    }
    let l = cholesky(&q_r.view())?;
    // Whitened matrix L^-1 S L^-T, symmetrized against rounding noise.
    let linv_s = solve_lower(&l.view(), &s.view());
    let white = solve_lower(&l.view(), &linv_s.t().to_owned().view());
    let white = 0.5 * (&white + &white.t());
    let (values, vectors) = sym_eig(&white.view())?;
    let lambda = values[0];
    let u = vectors.column(0).to_owned();
    let u2 = u.insert_axis(Axis(1));
    let mut w = solve_lower_transpose(&l.view(), &u2.view()).remove_axis(Axis(1));
    let norm = w.dot(&w).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Decomposition(
            "generalized eigenvector has zero norm".into(),
        ));
    }
    w.mapv_inplace(|x| x / norm);
    fix_sign(&mut w.view_mut());

    debug_assert!(
        {
            let sw = s.dot(&w);
            let qw = q_r.dot(&w);
            let resid = (&sw - &(lambda * &qw))
                .dot(&(&sw - &(lambda * &qw)).view())
                .sqrt();
            let scale = sw.dot(&sw).sqrt();
            resid <= 1e-8 * scale.max(1e-300)
        },
        "generalized eigenpair residual exceeds 1e-8 relative"
    );

    Ok((lambda, w))
}

/// Sample Pearson correlation of two equal-length vectors.
pub fn pearson(x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "pearson length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "pearson needs at least 2 samples".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in pearson input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of two matrices flattened row-major.
pub fn matrix_corr(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::InvalidInput(format!(
            "matrix_corr shape mismatch: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    let xf = Array1::from_iter(x.iter().copied());
    let yf = Array1::from_iter(y.iter().copied());
    pearson(&xf.view(), &yf.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_sym(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        0.5 * (&g + &g.t())
    }

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        g.t().dot(&g) + Array2::<f64>::eye(n)
    }

    #[test]
    fn cholesky_identity() {
        let eye = Array2::<f64>::eye(4);
        let l = cholesky(&eye.view()).unwrap();
        assert_eq!(l, Array2::<f64>::eye(4));
    }

    #[test]
    fn cholesky_hand_factorization() {
        let m = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&m.view()).unwrap();
        assert_abs_diff_eq!(l[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[0, 1]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 1]], 2.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn cholesky_reconstructs_gram_matrix() {
        let m = random_spd(6, 42);
        let l = cholesky(&m.view()).unwrap();
        let back = l.dot(&l.t());
        let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        let resid = (&back - &m).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(resid < 1e-10 * frob);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(cholesky(&m.view()), Err(Error::Decomposition(_))));
    }

    #[test]
    fn sym_eig_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eig(&m.view()).unwrap();
        assert_eq!(vals, array![3.0, 1.0]);
        assert_eq!(vecs, Array2::<f64>::eye(2));
    }

    #[test]
    fn sym_eig_off_diagonal_pair() {
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        let (vals, _) = sym_eig(&m.view()).unwrap();
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_eig_residual_and_orthonormality() {
        let m = random_sym(8, 7);
        let (vals, vecs) = sym_eig(&m.view()).unwrap();
        let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..8 {
            let v = vecs.column(i);
            let resid = &m.dot(&v) - &(vals[i] * &v);
            let rnorm = resid.dot(&resid).sqrt();
            assert!(rnorm <= 1e-9 * frob, "residual {rnorm} too large");
        }
        let gram = vecs.t().dot(&vecs);
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]], expect, epsilon = 1e-10);
            }
        }
        // Descending order.
        for i in 1..8 {
            assert!(vals[i - 1] >= vals[i]);
        }
    }

    #[test]
    fn sym_eig_rejects_non_finite() {
        let m = array![[f64::NAN, 0.0], [0.0, 1.0]];
        assert!(sym_eig(&m.view()).is_err());
    }

    #[test]
    fn gen_eig_diagonal_pencil() {
        let pencil = SymmetricPencil::new(array![[2.0, 0.0], [0.0, 1.0]], Array2::eye(2)).unwrap();
        let (lambda, w) = gen_eig_max(&pencil).unwrap();
        assert_abs_diff_eq!(lambda, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn gen_eig_identity_pencil() {
        let s = random_spd(4, 3);
        let pencil = SymmetricPencil::new(s.clone(), s).unwrap();
        let (lambda, _) = gen_eig_max(&pencil).unwrap();
        assert_abs_diff_eq!(lambda, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn gen_eig_residual_on_random_pencils() {
        for seed in 0..5u64 {
            let s = random_spd(5, 100 + seed);
            let q = random_spd(5, 200 + seed);
            let pencil = SymmetricPencil::new(s.clone(), q.clone()).unwrap();
            let (lambda, w) = gen_eig_max(&pencil).unwrap();
            let ridge = DENOMINATOR_RIDGE * q.diag().sum() / 5.0;
            let q_r = &q + &(ridge * Array2::<f64>::eye(5));
            let sw = s.dot(&w);
            let qw = q_r.dot(&w);
            let resid = (&sw - &(lambda * &qw)).mapv(|x| x * x).sum().sqrt();
            assert!(resid <= 1e-8 * sw.dot(&sw).sqrt());
        }
    }

    #[test]
    fn gen_eig_matches_sym_eig_for_identity_denominator() {
        let s = random_sym(6, 9);
        let pencil = SymmetricPencil::new(s.clone(), Array2::eye(6)).unwrap();
        let (lambda, w) = gen_eig_max(&pencil).unwrap();
        let (vals, vecs) = sym_eig(&s.view()).unwrap();
        assert_abs_diff_eq!(lambda, vals[0], epsilon = 1e-8);
        for i in 0..6 {
            assert_abs_diff_eq!(w[i], vecs[[i, 0]], epsilon = 1e-7);
        }
    }

    #[test]
    fn gen_eig_invariant_to_pencil_scaling() {
        let s = random_spd(4, 21);
        let q = random_spd(4, 22);
        let p1 = SymmetricPencil::new(s.clone(), q.clone()).unwrap();
        let p2 = SymmetricPencil::new(17.0 * &s, 17.0 * &q).unwrap();
        let (l1, w1) = gen_eig_max(&p1).unwrap();
        let (l2, w2) = gen_eig_max(&p2).unwrap();
        assert_abs_diff_eq!(l1, l2, epsilon = 1e-8 * l1.abs());
        for i in 0..4 {
            assert_abs_diff_eq!(w1[i], w2[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn gen_eig_zero_trace_denominator_errors() {
        let pencil = SymmetricPencil::new(Array2::eye(3), Array2::zeros((3, 3))).unwrap();
        assert!(matches!(
            gen_eig_max(&pencil),
            Err(Error::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn pearson_affine() {
        let x = array![1.0, 2.0, 3.0, 5.0];
        let y = x.mapv(|v| 2.0 * v + 3.0);
        assert_abs_diff_eq!(pearson(&x.view(), &y.view()).unwrap(), 1.0, epsilon = 1e-12);
        let z = x.mapv(|v| -v);
        assert_abs_diff_eq!(
            pearson(&x.view(), &z.view()).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_hand_value() {
        let x = array![1.0, 2.0, 3.0, 4.0];
        let y = array![1.0, 3.0, 2.0, 4.0];
        assert_abs_diff_eq!(pearson(&x.view(), &y.view()).unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn pearson_zero_variance_errors() {
        let x = array![1.0, 1.0, 1.0];
        let y = array![1.0, 2.0, 3.0];
        assert!(matches!(
            pearson(&x.view(), &y.view()),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn pearson_scale_property() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let x = Array1::from_shape_fn(32, |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(32, |_| rng.random::<f64>() - 0.5);
        let base = pearson(&x.view(), &y.view()).unwrap();
        let up = pearson(&x.mapv(|v| 3.0 * v + 1.0).view(), &y.view()).unwrap();
        let down = pearson(&x.mapv(|v| -2.0 * v + 0.5).view(), &y.view()).unwrap();
        assert_abs_diff_eq!(up, base, epsilon = 1e-12);
        assert_abs_diff_eq!(down, -base, epsilon = 1e-12);
    }

    #[test]
    fn matrix_corr_matches_flattened_pearson() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 7.0]];
        let y = array![[2.0, 1.0, 3.0], [5.0, 4.0, 6.0]];
        let xf = array![1.0, 2.0, 3.0, 4.0, 5.0, 7.0];
        let yf = array![2.0, 1.0, 3.0, 5.0, 4.0, 6.0];
        assert_eq!(
            matrix_corr(&x.view(), &y.view()).unwrap(),
            pearson(&xf.view(), &yf.view()).unwrap()
        );
    }

    #[test]
    fn matrix_corr_self_and_scale() {
        let x = random_sym(3, 77);
        assert_abs_diff_eq!(
            matrix_corr(&x.view(), &x.view()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let y = 3.0 * &x;
        assert_abs_diff_eq!(
            matrix_corr(&x.view(), &y.view()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn matrix_corr_shape_mismatch_errors() {
        let x = Array2::<f64>::zeros((2, 3));
        let y = Array2::<f64>::zeros((3, 2));
        assert!(matrix_corr(&x.view(), &y.view()).is_err());
    }
}
