//! Independent oracle implementations used by the integration and
//! acceptance suites. Everything here deliberately avoids the library's
//! own linear-algebra routines: inversion is Gauss-Jordan, eigenvectors
//! come from power iteration, canonical correlations from a QR + one-sided
//! Jacobi SVD route.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

pub fn gauss(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns an
/// orthonormal basis of the column space.
pub fn mgs_orthonormal(a: &ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = a.dim();
    let mut q = Array2::<f64>::zeros((m, n));
    let mut kept = 0;
    for j in 0..n {
        let mut v = a.column(j).to_owned();
        for _ in 0..2 {
            for i in 0..kept {
                let qi = q.column(i);
                let r = qi.dot(&v);
                v = &v - &(r * &qi.to_owned());
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            q.column_mut(kept).assign(&(v / norm));
            kept += 1;
        }
    }
    q.slice(ndarray::s![.., ..kept]).to_owned()
}

/// Largest singular value by one-sided Jacobi column orthogonalization.
pub fn max_singular_value(a: &ArrayView2<f64>) -> f64 {
    let work = if a.nrows() >= a.ncols() {
        a.to_owned()
    } else {
        a.t().to_owned()
    };
    let mut u = work;
    let n = u.ncols();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let ap = u.column(p).dot(&u.column(p));
                let aq = u.column(q).dot(&u.column(q));
                let apq = u.column(p).dot(&u.column(q));
                if apq.abs() <= 1e-15 * (ap * aq).sqrt().max(1e-300) {
                    continue;
                }
                rotated = true;
                let tau = (aq - ap) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let uip = u[[i, p]];
                    let uiq = u[[i, q]];
                    u[[i, p]] = c * uip - s * uiq;
                    u[[i, q]] = s * uip + c * uiq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n)
        .map(|j| u.column(j).dot(&u.column(j)).sqrt())
        .fold(0.0f64, f64::max)
}

/// CCA oracle: orthonormalize both data matrices (samples x variables),
/// then take the largest singular value of the basis cross-product, which
/// is the cosine of the first principal angle.
pub fn cca_first_correlation(x_samples: &ArrayView2<f64>, y_samples: &ArrayView2<f64>) -> f64 {
    let qx = mgs_orthonormal(x_samples);
    let qy = mgs_orthonormal(y_samples);
    let cross = qx.t().dot(&qy);
    max_singular_value(&cross.view()).clamp(0.0, 1.0)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gj_inverse(m: &ArrayView2<f64>) -> Array2<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut aug = Array2::<f64>::zeros((n, 2 * n));
    aug.slice_mut(ndarray::s![.., ..n]).assign(m);
    for i in 0..n {
        aug[[i, n + i]] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                aug[[i, col]]
                    .abs()
                    .partial_cmp(&aug[[j, col]].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for k in 0..2 * n {
                aug.swap([col, k], [pivot, k]);
            }
        }
        let p = aug[[col, col]];
        assert!(p.abs() > 1e-300, "singular matrix in oracle inverse");
        for k in 0..2 * n {
            aug[[col, k]] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[[r, col]];
                if f != 0.0 {
                    for k in 0..2 * n {
                        aug[[r, k]] -= f * aug[[col, k]];
                    }
                }
            }
        }
    }
    aug.slice(ndarray::s![.., n..]).to_owned()
}

/// Principal eigenvector of `Q^-1 S` by plain power iteration.
pub fn power_iteration_gen_eig(s: &ArrayView2<f64>, q: &ArrayView2<f64>) -> Array1<f64> {
    let n = s.nrows();
    let ridge = 1e-9 * q.diag().sum() / n as f64;
    let mut q_r = q.to_owned();
    for i in 0..n {
        q_r[[i, i]] += ridge;
    }
    let m = gj_inverse(&q_r.view()).dot(s);
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    for _ in 0..2000 {
        let next = m.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm < 1e-300 {
            break;
        }
        v = next / norm;
    }
    v
}

/// Plain Pearson correlation, written separately from the library's.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Second TRCA implementation: same covariance definitions, but solved by
/// Gauss-Jordan inversion plus power iteration instead of Cholesky
/// whitening plus Jacobi.
pub struct ReferenceTrca {
    pub filters: Vec<Array1<f64>>,
    pub templates: Vec<Array2<f64>>,
}

pub fn reference_trca_fit(grouped: &[Vec<ArrayView2<f64>>]) -> ReferenceTrca {
    let mut filters = Vec::new();
    let mut templates = Vec::new();
    for trials in grouped {
        let (n_ch, n_t) = trials[0].dim();
        let mut mean = Array2::<f64>::zeros((n_ch, n_t));
        let mut denom = Array2::<f64>::zeros((n_ch, n_ch));
        for x in trials {
            mean = &mean + x;
            denom = &denom + &x.dot(&x.t());
        }
        mean /= trials.len() as f64;
        let numer = mean.dot(&mean.t());
        filters.push(power_iteration_gen_eig(&numer.view(), &denom.view()));
        templates.push(mean);
    }
    ReferenceTrca { filters, templates }
}

pub fn reference_trca_classify(model: &ReferenceTrca, test: &ArrayView2<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (s, (w, template)) in model.filters.iter().zip(model.templates.iter()).enumerate() {
        let proj_test: Vec<f64> = w.dot(test).to_vec();
        let proj_tmpl: Vec<f64> = w.dot(template).to_vec();
        let corr = pearson_oracle(&proj_test, &proj_tmpl);
        if corr > best_val {
            best_val = corr;
            best = s;
        }
    }
    best
}

/// Multitask ARD fitted by expectation-maximization updates, the slower
/// but monotone route to the same evidence optimum as the fixed-point
/// iteration under test.
pub struct EmArd {
    pub a: Array1<f64>,
    pub a0: f64,
    pub mu: Array2<f64>,
    pub pruned: Vec<bool>,
}

pub fn em_ard_fit(
    phi: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
    max_iters: usize,
    tol: f64,
    prune_threshold: f64,
) -> EmArd {
    let p = phi.ncols();
    let n_t = phi.nrows();
    let n_tasks = targets.ncols();
    let phi_t_phi = phi.t().dot(phi);
    let phi_t_y = phi.t().dot(targets);
    let mean_square = targets.iter().map(|v| v * v).sum::<f64>() / (n_t * n_tasks) as f64;
    let mut a = Array1::<f64>::from_elem(p, 1.0);
    let mut a0 = if mean_square > 1e-300 {
        10.0 / mean_square
    } else {
        1.0
    };
    let mut pruned = vec![false; p];
    let mut mu_full = Array2::<f64>::zeros((p, n_tasks));

    for _iter in 0..max_iters {
        let active: Vec<usize> = (0..p).filter(|&j| !pruned[j]).collect();
        if active.is_empty() {
            mu_full.fill(0.0);
            break;
        }
        let mut prec = phi_t_phi
            .select(ndarray::Axis(0), &active)
            .select(ndarray::Axis(1), &active)
            * a0;
        for (k, &j) in active.iter().enumerate() {
            prec[[k, k]] += a[j];
        }
        let sigma = gj_inverse(&prec.view());
        let mu = sigma.dot(&phi_t_y.select(ndarray::Axis(0), &active)) * a0;

        mu_full.fill(0.0);
        for (k, &j) in active.iter().enumerate() {
            mu_full.row_mut(j).assign(&mu.row(k));
        }
        let fitted = phi.select(ndarray::Axis(1), &active).dot(&mu);
        let resid_sq = targets
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| (y - f) * (y - f))
            .sum::<f64>();

        let mut max_change = 0.0f64;
        for (k, &j) in active.iter().enumerate() {
            let second_moment = mu.row(k).dot(&mu.row(k)) + n_tasks as f64 * sigma[[k, k]];
            let new_a = if second_moment > 1e-300 {
                n_tasks as f64 / second_moment
            } else {
                f64::INFINITY
            };
            if !new_a.is_finite() || new_a <= 0.0 || new_a > prune_threshold {
                pruned[j] = true;
                a[j] = prune_threshold;
            } else {
                max_change = max_change.max((new_a - a[j]).abs() / a[j]);
                a[j] = new_a;
            }
        }
        // E[||y - Phi w||^2] adds the posterior smear tr(Phi Sigma Phi^T)
        // per task.
        let smear = {
            let pp = phi_t_phi
                .select(ndarray::Axis(0), &active)
                .select(ndarray::Axis(1), &active);
            let prod = pp.dot(&sigma);
            (0..active.len()).map(|i| prod[[i, i]]).sum::<f64>()
        };
        let denom = resid_sq + n_tasks as f64 * smear;
        let new_a0 = if denom > 1e-300 {
            ((n_tasks * n_t) as f64 / denom).min(1e12)
        } else {
            1e12
        };
        max_change = max_change.max((new_a0 - a0).abs() / a0);
        a0 = new_a0;
        if max_change < tol {
            break;
        }
    }
    EmArd {
        a,
        a0,
        mu: mu_full,
        pruned,
    }
}

/// Indices whose posterior-mean row norm exceeds `rel_tol` times the
/// largest row norm. At finite SNR the evidence optimum keeps noise-floor
/// components with negligible weight, so recovered support is judged by
/// magnitude rather than by prune flags.
pub fn significant_support(mu: &ArrayView2<f64>, rel_tol: f64) -> Vec<usize> {
    let norms: Vec<f64> = (0..mu.nrows())
        .map(|j| mu.row(j).dot(&mu.row(j)).sqrt())
        .collect();
    let max = norms.iter().cloned().fold(0.0f64, f64::max);
    norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > rel_tol * max)
        .map(|(j, _)| j)
        .collect()
}

/// Deterministic binomial three-sigma band around chance level.
pub fn within_three_sigma_of_chance(hits: usize, trials: usize, k: usize) -> bool {
    let p = 1.0 / k as f64;
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    let lo = mean - 3.0 * sd;
    let hi = mean + 3.0 * sd;
    (hits as f64) >= lo && (hits as f64) <= hi
}
