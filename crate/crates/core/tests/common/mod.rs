//! Reference minimizers and random instances shared by the integration
//! tests. These are written independently of the library solvers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use uqpe::matrix::ColMatrix;

pub mod suites;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Random logistic instance: intercept column plus `p - 1` Gaussian
/// regressors, outcomes drawn from a logit with moderate coefficients.
pub fn logistic_instance(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let beta: Vec<f64> = (0..p)
        .map(|j| {
            if j == 0 {
                0.3
            } else {
                0.8 * gauss(&mut r) / (j as f64).sqrt()
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { gauss(&mut r) }).collect();
        let z: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(if r.random::<f64>() < sigmoid(z) { 1.0 } else { 0.0 });
        rows.push(row);
    }
    (rows, y)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> ColMatrix {
    ColMatrix::from_rows(rows)
}

fn linear(rows: &[Vec<f64>], beta: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect()
}

/// `mean(log(1 + e^z) - y z) + lambda / N sum w_j |beta_j|`
pub fn logistic_objective(rows: &[Vec<f64>], y: &[f64], beta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let n = y.len() as f64;
    let z = linear(rows, beta);
    let nll: f64 = z.iter().zip(y).map(|(&zi, &yi)| log1pexp(zi) - yi * zi).sum::<f64>() / n;
    nll + lambda / n * beta.iter().zip(w).map(|(b, wj)| wj * b.abs()).sum::<f64>()
}

fn logistic_gradient(rows: &[Vec<f64>], y: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let z = linear(rows, beta);
    let mut g = vec![0.0; beta.len()];
    for (row, (&zi, &yi)) in rows.iter().zip(z.iter().zip(y)) {
        let r = sigmoid(zi) - yi;
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj / n;
        }
    }
    g
}

/// Gauss-Jordan solve with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                let pivot = a[c].clone();
                for (v, p) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                    *v -= f * p;
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..k).map(|i| b[i] / a[i][i]).collect()
}

/// Unpenalized logistic MLE by plain Newton-Raphson.
pub fn newton_logistic(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let n = y.len() as f64;
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let g = logistic_gradient(rows, y, &beta);
        let z = linear(rows, &beta);
        let mut h = vec![vec![0.0; p]; p];
        for (row, &zi) in rows.iter().zip(&z) {
            let w = sigmoid(zi) * (1.0 - sigmoid(zi)) / n;
            for a in 0..p {
                for b in 0..p {
                    h[a][b] += w * row[a] * row[b];
                }
            }
        }
        let step = solve(h, g);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b -= s;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    beta
}

/// Minimizes `f(u - v) + c'(u + v)` over `u, v >= 0` by accelerated
/// projected gradient with function-value restarts. `f` and `grad` act on
/// `beta = u - v`; `lip` bounds the Lipschitz constant of `grad`.
pub fn split_projected_gradient(
    p: usize,
    penalty: &[f64],
    lip: f64,
    iters: usize,
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let total = |u: &[f64], v: &[f64]| {
        let beta: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        f(&beta)
            + penalty
                .iter()
                .zip(u.iter().zip(v))
                .map(|(c, (a, b))| c * (a + b))
                .sum::<f64>()
    };
    let step = 1.0 / (2.0 * lip);
    let (mut u, mut v) = (vec![0.0; p], vec![0.0; p]);
    let (mut yu, mut yv) = (u.clone(), v.clone());
    let mut t = 1.0f64;
    let mut last = total(&u, &v);
    let mut checkpoint = last;
    for it in 0..iters {
        if it % 500 == 499 {
            if checkpoint - last < 1e-16 {
                break;
            }
            checkpoint = last;
        }
        let beta: Vec<f64> = yu.iter().zip(&yv).map(|(a, b)| a - b).collect();
        let g = grad(&beta);
        let nu: Vec<f64> = (0..p).map(|j| (yu[j] - step * (g[j] + penalty[j])).max(0.0)).collect();
        let nv: Vec<f64> = (0..p).map(|j| (yv[j] - step * (-g[j] + penalty[j])).max(0.0)).collect();
        let val = total(&nu, &nv);
        if val > last {
            // restart momentum
            t = 1.0;
            yu = u.clone();
            yv = v.clone();
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / tn;
        yu = (0..p).map(|j| nu[j] + mom * (nu[j] - u[j])).collect();
        yv = (0..p).map(|j| nv[j] + mom * (nv[j] - v[j])).collect();
        u = nu;
        v = nv;
        t = tn;
        last = val;
    }
    u.iter().zip(&v).map(|(a, b)| a - b).collect()
}

/// Reference weighted-lasso logistic minimizer.
pub fn reference_l1_logistic(rows: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let n = y.len() as f64;
    let frob: f64 = rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / n;
    let penalty: Vec<f64> = w.iter().map(|wj| lambda * wj / n).collect();
    split_projected_gradient(
        p,
        &penalty,
        0.25 * frob,
        200_000,
        |b| logistic_objective(rows, y, b, 0.0, &vec![0.0; p]),
        |b| logistic_gradient(rows, y, b),
    )
}

/// Random Riesz moment problem `(G, M)` from a Gaussian design.
pub fn riesz_instance(seed: u64, n: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| gauss(&mut r)).collect()).collect();
    let mut g = vec![0.0; p * p];
    for row in &rows {
        for a in 0..p {
            for b in 0..p {
                g[a * p + b] += row[a] * row[b] / n as f64;
            }
        }
    }
    let m: Vec<f64> = (0..p).map(|j| 0.8 * gauss(&mut r) / (1.0 + j as f64)).collect();
    (g, m)
}

pub fn riesz_objective_ref(g: &[f64], m: &[f64], rho: &[f64], lambda: f64) -> f64 {
    let p = m.len();
    let mut quad = 0.0;
    for a in 0..p {
        for b in 0..p {
            quad += rho[a] * g[a * p + b] * rho[b];
        }
    }
    -2.0 * m.iter().zip(rho).map(|(a, b)| a * b).sum::<f64>() + quad + lambda * rho.iter().map(|v| v.abs()).sum::<f64>()
}

/// Reference minimizer of `-2M'rho + rho'G rho + lambda |rho|_1`.
pub fn reference_riesz(g: &[f64], m: &[f64], lambda: f64) -> Vec<f64> {
    let p = m.len();
    let frob = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    split_projected_gradient(
        p,
        &vec![lambda; p],
        2.0 * frob,
        200_000,
        |rho| riesz_objective_ref(g, m, rho, 0.0),
        |rho| {
            (0..p)
                .map(|a| -2.0 * m[a] + 2.0 * (0..p).map(|b| g[a * p + b] * rho[b]).sum::<f64>())
                .collect()
        },
    )
}
