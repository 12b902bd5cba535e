use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// `None` → 1 / (d · var(X)).
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Training rows kept (stratified, seeded) before building the kernel matrix.
    pub max_train_rows: usize,
    pub platt_folds: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 1_000_000,
            max_train_rows: 4000,
            platt_folds: 3,
        }
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dense symmetric RBF Gram matrix.
pub struct KernelMatrix {
    n: usize,
    data: Vec<f32>,
}

impl KernelMatrix {
    pub fn new(x: &[Vec<f64>], gamma: f64) -> Self {
        let n = x.len();
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| rbf(&x[i], &x[j], gamma) as f32))
            .collect();
        Self { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j] as f64
    }
}

/// Dual solution of one binary subproblem; the decision value is
/// `Σ αᵢ yᵢ K(xᵢ, x) − rho`.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Soft-margin dual by SMO with second-order working-set selection.
/// `rows` indexes into the kernel matrix; `y` is ±1 and `c` the per-row bound.
pub fn solve_binary(
    k: &KernelMatrix,
    rows: &[usize],
    y: &[f64],
    c: &[f64],
    tol: f64,
    max_iter: usize,
) -> BinarySolution {
    let n = rows.len();
    if y.iter().all(|&v| v == y[0]) {
        return BinarySolution {
            alpha: vec![0.0; n],
            rho: -y.first().copied().unwrap_or(1.0),
            iterations: 0,
            converged: true,
        };
    }
    const TAU: f64 = 1e-12;
    let kk = |a: usize, b: usize| k.get(rows[a], rows[b]);
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let up =
        |t: usize, alpha: &[f64]| (y[t] > 0.0 && alpha[t] < c[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
    let low =
        |t: usize, alpha: &[f64]| (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c[t]);
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(t, &alpha) {
                let v = -y[t] * g[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t, &alpha) {
                continue;
            }
            let ygt = y[t] * g[t];
            gmax2 = gmax2.max(ygt);
            if i == usize::MAX {
                continue;
            }
            let diff = gmax + ygt;
            if diff > 0.0 {
                let mut quad = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -diff * diff / quad;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || i == usize::MAX || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (ci, cj) = (c[i], c[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_ai, old_aj);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (dai, daj) = (ai - old_ai, aj - old_aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * kk(t, i) * dai + y[j] * kk(t, j) * daj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        let at_upper = alpha[t] >= c[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    BinarySolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

fn decision_on_rows(
    k: &KernelMatrix,
    train: &[usize],
    y: &[f64],
    sol: &BinarySolution,
    targets: &[usize],
) -> Vec<f64> {
    targets
        .iter()
        .map(|&t| {
            let s: f64 = train
                .iter()
                .zip(y)
                .zip(&sol.alpha)
                .filter(|(_, &a)| a > 0.0)
                .map(|((&r, &yi), &a)| a * yi * k.get(r, t))
                .sum();
            s - sol.rho
        })
        .collect()
}

/// Logistic calibration `p = 1 / (1 + exp(A·f + B))` with smoothed targets,
/// fitted by Newton's method with backtracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn fit(dec: &[f64], positive: &[bool]) -> Self {
        let prior1 = positive.iter().filter(|&&p| p).count() as f64;
        let prior0 = positive.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            dec.iter()
                .zip(&t)
                .map(|(&d, &ti)| {
                    let z = d * a + b;
                    if z >= 0.0 {
                        ti * z + (-z).exp().ln_1p()
                    } else {
                        (ti - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&d, &ti) in dec.iter().zip(&t) {
                let z = d * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += d * d * d2;
                h22 += d2;
                h21 += d * d2;
                let d1 = ti - p;
                g1 += d * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        Self { a, b }
    }

    pub fn prob(&self, f: f64) -> f64 {
        let z = f * self.a + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// One-vs-rest RBF SVM with per-class Platt calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub gamma: f64,
    pub support: Vec<Vec<f64>>,
    /// `coef[s][k] = αₖ,ₛ · yₖ,ₛ` for support vector `s` and class `k`.
    pub coef: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub platt: Vec<Platt>,
    pub iterations: Vec<usize>,
}

/// Stratified, seeded row subsample keeping every class.
pub fn stratified_cap(y: &[usize], n_classes: usize, cap: usize, seed: u64) -> Vec<usize> {
    if y.len() <= cap {
        return (0..y.len()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(cap);
    for k in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == k).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let share = ((idx.len() * cap) as f64 / y.len() as f64).round().max(1.0) as usize;
        keep.extend_from_slice(&idx[..share.min(idx.len())]);
    }
    keep.sort_unstable();
    keep
}

pub fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(1, |r| r.len()).max(1);
    let n = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

impl Svm {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        params: &SvmParams,
        seed: u64,
    ) -> Self {
        let keep = stratified_cap(y, n_classes, params.max_train_rows, seed);
        let xs: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
        let cs: Vec<f64> = keep.iter().map(|&i| params.c * weights[i]).collect();
        let gamma = params.gamma.unwrap_or_else(|| default_gamma(&xs));
        let kernel = KernelMatrix::new(&xs, gamma);
        let n = xs.len();
        let all: Vec<usize> = (0..n).collect();

        let per_class: Vec<(BinarySolution, Platt)> = (0..n_classes)
            .into_par_iter()
            .map(|k| {
                let yb: Vec<f64> = ys
                    .iter()
                    .map(|&l| if l == k { 1.0 } else { -1.0 })
                    .collect();
                let sol = solve_binary(&kernel, &all, &yb, &cs, params.tol, params.max_iter);

                let mut order = all.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                order.shuffle(&mut rng);
                let folds = params.platt_folds.max(2);
                let mut dec = vec![0.0; n];
                for f in 0..folds {
                    let test: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
                    let mut train: Vec<usize> = order
                        .iter()
                        .enumerate()
                        .filter(|(p, _)| p % folds != f)
                        .map(|(_, &i)| i)
                        .collect();
                    train.sort_unstable();
                    let ty: Vec<f64> = train.iter().map(|&i| yb[i]).collect();
                    let tc: Vec<f64> = train.iter().map(|&i| cs[i]).collect();
                    let s = solve_binary(&kernel, &train, &ty, &tc, params.tol, params.max_iter);
                    for (&t, v) in test
                        .iter()
                        .zip(decision_on_rows(&kernel, &train, &ty, &s, &test))
                    {
                        dec[t] = v;
                    }
                }
                let positive: Vec<bool> = yb.iter().map(|&v| v > 0.0).collect();
                (sol, Platt::fit(&dec, &positive))
            })
            .collect();

        let sv: Vec<usize> = (0..n)
            .filter(|&i| per_class.iter().any(|(s, _)| s.alpha[i] > 0.0))
            .collect();
        let coef = sv
            .iter()
            .map(|&i| {
                per_class
                    .iter()
                    .enumerate()
                    .map(|(k, (s, _))| s.alpha[i] * if ys[i] == k { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        Self {
            gamma,
            support: sv.iter().map(|&i| xs[i].clone()).collect(),
            coef,
            rho: per_class.iter().map(|(s, _)| s.rho).collect(),
            platt: per_class.iter().map(|(_, p)| *p).collect(),
            iterations: per_class.iter().map(|(s, _)| s.iterations).collect(),
        }
    }

    pub fn decision_row(&self, x: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = self.rho.iter().map(|r| -r).collect();
        for (s, c) in self.support.iter().zip(&self.coef) {
            let kv = rbf(s, x, self.gamma);
            for (fk, ck) in f.iter_mut().zip(c) {
                *fk += ck * kv;
            }
        }
        f
    }

    /// Per-class Platt probabilities renormalized to sum to 1.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .decision_row(x)
            .iter()
            .zip(&self.platt)
            .map(|(&f, pl)| pl.prob(f))
            .collect();
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        } else {
            let k = p.len() as f64;
            p.iter_mut().for_each(|v| *v = 1.0 / k);
        }
        p
    }
}
