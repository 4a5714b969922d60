//! Independent reference implementations shared by the integration tests
//! and the acceptance harness. Nothing here calls into the numerical code
//! it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use servqual::efa::{self, PruneOptions};
use servqual::numeric::correlation;
use servqual::sem::{MeasurementModel, ParamKind};
use servqual::synth::{self, SemGenerator, SemTruth, TrueCorrelation, TrueLatent, TrueLoading};

/// Cyclic Jacobi eigensolver for a small symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y][y].total_cmp(&m[x][x]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Population correlation matrix of an orthogonal simple-structure model:
/// `groups[g]` items each loading `loading` on factor `g`.
pub fn simple_structure_r(groups: &[usize], loading: f64) -> Vec<Vec<f64>> {
    let factor: Vec<usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, &k)| std::iter::repeat_n(g, k))
        .collect();
    let p = factor.len();
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if factor[i] == factor[j] {
                        loading * loading
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Orthogonal simple-structure truth over items `1..=factors*per`.
pub fn planted_truth(factors: usize, per: usize, loading: f64) -> SemTruth {
    SemTruth {
        n_items: factors * per,
        latents: (0..factors)
            .map(|f| TrueLatent {
                name: format!("F{}", f + 1),
                loadings: (0..per)
                    .map(|k| TrueLoading {
                        item: f * per + k + 1,
                        loading,
                    })
                    .collect(),
            })
            .collect(),
        correlations: Vec::new(),
        paths: Vec::new(),
        extra_items: Vec::new(),
        delay: None,
    }
}

/// Runs extraction, rotation and pruning on a Likert sample drawn from a
/// planted structure and reports whether the factor count and the
/// item-to-factor map (up to relabeling) come back intact.
pub fn efa_recovers(factors: usize, per: usize, loading: f64, n: usize, seed: u64) -> bool {
    let truth = planted_truth(factors, per, loading);
    let survey = synth::gen_sem_survey(&SemGenerator {
        n,
        seed,
        likert_thresholds: synth::DEFAULT_THRESHOLDS,
        true_parameters: truth,
    })
    .expect("planted structure is valid");
    let items: Vec<usize> = (1..=factors * per).collect();
    let data = survey.dataset.matrix(&items).data;
    let r = correlation(&data).expect("non-degenerate sample");
    let Ok(unrotated) = efa::extract_pca(&r, &items) else {
        return false;
    };
    if unrotated.n_factors() != factors {
        return false;
    }
    let rotated = efa::rotate_varimax(&unrotated);
    let assignment = efa::prune(&rotated, &PruneOptions::default(), None);
    if assignment.retained.len() != items.len() {
        return false;
    }
    let mut planted_to_found: BTreeMap<usize, usize> = BTreeMap::new();
    for (&item, &found) in &assignment.factor_of {
        let planted = (item - 1) / per;
        if *planted_to_found.entry(planted).or_insert(found) != found {
            return false;
        }
    }
    let mut targets: Vec<usize> = planted_to_found.values().copied().collect();
    targets.sort_unstable();
    targets.dedup();
    targets.len() == factors
}

/// The six correlated factors of the reference structure with their 29
/// indicators, without the overall-quality latent.
pub fn six_factor_truth() -> SemTruth {
    let full = synth::reference_truth();
    let keep: Vec<String> = synth::REFERENCE_FACTORS.iter().map(|s| s.to_string()).collect();
    SemTruth {
        n_items: full.n_items,
        latents: full.latents.into_iter().filter(|l| keep.contains(&l.name)).collect(),
        correlations: full
            .correlations
            .into_iter()
            .filter(|c: &TrueCorrelation| keep.contains(&c.a) && keep.contains(&c.b))
            .collect(),
        paths: Vec::new(),
        extra_items: Vec::new(),
        delay: None,
    }
}

/// Implied covariance assembled element by element from the named free
/// parameters: fixed marker loadings are 1, latent variances default to 1,
/// `(I - B)^{-1}` is summed as a finite power series (the structure is
/// acyclic, so `B` is nilpotent).
pub fn brute_force_sigma(model: &MeasurementModel, kinds: &[ParamKind], values: &[f64]) -> Vec<Vec<f64>> {
    let names = model.latent_names();
    let m = names.len();
    let observed = model.observed();
    let p = observed.len();
    let idx = |name: &str| names.iter().position(|n| n == name).expect("latent");
    let mut loading = vec![vec![0.0; m]; p];
    let mut row = 0;
    for j in 0..m {
        for _ in model.indicators(j) {
            loading[row][j] = 1.0;
            row += 1;
        }
    }
    let mut paths = vec![vec![0.0; m]; m];
    let mut psi = vec![vec![0.0; m]; m];
    for (j, row) in psi.iter_mut().enumerate() {
        row[j] = 1.0;
    }
    let mut resid = vec![0.0; p];
    for (kind, &v) in kinds.iter().zip(values) {
        match kind {
            ParamKind::Loading { latent, item } => {
                let r = observed.iter().position(|x| x == item).expect("observed item");
                loading[r][idx(latent)] = v;
            }
            ParamKind::Path { from, to } => paths[idx(to)][idx(from)] = v,
            ParamKind::Variance { latent } => {
                let j = idx(latent);
                psi[j][j] = v;
            }
            ParamKind::Covariance { a, b } => {
                let (a, b) = (idx(a), idx(b));
                psi[a][b] = v;
                psi[b][a] = v;
            }
            ParamKind::Residual { item } => {
                let r = observed.iter().position(|x| x == item).expect("observed item");
                resid[r] = v;
            }
        }
    }
    let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let (r, k, c) = (x.len(), y.len(), y[0].len());
        (0..r)
            .map(|i| (0..c).map(|j| (0..k).map(|l| x[i][l] * y[l][j]).sum()).collect())
            .collect()
    };
    let mut total: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut power = total.clone();
    for _ in 0..m {
        power = mul(&power, &paths);
        for i in 0..m {
            for j in 0..m {
                total[i][j] += power[i][j];
            }
        }
    }
    let mut cov = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            let mut s = 0.0;
            for c in 0..m {
                for d in 0..m {
                    s += total[a][c] * psi[c][d] * total[b][d];
                }
            }
            cov[a][b] = s;
        }
    }
    let mut sigma = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for a in 0..m {
                for b in 0..m {
                    s += loading[i][a] * cov[a][b] * loading[j][b];
                }
            }
            sigma[i][j] = s + if i == j { resid[i] } else { 0.0 };
        }
    }
    sigma
}

/// Central-difference gradient with a relative step.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (up[k] - dn[k])
        })
        .collect()
}

/// Max-norm relative discrepancy between two gradients.
pub fn gradient_discrepancy(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = analytic.iter().map(|a| a.abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Standard normal CDF from the complementary error function in statrs,
/// deliberately a different code path from the quantile used by the
/// library.
pub fn phi(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Normal quantile by bisection on [`phi`].
pub fn phi_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ordered-probit log-likelihood written directly from the category
/// probabilities.
pub fn probit_loglik(x: &[f64], y: &[usize], beta: f64, kappa: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let eta = beta * xi;
        let upper = if yi > kappa.len() {
            1.0
        } else {
            phi(kappa[yi - 1] - eta)
        };
        let lower = if yi == 1 { 0.0 } else { phi(kappa[yi - 2] - eta) };
        let prob = upper - lower;
        if !(prob > 0.0) {
            return f64::NEG_INFINITY;
        }
        ll += prob.ln();
    }
    ll
}

/// Maximizes [`probit_loglik`] (one predictor, three categories) over a
/// lattice: a global sweep at step 0.1, then finer sweeps around the
/// incumbent at steps 0.01 and 1e-3. A fine sweep is repeated while the
/// incumbent lands on its edge.
pub fn probit_grid_search(x: &[f64], y: &[usize]) -> (f64, [f64; 2]) {
    let eval = |b: f64, k1: f64, k2: f64| {
        if k2 <= k1 {
            f64::NEG_INFINITY
        } else {
            probit_loglik(x, y, b, &[k1, k2])
        }
    };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
    let coarse = |i: i32| f64::from(i) * 0.1;
    for bi in -50..=50 {
        for k1 in -40..=40 {
            for k2 in k1 + 1..=40 {
                let (b, a, c) = (coarse(bi), coarse(k1), coarse(k2));
                let v = eval(b, a, c);
                if v > best.0 {
                    best = (v, b, a, c);
                }
            }
        }
    }
    const REACH: i32 = 30;
    for step in [0.01, 1e-3] {
        loop {
            let (_, b0, a0, c0) = best;
            let mut moved_to_edge = false;
            for bi in -REACH..=REACH {
                for ai in -REACH..=REACH {
                    for ci in -REACH..=REACH {
                        let b = b0 + f64::from(bi) * step;
                        let a = a0 + f64::from(ai) * step;
                        let c = c0 + f64::from(ci) * step;
                        let v = eval(b, a, c);
                        if v > best.0 {
                            best = (v, b, a, c);
                            moved_to_edge = [bi, ai, ci].iter().any(|k| k.abs() == REACH);
                        }
                    }
                }
            }
            if !moved_to_edge {
                break;
            }
        }
    }
    (best.1, [best.2, best.3])
}

/// Largest eigenvalue and matching eigenvector (sum 1) of a positive
/// 3x3 matrix: the largest real root of the characteristic cubic by
/// bisection, then the null vector of `A - λI` from a cross product.
pub fn perron_3x3(a: &[[f64; 3]; 3]) -> (f64, [f64; 3]) {
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let shifted = |lambda: f64| {
        let mut m = *a;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] -= lambda;
        }
        m
    };
    let poly = |lambda: f64| det3(&shifted(lambda));
    // det(A - λI) is negative for λ beyond the Perron root and the root is
    // at least the trace for a reciprocal matrix.
    let mut lo = a[0][0] + a[1][1] + a[2][2] - 1e-9;
    let mut hi = a.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max) + 1.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if poly(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let m = shifted(lambda);
    let candidates = [(0, 1), (0, 2), (1, 2)];
    let mut best = [0.0; 3];
    let mut best_norm = 0.0;
    for (r, s) in candidates {
        let (u, v) = (m[r], m[s]);
        let c = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let norm = c.iter().map(|x| x * x).sum::<f64>();
        if norm > best_norm {
            best_norm = norm;
            best = c;
        }
    }
    let total: f64 = best.iter().sum();
    (lambda, best.map(|x| x / total))
}

/// A 20-observation, one-predictor, three-category sample with every
/// category present: the first seed from 1 upward that yields one.
pub fn small_probit_sample() -> (DMatrix<f64>, Vec<usize>) {
    (1u64..)
        .map(|seed| synth::gen_probit(&[1.0], &[-0.5, 0.5], 20, seed).unwrap())
        .find(|(_, y)| (1..=3).all(|c| y.contains(&c)))
        .unwrap()
}
