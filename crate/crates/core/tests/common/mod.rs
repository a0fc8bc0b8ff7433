//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use dinids::dann::{DannModel, DomainLabel};
use dinids::dataset::FeatureMatrix;
use dinids::nn::{DenseNetwork, GradientSet};
use dinids::osvm;

pub const FD_STEP: f64 = 1e-5;

/// Norm-wise relative error between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `loss` with respect to every parameter of the
/// network picked out by `net`.
pub fn numeric_gradient<F, L>(model: &mut DannModel, net: F, loss: L) -> Vec<f64>
where
    F: Fn(&mut DannModel) -> &mut DenseNetwork,
    L: Fn(&DannModel) -> f64,
{
    let n = net(model).parameter_count();
    (0..n)
        .map(|i| {
            let orig = *net(model).parameter_mut(i);
            *net(model).parameter_mut(i) = orig + FD_STEP;
            let up = loss(model);
            *net(model).parameter_mut(i) = orig - FD_STEP;
            let down = loss(model);
            *net(model).parameter_mut(i) = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Same as [`numeric_gradient`] for a bare network.
pub fn numeric_gradient_net<L>(net: &mut DenseNetwork, loss: L) -> Vec<f64>
where
    L: Fn(&DenseNetwork) -> f64,
{
    (0..net.parameter_count())
        .map(|i| {
            let orig = *net.parameter_mut(i);
            *net.parameter_mut(i) = orig + FD_STEP;
            let up = loss(net);
            *net.parameter_mut(i) = orig - FD_STEP;
            let down = loss(net);
            *net.parameter_mut(i) = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn flat(g: &GradientSet) -> Vec<f64> {
    g.values().collect()
}

pub fn domains_alternating(n: usize) -> Vec<DomainLabel> {
    (0..n)
        .map(|i| if i % 2 == 0 { DomainLabel::Source } else { DomainLabel::Target })
        .collect()
}

/// Euclidean projection onto `{a : 0 <= a_i <= c, sum a = 1}` by bisection
/// on the shift `tau` in `a_i = clip(v_i - tau, 0, c)`.
pub fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let sum_at = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let lo0 = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let hi0 = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, c)).collect()
}

pub fn gram(x: &FeatureMatrix, gamma: f64) -> Vec<Vec<f64>> {
    let rows: Vec<&[f64]> = x.rows().collect();
    rows.iter()
        .map(|a| rows.iter().map(|b| osvm::rbf(a, b, gamma)).collect())
        .collect()
}

pub fn quad(q: &[Vec<f64>], a: &[f64]) -> f64 {
    0.5 * q
        .iter()
        .zip(a)
        .map(|(row, ai)| ai * row.iter().zip(a).map(|(k, aj)| k * aj).sum::<f64>())
        .sum::<f64>()
}

/// Minimum of `1/2 a'Qa` over the capped simplex by accelerated projected
/// gradient with adaptive restart. Returns `(objective, alphas)`.
pub fn qp_oracle(q: &[Vec<f64>], c: f64) -> (f64, Vec<f64>) {
    let n = q.len();
    // Gershgorin bound on the largest eigenvalue
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> { q.iter().map(|r| r.iter().zip(a).map(|(k, x)| k * x).sum()).collect() };
    let mut x = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = quad(q, &x);
    let mut checkpoint = best;
    for it in 1..=200_000 {
        if it % 500 == 0 {
            // stop once the objective has plateaued
            if checkpoint - best < 1e-16 {
                break;
            }
            checkpoint = best;
        }
        let g = grad(&y);
        let v: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let next = project_capped_simplex(&v, c);
        let f = quad(q, &next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f > best {
            // restart momentum
            y = x.clone();
            t = 1.0;
            continue;
        }
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        y = next
            .iter()
            .zip(&x)
            .map(|(n1, x0)| n1 + (t - 1.0) / t_next * (n1 - x0))
            .collect();
        x = next;
        t = t_next;
        best = f;
        if moved < 1e-15 {
            break;
        }
    }
    (best, x)
}

/// Hand-rolled confusion counts and F1 with the attack class positive.
pub fn naive_f1(y_true: &[u8], y_pred: &[u8]) -> (usize, usize, usize, usize, f64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for i in 0..y_true.len() {
        if y_true[i] == 1 && y_pred[i] == 1 {
            tp += 1;
        } else if y_true[i] == 0 && y_pred[i] == 1 {
            fp += 1;
        } else if y_true[i] == 0 {
            tn += 1;
        } else {
            fn_ += 1;
        }
    }
    // F1 = 2tp / (2tp + fp + fn); zero when nothing is positive anywhere
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    (tp, fp, tn, fn_, f1)
}
