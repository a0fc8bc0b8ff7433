//! One-class SVM with an RBF kernel.
//!
//! Training solves the dual
//!
//! ```text
//! min  1/2 a'Qa   s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1,   Q_ij = K(x_i, x_j)
//! ```
//!
//! with two-coordinate SMO steps (second-order working-set selection) and
//! scores points with `f(x) = sum a_i K(x, x_i) - rho`. Positive scores are
//! the benign side; exact zero is benign too.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Kernel matrices up to this many rows are precomputed in full.
const DENSE_KERNEL_LIMIT: usize = 3000;
/// Byte budget for the kernel row cache above that size.
const ROW_CACHE_BYTES: usize = 256 << 20;
const TAU: f64 = 1e-12;

/// Tolerance on `sum alpha = 1` accepted by [`OsvmModel::validate`].
pub const ALPHA_SUM_TOL: f64 = 1e-6;
/// Slack on the box bound accepted by [`OsvmModel::validate`].
pub const ALPHA_BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
}

impl KernelParams {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Argument(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    /// `1 / (d * mean column variance)`, falling back to `1 / d` on
    /// constant data.
    pub fn auto(x: &FeatureMatrix) -> Self {
        let d = x.n_cols() as f64;
        let var = x.column_variances();
        let mean_var = var.iter().sum::<f64>() / d;
        let gamma = if mean_var > 0.0 { 1.0 / (d * mean_var) } else { 1.0 / d };
        Self { gamma }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        rbf(x, y, self.gamma)
    }
}

/// `exp(-gamma * |x - y|^2)`; slices must have equal length.
#[inline]
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Checked RBF evaluation.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("kernel inputs of length {} and {}", x.len(), y.len())));
    }
    KernelParams::rbf(gamma)?;
    Ok(rbf(x, y, gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsvmConfig {
    pub nu: f64,
    /// `None` selects [`KernelParams::auto`] on the training data.
    pub gamma: Option<f64>,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Iteration budget, in multiples of `max(n, 100)` SMO steps.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for OsvmConfig {
    fn default() -> Self {
        Self {
            nu: 0.05,
            gamma: None,
            tolerance: 1e-4,
            max_passes: 1000,
            seed: 0,
        }
    }
}

impl OsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Argument(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if let Some(g) = self.gamma {
            KernelParams::rbf(g)?;
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_passes == 0 {
            return Err(Error::Argument("tolerance and max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// A trained one-class SVM. Only rows with a positive dual coefficient are
/// kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsvmModel {
    pub support_vectors: FeatureMatrix,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub kernel: KernelParams,
    pub nu: f64,
    /// Training-set size; fixes the box bound `1 / (nu n)`.
    pub n_train: usize,
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub gap: f64,
    /// `1/2 a'Qa` at exit.
    pub objective: f64,
}

/// Side of the decision boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Anomaly,
}

impl Verdict {
    /// Binary label with attack/anomaly as 1.
    pub fn as_label(self) -> u8 {
        match self {
            Verdict::Benign => 0,
            Verdict::Anomaly => 1,
        }
    }
}

impl OsvmModel {
    pub fn upper_bound(&self) -> f64 {
        1.0 / (self.nu * self.n_train as f64)
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.n_cols()
    }

    /// Checks the dual-feasibility invariants.
    pub fn validate(&self) -> Result<()> {
        KernelParams::rbf(self.kernel.gamma).map_err(|e| Error::Validation(e.to_string()))?;
        if !(self.nu > 0.0 && self.nu < 1.0) || self.n_train == 0 {
            return Err(Error::Validation(format!("invalid nu {} / n_train {}", self.nu, self.n_train)));
        }
        if self.alphas.len() != self.support_vectors.n_rows() || self.alphas.is_empty() {
            return Err(Error::Validation(format!(
                "{} alphas for {} support vectors",
                self.alphas.len(),
                self.support_vectors.n_rows()
            )));
        }
        if self.alphas.len() > self.n_train {
            return Err(Error::Validation("more support vectors than training rows".into()));
        }
        let ub = self.upper_bound() + ALPHA_BOUND_TOL;
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= ub)) {
            return Err(Error::Validation(format!("alpha {a} outside (0, {ub}]")));
        }
        let sum: f64 = self.alphas.iter().sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOL {
            return Err(Error::Validation(format!("alphas sum to {sum}, expected 1")));
        }
        if !self.rho.is_finite() {
            return Err(Error::Validation("rho is not finite".into()));
        }
        Ok(())
    }

    fn kernel_sum(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .rows()
            .zip(&self.alphas)
            .fold(0.0, |acc, (sv, a)| acc + a * self.kernel.eval(x, sv))
    }

    /// `sum a_i K(x, x_i) - rho`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("point has {} values, model expects {}", x.len(), self.dim())));
        }
        Ok(self.kernel_sum(x) - self.rho)
    }

    pub fn decision_batch(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.dim() {
            return Err(Error::Shape(format!("matrix has {} columns, model expects {}", x.n_cols(), self.dim())));
        }
        Ok(par::map_rows(x.values(), x.n_cols(), |row| self.kernel_sum(row) - self.rho))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Verdict> {
        self.decision_function(x).map(verdict)
    }

    /// Binary labels (1 = anomaly) per row.
    pub fn predict_labels(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.decision_batch(x)?.into_iter().map(|s| verdict(s).as_label()).collect())
    }
}

/// Anomaly iff the score is strictly negative.
pub fn verdict(score: f64) -> Verdict {
    if score < 0.0 {
        Verdict::Anomaly
    } else {
        Verdict::Benign
    }
}

enum KernelStore<'a> {
    Dense(Vec<f64>),
    Cached {
        x: &'a FeatureMatrix,
        gamma: f64,
        rows: HashMap<usize, Vec<f64>>,
        order: VecDeque<usize>,
        capacity: usize,
    },
}

impl<'a> KernelStore<'a> {
    fn new(x: &'a FeatureMatrix, gamma: f64) -> Self {
        let n = x.n_rows();
        if n <= DENSE_KERNEL_LIMIT {
            let mut q = vec![0.0; n * n];
            par::fill_indexed(&mut q, |k| rbf(x.row(k / n), x.row(k % n), gamma));
            KernelStore::Dense(q)
        } else {
            KernelStore::Cached {
                x,
                gamma,
                rows: HashMap::new(),
                order: VecDeque::new(),
                capacity: (ROW_CACHE_BYTES / (8 * n)).max(2),
            }
        }
    }

    fn row(&mut self, i: usize, n: usize) -> &[f64] {
        match self {
            KernelStore::Dense(q) => &q[i * n..(i + 1) * n],
            KernelStore::Cached {
                x,
                gamma,
                rows,
                order,
                capacity,
            } => {
                if !rows.contains_key(&i) {
                    if rows.len() >= *capacity {
                        if let Some(old) = order.pop_front() {
                            rows.remove(&old);
                        }
                    }
                    let mut r = vec![0.0; n];
                    let xi = x.row(i);
                    let g = *gamma;
                    par::fill_indexed(&mut r, |t| rbf(xi, x.row(t), g));
                    rows.insert(i, r);
                    order.push_back(i);
                }
                &rows[&i]
            }
        }
    }
}

/// Trains a model; see [`train_osvm_with_stats`].
pub fn train_osvm(x: &FeatureMatrix, cfg: &OsvmConfig) -> Result<OsvmModel> {
    train_osvm_with_stats(x, cfg).map(|(m, _)| m)
}

/// Trains a model and reports solver diagnostics.
pub fn train_osvm_with_stats(x: &FeatureMatrix, cfg: &OsvmConfig) -> Result<(OsvmModel, SolveStats)> {
    cfg.validate()?;
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::Data(format!("one-class SVM needs at least 2 rows, got {n}")));
    }
    let kernel = match cfg.gamma {
        Some(g) => KernelParams::rbf(g)?,
        None => KernelParams::auto(x),
    };
    let (alpha, stats) = solve_dual(x, kernel.gamma, cfg.nu, cfg.tolerance, cfg.max_passes, cfg.seed)?;
    let c = 1.0 / (cfg.nu * n as f64);

    let sv_idx: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    let mut model = OsvmModel {
        support_vectors: x.select_rows(&sv_idx),
        alphas: sv_idx.iter().map(|&i| alpha[i]).collect(),
        rho: 0.0,
        kernel,
        nu: cfg.nu,
        n_train: n,
    };

    // rho from freshly summed kernel values, in the same order scoring uses
    let sums = par::map_rows(x.values(), x.n_cols(), |row| model.kernel_sum(row));
    let eps = c * 1e-9;
    let free: Vec<f64> = (0..n)
        .filter(|&i| alpha[i] > eps && alpha[i] < c - eps)
        .map(|i| sums[i])
        .collect();
    model.rho = if free.is_empty() {
        let at_upper = (0..n).filter(|&i| alpha[i] >= c - eps).map(|i| sums[i]);
        let at_zero = (0..n).filter(|&i| alpha[i] <= eps).map(|i| sums[i]);
        let lb = at_upper.fold(f64::NEG_INFINITY, f64::max);
        let ub = at_zero.fold(f64::INFINITY, f64::min);
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => (lb + ub) / 2.0,
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => unreachable!("every alpha is at a bound"),
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    Ok((model, stats))
}

fn solve_dual(
    x: &FeatureMatrix,
    gamma: f64,
    nu: f64,
    tol: f64,
    max_passes: usize,
    seed: u64,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = x.n_rows();
    let c = 1.0 / (nu * n as f64);

    // feasible start: fill coordinates to the bound in a seeded order
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut remaining = 1.0;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let a = c.min(remaining);
        alpha[i] = a;
        remaining -= a;
    }

    let mut store = KernelStore::new(x, gamma);
    let mut grad = vec![0.0; n];
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            let row = store.row(i, n);
            grad.iter_mut().zip(row).for_each(|(g, q)| *g += a * q);
        }
    }

    let max_iter = max_passes.saturating_mul(n.max(100));
    let mut iterations = 0;
    loop {
        // i: can increase (alpha < C) with the smallest gradient
        let mut i_sel = None;
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] < c && grad[t] < g_min {
                g_min = grad[t];
                i_sel = Some(t);
            }
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        let gap = g_max - g_min;
        if gap < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations, gap });
        }
        let i = i_sel.expect("a coordinate below the bound exists while sum alpha = 1 < n C");

        // j: can decrease, chosen by second-order gain
        let qi = store.row(i, n).to_vec();
        let qii = qi[i];
        let mut j_sel = None;
        let mut best = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && grad[t] > g_min {
                let b = grad[t] - g_min;
                // RBF kernels have a unit diagonal
                let a = (qii + 1.0 - 2.0 * qi[t]).max(TAU);
                let gain = b * b / a;
                if gain > best {
                    best = gain;
                    j_sel = Some(t);
                }
            }
        }
        let j = j_sel.expect("gap above tolerance implies a decreasable coordinate");
        let qj = store.row(j, n).to_vec();
        let curvature = (qii + qj[j] - 2.0 * qi[j]).max(TAU);
        let step = ((grad[j] - grad[i]) / curvature).min(c - alpha[i]).min(alpha[j]);
        if step <= 0.0 {
            // numerical stall; nothing further can be gained along this pair
            break;
        }
        alpha[i] += step;
        if step >= alpha[j] {
            alpha[j] = 0.0;
        } else {
            alpha[j] -= step;
        }
        if c - alpha[i] < c * 1e-15 {
            alpha[i] = c;
        }
        grad.iter_mut()
            .zip(qi.iter().zip(&qj))
            .for_each(|(g, (a, b))| *g += step * (a - b));
        iterations += 1;
    }

    // exact sum and bounds after accumulated rounding
    let sum: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a = (*a / sum).min(c));

    let mut objective = 0.0;
    for i in 0..n {
        if alpha[i] > 0.0 {
            let row = store.row(i, n);
            let qa: f64 = row.iter().zip(&alpha).map(|(q, a)| q * a).sum();
            objective += 0.5 * alpha[i] * qa;
        }
    }
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for t in 0..n {
        if alpha[t] < c {
            g_min = g_min.min(grad[t]);
        }
        if alpha[t] > 0.0 {
            g_max = g_max.max(grad[t]);
        }
    }
    Ok((
        alpha,
        SolveStats {
            iterations,
            gap: (g_max - g_min).max(0.0),
            objective,
        },
    ))
}

/// Dual objective `1/2 a'Qa` for explicit coefficients over `x`.
pub fn dual_objective(x: &FeatureMatrix, alphas: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (i, ai) in alphas.iter().enumerate() {
        for (j, aj) in alphas.iter().enumerate() {
            total += ai * aj * rbf(x.row(i), x.row(j), gamma);
        }
    }
    0.5 * total
}
