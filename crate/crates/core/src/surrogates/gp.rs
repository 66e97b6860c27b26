//! Gaussian-process regression with a Matérn-5/2 ARD kernel.
//!
//! Targets are standardized before fitting. The constant mean is profiled
//! out in closed form (generalized least squares), and the remaining
//! log-hyperparameters (one lengthscale per input, signal variance, noise
//! variance) maximize the log marginal likelihood through random-restart
//! local searches driven by the analytic gradient.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_set, FitError};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_START: f64 = 1e-8;
const JITTER_CAP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Number of random-restart local searches.
    pub restarts: usize,
    /// Gradient steps per restart.
    pub local_steps: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 32,
            local_steps: 12,
            lengthscale_bounds: (1e-3, 1e3),
            signal_variance_bounds: (1e-2, 1e2),
            noise_variance_bounds: (1e-8, 1.0),
        }
    }
}

/// Kernel hyperparameters on the standardized target scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    fn from_theta(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyperparams {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
        }
    }
}

/// Matérn-5/2 correlation as a function of the scaled distance `r`.
pub fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * (-SQRT5 * r).exp()
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// In-place Cholesky of a row-major symmetric matrix (lower triangle used).
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let (head, tail) = a.split_at_mut((j + 1) * n);
        let row_j = &mut head[j * n..];
        let s = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(s > 0.0) || !s.is_finite() {
            return false;
        }
        let diag = s.sqrt();
        row_j[j] = diag;
        row_j[j + 1..].fill(0.0);
        let row_j = &row_j[..j];
        for row_i in tail.chunks_exact_mut(n) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / diag;
        }
    }
    true
}

fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        b[i] = (b[i] - dot(&l[i * n..i * n + i], &b[..i])) / l[i * n + i];
    }
}

fn backward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn chol_solve(l: &[f64], n: usize, b: &mut [f64]) {
    forward_solve(l, n, b);
    backward_solve(l, n, b);
}

/// Standardized training data plus cached pairwise squared differences.
#[derive(Debug, Clone)]
struct Training {
    x: Vec<f64>,
    z: Vec<f64>,
    n: usize,
    d: usize,
    /// For each pair `i > j` (index `i(i-1)/2 + j`), `d` squared coordinate gaps.
    sq: Vec<f64>,
}

struct Factor {
    chol: Vec<f64>,
    jitter: f64,
    /// Kernel values and `(1 + √5 r) e^{-√5 r}` per pair.
    kernel: Vec<f64>,
    shape: Vec<f64>,
}

struct Posterior {
    factor: Factor,
    mean: f64,
    alpha: Vec<f64>,
    lml: f64,
}

impl Training {
    fn new(x: &[Vec<f64>], z: Vec<f64>) -> Self {
        let n = x.len();
        let d = x[0].len();
        let flat: Vec<f64> = x.iter().flat_map(|row| row.iter().copied()).collect();
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 1..n {
            for j in 0..i {
                for k in 0..d {
                    let diff = flat[i * d + k] - flat[j * d + k];
                    sq.push(diff * diff);
                }
            }
        }
        Training {
            x: flat,
            z,
            n,
            d,
            sq,
        }
    }

    fn factor(&self, hyper: &GpHyperparams) -> Option<Factor> {
        let (n, d) = (self.n, self.d);
        let inv: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let sf2 = hyper.signal_variance;
        let pairs = n * n.saturating_sub(1) / 2;
        let mut kernel = Vec::with_capacity(pairs);
        let mut shape = Vec::with_capacity(pairs);
        for p in 0..pairs {
            let r2: f64 = self.sq[p * d..(p + 1) * d]
                .iter()
                .zip(&inv)
                .map(|(s, w)| s * w)
                .sum();
            let r = r2.sqrt();
            let e = (-SQRT5 * r).exp();
            let a = (1.0 + SQRT5 * r) * e;
            shape.push(a);
            kernel.push(sf2 * (a + 5.0 / 3.0 * r2 * e));
        }
        let mut jitter = JITTER_START;
        let mut chol = vec![0.0; n * n];
        loop {
            let mut p = 0;
            for i in 0..n {
                for j in 0..i {
                    chol[i * n + j] = kernel[p];
                    p += 1;
                }
                chol[i * n + i] = sf2 + hyper.noise_variance + jitter;
            }
            if cholesky(&mut chol, n) {
                return Some(Factor {
                    chol,
                    jitter,
                    kernel,
                    shape,
                });
            }
            jitter *= 10.0;
            if jitter > JITTER_CAP * (1.0 + 1e-9) {
                return None;
            }
        }
    }

    fn posterior(&self, hyper: &GpHyperparams) -> Option<Posterior> {
        let n = self.n;
        let factor = self.factor(hyper)?;
        let l = &factor.chol;
        let mut kz = self.z.clone();
        chol_solve(l, n, &mut kz);
        let mut k1 = vec![1.0; n];
        chol_solve(l, n, &mut k1);
        let mean = kz.iter().sum::<f64>() / k1.iter().sum::<f64>();
        let alpha: Vec<f64> = kz.iter().zip(&k1).map(|(a, b)| a - mean * b).collect();
        let quad: f64 = self
            .z
            .iter()
            .zip(&alpha)
            .map(|(z, a)| (z - mean) * a)
            .sum();
        let half_logdet: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
        let lml = -0.5 * quad - half_logdet - 0.5 * n as f64 * (2.0 * PI).ln();
        if !lml.is_finite() {
            return None;
        }
        Some(Posterior {
            factor,
            mean,
            alpha,
            lml,
        })
    }

    /// Gradient of the log marginal likelihood w.r.t. the log-hyperparameters.
    fn gradient(&self, hyper: &GpHyperparams, post: &Posterior) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let l = &post.factor.chol;
        // K⁻¹ = L⁻ᵀ L⁻¹; row c of `mt` holds column c of L⁻¹ (zero above c)
        let mut mt = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            col[c] = 1.0 / l[c * n + c];
            for i in (c + 1)..n {
                col[i] = -dot(&l[i * n + c..i * n + i], &col[c..i]) / l[i * n + i];
            }
            mt[c * n + c..(c + 1) * n].copy_from_slice(&col[c..]);
        }
        let kinv = |i: usize, j: usize| -> f64 {
            let lo = i.max(j);
            dot(&mt[i * n + lo..(i + 1) * n], &mt[j * n + lo..(j + 1) * n])
        };
        let sf2 = hyper.signal_variance;
        let inv: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let alpha = &post.alpha;
        let mut grad = vec![0.0; d + 2];
        let mut trace_w = 0.0;
        for i in 0..n {
            trace_w += alpha[i] * alpha[i] - kinv(i, i);
        }
        let mut pair_w_k = 0.0;
        let mut p = 0;
        for i in 1..n {
            for j in 0..i {
                let w = alpha[i] * alpha[j] - kinv(i, j);
                pair_w_k += w * post.factor.kernel[p];
                let g = w * sf2 * (5.0 / 3.0) * post.factor.shape[p];
                for (k, gk) in grad[..d].iter_mut().enumerate() {
                    *gk += g * self.sq[p * d + k] * inv[k];
                }
                p += 1;
            }
        }
        grad[d] = 0.5 * (trace_w * sf2 + 2.0 * pair_w_k);
        grad[d + 1] = 0.5 * trace_w * hyper.noise_variance;
        grad
    }
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn new(config: &GpConfig, d: usize) -> Self {
        let mut lo = vec![config.lengthscale_bounds.0.ln(); d];
        let mut hi = vec![config.lengthscale_bounds.1.ln(); d];
        lo.push(config.signal_variance_bounds.0.ln());
        hi.push(config.signal_variance_bounds.1.ln());
        lo.push(config.noise_variance_bounds.0.ln());
        hi.push(config.noise_variance_bounds.1.ln());
        Bounds { lo, hi }
    }

    fn clamp(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lo).zip(&self.hi) {
            *t = t.clamp(*lo, *hi);
        }
    }

    /// Starting point for restart `index`: a central default first, then
    /// uniform draws from a plausible sub-box of the log bounds.
    fn start<R: Rng + ?Sized>(&self, index: usize, d: usize, rng: &mut R) -> Vec<f64> {
        let mut theta = if index == 0 {
            let mut t = vec![0.3f64.ln(); d];
            t.push(0.0);
            t.push(1e-6f64.ln());
            t
        } else {
            let mut t: Vec<f64> = (0..d)
                .map(|_| rng.random_range(0.05f64.ln()..2.0f64.ln()))
                .collect();
            t.push(rng.random_range(0.3f64.ln()..3.0f64.ln()));
            t.push(rng.random_range(1e-8f64.ln()..1e-2f64.ln()));
            t
        };
        self.clamp(&mut theta);
        theta
    }
}

/// Sign-based gradient ascent (iRprop−) inside the box; returns the best
/// point visited, which is never worse than the start.
fn local_search(
    training: &Training,
    bounds: &Bounds,
    start: Vec<f64>,
    steps: usize,
) -> Option<(Vec<f64>, f64, f64)> {
    let p = start.len();
    let mut theta = start;
    let hyper = GpHyperparams::from_theta(&theta);
    let post = training.posterior(&hyper)?;
    let start_lml = post.lml;
    let mut best = (theta.clone(), post.lml);
    let mut grad = training.gradient(&hyper, &post);
    let mut prev = vec![0.0; p];
    let mut step = vec![0.2_f64; p];
    for _ in 0..steps {
        for j in 0..p {
            let g = grad[j];
            if g * prev[j] > 0.0 {
                step[j] = (step[j] * 1.2).min(1.0);
            } else if g * prev[j] < 0.0 {
                step[j] = (step[j] * 0.5).max(1e-4);
                grad[j] = 0.0;
            }
            if grad[j] != 0.0 {
                theta[j] += grad[j].signum() * step[j];
            }
            prev[j] = grad[j];
        }
        bounds.clamp(&mut theta);
        let hyper = GpHyperparams::from_theta(&theta);
        let Some(post) = training.posterior(&hyper) else {
            break;
        };
        if post.lml > best.1 {
            best = (theta.clone(), post.lml);
        }
        grad = training.gradient(&hyper, &post);
    }
    Some((best.0, best.1, start_lml))
}

#[derive(Debug, Clone)]
pub struct GpModel {
    training: Training,
    hyper: GpHyperparams,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    /// Profiled constant mean, standardized scale.
    mean: f64,
    lml: f64,
    y_mean: f64,
    y_scale: f64,
    starts: Vec<GpHyperparams>,
}

pub fn fit_gp<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    z: &[f64],
    config: &GpConfig,
    rng: &mut R,
) -> Result<GpModel, FitError> {
    check_training_set(x, z)?;
    let n = z.len() as f64;
    let y_mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
    let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let zs: Vec<f64> = z.iter().map(|v| (v - y_mean) / y_scale).collect();
    let training = Training::new(x, zs);
    let d = training.d;
    let bounds = Bounds::new(config, d);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut starts = Vec::with_capacity(config.restarts.max(1));
    for r in 0..config.restarts.max(1) {
        let start = bounds.start(r, d, rng);
        starts.push(GpHyperparams::from_theta(&start));
        if let Some((theta, lml, _)) = local_search(&training, &bounds, start, config.local_steps)
        {
            if best.as_ref().is_none_or(|(_, b)| lml > *b) {
                best = Some((theta, lml));
            }
        }
    }
    let theta = match best {
        Some((theta, _)) => theta,
        None => return Err(FitError::IllConditioned { jitter: JITTER_CAP }),
    };
    let hyper = GpHyperparams::from_theta(&theta);
    let post = training
        .posterior(&hyper)
        .ok_or(FitError::IllConditioned { jitter: JITTER_CAP })?;
    Ok(GpModel {
        hyper,
        chol: post.factor.chol,
        alpha: post.alpha,
        jitter: post.factor.jitter,
        mean: post.mean,
        lml: post.lml,
        y_mean,
        y_scale,
        starts,
        training,
    })
}

impl GpModel {
    /// Posterior mean and latent-function variance.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let t = &self.training;
        let (n, d) = (t.n, t.d);
        let sf2 = self.hyper.signal_variance;
        let mut k: Vec<f64> = (0..n)
            .map(|i| {
                let r2: f64 = (0..d)
                    .map(|j| {
                        let diff = x[j] - t.x[i * d + j];
                        diff * diff / (self.hyper.lengthscales[j] * self.hyper.lengthscales[j])
                    })
                    .sum();
                sf2 * matern52(r2.sqrt())
            })
            .collect();
        let mean_std = self.mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        forward_solve(&self.chol, n, &mut k);
        let var_std = (sf2 - k.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        (
            self.y_mean + self.y_scale * mean_std,
            self.y_scale * self.y_scale * var_std,
        )
    }

    /// Hyperparameters on the standardized scale.
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    /// Starting hyperparameters of every restart, in restart order.
    pub fn restart_starts(&self) -> &[GpHyperparams] {
        &self.starts
    }

    /// Log marginal likelihood (standardized targets) at the fitted optimum.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Log marginal likelihood of this model's training data under `hyper`.
    pub fn log_marginal_likelihood_at(&self, hyper: &GpHyperparams) -> Option<f64> {
        self.training.posterior(hyper).map(|p| p.lml)
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean + self.y_scale * self.mean
    }

    pub fn signal_variance(&self) -> f64 {
        self.y_scale * self.y_scale * self.hyper.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.y_scale * self.y_scale * self.hyper.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.y_scale * self.y_scale * self.jitter
    }

    pub fn train_len(&self) -> usize {
        self.training.n
    }

    /// Diagonal of the Cholesky factor (for conditioning checks).
    pub fn cholesky_diagonal(&self) -> Vec<f64> {
        let n = self.training.n;
        (0..n).map(|i| self.chol[i * n + i]).collect()
    }

    #[cfg(test)]
    fn gradient_at(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let hyper = GpHyperparams::from_theta(theta);
        let post = self.training.posterior(&hyper).unwrap();
        let g = self.training.gradient(&hyper, &post);
        (post.lml, g)
    }
}
