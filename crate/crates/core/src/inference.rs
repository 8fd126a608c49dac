//! Pointwise inference for a monotone regression function: smoothed isotonic
//! fit, residual and pairs bootstrap, likelihood-ratio inversion, and
//! simulated null tables for the Chernoff and LRS limit laws.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, ShapeError};
use crate::isotonic::{constrained_pava, pava_unchecked, Direction, StepFit};
use crate::projection::Series;

/// Deterministic generator for replication `rep` of a run seeded by `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Integrated biweight kernel, K(u) = ∫_{-1}^{u} (15/16)(1−s²)² ds.
pub fn biweight_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let u2 = u * u;
        (0.5 + 15.0 / 16.0 * u * (1.0 - 2.0 * u2 / 3.0 + u2 * u2 / 5.0)).clamp(0.0, 1.0)
    }
}

/// Kernel-smoothed step fit: f̌(t) = f̂(0+) + Σ K((t − s_j)/h) Δ_j over the
/// jumps (s_j, Δ_j) of f̂, held constant outside [h, 1 − h].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothFit {
    pub base: StepFit,
    pub bandwidth: f64,
    start: f64,
    jumps: Vec<(f64, f64)>,
}

impl SmoothFit {
    pub fn new(base: StepFit, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(ShapeError::BadBandwidth(h));
        }
        if base.values.is_empty() {
            return Err(ShapeError::EmptyInput);
        }
        let start = base.values[0];
        let jumps = base.jumps();
        Ok(SmoothFit {
            base,
            bandwidth: h,
            start,
            jumps,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let t = t.clamp(h, 1.0 - h);
        self.start + self.jumps.iter().map(|&(s, d)| biweight_cdf((t - s) / h) * d).sum::<f64>()
    }
}

/// f̌(t) for the fit `fit` and bandwidth `h`.
pub fn smooth_isotonic(fit: &StepFit, h: f64, t: f64) -> Result<f64> {
    Ok(SmoothFit::new(fit.clone(), h)?.eval(t))
}

/// Default bandwidth 0.5·n^{−1/5}.
pub fn default_bandwidth(n: usize) -> f64 {
    0.5 * (n as f64).powf(-0.2)
}

/// Value at t of a left-continuous step function on sorted design `x`,
/// extended by its end values.
fn step_at(x: &[f64], values: &[f64], t: f64) -> f64 {
    let i = x.partition_point(|&v| v < t).min(values.len() - 1);
    values[i]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScheme {
    Smoothed,
    NaiveLse,
    Pairs,
}

impl std::str::FromStr for BootstrapScheme {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothed" => Ok(BootstrapScheme::Smoothed),
            "naive_lse" => Ok(BootstrapScheme::NaiveLse),
            "pairs" => Ok(BootstrapScheme::Pairs),
            other => Err(ShapeError::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Smoothed,
    NaiveLse,
    Pairs,
    Lrs,
}

impl From<BootstrapScheme> for CiMethod {
    fn from(s: BootstrapScheme) -> Self {
        match s {
            BootstrapScheme::Smoothed => CiMethod::Smoothed,
            BootstrapScheme::NaiveLse => CiMethod::NaiveLse,
            BootstrapScheme::Pairs => CiMethod::Pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub replications: usize,
    pub seed: u64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Type-7 sample quantile of ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ShapeError::BadLevel(alpha))
    }
}

/// Isotonic fit over design `x` with ties pooled by weight; returns the
/// distinct design values and fitted levels there.
fn pooled_isotonic(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for &i in &idx {
        if xs.last() == Some(&x[i]) {
            *ys.last_mut().unwrap() += y[i];
            *ws.last_mut().unwrap() += 1.0;
        } else {
            xs.push(x[i]);
            ys.push(y[i]);
            ws.push(1.0);
        }
    }
    let means: Vec<f64> = ys.iter().zip(&ws).map(|(s, w)| s / w).collect();
    let vals = pava_unchecked(&means, &ws, Direction::Nondecreasing, Vec::new()).fitted();
    (xs, vals)
}

/// Pointwise bootstrap interval for f(t).
///
/// Replicates Δ* = n^{1/3}(f̂*(t) − c(t)) where c is the smoothed fit for the
/// smoothed scheme and the raw fit otherwise, and returns
/// [f̂(t) − q_{1−α/2} n^{−1/3}, f̂(t) − q_{α/2} n^{−1/3}].
/// `h = None` uses [`default_bandwidth`].
pub fn bootstrap_ci(
    s: &Series,
    t: f64,
    alpha: f64,
    reps: usize,
    scheme: BootstrapScheme,
    h: Option<f64>,
    seed: u64,
) -> Result<ConfidenceInterval> {
    check_level(alpha)?;
    if reps < 100 {
        return Err(ShapeError::TooFewReplications { min: 100, got: reps });
    }
    let n = s.len();
    let h = h.unwrap_or_else(|| default_bandwidth(n));
    if !(h > 0.0 && h < 0.5) {
        return Err(ShapeError::BadBandwidth(h));
    }
    if !(t >= h && t <= 1.0 - h) {
        return Err(ShapeError::BadEvaluationPoint { t, h });
    }
    let (x, y) = (s.x(), s.y());
    let fit = pava_unchecked(y, &vec![1.0; n], Direction::Nondecreasing, x.to_vec());
    let fhat = fit.fitted();
    let fhat_t = step_at(x, &fhat, t);
    let (center, center_t): (Vec<f64>, f64) = match scheme {
        BootstrapScheme::Smoothed => {
            let sm = SmoothFit::new(fit, h)?;
            (x.iter().map(|&v| sm.eval(v)).collect(), sm.eval(t))
        }
        _ => (fhat.clone(), fhat_t),
    };
    let mut resid: Vec<f64> = y.iter().zip(&center).map(|(a, b)| a - b).collect();
    let rbar = resid.iter().sum::<f64>() / n as f64;
    resid.iter_mut().for_each(|r| *r -= rbar);
    let scale = (n as f64).cbrt();
    let ones = vec![1.0; n];
    let mut deltas: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rep_rng(seed, b);
            let est = match scheme {
                BootstrapScheme::Pairs => {
                    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    let xb: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                    let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                    let (xs, vals) = pooled_isotonic(&xb, &yb);
                    step_at(&xs, &vals, t)
                }
                _ => {
                    let yb: Vec<f64> = center.iter().map(|c| c + resid[rng.gen_range(0..n)]).collect();
                    let fb = pava_unchecked(&yb, &ones, Direction::Nondecreasing, Vec::new()).fitted();
                    step_at(x, &fb, t)
                }
            };
            scale * (est - center_t)
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    let q_hi = quantile_sorted(&deltas, 1.0 - alpha / 2.0);
    let q_lo = quantile_sorted(&deltas, alpha / 2.0);
    let lower = fhat_t - q_hi / scale;
    let upper = (fhat_t - q_lo / scale).max(lower);
    Ok(ConfidenceInterval {
        t,
        lower,
        upper,
        level: 1.0 - alpha,
        method: scheme.into(),
        replications: reps,
        seed,
    })
}

/// l = ⌊n·t⌋ (with a guard against representation error), required in [1, n).
fn lrs_index(n: usize, t: f64) -> Result<usize> {
    if !(t > 0.0 && t < 1.0) {
        return Err(ShapeError::OutOfDomain { t });
    }
    let l = (n as f64 * t + 1e-9).floor() as usize;
    if l < 1 || l >= n {
        return Err(ShapeError::IndexOutOfRange { index: l, max: n.saturating_sub(1) });
    }
    Ok(l)
}

fn lrs_from_fit(y: &[f64], fhat: &[f64], l: usize, phi0: f64) -> Result<f64> {
    let c = constrained_pava(y, l, phi0)?.fitted();
    let v: f64 = fhat
        .iter()
        .zip(&c)
        .zip(y)
        .map(|((a, b), yi)| (a - b) * (2.0 * yi - a - b))
        .sum();
    Ok(v.max(0.0))
}

/// L_n(φ₀) = SSE(pinned fit) − SSE(isotonic fit) with l = ⌊n·t⌋.
pub fn lrs_statistic(s: &Series, t: f64, phi0: f64) -> Result<f64> {
    let l = lrs_index(s.len(), t)?;
    let fhat = crate::isotonic::isotonic_fitted(s.y());
    lrs_from_fit(s.y(), &fhat, l, phi0)
}

/// ||y − θ̂||²/n.
pub fn estimate_sigma2(s: &Series, fit: &StepFit) -> f64 {
    let f = fit.fitted();
    s.y().iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64
}

/// Pinned-value test inversion: {φ₀ : L_n(φ₀) ≤ σ̂²·q_{1−α}(𝔻)}, found by
/// bracket doubling and bisection outward from the zero set [θ̂_l, θ̂_{l+1}].
pub fn lrs_ci(s: &Series, t: f64, alpha: f64, table: &NullTable) -> Result<ConfidenceInterval> {
    check_level(alpha)?;
    if table.kind() != NullKind::Lrs {
        return Err(ShapeError::Table("lrs_ci needs an LRS null table".into()));
    }
    let n = s.len();
    let l = lrs_index(n, t)?;
    let y = s.y();
    let fit = pava_unchecked(y, &vec![1.0; n], Direction::Nondecreasing, s.x().to_vec());
    let fhat = fit.fitted();
    let sigma2 = estimate_sigma2(s, &fit);
    let thr = sigma2 * table.quantile(1.0 - alpha);
    let (a, b) = (fhat[l - 1], fhat[l]);
    let spread = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(sigma2.sqrt()).max(1e-12);
    let stat = |phi: f64| lrs_from_fit(y, &fhat, l, phi);
    let edge = |from: f64, sign: f64| -> Result<f64> {
        if thr <= 0.0 {
            return Ok(from);
        }
        let mut step = spread;
        let mut inner = from;
        let mut outer = from + sign * step;
        while stat(outer)? <= thr {
            inner = outer;
            step *= 2.0;
            outer = from + sign * step;
            if !outer.is_finite() {
                return Ok(outer);
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if stat(mid)? <= thr {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Ok(inner)
    };
    let lower = edge(a, -1.0)?;
    let upper = edge(b, 1.0)?;
    Ok(ConfidenceInterval {
        t,
        lower,
        upper,
        level: 1.0 - alpha,
        method: CiMethod::Lrs,
        replications: table.len(),
        seed: table.seed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullKind {
    Chernoff,
    Lrs,
}

/// Sorted Monte Carlo samples of a pivotal limit law.
///
/// `params` is `[kind, a, b, seed]` where kind is 0 (Chernoff: a = grid step,
/// b = horizon) or 1 (LRS: a = n, b = slope/σ); the seed is stored by bit
/// pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct NullTable {
    samples: Vec<f64>,
    params: [f64; 4],
}

const MAGIC: &[u8; 4] = b"SRNT";
const VERSION: u32 = 1;

impl NullTable {
    pub fn new(mut samples: Vec<f64>, params: [f64; 4]) -> Result<Self> {
        if samples.is_empty() {
            return Err(ShapeError::EmptyInput);
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite { index: i });
        }
        if params[0] != 0.0 && params[0] != 1.0 {
            return Err(ShapeError::Table(format!("unknown table kind {}", params[0])));
        }
        samples.sort_by(f64::total_cmp);
        Ok(NullTable { samples, params })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn params(&self) -> [f64; 4] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn kind(&self) -> NullKind {
        if self.params[0] == 0.0 {
            NullKind::Chernoff
        } else {
            NullKind::Lrs
        }
    }

    pub fn seed(&self) -> u64 {
        self.params[3].to_bits()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.samples, p)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Empirical CDF at v.
    pub fn cdf(&self, v: f64) -> f64 {
        self.samples.partition_point(|&s| s <= v) as f64 / self.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 + 8 + 32 + 8 * self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for p in self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| ShapeError::Table(m.to_string());
        if bytes.len() < 48 || &bytes[..4] != MAGIC {
            return Err(bad("not a null table"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad("unsupported table version"));
        }
        let b = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let f = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if bytes.len() != 48 + 8 * b {
            return Err(bad("truncated null table"));
        }
        let params = [f(16), f(24), f(32), f(40)];
        let samples: Vec<f64> = (0..b).map(|i| f(48 + 8 * i)).collect();
        if samples.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("samples not sorted"));
        }
        NullTable::new(samples, params)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ShapeError::Table(e.to_string()))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ShapeError::Table(e.to_string()))?;
        NullTable::from_bytes(&bytes)
    }

    /// Samples multiplied by `c`, keeping the parameters.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        NullTable::new(self.samples.iter().map(|v| v * c).collect(), self.params)
    }
}

/// Two-sample Kolmogorov–Smirnov distance between ascending samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Argmin over k·step, |k| ≤ m, of σW(k·step) + a(k·step)², with W built
/// from independent random-walk wings; ties go to the smallest |h|.
fn argmin_path<R: Rng>(rng: &mut R, step: f64, m: usize, sigma: f64, a: f64) -> f64 {
    let sd = sigma * step.sqrt();
    let (mut best_v, mut best_k) = (0.0, 0i64);
    let (mut wp, mut wm) = (0.0, 0.0);
    for k in 1..=m {
        wp += sd * rng.sample::<f64, _>(StandardNormal);
        wm += sd * rng.sample::<f64, _>(StandardNormal);
        let h = k as f64 * step;
        let q = a * h * h;
        if wp + q < best_v {
            best_v = wp + q;
            best_k = k as i64;
        }
        if wm + q < best_v {
            best_v = wm + q;
            best_k = -(k as i64);
        }
    }
    best_k as f64 * step
}

fn check_grid(step: f64, horizon: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 0.01 && horizon >= 2.0 && horizon.is_finite()) {
        return Err(ShapeError::BadGrid { step, horizon });
    }
    Ok((horizon / step).round() as usize)
}

/// Samples of argmin_h {σW(h) + a·h²}; equal in law to (σ/a)^{2/3}·C.
pub fn simulate_argmin(reps: usize, step: f64, horizon: f64, sigma: f64, a: f64, seed: u64) -> Result<Vec<f64>> {
    let m = check_grid(step, horizon)?;
    if !(sigma > 0.0 && a > 0.0) {
        return Err(ShapeError::InvalidParameter("sigma and curvature must be positive".into()));
    }
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|b| argmin_path(&mut rep_rng(seed, b), step, m, sigma, a))
        .collect())
}

/// Chernoff null table: argmin of two-sided Brownian motion plus h².
pub fn simulate_chernoff(reps: usize, grid_step: f64, horizon: f64, seed: u64) -> Result<NullTable> {
    if reps == 0 {
        return Err(ShapeError::TooFewReplications { min: 1, got: 0 });
    }
    let s = simulate_argmin(reps, grid_step, horizon, 1.0, 1.0, seed)?;
    NullTable::new(s, [0.0, grid_step, horizon, f64::from_bits(seed)])
}

/// LRS null table from f(x) = x, σ = 1.
pub fn simulate_lrs_null(reps: usize, n: usize, seed: u64) -> Result<NullTable> {
    simulate_lrs_null_with(reps, n, 1.0, 1.0, seed)
}

/// LRS null table from f(x) = slope·x with Gaussian noise of scale σ:
/// L_n at t = 1/2, φ₀ = f(1/2), divided by σ².
pub fn simulate_lrs_null_with(reps: usize, n: usize, slope: f64, sigma: f64, seed: u64) -> Result<NullTable> {
    if n < 200 {
        return Err(ShapeError::InvalidParameter(format!("n = {n} is below 200")));
    }
    if reps < 1000 {
        return Err(ShapeError::TooFewReplications { min: 1000, got: reps });
    }
    if !(slope > 0.0 && sigma > 0.0) {
        return Err(ShapeError::InvalidParameter("slope and sigma must be positive".into()));
    }
    let l = n / 2;
    let t = l as f64 / n as f64;
    let phi0 = slope * t;
    let ones = vec![1.0; n];
    let samples: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rep_rng(seed, b);
            let y: Vec<f64> = (1..=n)
                .map(|i| slope * i as f64 / n as f64 + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let fhat = pava_unchecked(&y, &ones, Direction::Nondecreasing, Vec::new()).fitted();
            lrs_from_fit(&y, &fhat, l, phi0).expect("valid pinned index") / (sigma * sigma)
        })
        .collect();
    NullTable::new(samples, [1.0, n as f64, slope / sigma, f64::from_bits(seed)])
}

/// Cache directory from SHAPEREG_CACHE_DIR, if set.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("SHAPEREG_CACHE_DIR").map(PathBuf::from)
}

/// Load a table from `dir/name`, or build it and store it there.
pub fn cached_table<F>(dir: Option<&Path>, name: &str, build: F) -> Result<NullTable>
where
    F: FnOnce() -> Result<NullTable>,
{
    let Some(dir) = dir else {
        return build();
    };
    let path = dir.join(name);
    if let Ok(t) = NullTable::read_from(&path) {
        return Ok(t);
    }
    let t = build()?;
    std::fs::create_dir_all(dir).map_err(|e| ShapeError::Table(e.to_string()))?;
    t.write_to(&path)?;
    Ok(t)
}

/// LRS table for (n, B, seed), through the SHAPEREG_CACHE_DIR cache.
pub fn lrs_null_cached(reps: usize, n: usize, seed: u64) -> Result<NullTable> {
    let name = format!("lrs_n{n}_b{reps}_s{seed}.srnt");
    cached_table(cache_dir().as_deref(), &name, || simulate_lrs_null(reps, n, seed))
}

/// Chernoff table for (grid, horizon, B, seed), through the cache.
pub fn chernoff_cached(reps: usize, grid_step: f64, horizon: f64, seed: u64) -> Result<NullTable> {
    let name = format!("chernoff_g{grid_step}_h{horizon}_b{reps}_s{seed}.srnt");
    cached_table(cache_dir().as_deref(), &name, || simulate_chernoff(reps, grid_step, horizon, seed))
}
