//! Scaling functions `ψ(t)`, stable limit densities and the local limit
//! approximation `P(S_n ∈ [x, x+Δ)) ≈ (Δ/ψ(n)) φ((x - μn)/ψ(n))`.
//!
//! Stable laws use the characteristic function
//! `exp{-|t|^α (1 - iρ tan(πα/2) sgn t)}`. How that normalisation relates
//! to `b(t)` is not fixed a priori, so [`calibrate`] fits one multiplicative
//! factor by matching median absolute deviations.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::dist::{JumpModel, Side};
use crate::error::{Error, Result};
use crate::exact::{step, LatticeLaw};
use crate::numeric::{bisect_increasing, simpson, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableParams {
    alpha: f64,
    rho: f64,
}

impl StableParams {
    /// `α ∈ [1, 2]`, `ρ ∈ [-1, 1]`; `α = 1` is accepted only with `ρ = 0`
    /// (the Cauchy law) and `α = 2` is the standard normal law.
    pub fn new(alpha: f64, rho: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&alpha) || !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "stable parameters need α in [1, 2] and ρ in [-1, 1], got ({alpha}, {rho})"
            )));
        }
        if alpha == 1.0 && rho != 0.0 {
            return Err(Error::InvalidArgument("α = 1 is only available with ρ = 0".into()));
        }
        Ok(Self { alpha, rho })
    }

    pub fn normal() -> Self {
        Self { alpha: 2.0, rho: 0.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `C_α` in `P(X > u) ~ C_α (1+ρ)/2 u^-α`.
    pub fn tail_constant(&self) -> f64 {
        let a = self.alpha;
        if a >= 2.0 {
            return 0.0;
        }
        if a == 1.0 {
            return 2.0 / PI;
        }
        (1.0 - a) / (gamma(2.0 - a) * (PI * a / 2.0).cos())
    }
}

/// Density of the limit law.
pub fn stable_density(params: StableParams, u: f64) -> f64 {
    if params.alpha == 2.0 {
        return std_normal_pdf(u);
    }
    if !u.is_finite() {
        return 0.0;
    }
    density_at(params, u, 1e-7)
}

/// `(1/π) ∫_0^∞ e^{-t^α} cos(ρτ t^α - u t) dt` with `t = s²`, Simpson rule
/// doubled until successive values differ by less than `tol`.
fn density_at(params: StableParams, u: f64, tol: f64) -> f64 {
    let a = params.alpha;
    let rt = if a == 1.0 { 0.0 } else { params.rho * (PI * a / 2.0).tan() };
    let top = 36.9f64.powf(1.0 / a).sqrt();
    let f = |s: f64| {
        let t = s * s;
        let ta = t.powf(a);
        2.0 * s * (-ta).exp() * (rt * ta - u * t).cos()
    };
    let mut n = 512;
    let mut prev = simpson(f, 0.0, top, n);
    loop {
        n *= 2;
        let cur = simpson(f, 0.0, top, n);
        if (cur - prev).abs() < tol * PI || n >= 1 << 20 {
            return (cur / PI).max(0.0);
        }
        prev = cur;
    }
}

/// Which normalisation `ψ` follows.
#[derive(Debug, Clone)]
pub enum ScaleBranch {
    /// `σ √t`.
    FiniteVariance { sigma: f64 },
    /// `F*(x) = C x^-α`, so `b(t) = (C t)^{1/α}`.
    PowerTail { alpha: f64, constant: f64, rho: f64 },
    /// Generalised inverse `inf{x > 0: F*(x) < 1/t}` of the two-sided tail of
    /// a lattice law, never below one lattice step.
    LatticeTail { model: Arc<JumpModel>, alpha: f64, rho: f64 },
}

#[derive(Debug, Clone)]
pub struct ScaleFunction {
    branch: ScaleBranch,
    factor: f64,
}

impl ScaleFunction {
    pub fn finite_variance(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("σ must be positive, got {sigma}")));
        }
        Ok(Self {
            branch: ScaleBranch::FiniteVariance { sigma },
            factor: 1.0,
        })
    }

    pub fn power_tail(alpha: f64, constant: f64, rho: f64) -> Result<Self> {
        StableParams::new(alpha, rho)?;
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::InvalidArgument(format!("tail constant must be positive, got {constant}")));
        }
        Ok(Self {
            branch: ScaleBranch::PowerTail { alpha, constant, rho },
            factor: 1.0,
        })
    }

    /// Stable branch when a declared tail index lies below 2, otherwise
    /// `σ √t`. For lattice laws the stable branch inverts the tabulated
    /// two-sided tail; `ρ` is read off the table at a quarter of its reach.
    pub fn from_model(model: &JumpModel) -> Result<Self> {
        let index = [model.right_tail(), model.left_tail()]
            .iter()
            .flatten()
            .map(|t| t.index)
            .fold(f64::INFINITY, f64::min);
        if index >= 2.0 {
            let var = model.moments().variance;
            return Self::finite_variance(var.sqrt());
        }
        let t = model.lattice_table()?;
        let reach = t.max_jump().abs().max(t.min_jump().abs());
        let probe = (reach / 4).max(1) as f64;
        let plus = model.tail(probe, Side::Plus);
        let star = model.tail(probe, Side::Star);
        let rho = if star > 0.0 { 2.0 * plus / star - 1.0 } else { 0.0 };
        StableParams::new(index, rho)?;
        Ok(Self {
            branch: ScaleBranch::LatticeTail {
                model: Arc::new(model.clone()),
                alpha: index,
                rho,
            },
            factor: 1.0,
        })
    }

    pub fn with_factor(mut self, factor: f64) -> Self {
        self.factor = factor;
        self
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn branch(&self) -> &ScaleBranch {
        &self.branch
    }

    pub fn params(&self) -> StableParams {
        match &self.branch {
            ScaleBranch::FiniteVariance { .. } => StableParams::normal(),
            ScaleBranch::PowerTail { alpha, rho, .. } | ScaleBranch::LatticeTail { alpha, rho, .. } => {
                StableParams {
                    alpha: *alpha,
                    rho: *rho,
                }
            }
        }
    }

    pub fn is_stable(&self) -> bool {
        !matches!(self.branch, ScaleBranch::FiniteVariance { .. })
    }

    /// `ψ(t)`; the calibration factor is applied on top.
    pub fn psi(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("ψ needs t > 0, got {t}")));
        }
        let raw = match &self.branch {
            ScaleBranch::FiniteVariance { sigma } => sigma * t.sqrt(),
            ScaleBranch::PowerTail { alpha, constant, .. } => (constant * t).powf(1.0 / alpha),
            ScaleBranch::LatticeTail { model, .. } => lattice_tail_inverse(model, t) as f64,
        };
        Ok(self.factor * raw)
    }
}

/// Smallest `k >= 1` with `P(ξ >= k+1) + P(ξ <= -k-1) < 1/t`: the two-sided
/// tail is constant on `(k, k+1]`, so this is the generalised inverse.
fn lattice_tail_inverse(model: &JumpModel, t: f64) -> i64 {
    let tab = model.lattice_table().expect("lattice branch holds a lattice law");
    let g = |k: i64| tab.prob_at_least(k + 1) + tab.prob_at_most(-k - 1);
    let target = 1.0 / t;
    let (mut lo, mut hi) = (0i64, tab.max_jump().abs().max(tab.min_jump().abs()));
    if g(lo) < target {
        return 1;
    }
    // g(hi) = 0 < target; g(lo) >= target
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if g(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.max(1)
}

/// `(Δ/ψ(n)) φ((x - μn)/ψ(n))`.
pub fn stone_shepp_window(model: &JumpModel, scale: &ScaleFunction, n: usize, x: f64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("the local approximation needs n >= 1".into()));
    }
    let mu = model.moments().mean;
    let psi = scale.psi(n as f64)?;
    Ok(delta / psi * stable_density(scale.params(), (x - mu * n as f64) / psi))
}

/// Distribution function of the limit law on a grid, with the analytic tail
/// outside it.
#[derive(Debug, Clone)]
pub struct StableCdf {
    params: StableParams,
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl StableCdf {
    pub fn new(params: StableParams, half_width: f64, step: f64) -> Self {
        let n = (2.0 * half_width / step).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| -half_width + i as f64 * step).collect();
        let dens: Vec<f64> = grid.iter().map(|&u| stable_density(params, u)).collect();
        let c = params.tail_constant();
        let a = params.alpha;
        let left = if a < 2.0 {
            c * (1.0 - params.rho) / 2.0 * half_width.powf(-a)
        } else {
            0.0
        };
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = left;
        cdf.push(acc);
        for i in 1..grid.len() {
            acc += 0.5 * step * (dens[i] + dens[i - 1]);
            cdf.push(acc);
        }
        Self { params, grid, cdf }
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let g = &self.grid;
        if u <= g[0] {
            return self.cdf[0];
        }
        if u >= *g.last().unwrap() {
            return *self.cdf.last().unwrap();
        }
        let h = g[1] - g[0];
        let i = (((u - g[0]) / h) as usize).min(g.len() - 2);
        let w = (u - g[i]) / h;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }

    pub fn quantile(&self, p: f64) -> f64 {
        bisect_increasing(|u| self.cdf(u) - p, self.grid[0], *self.grid.last().unwrap())
    }

    /// Median absolute deviation `median |X - median X|`.
    pub fn mad(&self) -> f64 {
        let m = self.quantile(0.5);
        let hw = self.grid.last().unwrap() - m;
        bisect_increasing(|d| self.cdf(m + d) - self.cdf(m - d) - 0.5, 0.0, hw)
    }
}

/// Record of the fitted scale factor.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub n: usize,
    pub alpha: f64,
    pub rho: f64,
    pub empirical_mad: f64,
    pub limit_mad: f64,
    /// Multiply `ψ` by this factor.
    pub factor: f64,
    pub note: String,
}

/// Fits the factor by comparing the MAD of `(S_n - μn)/ψ(n)` under the exact
/// lattice law at step `n` with the MAD of the limit law.
pub fn calibrate(model: &JumpModel, scale: &ScaleFunction, n: usize) -> Result<Calibration> {
    let tab = model.lattice_table()?;
    let mu = model.moments().mean;
    let psi = scale.psi(n as f64)?;
    let centre = mu * n as f64;
    let lo = (n as i64 * tab.min_jump()).max((centre - 60.0 * psi) as i64).min(0);
    let hi = (n as i64 * tab.max_jump()).min((centre + 60.0 * psi) as i64).max(0);
    let mut law = LatticeLaw::start(lo, hi)?;
    for _ in 0..n {
        law = step(&law, model)?;
    }
    let z: Vec<(f64, f64)> = law
        .probs()
        .iter()
        .enumerate()
        .map(|(i, p)| (((law.offset() + i as i64) as f64 - centre) / psi, *p))
        .collect();
    let below = law.absorbed_below();
    let quantile = |pts: &[(f64, f64)], base: f64, p: f64| {
        let mut acc = base;
        for &(v, w) in pts {
            acc += w;
            if acc >= p {
                return v;
            }
        }
        pts.last().map_or(0.0, |x| x.0)
    };
    let med = quantile(&z, below, 0.5);
    let mut dev: Vec<(f64, f64)> = z.iter().map(|&(v, w)| ((v - med).abs(), w)).collect();
    dev.sort_by(|a, b| a.0.total_cmp(&b.0));
    // absorbed mass lies beyond every window point, so it sits at the top
    let empirical_mad = quantile(&dev, 0.0, 0.5);
    let params = scale.params();
    let limit_mad = StableCdf::new(params, 60.0, 0.02).mad();
    Ok(Calibration {
        n,
        alpha: params.alpha,
        rho: params.rho,
        empirical_mad,
        limit_mad,
        factor: empirical_mad / limit_mad,
        note: "scale factor fitted by matching median absolute deviations; not derived from theory".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::TailSide;
    use approx::assert_abs_diff_eq;

    /// Composite trapezoid on `[0, T]` in the original variable.
    fn trapezoid_density(alpha: f64, rho: f64, u: f64, n: usize) -> f64 {
        let rt = rho * (PI * alpha / 2.0).tan();
        let top = 36.9f64.powf(1.0 / alpha);
        let h = top / n as f64;
        let f = |t: f64| {
            let ta = t.powf(alpha);
            (-ta).exp() * (rt * ta - u * t).cos()
        };
        let mut s = 0.5 * (f(0.0) + f(top));
        for i in 1..n {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn density_examples() {
        assert_abs_diff_eq!(stable_density(StableParams::normal(), 0.0), 0.398_942_28, epsilon = 1e-8);
        let cauchy = StableParams::new(1.0, 0.0).unwrap();
        assert_abs_diff_eq!(stable_density(cauchy, 0.0), 1.0 / PI, epsilon = 1e-7);
        let p = StableParams::new(1.5, 0.0).unwrap();
        let f0 = stable_density(p, 0.0);
        assert_abs_diff_eq!(f0, gamma(5.0 / 3.0) / PI, epsilon = 1e-7);
        assert_abs_diff_eq!(f0, trapezoid_density(1.5, 0.0, 0.0, 400_000), epsilon = 1e-6);
        let skew = StableParams::new(1.5, 1.0).unwrap();
        for u in [-3.0, 0.5, 4.0, 19.0] {
            assert_abs_diff_eq!(stable_density(skew, u), trapezoid_density(1.5, 1.0, u, 400_000), epsilon = 1e-6);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for (a, r) in [(1.5, 0.0), (1.5, 1.0), (1.8, -0.5)] {
            let p = StableParams::new(a, r).unwrap();
            let cdf = StableCdf::new(p, 50.0, 0.02);
            let c = p.tail_constant();
            let right = c * (1.0 + r) / 2.0 * 50f64.powf(-a);
            let total = cdf.cdf(50.0) + right;
            assert!((total - 1.0).abs() < 1e-4, "α={a} ρ={r}: {total}");
        }
    }

    #[test]
    fn psi_examples() {
        let s = ScaleFunction::finite_variance(2.0).unwrap();
        assert_abs_diff_eq!(s.psi(100.0).unwrap(), 20.0, epsilon = 1e-12);
        let b = ScaleFunction::power_tail(1.5, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(b.psi(1000.0).unwrap(), 100.0, epsilon = 1e-9);
        assert!(s.psi(0.0).is_err());
    }

    #[test]
    fn lattice_inverse_brackets_the_tail() {
        let m = JumpModel::pareto_lattice(1.5, 100_000, TailSide::Right).unwrap();
        let s = ScaleFunction::from_model(&m).unwrap();
        assert!(s.is_stable());
        assert_abs_diff_eq!(s.params().rho(), 1.0, epsilon = 1e-12);
        let star = |x: f64| m.tail(x, Side::Star);
        let mut prev = 0.0;
        for t in [1.0001, 2.0, 10.0, 1e3, 1e5] {
            let b = s.psi(t).unwrap();
            assert!(b >= prev);
            prev = b;
            assert!(star(b + 1e-9) < 1.0 / t);
            if b > 1.0 {
                assert!(star(b - 1e-9) >= 1.0 / t);
            }
        }
    }

    #[test]
    fn local_window_examples() {
        let m = JumpModel::lattice(1, vec![0.5, 0.5]).unwrap();
        let s = ScaleFunction::finite_variance(0.5).unwrap();
        let v = stone_shepp_window(&m, &s, 400, 600.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, std_normal_pdf(0.0) / 10.0, epsilon = 1e-12);
        let exact = LatticeLaw::exact(&m, 400).unwrap().prob(600);
        assert!((v / exact - 1.0).abs() < 0.05);
        let small = stone_shepp_window(&m, &s, 400, 610.0, 1e-3).unwrap();
        let smaller = stone_shepp_window(&m, &s, 400, 610.0, 5e-4).unwrap();
        assert_abs_diff_eq!(small, 2.0 * smaller, epsilon = 1e-15);

        let law = LatticeLaw::exact(&m, 100).unwrap();
        let total: f64 = (law.offset()..=law.window().1)
            .map(|x| stone_shepp_window(&m, &s, 100, x as f64, 1.0).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn normal_calibration_is_neutral() {
        let m = JumpModel::lattice(-1, vec![0.2, 0.0, 0.5, 0.3]).unwrap();
        let s = ScaleFunction::finite_variance(m.moments().variance.sqrt()).unwrap();
        let c = calibrate(&m, &s, 2000).unwrap();
        assert!((c.factor - 1.0).abs() < 0.02, "{c:?}");
    }
}
