//! Exact laws of lattice random walks on bounded windows, the weighted sums
//! `h(x,Δ) = Σ a_n P(S_n ∈ [x, x+Δ))` and `H(x) = Σ a_n P(S_n < x)` with
//! certified truncation bounds, and a Monte Carlo estimator for laws without
//! a lattice table.
//!
//! All sweeps run in lattice units (support divided by the span); the public
//! entry points take `x` and `Δ` in original units.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cramer::{cumulant, lambda_min, solve_lambda_q};
use crate::dist::{Family, JumpModel, LatticeTable};
use crate::error::{Error, Result};
use crate::numeric::bisect_increasing;
use crate::weights::{Envelope, WeightSeq};

/// Default absolute target for the certified truncation bound.
pub const DEFAULT_RESIDUAL_TARGET: f64 = 1e-12;
/// Escape probability aimed for when sizing windows of signed walks.
const ESCAPE_TARGET: f64 = 1e-18;
const MAX_WINDOW: i64 = 50_000_000;
const MAX_HORIZON: usize = 200_000_000;
/// Work per step above which the convolution is split across threads.
const PARALLEL_WORK: usize = 1 << 18;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Tilted,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub value: f64,
    /// Bound on everything the sweep left out: the tail `n > n_max` and mass
    /// that escaped the window.
    pub residual_bound: f64,
    pub n_max: usize,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub residual_target: f64,
    /// Sum exponentially weighted series directly instead of tilting.
    pub force_direct: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            residual_target: DEFAULT_RESIDUAL_TARGET,
            force_direct: false,
        }
    }
}

/// Law of `S_n` restricted to the window `[offset, offset + len)`, with the
/// mass that has left the window on either side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeLaw {
    offset: i64,
    probs: Vec<f64>,
    absorbed_above: f64,
    absorbed_below: f64,
    n: usize,
}

impl LatticeLaw {
    /// `S_0 = 0` on the window `[lo, hi]`.
    pub fn start(lo: i64, hi: i64) -> Result<Self> {
        if lo > 0 || hi < 0 || hi - lo >= MAX_WINDOW {
            return Err(Error::InvalidArgument(format!(
                "window [{lo}, {hi}] must contain 0 and be shorter than {MAX_WINDOW}"
            )));
        }
        let mut probs = vec![0.0; (hi - lo + 1) as usize];
        probs[(-lo) as usize] = 1.0;
        Ok(Self {
            offset: lo,
            probs,
            absorbed_above: 0.0,
            absorbed_below: 0.0,
            n: 0,
        })
    }

    /// Window `[min(0, x_lo - margin), max(0, x_hi + margin)]`. For models
    /// with jumps of both signs the margin must be at least the largest jump
    /// magnitude.
    pub fn for_targets(model: &JumpModel, x_lo: i64, x_hi: i64, margin: i64) -> Result<Self> {
        let t = model.lattice_table()?;
        let reach = t.max_jump().abs().max(t.min_jump().abs());
        if x_lo > x_hi || margin < 0 || (t.min_jump() < 0 && margin < reach) {
            return Err(Error::WindowMisconfigured {
                lo: x_lo - margin,
                hi: x_hi + margin,
                x_lo,
                x_hi,
                margin,
            });
        }
        Self::start((x_lo - margin).min(0), (x_hi + margin).max(0))
    }

    /// Full law of `S_n` with no truncation.
    pub fn exact(model: &JumpModel, n: usize) -> Result<Self> {
        let t = model.lattice_table()?;
        let n = n as i64;
        let mut law = Self::start((n * t.min_jump()).min(0), (n * t.max_jump()).max(0))?;
        for _ in 0..n {
            law = step(&law, model)?;
        }
        Ok(law)
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn window(&self) -> (i64, i64) {
        (self.offset, self.offset + self.probs.len() as i64 - 1)
    }

    pub fn absorbed_above(&self) -> f64 {
        self.absorbed_above
    }

    pub fn absorbed_below(&self) -> f64 {
        self.absorbed_below
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `P(S_n = k)` as held in the window (zero outside).
    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    /// Window mass plus absorbed mass.
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.absorbed_above + self.absorbed_below
    }

    pub fn mean_in_window(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * (self.offset + i as i64) as f64)
            .sum()
    }
}

/// One convolution step. Mass that leaves the window is added to the
/// absorbed bins and never re-enters.
pub fn step(law: &LatticeLaw, model: &JumpModel) -> Result<LatticeLaw> {
    let table = model.lattice_table()?;
    let kernel = Kernel::new(table, law.probs.len() as i64);
    let mut next = vec![0.0; law.probs.len()];
    let act = active_range(&law.probs);
    let (up, down, _) = kernel.advance(law.offset, &law.probs, act, &mut next);
    Ok(LatticeLaw {
        offset: law.offset,
        probs: next,
        absorbed_above: law.absorbed_above + up,
        absorbed_below: law.absorbed_below + down,
        n: law.n + 1,
    })
}

fn active_range(p: &[f64]) -> Option<(usize, usize)> {
    let a = p.iter().position(|&v| v != 0.0)?;
    let b = p.iter().rposition(|&v| v != 0.0)?;
    Some((a, b))
}

/// Jump table restricted to jumps that can stay inside a window of the given
/// width; the rest is accounted for through the tail sums of the full table.
struct Kernel<'a> {
    table: &'a LatticeTable,
    jumps: Vec<(i64, f64)>,
    jmin: i64,
    jmax: i64,
}

impl<'a> Kernel<'a> {
    fn new(table: &'a LatticeTable, width: i64) -> Self {
        let jumps: Vec<(i64, f64)> = table.support().filter(|(k, _)| k.abs() < width).collect();
        let jmin = jumps.first().map_or(0, |j| j.0);
        let jmax = jumps.last().map_or(0, |j| j.0);
        Self {
            table,
            jumps,
            jmin,
            jmax,
        }
    }

    /// Writes the next law into `next` (overwritten) and returns the masses
    /// leaving above and below and the new active index range.
    fn advance(
        &self,
        lo: i64,
        cur: &[f64],
        act: Option<(usize, usize)>,
        next: &mut [f64],
    ) -> (f64, f64, Option<(usize, usize)>) {
        next.iter_mut().for_each(|v| *v = 0.0);
        let Some((a0, a1)) = act else {
            return (0.0, 0.0, None);
        };
        let w = cur.len() as i64;
        let hi = lo + w - 1;
        let mut up = 0.0;
        let mut down = 0.0;
        for (i, &p) in cur.iter().enumerate().take(a1 + 1).skip(a0) {
            if p != 0.0 {
                let pos = lo + i as i64;
                up += p * self.table.prob_at_least(hi - pos + 1);
                down += p * self.table.prob_at_most(lo - pos - 1);
            }
        }
        if self.jumps.is_empty() {
            return (up, down, None);
        }
        let (a0, a1) = (a0 as i64, a1 as i64);
        let work = (a1 - a0 + 1) as usize * self.jumps.len();
        let jumps = &self.jumps;
        // each output cell sums the jumps in table order, so serial and
        // parallel runs agree bit for bit
        let fill = |o0: i64, out: &mut [f64]| {
            let o1 = o0 + out.len() as i64 - 1;
            for &(j, pj) in jumps {
                let s0 = a0.max(o0 - j);
                let s1 = a1.min(o1 - j);
                if s0 > s1 {
                    continue;
                }
                let src = &cur[s0 as usize..=s1 as usize];
                let d0 = (s0 + j - o0) as usize;
                for (d, s) in out[d0..d0 + src.len()].iter_mut().zip(src) {
                    *d += pj * s;
                }
            }
        };
        if work >= PARALLEL_WORK {
            next.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, out)| fill((c * CHUNK) as i64, out));
        } else {
            fill(0, next);
        }
        let n0 = (a0 + self.jmin).max(0);
        let n1 = (a1 + self.jmax).min(w - 1);
        let act = if n0 <= n1 {
            Some((n0 as usize, n1 as usize))
        } else {
            None
        };
        (up, down, act)
    }
}

/// Rolling window law driven by a kernel.
struct Sweep<'a> {
    kernel: Kernel<'a>,
    lo: i64,
    cur: Vec<f64>,
    next: Vec<f64>,
    act: Option<(usize, usize)>,
    above: f64,
    below: f64,
}

impl<'a> Sweep<'a> {
    fn new(table: &'a LatticeTable, lo: i64, hi: i64) -> Result<Self> {
        let law = LatticeLaw::start(lo, hi)?;
        let w = law.probs.len();
        Ok(Self {
            kernel: Kernel::new(table, w as i64),
            lo,
            act: Some(((-lo) as usize, (-lo) as usize)),
            cur: law.probs,
            next: vec![0.0; w],
            above: 0.0,
            below: 0.0,
        })
    }

    fn step(&mut self) {
        let (up, down, act) = self.kernel.advance(self.lo, &self.cur, self.act, &mut self.next);
        std::mem::swap(&mut self.cur, &mut self.next);
        self.above += up;
        self.below += down;
        self.act = act;
    }

    fn prob(&self, k: i64) -> f64 {
        let i = k - self.lo;
        if i < 0 || i >= self.cur.len() as i64 {
            0.0
        } else {
            self.cur[i as usize]
        }
    }
}

/// Chernoff bounds `P(S_n < y) <= exp(n L(λ) - λ y)`, `λ < 0`, minimised over
/// a fixed grid of `λ`.
pub(crate) struct Chernoff {
    grid: Vec<(f64, f64)>,
    /// `S_n >= n` surely (lattice with smallest jump at least 1).
    unit_floor: bool,
}

impl Chernoff {
    pub(crate) fn new(model: &JumpModel) -> Result<Self> {
        let unit_floor = model.table().is_some_and(|t| t.min_jump() >= 1);
        let lower = match lambda_zero(model) {
            Ok(Some(l0)) => l0,
            _ => -50.0,
        };
        const K: usize = 256;
        let grid: Vec<(f64, f64)> = (1..=K)
            .map(|k| {
                let s = k as f64 / K as f64;
                let lam = lower * s * s;
                (lam, cumulant(model, lam))
            })
            .filter(|(_, l)| l.is_finite() && *l < 0.0)
            .collect();
        if grid.is_empty() && !unit_floor {
            return Err(Error::MgfUnavailable(
                "no λ < 0 with L(λ) < 0; Chernoff truncation bounds are unavailable".into(),
            ));
        }
        Ok(Self { grid, unit_floor })
    }

    /// `ln Σ_{m>n} env(m) P(S_m < y)`.
    pub(crate) fn log_tail(&self, env: &Envelope, y: f64, n: usize) -> f64 {
        if env.c == 0.0 || env.last.is_some_and(|l| n >= l) {
            return f64::NEG_INFINITY;
        }
        if self.unit_floor && (n + 1) as f64 >= y {
            return f64::NEG_INFINITY;
        }
        let mut best = f64::INFINITY;
        for &(lam, l) in &self.grid {
            let rho = env.q + l;
            if rho >= 0.0 {
                continue;
            }
            let v = env.c.ln() + log_power_geometric_tail(env.gamma, rho, n + 1) - lam * y;
            best = best.min(v);
        }
        best
    }

    /// Smallest `n_max` (up to doubling granularity refined by bisection)
    /// whose tail bound is below `target`, with the bound achieved.
    pub(crate) fn horizon(&self, env: &Envelope, y: f64, target: f64) -> Result<(usize, f64)> {
        let lt = target.ln();
        if self.unit_floor {
            let n = (y.ceil() as i64 - 1).max(0) as usize;
            let n = match env.last {
                Some(l) => n.min(l),
                None => n,
            };
            return Ok((n, 0.0));
        }
        if self.log_tail(env, y, 0) <= lt {
            return Ok((0, self.log_tail(env, y, 0).exp()));
        }
        let mut hi = 16usize;
        while self.log_tail(env, y, hi) > lt {
            hi *= 2;
            if hi > MAX_HORIZON {
                return Err(Error::Divergent(format!(
                    "no certified truncation point below {MAX_HORIZON} steps"
                )));
            }
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.log_tail(env, y, mid) <= lt {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok((hi, self.log_tail(env, y, hi).exp()))
    }
}

/// `ln Σ_{m>=m0} max(m,1)^γ e^{ρ m}` bounded in closed form, `ρ < 0`.
fn log_power_geometric_tail(gamma: f64, rho: f64, m0: usize) -> f64 {
    let m = m0.max(1) as f64;
    let head = gamma * m.ln() + rho * m;
    if gamma <= 0.0 {
        head - (-rho.exp_m1()).ln()
    } else {
        // successive ratios are at most (1 + 1/m)^γ e^ρ from m on
        let log_kappa = gamma * (1.0 / m).ln_1p() + rho;
        if log_kappa >= 0.0 {
            f64::INFINITY
        } else {
            head - (-log_kappa.exp_m1()).ln()
        }
    }
}

/// Negative root `λ0` of `L(λ) = 0`, when `L` returns to zero left of its
/// minimum. `P(inf_n S_n <= -m) <= e^{λ0 m}`.
pub(crate) fn lambda_zero(model: &JumpModel) -> Result<Option<f64>> {
    let (lmin, l_at_min) = lambda_min(model)?;
    if !lmin.is_finite() || l_at_min >= 0.0 {
        return Ok(None);
    }
    let mut lo = 2.0 * lmin;
    while cumulant(model, lo) <= 0.0 {
        lo *= 2.0;
        if lo < -1e6 {
            return Ok(None);
        }
    }
    let root = bisect_increasing(|l| -cumulant(model, l), lo, lmin);
    // step towards 0 so that L(λ) <= 0 holds at the returned point
    let mut lam = root;
    let mut nudge = 1e-14 * root.abs().max(1.0);
    while cumulant(model, lam) > 0.0 {
        lam = (lam + nudge).min(lmin);
        nudge *= 2.0;
    }
    Ok(Some(lam))
}

/// Window and escape bound for a sweep whose targets lie in `[t_lo, t_hi]`.
struct Layout {
    lo: i64,
    hi: i64,
    /// Bound on the expected number of visits to any point by paths after
    /// they first left the window, per unit weight.
    escape: f64,
}

fn layout(model: &JumpModel, t_lo: i64, t_hi: i64) -> Result<Layout> {
    let table = model.lattice_table()?;
    let (lo, hi, escape) = if table.min_jump() >= 0 {
        (t_lo.min(0), t_hi.max(0), 0.0)
    } else {
        let l0 = lambda_zero(model)?.ok_or_else(|| {
            Error::Precondition("signed walk without a negative root of L; is the mean positive?".into())
        })?;
        let (_, l_min) = lambda_min(model)?;
        // Green's function at 0: Σ P(S_n = 0) <= Σ e^{n L_min}
        let green = 1.0 / (-l_min.exp_m1());
        let m = (ESCAPE_TARGET.ln() / l0).ceil() as i64;
        let theta_m = (l0 * (m + 1) as f64).exp();
        ((t_lo.min(0)) - m, t_hi.max(0) + m, 2.0 * theta_m * green)
    };
    if hi - lo >= MAX_WINDOW {
        return Err(Error::Precondition(format!(
            "window [{lo}, {hi}] exceeds {MAX_WINDOW} lattice points"
        )));
    }
    Ok(Layout { lo, hi, escape })
}

/// Which series is being summed, for divergence screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Increment,
    Cumulative,
}

/// Refuses series that diverge for the law described by the declared left
/// majorant: with `F_-(t) ~ t^-β` and nonnegative weights of index `γ`,
/// `Σ a_n F_-(n)` diverges once `γ >= β - 1`, and then `h(x,Δ) = ∞`; the
/// cumulative series needs one more power.
pub fn divergence_check(model: &JumpModel, weights: &WeightSeq, quantity: Quantity) -> Result<()> {
    let (Some(w), Some(g)) = (model.left_tail(), weights.growth_index()) else {
        return Ok(());
    };
    if !weights.is_nonnegative() {
        return Ok(());
    }
    let slack = match quantity {
        Quantity::Increment => 1.0,
        Quantity::Cumulative => 2.0,
    };
    if g >= w.index - slack {
        return Err(Error::Divergent(format!(
            "weights of index {g} against a left tail of index {}: Σ a_n F_-(n) = ∞, so the sum is infinite",
            w.index
        )));
    }
    Ok(())
}

/// Lattice points `k` with `x <= k*span < x + Δ`.
fn points(x: f64, delta: f64, span: i64) -> Result<(i64, i64)> {
    let s = span as f64;
    let d = delta / s;
    let dk = d.round();
    if !(delta > 0.0) || dk < 1.0 || (d - dk).abs() > 1e-9 * d.max(1.0) {
        return Err(Error::DeltaNotMultipleOfSpan { delta, span: s });
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("x must be finite, got {x}")));
    }
    let k0 = (x / s - 1e-9).ceil() as i64;
    Ok((k0, k0 + dk as i64 - 1))
}

fn positive_mean(model: &JumpModel) -> Result<()> {
    model.renewal_moments().map(|_| ())
}

/// Σ_n w(n) P(S_n = t) for every `t` in `[t_lo, t_hi]`, for `n <= n_max`.
/// Returns the accumulators, `max |w(n)|` and the escape bound per point.
fn sweep_points<F: Fn(usize) -> f64>(
    model: &JumpModel,
    w: F,
    t_lo: i64,
    t_hi: i64,
    n_max: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let table = model.lattice_table()?;
    let lay = layout(model, t_lo, t_hi)?;
    let mut sw = Sweep::new(table, lay.lo, lay.hi)?;
    let mut acc = vec![0.0; (t_hi - t_lo + 1) as usize];
    let mut sup = 0.0f64;
    for n in 0..=n_max {
        let a = w(n);
        sup = sup.max(a.abs());
        if a != 0.0 {
            for (i, v) in acc.iter_mut().enumerate() {
                *v += a * sw.prob(t_lo + i as i64);
            }
        }
        if n < n_max {
            sw.step();
            if sw.act.is_none() {
                break;
            }
        }
    }
    Ok((acc, sup, lay.escape))
}

/// `h(x,Δ)` for every `x` of the grid in one sweep. Exponential weights
/// `e^{qn} b_n` with `q != 0` go through the tilted walk unless
/// `force_direct` is set.
pub fn h_exact(model: &JumpModel, weights: &WeightSeq, xs: &[f64], delta: f64) -> Result<Vec<EvalResult>> {
    h_exact_with(model, weights, xs, delta, &ExactOptions::default())
}

pub fn h_exact_with(
    model: &JumpModel,
    weights: &WeightSeq,
    xs: &[f64],
    delta: f64,
    opts: &ExactOptions,
) -> Result<Vec<EvalResult>> {
    model.lattice_table()?;
    weights.validate()?;
    if let WeightSeq::Exp { q, base } = weights {
        if *q != 0.0 && !opts.force_direct {
            return h_exact_tilted(model, *q, base, xs, delta, opts);
        }
    }
    positive_mean(model)?;
    divergence_check(model, weights, Quantity::Increment)?;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let pts = xs
        .iter()
        .map(|&x| points(x, delta, model.span()))
        .collect::<Result<Vec<_>>>()?;
    let t_lo = pts.iter().map(|p| p.0).min().unwrap();
    let t_hi = pts.iter().map(|p| p.1).max().unwrap();
    let env = weights.envelope();
    let ch = Chernoff::new(model)?;
    let (n_max, _) = ch.horizon(&env, (t_hi + 1) as f64, opts.residual_target)?;
    let (acc, sup, escape) = sweep_points(model, |n| weights.eval(n), t_lo, t_hi, n_max)?;
    Ok(pts
        .iter()
        .map(|&(k0, k1)| {
            let value = acc[(k0 - t_lo) as usize..=(k1 - t_lo) as usize].iter().sum();
            let trunc = ch.log_tail(&env, (k1 + 1) as f64, n_max).exp();
            EvalResult {
                value,
                residual_bound: trunc + (k1 - k0 + 1) as f64 * sup * escape,
                n_max,
                method: Method::Direct,
            }
        })
        .collect())
}

/// `Σ b_n e^{qn} P(S_n ∈ [x, x+Δ))` evaluated as
/// `Σ_t e^{-λ_q t} Σ_n b_n P(S_n^{(λ_q)} = t)` on the tilted walk.
pub fn h_exact_tilted(
    model: &JumpModel,
    q: f64,
    base: &WeightSeq,
    xs: &[f64],
    delta: f64,
    opts: &ExactOptions,
) -> Result<Vec<EvalResult>> {
    model.lattice_table()?;
    base.validate()?;
    positive_mean(model)?;
    let ctx = solve_lambda_q(model, q)?;
    let lam = ctx.lambda_q;
    let tilted = &ctx.tilted;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let pts = xs
        .iter()
        .map(|&x| points(x, delta, model.span()))
        .collect::<Result<Vec<_>>>()?;
    let t_lo = pts.iter().map(|p| p.0).min().unwrap();
    let t_hi = pts.iter().map(|p| p.1).max().unwrap();
    let env = base.envelope();
    let ch = Chernoff::new(tilted)?;
    let (n_max, _) = ch.horizon(&env, (t_hi + 1) as f64, opts.residual_target)?;
    let (acc, sup, escape) = sweep_points(tilted, |n| base.eval(n), t_lo, t_hi, n_max)?;
    Ok(pts
        .iter()
        .map(|&(k0, k1)| {
            let mut value = 0.0;
            let mut scale = 0.0;
            for t in k0..=k1 {
                let f = (-lam * t as f64).exp();
                value += f * acc[(t - t_lo) as usize];
                scale += f;
            }
            let trunc = ch.log_tail(&env, (k1 + 1) as f64, n_max).exp();
            EvalResult {
                value,
                residual_bound: scale * (trunc + sup * escape),
                n_max,
                method: Method::Tilted,
            }
        })
        .collect())
}

/// `H(x) = Σ a_n P(S_n < x)` for every `x` of the grid in one sweep.
pub fn cumulative_exact(model: &JumpModel, weights: &WeightSeq, xs: &[f64]) -> Result<Vec<EvalResult>> {
    cumulative_exact_with(model, weights, xs, &ExactOptions::default())
}

pub fn cumulative_exact_with(
    model: &JumpModel,
    weights: &WeightSeq,
    xs: &[f64],
    opts: &ExactOptions,
) -> Result<Vec<EvalResult>> {
    let table = model.lattice_table()?;
    weights.validate()?;
    positive_mean(model)?;
    divergence_check(model, weights, Quantity::Cumulative)?;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let s = model.span() as f64;
    // P(S_n < x) = P(S_n <= k) with k the last lattice point below x
    let ks: Vec<i64> = xs
        .iter()
        .map(|&x| {
            if x.is_finite() {
                Ok((x / s - 1e-9).ceil() as i64 - 1)
            } else {
                Err(Error::InvalidArgument(format!("x must be finite, got {x}")))
            }
        })
        .collect::<Result<_>>()?;
    let k_hi = *ks.iter().max().unwrap();
    let k_lo = *ks.iter().min().unwrap();
    let env = weights.envelope();
    let ch = Chernoff::new(model)?;
    let (n_max, _) = ch.horizon(&env, (k_hi + 1) as f64, opts.residual_target)?;
    let lay = layout(model, k_lo.min(0), k_hi)?;
    let mut sw = Sweep::new(table, lay.lo, lay.hi)?;
    let mut acc = vec![0.0; xs.len()];
    let mut abs_sum = 0.0;
    let mut cdf = Vec::new();
    for n in 0..=n_max {
        let a = weights.eval(n);
        abs_sum += a.abs();
        if a != 0.0 {
            cdf.clear();
            let mut run = sw.below;
            let top = (k_hi.min(lay.hi) - lay.lo + 1).max(0) as usize;
            for &p in &sw.cur[..top] {
                run += p;
                cdf.push(run);
            }
            for (v, &k) in acc.iter_mut().zip(&ks) {
                let c = if k < lay.lo {
                    0.0
                } else {
                    cdf[((k - lay.lo) as usize).min(top - 1)]
                };
                *v += a * c;
            }
        }
        if n < n_max {
            sw.step();
        }
    }
    Ok(acc
        .into_iter()
        .zip(&ks)
        .map(|(value, &k)| EvalResult {
            value,
            residual_bound: ch.log_tail(&env, (k + 1) as f64, n_max).exp() + abs_sum * lay.escape,
            n_max,
            method: Method::Direct,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub paths: usize,
    /// Last step simulated; chosen from a Chernoff bound when absent.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub block_size: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            paths: 10_000,
            horizon: None,
            seed: 0,
            block_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedDescriptor {
    pub root: u64,
    pub generator: String,
    /// Block `i` uses stream `i` of the generator seeded with `root`.
    pub blocks: usize,
    pub block_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: SeedDescriptor,
    pub horizon: usize,
    /// Bound on `Σ_{n>horizon} |a_n| P(S_n < x+Δ)`; infinite when no bound
    /// is available.
    pub drift_bound: f64,
}

fn never_decreases(model: &JumpModel) -> bool {
    match model.family() {
        Family::Lattice(t) => t.min_jump() >= 0,
        Family::Normal { .. } => false,
        Family::ShiftedExponential { shift, .. } => *shift >= 0.0,
        Family::ParetoShifted { shift, .. } => *shift >= -1.0,
    }
}

/// Mean over simulated paths of `Σ_{n<=horizon} a_n 1{S_n ∈ [x, x+Δ)}`.
pub fn h_mc(model: &JumpModel, weights: &WeightSeq, x: f64, delta: f64, opts: &McOptions) -> Result<McEstimate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("Δ must be positive, got {delta}")));
    }
    if opts.paths < 2 || opts.block_size == 0 {
        return Err(Error::InvalidArgument("need at least 2 paths and a positive block size".into()));
    }
    weights.validate()?;
    let mean = model.renewal_moments()?.mean;
    let s = model.span() as f64;
    let y = (x + delta) / s;
    let env = weights.envelope();
    let (horizon, drift_bound) = match (opts.horizon, Chernoff::new(model)) {
        (Some(h), Ok(ch)) => (h, ch.log_tail(&env, y, h).exp()),
        (Some(h), Err(_)) => (h, f64::INFINITY),
        (None, Ok(ch)) => ch.horizon(&env, y, DEFAULT_RESIDUAL_TARGET.max(1e-9))?,
        (None, Err(_)) => (((2.0 * y / mean).ceil() as usize).max(16), f64::INFINITY),
    };
    let sampler = model.sampler();
    let stop_early = never_decreases(model);
    let blocks = opts.paths.div_ceil(opts.block_size);
    let a: Vec<f64> = (0..=horizon).map(|n| weights.eval(n)).collect();
    let inside = |v: f64| v >= x && v < x + delta;
    let per_block: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let count = opts.block_size.min(opts.paths - b * opts.block_size);
            (0..count)
                .map(|_| {
                    let mut pos = 0.0;
                    let mut acc = if inside(0.0) { a[0] } else { 0.0 };
                    for &an in &a[1..] {
                        pos += s * sampler.sample(&mut rng);
                        if inside(pos) {
                            acc += an;
                        } else if stop_early && pos >= x + delta {
                            break;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = per_block.into_iter().flatten().collect();
    let n = values.len() as f64;
    let estimate = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        estimate,
        stderr: (var / n).sqrt(),
        paths: values.len(),
        seed: SeedDescriptor {
            root: opts.seed,
            generator: "chacha8".into(),
            blocks,
            block_size: opts.block_size,
        },
        horizon,
        drift_bound,
    })
}

/// Σ_{n in [n_lo, n_hi]} P(S_n ∈ [t_lo, t_hi]) with unit weights, in lattice
/// units; `n_hi = None` sums to infinity with a certified tail.
pub(crate) fn visits(
    model: &JumpModel,
    t_lo: i64,
    t_hi: i64,
    n_lo: usize,
    n_hi: Option<usize>,
) -> Result<EvalResult> {
    positive_mean(model)?;
    let env = Envelope {
        c: 1.0,
        gamma: 0.0,
        q: 0.0,
        last: n_hi,
    };
    let ch = Chernoff::new(model)?;
    let (n_max, _) = ch.horizon(&env, (t_hi + 1) as f64, DEFAULT_RESIDUAL_TARGET)?;
    let n_max = n_max.max(n_lo);
    let w = |n: usize| if n >= n_lo && n_hi.is_none_or(|h| n <= h) { 1.0 } else { 0.0 };
    let (acc, sup, escape) = sweep_points(model, w, t_lo, t_hi, n_max)?;
    Ok(EvalResult {
        value: acc.iter().sum(),
        residual_bound: ch.log_tail(&env, (t_hi + 1) as f64, n_max).exp()
            + (t_hi - t_lo + 1) as f64 * sup * escape,
        n_max,
        method: Method::Direct,
    })
}

/// Lower bound on `P(max_{k<=n} S_k >= x)` from the walk killed on reaching
/// `x` (lattice units), and the mass lost below the window.
pub(crate) fn running_max_tail(model: &JumpModel, n: usize, x: i64) -> Result<(f64, f64)> {
    model.lattice_table()?;
    if x <= 0 {
        return Ok((1.0, 0.0));
    }
    let law = killed_law(model, n, escape_floor(model, n)?, x - 1)?;
    Ok((law.above, law.below))
}

/// Sub-law of `S_n` over paths that never left `[lo, hi]` (lattice units,
/// `lo <= 0 <= hi`), with the masses that left above and below.
pub(crate) struct KilledLaw {
    pub offset: i64,
    pub probs: Vec<f64>,
    pub above: f64,
    pub below: f64,
}

pub(crate) fn killed_law(model: &JumpModel, n: usize, lo: i64, hi: i64) -> Result<KilledLaw> {
    let table = model.lattice_table()?;
    if lo > 0 || hi < 0 || hi - lo >= MAX_WINDOW {
        return Err(Error::Precondition(format!("killed-walk window [{lo}, {hi}] is unusable")));
    }
    let mut sw = Sweep::new(table, lo, hi)?;
    for _ in 0..n {
        sw.step();
    }
    Ok(KilledLaw {
        offset: lo,
        probs: (lo..=hi).map(|k| sw.prob(k)).collect(),
        above: sw.above,
        below: sw.below,
    })
}

/// Lower window edge below which a signed walk started at 0 rarely goes:
/// `P(inf S <= lo) <= ESCAPE_TARGET`.
pub(crate) fn escape_floor(model: &JumpModel, n: usize) -> Result<i64> {
    let table = model.lattice_table()?;
    if table.min_jump() >= 0 {
        return Ok(0);
    }
    let reach = (n as i64).saturating_mul(table.min_jump());
    Ok(match lambda_zero(model)? {
        Some(l0) => reach.max(-((ESCAPE_TARGET.ln() / l0).ceil() as i64)),
        None => reach,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> JumpModel {
        JumpModel::lattice(1, vec![0.5, 0.5]).unwrap()
    }

    fn signed() -> JumpModel {
        JumpModel::lattice(-1, vec![0.2, 0.0, 0.5, 0.3]).unwrap()
    }

    /// Brute force over all jump sequences.
    fn enumerate(model: &JumpModel, n: usize) -> std::collections::BTreeMap<i64, f64> {
        let t = model.lattice_table().unwrap();
        let mut out = std::collections::BTreeMap::new();
        out.insert(0i64, 1.0);
        for _ in 0..n {
            let mut next = std::collections::BTreeMap::new();
            for (&s, &p) in &out {
                for (k, q) in t.support() {
                    *next.entry(s + k).or_insert(0.0) += p * q;
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn step_examples() {
        let law = LatticeLaw::start(0, 10).unwrap();
        assert_eq!(law.prob(0), 1.0);
        let m = two_point();
        let law = step(&step(&law, &m).unwrap(), &m).unwrap();
        assert_eq!(law.prob(2), 0.25);
        assert_eq!(law.prob(3), 0.5);
        assert_eq!(law.prob(4), 0.25);
        assert_eq!(law.n(), 2);

        let law = LatticeLaw::exact(&signed(), 30).unwrap();
        assert_abs_diff_eq!(law.mean_in_window(), 30.0 * 0.9, epsilon = 1e-9);
        assert_abs_diff_eq!(law.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn window_misconfiguration_is_an_error() {
        let m = signed();
        assert!(matches!(
            LatticeLaw::for_targets(&m, 10, 20, 1),
            Err(Error::WindowMisconfigured { .. })
        ));
        assert!(LatticeLaw::for_targets(&m, 10, 20, 2).is_ok());
    }

    #[test]
    fn absorbed_mass_is_conserved() {
        let m = signed();
        let mut law = LatticeLaw::start(-5, 12).unwrap();
        for n in 1..=40 {
            law = step(&law, &m).unwrap();
            assert!((law.total() - 1.0).abs() <= 1e-10 * n as f64);
            assert!(law.probs().iter().all(|p| *p >= 0.0));
        }
        assert!(law.absorbed_above() > 0.5);
        assert!(law.absorbed_below() > 0.0);
    }

    #[test]
    fn parallel_step_matches_serial_bitwise() {
        let m = JumpModel::pareto_lattice(1.5, 3000, crate::dist::TailSide::Right).unwrap();
        let table = m.lattice_table().unwrap();
        let mut sw = Sweep::new(table, 0, 4000).unwrap();
        for _ in 0..3 {
            sw.step();
        }
        let (a0, a1) = sw.act.unwrap();
        assert!((a1 - a0 + 1) * sw.kernel.jumps.len() >= PARALLEL_WORK);
        let mut par = vec![0.0; sw.cur.len()];
        sw.kernel.advance(sw.lo, &sw.cur, sw.act, &mut par);
        let mut ser = vec![0.0; sw.cur.len()];
        ser.iter_mut().for_each(|v| *v = 0.0);
        // serial path: same loop over one chunk
        let jumps = &sw.kernel.jumps;
        for &(j, pj) in jumps {
            for i in a0..=a1 {
                let t = i as i64 + j;
                if t >= 0 && t < ser.len() as i64 {
                    ser[t as usize] += pj * sw.cur[i];
                }
            }
        }
        assert_eq!(par, ser);
    }

    #[test]
    fn deterministic_unit_jumps() {
        let m = JumpModel::degenerate(1);
        let r = h_exact(&m, &WeightSeq::constant(1.0), &[0.0, 7.0, 50.0], 1.0).unwrap();
        for e in &r {
            assert_eq!(e.value, 1.0);
            assert_eq!(e.residual_bound, 0.0);
        }
        let w = WeightSeq::Power {
            gamma: -1.0,
            scale: 1.0,
            shift: 1.0,
        };
        let r = h_exact(&m, &w, &[9.0], 1.0).unwrap();
        assert_abs_diff_eq!(r[0].value, 0.1, epsilon = 1e-15);

        let c = cumulative_exact(&m, &WeightSeq::constant(1.0), &[5.5, 0.0]).unwrap();
        assert_eq!(c[0].value, 6.0);
        assert_eq!(c[1].value, 0.0);
    }

    #[test]
    fn unit_weights_two_point() {
        let m = two_point();
        let xs: Vec<f64> = (200..=400).map(|x| x as f64).collect();
        let r = h_exact(&m, &WeightSeq::constant(1.0), &xs, 1.0).unwrap();
        for e in &r {
            assert!((1.5 * e.value - 1.0).abs() <= 1e-3);
        }
        let c = cumulative_exact(&m, &WeightSeq::constant(1.0), &[300.0]).unwrap();
        assert!((c[0].value / 200.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn delta_must_be_a_multiple_of_the_span() {
        let m = JumpModel::lattice_with_span(2, vec![0.5, 0.0, 0.5], 2).unwrap();
        assert!(matches!(
            h_exact(&m, &WeightSeq::constant(1.0), &[10.0], 1.0),
            Err(Error::DeltaNotMultipleOfSpan { .. })
        ));
        let r = h_exact(&m, &WeightSeq::constant(1.0), &[400.0], 2.0).unwrap();
        // mean 3 in original units, span 2: h -> span/mean
        assert!((r[0].value - 2.0 / 3.0).abs() < 1e-3);
    }

    /// Direct sum of a_n P(S_n = t) with exact laws, stopping late.
    fn direct_oracle(m: &JumpModel, a: impl Fn(usize) -> f64, t: i64, n_max: usize) -> f64 {
        let tab = m.lattice_table().unwrap();
        let lo = -(n_max as i64) * tab.min_jump().abs();
        let hi = n_max as i64 * tab.max_jump().abs();
        let mut law = LatticeLaw::start(lo, hi).unwrap();
        let mut s = 0.0;
        for n in 0..=n_max {
            s += a(n) * law.prob(t);
            law = step(&law, m).unwrap();
        }
        s
    }

    #[test]
    fn signed_sweep_matches_unwindowed_oracle() {
        let m = signed();
        let w = WeightSeq::power(0.5);
        let r = h_exact(&m, &w, &[40.0], 1.0).unwrap();
        let o = direct_oracle(&m, |n| (n as f64).sqrt(), 40, 400);
        assert!((r[0].value - o).abs() <= r[0].residual_bound + 1e-11);
        assert!(r[0].residual_bound < 1e-11);
    }

    #[test]
    fn tilted_agrees_with_direct() {
        let m = JumpModel::lattice(-1, vec![0.25, 0.0, 0.75]).unwrap();
        let w = WeightSeq::exp(-0.1, WeightSeq::constant(1.0));
        let opts = ExactOptions {
            force_direct: true,
            ..Default::default()
        };
        let direct = h_exact_with(&m, &w, &[20.0, 50.0], 1.0, &opts).unwrap();
        let tilted = h_exact(&m, &w, &[20.0, 50.0], 1.0).unwrap();
        for (d, t) in direct.iter().zip(&tilted) {
            assert_eq!(t.method, Method::Tilted);
            assert!((d.value - t.value).abs() <= d.residual_bound + t.residual_bound + 1e-15 * d.value);
        }
        let zero = h_exact_tilted(&m, 0.0, &WeightSeq::constant(1.0), &[30.0], 1.0, &ExactOptions::default())
            .unwrap();
        let plain = h_exact(&m, &WeightSeq::constant(1.0), &[30.0], 1.0).unwrap();
        assert!((zero[0].value - plain[0].value).abs() <= 1e-12);
    }

    #[test]
    fn tilted_rejects_q_outside_the_admissible_interval() {
        let m = JumpModel::lattice(-1, vec![0.25, 0.0, 0.75]).unwrap();
        let err = h_exact_tilted(&m, 1.0, &WeightSeq::constant(1.0), &[10.0], 1.0, &ExactOptions::default());
        assert!(matches!(err, Err(Error::QOutOfRange { .. })));
    }

    #[test]
    fn divergent_left_tail_is_refused() {
        let left = JumpModel::pareto_lattice(2.0, 200, crate::dist::TailSide::Left).unwrap();
        let m = JumpModel::mixture(&[(0.5, left), (0.5, JumpModel::degenerate(3))]).unwrap();
        let err = h_exact(&m, &WeightSeq::power(1.0), &[100.0], 1.0);
        assert!(matches!(err, Err(Error::Divergent(_))));
        assert!(divergence_check(&m, &WeightSeq::power(0.5), Quantity::Increment).is_ok());
    }

    #[test]
    fn mc_examples() {
        let det = JumpModel::degenerate(1);
        let e = h_mc(&det, &WeightSeq::constant(1.0), 10.0, 1.0, &McOptions::default()).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.stderr, 0.0);
        let z = h_mc(&signed(), &WeightSeq::constant(0.0), 10.0, 1.0, &McOptions::default()).unwrap();
        assert_eq!(z.estimate, 0.0);
        assert!(h_mc(&det, &WeightSeq::constant(1.0), 10.0, 0.0, &McOptions::default()).is_err());

        let nm = JumpModel::normal(1.0, 0.5).unwrap();
        let opts = McOptions {
            paths: 4000,
            seed: 7,
            ..Default::default()
        };
        let e = h_mc(&nm, &WeightSeq::constant(1.0), 100.0, 0.5, &opts).unwrap();
        assert!((e.estimate - 0.5).abs() <= 3.0 * e.stderr, "{e:?}");
        let again = h_mc(&nm, &WeightSeq::constant(1.0), 100.0, 0.5, &opts).unwrap();
        assert_eq!(e, again);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_table() -> impl Strategy<Value = JumpModel> {
            (-2i64..2, prop::collection::vec(0.05f64..1.0, 1..4)).prop_map(|(off, w)| {
                let s: f64 = w.iter().sum();
                JumpModel::lattice(off, w.into_iter().map(|v| v / s).collect()).unwrap()
            })
        }

        proptest! {
            #[test]
            fn stepping_matches_enumeration(m in small_table(), n in 0usize..8) {
                let law = LatticeLaw::exact(&m, n).unwrap();
                let brute = enumerate(&m, n);
                for (k, p) in brute {
                    prop_assert!((law.prob(k) - p).abs() <= 1e-12);
                }
                prop_assert!((law.total() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn tilt_identity_term_by_term(q in -0.15f64..0.1, n in 0usize..60) {
                let m = JumpModel::lattice(-1, vec![0.25, 0.0, 0.75]).unwrap();
                let ctx = solve_lambda_q(&m, q).unwrap();
                let plain = LatticeLaw::exact(&m, n).unwrap();
                let tilted = LatticeLaw::exact(&ctx.tilted, n).unwrap();
                for (i, p) in plain.probs().iter().enumerate() {
                    let x = plain.offset() + i as i64;
                    if *p == 0.0 { continue; }
                    let lhs = (q * n as f64).exp() * p;
                    let rhs = (-ctx.lambda_q * x as f64).exp() * tilted.prob(x);
                    prop_assert!((lhs / rhs - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
