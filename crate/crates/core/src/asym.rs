//! Asymptotic predictors for `h(x,Δ)` and `H(x)`, and finite-grid checks of
//! the side conditions relating the tails of the jump law to the weights.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cramer::TiltContext;
use crate::dist::{JumpModel, Side};
use crate::error::{Error, Result};
use crate::weights::{trend_verdict, AveragedSeq, WeightSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormulaId {
    #[serde(rename = "blackwell")]
    Blackwell,
    #[serde(rename = "weighted")]
    Weighted,
    #[serde(rename = "H_rvf")]
    HRvf,
    #[serde(rename = "lrv_sum")]
    LrvSum,
    #[serde(rename = "h_plus")]
    HPlus,
    #[serde(rename = "cramer_nonlattice")]
    CramerNonlattice,
    #[serde(rename = "cramer_arith")]
    CramerArith,
}

/// Separate parts of the composite predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Terms {
    Lrv {
        bulk: f64,
        right: f64,
        left: f64,
        /// Bound on the right sum beyond its last summed index.
        right_tail_bound: f64,
    },
    HPlus {
        first: f64,
        second: f64,
        /// `Δ B v(x)` and `Δ B v((r-1)x/r)` with `B = Σ_{n<x/(rμ)} n a_n`.
        bracket_lo: f64,
        bracket_hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub formula: FormulaId,
    pub value: f64,
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// `μ`, or `μ_q` for the tilted predictors.
    pub mu: f64,
    /// `ã` (or `b̃`) at the index the formula reads.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Terms>,
}

impl Prediction {
    fn new(formula: FormulaId, value: f64, x: f64, mu: f64) -> Self {
        Self {
            formula,
            value,
            x,
            delta: None,
            mu,
            tilde: None,
            lambda_q: None,
            gamma: None,
            r: None,
            terms: None,
        }
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive and finite, got {v}")))
    }
}

/// `Δ/μ`.
pub fn predict_blackwell(x: f64, delta: f64, mu: f64) -> Result<Prediction> {
    check_positive("Δ", delta)?;
    check_positive("μ", mu)?;
    let mut p = Prediction::new(FormulaId::Blackwell, delta / mu, x, mu);
    p.delta = Some(delta);
    Ok(p)
}

/// `(Δ/μ) ã_{⌊x/μ⌋}`. With `Δ` equal to the span this is the arithmetic
/// form for point masses.
pub fn predict_weighted(x: f64, delta: f64, mu: f64, avg: &AveragedSeq) -> Result<Prediction> {
    check_positive("Δ", delta)?;
    check_positive("μ", mu)?;
    let t = avg.tilde_positive_at(x / mu)?;
    let mut p = Prediction::new(FormulaId::Weighted, delta / mu * t, x, mu);
    p.delta = Some(delta);
    p.tilde = Some(t);
    Ok(p)
}

/// `H(x) ≈ x a_{x/μ} / (μ(γ+1))` for weights regularly varying with index `γ`.
pub fn predict_h_rvf(x: f64, mu: f64, gamma: f64, weights: &WeightSeq) -> Result<Prediction> {
    check_positive("μ", mu)?;
    if !(gamma > -1.0) {
        return Err(Error::InvalidArgument(format!("the index γ must exceed -1, got {gamma}")));
    }
    let a = weights.eval_at(x / mu);
    let mut p = Prediction::new(FormulaId::HRvf, x * a / (mu * (gamma + 1.0)), x, mu);
    p.gamma = Some(gamma);
    Ok(p)
}

/// Local tail density `v(t) = α F_+(t)/t` (or `β F_-(t)/t` on the left);
/// needs a declared index wherever the tail is nonzero.
struct LocalTail<'a> {
    model: &'a JumpModel,
    side: Side,
    index: Option<f64>,
}

impl<'a> LocalTail<'a> {
    fn new(model: &'a JumpModel, side: Side) -> Self {
        let index = match side {
            Side::Plus => model.right_tail(),
            _ => model.left_tail(),
        }
        .map(|t| t.index);
        Self { model, side, index }
    }

    fn eval(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let f = self.model.tail(t, self.side);
        if f == 0.0 {
            return Ok(0.0);
        }
        let index = self.index.ok_or_else(|| {
            Error::MissingTailMetadata(format!(
                "the {} tail is positive at {t} but has no declared index",
                if self.side == Side::Plus { "right" } else { "left" }
            ))
        })?;
        Ok(index * f / t)
    }
}

/// Defaults `c_- = 1/(2μ)`, `c_+ = 2/μ`.
pub fn default_bulk_range(mu: f64) -> (f64, f64) {
    (0.5 / mu, 2.0 / mu)
}

/// Gaussian bulk plus the two heavy-tail sums, with `b(x) = σ√x`:
/// `Δ [ Σ_{c_-x<=n<=c_+x} a_n e^{-(x-μn)²/(2σ²n)}/(σ√(2πn))
///   + Σ_{n>x/μ+b(x)} a_n n w(μn-x) + Σ_{n<x/μ-b(x)} a_n n v(x-μn) ]`.
/// The right sum runs to `n_right` terms and is closed with a bound from
/// the declared left majorant.
pub fn predict_lrv_sum(
    x: f64,
    delta: f64,
    model: &JumpModel,
    weights: &WeightSeq,
    c_minus: f64,
    c_plus: f64,
    n_width: Option<usize>,
) -> Result<Prediction> {
    check_positive("Δ", delta)?;
    let mo = model.renewal_moments()?;
    let (mu, var) = (mo.mean, mo.variance);
    check_positive("σ²", var)?;
    let sigma = var.sqrt();
    if !(c_minus > 0.0 && c_minus < 1.0 / mu && c_plus > 1.0 / mu) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < c_- < 1/μ < c_+, got c_- = {c_minus}, c_+ = {c_plus}, 1/μ = {}",
            1.0 / mu
        )));
    }
    let b = sigma * x.max(0.0).sqrt();
    let centre = x / mu;

    let n0 = (c_minus * x).ceil().max(1.0) as usize;
    let n1 = (c_plus * x).floor().max(0.0) as usize;
    let mut bulk = 0.0;
    for n in n0..=n1 {
        let nf = n as f64;
        let d = x - mu * nf;
        bulk += weights.eval(n) * (-d * d / (2.0 * var * nf)).exp() / (sigma * (2.0 * PI * nf).sqrt());
    }

    let v = LocalTail::new(model, Side::Plus);
    let mut left = 0.0;
    let left_end = centre - b;
    let mut n = 1usize;
    while (n as f64) < left_end {
        let a = weights.eval(n);
        if a != 0.0 {
            left += a * n as f64 * v.eval(x - mu * n as f64)?;
        }
        n += 1;
    }

    let w = LocalTail::new(model, Side::Minus);
    let start = (centre + b).floor() as usize + 1;
    let stop = match n_width {
        Some(k) => start + k,
        None => start + 64 * (centre + b).ceil().max(16.0) as usize,
    };
    let reach = model.table().map(|t| (-t.min_jump()).max(0) as f64 * model.span() as f64);
    let mut right = 0.0;
    for n in start..stop {
        let arg = mu * n as f64 - x;
        if reach.is_some_and(|r| arg > r) {
            break;
        }
        let a = weights.eval(n);
        if a != 0.0 {
            right += a * n as f64 * w.eval(arg)?;
        }
    }
    let right_tail_bound = if reach.is_some_and(|r| mu * stop as f64 - x > r) {
        0.0
    } else {
        right_sum_tail(model, weights, mu, x, stop)?
    };
    let mut p = Prediction::new(FormulaId::LrvSum, delta * (bulk + right + left), x, mu);
    p.delta = Some(delta);
    p.terms = Some(Terms::Lrv {
        bulk: delta * bulk,
        right: delta * right,
        left: delta * left,
        right_tail_bound: delta * right_tail_bound,
    });
    Ok(p)
}

/// `Σ_{n>=m} |a_n| n w(μn - x)` bounded through `w(t) <= β C t^{-β-1}` and
/// `μn - x >= μn/2` once `n >= 2x/μ`.
fn right_sum_tail(model: &JumpModel, weights: &WeightSeq, mu: f64, x: f64, m: usize) -> Result<f64> {
    let Some(maj) = model.left_tail() else {
        return Err(Error::MissingTailMetadata(
            "the right sum needs a declared left majorant to be closed".into(),
        ));
    };
    let env = weights.envelope();
    let m = (m as f64).max(2.0 * x / mu).max(1.0).ceil();
    if env.last.is_some_and(|l| (l as f64) < m) {
        return Ok(0.0);
    }
    let beta = maj.index;
    let k = env.c * beta * maj.constant * (mu / 2.0).powf(-beta - 1.0);
    let p = env.gamma - beta;
    if env.q > 0.0 || (env.q == 0.0 && p >= -1.0) {
        return Err(Error::Divergent(format!(
            "Σ a_n n w(μn-x) diverges for weights of index {} against a left tail of index {beta}",
            env.gamma
        )));
    }
    Ok(k * power_geometric_tail(p, env.q, m))
}

/// Upper bound on `Σ_{n>=m} n^p e^{qn}` for `m >= 1`, with `q <= 0` and
/// `p < -1` when `q = 0`.
fn power_geometric_tail(p: f64, q: f64, m: f64) -> f64 {
    if q == 0.0 {
        return m.powf(p) + m.powf(p + 1.0) / (-p - 1.0);
    }
    if p <= 0.0 {
        return m.powf(p) * (q * m).exp() / -q.exp_m1();
    }
    // n^p e^{qn/2} peaks at -2p/q; the rest is geometric
    let peak = m.max(-2.0 * p / q);
    peak.powf(p) * (q * peak / 2.0).exp() * (q * m / 2.0).exp() / -(q / 2.0).exp_m1()
}

/// `(Δ/μ) ã_{x/μ} + Δ Σ_{n<x/(rμ)} a_n n v(x - μn)`.
pub fn predict_h_plus(x: f64, delta: f64, model: &JumpModel, avg: &AveragedSeq, r: f64) -> Result<Prediction> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r must exceed 1, got {r}")));
    }
    let mu = model.renewal_moments()?.mean;
    let first = predict_weighted(x, delta, mu, avg)?;
    let v = LocalTail::new(model, Side::Plus);
    let end = x / (r * mu);
    let mut second = 0.0;
    let mut moment = 0.0;
    let mut n = 1usize;
    while (n as f64) < end {
        let a = avg.weight(n);
        moment += n as f64 * a;
        if a != 0.0 {
            second += a * n as f64 * v.eval(x - mu * n as f64)?;
        }
        n += 1;
    }
    let bracket_lo = delta * moment * v.eval(x)?;
    let bracket_hi = delta * moment * v.eval((r - 1.0) * x / r)?;
    let mut p = Prediction::new(FormulaId::HPlus, first.value + delta * second, x, mu);
    p.delta = Some(delta);
    p.tilde = first.tilde;
    p.r = Some(r);
    p.terms = Some(Terms::HPlus {
        first: first.value,
        second: delta * second,
        bracket_lo,
        bracket_hi,
    });
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CramerForm {
    Nonlattice,
    Arith,
}

/// Nonlattice: `(1 - e^{-λ_q Δ}) e^{-λ_q x} b̃_{x/μ_q} / (μ_q λ_q)`;
/// arithmetic: `e^{-λ_q x} b̃_{x/μ_q} / μ_q`. At `λ_q = 0` both reduce to
/// the weighted predictor.
pub fn predict_cramer(
    x: f64,
    delta: f64,
    model: &JumpModel,
    tilt: &TiltContext,
    avg_b: &AveragedSeq,
    form: CramerForm,
) -> Result<Prediction> {
    let id = match form {
        CramerForm::Nonlattice => FormulaId::CramerNonlattice,
        CramerForm::Arith => FormulaId::CramerArith,
    };
    // the lattice unit must be 1; a periodic support (max span > 1) is allowed
    if form == CramerForm::Arith && (!model.is_lattice() || model.span() != 1) {
        return Err(Error::Precondition("the arithmetic form needs an integer lattice law".into()));
    }
    let lam = tilt.lambda_q;
    let mu_q = tilt.mu_q;
    let delta = if form == CramerForm::Arith { 1.0 } else { delta };
    if lam == 0.0 {
        let w = predict_weighted(x, delta, mu_q, avg_b)?;
        return Ok(Prediction {
            formula: id,
            lambda_q: Some(0.0),
            ..w
        });
    }
    check_positive("Δ", delta)?;
    check_positive("μ_q", mu_q)?;
    let b = avg_b.tilde_positive_at(x / mu_q)?;
    let value = match form {
        CramerForm::Nonlattice => -(-lam * delta).exp_m1() * (-lam * x).exp() / (mu_q * lam) * b,
        CramerForm::Arith => (-lam * x).exp() / mu_q * b,
    };
    let mut p = Prediction::new(id, value, x, mu_q);
    p.delta = Some(delta);
    p.tilde = Some(b);
    p.lambda_q = Some(lam);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    #[serde(rename = "lin")]
    Lin,
    #[serde(rename = "VaA")]
    VaA,
    #[serde(rename = "VaA+")]
    VaAPlus,
    #[serde(rename = "aW")]
    AW,
    #[serde(rename = "aW+")]
    AWPlus,
    #[serde(rename = "F+o")]
    FPlusO,
}

impl std::str::FromStr for ConditionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::InvalidArgument(format!("unknown condition '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub x: Vec<f64>,
    /// Ratios for `o(·)` conditions, partial sums for series conditions.
    pub observed: Vec<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partial_sum: Option<f64>,
    /// Bound on the series remainder after the last grid point; infinite
    /// when the series diverges.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remainder_bound: Option<f64>,
    pub note: String,
}

/// Declared stable index in `(1, 2)`, as required by the `+` variants.
fn stable_index(model: &JumpModel) -> Option<f64> {
    [model.right_tail(), model.left_tail()]
        .iter()
        .flatten()
        .map(|t| t.index)
        .filter(|a| *a > 1.0 && *a < 2.0)
        .reduce(f64::min)
}

/// Evaluates one side condition on the grid. `r` is the constant of the
/// monotonicity condition used by `F+o` (default 2).
pub fn check_conditions(
    model: &JumpModel,
    avg: &mut AveragedSeq,
    which: ConditionId,
    x_grid: &[f64],
    r: Option<f64>,
) -> Result<ConditionReport> {
    let mu = model.renewal_moments()?.mean;
    let mut note = String::new();
    let right = |t: f64| model.tail(t, Side::Plus);
    let report = |observed: Vec<f64>, pass: bool, note: String| ConditionReport {
        condition: which,
        x: x_grid.to_vec(),
        observed,
        pass,
        partial_sum: None,
        remainder_bound: None,
        note,
    };
    match which {
        ConditionId::Lin => {
            let obs = x_grid
                .iter()
                .map(|&x| {
                    let a = avg.seq().eval_at(x);
                    right(x) * avg.partial_sums_at(x).plain / a
                })
                .collect::<Vec<_>>();
            let pass = trend_verdict(&obs);
            Ok(report(obs, pass, "F+(x) A_x / a_x".into()))
        }
        ConditionId::VaA | ConditionId::VaAPlus => {
            let maj = model.right_tail();
            let v = |t: f64| match (which, maj) {
                (ConditionId::VaA, Some(m)) => m.eval(t).min(1.0),
                _ => right(t),
            };
            if which == ConditionId::VaA && maj.is_none() {
                note.push_str("no declared majorant: the right tail itself is used; ");
            }
            let obs = x_grid
                .iter()
                .map(|&x| v(x) * avg.partial_sums_at(x).tilde / avg.tilde_at(x))
                .collect::<Vec<_>>();
            let mut pass = trend_verdict(&obs);
            note.push_str("V(x) Ã_x / ã_x");
            if which == ConditionId::VaAPlus && stable_index(model).is_none() {
                pass = false;
                note.push_str("; no declared tail index in (1, 2)");
            }
            Ok(report(obs, pass, note))
        }
        ConditionId::FPlusO => {
            let r = r.unwrap_or(2.0);
            let obs = x_grid
                .iter()
                .map(|&x| {
                    let b = avg.partial_sums_at(x / (r * mu)).moment;
                    right(x) * b / (x * avg.tilde_at(x / mu))
                })
                .collect::<Vec<_>>();
            let pass = trend_verdict(&obs);
            Ok(report(obs, pass, format!("F+(x) B_{{x/(rμ)}} / (x ã_{{x/μ}}), r = {r}")))
        }
        ConditionId::AW | ConditionId::AWPlus => {
            let maj = model.left_tail();
            let use_majorant = which == ConditionId::AW && maj.is_some();
            let w = |n: f64| match (use_majorant, maj) {
                (true, Some(m)) => m.eval(n).min(1.0),
                _ => model.tail(n, Side::Minus),
            };
            let top = x_grid.iter().copied().fold(0.0, f64::max).floor() as usize;
            let mut sums = Vec::with_capacity(x_grid.len());
            let mut acc = 0.0;
            let mut k = 0usize;
            let mut targets: Vec<(usize, usize)> = x_grid
                .iter()
                .enumerate()
                .map(|(i, x)| (x.max(0.0).floor() as usize, i))
                .collect();
            targets.sort();
            sums.resize(x_grid.len(), 0.0);
            for (n, i) in targets {
                while k <= n {
                    acc += avg.tilde(k) * w(k as f64);
                    k += 1;
                }
                sums[i] = acc;
            }
            let remainder = series_remainder(model, avg.seq(), use_majorant, top)?;
            let mut pass = remainder.is_finite();
            note.push_str(if use_majorant {
                "Σ ã_n W(n), declared majorant"
            } else {
                "Σ ã_n F-(n)"
            });
            if !remainder.is_finite() {
                note.push_str("; divergent");
            }
            if which == ConditionId::AWPlus && stable_index(model).is_none() {
                pass = false;
                note.push_str("; no declared tail index in (1, 2)");
            }
            Ok(ConditionReport {
                condition: which,
                x: x_grid.to_vec(),
                observed: sums,
                pass,
                partial_sum: Some(acc),
                remainder_bound: Some(remainder),
                note,
            })
        }
    }
}

/// Bound on `Σ_{n>N} ã_n W(n)`. Bounded lattice laws without a majorant
/// contribute nothing past their reach; power majorants give
/// `c C N^{γ-β+1}/(β-γ-1)`, infinite when `β - γ - 1 <= 0`.
fn series_remainder(model: &JumpModel, seq: &WeightSeq, use_majorant: bool, top: usize) -> Result<f64> {
    let reach = model.table().map(|t| (-t.min_jump()).max(0) as usize * model.span() as usize);
    if !use_majorant {
        if let Some(r) = reach {
            if top >= r {
                return Ok(0.0);
            }
        }
    }
    let maj = model.left_tail().ok_or_else(|| {
        Error::MissingTailMetadata("a remainder bound needs a declared left majorant".into())
    })?;
    let env = seq.envelope();
    if env.last.is_some_and(|l| l <= top) {
        return Ok(0.0);
    }
    // ã_n is an average over [n, n + d(n)), d(n) <= n + 1
    let c = env.c * 2f64.powf(env.gamma.max(0.0)) * maj.constant;
    let p = env.gamma - maj.index;
    if env.q > 0.0 || (env.q == 0.0 && p >= -1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(c * power_geometric_tail(p, env.q, top as f64 + 1.0))
}
