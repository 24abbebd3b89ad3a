//! Jump distributions.
//!
//! A [`JumpModel`] is either a finite lattice table or one of a few
//! parametric non-lattice families. Lattice tables are stored rescaled to
//! span 1: a table declared with span `s` has its support divided by `s`, and
//! every operation in this crate works in those rescaled units. The original
//! span is kept in [`JumpModel::span`] for reporting.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Pareto};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::numeric::gcd;

const PROB_SUM_TOL: f64 = 1e-12;

/// Power-law majorant `constant * t^(-index)` for one tail, valid for `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailMajorant {
    pub index: f64,
    pub constant: f64,
}

impl TailMajorant {
    pub fn new(index: f64, constant: f64) -> Result<Self> {
        if !(index > 0.0 && index.is_finite()) || !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "tail majorant needs positive finite index and constant, got ({index}, {constant})"
            )));
        }
        Ok(Self { index, constant })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        self.constant * t.powf(-self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `F+(t) = P(xi >= t)`
    Plus,
    /// `F-(t) = P(xi < -t)`
    Minus,
    /// `F*(t) = F-(t) + F+(t)`
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// `f64::INFINITY` for heavy-tailed families with index at most 2.
    pub variance: f64,
}

/// Finite probability table on consecutive integers `offset, offset + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTable {
    offset: i64,
    probs: Vec<f64>,
    // upper[i] = sum_{j >= i} probs[j], summed from the right.
    upper: Vec<f64>,
    // lower[i] = sum_{j <= i} probs[j].
    lower: Vec<f64>,
}

impl LatticeTable {
    fn new(offset: i64, mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidModel("empty probability table".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::InvalidModel(format!(
                "probability at index {i} is {p}; entries must be finite and nonnegative"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "probabilities sum to {total}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        let first = probs.iter().position(|&p| p > 0.0).unwrap();
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap();
        probs.truncate(last + 1);
        probs.drain(..first);
        let offset = offset + first as i64;

        let mut upper = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for i in (0..probs.len()).rev() {
            acc += probs[i];
            upper[i] = acc.min(1.0);
        }
        upper[0] = 1.0;
        let mut lower = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            lower[i] = acc.min(1.0);
        }
        *lower.last_mut().unwrap() = 1.0;
        Ok(Self {
            offset,
            probs,
            upper,
            lower,
        })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_jump(&self) -> i64 {
        self.offset
    }

    pub fn max_jump(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    /// `P(xi >= k)`.
    pub fn prob_at_least(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i <= 0 {
            1.0
        } else if i >= self.probs.len() as i64 {
            0.0
        } else {
            self.upper[i as usize]
        }
    }

    /// `P(xi <= k)`.
    pub fn prob_at_most(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            0.0
        } else if i >= self.probs.len() as i64 {
            1.0
        } else {
            self.lower[i as usize]
        }
    }

    /// `(k, p)` pairs with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(i, p)| (self.offset + i as i64, *p))
    }

    fn log_mgf(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return self.probs.iter().sum::<f64>().ln();
        }
        // anchor at the support end where λk is largest; the remaining mass
        // is at most 1, so stop once e^{λ(k - anchor)} is negligible
        let probs = &self.probs;
        let (anchor, order): (i64, Box<dyn Iterator<Item = usize>>) = if lambda < 0.0 {
            (self.min_jump(), Box::new(0..probs.len()))
        } else {
            (self.max_jump(), Box::new((0..probs.len()).rev()))
        };
        let mut acc = 0.0;
        for i in order {
            let e = (lambda * (self.offset + i as i64 - anchor) as f64).exp();
            if acc > 0.0 && e < 1e-18 * acc {
                break;
            }
            acc += probs[i] * e;
        }
        acc.ln() + lambda * anchor as f64
    }

    /// `(L, L', L'')` at `lambda`, computed from tilted weights so that large
    /// `|lambda|` does not overflow.
    fn cumulant_derivs(&self, lambda: f64) -> (f64, f64, f64) {
        let l = self.log_mgf(lambda);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (k, p) in self.support() {
            let w = (p.ln() + lambda * k as f64 - l).exp();
            m1 += w * k as f64;
        }
        for (k, p) in self.support() {
            let w = (p.ln() + lambda * k as f64 - l).exp();
            m2 += w * (k as f64 - m1).powi(2);
        }
        (l, m1, m2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Lattice(LatticeTable),
    Normal { mean: f64, sd: f64 },
    /// `shift + Exp(rate)`.
    ShiftedExponential { shift: f64, rate: f64 },
    /// `shift + Y`, `P(Y >= y) = y^(-alpha)` for `y >= 1`.
    ParetoShifted { shift: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpModel {
    family: Family,
    span: i64,
    cut_mass: f64,
    right_tail: Option<TailMajorant>,
    left_tail: Option<TailMajorant>,
}

impl JumpModel {
    /// Lattice law with `P(xi = offset + i) = probs[i]`, span 1.
    pub fn lattice(offset: i64, probs: Vec<f64>) -> Result<Self> {
        Self::lattice_with_span(offset, probs, 1)
    }

    /// Lattice law given on the original integer grid; the support is divided
    /// by `span`, which must divide every support point.
    pub fn lattice_with_span(offset: i64, probs: Vec<f64>, span: i64) -> Result<Self> {
        if span < 1 {
            return Err(Error::InvalidModel(format!("span must be >= 1, got {span}")));
        }
        let table = LatticeTable::new(offset, probs)?;
        let table = if span == 1 {
            table
        } else {
            let points: Vec<(i64, f64)> = table.support().collect();
            let first = points[0].0;
            let g = points.iter().fold(0, |g, (k, _)| gcd(g, k - first));
            if g % span != 0 {
                return Err(Error::InvalidModel(format!(
                    "declared span {span} does not divide the support differences (gcd {g})"
                )));
            }
            if points.iter().any(|(k, _)| k % span != 0) {
                return Err(Error::InvalidModel(format!(
                    "support is not contained in {span}Z; shifted lattices are not supported"
                )));
            }
            let lo = points[0].0 / span;
            let hi = points.last().unwrap().0 / span;
            let mut probs = vec![0.0; (hi - lo + 1) as usize];
            for (k, p) in points {
                probs[(k / span - lo) as usize] = p;
            }
            LatticeTable::new(lo, probs)?
        };
        Ok(Self {
            family: Family::Lattice(table),
            span,
            cut_mass: 0.0,
            right_tail: None,
            left_tail: None,
        })
    }

    /// Point mass at `k`.
    pub fn degenerate(k: i64) -> Self {
        Self::lattice(k, vec![1.0]).expect("point mass is a valid table")
    }

    /// `p(k) ∝ k^-(alpha+1)` on `1..=cut` (or its mirror image on `-cut..=-1`),
    /// renormalised after the cut. The removed mass of the untruncated law is
    /// reported by [`JumpModel::cut_mass`], and the matching tail gets a
    /// declared power majorant with index `alpha`.
    pub fn pareto_lattice(alpha: f64, cut: usize, side: TailSide) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidModel(format!("alpha must be positive, got {alpha}")));
        }
        if cut < 1 {
            return Err(Error::InvalidModel("cut must be >= 1".into()));
        }
        let s = alpha + 1.0;
        let raw: Vec<f64> = (1..=cut).map(|k| (k as f64).powf(-s)).collect();
        // small terms first
        let z: f64 = raw.iter().rev().sum();
        let k = cut as f64;
        // Euler-Maclaurin estimate of sum_{j > cut} j^-s
        let removed = k.powf(1.0 - s) / (s - 1.0) - 0.5 * k.powf(-s) + s * k.powf(-s - 1.0) / 12.0;
        let cut_mass = removed / (z + removed);
        let mut probs: Vec<f64> = raw.iter().map(|p| p / z).collect();
        let majorant = TailMajorant::new(alpha, (1.0 + 1.0 / alpha).max(z) / z)?;
        let mut model = match side {
            TailSide::Right => Self::lattice(1, probs)?,
            TailSide::Left => {
                probs.reverse();
                Self::lattice(-(cut as i64), probs)?
            }
        };
        model.cut_mass = cut_mass;
        match side {
            TailSide::Right => model.right_tail = Some(majorant),
            TailSide::Left => model.left_tail = Some(majorant),
        }
        Ok(model)
    }

    /// Mixture of lattice models (all span 1). Declared majorants are combined
    /// with the smallest index; bounded components contribute `M^index`.
    pub fn mixture(components: &[(f64, JumpModel)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("empty mixture".into()));
        }
        let wsum: f64 = components.iter().map(|(w, _)| w).sum();
        if components.iter().any(|(w, _)| !(*w >= 0.0)) || (wsum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "mixture weights must be nonnegative and sum to 1, got {wsum}"
            )));
        }
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for (_, m) in components {
            let t = m.table().ok_or(Error::NotLattice)?;
            if m.span != 1 {
                return Err(Error::InvalidModel("mixture components must have span 1".into()));
            }
            lo = lo.min(t.min_jump());
            hi = hi.max(t.max_jump());
        }
        let mut probs = vec![0.0; (hi - lo + 1) as usize];
        let mut cut_mass = 0.0;
        for (w, m) in components {
            let t = m.table().unwrap();
            for (k, p) in t.support() {
                probs[(k - lo) as usize] += w * p;
            }
            cut_mass += w * m.cut_mass;
        }
        let mut model = Self::lattice(lo, probs)?;
        model.cut_mass = cut_mass;
        model.right_tail = combine_majorants(components, true);
        model.left_tail = combine_majorants(components, false);
        Ok(model)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidModel(format!("normal needs sd > 0, got ({mean}, {sd})")));
        }
        Ok(Self::continuous(Family::Normal { mean, sd }))
    }

    pub fn shifted_exponential(shift: f64, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite() && shift.is_finite()) {
            return Err(Error::InvalidModel(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(Self::continuous(Family::ShiftedExponential { shift, rate }))
    }

    pub fn pareto_shifted(shift: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && shift.is_finite()) {
            return Err(Error::InvalidModel(format!("pareto alpha must be positive, got {alpha}")));
        }
        let mut m = Self::continuous(Family::ParetoShifted { shift, alpha });
        // P(xi >= t) = (t - shift)^-alpha <= (1 + |shift|)^alpha t^-alpha for t > 0
        m.right_tail = Some(TailMajorant::new(alpha, (1.0 + shift.abs()).powf(alpha))?);
        Ok(m)
    }

    fn continuous(family: Family) -> Self {
        Self {
            family,
            span: 1,
            cut_mass: 0.0,
            right_tail: None,
            left_tail: None,
        }
    }

    pub fn with_right_tail(mut self, majorant: TailMajorant) -> Self {
        self.right_tail = Some(majorant);
        self
    }

    pub fn with_left_tail(mut self, majorant: TailMajorant) -> Self {
        self.left_tail = Some(majorant);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn table(&self) -> Option<&LatticeTable> {
        match &self.family {
            Family::Lattice(t) => Some(t),
            _ => None,
        }
    }

    pub fn lattice_table(&self) -> Result<&LatticeTable> {
        self.table().ok_or(Error::NotLattice)
    }

    pub fn is_lattice(&self) -> bool {
        self.table().is_some()
    }

    /// Span of the original (unrescaled) lattice.
    pub fn span(&self) -> i64 {
        self.span
    }

    /// Mass removed when an unbounded lattice law was cut to a finite table.
    pub fn cut_mass(&self) -> f64 {
        self.cut_mass
    }

    pub fn right_tail(&self) -> Option<TailMajorant> {
        self.right_tail
    }

    pub fn left_tail(&self) -> Option<TailMajorant> {
        self.left_tail
    }

    /// g.c.d. of the pairwise support differences of the (rescaled) table.
    pub fn max_span(&self) -> Option<i64> {
        let t = self.table()?;
        let first = t.min_jump();
        Some(t.support().fold(0, |g, (k, _)| gcd(g, k - first)))
    }

    pub fn moments(&self) -> Moments {
        match &self.family {
            Family::Lattice(t) => {
                let mean: f64 = t.support().map(|(k, p)| p * k as f64).sum();
                let variance = t.support().map(|(k, p)| p * (k as f64 - mean).powi(2)).sum();
                Moments { mean, variance }
            }
            Family::Normal { mean, sd } => Moments {
                mean: *mean,
                variance: sd * sd,
            },
            Family::ShiftedExponential { shift, rate } => Moments {
                mean: shift + 1.0 / rate,
                variance: 1.0 / (rate * rate),
            },
            Family::ParetoShifted { shift, alpha } => {
                let a = *alpha;
                let mean = if a > 1.0 { shift + a / (a - 1.0) } else { f64::INFINITY };
                let variance = if a > 2.0 {
                    a / ((a - 1.0).powi(2) * (a - 2.0))
                } else {
                    f64::INFINITY
                };
                Moments { mean, variance }
            }
        }
    }

    /// Moments, rejecting models that cannot drive a renewal scenario.
    pub fn renewal_moments(&self) -> Result<Moments> {
        let m = self.moments();
        if !(m.mean > 0.0 && m.mean.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "renewal use needs a finite positive mean, got {}",
                m.mean
            )));
        }
        Ok(m)
    }

    pub fn tail(&self, t: f64, side: Side) -> f64 {
        match side {
            Side::Plus => self.tail_plus(t),
            Side::Minus => self.tail_minus(t),
            Side::Star => self.tail_plus(t) + self.tail_minus(t),
        }
    }

    fn tail_plus(&self, t: f64) -> f64 {
        match &self.family {
            Family::Lattice(tab) => {
                if t.is_nan() {
                    return f64::NAN;
                }
                tab.prob_at_least(ceil_i64(t))
            }
            Family::Normal { mean, sd } => {
                StatNormal::new(*mean, *sd).expect("validated").sf(t)
            }
            Family::ShiftedExponential { shift, rate } => {
                if t <= *shift {
                    1.0
                } else {
                    (-rate * (t - shift)).exp()
                }
            }
            Family::ParetoShifted { shift, alpha } => {
                let y = t - shift;
                if y <= 1.0 {
                    1.0
                } else {
                    y.powf(-alpha)
                }
            }
        }
    }

    fn tail_minus(&self, t: f64) -> f64 {
        match &self.family {
            Family::Lattice(tab) => {
                if t.is_nan() {
                    return f64::NAN;
                }
                // xi < -t  <=>  xi <= ceil(-t) - 1
                tab.prob_at_most(ceil_i64(-t) - 1)
            }
            Family::Normal { mean, sd } => {
                StatNormal::new(*mean, *sd).expect("validated").cdf(-t)
            }
            Family::ShiftedExponential { shift, rate } => {
                let y = -t - shift;
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            Family::ParetoShifted { shift, alpha } => {
                let y = -t - shift;
                if y <= 1.0 {
                    0.0
                } else {
                    1.0 - y.powf(-alpha)
                }
            }
        }
    }

    /// Endpoints `(lambda-, lambda+)` of the mgf domain. The interval is
    /// closed at an endpoint exactly when the mgf is finite there.
    pub fn mgf_domain(&self) -> (f64, f64) {
        match &self.family {
            Family::Lattice(_) | Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::ShiftedExponential { rate, .. } => (f64::NEG_INFINITY, *rate),
            Family::ParetoShifted { .. } => (f64::NEG_INFINITY, 0.0),
        }
    }

    /// `E exp(lambda xi)`, or `f64::INFINITY` outside the domain.
    pub fn mgf(&self, lambda: f64) -> f64 {
        self.log_mgf(lambda).exp()
    }

    /// `ln E exp(lambda xi)`, or `f64::INFINITY` outside the domain.
    pub fn log_mgf(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Lattice(t) => t.log_mgf(lambda),
            Family::Normal { mean, sd } => mean * lambda + 0.5 * sd * sd * lambda * lambda,
            Family::ShiftedExponential { shift, rate } => {
                if lambda >= *rate {
                    f64::INFINITY
                } else {
                    lambda * shift + (rate / (rate - lambda)).ln()
                }
            }
            Family::ParetoShifted { shift, alpha } => {
                if lambda > 0.0 {
                    f64::INFINITY
                } else {
                    lambda * shift + pareto_mgf_unit(*alpha, lambda).ln()
                }
            }
        }
    }

    /// `(L, L', L'')` where available in closed form.
    pub fn cumulant_derivs(&self, lambda: f64) -> Option<(f64, f64, f64)> {
        match &self.family {
            Family::Lattice(t) => Some(t.cumulant_derivs(lambda)),
            Family::Normal { mean, sd } => Some((
                mean * lambda + 0.5 * sd * sd * lambda * lambda,
                mean + sd * sd * lambda,
                sd * sd,
            )),
            Family::ShiftedExponential { shift, rate } => {
                if lambda >= *rate {
                    None
                } else {
                    let d = rate - lambda;
                    Some((lambda * shift + (rate / d).ln(), shift + 1.0 / d, 1.0 / (d * d)))
                }
            }
            Family::ParetoShifted { .. } => None,
        }
    }

    pub fn sampler(&self) -> Sampler {
        match &self.family {
            Family::Lattice(t) => {
                let points: Vec<(i64, f64)> = t.support().collect();
                let index = WeightedIndex::new(points.iter().map(|(_, p)| *p))
                    .expect("validated table has positive mass");
                Sampler::Lattice {
                    values: points.iter().map(|(k, _)| *k as f64).collect(),
                    index,
                }
            }
            Family::Normal { mean, sd } => Sampler::Normal(Normal::new(*mean, *sd).expect("validated")),
            Family::ShiftedExponential { shift, rate } => Sampler::Exp {
                shift: *shift,
                dist: Exp::new(*rate).expect("validated"),
            },
            Family::ParetoShifted { shift, alpha } => Sampler::Pareto {
                shift: *shift,
                dist: Pareto::new(1.0, *alpha).expect("validated"),
            },
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let m = match spec {
            ModelSpec::Lattice {
                offset,
                probs,
                span,
                right_tail,
                left_tail,
            } => {
                let mut m = Self::lattice_with_span(*offset, probs.clone(), span.unwrap_or(1))?;
                if let Some(t) = right_tail {
                    m.right_tail = Some(TailMajorant::new(t.index, t.constant)?);
                }
                if let Some(t) = left_tail {
                    m.left_tail = Some(TailMajorant::new(t.index, t.constant)?);
                }
                m
            }
            ModelSpec::ParetoLattice { alpha, cut, side } => {
                Self::pareto_lattice(*alpha, *cut, side.unwrap_or(TailSide::Right))?
            }
            ModelSpec::Mixture { components } => {
                let comps = components
                    .iter()
                    .map(|c| Ok((c.weight, Self::from_spec(&c.model)?)))
                    .collect::<Result<Vec<_>>>()?;
                Self::mixture(&comps)?
            }
            ModelSpec::Normal { mean, sd } => Self::normal(*mean, *sd)?,
            ModelSpec::ShiftedExponential { shift, rate } => Self::shifted_exponential(*shift, *rate)?,
            ModelSpec::ParetoShifted { shift, alpha } => Self::pareto_shifted(*shift, *alpha)?,
        };
        Ok(m)
    }
}

fn ceil_i64(t: f64) -> i64 {
    let c = t.ceil();
    if c >= i64::MAX as f64 {
        i64::MAX / 4
    } else if c <= i64::MIN as f64 {
        i64::MIN / 4
    } else {
        c as i64
    }
}

fn combine_majorants(components: &[(f64, JumpModel)], right: bool) -> Option<TailMajorant> {
    let pick = |m: &JumpModel| if right { m.right_tail } else { m.left_tail };
    let index = components
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .filter_map(|(_, m)| pick(m))
        .map(|t| t.index)
        .fold(f64::INFINITY, f64::min);
    if !index.is_finite() {
        return None;
    }
    let mut constant = 0.0;
    for (w, m) in components.iter().filter(|(w, _)| *w > 0.0) {
        let c = match pick(m) {
            Some(t) => t.constant,
            None => {
                let t = m.table().expect("mixture components are lattice");
                let reach = if right { t.max_jump() } else { -t.min_jump() };
                (reach.max(1) as f64).powf(index)
            }
        };
        constant += w * c;
    }
    Some(TailMajorant {
        index,
        constant: constant.max(1.0),
    })
}

/// `E exp(lambda Y)` for `P(Y >= y) = y^-alpha`, `y >= 1`, `lambda <= 0`,
/// via `u = 1/y`: `int_0^1 alpha u^(alpha-1) exp(lambda/u) du`.
fn pareto_mgf_unit(alpha: f64, lambda: f64) -> f64 {
    let f = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            alpha * u.powf(alpha - 1.0) * (lambda / u).exp()
        }
    };
    crate::numeric::simpson(f, 0.0, 1.0, 4096)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    Right,
    Left,
}

/// Draws jumps for Monte Carlo estimation.
#[derive(Debug, Clone)]
pub enum Sampler {
    Lattice { values: Vec<f64>, index: WeightedIndex<f64> },
    Normal(Normal<f64>),
    Exp { shift: f64, dist: Exp<f64> },
    Pareto { shift: f64, dist: Pareto<f64> },
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Lattice { values, index } => values[index.sample(rng)],
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Exp { shift, dist } => shift + dist.sample(rng),
            Sampler::Pareto { shift, dist } => shift + dist.sample(rng),
        }
    }
}

/// JSON description of a jump model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Lattice {
        offset: i64,
        probs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        span: Option<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right_tail: Option<TailMajorant>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left_tail: Option<TailMajorant>,
    },
    ParetoLattice {
        alpha: f64,
        cut: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<TailSide>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    ShiftedExponential {
        shift: f64,
        rate: f64,
    },
    ParetoShifted {
        shift: f64,
        alpha: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub model: ModelSpec,
}
