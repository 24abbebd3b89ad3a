//! Weight sequences `a_n`, averaging windows `d(n)`, moving averages
//! `ã_n = (1/d(n)) Σ_{n<=k<n+d(n)} a_k`, partial sums, and finite-range
//! diagnostics for the "locally constant on average" and "monotone on
//! average" conditions.
//!
//! The diagnostics can only falsify: they report the constants observed on
//! nested finite ranges together with a trend verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator of a weight sequence `a_n`, `n >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSeq {
    Constant {
        c: f64,
    },
    /// `scale * (n + shift)^gamma`; for `gamma < 0` the base is clamped to 1.
    Power {
        gamma: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `1 / max(n, 1)`
    Harmonic,
    Periodic {
        pattern: Vec<f64>,
    },
    /// Finite table; zero beyond its end.
    Table {
        values: Vec<f64>,
    },
    /// `exp(q n) * base_n`
    Exp {
        q: f64,
        base: Box<WeightSeq>,
    },
}

fn one() -> f64 {
    1.0
}

/// `|a_n| <= c * max(n,1)^gamma * exp(q n)` for all `n`, and `a_n = 0` for
/// `n > last` when `last` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub c: f64,
    pub gamma: f64,
    pub q: f64,
    pub last: Option<usize>,
}

impl Envelope {
    pub fn eval(&self, n: usize) -> f64 {
        if self.last.is_some_and(|l| n > l) {
            return 0.0;
        }
        self.c * (n.max(1) as f64).powf(self.gamma) * (self.q * n as f64).exp()
    }
}

impl WeightSeq {
    pub fn constant(c: f64) -> Self {
        WeightSeq::Constant { c }
    }

    pub fn power(gamma: f64) -> Self {
        WeightSeq::Power {
            gamma,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn periodic(pattern: Vec<f64>) -> Self {
        WeightSeq::Periodic { pattern }
    }

    pub fn exp(q: f64, base: WeightSeq) -> Self {
        WeightSeq::Exp {
            q,
            base: Box::new(base),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidWeights(format!("{what} must be finite, got {x}")))
            }
        };
        match self {
            WeightSeq::Constant { c } => finite(*c, "c"),
            WeightSeq::Power { gamma, scale, shift } => {
                finite(*gamma, "gamma")?;
                finite(*scale, "scale")?;
                if !(*shift >= 0.0 && shift.is_finite()) {
                    return Err(Error::InvalidWeights(format!("shift must be >= 0, got {shift}")));
                }
                Ok(())
            }
            WeightSeq::Harmonic => Ok(()),
            WeightSeq::Periodic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::InvalidWeights("empty periodic pattern".into()));
                }
                pattern.iter().try_for_each(|x| finite(*x, "pattern entry"))
            }
            WeightSeq::Table { values } => values.iter().try_for_each(|x| finite(*x, "table entry")),
            WeightSeq::Exp { q, base } => {
                finite(*q, "q")?;
                base.validate()
            }
        }
    }

    pub fn eval(&self, n: usize) -> f64 {
        match self {
            WeightSeq::Constant { c } => *c,
            WeightSeq::Power { gamma, scale, shift } => {
                let base = n as f64 + shift;
                let base = if *gamma < 0.0 { base.max(1.0) } else { base };
                scale * base.powf(*gamma)
            }
            WeightSeq::Harmonic => 1.0 / n.max(1) as f64,
            WeightSeq::Periodic { pattern } => pattern[n % pattern.len()],
            WeightSeq::Table { values } => values.get(n).copied().unwrap_or(0.0),
            WeightSeq::Exp { q, base } => (q * n as f64).exp() * base.eval(n),
        }
    }

    /// Weight at a real argument, `a_x := a_{floor(x)}`.
    pub fn eval_at(&self, x: f64) -> f64 {
        self.eval(x.max(0.0).floor() as usize)
    }

    pub fn envelope(&self) -> Envelope {
        let flat = |c: f64| Envelope {
            c,
            gamma: 0.0,
            q: 0.0,
            last: None,
        };
        match self {
            WeightSeq::Constant { c } => flat(c.abs()),
            WeightSeq::Power { gamma, scale, shift } => {
                if *gamma >= 0.0 {
                    Envelope {
                        c: scale.abs() * (1.0 + shift).powf(*gamma),
                        gamma: *gamma,
                        q: 0.0,
                        last: None,
                    }
                } else {
                    Envelope {
                        c: scale.abs(),
                        gamma: *gamma,
                        q: 0.0,
                        last: None,
                    }
                }
            }
            WeightSeq::Harmonic => Envelope {
                c: 1.0,
                gamma: -1.0,
                q: 0.0,
                last: None,
            },
            WeightSeq::Periodic { pattern } => flat(pattern.iter().fold(0.0, |m, x| m.max(x.abs()))),
            WeightSeq::Table { values } => Envelope {
                last: Some(values.len().saturating_sub(1)),
                ..flat(values.iter().fold(0.0, |m, x| m.max(x.abs())))
            },
            WeightSeq::Exp { q, base } => {
                let e = base.envelope();
                Envelope { q: e.q + q, ..e }
            }
        }
    }

    /// Index of regular variation of the generator, when it is a regularly
    /// varying family with an exact index (periodic sequences count as index 0
    /// on average).
    pub fn growth_index(&self) -> Option<f64> {
        match self {
            WeightSeq::Constant { c } if *c != 0.0 => Some(0.0),
            WeightSeq::Power { gamma, scale, .. } if *scale != 0.0 => Some(*gamma),
            WeightSeq::Harmonic => Some(-1.0),
            WeightSeq::Periodic { pattern } if pattern.iter().sum::<f64>() != 0.0 => Some(0.0),
            _ => None,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            WeightSeq::Constant { c } => *c >= 0.0,
            WeightSeq::Power { scale, .. } => *scale >= 0.0,
            WeightSeq::Harmonic => true,
            WeightSeq::Periodic { pattern } => pattern.iter().all(|x| *x >= 0.0),
            WeightSeq::Table { values } => values.iter().all(|x| *x >= 0.0),
            WeightSeq::Exp { base, .. } => base.is_nonnegative(),
        }
    }

    /// Default averaging window: the period for periodic generators, 1 otherwise.
    pub fn default_window(&self) -> AveragingWindow {
        match self {
            WeightSeq::Periodic { pattern } => AveragingWindow::Constant { d: pattern.len() },
            WeightSeq::Exp { base, .. } => base.default_window(),
            _ => AveragingWindow::Constant { d: 1 },
        }
    }
}

/// Averaging interval length `d(n)`, integer-valued and at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AveragingWindow {
    Constant { d: usize },
    /// `max(floor(n^delta), 1)` with `0 <= delta < 1/2`.
    Power { delta: f64 },
}

impl Default for AveragingWindow {
    fn default() -> Self {
        AveragingWindow::Constant { d: 1 }
    }
}

impl AveragingWindow {
    pub fn validate(&self) -> Result<()> {
        match self {
            AveragingWindow::Constant { d } if *d >= 1 => Ok(()),
            AveragingWindow::Constant { d } => {
                Err(Error::InvalidWeights(format!("window length must be >= 1, got {d}")))
            }
            AveragingWindow::Power { delta } if (0.0..0.5).contains(delta) => Ok(()),
            AveragingWindow::Power { delta } => {
                Err(Error::InvalidWeights(format!("window exponent must lie in [0, 1/2), got {delta}")))
            }
        }
    }

    pub fn len_at(&self, n: usize) -> usize {
        match self {
            AveragingWindow::Constant { d } => *d,
            AveragingWindow::Power { delta } => ((n as f64).powf(*delta).floor() as usize).max(1),
        }
    }
}

/// `ã_n`, an exact finite sum.
pub fn averaged(seq: &WeightSeq, window: &AveragingWindow, n: usize) -> f64 {
    let d = window.len_at(n);
    let first = seq.eval(n);
    let mut sum = first;
    let mut flat = true;
    for k in n + 1..n + d {
        let a = seq.eval(k);
        flat &= a == first;
        sum += a;
    }
    // a flat window averages to its value exactly
    if flat {
        first
    } else {
        sum / d as f64
    }
}

/// `ã_n`, failing when it is not positive.
pub fn averaged_positive(seq: &WeightSeq, window: &AveragingWindow, n: usize) -> Result<f64> {
    let v = averaged(seq, window, n);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::NonpositiveAverage { n, value: v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialSums {
    /// `Ã_n = Σ_{k<=n} ã_k`
    pub tilde: f64,
    /// `A_n = Σ_{k<=n} a_k`
    pub plain: f64,
    /// `Ā_n = Σ_{k<=n} |a_k|`
    pub abs: f64,
    /// `B_n = Σ_{k<=n} k a_k`
    pub moment: f64,
}

/// Weight sequence with its window and an append-only memo of `ã_n` and of
/// the partial sums. Mutation needs `&mut self`; completed prefixes are
/// shared read-only.
#[derive(Debug, Clone)]
pub struct AveragedSeq {
    seq: WeightSeq,
    window: AveragingWindow,
    tilde: Vec<f64>,
    sums: Vec<PartialSums>,
}

impl AveragedSeq {
    pub fn new(seq: WeightSeq, window: AveragingWindow) -> Result<Self> {
        seq.validate()?;
        window.validate()?;
        Ok(Self {
            seq,
            window,
            tilde: Vec::new(),
            sums: Vec::new(),
        })
    }

    pub fn with_default_window(seq: WeightSeq) -> Result<Self> {
        let w = seq.default_window();
        Self::new(seq, w)
    }

    pub fn seq(&self) -> &WeightSeq {
        &self.seq
    }

    pub fn window(&self) -> &AveragingWindow {
        &self.window
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.seq.eval(n)
    }

    /// `ã_n` without touching the memo.
    pub fn tilde(&self, n: usize) -> f64 {
        self.tilde
            .get(n)
            .copied()
            .unwrap_or_else(|| averaged(&self.seq, &self.window, n))
    }

    /// `ã_{floor(x)}`
    pub fn tilde_at(&self, x: f64) -> f64 {
        self.tilde(x.max(0.0).floor() as usize)
    }

    pub fn tilde_positive_at(&self, x: f64) -> Result<f64> {
        let n = x.max(0.0).floor() as usize;
        let v = self.tilde(n);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::NonpositiveAverage { n, value: v })
        }
    }

    fn extend_to(&mut self, n: usize) {
        while self.sums.len() <= n {
            let k = self.sums.len();
            let a = self.seq.eval(k);
            let t = averaged(&self.seq, &self.window, k);
            let prev = self.sums.last().copied().unwrap_or(PartialSums {
                tilde: 0.0,
                plain: 0.0,
                abs: 0.0,
                moment: 0.0,
            });
            self.tilde.push(t);
            self.sums.push(PartialSums {
                tilde: prev.tilde + t,
                plain: prev.plain + a,
                abs: prev.abs + a.abs(),
                moment: prev.moment + k as f64 * a,
            });
        }
    }

    /// `(Ã_n, A_n, Ā_n, B_n)` in one memoised pass.
    pub fn partial_sums(&mut self, n: usize) -> PartialSums {
        self.extend_to(n);
        self.sums[n]
    }

    /// Partial sums at a real argument (floor convention); zero below 0.
    pub fn partial_sums_at(&mut self, x: f64) -> PartialSums {
        if x < 0.0 {
            return PartialSums {
                tilde: 0.0,
                plain: 0.0,
                abs: 0.0,
                moment: 0.0,
            };
        }
        self.partial_sums(x.floor() as usize)
    }
}

/// Finite-data surrogate for "tends to zero": exact zeros pass; otherwise the
/// grid is cut into three consecutive scales and the largest value on each
/// must strictly improve twice.
pub fn trend_verdict(values: &[f64]) -> bool {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    if mags.iter().all(|v| *v <= 1e-12) {
        return true;
    }
    if mags.len() < 3 {
        return false;
    }
    let n = mags.len();
    let cuts = [0, n / 3, 2 * n / 3, n];
    let maxima: Vec<f64> = cuts
        .windows(2)
        .map(|w| mags[w[0]..w[1]].iter().fold(0.0, |m: f64, v| m.max(*v)))
        .collect();
    maxima[2] < maxima[1] && maxima[1] < maxima[0]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiLcReport {
    pub x: Vec<f64>,
    /// `sup_v |ã(x + v ψ(x)) / ã(x) - 1|` per grid point.
    pub deviation: Vec<f64>,
    pub pass: bool,
}

/// ψ-locally-constant-on-average diagnostic.
pub fn check_psi_lc_avg(
    avg: &AveragedSeq,
    psi: &dyn Fn(f64) -> f64,
    x_grid: &[f64],
    v_grid: &[f64],
) -> Result<PsiLcReport> {
    let mut deviation = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let base = avg.tilde_positive_at(x)?;
        let s = psi(x);
        let mut sup: f64 = 0.0;
        for &v in v_grid {
            let y = x + v * s;
            // the definition only constrains shifts with x + v ψ(x) >= c x
            if y < 0.5 * x {
                continue;
            }
            let r = avg.tilde_at(y) / base;
            let d = (r - 1.0).abs();
            sup = if d.is_finite() { sup.max(d) } else { f64::INFINITY };
        }
        deviation.push(sup);
    }
    let pass = trend_verdict(&deviation);
    Ok(PsiLcReport {
        x: x_grid.to_vec(),
        deviation,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneVariant {
    /// `|a_k| <= c ã_n` for all `k > n/r`
    Later,
    /// `|a_k| <= c ã_n` for all `k < n r`
    Earlier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub variant: MonotoneVariant,
    pub r: f64,
    pub range: (usize, usize),
    /// Observed constant on the full range.
    pub c_observed: f64,
    /// Observed constant on the inner half range.
    pub c_inner: f64,
    pub pass: bool,
}

const MONOTONE_GROWTH_TOL: f64 = 0.05;

fn monotone_constant(
    abs_a: &[f64],
    tilde: &[f64],
    lo: usize,
    hi: usize,
    r: f64,
    variant: MonotoneVariant,
) -> f64 {
    let len = hi - lo + 1;
    let mut c: f64 = 0.0;
    match variant {
        MonotoneVariant::Later => {
            let mut suffix = vec![0.0f64; len + 1];
            for i in (0..len).rev() {
                suffix[i] = suffix[i + 1].max(abs_a[i]);
            }
            for n in lo..=hi {
                let kmin = ((n as f64 / r).floor() as usize + 1).max(lo);
                if kmin > hi {
                    continue;
                }
                c = c.max(suffix[kmin - lo] / tilde[n - lo]);
            }
        }
        MonotoneVariant::Earlier => {
            let mut prefix = vec![0.0f64; len];
            let mut m: f64 = 0.0;
            for i in 0..len {
                m = m.max(abs_a[i]);
                prefix[i] = m;
            }
            for n in lo..=hi {
                let bound = (n as f64 * r).ceil() as usize;
                if bound == 0 {
                    continue;
                }
                let kmax = (bound - 1).min(hi);
                if kmax < lo {
                    continue;
                }
                c = c.max(prefix[kmax - lo] / tilde[n - lo]);
            }
        }
    }
    c
}

/// Monotone-on-average diagnostic on `[lo, hi]`, compared against the nested
/// range `[lo, lo + (hi - lo)/2]`.
pub fn check_monotone_avg(
    avg: &AveragedSeq,
    r: f64,
    variant: MonotoneVariant,
    lo: usize,
    hi: usize,
) -> Result<MonotoneReport> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r must be > 1, got {r}")));
    }
    if hi <= lo {
        return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
    }
    let abs_a: Vec<f64> = (lo..=hi).map(|k| avg.weight(k).abs()).collect();
    let mut tilde = Vec::with_capacity(hi - lo + 1);
    for n in lo..=hi {
        let t = avg.tilde(n);
        if !(t > 0.0) {
            return Err(Error::NonpositiveAverage { n, value: t });
        }
        tilde.push(t);
    }
    let mid = lo + (hi - lo) / 2;
    let c_full = monotone_constant(&abs_a, &tilde, lo, hi, r, variant);
    let c_inner = monotone_constant(&abs_a, &tilde, lo, mid, r, variant);
    let pass = c_full.is_finite() && c_full <= c_inner * (1.0 + MONOTONE_GROWTH_TOL) + 1e-12;
    Ok(MonotoneReport {
        variant,
        r,
        range: (lo, hi),
        c_observed: c_full,
        c_inner,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(d: usize) -> AveragingWindow {
        AveragingWindow::Constant { d }
    }

    #[test]
    fn averaged_examples() {
        for w in [d(1), d(3), AveragingWindow::Power { delta: 0.4 }] {
            for n in [0, 5, 123] {
                assert_eq!(averaged(&WeightSeq::constant(3.0), &w, n), 3.0);
            }
        }
        for n in 0..10 {
            assert_eq!(averaged(&WeightSeq::periodic(vec![2.0, 0.0]), &d(2), n), 1.0);
        }
        assert_eq!(averaged(&WeightSeq::power(1.0), &d(1), 7), 7.0);
    }

    #[test]
    fn nonpositive_average_reported() {
        let e = averaged_positive(&WeightSeq::periodic(vec![2.0, 0.0]), &d(1), 1);
        assert!(matches!(e, Err(Error::NonpositiveAverage { n: 1, .. })));
    }

    #[test]
    fn partial_sums_examples() {
        let mut a = AveragedSeq::new(WeightSeq::constant(1.0), d(1)).unwrap();
        let s = a.partial_sums(10);
        assert_eq!(s.plain, 11.0);
        assert_eq!(s.tilde, 11.0);
        assert_eq!(s.abs, 11.0);
        let mut b = AveragedSeq::new(WeightSeq::power(1.0), d(1)).unwrap();
        assert_eq!(b.partial_sums(3).moment, 14.0);
        let mut c = AveragedSeq::new(WeightSeq::periodic(vec![1.0, -3.0]), d(2)).unwrap();
        let s = c.partial_sums(3);
        assert_eq!(s.plain, -4.0);
        assert_eq!(s.abs, 8.0);
    }

    #[test]
    fn harmonic_and_shifted_power() {
        assert_eq!(WeightSeq::Harmonic.eval(0), 1.0);
        assert_eq!(WeightSeq::Harmonic.eval(4), 0.25);
        let w = WeightSeq::Power {
            gamma: -1.0,
            scale: 1.0,
            shift: 1.0,
        };
        assert_eq!(w.eval(9), 0.1);
        assert_eq!(w.eval_at(9.7), 0.1);
    }

    #[test]
    fn envelopes_dominate() {
        let seqs = [
            WeightSeq::constant(-2.0),
            WeightSeq::power(0.5),
            WeightSeq::power(-0.5),
            WeightSeq::Power {
                gamma: 1.5,
                scale: 2.0,
                shift: 3.0,
            },
            WeightSeq::Harmonic,
            WeightSeq::periodic(vec![2.0, -5.0, 0.0]),
            WeightSeq::Table {
                values: vec![1.0, -4.0, 2.0],
            },
            WeightSeq::exp(0.1, WeightSeq::power(1.0)),
            WeightSeq::exp(-0.2, WeightSeq::Harmonic),
        ];
        for s in &seqs {
            let e = s.envelope();
            for n in 0..500 {
                assert!(s.eval(n).abs() <= e.eval(n) * (1.0 + 1e-12), "{s:?} at {n}");
            }
        }
    }

    #[test]
    fn psi_lc_examples() {
        let psi = |t: f64| t.sqrt();
        let xs: Vec<f64> = (1..=30).map(|i| 100.0 * i as f64).collect();
        let vs = [-2.0, -1.0, 1.0, 2.0];
        let c = AveragedSeq::new(WeightSeq::constant(1.0), d(1)).unwrap();
        let r = check_psi_lc_avg(&c, &psi, &xs, &vs).unwrap();
        assert!(r.pass && r.deviation.iter().all(|v| *v == 0.0));
        let p = AveragedSeq::new(WeightSeq::periodic(vec![2.0, 0.0]), d(2)).unwrap();
        let r = check_psi_lc_avg(&p, &psi, &xs, &vs).unwrap();
        assert!(r.pass && r.deviation.iter().all(|v| *v == 0.0));
        let e = AveragedSeq::new(WeightSeq::exp(1.0, WeightSeq::constant(1.0)), d(1)).unwrap();
        let small: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
        let r = check_psi_lc_avg(&e, &psi, &small, &vs).unwrap();
        assert!(!r.pass);
        // a power sequence is psi-l.c. for psi = sqrt
        let s = AveragedSeq::new(WeightSeq::power(0.5), d(1)).unwrap();
        assert!(check_psi_lc_avg(&s, &psi, &xs, &vs).unwrap().pass);
        // the raw periodic sequence is not locally constant
        let raw = AveragedSeq::new(WeightSeq::periodic(vec![2.0, 1.0]), d(1)).unwrap();
        assert!(!check_psi_lc_avg(&raw, &psi, &xs, &vs).unwrap().pass);
    }

    /// Direct O(N^2) scan over admissible pairs.
    fn brute_constant(seq: &WeightSeq, lo: usize, hi: usize, r: f64, v: MonotoneVariant) -> f64 {
        let mut c: f64 = 0.0;
        for n in lo..=hi {
            for k in lo..=hi {
                let ok = match v {
                    MonotoneVariant::Later => (k as f64) > n as f64 / r,
                    MonotoneVariant::Earlier => (k as f64) < n as f64 * r,
                };
                if ok {
                    c = c.max(seq.eval(k).abs() / seq.eval(n));
                }
            }
        }
        c
    }

    #[test]
    fn monotone_examples_against_direct_scan() {
        let h = AveragedSeq::new(WeightSeq::Harmonic, d(1)).unwrap();
        let rep = check_monotone_avg(&h, 2.0, MonotoneVariant::Later, 2, 1000).unwrap();
        let oracle = brute_constant(&WeightSeq::Harmonic, 2, 1000, 2.0, MonotoneVariant::Later);
        assert_abs_diff_eq!(rep.c_observed, oracle, epsilon = 1e-12);
        assert!((rep.c_observed - 2.0).abs() < 0.01);
        assert!(rep.pass);

        let s = AveragedSeq::new(WeightSeq::power(0.5), d(1)).unwrap();
        let rep = check_monotone_avg(&s, 2.0, MonotoneVariant::Earlier, 1, 1000).unwrap();
        let oracle = brute_constant(&WeightSeq::power(0.5), 1, 1000, 2.0, MonotoneVariant::Earlier);
        assert_abs_diff_eq!(rep.c_observed, oracle, epsilon = 1e-12);
        assert!((rep.c_observed - 2f64.sqrt()).abs() < 0.01);
        assert!(rep.pass);

        let mut last = 0.0;
        for hi in [100, 1000, 10_000] {
            let rep = check_monotone_avg(&s, 2.0, MonotoneVariant::Later, 1, hi).unwrap();
            assert!(!rep.pass);
            assert!(rep.c_observed > last);
            last = rep.c_observed;
        }
    }

    #[test]
    fn monotone_rejects_nonpositive_average() {
        let p = AveragedSeq::new(WeightSeq::periodic(vec![1.0, 0.0]), d(1)).unwrap();
        assert!(matches!(
            check_monotone_avg(&p, 2.0, MonotoneVariant::Earlier, 1, 10),
            Err(Error::NonpositiveAverage { n: 1, .. })
        ));
    }

    #[test]
    fn earlier_terms_bound_holds_for_increasing_weights() {
        for s in [
            WeightSeq::constant(1.0),
            WeightSeq::power(0.25),
            WeightSeq::power(0.5),
            WeightSeq::power(1.0),
            WeightSeq::power(2.0),
        ] {
            let a = AveragedSeq::new(s.clone(), d(1)).unwrap();
            assert!(check_monotone_avg(&a, 2.0, MonotoneVariant::Earlier, 1, 10_000).unwrap().pass, "{s:?}");
        }
    }

    #[test]
    fn trend_verdicts() {
        assert!(trend_verdict(&[0.0; 6]));
        assert!(trend_verdict(&[1.0, 0.5, 0.3, 0.2, 0.1, 0.05]));
        assert!(!trend_verdict(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert!(!trend_verdict(&[1.0, f64::INFINITY, 0.0]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn seq() -> impl Strategy<Value = WeightSeq> {
            prop_oneof![
                (-5.0f64..5.0).prop_map(WeightSeq::constant),
                (-1.0f64..2.0).prop_map(WeightSeq::power),
                Just(WeightSeq::Harmonic),
                prop::collection::vec(-3.0f64..3.0, 1..5).prop_map(WeightSeq::periodic),
            ]
        }

        proptest! {
            #[test]
            fn constant_average_is_exact(c in -10.0f64..10.0, dd in 1usize..9, n in 0usize..1000) {
                prop_assert_eq!(averaged(&WeightSeq::constant(c), &d(dd), n), c);
            }

            #[test]
            fn unit_window_is_identity(s in seq(), n in 0usize..1000) {
                prop_assert_eq!(averaged(&s, &d(1), n), s.eval(n));
            }

            #[test]
            fn tilde_increments(s in seq(), dd in 1usize..5, n in 1usize..300) {
                let mut a = AveragedSeq::new(s, d(dd)).unwrap();
                let hi = a.partial_sums(n).tilde;
                let lo = a.partial_sums(n - 1).tilde;
                let t = a.tilde(n);
                prop_assert!((hi - lo - t).abs() <= 1e-12 * (1.0 + hi.abs()));
            }
        }
    }
}
