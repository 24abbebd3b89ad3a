//! Cumulant function `L(λ) = ln E e^{λξ}`, its minimiser, the root `λ_q` of
//! `L(λ) = -q` on the increasing branch, and the exponentially tilted jump law
//! `P(ξ^(λ) ∈ dt) = e^{λt} P(ξ ∈ dt) / φ(λ)`.

use serde::Serialize;

use crate::dist::{Family, JumpModel};
use crate::error::{Error, Result};
use crate::numeric::bisect_increasing;

const LATTICE_ROOT_TOL: f64 = 1e-12;
const CONTINUOUS_ROOT_TOL: f64 = 1e-9;

/// `L(λ)`; `f64::INFINITY` outside the mgf domain.
pub fn cumulant(model: &JumpModel, lambda: f64) -> f64 {
    model.log_mgf(lambda)
}

fn derivs(model: &JumpModel, lambda: f64) -> Result<(f64, f64, f64)> {
    model
        .cumulant_derivs(lambda)
        .ok_or_else(|| Error::MgfUnavailable("cumulant derivatives not available for this family".into()))
}

/// `(λ_min, L(λ_min))`. `λ_min = -∞` when `L` increases on the whole domain;
/// then the second value is the limit `L(-∞)`.
pub fn lambda_min(model: &JumpModel) -> Result<(f64, f64)> {
    let mean = model.renewal_moments()?.mean;
    match model.family() {
        Family::Lattice(t) => {
            if t.min_jump() >= 0 {
                return Ok((f64::NEG_INFINITY, t.prob(0).ln()));
            }
            let mut lo = -1.0;
            while derivs(model, lo)?.1 >= 0.0 {
                lo *= 2.0;
            }
            let lam = bisect_increasing(|l| t_deriv(model, l), lo, 0.0);
            Ok((lam, cumulant(model, lam)))
        }
        Family::Normal { sd, .. } => {
            let lam = -mean / (sd * sd);
            Ok((lam, cumulant(model, lam)))
        }
        Family::ShiftedExponential { shift, rate } => {
            if *shift >= 0.0 {
                Ok((f64::NEG_INFINITY, f64::NEG_INFINITY))
            } else {
                let lam = rate + 1.0 / shift;
                Ok((lam, cumulant(model, lam)))
            }
        }
        Family::ParetoShifted { .. } => Err(Error::MgfUnavailable(
            "tilting is only implemented for lattice, normal and shifted-exponential laws".into(),
        )),
    }
}

fn t_deriv(model: &JumpModel, lambda: f64) -> f64 {
    model.cumulant_derivs(lambda).map(|d| d.1).unwrap_or(f64::NAN)
}

/// Open interval of admissible `q`: `-q ∈ (L(λ_min), L(λ+))`.
pub fn admissible_q(model: &JumpModel) -> Result<(f64, f64)> {
    let (_, l_min) = lambda_min(model)?;
    let (_, lambda_plus) = model.mgf_domain();
    let l_plus = if lambda_plus.is_finite() {
        cumulant(model, lambda_plus)
    } else {
        f64::INFINITY
    };
    // the three supported families all have L(λ+) = +∞ once the mean is positive
    let l_plus = if l_plus.is_nan() { f64::INFINITY } else { l_plus };
    Ok((-l_plus, -l_min))
}

#[derive(Debug, Clone, Serialize)]
pub struct TiltContext {
    pub q: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub lambda_min: f64,
    pub l_min: f64,
    pub lambda_q: f64,
    pub mu_q: f64,
    /// `|L(λ_q) + q|` achieved by the solver.
    pub residual: f64,
    #[serde(skip)]
    pub tilted: JumpModel,
}

/// Solves `L(λ) = -q` on `(λ_min, λ+)` by bisection followed by Newton
/// polishing, and builds the tilted law.
pub fn solve_lambda_q(model: &JumpModel, q: f64) -> Result<TiltContext> {
    let (lambda_minus, lambda_plus) = model.mgf_domain();
    let (lam_min, l_min) = lambda_min(model)?;
    let (q_lo, q_hi) = admissible_q(model)?;
    if !(q > q_lo && q < q_hi) {
        return Err(Error::QOutOfRange { q, lo: q_lo, hi: q_hi });
    }
    let tol = if model.is_lattice() {
        LATTICE_ROOT_TOL
    } else {
        CONTINUOUS_ROOT_TOL
    };
    let target = -q;
    let lambda_q = if q == 0.0 {
        0.0
    } else {
        let f = |l: f64| cumulant(model, l) - target;
        let (mut lo, mut hi) = if target > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
        if target > 0.0 {
            // f is +inf beyond λ+, so doubling always ends in a valid bracket
            while f(hi) <= 0.0 && hi < 1e6 {
                hi *= 2.0;
            }
        } else if lam_min.is_finite() {
            lo = lam_min;
        } else {
            while f(lo) >= 0.0 {
                lo *= 2.0;
                if lo < -1e6 {
                    break;
                }
            }
        }
        let mut lam = bisect_increasing(f, lo, hi);
        // Newton polish: keep the iterate only while the residual improves
        for _ in 0..8 {
            let (l, d1, _) = derivs(model, lam)?;
            let r = l - target;
            if r == 0.0 || d1 <= 0.0 {
                break;
            }
            let next = lam - r / d1;
            if (cumulant(model, next) - target).abs() < r.abs() {
                lam = next;
            } else {
                break;
            }
        }
        lam
    };
    let (l, mu_q, _) = derivs(model, lambda_q)?;
    let residual = (l - target).abs();
    if residual > tol {
        return Err(Error::Precondition(format!(
            "root solver for λ_q reached residual {residual:e} > {tol:e}"
        )));
    }
    if q != 0.0 && !(lambda_q > lam_min && lambda_q < lambda_plus) {
        return Err(Error::Precondition(format!(
            "λ_q = {lambda_q} escaped ({lam_min}, {lambda_plus})"
        )));
    }
    Ok(TiltContext {
        q,
        lambda_minus,
        lambda_plus,
        lambda_min: lam_min,
        l_min,
        lambda_q,
        mu_q,
        residual,
        tilted: tilt(model, lambda_q)?,
    })
}

/// Cramér transform of the jump law.
pub fn tilt(model: &JumpModel, lambda: f64) -> Result<JumpModel> {
    if lambda == 0.0 {
        return Ok(model.clone());
    }
    let l = cumulant(model, lambda);
    if !l.is_finite() {
        return Err(Error::MgfUnavailable(format!("λ = {lambda} lies outside the mgf domain")));
    }
    match model.family() {
        Family::Lattice(t) => {
            let probs: Vec<f64> = t
                .probs()
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    if p > 0.0 {
                        (p.ln() + lambda * (t.offset() + i as i64) as f64 - l).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = probs.iter().sum();
            let probs = probs.into_iter().map(|p| p / total).collect();
            JumpModel::lattice(t.offset(), probs)
        }
        Family::Normal { mean, sd } => JumpModel::normal(mean + sd * sd * lambda, *sd),
        Family::ShiftedExponential { shift, rate } => JumpModel::shifted_exponential(*shift, rate - lambda),
        Family::ParetoShifted { .. } => Err(Error::MgfUnavailable(
            "the shifted Pareto family is not closed under tilting".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn signed() -> JumpModel {
        JumpModel::lattice(-1, vec![0.25, 0.0, 0.75]).unwrap()
    }

    /// Closed-form root of `0.25/z + 0.75 z = e^{-q}` on the increasing branch.
    fn quadratic_oracle(q: f64) -> (f64, f64) {
        let c = (-q).exp();
        let z = (c + (c * c - 0.75).sqrt()) / 1.5;
        let mu = (0.75 * z - 0.25 / z) / (0.75 * z + 0.25 / z);
        (z.ln(), mu)
    }

    #[test]
    fn cumulant_examples() {
        assert_eq!(cumulant(&signed(), 0.0), 0.0);
        let sym = JumpModel::lattice(-1, vec![0.5, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(cumulant(&sym, 2f64.ln()), 1.25f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(cumulant(&sym, 2f64.ln()), 0.2231436, epsilon = 1e-7);
        for l in [-0.5, 0.0, 0.5] {
            let h = 1e-3;
            let d2 = cumulant(&sym, l + h) - 2.0 * cumulant(&sym, l) + cumulant(&sym, l - h);
            assert!(d2 >= 0.0);
        }
    }

    #[test]
    fn solve_examples_match_quadratic_oracle() {
        let ctx = solve_lambda_q(&signed(), 0.0).unwrap();
        assert_eq!(ctx.lambda_q, 0.0);
        assert_abs_diff_eq!(ctx.mu_q, 0.5, epsilon = 1e-15);

        for (q, lam_expect, mu_expect) in [(0.1, -0.251012, 0.289731), (-0.1, 0.177765, 0.621250)] {
            let (lam, mu) = quadratic_oracle(q);
            assert_abs_diff_eq!(lam, lam_expect, epsilon = 1e-4);
            assert_abs_diff_eq!(mu, mu_expect, epsilon = 1e-4);
            let ctx = solve_lambda_q(&signed(), q).unwrap();
            assert_abs_diff_eq!(ctx.lambda_q, lam, epsilon = 1e-13);
            assert_abs_diff_eq!(ctx.mu_q, mu, epsilon = 1e-12);
            assert!(ctx.residual <= 1e-15);
        }
    }

    #[test]
    fn lambda_min_and_admissible_interval() {
        // φ(λ) = 0.25 e^{-λ} + 0.75 e^{λ} is minimised at e^{2λ} = 1/3
        let (lam, lmin) = lambda_min(&signed()).unwrap();
        assert_abs_diff_eq!(lam, -0.5 * 3f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(lmin, (0.75f64).sqrt().ln(), epsilon = 1e-14);
        let (lo, hi) = admissible_q(&signed()).unwrap();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert_abs_diff_eq!(hi, -lmin, epsilon = 1e-14);
        match solve_lambda_q(&signed(), hi + 0.01) {
            Err(Error::QOutOfRange { .. }) => {}
            other => panic!("expected QOutOfRange, got {other:?}"),
        }
        // nonnegative jumps: λ_min = -∞, L(-∞) = ln p(0)
        let m = JumpModel::lattice(0, vec![0.5, 0.5]).unwrap();
        let (lam, lmin) = lambda_min(&m).unwrap();
        assert_eq!(lam, f64::NEG_INFINITY);
        assert_abs_diff_eq!(lmin, 0.5f64.ln(), epsilon = 1e-15);
        assert!(solve_lambda_q(&m, 0.5).is_ok());
        assert!(solve_lambda_q(&m, 0.7).is_err());
    }

    #[test]
    fn tilt_examples() {
        let m = JumpModel::lattice(0, vec![0.5, 0.5]).unwrap();
        let t = tilt(&m, 2f64.ln()).unwrap();
        let p = t.table().unwrap().probs();
        assert_abs_diff_eq!(p[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(tilt(&m, 0.0).unwrap(), m);
        for q in [-0.3, -0.1, 0.05, 0.1] {
            let ctx = solve_lambda_q(&signed(), q).unwrap();
            assert_abs_diff_eq!(ctx.tilted.moments().mean, ctx.mu_q, epsilon = 1e-10);
        }
    }

    #[test]
    fn continuous_families() {
        let n = JumpModel::normal(1.0, 2.0).unwrap();
        let ctx = solve_lambda_q(&n, -0.3).unwrap();
        // μλ + σ²λ²/2 = 0.3
        let lam = (-1.0 + (1.0f64 + 4.0 * 2.0 * 0.3).sqrt()) / 4.0;
        assert_abs_diff_eq!(ctx.lambda_q, lam, epsilon = 1e-10);
        assert_abs_diff_eq!(ctx.tilted.moments().mean, 1.0 + 4.0 * lam, epsilon = 1e-10);
        let e = JumpModel::shifted_exponential(-0.5, 1.0).unwrap();
        let ctx = solve_lambda_q(&e, -0.2).unwrap();
        assert!(ctx.lambda_q < 1.0 && ctx.lambda_q > 0.0);
        assert_abs_diff_eq!(cumulant(&e, ctx.lambda_q), 0.2, epsilon = 1e-9);
        assert!(solve_lambda_q(&JumpModel::pareto_shifted(0.0, 2.5).unwrap(), 0.1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn model() -> impl Strategy<Value = JumpModel> {
            prop::collection::vec(0.01f64..1.0, 3..6).prop_filter_map("positive mean", |w| {
                let s: f64 = w.iter().sum();
                let m = JumpModel::lattice(-1, w.iter().map(|x| x / s).collect()).ok()?;
                (m.moments().mean > 0.05).then_some(m)
            })
        }

        proptest! {
            #[test]
            fn cumulant_increasing_past_minimum(m in model()) {
                let (lam, _) = lambda_min(&m).unwrap();
                let mut prev = cumulant(&m, lam);
                for i in 1..60 {
                    let l = lam + i as f64 * 0.05;
                    let v = cumulant(&m, l);
                    prop_assert!(v > prev);
                    prev = v;
                }
            }

            #[test]
            fn tilt_roundtrip(m in model(), lam in -1.5f64..1.5) {
                let back = tilt(&tilt(&m, lam).unwrap(), -lam).unwrap();
                let (a, b) = (m.table().unwrap(), back.table().unwrap());
                prop_assert_eq!(a.offset(), b.offset());
                for (x, y) in a.probs().iter().zip(b.probs()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }

            #[test]
            fn solve_then_verify(m in model(), frac in 0.02f64..0.98) {
                let (_, hi) = admissible_q(&m).unwrap();
                // q grid spanning (-1, q_hi)
                let q = -1.0 + frac * (hi + 1.0);
                let ctx = solve_lambda_q(&m, q).unwrap();
                prop_assert!((cumulant(&m, ctx.lambda_q) + q).abs() <= 1e-12);
                prop_assert!(ctx.lambda_q > ctx.lambda_min && ctx.lambda_q < ctx.lambda_plus);
                prop_assert!(ctx.mu_q > 0.0);
            }
        }
    }
}
