//! Projection identity, score-error decomposition and Fisher bound.

use super::{check_n, par_eval, IdentityCheckReport, Relation, Term};
use crate::error::Result;
use crate::numkit::{dot, mean_and_stderr, norm_sq, MeanStderr, Rng};
use crate::predictors::Predictor;
use crate::score_models::{shift_score_field, SamplableDistribution, ScoreModel};
use crate::stein_core::{langevin_apply, LaplacianRoute};

fn lp(pred: &dyn Predictor, score: &ScoreModel, x: &[f64]) -> Result<f64> {
    // the exact route draws nothing from the generator
    langevin_apply(pred, score, x, LaplacianRoute::Exact, &mut Rng::new(0))
}

fn paired_diff(a: &[f64], b: &[f64]) -> Result<MeanStderr> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_stderr(&d)
}


/// `E_q[L_p f] = −E_q[∇f · ∇log(q/p)]`, both sides on the same `q`-draws.
pub fn projection_identity_check(
    pred: &dyn Predictor,
    p: &ScoreModel,
    q: &SamplableDistribution,
    n: usize,
    rng: &mut Rng,
) -> Result<IdentityCheckReport> {
    check_n(n)?;
    let seed = rng.seed();
    let xs = q.sample(n, rng);
    let lhs = par_eval(&xs, |x| lp(pred, p, x))?;
    let rhs = par_eval(&xs, |x| Ok(-dot(&pred.gradient(x)?, &shift_score_field(p, q.model(), x)?)))?;
    let combined = paired_diff(&lhs, &rhs)?.stderr;
    Ok(IdentityCheckReport::new(
        "projection-identity",
        Relation::Equality,
        mean_and_stderr(&lhs)?,
        mean_and_stderr(&rhs)?,
        combined,
        n,
        seed,
        vec![],
    ))
}

struct ScoreErrorSamples {
    /// `L_p̃ f` on `q`-draws and `p`-draws.
    approx_q: Vec<f64>,
    approx_p: Vec<f64>,
    /// `L_p f` on `q`-draws.
    exact_q: Vec<f64>,
    /// `g = (s̃ − s_p)·∇f` and `l − 1` on `p`-draws.
    g_p: Vec<f64>,
    lm1_p: Vec<f64>,
}

fn score_error_samples(
    pred: &dyn Predictor,
    p: &SamplableDistribution,
    q: &SamplableDistribution,
    approx: &ScoreModel,
    xq: &[Vec<f64>],
    xp: &[Vec<f64>],
) -> Result<ScoreErrorSamples> {
    let g = |x: &[f64]| -> Result<f64> { Ok(dot(&shift_score_field(p.model(), approx, x)?, &pred.gradient(x)?)) };
    Ok(ScoreErrorSamples {
        approx_q: par_eval(xq, |x| lp(pred, approx, x))?,
        approx_p: par_eval(xp, |x| lp(pred, approx, x))?,
        exact_q: par_eval(xq, |x| lp(pred, p.model(), x))?,
        g_p: par_eval(xp, g)?,
        lm1_p: par_eval(xp, |x| Ok(q.density_ratio(p, x)? - 1.0))?,
    })
}

/// `E_q[L_p̃ f] = E_p[L_p̃ f] + S_f(p,q) + ⟨g, l − 1⟩_{L²(p)}`.
///
/// Rearranged so each side is a mean over one independent sample set:
/// `E_q[L_p̃ f − L_p f]` on `q`-draws against `E_p[L_p̃ f + g (l − 1)]` on `p`-draws.
pub fn directional_decomposition_check(
    pred: &dyn Predictor,
    p: &SamplableDistribution,
    q: &SamplableDistribution,
    approx: &ScoreModel,
    n: usize,
    rng: &mut Rng,
) -> Result<IdentityCheckReport> {
    check_n(n)?;
    let seed = rng.seed();
    let xq = q.sample(n, rng);
    let xp = p.sample(n, rng);
    let s = score_error_samples(pred, p, q, approx, &xq, &xp)?;
    let cross: Vec<f64> = s.g_p.iter().zip(&s.lm1_p).map(|(g, l)| g * l).collect();
    let lhs = paired_diff(&s.approx_q, &s.exact_q)?;
    let rhs_v: Vec<f64> = s.approx_p.iter().zip(&cross).map(|(a, c)| a + c).collect();
    let rhs = mean_and_stderr(&rhs_v)?;
    let eq = mean_and_stderr(&s.approx_q)?;
    let ep = mean_and_stderr(&s.approx_p)?;
    let corrected = MeanStderr { mean: eq.mean - ep.mean, stderr: eq.stderr.hypot(ep.stderr) };
    let terms = vec![
        Term::new("approx-functional-q", eq),
        Term::new("approx-functional-p", ep),
        Term::new("taste", mean_and_stderr(&s.exact_q)?),
        Term::new("score-error-cross", mean_and_stderr(&cross)?),
        Term::new("corrected-functional", corrected),
    ];
    Ok(IdentityCheckReport::new(
        "directional-decomposition",
        Relation::Equality,
        lhs,
        rhs,
        lhs.stderr.hypot(rhs.stderr),
        n,
        seed,
        terms,
    ))
}

/// `m^{1/k}` with its delta-method standard error.
fn root(m: MeanStderr, k: f64) -> MeanStderr {
    let v = m.mean.max(0.0).powf(1.0 / k);
    let stderr = if m.mean > 0.0 { m.stderr * v / (k * m.mean) } else { 0.0 };
    MeanStderr { mean: v, stderr }
}

/// `|⟨g, l − 1⟩| ≤ √J · ‖∇f‖_{L⁴(p)} · ‖l − 1‖_{L⁴(p)}`, every factor from
/// the same `p`-draws; factor errors combine in relative quadrature.
pub fn fisher_bound_check(
    pred: &dyn Predictor,
    p: &SamplableDistribution,
    q: &SamplableDistribution,
    approx: &ScoreModel,
    n: usize,
    rng: &mut Rng,
) -> Result<IdentityCheckReport> {
    check_n(n)?;
    let seed = rng.seed();
    let xp = p.sample(n, rng);
    let cross = par_eval(&xp, |x| {
        let g = dot(&shift_score_field(p.model(), approx, x)?, &pred.gradient(x)?);
        Ok(g * (q.density_ratio(p, x)? - 1.0))
    })?;
    let fisher = par_eval(&xp, |x| Ok(norm_sq(&shift_score_field(p.model(), approx, x)?)))?;
    let grad4 = par_eval(&xp, |x| Ok(norm_sq(&pred.gradient(x)?).powi(2)))?;
    let ratio4 = par_eval(&xp, |x| Ok((q.density_ratio(p, x)? - 1.0).powi(4)))?;

    let c = mean_and_stderr(&cross)?;
    let lhs = MeanStderr { mean: c.mean.abs(), stderr: c.stderr };
    let factors = [
        root(mean_and_stderr(&fisher)?, 2.0),
        root(mean_and_stderr(&grad4)?, 4.0),
        root(mean_and_stderr(&ratio4)?, 4.0),
    ];
    let value: f64 = factors.iter().map(|f| f.mean).product();
    let rel2: f64 = factors.iter().filter(|f| f.mean > 0.0).map(|f| (f.stderr / f.mean).powi(2)).sum();
    let rhs = MeanStderr { mean: value, stderr: value * rel2.sqrt() };
    let terms = vec![
        Term::new("sqrt-fisher", factors[0]),
        Term::new("grad-l4", factors[1]),
        Term::new("ratio-l4", factors[2]),
        Term::new("score-error-cross", c),
    ];
    Ok(IdentityCheckReport::new(
        "fisher-bound",
        Relation::UpperBound,
        lhs,
        rhs,
        lhs.stderr.hypot(rhs.stderr),
        n,
        seed,
        terms,
    ))
}
