//! Limited-memory BFGS with a strong-Wolfe line search and restarts.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Cost value, its two parts and gradient at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub jb: f64,
    pub jo: f64,
    pub gradient: Vec<f64>,
}

/// Anything the minimizer can drive.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation>;

    /// Called when the line search gives up at `x`. Problems with a
    /// background term move it to `x`; the default does nothing.
    fn restart(&mut self, _x: &[f64]) {}
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let (value, gradient) = self(x);
        Ok(Evaluation {
            value,
            jb: 0.0,
            jo: value,
            gradient,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Cost evaluations allowed per line search before a restart.
    pub max_ls_attempts: usize,
    pub max_iters: usize,
    /// Stop when the gradient 2-norm falls to this value.
    pub gtol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_ls_attempts: 5,
            max_iters: 100,
            gtol: 0.0,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidArgument("need 0 < c1 < c2 < 1"));
        }
        if self.max_ls_attempts == 0 || self.memory == 0 {
            return Err(Error::InvalidArgument("memory and attempts must be positive"));
        }
        Ok(())
    }
}

/// One accepted iterate (iteration 0 is the starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub jb: f64,
    pub jo: f64,
    pub gnorm: f64,
    pub alpha: f64,
    /// A restart happened since the previous record.
    pub restart: bool,
    /// Search direction was steepest descent.
    pub steepest: bool,
    /// `φ(0)`, `φ'(0)`, `φ(α)`, `φ'(α)` of the accepted line search.
    pub phi0: f64,
    pub dphi0: f64,
    pub phi: f64,
    pub dphi: f64,
}

impl IterationRecord {
    /// Strong Wolfe conditions for the recorded step.
    pub fn satisfies_wolfe(&self, c1: f64, c2: f64) -> bool {
        if self.iter == 0 {
            return true;
        }
        self.phi <= self.phi0 + c1 * self.alpha * self.dphi0
            && math::abs(self.dphi) <= c2 * math::abs(self.dphi0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    /// The line search failed right after a restart.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub best: Evaluation,
    pub history: Vec<IterationRecord>,
    pub evaluations: usize,
    pub restarts: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    math::dot(a, b)
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + a * d).collect()
}

/// `−H g` by the two-loop recursion.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    alpha: f64,
    eval: Evaluation,
    dphi: f64,
}

/// Safeguarded cubic minimizer between `a` and `b`.
fn interpolate(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let guard = 0.01 * (hi - lo);
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = math::sqrt(disc) * if b > a { 1.0 } else { -1.0 };
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() {
        t.clamp(lo + guard, hi - guard)
    } else {
        mid
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective + ?Sized>(
    obj: &mut O,
    x: &[f64],
    d: &[f64],
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Result<Option<Trial>> {
    let mut budget = cfg.max_ls_attempts;
    let mut try_at = |a: f64, evals: &mut usize| -> Result<Trial> {
        let eval = obj.evaluate(&axpy(x, a, d))?;
        *evals += 1;
        let dphi = dot(&eval.gradient, d);
        Ok(Trial {
            alpha: a,
            eval,
            dphi,
        })
    };
    let armijo = |t: &Trial| t.eval.value <= phi0 + cfg.c1 * t.alpha * dphi0;
    let curvature = |t: &Trial| math::abs(t.dphi) <= -cfg.c2 * dphi0;

    let mut prev: (f64, f64, f64) = (0.0, phi0, dphi0);
    let mut a = alpha0;
    let mut first = true;
    let (mut lo, mut hi);
    loop {
        if budget == 0 {
            return Ok(None);
        }
        budget -= 1;
        let t = try_at(a, evals)?;
        if !t.eval.value.is_finite() {
            // shrink towards the last good point
            lo = prev;
            hi = (a, f64::INFINITY, 0.0);
            break;
        }
        if !armijo(&t) || (!first && t.eval.value >= prev.1) {
            lo = prev;
            hi = (t.alpha, t.eval.value, t.dphi);
            break;
        }
        if curvature(&t) {
            return Ok(Some(t));
        }
        if t.dphi >= 0.0 {
            lo = (t.alpha, t.eval.value, t.dphi);
            hi = prev;
            break;
        }
        prev = (t.alpha, t.eval.value, t.dphi);
        a *= 4.0;
        first = false;
    }
    // zoom
    while budget > 0 {
        budget -= 1;
        let a = if hi.1.is_finite() {
            interpolate(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            0.5 * (lo.0 + hi.0)
        };
        let t = try_at(a, evals)?;
        if !t.eval.value.is_finite() || !armijo(&t) || t.eval.value >= lo.1 {
            hi = (t.alpha, t.eval.value, t.dphi);
        } else {
            if curvature(&t) {
                return Ok(Some(t));
            }
            if t.dphi * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t.alpha, t.eval.value, t.dphi);
        }
    }
    Ok(None)
}

/// Minimizes `obj` from `x0`.
pub fn minimize<O: Objective + ?Sized>(
    obj: &mut O,
    x0: &[f64],
    cfg: &LbfgsConfig,
) -> Result<LbfgsResult> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut cur = obj.evaluate(&x)?;
    let mut evals = 1;
    if !cur.value.is_finite() {
        return Err(Error::NonFinite);
    }
    let gnorm = |e: &Evaluation| math::norm2(&e.gradient);
    let mut history = alloc::vec![IterationRecord {
        iter: 0,
        j: cur.value,
        jb: cur.jb,
        jo: cur.jo,
        gnorm: gnorm(&cur),
        alpha: 0.0,
        restart: false,
        steepest: false,
        phi0: cur.value,
        dphi0: 0.0,
        phi: cur.value,
        dphi: 0.0,
    }];
    let mut best = (x.clone(), cur.clone());
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut restarts = 0;
    let mut pending_restart = false;
    let mut termination = Termination::MaxIterations;
    let mut iter = 0;

    while iter < cfg.max_iters {
        if gnorm(&cur) <= cfg.gtol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut d = direction(&cur.gradient, &pairs);
        let mut dphi0 = dot(&cur.gradient, &d);
        let mut steepest = pairs.is_empty();
        if !(dphi0 < 0.0) {
            pairs.clear();
            d = cur.gradient.iter().map(|g| -g).collect();
            dphi0 = dot(&cur.gradient, &d);
            steepest = true;
        }
        let alpha0 = if pairs.is_empty() {
            1.0 / gnorm(&cur)
        } else {
            1.0
        };
        match line_search(obj, &x, &d, cur.value, dphi0, alpha0, cfg, &mut evals)? {
            Some(t) => {
                let x_new = axpy(&x, t.alpha, &d);
                let s: Vec<f64> = d.iter().map(|v| v * t.alpha).collect();
                let y: Vec<f64> = t
                    .eval
                    .gradient
                    .iter()
                    .zip(&cur.gradient)
                    .map(|(a, b)| a - b)
                    .collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * math::norm2(&s) * math::norm2(&y) {
                    if pairs.len() == cfg.memory {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / sy));
                }
                iter += 1;
                history.push(IterationRecord {
                    iter,
                    j: t.eval.value,
                    jb: t.eval.jb,
                    jo: t.eval.jo,
                    gnorm: gnorm(&t.eval),
                    alpha: t.alpha,
                    restart: pending_restart,
                    steepest,
                    phi0: cur.value,
                    dphi0,
                    phi: t.eval.value,
                    dphi: t.dphi,
                });
                pending_restart = false;
                x = x_new;
                cur = t.eval;
                if cur.value < best.1.value {
                    best = (x.clone(), cur.clone());
                }
            }
            None => {
                if pending_restart {
                    termination = Termination::Stalled;
                    break;
                }
                obj.restart(&x);
                restarts += 1;
                pairs.clear();
                cur = obj.evaluate(&x)?;
                evals += 1;
                pending_restart = true;
            }
        }
    }
    Ok(LbfgsResult {
        x: best.0,
        best: best.1,
        history,
        evaluations: evals,
        restarts,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_converges_quickly() {
        // f = ½ xᵀAx − bᵀx with SPD A
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let mut f = |x: &[f64]| {
            let ax: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect();
            let v = 0.5 * dot(x, &ax) - dot(&b, x);
            let g = (0..3).map(|i| ax[i] - b[i]).collect();
            (v, g)
        };
        // tight curvature condition makes the line search exact on quadratics
        let cfg = LbfgsConfig {
            max_iters: 5,
            gtol: 1e-10,
            c2: 1e-3,
            ..LbfgsConfig::default()
        };
        let r = minimize(&mut f, &[0.0; 3], &cfg).unwrap();
        assert!(r.history.last().unwrap().gnorm <= 1e-10, "{:?}", r.history);
        assert!(r.history.len() - 1 <= 5);
        for h in &r.history {
            assert!(h.satisfies_wolfe(cfg.c1, cfg.c2));
        }
    }

    #[test]
    fn rosenbrock_decreases() {
        let mut f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let cfg = LbfgsConfig {
            max_iters: 200,
            gtol: 1e-8,
            ..LbfgsConfig::default()
        };
        let r = minimize(&mut f, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.best.value < 1e-12, "{}", r.best.value);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = LbfgsConfig {
            c1: 0.95,
            ..LbfgsConfig::default()
        };
        let mut f = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        assert!(minimize(&mut f, &[1.0], &cfg).is_err());
    }
}
