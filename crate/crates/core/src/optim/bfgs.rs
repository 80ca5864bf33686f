//! BFGS constant refinement.
//!
//! Minimizes mean squared error over an expression skeleton's constant
//! placeholders. Gradients come from central finite differences with
//! h = 1e-6·max(1, |c|); the line search is backtracking Armijo
//! (c1 = 1e-4, shrink 0.5). Objectives may fail (domain errors), which the
//! line search treats as an unacceptable step.

use super::OptimError;
use crate::expr::Expr;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 100,
            grad_tol: 1e-10,
            armijo_c1: 1e-4,
            shrink: 0.5,
            min_step: 1e-16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn fd_gradient(f: &impl Fn(&[f64]) -> Option<f64>, x: &[f64]) -> Option<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Some(g)
}

/// Minimize a possibly-failing objective from `x0`. Returns the best point
/// reached; `None` only when the objective fails at `x0` itself.
pub fn bfgs_minimize(
    f: impl Fn(&[f64]) -> Option<f64>,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Option<BfgsResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    if n == 0 {
        return Some(BfgsResult {
            x,
            fx,
            iterations: 0,
            converged: true,
        });
    }
    let mut g = match fd_gradient(&f, &x) {
        Some(g) => g,
        None => {
            return Some(BfgsResult {
                x,
                fx,
                iterations: 0,
                converged: false,
            })
        }
    };
    // Inverse Hessian approximation, dense row-major.
    let mut h_inv: Vec<f64> = (0..n * n)
        .map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 })
        .collect();

    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < opts.grad_tol {
            return Some(BfgsResult {
                x,
                fx,
                iterations,
                converged: true,
            });
        }
        iterations += 1;

        // Direction d = -H g; fall back to steepest descent when it is not
        // a descent direction.
        let mut dir = vec![0.0; n];
        for i in 0..n {
            let row = &h_inv[i * n..(i + 1) * n];
            dir[i] = -row.iter().zip(&g).map(|(h, g)| h * g).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            for v in h_inv.iter_mut() {
                *v = 0.0;
            }
            for i in 0..n {
                h_inv[i * n + i] = 1.0;
            }
        }

        // Backtracking Armijo line search; failed evaluations shrink too.
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= opts.min_step {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
            if let Some(ft) = f(&xt) {
                if ft <= fx + opts.armijo_c1 * alpha * slope {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            alpha *= opts.shrink;
        }
        let (x_new, f_new) = match accepted {
            Some(a) => a,
            None => {
                return Some(BfgsResult {
                    x,
                    fx,
                    iterations,
                    converged: false,
                })
            }
        };
        let g_new = match fd_gradient(&f, &x_new) {
            Some(g) => g,
            None => {
                return Some(BfgsResult {
                    x: x_new,
                    fx: f_new,
                    iterations,
                    converged: false,
                })
            }
        };

        // BFGS inverse update.
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(s, y)| s * y).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            // H <- (I - rho s yT) H (I - rho y sT) + rho s sT
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let row = &h_inv[i * n..(i + 1) * n];
                hy[i] = row.iter().zip(&y).map(|(h, y)| h * y).sum();
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(y, h)| y * h).sum();
            let mut new_h = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let term = h_inv[i * n + j] - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                    new_h[i * n + j] = term;
                }
            }
            h_inv = new_h;
        }

        let f_delta = (fx - f_new).abs();
        x = x_new;
        fx = f_new;
        g = g_new;
        if f_delta <= 1e-16 * (1.0 + fx.abs()) {
            return Some(BfgsResult {
                x,
                fx,
                iterations,
                converged: true,
            });
        }
    }
    Some(BfgsResult {
        x,
        fx,
        iterations,
        converged: false,
    })
}

/// Mean squared error of a fully concrete expression over the data, None
/// on any evaluation failure.
pub(crate) fn mse(expr: &Expr, data: &[(Vec<f64>, f64)]) -> Option<f64> {
    let mut acc = 0.0;
    for (x, y) in data {
        let v = expr.eval(x).ok()?;
        let r = v - y;
        acc += r * r;
    }
    let m = acc / data.len() as f64;
    m.is_finite().then_some(m)
}

/// Fit the constant placeholders of a skeleton to data by BFGS on the MSE,
/// with up to 3 restarts: the first from all-ones, later ones from N(0,1).
/// Returns the best fitted expression and its final MSE.
pub fn bfgs_fit_constants(
    skeleton: &Expr,
    data: &[(Vec<f64>, f64)],
    rng: &mut ChaCha8Rng,
) -> Result<(Expr, f64), OptimError> {
    assert!(!data.is_empty(), "empty data");
    let n_c = skeleton.hole_count();
    if n_c == 0 {
        return match mse(skeleton, data) {
            Some(m) => Ok((skeleton.clone(), m)),
            None => Err(OptimError::AllRestartsFailed),
        };
    }

    let objective = |c: &[f64]| -> Option<f64> { mse(&skeleton.substitute_holes(c), data) };
    let opts = BfgsOptions::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..3 {
        let x0: Vec<f64> = if restart == 0 {
            vec![1.0; n_c]
        } else {
            (0..n_c)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let Some(res) = bfgs_minimize(objective, &x0, &opts) else {
            continue;
        };
        if best.as_ref().map_or(true, |(_, f)| res.fx < *f) {
            best = Some((res.x, res.fx));
        }
        if best.as_ref().is_some_and(|(_, f)| *f < 1e-14) {
            break;
        }
    }
    match best {
        Some((c, f)) => Ok((skeleton.substitute_holes(&c), f)),
        None => Err(OptimError::AllRestartsFailed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_text;
    use crate::rng;

    #[test]
    fn linear_recovery_to_machine_precision() {
        let skel = parse_text("c*x0 + c").unwrap();
        let data: Vec<(Vec<f64>, f64)> = (0..20)
            .map(|i| {
                let x = -2.0 + 0.2 * i as f64;
                (vec![x], 2.0 * x + 3.0)
            })
            .collect();
        let mut r = rng::stream(1, "bfgs");
        let (fitted, final_mse) = bfgs_fit_constants(&skel, &data, &mut r).unwrap();
        assert!(final_mse < 1e-12, "mse {final_mse}");
        // Prefix-order substitution: first hole is the slope.
        match &fitted {
            Expr::Binary(_, l, r) => {
                match l.as_ref() {
                    Expr::Binary(_, c, _) => match c.as_ref() {
                        Expr::Const(v) => assert!((v - 2.0).abs() < 1e-6),
                        other => panic!("expected slope constant, got {other:?}"),
                    },
                    other => panic!("unexpected lhs {other:?}"),
                }
                match r.as_ref() {
                    Expr::Const(v) => assert!((v - 3.0).abs() < 1e-6),
                    other => panic!("expected intercept constant, got {other:?}"),
                }
            }
            other => panic!("unexpected shape {other:?}"),
        }
    }

    #[test]
    fn quadratic_in_two_constants_converges_fast() {
        // MSE of c0*x + c1 on exact linear data is a convex quadratic.
        let f = |c: &[f64]| -> Option<f64> {
            let mut acc = 0.0;
            for i in 0..10 {
                let x = i as f64 / 3.0;
                let r = c[0] * x + c[1] - (1.5 * x - 0.25);
                acc += r * r;
            }
            Some(acc / 10.0)
        };
        let res = bfgs_minimize(f, &[5.0, -7.0], &BfgsOptions::default()).unwrap();
        assert!(res.fx < 1e-12);
        assert!(res.iterations <= 20, "took {} iterations", res.iterations);
        assert!((res.x[0] - 1.5).abs() < 1e-5);
        assert!((res.x[1] + 0.25).abs() < 1e-5);
    }

    #[test]
    fn zero_placeholders_returns_direct_mse() {
        let e = parse_text("x0 * x0").unwrap();
        let data = vec![(vec![1.0], 1.0), (vec![2.0], 4.5)];
        let mut r = rng::stream(2, "bfgs");
        let (same, m) = bfgs_fit_constants(&e, &data, &mut r).unwrap();
        assert_eq!(same, e);
        assert!((m - 0.125).abs() < 1e-15);
    }

    #[test]
    fn all_restarts_failing_is_an_error() {
        // log(-5 - c) fails for every c sampled near the origin.
        let skel = parse_text("log(x0 - c*c)").unwrap();
        let data = vec![(vec![-5.0], 1.0), (vec![-6.0], 1.0)];
        let mut r = rng::stream(3, "bfgs");
        assert_eq!(
            bfgs_fit_constants(&skel, &data, &mut r).unwrap_err(),
            OptimError::AllRestartsFailed
        );
    }

    #[test]
    fn domain_failures_inside_search_are_survivable() {
        // log(c + x0): initial c=1 works on part of the domain only when
        // shifted; the optimizer must route around failing evaluations.
        let skel = parse_text("log(c + x0)").unwrap();
        let data: Vec<(Vec<f64>, f64)> = (1..15)
            .map(|i| {
                let x = i as f64 * 0.3;
                (vec![x], (2.5 + x).ln())
            })
            .collect();
        let mut r = rng::stream(4, "bfgs");
        let (_, m) = bfgs_fit_constants(&skel, &data, &mut r).unwrap();
        assert!(m < 1e-10, "mse {m}");
    }
}
