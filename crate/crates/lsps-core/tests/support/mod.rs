//! Independent oracles for the acceptance suite. Everything here is built
//! from first principles (grid search, direct likelihood evaluation) so it
//! cannot share bugs with the solvers under test.

use lsps_core::propensity::Stratification;

/// Mean negative log-likelihood of an L1 logistic model on dense rows, with
/// the intercept profiled out by 1-D Newton (the intercept is unpenalized, so
/// the oracle optimizes it exactly at every grid point).
pub fn profiled_objective(rows: &[Vec<f64>], t: &[u8], theta: &[f64], lambda: f64) -> f64 {
    let n = rows.len() as f64;
    let etas: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(theta).map(|(x, th)| x * th).sum::<f64>())
        .collect();
    // Newton on b -> mean NLL is strictly convex and smooth in b
    let mut b = 0.0;
    for _ in 0..200 {
        let mut g = 0.0;
        let mut h = 0.0;
        for (eta, &ti) in etas.iter().zip(t) {
            let p = 1.0 / (1.0 + (-(eta + b)).exp());
            g += p - ti as f64;
            h += p * (1.0 - p);
        }
        if h <= 0.0 {
            break;
        }
        let step = g / h;
        b -= step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    let mut nll = 0.0;
    for (eta, &ti) in etas.iter().zip(t) {
        let z = eta + b;
        let ln1p = if z > 30.0 { z } else { (1.0 + z.exp()).ln() };
        nll += ln1p - ti as f64 * z;
    }
    nll / n + lambda * theta.iter().map(|c| c.abs()).sum::<f64>()
}

/// Exhaustive-equivalent grid search for the 2-covariate L1 logistic problem
/// over theta in [-5,5]^2 down to 1e-3 resolution. The profiled objective is
/// convex (partial minimization of a jointly convex function), so refining a
/// coarse grid around its argmin reaches the same point as the full 1e-3 grid.
pub fn logistic_grid_oracle_2d(rows: &[Vec<f64>], t: &[u8], lambda: f64) -> (f64, f64) {
    let mut center = (0.0f64, 0.0f64);
    let mut half = 5.0f64;
    let mut step = 0.1f64;
    loop {
        let mut best = (f64::INFINITY, center);
        let steps = (2.0 * half / step).round() as i64;
        for i in 0..=steps {
            let a = (center.0 - half + i as f64 * step).clamp(-5.0, 5.0);
            for j in 0..=steps {
                let b = (center.1 - half + j as f64 * step).clamp(-5.0, 5.0);
                let obj = profiled_objective(rows, t, &[a, b], lambda);
                if obj < best.0 {
                    best = (obj, (a, b));
                }
            }
        }
        center = best.1;
        if step <= 1e-3 {
            return center;
        }
        half = 2.0 * step;
        step /= 10.0;
    }
}

/// 1-D grid search for the stratified Cox partial likelihood maximizer, with
/// the likelihood evaluated directly from risk-set definitions (Breslow ties).
pub fn cox_grid_oracle(
    time: &[f64],
    event: &[u8],
    treatment: &[u8],
    strat: &Stratification,
    resolution: f64,
) -> f64 {
    let ll = |zeta: f64| -> f64 {
        let mut total = 0.0;
        for s in 0..strat.k {
            let members: Vec<usize> = (0..time.len())
                .filter(|&i| strat.stratum_of[i] as usize == s)
                .collect();
            // distinct event times in the stratum
            let mut times: Vec<f64> = members
                .iter()
                .filter(|&&i| event[i] == 1)
                .map(|&i| time[i])
                .collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            for &et in &times {
                let d: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| event[i] == 1 && time[i] == et)
                    .collect();
                let mut s0 = 0.0;
                for &i in &members {
                    if time[i] >= et {
                        s0 += if treatment[i] == 1 { zeta.exp() } else { 1.0 };
                    }
                }
                let d_treated = d.iter().filter(|&&i| treatment[i] == 1).count() as f64;
                total += d_treated * zeta - d.len() as f64 * s0.ln();
            }
        }
        total
    };
    let mut center = 0.0f64;
    let mut half = 5.0f64;
    let mut step = 0.01f64;
    loop {
        let mut best = (f64::NEG_INFINITY, center);
        let steps = (2.0 * half / step).round() as i64;
        for i in 0..=steps {
            let z = center - half + i as f64 * step;
            let v = ll(z);
            if v > best.0 {
                best = (v, z);
            }
        }
        center = best.1;
        if step <= resolution {
            return center;
        }
        half = 2.0 * step;
        step /= 10.0;
    }
}

/// Delete-one-replicate jackknife standard error of the RMSE about the true
/// effect, for trend tests on simulation sweeps.
pub fn rmse_jackknife_se(estimates: &[f64], truth: f64) -> f64 {
    let n = estimates.len();
    assert!(n >= 3);
    let rmse = |xs: &[f64]| -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
        let bias = m - truth;
        (var + bias * bias).sqrt()
    };
    let full: Vec<f64> = (0..n)
        .map(|leave| {
            let sub: Vec<f64> = estimates
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != leave)
                .map(|(_, &x)| x)
                .collect();
            rmse(&sub)
        })
        .collect();
    let m = full.iter().sum::<f64>() / n as f64;
    let ss = full.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}
