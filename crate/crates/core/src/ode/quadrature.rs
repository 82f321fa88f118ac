use super::{check_steps, WGrid};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Evaluates the integrating-factor form
/// `w_q(t) = exp(-lambda_q (T-t)) exp(-k q b) + eta int_t^T exp(-lambda_q (s-t)) w_{q-1}(s) ds`
/// row by row, with the integral split into two-interval Simpson panels
/// chained backwards from `T`.
///
/// The integrand is read on the output grid, so accuracy near `T` needs
/// `eta exp(k b) h` small. With large liquidation costs the first few steps
/// back from `T` carry relative errors in `w` that [`solve_rk`](super::solve_rk)
/// avoids by substepping; they wash out further from `T`.
pub fn solve_quadrature(p: &ModelParams, n_quad: usize) -> Result<WGrid> {
    p.validate()?;
    solve_with_eta(p, n_quad, p.coefficients().eta)
}

pub(crate) fn solve_with_eta(p: &ModelParams, n_quad: usize, eta: f64) -> Result<WGrid> {
    check_steps("n_quad", n_quad, 3)?;
    let n = n_quad;
    let q_max = p.q_max;
    let width = q_max + 1;
    let coeffs = p.coefficients();
    let h = p.horizon / n as f64;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(width);
    rows.push(vec![1.0; n + 1]);
    for q in 1..=q_max {
        let lambda = coeffs.lambda(q);
        let prev = &rows[q - 1];
        let d1 = (-lambda * h).exp();
        let d2 = d1 * d1;
        // integral[i] = int_{t_i}^T exp(-lambda (s - t_i)) w_{q-1}(s) ds
        let mut integral = vec![0.0; n + 1];
        // single last interval, cubic through t_{N-3}..t_N
        integral[n - 1] = h / 24.0
            * (prev[n - 3] / d2 - 5.0 * prev[n - 2] / d1 + 19.0 * prev[n - 1] + 9.0 * d1 * prev[n]);
        for i in (0..n - 1).rev() {
            let panel = h / 3.0 * (prev[i] + 4.0 * d1 * prev[i + 1] + d2 * prev[i + 2]);
            integral[i] = panel + d2 * integral[i + 2];
        }
        let terminal = (-p.k * q as f64 * p.b).exp();
        let row: Vec<f64> = (0..=n)
            .map(|i| {
                let tau = p.horizon - i as f64 * h;
                let v = (-lambda * tau).exp() * terminal + eta * integral[i];
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err(Error::SolverFailure {
                        t: i as f64 * h,
                        q,
                    })
                }
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }

    let mut values = Vec::with_capacity((n + 1) * width);
    for i in 0..=n {
        values.extend(rows.iter().map(|r| r[i]));
    }
    WGrid::from_values(*p, n, q_max, values)
}
