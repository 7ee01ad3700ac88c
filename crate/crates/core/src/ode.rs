//! Adaptive Dormand-Prince 5(4) integrator.
//!
//! Steps are clipped so that every requested output point is hit exactly; no
//! dense-output interpolation is involved. A failing right-hand side (for
//! example a state that left the admissible region during a trial stage)
//! rejects the step and shrinks it; the failure is reported only when the
//! step size underflows.

use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-12, atol: 1e-12, initial_step: 1e-4, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError<E> {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("right-hand side failed at t = {t}")]
    Rhs { t: f64, cause: E },
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` and returns the state at each of the
/// increasing `outputs` (all `>= t0`).
pub fn integrate<F, Er>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeError<Er>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), Er>,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut h = opts.initial_step;
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(outputs.len());

    f(t, &y, &mut k[0]).map_err(|source| OdeError::Rhs { t, cause: source })?;

    for &target in outputs {
        while t < target {
            if steps >= opts.max_steps {
                return Err(OdeError::TooManySteps { t });
            }
            steps += 1;
            let remaining = target - t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            if h_try <= 1e-15 * t.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { t, h: h_try });
            }

            let mut failed = None;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += h_try * A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                if let Err(e) = f(t + C[s] * h_try, &stage, &mut k[s]) {
                    failed = Some(e);
                    break;
                }
            }
            if let Some(e) = failed {
                h = h_try * 0.25;
                if h <= 1e-15 * t.abs().max(1.0) {
                    return Err(OdeError::Rhs { t, cause: e });
                }
                continue;
            }
            // stage 7 is evaluated at the fifth-order solution (FSAL)
            y_new.copy_from_slice(&stage);

            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (kj, ej) in k.iter().zip(E.iter()) {
                    e += ej * kj[i];
                }
                e *= h_try;
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();

            if err <= 1.0 {
                t = if last { target } else { t + h_try };
                y.copy_from_slice(&y_new);
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // keep the pre-clip step size when the step was shortened to hit `target`
                h = if last { h.max(h_try * factor) } else { h_try * factor };
            } else {
                let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                h = h_try * factor;
                if h <= 1e-15 * t.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
