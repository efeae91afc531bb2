//! Adaptive Dormand–Prince 5(4) integration with exact landing on stop times.
//!
//! Every accepted step is recorded with the data of the method's fourth-order
//! continuous extension, so a solution can be evaluated anywhere on its span
//! at close to the step accuracy. Integration runs forward or backward in time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest admissible step magnitude.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// Accepted steps of one integration run.
///
/// `d_start[k]` and `d_end[k]` are the derivatives at the two ends of the
/// cell `[t[k], t[k+1]]`, taken from inside the cell; `d_mid[k]` is the
/// remaining coefficient of the continuous extension on that cell.
#[derive(Debug, Clone, Default)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub d_start: Vec<Vec<f64>>,
    pub d_end: Vec<Vec<f64>>,
    pub d_mid: Vec<Vec<f64>>,
    /// True when the monitor asked to stop before the final time.
    pub stopped: bool,
}

impl OdeSolution {
    pub fn last_time(&self) -> f64 {
        *self.t.last().expect("solution has at least one node")
    }

    pub fn last_state(&self) -> &[f64] {
        self.y.last().expect("solution has at least one node")
    }

    pub fn dim(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    /// Multiplies every stored value and slope by `s`.
    pub fn scale(&mut self, s: f64) {
        for v in self
            .y
            .iter_mut()
            .chain(&mut self.d_start)
            .chain(&mut self.d_end)
            .chain(&mut self.d_mid)
        {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Appends `other`, whose first node must coincide with this solution's last node.
    pub fn append(&mut self, other: OdeSolution) {
        if self.t.is_empty() {
            *self = other;
            return;
        }
        debug_assert_eq!(self.last_time(), other.t[0]);
        self.t.extend(other.t.into_iter().skip(1));
        self.y.extend(other.y.into_iter().skip(1));
        self.d_start.extend(other.d_start);
        self.d_end.extend(other.d_end);
        self.d_mid.extend(other.d_mid);
        self.stopped = other.stopped;
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = rhs(t, y)` from `t0` to `t1`.
///
/// The step sequence lands exactly on every time in `stops` that lies strictly
/// between `t0` and `t1`. `monitor` is called after each accepted step and may
/// end the run early by returning `true`.
pub fn integrate<F, M>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    stops: &[f64],
    mut monitor: M,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    M: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let mut sol = OdeSolution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        ..Default::default()
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();

    let mut targets: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|&s| (s - t0) * dir > 0.0 && (t1 - s) * dir > 0.0)
        .collect();
    targets.push(t1);
    targets.sort_by(|a, b| ((a - b) * dir).partial_cmp(&0.0).unwrap());
    targets.dedup();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    if !all_finite(&k1) {
        return Err(Error::Integration {
            last_time: t,
            reason: "non-finite derivative at initial point".into(),
        });
    }

    let mut h = initial_step(&mut rhs, t, &y, &k1, dir, opts, (t1 - t0).abs());
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut steps = 0usize;
    let mut target_idx = 0usize;
    let mut prev_rejected = false;

    while target_idx < targets.len() {
        let target = targets[target_idx];
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integration {
                last_time: t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }

        let remaining = target - t;
        let mut hit = false;
        if h.abs() >= remaining.abs() * (1.0 - 1e-12) {
            h = remaining;
            hit = true;
        } else if h.abs() > 0.5 * remaining.abs() {
            // Split the remainder evenly instead of leaving a sliver.
            h = 0.5 * remaining;
        }
        let min_step = 16.0 * f64::EPSILON * t.abs().max(h.abs().max(1e-300));
        if h.abs() < min_step {
            return Err(Error::Integration {
                last_time: t,
                reason: "step size underflow".into(),
            });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if hit { target } else { t + h };
        rhs(t_new, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &ynew, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / n.max(1) as f64).sqrt();

        if !err.is_finite() || !all_finite(&ynew) || !all_finite(&k7) {
            h *= 0.25;
            prev_rejected = true;
            continue;
        }

        if err <= 1.0 {
            sol.t.push(t_new);
            sol.y.push(ynew.clone());
            sol.d_start.push(k1.clone());
            sol.d_end.push(k7.clone());
            sol.d_mid.push(
                (0..n)
                    .map(|i| {
                        D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]
                    })
                    .collect(),
            );
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);

            let mut fac = if err == 0.0 {
                5.0
            } else {
                0.9 * err.powf(-0.2)
            };
            fac = fac.clamp(0.2, 5.0);
            if prev_rejected {
                fac = fac.min(1.0);
            }
            prev_rejected = false;
            let h_next = (h * fac).abs().min(opts.max_step);

            if hit {
                target_idx += 1;
                // Derivative may jump at a stop (control breakpoint): re-evaluate.
                rhs(t, &y, &mut k1);
            }
            h = dir * h_next;

            if monitor(t, &y) {
                sol.stopped = target_idx < targets.len();
                return Ok(sol);
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            prev_rejected = true;
        }
    }
    Ok(sol)
}

fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &OdeOptions,
    span: f64,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&sc)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n.max(1) as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span).min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
    let mut f1 = vec![0.0; n];
    rhs(t + dir * h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let h = (100.0 * h0).min(h1).min(span).min(opts.max_step);
    dir * if h.is_finite() && h > 0.0 { h } else { 1e-6 }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Evaluates a recorded solution at `t` through the continuous extension.
///
/// Outside the recorded span the nearest end value is returned.
pub fn dense_eval(sol: &OdeSolution, t: f64, out: &mut [f64]) {
    let ts = &sol.t;
    let n = ts.len();
    if n == 1 {
        out.copy_from_slice(&sol.y[0]);
        return;
    }
    let forward = ts[n - 1] > ts[0];
    // Locate the cell containing t.
    let k = if forward {
        if t <= ts[0] {
            out.copy_from_slice(&sol.y[0]);
            return;
        }
        if t >= ts[n - 1] {
            out.copy_from_slice(&sol.y[n - 1]);
            return;
        }
        ts.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2)
    } else {
        if t >= ts[0] {
            out.copy_from_slice(&sol.y[0]);
            return;
        }
        if t <= ts[n - 1] {
            out.copy_from_slice(&sol.y[n - 1]);
            return;
        }
        ts.partition_point(|&s| s >= t).saturating_sub(1).min(n - 2)
    };
    if t == ts[k] {
        out.copy_from_slice(&sol.y[k]);
        return;
    }
    let (ta, tb) = (ts[k], ts[k + 1]);
    let h = tb - ta;
    let s = (t - ta) / h;
    let (ya, yb) = (&sol.y[k], &sol.y[k + 1]);
    let (da, db, dm) = (&sol.d_start[k], &sol.d_end[k], &sol.d_mid[k]);
    let s1 = 1.0 - s;
    for i in 0..out.len() {
        let r2 = yb[i] - ya[i];
        let r3 = h * da[i] - r2;
        let r4 = r2 - h * db[i] - r3;
        out[i] = ya[i] + s * (r2 + s1 * (r3 + s * (r4 + s1 * h * dm[i])));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let opts = OdeOptions::default();
        let sol = integrate(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            5.0,
            &[1.0],
            &opts,
            &[],
            |_, _| false,
        )
        .unwrap();
        assert_eq!(sol.last_time(), 5.0);
        assert!((sol.last_state()[0] - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn lands_on_stops_and_runs_backward() {
        let opts = OdeOptions::default();
        let sol = integrate(
            |_, y, dy| dy[0] = y[0],
            2.0,
            0.0,
            &[1.0],
            &opts,
            &[1.5, 0.5, 3.0],
            |_, _| false,
        )
        .unwrap();
        assert!(sol.t.contains(&1.5) && sol.t.contains(&0.5));
        assert_eq!(sol.last_time(), 0.0);
        assert!((sol.last_state()[0] - (-2.0f64).exp()).abs() < 1e-11);
        let mut out = [0.0];
        dense_eval(&sol, 1.234, &mut out);
        assert!((out[0] - (1.234f64 - 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_is_accurate_between_nodes() {
        let opts = OdeOptions::default();
        let sol = integrate(
            |t, _, dy| dy[0] = t.cos(),
            0.0,
            10.0,
            &[0.0],
            &opts,
            &[],
            |_, _| false,
        )
        .unwrap();
        let mut out = [0.0];
        for i in 0..200 {
            let t = 0.05 * i as f64 + 0.013;
            dense_eval(&sol, t, &mut out);
            assert!((out[0] - t.sin()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn monitor_stops_early() {
        let opts = OdeOptions::default();
        let sol = integrate(
            |_, y, dy| dy[0] = y[0],
            0.0,
            100.0,
            &[1.0],
            &opts,
            &[],
            |_, y| y[0].abs() > 1e6,
        )
        .unwrap();
        assert!(sol.stopped);
        assert!(sol.last_time() < 100.0);
    }

    #[test]
    fn blow_up_is_reported_as_failure() {
        let opts = OdeOptions::default();
        let err = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            2.0,
            &[1.0],
            &opts,
            &[],
            |_, _| false,
        )
        .unwrap_err();
        match err {
            Error::Integration { last_time, .. } => assert!(last_time < 1.0),
            e => panic!("unexpected {e:?}"),
        }
    }
}
