//! Dormand-Prince 5(4) with PI step-size control and dense output.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// A first-order system `y' = f(s, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, s: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopriOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; `0` selects one automatically.
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for DopriOptions {
    fn default() -> Self {
        DopriOptions { rtol: 1e-9, atol: 1e-9, h_init: 0.0, h_min: 1e-12, h_max: f64::INFINITY, max_steps: 100_000 }
    }
}

impl DopriOptions {
    pub fn with_tol(tol: f64) -> Self {
        DopriOptions { rtol: tol, atol: tol, ..Self::default() }
    }
}

/// What the step observer wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// The step size fell below `h_min`.
    Underflow {
        s: f64,
    },
    MaxSteps {
        s: f64,
    },
    /// The right-hand side failed (for example the state left the chart).
    RhsFailed {
        s: f64,
        error: Error,
    },
}

/// Dense output over the last accepted step.
#[derive(Debug)]
pub struct Dense<'a> {
    s_old: f64,
    h: f64,
    r: &'a [Vec<f64>; 5],
}

impl Dense<'_> {
    pub fn s_old(&self) -> f64 {
        self.s_old
    }

    pub fn s_new(&self) -> f64 {
        self.s_old + self.h
    }

    /// Interpolated state at `s` in `[s_old, s_new]`.
    pub fn eval(&self, s: f64, out: &mut [f64]) {
        let th = (s - self.s_old) / self.h;
        let th1 = 1.0 - th;
        let r = self.r;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
    }
}

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
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate from `s0` to `s1 > s0`, calling `observer` after every accepted step.
/// On return `y` holds the state at the last accepted point.
pub fn integrate<S, F>(
    sys: &mut S,
    s0: f64,
    s1: f64,
    y: &mut [f64],
    opts: &DopriOptions,
    mut observer: F,
) -> (Outcome, f64)
where
    S: OdeSystem,
    F: FnMut(&Dense<'_>, &[f64]) -> Control,
{
    let n = sys.dim();
    let mut k: [Vec<f64>; 7] = core::array::from_fn(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut r: [Vec<f64>; 5] = core::array::from_fn(|_| vec![0.0; n]);
    let mut s = s0;
    let dir_len = s1 - s0;
    if !(dir_len > 0.0) {
        return (Outcome::Completed, s);
    }
    if let Err(error) = sys.rhs(s, y, &mut k[0]) {
        return (Outcome::RhsFailed { s, error }, s);
    }
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { initial_step(sys, s, y, &k[0], opts, dir_len) };
    h = h.min(opts.h_max).min(dir_len);
    let expo1 = 0.2 - 0.04 * 0.75;
    let beta = 0.04;
    let safe = 0.9;
    let facc1 = 5.0;
    let facc2 = 0.1;
    let mut facold = 1e-4f64;
    let mut reject = false;
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return (Outcome::MaxSteps { s }, s);
        }
        if h < opts.h_min {
            return (Outcome::Underflow { s }, s);
        }
        let last = s + 1.01 * h >= s1;
        if last {
            h = s1 - s;
        }
        steps += 1;
        macro_rules! stage {
            ($dst:expr, $c:expr, $($a:expr => $ki:expr),+) => {{
                for i in 0..n {
                    ytmp[i] = y[i] + h * (0.0 $(+ $a * k[$ki][i])+);
                }
                let (_, tail) = k.split_at_mut($dst);
                if let Err(error) = sys.rhs(s + $c * h, &ytmp, &mut tail[0]) {
                    return (Outcome::RhsFailed { s, error }, s);
                }
            }};
        }
        stage!(1, C2, A21 => 0);
        stage!(2, C3, A31 => 0, A32 => 1);
        stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        {
            let (_, tail) = k.split_at_mut(5);
            if let Err(error) = sys.rhs(s + h, &ytmp, &mut tail[0]) {
                return (Outcome::RhsFailed { s, error }, s);
            }
        }
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        {
            let (_, tail) = k.split_at_mut(6);
            if let Err(error) = sys.rhs(s + h, &ynew, &mut tail[0]) {
                return (Outcome::RhsFailed { s, error }, s);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= facc2;
            reject = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).clamp(facc2, facc1);
        let hnew = h / fac;
        if err <= 1.0 {
            facold = err.max(1e-4);
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                r[0][i] = y[i];
                r[1][i] = ydiff;
                r[2][i] = bspl;
                r[3][i] = ydiff - h * k[6][i] - bspl;
                r[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            }
            let s_old = s;
            s = if last { s1 } else { s + h };
            y.copy_from_slice(&ynew);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            let dense = Dense { s_old, h, r: &r };
            if observer(&dense, y) == Control::Stop {
                return (Outcome::Stopped, s);
            }
            if last {
                return (Outcome::Completed, s);
            }
            let mut hn = hnew.min(opts.h_max);
            if reject {
                hn = hn.min(h);
            }
            reject = false;
            h = hn;
        } else {
            h /= (fac11 / safe).min(facc1);
            reject = true;
        }
    }
}

fn initial_step<S: OdeSystem>(sys: &mut S, s: f64, y: &[f64], f0: &[f64], opts: &DopriOptions, span: f64) -> f64 {
    let n = y.len();
    let sk = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let dnf = (0..n).map(|i| (f0[i] / sk(i)).powi(2)).sum::<f64>() / n as f64;
    let dny = (0..n).map(|i| (y[i] / sk(i)).powi(2)).sum::<f64>() / n as f64;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(span).min(opts.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    if sys.rhs(s + h, &y1, &mut f1).is_err() {
        return h * 0.1;
    }
    let der2 = ((0..n).map(|i| ((f1[i] - f0[i]) / sk(i)).powi(2)).sum::<f64>() / n as f64).sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(span).min(opts.h_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&mut self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let mut y = [1.0, 0.0];
        let (out, s) =
            integrate(&mut Oscillator, 0.0, 10.0, &mut y, &DopriOptions::with_tol(1e-11), |_, _| Control::Continue);
        assert_eq!(out, Outcome::Completed);
        assert_eq!(s, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_accuracy() {
        let mut y = [1.0, 0.0];
        let mut worst = 0.0f64;
        let mut buf = [0.0; 2];
        integrate(&mut Oscillator, 0.0, 5.0, &mut y, &DopriOptions::with_tol(1e-10), |d, _| {
            for j in 0..=10 {
                let s = d.s_old() + (d.s_new() - d.s_old()) * j as f64 / 10.0;
                d.eval(s, &mut buf);
                worst = worst.max((buf[0] - s.cos()).abs()).max((buf[1] + s.sin()).abs());
            }
            Control::Continue
        });
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn observer_can_stop() {
        let mut y = [1.0, 0.0];
        let mut calls = 0;
        let (out, s) = integrate(&mut Oscillator, 0.0, 10.0, &mut y, &DopriOptions::default(), |_, _| {
            calls += 1;
            if calls == 3 {
                Control::Stop
            } else {
                Control::Continue
            }
        });
        assert_eq!(out, Outcome::Stopped);
        assert!(s < 10.0);
    }

    struct Blowup;

    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&mut self, _s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[0] * y[0];
            Ok(())
        }
    }

    #[test]
    fn finite_time_blowup_underflows() {
        let mut y = [1.0];
        let (out, s) = integrate(&mut Blowup, 0.0, 2.0, &mut y, &DopriOptions::default(), |_, _| Control::Continue);
        assert!(matches!(out, Outcome::Underflow { .. } | Outcome::MaxSteps { .. }), "{out:?}");
        assert!(s < 1.0 && s > 0.99);
    }
}
