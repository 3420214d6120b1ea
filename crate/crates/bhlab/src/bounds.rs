//! Closed-form evaluators for the analytic side: time-dependent velocities,
//! light-cone envelopes, the moment constant, the short-time threshold, the
//! concatenation schedule, short-time envelopes, improvement thresholds, and
//! the interpolated particle-moment bound.
//!
//! These are pure functions; constraints on the repulsion exponent are typed
//! errors rather than silent NaNs.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("trace mode requires p > 2D + 2 (got p = {p}, D = {d})")]
    TraceExponent { p: f64, d: usize },
    #[error("expectation mode requires p > D + 1 (got p = {p}, D = {d})")]
    ExpectationExponent { p: f64, d: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Which measure of commutator size the bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundMode {
    Trace,
    Expectation,
}

/// Parameters entering the closed-form bounds.
#[derive(Debug, Clone, Serialize)]
pub struct BoundParams {
    pub d: usize,
    pub p: f64,
    pub j_bar: f64,
    pub gamma: f64,
    pub k: usize,
    pub c_p: f64,
    pub q0: usize,
    /// Calibration constant absorbed by the envelope; fit on an anchor point.
    pub calibration: f64,
}

impl BoundParams {
    pub fn check_mode(&self, mode: BoundMode) -> Result<(), BoundsError> {
        check_exponent(self.p, self.d, mode)
    }
}

fn check_exponent(p: f64, d: usize, mode: BoundMode) -> Result<(), BoundsError> {
    match mode {
        BoundMode::Trace => {
            if p <= 2.0 * d as f64 + 2.0 {
                return Err(BoundsError::TraceExponent { p, d });
            }
        }
        BoundMode::Expectation => {
            if p <= d as f64 + 1.0 {
                return Err(BoundsError::ExpectationExponent { p, d });
            }
        }
    }
    Ok(())
}

/// Decay exponent of the envelope: `p/2 - D - 1` (trace) or `p - D - 1`
/// (expectation).
pub fn envelope_exponent(p: f64, d: usize, mode: BoundMode) -> f64 {
    match mode {
        BoundMode::Trace => p / 2.0 - d as f64 - 1.0,
        BoundMode::Expectation => p - d as f64 - 1.0,
    }
}

/// Time-dependent velocity `t^{D/(p/2-D-1)}` (trace) or `t^{D/(p-D-1)}`
/// (expectation).
pub fn velocity(t: f64, d: usize, p: f64, mode: BoundMode) -> Result<f64, BoundsError> {
    check_exponent(p, d, mode)?;
    Ok(t.powf(d as f64 / envelope_exponent(p, d, mode)))
}

/// Alternate trace-mode velocity with numerator `D - 1` instead of `D`.
/// The two forms coexist in the source material; the `D` form is canonical
/// here and this variant is exposed for comparison only.
pub fn velocity_alternate(t: f64, d: usize, p: f64) -> Result<f64, BoundsError> {
    check_exponent(p, d, BoundMode::Trace)?;
    Ok(t.powf((d as f64 - 1.0) / envelope_exponent(p, d, BoundMode::Trace)))
}

/// Envelope `C (v(t) t / R)^e` with the mode-appropriate velocity and
/// exponent. Requires `t >= 1` and `R >= 1`.
pub fn envelope(t: f64, r: f64, params: &BoundParams, mode: BoundMode) -> Result<f64, BoundsError> {
    if t < 1.0 || r < 1.0 {
        return Err(BoundsError::Invalid(format!(
            "envelope requires t >= 1 and R >= 1 (got t = {t}, R = {r})"
        )));
    }
    let v = velocity(t, params.d, params.p, mode)?;
    let e = envelope_exponent(params.p, params.d, mode);
    Ok(params.calibration * (v * t / r).powf(e))
}

/// The explicit constant in the time-uniform moment bound:
/// `max_n ( -n^p / 2 + c (n+1)^{p-eps} + 4 J D n )` over integers `n >= 0`.
///
/// The search walks `n` upward and stops once the negative term dominates
/// and the expression has decreased three times in a row; a hard cap guards
/// pathological inputs.
pub fn moment_constant(j: f64, p: f64, d: usize, eps: f64, c_wtilde: f64) -> Result<f64, BoundsError> {
    if p <= 1.0 {
        return Err(BoundsError::Invalid(format!("moment constant needs p > 1, got {p}")));
    }
    if eps <= 0.0 {
        return Err(BoundsError::Invalid(format!("moment constant needs eps > 0, got {eps}")));
    }
    let term = |n: f64| -0.5 * n.powf(p) + c_wtilde * (n + 1.0).powf(p - eps) + 4.0 * j.abs() * d as f64 * n;
    let mut best = term(0.0);
    let mut prev = best;
    let mut decreases = 0;
    let mut n: u64 = 1;
    const HARD_CAP: u64 = 1_000_000;
    while n <= HARD_CAP {
        let v = term(n as f64);
        if v > best {
            best = v;
        }
        if v < prev {
            decreases += 1;
        } else {
            decreases = 0;
        }
        // Past the peak: the repulsion term dominates and keeps growing.
        if decreases >= 3 && v < best {
            break;
        }
        prev = v;
        n += 1;
    }
    Ok(best)
}

/// Right-hand side of the time-uniform moment bound: `2 (E_rho + C)`.
pub fn moment_bound(e_rho: f64, c: f64) -> f64 {
    2.0 * (e_rho + c)
}

/// Short-time threshold `(2^6 e^2 Jbar gamma^3 k (2k)^{2D})^{-1}`.
pub fn short_time_threshold(j_bar: f64, gamma: f64, k: usize, d: usize) -> Result<f64, BoundsError> {
    if j_bar <= 0.0 || gamma <= 0.0 || k == 0 || d == 0 {
        return Err(BoundsError::Invalid(
            "short-time threshold needs positive J, gamma, k, D".into(),
        ));
    }
    let e = std::f64::consts::E;
    let denom = 64.0 * e * e * j_bar * gamma.powi(3) * k as f64 * (2.0 * k as f64).powi(2 * d as i32);
    Ok(1.0 / denom)
}

/// The concatenation schedule: `[0, t]` split into `mbar` steps of length
/// `tau = t / mbar <= tau0`, with nested radii `r0 + j * dr`.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub t: f64,
    pub tau: f64,
    pub mbar: u64,
    pub r0: usize,
    pub dr: usize,
    pub radii: Vec<usize>,
    /// Light-cone shape exponent `1 + (D-1)/(p/2-D-1)`.
    pub zeta: f64,
}

/// Build the schedule for time `t`, target radius `r_max`, seed radius `r0`,
/// and short-time threshold `tau0`.
///
/// The step length is the exact rational `tau = t / mbar`, stored as its
/// rounded double; `mbar * tau` reproduces `t` to within one ulp and
/// `tau <= tau0` is enforced after rounding.
pub fn schedule(
    t: f64,
    r_max: usize,
    r0: usize,
    tau0: f64,
    d: usize,
    p: f64,
) -> Result<Schedule, BoundsError> {
    if t < 1.0 {
        return Err(BoundsError::Invalid(format!("schedule requires t >= 1, got {t}")));
    }
    if r_max <= r0 {
        return Err(BoundsError::Invalid(format!(
            "schedule requires R > r0 (got R = {r_max}, r0 = {r0})"
        )));
    }
    if tau0 <= 0.0 || tau0.is_nan() {
        return Err(BoundsError::Invalid("tau0 must be positive".into()));
    }
    let mut mbar = (t / tau0).ceil() as u64;
    if mbar == 0 {
        mbar = 1;
    }
    let mut tau = t / mbar as f64;
    if tau > tau0 {
        // Rounding pushed the quotient a hair above the threshold.
        mbar += 1;
        tau = t / mbar as f64;
    }
    let dr = (r_max - r0) / mbar as usize;
    let radii: Vec<usize> = (0..=mbar as usize).map(|j| r0 + j * dr).collect();
    let half = p / 2.0 - d as f64 - 1.0;
    let zeta = if half > 0.0 { 1.0 + (d as f64 - 1.0) / half } else { f64::NAN };
    Ok(Schedule {
        t,
        tau,
        mbar,
        r0,
        dr,
        radii,
        zeta,
    })
}

/// Short-time envelope
/// `C (boundary r e^{-r/(4k)} + shell r^{-p/2+1})` in trace mode; the
/// polynomial exponent becomes `-p + 1` in expectation mode.
pub fn short_time_envelope(
    r: f64,
    boundary_size: f64,
    shell_size: f64,
    p: f64,
    k: usize,
    c: f64,
    mode: BoundMode,
) -> Result<f64, BoundsError> {
    if r < 1.0 {
        return Err(BoundsError::Invalid(format!("short-time envelope needs r >= 1, got {r}")));
    }
    let poly_exp = match mode {
        BoundMode::Trace => -p / 2.0 + 1.0,
        BoundMode::Expectation => -p + 1.0,
    };
    Ok(c * (boundary_size * r * (-r / (4.0 * k as f64)).exp() + shell_size * r.powf(poly_exp)))
}

/// Exponent threshold above which the envelope improves on the `t^{D-1}`
/// velocity scaling, together with the smallest integer `p` strictly above
/// it. Evaluated in exact integer arithmetic.
pub fn improvement_threshold(d: usize, mode: BoundMode) -> Result<(f64, u64), BoundsError> {
    if d < 2 {
        return Err(BoundsError::Invalid(format!(
            "improvement threshold needs D >= 2, got {d}"
        )));
    }
    let d = d as u64;
    // trace: 2D + 2 + 2D/(D-1) = (2D^2 + 2D - 2)/(D-1)
    // expectation: D + 1 + D/(D-1) = (D^2 + D - 1)/(D-1)
    let (num, den) = match mode {
        BoundMode::Trace => (2 * d * d + 2 * d - 2, d - 1),
        BoundMode::Expectation => (d * d + d - 1, d - 1),
    };
    let threshold = num as f64 / den as f64;
    // Smallest integer strictly greater than num/den.
    let smallest = num / den + 1;
    Ok((threshold, smallest))
}

/// Interpolated particle-moment growth bound `C t^{D (1 - p/q)}`; returns
/// `C` exactly at the endpoint `q = p`.
pub fn interpolated_particle_bound(
    t: f64,
    q: f64,
    p: f64,
    d: usize,
    c: f64,
) -> Result<f64, BoundsError> {
    if q < p {
        return Err(BoundsError::Invalid(format!("requires q >= p (got q = {q}, p = {p})")));
    }
    if t < 1.0 {
        return Err(BoundsError::Invalid(format!("requires t >= 1, got {t}")));
    }
    Ok(c * t.powf(d as f64 * (1.0 - p / q)))
}

/// The interpolation weight `theta = (1 - p/q) / (1 - p/t^D)` used to trade
/// the `q`-th moment against the `p`-th.
pub fn interpolation_theta(t: f64, q: f64, p: f64, d: usize) -> Result<f64, BoundsError> {
    let td = t.powi(d as i32);
    if td <= p {
        return Err(BoundsError::Invalid(format!(
            "theta undefined for t^D <= p (t^D = {td}, p = {p})"
        )));
    }
    Ok((1.0 - p / q) / (1.0 - p / td))
}
