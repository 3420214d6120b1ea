//! Truncation-error audit: the distance between the full and the
//! occupation-capped dynamics, `||(O(H,tau) - O(H~,tau)) rho||_1` and its
//! expectation analog, swept over the cap, with a monotonicity check and a
//! decay-exponent fit.

use super::{fit_power_law, Check, ExperimentError};
use crate::config::ExperimentConfig;
use crate::fock::FockBasis;
use crate::hamiltonian::{self, truncate};
use crate::propagator::{dense_heisenberg, trace_norm};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub qbar: u32,
    /// `||(O(H,tau) - O(H~,tau)) rho||_1`.
    pub error_trace: f64,
    /// `|tr((O(H,tau) - O(H~,tau)) rho)|`.
    pub error_expect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub interpretation: &'static str,
    pub tau: f64,
    pub annulus: Vec<usize>,
    pub rows: Vec<TruncationRow>,
    pub fitted_exponent: Option<f64>,
    pub exponent_budget: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn truncation_error_audit(cfg: &ExperimentConfig) -> Result<TruncationReport, ExperimentError> {
    let lat = cfg.lattice()?;
    let basis = FockBasis::build(&lat, cfg.sector())?;
    if basis.dim() > cfg.run.dense_threshold {
        return Err(ExperimentError::Invalid(format!(
            "truncation audit is dense-only (dim {} > threshold {})",
            basis.dim(),
            cfg.run.dense_threshold
        )));
    }
    let spec = cfg.model_spec()?;
    let h = hamiltonian::assemble(&basis, &lat, &spec)?;
    let rho = cfg.build_state(&basis, &lat)?;
    let obs = cfg
        .observables
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("truncation audit needs [observables]".into()))?;
    let o = cfg.build_observable(&basis, &obs.o, "observables.o")?;

    let tau = *cfg
        .grid
        .times
        .first()
        .ok_or_else(|| ExperimentError::Invalid("truncation audit needs grid.times[0]".into()))?;
    // Annulus X[r] \ X[r/2] around the probe site, radius from the grid.
    let r = *cfg
        .grid
        .distances
        .first()
        .ok_or_else(|| ExperimentError::Invalid("truncation audit needs grid.distances[0]".into()))?;
    let x = vec![obs.o.site];
    let outer = lat.ball(&x, r)?;
    let inner = lat.ball(&x, r / 2)?;
    let annulus: Vec<usize> = outer
        .iter()
        .copied()
        .filter(|v| !inner.contains(v))
        .collect();
    if annulus.is_empty() {
        return Err(ExperimentError::Invalid(format!(
            "annulus X[{r}] \\ X[{}] is empty on this lattice",
            r / 2
        )));
    }

    let qbars: Vec<u32> = if cfg.grid.qbar.is_empty() {
        match cfg.sector() {
            crate::fock::Sector::FixedN(n) => (1..=n as u32).collect(),
            crate::fock::Sector::Capped(m) => (1..=m as u32).collect(),
        }
    } else {
        cfg.grid.qbar.clone()
    };

    let hd = h.to_dense();
    let od = o.to_dense();
    let rho_d = rho.to_dense();
    let o_full = dense_heisenberg(&od, &hd, tau);

    let mut rows = Vec::new();
    for &qbar in &qbars {
        let ht = truncate(&h, &basis, &annulus, qbar);
        let o_trunc = dense_heisenberg(&od, &ht.to_dense(), tau);
        let diff = (&o_full - &o_trunc) * &rho_d;
        let error_trace = trace_norm(&diff);
        let error_expect = diff.trace().norm();
        rows.push(TruncationRow {
            qbar,
            error_trace,
            error_expect,
        });
    }

    // Monotone nonincreasing in qbar, up to floating-point jitter.
    let scale = rows.iter().map(|r| r.error_trace).fold(0.0, f64::max);
    let slack = 1e-12 * scale.max(1.0);
    let monotone = rows
        .windows(2)
        .all(|w| w[1].error_trace <= w[0].error_trace + slack);

    // Decay-exponent fit on the nonzero rows (the final row is exactly zero
    // once the cap reaches the sector maximum).
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error_trace > 1e-14 * scale.max(1.0))
        .map(|r| (r.qbar as f64, r.error_trace))
        .collect();
    let fitted_exponent = if pts.len() >= 3 {
        Some(fit_power_law(&pts)?.0)
    } else {
        None
    };
    let p = cfg
        .model
        .p
        .ok_or_else(|| ExperimentError::Invalid("truncation audit needs model.p".into()))?;
    let exponent_budget = -(p / 2.0 - 1.0) + 0.5;

    let mut checks = Vec::new();
    checks.push(Check::new(
        "error_nonincreasing_in_qbar",
        monotone,
        format!("{} cap values", rows.len()),
    ));
    if let Some(e) = fitted_exponent {
        checks.push(Check::new(
            "decay_exponent_within_budget",
            e <= exponent_budget,
            format!("fitted {e:.3} vs budget {exponent_budget:.3}"),
        ));
    }
    // Caps at or above the sector maximum leave the dynamics untouched.
    if let crate::fock::Sector::FixedN(n) = cfg.sector() {
        if let Some(row) = rows.iter().find(|r| r.qbar as usize >= n) {
            checks.push(Check::new(
                "full_cap_error_vanishes",
                row.error_trace == 0.0,
                format!("error at qbar={} is {:.3e}", row.qbar, row.error_trace),
            ));
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(TruncationReport {
        interpretation: super::AUDIT_NOTE,
        tau,
        annulus,
        rows,
        fitted_exponent,
        exponent_budget,
        checks,
        pass,
    })
}
