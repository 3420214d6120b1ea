//! Audit of the translation-averaged line-concentration state: exact
//! symmetrization, exact particle count, the designed occupation tail, and
//! the measured energy moments against the design equations.

use super::{Check, ExperimentError};
use crate::config::ExperimentConfig;
use crate::fock::{FockBasis, Sector};
use crate::hamiltonian;
use crate::states::{self, BadStateParams};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct BadStateReport {
    pub interpretation: &'static str,
    pub params: BadStateParams,
    pub total_particles: usize,
    pub energy_density: f64,
    pub predicted_energy_density: f64,
    pub second_moment_density: f64,
    pub min_tail_at_q: f64,
    pub design_residual: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn badstate_audit(cfg: &ExperimentConfig) -> Result<BadStateReport, ExperimentError> {
    let lat = cfg.lattice()?;
    if lat.dims() != 2 {
        return Err(ExperimentError::Invalid("line-concentration audit needs D = 2".into()));
    }
    let b = cfg
        .badstate
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("audit needs a [badstate] section".into()))?;
    let params = BadStateParams::new(lat.side(), b.ell, b.gamma0)?;
    let n = lat.n_vertices();
    if cfg.sector() != Sector::FixedN(n) {
        return Err(ExperimentError::Invalid(format!(
            "sector must be FixedN({n}) so the particle count is exact"
        )));
    }
    let basis = FockBasis::build(&lat, cfg.sector())?;
    let spec = cfg.model_spec()?;
    let settings = cfg.settings();
    let rho = states::bad_state(&basis, &lat, &params, &spec, &settings, 5_000_000)?;
    let h = hamiltonian::assemble(&basis, &lat, &spec)?;

    let p = cfg.model.p.unwrap_or(2.0);
    let reports = states::measure_moments(&rho, &basis, &h, p, &[params.q]);
    let energy_density = reports[0].energy_density;
    let min_tail = reports
        .iter()
        .map(|r| r.tail[0].1)
        .fold(f64::INFINITY, f64::min);

    // Second moment tr(rho H^2) / |L|^2 from the member vectors.
    let mut second = 0.0;
    for (w, v) in rho.members() {
        let hv = h.matvec(v);
        second += w * hv.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let second_moment_density = second / (n as f64 * n as f64);

    // Predicted energy: per period, the high line contributes R w(q), the
    // diluted block its strip energy plus vacuum sites at w(0); all boundary
    // hopping terms have zero expectation by number mismatch. In the base
    // member the high lines sit at columns 0, ell, ... and the strip blocks
    // at columns 1..=ell0 within each period.
    let periods = lat.side() / params.ell;
    let strip_cols: Vec<usize> = (1..=params.ell0).flat_map(|x| lat.column(x)).collect();
    let sub = hamiltonian::subsystem(&basis, &lat, &spec, &strip_cols, true)?;
    let w_q = spec.interaction.eval(params.q)?;
    let w_0 = spec.interaction.eval(0)?;
    // Strip energy measured from the base member: the restricted expectation
    // of the periodized strip Hamiltonian (exact, the member factorizes).
    let strip_energy = {
        let (_, v) = &rho.members()[0];
        let hv = sub.full.matvec(v);
        v.iter()
            .zip(&hv)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
    };
    let vacuum_sites = (params.ell - 1 - params.ell0) * lat.side();
    let predicted = periods as f64
        * (lat.side() as f64 * w_q + strip_energy + vacuum_sites as f64 * w_0)
        / n as f64;

    // Design-equation residual at the chosen integers:
    // gamma0 e1 ell - (1-gamma0)^p (ell-1)^p - (1-gamma0) e2 ell.
    let e1 = -strip_energy / (params.ell0 * lat.side()) as f64;
    let e2 = w_0;
    let g = params.gamma0;
    let ell = params.ell as f64;
    let design_residual =
        g * e1 * ell - (1.0 - g).powf(p) * (ell - 1.0).powf(p) - (1.0 - g) * e2 * ell;

    let mut checks = Vec::new();
    for (axis, t) in lat.translations().iter().enumerate() {
        checks.push(Check::new(
            &format!("translation_orbit_identity_axis_{axis}"),
            states::is_translation_invariant(&rho, &basis, t, 1e-9),
            "ensemble equals its translate as a weighted multiset",
        ));
    }
    checks.push(Check::new(
        "total_particle_number_exact",
        params.total_particles() == n,
        format!("{} particles on {} sites", params.total_particles(), n),
    ));
    checks.push(Check::new(
        "tail_at_designed_q",
        min_tail >= 1.0 / params.ell as f64 - 1e-12,
        format!("min tail {min_tail:.6} vs 1/ell = {:.6}", 1.0 / params.ell as f64),
    ));
    checks.push(Check::new(
        "energy_matches_block_prediction",
        (energy_density - predicted).abs() <= 1e-8 * predicted.abs().max(1.0),
        format!("measured {energy_density:.6e} vs predicted {predicted:.6e}"),
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok(BadStateReport {
        interpretation: super::AUDIT_NOTE,
        params,
        total_particles: n,
        energy_density,
        predicted_energy_density: predicted,
        second_moment_density,
        min_tail_at_q: min_tail,
        design_residual,
        checks,
        pass,
    })
}
