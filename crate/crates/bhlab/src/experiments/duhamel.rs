//! Projected-dynamics error audit: the trace-norm distance between the full
//! and occupation-capped evolutions is bounded by a sum of Frobenius terms
//! and time integrals; the expectation variant reorders the estimate and
//! gains a full power of the cap. Both right-hand sides are evaluated
//! term by term with quadrature-controlled integrals.

use super::{integrate_adaptive, Check, ExperimentError};
use crate::bounds;
use crate::config::ExperimentConfig;
use crate::fock::FockBasis;
use crate::hamiltonian::{self, truncate, Interaction, ModelSpec};
use crate::propagator::{trace_norm, EigenPropagator};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelPoint {
    pub tau: f64,
    pub qbar: u32,
    pub lhs_trace: f64,
    pub rhs_trace: f64,
    pub lhs_expect: f64,
    pub rhs_expect: f64,
    pub quadrature_error: f64,
    /// Whether the left-hand side rises above the floating-point noise
    /// floor; unresolved points are covered by the budget margin alone.
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelReport {
    pub interpretation: &'static str,
    pub tau0: f64,
    pub annulus: Vec<usize>,
    pub points: Vec<DuhamelPoint>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// `|| M sqrt(rho) ||_F = sqrt(tr(M rho M^dagger))` for dense arguments.
fn frob(m: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> f64 {
    (m * rho * m.adjoint()).trace().re.max(0.0).sqrt()
}

pub fn duhamel_inequality_audit(cfg: &ExperimentConfig) -> Result<DuhamelReport, ExperimentError> {
    let lat = cfg.lattice()?;
    let basis = FockBasis::build(&lat, cfg.sector())?;
    if basis.dim() > cfg.run.dense_threshold {
        return Err(ExperimentError::Invalid(format!(
            "projected-dynamics audit is dense-only (dim {} > threshold {})",
            basis.dim(),
            cfg.run.dense_threshold
        )));
    }
    let spec = cfg.model_spec()?;
    let h = hamiltonian::assemble(&basis, &lat, &spec)?;
    let hop_spec = ModelSpec {
        interaction: Interaction::None,
        ..spec.clone()
    };
    let h0 = hamiltonian::assemble(&basis, &lat, &hop_spec)?;
    let rho = cfg.build_state(&basis, &lat)?;
    let obs = cfg
        .observables
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("audit needs [observables]".into()))?;
    let o = cfg.build_observable(&basis, &obs.o, "observables.o")?;

    let tau0 = bounds::short_time_threshold(spec.j_bar(lat.edges()), lat.gamma(), 1, lat.dims())?;
    let taus: Vec<f64> = if cfg.grid.times.is_empty() {
        vec![0.25 * tau0, 0.5 * tau0, tau0]
    } else {
        cfg.grid.times.clone()
    };
    for &t in &taus {
        if t > tau0 * (1.0 + 1e-12) {
            return Err(ExperimentError::Invalid(format!(
                "audit requires tau <= tau0 = {tau0:.6e}, got {t:.6e}"
            )));
        }
    }

    let r = *cfg
        .grid
        .distances
        .first()
        .ok_or_else(|| ExperimentError::Invalid("audit needs grid.distances[0]".into()))?;
    let x = vec![obs.o.site];
    let outer = lat.ball(&x, r)?;
    let inner = lat.ball(&x, r / 2)?;
    let annulus: Vec<usize> = outer
        .iter()
        .copied()
        .filter(|v| !inner.contains(v))
        .collect();
    if annulus.is_empty() {
        return Err(ExperimentError::Invalid("annulus is empty".into()));
    }

    let qbars: Vec<u32> = if cfg.grid.qbar.is_empty() {
        vec![1, 2, 3]
    } else {
        cfg.grid.qbar.clone()
    };

    let hd = h.to_dense();
    let h0d = h0.to_dense();
    let od = o.to_dense();
    let o_norm = operator_norm(&od);
    let rho_d = rho.to_dense();
    let full = EigenPropagator::new(&hd);
    let budget = cfg.tolerances.quadrature;

    let mut points = Vec::new();
    for &qbar in &qbars {
        let pi = basis.projector_region(&annulus, qbar).to_dense();
        let pic = DMatrix::identity(basis.dim(), basis.dim()) - &pi;
        let h_trunc = truncate(&h, &basis, &annulus, qbar);
        let eff = EigenPropagator::new(&h_trunc.to_dense());

        for &tau in &taus {
            let u_tau = full.unitary(tau);
            let u_eff_tau = eff.unitary(tau);
            let o_full = u_tau.adjoint() * &od * &u_tau;
            let o_eff = u_eff_tau.adjoint() * &od * &u_eff_tau;

            // Left-hand sides.
            let diff = (&o_full - &o_eff) * &rho_d;
            let lhs_trace = trace_norm(&diff);
            let lhs_expect = diff.trace().norm();

            // Shared pieces.
            let rho_tau = &u_tau * &rho_d * u_tau.adjoint();
            let pic_sqrho = frob(&pic, &rho_d);
            let pic_sqrho_tau = frob(&pic, &rho_tau);

            // Trace-norm right-hand side:
            //   ||Pic O(tau) sqrt(rho)|| + ||Pic O sqrt(rho(tau))||
            // + ||Pic sqrt(rho)|| + ||Pic sqrt(rho(tau))||
            // + int ||Pi H0 Pic O(tau - s) sqrt(rho(s))|| ds
            // + int ||Pi H0 Pic sqrt(rho(s))|| ds.
            let t1 = frob(&(&pic * &o_full), &rho_d);
            let t2 = frob(&(&pic * &od), &rho_tau);
            let pi_h0_pic = &pi * &h0d * &pic;
            let integrand_a = |s: f64| {
                let u_s = full.unitary(s);
                let rho_s = &u_s * &rho_d * u_s.adjoint();
                let u_rest = full.unitary(tau - s);
                let o_rest = u_rest.adjoint() * &od * &u_rest;
                frob(&(&pi_h0_pic * &o_rest), &rho_s)
            };
            let integrand_b = |s: f64| {
                let u_s = full.unitary(s);
                let rho_s = &u_s * &rho_d * u_s.adjoint();
                frob(&pi_h0_pic, &rho_s)
            };
            let (int_a, err_a) = integrate_adaptive(integrand_a, tau, 20, budget);
            let (int_b, err_b) = integrate_adaptive(integrand_b, tau, 20, budget);
            let rhs_trace = t1 + t2 + pic_sqrho + pic_sqrho_tau + int_a + int_b;

            // Expectation right-hand side:
            //   ||Pic sqrt(rho)|| (||Pic O(tau) sqrt(rho)|| + ||Pic O U(tau) sqrt(rho)||)
            // + int ||Pic U(s)^dag O^dag U(tau) sqrt(rho)|| ||Pic H0 Pi U_eff(tau - s) sqrt(rho)|| ds
            // + ||O|| [ 2 ||Pic sqrt(rho)||^2 + 2 ||U(tau) Pic sqrt(rho)||^2
            //           + ( int ||Pi H0 Pic U(tau - s) sqrt(rho)|| ds )^2 ].
            let t2e = frob(&(&pic * &od * &u_tau), &rho_d);
            let pic_h0_pi = &pic * &h0d * &pi;
            let integrand_c = |s: f64| {
                let u_s = full.unitary(s);
                let first = frob(&(&pic * u_s.adjoint() * od.adjoint() * &u_tau), &rho_d);
                let u_eff_rest = eff.unitary(tau - s);
                let second = frob(&(&pic_h0_pi * &u_eff_rest), &rho_d);
                first * second
            };
            let integrand_d = |s: f64| {
                let u_rest = full.unitary(tau - s);
                frob(&(&pi_h0_pic * &u_rest), &rho_d)
            };
            let (int_c, err_c) = integrate_adaptive(integrand_c, tau, 20, budget);
            let (int_d, err_d) = integrate_adaptive(integrand_d, tau, 20, budget);
            let u_pic_sqrho = frob(&(&u_tau * &pic), &rho_d);
            let rhs_expect = pic_sqrho * (t1 + t2e)
                + int_c
                + o_norm
                    * (2.0 * pic_sqrho * pic_sqrho
                        + 2.0 * u_pic_sqrho * u_pic_sqrho
                        + int_d * int_d);

            let quadrature_error = err_a.max(err_b).max(err_c).max(err_d.max(0.0));
            let resolved = lhs_trace > 1e-12;
            points.push(DuhamelPoint {
                tau,
                qbar,
                lhs_trace,
                rhs_trace,
                lhs_expect,
                rhs_expect,
                quadrature_error,
                resolved,
            });
        }
    }

    let mut checks = Vec::new();
    let trace_ok = points
        .iter()
        .all(|p| p.lhs_trace <= p.rhs_trace + budget);
    let expect_ok = points
        .iter()
        .all(|p| p.lhs_expect <= p.rhs_expect + budget);
    let quad_ok = points.iter().all(|p| p.quadrature_error <= budget);
    let resolved = points.iter().filter(|p| p.resolved).count();
    checks.push(Check::new(
        "trace_error_bounded",
        trace_ok,
        format!(
            "{} points ({} above the noise floor), quadrature budget {budget:.1e}",
            points.len(),
            resolved
        ),
    ));
    checks.push(Check::new(
        "expectation_error_bounded",
        expect_ok,
        format!("{} points", points.len()),
    ));
    checks.push(Check::new(
        "quadrature_converged",
        quad_ok,
        "successive panel refinements agree within budget",
    ));
    // The expectation-side left-hand side is always dominated by the
    // trace-norm left-hand side.
    let dominance = points.iter().all(|p| p.lhs_expect <= p.lhs_trace + 1e-12);
    checks.push(Check::new("trace_dominates_expectation", dominance, ""));

    let pass = checks.iter().all(|c| c.pass);
    Ok(DuhamelReport {
        interpretation: super::AUDIT_NOTE,
        tau0,
        annulus,
        points,
        checks,
        pass,
    })
}

/// Spectral norm by singular values.
fn operator_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}
