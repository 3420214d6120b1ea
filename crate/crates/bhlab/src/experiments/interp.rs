//! Interpolation audit: occupation statistics of a state define a classical
//! distribution whose Lq norms obey the two-sided interpolation inequality
//! `||X||_q <= ||X||_p^{1-theta} ||X||_{q1}^theta` with
//! `1/q = (1-theta)/p + theta/q1`; the endpoint of the interpolated
//! particle-moment bound is checked exactly.

use super::{Check, ExperimentError};
use crate::bounds;
use crate::config::ExperimentConfig;
use crate::fock::FockBasis;
use crate::propagator::vec_norm;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub interpretation: &'static str,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// `(E[X^q])^{1/q}` for a distribution on the nonnegative integers.
pub fn lq_norm(dist: &[(u32, f64)], q: f64) -> f64 {
    dist.iter()
        .map(|&(n, pr)| pr * (n as f64).powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

/// Occupation distribution of one site in a weighted ensemble of states:
/// `p(n) = sum_k w_k || Pi_{n_i = n} psi_k ||^2`.
pub fn occupation_distribution(
    basis: &FockBasis,
    members: &[(f64, Vec<Complex64>)],
    site: usize,
) -> Vec<(u32, f64)> {
    let mut acc: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    for (w, v) in members {
        for (idx, amp) in v.iter().enumerate() {
            let pr = w * amp.norm_sqr();
            if pr > 0.0 {
                *acc.entry(basis.state(idx)[site]).or_insert(0.0) += pr;
            }
        }
    }
    acc.into_iter().collect()
}

pub fn interpolation_audit(cfg: &ExperimentConfig) -> Result<InterpolationReport, ExperimentError> {
    let lat = cfg.lattice()?;
    let basis = FockBasis::build(&lat, cfg.sector())?;
    let samples = cfg.run.samples.unwrap_or(100);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);

    let mut violations = 0usize;
    let mut worst: f64 = f64::INFINITY;
    let mut endpoint_checks = 0usize;
    let mut endpoint_ok = true;

    for k in 0..samples {
        // Random two-member ensemble as the distribution source.
        let mut members = Vec::new();
        let w0 = 0.2 + 0.6 * rng.gen::<f64>();
        for w in [w0, 1.0 - w0] {
            let mut v: Vec<Complex64> = (0..basis.dim())
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let n = vec_norm(&v);
            for z in &mut v {
                *z /= n;
            }
            members.push((w, v));
        }
        let site = rng.gen_range(0..basis.n_sites());
        let dist = occupation_distribution(&basis, &members, site);

        // Random exponents p < q < q1 and the matching theta.
        let p = 1.0 + 3.0 * rng.gen::<f64>();
        let q1 = p + 2.0 + 6.0 * rng.gen::<f64>();
        let q = p + (q1 - p) * (0.2 + 0.6 * rng.gen::<f64>());
        let theta = (1.0 / p - 1.0 / q) / (1.0 / p - 1.0 / q1);
        let lhs = lq_norm(&dist, q);
        let rhs = lq_norm(&dist, p).powf(1.0 - theta) * lq_norm(&dist, q1).powf(theta);
        let margin = rhs - lhs;
        worst = worst.min(margin);
        if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
            violations += 1;
        }

        // Endpoint exactness of the interpolated moment bound every few
        // samples: q = p returns the constant unchanged.
        if k % 10 == 0 {
            let c = 0.5 + rng.gen::<f64>();
            let t = 1.0 + 4.0 * rng.gen::<f64>();
            endpoint_checks += 1;
            if bounds::interpolated_particle_bound(t, p, p, lat.dims(), c)? != c {
                endpoint_ok = false;
            }
        }
    }

    // Endpoint cases of the inequality itself: theta = 0 and 1 reduce to a
    // single norm; a deterministic distribution gives exact equality.
    let deterministic = vec![(3u32, 1.0f64)];
    let det_ok = (lq_norm(&deterministic, 2.0) - 3.0).abs() < 1e-12
        && (lq_norm(&deterministic, 5.0) - 3.0).abs() < 1e-12;

    let mut checks = Vec::new();
    checks.push(Check::new(
        "two_sided_interpolation_holds",
        violations == 0,
        format!("{samples} samples, worst margin {worst:.3e}"),
    ));
    checks.push(Check::new(
        "deterministic_distribution_equality",
        det_ok,
        "point mass has equal norms at all exponents",
    ));
    checks.push(Check::new(
        "moment_bound_endpoint_exact",
        endpoint_ok,
        format!("{endpoint_checks} endpoint evaluations"),
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok(InterpolationReport {
        interpretation: super::AUDIT_NOTE,
        samples,
        violations,
        worst_margin: worst,
        checks,
        pass,
    })
}
