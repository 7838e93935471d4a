//! Shared helpers for the integration and acceptance suites.

use fmrlasso::*;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random mixture-of-regressions design with identity covariance. Components
/// are well separated so fits converge reliably across seeds.
pub fn random_model(rng: &mut ChaCha8Rng, k: usize, n: usize, p_tot: usize) -> ModelSpec {
    let p_act = rng.gen_range(1..=3.min(p_tot));
    let beta = Array2::from_shape_fn((k, p_act), |(r, _)| {
        let mag = rng.gen_range(1.5..3.0);
        if r % 2 == 0 {
            mag
        } else {
            -mag
        }
    });
    let sigma = Array1::from_shape_fn(k, |_| rng.gen_range(0.3..0.8));
    let mut pi = Array1::from_shape_fn(k, |_| rng.gen_range(0.25..1.0));
    let s = pi.sum();
    pi.mapv_inplace(|v| v / s);
    ModelSpec {
        name: "random".into(),
        n,
        beta,
        sigma,
        pi,
        cov_kind: CovKind::Identity,
        p_tot,
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, k: usize, n: usize, p_tot: usize) -> Dataset {
    let spec = random_model(rng, k, n, p_tot);
    let seed = rng.gen();
    let (data, _, _) = generate(&spec, seed).expect("generate");
    data
}

/// Independent slow reference for the single-component problem: proximal
/// (projected) gradient with backtracking, run for up to `max_iters`
/// iterations from the fixed point (phi, rho) = (0, 1). Returns the final
/// criterion value.
pub fn projected_gradient_reference(data: &Dataset, lambda: f64, max_iters: usize) -> f64 {
    let n = data.n() as f64;
    let x = data.x();
    let y = data.y();
    let p = data.p();
    let smooth = |phi: &Array1<f64>, rho: f64| -> f64 {
        let resid = y.mapv(|v| rho * v) - x.dot(phi);
        -rho.ln() + resid.dot(&resid) / (2.0 * n)
    };
    let soft = |v: f64, t: f64| -> f64 {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    };

    let mut phi = Array1::<f64>::zeros(p);
    let mut rho = 1.0f64;
    let mut eta = 1.0f64;
    let mut f_cur = smooth(&phi, rho);
    let mut stalled = 0;
    for _ in 0..max_iters {
        let resid = y.mapv(|v| rho * v) - x.dot(&phi);
        let g_phi = -(x.t().dot(&resid)) / n;
        let g_rho = -1.0 / rho + y.dot(&resid) / n;
        let (next_phi, next_rho, f_next) = loop {
            let cand_phi = Array1::from_shape_fn(p, |j| soft(phi[j] - eta * g_phi[j], eta * lambda));
            let cand_rho = (rho - eta * g_rho).max(1e-8);
            let d_phi = &cand_phi - &phi;
            let d_rho = cand_rho - rho;
            let lin = g_phi.dot(&d_phi) + g_rho * d_rho;
            let quad = (d_phi.dot(&d_phi) + d_rho * d_rho) / (2.0 * eta);
            let f_cand = smooth(&cand_phi, cand_rho);
            if f_cand <= f_cur + lin + quad + 1e-15 {
                break (cand_phi, cand_rho, f_cand);
            }
            eta *= 0.5;
            if eta < 1e-14 {
                break (phi.clone(), rho, f_cur);
            }
        };
        let l1_old = phi.iter().map(|v| v.abs()).sum::<f64>();
        let l1_new = next_phi.iter().map(|v| v.abs()).sum::<f64>();
        let improved = (f_cur + lambda * l1_old) - (f_next + lambda * l1_new);
        phi = next_phi;
        rho = next_rho;
        f_cur = f_next;
        eta = (eta * 1.1).min(10.0);
        if improved.abs() <= 1e-15 * (1.0 + f_cur.abs()) {
            stalled += 1;
            if stalled >= 50 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    f_cur + lambda * phi.iter().map(|v| v.abs()).sum::<f64>()
}

/// Prints one pass/fail line for an acceptance criterion and panics on
/// failure.
pub fn report(id: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}
