//! Scratch reproduction of the failing sweep cell through the real loop.

use adaptive_mpc::closed_loop::{run_closed_loop, BootstrapStrategy};
use adaptive_mpc::mpc::{build_tracking_qp, solve_tracking, MpcConfig};
use adaptive_mpc::plant::{AugmentedPlant, CstrPlant};
use adaptive_mpc::qp::{solve_qp, SolveOptions};
use nalgebra::DVector;

fn main() {
    let plant = AugmentedPlant::new(CstrPlant::default());
    let mut cfg = MpcConfig::cstr_benchmark();
    cfg.lambda = 1e-8;
    cfg.window = 100;
    let x0 = DVector::from_vec(vec![0.4, 0.6, 0.1]);

    let trace = run_closed_loop(&plant, &x0, &cfg, &BootstrapStrategy::ModelBasedMpc, 2500).unwrap();
    println!("status: {}", trace.status);
    let recs: Vec<_> = trace.solve_records().collect();
    println!("solves: {}", recs.len());
    if let Some(first_frozen) = recs.iter().find(|r| r.frozen) {
        println!("frozen from t={}", first_frozen.t);
    } else {
        println!("never frozen");
    }
    let last = recs.last().unwrap();
    println!(
        "last solve t={} J*={:.6e} sz={:.3e} id_err={:.3e}",
        last.t, last.j_star, last.sigma_min_z, last.id_error
    );
    // state at the failure
    let x_fail = &trace.final_state;
    println!("final state: {x_fail}");
    // re-solve with the recorded (frozen) model at the final state
    let model = last.model.clone();
    let tracking = build_tracking_qp(&model, x_fail, &cfg).unwrap();
    match solve_qp(&tracking.qp, SolveOptions::default()) {
        Ok(s) => println!("re-solve ok: {:?} iters={} kkt={:.3e}", s.status, s.iterations, s.kkt.max()),
        Err(e) => {
            println!("re-solve failed: {e}");
            match solve_qp(&tracking.qp, SolveOptions { tol: 1e-1, max_iter: 0 }) {
                Ok(s2) => println!(
                    "loose: status={:?} iters={} stat={:.3e} peq={:.3e} pin={:.3e} comp={:.3e} z_amax={:.3e}",
                    s2.status, s2.iterations, s2.kkt.stationarity, s2.kkt.primal_eq,
                    s2.kkt.primal_in, s2.kkt.complementarity, s2.z.amax()
                ),
                Err(e2) => println!("loose also failed: {e2}"),
            }
            let sv = tracking.qp.h.clone().singular_values();
            println!("H sigma max={:.3e} min={:.3e}", sv.max(), sv.min());
            let sva = model.a.clone().singular_values();
            println!("A sigmas: {:?}", sva.as_slice());
            let mut p41 = model.a.clone();
            for _ in 0..40 {
                p41 = &p41 * &model.a;
            }
            println!("|A^41| amax = {:.3e}", p41.amax());
        }
    }
    let _ = solve_tracking(&model, x_fail, &cfg);
}
