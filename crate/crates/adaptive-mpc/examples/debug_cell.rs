//! Scratch reproduction of the failing sweep cell (window 100, lambda 1e-8).

use adaptive_mpc::closed_loop::{bootstrap, BootstrapStrategy};
use adaptive_mpc::mpc::{build_tracking_qp, MpcConfig};
use adaptive_mpc::plant::{AugmentedPlant, CstrPlant, Plant};
use adaptive_mpc::qp::{solve_qp, SolveOptions};
use adaptive_mpc::sysid::{identify, pe_metric};
use nalgebra::DVector;

fn main() {
    let plant = AugmentedPlant::new(CstrPlant::default());
    let mut cfg = MpcConfig::cstr_benchmark();
    cfg.lambda = 1e-8;
    cfg.window = 100;
    let x0 = DVector::from_vec(vec![0.4, 0.6, 0.1]);

    let mut window = bootstrap(&plant, &x0, &cfg, &BootstrapStrategy::ModelBasedMpc).unwrap();
    let mut x = window.head_state().unwrap().clone();
    let mut t = cfg.window;

    while t <= 2500 {
        let model = identify(&window, cfg.lambda).unwrap();
        let tracking = build_tracking_qp(&model, &x, &cfg).unwrap();
        match solve_qp(&tracking.qp, SolveOptions::default()) {
            Ok(sol) => {
                if t % 300 == 0 || t > 1380 && t < 1400 {
                    println!(
                        "t={t} status={:?} iters={} kkt={:.3e} sz={:.3e}",
                        sol.status,
                        sol.iterations,
                        sol.kkt.max(),
                        pe_metric(&window).unwrap()
                    );
                }
                let decoded = tracking.decode(&sol);
                for k in 0..cfg.n_apply.min(2500 - t + 1) {
                    let u = decoded.u_pred[k].clone();
                    let y = plant.output(&x, &u).unwrap();
                    let xn = plant.step(&x, &u).unwrap();
                    window.push(x.clone(), u, y, xn.clone()).unwrap();
                    x = xn;
                }
                t += cfg.n_apply.min(2500 - t + 1);
            }
            Err(e) => {
                println!("t={t}: solve failed: {e}");
                let qp = &tracking.qp;
                println!("dim={} ke={} ki={}", qp.dim(), qp.eq_count(), qp.in_count());
                let sv = qp.h.clone().singular_values();
                println!("H sigma: max={:.3e} min={:.3e}", sv.max(), sv.min());
                let sve = qp.a_eq.clone().singular_values();
                println!("A_eq sigma: max={:.3e} min={:.3e}", sve.max(), sve.min());
                // model coefficients
                let sva = model.a.clone().singular_values();
                println!("A sigma: max={:.3e}", sva.max());
                println!("spectral growth |A^41| amax: {:.3e}", {
                    let mut p41 = model.a.clone();
                    for _ in 0..40 {
                        p41 = &p41 * &model.a;
                    }
                    p41.amax()
                });
                // try with looser tol to see residual level
                match solve_qp(qp, SolveOptions { tol: 1e-2, max_iter: 0 }) {
                    Ok(s2) => println!(
                        "loose solve: status={:?} iters={} stat={:.3e} peq={:.3e} pin={:.3e} comp={:.3e}",
                        s2.status, s2.iterations, s2.kkt.stationarity, s2.kkt.primal_eq,
                        s2.kkt.primal_in, s2.kkt.complementarity
                    ),
                    Err(e2) => println!("loose solve also failed: {e2}"),
                }
                break;
            }
        }
    }
}
