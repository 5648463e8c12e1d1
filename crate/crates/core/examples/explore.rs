use dqcpwm_core::model::{build_mpo, ModelParams};
use dqcpwm_core::obs;
use dqcpwm_core::vumps::vumps_ground_state;
use std::time::Instant;

fn main() {
    dqcpwm_core::linalg::single_threaded_blas();
    let args: Vec<String> = std::env::args().collect();
    let chi: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let k_lo: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.50);
    let k_hi: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.60);
    let steps: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(10);
    let tol: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-8);

    let ladder: Vec<usize> = [8usize, 16, 24, 32, 48, 64]
        .into_iter()
        .filter(|c| *c <= chi)
        .collect();

    println!("chi={chi} K in [{k_lo},{k_hi}] x{steps} tol={tol:.1e} ladder {ladder:?}");
    let mut prev_at_k: Vec<Option<dqcpwm_core::umps::UniformMps>> = vec![None; steps + 1];
    for &c in &ladder {
        for i in 0..=steps {
            let k = k_lo + (k_hi - k_lo) * i as f64 / steps as f64;
            let p = ModelParams::new(0.5, 1.5, k);
            let mpo = build_mpo(p).unwrap();
            let init = prev_at_k[i]
                .take()
                .map(|s| s.grow_bond_dimension(c).unwrap());
            let t0 = Instant::now();
            let res = vumps_ground_state(&mpo, c, tol, 800, init, 7).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let st = obs::align_zfm_branch(&res.state).unwrap();
            let (xi, _l1, _l2) = obs::correlation_length(&st).unwrap_or((0.0, 1.0, 0.0));
            let s_ent = obs::entanglement_entropy(&st).unwrap();
            let (vbs, zfm, zafm) = obs::order_parameters(&st).unwrap();
            println!(
                "chi {c:3} K {k:.4}: e {:+.8} S {s_ent:.5} xi {xi:9.3} vbs {vbs:+.4} zfm {zfm:+.4} zafm {zafm:+.4} it {:4} conv {} ({dt:.1}s)",
                res.energy_per_site, res.iterations, res.converged
            );
            prev_at_k[i] = Some(st);
        }
    }
}
