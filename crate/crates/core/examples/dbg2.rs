use diqkd_core::correlations::{Behavior, Scenario, N_X, N_Y};
use diqkd_core::entropy::{entropy_bound, gauss_radau, EntropyConfig};
use diqkd_core::preprocess::PreprocessParams;

fn behavior() -> Behavior {
    let rows: [[f64; 4]; 6] = [
        [0.9939848305625, 0.0016772430375, 0.0008783402625, 0.0034595861375],
        [0.9907551763625, 0.0049068972375, 0.0008862111125, 0.0034517152875],
        [0.9949539201500, 0.0007081534400, 0.0006388507000, 0.0036990757000],
        [0.9848486222042, 0.0008729597292, 0.0100145486208, 0.0042638694458],
        [0.9775156493042, 0.0082059326292, 0.0141257381708, 0.0001526798958],
        [0.9835762722167, 0.0021453097167, 0.0120164986333, 0.0022619194333],
    ];
    let mut flat = [0.0; 24];
    for (i, row) in rows.iter().enumerate() {
        let (x, y) = (i / 3, i % 3);
        let [p11, p10, p01, p00] = row;
        flat[(0 * N_X + x) * N_Y + y] = *p00;
        flat[((0 * 2 + 1) * N_X + x) * N_Y + y] = *p01;
        flat[((1 * 2) * N_X + x) * N_Y + y] = *p10;
        flat[((1 * 2 + 1) * N_X + x) * N_Y + y] = *p11;
    }
    Behavior::new(flat).unwrap()
}

fn main() {
    let b = behavior();
    let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
    let sc = Scenario::default();
    // 1) does the alpha bound bind? inspect nodes/alphas
    let q = gauss_radau(8).unwrap();
    for i in 0..7 {
        let t = q.nodes[i];
        println!("node {i}: t={:.5} w={:.5} alpha={:.3}", t, q.weights[i], 1.5 * (1.0 / t).max(1.0 / (1.0 - t)));
    }
    // 2) m=3 same-node vs cross-node words
    for cross in [false, true] {
        let mut cfg = EntropyConfig { m: 3, cross_node_words: cross, ..Default::default() };
        cfg.solver.max_iter = 200;
        let t0 = std::time::Instant::now();
        let r = entropy_bound(&b, &sc, &pre, &cfg).unwrap();
        println!(
            "m=3 full-level cross={cross}: bound={:.7} status={:?} ({:.1}s)",
            r.bound, r.solver_status, t0.elapsed().as_secs_f64()
        );
    }
}
