use diqkd_core::correlations::{Behavior, Scenario, N_X, N_Y};
use diqkd_core::entropy::{entropy_bound, EntropyConfig};
use diqkd_core::preprocess::PreprocessParams;

fn main() {
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
        flat[((0 * 2 + 0) * N_X + x) * N_Y + y] = *p00;
        flat[((0 * 2 + 1) * N_X + x) * N_Y + y] = *p01;
        flat[((1 * 2 + 0) * N_X + x) * N_Y + y] = *p10;
        flat[((1 * 2 + 1) * N_X + x) * N_Y + y] = *p11;
    }
    let b = Behavior::new(flat).unwrap();
    let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
    let mode = std::env::args().nth(1).unwrap_or_else(|| "joint".into());
    let m: usize = std::env::args().nth(2).and_then(|v| v.parse().ok()).unwrap_or(8);
    let level = std::env::args().nth(3).unwrap_or_else(|| "2+ABZ+AZZ".into());
    let mut cfg = EntropyConfig { m, ..Default::default() };
    cfg.level = level.parse().unwrap();
    cfg.strategy = mode.clone();
    let t0 = std::time::Instant::now();
    let res = entropy_bound(&b, &Scenario::default(), &pre, &cfg);
    match res {
        Ok(r) => println!(
            "m={m} level {level} {mode}: bound={:.6} status={:?} iters={} ({:.1}s)",
            r.bound, r.solver_status, r.iterations, t0.elapsed().as_secs_f64()
        ),
        Err(e) => println!("m={m} {mode}: ERROR {e}"),
    }
}
