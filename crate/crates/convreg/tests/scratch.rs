//! Temporary diagnostic (not part of the suite): compares the dual value
//! reported by a long warm-started run against a cold re-evaluation at the
//! same multipliers.

use convreg::dataset::Partition;
use convreg::papg::{papg_run, DualSmoothing, PapgConfig};
use convreg::report::{RunCaps, StopRule};
use convreg::synth::{gen_instance, FunctionKind, SynthConfig};

#[test]
fn warm_vs_cold_dual_value() {
    let gt = gen_instance(&SynthConfig {
        kind: FunctionKind::Quadratic,
        dim: 2,
        n_points: 20,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let data = &gt.dataset;
    let gamma = 1e-4;

    let part = Partition::new(data, 2).unwrap();
    let mut ds = DualSmoothing::new(data, part, gamma, Some(1)).unwrap();
    let cfg = PapgConfig {
        stop: StopRule::Never,
        caps: RunCaps { iter_cap: Some(20_000), time_cap: None },
        ..PapgConfig::default()
    };
    let out = papg_run(&mut ds, data, &cfg).unwrap();
    let g_warm = out.g_value;

    let part2 = Partition::new(data, 2).unwrap();
    let mut cold = DualSmoothing::new(data, part2, gamma, Some(1)).unwrap();
    let cold_eval = cold.eval(&out.theta, 1e-10, None).unwrap();

    eprintln!("g_warm      = {g_warm:.12e}");
    eprintln!("g_cold      = {:.12e}", cold_eval.g);
    eprintln!("difference  = {:.3e}", g_warm - cold_eval.g);
    eprintln!("inner iters = {}", cold_eval.subproblem_iters);
    assert!(
        (g_warm - cold_eval.g).abs() <= 1e-6 * (1.0 + g_warm.abs()),
        "warm-started dual value drifted from a cold evaluation"
    );
}
