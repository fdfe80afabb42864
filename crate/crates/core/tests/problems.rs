use rsmf_core::problems::{default_problem, ProblemName};
use rsmf_core::rsgd::{rsgd_path, RsgdConfig};
use rsmf_core::stats::MeanVar;

#[test]
fn expected_objective_decreases_early_on() {
    let checkpoints = [0, 25, 50, 75, 100];
    for name in ProblemName::ALL {
        let p = default_problem(name);
        let obj = &p.objective;
        let cfg = RsgdConfig::new(0.01, 100, p.retraction, 61);
        let mut acc = vec![MeanVar::new(); checkpoints.len()];
        for path in 0..500 {
            rsgd_path(obj, &p.x0, &cfg, path, |k, x| {
                if let Some(j) = checkpoints.iter().position(|c| *c == k) {
                    acc[j].push(obj.value(x));
                }
            })
            .unwrap();
        }
        for w in acc.windows(2) {
            let drop = w[0].mean() - w[1].mean();
            let noise = w[0].std_error() + w[1].std_error();
            assert!(drop > 0.0, "{name}: E f rose from {} to {} (se {noise})", w[0].mean(), w[1].mean());
        }
    }
}
