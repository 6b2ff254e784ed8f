//! Built-in invariant suites behind `stoshield validate`.
//!
//! `fast` re-derives the closed-form anchors and cross-checks the two
//! covariance routes in seconds; `full` adds the Monte Carlo reproduction of
//! the 3-state table, the ensemble scaling fits, and the paired population
//! run. Each check prints one PASS/FAIL line.

use stoshield_core::channels::{
    build_channel, k_stationary_binomial, voltage_sweep_importance, ChannelKind,
};
use stoshield_core::ensembles::{
    graded_experiment, moment_report, rk_cluster_experiment, s_sweep, sample_er, ErConfig,
};
use stoshield_core::graph::{
    parse_network_json, three_state_chain, two_state, MeasurementVector, NoiseSpec,
};
use stoshield_core::importance::{edge_importance, optimal_reduction, ReductionPlan};
use stoshield_core::ou_sim::{deficiency_stats, simulate_ensemble, simulate_pair, SimConfig};
use stoshield_core::population::{
    estimate_multinomial_step_moments, multinomial_increment_covariance,
    population_shielding_error, ssa_exact, PairedPopConfig, PopMethod, ShieldingMask,
};
use stoshield_core::rng::StreamKey;
use stoshield_core::spectral::{eigendecompose, lyapunov_oracle, stationary_covariance_spectral};

type Check = (&'static str, fn() -> Result<String, String>);

pub fn run_suite(full: bool) -> bool {
    let fast: Vec<Check> = vec![
        ("graph/stationary-closed-forms", stationary_closed_forms),
        ("graph/schema-rejection", schema_rejection),
        ("spectral/two-state-closed-forms", two_state_closed_forms),
        ("spectral/oracle-equivalence", oracle_equivalence),
        ("importance/three-state-table", three_state_table),
        ("importance/optimal-plan", optimal_plan),
        ("ou/coupling-exactness", coupling_exactness),
        ("ou/conservation", ou_conservation),
        ("population/ssa-conservation", ssa_conservation),
        ("population/multinomial-moments", multinomial_moments),
        ("channels/k-binomial-law", k_binomial_law),
        ("channels/detailed-balance-pairing", detailed_balance_pairing),
    ];
    let slow: Vec<Check> = vec![
        ("ou/three-state-monte-carlo", three_state_monte_carlo),
        ("ensembles/moment-scaling-fit", moment_scaling_fit),
        ("ensembles/s-statistic", s_statistic_gate),
        ("ensembles/cluster-separation", cluster_separation),
        ("ensembles/graded-fit", graded_fit),
        ("population/paired-shielding", paired_shielding),
    ];

    let mut all_ok = true;
    let mut run = |checks: &[Check]| {
        for (name, f) in checks {
            match f() {
                Ok(detail) => println!("{name:<42} PASS  {detail}"),
                Err(detail) => {
                    all_ok = false;
                    println!("{name:<42} FAIL  {detail}");
                }
            }
        }
    };
    run(&fast);
    if full {
        run(&slow);
    }
    if all_ok {
        println!("validate: all checks passed");
    } else {
        println!("validate: FAILURES present");
    }
    all_ok
}

fn check(cond: bool, ok: String, err: String) -> Result<String, String> {
    if cond {
        Ok(ok)
    } else {
        Err(err)
    }
}

fn stationary_closed_forms() -> Result<String, String> {
    let pi = two_state(2.0, 1.0).stationary_distribution().map_err(|e| e.to_string())?;
    let err = (pi[0] - 1.0 / 3.0).abs().max((pi[1] - 2.0 / 3.0).abs());
    check(err < 1e-13, format!("2-state detailed balance, err {err:.1e}"), format!("err {err:.1e}"))
}

fn schema_rejection() -> Result<String, String> {
    let cases = [
        r#"{"nodes": 2, "edges": [], "bogus": 1}"#,
        r#"{"nodes": 2, "edges": [{"from":0,"to":1,"rate":-1.0},{"from":1,"to":0,"rate":1.0}]}"#,
        r#"{"nodes": 2, "edges": [{"from":0,"to":1,"rate":1.0},{"from":1,"to":0,"rate":1.0}], "noise": {"mode":"nope"}}"#,
    ];
    for c in cases {
        if parse_network_json(c).is_ok() {
            return Err(format!("accepted invalid input {c}"));
        }
    }
    Ok("3 malformed inputs rejected".into())
}

fn two_state_closed_forms() -> Result<String, String> {
    let net = two_state(1.0, 1.0);
    let b = net.noise_matrix(&NoiseSpec::Unit).map_err(|e| e.to_string())?;
    let cov = lyapunov_oracle(&net.laplacian(), &b).map_err(|e| e.to_string())?;
    let expected = [[0.5, -0.5], [-0.5, 0.5]];
    let mut err = 0.0f64;
    for (i, row) in expected.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            err = err.max((cov.entries[(i, j)] - e).abs());
        }
    }
    check(err < 1e-12, format!("Lyapunov matches hand solution, err {err:.1e}"), format!("err {err:.1e}"))
}

fn oracle_equivalence() -> Result<String, String> {
    let key = StreamKey::new(0x0eac1e, 0, 0);
    let mut worst = 0.0f64;
    for s in 0..20u64 {
        let n = 4 + (key.uniform(s, 0) * 11.0) as usize;
        let p = 0.35 + 0.5 * key.uniform(s, 1);
        let g = sample_er(n, p, 900 + s).map_err(|e| e.to_string())?;
        let l = g.network.laplacian();
        let eig = eigendecompose(&l, true).map_err(|e| e.to_string())?;
        let b = g.network.noise_matrix(&NoiseSpec::Unit).map_err(|e| e.to_string())?;
        let s1 = stationary_covariance_spectral(&eig, &b).map_err(|e| e.to_string())?;
        let s2 = lyapunov_oracle(&l, &b).map_err(|e| e.to_string())?;
        worst = worst.max((&s1.entries - &s2.entries).amax() / s2.entries.amax());
    }
    check(worst <= 1e-7, format!("20 networks, worst rel err {worst:.1e}"), format!("worst {worst:.1e}"))
}

fn three_state_report() -> Result<stoshield_core::importance::EdgeImportanceReport, String> {
    let net = three_state_chain();
    let eig = eigendecompose(&net.laplacian(), false).map_err(|e| e.to_string())?;
    let m = MeasurementVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    edge_importance(&net, &eig, &m, &NoiseSpec::Unit).map_err(|e| e.to_string())
}

fn three_state_table() -> Result<String, String> {
    let report = three_state_report()?;
    let expected = [1.0 / 24.0, 1.0 / 24.0, 7.0 / 24.0, 7.0 / 24.0];
    let mut err = 0.0f64;
    for (k, &e) in expected.iter().enumerate() {
        err = err.max((report.values[k] - e).abs());
    }
    check(
        err < 1e-12,
        format!("R = (0.0417, 0.0417, 0.2917, 0.2917), err {err:.1e}"),
        format!("err {err:.1e}"),
    )
}

fn optimal_plan() -> Result<String, String> {
    let report = three_state_report()?;
    let plan = optimal_reduction(&report, 2).map_err(|e| e.to_string())?;
    check(
        plan.neglected == vec![0, 1] && (plan.predicted_error - 1.0 / 12.0).abs() < 1e-12,
        "budget 2 neglects edges {0,1} at error 1/12".into(),
        format!("got {:?} at {}", plan.neglected, plan.predicted_error),
    )
}

fn coupling_exactness() -> Result<String, String> {
    let net = three_state_chain();
    let m = MeasurementVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    let cfg = SimConfig::new(1e-3, 5.0, 0.0, 41, 1);
    let path = simulate_pair(&net, &m, &NoiseSpec::Unit, &ReductionPlan::empty(), &cfg)
        .map_err(|e| e.to_string())?;
    check(
        path.y == path.y_tilde,
        "empty plan gives bitwise-identical paths".into(),
        "paths diverged".into(),
    )
}

fn ou_conservation() -> Result<String, String> {
    let net = three_state_chain();
    let m = MeasurementVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    let cfg = SimConfig::new(1e-3, 20.0, 0.0, 17, 1);
    let path = simulate_pair(&net, &m, &NoiseSpec::Unit, &ReductionPlan::empty(), &cfg)
        .map_err(|e| e.to_string())?;
    check(
        path.conservation_drift < 1e-8,
        format!("1'X drift {:.1e}", path.conservation_drift),
        format!("drift {:.1e}", path.conservation_drift),
    )
}

fn ssa_conservation() -> Result<String, String> {
    let net = three_state_chain();
    let traj = ssa_exact(&net, &[100, 100, 100], 50.0, 0.5, 7).map_err(|e| e.to_string())?;
    for s in &traj.states {
        if s.iter().sum::<f64>() != 300.0 {
            return Err("population drifted".into());
        }
    }
    Ok(format!("{} events, N_tot exact", traj.total_steps))
}

fn multinomial_moments() -> Result<String, String> {
    let net = three_state_chain();
    let state = [100u64, 100, 100];
    let h = 0.05;
    let est = estimate_multinomial_step_moments(&net, &state, h, 200_000, 3, Some((1, 2)))
        .map_err(|e| e.to_string())?;
    let (_, _, cross, se) = est.count_pair_cov.unwrap();
    let theory = -(state[1] as f64) * h * h;
    if (cross - theory).abs() > 3.0 * se {
        return Err(format!("cross term {cross:.4} vs {theory:.4} (se {se:.1e})"));
    }
    let cov_theory = multinomial_increment_covariance(&net, &[100.0, 100.0, 100.0], h);
    for i in 0..3 {
        for j in 0..3 {
            let dev = (est.cov_increments[(i, j)] - cov_theory[(i, j)]).abs();
            if dev > 4.0 * est.cov_increments_stderr[(i, j)].max(1e-12) {
                return Err(format!("increment covariance ({i},{j}) off by {dev:.2e}"));
            }
        }
    }
    Ok(format!("cross term {cross:.4} vs theory {theory:.4}"))
}

fn k_binomial_law() -> Result<String, String> {
    let mut worst = 0.0f64;
    for &v in &[-100.0, -65.0, -55.0, 0.0, 100.0] {
        let model = build_channel(ChannelKind::K, v, 1.0).map_err(|e| e.to_string())?;
        let pi = model.network.stationary_distribution().map_err(|e| e.to_string())?;
        let law = k_stationary_binomial(v);
        for i in 0..5 {
            worst = worst.max((pi[i] - law[i]).abs());
        }
    }
    check(worst <= 1e-10, format!("5 voltages, worst abs err {worst:.1e}"), format!("worst {worst:.1e}"))
}

fn detailed_balance_pairing() -> Result<String, String> {
    let mut worst = 0.0f64;
    for &v in &[-80.0, -65.0, -30.0, 0.0, 40.0] {
        for kind in [ChannelKind::K, ChannelKind::Na] {
            let sweep =
                voltage_sweep_importance(kind, &[v], 1.0).map_err(|e| e.to_string())?;
            let row = &sweep.rk[0];
            for pair in 0..row.len() / 2 {
                let (a, b) = (row[2 * pair], row[2 * pair + 1]);
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
            }
        }
    }
    check(worst <= 1e-6, format!("K+Na pairs, worst rel {worst:.1e}"), format!("worst {worst:.1e}"))
}

// --- slow checks ---------------------------------------------------------

fn three_state_monte_carlo() -> Result<String, String> {
    let net = three_state_chain();
    let m = MeasurementVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    let eig = eigendecompose(&net.laplacian(), false).map_err(|e| e.to_string())?;
    let report = edge_importance(&net, &eig, &m, &NoiseSpec::Unit).map_err(|e| e.to_string())?;
    let cfg = SimConfig { stride: 10, ..SimConfig::new(1e-3, 500.0, 20.0, 0xf00d, 8) };
    let plans: Vec<Vec<usize>> = vec![
        vec![0], vec![1], vec![2], vec![3],
        vec![0, 1], vec![2, 3], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3],
        vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3],
    ];
    let mut worst = 0.0f64;
    let mut best_two: Option<(Vec<usize>, f64)> = None;
    for neglected in plans {
        let exact: f64 = neglected.iter().map(|&k| report.values[k]).sum();
        let plan = ReductionPlan { neglected: neglected.clone(), predicted_error: exact };
        let paths = simulate_ensemble(&net, &m, &NoiseSpec::Unit, &plan, &cfg)
            .map_err(|e| e.to_string())?;
        let stats = deficiency_stats(&paths, &m, cfg.burn_in).map_err(|e| e.to_string())?;
        let dev = (stats.empirical_mse - exact).abs() / stats.stderr;
        worst = worst.max(dev);
        if dev > 4.0 {
            return Err(format!("plan {neglected:?} off by {dev:.1} stderr"));
        }
        if neglected.len() == 2
            && best_two.as_ref().map(|(_, v)| stats.empirical_mse < *v).unwrap_or(true)
        {
            best_two = Some((neglected, stats.empirical_mse));
        }
    }
    let (best_plan, _) = best_two.unwrap();
    if best_plan != vec![0, 1] {
        return Err(format!("empirical best two-edge plan was {best_plan:?}"));
    }
    Ok(format!("14 plans within 4 stderr (worst {worst:.2}), best 2-edge plan {{0,1}}"))
}

fn moment_scaling_fit() -> Result<String, String> {
    let report = moment_report(&[10, 30, 100, 300], 0.5, 100, 0xfee1).map_err(|e| e.to_string())?;
    let q = report.q_fit;
    for row in &report.rows {
        if row.e_cross_ij > 1e-10 {
            return Err(format!("n={}: cross_ij {:.1e}", row.n, row.e_cross_ij));
        }
    }
    check(
        (1.4..=1.9).contains(&q),
        format!("q = {q:.3} in [1.4, 1.9]"),
        format!("q = {q:.3} outside [1.4, 1.9]"),
    )
}

fn s_statistic_gate() -> Result<String, String> {
    let rows =
        s_sweep(&[400], &[0.3, 0.5, 0.7, 0.9], 10, 0x5a).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| (r.s2pn - 1.0).abs()).fold(0.0f64, f64::max);
    check(worst <= 0.15, format!("n=400, worst |S*2pn-1| = {worst:.3}"), format!("worst {worst:.3}"))
}

fn cluster_separation() -> Result<String, String> {
    let cfg = ErConfig { n: 50, p: 0.5, seed: 0xc1, samples: 10 };
    let rep = rk_cluster_experiment(&cfg, 25).map_err(|e| e.to_string())?;
    let target = 0.02;
    let bound = 2.0 * 2.0f64.sqrt() * 50.0f64.powf(-5.0 / 3.0);
    check(
        (rep.important_mean - target).abs() <= 0.25 * target
            && rep.unimportant_max <= bound
            && rep.mean_gap_ratio >= 3.0,
        format!(
            "mean {:.4}, unimportant max {:.5}, gap {:.1}",
            rep.important_mean, rep.unimportant_max, rep.mean_gap_ratio
        ),
        format!(
            "mean {:.4}, unimportant max {:.5} (bound {bound:.5}), gap {:.1}",
            rep.important_mean, rep.unimportant_max, rep.mean_gap_ratio
        ),
    )
}

fn graded_fit() -> Result<String, String> {
    let cfg = ErConfig { n: 50, p: 0.5, seed: 0x6d, samples: 5 };
    let rep = graded_experiment(&cfg).map_err(|e| e.to_string())?;
    let rel = (rep.fit_a - 0.02).abs() / 0.02;
    check(rel <= 0.25, format!("a = {:.5} ({:.0}% off 1/50)", rep.fit_a, 100.0 * rel), format!("a = {:.5}", rep.fit_a))
}

fn paired_shielding() -> Result<String, String> {
    let net = three_state_chain();
    let m = MeasurementVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    let mask: ShieldingMask = [0usize, 1].into_iter().collect();
    let n_tot = 10_000u64;
    let predicted = n_tot as f64 / 36.0;
    let cfg = PairedPopConfig { step: 0.01, t_final: 1000.0, burn_in: 20.0, trials: 4, seed: 5 };
    let v = population_shielding_error(&net, &m, n_tot, &mask, PopMethod::TauLeap, &cfg)
        .map_err(|e| e.to_string())?;
    let rel = (v - predicted).abs() / predicted;
    check(
        rel <= 0.10,
        format!("empirical {v:.1} vs OU prediction {predicted:.1} ({:.1}% off)", 100.0 * rel),
        format!("empirical {v:.1} vs {predicted:.1}"),
    )
}
