//! Acceptance run: one PASS/FAIL line per criterion on stdout.
//!
//! Lines are written straight to the process stdout so they appear in the
//! test log without `--nocapture`.

mod common;

use cornerspace::corner::{StepConfig, TracePolicy};
use cornerspace::dense::DenseConfig;
use cornerspace::experiments::{
    benchmark_pair, circuit_step_config, run_kerrcat, run_qft, run_scaling, run_sweep, run_tomography, Experiment,
    InitialState, NoiseSpec, RunConfig, ScalingSpec, SweepSpec,
};
use cornerspace::noise::NoiseKind;
use proptest::test_runner::{Config, TestRunner};
use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

/// Criteria run one at a time so that wall-clock comparisons are not skewed
/// by neighbouring tests.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {criterion} [{name}]: {verdict} {detail}").unwrap();
    out.flush().unwrap();
}

fn gamma_t(value: f64) -> NoiseSpec {
    NoiseSpec {
        kind: NoiseKind::Decay,
        gamma_over_delta: None,
        gamma_t_qft: Some(value),
    }
}

/// Step settings for fidelity-to-ideal runs: the carried deficit makes the
/// result a lower bound that does not inflate under truncation.
fn ideal_runs(m_max: Option<usize>) -> StepConfig {
    StepConfig {
        dt: 1.0,
        eps: 1e-4,
        m_max,
        trace_policy: TracePolicy::CarryDeficit,
        ..StepConfig::default()
    }
}

fn qft_config(qubits: usize, noise: NoiseSpec, corner: StepConfig) -> RunConfig {
    RunConfig {
        experiment: Experiment::Qft,
        qubits,
        noise,
        corner,
        allow_unreachable: true,
        output: cornerspace::experiments::OutputSpec {
            sample_stride: usize::MAX,
            entanglement: false,
            ..Default::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn criterion_1_oracle_equivalence() {
    let _guard = serial();
    let step = StepConfig {
        dt: 1.0,
        eps: 1e-12,
        m_max: Some(80),
        trace_policy: TracePolicy::Renormalize,
        ..StepConfig::default()
    };
    let start = Instant::now();
    let row = benchmark_pair(8, 1.0, &gamma_t(2.5e-2), &step, &DenseConfig::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = row.fidelity_cross >= 0.999 && elapsed < 600.0;
    report(
        1,
        "oracle equivalence",
        pass,
        &format!("L=8 M_max=80: F(corner, exact) = {:.6} (>= 0.999), {elapsed:.1} s (< 600 s)", row.fidelity_cross),
    );
    assert!(pass);
}

#[test]
fn criterion_2_l_ln_l_convergence() {
    let _guard = serial();
    let mut detail = Vec::new();
    let mut pass = true;
    for l in [6usize, 8, 10] {
        let m = (l as f64 * (l as f64).ln()).ceil() as usize;
        let step = StepConfig {
            dt: 0.5,
            eps: 1e-12,
            m_max: Some(m),
            trace_policy: TracePolicy::Renormalize,
            ..StepConfig::default()
        };
        let row = benchmark_pair(l, 1.0, &gamma_t(1.42e-2), &step, &DenseConfig::default()).unwrap();
        pass &= row.fidelity_cross >= 0.997;
        detail.push(format!("L={l} M_max={m} F={:.5}", row.fidelity_cross));
    }
    report(2, "M ~ L ln L", pass, &format!("{} (>= 0.997)", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_3_fidelity_floor() {
    let _guard = serial();
    let out = run_qft(&qft_config(10, gamma_t(0.15), ideal_runs(Some(24)))).unwrap();
    let f = out.record.fidelity_to_ideal;
    let pass = (f - 0.758).abs() <= 0.02;
    report(3, "fidelity floor", pass, &format!("L=10 gamma*T=0.15: F = {f:.4} (0.758 +- 0.02)"));
    assert!(pass);
}

#[test]
fn criterion_4_quadratic_scaling() {
    let _guard = serial();
    let states = vec![InitialState::GhzPreimage, InitialState::AllUp, InitialState::AllDown];
    let mut fits = Vec::new();
    for (gamma, m_max) in [(2.5e-4, None), (1e-3, Some(24))] {
        let cfg = RunConfig {
            experiment: Experiment::Scaling,
            corner: ideal_runs(m_max),
            scaling: ScalingSpec {
                qubits: (6..=12).collect(),
                gamma_over_delta: vec![gamma],
                states: states.clone(),
            },
            allow_unreachable: true,
            ..RunConfig::default()
        };
        fits.extend(run_scaling(&cfg).unwrap().fits);
    }
    let pass = fits.iter().all(|f| (f.slope - 2.0).abs() <= 0.3);
    let detail: Vec<String> = fits
        .iter()
        .map(|f| format!("{}@{:e}={:.2}", f.state, f.gamma_over_delta, f.slope))
        .collect();
    report(4, "quadratic scaling", pass, &format!("slopes {} (2.0 +- 0.3)", detail.join(" ")));
    assert!(pass);
}

#[test]
fn criterion_5_speedup() {
    let _guard = serial();
    let step = StepConfig {
        dt: 1.0,
        eps: 2e-4,
        ..circuit_step_config()
    };
    let rows: Vec<_> = [6usize, 8, 10]
        .iter()
        .map(|&l| benchmark_pair(l, 1.0, &gamma_t(2.5e-2), &step, &DenseConfig::default()).unwrap())
        .collect();
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup()).collect();
    let increasing = speedups.windows(2).all(|w| w[1] > w[0]);
    let last = rows.last().unwrap();
    let pass = last.t_corner_s <= last.t_exact_s / 10.0 && increasing;
    report(
        5,
        "speedup",
        pass,
        &format!(
            "speedups L=6,8,10: {:.2}, {:.2}, {:.2}; L=10 corner {:.2} s vs exact {:.2} s (F={:.4})",
            speedups[0], speedups[1], speedups[2], last.t_corner_s, last.t_exact_s, last.fidelity_cross
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_initial_state_sweep() {
    let _guard = serial();
    let cfg = RunConfig {
        experiment: Experiment::Sweep,
        qubits: 10,
        noise: gamma_t(2.5e-2),
        corner: ideal_runs(Some(24)),
        initial_state: InitialState::RandomBasis { count: 64, seed: 2024 },
        sweep: SweepSpec {
            noises: vec![NoiseKind::Decay, NoiseKind::Dephasing],
        },
        allow_unreachable: true,
        ..RunConfig::default()
    };
    let out = run_sweep(&cfg).unwrap();
    let decay = &out.series[0];
    let dephasing = &out.series[1];
    let pass = decay.n_s_sensitivity > 0.0 && dephasing.fit.a.abs() * 5.0 <= decay.fit.a.abs();
    report(
        6,
        "initial-state sweep",
        pass,
        &format!(
            "64 states: decay dI/dn_S = {:.3e} (> 0), |a| decay {:.3e} vs dephasing {:.3e} (>= 5x)",
            decay.n_s_sensitivity,
            decay.fit.a.abs(),
            dephasing.fit.a.abs()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_tomography_structure() {
    let _guard = serial();
    let run = |kind| {
        run_tomography(&RunConfig {
            experiment: Experiment::Tomography,
            noise: NoiseSpec {
                kind,
                gamma_over_delta: Some(1e-3),
                gamma_t_qft: None,
            },
            ..RunConfig::default()
        })
        .unwrap()
    };
    let deph = run(NoiseKind::Dephasing);
    let decay = run(NoiseKind::Decay);
    let pass = deph.off_z_support < 1e-3
        && decay.single_qubit_max > 0.0
        && decay.two_qubit_max > 0.0
        && decay.two_qubit_max < decay.single_qubit_max;
    report(
        7,
        "tomography structure",
        pass,
        &format!(
            "dephasing off-support {:.2e} gamma*tau (< 1e-3); decay single {:.3e}, two-qubit {:.3e}",
            deph.off_z_support, decay.single_qubit_max, decay.two_qubit_max
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_kerr_cat() {
    let _guard = serial();
    let out = run_kerrcat(&RunConfig {
        experiment: Experiment::Kerrcat,
        ..RunConfig::default()
    })
    .unwrap();
    let p = &out.run.parities;
    let stats = &out.run.stats;
    let adaptive = stats.ode.substeps > stats.steps;
    let pass = p.len() >= 2 && p[0] * p[1] < 0.0 && p[0].abs() > 0.9 && p[1].abs() > 0.9 && adaptive && out.cutoff_ok;
    report(
        8,
        "Kerr cat",
        pass,
        &format!(
            "gamma*t=10: p = {:?}, parities = {:?}, {} substeps over {} steps, max <n> = {:.2}",
            &out.run.weights[..out.run.weights.len().min(2)],
            &p[..p.len().min(2)],
            stats.ode.substeps,
            stats.steps,
            out.run.max_photon_number
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_property_suites() {
    let _guard = serial();
    let mut runner = TestRunner::new(Config {
        cases: 64,
        ..Config::default()
    });
    let mut failures = Vec::new();
    let mut check = |name: &str, result: Result<(), String>| {
        if let Err(e) = result {
            failures.push(format!("{name}: {e}"));
        }
    };
    check(
        "apply vs Kronecker",
        runner.run(&common::apply_input(), common::apply_matches_kronecker).map_err(|e| e.to_string()),
    );
    check(
        "gram_truncate vs dense",
        runner.run(&common::truncate_input(), common::gram_truncate_matches_dense).map_err(|e| e.to_string()),
    );
    check(
        "orthogonality",
        runner.run(&common::system_input(), common::columns_stay_orthogonal).map_err(|e| e.to_string()),
    );
    check(
        "drift O(dt^2)",
        runner.run(&common::system_input(), common::drift_is_second_order).map_err(|e| e.to_string()),
    );
    check(
        "fidelity vs Uhlmann",
        runner.run(&common::fidelity_input(), common::fidelity_matches_uhlmann).map_err(|e| e.to_string()),
    );
    let pass = failures.is_empty();
    let detail = if pass {
        "5 suites x 64 cases".to_string()
    } else {
        failures.join("; ")
    };
    report(9, "property suites", pass, &detail);
    assert!(pass);
}
