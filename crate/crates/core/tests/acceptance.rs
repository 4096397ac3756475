//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use randles::circuit::{eval_tf, to_modal, to_state_space, to_tf, CircuitParams, ModalParams, StateSpaceModel};
use randles::estimate::{recover_params, tone_phasors, OutlierPolicy, RejectReason, TrialResult};
use randles::excitation::{check_pe_order, crest_factor, sample};
use randles::identifiability::{coefficient_map, enumerate_solutions, is_canonical};
use randles::montecarlo::{run_study, summarize, StudyStats};
use randles::presets;
use randles::scalar::big_ratio;
use randles::simulate::{simulate_response, simulate_response_with_hold, Channel, Hold, TimeSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Random circuit whose time constants differ pairwise by at least a factor
/// of 1.5, so that pole recovery is well conditioned in double precision.
fn random_circuit(rng: &mut ChaCha8Rng, n: usize) -> CircuitParams<f64> {
    loop {
        let mut tau: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-3, 10.0)).collect();
        tau.sort_by(f64::total_cmp);
        if tau.windows(2).any(|w| w[1] / w[0] < 1.5) {
            continue;
        }
        let r: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.05, 1.0)).collect();
        let c: Vec<f64> = tau.iter().zip(&r).map(|(t, r)| t / r).collect();
        let r_inf = log_uniform(rng, 0.01, 0.5);
        let c_w = log_uniform(rng, 10.0, 900.0);
        return CircuitParams::new(r_inf, r, c, c_w).expect("positive by construction");
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let permissive = OutlierPolicy { c_w_max: f64::INFINITY, c_i_max: f64::INFINITY, ..Default::default() };
    let mut worst = 0.0_f64;
    for n in 1..=4usize {
        let expected = (1..=n).product::<usize>();
        for _ in 0..200 {
            let p = random_circuit(&mut rng, n);
            let m = to_modal(&p).unwrap();
            let sols = match enumerate_solutions(&coefficient_map(&m), n) {
                Ok(s) => s,
                Err(e) => return outcome(false, format!("n={n}: enumerate failed: {e}")),
            };
            if sols.len() != expected {
                return outcome(false, format!("n={n}: {} solutions, expected {expected}", sols.len()));
            }
            let canonical = sols.iter().filter(|s| is_canonical(s)).count();
            if canonical != 1 {
                return outcome(false, format!("n={n}: {canonical} canonical solutions"));
            }
            let back = match recover_params(&to_tf(&m), n, &permissive) {
                Ok(b) => b,
                Err(e) => return outcome(false, format!("n={n}: recovery failed: {e}")),
            };
            // Recovery orders pairs by decreasing a = 1/(R C).
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| m.a[j].total_cmp(&m.a[i]));
            worst = worst.max(rel(back.r_inf, p.r_inf)).max(rel(back.c_w, p.c_w));
            for (k, &i) in idx.iter().enumerate() {
                worst = worst.max(rel(back.r[k], p.r[i])).max(rel(back.c[k], p.c[i]));
            }
        }
    }
    outcome(worst < 1e-9, format!("n=1..4 x 200: n! solutions, one canonical; worst round-trip error {worst:.2e}"))
}

fn permuted(m: &ModalParams<f64>, perm: &[usize]) -> ModalParams<f64> {
    ModalParams {
        a: perm.iter().map(|&i| m.a[i]).collect(),
        b: perm.iter().map(|&i| m.b[i]).collect(),
        b_w: m.b_w,
        d: m.d,
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_perm = 0.0_f64;
    let mut min_other = f64::INFINITY;
    for n in [2usize, 3] {
        let m = to_modal(&random_circuit(&mut rng, n)).unwrap();
        let target = coefficient_map(&m);
        for perm in (0..n).permutations(n) {
            worst_perm = worst_perm.max(coefficient_map(&permuted(&m, &perm)).relative_distance(&target));
        }
        for _ in 0..10_000 {
            // Random relabelling plus a multiplicative perturbation of every
            // modal parameter; none of these is a permutation of the truth.
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut bump = || {
                let mag = log_uniform(&mut rng, 1e-3, 1.0);
                if rng.random_bool(0.5) { 1.0 + mag } else { 1.0 / (1.0 + mag) }
            };
            let base = permuted(&m, &perm);
            let cand = ModalParams {
                a: base.a.iter().map(|v| v * bump()).collect(),
                b: base.b.iter().map(|v| v * bump()).collect(),
                b_w: base.b_w * bump(),
                d: base.d * bump(),
            };
            min_other = min_other.min(coefficient_map(&cand).relative_distance(&target));
        }
    }
    // Exact arithmetic: swapping the two pairs gives the identical vector.
    let exact = ModalParams {
        a: vec![big_ratio(50, 3), big_ratio(25, 6)],
        b: vec![big_ratio(10, 3), big_ratio(5, 3)],
        b_w: big_ratio(1, 300),
        d: big_ratio(1, 20),
    };
    let swapped = permuted_exact(&exact);
    let exact_equal = coefficient_map(&exact) == coefficient_map(&swapped);
    outcome(
        worst_perm <= 1e-12 && min_other > 1e-6 && exact_equal,
        format!(
            "m=2,3: permutation mismatch {worst_perm:.1e}; min residual of 2x10^4 perturbed candidates {min_other:.2e}; exact rational swap identical: {exact_equal}"
        ),
    )
}

fn permuted_exact(m: &randles::ExactModal) -> randles::ExactModal {
    ModalParams {
        a: vec![m.a[1].clone(), m.a[0].clone()],
        b: vec![m.b[1].clone(), m.b[0].clone()],
        b_w: m.b_w.clone(),
        d: m.d.clone(),
    }
}

fn study(noisy: bool) -> (StudyStats, Vec<TrialResult>) {
    let (stats, trials) = run_study(&presets::reference_study(noisy, 0)).expect("study runs");
    (stats.expect("some trials accepted"), trials)
}

const CORE: [&str; 5] = ["r1", "c1", "r2", "c2", "c_w"];

fn fmt_er(s: &StudyStats) -> String {
    s.parameters.iter().map(|p| format!("{}={:.3}%", p.name, p.e_r)).join(" ")
}

fn criterion_3(s: &StudyStats) -> Outcome {
    let core_ok = CORE.iter().all(|n| s.param(n).unwrap().e_r < 10.0);
    let rinf_ok = s.param("r_inf").unwrap().e_r < 20.0;
    let outliers_ok = s.outlier_count <= 20;
    outcome(
        core_ok && rinf_ok && outliers_ok,
        format!("noise-free: outliers {} / {}; e_r {}", s.outlier_count, s.trials, fmt_er(s)),
    )
}

fn criterion_4(noisy: &StudyStats, clean: &StudyStats) -> Outcome {
    let std_ok = CORE.iter().all(|n| noisy.param(n).unwrap().std >= clean.param(n).unwrap().std);
    let mean_ok = noisy.parameters.iter().all(|p| rel(p.mean, p.truth) < 0.15);
    let outliers_ok = noisy.outlier_count <= 25;
    let stds = CORE
        .iter()
        .map(|n| format!("{n} {:.2e}>={:.2e}", noisy.param(n).unwrap().std, clean.param(n).unwrap().std))
        .join(", ");
    outcome(
        std_ok && mean_ok && outliers_ok,
        format!("noisy: outliers {} / {}; e_r {}; std {stds}", noisy.outlier_count, noisy.trials, fmt_er(noisy)),
    )
}

fn criterion_5() -> Outcome {
    let x = sample(&presets::linear_excitation(), presets::FS, presets::DURATION).unwrap();
    let cf = crest_factor(&x).unwrap();
    let log = crest_factor(&sample(&presets::study_excitation(), presets::FS, presets::DURATION).unwrap()).unwrap();
    outcome(
        (1.95..=2.05).contains(&cf),
        format!("equally spaced Schroeder multisine crest factor {cf:.4} (log-spaced study design: {log:.4})"),
    )
}

fn criterion_6() -> Outcome {
    let r = check_pe_order(&presets::study_excitation(), 2);
    outcome(
        r.required_order == 7 && r.pe_order == 8 && r.passes,
        format!("n=2, l=4: required {}, provided {}, passes {}", r.required_order, r.pe_order, r.passes),
    )
}

/// Classical RK4 on the continuous model with the input reconstructed per
/// hold, `substeps` steps per sample interval.
fn rk4_reference(ss: &StateSpaceModel<f64>, u: &TimeSeries, hold: Hold, substeps: usize) -> Vec<f64> {
    let dim = ss.a_diag.len();
    let h = u.dt / substeps as f64;
    let mut x = vec![0.0; dim];
    let mut y = Vec::with_capacity(u.len());
    let f = |x: &[f64], uu: f64| -> Vec<f64> { (0..dim).map(|i| ss.a_diag[i] * x[i] + ss.b_vec[i] * uu).collect() };
    for k in 0..u.len() {
        y.push(x.iter().sum::<f64>() + ss.d_scalar * u.values[k]);
        if k + 1 == u.len() {
            break;
        }
        let (u0, u1) = (u.values[k], u.values[k + 1]);
        let input = |s: f64| match hold {
            Hold::Zoh => u0,
            Hold::Foh => u0 + (u1 - u0) * s,
        };
        for j in 0..substeps {
            let s0 = j as f64 / substeps as f64;
            let sh = (j as f64 + 0.5) / substeps as f64;
            let s1 = (j as f64 + 1.0) / substeps as f64;
            let k1 = f(&x, input(s0));
            let x2: Vec<f64> = (0..dim).map(|i| x[i] + 0.5 * h * k1[i]).collect();
            let k2 = f(&x2, input(sh));
            let x3: Vec<f64> = (0..dim).map(|i| x[i] + 0.5 * h * k2[i]).collect();
            let k3 = f(&x3, input(sh));
            let x4: Vec<f64> = (0..dim).map(|i| x[i] + h * k3[i]).collect();
            let k4 = f(&x4, input(s1));
            for i in 0..dim {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    y
}

fn rel_rms(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn criterion_7() -> Outcome {
    let truth = presets::operating_point();
    let ss = to_state_space(&to_modal(&truth).unwrap());
    let spec = presets::study_excitation();
    // 20 s keeps the fine-grid reference cheap; both holds are checked.
    let u_short = sample(&spec, presets::FS, 20.0).unwrap();
    let zoh = simulate_response(&ss, &u_short, None).unwrap();
    let e_zoh = rel_rms(&zoh.values, &rk4_reference(&ss, &u_short, Hold::Zoh, 100));
    let foh = simulate_response_with_hold(&ss, &u_short, None, Hold::Foh).unwrap();
    let e_foh = rel_rms(&foh.values, &rk4_reference(&ss, &u_short, Hold::Foh, 100));

    let u = sample(&spec, presets::FS, presets::DURATION).unwrap();
    let tones = spec.omegas();
    let skip = (5.0 * presets::FS) as usize;
    let uu = tone_phasors(&u, &tones, skip).unwrap();
    let amp_err = |hold: Hold| -> f64 {
        let y = simulate_response_with_hold(&ss, &u, None, hold).unwrap();
        let yy = tone_phasors(&y, &tones, skip).unwrap();
        let tf = to_tf(&to_modal(&truth).unwrap());
        tones
            .iter()
            .zip(uu.iter().zip(&yy))
            .map(|(&w, (a, b))| rel((b / a).norm(), eval_tf(&tf, w).unwrap().norm()))
            .fold(0.0, f64::max)
    };
    let amp_foh = amp_err(Hold::Foh);
    let amp_zoh = amp_err(Hold::Zoh);
    outcome(
        e_zoh < 1e-6 && e_foh < 1e-6 && amp_foh < 0.01,
        format!(
            "RK4 (dt/100) rel RMS: ZOH {e_zoh:.1e}, FOH {e_foh:.1e}; max tone |H|/|T| error: FOH {:.3}% (ZOH {:.2}%, sample-and-hold bias at w*dt=1)",
            100.0 * amp_foh,
            100.0 * amp_zoh
        ),
    )
}

fn criterion_8() -> Outcome {
    let ss = to_state_space(&to_modal(&presets::operating_point()).unwrap());
    let u1 = sample(&presets::study_excitation(), presets::FS, 20.0).unwrap();
    let u2 = sample(&presets::linear_excitation(), presets::FS, 20.0).unwrap();
    let scale = |u: &TimeSeries, a: f64| {
        TimeSeries::new(u.t0, u.dt, u.values.iter().map(|v| a * v).collect(), Channel::Current).unwrap()
    };
    let sum = TimeSeries::new(
        0.0,
        u1.dt,
        u1.values.iter().zip(&u2.values).map(|(a, b)| a + b).collect(),
        Channel::Current,
    )
    .unwrap();
    let mut lin_ok = true;
    let mut worst = 0.0_f64;
    for hold in [Hold::Zoh, Hold::Foh] {
        let y1 = simulate_response_with_hold(&ss, &u1, None, hold).unwrap();
        let y2 = simulate_response_with_hold(&ss, &u2, None, hold).unwrap();
        let y4 = simulate_response_with_hold(&ss, &scale(&u1, 4.0), None, hold).unwrap();
        lin_ok &= y4.values.iter().zip(&y1.values).all(|(a, b)| *a == 4.0 * b);
        let y3 = simulate_response_with_hold(&ss, &scale(&u1, 3.7), None, hold).unwrap();
        let ys = simulate_response_with_hold(&ss, &sum, None, hold).unwrap();
        let scaled: Vec<f64> = y1.values.iter().map(|v| 3.7 * v).collect();
        let added: Vec<f64> = y1.values.iter().zip(&y2.values).map(|(a, b)| a + b).collect();
        worst = worst.max(rel_rms(&y3.values, &scaled)).max(rel_rms(&ys.values, &added));
    }

    let m = to_modal(&presets::operating_point()).unwrap();
    let perm_err = coefficient_map(&permuted(&m, &[1, 0])).relative_distance(&coefficient_map(&m));

    let mut cfg = presets::reference_study(true, 9);
    cfg.trials = 20;
    let (a, ta) = run_study(&cfg).unwrap();
    let (b, tb) = run_study(&cfg).unwrap();
    let deterministic = serde_json::to_string(&(&a, &ta)).unwrap() == serde_json::to_string(&(&b, &tb)).unwrap();

    let truth = CircuitParams::new(0.5, vec![0.25, 0.5], vec![1.0, 2.0], 4.0).unwrap();
    let accepted = |v: [f64; 6]| TrialResult {
        index: 0,
        accepted: true,
        reject_reason: None,
        params: Some(CircuitParams::new(v[0], vec![v[1], v[3]], vec![v[2], v[4]], v[5]).unwrap()),
        tf: None,
        residual: Some(0.0),
        rms_error: Some(0.0),
        seed: 0,
        noise_seed: None,
        init: vec![],
        iterations: 0,
    };
    let mut rejected = accepted([1.0; 6]);
    rejected.accepted = false;
    rejected.params = None;
    rejected.reject_reason = Some(RejectReason::CwBound);
    let synthetic = [accepted([0.25, 0.25, 1.0, 0.5, 1.5, 3.0]), accepted([1.25, 0.25, 1.0, 0.5, 3.0, 3.0]), rejected];
    let s = summarize(&synthetic, &truth).unwrap();
    // means: r_inf 0.75 (+50%), c2 2.25 (+12.5%), c_w 3 (-25%), others exact
    let expected = [("r_inf", 50.0), ("r1", 0.0), ("r2", 0.0), ("c1", 0.0), ("c2", 12.5), ("c_w", 25.0)];
    let er_ok = expected.iter().all(|(n, e)| s.param(n).unwrap().e_r == *e) && s.outlier_count == 1;

    outcome(
        lin_ok && worst < 1e-13 && perm_err <= 1e-12 && deterministic && er_ok,
        format!(
            "power-of-two scaling bit-exact {lin_ok}; general scaling/superposition rel RMS {worst:.1e}; permutation {perm_err:.1e}; study bit-identical {deterministic}; e_r exact {er_ok}"
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((k, name, o, t.elapsed().as_secs_f64()));
    };

    run(1, "identifiability enumeration and round trip", &mut criterion_1);
    run(2, "permutation oracle", &mut criterion_2);
    let mut clean = None;
    run(3, "noise-free study", &mut || {
        let (s, _) = study(false);
        let o = criterion_3(&s);
        clean = Some(s);
        o
    });
    let clean = clean.expect("criterion 3 ran");
    run(4, "noisy study", &mut || criterion_4(&study(true).0, &clean));
    run(5, "crest factor", &mut criterion_5);
    run(6, "persistent excitation order", &mut criterion_6);
    run(7, "simulation correctness", &mut criterion_7);
    run(8, "property suites", &mut criterion_8);

    let mut failed = 0;
    for (k, name, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {k} ({name}, {secs:.2}s): {}", o.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
