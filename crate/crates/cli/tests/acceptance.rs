//! Acceptance report. Prints one PASS/FAIL line per criterion followed by
//! the measured quantities. The process exits 0 whatever the verdicts are;
//! the report is the deliverable.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use semicomp::config::RunConfig;
use semicomp::runner::{bbs_study, cross_validate, neural_em_study};
use semicomp_core::harness::{design_censoring_rate, summarize, FitSettings, FittedModel, ModelKind, NeuralEmDesign};
use semicomp_core::math::quantile_sorted;
use semicomp_core::risk::RiskKind;
use semicomp_core::rng::derive_seed;
use semicomp_core::sim::simulate_with_rate;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn settings() -> FitSettings {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/non_monotonic.json");
    let cfg = RunConfig::load(Some(&path)).expect("acceptance config");
    cfg.validate().expect("acceptance config is valid");
    let mut s = cfg.fit_settings();
    s.kind = ModelKind::Neural;
    s
}

fn bbs_validation() -> Outcome {
    let one = bbs_study(1, 1000, 200, SEED).expect("setting 1");
    let three = bbs_study(3, 1000, 200, SEED).expect("setting 3");
    let col = |reps: &[semicomp_core::harness::BbsReplicate], truth: bool| {
        let v: Vec<f64> = reps.iter().map(|r| if truth { r.true_ibbs } else { r.calculated_ibbs }).collect();
        summarize(&v)
    };
    let (t1, t1_sd) = col(&one, true);
    let (c1, c1_sd) = col(&one, false);
    let (t3, t3_sd) = col(&three, true);
    let (c3, c3_sd) = col(&three, false);
    let ok1 = (t1 - 0.0187).abs() <= 0.002;
    let ok3 = (c3 - 0.0219).abs() <= 0.002;
    Outcome {
        pass: ok1 && ok3 && one.len() == 200 && three.len() == 200,
        summary: format!("setting 1 true iBBS {t1:.4} (target 0.0187 +/- 0.002), setting 3 calculated iBBS {c3:.4} (target 0.0219 +/- 0.002)"),
        details: vec![
            format!("setting 1: {} replicates, true {t1:.4} ({t1_sd:.4}), calculated {c1:.4} ({c1_sd:.4})", one.len()),
            format!("setting 3: {} replicates, true {t3:.4} ({t3_sd:.4}), calculated {c3:.4} ({c3_sd:.4})", three.len()),
        ],
    }
}

fn theta_recovery(s: &FitSettings) -> Outcome {
    let design = NeuralEmDesign { n: 2000, theta: 0.5, risk: RiskKind::Linear, censoring: 0.0 };
    let reps = neural_em_study(&design, 50, SEED + 2, s).expect("linear study");
    let par: Vec<f64> = reps.iter().map(|r| r.theta_parametric).collect();
    let neu: Vec<f64> = reps.iter().map(|r| r.theta_neural).collect();
    let (pm, psd) = summarize(&par);
    let (nm, nsd) = summarize(&neu);
    Outcome {
        pass: reps.len() == 50 && (0.44..=0.54).contains(&pm) && (0.40..=0.60).contains(&nm),
        summary: format!("parametric mean theta {pm:.3} in [0.44, 0.54], neural mean theta {nm:.3} in [0.40, 0.60]"),
        details: vec![format!(
            "{} replicates, parametric {pm:.3} ({psd:.3}), neural {nm:.3} ({nsd:.3})",
            reps.len()
        )],
    }
}

fn fmt3(v: &[f64; 3]) -> String {
    format!("[{:.3}, {:.3}, {:.3}]", v[0], v[1], v[2])
}

fn mise_ordering(s: &FitSettings) -> Outcome {
    let nm = NeuralEmDesign { n: 1000, theta: 0.5, risk: RiskKind::NonMonotonic, censoring: 0.0 };
    let lin = NeuralEmDesign { risk: RiskKind::Linear, ..nm };
    let reps = neural_em_study(&nm, 10, SEED + 3, s).expect("non-monotonic study");
    let linear = neural_em_study(&lin, 10, SEED + 3, s).expect("linear study");
    let mut details = Vec::new();
    let mut ordered = 0;
    for r in &reps {
        let ok = r.mise_parametric.iter().all(|&m| m > 1.0) && r.mise_neural.iter().all(|&m| m < 0.5);
        ordered += ok as usize;
        details.push(format!(
            "seed {}: parametric {} neural {} {}",
            r.replicate,
            fmt3(&r.mise_parametric),
            fmt3(&r.mise_neural),
            if ok { "ordered" } else { "not ordered" }
        ));
    }
    let lin_mean = [0, 1, 2].map(|g| summarize(&linear.iter().map(|r| r.mise_parametric[g]).collect::<Vec<_>>()).0);
    let lin_ok = linear.len() == 10 && lin_mean.iter().all(|&m| m < 0.05);
    details.push(format!("linear data, mean parametric MISE {}", fmt3(&lin_mean)));
    Outcome {
        pass: reps.len() == 10 && ordered >= 8 && lin_ok,
        summary: format!(
            "non-monotonic: parametric > 1 and neural < 0.5 in {ordered}/10 seeds (need 8); linear parametric MISE {} < 0.05",
            fmt3(&lin_mean)
        ),
        details,
    }
}

fn baseline_consistency(s: &FitSettings) -> Outcome {
    let design = NeuralEmDesign { n: 2000, theta: 0.5, risk: RiskKind::NonMonotonic, censoring: 0.25 };
    let seed = SEED + 4;
    let rate = design_censoring_rate(&design.sim_config(seed)).expect("censoring rate");
    let fits: Vec<_> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let cfg = design.sim_config(derive_seed(seed, r));
            let sim = simulate_with_rate(&cfg, rate).expect("simulate");
            let fit = FittedModel::fit(&sim.data, &s.reseeded(seed, r)).expect("neural fit");
            (sim.data, fit)
        })
        .collect();
    let truth = design.sim_config(seed).baselines();
    let mut covered = 0;
    let mut total = 0;
    let mut details = Vec::new();
    for g in 0..3 {
        let mut events: Vec<f64> = fits.iter().flat_map(|(d, _)| d.event_times(g)).collect();
        events.sort_by(f64::total_cmp);
        let upper = quantile_sorted(&events, 0.8);
        let mut hit = 0;
        for k in 1..=100 {
            let t = upper * k as f64 / 100.0;
            let mut curve: Vec<f64> = fits.iter().map(|(_, m)| m.cumulative_baseline(g, t)).collect();
            curve.sort_by(f64::total_cmp);
            let (lo, hi) = (quantile_sorted(&curve, 0.025), quantile_sorted(&curve, 0.975));
            let v = truth[g].cumulative(t);
            hit += (lo <= v && v <= hi) as usize;
        }
        details.push(format!("transition {}: truth inside envelope at {hit}/100 points on (0, {upper:.3}]", g + 1));
        covered += hit;
        total += 100;
    }
    let frac = covered as f64 / total as f64;
    Outcome {
        pass: frac >= 0.85,
        summary: format!("truth inside 2.5-97.5 envelope at {:.1}% of grid points (need 85%)", 100.0 * frac),
        details,
    }
}

fn property_suite() -> Outcome {
    let checks: Vec<(&str, common::Check)> = vec![
        ("a gradient", common::gradient_check(3, 16)),
        ("b EM monotonicity", common::em_monotonicity(20, 14)),
        ("c M-step stationarity", common::m_step_stationarity(5, 15)),
        ("d complete vs case", common::complete_vs_case(1000, 11)),
        ("e quadrature", common::observed_vs_quadrature(40, 12)),
        ("f posterior moments", common::posterior_vs_monte_carlo(12, 40_000, 13)),
        ("g decomposition", common::bbs_decomposition(20_000, 17)),
        ("h simulator", common::simulator_validity(300, 18)),
    ];
    let passed = checks.iter().filter(|(_, c)| c.is_ok()).count();
    Outcome {
        pass: passed == checks.len(),
        summary: format!("{passed}/{} property checks hold", checks.len()),
        details: checks
            .into_iter()
            .map(|(name, c)| match c {
                Ok(m) => format!("{name}: ok, {m}"),
                Err(m) => format!("{name}: FAILED, {m}"),
            })
            .collect(),
    }
}

fn predictive_direction(s: &FitSettings) -> Outcome {
    let design = NeuralEmDesign { n: 1000, theta: 0.5, risk: RiskKind::NonMonotonic, censoring: 0.25 };
    let seed = SEED + 6;
    let rate = design_censoring_rate(&design.sim_config(seed)).expect("censoring rate");
    let mut parametric = s.clone();
    parametric.kind = ModelKind::Parametric;
    let mut wins = 0;
    let mut details = Vec::new();
    for r in 0..10u64 {
        let sim = simulate_with_rate(&design.sim_config(derive_seed(seed, r)), rate).expect("simulate");
        let neural = s.reseeded(seed, r);
        let cv_n = cross_validate(&sim.data, &neural, 5, 1.0, derive_seed(seed, r)).expect("neural cv");
        let cv_p = cross_validate(&sim.data, &parametric, 5, 1.0, derive_seed(seed, r)).expect("parametric cv");
        let win = cv_n.mean < cv_p.mean;
        wins += win as usize;
        details.push(format!("seed {r}: neural {:.4} parametric {:.4}", cv_n.mean, cv_p.mean));
    }
    Outcome {
        pass: wins >= 8,
        summary: format!("neural 5-fold CV iBBS below parametric in {wins}/10 seeds (need 8)"),
        details,
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a filter
    // argument that matches nothing here skips the report.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let s = settings();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("BBS validation", Box::new(bbs_validation)),
        ("frailty-variance recovery", Box::new({
            let s = s.clone();
            move || theta_recovery(&s)
        })),
        ("MISE ordering", Box::new({
            let s = s.clone();
            move || mise_ordering(&s)
        })),
        ("baseline-hazard consistency", Box::new({
            let s = s.clone();
            move || baseline_consistency(&s)
        })),
        ("property suite", Box::new(property_suite)),
        ("predictive direction", Box::new({
            let s = s.clone();
            move || predictive_direction(&s)
        })),
    ];
    let mut verdicts = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} ({name}): {}", i + 1, out.summary);
        for d in &out.details {
            println!("    {d}");
        }
        println!("    elapsed {:.1}s", start.elapsed().as_secs_f64());
        verdicts.push(out.pass);
    }
    let passed = verdicts.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
}
