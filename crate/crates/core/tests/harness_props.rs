mod common;

use ssf_core::harness::{
    check_case1, check_shell_gaps, corrupt, derive_seed, render_csv, run_experiment,
    sample_admissible, shell_gaps_from_trace, Case1Branch, RuleKind, TrialConfig,
};
use ssf_core::potential::sample_perturbation;
use ssf_core::repair::repair_traced;
use ssf_core::{FillRule, NnSft, PerturbedPotential, Rect};

#[test]
fn hundred_trials_pass_at_n24() {
    let mut cfg = TrialConfig::new(NnSft::hard_square(), 24);
    cfg.trials = 100;
    cfg.seed = 2024;
    cfg.jobs = 4;
    let exp = run_experiment(&cfg).unwrap();
    for r in &exp.reports {
        assert!(
            r.hypothesis_holds() && r.total.passed() && r.case1_pass() && r.repair.passed(),
            "seed {}",
            r.seed
        );
        assert!(r.live_shells_pass(), "seed {}", r.seed);
    }
}

#[test]
fn original_shell_counts_can_overstate_the_gain() {
    // an outer bad site whose only forbidden pair points inward is cleaned
    // when the inner shell is filled, so its own shell gains nothing
    let mut cfg = TrialConfig::new(NnSft::hard_square(), 24);
    cfg.trials = 100;
    cfg.seed = 2024;
    let exp = run_experiment(&cfg).unwrap();
    let short: Vec<_> = exp
        .reports
        .iter()
        .flat_map(|r| r.per_shell.iter())
        .filter(|s| !s.passed())
        .collect();
    assert!(!short.is_empty());
    assert!(short.iter().all(|s| s.live_bad < s.bad));
}

#[test]
fn zero_corruption_is_admissible_only() {
    for sft in [NnSft::hard_square(), NnSft::checkerboard(6).unwrap()] {
        let mut cfg = TrialConfig::new(sft, 10);
        cfg.corrupt_rate = 0.0;
        cfg.trials = 10;
        let exp = run_experiment(&cfg).unwrap();
        for r in &exp.reports {
            assert_eq!(r.bad_total, 0);
            assert_eq!(r.case1_status(), "admissible");
            assert!(r.per_shell.iter().all(|s| s.bad == 0));
            assert!(r.all_pass());
        }
    }
}

#[test]
fn experiments_are_deterministic_and_job_invariant() {
    let mut cfg = TrialConfig::new(NnSft::checkerboard(5).unwrap(), 8);
    cfg.trials = 24;
    cfg.seed = 9;
    cfg.rule = RuleKind::Random;
    cfg.jobs = 1;
    let serial = render_csv(&run_experiment(&cfg).unwrap());
    assert_eq!(serial, render_csv(&run_experiment(&cfg).unwrap()));
    for jobs in [2, 3, 8] {
        cfg.jobs = jobs;
        assert_eq!(
            serial,
            render_csv(&run_experiment(&cfg).unwrap()),
            "jobs={jobs}"
        );
    }
    cfg.seed = 10;
    assert_ne!(serial, render_csv(&run_experiment(&cfg).unwrap()));
}

#[test]
fn incremental_shell_gaps_match_full_sums() {
    let sfts = [NnSft::hard_square(), NnSft::checkerboard(7).unwrap()];
    for (k, sft) in sfts.iter().enumerate() {
        for t in 0..10u64 {
            let n = 6 + t as u32;
            let clean = sample_admissible(sft, n + 2, t).unwrap();
            let x = corrupt(&clean, sft.q(), 0.3, t + 100).unwrap();
            let h = sample_perturbation(1.0 / 384.0, 8, sft.q(), derive_seed(t, k as u64)).unwrap();
            let g = PerturbedPotential::new(sft.clone(), h).unwrap();
            let trace = repair_traced(&x, sft, n, FillRule::Smallest).unwrap();
            let fast = shell_gaps_from_trace(&g, &trace, n).unwrap();
            let full =
                check_shell_gaps(&g, &trace.repair.shells, &trace.intermediates(), n).unwrap();
            assert_eq!(fast.len(), full.len());
            for (a, b) in fast.iter().zip(&full) {
                assert_eq!((a.radius, a.bad, a.live_bad), (b.radius, b.bad, b.live_bad));
                assert!((a.improvement - b.improvement).abs() < 1e-9);
                assert!(a.live_bad <= a.bad);
                assert!(a.live_margin(g.certified_norm_gap) >= 0.0);
            }
        }
    }
}

#[test]
fn dense_bad_windows_meet_case_one() {
    // all ones in hard square: every site is bad
    let hs = NnSft::hard_square();
    let ones = ssf_core::Window::filled(Rect::centered(12), 1);
    for s in 0..20 {
        let h = sample_perturbation(1.0 / 384.0, 64, 2, s).unwrap();
        let g = PerturbedPotential::new(hs.clone(), h).unwrap();
        let c = check_case1(&g, &ones, &Rect::centered(10)).unwrap();
        assert!(matches!(c.branch, Case1Branch::Bad { .. }));
        assert_eq!(c.bad_fraction, 1.0);
        assert!(c.passed());
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = TrialConfig::new(NnSft::checkerboard(3).unwrap(), 4);
    assert!(run_experiment(&cfg).is_err());
    cfg = TrialConfig::new(NnSft::hard_square(), 4);
    cfg.cap = 0.01;
    assert!(run_experiment(&cfg).is_err());
    cfg.allow_out_of_hypothesis = true;
    let exp = run_experiment(&cfg).unwrap();
    assert!(exp.reports.iter().any(|r| !r.hypothesis_holds()));
}
