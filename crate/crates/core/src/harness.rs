//! Experiment harness: sample an admissible window, corrupt it, draw a
//! perturbation, repair, and check every inequality of the stability argument
//! on the result.
//!
//! All bounds use the certified gap `||f - g||_Lip` of the sampled `g` in
//! place of the nominal epsilon, which only tightens them.
//!
//! Constants of the total inequality: the ring `Λ_{N+1} \ Λ_N` has `8N + 8`
//! sites, so the truncation term is `2 (8N + 8)`, and the per-shell constant
//! is summed over the `N + 1` shells `0..=N`, giving `112 eps (N + 1)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{shell_sites, Rect, Site, Symbol, Window};
use crate::potential::{
    birkhoff_sum, eval_potential, sample_perturbation, PerturbedPotential, PATTERN_OFFSETS,
};
use crate::repair::{repair_traced, FillRule, RepairTrace, ShellDecomposition};
use crate::sft::{check_ssf, count_bad, is_bad, violations, Neighborhood, NnSft};

/// splitmix64 finalizer over `seed + stream * golden`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SAMPLE: u64 = 0;
const STREAM_CORRUPT: u64 = 1;
const STREAM_PERTURB: u64 = 2;
const STREAM_FILL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RuleKind {
    #[default]
    Smallest,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub sft: NnSft,
    /// Box radius `N`; Birkhoff sums run over `Λ_N`.
    pub n: u32,
    pub epsilon: f64,
    pub cap: f64,
    pub corrupt_rate: f64,
    pub support: usize,
    pub seed: u64,
    pub trials: usize,
    pub rule: RuleKind,
    /// Permit `5 * cap > epsilon`.
    pub allow_out_of_hypothesis: bool,
    pub jobs: usize,
}

impl TrialConfig {
    pub fn new(sft: NnSft, n: u32) -> Self {
        TrialConfig {
            sft,
            n,
            epsilon: 1.0 / 64.0,
            cap: 1.0 / 384.0,
            corrupt_rate: 0.15,
            support: 8,
            seed: 0,
            trials: 1,
            rule: RuleKind::Smallest,
            allow_out_of_hypothesis: false,
            jobs: 1,
        }
    }

    /// Window radius `N + 2`: shell `N` reads one ring further out and the
    /// potential reads `Λ_1` around each summed site.
    pub fn window_radius(&self) -> u32 {
        self.n + 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cap must be positive, got {}",
                self.cap
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.allow_out_of_hypothesis && 5.0 * self.cap > self.epsilon {
            return Err(Error::InvalidConfig(format!(
                "5 * cap = {} exceeds epsilon = {}",
                5.0 * self.cap,
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.corrupt_rate) {
            return Err(Error::InvalidConfig(format!(
                "corrupt rate {} outside [0, 1]",
                self.corrupt_rate
            )));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        if !check_ssf(&self.sft).ssf {
            return Err(Error::NotSsf);
        }
        Ok(())
    }
}

/// Locally admissible window on `Λ_radius`, built by a raster sweep from the
/// bottom row up, left to right. Each site draws uniformly among the symbols
/// compatible with its already-filled west and south neighbors.
pub fn sample_admissible(sft: &NnSft, radius: u32, seed: u64) -> Result<Window> {
    if !check_ssf(sft).ssf {
        return Err(Error::NotSsf);
    }
    let domain = Rect::centered(radius);
    let mut w = Window::filled(domain, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = radius as i32;
    for y in -r..=r {
        for x in -r..=r {
            let u = Site::new(x, y);
            let nb = Neighborhood {
                west: (x > -r).then(|| w.get(Site::new(x - 1, y)).unwrap()),
                south: (y > -r).then(|| w.get(Site::new(x, y - 1)).unwrap()),
                ..Default::default()
            };
            let a = *sft
                .compatible_symbols(&nb)
                .choose(&mut rng)
                .ok_or(Error::SsfContractViolated(u))?;
            w.set(u, a)?;
        }
    }
    if let Some(v) = violations(&w, sft)?.first() {
        return Err(Error::Precondition(format!(
            "sampled window has a violation at {}",
            v.site
        )));
    }
    Ok(w)
}

/// Independently resamples each site uniformly from `0..q` with probability
/// `rate`.
pub fn corrupt(w: &Window, q: u32, rate: f64, seed: u64) -> Result<Window> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "corrupt rate {rate} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Window::from_fn(*w.domain(), |u| {
        if rng.gen_bool(rate) {
            rng.gen_range(0..q) as Symbol
        } else {
            w.get(u).unwrap()
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Case1Branch {
    /// Bad fraction at least 1/2: the average must not exceed `bound`.
    Bad {
        bound: f64,
    },
    /// No bad site: the average must be at least `bound`.
    Admissible {
        bound: f64,
    },
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case1Check {
    pub bad_count: usize,
    pub bad_fraction: f64,
    pub average: f64,
    pub gap: f64,
    pub branch: Case1Branch,
}

impl Case1Check {
    /// Signed slack of the applicable inequality; `None` when not applicable.
    pub fn margin(&self) -> Option<f64> {
        match self.branch {
            Case1Branch::Bad { bound } => Some(bound - self.average),
            Case1Branch::Admissible { bound } => Some(self.average - bound),
            Case1Branch::NotApplicable => None,
        }
    }

    pub fn passed(&self) -> bool {
        self.margin().is_none_or(|m| m >= 0.0)
    }

    pub fn applicable(&self) -> bool {
        self.margin().is_some()
    }
}

/// Bounds on the normalized Birkhoff average over `region`:
/// `avg <= -bad_fraction + gap` when `bad_fraction >= 1/2`, and
/// `avg >= -gap` when no site of the region is bad.
pub fn check_case1(g: &PerturbedPotential, w: &Window, region: &Rect) -> Result<Case1Check> {
    let sum = birkhoff_sum(g, w, region)?;
    let bad_count = count_bad(w, region, g.sft())?;
    let size = region.len() as f64;
    let bad_fraction = bad_count as f64 / size;
    let gap = g.certified_norm_gap;
    let branch = if bad_count == 0 {
        Case1Branch::Admissible { bound: -gap }
    } else if 2 * bad_count >= region.len() {
        Case1Branch::Bad {
            bound: -bad_fraction + gap,
        }
    } else {
        Case1Branch::NotApplicable
    };
    Ok(Case1Check {
        bad_count,
        bad_fraction,
        average: sum / size,
        gap,
        branch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellGap {
    pub radius: u32,
    /// `|S^i|`, bad sites of the shell in the original window.
    pub bad: usize,
    /// Bad sites of the shell still present in `x^(i-1)`. Repairing an inner
    /// shell can clean an outer site whose only forbidden pair pointed
    /// inward, so this may be smaller than `bad`.
    pub live_bad: usize,
    /// `S_{Λ_N} g(x^(i)) - S_{Λ_N} g(x^(i-1))`
    pub improvement: f64,
    /// `(1 - 32 eps) |S^i| - 112 eps`
    pub required: f64,
}

impl ShellGap {
    pub fn margin(&self) -> f64 {
        self.improvement - self.required
    }

    pub fn passed(&self) -> bool {
        self.margin() >= 0.0
    }

    /// Slack of the same bound with `live_bad` in place of `|S^i|`.
    pub fn live_margin(&self, eps: f64) -> f64 {
        self.improvement - shell_requirement(eps, self.live_bad)
    }
}

fn live_bad_on_shell(w: &Window, sft: &NnSft, i: u32) -> Result<usize> {
    let mut n = 0;
    for u in shell_sites(i) {
        n += is_bad(w, u, sft)? as usize;
    }
    Ok(n)
}

pub fn shell_requirement(eps: f64, bad: usize) -> f64 {
    (1.0 - 32.0 * eps) * bad as f64 - 112.0 * eps
}

/// Per-shell check from the full intermediate sequence `x^(-1), ..., x^(N)`.
pub fn check_shell_gaps(
    g: &PerturbedPotential,
    shells: &[ShellDecomposition],
    intermediates: &[Window],
    n: u32,
) -> Result<Vec<ShellGap>> {
    if intermediates.len() != shells.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: shells.len() + 1,
            got: intermediates.len(),
        });
    }
    let region = Rect::centered(n);
    let sums = intermediates
        .iter()
        .map(|w| birkhoff_sum(g, w, &region))
        .collect::<Result<Vec<_>>>()?;
    shells
        .iter()
        .zip(sums.windows(2))
        .zip(intermediates)
        .map(|((s, pair), before)| {
            Ok(ShellGap {
                radius: s.radius,
                bad: s.total_bad,
                live_bad: live_bad_on_shell(before, g.sft(), s.radius)?,
                improvement: pair[1] - pair[0],
                required: shell_requirement(g.certified_norm_gap, s.total_bad),
            })
        })
        .collect()
}

/// Same numbers as [`check_shell_gaps`], computed from the rewrites alone:
/// only sites whose `Λ_1` patch meets a rewritten site change value.
pub fn shell_gaps_from_trace(
    g: &PerturbedPotential,
    trace: &RepairTrace,
    n: u32,
) -> Result<Vec<ShellGap>> {
    let shells = &trace.repair.shells;
    if trace.rewrites.len() != shells.len() {
        return Err(Error::LengthMismatch {
            expected: shells.len(),
            got: trace.rewrites.len(),
        });
    }
    let region = Rect::centered(n);
    let mut cur = trace.original.clone();
    let mut out = Vec::with_capacity(shells.len());
    for (shell, rewrites) in shells.iter().zip(&trace.rewrites) {
        let touched: BTreeSet<Site> = rewrites
            .iter()
            .flat_map(|rw| PATTERN_OFFSETS.iter().map(move |&o| rw.site - o))
            .filter(|u| region.contains(*u))
            .collect();
        let live_bad = live_bad_on_shell(&cur, g.sft(), shell.radius)?;
        let mut before = 0.0;
        for &u in &touched {
            before += eval_potential(g, &cur, u)?;
        }
        for rw in rewrites {
            cur.set(rw.site, rw.new)?;
        }
        let mut after = 0.0;
        for &u in &touched {
            after += eval_potential(g, &cur, u)?;
        }
        out.push(ShellGap {
            radius: shell.radius,
            bad: shell.total_bad,
            live_bad,
            improvement: after - before,
            required: shell_requirement(g.certified_norm_gap, shell.total_bad),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalCheck {
    pub n: u32,
    pub eps: f64,
    pub bad_total: usize,
    pub bad_fraction: f64,
    /// `S_{Λ_N} g(x) - S_{Λ_N} g(x~)`
    pub total_gap: f64,
    /// `112 eps (N+1) + 2 (8N+8) + (-1 + 32 eps) sum |S^i|`
    pub total_bound: f64,
    /// `avg g(x~) - avg g(x)`
    pub improvement: f64,
}

impl TotalCheck {
    pub fn constant_term(&self) -> f64 {
        total_constant(self.eps, self.n)
    }

    fn volume(&self) -> f64 {
        let side = 2.0 * self.n as f64 + 1.0;
        side * side
    }

    /// Normalized requirement `(1 - 32 eps) bad_fraction - C / (2N+1)^2`.
    pub fn required_improvement(&self) -> f64 {
        (1.0 - 32.0 * self.eps) * self.bad_fraction - self.constant_term() / self.volume()
    }

    /// The same requirement with the factor `1/2` of `eps = 1/64`.
    pub fn required_improvement_half(&self) -> f64 {
        0.5 * self.bad_fraction - self.constant_term() / self.volume()
    }

    /// The bound says nothing beyond `improvement >= (negative number)`.
    pub fn vacuous(&self) -> bool {
        self.required_improvement() <= 0.0
    }

    pub fn passed(&self) -> bool {
        self.total_gap <= self.total_bound
    }
}

/// `112 eps (N+1) + 2 (8N+8)`
pub fn total_constant(eps: f64, n: u32) -> f64 {
    112.0 * eps * (n as f64 + 1.0) + 2.0 * (8.0 * n as f64 + 8.0)
}

pub fn check_total(
    g: &PerturbedPotential,
    original: &Window,
    repaired: &Window,
    shells: &[ShellDecomposition],
    n: u32,
) -> Result<TotalCheck> {
    let region = Rect::centered(n);
    let s_orig = birkhoff_sum(g, original, &region)?;
    let s_rep = birkhoff_sum(g, repaired, &region)?;
    let eps = g.certified_norm_gap;
    let bad_total: usize = shells.iter().map(|s| s.total_bad).sum();
    let volume = region.len() as f64;
    Ok(TotalCheck {
        n,
        eps,
        bad_total,
        bad_fraction: bad_total as f64 / volume,
        total_gap: s_orig - s_rep,
        total_bound: total_constant(eps, n) + (-1.0 + 32.0 * eps) * bad_total as f64,
        improvement: (s_rep - s_orig) / volume,
    })
}

/// Structural repair guarantees on `Λ_N`, checked against the original bad set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepairCheck {
    /// Bad sites of the repaired window inside `Λ_N`.
    pub remaining_bad: usize,
    /// Rewritten sites that were not bad in the original window.
    pub outside_bad_set: usize,
    /// `S f(repaired) - S f(original)` equals the original bad count in `Λ_N`.
    pub identity_holds: bool,
}

impl RepairCheck {
    pub fn passed(&self) -> bool {
        self.remaining_bad == 0 && self.outside_bad_set == 0 && self.identity_holds
    }
}

pub fn check_repair(
    sft: &NnSft,
    original: &Window,
    repaired: &Window,
    shells: &[ShellDecomposition],
    n: u32,
) -> Result<RepairCheck> {
    let region = Rect::centered(n);
    let remaining_bad = count_bad(repaired, &region, sft)?;
    let before = count_bad(original, &region, sft)?;
    let bad: BTreeSet<Site> = shells.iter().flat_map(|s| s.sites()).collect();
    let outside_bad_set = original
        .diff_sites(repaired)?
        .into_iter()
        .filter(|u| !bad.contains(u))
        .count();
    let f = PerturbedPotential::unperturbed(sft.clone());
    let sf_gain = birkhoff_sum(&f, repaired, &region)? - birkhoff_sum(&f, original, &region)?;
    let identity_holds = sf_gain == (before - remaining_bad) as f64 && before == bad.len();
    Ok(RepairCheck {
        remaining_bad,
        outside_bad_set,
        identity_holds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub n: u32,
    pub q: u32,
    pub nominal_epsilon: f64,
    pub certified_gap: f64,
    pub bad_total: usize,
    pub bad_fraction: f64,
    pub per_shell: Vec<ShellGap>,
    pub total: TotalCheck,
    pub case1_corrupted: Case1Check,
    pub case1_repaired: Case1Check,
    pub repair: RepairCheck,
}

impl TrialReport {
    pub fn hypothesis_holds(&self) -> bool {
        self.certified_gap < self.nominal_epsilon
    }

    pub fn min_shell_margin(&self) -> f64 {
        self.per_shell
            .iter()
            .map(|s| s.margin())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn shells_pass(&self) -> bool {
        self.per_shell.iter().all(|s| s.passed())
    }

    pub fn min_live_shell_margin(&self) -> f64 {
        self.per_shell
            .iter()
            .map(|s| s.live_margin(self.certified_gap))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-shell bound with bad sites counted in the partially repaired window.
    pub fn live_shells_pass(&self) -> bool {
        self.min_live_shell_margin() >= 0.0
    }

    pub fn case1_pass(&self) -> bool {
        self.case1_corrupted.passed() && self.case1_repaired.passed()
    }

    pub fn case1_status(&self) -> &'static str {
        if !self.case1_pass() {
            "fail"
        } else if matches!(self.case1_corrupted.branch, Case1Branch::Bad { .. }) {
            "bad+admissible"
        } else {
            "admissible"
        }
    }

    /// Every flag recomputed from the recorded numbers.
    pub fn all_pass(&self) -> bool {
        self.hypothesis_holds()
            && self.shells_pass()
            && self.total.passed()
            && self.case1_pass()
            && self.repair.passed()
    }
}

fn trial_rule(kind: RuleKind, trial_seed: u64) -> FillRule {
    match kind {
        RuleKind::Smallest => FillRule::Smallest,
        RuleKind::Random => FillRule::Random {
            seed: derive_seed(trial_seed, STREAM_FILL),
        },
    }
}

/// One full pipeline run for trial `index`.
pub fn run_trial(cfg: &TrialConfig, index: usize) -> Result<TrialReport> {
    let seed = derive_seed(cfg.seed, index as u64);
    let sft = &cfg.sft;
    let clean = sample_admissible(sft, cfg.window_radius(), derive_seed(seed, STREAM_SAMPLE))?;
    let x = corrupt(
        &clean,
        sft.q(),
        cfg.corrupt_rate,
        derive_seed(seed, STREAM_CORRUPT),
    )?;
    let h = sample_perturbation(
        cfg.cap,
        cfg.support,
        sft.q(),
        derive_seed(seed, STREAM_PERTURB),
    )?;
    let g = PerturbedPotential::new(sft.clone(), h)?;
    let trace = repair_traced(&x, sft, cfg.n, trial_rule(cfg.rule, seed))?;
    let repaired = &trace.repair.window;
    let shells = &trace.repair.shells;
    let region = Rect::centered(cfg.n);

    let per_shell = shell_gaps_from_trace(&g, &trace, cfg.n)?;
    let total = check_total(&g, &x, repaired, shells, cfg.n)?;
    Ok(TrialReport {
        trial: index,
        seed,
        n: cfg.n,
        q: sft.q(),
        nominal_epsilon: cfg.epsilon,
        certified_gap: g.certified_norm_gap,
        bad_total: total.bad_total,
        bad_fraction: total.bad_fraction,
        per_shell,
        total,
        case1_corrupted: check_case1(&g, &x, &region)?,
        case1_repaired: check_case1(&g, repaired, &region)?,
        repair: check_repair(sft, &x, repaired, shells, cfg.n)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub passed: usize,
    pub non_vacuous: usize,
    pub worst_shell_margin: f64,
    pub worst_total_slack: f64,
    pub failed_seeds: Vec<u64>,
}

impl Summary {
    pub fn from_reports(reports: &[TrialReport]) -> Self {
        Summary {
            trials: reports.len(),
            passed: reports.iter().filter(|r| r.all_pass()).count(),
            non_vacuous: reports.iter().filter(|r| !r.total.vacuous()).count(),
            worst_shell_margin: reports
                .iter()
                .map(|r| r.min_shell_margin())
                .fold(f64::INFINITY, f64::min),
            worst_total_slack: reports
                .iter()
                .map(|r| r.total.total_bound - r.total.total_gap)
                .fold(f64::INFINITY, f64::min),
            failed_seeds: reports
                .iter()
                .filter(|r| !r.all_pass())
                .map(|r| r.seed)
                .collect(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed == self.trials
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub reports: Vec<TrialReport>,
    pub summary: Summary,
}

/// Runs `cfg.trials` independent trials on `cfg.jobs` threads; reports are
/// ordered by trial index whatever the scheduling.
pub fn run_experiment(cfg: &TrialConfig) -> Result<Experiment> {
    cfg.validate()?;
    let reports = if cfg.jobs == 1 {
        (0..cfg.trials)
            .map(|i| run_trial(cfg, i))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|i| run_trial(cfg, i))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let summary = Summary::from_reports(&reports);
    Ok(Experiment { reports, summary })
}

pub const CSV_HEADER: &str =
    "trial,seed,N,q,bad_total,bad_fraction,certified_gap,min_shell_margin,total_gap,total_bound,case1_status,all_pass";

pub fn csv_row(r: &TrialReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.trial,
        r.seed,
        r.n,
        r.q,
        r.bad_total,
        r.bad_fraction,
        r.certified_gap,
        r.min_shell_margin(),
        r.total_gap(),
        r.total.total_bound,
        r.case1_status(),
        r.all_pass()
    )
}

impl TrialReport {
    pub fn total_gap(&self) -> f64 {
        self.total.total_gap
    }
}

pub fn render_csv(exp: &Experiment) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &exp.reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    let s = &exp.summary;
    let _ = write!(
        out,
        "# summary: trials={} passed={} non_vacuous={} worst_shell_margin={} worst_total_slack={}",
        s.trials, s.passed, s.non_vacuous, s.worst_shell_margin, s.worst_total_slack
    );
    if !s.failed_seeds.is_empty() {
        let seeds: Vec<String> = s.failed_seeds.iter().map(|x| x.to_string()).collect();
        let _ = write!(out, " failed_seeds={}", seeds.join(";"));
    }
    out.push('\n');
    out
}
