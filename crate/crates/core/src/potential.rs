//! Potentials on windows: the penalty function `f`, range-one perturbations
//! `h`, the perturbed potential `g = f + h`, and Birkhoff sums.
//!
//! # Lipschitz norm
//!
//! `||g||_Lip = ||g||_sup + Lip(g)` with respect to the metric
//! `d(x, y) = 2^-i`, `i` the smallest infinity-norm of a disagreement site.
//!
//! A range-one function depends only on the `3 x 3` patch `x|Λ_1`. Two
//! configurations with equal patches give equal values; otherwise they differ
//! somewhere in `Λ_1`, so `d = 1` (they differ at the origin) or `d = 1/2`.
//! The seminorm is therefore a finite maximum over ordered pattern pairs of
//! `|c_p - c_q| * 2^i(p, q)`, where `i(p, q)` is 0 or 1, and it is attained by
//! configurations agreeing outside `Λ_1`. Patterns missing from the
//! coefficient table carry the value 0 and take part in the maximum.
//!
//! With every coefficient in `[-cap, cap]`, `Lip(h) <= 2 * (2 * cap) = 4 * cap`
//! and `||h||_sup <= cap`, which gives the analytic bound `5 * cap`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{parse_err, Error, Result};
use crate::lattice::{metric_exact, Distance, Rect, Site, Symbol, Window, ORIGIN};
use crate::sft::{is_bad, NnSft};

/// A `3 x 3` patch around a site, row-major with the top row first.
pub type Pattern = [Symbol; 9];

/// Offsets of the pattern entries, in pattern order.
pub const PATTERN_OFFSETS: [Site; 9] = [
    Site::new(-1, 1),
    Site::new(0, 1),
    Site::new(1, 1),
    Site::new(-1, 0),
    Site::new(0, 0),
    Site::new(1, 0),
    Site::new(-1, -1),
    Site::new(0, -1),
    Site::new(1, -1),
];

const CENTER: usize = 4;

/// Largest coefficient table the exact seminorm will enumerate.
pub const PATTERN_LIMIT: usize = 10_000;

pub fn pattern_at(w: &Window, u: Site) -> Result<Pattern> {
    let mut p = [0; 9];
    for (slot, off) in p.iter_mut().zip(PATTERN_OFFSETS) {
        *slot = w.at(u + off)?;
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PenaltyPotential {
    pub sft: NnSft,
}

impl PenaltyPotential {
    pub fn new(sft: NnSft) -> Self {
        PenaltyPotential { sft }
    }

    pub fn eval(&self, w: &Window, u: Site) -> Result<f64> {
        Ok(if is_bad(w, u, &self.sft)? { -1.0 } else { 0.0 })
    }

    /// Value on a `3 x 3` pattern (centre, its right and upper neighbors).
    pub fn on_pattern(&self, p: &Pattern) -> f64 {
        let (c, right, up) = (p[CENTER], p[5], p[1]);
        if self.sft.h_forbidden(c, right) || self.sft.v_forbidden(c, up) {
            -1.0
        } else {
            0.0
        }
    }
}

/// A function of `x|Λ_1`, given by a sparse coefficient table; patterns not
/// in the table map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeOnePerturbation {
    coeffs: BTreeMap<Pattern, f64>,
    cap: f64,
}

impl RangeOnePerturbation {
    pub fn zero(cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cap must be positive, got {cap}"
            )));
        }
        Ok(RangeOnePerturbation {
            coeffs: BTreeMap::new(),
            cap,
        })
    }

    pub fn insert(&mut self, p: Pattern, c: f64) -> Result<()> {
        if !(c.abs() <= self.cap) {
            return Err(Error::InvalidConfig(format!(
                "coefficient {c} exceeds cap {}",
                self.cap
            )));
        }
        self.coeffs.insert(p, c);
        Ok(())
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn coeffs(&self) -> &BTreeMap<Pattern, f64> {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn on_pattern(&self, p: &Pattern) -> f64 {
        self.coeffs.get(p).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, w: &Window, u: Site) -> Result<f64> {
        if self.coeffs.is_empty() {
            // still enforce the margin contract
            for off in PATTERN_OFFSETS {
                w.at(u + off)?;
            }
            return Ok(0.0);
        }
        Ok(self.on_pattern(&pattern_at(w, u)?))
    }

    pub fn sup_norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut h: Option<RangeOnePerturbation> = None;
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let float = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(ln, format!("bad number `{s}`")))
            };
            match toks[0] {
                "cap" => {
                    if toks.len() != 2 || h.is_some() {
                        return Err(parse_err(ln, "expected a single `cap <float>` line"));
                    }
                    h = Some(
                        RangeOnePerturbation::zero(float(toks[1])?)
                            .map_err(|e| parse_err(ln, e.to_string()))?,
                    );
                }
                "pattern" => {
                    let h = h
                        .as_mut()
                        .ok_or_else(|| parse_err(ln, "`pattern` before `cap`"))?;
                    if toks.len() != 11 {
                        return Err(parse_err(
                            ln,
                            "expected `pattern <9 symbols> <coefficient>`",
                        ));
                    }
                    let mut p = [0; 9];
                    for (slot, tok) in p.iter_mut().zip(&toks[1..10]) {
                        *slot = tok
                            .parse()
                            .map_err(|_| parse_err(ln, format!("bad symbol `{tok}`")))?;
                    }
                    if h.coeffs.contains_key(&p) {
                        return Err(parse_err(ln, "duplicate pattern"));
                    }
                    h.insert(p, float(toks[10])?)
                        .map_err(|e| parse_err(ln, e.to_string()))?;
                }
                other => return Err(parse_err(ln, format!("unknown keyword `{other}`"))),
            }
        }
        h.ok_or_else(|| parse_err(1, "missing `cap` line"))
    }

    pub fn render(&self) -> String {
        let mut out = format!("cap {:?}\n", self.cap);
        for (p, c) in &self.coeffs {
            let syms: Vec<String> = p.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("pattern {} {:?}\n", syms.join(" "), c));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzNorm {
    pub sup_norm: f64,
    pub seminorm: f64,
}

impl LipschitzNorm {
    pub fn total(&self) -> f64 {
        self.sup_norm + self.seminorm
    }
}

/// `q^k` as a float-free count, saturating.
fn pow_count(q: u32, k: u32) -> u128 {
    (q as u128).checked_pow(k).unwrap_or(u128::MAX)
}

/// Exact Lipschitz seminorm of the range-one function with the given table
/// (absent patterns are 0) over the alphabet `0..q`.
pub fn table_seminorm(coeffs: &BTreeMap<Pattern, f64>, q: u32) -> Result<f64> {
    if coeffs.len() > PATTERN_LIMIT {
        return Err(Error::TooManyPatterns {
            count: coeffs.len(),
            limit: PATTERN_LIMIT,
        });
    }
    if let Some(bad) = coeffs.keys().flatten().find(|&&s| s as u32 >= q) {
        return Err(Error::InvalidConfig(format!(
            "pattern symbol {bad} out of range for q = {q}"
        )));
    }
    let per_center = pow_count(q, 8);
    // (min, max) over all patterns sharing a centre symbol
    let mut ranges: BTreeMap<Symbol, (f64, f64, u128)> = BTreeMap::new();
    for (p, &c) in coeffs {
        let e = ranges.entry(p[CENTER]).or_insert((c, c, 0));
        e.0 = e.0.min(c);
        e.1 = e.1.max(c);
        e.2 += 1;
    }
    let groups: Vec<(f64, f64)> = (0..q as Symbol)
        .map(|a| match ranges.get(&a) {
            Some(&(lo, hi, n)) if n == per_center => (lo, hi),
            Some(&(lo, hi, _)) => (lo.min(0.0), hi.max(0.0)),
            None => (0.0, 0.0),
        })
        .collect();

    // same centre: the pair differs only on the outer ring, d = 1/2
    let same = groups.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    // different centres: d = 1
    let mut cross = 0.0f64;
    for (a, &(_, hi)) in groups.iter().enumerate() {
        for (b, &(lo, _)) in groups.iter().enumerate() {
            if a != b {
                cross = cross.max(hi - lo);
            }
        }
    }
    Ok((2.0 * same).max(cross))
}

pub fn lipschitz_seminorm_exact(h: &RangeOnePerturbation, q: u32) -> Result<f64> {
    table_seminorm(&h.coeffs, q)
}

/// `||h||_sup + Lip(h)`, exact when the table is small enough and otherwise
/// the analytic bound `cap + 4 * cap`.
pub fn lipschitz_norm(h: &RangeOnePerturbation, q: u32) -> Result<(LipschitzNorm, bool)> {
    match lipschitz_seminorm_exact(h, q) {
        Ok(seminorm) => Ok((
            LipschitzNorm {
                sup_norm: h.sup_norm(),
                seminorm,
            },
            true,
        )),
        Err(Error::TooManyPatterns { .. }) => Ok((
            LipschitzNorm {
                sup_norm: h.cap,
                seminorm: 4.0 * h.cap,
            },
            false,
        )),
        Err(e) => Err(e),
    }
}

/// `g = f + h` with a certified upper bound on `||f - g||_Lip = ||h||_Lip`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPotential {
    pub f: PenaltyPotential,
    pub h: RangeOnePerturbation,
    pub certified_norm_gap: f64,
}

impl PerturbedPotential {
    pub fn new(sft: NnSft, h: RangeOnePerturbation) -> Result<Self> {
        let (norm, _) = lipschitz_norm(&h, sft.q())?;
        Ok(PerturbedPotential {
            f: PenaltyPotential::new(sft),
            h,
            certified_norm_gap: norm.total(),
        })
    }

    pub fn unperturbed(sft: NnSft) -> Self {
        PerturbedPotential {
            f: PenaltyPotential::new(sft),
            h: RangeOnePerturbation::zero(1.0).unwrap(),
            certified_norm_gap: 0.0,
        }
    }

    pub fn sft(&self) -> &NnSft {
        &self.f.sft
    }
}

pub fn certify_norm_gap(g: &PerturbedPotential) -> Result<f64> {
    Ok(lipschitz_norm(&g.h, g.sft().q())?.0.total())
}

/// `g(sigma^u x) = f + h` read off the window around `u`.
pub fn eval_potential(g: &PerturbedPotential, w: &Window, u: Site) -> Result<f64> {
    let fv = g.f.eval(w, u)?;
    Ok(fv + g.h.eval(w, u)?)
}

fn require_margin(w: &Window, region: &Rect) -> Result<()> {
    let need = region.inflate(1);
    if w.domain().contains_rect(&need) {
        return Ok(());
    }
    let corner = [
        Site::new(need.x0(), need.y0()),
        Site::new(need.x1(), need.y1()),
    ]
    .into_iter()
    .find(|u| !w.domain().contains(*u))
    .unwrap();
    Err(Error::InsufficientMargin(corner))
}

/// `S_T g = sum over u in T of g(sigma^u x)`, summed in global site order.
pub fn birkhoff_sum(g: &PerturbedPotential, w: &Window, region: &Rect) -> Result<f64> {
    require_margin(w, region)?;
    let mut total = 0.0;
    for u in region.sites() {
        total += eval_potential(g, w, u)?;
    }
    Ok(total)
}

/// Draws `support` distinct patterns uniformly from the `q^9` candidates and
/// coefficients uniformly from `[-cap, cap]`.
pub fn sample_perturbation(
    cap: f64,
    support: usize,
    q: u32,
    seed: u64,
) -> Result<RangeOnePerturbation> {
    let mut h = RangeOnePerturbation::zero(cap)?;
    let available = pow_count(q, 9);
    if support as u128 > available {
        return Err(Error::SupportTooLarge { support, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while h.len() < support {
        let mut p = [0; 9];
        for s in p.iter_mut() {
            *s = rng.gen_range(0..q) as Symbol;
        }
        if h.coeffs.contains_key(&p) {
            continue;
        }
        let c = rng.gen_range(-cap..=cap);
        h.insert(p, c)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLipschitzOutcome {
    pub checked: usize,
    /// Pairs agreeing on their whole domain; their distance is not exact.
    pub skipped: usize,
    pub failures: usize,
    /// Largest `|g(x) - g(y)| / (gap * d(x, y))` seen (0 when nothing checked).
    pub worst_ratio: f64,
}

impl LevelLipschitzOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Checks `|g(x) - g(y)| <= gap * d(x, y)` at the origin for window pairs on
/// the level set `f = level`.
pub fn check_level_lipschitz(
    g: &PerturbedPotential,
    pairs: &[(Window, Window)],
    level: i32,
) -> Result<LevelLipschitzOutcome> {
    if level != 0 && level != -1 {
        return Err(Error::Precondition(format!(
            "level must be 0 or -1, got {level}"
        )));
    }
    let gap = g.certified_norm_gap;
    let mut out = LevelLipschitzOutcome {
        checked: 0,
        skipped: 0,
        failures: 0,
        worst_ratio: 0.0,
    };
    for (k, (x, y)) in pairs.iter().enumerate() {
        for w in [x, y] {
            if g.f.eval(w, ORIGIN)? != level as f64 {
                return Err(Error::Precondition(format!(
                    "pair {k} is not on the level set f = {level}"
                )));
            }
        }
        let d = match metric_exact(x, y)? {
            Distance::Exact { radius } => 0.5f64.powi(radius as i32),
            Distance::AgreeOnDomain { .. } => {
                out.skipped += 1;
                continue;
            }
        };
        let lhs = (eval_potential(g, x, ORIGIN)? - eval_potential(g, y, ORIGIN)?).abs();
        let rhs = gap * d;
        out.checked += 1;
        if lhs > rhs {
            out.failures += 1;
        }
        if rhs > 0.0 {
            out.worst_ratio = out.worst_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            out.worst_ratio = f64::INFINITY;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::E1;

    fn zero_g(sft: NnSft) -> PerturbedPotential {
        PerturbedPotential::unperturbed(sft)
    }

    #[test]
    fn eval_cases() {
        let hs = NnSft::hard_square();
        let g = zero_g(hs.clone());
        let mut w = Window::filled(Rect::centered(2), 0);
        assert_eq!(eval_potential(&g, &w, ORIGIN), Ok(0.0));
        w.set(ORIGIN, 1).unwrap();
        w.set(E1, 1).unwrap();
        assert_eq!(eval_potential(&g, &w, ORIGIN), Ok(-1.0));

        let mut h = RangeOnePerturbation::zero(0.002).unwrap();
        h.insert([0; 9], 0.001).unwrap();
        let g = PerturbedPotential::new(hs, h).unwrap();
        let zero = Window::filled(Rect::centered(3), 0);
        for u in Rect::centered(2).sites() {
            assert_eq!(eval_potential(&g, &zero, u), Ok(0.001));
        }
        assert!(matches!(
            eval_potential(&g, &zero, Site::new(3, 0)),
            Err(Error::InsufficientMargin(_))
        ));
    }

    #[test]
    fn seminorm_single_pattern() {
        // one stored pattern; its ring-only neighbors are absent (value 0)
        let mut h = RangeOnePerturbation::zero(0.01).unwrap();
        h.insert([0, 0, 0, 0, 1, 0, 0, 0, 0], 0.003).unwrap();
        assert!((lipschitz_seminorm_exact(&h, 2).unwrap() - 0.006).abs() < 1e-15);
        assert_eq!(
            lipschitz_seminorm_exact(&RangeOnePerturbation::zero(1.0).unwrap(), 2),
            Ok(0.0)
        );
    }

    #[test]
    fn seminorm_of_penalty_is_two() {
        let pen = PenaltyPotential::new(NnSft::hard_square());
        let mut table = BTreeMap::new();
        for code in 0u32..512 {
            let mut p = [0; 9];
            for (k, s) in p.iter_mut().enumerate() {
                *s = ((code >> k) & 1) as Symbol;
            }
            table.insert(p, pen.on_pattern(&p));
        }
        assert_eq!(table_seminorm(&table, 2), Ok(2.0));
    }

    #[test]
    fn seminorm_guard() {
        let mut table = BTreeMap::new();
        for code in 0..=PATTERN_LIMIT as u32 {
            let mut p = [0; 9];
            for (k, s) in p.iter_mut().enumerate() {
                *s = ((code / 4u32.pow(k as u32)) % 4) as Symbol;
            }
            table.insert(p, 0.0);
        }
        assert!(matches!(
            table_seminorm(&table, 4),
            Err(Error::TooManyPatterns { .. })
        ));
    }

    #[test]
    fn certified_gap_values() {
        let g = zero_g(NnSft::hard_square());
        assert_eq!(certify_norm_gap(&g), Ok(0.0));
        let h = sample_perturbation(1.0 / 384.0, 12, 2, 5).unwrap();
        let g = PerturbedPotential::new(NnSft::hard_square(), h).unwrap();
        assert!(g.certified_norm_gap <= 5.0 / 384.0);
        assert!(g.certified_norm_gap < 1.0 / 64.0);
    }

    #[test]
    fn sampling_contract() {
        assert!(sample_perturbation(0.01, 0, 2, 1).unwrap().is_empty());
        assert_eq!(
            sample_perturbation(0.01, 7, 3, 9).unwrap(),
            sample_perturbation(0.01, 7, 3, 9).unwrap()
        );
        assert!(matches!(
            sample_perturbation(0.01, 2, 1, 0),
            Err(Error::SupportTooLarge { .. })
        ));
        assert_eq!(sample_perturbation(0.01, 1, 1, 0).unwrap().len(), 1);
        assert!(sample_perturbation(0.0, 1, 2, 0).is_err());
    }

    #[test]
    fn birkhoff_cases() {
        let hs = NnSft::hard_square();
        let g = zero_g(hs.clone());
        let ones = Window::filled(Rect::centered(3), 1);
        assert_eq!(birkhoff_sum(&g, &ones, &Rect::centered(2)), Ok(-25.0));
        let zero = Window::filled(Rect::centered(3), 0);
        assert_eq!(birkhoff_sum(&g, &zero, &Rect::centered(2)), Ok(0.0));
        assert!(matches!(
            birkhoff_sum(&g, &zero, &Rect::centered(3)),
            Err(Error::InsufficientMargin(_))
        ));

        let mut w = zero.clone();
        for (x, y) in [(-2, -2), (-2, -1), (0, 0), (1, 0), (1, 2), (1, 3)] {
            w.set(Site::new(x, y), 1).unwrap();
        }
        let expected = crate::sft::count_bad(&w, &Rect::centered(2), &hs).unwrap();
        assert_eq!(expected, 3);
        assert_eq!(birkhoff_sum(&g, &w, &Rect::centered(2)), Ok(-3.0));
    }

    #[test]
    fn perturbation_file_round_trip() {
        let h = sample_perturbation(1.0 / 384.0, 5, 3, 42).unwrap();
        let text = h.render();
        assert!(text.starts_with("cap 0.0026041666666666665\npattern "));
        assert_eq!(RangeOnePerturbation::parse(&text).unwrap(), h);
        assert!(matches!(
            RangeOnePerturbation::parse("cap 0.1\npattern 0 0 0 0 0 0 0 0 0 0.5\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            RangeOnePerturbation::parse("pattern 0 0 0 0 0 0 0 0 0 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn level_lipschitz_trivial_cases() {
        let hs = NnSft::hard_square();
        let w = Window::filled(Rect::centered(3), 0);
        let g = zero_g(hs.clone());
        let out = check_level_lipschitz(&g, &[(w.clone(), w.clone())], 0).unwrap();
        assert_eq!((out.checked, out.skipped, out.failures), (0, 1, 0));

        let mut v = w.clone();
        v.set(Site::new(1, 1), 1).unwrap();
        assert!(check_level_lipschitz(&g, &[(w.clone(), v)], 0).unwrap().passed());
        assert!(check_level_lipschitz(&g, &[(w.clone(), w)], -1).is_err());
    }
}
