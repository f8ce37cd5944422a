//! Shell-by-shell repair of an arbitrary window into one with no forbidden
//! pair inside `Λ_N`.
//!
//! For each radius `i = 0..=N` the bad sites of the ORIGINAL window on the
//! ring `Λ_i \ Λ_{i-1}` are split into four sides and then into maximal runs.
//! Corners `(±i, ±i)` belong to the top and bottom sides. Every run is
//! rewritten by a left-to-right (or bottom-to-top) sweep in which each site
//! receives a symbol compatible with its four current neighbors; single-site
//! fillability guarantees one exists. Because every rewrite respects all four
//! neighbors, a rewrite never creates a forbidden pair against a site that is
//! already settled, so after shell `i` no forbidden pair has both endpoints in
//! `Λ_i`.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{boundary, Rect, Site, SparsePatch, Symbol, Window};
use crate::sft::{check_ssf, is_bad, Neighborhood, NnSft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Top,
    Bottom,
    Right,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Bottom, Side::Right, Side::Left];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Top => "top",
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Left => "left",
        })
    }
}

/// A maximal segment of bad sites on one side of shell `radius`, covering
/// coordinates `alpha..=beta` along that side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Run {
    pub side: Side,
    pub radius: u32,
    pub alpha: i32,
    pub beta: i32,
}

impl Run {
    pub fn new(side: Side, radius: u32, alpha: i32, beta: i32) -> Result<Run> {
        if alpha > beta {
            return Err(Error::Precondition(format!(
                "run start {alpha} exceeds end {beta}"
            )));
        }
        let r = radius as i32;
        let (lo, hi) = match side {
            Side::Top | Side::Bottom => (-r, r),
            Side::Right | Side::Left => (-r + 1, r - 1),
        };
        if alpha < lo || beta > hi {
            return Err(Error::Precondition(format!(
                "{side} run [{alpha},{beta}] leaves shell {radius}"
            )));
        }
        Ok(Run {
            side,
            radius,
            alpha,
            beta,
        })
    }

    /// A run on an arbitrary horizontal (`Top`) or vertical (`Right`) line,
    /// not tied to a shell: `[alpha,beta] x {line}` or `{line} x [alpha,beta]`.
    /// Used for standalone segment fills.
    pub fn segment(side: Side, line: i32, alpha: i32, beta: i32) -> Result<Run> {
        if alpha > beta {
            return Err(Error::Precondition(format!(
                "run start {alpha} exceeds end {beta}"
            )));
        }
        let (side, radius) = match side {
            Side::Top | Side::Bottom if line >= 0 => (Side::Top, line as u32),
            Side::Top | Side::Bottom => (Side::Bottom, line.unsigned_abs()),
            Side::Right | Side::Left if line >= 0 => (Side::Right, line as u32),
            Side::Right | Side::Left => (Side::Left, line.unsigned_abs()),
        };
        Ok(Run {
            side,
            radius,
            alpha,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        (self.beta - self.alpha + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The run's sites in sweep order (increasing `alpha -> beta`).
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let r = self.radius as i32;
        (self.alpha..=self.beta).map(move |t| match self.side {
            Side::Top => Site::new(t, r),
            Side::Bottom => Site::new(t, -r),
            Side::Right => Site::new(r, t),
            Side::Left => Site::new(-r, t),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShellDecomposition {
    pub radius: u32,
    pub top: Vec<Run>,
    pub bottom: Vec<Run>,
    pub right: Vec<Run>,
    pub left: Vec<Run>,
    pub total_bad: usize,
}

impl ShellDecomposition {
    pub fn side(&self, side: Side) -> &[Run] {
        match side {
            Side::Top => &self.top,
            Side::Bottom => &self.bottom,
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    /// Runs in processing order: top, bottom, right, left.
    pub fn runs(&self) -> impl Iterator<Item = &Run> {
        self.top
            .iter()
            .chain(&self.bottom)
            .chain(&self.right)
            .chain(&self.left)
    }

    pub fn sites(&self) -> BTreeSet<Site> {
        self.runs().flat_map(|r| r.sites()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.total_bad == 0
    }
}

fn side_of(u: Site, i: u32) -> (Side, i32) {
    let r = i as i32;
    if u.y == r {
        (Side::Top, u.x)
    } else if u.y == -r {
        (Side::Bottom, u.x)
    } else if u.x == r {
        (Side::Right, u.y)
    } else {
        (Side::Left, u.y)
    }
}

fn require_box(w: &Window, radius: u32) -> Result<()> {
    if w.domain().contains_rect(&Rect::centered(radius)) {
        Ok(())
    } else {
        let r = radius as i32;
        let missing = [Site::new(-r, -r), Site::new(r, r)]
            .into_iter()
            .find(|u| !w.domain().contains(*u))
            .unwrap_or(Site::new(r, r));
        Err(Error::InsufficientMargin(missing))
    }
}

/// Splits the bad sites of ring `i` into sides and maximal runs.
pub fn decompose_shell(w: &Window, sft: &NnSft, i: u32) -> Result<ShellDecomposition> {
    require_box(w, i + 1)?;
    let mut coords: [Vec<i32>; 4] = Default::default();
    let mut total_bad = 0;
    for u in crate::lattice::shell_sites(i) {
        if is_bad(w, u, sft)? {
            let (side, t) = side_of(u, i);
            coords[side as usize].push(t);
            total_bad += 1;
        }
    }
    let mut d = ShellDecomposition {
        radius: i,
        total_bad,
        ..Default::default()
    };
    for side in Side::ALL {
        let c = &mut coords[side as usize];
        c.sort_unstable();
        let mut runs = Vec::new();
        let mut iter = c.iter().copied();
        if let Some(first) = iter.next() {
            let (mut alpha, mut beta) = (first, first);
            for t in iter {
                if t == beta + 1 {
                    beta = t;
                } else {
                    runs.push(Run {
                        side,
                        radius: i,
                        alpha,
                        beta,
                    });
                    alpha = t;
                    beta = t;
                }
            }
            runs.push(Run {
                side,
                radius: i,
                alpha,
                beta,
            });
        }
        match side {
            Side::Top => d.top = runs,
            Side::Bottom => d.bottom = runs,
            Side::Right => d.right = runs,
            Side::Left => d.left = runs,
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillRule {
    /// Smallest compatible symbol.
    #[default]
    Smallest,
    /// Uniform among compatible symbols, from a seeded stream.
    Random { seed: u64 },
}

impl FillRule {
    pub fn chooser(self) -> Chooser {
        match self {
            FillRule::Smallest => Chooser::Smallest,
            FillRule::Random { seed } => Chooser::Random(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

/// Stateful choice among compatible symbols.
#[derive(Debug, Clone)]
pub enum Chooser {
    Smallest,
    Random(ChaCha8Rng),
}

impl Chooser {
    fn pick(&mut self, sft: &NnSft, nb: &Neighborhood) -> Option<Symbol> {
        match self {
            Chooser::Smallest => (0..sft.q() as Symbol).find(|&a| sft.fits(a, nb)),
            Chooser::Random(rng) => sft.compatible_symbols(nb).choose(rng).copied(),
        }
    }
}

/// Sweeps `run` in place; returns the replacement symbols.
fn fill_run_in_place(
    w: &mut Window,
    sft: &NnSft,
    run: &Run,
    chooser: &mut Chooser,
) -> Result<SparsePatch> {
    let mut patch = SparsePatch::new();
    for u in run.sites() {
        let nb = Neighborhood::of(w, u);
        let a = chooser
            .pick(sft, &nb)
            .ok_or(Error::SsfContractViolated(u))?;
        w.set(u, a)?;
        patch.insert(u, a);
    }
    Ok(patch)
}

/// Segment fill: replacement symbols for the run's sites such that no
/// forbidden pair touches a run site once the patch is applied.
pub fn fill_segment(
    w: &Window,
    sft: &NnSft,
    run: &Run,
    chooser: &mut Chooser,
) -> Result<SparsePatch> {
    if !check_ssf(sft).ssf {
        return Err(Error::NotSsf);
    }
    crate::sft::validate_window(w, sft)?;
    let shape: Vec<Site> = run.sites().collect();
    for v in boundary(shape.iter().copied())?
        .into_iter()
        .chain(shape.iter().copied())
    {
        w.at(v)?;
    }
    let mut scratch = w.clone();
    fill_run_in_place(&mut scratch, sft, run, chooser)
}

/// One site rewrite performed during repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rewrite {
    pub site: Site,
    pub old: Symbol,
    pub new: Symbol,
}

fn repair_shell_in_place(
    w: &mut Window,
    sft: &NnSft,
    shell: &ShellDecomposition,
    chooser: &mut Chooser,
) -> Result<Vec<Rewrite>> {
    let mut rewrites = Vec::with_capacity(shell.total_bad);
    for run in shell.runs() {
        let before: Vec<Symbol> = run.sites().map(|u| w.get(u).unwrap()).collect();
        let patch = fill_run_in_place(w, sft, run, chooser)?;
        rewrites.extend(
            patch
                .iter()
                .zip(before)
                .map(|((&site, &new), old)| Rewrite { site, old, new }),
        );
    }
    Ok(rewrites)
}

/// Repairs the bad runs of ring `i` of `w`, leaving every other site alone.
pub fn repair_shell(w: &Window, sft: &NnSft, i: u32, rule: FillRule) -> Result<Window> {
    if !check_ssf(sft).ssf {
        return Err(Error::NotSsf);
    }
    crate::sft::validate_window(w, sft)?;
    let shell = decompose_shell(w, sft, i)?;
    let mut out = w.clone();
    repair_shell_in_place(&mut out, sft, &shell, &mut rule.chooser())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repair {
    /// The repaired window; free of forbidden pairs with both endpoints in `Λ_N`.
    pub window: Window,
    /// Shell decompositions `0..=N` of the ORIGINAL window.
    pub shells: Vec<ShellDecomposition>,
}

/// Repair together with the rewrites of every shell, from which each
/// intermediate configuration can be rebuilt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTrace {
    pub original: Window,
    pub repair: Repair,
    /// `rewrites[i]` turns the configuration after shell `i-1` into the one
    /// after shell `i`.
    pub rewrites: Vec<Vec<Rewrite>>,
}

impl RepairTrace {
    /// The configurations before any shell, then after shells `0..=N`.
    pub fn intermediates(&self) -> Vec<Window> {
        let mut out = Vec::with_capacity(self.rewrites.len() + 1);
        let mut cur = self.original.clone();
        out.push(cur.clone());
        for shell in &self.rewrites {
            for rw in shell {
                cur.set(rw.site, rw.new).unwrap();
            }
            out.push(cur.clone());
        }
        out
    }
}

pub fn repair_traced(w: &Window, sft: &NnSft, n: u32, rule: FillRule) -> Result<RepairTrace> {
    if !check_ssf(sft).ssf {
        return Err(Error::NotSsf);
    }
    crate::sft::validate_window(w, sft)?;
    require_box(w, n + 1)?;
    let shells = (0..=n)
        .map(|i| decompose_shell(w, sft, i))
        .collect::<Result<Vec<_>>>()?;
    let mut out = w.clone();
    let mut chooser = rule.chooser();
    let mut rewrites = Vec::with_capacity(shells.len());
    for shell in &shells {
        rewrites.push(repair_shell_in_place(&mut out, sft, shell, &mut chooser)?);
    }
    Ok(RepairTrace {
        original: w.clone(),
        repair: Repair {
            window: out,
            shells,
        },
        rewrites,
    })
}

/// Repairs shells `0..=N` in order. The window must contain `Λ_{N+1}`.
pub fn repair(w: &Window, sft: &NnSft, n: u32, rule: FillRule) -> Result<Repair> {
    repair_traced(w, sft, n, rule).map(|t| t.repair)
}
