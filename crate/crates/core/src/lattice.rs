//! Lattice geometry on Z^2: sites, centered boxes, rectangles, finite
//! configurations (windows and sparse patches) and the shift-space metric.
//!
//! Adjacency uses the 1-norm (`|u - v|_1 = 1`), while the metric's
//! first-disagreement radius uses the infinity norm. The two are easy to
//! conflate; every helper here names the norm it uses.
//!
//! All deterministic iteration follows one global order: row-major with the
//! top row (largest `y`) first, left to right inside a row. `Site`'s `Ord`
//! implementation is that order, so `BTreeSet<Site>` iterates in it too.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::error::{parse_err, Error, Result};

/// Symbol index into an alphabet `0..q`.
pub type Symbol = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

/// Unit vector `e1` (one step right).
pub const E1: Site = Site { x: 1, y: 0 };
/// Unit vector `e2` (one step up).
pub const E2: Site = Site { x: 0, y: 1 };
pub const ORIGIN: Site = Site { x: 0, y: 0 };

impl Site {
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    pub fn norm_inf(self) -> u32 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    pub fn norm_1(self) -> u32 {
        self.x.unsigned_abs() + self.y.unsigned_abs()
    }

    pub fn is_adjacent(self, other: Site) -> bool {
        (self - other).norm_1() == 1
    }

    /// The four 1-norm neighbors in the order north, south, east, west.
    pub fn neighbors(self) -> [Site; 4] {
        [self + E2, self - E2, self + E1, self - E1]
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        other.y.cmp(&self.y).then(self.x.cmp(&other.x))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site::new(-self.x, -self.y)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// The centered box `[-n, n] x [-n, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CenteredBox {
    pub radius: u32,
}

impl CenteredBox {
    pub const fn new(radius: u32) -> Self {
        CenteredBox { radius }
    }

    /// `(2n+1)^2`
    pub fn site_count(self) -> u64 {
        let side = 2 * self.radius as u64 + 1;
        side * side
    }

    pub fn contains(self, u: Site) -> bool {
        u.norm_inf() <= self.radius
    }

    pub fn rect(self) -> Rect {
        Rect::centered(self.radius)
    }

    pub fn sites(self) -> Vec<Site> {
        box_sites(self.radius)
    }
}

/// Axis-aligned rectangle with lower-left corner `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    x0: i32,
    y0: i32,
    width: u32,
    height: u32,
}

impl Rect {
    pub fn new(x0: i32, y0: i32, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyShape);
        }
        Ok(Rect {
            x0,
            y0,
            width,
            height,
        })
    }

    pub fn centered(radius: u32) -> Self {
        let r = radius as i32;
        let side = 2 * radius + 1;
        Rect {
            x0: -r,
            y0: -r,
            width: side,
            height: side,
        }
    }

    pub fn x0(&self) -> i32 {
        self.x0
    }

    pub fn y0(&self) -> i32 {
        self.y0
    }

    /// Rightmost column (inclusive).
    pub fn x1(&self) -> i32 {
        self.x0 + self.width as i32 - 1
    }

    /// Top row (inclusive).
    pub fn y1(&self) -> i32 {
        self.y0 + self.height as i32 - 1
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, u: Site) -> bool {
        u.x >= self.x0 && u.y >= self.y0 && u.x <= self.x1() && u.y <= self.y1()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0
            && other.y0 >= self.y0
            && other.x1() <= self.x1()
            && other.y1() <= self.y1()
    }

    /// Grows the rectangle by `k` sites on every side.
    pub fn inflate(&self, k: u32) -> Rect {
        Rect {
            x0: self.x0 - k as i32,
            y0: self.y0 - k as i32,
            width: self.width + 2 * k,
            height: self.height + 2 * k,
        }
    }

    pub fn translate(&self, v: Site) -> Rect {
        Rect {
            x0: self.x0 + v.x,
            y0: self.y0 + v.y,
            ..*self
        }
    }

    /// Largest `r` with `[-r, r]^2` inside the rectangle, if any.
    pub fn inner_radius(&self) -> Option<u32> {
        let r = [-self.x0, -self.y0, self.x1(), self.y1()]
            .into_iter()
            .min()
            .unwrap();
        (r >= 0).then_some(r as u32)
    }

    /// Sites in global order (top row first, left to right).
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let (x0, x1) = (self.x0, self.x1());
        (self.y0..=self.y1())
            .rev()
            .flat_map(move |y| (x0..=x1).map(move |x| Site::new(x, y)))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.x0, self.x1(), self.y0, self.y1())
    }
}

/// A finite configuration on a rectangular domain, stored densely in global
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Window {
    domain: Rect,
    symbols: Vec<Symbol>,
}

impl Window {
    pub fn filled(domain: Rect, symbol: Symbol) -> Self {
        Window {
            domain,
            symbols: vec![symbol; domain.len()],
        }
    }

    /// Builds a window from rows listed top row first.
    pub fn from_rows(x0: i32, y0: i32, rows: &[Vec<Symbol>]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        let domain = Rect::new(x0, y0, width, height)?;
        if rows.iter().any(|r| r.len() != width as usize) {
            return Err(Error::Precondition("ragged rows".into()));
        }
        Ok(Window {
            domain,
            symbols: rows.concat(),
        })
    }

    /// Builds a window by evaluating `f` at every site of `domain`.
    pub fn from_fn(domain: Rect, mut f: impl FnMut(Site) -> Symbol) -> Self {
        let symbols = domain.sites().map(&mut f).collect();
        Window { domain, symbols }
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    /// Dense storage in global order.
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    #[inline]
    fn index(&self, u: Site) -> Option<usize> {
        if !self.domain.contains(u) {
            return None;
        }
        let row = (self.domain.y1() - u.y) as usize;
        let col = (u.x - self.domain.x0) as usize;
        Some(row * self.domain.width as usize + col)
    }

    #[inline]
    pub fn get(&self, u: Site) -> Option<Symbol> {
        self.index(u).map(|i| self.symbols[i])
    }

    /// Like [`Window::get`] but reports a missing site as insufficient margin.
    #[inline]
    pub fn at(&self, u: Site) -> Result<Symbol> {
        self.get(u).ok_or(Error::InsufficientMargin(u))
    }

    pub fn set(&mut self, u: Site, symbol: Symbol) -> Result<()> {
        let i = self.index(u).ok_or(Error::InsufficientMargin(u))?;
        self.symbols[i] = symbol;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Symbol)> + '_ {
        self.domain.sites().zip(self.symbols.iter().copied())
    }

    /// Writes every patch entry into the window.
    pub fn apply(&mut self, patch: &SparsePatch) -> Result<()> {
        for (&u, &a) in patch.iter() {
            self.set(u, a)?;
        }
        Ok(())
    }

    /// The window of the shifted configuration `sigma^v x`: the new symbol at
    /// `u` is the old symbol at `u + v`.
    pub fn translate(&self, v: Site) -> Window {
        Window {
            domain: self.domain.translate(-v),
            symbols: self.symbols.clone(),
        }
    }

    /// Copies the symbols of `self` that fall inside `domain`.
    pub fn restrict(&self, domain: Rect) -> Result<Window> {
        if !self.domain.contains_rect(&domain) {
            return Err(Error::Precondition(format!(
                "{domain} is not inside {}",
                self.domain
            )));
        }
        Ok(Window::from_fn(domain, |u| self.get(u).unwrap()))
    }

    /// Sites where `self` and `other` differ; both must share a domain.
    pub fn diff_sites(&self, other: &Window) -> Result<Vec<Site>> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(self
            .iter()
            .zip(other.symbols.iter())
            .filter(|((_, a), b)| a != *b)
            .map(|((u, _), _)| u)
            .collect())
    }

    pub fn parse(text: &str) -> Result<Window> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing window header"))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 5 || toks[0] != "window" {
            return Err(parse_err(
                hline,
                "expected `window <x0> <y0> <width> <height>`",
            ));
        }
        let num = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| parse_err(hline, format!("bad integer `{s}`")))
        };
        let (x0, y0, w, h) = (num(toks[1])?, num(toks[2])?, num(toks[3])?, num(toks[4])?);
        if w < 1 || h < 1 {
            return Err(parse_err(hline, "width and height must be positive"));
        }
        let domain = Rect::new(x0 as i32, y0 as i32, w as u32, h as u32)?;

        let mut symbols = Vec::with_capacity(domain.len());
        for row in 0..h {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(hline, format!("expected {h} rows, found {row}")))?;
            let before = symbols.len();
            for tok in line.split_whitespace() {
                let s = tok
                    .parse::<Symbol>()
                    .map_err(|_| parse_err(ln, format!("bad symbol `{tok}`")))?;
                symbols.push(s);
            }
            if symbols.len() - before != w as usize {
                return Err(parse_err(
                    ln,
                    format!("expected {w} symbols, found {}", symbols.len() - before),
                ));
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content after window rows"));
        }
        Ok(Window { domain, symbols })
    }

    pub fn render(&self) -> String {
        let d = &self.domain;
        let mut out = format!("window {} {} {} {}\n", d.x0, d.y0, d.width, d.height);
        for row in self.symbols.chunks(d.width as usize) {
            let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// A finite configuration on an arbitrary finite shape.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparsePatch {
    entries: BTreeMap<Site, Symbol>,
}

impl SparsePatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, u: Site, a: Symbol) -> Option<Symbol> {
        self.entries.insert(u, a)
    }

    pub fn get(&self, u: Site) -> Option<Symbol> {
        self.entries.get(&u).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, &Symbol)> {
        self.entries.iter()
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.entries.keys().copied()
    }

    /// Concatenation of two configurations on disjoint shapes.
    pub fn concat(&self, other: &SparsePatch) -> Result<SparsePatch> {
        if let Some(u) = other.entries.keys().find(|u| self.entries.contains_key(u)) {
            return Err(Error::Precondition(format!("shapes overlap at {u}")));
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|(&u, &a)| (u, a)));
        Ok(SparsePatch { entries })
    }

    /// Restriction of a window to the given sites.
    pub fn from_window(w: &Window, sites: impl IntoIterator<Item = Site>) -> Result<SparsePatch> {
        let mut entries = BTreeMap::new();
        for u in sites {
            entries.insert(u, w.at(u)?);
        }
        Ok(SparsePatch { entries })
    }
}

impl FromIterator<(Site, Symbol)> for SparsePatch {
    fn from_iter<I: IntoIterator<Item = (Site, Symbol)>>(iter: I) -> Self {
        SparsePatch {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Sites outside `shape` that are 1-norm adjacent to some member.
pub fn boundary<I: IntoIterator<Item = Site>>(shape: I) -> Result<BTreeSet<Site>> {
    let shape: BTreeSet<Site> = shape.into_iter().collect();
    if shape.is_empty() {
        return Err(Error::EmptyShape);
    }
    Ok(shape
        .iter()
        .flat_map(|u| u.neighbors())
        .filter(|v| !shape.contains(v))
        .collect())
}

/// All `(2n+1)^2` sites of the centered box, in global order.
pub fn box_sites(n: u32) -> Vec<Site> {
    Rect::centered(n).sites().collect()
}

/// The ring `Λ_i \ Λ_{i-1}` in global order; shell 0 is the origin.
pub fn shell_sites(i: u32) -> Vec<Site> {
    if i == 0 {
        return vec![ORIGIN];
    }
    let r = i as i32;
    let mut out = Vec::with_capacity(8 * i as usize);
    for y in (-r..=r).rev() {
        if y.abs() == r {
            out.extend((-r..=r).map(|x| Site::new(x, y)));
        } else {
            out.push(Site::new(-r, y));
            out.push(Site::new(r, y));
        }
    }
    out
}

/// Shift-space distance between two windows seen from the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    /// The windows first disagree at infinity-norm `radius`; `d = 2^-radius`.
    Exact { radius: u32 },
    /// The windows agree on their whole domain. The true first disagreement,
    /// if any, lies at infinity-norm at least `min_radius`.
    AgreeOnDomain { min_radius: u32 },
}

impl Distance {
    /// `2^-radius` when exact, otherwise the certified upper bound.
    pub fn value(self) -> f64 {
        match self {
            Distance::Exact { radius } | Distance::AgreeOnDomain { min_radius: radius } => {
                0.5f64.powi(radius as i32)
            }
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Distance::Exact { .. })
    }
}

/// First-disagreement distance `d(x, y) = 2^-i`, `i = min ||u||_inf` over
/// disagreement sites.
///
/// The exact value assumes every site of infinity-norm below the reported
/// radius is stored, which holds for windows containing `Λ_{i-1}`.
pub fn metric_exact(a: &Window, b: &Window) -> Result<Distance> {
    let diff = a.diff_sites(b)?;
    match diff.iter().map(|u| u.norm_inf()).min() {
        Some(radius) => Ok(Distance::Exact { radius }),
        None => {
            let min_radius = a.domain().inner_radius().map_or(0, |r| r + 1);
            Ok(Distance::AgreeOnDomain { min_radius })
        }
    }
}
