//! Nearest-neighbor subshifts of finite type on Z^2.
//!
//! An [`NnSft`] forbids ordered symbol pairs on horizontally adjacent sites
//! `(u, u+e1)` and vertically adjacent sites `(u, u+e2)`. A forbidden pair is
//! attributed to its lower-left endpoint `u`, so the bad sites of a window are
//! exactly the sites where the penalty potential is `-1`.
//!
//! Single-site fillability is decided exhaustively over all `q^4` boundary
//! assignments of a site, admissible or not.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{parse_err, Error, Result};
use crate::lattice::{Rect, Site, Symbol, Window, E1, E2};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NnSft {
    q: u32,
    hforbid: Vec<bool>,
    vforbid: Vec<bool>,
}

pub const MAX_ALPHABET: u32 = Symbol::MAX as u32 + 1;

impl NnSft {
    /// The full shift on `q` symbols.
    pub fn full(q: u32) -> Result<Self> {
        if q == 0 || q > MAX_ALPHABET {
            return Err(Error::InvalidConfig(format!(
                "alphabet size {q} outside 1..={MAX_ALPHABET}"
            )));
        }
        let n = (q * q) as usize;
        Ok(NnSft {
            q,
            hforbid: vec![false; n],
            vforbid: vec![false; n],
        })
    }

    pub fn from_pairs(
        q: u32,
        hforbid: &[(Symbol, Symbol)],
        vforbid: &[(Symbol, Symbol)],
    ) -> Result<Self> {
        let mut sft = NnSft::full(q)?;
        for &(a, b) in hforbid {
            sft.forbid(Direction::Horizontal, a, b)?;
        }
        for &(a, b) in vforbid {
            sft.forbid(Direction::Vertical, a, b)?;
        }
        Ok(sft)
    }

    /// No two adjacent 1's on the alphabet {0, 1}.
    pub fn hard_square() -> Self {
        NnSft::from_pairs(2, &[(1, 1)], &[(1, 1)]).unwrap()
    }

    /// `k` symbols, no two adjacent sites carry the same symbol.
    pub fn checkerboard(k: u32) -> Result<Self> {
        let mut sft = NnSft::full(k)?;
        for a in 0..k as Symbol {
            sft.forbid(Direction::Horizontal, a, a)?;
            sft.forbid(Direction::Vertical, a, a)?;
        }
        Ok(sft)
    }

    pub fn forbid(&mut self, dir: Direction, a: Symbol, b: Symbol) -> Result<()> {
        for s in [a, b] {
            if s as u32 >= self.q {
                return Err(Error::InvalidConfig(format!(
                    "symbol {s} out of range for alphabet size {}",
                    self.q
                )));
            }
        }
        let i = self.idx(a, b);
        match dir {
            Direction::Horizontal => self.hforbid[i] = true,
            Direction::Vertical => self.vforbid[i] = true,
        }
        Ok(())
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    #[inline]
    fn idx(&self, a: Symbol, b: Symbol) -> usize {
        a as usize * self.q as usize + b as usize
    }

    /// `a` at `u`, `b` at `u + e1`.
    #[inline]
    pub fn h_forbidden(&self, a: Symbol, b: Symbol) -> bool {
        self.hforbid[self.idx(a, b)]
    }

    /// `a` at `u`, `b` at `u + e2`.
    #[inline]
    pub fn v_forbidden(&self, a: Symbol, b: Symbol) -> bool {
        self.vforbid[self.idx(a, b)]
    }

    #[inline]
    pub fn forbidden(&self, dir: Direction, a: Symbol, b: Symbol) -> bool {
        match dir {
            Direction::Horizontal => self.h_forbidden(a, b),
            Direction::Vertical => self.v_forbidden(a, b),
        }
    }

    pub fn forbidden_pairs(&self, dir: Direction) -> Vec<(Symbol, Symbol)> {
        let table = match dir {
            Direction::Horizontal => &self.hforbid,
            Direction::Vertical => &self.vforbid,
        };
        let q = self.q as usize;
        table
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| ((i / q) as Symbol, (i % q) as Symbol))
            .collect()
    }

    /// Whether `center` is compatible with every assigned neighbor.
    /// Unassigned neighbors (`None`) impose no constraint.
    #[inline]
    pub fn fits(&self, center: Symbol, nb: &Neighborhood) -> bool {
        nb.west.is_none_or(|w| !self.h_forbidden(w, center))
            && nb.east.is_none_or(|e| !self.h_forbidden(center, e))
            && nb.south.is_none_or(|s| !self.v_forbidden(s, center))
            && nb.north.is_none_or(|n| !self.v_forbidden(center, n))
    }

    pub fn compatible_symbols(&self, nb: &Neighborhood) -> Vec<Symbol> {
        (0..self.q as Symbol)
            .filter(|&a| self.fits(a, nb))
            .collect()
    }

    /// Resolves `hardsquare`, `checkerboard:<k>` and `full:<q>`.
    pub fn builtin(name: &str) -> Option<Result<NnSft>> {
        let name = name.trim();
        if name == "hardsquare" {
            return Some(Ok(NnSft::hard_square()));
        }
        let (kind, arg) = name.split_once(':')?;
        let n = match arg.parse::<u32>() {
            Ok(n) => n,
            Err(_) => return Some(Err(Error::InvalidConfig(format!("bad size in `{name}`")))),
        };
        match kind {
            "checkerboard" => Some(NnSft::checkerboard(n)),
            "full" => Some(NnSft::full(n)),
            _ => None,
        }
    }

    /// Parses the line-oriented SFT format (`alphabet`, `hforbid`, `vforbid`;
    /// `#` starts a comment).
    pub fn parse(text: &str) -> Result<NnSft> {
        let mut q: Option<(u32, usize)> = None;
        let mut pairs: Vec<(usize, Direction, u32, u32)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| {
                s.parse::<u32>()
                    .map_err(|_| parse_err(line_no, format!("bad integer `{s}`")))
            };
            match toks[0] {
                "alphabet" => {
                    if toks.len() != 2 {
                        return Err(parse_err(line_no, "expected `alphabet <q>`"));
                    }
                    if q.is_some() {
                        return Err(parse_err(line_no, "duplicate `alphabet` line"));
                    }
                    let n = int(toks[1])?;
                    if n == 0 || n > MAX_ALPHABET {
                        return Err(parse_err(
                            line_no,
                            format!("alphabet size must be in 1..={MAX_ALPHABET}"),
                        ));
                    }
                    q = Some((n, line_no));
                }
                kw @ ("hforbid" | "vforbid") => {
                    if toks.len() != 3 {
                        return Err(parse_err(line_no, format!("expected `{kw} <a> <b>`")));
                    }
                    let dir = if kw == "hforbid" {
                        Direction::Horizontal
                    } else {
                        Direction::Vertical
                    };
                    pairs.push((line_no, dir, int(toks[1])?, int(toks[2])?));
                }
                other => return Err(parse_err(line_no, format!("unknown keyword `{other}`"))),
            }
        }
        let (q, _) =
            q.ok_or_else(|| parse_err(text.lines().count().max(1), "missing `alphabet` line"))?;
        let mut sft = NnSft::full(q)?;
        for (line_no, dir, a, b) in pairs {
            if a >= q || b >= q {
                return Err(parse_err(
                    line_no,
                    format!("symbol {} is not below alphabet size {q}", a.max(b)),
                ));
            }
            sft.forbid(dir, a as Symbol, b as Symbol)?;
        }
        Ok(sft)
    }

    pub fn render(&self) -> String {
        let mut out = format!("alphabet {}\n", self.q);
        for (a, b) in self.forbidden_pairs(Direction::Horizontal) {
            out.push_str(&format!("hforbid {a} {b}\n"));
        }
        for (a, b) in self.forbidden_pairs(Direction::Vertical) {
            out.push_str(&format!("vforbid {a} {b}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl Direction {
    pub fn unit(self) -> Site {
        match self {
            Direction::Horizontal => E1,
            Direction::Vertical => E2,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
        })
    }
}

/// A forbidden adjacent pair `(u, u + e_dir)`, keyed by its lower-left endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Violation {
    pub site: Site,
    pub direction: Direction,
}

/// Neighbor symbols of a site; `None` marks an unconstrained neighbor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Neighborhood {
    pub north: Option<Symbol>,
    pub south: Option<Symbol>,
    pub east: Option<Symbol>,
    pub west: Option<Symbol>,
}

impl Neighborhood {
    /// Reads the four neighbors of `u` from `w`; sites outside the domain stay
    /// unconstrained.
    pub fn of(w: &Window, u: Site) -> Self {
        Neighborhood {
            north: w.get(u + E2),
            south: w.get(u - E2),
            east: w.get(u + E1),
            west: w.get(u - E1),
        }
    }
}

/// Checks that every symbol of `w` lies in the alphabet of `sft`.
pub fn validate_window(w: &Window, sft: &NnSft) -> Result<()> {
    match w.iter().find(|&(_, a)| a as u32 >= sft.q) {
        Some((site, a)) => Err(Error::SymbolOutOfRange {
            site,
            symbol: a as u32,
            q: sft.q,
        }),
        None => Ok(()),
    }
}

/// All forbidden adjacent pairs with both endpoints inside the window, in
/// global site order (horizontal before vertical at the same site).
pub fn violations(w: &Window, sft: &NnSft) -> Result<Vec<Violation>> {
    validate_window(w, sft)?;
    let mut out = Vec::new();
    for (u, a) in w.iter() {
        for dir in [Direction::Horizontal, Direction::Vertical] {
            if let Some(b) = w.get(u + dir.unit()) {
                if sft.forbidden(dir, a, b) {
                    out.push(Violation {
                        site: u,
                        direction: dir,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Whether `u` starts a forbidden pair to the right or upward. Requires `u`,
/// `u+e1` and `u+e2` to be stored.
#[inline]
pub fn is_bad(w: &Window, u: Site, sft: &NnSft) -> Result<bool> {
    let a = w.at(u)?;
    let right = w.at(u + E1)?;
    let up = w.at(u + E2)?;
    Ok(sft.h_forbidden(a, right) || sft.v_forbidden(a, up))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadSites {
    pub sites: BTreeSet<Site>,
    /// Sites whose right and up neighbors are stored; `None` when the window
    /// is a single row or column.
    pub evaluable: Option<Rect>,
}

/// Sub-rectangle of sites whose penalty dependencies are all stored.
pub fn evaluable_rect(domain: &Rect) -> Option<Rect> {
    Rect::new(
        domain.x0(),
        domain.y0(),
        domain.width() - 1,
        domain.height() - 1,
    )
    .ok()
}

pub fn bad_sites(w: &Window, sft: &NnSft) -> Result<BadSites> {
    validate_window(w, sft)?;
    let evaluable = evaluable_rect(w.domain());
    let mut sites = BTreeSet::new();
    if let Some(r) = evaluable {
        for u in r.sites() {
            if is_bad(w, u, sft)? {
                sites.insert(u);
            }
        }
    }
    Ok(BadSites { sites, evaluable })
}

/// Number of bad sites of `w` inside `region`.
pub fn count_bad(w: &Window, region: &Rect, sft: &NnSft) -> Result<usize> {
    let mut n = 0;
    for u in region.sites() {
        n += is_bad(w, u, sft)? as usize;
    }
    Ok(n)
}

/// The penalty potential at the shifted configuration `sigma^u x`: `-1` when
/// `u` is bad, `0` otherwise.
pub fn penalty_at(w: &Window, u: Site, sft: &NnSft) -> Result<i32> {
    Ok(if is_bad(w, u, sft)? { -1 } else { 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryAssignment {
    pub north: Symbol,
    pub south: Symbol,
    pub east: Symbol,
    pub west: Symbol,
}

impl From<BoundaryAssignment> for Neighborhood {
    fn from(b: BoundaryAssignment) -> Self {
        Neighborhood {
            north: Some(b.north),
            south: Some(b.south),
            east: Some(b.east),
            west: Some(b.west),
        }
    }
}

impl fmt::Display for BoundaryAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "north={} south={} east={} west={}",
            self.north, self.south, self.east, self.west
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsfReport {
    pub ssf: bool,
    /// First blocking boundary in lexicographic (north, south, east, west)
    /// order, when SSF fails.
    pub witness: Option<BoundaryAssignment>,
}

/// Bitsets over the alphabet, one word vector per symbol.
struct Masks {
    words: usize,
    after_west: Vec<u64>,
    before_east: Vec<u64>,
    above_south: Vec<u64>,
    below_north: Vec<u64>,
}

impl Masks {
    fn new(sft: &NnSft) -> Self {
        let q = sft.q as usize;
        let words = q.div_ceil(64);
        let mut m = Masks {
            words,
            after_west: vec![0; q * words],
            before_east: vec![0; q * words],
            above_south: vec![0; q * words],
            below_north: vec![0; q * words],
        };
        for s in 0..q {
            for a in 0..q {
                let (bit, word) = (1u64 << (a % 64), s * words + a / 64);
                let (s, a) = (s as Symbol, a as Symbol);
                if !sft.h_forbidden(s, a) {
                    m.after_west[word] |= bit;
                }
                if !sft.h_forbidden(a, s) {
                    m.before_east[word] |= bit;
                }
                if !sft.v_forbidden(s, a) {
                    m.above_south[word] |= bit;
                }
                if !sft.v_forbidden(a, s) {
                    m.below_north[word] |= bit;
                }
            }
        }
        m
    }

    fn any_center(&self, b: &BoundaryAssignment) -> bool {
        let w = self.words;
        let (n, s, e, wst) = (
            b.north as usize * w,
            b.south as usize * w,
            b.east as usize * w,
            b.west as usize * w,
        );
        (0..w).any(|k| {
            self.below_north[n + k]
                & self.above_south[s + k]
                & self.before_east[e + k]
                & self.after_west[wst + k]
                != 0
        })
    }
}

/// Exhaustive single-site fillability test.
pub fn check_ssf(sft: &NnSft) -> SsfReport {
    let masks = Masks::new(sft);
    let q = sft.q as Symbol;
    for north in 0..q {
        for south in 0..q {
            for east in 0..q {
                for west in 0..q {
                    let b = BoundaryAssignment {
                        north,
                        south,
                        east,
                        west,
                    };
                    if !masks.any_center(&b) {
                        return SsfReport {
                            ssf: false,
                            witness: Some(b),
                        };
                    }
                }
            }
        }
    }
    SsfReport {
        ssf: true,
        witness: None,
    }
}

/// Symbols compatible with every neighborhood, i.e. those that appear in no
/// forbidden pair at all.
pub fn find_safe_symbols(sft: &NnSft) -> Vec<Symbol> {
    let q = sft.q as Symbol;
    (0..q)
        .filter(|&a| {
            (0..q).all(|b| {
                !(sft.h_forbidden(a, b)
                    || sft.h_forbidden(b, a)
                    || sft.v_forbidden(a, b)
                    || sft.v_forbidden(b, a))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalAdmissibility {
    /// SSF holds, so every locally admissible pattern extends to a point of X.
    Certified,
    /// SSF fails; deciding global admissibility is not attempted.
    Unknown,
}

pub fn assert_local_implies_global(sft: &NnSft) -> GlobalAdmissibility {
    if check_ssf(sft).ssf {
        GlobalAdmissibility::Certified
    } else {
        GlobalAdmissibility::Unknown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ORIGIN;

    #[test]
    fn violations_on_small_windows() {
        let hs = NnSft::hard_square();
        let zero = Window::filled(Rect::new(-2, -2, 5, 5).unwrap(), 0);
        assert!(violations(&zero, &hs).unwrap().is_empty());

        let mut w = zero.clone();
        w.set(ORIGIN, 1).unwrap();
        w.set(E1, 1).unwrap();
        assert_eq!(
            violations(&w, &hs).unwrap(),
            vec![Violation {
                site: ORIGIN,
                direction: Direction::Horizontal
            }]
        );

        let cb3 = NnSft::checkerboard(3).unwrap();
        let w = Window::filled(Rect::new(0, 0, 2, 2).unwrap(), 0);
        let v = violations(&w, &cb3).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(
            v.iter()
                .filter(|x| x.direction == Direction::Horizontal)
                .count(),
            2
        );
    }

    #[test]
    fn out_of_range_symbol_is_reported() {
        let hs = NnSft::hard_square();
        let mut w = Window::filled(Rect::centered(1), 0);
        w.set(Site::new(1, 0), 2).unwrap();
        assert_eq!(
            violations(&w, &hs),
            Err(Error::SymbolOutOfRange {
                site: Site::new(1, 0),
                symbol: 2,
                q: 2
            })
        );
    }

    #[test]
    fn bad_sites_cases() {
        let hs = NnSft::hard_square();
        let mut w = Window::filled(Rect::centered(2), 0);
        assert!(bad_sites(&w, &hs).unwrap().sites.is_empty());

        w.set(ORIGIN, 1).unwrap();
        w.set(E2, 1).unwrap();
        let b = bad_sites(&w, &hs).unwrap();
        assert_eq!(b.sites.into_iter().collect::<Vec<_>>(), vec![ORIGIN]);
        assert_eq!(b.evaluable, Some(Rect::new(-2, -2, 4, 4).unwrap()));

        let ones = Window::filled(Rect::centered(2), 1);
        assert_eq!(bad_sites(&ones, &hs).unwrap().sites.len(), 16);

        let row = Window::filled(Rect::new(0, 0, 4, 1).unwrap(), 1);
        assert_eq!(
            bad_sites(&row, &hs).unwrap(),
            BadSites {
                sites: BTreeSet::new(),
                evaluable: None
            }
        );
    }

    #[test]
    fn penalty_values() {
        let hs = NnSft::hard_square();
        let mut w = Window::filled(Rect::centered(1), 0);
        assert_eq!(penalty_at(&w, ORIGIN, &hs), Ok(0));
        w.set(ORIGIN, 1).unwrap();
        assert_eq!(penalty_at(&w, ORIGIN, &hs), Ok(0));
        w.set(E1, 1).unwrap();
        assert_eq!(penalty_at(&w, ORIGIN, &hs), Ok(-1));
        assert_eq!(
            penalty_at(&w, Site::new(1, 1), &hs),
            Err(Error::InsufficientMargin(Site::new(2, 1)))
        );
    }

    #[test]
    fn ssf_and_safe_symbols_of_named_shifts() {
        let hs = NnSft::hard_square();
        assert!(check_ssf(&hs).ssf);
        assert_eq!(find_safe_symbols(&hs), vec![0]);

        for k in 2..=4 {
            assert!(!check_ssf(&NnSft::checkerboard(k).unwrap()).ssf, "k={k}");
        }
        for k in 5..=8 {
            assert!(check_ssf(&NnSft::checkerboard(k).unwrap()).ssf, "k={k}");
        }
        for k in 2..=8 {
            assert!(find_safe_symbols(&NnSft::checkerboard(k).unwrap()).is_empty());
        }
        assert_eq!(find_safe_symbols(&NnSft::full(3).unwrap()), vec![0, 1, 2]);
    }

    #[test]
    fn checkerboard4_witness() {
        let r = check_ssf(&NnSft::checkerboard(4).unwrap());
        assert_eq!(
            r.witness,
            Some(BoundaryAssignment {
                north: 0,
                south: 1,
                east: 2,
                west: 3
            })
        );
    }

    #[test]
    fn wide_alphabet_uses_multiword_masks() {
        // 70 symbols forces two mask words per symbol
        assert!(check_ssf(&NnSft::checkerboard(70).unwrap()).ssf);
        let mut sft = NnSft::checkerboard(70).unwrap();
        for a in 4..70 {
            sft.forbid(Direction::Horizontal, 0, a).unwrap();
        }
        // west = 0 now only admits centers 0..4; center 0 clashes with west,
        // and north/south/east can block 1, 2, 3
        let r = check_ssf(&sft);
        assert!(!r.ssf);
        let b = r.witness.unwrap();
        assert_eq!(b.west, 0);
    }

    #[test]
    fn global_admissibility_certificate() {
        assert_eq!(
            assert_local_implies_global(&NnSft::hard_square()),
            GlobalAdmissibility::Certified
        );
        assert_eq!(
            assert_local_implies_global(&NnSft::checkerboard(4).unwrap()),
            GlobalAdmissibility::Unknown
        );
        assert_eq!(
            assert_local_implies_global(&NnSft::checkerboard(5).unwrap()),
            GlobalAdmissibility::Certified
        );
    }

    #[test]
    fn parse_formats() {
        let hs = NnSft::parse("alphabet 2\nhforbid 1 1\nvforbid 1 1").unwrap();
        assert_eq!(hs, NnSft::hard_square());

        let cb5 = NnSft::builtin("checkerboard:5").unwrap().unwrap();
        assert_eq!(cb5.q(), 5);
        assert_eq!(cb5.forbidden_pairs(Direction::Horizontal).len(), 5);
        assert_eq!(cb5.forbidden_pairs(Direction::Vertical).len(), 5);

        let one = NnSft::parse("alphabet 1\n").unwrap();
        assert_eq!(one, NnSft::full(1).unwrap());

        let commented =
            NnSft::parse("# hard squares\nalphabet 2 # two symbols\n\nhforbid 1 1\nvforbid 1 1\n")
                .unwrap();
        assert_eq!(commented, hs);
        assert_eq!(NnSft::parse(&hs.render()).unwrap(), hs);
    }

    #[test]
    fn parse_errors_are_line_numbered() {
        assert_eq!(
            NnSft::parse("alphabet 2\nhforbid 1 2\n"),
            Err(Error::Parse {
                line: 2,
                msg: "symbol 2 is not below alphabet size 2".into()
            })
        );
        assert!(matches!(
            NnSft::parse("alphabet 2\nforbid 1 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            NnSft::parse("hforbid 0 0\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            NnSft::parse("alphabet 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            NnSft::parse("alphabet 2\nalphabet 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(NnSft::builtin("checkerboard:x").unwrap().is_err());
        assert!(NnSft::builtin("nonsense").is_none());
    }
}
