#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssf_core::sft::{check_ssf, Direction};
use ssf_core::{NnSft, Rect, Site, Symbol, Window};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random forbidden-pair sets: each ordered pair forbidden with probability
/// `density` in each direction.
pub fn random_sft(rng: &mut impl Rng, q: u32, density: f64) -> NnSft {
    let mut sft = NnSft::full(q).unwrap();
    for a in 0..q as Symbol {
        for b in 0..q as Symbol {
            if rng.gen_bool(density) {
                sft.forbid(Direction::Horizontal, a, b).unwrap();
            }
            if rng.gen_bool(density) {
                sft.forbid(Direction::Vertical, a, b).unwrap();
            }
        }
    }
    sft
}

/// `count` random SSF shifts with `2 <= q <= max_q`, by rejection.
pub fn random_ssf_sfts(seed: u64, count: usize, max_q: u32) -> Vec<NnSft> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let q = rng.gen_range(2..=max_q);
        let density = rng.gen_range(0.05..0.35);
        let sft = random_sft(&mut rng, q, density);
        if check_ssf(&sft).ssf {
            out.push(sft);
        }
    }
    out
}

pub fn random_window(rng: &mut impl Rng, domain: Rect, q: u32) -> Window {
    Window::from_fn(domain, |_| rng.gen_range(0..q) as Symbol)
}

/// Forbidden pairs with both endpoints in `region`, by direct pairwise scan.
pub fn violations_inside(w: &Window, sft: &NnSft, region: &Rect) -> usize {
    let mut n = 0;
    for u in region.sites() {
        let a = w.get(u).unwrap();
        if region.contains(u + Site::new(1, 0))
            && sft.h_forbidden(a, w.get(u + Site::new(1, 0)).unwrap())
        {
            n += 1;
        }
        if region.contains(u + Site::new(0, 1))
            && sft.v_forbidden(a, w.get(u + Site::new(0, 1)).unwrap())
        {
            n += 1;
        }
    }
    n
}
