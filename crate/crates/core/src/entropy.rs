//! Strip transfer-matrix entropy.
//!
//! States are the vertically admissible columns of height `m`; column `a`
//! may be followed by column `b` when every row pair `(a[j], b[j])` is
//! horizontally allowed. The per-site entropy of the width-`m` strip is
//! `ln(lambda) / m` with `lambda` the Perron root of the 0/1 transfer matrix.
//! Natural logarithms throughout.

use crate::error::{Error, Result};
use crate::lattice::Symbol;
use crate::sft::NnSft;

/// Largest `q^m` candidate count enumerated.
pub const STATE_LIMIT: u128 = 2_000_000;
/// Largest number of stored transitions.
pub const EDGE_LIMIT: u128 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripTransfer {
    pub width: usize,
    /// Column states, bottom symbol first.
    pub states: Vec<Vec<Symbol>>,
    /// `successors[a]` lists the states that may follow state `a`.
    pub successors: Vec<Vec<u32>>,
}

impl StripTransfer {
    pub fn build(sft: &NnSft, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidConfig("strip width must be positive".into()));
        }
        let q = sft.q();
        let candidates = (q as u128).checked_pow(width as u32).unwrap_or(u128::MAX);
        if candidates > STATE_LIMIT {
            return Err(Error::StateGuard {
                width,
                states: candidates,
                limit: STATE_LIMIT,
            });
        }

        // extend admissible columns one row at a time
        let mut states: Vec<Vec<Symbol>> = (0..q as Symbol).map(|a| vec![a]).collect();
        for _ in 1..width {
            let mut next = Vec::with_capacity(states.len() * q as usize);
            for col in &states {
                let top = *col.last().unwrap();
                for a in 0..q as Symbol {
                    if !sft.v_forbidden(top, a) {
                        let mut c = col.clone();
                        c.push(a);
                        next.push(c);
                    }
                }
            }
            states = next;
        }

        let n = states.len() as u128;
        if n * n > EDGE_LIMIT {
            // the dense pairwise scan is the bottleneck; refuse it up front
            return Err(Error::StateGuard {
                width,
                states: n * n,
                limit: EDGE_LIMIT,
            });
        }
        let successors = states
            .iter()
            .map(|a| {
                states
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| {
                        a.iter()
                            .zip(b.iter())
                            .all(|(&x, &y)| !sft.h_forbidden(x, y))
                    })
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        Ok(StripTransfer {
            width,
            states,
            successors,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Strongly connected components (Kosaraju, iterative). Returns the
    /// component index of every state.
    fn components(&self) -> (Vec<u32>, usize) {
        let n = self.states.len();
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut stack: Vec<(u32, usize)> = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            stack.push((s as u32, 0));
            while let Some(top) = stack.last_mut() {
                let (v, k) = (top.0 as usize, top.1);
                if let Some(&w) = self.successors[v].get(k) {
                    top.1 += 1;
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        stack.push((w, 0));
                    }
                } else {
                    order.push(v as u32);
                    stack.pop();
                }
            }
        }

        let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (a, succ) in self.successors.iter().enumerate() {
            for &b in succ {
                preds[b as usize].push(a as u32);
            }
        }
        let mut comp = vec![u32::MAX; n];
        let mut count = 0;
        let mut todo = Vec::new();
        for &s in order.iter().rev() {
            if comp[s as usize] != u32::MAX {
                continue;
            }
            comp[s as usize] = count;
            todo.push(s);
            while let Some(v) = todo.pop() {
                for &w in &preds[v as usize] {
                    if comp[w as usize] == u32::MAX {
                        comp[w as usize] = count;
                        todo.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count as usize)
    }

    /// Perron root: the largest spectral radius over the irreducible
    /// diagonal blocks. Each block is power-iterated with `A + I` (primitive
    /// there) until the Collatz-Wielandt bounds agree to relative `tol`.
    pub fn perron_root(&self, tol: f64) -> f64 {
        let n = self.states.len();
        if n == 0 {
            return 0.0;
        }
        let (comp, count) = self.components();
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); count];
        for (s, &c) in comp.iter().enumerate() {
            members[c as usize].push(s as u32);
        }
        let mut best = 0.0f64;
        for (c, block) in members.iter().enumerate() {
            let c = c as u32;
            let local: std::collections::HashMap<u32, usize> =
                block.iter().enumerate().map(|(i, &s)| (s, i)).collect();
            let edges: Vec<Vec<usize>> = block
                .iter()
                .map(|&s| {
                    self.successors[s as usize]
                        .iter()
                        .filter(|&&t| comp[t as usize] == c)
                        .map(|t| local[t])
                        .collect()
                })
                .collect();
            if edges.iter().all(|e| e.is_empty()) {
                continue;
            }
            best = best.max(block_root(&edges, tol));
        }
        best
    }
}

/// Spectral radius of an irreducible 0/1 matrix given by successor lists.
fn block_root(edges: &[Vec<usize>], tol: f64) -> f64 {
    let n = edges.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..1_000_000 {
        y.copy_from_slice(&x);
        for (a, succ) in edges.iter().enumerate() {
            for &b in succ {
                y[b] += x[a];
            }
        }
        lo = f64::INFINITY;
        hi = 0.0f64;
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm: f64 = y.iter().sum();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if hi - lo <= tol * hi {
            break;
        }
    }
    0.5 * (lo + hi) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripEntropy {
    pub width: usize,
    pub states: usize,
    pub lambda: f64,
    /// `ln(lambda) / width`; `-inf` for an empty subshift.
    pub entropy_per_site: f64,
}

impl StripEntropy {
    pub fn is_empty_subshift(&self) -> bool {
        self.entropy_per_site == f64::NEG_INFINITY
    }
}

pub fn strip_entropy(sft: &NnSft, width: usize, tol: f64) -> Result<StripEntropy> {
    let t = StripTransfer::build(sft, width)?;
    let lambda = t.perron_root(tol);
    let entropy_per_site = if lambda > 0.0 {
        lambda.ln() / width as f64
    } else {
        f64::NEG_INFINITY
    };
    Ok(StripEntropy {
        width,
        states: t.state_count(),
        lambda,
        entropy_per_site,
    })
}
