//! Rectangular lattice geometry and conditioning plans.
//!
//! Sites of an `n1 x n2` grid are numbered `0..n1*n2` in row-major
//! (raster) order. That numbering doubles as the conditioning order for
//! the ordered conditional approximation: site `i` is conditioned on a
//! set `g(i)` of previously numbered sites and marginalized over a set
//! `f(i)` of subsequently numbered ones. An [`OcaPlan`] precomputes
//! those sets and the lattice-neighbor pairs inside each local window.

use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A rectangular grid of `n1` rows by `n2` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    n1: usize,
    n2: usize,
}

impl Lattice {
    pub fn new(n1: usize, n2: usize) -> Result<Lattice> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::domain(format!(
                "lattice dimensions must be positive, got {n1}x{n2}"
            )));
        }
        Ok(Lattice { n1, n2 })
    }

    pub fn rows(&self) -> usize {
        self.n1
    }

    pub fn cols(&self) -> usize {
        self.n2
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Site index of row `r`, column `c` (both 0-based).
    pub fn site(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.n1 && c < self.n2);
        r * self.n2 + c
    }

    /// Row and column of site `i`.
    pub fn coords(&self, i: usize) -> (usize, usize) {
        debug_assert!(i < self.len());
        (i / self.n2, i % self.n2)
    }

    /// Squared Euclidean distance between two sites.
    pub fn dist2(&self, a: usize, b: usize) -> u64 {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        let dr = ra.abs_diff(rb) as u64;
        let dc = ca.abs_diff(cb) as u64;
        dr * dr + dc * dc
    }

    /// First-order (horizontal and vertical) neighbors of site `i`,
    /// clipped at the grid boundary.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (r, c) = self.coords(i);
        let n2 = self.n2;
        let up = (r > 0).then(|| i - n2);
        let down = (r + 1 < self.n1).then(|| i + n2);
        let left = (c > 0).then(|| i - 1);
        let right = (c + 1 < n2).then(|| i + 1);
        up.into_iter().chain(down).chain(left).chain(right)
    }

    /// All unordered neighbor pairs `(i, j)` with `i < j`, in canonical
    /// order: site-major, right neighbor before down neighbor. Samplers
    /// that draw one random number per pair rely on this order being
    /// stable.
    pub fn neighbor_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| {
            let (r, c) = self.coords(i);
            let right = (c + 1 < self.n2).then(|| (i, i + 1));
            let down = (r + 1 < self.n1).then(|| (i, i + self.n2));
            right.into_iter().chain(down)
        })
    }

    /// Number of unordered neighbor pairs.
    pub fn pair_count(&self) -> usize {
        self.n1 * (self.n2 - 1) + (self.n1 - 1) * self.n2
    }
}

/// Conditioning window of one site.
///
/// Local label vectors follow the layout `[past..., center, future...]`:
/// positions `0..past.len()` hold the past sites in ascending site
/// order, position `past.len()` is the site itself, and the remaining
/// positions hold the future sites in ascending site order. Pair lists
/// store local positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SitePlan {
    /// `g(i)`: nearest previously numbered sites, ascending.
    pub past: Vec<u32>,
    /// `f(i)`: nearest subsequently numbered sites, ascending.
    pub future: Vec<u32>,
    /// Neighbor pairs with both endpoints in `past`.
    pub pairs_past: Vec<(u16, u16)>,
    /// Neighbor pairs touching the center; the other endpoint's local
    /// position is stored.
    pub pairs_center: Vec<u16>,
    /// Remaining neighbor pairs: no center endpoint, at least one
    /// endpoint in `future`.
    pub pairs_mixed: Vec<(u16, u16)>,
}

impl SitePlan {
    /// Local position of the center site.
    pub fn center(&self) -> usize {
        self.past.len()
    }

    /// Number of sites in the window.
    pub fn window_len(&self) -> usize {
        self.past.len() + 1 + self.future.len()
    }
}

/// Precomputed conditioning windows for every site of a lattice.
#[derive(Debug, Clone)]
pub struct OcaPlan {
    lattice: Lattice,
    m_past: usize,
    m_future: usize,
    prune_past_pairs: bool,
    sites: Vec<SitePlan>,
}

impl OcaPlan {
    /// Builds the plan for all sites. `m_past` and `m_future` are the
    /// requested window sizes; windows are truncated near the start and
    /// end of the ordering, so `|g(i)| = min(m_past, i)` and `|f(i)| =
    /// min(m_future, n-1-i)`.
    ///
    /// `prune_past_pairs` marks pairs internal to `g(i)` as skippable
    /// for evaluations where they cancel between numerator and
    /// denominator. The pairs are stored either way; evaluations that
    /// need them ignore the flag.
    pub fn build(
        lattice: Lattice,
        m_past: usize,
        m_future: usize,
        prune_past_pairs: bool,
    ) -> OcaPlan {
        let sites = (0..lattice.len())
            .into_par_iter()
            .map(|i| site_plan(lattice, i, m_past, m_future))
            .collect();
        OcaPlan {
            lattice,
            m_past,
            m_future,
            prune_past_pairs,
            sites,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn m_past(&self) -> usize {
        self.m_past
    }

    pub fn m_future(&self) -> usize {
        self.m_future
    }

    pub fn prune_past_pairs(&self) -> bool {
        self.prune_past_pairs
    }

    pub fn site(&self, i: usize) -> &SitePlan {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[SitePlan] {
        &self.sites
    }

    /// Human-readable listing, one line per site: `i; g(i); f(i)` with
    /// 1-based site numbers and space-separated, ascending members.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, sp) in self.sites.iter().enumerate() {
            let _ = write!(out, "{};", i + 1);
            for &j in &sp.past {
                let _ = write!(out, " {}", j + 1);
            }
            out.push(';');
            for &j in &sp.future {
                let _ = write!(out, " {}", j + 1);
            }
            out.push('\n');
        }
        out
    }
}

/// `m` nearest sites to `i` among those before (`past`) or after it in
/// the ordering. Distance is squared Euclidean; ties prefer the smaller
/// site index. Result is sorted ascending by site index.
fn nearest(lattice: Lattice, i: usize, m: usize, past: bool) -> Vec<u32> {
    if m == 0 {
        return Vec::new();
    }
    let (r, c) = lattice.coords(i);
    // Worst kept candidate at the top; (d2, index) order implements the
    // tie-break.
    let mut heap: BinaryHeap<(u64, u32)> = BinaryHeap::with_capacity(m + 1);
    let rho_cap = r
        .max(lattice.rows() - 1 - r)
        .max(c.max(lattice.cols() - 1 - c));
    for rho in 1..=rho_cap {
        if heap.len() == m {
            // Sites on this ring or beyond are at least `rho` away along
            // some axis, so their squared distance is at least rho^2.
            // Equality can still win on the index tie-break, hence the
            // strict comparison.
            let worst = heap.peek().unwrap().0;
            if (rho * rho) as u64 > worst {
                break;
            }
        }
        let mut consider = |rr: isize, cc: isize| {
            if rr < 0 || cc < 0 || rr as usize >= lattice.rows() || cc as usize >= lattice.cols() {
                return;
            }
            let j = lattice.site(rr as usize, cc as usize);
            if (past && j >= i) || (!past && j <= i) {
                return;
            }
            let dr = (rr - r as isize).unsigned_abs() as u64;
            let dc = (cc - c as isize).unsigned_abs() as u64;
            let cand = (dr * dr + dc * dc, j as u32);
            if heap.len() < m {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        };
        let (ri, ci, rho) = (r as isize, c as isize, rho as isize);
        for cc in (ci - rho)..=(ci + rho) {
            consider(ri - rho, cc);
            consider(ri + rho, cc);
        }
        for rr in (ri - rho + 1)..=(ri + rho - 1) {
            consider(rr, ci - rho);
            consider(rr, ci + rho);
        }
    }
    let mut out: Vec<u32> = heap.into_iter().map(|(_, j)| j).collect();
    out.sort_unstable();
    out
}

fn site_plan(lattice: Lattice, i: usize, m_past: usize, m_future: usize) -> SitePlan {
    let past = nearest(lattice, i, m_past, true);
    let future = nearest(lattice, i, m_future, false);
    let center = past.len();
    let mut members: Vec<u32> = Vec::with_capacity(past.len() + 1 + future.len());
    members.extend_from_slice(&past);
    members.push(i as u32);
    members.extend_from_slice(&future);

    let mut pairs_past = Vec::new();
    let mut pairs_center = Vec::new();
    let mut pairs_mixed = Vec::new();
    for (la, &a) in members.iter().enumerate() {
        for nb in lattice.neighbors(a as usize) {
            let nb = nb as u32;
            if nb <= a {
                continue;
            }
            let Some(lb) = members.iter().position(|&s| s == nb) else {
                continue;
            };
            let (la, lb) = (la as u16, lb as u16);
            if la as usize == center || lb as usize == center {
                pairs_center.push(if la as usize == center { lb } else { la });
            } else if (la as usize) < center && (lb as usize) < center {
                pairs_past.push((la, lb));
            } else {
                pairs_mixed.push((la, lb));
            }
        }
    }
    SitePlan {
        past,
        future,
        pairs_past,
        pairs_center,
        pairs_mixed,
    }
}
