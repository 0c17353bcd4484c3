//! Minimum `R`-cut of the absolute-correlation graph under block-size rules.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::sat_pow;

/// Exact search is used when at most this many partitions satisfy the rule.
const EXACT_LIMIT: f64 = 1e6;
const RESTARTS: usize = 16;

/// Admissible block sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeRule {
    /// Block sizes must equal this multiset.
    Exact(Vec<usize>),
    /// Any sizes with `Σ k^{|S_r|} ≤ n`.
    Budget { k: usize, n: usize },
}

impl SizeRule {
    fn allows(&self, sizes: &[usize]) -> bool {
        match self {
            SizeRule::Exact(want) => {
                let mut a = sizes.to_vec();
                let mut b = want.clone();
                a.sort_unstable();
                b.sort_unstable();
                a == b
            }
            SizeRule::Budget { k, n } => {
                sizes.iter().fold(0usize, |acc, &s| acc.saturating_add(sat_pow(*k, s))) <= *n
            }
        }
    }
}

/// Non-increasing compositions of `d` into `r` positive parts.
fn size_multisets(d: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let hi = max.min(left + 1 - parts);
        for s in (1..=hi).rev() {
            if s * parts < left {
                break;
            }
            cur.push(s);
            rec(left - s, parts - 1, s, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if r >= 1 && r <= d {
        rec(d, r, d, &mut Vec::new(), &mut out);
    }
    out
}

fn ln_fact(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Number of unordered partitions of `d` coordinates into `r` blocks whose
/// sizes satisfy `rule`.
pub fn partition_count(d: usize, r: usize, rule: &SizeRule) -> f64 {
    size_multisets(d, r)
        .into_iter()
        .filter(|s| rule.allows(s))
        .map(|s| {
            let mut ln = ln_fact(d);
            for &p in &s {
                ln -= ln_fact(p);
            }
            let mut i = 0;
            while i < s.len() {
                let j = s[i..].iter().take_while(|&&v| v == s[i]).count();
                ln -= ln_fact(j);
                i += j;
            }
            ln.exp()
        })
        .sum()
}

/// A partition with its cross-block objective `Σ_{r≠r'} Σ |ρ̂_{ii'}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub blocks: Vec<Vec<usize>>,
    pub objective: f64,
    pub exact: bool,
}

fn objective(w: &DMatrix<f64>, assign: &[usize]) -> f64 {
    let d = assign.len();
    let mut cut = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            if assign[i] != assign[j] {
                cut += w[(i, j)];
            }
        }
    }
    2.0 * cut
}

fn to_blocks(assign: &[usize], r: usize) -> Vec<Vec<usize>> {
    let mut blocks = vec![Vec::new(); r];
    for (i, &b) in assign.iter().enumerate() {
        blocks[b].push(i);
    }
    blocks.sort();
    blocks
}

struct Search<'a> {
    w: &'a DMatrix<f64>,
    r: usize,
    rule: &'a SizeRule,
    max_size: usize,
    assign: Vec<usize>,
    sizes: Vec<usize>,
    best: f64,
    best_assign: Vec<usize>,
}

impl Search<'_> {
    fn go(&mut self, i: usize, used: usize, cost: f64) {
        let d = self.assign.len();
        if cost >= self.best {
            return;
        }
        if i == d {
            if used == self.r && self.rule.allows(&self.sizes) {
                self.best = cost;
                self.best_assign = self.assign.clone();
            }
            return;
        }
        if d - i < self.r - used {
            return;
        }
        let open = if used < self.r { used + 1 } else { used };
        for b in 0..open {
            if self.sizes[b] == self.max_size {
                continue;
            }
            let add: f64 = (0..i).filter(|&j| self.assign[j] != b).map(|j| self.w[(i, j)]).sum();
            self.assign[i] = b;
            self.sizes[b] += 1;
            self.go(i + 1, used.max(b + 1), cost + add);
            self.sizes[b] -= 1;
        }
    }
}

fn local_search(w: &DMatrix<f64>, assign: &mut [usize], r: usize, rule: &SizeRule) {
    let d = assign.len();
    let mut sizes = vec![0; r];
    for &b in assign.iter() {
        sizes[b] += 1;
    }
    // gain of moving i from its block to b: Σ_{j∈own} w - Σ_{j∈b} w
    let link = |assign: &[usize], i: usize, b: usize| -> f64 {
        (0..d).filter(|&j| j != i && assign[j] == b).map(|j| w[(i, j)]).sum()
    };
    loop {
        let mut improved = false;
        for i in 0..d {
            let a = assign[i];
            for b in 0..r {
                if b == a {
                    continue;
                }
                sizes[a] -= 1;
                sizes[b] += 1;
                let ok = sizes[a] > 0 && rule.allows(&sizes);
                sizes[a] += 1;
                sizes[b] -= 1;
                if ok && link(assign, i, b) - link(assign, i, a) > 1e-12 {
                    sizes[a] -= 1;
                    sizes[b] += 1;
                    assign[i] = b;
                    improved = true;
                    break;
                }
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                let (a, b) = (assign[i], assign[j]);
                if a == b {
                    continue;
                }
                let gain = link(assign, i, b) - link(assign, i, a) + link(assign, j, a)
                    - link(assign, j, b)
                    - 2.0 * w[(i, j)];
                if gain > 1e-12 {
                    assign.swap(i, j);
                    improved = true;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// Partition of `0..d` into `r` blocks whose sizes satisfy `rule`, minimizing
/// the absolute correlation summed across blocks. Exhaustive branch and bound
/// when at most 10^6 partitions qualify, otherwise move/swap local search from
/// several deterministic starts.
pub fn min_rcut_partition(rho: &DMatrix<f64>, r: usize, rule: &SizeRule) -> Result<CutResult> {
    let d = rho.nrows();
    if r == 0 || r > d {
        return Err(Error::Config(format!("cannot split {d} coordinates into {r} blocks")));
    }
    let shapes: Vec<Vec<usize>> = size_multisets(d, r).into_iter().filter(|s| rule.allows(s)).collect();
    if shapes.is_empty() {
        return Err(Error::Config(format!("no block sizes for d = {d}, R = {r} satisfy {rule:?}")));
    }
    let w = rho.map(f64::abs);
    if r == 1 {
        return Ok(CutResult { blocks: vec![(0..d).collect()], objective: 0.0, exact: true });
    }
    if partition_count(d, r, rule) <= EXACT_LIMIT {
        let max_size = shapes.iter().map(|s| s[0]).max().unwrap_or(d);
        let mut s = Search {
            w: &w,
            r,
            rule,
            max_size,
            assign: vec![0; d],
            sizes: vec![0; r],
            best: f64::INFINITY,
            best_assign: Vec::new(),
        };
        s.go(0, 0, 0.0);
        let objective = objective(&w, &s.best_assign);
        return Ok(CutResult { blocks: to_blocks(&s.best_assign, r), objective, exact: true });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for start in 0..RESTARTS {
        let shape = if start == 0 { shapes[shapes.len() - 1].clone() } else { shapes[rng.random_range(0..shapes.len())].clone() };
        let mut assign: Vec<usize> = shape.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
        if start > 0 {
            assign.shuffle(&mut rng);
        }
        local_search(&w, &mut assign, r, rule);
        let obj = objective(&w, &assign);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, assign));
        }
    }
    let (objective, assign) = best.expect("at least one restart");
    Ok(CutResult { blocks: to_blocks(&assign, r), objective, exact: false })
}
