//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical code paths.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub type Dense = Vec<Vec<f64>>;

/// Random symmetric nonnegative matrix with zero diagonal. `weighted` draws
/// weights in (0, 3], otherwise edges are unit.
pub fn random_symmetric(rng: &mut impl Rng, n: usize, density: f64, weighted: bool) -> Dense {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density {
                let x = if weighted {
                    3.0 * (1.0 - rng.random::<f64>())
                } else {
                    1.0
                };
                w[i][j] = x;
                w[j][i] = x;
            }
        }
    }
    w
}

pub fn to_array(w: &Dense) -> Array2<f64> {
    Array2::from_shape_fn((w.len(), w.first().map_or(0, |r| r.len())), |(i, j)| {
        w[i][j]
    })
}

pub fn from_array(a: &Array2<f64>) -> Dense {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn edges_of(w: &Dense) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..w.len() {
        for j in i..w.len() {
            if w[i][j] != 0.0 {
                out.push((i, j, w[i][j]));
            }
        }
    }
    out
}

/// Direct double sum of the modularity definition over all ordered pairs.
pub fn brute_modularity(w: &Dense, c: &[usize]) -> f64 {
    let n = w.len();
    let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[i][j]).sum()).collect();
    let two_l: f64 = d.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if c[i] == c[j] {
                q += w[i][j] - d[i] * d[j] / two_l;
            }
        }
    }
    q / two_l
}

/// NMI by explicit counting over two label vectors on the same node list.
pub fn brute_nmi(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len();
    let nf = n as f64;
    let mut ul: Vec<usize> = u.to_vec();
    ul.sort();
    ul.dedup();
    let mut vl: Vec<usize> = v.to_vec();
    vl.sort();
    vl.dedup();
    let mut numer = 0.0;
    for &a in &ul {
        let ni = (0..n).filter(|&x| u[x] == a).count() as f64;
        for &b in &vl {
            let nj = (0..n).filter(|&x| v[x] == b).count() as f64;
            let nij = (0..n).filter(|&x| u[x] == a && v[x] == b).count() as f64;
            if nij > 0.0 {
                numer += nij * (nij * nf / (ni * nj)).ln();
            }
        }
    }
    numer *= -2.0;
    let mut denom = 0.0;
    for &a in &ul {
        let ni = (0..n).filter(|&x| u[x] == a).count() as f64;
        denom += ni * (ni / nf).ln();
    }
    for &b in &vl {
        let nj = (0..n).filter(|&x| v[x] == b).count() as f64;
        denom += nj * (nj / nf).ln();
    }
    if denom == 0.0 {
        1.0
    } else {
        numer / denom
    }
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=max + 1 {
            prefix.push(label);
            grow(prefix, n, max.max(label), out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut prefix = vec![0];
    grow(&mut prefix, n, 0, &mut out);
    out
}

pub fn best_modularity(w: &Dense) -> f64 {
    set_partitions(w.len())
        .iter()
        .map(|p| brute_modularity(w, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_connected(w: &Dense) -> bool {
    let n = w.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if w[i][j] > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Every simple graph on `n` nodes (unit weights), by edge bitmask.
pub fn all_graphs(n: usize) -> impl Iterator<Item = Dense> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let m = pairs.len();
    (0u64..(1u64 << m)).map(move |mask| {
        let mut w = vec![vec![0.0; n]; n];
        for (b, &(i, j)) in pairs.iter().enumerate() {
            if mask >> b & 1 == 1 {
                w[i][j] = 1.0;
                w[j][i] = 1.0;
            }
        }
        w
    })
}

fn gram(a: &Dense) -> Dense {
    let k = a[0].len();
    let mut g = vec![vec![0.0; k]; k];
    for row in a {
        for d in 0..k {
            for e in 0..k {
                g[d][e] += row[d] * row[e];
            }
        }
    }
    g
}

/// Loop-by-loop evaluation of the A update.
pub fn reference_update_a(a: &Dense, r: &[Dense], x: &[Dense], lambda_a: f64, eps: f64) -> Dense {
    let n = a.len();
    let k = a[0].len();
    let g = gram(a);
    let mut num = vec![vec![0.0; k]; n];
    let mut core = vec![vec![0.0; k]; k];
    for c in 0..k {
        core[c][c] = lambda_a;
    }
    for (xt, rt) in x.iter().zip(r) {
        for i in 0..n {
            for c in 0..k {
                let mut s = 0.0;
                for j in 0..n {
                    for d in 0..k {
                        s += xt[i][j] * a[j][d] * rt[c][d];
                        s += xt[j][i] * a[j][d] * rt[d][c];
                    }
                }
                num[i][c] += s;
            }
        }
        for c in 0..k {
            for e in 0..k {
                let mut s = 0.0;
                for d in 0..k {
                    for f in 0..k {
                        s += rt[c][d] * g[d][f] * rt[e][f];
                        s += rt[d][c] * g[d][f] * rt[f][e];
                    }
                }
                core[c][e] += s;
            }
        }
    }
    let mut out = a.to_vec();
    for i in 0..n {
        for c in 0..k {
            let den: f64 = (0..k).map(|e| a[i][e] * core[e][c]).sum();
            out[i][c] = a[i][c] * num[i][c] / (den + eps);
        }
    }
    out
}

/// Loop-by-loop evaluation of the R update for all slices.
pub fn reference_update_r(
    a: &Dense,
    r: &[Dense],
    x: &[Dense],
    lambda_r: f64,
    eps: f64,
) -> Vec<Dense> {
    let n = a.len();
    let k = a[0].len();
    let g = gram(a);
    r.iter()
        .zip(x)
        .map(|(rt, xt)| {
            let mut out = rt.clone();
            for c in 0..k {
                for d in 0..k {
                    let mut num = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            num += a[i][c] * xt[i][j] * a[j][d];
                        }
                    }
                    let mut den = lambda_r * rt[c][d];
                    for e in 0..k {
                        for f in 0..k {
                            den += g[c][e] * rt[e][f] * g[f][d];
                        }
                    }
                    out[c][d] = rt[c][d] * num / (den + eps);
                }
            }
            out
        })
        .collect()
}

/// Loop-by-loop objective.
pub fn reference_objective(
    a: &Dense,
    r: &[Dense],
    x: &[Dense],
    lambda_a: f64,
    lambda_r: f64,
) -> f64 {
    let n = a.len();
    let k = a[0].len();
    let mut fit = 0.0;
    for (xt, rt) in x.iter().zip(r) {
        for i in 0..n {
            for j in 0..n {
                let mut approx = 0.0;
                for c in 0..k {
                    for d in 0..k {
                        approx += a[i][c] * rt[c][d] * a[j][d];
                    }
                }
                fit += (xt[i][j] - approx).powi(2);
            }
        }
    }
    let fa: f64 = a.iter().flatten().map(|v| v * v).sum();
    let fr: f64 = r.iter().flatten().flatten().map(|v| v * v).sum();
    0.5 * fit + 0.5 * (lambda_a * fa + lambda_r * fr)
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
