//! Dynamic stochastic block model with planted, drifting communities.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::EdgeEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub slices: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of nodes reassigned at every slice after the first.
    pub migrate_fraction: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            n_nodes: 120,
            n_communities: 4,
            slices: 5,
            p_in: 0.3,
            p_out: 0.02,
            migrate_fraction: 0.05,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.slices == 0 {
            return Err(Error::Config(
                "SBM needs at least one node and one slice".into(),
            ));
        }
        if self.n_communities == 0 || self.n_communities > self.n_nodes {
            return Err(Error::Config(format!(
                "community count {} must be in 1..={}",
                self.n_communities, self.n_nodes
            )));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 ≤ p_out < p_in ≤ 1, got p_in={}, p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(0.0..1.0).contains(&self.migrate_fraction) {
            return Err(Error::Config(format!(
                "migrate fraction must be in [0, 1), got {}",
                self.migrate_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSbm {
    pub events: Vec<EdgeEvent>,
    /// `membership[t][i]` is the planted community of node `i` at slice `t`.
    pub membership: Vec<Vec<usize>>,
}

impl DynamicSbm {
    /// Edges of slice `t` as `(i, j)` with `i < j`.
    pub fn slice_edges(&self, t: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.events
            .iter()
            .filter(move |e| e.time == t as f64 && !e.is_self_loop())
            .map(|e| (e.u.parse().unwrap(), e.v.parse().unwrap()))
    }

    pub fn write_events<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# time\tu\tv\tweight")?;
        for e in &self.events {
            if e.weight == 1.0 {
                writeln!(out, "{}\t{}\t{}", e.time, e.u, e.v)?;
            } else {
                writeln!(out, "{}\t{}\t{}\t{}", e.time, e.u, e.v, e.weight)?;
            }
        }
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# slice\tnode\tcommunity")?;
        for (t, members) in self.membership.iter().enumerate() {
            for (i, c) in members.iter().enumerate() {
                writeln!(out, "{t}\t{i}\t{c}")?;
            }
        }
        Ok(())
    }

    /// Writes `events.tsv` and `truth.tsv` into `dir`, returning their paths.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let events = dir.join("events.tsv");
        let truth = dir.join("truth.tsv");
        let mut w = BufWriter::new(File::create(&events)?);
        self.write_events(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(&truth)?);
        self.write_truth(&mut w)?;
        w.flush()?;
        Ok((events, truth))
    }
}

/// Slice 0 assigns node `i` to community `i mod c`. Each later slice copies
/// the previous assignment and moves `ceil(migrate_fraction * n)` distinct,
/// uniformly chosen nodes to a uniformly chosen different community. Edges
/// are independent Bernoulli draws per pair and slice. Nodes that end up
/// with no edge at all are registered with a zero-weight self-loop at slice
/// 0 so the node universe always has `n_nodes` entries.
pub fn generate_dynamic_sbm(p: &SbmParams) -> Result<DynamicSbm> {
    p.validate()?;
    let n = p.n_nodes;
    let c = p.n_communities;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut membership: Vec<Vec<usize>> = Vec::with_capacity(p.slices);
    membership.push((0..n).map(|i| i % c).collect());
    let movers = (p.migrate_fraction * n as f64).ceil() as usize;
    for _ in 1..p.slices {
        let mut next = membership.last().unwrap().clone();
        if c > 1 && movers > 0 {
            for node in sample(&mut rng, n, movers.min(n)) {
                let old = next[node];
                let pick = rng.random_range(0..c - 1);
                next[node] = if pick >= old { pick + 1 } else { pick };
            }
        }
        membership.push(next);
    }

    let mut events = Vec::new();
    let mut touched = vec![false; n];
    for (t, members) in membership.iter().enumerate() {
        for i in 0..n {
            for j in (i + 1)..n {
                let prob = if members[i] == members[j] {
                    p.p_in
                } else {
                    p.p_out
                };
                if rng.random::<f64>() < prob {
                    touched[i] = true;
                    touched[j] = true;
                    events.push(EdgeEvent::new(t as f64, i.to_string(), j.to_string(), 1.0));
                }
            }
        }
    }
    for i in (0..n).filter(|&i| !touched[i]) {
        events.push(EdgeEvent::new(0.0, i.to_string(), i.to_string(), 0.0));
    }
    Ok(DynamicSbm { events, membership })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SbmParams {
        SbmParams {
            n_nodes: 24,
            n_communities: 3,
            slices: 4,
            p_in: 0.5,
            p_out: 0.05,
            migrate_fraction: 0.1,
            seed: 3,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate_dynamic_sbm(&params()).unwrap(),
            generate_dynamic_sbm(&params()).unwrap()
        );
        let other = SbmParams {
            seed: 4,
            ..params()
        };
        assert_ne!(
            generate_dynamic_sbm(&params()).unwrap(),
            generate_dynamic_sbm(&other).unwrap()
        );
    }

    #[test]
    fn round_robin_first_slice() {
        let sbm = generate_dynamic_sbm(&params()).unwrap();
        assert_eq!(
            sbm.membership[0],
            (0..24).map(|i| i % 3).collect::<Vec<_>>()
        );
    }

    #[test]
    fn migration_moves_expected_count() {
        let sbm = generate_dynamic_sbm(&params()).unwrap();
        for t in 1..4 {
            let moved = (0..24)
                .filter(|&i| sbm.membership[t][i] != sbm.membership[t - 1][i])
                .count();
            assert_eq!(moved, 3); // ceil(0.1 * 24)
        }
    }

    #[test]
    fn no_migration_keeps_truth() {
        let sbm = generate_dynamic_sbm(&SbmParams {
            migrate_fraction: 0.0,
            ..params()
        })
        .unwrap();
        assert!(sbm.membership.iter().all(|m| m == &sbm.membership[0]));
    }

    #[test]
    fn full_p_in_gives_cliques() {
        let p = SbmParams {
            p_in: 1.0,
            p_out: 0.0,
            ..params()
        };
        let sbm = generate_dynamic_sbm(&p).unwrap();
        for t in 0..p.slices {
            let m = &sbm.membership[t];
            let edges: Vec<(usize, usize)> = sbm.slice_edges(t).collect();
            assert!(edges.iter().all(|&(i, j)| m[i] == m[j]));
            let expected: usize = (0..3)
                .map(|c| {
                    let size = m.iter().filter(|&&x| x == c).count();
                    size * size.saturating_sub(1) / 2
                })
                .sum();
            assert_eq!(edges.len(), expected);
        }
    }

    #[test]
    fn invalid_params() {
        assert!(generate_dynamic_sbm(&SbmParams {
            p_in: 0.1,
            p_out: 0.2,
            ..params()
        })
        .is_err());
        assert!(generate_dynamic_sbm(&SbmParams {
            migrate_fraction: 1.0,
            ..params()
        })
        .is_err());
        assert!(generate_dynamic_sbm(&SbmParams {
            n_communities: 0,
            ..params()
        })
        .is_err());
    }
}
