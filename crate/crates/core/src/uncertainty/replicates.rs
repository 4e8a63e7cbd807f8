//! Cluster-stratified bootstrap replicates.
//!
//! Each replicate redraws, for every cluster j, exactly n★_j observation
//! indices uniformly with replacement from that cluster, so the replicate has
//! the same size and cluster composition as the base sample. Replicate l uses
//! its own generator seeded by `subseed(seed, l)`: generation parallelizes
//! across replicates and the result never depends on evaluation order or
//! worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, UncertaintyError};
use crate::microdata::ImplicateView;
use crate::numeric::subseed;

/// Cluster membership of one implicate's rows, ready for replicate drawing.
#[derive(Debug, Clone)]
pub struct ClusteredSample {
    clusters: Vec<Vec<u32>>,
    n: usize,
}

impl ClusteredSample {
    /// Group a view's rows by assigned cluster.
    pub fn new(
        view: &ImplicateView<'_>,
        assignment: &ClusterAssignment,
    ) -> Result<Self, UncertaintyError> {
        let strata = view.strata().ok_or(UncertaintyError::NotStratified)?;
        let mut clusters = vec![Vec::new(); assignment.j_star];
        for (row, &stratum) in strata.iter().enumerate() {
            let &cluster = assignment
                .cluster_of
                .get(&stratum)
                .ok_or(UncertaintyError::UnassignedStratum(stratum))?;
            clusters[cluster].push(row as u32);
        }
        if let Some(empty) = clusters.iter().position(|c| c.is_empty()) {
            return Err(UncertaintyError::EmptyCluster(empty));
        }
        Ok(Self {
            clusters,
            n: strata.len(),
        })
    }

    /// Trivial single-cluster grouping for unclustered bootstraps.
    pub fn unclustered(n: usize) -> Self {
        Self {
            clusters: vec![(0..n as u32).collect()],
            n,
        }
    }

    pub fn clusters(&self) -> &[Vec<u32>] {
        &self.clusters
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// The index list of replicate `l` (1-based), in cluster-major draw order.
    pub fn replicate_indices(&self, l: u64, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, l));
        let mut out = Vec::with_capacity(self.n);
        for members in &self.clusters {
            for _ in 0..members.len() {
                out.push(members[rng.random_range(0..members.len())]);
            }
        }
        out
    }

    /// Multiplicity form of replicate `l`: counts[i] = times row i was drawn.
    ///
    /// Consumes the generator identically to [`Self::replicate_indices`], so
    /// both forms describe the same replicate.
    pub fn fill_replicate_counts(&self, l: u64, seed: u64, counts: &mut [u32]) {
        debug_assert_eq!(counts.len(), self.n);
        counts.fill(0);
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, l));
        for members in &self.clusters {
            for _ in 0..members.len() {
                counts[members[rng.random_range(0..members.len())] as usize] += 1;
            }
        }
    }
}

/// L index-resampled replicates of a base sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateSet {
    pub replicate_count: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Flattened L×n index lists; replicate l occupies `l*n..(l+1)*n`.
    indices: Vec<u32>,
}

impl ReplicateSet {
    pub fn replicate(&self, l: usize) -> &[u32] {
        let n = self.sample_size;
        &self.indices[l * n..(l + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        (0..self.replicate_count).map(move |l| self.replicate(l))
    }

    /// Write as CSV: one row per replicate, columns are draw positions.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for l in 0..self.replicate_count {
            let row: Vec<String> = self.replicate(l).iter().map(|i| i.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Materialize L replicates of a clustered view.
pub fn make_replicates(
    view: &ImplicateView<'_>,
    assignment: &ClusterAssignment,
    replicate_count: usize,
    seed: u64,
) -> Result<ReplicateSet, UncertaintyError> {
    use rayon::prelude::*;

    let clustered = ClusteredSample::new(view, assignment)?;
    let n = clustered.sample_size();
    let per_replicate: Vec<Vec<u32>> = (1..=replicate_count as u64)
        .into_par_iter()
        .map(|l| clustered.replicate_indices(l, seed))
        .collect();
    let mut indices = Vec::with_capacity(replicate_count * n);
    for r in per_replicate {
        indices.extend(r);
    }
    Ok(ReplicateSet {
        replicate_count,
        sample_size: n,
        seed,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microdata::{MicrodataSet, Observation};
    use crate::uncertainty::pam_cluster;
    use crate::microdata::StratumProfile;

    fn sample_with_strata(sizes: &[usize]) -> MicrodataSet {
        let mut obs = Vec::new();
        let mut id = 0u64;
        for (s, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                obs.push(
                    Observation::new(id, 1.0)
                        .with_stratum(s as u32)
                        .with_value("income", id as f64),
                );
                id += 1;
            }
        }
        MicrodataSet::from_observations(obs).unwrap()
    }

    fn assignment_identity(strata: usize) -> ClusterAssignment {
        let profiles: Vec<StratumProfile> = (0..strata)
            .map(|i| StratumProfile {
                stratum_id: i as u32,
                size: 0,
                income_bracket_rank: 1 + i as u32,
                special_forms_flag: 0,
                usefulness_code: 0,
            })
            .collect();
        pam_cluster(&profiles, strata, strata as u32 + 1, 0).unwrap()
    }

    #[test]
    fn single_cluster_bounds() {
        let set = sample_with_strata(&[5]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(1);
        let reps = make_replicates(&view, &assignment, 1, 7).unwrap();
        let r = reps.replicate(0);
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|&i| i < 5));
    }

    #[test]
    fn cluster_sizes_preserved() {
        let set = sample_with_strata(&[3, 7]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(2);
        let reps = make_replicates(&view, &assignment, 999, 42).unwrap();
        for r in reps.iter() {
            assert_eq!(r.len(), 10);
            let from_first = r.iter().filter(|&&i| i < 3).count();
            assert_eq!(from_first, 3, "replicate must draw 3 from cluster 0");
        }
    }

    #[test]
    fn expected_multiplicity_near_one() {
        let set = sample_with_strata(&[40]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(1);
        let clustered = ClusteredSample::new(&view, &assignment).unwrap();
        let l_total = 999u64;
        let mut counts = vec![0u32; 40];
        let mut total_of_index_0 = 0.0;
        for l in 1..=l_total {
            clustered.fill_replicate_counts(l, 5, &mut counts);
            total_of_index_0 += counts[0] as f64;
        }
        let mean = total_of_index_0 / l_total as f64;
        // Multiplicity of a fixed index is Binomial(n, 1/n): mean 1,
        // var ≈ 1 − 1/n; the replicate average sits within ±3σ/√L.
        let band = 3.0 * ((1.0 - 1.0 / 40.0) / l_total as f64).sqrt();
        assert!((mean - 1.0).abs() < band, "mean = {mean}, band = {band}");
    }

    #[test]
    fn counts_and_indices_agree() {
        let set = sample_with_strata(&[4, 6]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(2);
        let clustered = ClusteredSample::new(&view, &assignment).unwrap();
        let indices = clustered.replicate_indices(17, 3);
        let mut counts = vec![0u32; 10];
        clustered.fill_replicate_counts(17, 3, &mut counts);
        let mut from_indices = vec![0u32; 10];
        for &i in &indices {
            from_indices[i as usize] += 1;
        }
        assert_eq!(counts, from_indices);
    }

    #[test]
    fn generation_is_order_independent() {
        let set = sample_with_strata(&[8, 8]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(2);
        let a = make_replicates(&view, &assignment, 20, 11).unwrap();
        let clustered = ClusteredSample::new(&view, &assignment).unwrap();
        // Drawing replicate 13 in isolation reproduces the batch result.
        assert_eq!(a.replicate(12), clustered.replicate_indices(13, 11).as_slice());
    }

    #[test]
    fn replicate_set_round_trips_through_csv() {
        let set = sample_with_strata(&[4, 5]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(2);
        let reps = make_replicates(&view, &assignment, 3, 21).unwrap();
        let mut csv = Vec::new();
        reps.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let parsed: Vec<Vec<u32>> = text
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed.len(), 3);
        for (l, row) in parsed.iter().enumerate() {
            assert_eq!(row.as_slice(), reps.replicate(l));
        }
    }

    #[test]
    fn unassigned_stratum_is_an_error() {
        let set = sample_with_strata(&[3, 3]);
        let view = set.implicate(1).unwrap();
        let assignment = assignment_identity(1); // knows only stratum 0
        assert!(matches!(
            ClusteredSample::new(&view, &assignment),
            Err(UncertaintyError::UnassignedStratum(1))
        ));
    }
}
