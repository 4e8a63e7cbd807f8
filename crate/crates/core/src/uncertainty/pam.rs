//! Stratum clustering: Gower dissimilarity, PAM (k-medoids), and silhouette
//! selection of the cluster count.
//!
//! Strata are few (tens to low hundreds), so the full dissimilarity matrix
//! and the classic BUILD/SWAP algorithm are the right tools; everything is
//! deterministic, with ties broken by lowest stratum id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::UncertaintyError;
use crate::microdata::StratumProfile;

/// Gower dissimilarity between two stratum profiles: the mean of the
/// range-scaled ordinal gap and the two nominal mismatch indicators.
/// Always lies in [0, 1].
pub fn gower_distance(
    a: &StratumProfile,
    b: &StratumProfile,
    ordinal_range: u32,
) -> Result<f64, UncertaintyError> {
    if ordinal_range < 2 {
        return Err(UncertaintyError::OrdinalRangeTooSmall(ordinal_range));
    }
    for p in [a, b] {
        if p.income_bracket_rank < 1 || p.income_bracket_rank > ordinal_range {
            return Err(UncertaintyError::RankOutOfRange {
                rank: p.income_bracket_rank,
                range: ordinal_range,
            });
        }
    }
    let rank_gap = a.income_bracket_rank.abs_diff(b.income_bracket_rank) as f64
        / (ordinal_range - 1) as f64;
    let forms = (a.special_forms_flag != b.special_forms_flag) as u8 as f64;
    let code = (a.usefulness_code != b.usefulness_code) as u8 as f64;
    Ok((rank_gap + forms + code) / 3.0)
}

/// A partition of strata into clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// stratum id → cluster index in 0..j_star.
    pub cluster_of: BTreeMap<u32, usize>,
    pub j_star: usize,
    /// Medoid stratum ids, one per cluster.
    pub medoids: Vec<u32>,
    /// Total dissimilarity to assigned medoids.
    pub total_cost: f64,
}

impl ClusterAssignment {
    /// Single-cluster assignment (used when clustering is skipped).
    pub fn single_cluster(strata: &[StratumProfile]) -> Self {
        let cluster_of = strata.iter().map(|p| (p.stratum_id, 0usize)).collect();
        Self {
            cluster_of,
            j_star: 1,
            medoids: vec![strata.first().map(|p| p.stratum_id).unwrap_or(0)],
            total_cost: 0.0,
        }
    }
}

fn dissimilarity_matrix(
    strata: &[StratumProfile],
    ordinal_range: u32,
) -> Result<Vec<f64>, UncertaintyError> {
    let j = strata.len();
    let mut d = vec![0.0; j * j];
    for a in 0..j {
        for b in (a + 1)..j {
            let v = gower_distance(&strata[a], &strata[b], ordinal_range)?;
            d[a * j + b] = v;
            d[b * j + a] = v;
        }
    }
    Ok(d)
}

/// PAM (k-medoids) with the classic BUILD seeding and best-improvement SWAP.
///
/// Fully deterministic: candidate ties are resolved toward the lowest stratum
/// id, so `seed` never influences the result; it is accepted to keep the
/// call shape uniform with the other stochastic stages.
pub fn pam_cluster(
    strata: &[StratumProfile],
    clusters: usize,
    ordinal_range: u32,
    _seed: u64,
) -> Result<ClusterAssignment, UncertaintyError> {
    let j = strata.len();
    if clusters == 0 || clusters > j {
        return Err(UncertaintyError::TooManyClusters {
            requested: clusters,
            strata: j,
        });
    }
    let d = dissimilarity_matrix(strata, ordinal_range)?;
    let dist = |a: usize, b: usize| d[a * j + b];

    // BUILD: first medoid minimizes total dissimilarity; each further medoid
    // is the point whose addition reduces cost the most.
    let mut medoids: Vec<usize> = Vec::with_capacity(clusters);
    {
        let mut best: Option<(f64, u32, usize)> = None;
        for cand in 0..j {
            let cost: f64 = (0..j).map(|i| dist(i, cand)).sum();
            let key = (cost, strata[cand].stratum_id, cand);
            if best.is_none_or(|(c, id, _)| key.0 < c || (key.0 == c && key.1 < id)) {
                best = Some(key);
            }
        }
        medoids.push(best.expect("nonempty").2);
    }
    let mut nearest: Vec<f64> = (0..j).map(|i| dist(i, medoids[0])).collect();
    while medoids.len() < clusters {
        let mut best: Option<(f64, u32, usize)> = None;
        for cand in 0..j {
            if medoids.contains(&cand) {
                continue;
            }
            let gain: f64 = (0..j)
                .map(|i| (nearest[i] - dist(i, cand)).max(0.0))
                .sum();
            let key = (-gain, strata[cand].stratum_id, cand);
            if best.is_none_or(|(g, id, _)| key.0 < g || (key.0 == g && key.1 < id)) {
                best = Some(key);
            }
        }
        let chosen = best.expect("candidates remain").2;
        medoids.push(chosen);
        for i in 0..j {
            nearest[i] = nearest[i].min(dist(i, chosen));
        }
    }

    let total_cost = |medoids: &[usize]| -> f64 {
        (0..j)
            .map(|i| {
                medoids
                    .iter()
                    .map(|&m| dist(i, m))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };

    // SWAP: repeatedly apply the best (medoid, non-medoid) exchange.
    let mut cost = total_cost(&medoids);
    loop {
        let mut best_swap: Option<(f64, u32, u32, usize, usize)> = None;
        for (mi, &m) in medoids.iter().enumerate() {
            for h in 0..j {
                if medoids.contains(&h) {
                    continue;
                }
                let mut trial: Vec<usize> = medoids.clone();
                trial[mi] = h;
                let c = total_cost(&trial);
                if c < cost - 1e-15 {
                    let key = (c, strata[m].stratum_id, strata[h].stratum_id, mi, h);
                    let better = match &best_swap {
                        None => true,
                        Some((bc, bm, bh, _, _)) => {
                            c < *bc - 1e-15
                                || ((c - bc).abs() <= 1e-15
                                    && (key.1, key.2) < (*bm, *bh))
                        }
                    };
                    if better {
                        best_swap = Some(key);
                    }
                }
            }
        }
        match best_swap {
            Some((c, _, _, mi, h)) => {
                debug_assert!(c <= cost, "SWAP must not increase total cost");
                medoids[mi] = h;
                cost = c;
            }
            None => break,
        }
    }

    // Final assignment; ties toward the lowest-id medoid.
    let mut ordered: Vec<usize> = medoids.clone();
    ordered.sort_by_key(|&m| strata[m].stratum_id);
    let mut cluster_of = BTreeMap::new();
    for i in 0..j {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, &m) in ordered.iter().enumerate() {
            let dd = dist(i, m);
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        cluster_of.insert(strata[i].stratum_id, best);
    }

    Ok(ClusterAssignment {
        cluster_of,
        j_star: clusters,
        medoids: ordered.iter().map(|&m| strata[m].stratum_id).collect(),
        total_cost: cost,
    })
}

/// Mean silhouette width of an assignment.
///
/// Per stratum: s = (b − a) / max(a, b) with a the mean dissimilarity to its
/// own cluster and b the smallest mean dissimilarity to another cluster;
/// singletons and all-zero neighborhoods score 0. Unweighted mean across
/// strata. Returns `None` when every dissimilarity is zero (undefined).
pub fn silhouette_width(
    strata: &[StratumProfile],
    assignment: &ClusterAssignment,
    ordinal_range: u32,
) -> Result<Option<f64>, UncertaintyError> {
    let j = strata.len();
    let d = dissimilarity_matrix(strata, ordinal_range)?;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    let dist = |a: usize, b: usize| d[a * j + b];
    let cluster: Vec<usize> = strata
        .iter()
        .map(|p| assignment.cluster_of[&p.stratum_id])
        .collect();
    let sizes: Vec<usize> = (0..assignment.j_star)
        .map(|c| cluster.iter().filter(|&&x| x == c).count())
        .collect();

    let mut total = 0.0;
    for i in 0..j {
        let own = cluster[i];
        if sizes[own] <= 1 {
            continue; // s = 0
        }
        let mut sums = vec![0.0; assignment.j_star];
        for other in 0..j {
            if other != i {
                sums[cluster[other]] += dist(i, other);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..assignment.j_star)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(Some(total / j as f64))
}

/// Default candidate range for the cluster count: 2..=min(40, J−1).
pub fn default_candidate_range(strata_count: usize) -> std::ops::RangeInclusive<usize> {
    2..=(40usize.min(strata_count.saturating_sub(1)).max(2))
}

/// Outcome of silhouette-based selection of the cluster count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub assignment: ClusterAssignment,
    /// (candidate J, mean silhouette width), in candidate order.
    pub silhouette_by_j: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// Choose the cluster count by maximizing mean silhouette width over the
/// candidate range; ties resolve toward fewer clusters.
///
/// When all dissimilarities are zero the silhouette is undefined: the result
/// falls back to two clusters with a warning.
pub fn select_cluster_count(
    strata: &[StratumProfile],
    candidates: std::ops::RangeInclusive<usize>,
    ordinal_range: u32,
) -> Result<ClusterSelection, UncertaintyError> {
    if strata.len() < 3 {
        return Err(UncertaintyError::TooFewStrata {
            needed: 3,
            got: strata.len(),
        });
    }
    let lo = *candidates.start().max(&2);
    let hi = *candidates.end().min(&strata.len());

    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, ClusterAssignment)> = None;
    for j in lo..=hi {
        let assignment = pam_cluster(strata, j, ordinal_range, 0)?;
        match silhouette_width(strata, &assignment, ordinal_range)? {
            None => {
                let assignment = pam_cluster(strata, 2.min(strata.len()), ordinal_range, 0)?;
                return Ok(ClusterSelection {
                    assignment,
                    silhouette_by_j: Vec::new(),
                    warnings: vec![
                        "all stratum profiles identical; silhouette undefined, using 2 clusters"
                            .into(),
                    ],
                });
            }
            Some(s) => {
                curve.push((j, s));
                // Strictly-greater keeps the smallest J on ties.
                if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
                    best = Some((s, j, assignment));
                }
            }
        }
    }
    let (_, _, assignment) = best.expect("candidate range nonempty");
    Ok(ClusterSelection {
        assignment,
        silhouette_by_j: curve,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: u32, rank: u32, forms: u32, code: u32) -> StratumProfile {
        StratumProfile {
            stratum_id: id,
            size: 10,
            income_bracket_rank: rank,
            special_forms_flag: forms,
            usefulness_code: code,
        }
    }

    #[test]
    fn gower_identity_and_maximum() {
        let a = profile(1, 3, 0, 1);
        assert_eq!(gower_distance(&a, &a, 5).unwrap(), 0.0);
        let far = profile(2, 5, 1, 0);
        let near_origin = profile(3, 1, 0, 1);
        let d = gower_distance(&near_origin, &far, 5).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gower_rank_gap_formula() {
        let a = profile(1, 1, 0, 0);
        let b = profile(2, 3, 0, 0);
        let d = gower_distance(&a, &b, 5).unwrap();
        assert!((d - (2.0 / 4.0) / 3.0).abs() < 1e-15);
        assert!((d - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gower_is_symmetric_and_bounded() {
        let profiles: Vec<_> = (0..6)
            .map(|i| profile(i, 1 + (i % 5), i % 2, i % 3))
            .collect();
        for a in &profiles {
            for b in &profiles {
                let d1 = gower_distance(a, b, 5).unwrap();
                let d2 = gower_distance(b, a, 5).unwrap();
                assert_eq!(d1, d2);
                assert!((0.0..=1.0).contains(&d1));
            }
        }
    }

    #[test]
    fn gower_rejects_bad_rank() {
        let a = profile(1, 6, 0, 0);
        let b = profile(2, 1, 0, 0);
        assert!(matches!(
            gower_distance(&a, &b, 5),
            Err(UncertaintyError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            gower_distance(&b, &b, 1),
            Err(UncertaintyError::OrdinalRangeTooSmall(1))
        ));
    }

    #[test]
    fn one_cluster_per_stratum_costs_nothing() {
        let strata: Vec<_> = (0..5).map(|i| profile(i, 1 + i, 0, 0)).collect();
        let a = pam_cluster(&strata, 5, 6, 0).unwrap();
        assert_eq!(a.total_cost, 0.0);
        assert_eq!(a.j_star, 5);
    }

    #[test]
    fn recovers_separated_groups() {
        // Two groups far apart in all three variables.
        let mut strata = Vec::new();
        for i in 0..4 {
            strata.push(profile(i, 1 + (i % 2), 0, 0));
        }
        for i in 4..8 {
            strata.push(profile(i, 9 + (i % 2), 1, 1));
        }
        let a = pam_cluster(&strata, 2, 10, 0).unwrap();
        let g0 = a.cluster_of[&0];
        for i in 0..4u32 {
            assert_eq!(a.cluster_of[&i], g0);
        }
        let g1 = a.cluster_of[&4];
        assert_ne!(g0, g1);
        for i in 4..8u32 {
            assert_eq!(a.cluster_of[&i], g1);
        }

        // Exhaustive check over all 2-partitions: PAM found the best cost
        // achievable with two medoids.
        let mut best = f64::INFINITY;
        for m1 in 0..8 {
            for m2 in (m1 + 1)..8 {
                let cost: f64 = strata
                    .iter()
                    .map(|p| {
                        let d1 = gower_distance(p, &strata[m1], 10).unwrap();
                        let d2 = gower_distance(p, &strata[m2], 10).unwrap();
                        d1.min(d2)
                    })
                    .sum();
                best = best.min(cost);
            }
        }
        assert!((a.total_cost - best).abs() < 1e-12);
    }

    #[test]
    fn seed_does_not_matter() {
        let strata: Vec<_> = (0..12)
            .map(|i| profile(i, 1 + (i % 6), i % 2, (i / 4) % 3))
            .collect();
        let a = pam_cluster(&strata, 3, 8, 1).unwrap();
        let b = pam_cluster(&strata, 3, 8, 99).unwrap();
        assert_eq!(a.cluster_of, b.cluster_of);
        assert_eq!(a.medoids, b.medoids);
    }

    #[test]
    fn selects_three_tight_groups() {
        let mut strata = Vec::new();
        let mut id = 0;
        for (rank, forms, code) in [(1u32, 0u32, 0u32), (8, 1, 1), (15, 0, 2)] {
            for _ in 0..5 {
                strata.push(profile(id, rank, forms, code));
                id += 1;
            }
        }
        let sel = select_cluster_count(&strata, 2..=6, 16).unwrap();
        assert_eq!(sel.assignment.j_star, 3, "curve: {:?}", sel.silhouette_by_j);
        let s3 = sel.silhouette_by_j.iter().find(|(j, _)| *j == 3).unwrap().1;
        for (j, s) in &sel.silhouette_by_j {
            if *j != 3 {
                assert!(s3 >= *s, "s({j}) = {s} beats s(3) = {s3}");
            }
        }
    }

    #[test]
    fn ninety_five_strata_mimic_selects_low_tens() {
        // A synthetic stand-in for a 95-stratum tax-year design: 16 income
        // brackets crossed with two nominal variables, one combination
        // missing. Only a qualitative anchor: the selected count should land
        // well below J and above the trivial 2.
        let mut strata = Vec::new();
        let mut id = 0u32;
        'outer: for rank in 1..=16u32 {
            for forms in 0..2u32 {
                for code in 0..3u32 {
                    strata.push(profile(id, rank, forms, code));
                    id += 1;
                    if strata.len() == 95 {
                        break 'outer;
                    }
                }
            }
        }
        let sel = select_cluster_count(&strata, default_candidate_range(strata.len()), 16).unwrap();
        assert!(
            (2..=40).contains(&sel.assignment.j_star),
            "J* = {}",
            sel.assignment.j_star
        );
        assert!(!sel.silhouette_by_j.is_empty());
        // Every stratum assigned exactly once and clusters partition the set.
        assert_eq!(sel.assignment.cluster_of.len(), 95);
    }

    #[test]
    fn identical_strata_fall_back_to_two_clusters() {
        let strata: Vec<_> = (0..6).map(|i| profile(i, 3, 1, 1)).collect();
        let sel = select_cluster_count(&strata, 2..=5, 8).unwrap();
        assert_eq!(sel.assignment.j_star, 2);
        assert!(!sel.warnings.is_empty());
    }

    #[test]
    fn too_few_strata_rejected() {
        let strata: Vec<_> = (0..2).map(|i| profile(i, 1 + i, 0, 0)).collect();
        assert!(matches!(
            select_cluster_count(&strata, 2..=4, 5),
            Err(UncertaintyError::TooFewStrata { .. })
        ));
    }
}
