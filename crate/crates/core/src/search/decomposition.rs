//! Weight-vector decomposition of the objective space: a uniform simplex
//! lattice of rays, with each candidate assigned to the ray it lies closest
//! to. Used by the decomposition archive and by NSGA-III niching.

use super::pareto::{dominates, Objectives};

/// All `(i, j, k) / h` with `i + j + k = h`; `C(h + 2, 2)` vectors.
pub fn generate_weight_vectors(h: usize) -> Vec<Objectives> {
    assert!(h >= 1, "lattice resolution must be at least 1");
    let mut out = Vec::with_capacity((h + 1) * (h + 2) / 2);
    for i in (0..=h).rev() {
        for j in (0..=h - i).rev() {
            let k = h - i - j;
            out.push([
                i as f64 / h as f64,
                j as f64 / h as f64,
                k as f64 / h as f64,
            ]);
        }
    }
    out
}

/// Maps maximized objectives into `[0, 1]^3`, measured from the nadir
/// (worst observed) toward the ideal point (best observed). The nadir is
/// kept at least `1e-9` away from the ideal on every axis.
///
/// Internally the objectives are negated so both reference points are
/// minima/maxima of a minimization problem: ideal `z* = min(-f)`, nadir
/// `max(-f)`. A member that excels at objective `i` therefore lands near
/// axis `i`.
pub fn normalize(points: &[Objectives]) -> Vec<Objectives> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut ideal = [f64::INFINITY; 3];
    let mut nadir = [f64::NEG_INFINITY; 3];
    for p in points {
        for i in 0..3 {
            ideal[i] = ideal[i].min(-p[i]);
            nadir[i] = nadir[i].max(-p[i]);
        }
    }
    for i in 0..3 {
        nadir[i] = nadir[i].max(ideal[i] + 1e-9);
    }
    points
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for i in 0..3 {
                q[i] = (nadir[i] + p[i]) / (nadir[i] - ideal[i]);
            }
            q
        })
        .collect()
}

/// Distance from `p` to the ray through the origin along `w`.
pub fn perpendicular_distance(p: &Objectives, w: &Objectives) -> f64 {
    let ww: f64 = w.iter().map(|x| x * x).sum();
    let t = if ww > 0.0 {
        p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / ww
    } else {
        0.0
    };
    p.iter()
        .zip(w)
        .map(|(a, b)| (a - t * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Closest ray per point (lowest index on ties) and the distance to it.
pub fn assign(normalized: &[Objectives], weights: &[Objectives]) -> Vec<(usize, f64)> {
    normalized
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, w) in weights.iter().enumerate() {
                let d = perpendicular_distance(p, w);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSelection {
    /// Positions of retained members, ascending.
    pub retained: Vec<usize>,
    /// Ray and distance for every candidate.
    pub assignment: Vec<(usize, f64)>,
}

/// Keeps one member per subspace: among the subspace's non-dominated
/// candidates, the one nearest its ray (lowest id on ties). If more
/// subspaces are occupied than `capacity`, members of the most crowded
/// subspaces are dropped first.
pub fn decomposition_select(
    points: &[Objectives],
    ids: &[u64],
    weights: &[Objectives],
    capacity: usize,
) -> DecompositionSelection {
    let assignment = assign(&normalize(points), weights);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); weights.len()];
    for (i, &(w, _)) in assignment.iter().enumerate() {
        groups[w].push(i);
    }
    // (crowding, distance, id, position) for each subspace winner.
    let mut winners: Vec<(usize, f64, u64, usize)> = Vec::new();
    for group in &groups {
        let best = group
            .iter()
            .copied()
            .filter(|&i| !group.iter().any(|&j| dominates(&points[j], &points[i])))
            .min_by(|&a, &b| {
                assignment[a]
                    .1
                    .total_cmp(&assignment[b].1)
                    .then(ids[a].cmp(&ids[b]))
            });
        if let Some(i) = best {
            winners.push((group.len(), assignment[i].1, ids[i], i));
        }
    }
    if winners.len() > capacity {
        winners.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(b.2.cmp(&a.2)));
        winners.drain(..winners.len() - capacity);
    }
    let mut retained: Vec<usize> = winners.into_iter().map(|w| w.3).collect();
    retained.sort_unstable();
    DecompositionSelection {
        retained,
        assignment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_sizes() {
        assert_eq!(
            generate_weight_vectors(1),
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        );
        let h2 = generate_weight_vectors(2);
        assert_eq!(h2.len(), 6);
        assert!(h2.contains(&[0.5, 0.5, 0.0]));
        let h7 = generate_weight_vectors(7);
        assert_eq!(h7.len(), 36);
        assert!(h7
            .iter()
            .all(|w| (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn axis_aligned_candidates_split() {
        let w = generate_weight_vectors(1);
        let pts = [[0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9]];
        let sel = decomposition_select(&pts, &[0, 1, 2], &w, 40);
        assert_eq!(sel.retained, vec![0, 1, 2]);
        let rays: Vec<usize> = sel.assignment.iter().map(|a| a.0).collect();
        assert_eq!(rays, vec![0, 1, 2]);
    }

    #[test]
    fn perpendicular_distance_basics() {
        assert_eq!(
            perpendicular_distance(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            0.0
        );
        assert!((perpendicular_distance(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_drops_crowded_subspaces_first() {
        let w = generate_weight_vectors(1);
        let pts = [
            [0.9, 0.1, 0.1],
            [0.85, 0.12, 0.1],
            [0.1, 0.9, 0.1],
            [0.1, 0.1, 0.9],
        ];
        let sel = decomposition_select(&pts, &[0, 1, 2, 3], &w, 2);
        assert_eq!(sel.retained.len(), 2);
        assert!(sel.retained.iter().all(|&i| i >= 2));
    }
}
