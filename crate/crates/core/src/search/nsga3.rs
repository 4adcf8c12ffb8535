//! NSGA-III survivor selection: non-dominated sorting, then reference-point
//! niching on the last front that does not fit.

use super::decomposition::{assign, normalize};
use super::pareto::{dominates, Objectives};

/// Fronts of mutually non-dominated points, best first.
pub fn non_dominated_sort(points: &[Objectives]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if dominates(&points[i], &points[j]) {
                dominates_list[i].push(j);
            } else if dominates(&points[j], &points[i]) {
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Rank (front index) per point.
pub fn ranks(points: &[Objectives]) -> Vec<usize> {
    let mut r = vec![0; points.len()];
    for (k, front) in non_dominated_sort(points).iter().enumerate() {
        for &i in front {
            r[i] = k;
        }
    }
    r
}

/// Picks `n` survivors. Ties in niche count go to the lowest reference
/// index, ties among candidates to the lowest id.
pub fn nsga3_select(
    points: &[Objectives],
    ids: &[u64],
    weights: &[Objectives],
    n: usize,
) -> Vec<usize> {
    let fronts = non_dominated_sort(points);
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut last: Vec<usize> = Vec::new();
    for front in fronts {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
        } else {
            last = front;
            break;
        }
    }
    if chosen.len() < n && !last.is_empty() {
        let considered: Vec<usize> = chosen.iter().chain(&last).copied().collect();
        let pts: Vec<Objectives> = considered.iter().map(|&i| points[i]).collect();
        let assoc = assign(&normalize(&pts), weights);
        let mut niche = vec![0usize; weights.len()];
        for a in &assoc[..chosen.len()] {
            niche[a.0] += 1;
        }
        // (position in `points`, ray, distance) for last-front candidates.
        let mut pool: Vec<(usize, usize, f64)> = last
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, assoc[chosen.len() + k].0, assoc[chosen.len() + k].1))
            .collect();
        while chosen.len() < n {
            let ray = (0..weights.len())
                .filter(|&j| pool.iter().any(|c| c.1 == j))
                .min_by_key(|&j| (niche[j], j))
                .expect("pool is non-empty while survivors are missing");
            let pick = pool
                .iter()
                .enumerate()
                .filter(|(_, c)| c.1 == ray)
                .min_by(|(_, a), (_, b)| {
                    if niche[ray] == 0 {
                        a.2.total_cmp(&b.2).then(ids[a.0].cmp(&ids[b.0]))
                    } else {
                        ids[a.0].cmp(&ids[b.0])
                    }
                })
                .map(|(k, _)| k)
                .expect("ray has a candidate");
            chosen.push(pool.remove(pick).0);
            niche[ray] += 1;
        }
    }
    chosen.sort_unstable();
    chosen
}
