//! Pareto dominance, SPEA2 fitness and SPEA2 archive truncation. All
//! objectives here are maximized.

pub type Objectives = [f64; 3];

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    let mut better = false;
    for i in 0..3 {
        if a[i] < b[i] {
            return false;
        }
        better |= a[i] > b[i];
    }
    better
}

pub fn distance(a: &Objectives, b: &Objectives) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Indices not dominated by any other point. O(n^2).
pub fn pareto_front(points: &[Objectives]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|p| dominates(p, &points[i])))
        .collect()
}

/// Strength, raw fitness and density per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Spea2Fitness {
    pub strength: Vec<usize>,
    pub raw: Vec<f64>,
    pub density: Vec<f64>,
    pub fitness: Vec<f64>,
}

/// Raw fitness counts the strength of every dominator; density is
/// `1 / (sigma_k + 2)` with `sigma_k` the distance to the k-th nearest
/// other point, `k = floor(sqrt(n))`. Non-dominated points score below 1.
pub fn spea2_fitness(points: &[Objectives]) -> Spea2Fitness {
    let n = points.len();
    let dom: Vec<Vec<bool>> = points
        .iter()
        .map(|a| points.iter().map(|b| dominates(a, b)).collect())
        .collect();
    let strength: Vec<usize> = dom
        .iter()
        .map(|row| row.iter().filter(|&&d| d).count())
        .collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| dom[j][i])
                .map(|j| strength[j] as f64)
                .sum()
        })
        .collect();
    let k = (n as f64).sqrt().floor() as usize;
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| distance(&points[i], &points[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            let sigma = if d.is_empty() {
                0.0
            } else {
                d[(k.max(1) - 1).min(d.len() - 1)]
            };
            1.0 / (sigma + 2.0)
        })
        .collect();
    let fitness = raw.iter().zip(&density).map(|(r, d)| r + d).collect();
    Spea2Fitness {
        strength,
        raw,
        density,
        fitness,
    }
}

/// SPEA2 environmental selection. `ids` break ties (lowest wins). Returns
/// positions into `points` of the retained members, in ascending order.
pub fn spea2_select(
    points: &[Objectives],
    fitness: &[f64],
    ids: &[u64],
    capacity: usize,
) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..points.len()).filter(|&i| fitness[i] < 1.0).collect();
    if keep.len() < capacity {
        let mut rest: Vec<usize> = (0..points.len()).filter(|&i| fitness[i] >= 1.0).collect();
        rest.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(ids[a].cmp(&ids[b])));
        keep.extend(rest.into_iter().take(capacity - keep.len()));
    }
    while keep.len() > capacity {
        let victim = truncation_victim(points, ids, &keep);
        keep.remove(victim);
    }
    keep.sort_unstable();
    keep
}

/// Position in `members` of the point whose sorted distance list to the
/// other members is lexicographically smallest; ties go to the lowest id.
fn truncation_victim(points: &[Objectives], ids: &[u64], members: &[usize]) -> usize {
    let lists: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| {
            let mut d: Vec<f64> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| distance(&points[i], &points[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            d
        })
        .collect();
    let mut best = 0;
    for cand in 1..members.len() {
        let ord = lists[cand]
            .iter()
            .zip(&lists[best])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal);
        if ord.is_lt() || (ord.is_eq() && ids[members[cand]] < ids[members[best]]) {
            best = cand;
        }
    }
    best
}
