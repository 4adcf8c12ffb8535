use rand::Rng;

use crate::tensor::Tensor;

/// Mean-pools an image down to `side x side` cells, averaging channels too.
/// Cells at the right and bottom edges absorb the remainder.
pub fn pooled_features(image: &Tensor, side: usize) -> Vec<f64> {
    let (h, w, c) = image.shape().as_image().unwrap_or((1, image.len(), 1));
    let (ry, rx) = (side.min(h), side.min(w));
    let mut sums = vec![0.0f64; ry * rx];
    let mut counts = vec![0usize; ry * rx];
    let data = image.data();
    for y in 0..h {
        let cy = (y * ry / h).min(ry - 1);
        for x in 0..w {
            let cx = (x * rx / w).min(rx - 1);
            let cell = cy * rx + cx;
            for ch in 0..c {
                sums[cell] += data[(y * w + x) * c + ch] as f64;
            }
            counts[cell] += c;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| s / n.max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

impl KMeans {
    /// Index of the closest centroid; ties go to the lowest index.
    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, p);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Lloyd's algorithm with k-means++ seeding. Returns at most
/// `min(k, points.len())` clusters; empty clusters keep their old centroid.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    rng: &mut R,
) -> KMeans {
    let k = k.min(points.len()).max(1);
    if points.is_empty() {
        return KMeans {
            centroids: Vec::new(),
            assignment: Vec::new(),
        };
    }
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let c = nearest(&centroids, p);
            changed |= *a != c;
            *a = c;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    KMeans {
        centroids,
        assignment,
    }
}
