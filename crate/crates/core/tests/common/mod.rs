//! Reference implementations used as test oracles. Each one is written
//! straight from the definitions, without sharing code with the library.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nnfuzz_core::mcts::PairGame;
use nnfuzz_core::nn::{LayerSpec, Model};
use nnfuzz_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- coverage ---------------------------------------------------------------

/// Covered cells computed from scratch: `(neuron, section)` pairs plus the
/// neurons whose upper and lower corners were hit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefCoverage {
    pub sections: BTreeSet<(usize, usize)>,
    pub upper: BTreeSet<usize>,
    pub lower: BTreeSet<usize>,
}

impl RefCoverage {
    pub fn add(&mut self, low: &[f32], high: &[f32], k: usize, values: &[f32]) {
        for (i, &v) in values.iter().enumerate() {
            if v > high[i] {
                self.upper.insert(i);
            } else if v < low[i] {
                self.lower.insert(i);
            } else {
                let width = high[i] as f64 - low[i] as f64;
                let mut s = ((v as f64 - low[i] as f64) / width * k as f64).floor() as usize;
                if s >= k {
                    s = k - 1;
                }
                self.sections.insert((i, s));
            }
        }
    }

    pub fn kmnc(&self, n: usize, k: usize) -> f64 {
        self.sections.len() as f64 / (n * k) as f64
    }

    pub fn nbc(&self, n: usize) -> f64 {
        (self.upper.len() + self.lower.len()) as f64 / (2 * n) as f64
    }

    pub fn snac(&self, n: usize) -> f64 {
        self.upper.len() as f64 / n as f64
    }
}

// ---- dominance --------------------------------------------------------------

/// Maximization: `a` is no worse everywhere and strictly better somewhere.
pub fn ref_dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    (0..3).all(|i| a[i] >= b[i]) && (0..3).any(|i| a[i] > b[i])
}

pub fn brute_front(points: &[[f64; 3]]) -> BTreeSet<usize> {
    (0..points.len())
        .filter(|&i| !(0..points.len()).any(|j| ref_dominates(&points[j], &points[i])))
        .collect()
}

/// Random points on a coarse grid so ties and duplicates occur.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0..12) as f64 / 40.0))
        .collect()
}

// ---- decomposition ----------------------------------------------------------

pub fn ref_normalize(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    // Work in minimization form g = -f: ideal is min g, nadir max g.
    let g: Vec<[f64; 3]> = points.iter().map(|p| [-p[0], -p[1], -p[2]]).collect();
    let mut out = vec![[0.0; 3]; points.len()];
    for axis in 0..3 {
        let ideal = g.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let mut nadir = g.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        if nadir < ideal + 1e-9 {
            nadir = ideal + 1e-9;
        }
        for (o, p) in out.iter_mut().zip(&g) {
            o[axis] = (nadir - p[axis]) / (nadir - ideal);
        }
    }
    out
}

pub fn ref_ray_distance(p: &[f64; 3], w: &[f64; 3]) -> f64 {
    let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let u = [w[0] / norm, w[1] / norm, w[2] / norm];
    let proj = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
    let r = [p[0] - proj * u[0], p[1] - proj * u[1], p[2] - proj * u[2]];
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Nearest ray per point; ties within `eps` resolve to the lowest index.
pub fn ref_assign(normalized: &[[f64; 3]], weights: &[[f64; 3]], eps: f64) -> Vec<(usize, f64)> {
    normalized
        .iter()
        .map(|p| {
            let d: Vec<f64> = weights.iter().map(|w| ref_ray_distance(p, w)).collect();
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            let j = d.iter().position(|&x| x <= min + eps).unwrap();
            (j, d[j])
        })
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

// ---- layers -----------------------------------------------------------------

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

pub fn ref_dense(
    x: &[f32],
    in_dim: usize,
    out_dim: usize,
    w: &[f32],
    b: &[f32],
    relu: bool,
) -> Vec<f32> {
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let mut s = b[o];
        for i in 0..in_dim {
            s += x[i] * w[i * out_dim + o];
        }
        out.push(if relu && s < 0.0 { 0.0 } else { s });
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn ref_conv(
    x: &[f32],
    (h, w_in, cin): (usize, usize, usize),
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    w: &[f32],
    b: &[f32],
    relu: bool,
) -> Vec<f32> {
    let oh = (h - kh) / stride + 1;
    let ow = (w_in - kw) / stride + 1;
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut s = b[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        for ci in 0..cin {
                            let iy = oy * stride + ky;
                            let ix = ox * stride + kx;
                            s += x[(iy * w_in + ix) * cin + ci]
                                * w[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = if relu && s < 0.0 { 0.0 } else { s };
            }
        }
    }
    out
}

pub fn ref_pool(
    x: &[f32],
    (h, w_in, c): (usize, usize, usize),
    window: usize,
    stride: usize,
) -> Vec<f32> {
    let oh = (h - window) / stride + 1;
    let ow = (w_in - window) / stride + 1;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut m = f32::NEG_INFINITY;
                for wy in 0..window {
                    for wx in 0..window {
                        m = m.max(x[((oy * stride + wy) * w_in + ox * stride + wx) * c + ch]);
                    }
                }
                out[(oy * ow + ox) * c + ch] = m;
            }
        }
    }
    out
}

pub fn ref_softmax(x: &[f32]) -> Vec<f32> {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
    let e: Vec<f64> = x.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| (v / s) as f32).collect()
}

// ---- constraint -------------------------------------------------------------

pub fn ref_admits(a: &[f32], b: &[f32], alpha: f64, beta: f64) -> bool {
    let size = a.len() as f64;
    let l0 = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64;
    let linf = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0.0, f64::max);
    if l0 < alpha * size {
        linf <= 255.0
    } else {
        linf < beta * 255.0
    }
}

// ---- tree search --------------------------------------------------------------

/// A deterministic pair game whose rewards come from a seeded table keyed
/// by the previous pair and the current pair. Negative entries mark
/// constraint-violating moves. Step rewards lie in `[0, 0.2]`, so path
/// totals stay within `[0, 1]` like the coverage fractions of the real game.
#[derive(Debug, Clone)]
pub struct TableGame {
    pub regions: usize,
    pub ops: usize,
    /// `[prev_pair_or_start][region][op]`, where `prev` indexes
    /// `region * ops + op + 1` and 0 means no previous pair.
    pub table: Vec<Vec<Vec<f64>>>,
}

impl TableGame {
    pub fn random(regions: usize, ops: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..=regions * ops)
            .map(|_| {
                (0..regions)
                    .map(|_| {
                        (0..ops)
                            .map(|_| match rng.gen_range(0..10) {
                                0 => -1.0,
                                1 => 0.0,
                                _ => rng.gen_range(1..=20) as f64 / 100.0,
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TableGame {
            regions,
            ops,
            table,
        }
    }

    fn reward(&self, prev: usize, region: usize, op: usize) -> f64 {
        self.table[prev][region][op]
    }
}

impl PairGame for TableGame {
    /// Index of the previous pair (0 at the start).
    type State = usize;

    fn initial(&self) -> usize {
        0
    }
    fn regions(&self) -> usize {
        self.regions
    }
    fn ops(&self) -> usize {
        self.ops
    }
    fn play(&mut self, prev: &usize, region: usize, op: usize) -> Option<(usize, f64)> {
        let r = self.reward(*prev, region, op);
        (r >= 0.0).then_some((region * self.ops + op + 1, r))
    }
}

/// Best cumulative reward over every legal path: regions never repeat,
/// a violating move ends the path without counting, a zero-reward move
/// counts and then ends the path, at most `max_pairs` pairs.
pub fn exhaustive_best(game: &TableGame, max_pairs: usize) -> f64 {
    fn go(g: &TableGame, prev: usize, used: &mut Vec<usize>, acc: f64, left: usize) -> f64 {
        let mut best = acc;
        if left == 0 {
            return best;
        }
        for r in 0..g.regions {
            if used.contains(&r) {
                continue;
            }
            for o in 0..g.ops {
                let gain = g.reward(prev, r, o);
                if gain < 0.0 {
                    continue;
                }
                let total = acc + gain;
                best = best.max(total);
                if gain > 0.0 {
                    used.push(r);
                    best = best.max(go(g, r * g.ops + o + 1, used, total, left - 1));
                    used.pop();
                }
            }
        }
        best
    }
    go(game, 0, &mut Vec::new(), 0.0, max_pairs)
}

// ---- models -----------------------------------------------------------------

/// Two-class linear model on `h x w x 1` images: logit 0 is the constant
/// `threshold`, logit 1 is the mean pixel value. Predicts 1 exactly when
/// the mean exceeds the threshold.
pub fn mean_threshold_model(h: usize, w: usize, threshold: f32) -> Model {
    let n = h * w;
    let mut weights = vec![0.0f32; n * 2];
    for i in 0..n {
        weights[i * 2 + 1] = 1.0 / n as f32;
    }
    let layers = vec![
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_dim: n,
            out_dim: 2,
            weights,
            bias: vec![threshold, 0.0],
            relu: false,
        },
    ];
    Model::new("mean-threshold", Shape::new([h, w, 1]), layers, &[1]).unwrap()
}

pub fn flat_image(h: usize, w: usize, v: f32) -> Tensor {
    Tensor::filled(Shape::new([h, w, 1]), v)
}
