//! Binary tournament, simulated binary crossover and polynomial mutation
//! on the real-relaxed chromosome.

use rand::Rng;

use super::Chromosome;

pub const ETA_C: f64 = 15.0;
pub const ETA_M: f64 = 20.0;
/// Per-gene chance that SBX recombines a gene pair.
const SBX_GENE_PROB: f64 = 0.5;

/// Two binary tournaments on fitness (lower wins, ties broken at random).
/// Returns indices into `fitness`.
pub fn tournament_select<R: Rng + ?Sized>(fitness: &[f64], rng: &mut R) -> (usize, usize) {
    assert!(!fitness.is_empty(), "tournament over an empty archive");
    let mut pick = || {
        let (a, b) = (
            rng.gen_range(0..fitness.len()),
            rng.gen_range(0..fitness.len()),
        );
        if fitness[a] < fitness[b] {
            a
        } else if fitness[b] < fitness[a] {
            b
        } else if rng.gen_bool(0.5) {
            a
        } else {
            b
        }
    };
    let first = pick();
    (first, pick())
}

/// Bounded SBX on one gene pair.
fn sbx_gene<R: Rng + ?Sized>(
    y1: f64,
    y2: f64,
    lo: f64,
    hi: f64,
    eta: f64,
    rng: &mut R,
) -> (f64, f64) {
    if (y1 - y2).abs() < 1e-14 || hi <= lo {
        return (y1, y2);
    }
    let (a, b) = if y1 < y2 { (y1, y2) } else { (y2, y1) };
    let u: f64 = rng.gen();
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
        }
    };
    let beta_lo = 1.0 + 2.0 * (a - lo) / (b - a);
    let beta_hi = 1.0 + 2.0 * (hi - b) / (b - a);
    let c1 = (0.5 * ((a + b) - spread(beta_lo) * (b - a))).clamp(lo, hi);
    let c2 = (0.5 * ((a + b) + spread(beta_hi) * (b - a))).clamp(lo, hi);
    if rng.gen_bool(0.5) {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    levels: usize,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let (g1, g2) = (p1.to_reals(levels), p2.to_reals(levels));
    let mut c1 = Vec::with_capacity(g1.len());
    let mut c2 = Vec::with_capacity(g1.len());
    for (&(y1, lo, hi), &(y2, _, _)) in g1.iter().zip(&g2) {
        if rng.gen_bool(SBX_GENE_PROB) {
            let (a, b) = sbx_gene(y1, y2, lo, hi, ETA_C, rng);
            c1.push(a);
            c2.push(b);
        } else {
            c1.push(y1);
            c2.push(y2);
        }
    }
    (
        Chromosome::from_reals(&c1, levels),
        Chromosome::from_reals(&c2, levels),
    )
}

/// Bounded polynomial perturbation of one gene.
fn pm_gene<R: Rng + ?Sized>(y: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    if hi <= lo {
        return y;
    }
    let (d1, d2) = ((y - lo) / (hi - lo), (hi - y) / (hi - lo));
    let u: f64 = rng.gen();
    let p = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(p) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(p)
    };
    (y + dq * (hi - lo)).clamp(lo, hi)
}

/// Polynomial mutation; also returns how many genes were selected for
/// perturbation (whether or not rounding kept their value).
pub fn polynomial_mutation_counted<R: Rng + ?Sized>(
    c: &Chromosome,
    prob: f64,
    levels: usize,
    rng: &mut R,
) -> (Chromosome, usize) {
    let mut touched = 0;
    let genes: Vec<f64> = c
        .to_reals(levels)
        .into_iter()
        .map(|(y, lo, hi)| {
            if prob > 0.0 && rng.gen_bool(prob.min(1.0)) {
                touched += 1;
                pm_gene(y, lo, hi, ETA_M, rng)
            } else {
                y
            }
        })
        .collect();
    (Chromosome::from_reals(&genes, levels), touched)
}

pub fn polynomial_mutation<R: Rng + ?Sized>(
    c: &Chromosome,
    prob: f64,
    levels: usize,
    rng: &mut R,
) -> Chromosome {
    polynomial_mutation_counted(c, prob, levels, rng).0
}
