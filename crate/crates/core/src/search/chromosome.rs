use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MutationError;
use crate::mutation::{MutationOp, MutationSpace, OperatorKind};
use crate::tensor::Tensor;

/// `[mask | operators | levels]`, one gene of each part per grid region.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    pub mask: Vec<bool>,
    pub operators: Vec<usize>,
    pub levels: Vec<usize>,
}

impl Chromosome {
    /// No region selected; decodes to the identity mutation.
    pub fn zeros(regions: usize) -> Self {
        Chromosome {
            mask: vec![false; regions],
            operators: vec![0; regions],
            levels: vec![0; regions],
        }
    }

    pub fn random<R: Rng + ?Sized>(regions: usize, levels: usize, rng: &mut R) -> Self {
        let mut c = Self::zeros(regions);
        for i in 0..regions {
            c.mask[i] = rng.gen_bool(0.5);
            c.operators[i] = rng.gen_range(0..OperatorKind::COUNT);
            c.levels[i] = rng.gen_range(0..levels);
        }
        c
    }

    /// Builds a chromosome from (region, op index) pairs, where op indices
    /// follow [`MutationSpace::op`].
    pub fn from_pairs(space: &MutationSpace, pairs: &[(usize, usize)]) -> Self {
        let mut c = Self::zeros(space.regions());
        for &(region, op) in pairs {
            let op = space.op(op);
            c.mask[region] = true;
            c.operators[region] = op.operator.id();
            c.levels[region] = op.level;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn active_regions(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_valid(&self, regions: usize, levels: usize) -> bool {
        self.mask.len() == regions
            && self.operators.len() == regions
            && self.levels.len() == regions
            && self.operators.iter().all(|&o| o < OperatorKind::COUNT)
            && self.levels.iter().all(|&l| l < levels)
    }

    /// Masked regions with their operation, in region order.
    pub fn decode(&self) -> Vec<(usize, MutationOp)> {
        (0..self.len())
            .filter(|&i| self.mask[i])
            .map(|i| {
                let op = OperatorKind::from_id(self.operators[i]).expect("operator gene in range");
                (i, MutationOp::new(op, self.levels[i]))
            })
            .collect()
    }

    pub fn apply(&self, image: &Tensor, space: &MutationSpace) -> Result<Tensor, MutationError> {
        let mut out = image.clone();
        for (region, op) in self.decode() {
            space.apply_in_place(&mut out, region, op)?;
        }
        Ok(out)
    }

    /// Genes as reals with their inclusive bounds, in `[mask | ops | levels]` order.
    pub(crate) fn to_reals(&self, levels: usize) -> Vec<(f64, f64, f64)> {
        let mut g = Vec::with_capacity(3 * self.len());
        g.extend(
            self.mask
                .iter()
                .map(|&m| (if m { 1.0 } else { 0.0 }, 0.0, 1.0)),
        );
        g.extend(
            self.operators
                .iter()
                .map(|&o| (o as f64, 0.0, (OperatorKind::COUNT - 1) as f64)),
        );
        g.extend(
            self.levels
                .iter()
                .map(|&l| (l as f64, 0.0, (levels - 1) as f64)),
        );
        g
    }

    /// Inverse of [`Chromosome::to_reals`]: mask genes threshold at 0.5,
    /// the rest round to the nearest integer and clamp into range.
    pub(crate) fn from_reals(values: &[f64], levels: usize) -> Self {
        let n = values.len() / 3;
        let round = |v: f64, hi: usize| (v.round().max(0.0) as usize).min(hi);
        Chromosome {
            mask: values[..n].iter().map(|&v| v >= 0.5).collect(),
            operators: values[n..2 * n]
                .iter()
                .map(|&v| round(v, OperatorKind::COUNT - 1))
                .collect(),
            levels: values[2 * n..]
                .iter()
                .map(|&v| round(v, levels - 1))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::{ConstraintParams, LevelTables, RegionGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> MutationSpace {
        MutationSpace::new(
            RegionGrid::new(3, 3, 28, 28).unwrap(),
            LevelTables::default(),
            ConstraintParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn paper_style_example_decodes() {
        // Region 0: brightness level 2; region 2: contrast level 4.
        let c = Chromosome {
            mask: vec![true, false, true],
            operators: vec![0, 1, 2],
            levels: vec![2, 3, 4],
        };
        assert_eq!(
            c.decode(),
            vec![
                (0, MutationOp::new(OperatorKind::Brightness, 2)),
                (2, MutationOp::new(OperatorKind::Contrast, 4)),
            ]
        );
    }

    #[test]
    fn real_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let c = Chromosome::random(9, 5, &mut rng);
            let reals: Vec<f64> = c.to_reals(5).iter().map(|g| g.0).collect();
            assert_eq!(Chromosome::from_reals(&reals, 5), c);
        }
    }

    #[test]
    fn from_pairs_sets_mask() {
        let s = space();
        let c = Chromosome::from_pairs(&s, &[(4, 7)]);
        assert_eq!(c.active_regions(), 1);
        assert!(c.mask[4]);
        assert_eq!(c.decode()[0].1, s.op(7));
        assert!(c.is_valid(9, 5));
    }
}
