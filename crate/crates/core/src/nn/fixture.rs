use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Model};
use crate::error::NnError;
use crate::tensor::Shape;

/// Architectures shipped as seeded random-weight fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureArch {
    /// conv 5x5x4 -> pool 2 -> dense 16 -> dense 10 on 28x28x1; 2330 neurons.
    MiniLenet,
    /// dense 32 -> dense 10 on 28x28x1; 42 neurons.
    TinyDense,
    /// conv 3x3x8 -> pool -> conv 3x3x8 -> pool -> dense 32 -> dense 10 on 32x32x3.
    MiniCifar,
}

impl FixtureArch {
    pub const ALL: [FixtureArch; 3] = [
        FixtureArch::MiniLenet,
        FixtureArch::TinyDense,
        FixtureArch::MiniCifar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureArch::MiniLenet => "mini-lenet",
            FixtureArch::TinyDense => "tiny-dense",
            FixtureArch::MiniCifar => "mini-cifar",
        }
    }
}

impl FromStr for FixtureArch {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixtureArch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| NnError::UnknownArchitecture(s.to_string()))
    }
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| self.rng.gen_range(-0.5f32..=0.5)).collect()
    }

    fn dense(&mut self, in_dim: usize, out_dim: usize, relu: bool) -> LayerSpec {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            weights: self.uniform(in_dim * out_dim),
            bias: self.uniform(out_dim),
            relu,
        }
    }

    fn conv(&mut self, k: usize, cin: usize, cout: usize) -> LayerSpec {
        LayerSpec::Conv2d {
            kh: k,
            kw: k,
            cin,
            cout,
            stride: 1,
            weights: self.uniform(k * k * cin * cout),
            bias: self.uniform(cout),
            relu: true,
        }
    }
}

/// Builds a fixture network with weights drawn uniformly from `[-0.5, 0.5]`.
/// The same `(arch, seed)` always yields the same weights.
pub fn generate_fixture_model(arch: FixtureArch, seed: u64) -> Model {
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let pool = LayerSpec::MaxPool2d {
        window: 2,
        stride: 2,
    };
    let (input, layers, traced): (Shape, Vec<LayerSpec>, Vec<usize>) = match arch {
        FixtureArch::MiniLenet => (
            Shape::new([28, 28, 1]),
            vec![
                init.conv(5, 1, 4),
                pool,
                LayerSpec::Flatten,
                init.dense(12 * 12 * 4, 16, true),
                init.dense(16, 10, false),
                LayerSpec::Softmax,
            ],
            vec![0, 3, 4],
        ),
        FixtureArch::TinyDense => (
            Shape::new([28, 28, 1]),
            vec![
                LayerSpec::Flatten,
                init.dense(28 * 28, 32, true),
                init.dense(32, 10, false),
                LayerSpec::Softmax,
            ],
            vec![1, 2],
        ),
        FixtureArch::MiniCifar => (
            Shape::new([32, 32, 3]),
            vec![
                init.conv(3, 3, 8),
                pool.clone(),
                init.conv(3, 8, 8),
                pool,
                LayerSpec::Flatten,
                init.dense(6 * 6 * 8, 32, true),
                init.dense(32, 10, false),
                LayerSpec::Softmax,
            ],
            vec![0, 2, 5, 6],
        ),
    };
    Model::new(arch.name(), input, layers, &traced).expect("fixture architectures are well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_neuron_counts() {
        // 24*24*4 + 16 + 10
        assert_eq!(
            generate_fixture_model(FixtureArch::MiniLenet, 1).neuron_count(),
            2330
        );
        assert_eq!(
            generate_fixture_model(FixtureArch::TinyDense, 1).neuron_count(),
            42
        );
        // 30*30*8 + 13*13*8 + 32 + 10
        assert_eq!(
            generate_fixture_model(FixtureArch::MiniCifar, 1).neuron_count(),
            8594
        );
    }

    #[test]
    fn weights_in_range_and_seeded() {
        let a = generate_fixture_model(FixtureArch::TinyDense, 9);
        let b = generate_fixture_model(FixtureArch::TinyDense, 9);
        let c = generate_fixture_model(FixtureArch::TinyDense, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in a.layers() {
            if let Some((w, bias)) = layer.params() {
                assert!(w.iter().chain(bias).all(|v| (-0.5..=0.5).contains(v)));
            }
        }
    }

    #[test]
    fn unknown_arch_rejected() {
        assert!(matches!(
            "vgg16".parse::<FixtureArch>(),
            Err(NnError::UnknownArchitecture(_))
        ));
        assert_eq!(
            "mini-cifar".parse::<FixtureArch>().unwrap(),
            FixtureArch::MiniCifar
        );
    }
}
