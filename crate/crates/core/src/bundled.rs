//! Deterministic example networks.
//!
//! Random weights are multiples of 1/8 so that every fixed-point format
//! with at least three fractional bits represents them exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{ActivationKind, Layer, Network};

/// Two inputs, hidden ReLU pair `A = relu(2x - 3y)`, `B = relu(x + 4y)`,
/// output `f = A + B`.
pub fn small() -> Network {
    let hidden = Layer::new(
        vec![vec![2.0, -3.0], vec![1.0, 4.0]],
        vec![0.0, 0.0],
        ActivationKind::Relu,
    );
    let out = Layer::new(vec![vec![1.0, 1.0]], vec![0.0], ActivationKind::Identity);
    Network::new("small", 2, vec![hidden, out]).expect("valid network")
}

/// One ReLU layer with outputs `a = relu(2x - 3y)`, `b = relu(x + 4y)`,
/// `f = relu(3x + y)`.
pub fn guarded() -> Network {
    let layer = Layer::new(
        vec![vec![2.0, -3.0], vec![1.0, 4.0], vec![3.0, 1.0]],
        vec![0.0; 3],
        ActivationKind::Relu,
    );
    Network::new("guarded", 2, vec![layer]).expect("valid network")
}

/// Random network with the given layer sizes (inputs first). Hidden
/// layers use `hidden`, the output layer is linear.
pub fn random_dyadic(seed: u64, sizes: &[usize], hidden: ActivationKind) -> Network {
    assert!(sizes.len() >= 2, "need an input and an output size");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = (0..n_out)
            .map(|_| {
                (0..n_in)
                    .map(|_| rng.gen_range(-16i32..=16) as f64 / 8.0)
                    .collect()
            })
            .collect();
        let biases = (0..n_out)
            .map(|_| rng.gen_range(-8i32..=8) as f64 / 8.0)
            .collect();
        let act = if l + 2 == sizes.len() {
            ActivationKind::Identity
        } else {
            hidden.clone()
        };
        layers.push(Layer::new(weights, biases, act));
    }
    Network::new(format!("random-{seed}"), sizes[0], layers).expect("valid network")
}

/// 25x10x4x5 sigmoid classifier for 5x5 glyph images.
pub fn glyph(seed: u64) -> Network {
    let mut net = random_dyadic(seed, &[25, 10, 4, 5], ActivationKind::Sigmoid);
    net.name = format!("glyph-{seed}");
    net
}

/// Look up a bundled network by name: `small`, `guarded`, `glyph[:SEED]` or
/// `random:SEED:N0xN1x...[:ACT]`.
pub fn by_name(name: &str) -> Option<Network> {
    let parts: Vec<&str> = name.split(':').collect();
    match parts.as_slice() {
        ["small"] => Some(small()),
        ["guarded"] => Some(guarded()),
        ["glyph"] => Some(glyph(0)),
        ["glyph", s] => Some(glyph(s.parse().ok()?)),
        ["random", s, dims, rest @ ..] => {
            let seed = s.parse().ok()?;
            let sizes: Vec<usize> = dims
                .split('x')
                .map(|d| d.parse().ok())
                .collect::<Option<_>>()?;
            if sizes.len() < 2 || sizes.contains(&0) {
                return None;
            }
            let act = match rest {
                [] => ActivationKind::Relu,
                [a] => a.parse().ok()?,
                _ => return None,
            };
            Some(random_dyadic(seed, &sizes, act))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_reference_point() {
        let y = small().forward_real(&[0.749, 0.498]).unwrap();
        assert!((y[0] - 2.745).abs() < 1e-12);
    }

    #[test]
    fn guarded_at_ones() {
        assert_eq!(
            guarded().forward_real(&[1.0, 1.0]).unwrap(),
            vec![0.0, 5.0, 4.0]
        );
    }

    #[test]
    fn random_is_deterministic_and_dyadic() {
        let a = random_dyadic(7, &[4, 3, 2], ActivationKind::Relu);
        assert_eq!(a, random_dyadic(7, &[4, 3, 2], ActivationKind::Relu));
        assert_ne!(a, random_dyadic(8, &[4, 3, 2], ActivationKind::Relu));
        for layer in a.layers() {
            for w in layer.weights.iter().flatten().chain(&layer.biases) {
                assert_eq!((w * 8.0).fract(), 0.0);
            }
        }
        assert_eq!(glyph(1).sizes(), vec![25, 10, 4, 5]);
        assert_eq!(
            by_name("random:3:2x2x1:tanh").unwrap().activations()[0],
            ActivationKind::Tanh
        );
        assert!(by_name("random:3:2").is_none());
    }
}
