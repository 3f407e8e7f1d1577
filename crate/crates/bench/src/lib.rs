//! Workloads shared by the criterion benches.

use qnnv_core::bundled::{small, random_dyadic};
use qnnv_core::property::parse_assertion;
use qnnv_core::{ActivationKind, HyperRect, Network, OutputAssertion, SafetyProperty};

/// A seeded ReLU network with an L-infinity robustness property around
/// the point `0.5` in every input.
pub fn robustness_case(seed: u64, sizes: &[usize], radius: f64) -> (Network, SafetyProperty) {
    let net = random_dyadic(seed, sizes, ActivationKind::Relu);
    let center = vec![0.5; sizes[0]];
    let y = net.forward_real(&center).expect("dimensions match");
    let class = (0..y.len()).fold(0, |best, i| if y[i] > y[best] { i } else { best });
    let region = HyperRect::linf_ball(&center, radius).expect("valid ball");
    (net, SafetyProperty::new(region, OutputAssertion::RobustClass(class)))
}

/// The two-input example at its singleton point.
pub fn motivating() -> (Network, SafetyProperty) {
    let prop = SafetyProperty::new(
        HyperRect::singleton(&[0.749, 0.498]).expect("finite point"),
        parse_assertion("y0 >= 2.7").expect("valid assertion"),
    );
    (small(), prop)
}

/// Evenly spread points across a region, for throughput benches.
pub fn grid_points(region: &HyperRect, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            region
                .bounds()
                .iter()
                .enumerate()
                .map(|(d, &(lo, hi))| lo + (hi - lo) * ((t * (d as f64 + 1.0)).fract()))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_well_formed() {
        let (net, prop) = robustness_case(1, &[4, 8, 3], 0.05);
        prop.validate_for(&net).unwrap();
        let pts = grid_points(&prop.input_region, 50);
        assert!(pts.iter().all(|p| prop.input_region.contains(p)));
        let (net, prop) = motivating();
        prop.validate_for(&net).unwrap();
    }
}
