use super::random_model;
use hashpower_core::dividends::optimal_barrier;
use hashpower_core::ScaleEvaluator;
use rand::Rng;

/// Random profitable model with a discount rate, restricted to parameters
/// whose optimal barrier stays within the series depth cap.
pub fn random_dividend_case(rng: &mut impl Rng) -> (ScaleEvaluator, f64) {
    loop {
        let atoms = rng.random_range(1..=3);
        let model = random_model(rng, atoms, (1.0, 10.0), (1.0, 5.0), (0.05, 0.4));
        let q = rng.random_range(0.05..0.3);
        let ev = ScaleEvaluator::new(model, q).unwrap();
        if let Ok(a) = optimal_barrier(&ev) {
            if ev.required_depth(2.0 * a + 1.0) <= ev.max_depth() {
                return (ev, a);
            }
        }
    }
}
