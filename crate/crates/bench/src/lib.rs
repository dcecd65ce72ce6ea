//! Fixtures shared by the criterion benches.

use ratejump::{simulate, EventTimes, RateSpec, SimSeed};

/// Sinusoid-plus-jump realization with `base` events per unit time over `[0, 20]`.
pub fn smooth_jump_events(base: f64, seed: u64) -> EventTimes {
    let spec = RateSpec::sin_plus_exp(base, 0.8 * base, 10.0).expect("valid rate");
    simulate(&spec, 20.0, SimSeed::new(seed, 0)).expect("simulation succeeds")
}
