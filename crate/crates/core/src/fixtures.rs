//! Reference domains shared by tests, the CLI examples and the acceptance
//! suite.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::content::{design_domain, RadiiSchedule};
use crate::geometry::{ClosedBall, DomainSpec, Probe};
use crate::Point;

/// Unit disk with `b = 0` and two removed balls of radius 0.1 centred at
/// `0.5` and `-0.5i`; probe ray along the negative real axis.
pub fn two_ball_domain() -> Arc<DomainSpec> {
    let c = Complex64::new;
    Arc::new(
        DomainSpec::new(
            ClosedBall::new(c(0.0, 0.0), 1.0).expect("positive radius"),
            c(0.0, 0.0),
            0.5,
            vec![
                ClosedBall::new(c(0.5, 0.0), 0.1).expect("positive radius"),
                ClosedBall::new(c(0.0, -0.5), 0.1).expect("positive radius"),
            ],
            vec![],
            Probe {
                theta: PI,
                t: 0.5,
                eps_range: [0.0, 0.5],
            },
        )
        .expect("valid fixture"),
    )
}

/// `s_n = 2^-n`, one ball per annulus, `n = 3..=30`.
pub fn standard_schedule() -> RadiiSchedule {
    RadiiSchedule::geometric(1.0, 0.5, [3, 30], 1)
}

pub const DESIGN_SEED: u64 = 3;

/// The α = 1/2 design for [`standard_schedule`] in `B(0, 2)` with `b = 0`.
pub fn designed_domain() -> Arc<DomainSpec> {
    Arc::new(
        design_domain(
            0.5,
            &standard_schedule(),
            ClosedBall::new(Complex64::new(0.0, 0.0), 2.0).expect("positive radius"),
            Complex64::new(0.0, 0.0),
            DESIGN_SEED,
            true,
        )
        .expect("standard schedule is feasible"),
    )
}

/// Centre of the largest removed ball, a valid pole for kernel functions.
pub fn largest_ball_center(d: &DomainSpec) -> Point {
    d.balls()
        .iter()
        .max_by(|a, b| a.radius.total_cmp(&b.radius))
        .map(|b| b.center)
        .expect("domain has removed balls")
}
