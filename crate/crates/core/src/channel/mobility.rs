use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::Point;

/// Half-width of the uniform heading perturbation applied each step.
pub const HEADING_JITTER: f64 = PI / 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UserMotion {
    pub pos: Point,
    pub heading: f64,
    /// Metres per step.
    pub speed: f64,
    /// Centre of the bounding square.
    pub center: Point,
}

/// Random-direction walk inside a square around each user's start position.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub users: Vec<UserMotion>,
    /// Side of the bounding square, metres.
    pub side: f64,
}

impl MobilityState {
    /// Users start at `starts` (which become the square centres) with random headings.
    pub fn new<R: Rng + ?Sized>(starts: &[Point], side: f64, speed: f64, rng: &mut R) -> Self {
        let users = starts
            .iter()
            .map(|&p| UserMotion {
                pos: p,
                heading: rng.random_range(0.0..TAU),
                speed,
                center: p,
            })
            .collect();
        Self { users, side }
    }

    pub fn positions(&self) -> Vec<Point> {
        self.users.iter().map(|u| u.pos).collect()
    }

    pub fn contains(&self, p: Point, center: Point) -> bool {
        let h = self.side / 2.0;
        (p.x - center.x).abs() <= h + 1e-9 && (p.y - center.y).abs() <= h + 1e-9
    }

    /// Advance every user by one step.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let h = self.side / 2.0;
        for u in &mut self.users {
            u.heading += rng.random_range(-HEADING_JITTER..HEADING_JITTER);
            let mut x = u.pos.x + u.speed * u.heading.cos();
            let mut y = u.pos.y + u.speed * u.heading.sin();
            let (lo_x, hi_x) = (u.center.x - h, u.center.x + h);
            let (lo_y, hi_y) = (u.center.y - h, u.center.y + h);
            // a step is far shorter than the square, so one mirror per wall suffices
            if x > hi_x {
                x = 2.0 * hi_x - x;
                u.heading = PI - u.heading;
            } else if x < lo_x {
                x = 2.0 * lo_x - x;
                u.heading = PI - u.heading;
            }
            if y > hi_y {
                y = 2.0 * hi_y - y;
                u.heading = -u.heading;
            } else if y < lo_y {
                y = 2.0 * lo_y - y;
                u.heading = -u.heading;
            }
            u.heading = u.heading.rem_euclid(TAU);
            u.pos = Point::new(x.clamp(lo_x, hi_x), y.clamp(lo_y, hi_y));
        }
    }
}

/// Free-standing form of [`MobilityState::step`].
pub fn mobility_step<R: Rng + ?Sized>(state: &mut MobilityState, rng: &mut R) {
    state.step(rng);
}
