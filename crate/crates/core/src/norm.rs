//! Max-norm helpers. Every distance and ball in this crate uses the maximum norm.

pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Closed max-norm ball membership: `‖x − center‖ ≤ radius`.
pub fn in_ball(x: &[f64], center: &[f64], radius: f64) -> bool {
    x.iter().zip(center).all(|(a, c)| (a - c).abs() <= radius)
}
