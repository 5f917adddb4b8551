//! Principal branch of the Lambert W function.

use std::f64::consts::E;

const BRANCH_POINT: f64 = -1.0 / E;

/// Principal branch `W0(z)`, the solution `w >= -1` of `w e^w = z`.
///
/// Returns `None` for `z < -1/e` (no real solution) or non-finite input.
/// Halley iteration from a branch-point series near `-1/e`, a `ln(1 + z)`
/// guess in the middle range and the log-asymptotic form for large `z`.
pub fn lambert_w0(z: f64) -> Option<f64> {
    if !z.is_finite() {
        return None;
    }
    if z == 0.0 {
        return Some(0.0);
    }
    let dist = 1.0 + E * z;
    if dist < -4.0 * f64::EPSILON {
        return None;
    }
    if dist <= 4.0 * f64::EPSILON {
        return Some(-1.0);
    }

    let mut w = if z < -0.32 {
        let p = (2.0 * dist).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        z.ln_1p()
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        let next = (w - step).max(-1.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs()) {
            w = next;
            break;
        }
        w = next;
    }
    Some(w)
}

/// Lower bound of the principal branch's domain.
pub fn branch_point() -> f64 {
    BRANCH_POINT
}
