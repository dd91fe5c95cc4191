//! Smooth transition profiles shared by cutoffs and padding.

/// C^4 step: 0 for t <= 0, 1 for t >= 1, with four vanishing derivatives at
/// both ends.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let t5 = t.powi(5);
    t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))))
}

/// Largest slope of [`smoothstep`], reached at t = 1/2.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 630.0 / 256.0;

/// Compactly supported C^inf bump on the unit disc (value e^-1 at 0).
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}
