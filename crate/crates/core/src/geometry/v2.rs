//! Small helpers for planar vectors stored as `[f64; 2]`.

pub type P2 = [f64; 2];

#[inline]
pub fn add(a: P2, b: P2) -> P2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: P2, s: f64) -> P2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: P2, b: P2) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn dist2(a: P2, b: P2) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Unit vector along `a`; zero stays zero.
#[inline]
pub fn normalized(a: P2) -> P2 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

#[inline]
pub fn rotate(a: P2, theta: f64) -> P2 {
    let (s, c) = theta.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

/// Counter-clockwise perpendicular.
#[inline]
pub fn perp(a: P2) -> P2 {
    [-a[1], a[0]]
}

#[inline]
pub fn angle(a: P2) -> f64 {
    a[1].atan2(a[0])
}

/// Signed counter-clockwise angle from `a` to `b` in (-pi, pi].
#[inline]
pub fn signed_angle(a: P2, b: P2) -> f64 {
    cross(a, b).atan2(dot(a, b))
}
