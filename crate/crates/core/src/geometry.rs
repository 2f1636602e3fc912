//! Exact plane-geometry areas used for quadrature weights and region
//! bookkeeping. All discs are centered at the origin unless stated otherwise.

use std::f64::consts::PI;

/// Antiderivative of `sqrt(r² − x²)` on `[-r, r]`.
fn circ_primitive(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    let s = (r * r - x * x).max(0.0).sqrt();
    0.5 * (x * s + r * r * (x / r).asin())
}

/// Area of `[x0, x1] × [y0, y1] ∩ {x² + y² ≤ r²}`.
pub fn rect_disc_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    if r <= 0.0 || x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let a = x0.max(-r);
    let b = x1.min(r);
    if b <= a {
        return 0.0;
    }
    let mut pts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let xb = (r * r - y * y).sqrt();
            pts.push(xb);
            pts.push(-xb);
        }
    }
    pts.retain(|&p| p >= a && p <= b);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();

    let mut area = 0.0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let m = 0.5 * (lo + hi);
        let s = (r * r - m * m).max(0.0).sqrt();
        let top_is_arc = s < y1;
        let bottom_is_arc = -s > y0;
        let top = if top_is_arc { s } else { y1 };
        let bottom = if bottom_is_arc { -s } else { y0 };
        if top <= bottom {
            continue;
        }
        let arc = circ_primitive(hi, r) - circ_primitive(lo, r);
        let len = hi - lo;
        area += match (top_is_arc, bottom_is_arc) {
            (false, false) => (y1 - y0) * len,
            (true, false) => arc - y0 * len,
            (false, true) => y1 * len + arc,
            (true, true) => 2.0 * arc,
        };
    }
    area
}

/// Area of the rectangle intersected with the annulus `r0 ≤ |x| ≤ r1`.
pub fn rect_annulus_area(x0: f64, x1: f64, y0: f64, y1: f64, r0: f64, r1: f64) -> f64 {
    (rect_disc_area(x0, x1, y0, y1, r1) - rect_disc_area(x0, x1, y0, y1, r0)).max(0.0)
}

/// Area of the intersection of two discs with radii `r1`, `r2` and center
/// distance `d`.
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 {
        return 0.0;
    }
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.max(0.0).sqrt()
}

/// Area of a convex polygon given by its vertices in order.
pub fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = v[i];
        let q = v[(i + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s.abs()
}

/// Whether `p` lies in the closed convex polygon `v` (counter-clockwise).
pub fn in_convex_polygon(v: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % n];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -tol
    })
}
