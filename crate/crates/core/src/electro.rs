//! Electrostatics of neutral lattice cells.
//!
//! A cell carries a unit point charge at its centroid and a uniform
//! background of total charge −1. In two dimensions the potential of a
//! charge is `log|x|`. Cell integrals use 32-point Gauss–Legendre product
//! rules on the triangles of a fan from the centroid (collapsed-square map),
//! which is exact for the polynomial moment integrands up to degree 62.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::field::{chunked_sum_idx, Grid};
use crate::geometry::in_convex_polygon;
use crate::quad::gl32;
use crate::tf::TfSolution;
use crate::trial::{cell_polygon, cutoff, lattice_points, resolved_grid, LatticeKind, VortexLattice, DEFAULT_MAX_N};
use crate::{Error, Params, Result};

/// Shape of a single neutral cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CellShape {
    Square,
    /// Equilateral triangle.
    Triangular,
    /// Regular hexagon.
    Hexagonal,
    /// Rectangle with side ratio `aspect` (width over height).
    Rectangle { aspect: f64 },
}

impl CellShape {
    /// Vertices of the cell of the given area, centroid at the origin.
    pub fn vertices(&self, area: f64) -> Vec<[f64; 2]> {
        let ring = |n: usize, radius: f64, phase: f64| -> Vec<[f64; 2]> {
            (0..n)
                .map(|k| {
                    let a = phase + TAU * k as f64 / n as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect()
        };
        match *self {
            CellShape::Square => {
                let h = 0.5 * area.sqrt();
                vec![[-h, -h], [h, -h], [h, h], [-h, h]]
            }
            CellShape::Rectangle { aspect } => {
                let hx = 0.5 * (area * aspect).sqrt();
                let hy = 0.5 * (area / aspect).sqrt();
                vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]]
            }
            // Area of a regular n-gon with circumradius R: (n/2) R² sin(2π/n).
            CellShape::Triangular => ring(3, (area / (1.5 * (TAU / 3.0).sin())).sqrt(), PI / 2.0),
            CellShape::Hexagonal => ring(6, (area / (3.0 * (TAU / 6.0).sin())).sqrt(), 0.0),
        }
    }
}

impl FromStr for CellShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(CellShape::Square),
            "triangular" | "triangle" => Ok(CellShape::Triangular),
            "hexagonal" | "hexagon" => Ok(CellShape::Hexagonal),
            other => match other.strip_prefix("rectangle:") {
                Some(a) => {
                    let aspect: f64 = a
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad aspect ratio in {s:?}")))?;
                    if !(aspect > 0.0) {
                        return Err(Error::InvalidParameter(format!("aspect must be positive in {s:?}")));
                    }
                    Ok(CellShape::Rectangle { aspect })
                }
                None => Err(Error::InvalidParameter(format!(
                    "unknown cell {s:?}; expected square, triangular, hexagonal or rectangle:ASPECT"
                ))),
            },
        }
    }
}

impl fmt::Display for CellShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellShape::Square => f.write_str("square"),
            CellShape::Triangular => f.write_str("triangular"),
            CellShape::Hexagonal => f.write_str("hexagonal"),
            CellShape::Rectangle { aspect } => write!(f, "rectangle:{aspect}"),
        }
    }
}

/// Point charge `+1` at `center` plus background `−1/|Q|` on the cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCharge {
    pub shape: CellShape,
    pub area: f64,
    pub center: [f64; 2],
    vertices: Vec<[f64; 2]>,
}

impl CellCharge {
    pub fn new(shape: CellShape, area: f64) -> Result<Self> {
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell area must be positive, got {area}")));
        }
        Ok(Self {
            shape,
            area,
            center: [0.0, 0.0],
            vertices: shape.vertices(area),
        })
    }

    pub fn unit(shape: CellShape) -> Self {
        Self::new(shape, 1.0).expect("unit area is valid")
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        Self {
            center: [self.center[0] + by[0], self.center[1] + by[1]],
            ..self.clone()
        }
    }

    /// Vertices in absolute coordinates.
    pub fn polygon(&self) -> Vec<[f64; 2]> {
        self.vertices
            .iter()
            .map(|v| [v[0] + self.center[0], v[1] + self.center[1]])
            .collect()
    }

    /// Radius of the smallest centered disc containing the cell.
    pub fn radius(&self) -> f64 {
        self.vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    /// `∫_Q f(x, y) dA` in coordinates relative to the center.
    fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let (xs, ws) = gl32();
        let v = &self.vertices;
        let mut total = 0.0;
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            // Triangle (0, a, b): p = u·(a + s(b − a)), u, s ∈ [0, 1], Jacobian u·|a × b|.
            let jac = (a[0] * b[1] - a[1] * b[0]).abs();
            let mut tri = 0.0;
            for (xu, wu) in xs.iter().zip(ws) {
                let u = 0.5 * (xu + 1.0);
                let mut inner = 0.0;
                for (xs_, wv) in xs.iter().zip(ws) {
                    let s = 0.5 * (xs_ + 1.0);
                    let px = u * (a[0] + s * (b[0] - a[0]));
                    let py = u * (a[1] + s * (b[1] - a[1]));
                    inner += wv * f(px, py);
                }
                tri += wu * u * inner;
            }
            total += 0.25 * jac * tri;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultipoleReport {
    pub shape: CellShape,
    pub area: f64,
    pub q: f64,
    /// `C_k` for `k = 1..=K`.
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    /// Fitted `p` in `|E| ~ |x|^{-p}` over `|x| ∈ [3, 10]`.
    pub decay_exponent: f64,
}

impl MultipoleReport {
    /// Smallest `k` with `|C_k| + |S_k| > tol`.
    pub fn first_surviving(&self, tol: f64) -> Option<usize> {
        (0..self.c.len())
            .find(|&i| self.c[i].abs() + self.s[i].abs() > tol)
            .map(|i| i + 1)
    }

    /// Gradient of the truncated expansion
    /// `q log|x| − Σ (C_k cos kθ + S_k sin kθ)/|x|^k`.
    pub fn field(&self, x: [f64; 2]) -> [f64; 2] {
        let z = Complex64::new(x[0], x[1]);
        let mut d = self.q / z;
        let zi = 1.0 / z;
        let mut zp = zi;
        for k in 1..=self.c.len() {
            zp *= zi;
            d += Complex64::new(self.c[k - 1], self.s[k - 1]) * (k as f64) * zp;
        }
        [d.re, -d.im]
    }
}

/// Multipole moments of the neutral cell about its center, `K ≤ 12`.
pub fn multipole_moments(cell: &CellCharge, k_max: usize) -> Result<MultipoleReport> {
    if k_max == 0 || k_max > 12 {
        return Err(Error::InvalidParameter(format!("K must lie in 1..=12, got {k_max}")));
    }
    let inv_area = 1.0 / cell.area;
    // The point charge sits at the center, so it only enters q.
    let mut c = Vec::with_capacity(k_max);
    let mut s = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let re = cell.integrate(|x, y| Complex64::new(x, y).powu(k as u32).re);
        let im = cell.integrate(|x, y| Complex64::new(x, y).powu(k as u32).im);
        c.push(-inv_area * re / k as f64);
        s.push(-inv_area * im / k as f64);
    }
    Ok(MultipoleReport {
        shape: cell.shape,
        area: cell.area,
        // Point charge plus the integrated background.
        q: 1.0 - inv_area * cell.integrate(|_, _| 1.0),
        c,
        s,
        decay_exponent: decay_exponent(cell, 3.0, 10.0)?,
    })
}

/// Field of the neutral cell at `x` outside the closed cell.
pub fn cell_field(cell: &CellCharge, x: [f64; 2]) -> Result<[f64; 2]> {
    let poly = cell.polygon();
    if in_convex_polygon(&poly, x, 1e-12) {
        return Err(Error::Precondition(format!(
            "point ({}, {}) is not outside the cell",
            x[0], x[1]
        )));
    }
    let rx = x[0] - cell.center[0];
    let ry = x[1] - cell.center[1];
    let r2 = rx * rx + ry * ry;
    let inv_area = 1.0 / cell.area;
    let bx = cell.integrate(|px, py| {
        let (dx, dy) = (rx - px, ry - py);
        dx / (dx * dx + dy * dy)
    });
    let by = cell.integrate(|px, py| {
        let (dx, dy) = (rx - px, ry - py);
        dy / (dx * dx + dy * dy)
    });
    Ok([rx / r2 - inv_area * bx, ry / r2 - inv_area * by])
}

/// Sum of the fields of several cells.
pub fn field_of(cells: &[CellCharge], x: [f64; 2]) -> Result<[f64; 2]> {
    let mut e = [0.0, 0.0];
    for c in cells {
        let f = cell_field(c, x)?;
        e[0] += f[0];
        e[1] += f[1];
    }
    Ok(e)
}

/// Root mean square of `|E|` on the circle `|x − center| = r`.
pub fn rms_field(cell: &CellCharge, r: f64, samples: usize) -> Result<f64> {
    let mut s = 0.0;
    for k in 0..samples {
        let th = TAU * (k as f64 + 0.5) / samples as f64;
        let e = cell_field(cell, [cell.center[0] + r * th.cos(), cell.center[1] + r * th.sin()])?;
        s += e[0] * e[0] + e[1] * e[1];
    }
    Ok((s / samples as f64).sqrt())
}

/// Mean of the field vector over the circle `|x − center| = r`.
pub fn mean_field(cell: &CellCharge, r: f64, samples: usize) -> Result<[f64; 2]> {
    let mut m = [0.0, 0.0];
    for k in 0..samples {
        let th = TAU * k as f64 / samples as f64;
        let e = cell_field(cell, [cell.center[0] + r * th.cos(), cell.center[1] + r * th.sin()])?;
        m[0] += e[0];
        m[1] += e[1];
    }
    Ok([m[0] / samples as f64, m[1] / samples as f64])
}

/// Least-squares `p` in `rms|E|(r) ~ r^{-p}` on `[r0, r1]` (radii relative
/// to the cell size `√|Q|`).
pub fn decay_exponent(cell: &CellCharge, r0: f64, r1: f64) -> Result<f64> {
    let scale = cell.area.sqrt();
    let m = 12;
    let mut pts = Vec::with_capacity(m);
    for i in 0..m {
        let r = r0 * (r1 / r0).powf(i as f64 / (m - 1) as f64) * scale;
        let e = rms_field(cell, r, 64)?;
        pts.push((r.ln(), e.ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(-sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KineticBound {
    /// `∫ ξ² ρ^TF |∇φ − A|²`
    pub lhs: f64,
    /// Same integral through the field form `|∇φ̃ − A e_r|²`.
    pub lhs_field_form: f64,
    /// `(Ω/2) |log(t²Ω)|`
    pub leading: f64,
    pub slack: f64,
    /// `leading + slack · Ω`
    pub rhs: f64,
    pub ratio: f64,
    pub t: f64,
    pub grid_n: usize,
}

/// Vortex kinetic energy of the lattice phase with the trial cutoff `ξ`.
pub fn vortex_kinetic_bound(
    params: &Params,
    lattice: &VortexLattice,
    tf: &TfSolution,
    slack: f64,
    grid: Option<Arc<Grid>>,
) -> Result<KineticBound> {
    let t = lattice.core_radius;
    let grid = match grid {
        Some(g) => g,
        None => resolved_grid(params, t, DEFAULT_MAX_N)?,
    };
    let pts = &lattice.points;
    let xi = cutoff(&grid, pts, t, lattice.ell)?;
    let w = grid.weights();
    let half = 0.5 * params.rotation;
    let terms: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            let rho = tf.density(x.hypot(y));
            if rho <= 0.0 || xi[k] == 0.0 {
                return (0.0, 0.0);
            }
            // ∇φ = Σ e_θ/|r − r_i|,  ∇φ̃ = Σ (r − r_i)/|r − r_i|².
            let (mut gx, mut gy) = (0.0, 0.0);
            for p in pts {
                let (dx, dy) = (x - p[0], y - p[1]);
                let d2 = dx * dx + dy * dy;
                gx += dx / d2;
                gy += dy / d2;
            }
            let (ax, ay) = (-half * y, half * x);
            let phase = (-gy - ax).powi(2) + (gx - ay).powi(2);
            let field = (gx - half * x).powi(2) + (gy - half * y).powi(2);
            let m = w[k] * xi[k] * xi[k] * rho;
            (m * phase, m * field)
        })
        .collect();
    let lhs = chunked_sum_idx(terms.len(), |k| terms[k].0);
    let lhs_field_form = chunked_sum_idx(terms.len(), |k| terms[k].1);
    let leading = half * (t * t * params.rotation).ln().abs();
    Ok(KineticBound {
        lhs,
        lhs_field_form,
        leading,
        slack,
        rhs: leading + slack * params.rotation,
        ratio: lhs / leading,
        t,
        grid_n: grid.n(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiemannGap {
    /// `|Q⁰| Σ_i sup_{Q^i} ρ^TF − ∫ ρ^TF`
    pub gap: f64,
    pub cells: usize,
    /// `√(ε²Ω) (1 + Ω^{-1/2})` when ε is known, else `NaN`.
    pub scale: f64,
}

/// Riemann overcount of `∫ρ^TF = 1` by the lattice cells whose centers lie in
/// the disc, with the supremum taken over each cell clipped to the disc.
pub fn riemann_gap(tf: &TfSolution, rotation: f64, kind: LatticeKind, epsilon: Option<f64>) -> Result<RiemannGap> {
    if !(rotation > 0.0) {
        return Err(Error::InvalidParameter("Omega must be positive".into()));
    }
    let lat = lattice_points(rotation, kind, [0.0, 0.0]);
    let area = lat.cell_area();
    let mut sum = 0.0;
    for (i, p) in lat.points.iter().enumerate() {
        let poly = cell_polygon(kind, lat.ell, lat.sublattice[i]);
        // ρ^TF is nondecreasing in r, so its sup sits at the farthest vertex.
        let rmax = poly
            .iter()
            .map(|v| (v[0] + p[0]).hypot(v[1] + p[1]))
            .fold(0.0, f64::max)
            .min(1.0);
        sum += tf.density(rmax);
    }
    let scale = epsilon.map_or(f64::NAN, |e| (e * e * rotation).sqrt() * (1.0 + rotation.powf(-0.5)));
    Ok(RiemannGap {
        gap: area * sum - tf.mass(),
        cells: lat.points.len(),
        scale,
    })
}
