//! Quantized vortices of a discrete field: plaquette degrees, clusters, the
//! vorticity measure on a region and the good/bad cell diagnostic.
//!
//! Every grid edge carries one principal-branch phase difference, computed
//! once in a fixed orientation. Plaquette degrees and contour windings are
//! sums of these, so additivity over rectangles is an integer identity.
//!
//! With rotation `Ω` the differences are gauge covariant, `arg(ā U b)` with
//! the same link `U = e^{−i∫A·dl}` as the energy, and the enclosed flux
//! `Ω · area` is added back. The result is the same integer whenever the
//! bare differences stay below π, but it stays correct where the background
//! phase gradient `Ωr/2` makes bare differences along an edge large.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::field::ComplexField;
use crate::geometry::rect_annulus_area;
use crate::tf::TfSolution;
use crate::{Error, Params, Result};

/// Phase of `b · conj(a)` on the principal branch.
#[inline]
fn edge_angle(a: Complex64, b: Complex64) -> f64 {
    (b * a.conj()).arg()
}

/// Covariant phase difference from `a` at `p` to `b` at `q` along the
/// straight segment, where `∫A·dl = (Ω/2)(p × q)`.
#[inline]
fn link_angle(rotation: f64, p: [f64; 2], q: [f64; 2], a: Complex64, b: Complex64) -> f64 {
    let flux = 0.5 * rotation * (p[0] * q[1] - p[1] * q[0]);
    edge_angle(a, b * Complex64::from_polar(1.0, -flux))
}

#[inline]
fn nonzero(v: Complex64) -> bool {
    v.re != 0.0 || v.im != 0.0
}

/// Plaquette degrees. Plaquette `(px, py)` has lower-left corner at node
/// `(px, py)`.
#[derive(Debug, Clone)]
pub struct WindingField {
    n: usize,
    h: f64,
    values: Vec<Option<i32>>,
    undefined: Vec<(usize, usize)>,
}

impl WindingField {
    /// Plaquettes per side.
    pub fn size(&self) -> usize {
        self.n - 1
    }

    /// Degree of a plaquette, `None` when a corner lies outside the disc or
    /// has zero amplitude.
    pub fn get(&self, px: usize, py: usize) -> Option<i32> {
        self.values[py * (self.n - 1) + px]
    }

    /// Plaquettes whose corners are in the disc but some corner vanishes.
    pub fn undefined(&self) -> &[(usize, usize)] {
        &self.undefined
    }

    pub fn center(&self, px: usize, py: usize) -> [f64; 2] {
        [
            -1.0 + (px as f64 + 0.5) * self.h,
            -1.0 + (py as f64 + 0.5) * self.h,
        ]
    }

    /// Nonzero plaquettes as `(px, py, degree)`.
    pub fn nonzero(&self) -> Vec<(usize, usize, i32)> {
        let m = self.n - 1;
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                Some(d) if *d != 0 => Some((i % m, i / m, *d)),
                _ => None,
            })
            .collect()
    }

    pub fn count_degree(&self, degree: i32) -> usize {
        self.values.iter().filter(|v| **v == Some(degree)).count()
    }

    /// Sum of the defined plaquette degrees in `[px0, px1) × [py0, py1)`.
    pub fn sum_in(&self, px0: usize, px1: usize, py0: usize, py1: usize) -> i64 {
        let mut s = 0i64;
        for py in py0..py1 {
            for px in px0..px1 {
                s += self.get(px, py).unwrap_or(0) as i64;
            }
        }
        s
    }
}

/// Per-row windings plus the plaquettes skipped in that row.
type WindingRow = (Vec<Option<i32>>, Vec<(usize, usize)>);

/// Per-plaquette degrees of `psi` under rotation `Ω` (0 for bare phases).
pub fn winding_field(psi: &ComplexField, rotation: f64) -> WindingField {
    let grid = psi.grid();
    let h = grid.h();
    let xy = |ix: usize, iy: usize| [grid.coord(ix), grid.coord(iy)];
    let cell_flux = rotation * h * h;
    let n = grid.n();
    let m = n - 1;
    let rows: Vec<WindingRow> = (0..m)
        .into_par_iter()
        .map(|py| {
            let mut vals = Vec::with_capacity(m);
            let mut undef = Vec::new();
            for px in 0..m {
                let c = [
                    psi.at(px, py),
                    psi.at(px + 1, py),
                    psi.at(px + 1, py + 1),
                    psi.at(px, py + 1),
                ];
                if c.iter().any(|v| v.is_none()) {
                    vals.push(None);
                    continue;
                }
                let [a, b, cc, d] = c.map(|v| v.unwrap());
                if !(nonzero(a) && nonzero(b) && nonzero(cc) && nonzero(d)) {
                    vals.push(None);
                    undef.push((px, py));
                    continue;
                }
                // Counterclockwise, each edge in its canonical orientation.
                let (pa, pb, pc, pd) = (xy(px, py), xy(px + 1, py), xy(px + 1, py + 1), xy(px, py + 1));
                let s = link_angle(rotation, pa, pb, a, b) + link_angle(rotation, pb, pc, b, cc)
                    - link_angle(rotation, pd, pc, d, cc)
                    - link_angle(rotation, pa, pd, a, d);
                vals.push(Some(((s + cell_flux) / TAU).round() as i32));
            }
            (vals, undef)
        })
        .collect();
    let mut values = Vec::with_capacity(m * m);
    let mut undefined = Vec::new();
    for (v, u) in rows {
        values.extend(v);
        undefined.extend(u);
    }
    WindingField {
        n,
        h: grid.h(),
        values,
        undefined,
    }
}

/// Winding of `psi` along the boundary of the node rectangle
/// `[ix0, ix1] × [iy0, iy1]`, counterclockwise. `None` if the contour leaves
/// the disc or meets a zero.
pub fn contour_winding(
    psi: &ComplexField,
    rotation: f64,
    ix0: usize,
    ix1: usize,
    iy0: usize,
    iy1: usize,
) -> Option<i64> {
    if ix1 <= ix0 || iy1 <= iy0 {
        return Some(0);
    }
    let grid = psi.grid();
    let v = |ix: usize, iy: usize| psi.at(ix, iy).filter(|z| nonzero(*z));
    let xy = |ix: usize, iy: usize| [grid.coord(ix), grid.coord(iy)];
    let e = |i0: usize, j0: usize, i1: usize, j1: usize| -> Option<f64> {
        Some(link_angle(rotation, xy(i0, j0), xy(i1, j1), v(i0, j0)?, v(i1, j1)?))
    };
    let mut s = 0.0;
    for ix in ix0..ix1 {
        s += e(ix, iy0, ix + 1, iy0)?;
        s -= e(ix, iy1, ix + 1, iy1)?;
    }
    for iy in iy0..iy1 {
        s += e(ix1, iy, ix1, iy + 1)?;
        s -= e(ix0, iy, ix0, iy + 1)?;
    }
    let h = grid.h();
    let area = (ix1 - ix0) as f64 * (iy1 - iy0) as f64 * h * h;
    Some(((s + rotation * area) / TAU).round() as i64)
}

/// Winding along a circle sampled at `samples` points with bilinear
/// interpolation. `None` if the circle leaves the disc or meets a zero.
pub fn circle_winding(
    psi: &ComplexField,
    rotation: f64,
    center: [f64; 2],
    radius: f64,
    samples: usize,
) -> Option<i64> {
    let xy: Vec<[f64; 2]> = (0..samples)
        .map(|k| {
            let th = TAU * k as f64 / samples as f64;
            [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
        })
        .collect();
    let vals: Option<Vec<Complex64>> = xy
        .iter()
        .map(|p| psi.sample(p[0], p[1]).filter(|z| nonzero(*z)))
        .collect();
    let vals = vals?;
    let s: f64 = (0..samples)
        .map(|k| {
            let j = (k + 1) % samples;
            link_angle(rotation, xy[k], xy[j], vals[k], vals[j])
        })
        .sum();
    // Area of the inscribed polygon.
    let area = 0.5 * samples as f64 * radius * radius * (TAU / samples as f64).sin();
    Some(((s + rotation * area) / TAU).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    pub degree: i32,
    /// Number of nonzero plaquettes merged into this vortex.
    pub plaquettes: usize,
    /// Radius of the ball used for the isolation and amplitude checks.
    pub radius: f64,
    /// Smallest `|ψ| / ‖ψ‖_∞` on the boundary of that ball.
    pub boundary_amplitude: f64,
    pub isolated: bool,
    pub amplitude_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VortexSet {
    pub entries: Vec<Vortex>,
    pub total_degree: i64,
    pub n: usize,
    pub inner_radius: f64,
    pub threshold: f64,
    pub undefined_plaquettes: usize,
}

impl VortexSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.entries.iter().filter(|v| !(v.isolated && v.amplitude_ok)).count()
    }

    /// Sum of degrees of the vortices inside `region`.
    pub fn degree_in(&self, region: &Region) -> i64 {
        self.entries
            .iter()
            .filter(|v| region.contains(v.x, v.y))
            .map(|v| v.degree as i64)
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "degree", "isolated", "amplitude_ok"])
            .map_err(csv_err)?;
        for v in &self.entries {
            w.write_record([
                format!("{:.12e}", v.x),
                format!("{:.12e}", v.y),
                v.degree.to_string(),
                v.isolated.to_string(),
                v.amplitude_ok.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Clusters nonzero plaquettes lying within `2h` of each other into vortices.
///
/// `threshold` is relative to `‖ψ‖_∞`. When `rotation` is given, each vortex
/// is flagged if its ball radius is not below `Ω^{-1/2}`.
pub fn extract_vortices(psi: &ComplexField, threshold: f64, rotation: Option<f64>) -> Result<VortexSet> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "amplitude threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let wf = winding_field(psi, rotation.unwrap_or(0.0));
    let grid = psi.grid();
    let h = grid.h();
    let nz = wf.nonzero();
    let index: HashMap<(usize, usize), usize> = nz.iter().enumerate().map(|(i, p)| ((p.0, p.1), i)).collect();
    let mut uf = UnionFind((0..nz.len()).collect());
    for (i, &(px, py, _)) in nz.iter().enumerate() {
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                if dx * dx + dy * dy > 4 || (dx == 0 && dy == 0) {
                    continue;
                }
                let (qx, qy) = (px as i64 + dx, py as i64 + dy);
                if qx < 0 || qy < 0 {
                    continue;
                }
                if let Some(&j) = index.get(&(qx as usize, qy as usize)) {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut clusters: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..nz.len() {
        let r = uf.find(i);
        clusters.entry(r).or_default().push(i);
    }
    let mut roots: Vec<usize> = clusters.keys().copied().collect();
    roots.sort_unstable();

    let sup = psi.sup_density().sqrt();
    let mut entries = Vec::new();
    let mut total = 0i64;
    for r in roots {
        let members = &clusters[&r];
        let degree: i32 = members.iter().map(|&i| nz[i].2).sum();
        total += degree as i64;
        if degree == 0 {
            continue;
        }
        // Inverse-amplitude weighted corners estimate the zero in each plaquette.
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for &i in members {
            let (px, py, d) = nz[i];
            let (mut qx, mut qy, mut qw) = (0.0, 0.0, 0.0);
            for (cx, cy) in [(px, py), (px + 1, py), (px, py + 1), (px + 1, py + 1)] {
                let a = psi.at(cx, cy).map(|z| z.norm()).unwrap_or(0.0).max(1e-300);
                let wgt = 1.0 / a;
                qx += wgt * grid.coord(cx);
                qy += wgt * grid.coord(cy);
                qw += wgt;
            }
            let m = d.unsigned_abs() as f64;
            sx += m * qx / qw;
            sy += m * qy / qw;
            sw += m;
        }
        let (x, y) = (sx / sw, sy / sw);
        let extent = members
            .iter()
            .map(|&i| {
                let c = wf.center(nz[i].0, nz[i].1);
                (c[0] - x).hypot(c[1] - y)
            })
            .fold(0.0, f64::max);
        let radius = (extent + h).max(3.0 * h);
        let boundary = (0..32)
            .map(|k| {
                let th = TAU * k as f64 / 32.0;
                psi.sample(x + radius * th.cos(), y + radius * th.sin())
                    .map(|z| z.norm() / sup)
                    .unwrap_or(f64::NAN)
            })
            .fold(f64::INFINITY, |a, b| if b.is_nan() { a } else { a.min(b) });
        entries.push(Vortex {
            x,
            y,
            degree,
            plaquettes: members.len(),
            radius,
            boundary_amplitude: boundary,
            isolated: rotation.is_none_or(|w| w <= 0.0 || radius < w.powf(-0.5)),
            amplitude_ok: boundary >= threshold,
        });
    }
    Ok(VortexSet {
        entries,
        total_degree: total,
        n: grid.n(),
        inner_radius: grid.inner_radius(),
        threshold,
        undefined_plaquettes: wf.undefined().len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Annulus { r0: f64, r1: f64 },
    Box { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disc { r: f64 },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Annulus { r0, r1 } => {
                let r = x.hypot(y);
                r > r0 && r < r1
            }
            Region::Box { x0, x1, y0, y1 } => x > x0 && x < x1 && y > y0 && y < y1,
            Region::Disc { r } => x.hypot(y) < r,
        }
    }

    /// Area of the region intersected with the annulus `a ≤ r ≤ b`.
    pub fn area_in_annulus(&self, a: f64, b: f64) -> f64 {
        let ring = |lo: f64, hi: f64| PI * (hi * hi - lo * lo).max(0.0);
        match *self {
            Region::Annulus { r0, r1 } => ring(r0.max(a), r1.min(b)),
            Region::Disc { r } => ring(a, r.min(b)),
            Region::Box { x0, x1, y0, y1 } => rect_annulus_area(x0, x1, y0, y1, a, b),
        }
    }

    /// Area inside the unit disc.
    pub fn area(&self) -> f64 {
        self.area_in_annulus(0.0, 1.0)
    }

    fn inside_unit_disc(&self) -> bool {
        match *self {
            Region::Annulus { r0, r1 } => r0 >= 0.0 && r1 > r0 && r1 <= 1.0,
            Region::Disc { r } => r > 0.0 && r <= 1.0,
            Region::Box { x0, x1, y0, y1 } => {
                x1 > x0 && y1 > y0 && [x0, x1].iter().all(|x| [y0, y1].iter().all(|y| x.hypot(*y) <= 1.0))
            }
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    /// `annulus:R1:R2`, `box:X0:X1:Y0:Y1` or `disc:R`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums: std::result::Result<Vec<f64>, _> = parts[1..].iter().map(|p| p.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| Error::InvalidParameter(format!("region {s:?}: {e}")))?;
        match (parts[0], nums.as_slice()) {
            ("annulus", [r0, r1]) => Ok(Region::Annulus { r0: *r0, r1: *r1 }),
            ("box", [x0, x1, y0, y1]) => Ok(Region::Box {
                x0: *x0,
                x1: *x1,
                y0: *y0,
                y1: *y1,
            }),
            ("disc", [r]) => Ok(Region::Disc { r: *r }),
            _ => Err(Error::InvalidParameter(format!(
                "region {s:?}: expected annulus:R1:R2, box:X0:X1:Y0:Y1 or disc:R"
            ))),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Annulus { r0, r1 } => write!(f, "annulus:{r0}:{r1}"),
            Region::Box { x0, x1, y0, y1 } => write!(f, "box:{x0}:{x1}:{y0}:{y1}"),
            Region::Disc { r } => write!(f, "disc:{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VorticityMeasureReport {
    pub region: Region,
    pub degree_sum: i64,
    /// `(2π/Ω) Σ d`
    pub measure_value: f64,
    /// `|region ∩ supp ρ^TF|`
    pub reference_value: f64,
    pub ratio: Option<f64>,
    pub region_area: f64,
    pub ratio_to_area: f64,
}

pub fn vorticity_measure(
    vs: &VortexSet,
    params: &Params,
    tf: &TfSolution,
    region: Region,
) -> Result<VorticityMeasureReport> {
    if !params.is_rotating() {
        return Err(Error::Precondition("the vorticity measure needs Omega > 0".into()));
    }
    if !region.inside_unit_disc() {
        return Err(Error::Precondition(format!("region {region} is not inside the unit disc")));
    }
    let area = region.area();
    if area < 0.05 {
        return Err(Error::Precondition(format!("region {region} has area {area:.4} < 0.05")));
    }
    let degree_sum = vs.degree_in(&region);
    let measure_value = TAU / params.rotation * degree_sum as f64;
    let reference_value = region.area_in_annulus(tf.hole_radius, 1.0);
    Ok(VorticityMeasureReport {
        region,
        degree_sum,
        measure_value,
        reference_value,
        ratio: (reference_value > 0.0).then(|| measure_value / reference_value),
        region_area: area,
        ratio_to_area: measure_value / area,
    })
}

/// How the restricted set `T` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SupportRule {
    /// `ρ^TF ≥ η · ‖ρ^TF‖_∞`
    Relative(f64),
    /// `ρ^TF ≥ ω |log δ|⁻¹`, the asymptotic definition.
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellOptions {
    pub rule: SupportRule,
    /// Replaces `√g(ε)` in the good-cell inequality.
    pub slack: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            rule: SupportRule::Relative(0.1),
            slack: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellRecord {
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub energy: f64,
    pub good: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub ell_hat: f64,
    pub threshold: f64,
    /// `Ω ℓ̂² |log(ε²Ω)| / 2`
    pub reference: f64,
    pub cells: Vec<CellRecord>,
    pub bad_fraction: f64,
    /// `Σ ρ^TF(r_i) ℓ̂²`
    pub riemann_sum: f64,
    /// `√(|log ε|/Ω) < ℓ̂ < min(1, 1/(ω|log δ|))` fails.
    pub window_empty: bool,
    pub in_window: bool,
}

/// Splits `T` into square cells of side `ℓ̂` centered at `(mℓ̂, nℓ̂)` and
/// evaluates the per-cell GL energy of `u = ψ/√ρ^TF`. A cell belongs to the
/// decomposition when its center lies in `T`; its energy is integrated over
/// the part of the cell inside `T`.
pub fn good_bad_cells(
    psi: &ComplexField,
    params: &Params,
    tf: &TfSolution,
    ell_hat: f64,
    opts: &CellOptions,
) -> Result<CellReport> {
    let grid = psi.grid();
    let h = grid.h();
    if !(ell_hat >= 3.0 * h) {
        return Err(Error::InvalidParameter(format!(
            "ell_hat = {ell_hat} is below three grid spacings ({})",
            3.0 * h
        )));
    }
    if !params.is_rotating() {
        return Err(Error::Precondition("cell decomposition needs Omega > 0".into()));
    }
    let eps2 = params.epsilon * params.epsilon;
    let log_d = params.delta.ln().abs();
    let lo = (params.log_eps / params.rotation).sqrt();
    let hi = 1.0f64.min(1.0 / (params.omega * log_d));
    let window_empty = lo >= hi;
    let in_window = ell_hat > lo && ell_hat < hi;
    if window_empty {
        log::warn!("ell_hat window [{lo:.4}, {hi:.4}] is empty at these parameters");
    }
    let threshold = match opts.rule {
        SupportRule::Relative(eta) => eta * tf.sup_density(),
        SupportRule::Asymptotic => params.omega / log_d,
    };
    let in_t = |r: f64| r <= 1.0 && tf.density(r) >= threshold && tf.density(r) > 0.0;
    let reference = 0.5 * params.rotation * ell_hat * ell_hat * (eps2 * params.rotation).ln().abs();

    let m = (1.0 / ell_hat).ceil() as i64 + 1;
    let mut centers = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let (x, y) = (i as f64 * ell_hat, j as f64 * ell_hat);
            if in_t(x.hypot(y)) {
                centers.push((i, j));
            }
        }
    }
    let index: HashMap<(i64, i64), usize> = centers.iter().enumerate().map(|(k, c)| (*c, k)).collect();

    let w = grid.weights();
    let rot = params.rotation;
    let u: Vec<Option<Complex64>> = (0..grid.len())
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            let r = x.hypot(y);
            in_t(r).then(|| psi.values()[k] / tf.density(r).sqrt())
        })
        .collect();
    let mut energy = vec![0.0; centers.len()];
    for k in 0..grid.len() {
        let Some(uk) = u[k] else { continue };
        let [x, y] = grid.node_xy(k);
        let cell = ((x / ell_hat).round() as i64, (y / ell_hat).round() as i64);
        let Some(&c) = index.get(&cell) else { continue };
        let rho_c = tf.density((cell.0 as f64 * ell_hat).hypot(cell.1 as f64 * ell_hat));
        let nb = grid.neighbors(k);
        let mut kin = 0.0;
        let ux = Complex64::from_polar(1.0, 0.5 * rot * y * h);
        let uy = Complex64::from_polar(1.0, -0.5 * rot * x * h);
        if let Some(Some(ur)) = nb[0].map(|j| u[j]) {
            kin += (ux * ur - uk).norm_sqr();
        }
        if let Some(Some(uu)) = nb[2].map(|j| u[j]) {
            kin += (uy * uu - uk).norm_sqr();
        }
        let pot = (1.0 - uk.norm_sqr()).powi(2) * rho_c / eps2;
        energy[c] += w[k] * (kin / (h * h) + pot);
    }
    let cells: Vec<CellRecord> = centers
        .iter()
        .zip(&energy)
        .map(|(&(i, j), &e)| {
            let (x, y) = (i as f64 * ell_hat, j as f64 * ell_hat);
            CellRecord {
                x,
                y,
                rho: tf.density(x.hypot(y)),
                energy: e,
                good: e - reference <= opts.slack * 2.0 * reference,
            }
        })
        .collect();
    let bad = cells.iter().filter(|c| !c.good).count();
    let riemann_sum = cells.iter().map(|c| c.rho).sum::<f64>() * ell_hat * ell_hat;
    Ok(CellReport {
        ell_hat,
        threshold,
        reference,
        bad_fraction: if cells.is_empty() { 0.0 } else { bad as f64 / cells.len() as f64 },
        cells,
        riemann_sum,
        window_empty,
        in_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_grid;
    use crate::tf::solve_tf;
    use proptest::prelude::*;

    fn vortex_at(n: usize, cx: f64, cy: f64, deg: i32) -> ComplexField {
        let grid = make_grid(n).unwrap();
        ComplexField::from_fn(grid, move |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let r = dx.hypot(dy);
            Complex64::from_polar(r.min(0.3) + 0.01 * (1.0 - x * x), deg as f64 * dy.atan2(dx))
        })
    }

    fn rough_field(n: usize, seed: u64) -> ComplexField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = make_grid(n).unwrap();
        let vals = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid, vals).unwrap()
    }

    #[test]
    fn single_vortex_occupies_one_plaquette() {
        let f = vortex_at(64, 0.013, -0.021, 1);
        let wf = winding_field(&f, 0.0);
        let nz = wf.nonzero();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].2, 1);
        let c = wf.center(nz[0].0, nz[0].1);
        let h = f.grid().h();
        assert!((c[0] - 0.013).abs() <= h && (c[1] + 0.021).abs() <= h);
        let vs = extract_vortices(&f, 0.05, Some(10.0)).unwrap();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs.total_degree, 1);
        assert!((vs.entries[0].x - 0.013).abs() < h && (vs.entries[0].y + 0.021).abs() < h);
    }

    #[test]
    fn phase_free_field_has_no_vortices() {
        let grid = make_grid(64).unwrap();
        let f = ComplexField::from_fn(grid, |x, y| Complex64::new((-(x * x + y * y)).exp(), 0.0));
        assert!(winding_field(&f, 0.0).nonzero().is_empty());
        assert!(extract_vortices(&f, 0.1, None).unwrap().is_empty());
    }

    #[test]
    fn double_vortex_and_circle_winding() {
        let f = vortex_at(96, 0.2, 0.1, 2);
        let vs = extract_vortices(&f, 0.05, None).unwrap();
        assert_eq!(vs.total_degree, 2);
        assert_eq!(circle_winding(&f, 0.0, [0.2, 0.1], 0.3, 256), Some(2));
        assert_eq!(circle_winding(&f, 0.0, [-0.4, 0.1], 0.2, 256), Some(0));
        let n = f.grid().n();
        assert_eq!(contour_winding(&f, 0.0, n / 4, 3 * n / 4, n / 4, 3 * n / 4), Some(2));
    }

    #[test]
    fn conjugation_flips_every_degree() {
        let f = rough_field(64, 3);
        let a = winding_field(&f, 0.0);
        let b = winding_field(&f.conj(), 0.0);
        let m = a.size();
        for py in 0..m {
            for px in 0..m {
                assert_eq!(a.get(px, py).map(|d| -d), b.get(px, py));
            }
        }
    }

    #[test]
    fn region_parsing_and_areas() {
        let r: Region = "annulus:0.5:0.8".parse().unwrap();
        assert_eq!(r, Region::Annulus { r0: 0.5, r1: 0.8 });
        assert!((r.area() - PI * 0.39).abs() < 1e-12);
        assert!("box:0:0.5:0:0.5".parse::<Region>().is_ok());
        assert!("disc:0.3".parse::<Region>().is_ok());
        assert!("ring:1".parse::<Region>().is_err());
        let tf = solve_tf(3.0).unwrap();
        let vs = VortexSet {
            entries: vec![],
            total_degree: 0,
            n: 64,
            inner_radius: 0.0,
            threshold: 0.1,
            undefined_plaquettes: 0,
        };
        let p = Params::derive(0.05, 60.0).unwrap();
        let rep = vorticity_measure(&vs, &p, &tf, r).unwrap();
        // The annulus lies inside the support (R_h ≈ 0.4966).
        assert!((rep.reference_value - 1.225_221_134_900_056).abs() < 1e-9);
        assert!(vorticity_measure(&vs, &p, &tf, Region::Disc { r: 0.1 }).is_err());
        assert!(vorticity_measure(&vs, &p, &tf, Region::Annulus { r0: 0.5, r1: 1.2 }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn plaquette_sums_match_contour_windings(
            seed in 0u64..4,
            a in 16usize..48,
            b in 16usize..48,
            c in 16usize..48,
            d in 16usize..48,
            rot in prop::sample::select(vec![0.0, 37.5, 500.0]),
        ) {
            let f = rough_field(64, seed);
            let (ix0, ix1) = (a.min(b), a.max(b));
            let (iy0, iy1) = (c.min(d), c.max(d));
            let wf = winding_field(&f, rot);
            prop_assert_eq!(
                contour_winding(&f, rot, ix0, ix1, iy0, iy1),
                Some(wf.sum_in(ix0, ix1, iy0, iy1))
            );
        }
    }
}
