//! Upper-bound trial states: the vortex-lattice state `c √ρ ξ g` and the
//! giant-vortex state `c √ρ e^{inθ}`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use crate::field::{gp_energy, ComplexField, EnergyBreakdown, Grid};
use crate::tf::{regularized_density, solve_tf, RegularizedDensity};
use crate::{Error, Params, RegimeConstants, Result};

/// Arrangement of the vortex points. Every kind has one point per area
/// `2π/Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    /// Triangular points; the Voronoi cells are regular hexagons.
    Triangular,
    Square,
    /// Honeycomb points; the Voronoi cells are equilateral triangles.
    Hexagonal,
}

impl LatticeKind {
    pub const ALL: [LatticeKind; 3] = [
        LatticeKind::Triangular,
        LatticeKind::Square,
        LatticeKind::Hexagonal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LatticeKind::Triangular => "triangular",
            LatticeKind::Square => "square",
            LatticeKind::Hexagonal => "hexagonal",
        }
    }

    /// Nearest-neighbor distance for a point density `Ω/2π`.
    pub fn spacing(&self, rotation: f64) -> f64 {
        let cell = 2.0 * PI / rotation;
        match self {
            LatticeKind::Square => cell.sqrt(),
            LatticeKind::Triangular => (2.0 * cell / 3f64.sqrt()).sqrt(),
            LatticeKind::Hexagonal => (4.0 * cell / (3.0 * 3f64.sqrt())).sqrt(),
        }
    }
}

impl FromStr for LatticeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" => Ok(LatticeKind::Triangular),
            "square" => Ok(LatticeKind::Square),
            "hexagonal" | "honeycomb" => Ok(LatticeKind::Hexagonal),
            other => Err(Error::InvalidParameter(format!("unknown lattice kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoreRadius {
    pub t: f64,
    /// Whether `t ≤ 0.1 Ω^{-1/2}`, the desk-scale reading of `t ≪ Ω^{-1/2}`.
    pub well_separated: bool,
}

/// Core radius: `ε` up to `Ω = c_mid/ε`, `(ε/Ω)^{1/2}` beyond.
pub fn core_radius(params: &Params, constants: &RegimeConstants) -> Result<CoreRadius> {
    if !params.is_rotating() {
        return Err(Error::Precondition("core radius needs Omega > 0".into()));
    }
    let eps = params.epsilon;
    let w = params.rotation;
    let t = if w <= constants.c_mid / eps {
        eps
    } else {
        (eps / w).sqrt()
    };
    let scale = w.powf(-0.5);
    if t >= 0.5 * scale {
        return Err(Error::Precondition(format!(
            "core radius {t:.4e} is not small against the lattice scale Omega^-1/2 = {scale:.4e}"
        )));
    }
    Ok(CoreRadius {
        t,
        well_separated: t <= 0.1 * scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VortexLattice {
    pub kind: LatticeKind,
    /// Lattice constant: the nearest-neighbor distance.
    pub ell: f64,
    pub offset: [f64; 2],
    /// Points strictly inside the unit disc.
    pub points: Vec<[f64; 2]>,
    /// Sublattice label (0 or 1) per point; only the honeycomb uses 1.
    pub sublattice: Vec<u8>,
    pub core_radius: f64,
    pub core_well_separated: bool,
    /// Points in the disc.
    pub count: usize,
    /// Points on the support of `ρ^TF`.
    pub count_support: usize,
    pub rotation: f64,
}

/// Lattice of vortex points inside the unit disc with one point at `offset`.
pub fn build_lattice(
    params: &Params,
    kind: LatticeKind,
    offset: [f64; 2],
    constants: &RegimeConstants,
) -> Result<VortexLattice> {
    if params.rotation < 20.0 {
        return Err(Error::InvalidParameter(format!(
            "lattice construction needs Omega >= 20, got {}",
            params.rotation
        )));
    }
    let cr = core_radius(params, constants)?;
    let mut lat = lattice_points(params.rotation, kind, offset);
    let tf = solve_tf(params.omega)?;
    lat.core_radius = cr.t;
    lat.core_well_separated = cr.well_separated;
    lat.count_support = lat
        .points
        .iter()
        .filter(|p| tf.density(p[0].hypot(p[1])) > 0.0)
        .count();
    Ok(lat)
}

pub(crate) fn lattice_points(rotation: f64, kind: LatticeKind, offset: [f64; 2]) -> VortexLattice {
    let ell = kind.spacing(rotation);
    let s3 = 3f64.sqrt();
    let (a1, a2, basis): ([f64; 2], [f64; 2], Vec<[f64; 2]>) = match kind {
        LatticeKind::Square => ([ell, 0.0], [0.0, ell], vec![[0.0, 0.0]]),
        LatticeKind::Triangular => ([ell, 0.0], [0.5 * ell, 0.5 * s3 * ell], vec![[0.0, 0.0]]),
        LatticeKind::Hexagonal => (
            [1.5 * ell, 0.5 * s3 * ell],
            [1.5 * ell, -0.5 * s3 * ell],
            vec![[0.0, 0.0], [ell, 0.0]],
        ),
    };
    let reach = (2.0 / ell).ceil() as i64 + 3;
    let mut points = Vec::new();
    let mut sub = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            for (b, base) in basis.iter().enumerate() {
                let x = offset[0] + i as f64 * a1[0] + j as f64 * a2[0] + base[0];
                let y = offset[1] + i as f64 * a1[1] + j as f64 * a2[1] + base[1];
                if x * x + y * y < 1.0 {
                    points.push([x, y]);
                    sub.push(b as u8);
                }
            }
        }
    }
    // Deterministic order: by angle-free raster (y, then x).
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][1]
            .partial_cmp(&points[b][1])
            .unwrap()
            .then(points[a][0].partial_cmp(&points[b][0]).unwrap())
    });
    let points: Vec<[f64; 2]> = idx.iter().map(|&i| points[i]).collect();
    let sublattice: Vec<u8> = idx.iter().map(|&i| sub[i]).collect();
    let count = points.len();
    VortexLattice {
        kind,
        ell,
        offset,
        points,
        sublattice,
        core_radius: 0.0,
        core_well_separated: false,
        count,
        count_support: 0,
        rotation,
    }
}

impl VortexLattice {
    /// Area `2π/Ω` of one cell.
    pub fn cell_area(&self) -> f64 {
        2.0 * PI / self.rotation
    }

    /// Vertices (counter-clockwise) of the Voronoi cell of point `i`.
    pub fn cell(&self, i: usize) -> Vec<[f64; 2]> {
        let c = self.points[i];
        cell_polygon(self.kind, self.ell, self.sublattice[i])
            .into_iter()
            .map(|v| [c[0] + v[0], c[1] + v[1]])
            .collect()
    }

    /// Number of points with `|ζ| < r`.
    pub fn count_within(&self, r: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p[0].hypot(p[1]) < r)
            .count()
    }
}

/// Voronoi cell of a lattice point centered at the origin.
pub fn cell_polygon(kind: LatticeKind, ell: f64, sublattice: u8) -> Vec<[f64; 2]> {
    let ring = |n: usize, radius: f64, phase: f64| -> Vec<[f64; 2]> {
        (0..n)
            .map(|k| {
                let a = phase + 2.0 * PI * k as f64 / n as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect()
    };
    match kind {
        LatticeKind::Square => {
            let h = 0.5 * ell;
            vec![[-h, -h], [h, -h], [h, h], [-h, h]]
        }
        LatticeKind::Triangular => ring(6, ell / 3f64.sqrt(), PI / 6.0),
        LatticeKind::Hexagonal => {
            let phase = if sublattice == 0 { PI / 3.0 } else { 0.0 };
            ring(3, ell, phase)
        }
    }
}

/// How the phase factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PhaseMethod {
    /// Running product of `ζ − ζ_i`, rescaled to unit modulus every few factors.
    #[default]
    Product,
    /// Sum of `arg(ζ − ζ_i)`.
    Accumulate,
}

/// `g(ζ) = Π (ζ − ζ_i)/|ζ − ζ_i|` on the grid, with `g = 0` at nodes
/// closer than `1e-12` to a vortex.
pub fn phase_factor(grid: &Arc<Grid>, points: &[[f64; 2]], method: PhaseMethod) -> ComplexField {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            phase_at(x, y, points, method)
        })
        .collect();
    ComplexField::new(grid.clone(), values).expect("one value per node")
}

pub(crate) fn phase_at(x: f64, y: f64, points: &[[f64; 2]], method: PhaseMethod) -> Complex64 {
    match method {
        PhaseMethod::Product => {
            let mut acc = Complex64::new(1.0, 0.0);
            for (i, p) in points.iter().enumerate() {
                let z = Complex64::new(x - p[0], y - p[1]);
                if z.norm_sqr() < 1e-24 {
                    return Complex64::new(0.0, 0.0);
                }
                acc *= z;
                if i % 16 == 15 {
                    acc /= acc.norm();
                }
            }
            acc / acc.norm()
        }
        PhaseMethod::Accumulate => {
            let mut phase = 0.0;
            for p in points {
                let (dx, dy) = (x - p[0], y - p[1]);
                if dx * dx + dy * dy < 1e-24 {
                    return Complex64::new(0.0, 0.0);
                }
                phase += dy.atan2(dx);
            }
            Complex64::from_polar(1.0, phase)
        }
    }
}

/// `ξ = min(1, dist/t)` to the nearest vortex, as real values per node.
pub fn cutoff(grid: &Grid, points: &[[f64; 2]], t: f64, min_spacing: f64) -> Result<Vec<f64>> {
    if 2.0 * t >= min_spacing {
        return Err(Error::Precondition(format!(
            "vortex cores overlap: 2t = {:.4e} >= spacing {:.4e}",
            2.0 * t,
            min_spacing
        )));
    }
    let mut xi = vec![1.0; grid.len()];
    let n = grid.n() as i64;
    for p in points {
        let (fx, fy) = grid.to_lattice(p[0], p[1]);
        let span = t / grid.h();
        let x0 = ((fx - span).floor() as i64).max(0);
        let x1 = ((fx + span).ceil() as i64).min(n - 1);
        let y0 = ((fy - span).floor() as i64).max(0);
        let y1 = ((fy + span).ceil() as i64).min(n - 1);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                if let Some(k) = grid.lookup(ix as usize, iy as usize) {
                    let [x, y] = grid.node_xy(k);
                    let d = (x - p[0]).hypot(y - p[1]);
                    if d < t {
                        xi[k] = f64::min(xi[k], d / t);
                    }
                }
            }
        }
    }
    Ok(xi)
}

/// Options for the lattice trial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOptions {
    pub kind: LatticeKind,
    pub offset: [f64; 2],
    /// Replaces the default core radius.
    pub core_radius: Option<f64>,
    /// Replace vortices inside the TF hole by one central phase winding.
    pub prune_hole_vortices: bool,
    pub phase: PhaseMethod,
    pub constants: RegimeConstants,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            kind: LatticeKind::Triangular,
            offset: [0.0, 0.0],
            core_radius: None,
            prune_hole_vortices: false,
            phase: PhaseMethod::Product,
            constants: RegimeConstants::default(),
        }
    }
}

impl TrialOptions {
    pub fn with_kind(kind: LatticeKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialState {
    pub psi: ComplexField,
    /// Normalization constant `c`.
    pub c: f64,
    /// `None` for the giant vortex.
    pub lattice: Option<VortexLattice>,
    /// Winding carried by the central phase `e^{inθ}` (giant vortex or pruned
    /// hole vortices).
    pub central_winding: i64,
    pub rho_used: RegularizedDensity,
}

impl TrialState {
    pub fn energy(&self, params: &Params) -> Result<EnergyBreakdown> {
        gp_energy(&self.psi, params)
    }
}

/// Grid fine enough to resolve vortex cores of radius `t` (about three points
/// per core radius, between 256 and `max_n` points per side). When the TF
/// density has a hole the grid only covers the annulus outside it, since the
/// trial states vanish there.
pub fn resolved_grid(params: &Params, t: f64, max_n: usize) -> Result<Arc<Grid>> {
    let h_target = t / 3.0;
    let n = ((2.0 / h_target).ceil() as usize + 1).clamp(256, max_n.max(256));
    let h = 2.0 / (n - 1) as f64;
    let tf = solve_tf(params.omega)?;
    let inner = if tf.has_hole() {
        (tf.hole_radius - 3.0 * h).max(0.0)
    } else {
        0.0
    };
    Ok(Arc::new(Grid::annulus(n, inner)?))
}

/// Default cap on points per side for [`resolved_grid`].
pub const DEFAULT_MAX_N: usize = 4097;

fn normalize_profile(amplitude: Vec<f64>, grid: &Arc<Grid>) -> Result<f64> {
    let w = grid.weights();
    let mass: f64 = crate::field::chunked_sum_idx(amplitude.len(), |k| w[k] * amplitude[k] * amplitude[k]);
    if !(mass > 0.0) {
        return Err(Error::Precondition("trial profile vanishes on the grid".into()));
    }
    Ok(1.0 / mass.sqrt())
}

/// Vortex-lattice trial state on `grid` (or on a resolution-adapted grid).
pub fn assemble_trial(
    params: &Params,
    opts: &TrialOptions,
    grid: Option<Arc<Grid>>,
) -> Result<TrialState> {
    let regime = params.classify(&opts.constants);
    if !regime.tag.is_lattice() {
        log::warn!("lattice trial requested in regime {}", regime.tag);
    }
    let mut lattice = build_lattice(params, opts.kind, opts.offset, &opts.constants)?;
    if let Some(t) = opts.core_radius {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("core radius must be positive, got {t}")));
        }
        lattice.core_radius = t;
        lattice.core_well_separated = t <= 0.1 / params.rotation.sqrt();
    }
    let t = lattice.core_radius;
    let grid = match grid {
        Some(g) => g,
        None => resolved_grid(params, t, DEFAULT_MAX_N)?,
    };
    let tf = solve_tf(params.omega)?;
    let rho = regularized_density(&tf, params.rotation)?;

    let (phase_points, central) = if opts.prune_hole_vortices && tf.has_hole() {
        let keep: Vec<[f64; 2]> = lattice
            .points
            .iter()
            .copied()
            .filter(|p| p[0].hypot(p[1]) > tf.hole_radius)
            .collect();
        let removed = (lattice.points.len() - keep.len()) as i64;
        (keep, removed)
    } else {
        (lattice.points.clone(), 0)
    };

    let xi = cutoff(&grid, &phase_points, t, lattice.ell)?;
    let amp: Vec<f64> = (0..grid.len())
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            rho.eval(x.hypot(y)).sqrt() * xi[k]
        })
        .collect();
    let c = normalize_profile(amp.clone(), &grid)?;
    let g = phase_factor(&grid, &phase_points, opts.phase);
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut v = g.values()[k] * (c * amp[k]);
            if central != 0 {
                let [x, y] = grid.node_xy(k);
                v *= Complex64::from_polar(1.0, central as f64 * y.atan2(x));
            }
            v
        })
        .collect();
    let mut psi = ComplexField::new(grid, values)?;
    // Absorb rounding so the stored field is normalized to machine precision.
    psi.normalize()?;
    Ok(TrialState {
        psi,
        c,
        lattice: Some(lattice),
        central_winding: central,
        rho_used: rho,
    })
}

/// Giant-vortex trial `c √ρ e^{inθ}`; `n_winding` defaults to `round(Ω/2)`.
pub fn giant_vortex_trial(
    params: &Params,
    n_winding: Option<i64>,
    grid: Option<Arc<Grid>>,
) -> Result<TrialState> {
    let tf = solve_tf(params.omega)?;
    if !tf.has_hole() {
        return Err(Error::Precondition(format!(
            "giant vortex needs omega > omega_h = {:.6}, got {:.6}",
            tf.omega_h, params.omega
        )));
    }
    let n_winding = n_winding.unwrap_or_else(|| (0.5 * params.rotation).round() as i64);
    let rho = regularized_density(&tf, params.rotation)?;
    let grid = match grid {
        Some(g) => g,
        None => {
            let t = core_radius(params, &RegimeConstants::default())
                .map(|c| c.t)
                .unwrap_or(params.epsilon);
            resolved_grid(params, t, DEFAULT_MAX_N)?
        }
    };
    let amp: Vec<f64> = (0..grid.len())
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            rho.eval(x.hypot(y)).sqrt()
        })
        .collect();
    let c = normalize_profile(amp.clone(), &grid)?;
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let [x, y] = grid.node_xy(k);
            Complex64::from_polar(c * amp[k], n_winding as f64 * y.atan2(x))
        })
        .collect();
    let mut psi = ComplexField::new(grid, values)?;
    psi.normalize()?;
    Ok(TrialState {
        psi,
        c,
        lattice: None,
        central_winding: n_winding,
        rho_used: rho,
    })
}
