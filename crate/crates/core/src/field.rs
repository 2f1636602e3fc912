//! Masked Cartesian discretization of the unit disc, complex fields on it,
//! and the discrete Gross–Pitaevskii energy with its variational gradient.
//!
//! The covariant derivative `∇ − iA` with `A = (Ω/2)(−y, x)` is discretized
//! with link variables: along the edge from node `i` to its neighbor `j` the
//! difference is `U_ij ψ_j − ψ_i` with `U_ij = exp(−i∫A·dl)`. The energy is a
//! sum over edges with both ends inside the domain, so the discrete minimizer
//! satisfies the magnetic Neumann condition in the natural (variational) way.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::geometry::rect_annulus_area;
use crate::{Error, Params, Result};

pub(crate) const NONE: u32 = u32::MAX;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy)]
struct Segment {
    ix0: u32,
    ix1: u32,
    offset: u32,
}

/// Vertex grid on `[-1, 1]²` restricted to the unit disc or to an annulus
/// `inner_radius ≤ r ≤ 1`.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    h: f64,
    inner_radius: f64,
    coord: Vec<f64>,
    nodes: Vec<[u32; 2]>,
    weights: Vec<f64>,
    rows: Vec<Vec<Segment>>,
    /// right, left, up, down
    nbr: Vec<[u32; 4]>,
}

/// Disc grid with `n` points per side.
pub fn make_grid(n: usize) -> Result<Arc<Grid>> {
    Grid::disc(n).map(Arc::new)
}

impl Grid {
    pub fn disc(n: usize) -> Result<Grid> {
        Grid::annulus(n, 0.0)
    }

    /// Grid on `inner_radius ≤ r ≤ 1`. Used to evaluate fields that vanish
    /// on a central disc without paying for nodes there.
    pub fn annulus(n: usize, inner_radius: f64) -> Result<Grid> {
        if n < 64 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 64 points per side, got {n}"
            )));
        }
        if n > 60_000 {
            return Err(Error::InvalidParameter(format!("grid size {n} is too large")));
        }
        if !(inner_radius.is_finite() && (0.0..0.999).contains(&inner_radius)) {
            return Err(Error::InvalidParameter(format!(
                "inner radius must lie in [0, 0.999), got {inner_radius}"
            )));
        }
        let m = (n - 1) as i64;
        let h = 2.0 / m as f64;
        let coord: Vec<f64> = (0..n).map(|i| (2 * i as i64 - m) as f64 / m as f64).collect();
        let inner2 = inner_radius * inner_radius;
        let inside = |ix: usize, iy: usize| -> bool {
            let kx = 2 * ix as i64 - m;
            let ky = 2 * iy as i64 - m;
            if kx * kx + ky * ky > m * m {
                return false;
            }
            inner_radius == 0.0 || coord[ix] * coord[ix] + coord[iy] * coord[iy] >= inner2
        };

        let mut rows = Vec::with_capacity(n);
        let mut nodes = Vec::new();
        for iy in 0..n {
            let mut segs = Vec::new();
            let mut ix = 0;
            while ix < n {
                if inside(ix, iy) {
                    let start = ix;
                    while ix < n && inside(ix, iy) {
                        ix += 1;
                    }
                    segs.push(Segment {
                        ix0: start as u32,
                        ix1: ix as u32,
                        offset: nodes.len() as u32,
                    });
                    for j in start..ix {
                        nodes.push([j as u32, iy as u32]);
                    }
                } else {
                    ix += 1;
                }
            }
            rows.push(segs);
        }

        let mut grid = Grid {
            n,
            h,
            inner_radius,
            coord,
            nodes,
            weights: Vec::new(),
            rows,
            nbr: Vec::new(),
        };
        grid.nbr = (0..grid.nodes.len())
            .map(|k| {
                let [ix, iy] = grid.nodes[k];
                let (ix, iy) = (ix as i64, iy as i64);
                [
                    grid.lookup_i(ix + 1, iy),
                    grid.lookup_i(ix - 1, iy),
                    grid.lookup_i(ix, iy + 1),
                    grid.lookup_i(ix, iy - 1),
                ]
            })
            .collect();
        grid.weights = grid.compute_weights();
        Ok(grid)
    }

    /// Exact cell ∩ domain areas. Cells of nodes outside the mask that still
    /// overlap the domain hand their area to the nearest masked node(s).
    fn compute_weights(&self) -> Vec<f64> {
        let h = self.h;
        let r0 = self.inner_radius;
        let cell_area = |ix: usize, iy: usize| {
            let x = self.coord[ix];
            let y = self.coord[iy];
            rect_annulus_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h, r0, 1.0)
        };
        let mut w: Vec<f64> = self
            .nodes
            .iter()
            .map(|&[ix, iy]| cell_area(ix as usize, iy as usize))
            .collect();

        let n = self.n as i64;
        let mut orphans: Vec<(i64, i64)> = Vec::new();
        for &[ix, iy] in &self.nodes {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= n || jy >= n {
                        continue;
                    }
                    if self.lookup_i(jx, jy) == NONE {
                        orphans.push((jy, jx));
                    }
                }
            }
        }
        orphans.sort_unstable();
        orphans.dedup();
        for (jy, jx) in orphans {
            let a = cell_area(jx as usize, jy as usize);
            if a <= 0.0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut targets: Vec<usize> = Vec::new();
            for dy in -2..=2i64 {
                for dx in -2..=2i64 {
                    let k = self.lookup_i(jx + dx, jy + dy);
                    if k == NONE {
                        continue;
                    }
                    let d2 = (dx * dx + dy * dy) as f64;
                    if d2 < best - 1e-9 {
                        best = d2;
                        targets.clear();
                        targets.push(k as usize);
                    } else if (d2 - best).abs() <= 1e-9 {
                        targets.push(k as usize);
                    }
                }
            }
            if targets.is_empty() {
                log::warn!("grid cell at ({jx}, {jy}) has no masked neighbor; area {a:e} dropped");
                continue;
            }
            let share = a / targets.len() as f64;
            for k in targets {
                w[k] += share;
            }
        }
        w
    }

    fn lookup_i(&self, ix: i64, iy: i64) -> u32 {
        if ix < 0 || iy < 0 || ix >= self.n as i64 || iy >= self.n as i64 {
            return NONE;
        }
        let ix = ix as u32;
        for s in &self.rows[iy as usize] {
            if ix >= s.ix0 && ix < s.ix1 {
                return s.offset + (ix - s.ix0);
            }
        }
        NONE
    }

    /// Node index at lattice position `(ix, iy)`, if masked in.
    pub fn lookup(&self, ix: usize, iy: usize) -> Option<usize> {
        match self.lookup_i(ix as i64, iy as i64) {
            NONE => None,
            k => Some(k as usize),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinate of lattice line `i` (same for x and y).
    pub fn coord(&self, i: usize) -> f64 {
        self.coord[i]
    }

    pub fn node_index(&self, k: usize) -> (usize, usize) {
        let [ix, iy] = self.nodes[k];
        (ix as usize, iy as usize)
    }

    pub fn node_xy(&self, k: usize) -> [f64; 2] {
        let [ix, iy] = self.nodes[k];
        [self.coord[ix as usize], self.coord[iy as usize]]
    }

    pub fn neighbors(&self, k: usize) -> [Option<usize>; 4] {
        self.nbr[k].map(|j| if j == NONE { None } else { Some(j as usize) })
    }

    pub(crate) fn raw_neighbors(&self) -> &[[u32; 4]] {
        &self.nbr
    }

    /// Whether lattice point `(ix, iy)` lies in the closed unit disc.
    pub fn in_unit_disc(&self, ix: usize, iy: usize) -> bool {
        let m = (self.n - 1) as i64;
        let kx = 2 * ix as i64 - m;
        let ky = 2 * iy as i64 - m;
        kx * kx + ky * ky <= m * m
    }

    /// Fractional lattice position of a point.
    pub fn to_lattice(&self, x: f64, y: f64) -> (f64, f64) {
        ((x + 1.0) / self.h, (y + 1.0) / self.h)
    }

    pub fn total_weight(&self) -> f64 {
        chunked_sum(&self.weights, |w| *w)
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.n == other.n && self.inner_radius.to_bits() == other.inner_radius.to_bits()
    }
}

/// Deterministic parallel sum: fixed-size chunks, summed in order.
pub(crate) fn chunked_sum<T: Sync, F: Fn(&T) -> f64 + Sync>(xs: &[T], f: F) -> f64 {
    let parts: Vec<f64> = xs
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .collect();
    parts.iter().sum()
}

pub(crate) fn chunked_sum_idx<F: Fn(usize) -> f64 + Sync>(len: usize, f: F) -> f64 {
    let nchunks = len.div_ceil(CHUNK);
    let parts: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

/// Complex order parameter sampled on the masked nodes of a grid.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn<F: Fn(f64, f64) -> Complex64 + Sync>(grid: Arc<Grid>, f: F) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let [x, y] = grid.node_xy(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `Σ w |ψ|²`
    pub fn norm_sq(&self) -> f64 {
        let w = self.grid.weights();
        chunked_sum_idx(self.values.len(), |k| w[k] * self.values[k].norm_sqr())
    }

    /// `Σ w |ψ|⁴`
    pub fn l4_pow4(&self) -> f64 {
        let w = self.grid.weights();
        chunked_sum_idx(self.values.len(), |k| {
            let a = self.values[k].norm_sqr();
            w[k] * a * a
        })
    }

    /// Weighted inner product `Σ w ψ̄ φ`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        let w = self.grid.weights();
        let re = chunked_sum_idx(self.values.len(), |k| {
            w[k] * (self.values[k].conj() * other.values[k]).re
        });
        let im = chunked_sum_idx(self.values.len(), |k| {
            w[k] * (self.values[k].conj() * other.values[k]).im
        });
        Complex64::new(re, im)
    }

    /// Rescales to unit norm and returns the factor applied.
    pub fn normalize(&mut self) -> Result<f64> {
        let nrm = self.norm_sq().sqrt();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Precondition("cannot normalize a zero field".into()));
        }
        let s = 1.0 / nrm;
        self.values.par_iter_mut().for_each(|v| *v *= s);
        Ok(s)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        self.values.par_iter_mut().for_each(|v| *v *= s);
    }

    /// `max |ψ|²`
    pub fn sup_density(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }

    /// Value at node `(ix, iy)`; zero for in-disc nodes missing from an
    /// annulus grid, `None` outside the unit disc.
    pub fn at(&self, ix: usize, iy: usize) -> Option<Complex64> {
        match self.grid.lookup(ix, iy) {
            Some(k) => Some(self.values[k]),
            None if ix < self.grid.n && iy < self.grid.n && self.grid.in_unit_disc(ix, iy) => {
                Some(Complex64::new(0.0, 0.0))
            }
            None => None,
        }
    }

    /// Bilinear interpolation at `(x, y)`. `None` when any surrounding node is
    /// outside the unit disc.
    pub fn sample(&self, x: f64, y: f64) -> Option<Complex64> {
        let (fx, fy) = self.grid.to_lattice(x, y);
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let ix = fx.floor() as usize;
        let iy = fy.floor() as usize;
        if ix + 1 >= self.grid.n || iy + 1 >= self.grid.n {
            return None;
        }
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let a = self.at(ix, iy)?;
        let b = self.at(ix + 1, iy)?;
        let c = self.at(ix, iy + 1)?;
        let d = self.at(ix + 1, iy + 1)?;
        Some(
            a * ((1.0 - tx) * (1.0 - ty))
                + b * (tx * (1.0 - ty))
                + c * ((1.0 - tx) * ty)
                + d * (tx * ty),
        )
    }

    /// Weighted integral of `f(x, y, ψ)` over the grid.
    pub fn integrate<F: Fn(f64, f64, Complex64) -> f64 + Sync>(&self, f: F) -> f64 {
        let w = self.grid.weights();
        chunked_sum_idx(self.values.len(), |k| {
            let [x, y] = self.grid.node_xy(k);
            w[k] * f(x, y, self.values[k])
        })
    }

    /// Transfers the field onto a disc grid of the same size, filling nodes
    /// absent from `self` with zeros.
    pub fn to_disc(&self) -> Result<ComplexField> {
        if self.grid.inner_radius == 0.0 {
            return Ok(self.clone());
        }
        let disc = make_grid(self.grid.n)?;
        let values = (0..disc.len())
            .map(|k| {
                let (ix, iy) = disc.node_index(k);
                self.at(ix, iy).unwrap_or_default()
            })
            .collect();
        ComplexField::new(disc, values)
    }

    /// Writes the GPF1 snapshot.
    pub fn write_gpf<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.grid.n;
        let mut buf = Vec::with_capacity(12 + 4 * 8 + 16 * n * n);
        buf.extend_from_slice(b"GPF1");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(n as u32).to_le_bytes());
        for v in [-1.0f64, 1.0, -1.0, 1.0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for iy in 0..n {
            for ix in 0..n {
                let v = self
                    .at(ix, iy)
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_gpf(std::io::BufWriter::new(f))
    }

    /// Reads a GPF1 snapshot onto a fresh disc grid.
    pub fn read_gpf<R: Read>(mut input: R) -> Result<ComplexField> {
        let mut head = [0u8; 12 + 4 * 8];
        input
            .read_exact(&mut head)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &head[0..4] != b"GPF1" {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != 1 {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let bounds: Vec<f64> = (0..4)
            .map(|i| f64::from_le_bytes(head[12 + 8 * i..20 + 8 * i].try_into().unwrap()))
            .collect();
        if bounds != [-1.0, 1.0, -1.0, 1.0] {
            return Err(Error::Format(format!("unsupported bounds {bounds:?}")));
        }
        let grid = make_grid(n).map_err(|e| Error::Format(e.to_string()))?;
        let mut body = vec![0u8; 16 * n * n];
        input
            .read_exact(&mut body)
            .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
        let mut values = vec![Complex64::default(); grid.len()];
        for (k, value) in values.iter_mut().enumerate() {
            let (ix, iy) = grid.node_index(k);
            let o = 16 * (iy * n + ix);
            let re = f64::from_le_bytes(body[o..o + 8].try_into().unwrap());
            let im = f64::from_le_bytes(body[o + 8..o + 16].try_into().unwrap());
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Format(format!("non-finite value inside the disc at ({ix}, {iy})")));
            }
            *value = Complex64::new(re, im);
        }
        ComplexField::new(grid, values)
    }

    pub fn load(path: &Path) -> Result<ComplexField> {
        let f = std::fs::File::open(path)?;
        Self::read_gpf(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub centrifugal: f64,
    pub interaction: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn from_parts(kinetic: f64, centrifugal: f64, interaction: f64) -> Self {
        Self {
            kinetic,
            centrifugal,
            interaction,
            total: kinetic + centrifugal + interaction,
        }
    }
}

/// Discrete GP operator for fixed parameters on a fixed grid.
#[derive(Debug, Clone)]
pub struct GpOperator {
    grid: Arc<Grid>,
    inv_eps2: f64,
    /// Link factors and edge weights for the right and up edges of each node.
    link: Vec<[Complex64; 2]>,
    edge: Vec<[f64; 2]>,
    /// `w V` with `V = −Ω² r²/4`
    pot: Vec<f64>,
}

impl GpOperator {
    pub fn new(grid: Arc<Grid>, params: &Params) -> Self {
        let w = grid.weights();
        let h = grid.h();
        let rot = params.rotation;
        let nbr = grid.raw_neighbors();
        let len = grid.len();
        let mut link = Vec::with_capacity(len);
        let mut edge = Vec::with_capacity(len);
        let mut pot = Vec::with_capacity(len);
        let share = |k: usize, dir: usize| {
            let deg = (nbr[k][2 * dir] != NONE) as u32 + (nbr[k][2 * dir + 1] != NONE) as u32;
            if deg == 0 {
                0.0
            } else {
                w[k] / deg as f64
            }
        };
        for k in 0..len {
            let [x, y] = grid.node_xy(k);
            // ∫A·dl along +x is −Ω y h/2, along +y it is Ω (x) h/2 (x fixed).
            let ux = Complex64::from_polar(1.0, 0.5 * rot * y * h);
            let uy = Complex64::from_polar(1.0, -0.5 * rot * x * h);
            link.push([ux, uy]);
            // Each node spreads its weight evenly over its edges in each
            // direction, so boundary nodes keep their full share.
            let cr = match nbr[k][0] {
                NONE => 0.0,
                j => (share(k, 0) + share(j as usize, 0)) / (h * h),
            };
            let cu = match nbr[k][2] {
                NONE => 0.0,
                j => (share(k, 1) + share(j as usize, 1)) / (h * h),
            };
            edge.push([cr, cu]);
            pot.push(-0.25 * rot * rot * (x * x + y * y) * w[k]);
        }
        Self {
            grid,
            inv_eps2: 1.0 / (params.epsilon * params.epsilon),
            link,
            edge,
            pot,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn inv_eps2(&self) -> f64 {
        self.inv_eps2
    }

    /// Kinetic part of `∂E/∂ψ̄` at node `k`.
    #[inline]
    fn kinetic_grad_at(&self, psi: &[Complex64], k: usize) -> Complex64 {
        let nb = self.grid.raw_neighbors()[k];
        let p = psi[k];
        let mut g = Complex64::new(0.0, 0.0);
        let [cr, cu] = self.edge[k];
        let [ux, uy] = self.link[k];
        if nb[0] != NONE {
            g += (p - ux * psi[nb[0] as usize]) * cr;
        }
        if nb[2] != NONE {
            g += (p - uy * psi[nb[2] as usize]) * cu;
        }
        if nb[1] != NONE {
            let j = nb[1] as usize;
            g += (p - self.link[j][0].conj() * psi[j]) * self.edge[j][0];
        }
        if nb[3] != NONE {
            let j = nb[3] as usize;
            g += (p - self.link[j][1].conj() * psi[j]) * self.edge[j][1];
        }
        g
    }

    /// Energy breakdown without any normalization check.
    pub fn energy(&self, psi: &[Complex64]) -> EnergyBreakdown {
        let w = self.grid.weights();
        let nbr = self.grid.raw_neighbors();
        let kin = chunked_sum_idx(psi.len(), |k| {
            let p = psi[k];
            let [cr, cu] = self.edge[k];
            let [ux, uy] = self.link[k];
            let mut s = 0.0;
            if nbr[k][0] != NONE {
                s += cr * (ux * psi[nbr[k][0] as usize] - p).norm_sqr();
            }
            if nbr[k][2] != NONE {
                s += cu * (uy * psi[nbr[k][2] as usize] - p).norm_sqr();
            }
            s
        });
        let cen = chunked_sum_idx(psi.len(), |k| self.pot[k] * psi[k].norm_sqr());
        let int = chunked_sum_idx(psi.len(), |k| {
            let a = psi[k].norm_sqr();
            w[k] * a * a
        }) * self.inv_eps2;
        EnergyBreakdown::from_parts(kin, cen, int)
    }

    /// Writes `∂E/∂ψ̄` into `grad` and returns the energy breakdown.
    pub fn gradient(&self, psi: &[Complex64], grad: &mut [Complex64]) -> EnergyBreakdown {
        let w = self.grid.weights();
        let ie = self.inv_eps2;
        grad.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * CHUNK;
            for (i, g) in out.iter_mut().enumerate() {
                let k = base + i;
                let p = psi[k];
                *g = self.kinetic_grad_at(psi, k)
                    + p * (self.pot[k] + 2.0 * ie * w[k] * p.norm_sqr());
            }
        });
        // Kinetic energy from the quadratic form Re Σ ψ̄ (∂E_kin/∂ψ̄).
        let kin = chunked_sum_idx(psi.len(), |k| {
            let p = psi[k];
            (p.conj() * grad[k]).re - self.pot[k] * p.norm_sqr() - 2.0 * ie * w[k] * p.norm_sqr().powi(2)
        });
        let cen = chunked_sum_idx(psi.len(), |k| self.pot[k] * psi[k].norm_sqr());
        let int = chunked_sum_idx(psi.len(), |k| w[k] * psi[k].norm_sqr().powi(2)) * ie;
        EnergyBreakdown::from_parts(kin, cen, int)
    }

    /// Kinetic part of `∂E/∂ψ̄` divided by the weights, i.e. the discrete
    /// `−(∇ − iA)²ψ`.
    pub fn covariant_laplacian(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let w = self.grid.weights();
        (0..psi.len())
            .into_par_iter()
            .map(|k| self.kinetic_grad_at(psi, k) / w[k])
            .collect()
    }
}

/// Stationarity data of a field: `Hψ − μψ` and its norm.
#[derive(Debug, Clone)]
pub struct Residual {
    pub field: ComplexField,
    pub mu: f64,
    pub residual_norm: f64,
    pub breakdown: EnergyBreakdown,
}

const NORM_TOL: f64 = 1e-8;

fn check_normalized(psi: &ComplexField) -> Result<()> {
    let nn = psi.norm_sq();
    if (nn - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(nn));
    }
    Ok(())
}

/// GP energy of a normalized field.
pub fn gp_energy(psi: &ComplexField, params: &Params) -> Result<EnergyBreakdown> {
    check_normalized(psi)?;
    Ok(gp_energy_unchecked(psi, params))
}

/// GP energy without the normalization check (for trial diagnostics).
pub fn gp_energy_unchecked(psi: &ComplexField, params: &Params) -> EnergyBreakdown {
    GpOperator::new(psi.grid.clone(), params).energy(&psi.values)
}

/// Residual of the GP equation, `μ` and the residual norm.
pub fn gp_residual(psi: &ComplexField, params: &Params) -> Result<Residual> {
    check_normalized(psi)?;
    let op = GpOperator::new(psi.grid.clone(), params);
    Ok(residual_with(&op, psi))
}

pub(crate) fn residual_with(op: &GpOperator, psi: &ComplexField) -> Residual {
    let mut g = vec![Complex64::default(); psi.values.len()];
    let breakdown = op.gradient(&psi.values, &mut g);
    let w = psi.grid.weights();
    let nn = psi.norm_sq();
    let mu = chunked_sum_idx(g.len(), |k| (psi.values[k].conj() * g[k]).re) / nn;
    let values: Vec<Complex64> = (0..g.len())
        .into_par_iter()
        .map(|k| g[k] / w[k] - psi.values[k] * mu)
        .collect();
    let field = ComplexField {
        grid: psi.grid.clone(),
        values,
    };
    let residual_norm = field.norm_sq().sqrt();
    Residual {
        field,
        mu,
        residual_norm,
        breakdown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn uniform(grid: &Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |_, _| Complex64::new(1.0 / PI.sqrt(), 0.0))
            .normalized()
            .unwrap()
    }

    #[test]
    fn grid_weights_sum_to_disc_area() {
        for n in [64usize, 65, 256] {
            let g = Grid::disc(n).unwrap();
            let tol = if n == 256 { 0.012 } else { 0.05 };
            assert!((g.total_weight() - PI).abs() < tol);
            assert!((g.total_weight() - PI).abs() < 1e-9, "n={n}: {}", g.total_weight());
        }
        assert!(Grid::disc(63).is_err());
        let g = Grid::annulus(200, 0.4).unwrap();
        assert!((g.total_weight() - PI * (1.0 - 0.16)).abs() < 1e-9);
    }

    #[test]
    fn mask_has_dihedral_symmetry() {
        let g = Grid::disc(101).unwrap();
        let n = g.n();
        for k in 0..g.len() {
            let (ix, iy) = g.node_index(k);
            let w = g.weights()[k];
            for (jx, jy) in [
                (n - 1 - ix, iy),
                (ix, n - 1 - iy),
                (iy, ix),
                (n - 1 - iy, ix),
            ] {
                let j = g.lookup(jx, jy).expect("symmetric partner");
                assert!((g.weights()[j] - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_field_energies() {
        let grid = make_grid(256).unwrap();
        let psi = uniform(&grid);
        let p = Params::at_rest(0.1).unwrap();
        let e = gp_energy(&psi, &p).unwrap();
        assert_eq!(e.kinetic, 0.0);
        assert_eq!(e.centrifugal, 0.0);
        assert!((e.interaction - 100.0 / PI).abs() < 1e-9);

        let p = Params::derive(0.1, 10.0).unwrap();
        let e = gp_energy(&psi, &p).unwrap();
        // −(Ω²/4)(1/π)∫r² = −12.5, the link term gives back +12.5.
        assert!((e.centrifugal + 12.5).abs() < 1e-2, "{}", e.centrifugal);
        assert!((e.kinetic - 12.5).abs() < 2e-2, "{}", e.kinetic);
        assert_eq!(e.total, e.kinetic + e.centrifugal + e.interaction);
    }

    #[test]
    fn single_winding_mode_kinetic() {
        // ψ = √(2/π) r e^{iθ}: ∫|∇ψ|² = (2/π)∫(1 + 1) dA = 4.
        let grid = make_grid(512).unwrap();
        let psi = ComplexField::from_fn(grid, |x, y| Complex64::new(x, y) * (2.0 / PI).sqrt())
            .normalized()
            .unwrap();
        let p = Params::at_rest(0.9).unwrap();
        let e = gp_energy(&psi, &p).unwrap();
        assert!((e.kinetic - 4.0).abs() < 0.02, "{}", e.kinetic);
    }

    #[test]
    fn uniform_is_stationary_at_rest() {
        let grid = make_grid(128).unwrap();
        let psi = uniform(&grid);
        let p = Params::at_rest(0.1).unwrap();
        let r = gp_residual(&psi, &p).unwrap();
        assert!(r.residual_norm < 1e-8);
        assert!((r.mu - 2.0 / (PI * 0.01)).abs() < 1e-8);
    }

    fn random_field(grid: &Arc<Grid>, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(grid.clone(), vals).unwrap().normalized().unwrap()
    }

    #[test]
    fn random_field_has_large_residual() {
        let grid = make_grid(96).unwrap();
        let psi = random_field(&grid, 3);
        let p = Params::derive(0.1, 10.0).unwrap();
        assert!(gp_residual(&psi, &p).unwrap().residual_norm > 1.0);
    }

    #[test]
    fn mu_identity_and_gauge_invariance() {
        let grid = make_grid(96).unwrap();
        let psi = random_field(&grid, 11);
        let p = Params::derive(0.2, 7.0).unwrap();
        let r = gp_residual(&psi, &p).unwrap();
        let mu = r.breakdown.total + psi.l4_pow4() / (0.2 * 0.2);
        assert!((r.mu - mu).abs() < 1e-10 * mu.abs());

        let mut rot = psi.clone();
        rot.scale(Complex64::from_polar(1.0, 0.731));
        let a = gp_energy(&psi, &p).unwrap();
        let b = gp_energy(&rot, &p).unwrap();
        for (u, v) in [
            (a.kinetic, b.kinetic),
            (a.centrifugal, b.centrifugal),
            (a.interaction, b.interaction),
        ] {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn residual_is_the_constrained_gradient() {
        let grid = make_grid(80).unwrap();
        let p = Params::derive(0.3, 6.0).unwrap();
        let psi = ComplexField::from_fn(grid.clone(), |x, y| {
            Complex64::new(1.0 + 0.3 * x, 0.2 * y) * (1.0 + x * y)
        })
        .normalized()
        .unwrap();
        let r = gp_residual(&psi, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = 1e-6;
        let energy_along = |phi: &ComplexField, s: f64| {
            let vals = psi
                .values()
                .iter()
                .zip(phi.values())
                .map(|(a, b)| a + b * s)
                .collect();
            let f = ComplexField::new(grid.clone(), vals).unwrap().normalized().unwrap();
            gp_energy(&f, &p).unwrap().total
        };
        for _ in 0..5 {
            let (a, b, c) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let phi = ComplexField::from_fn(grid.clone(), |x, y| {
                Complex64::new(a + b * x * x, c * y + a * x)
            });
            let fd = (energy_along(&phi, step) - energy_along(&phi, -step)) / (2.0 * step);
            let w = grid.weights();
            let an: f64 = (0..grid.len())
                .map(|k| 2.0 * w[k] * (r.field.values()[k].conj() * phi.values()[k]).re)
                .sum();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} an {an}");
        }
    }

    #[test]
    fn quarter_turn_symmetry() {
        let grid = make_grid(128).unwrap();
        let f = |x: f64, y: f64| Complex64::new(1.0 + x * x * y + 0.3 * x, 0.5 * y - x * y * y);
        let psi = ComplexField::from_fn(grid.clone(), f).normalized().unwrap();
        let rot = ComplexField::from_fn(grid.clone(), |x, y| f(y, -x)).normalized().unwrap();
        let p = Params::derive(0.1, 20.0).unwrap();
        let a = gp_energy(&psi, &p).unwrap();
        let b = gp_energy(&rot, &p).unwrap();
        assert!((a.total - b.total).abs() < 1e-10 * a.total.abs());
    }

    #[test]
    fn refinement_reduces_discretization_error() {
        let p = Params::derive(0.5, 3.0).unwrap();
        let f = |x: f64, y: f64| Complex64::new((1.0 + x * x).cos() + 0.2 * y, 0.3 * (x + y).sin());
        let e = |n: usize| {
            let psi = ComplexField::from_fn(make_grid(n).unwrap(), f).normalized().unwrap();
            gp_energy(&psi, &p).unwrap().total
        };
        let (e1, e2, e3) = (e(101), e(201), e(401));
        assert!((e1 - e2).abs() >= 1.8 * (e2 - e3).abs(), "{e1} {e2} {e3}");
    }

    #[test]
    fn unnormalized_is_rejected() {
        let grid = make_grid(64).unwrap();
        let psi = ComplexField::from_fn(grid, |_, _| Complex64::new(1.0, 0.0));
        let p = Params::derive(0.1, 1.0).unwrap();
        assert!(matches!(gp_energy(&psi, &p), Err(Error::NotNormalized(_))));
        assert!(gp_energy_unchecked(&psi, &p).total.is_finite());
    }

    #[test]
    fn gpf_round_trip_is_bit_exact() {
        let grid = make_grid(70).unwrap();
        let psi = random_field(&grid, 9);
        let mut buf = Vec::new();
        psi.write_gpf(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 32 + 16 * 70 * 70);
        assert_eq!(&buf[0..4], b"GPF1");
        // corner node is outside the disc
        assert!(f64::from_le_bytes(buf[44..52].try_into().unwrap()).is_nan());
        let back = ComplexField::read_gpf(&buf[..]).unwrap();
        for (a, b) in psi.values().iter().zip(back.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(ComplexField::read_gpf(&bad[..]), Err(Error::Format(_))));
        assert!(ComplexField::read_gpf(&buf[..100]).is_err());
    }

    #[test]
    fn annulus_field_expands_to_disc() {
        let grid = Arc::new(Grid::annulus(100, 0.5).unwrap());
        let psi = ComplexField::from_fn(grid, |x, _| Complex64::new(x, 1.0));
        let disc = psi.to_disc().unwrap();
        assert_eq!(disc.grid().inner_radius(), 0.0);
        let c = disc.grid().lookup(50, 50).unwrap();
        assert_eq!(disc.values()[c], Complex64::new(0.0, 0.0));
        assert!((disc.norm_sq() - psi.norm_sq()).abs() < 0.05 * psi.norm_sq());
    }

    #[test]
    fn bilinear_sampling_reproduces_linear_fields() {
        let grid = make_grid(90).unwrap();
        let psi = ComplexField::from_fn(grid, |x, y| Complex64::new(2.0 * x - y, x + 3.0 * y));
        let v = psi.sample(0.123, -0.456).unwrap();
        assert!((v - Complex64::new(0.246 + 0.456, 0.123 - 1.368)).norm() < 1e-12);
        assert!(psi.sample(0.99, 0.99).is_none());
    }
}
