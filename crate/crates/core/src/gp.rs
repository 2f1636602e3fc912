//! Discrete GP minimizer and checks on the minimizer.
//!
//! The energy is minimized on the unit sphere `Σ w|ψ|² = 1` by a projected,
//! preconditioned nonlinear conjugate gradient flow. Along the great circle
//! `ψ cos θ + p sin θ` the discrete energy is a trigonometric polynomial whose
//! coefficients cost one operator application, so every step is an exact
//! line minimization and accepted steps never raise the energy.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::path::PathBuf;
use std::sync::Arc;

use crate::field::{chunked_sum_idx, residual_with, ComplexField, EnergyBreakdown, GpOperator, Grid};
use crate::tf::TfSolution;
use crate::trial::{assemble_trial, giant_vortex_trial, LatticeKind, TrialOptions};
use crate::{Error, Params, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Uniform,
    TrialLattice(LatticeKind),
    GiantVortex,
    File(PathBuf),
    Random(u64),
}

impl Init {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Init::Random(s) => Some(*s),
            _ => None,
        }
    }
}

/// Parses `uniform`, `giant`, `random:SEED`, `trial:KIND` and `file:PATH`.
impl std::str::FromStr for Init {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match (head.to_ascii_lowercase().as_str(), rest) {
            ("uniform", "") => Ok(Init::Uniform),
            ("giant", "") => Ok(Init::GiantVortex),
            ("random", "") => Ok(Init::Random(0)),
            ("random", seed) => seed
                .parse()
                .map(Init::Random)
                .map_err(|_| Error::InvalidParameter(format!("bad seed '{seed}'"))),
            ("trial", kind) => Ok(Init::TrialLattice(kind.parse()?)),
            ("file", path) if !path.is_empty() => Ok(Init::File(PathBuf::from(path))),
            _ => Err(Error::InvalidParameter(format!("unknown init '{s}'"))),
        }
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Init::Uniform => f.write_str("uniform"),
            Init::GiantVortex => f.write_str("giant"),
            Init::Random(s) => write!(f, "random:{s}"),
            Init::TrialLattice(k) => write!(f, "trial:{k}"),
            Init::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Optional ramp of the rotation from `start_fraction · Ω` up to `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anneal {
    pub start_fraction: f64,
    pub stages: usize,
    pub iters_per_stage: usize,
}

impl Default for Anneal {
    fn default() -> Self {
        Self {
            start_fraction: 0.7,
            stages: 4,
            iters_per_stage: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Initial cap on the rotation angle of a step along the sphere.
    pub step: f64,
    /// Stop when `‖Hψ − μψ‖ ≤ tol_residual · (1 + ‖(∇ − iA)ψ‖)`.
    pub tol_residual: f64,
    pub init: Init,
    pub anneal: Option<Anneal>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            step: 0.5,
            tol_residual: 1e-5,
            init: Init::Uniform,
            anneal: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub psi: ComplexField,
    pub breakdown: EnergyBreakdown,
    pub mu: f64,
    pub residual_norm: f64,
    /// Threshold the residual was compared against.
    pub residual_target: f64,
    pub iters: usize,
    pub converged: bool,
    pub energy_history: Vec<f64>,
    /// `‖ψ‖²_∞`
    pub sup_density: f64,
    pub params: Params,
    pub seed: Option<u64>,
}

/// Builds the initial field on `grid`.
pub fn initial_field(params: &Params, grid: &Arc<Grid>, init: &Init) -> Result<ComplexField> {
    match init {
        Init::Uniform => ComplexField::from_fn(grid.clone(), |_, _| Complex64::new(1.0, 0.0)).normalized(),
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let vals = (0..grid.len())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            ComplexField::new(grid.clone(), vals)?.normalized()
        }
        Init::TrialLattice(kind) => {
            Ok(assemble_trial(params, &TrialOptions::with_kind(*kind), Some(grid.clone()))?.psi)
        }
        Init::GiantVortex => Ok(giant_vortex_trial(params, None, Some(grid.clone()))?.psi),
        Init::File(path) => {
            let f = ComplexField::load(path)?;
            if !f.grid().same_layout(grid) {
                return Err(Error::GridMismatch(format!(
                    "snapshot has n = {}, minimizer grid has n = {}",
                    f.grid().n(),
                    grid.n()
                )));
            }
            // Re-home the values on the caller's grid instance.
            ComplexField::new(grid.clone(), f.into_values())?.normalized()
        }
    }
}

/// `(α − Δ)⁻¹` on the periodic square that contains the grid.
struct Preconditioner {
    n: usize,
    alpha: f64,
    inv_h2: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    symbol: Vec<f64>,
}

impl Preconditioner {
    fn new(n: usize, h: f64, alpha: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let inv_h2 = 1.0 / (h * h);
        let s: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
            .collect();
        let mut pc = Self {
            n,
            alpha,
            inv_h2,
            fwd,
            inv,
            symbol: Vec::new(),
        };
        pc.set_alpha(alpha, &s);
        pc
    }

    fn set_alpha(&mut self, alpha: f64, s: &[f64]) {
        let n = self.n;
        self.alpha = alpha;
        let norm = 1.0 / (n * n) as f64;
        self.symbol = (0..n * n)
            .map(|i| {
                let (ky, kx) = (i / n, i % n);
                let lam = 4.0 * self.inv_h2 * (s[kx] + s[ky]);
                norm / (alpha + lam)
            })
            .collect();
    }

    fn apply(&self, grid: &Grid, input: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let mut buf = vec![Complex64::default(); n * n];
        for (k, v) in input.iter().enumerate() {
            let (ix, iy) = grid.node_index(k);
            buf[iy * n + ix] = *v;
        }
        self.fft2(&mut buf, &self.fwd);
        buf.par_iter_mut()
            .zip(self.symbol.par_iter())
            .for_each(|(b, s)| *b *= s);
        self.fft2(&mut buf, &self.inv);
        for (k, o) in out.iter_mut().enumerate() {
            let (ix, iy) = grid.node_index(k);
            *o = buf[iy * n + ix] * self.inv_h2;
        }
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        buf.par_chunks_mut(n).for_each(|row| plan.process(row));
        let mut t = vec![Complex64::default(); n * n];
        transpose(buf, &mut t, n);
        t.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(&t, buf, n);
    }
}

fn transpose(a: &[Complex64], b: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for i0 in (0..n).step_by(B) {
        for j0 in (0..n).step_by(B) {
            for i in i0..(i0 + B).min(n) {
                for j in j0..(j0 + B).min(n) {
                    b[j * n + i] = a[i * n + j];
                }
            }
        }
    }
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    chunked_sum_idx(a.len(), |k| (a[k].conj() * b[k]).re)
}

fn re_dot_w(w: &[f64], a: &[Complex64], b: &[Complex64]) -> f64 {
    chunked_sum_idx(a.len(), |k| w[k] * (a[k].conj() * b[k]).re)
}

/// Energy along `ψ cos θ + p sin θ` as a trigonometric polynomial.
struct GreatCircle {
    /// quadratic part: c² q0 + 2cs q1 + s² q2
    q: [f64; 3],
    /// quartic part coefficients of c⁴, c³s, c²s², cs³, s⁴
    m: [f64; 5],
}

impl GreatCircle {
    fn energy(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let quad = c * c * self.q[0] + 2.0 * c * s * self.q[1] + s * s * self.q[2];
        let m = &self.m;
        let quart = c.powi(4) * m[0]
            + c.powi(3) * s * m[1]
            + c * c * s * s * m[2]
            + c * s.powi(3) * m[3]
            + s.powi(4) * m[4];
        quad + quart
    }

    fn derivative(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let q = &self.q;
        let m = &self.m;
        let dquad = -2.0 * c * s * q[0] + 2.0 * (c * c - s * s) * q[1] + 2.0 * s * c * q[2];
        let dquart = -4.0 * c.powi(3) * s * m[0]
            + (-3.0 * c * c * s * s + c.powi(4)) * m[1]
            + (-2.0 * c * s.powi(3) + 2.0 * c.powi(3) * s) * m[2]
            + (-s.powi(4) + 3.0 * c * c * s * s) * m[3]
            + 4.0 * s.powi(3) * c * m[4];
        dquad + dquart
    }

    /// Smallest local minimizer in `(0, cap]`, or `cap`.
    fn minimize(&self, cap: f64) -> f64 {
        let samples = 64;
        let mut lo = 0.0;
        let mut prev = self.derivative(0.0);
        if prev >= 0.0 {
            return 0.0;
        }
        let mut hi = cap;
        let mut bracketed = false;
        for i in 1..=samples {
            let th = cap * i as f64 / samples as f64;
            let d = self.derivative(th);
            if d >= 0.0 && prev < 0.0 {
                hi = th;
                bracketed = true;
                break;
            }
            lo = th;
            prev = d;
        }
        if !bracketed {
            return cap;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.derivative(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

struct Solver {
    op: GpOperator,
    grid: Arc<Grid>,
    pc: Preconditioner,
    sin2: Vec<f64>,
}

impl Solver {
    fn new(grid: Arc<Grid>, params: &Params) -> Self {
        let op = GpOperator::new(grid.clone(), params);
        let n = grid.n();
        let sin2: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
            .collect();
        let pc = Preconditioner::new(n, grid.h(), 1.0);
        Self { op, grid, pc, sin2 }
    }

    fn great_circle(&self, psi: &[Complex64], grad: &[Complex64], p: &[Complex64]) -> GreatCircle {
        let w = self.grid.weights();
        let ie = self.op.inv_eps2();
        let len = psi.len();
        // L ψ = grad − 2ε⁻² w |ψ|² ψ
        let lpsi: Vec<Complex64> = (0..len)
            .into_par_iter()
            .map(|k| grad[k] - psi[k] * (2.0 * ie * w[k] * psi[k].norm_sqr()))
            .collect();
        let q0 = re_dot(psi, &lpsi);
        let q1 = re_dot(p, &lpsi);
        let mut gp = vec![Complex64::default(); len];
        self.op.gradient(p, &mut gp);
        let q2 = chunked_sum_idx(len, |k| {
            (p[k].conj() * gp[k]).re - 2.0 * ie * w[k] * p[k].norm_sqr().powi(2)
        });
        let sums: Vec<[f64; 5]> = (0..len.div_ceil(4096))
            .into_par_iter()
            .map(|c| {
                let mut acc = [0.0; 5];
                for k in c * 4096..((c + 1) * 4096).min(len) {
                    let a = psi[k].norm_sqr();
                    let b = (psi[k].conj() * p[k]).re;
                    let d = p[k].norm_sqr();
                    let wk = w[k];
                    acc[0] += wk * a * a;
                    acc[1] += wk * a * b;
                    acc[2] += wk * (2.0 * b * b + a * d);
                    acc[3] += wk * b * d;
                    acc[4] += wk * d * d;
                }
                acc
            })
            .collect();
        let mut s = [0.0; 5];
        for a in &sums {
            for i in 0..5 {
                s[i] += a[i];
            }
        }
        GreatCircle {
            q: [q0, q1, q2],
            m: [
                ie * s[0],
                ie * 4.0 * s[1],
                ie * 2.0 * s[2],
                ie * 4.0 * s[3],
                ie * s[4],
            ],
        }
    }

    fn set_shift(&mut self, alpha: f64) {
        let s = self.sin2.clone();
        self.pc.set_alpha(alpha, &s);
    }
}

/// Minimizes the discrete GP energy on `grid`.
pub fn minimize(params: &Params, grid: &Arc<Grid>, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    if !(opts.step > 0.0) || !(opts.tol_residual > 0.0) {
        return Err(Error::InvalidParameter("step and tol_residual must be positive".into()));
    }
    let mut psi = initial_field(params, grid, &opts.init)?;
    if let Some(an) = opts.anneal {
        if params.is_rotating() && an.stages > 0 {
            for s in 0..an.stages {
                let frac = an.start_fraction + (1.0 - an.start_fraction) * s as f64 / an.stages as f64;
                let p = Params::derive(params.epsilon, params.rotation * frac)?;
                let stage = MinimizeOptions {
                    max_iters: an.iters_per_stage,
                    ..opts.clone()
                };
                let rep = match run(&p, psi, &stage) {
                    Ok(r) => r,
                    Err(e) => e.into_report().ok_or_else(|| Error::Precondition("anneal stage failed".into()))?,
                };
                psi = rep.psi;
            }
        }
    }
    let mut rep = run(params, psi, opts);
    if let Ok(r) = rep.as_mut() {
        r.seed = opts.init.seed();
    }
    rep.map_err(|e| match e {
        Error::NonConvergence { iters, residual, mut report } => {
            report.seed = opts.init.seed();
            Error::NonConvergence { iters, residual, report }
        }
        other => other,
    })
}

fn run(params: &Params, mut psi: ComplexField, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    let grid = psi.grid().clone();
    let mut solver = Solver::new(grid.clone(), params);
    let w = grid.weights().to_vec();
    let len = grid.len();
    let mut grad = vec![Complex64::default(); len];
    let mut z = vec![Complex64::default(); len];
    let mut z_old: Vec<Complex64> = Vec::new();
    let mut g_old: Vec<Complex64> = Vec::new();
    let mut dir: Vec<Complex64> = vec![Complex64::default(); len];
    let mut have_dir = false;
    let mut cap = opts.step.min(std::f64::consts::FRAC_PI_2);
    let mut accepts = 0usize;
    let mut history = Vec::new();
    let mut underflows = 0usize;

    let mut br = solver.op.gradient(psi.values(), &mut grad);
    history.push(br.total);
    let mut iters = 0;
    loop {
        // μ and the projected (Euclidean) gradient w (Hψ − μψ)
        let mu = re_dot(psi.values(), &grad);
        let ge: Vec<Complex64> = (0..len)
            .into_par_iter()
            .map(|k| grad[k] - psi.values()[k] * (mu * w[k]))
            .collect();
        let res = chunked_sum_idx(len, |k| ge[k].norm_sqr() / w[k]).sqrt();
        let target = opts.tol_residual * (1.0 + br.kinetic.max(0.0).sqrt());
        if res <= target || iters >= opts.max_iters {
            let converged = res <= target;
            let report = finish(params, psi, history, iters, converged, target);
            if converged {
                return Ok(report);
            }
            return Err(Error::NonConvergence {
                iters,
                residual: report.residual_norm,
                report: Box::new(report),
            });
        }
        iters += 1;

        // Shift of the preconditioner ~ typical nonlinear potential.
        if iters % 50 == 1 {
            let alpha = (2.0 * solver.op.inv_eps2() * psi.l4_pow4()).max(1.0);
            solver.set_shift(alpha);
        }
        solver.pc.apply(&grid, &ge, &mut z);

        let mut beta = 0.0;
        if have_dir && !g_old.is_empty() {
            let num = re_dot(&ge, &z) - re_dot(&ge, &z_old);
            let den = re_dot(&g_old, &z_old);
            if den > 0.0 {
                beta = (num / den).max(0.0);
            }
        }
        let pv = psi.values();
        let mut d: Vec<Complex64> = if beta > 0.0 {
            (0..len).into_par_iter().map(|k| -z[k] + dir[k] * beta).collect()
        } else {
            z.par_iter().map(|v| -v).collect()
        };
        // Project onto the tangent space and check descent.
        let proj = re_dot_w(&w, pv, &d);
        d.par_iter_mut().zip(pv.par_iter()).for_each(|(a, b)| *a -= b * proj);
        if re_dot(&ge, &d) >= 0.0 {
            d = z.par_iter().map(|v| -v).collect();
            let proj = re_dot_w(&w, pv, &d);
            d.par_iter_mut().zip(pv.par_iter()).for_each(|(a, b)| *a -= b * proj);
        }
        let dn = re_dot_w(&w, &d, &d).sqrt();
        if !(dn > 0.0 && dn.is_finite()) {
            let report = finish(params, psi, history, iters, false, target);
            return Err(Error::StepUnderflow {
                iters,
                report: Box::new(report),
            });
        }
        let p: Vec<Complex64> = d.par_iter().map(|v| v / dn).collect();

        let gc = solver.great_circle(pv, &grad, &p);
        let e0 = gc.energy(0.0);
        let mut theta = gc.minimize(cap);
        let mut accepted = false;
        let mut new_vals = Vec::new();
        let mut new_br = br;
        for _ in 0..40 {
            if theta <= 1e-14 {
                break;
            }
            let (s, c) = theta.sin_cos();
            new_vals = (0..len).into_par_iter().map(|k| pv[k] * c + p[k] * s).collect();
            let mut cand = ComplexField::new(grid.clone(), std::mem::take(&mut new_vals))?;
            cand.normalize()?;
            new_vals = cand.into_values();
            let mut g2 = vec![Complex64::default(); len];
            new_br = solver.op.gradient(&new_vals, &mut g2);
            if new_br.total <= br.total + 1e-13 * br.total.abs() && gc.energy(theta) <= e0 + 1e-13 * e0.abs() {
                grad = g2;
                accepted = true;
                break;
            }
            theta *= 0.5;
            cap = (cap * 0.5).max(1e-12);
            accepts = 0;
        }
        if !accepted {
            underflows += 1;
            have_dir = false;
            if underflows > 3 {
                let report = finish(params, psi, history, iters, false, target);
                return Err(Error::StepUnderflow {
                    iters,
                    report: Box::new(report),
                });
            }
            continue;
        }
        underflows = 0;
        accepts += 1;
        if accepts >= 20 {
            cap = (cap * 1.1).min(std::f64::consts::FRAC_PI_2);
            accepts = 0;
        }
        let psi_prev = std::mem::replace(&mut psi, ComplexField::new(grid.clone(), new_vals)?).into_values();
        br = new_br;
        history.push(br.total);
        // Transport the search direction: p rotated along the great circle.
        // Old point and direction, rotated along the great circle.
        let (s, c) = theta.sin_cos();
        let old = &psi_prev;
        dir = (0..len)
            .into_par_iter()
            .map(|k| (p[k] * c - old[k] * s) * dn)
            .collect();
        let pv = psi.values();
        let proj = re_dot_w(&w, pv, &dir);
        dir.par_iter_mut().zip(pv.par_iter()).for_each(|(a, b)| *a -= b * proj);
        have_dir = true;
        g_old = ge;
        z_old = z.clone();
    }
}

fn finish(
    params: &Params,
    psi: ComplexField,
    history: Vec<f64>,
    iters: usize,
    converged: bool,
    target: f64,
) -> MinimizeReport {
    let op = GpOperator::new(psi.grid().clone(), params);
    let res = residual_with(&op, &psi);
    MinimizeReport {
        sup_density: psi.sup_density(),
        breakdown: res.breakdown,
        mu: res.mu,
        residual_norm: res.residual_norm,
        residual_target: target,
        iters,
        converged,
        energy_history: history,
        psi,
        params: *params,
        seed: None,
    }
}

/// `‖ψ‖²_∞ / ρ^TF(1)`.
pub fn check_sup_bound(report: &MinimizeReport, tf: &TfSolution) -> f64 {
    report.sup_density / tf.sup_density()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TfDistance {
    /// `‖|ψ|² − ρ^TF‖₂`
    pub distance: f64,
    /// `√(ε²(E − E^TF))`, or `NaN` if the energy is below `E^TF`.
    pub bound_proxy: f64,
}

pub fn l2_distance_to_tf(report: &MinimizeReport, tf: &TfSolution) -> TfDistance {
    let d2 = report.psi.integrate(|x, y, v| {
        let d = v.norm_sqr() - tf.density(x.hypot(y));
        d * d
    });
    let p = &report.params;
    let excess = p.epsilon * p.epsilon * (report.breakdown.total - tf.unscaled_energy(p));
    TfDistance {
        distance: d2.sqrt(),
        bound_proxy: if excess >= 0.0 { excess.sqrt() } else { f64::NAN },
    }
}

/// Mean of `|ψ|²` over the disc `r < radius`.
pub fn mean_density_within(psi: &ComplexField, radius: f64) -> f64 {
    let mass = psi.integrate(|x, y, v| if x.hypot(y) < radius { v.norm_sqr() } else { 0.0 });
    let area = psi.integrate(|x, y, _| if x.hypot(y) < radius { 1.0 } else { 0.0 });
    if area > 0.0 {
        mass / area
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gp_energy, make_grid};
    use crate::tf::solve_tf;
    use std::f64::consts::PI;

    #[test]
    fn great_circle_matches_direct_energy() {
        let grid = make_grid(80).unwrap();
        let params = Params::derive(0.2, 8.0).unwrap();
        let psi = initial_field(&params, &grid, &Init::Random(4)).unwrap();
        let solver = Solver::new(grid.clone(), &params);
        let mut grad = vec![Complex64::default(); grid.len()];
        solver.op.gradient(psi.values(), &mut grad);
        let q = initial_field(&params, &grid, &Init::Random(9)).unwrap();
        let w = grid.weights();
        let proj = re_dot_w(w, psi.values(), q.values());
        let mut p: Vec<Complex64> = q.values().iter().zip(psi.values()).map(|(a, b)| a - b * proj).collect();
        let nn = re_dot_w(w, &p, &p).sqrt();
        p.iter_mut().for_each(|v| *v /= nn);
        let gc = solver.great_circle(psi.values(), &grad, &p);
        for th in [0.0, 0.1, 0.7, 1.3] {
            let (s, c) = f64::sin_cos(th);
            let vals = psi.values().iter().zip(&p).map(|(a, b)| a * c + b * s).collect();
            let f = ComplexField::new(grid.clone(), vals).unwrap();
            let e = gp_energy(&f, &params).unwrap().total;
            assert!((gc.energy(th) - e).abs() < 1e-9 * e.abs(), "{th}: {} vs {e}", gc.energy(th));
            let h = 1e-6;
            let fd = (gc.energy(th + h) - gc.energy(th - h)) / (2.0 * h);
            assert!((fd - gc.derivative(th)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn zero_rotation_random_start_reaches_uniform_state() {
        let grid = make_grid(96).unwrap();
        let params = Params::at_rest(0.1).unwrap();
        let opts = MinimizeOptions {
            init: Init::Random(7),
            ..Default::default()
        };
        let rep = minimize(&params, &grid, &opts).unwrap();
        let worst = rep
            .psi
            .values()
            .iter()
            .map(|v| (v.norm_sqr() - 1.0 / PI).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-3, "{worst}");
        assert!((rep.breakdown.total - 100.0 / PI).abs() < 0.005 * 100.0 / PI);
        assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        let tf = solve_tf(0.0).unwrap();
        assert!((check_sup_bound(&rep, &tf) - 1.0).abs() < 1e-3);
        assert!(l2_distance_to_tf(&rep, &tf).distance < 1e-3);
        assert_eq!(rep.seed, Some(7));
    }

    #[test]
    fn mu_identity_on_report() {
        let grid = make_grid(80).unwrap();
        let params = Params::derive(0.2, 6.0).unwrap();
        let opts = MinimizeOptions {
            max_iters: 30,
            init: Init::Random(1),
            ..Default::default()
        };
        let rep = match minimize(&params, &grid, &opts) {
            Ok(r) => r,
            Err(e) => e.into_report().unwrap(),
        };
        let mu = rep.breakdown.total + rep.psi.l4_pow4() / 0.04;
        assert!((rep.mu - mu).abs() < 1e-9 * mu.abs());
        assert!((rep.psi.norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nonconvergence_carries_report() {
        let grid = make_grid(64).unwrap();
        let params = Params::derive(0.1, 10.0).unwrap();
        let opts = MinimizeOptions {
            max_iters: 3,
            init: Init::Random(2),
            ..Default::default()
        };
        match minimize(&params, &grid, &opts) {
            Err(Error::NonConvergence { iters, report, .. }) => {
                assert_eq!(iters, 3);
                assert_eq!(report.energy_history.len(), 4);
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn preconditioner_inverts_shifted_laplacian() {
        // (α − Δ_h) applied to P r must give back r on the periodic square.
        let n = 64;
        let h = 2.0 / 63.0;
        let grid = Grid::disc(n).unwrap();
        let pc = Preconditioner::new(n, h, 3.0);
        let r: Vec<Complex64> = (0..grid.len())
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let mut out = vec![Complex64::default(); grid.len()];
        pc.apply(&grid, &r, &mut out);
        let mut full = vec![Complex64::default(); n * n];
        for (k, v) in out.iter().enumerate() {
            let (ix, iy) = grid.node_index(k);
            full[iy * n + ix] = *v;
        }
        for k in (0..grid.len()).step_by(37) {
            if grid.neighbors(k).iter().any(|j| j.is_none()) {
                continue;
            }
            let (ix, iy) = grid.node_index(k);
            let at = |x: usize, y: usize| full[(y % n) * n + (x % n)];
            let lap = (at(ix + 1, iy) + at(ix + n - 1, iy) + at(ix, iy + 1) + at(ix, iy + n - 1)
                - at(ix, iy) * 4.0)
                / (h * h);
            let back = (at(ix, iy) * 3.0 - lap) * (h * h);
            assert!((back - r[k]).norm() < 1e-9, "{back} {}", r[k]);
        }
    }
}
