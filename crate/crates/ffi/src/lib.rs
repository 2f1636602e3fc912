//! C interface to `beclab`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`BeclabStatus`]; the message of the last failure on the calling
//! thread is available through [`beclab_last_error`]. Panics never unwind
//! into C: they become `BECLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use beclab::vortex::extract_vortices;
use beclab::{
    assemble_trial, gp_energy, make_grid, minimize, solve_tf, ComplexField, Error, Init, LatticeKind,
    MinimizeOptions, MinimizeReport, Params, TrialOptions,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeclabStatus {
    Ok = 0,
    InvalidParameter = 1,
    Precondition = 2,
    NotNormalized = 3,
    GridMismatch = 4,
    /// The minimizer stopped early; the report handle is still filled in.
    NonConvergence = 5,
    StepUnderflow = 6,
    NoCrossing = 7,
    Format = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

/// Lattice arrangement, mirroring the Rust enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeclabLattice {
    Triangular = 0,
    Square = 1,
    Hexagonal = 2,
}

impl From<BeclabLattice> for LatticeKind {
    fn from(k: BeclabLattice) -> Self {
        match k {
            BeclabLattice::Triangular => LatticeKind::Triangular,
            BeclabLattice::Square => LatticeKind::Square,
            BeclabLattice::Hexagonal => LatticeKind::Hexagonal,
        }
    }
}

/// Starting state of the minimizer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeclabInit {
    Uniform = 0,
    Random = 1,
    TrialTriangular = 2,
    TrialSquare = 3,
    TrialHexagonal = 4,
    GiantVortex = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BeclabEnergy {
    pub kinetic: f64,
    pub centrifugal: f64,
    pub interaction: f64,
    pub total: f64,
}

impl From<beclab::EnergyBreakdown> for BeclabEnergy {
    fn from(e: beclab::EnergyBreakdown) -> Self {
        Self {
            kinetic: e.kinetic,
            centrifugal: e.centrifugal,
            interaction: e.interaction,
            total: e.total,
        }
    }
}

/// Options for [`beclab_minimize`]. Zero fields take the library defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BeclabMinimizeOptions {
    pub n: usize,
    pub max_iters: usize,
    pub tol_residual: f64,
    pub init: BeclabInit,
    pub seed: u64,
}

/// Opaque parameter set.
pub struct BeclabParams(Params);
/// Opaque discrete field on the unit disc.
pub struct BeclabField(ComplexField);
/// Opaque minimizer result.
pub struct BeclabReport(MinimizeReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BeclabStatus {
    match e {
        Error::InvalidParameter(_) => BeclabStatus::InvalidParameter,
        Error::Precondition(_) => BeclabStatus::Precondition,
        Error::NotNormalized(_) => BeclabStatus::NotNormalized,
        Error::GridMismatch(_) => BeclabStatus::GridMismatch,
        Error::NonConvergence { .. } => BeclabStatus::NonConvergence,
        Error::StepUnderflow { .. } => BeclabStatus::StepUnderflow,
        Error::NoCrossing { .. } => BeclabStatus::NoCrossing,
        Error::Format(_) => BeclabStatus::Format,
        Error::Io(_) => BeclabStatus::Io,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard(f: impl FnOnce() -> Result<BeclabStatus, Error>) -> BeclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BeclabStatus::Panic
        }
    }
}

macro_rules! require {
    ($($p:expr),+) => {
        $( if $p.is_null() {
            set_error(format!("null pointer: {}", stringify!($p)));
            return BeclabStatus::NullPointer;
        } )+
    };
}

fn into_handle<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn beclab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated). Returns the full message length, 0 if there is none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn beclab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parameters for `(ε, Ω)`; `Ω = 0` gives the non-rotating problem.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn beclab_params_new(epsilon: f64, rotation: f64, out: *mut *mut BeclabParams) -> BeclabStatus {
    require!(out);
    guard(|| {
        let p = if rotation == 0.0 {
            Params::at_rest(epsilon)?
        } else {
            Params::derive(epsilon, rotation)?
        };
        *out = into_handle(BeclabParams(p));
        Ok(BeclabStatus::Ok)
    })
}

/// # Safety
/// `p` must come from [`beclab_params_new`] (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn beclab_params_free(p: *mut BeclabParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `ω = εΩ`, `δ` and `γ` of a parameter set.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_params_derived(
    p: *const BeclabParams,
    omega: *mut f64,
    delta: *mut f64,
    gamma: *mut f64,
) -> BeclabStatus {
    require!(p, omega, delta, gamma);
    let p = &(*p).0;
    *omega = p.omega;
    *delta = p.delta;
    *gamma = p.gamma;
    BeclabStatus::Ok
}

/// Unscaled Thomas-Fermi energy `E^TF`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_tf_energy(p: *const BeclabParams, out: *mut f64) -> BeclabStatus {
    require!(p, out);
    guard(|| {
        let p = &(*p).0;
        *out = solve_tf(p.omega)?.unscaled_energy(p);
        Ok(BeclabStatus::Ok)
    })
}

/// Vortex-lattice trial state on an `n × n` grid (`n = 0` picks a grid that
/// resolves the cores).
///
/// # Safety
/// `p` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_trial_new(
    p: *const BeclabParams,
    kind: BeclabLattice,
    n: usize,
    out: *mut *mut BeclabField,
) -> BeclabStatus {
    require!(p, out);
    guard(|| {
        let grid = if n == 0 { None } else { Some(make_grid(n)?) };
        let tr = assemble_trial(&(*p).0, &TrialOptions::with_kind(kind.into()), grid)?;
        *out = into_handle(BeclabField(tr.psi));
        Ok(BeclabStatus::Ok)
    })
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Error> {
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Error::InvalidParameter("path is not UTF-8".into()))
}

/// Reads a GPF1 snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_load(path: *const c_char, out: *mut *mut BeclabField) -> BeclabStatus {
    require!(path, out);
    guard(|| {
        *out = into_handle(BeclabField(ComplexField::load(&path_arg(path)?)?));
        Ok(BeclabStatus::Ok)
    })
}

/// Writes a GPF1 snapshot.
///
/// # Safety
/// `f` must be a live field handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_save(f: *const BeclabField, path: *const c_char) -> BeclabStatus {
    require!(f, path);
    guard(|| {
        (*f).0.save(&path_arg(path)?)?;
        Ok(BeclabStatus::Ok)
    })
}

/// # Safety
/// `f` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_free(f: *mut BeclabField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of stored nodes and grid points per side.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_shape(f: *const BeclabField, nodes: *mut usize, n: *mut usize) -> BeclabStatus {
    require!(f, nodes, n);
    *nodes = (*f).0.grid().len();
    *n = (*f).0.grid().n();
    BeclabStatus::Ok
}

/// Copies node coordinates and values as interleaved `(x, y, re, im)`.
/// `out` must hold `4 · nodes` doubles.
///
/// # Safety
/// `f` must be valid and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_copy(f: *const BeclabField, out: *mut f64, len: usize) -> BeclabStatus {
    require!(f, out);
    let psi = &(*f).0;
    let grid = psi.grid();
    if len < 4 * grid.len() {
        set_error(format!("buffer holds {len} doubles, need {}", 4 * grid.len()));
        return BeclabStatus::InvalidParameter;
    }
    let dst = std::slice::from_raw_parts_mut(out, 4 * grid.len());
    for (k, v) in psi.values().iter().enumerate() {
        let [x, y] = grid.node_xy(k);
        dst[4 * k..4 * k + 4].copy_from_slice(&[x, y, v.re, v.im]);
    }
    BeclabStatus::Ok
}

/// Discrete GP energy of a normalized field.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_energy(
    f: *const BeclabField,
    p: *const BeclabParams,
    out: *mut BeclabEnergy,
) -> BeclabStatus {
    require!(f, p, out);
    guard(|| {
        *out = gp_energy(&(*f).0, &(*p).0)?.into();
        Ok(BeclabStatus::Ok)
    })
}

/// Total degree and number of vortices found in `f`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_field_vortices(
    f: *const BeclabField,
    rotation: f64,
    threshold: f64,
    total_degree: *mut i64,
    count: *mut usize,
) -> BeclabStatus {
    require!(f, total_degree, count);
    guard(|| {
        let rot = (rotation != 0.0).then_some(rotation);
        let vs = extract_vortices(&(*f).0, threshold, rot)?;
        *total_degree = vs.total_degree;
        *count = vs.len();
        Ok(BeclabStatus::Ok)
    })
}

/// Minimizes the GP energy. On `BECLAB_STATUS_NON_CONVERGENCE` and
/// `BECLAB_STATUS_STEP_UNDERFLOW` `out` still receives the last state.
///
/// # Safety
/// `p`, `opts` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_minimize(
    p: *const BeclabParams,
    opts: *const BeclabMinimizeOptions,
    out: *mut *mut BeclabReport,
) -> BeclabStatus {
    require!(p, opts, out);
    *out = ptr::null_mut();
    guard(|| {
        let o = &*opts;
        let d = MinimizeOptions::default();
        let init = match o.init {
            BeclabInit::Uniform => Init::Uniform,
            BeclabInit::Random => Init::Random(o.seed),
            BeclabInit::TrialTriangular => Init::TrialLattice(LatticeKind::Triangular),
            BeclabInit::TrialSquare => Init::TrialLattice(LatticeKind::Square),
            BeclabInit::TrialHexagonal => Init::TrialLattice(LatticeKind::Hexagonal),
            BeclabInit::GiantVortex => Init::GiantVortex,
        };
        let mo = MinimizeOptions {
            max_iters: if o.max_iters == 0 { d.max_iters } else { o.max_iters },
            tol_residual: if o.tol_residual > 0.0 { o.tol_residual } else { d.tol_residual },
            init,
            ..d
        };
        let grid = make_grid(if o.n == 0 { 256 } else { o.n })?;
        match minimize(&(*p).0, &grid, &mo) {
            Ok(r) => {
                *out = into_handle(BeclabReport(r));
                Ok(BeclabStatus::Ok)
            }
            Err(e @ (Error::NonConvergence { .. } | Error::StepUnderflow { .. })) => {
                set_error(e.to_string());
                let s = status_of(&e);
                *out = into_handle(BeclabReport(e.into_report().expect("report")));
                Ok(s)
            }
            Err(e) => Err(e),
        }
    })
}

/// # Safety
/// `r` must come from [`beclab_minimize`] (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn beclab_report_free(r: *mut BeclabReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Energy, chemical potential, residual and iteration count of a run.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_report_summary(
    r: *const BeclabReport,
    energy: *mut BeclabEnergy,
    mu: *mut f64,
    residual: *mut f64,
    iters: *mut usize,
    converged: *mut bool,
) -> BeclabStatus {
    require!(r, energy, mu, residual, iters, converged);
    let r = &(*r).0;
    *energy = r.breakdown.into();
    *mu = r.mu;
    *residual = r.residual_norm;
    *iters = r.iters;
    *converged = r.converged;
    BeclabStatus::Ok
}

/// Copy of the final field as a new handle.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn beclab_report_field(r: *const BeclabReport, out: *mut *mut BeclabField) -> BeclabStatus {
    require!(r, out);
    *out = into_handle(BeclabField((*r).0.psi.clone()));
    BeclabStatus::Ok
}
