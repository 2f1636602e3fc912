//! Run configuration read from a sectioned key-value file:
//!
//! ```text
//! [grid]
//! n = 256
//!
//! [minimizer]
//! max_iters = 20000
//! tol_residual = 1e-5
//! init = "trial:square"
//!
//! [sweep]
//! path = "0.08:40:3"
//! workers = 2
//! out_dir = "runs/path"
//! ```
//!
//! Every key has a command-line flag of the same name (underscores become
//! dashes) that overrides it.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::gp::{Anneal, Init, MinimizeOptions};
use crate::sweep::{SweepPoints, SweepSpec};
use crate::trial::LatticeKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<usize>,
    pub max_n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizerSection {
    pub max_iters: Option<usize>,
    pub step: Option<f64>,
    pub tol_residual: Option<f64>,
    pub init: Option<String>,
    pub anneal: Option<bool>,
    pub anneal_start_fraction: Option<f64>,
    pub anneal_stages: Option<usize>,
    pub anneal_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `"eps:Omega,eps:Omega,..."`
    pub pairs: Option<String>,
    /// `"eps0:Omega0:steps"`
    pub path: Option<String>,
    /// `"triangular,square"`
    pub kinds: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub snapshots: Option<bool>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub minimizer: MinimizerSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Config) -> Self {
        overlay!(self.grid, top.grid, n, max_n);
        overlay!(
            self.minimizer,
            top.minimizer,
            max_iters,
            step,
            tol_residual,
            init,
            anneal,
            anneal_start_fraction,
            anneal_stages,
            anneal_iters
        );
        overlay!(self.sweep, top.sweep, pairs, path, kinds, out_dir, snapshots, workers);
        self
    }

    pub fn grid_n(&self) -> usize {
        self.grid.n.unwrap_or(256)
    }

    pub fn minimize_options(&self) -> Result<MinimizeOptions> {
        let m = &self.minimizer;
        let mut o = MinimizeOptions::default();
        if let Some(v) = m.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = m.step {
            o.step = v;
        }
        if let Some(v) = m.tol_residual {
            o.tol_residual = v;
        }
        if let Some(v) = &m.init {
            o.init = v.parse::<Init>()?;
        }
        let wants_anneal = m.anneal.unwrap_or(false)
            || m.anneal_start_fraction.is_some()
            || m.anneal_stages.is_some()
            || m.anneal_iters.is_some();
        if wants_anneal && m.anneal != Some(false) {
            let d = Anneal::default();
            o.anneal = Some(Anneal {
                start_fraction: m.anneal_start_fraction.unwrap_or(d.start_fraction),
                stages: m.anneal_stages.unwrap_or(d.stages),
                iters_per_stage: m.anneal_iters.unwrap_or(d.iters_per_stage),
            });
        }
        Ok(o)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = &self.sweep;
        let points = match (&s.pairs, &s.path) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter("set either sweep pairs or path, not both".into()))
            }
            (Some(p), None) => SweepPoints::Pairs(parse_pairs(p)?),
            (None, Some(p)) => parse_path(p)?,
            (None, None) => return Err(Error::InvalidParameter("sweep needs pairs or a path".into())),
        };
        let kinds = match &s.kinds {
            Some(k) => k
                .split(',')
                .map(|x| x.trim().parse::<LatticeKind>())
                .collect::<Result<Vec<_>>>()?,
            None => LatticeKind::ALL.to_vec(),
        };
        Ok(SweepSpec {
            points,
            n: self.grid_n(),
            minimizer: self.minimize_options()?,
            kinds,
            out_dir: s.out_dir.clone(),
            snapshots: s.snapshots.unwrap_or(false),
            workers: s.workers.unwrap_or(1),
        })
    }
}

fn num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("not a number: '{s}'")))
}

pub fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (e, w) = t
                .split_once(':')
                .ok_or_else(|| Error::InvalidParameter(format!("pair '{t}' is not eps:Omega")))?;
            Ok((num(e)?, num(w)?))
        })
        .collect()
}

pub fn parse_path(text: &str) -> Result<SweepPoints> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!("path '{text}' is not eps0:Omega0:steps")));
    }
    let steps = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad step count '{}'", parts[2])))?;
    Ok(SweepPoints::Path {
        epsilon0: num(parts[0])?,
        rotation0: num(parts[1])?,
        steps,
    })
}
