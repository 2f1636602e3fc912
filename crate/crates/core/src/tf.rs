//! Closed-form Thomas–Fermi ground state on the unit disc.
//!
//! In scaled units the TF functional is `∫ (ρ² − ω²r²ρ/4)` over densities with
//! unit mass; its minimizer is `ρ = ½[ε²μ + ω²r²/4]₊`. A central hole opens
//! once `ω` exceeds `ω_h = 4/√π`.

use serde::Serialize;
use std::f64::consts::PI;

use crate::quad;
use crate::{Error, Params, Result};

/// Critical rotation `4/√π` at which the TF density vanishes at the origin.
pub const OMEGA_H: f64 = 2.256_758_334_191_025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TfSolution {
    pub omega: f64,
    /// `ε² E^TF`
    pub scaled_energy: f64,
    /// `ε² μ^TF`
    pub scaled_chemical_potential: f64,
    pub hole_radius: f64,
    pub omega_h: f64,
}

/// Solves the TF problem at rotation `ω ≥ 0`.
pub fn solve_tf(omega: f64) -> Result<TfSolution> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega must be nonnegative and finite, got {omega}"
        )));
    }
    let w2 = omega * omega;
    let (e, mu, rh) = if omega <= OMEGA_H {
        (
            1.0 / PI - w2 / 8.0 - PI * w2 * w2 / 768.0,
            2.0 / PI - w2 / 8.0,
            0.0,
        )
    } else {
        let sp = PI.sqrt();
        (
            -(w2 / 4.0) * (1.0 - 8.0 / (3.0 * sp * omega)),
            -(w2 / 4.0) * (1.0 - 4.0 / (sp * omega)),
            (1.0 - OMEGA_H / omega).sqrt(),
        )
    };
    Ok(TfSolution {
        omega,
        scaled_energy: e,
        scaled_chemical_potential: mu,
        hole_radius: rh,
        omega_h: OMEGA_H,
    })
}

impl TfSolution {
    pub fn has_hole(&self) -> bool {
        self.omega > OMEGA_H
    }

    /// `ρ^TF(r)` for `r ∈ [0, 1]`.
    pub fn density(&self, r: f64) -> f64 {
        let w2 = self.omega * self.omega;
        if self.omega <= OMEGA_H {
            1.0 / PI + w2 / 16.0 - w2 / 8.0 * (1.0 - r * r)
        } else {
            (self.omega / (2.0 * PI.sqrt()) - w2 / 8.0 * (1.0 - r * r)).max(0.0)
        }
    }

    /// The same density through `½[ε²μ + ω²r²/4]₊`.
    pub fn density_from_mu(&self, r: f64) -> f64 {
        0.5 * (self.scaled_chemical_potential + self.omega * self.omega * r * r / 4.0).max(0.0)
    }

    /// `‖ρ^TF‖_∞ = ρ^TF(1)`.
    pub fn sup_density(&self) -> f64 {
        self.density(1.0)
    }

    /// `2π ∫₀¹ ρ^TF r dr` by adaptive quadrature.
    pub fn mass(&self) -> f64 {
        let (v, _) = quad::adaptive(
            |r| 2.0 * PI * r * self.density(r),
            0.0,
            1.0,
            &[self.hole_radius],
            1e-13,
        );
        v
    }

    /// `‖ρ^TF‖₂²`.
    pub fn l2_norm_sq(&self) -> f64 {
        let (v, _) = quad::adaptive(
            |r| {
                let d = self.density(r);
                2.0 * PI * r * d * d
            },
            0.0,
            1.0,
            &[self.hole_radius],
            1e-13,
        );
        v
    }

    /// `E^TF = ε² E^TF / ε²`.
    pub fn unscaled_energy(&self, params: &Params) -> f64 {
        self.scaled_energy / (params.epsilon * params.epsilon)
    }

    pub fn unscaled_chemical_potential(&self, params: &Params) -> f64 {
        self.scaled_chemical_potential / (params.epsilon * params.epsilon)
    }

    /// Smallest radius where `ρ^TF ≥ level`, or `None` if the level exceeds
    /// the maximum.
    pub fn level_radius(&self, level: f64) -> Option<f64> {
        if level > self.sup_density() {
            return None;
        }
        if level <= self.density(0.0) {
            return Some(0.0);
        }
        // ρ = a + b r² on the support with b = ω²/8 > 0
        let b = self.omega * self.omega / 8.0;
        let a = self.scaled_chemical_potential / 2.0;
        Some(((level - a) / b).max(0.0).sqrt().min(1.0))
    }
}

/// `E^TF` for the given parameters.
pub fn tf_energy_unscaled(params: &Params) -> Result<f64> {
    Ok(solve_tf(params.omega)?.unscaled_energy(params))
}

/// TF density with its edge at the hole softened by a quadratic ramp of
/// width `1/Ω`, so that `√ρ` has finite kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizedDensity {
    pub tf: TfSolution,
    pub rotation: f64,
    /// `R_h + 1/Ω` when a hole exists, otherwise `R_h = 0`.
    pub ramp_end: f64,
    /// `ρ^TF(R_h + 1/Ω)`
    pub junction_value: f64,
    regularized: bool,
}

/// Builds the regularized density. Without a hole `ρ^TF` is returned as is.
pub fn regularized_density(tf: &TfSolution, rotation: f64) -> Result<RegularizedDensity> {
    if !(rotation.is_finite() && rotation > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Omega must be positive, got {rotation}"
        )));
    }
    if !tf.has_hole() {
        return Ok(RegularizedDensity {
            tf: *tf,
            rotation,
            ramp_end: 0.0,
            junction_value: 0.0,
            regularized: false,
        });
    }
    let width = 1.0 / rotation;
    if width >= 1.0 - tf.hole_radius {
        return Err(Error::InvalidParameter(format!(
            "ramp width 1/Omega = {width} does not fit between the hole radius {} and the boundary",
            tf.hole_radius
        )));
    }
    let ramp_end = tf.hole_radius + width;
    Ok(RegularizedDensity {
        tf: *tf,
        rotation,
        ramp_end,
        junction_value: tf.density(ramp_end),
        regularized: true,
    })
}

impl RegularizedDensity {
    pub fn eval(&self, r: f64) -> f64 {
        if !self.regularized {
            return self.tf.density(r);
        }
        let rh = self.tf.hole_radius;
        if r <= rh {
            0.0
        } else if r < self.ramp_end {
            let d = r - rh;
            self.junction_value * self.rotation * self.rotation * d * d
        } else {
            self.tf.density(r)
        }
    }

    /// `d√ρ/dr`, used for kinetic diagnostics.
    pub fn sqrt_derivative(&self, r: f64) -> f64 {
        let rh = self.tf.hole_radius;
        if self.regularized && r <= rh {
            return 0.0;
        }
        if self.regularized && r < self.ramp_end {
            return self.junction_value.sqrt() * self.rotation;
        }
        let rho = self.tf.density(r);
        if rho <= 0.0 {
            return 0.0;
        }
        let drho = self.tf.omega * self.tf.omega * r / 4.0;
        drho / (2.0 * rho.sqrt())
    }

    /// Upper bound on `|ρ − ρ^TF|`, namely `ρ^TF(R_h + 1/Ω)` (zero without a hole).
    pub fn sup_deviation_bound(&self) -> f64 {
        self.junction_value
    }

    /// Breakpoints for radial quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        if self.regularized {
            vec![self.tf.hole_radius, self.ramp_end]
        } else {
            vec![]
        }
    }

    pub fn mass(&self) -> f64 {
        quad::adaptive(
            |r| 2.0 * PI * r * self.eval(r),
            0.0,
            1.0,
            &self.breakpoints(),
            1e-13,
        )
        .0
    }

    /// `∫ |∂_r √ρ|² dA`.
    pub fn radial_kinetic(&self) -> f64 {
        quad::adaptive(
            |r| {
                let d = self.sqrt_derivative(r);
                2.0 * PI * r * d * d
            },
            0.0,
            1.0,
            &self.breakpoints(),
            1e-12,
        )
        .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn omega_h_constant() {
        assert!((OMEGA_H - 4.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_rotation_is_uniform() {
        let tf = solve_tf(0.0).unwrap();
        assert!((tf.scaled_energy - 1.0 / PI).abs() < 1e-15);
        assert!((tf.scaled_chemical_potential - 2.0 / PI).abs() < 1e-15);
        assert_eq!(tf.hole_radius, 0.0);
        for r in [0.0, 0.3, 1.0] {
            assert!((tf.density(r) - 1.0 / PI).abs() < 1e-15);
        }
    }

    #[test]
    fn branches_agree_at_critical_rotation() {
        let w = OMEGA_H;
        let w2 = w * w;
        let sp = PI.sqrt();
        let e_lo = 1.0 / PI - w2 / 8.0 - PI * w2 * w2 / 768.0;
        let e_hi = -(w2 / 4.0) * (1.0 - 8.0 / (3.0 * sp * w));
        assert!((e_lo - e_hi).abs() < 1e-12);
        assert!((e_lo + 4.0 / (3.0 * PI)).abs() < 1e-12);
        let mu_lo = 2.0 / PI - w2 / 8.0;
        let mu_hi = -(w2 / 4.0) * (1.0 - 4.0 / (sp * w));
        assert!(mu_lo.abs() < 1e-12 && mu_hi.abs() < 1e-12);
    }

    #[test]
    fn twice_critical_rotation() {
        let tf = solve_tf(8.0 / PI.sqrt()).unwrap();
        assert!((tf.hole_radius - 0.5f64.sqrt()).abs() < 1e-14);
        let outside = tf.omega * tf.omega / 8.0 * (1.0 - tf.hole_radius.powi(2));
        assert!((tf.density(1.0) - tf.omega / (2.0 * PI.sqrt())).abs() < 1e-14);
        assert!((tf.density(1.0) - outside).abs() < 1e-13);
        assert!((tf.density(1.0) - 4.0 / PI).abs() < 1e-13);
        assert_eq!(tf.density(0.5), 0.0);
    }

    #[test]
    fn normalization_and_mu_identity() {
        for w in [0.0, 1.0, OMEGA_H, 4.0, 10.0] {
            let tf = solve_tf(w).unwrap();
            assert!((tf.mass() - 1.0).abs() < 1e-10, "w={w}");
            let mu = tf.scaled_energy + tf.l2_norm_sq();
            assert!((mu - tf.scaled_chemical_potential).abs() < 1e-10, "w={w}");
        }
    }

    /// Minimizes the scaled TF functional over radial densities on a 2000-point
    /// grid by bisection on the Lagrange multiplier of the mass constraint.
    fn numeric_tf_energy(omega: f64) -> f64 {
        let m = 2000;
        let dr = 1.0 / m as f64;
        let rs: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * dr).collect();
        let profile = |lam: f64| -> Vec<f64> {
            rs.iter()
                .map(|&r| (0.5 * (lam + omega * omega * r * r / 4.0)).max(0.0))
                .collect()
        };
        let mass = |p: &[f64]| -> f64 {
            p.iter().zip(&rs).map(|(d, r)| 2.0 * PI * r * d * dr).sum()
        };
        let (mut lo, mut hi) = (-100.0 * (1.0 + omega * omega), 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(&profile(mid)) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = profile(0.5 * (lo + hi));
        p.iter()
            .zip(&rs)
            .map(|(d, r)| 2.0 * PI * r * dr * (d * d - omega * omega * r * r * d / 4.0))
            .sum()
    }

    #[test]
    fn unscaled_energy_matches_numeric_minimization() {
        let p = Params::derive(0.02, 200.0).unwrap();
        let e = tf_energy_unscaled(&p).unwrap();
        assert!((e + 6238.742).abs() < 0.01, "{e}");
        let num = numeric_tf_energy(4.0) / (0.02 * 0.02);
        assert!(((num - e) / e).abs() < 1e-3);

        let p = Params::derive(0.1, 1e-9).unwrap();
        assert!((tf_energy_unscaled(&p).unwrap() - 100.0 / PI).abs() < 1e-4);
        for w in [0.5, 2.0, 7.0] {
            let tf = solve_tf(w).unwrap();
            let num = numeric_tf_energy(w);
            assert!((num - tf.scaled_energy).abs() < 1e-3 * tf.scaled_energy.abs().max(1.0));
        }
    }

    #[test]
    fn large_rotation_asymptotics() {
        for (w, tol) in [(40.0, 0.05), (400.0, 0.005)] {
            let tf = solve_tf(w).unwrap();
            let ratio = (tf.scaled_energy + w * w / 4.0) / (2.0 / (3.0 * PI.sqrt()) * w);
            assert!((ratio - 1.0).abs() < tol, "w={w} ratio={ratio}");
        }
    }

    #[test]
    fn sup_density_grows_linearly() {
        // min over ω of (1/π + ω²/16)/(1 + ω) sits at ω = √(1 + 16/π) − 1
        let wstar = (1.0 + 16.0 / PI).sqrt() - 1.0;
        let cmin = (1.0 / PI + wstar * wstar / 16.0) / (1.0 + wstar);
        assert!((cmin - 0.1836).abs() < 1e-4);
        for i in 0..=1000 {
            let w = 0.01 * i as f64;
            let tf = solve_tf(w).unwrap();
            assert_eq!(tf.sup_density(), (0..=100).map(|j| tf.density(j as f64 / 100.0)).fold(0.0, f64::max));
            assert!(tf.sup_density() >= (cmin - 1e-12) * (w + 1.0), "w={w}");
        }
        let tf = solve_tf(1e4).unwrap();
        assert!((tf.sup_density() / 1e4 - 0.5 / PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn level_radius_inverts_density() {
        let tf = solve_tf(4.0).unwrap();
        let r = tf.level_radius(0.5).unwrap();
        assert!((tf.density(r) - 0.5).abs() < 1e-12);
        assert!(tf.level_radius(10.0).is_none());
    }

    #[test]
    fn regularized_without_hole_is_identity() {
        let tf = solve_tf(1.0).unwrap();
        let reg = regularized_density(&tf, 37.0).unwrap();
        for i in 0..=50 {
            let r = i as f64 / 50.0;
            assert_eq!(reg.eval(r), tf.density(r));
        }
    }

    #[test]
    fn regularized_ramp_with_hole() {
        let tf = solve_tf(4.0).unwrap();
        let reg = regularized_density(&tf, 200.0).unwrap();
        let rh = tf.hole_radius;
        let j = rh + 0.005;
        let ramp = tf.density(j) * 200.0 * 200.0 * (j - rh) * (j - rh);
        assert!((ramp - tf.density(j)).abs() < 1e-12);
        assert!((reg.eval(j - 1e-12) - tf.density(j)).abs() < 1e-8);
        let bound = 2.0 * (j * j - rh * rh);
        assert!((reg.sup_deviation_bound() - bound).abs() < 1e-12);
        // O(ε²Ω) = 0.08 scale
        assert!(reg.sup_deviation_bound() < 0.08);
        let mut worst: f64 = 0.0;
        for i in 0..=20000 {
            let r = i as f64 / 20000.0;
            worst = worst.max((reg.eval(r) - tf.density(r)).abs());
        }
        assert!(worst <= reg.sup_deviation_bound() + 1e-14);
        assert!(reg.radial_kinetic().is_finite());
        assert!(regularized_density(&solve_tf(20.0).unwrap(), 1.05).is_err());
    }

    proptest! {
        #[test]
        fn density_properties(w in 0.0f64..15.0, r in 0.0f64..1.0, s in 0.0f64..1.0) {
            let tf = solve_tf(w).unwrap();
            prop_assert!(tf.density(r) >= 0.0);
            prop_assert!((tf.density(r) - tf.density_from_mu(r)).abs() < 1e-12 * (1.0 + w * w));
            let (a, b) = if r <= s { (r, s) } else { (s, r) };
            if a >= tf.hole_radius {
                prop_assert!(tf.density(a) <= tf.density(b) + 1e-15);
            }
            if w > OMEGA_H && r <= tf.hole_radius {
                prop_assert_eq!(tf.density(r), 0.0);
            }
        }

        #[test]
        fn continuity_across_critical_rotation(r in 0.0f64..1.0) {
            let lo = solve_tf(OMEGA_H).unwrap();
            let hi = solve_tf(OMEGA_H * (1.0 + 1e-15)).unwrap();
            prop_assert!((lo.density(r) - hi.density(r)).abs() < 1e-12);
            prop_assert!((lo.scaled_energy - hi.scaled_energy).abs() < 1e-12);
        }
    }
}
