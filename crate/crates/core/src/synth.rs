//! Analytic far-field generators: monopole uniform circular arrays and
//! canonical dipole-type mode patterns.
//!
//! These provide solver-free, closed-form inputs that reproduce the phenomena
//! under evaluation (grating-lobe ambiguities at wide element spacing, their
//! absence at narrow spacing, zero-component modes) without electromagnetic
//! simulation. Mutual coupling is deliberately neglected.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::farfield::{FarFieldSet, Normalization, PatternEntry, Raster};

/// Default operating frequency, Hz.
pub const DEFAULT_FREQUENCY_HZ: f64 = 1.06e9;

/// Geometry of a monopole uniform circular array over an infinite ground
/// plane. All lengths are in free-space wavelengths; the circumradius
/// `R = d / (2 sin(π/P))` is derived, never stored.
#[derive(Clone, Copy, Debug)]
pub struct UcaSpec {
    element_count: usize,
    spacing_over_lambda: f64,
    monopole_length_over_lambda: f64,
    step_deg: f64,
    frequency_hz: f64,
}

impl UcaSpec {
    /// Validates and builds a spec with a 1° raster at the default frequency.
    pub fn new(
        element_count: usize,
        spacing_over_lambda: f64,
        monopole_length_over_lambda: f64,
    ) -> Result<Self> {
        if element_count < 2 {
            return Err(Error::invalid("a circular array needs at least 2 elements"));
        }
        if !(spacing_over_lambda.is_finite() && spacing_over_lambda > 0.0) {
            return Err(Error::invalid("element spacing must be positive"));
        }
        if !(monopole_length_over_lambda.is_finite() && monopole_length_over_lambda > 0.0) {
            return Err(Error::invalid("monopole length must be positive"));
        }
        Ok(Self {
            element_count,
            spacing_over_lambda,
            monopole_length_over_lambda,
            step_deg: 1.0,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        })
    }

    /// Replaces the raster step (degrees).
    pub fn with_step_deg(mut self, step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0) {
            return Err(Error::invalid("raster step must be positive"));
        }
        self.step_deg = step_deg;
        Ok(self)
    }

    /// Replaces the operating frequency (Hz).
    pub fn with_frequency_hz(mut self, frequency_hz: f64) -> Result<Self> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::invalid("frequency must be positive"));
        }
        self.frequency_hz = frequency_hz;
        Ok(self)
    }

    /// Number of elements P.
    pub fn element_count(&self) -> usize {
        self.element_count
    }

    /// Inter-element spacing d/λ.
    pub fn spacing_over_lambda(&self) -> f64 {
        self.spacing_over_lambda
    }

    /// Monopole length L/λ.
    pub fn monopole_length_over_lambda(&self) -> f64 {
        self.monopole_length_over_lambda
    }

    /// Raster step, degrees.
    pub fn step_deg(&self) -> f64 {
        self.step_deg
    }

    /// Operating frequency, Hz.
    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    /// Circumradius R/λ of the element ring: `d / (2 sin(π/P))`.
    pub fn circumradius_over_lambda(&self) -> f64 {
        self.spacing_over_lambda / (2.0 * (PI / self.element_count as f64).sin())
    }
}

/// Normalized θ-pattern of a thin vertical monopole of length L over an
/// infinite ground plane: `[cos(k₀L cos θ) − cos(k₀L)] / sin θ`, with the
/// axial limit 0 at sin θ = 0.
pub fn monopole_element_pattern(length_over_lambda: f64, theta: f64) -> f64 {
    let k0l = TAU * length_over_lambda;
    let s = theta.sin();
    if s == 0.0 {
        return 0.0;
    }
    ((k0l * theta.cos()).cos() - k0l.cos()) / s
}

/// Synthesizes the P-port far-field set of a monopole UCA.
///
/// Entry `port{p+1}` holds `F_θ(θ, φ) = g(θ) · exp(+j k₀ e_r · p_p)` with
/// `g` the element pattern and `p_p` the p-th element position on a circle of
/// radius R in the ground plane, first element at φ = 0; `F_φ ≡ 0`. The phase
/// origin is the array center. Azimuth differences are formed in degrees so
/// that ring rotations by whole raster steps permute entries bit-exactly.
pub fn synth_uca(spec: &UcaSpec) -> Result<FarFieldSet> {
    let raster = Raster::uniform(spec.step_deg, false)?;
    let radius = spec.circumradius_over_lambda();
    let p_count = spec.element_count;
    let thetas = raster.theta_samples();
    let shape = (raster.theta_count(), raster.phi_count());

    // Azimuth difference folded into [0°, 180°] before the radian conversion:
    // symmetric node/element pairs then share the exact same cosine bits, so
    // ring rotations by whole steps permute entries without rounding drift.
    let folded_cos = |node_deg: f64, elem_deg: f64| {
        let mut d = (node_deg - elem_deg).abs() % 360.0;
        if d > 180.0 {
            d = 360.0 - d;
        }
        d.to_radians().cos()
    };

    let mut entries = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let elem_phi_deg = 360.0 * p as f64 / p_count as f64;
        let mut e_theta = Array2::<Complex64>::zeros(shape);
        for (i, &theta) in thetas.iter().enumerate() {
            let amp = monopole_element_pattern(spec.monopole_length_over_lambda, theta);
            let k_r_sin = TAU * radius * theta.sin();
            for j in 0..shape.1 {
                let node_phi_deg = raster.phi_step_deg() * j as f64;
                let phase = k_r_sin * folded_cos(node_phi_deg, elem_phi_deg);
                e_theta[(i, j)] = Complex64::from_polar(amp, phase);
            }
        }
        entries.push(PatternEntry::new(
            format!("port{}", p + 1),
            e_theta,
            Array2::zeros(shape),
            None,
        ));
    }
    FarFieldSet::new(raster, Normalization::Directivity, spec.frequency_hz, entries)
}

/// Generates the canonical four-mode set on a hemisphere (or full sphere)
/// raster: a vertical electric dipole, two horizontal magnetic dipoles, and a
/// mode with identically zero θ-component.
///
/// | name | F_θ       | F_φ            |
/// |------|-----------|----------------|
/// | VED  | sin θ     | 0              |
/// | MDX  | sin φ     | cos θ · cos φ  |
/// | MDY  | cos φ     | −cos θ · sin φ |
/// | ZTH  | 0         | sin θ          |
///
/// All four are mutually orthogonal with equal norms over either domain.
/// Entries carry eigenvalue 0 (resonant) by default and the cm-directivity
/// normalization tag.
pub fn canonical_mode_set(step_deg: f64, full_sphere: bool) -> Result<FarFieldSet> {
    let raster = Raster::uniform(step_deg, full_sphere)?;
    let thetas = raster.theta_samples();
    let phis = raster.phi_samples();
    let shape = (raster.theta_count(), raster.phi_count());

    type Pair = (f64, f64);
    type ComponentFn = fn(Pair, Pair) -> (f64, f64);
    let defs: [(&str, ComponentFn); 4] = [
        ("VED", |(st, _ct), (_sp, _cp)| (st, 0.0)),
        ("MDX", |(_st, ct), (sp, cp)| (sp, ct * cp)),
        ("MDY", |(_st, ct), (sp, cp)| (cp, -ct * sp)),
        ("ZTH", |(st, _ct), (_sp, _cp)| (0.0, st)),
    ];

    let mut entries = Vec::with_capacity(defs.len());
    for (name, f) in defs {
        let mut e_theta = Array2::<Complex64>::zeros(shape);
        let mut e_phi = Array2::<Complex64>::zeros(shape);
        for (i, &theta) in thetas.iter().enumerate() {
            let t = (theta.sin(), theta.cos());
            for (j, &phi) in phis.iter().enumerate() {
                let p = (phi.sin(), phi.cos());
                let (ft, fp) = f(t, p);
                e_theta[(i, j)] = Complex64::new(ft, 0.0);
                e_phi[(i, j)] = Complex64::new(fp, 0.0);
            }
        }
        entries.push(PatternEntry::new(name, e_theta, e_phi, Some(0.0)));
    }
    FarFieldSet::new(
        raster,
        Normalization::CmDirectivity,
        DEFAULT_FREQUENCY_HZ,
        entries,
    )
}
