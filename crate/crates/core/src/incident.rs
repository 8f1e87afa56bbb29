//! Estimated incident fields from modal far-field sets and the
//! correlation-equivalence machinery.
//!
//! For a plane wave arriving from a reference DoA, each modal expansion
//! coefficient is proportional to that mode's far field evaluated at the
//! reference direction; the global physical constant cancels in every
//! correlation and is fixed to 1 here. The estimated incident field is the
//! conjugate-weighted modal superposition Σ_n c_n·conj(F_n), and for mode
//! sets that are orthogonal with equal norms under the surface inner product,
//! the correlation of two coefficient vectors equals the correlation of the
//! corresponding estimated incident fields up to quadrature error.

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::farfield::{FarFieldSet, Polarization, Raster};
use crate::geometry::Direction;
use crate::numerics::{
    compensated_sum, format_g17, hermitian_dot, norm_squared, uniform_quadrature_weights,
};

/// Modal expansion coefficients of a wave incident from `reference`:
/// c_n = F_n(reference) in the chosen polarization, global constant 1.
///
/// A zero vector means the reference DoA is a common null of every entry in
/// that polarization (the estimate is then identically zero).
pub fn incident_coefficients(
    set: &FarFieldSet,
    reference: Direction,
    polarization: Polarization,
) -> Result<Vec<Complex64>> {
    (0..set.len())
        .map(|n| set.sample(n, reference, polarization))
        .collect()
}

/// Correlation of two coefficient vectors, ρ = a^H b / (‖a‖‖b‖).
///
/// When both vectors are columns of a measurement matrix on the same set,
/// this reproduces the measurement-matrix correlation bit-for-bit — the
/// arithmetic is identical.
pub fn coefficient_correlation(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "coefficient vectors have mismatched lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm_squared(a), norm_squared(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::degenerate(
            "zero-norm coefficient vector: the reference DoA is a common null of every entry",
        ));
    }
    Ok(hermitian_dot(a, b) / (na.sqrt() * nb.sqrt()))
}

/// Estimated incident far field: coefficients at a reference DoA plus the
/// conjugate-weighted superposition sampled on an output raster.
#[derive(Clone, Debug)]
pub struct IncidentFieldEstimate {
    reference_doa: Direction,
    coefficients: Vec<Complex64>,
    raster: Raster,
    f_theta: Array2<Complex64>,
    f_phi: Array2<Complex64>,
}

impl IncidentFieldEstimate {
    /// The DoA the wave was assumed to arrive from.
    pub fn reference_doa(&self) -> Direction {
        self.reference_doa
    }

    /// Modal expansion coefficients c, entry order of the source set.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// The output raster the pattern is sampled on.
    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    /// θ-component of the estimated pattern, θ-major layout.
    pub fn f_theta(&self) -> &Array2<Complex64> {
        &self.f_theta
    }

    /// φ-component of the estimated pattern.
    pub fn f_phi(&self) -> &Array2<Complex64> {
        &self.f_phi
    }

    /// True when every coefficient is zero (reference at a common null); the
    /// pattern is then identically zero.
    pub fn is_null(&self) -> bool {
        self.coefficients.iter().all(|c| c.norm_sqr() == 0.0)
    }

    /// Vector magnitude √(|f_θ|² + |f_φ|²) at raster node (i, j).
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        (self.f_theta[(i, j)].norm_sqr() + self.f_phi[(i, j)].norm_sqr()).sqrt()
    }

    /// Raster node with the largest vector magnitude (first in row-major
    /// order on ties) and that magnitude.
    pub fn peak_direction(&self) -> (Direction, f64) {
        let ts = self.raster.theta_samples();
        let ps = self.raster.phi_samples();
        let mut best = (0usize, 0usize);
        let mut best_mag = self.magnitude(0, 0);
        for i in 0..ts.len() {
            for j in 0..ps.len() {
                let m = self.magnitude(i, j);
                if m > best_mag {
                    best_mag = m;
                    best = (i, j);
                }
            }
        }
        (
            Direction::new(ts[best.0], ps[best.1]).expect("raster nodes are valid directions"),
            best_mag,
        )
    }

    /// Writes the pattern as CSV rows
    /// `theta_deg,phi_deg,re_ftheta,im_ftheta,re_fphi,im_fphi,magnitude`
    /// in row-major raster order.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let ts = self.raster.theta_samples();
        let ps = self.raster.phi_samples();
        let mut out = String::from("theta_deg,phi_deg,re_ftheta,im_ftheta,re_fphi,im_fphi,magnitude\n");
        for (i, t) in ts.iter().enumerate() {
            for (j, p) in ps.iter().enumerate() {
                let ft = self.f_theta[(i, j)];
                let fp = self.f_phi[(i, j)];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    format_g17(t.to_degrees()),
                    format_g17(p.to_degrees()),
                    format_g17(ft.re),
                    format_g17(ft.im),
                    format_g17(fp.re),
                    format_g17(fp.im),
                    format_g17(self.magnitude(i, j))
                ));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Builds the estimated incident field for a wave from `reference`:
/// pattern(e) = Σ_n c_n · conj(F_n(e)) for both vector components, sampled on
/// `output`. The output raster may differ from the set's own raster (finer
/// visualization grids) but must not extend beyond it.
pub fn estimate_incident_field(
    set: &FarFieldSet,
    reference: Direction,
    polarization: Polarization,
    output: &Raster,
) -> Result<IncidentFieldEstimate> {
    if output.is_full_sphere() && !set.raster().is_full_sphere() {
        return Err(Error::invalid(
            "output raster spans the full sphere but the set stores only a hemisphere",
        ));
    }
    let coefficients = incident_coefficients(set, reference, polarization)?;
    let ts = output.theta_samples();
    let ps = output.phi_samples();

    // Rows in parallel; assembly order is fixed by row index, so the result
    // is identical for any worker count.
    let rows: Vec<Vec<(Complex64, Complex64)>> = ts
        .par_iter()
        .map(|&theta| -> Result<Vec<(Complex64, Complex64)>> {
            ps.iter()
                .map(|&phi| {
                    let d = Direction::new(theta, phi)?;
                    let mut ft = Complex64::new(0.0, 0.0);
                    let mut fp = Complex64::new(0.0, 0.0);
                    for (e, c) in coefficients.iter().enumerate() {
                        ft += c * set.sample(e, d, Polarization::Theta)?.conj();
                        fp += c * set.sample(e, d, Polarization::Phi)?.conj();
                    }
                    Ok((ft, fp))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut f_theta = Array2::zeros((ts.len(), ps.len()));
    let mut f_phi = Array2::zeros((ts.len(), ps.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, &(ft, fp)) in row.iter().enumerate() {
            f_theta[(i, j)] = ft;
            f_phi[(i, j)] = fp;
        }
    }
    Ok(IncidentFieldEstimate {
        reference_doa: reference,
        coefficients,
        raster: *output,
        f_theta,
        f_phi,
    })
}

/// Correlation of the estimated incident fields of two reference DoAs,
/// ρ = ⟨A, B⟩ / (‖A‖‖B‖), with the surface inner product
/// ⟨A, B⟩ = ∫ (conj(A_θ)B_θ + conj(A_φ)B_φ) sinθ dΩ evaluated on the
/// quadrature raster (Simpson in θ, exact-for-trigonometric rectangle in φ).
///
/// The quadrature raster must span the same domain as the set: modal
/// orthogonality holds on the full sphere, so hemisphere sets integrate over
/// the hemisphere only.
pub fn correlation_via_incident_fields(
    set: &FarFieldSet,
    reference_a: Direction,
    reference_b: Direction,
    polarization: Polarization,
    quadrature: &Raster,
) -> Result<Complex64> {
    if quadrature.is_full_sphere() != set.raster().is_full_sphere() {
        return Err(Error::invalid(
            "quadrature raster must span the same domain (hemisphere or full sphere) as the set",
        ));
    }
    let a = estimate_incident_field(set, reference_a, polarization, quadrature)?;
    let b = estimate_incident_field(set, reference_b, polarization, quadrature)?;
    let gab = surface_inner_product(&a, &b);
    let gaa = surface_inner_product(&a, &a).re;
    let gbb = surface_inner_product(&b, &b).re;
    if gaa <= 0.0 || gbb <= 0.0 {
        return Err(Error::degenerate(
            "zero-norm estimated incident field: the reference DoA is a common null of every entry",
        ));
    }
    Ok(gab / (gaa.sqrt() * gbb.sqrt()))
}

/// Surface inner product ⟨A, B⟩ of two estimates on the same raster,
/// accumulated in fixed row-major order with compensation.
fn surface_inner_product(a: &IncidentFieldEstimate, b: &IncidentFieldEstimate) -> Complex64 {
    let ts = a.raster().theta_samples();
    let pc = a.raster().phi_samples().len();
    let wt = uniform_quadrature_weights(&ts);
    let h_phi = TAU / pc as f64;
    let mut re_terms = Vec::with_capacity(ts.len() * pc * 2);
    let mut im_terms = Vec::with_capacity(ts.len() * pc * 2);
    for (i, &theta) in ts.iter().enumerate() {
        let w = wt[i] * theta.sin() * h_phi;
        for j in 0..pc {
            let pt = a.f_theta()[(i, j)].conj() * b.f_theta()[(i, j)];
            let pp = a.f_phi()[(i, j)].conj() * b.f_phi()[(i, j)];
            re_terms.push(w * pt.re);
            re_terms.push(w * pp.re);
            im_terms.push(w * pt.im);
            im_terms.push(w * pp.im);
        }
    }
    Complex64::new(compensated_sum(re_terms), compensated_sum(im_terms))
}
