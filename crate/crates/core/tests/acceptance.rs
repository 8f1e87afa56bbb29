//! Acceptance suite: one test per headline guarantee of the library, each
//! printing a numbered pass line (visible with `--nocapture`; a failed
//! assertion is the corresponding fail line). Tolerances are pinned here and
//! are not to be loosened.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use df_eval_core::estimators::{crb_phi, music_spectrum, SourceScenario};
use df_eval_core::farfield::{FarFieldSet, Polarization, Raster};
use df_eval_core::geometry::{generate_cap_grid, Direction, DoAGrid};
use df_eval_core::incident::{
    coefficient_correlation, correlation_via_incident_fields, incident_coefficients,
};
use df_eval_core::modeselect::enumerate_subsets;
use df_eval_core::numerics::norm_squared;
use df_eval_core::synth::{canonical_mode_set, synth_uca, UcaSpec};
use df_eval_core::uncertainty::{
    assemble_measurement_matrix, kpi, linear_weight, AmbiguityParams, MatrixKind,
    MeasurementMatrix, UncertaintyMatrix,
};

fn pass(number: u32, name: &str) {
    println!("acceptance {number}/9 ({name}): PASS");
}

fn default_grid(target: usize) -> DoAGrid {
    generate_cap_grid(45f64.to_radians(), PI / 2.0, target).unwrap()
}

fn uca_matrix(spacing: f64) -> MeasurementMatrix {
    let set = synth_uca(&UcaSpec::new(6, spacing, 0.25).unwrap()).unwrap();
    let grid = default_grid(250);
    assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged).unwrap()
}

fn phi_close_deg(phi_deg: f64, target_deg: f64, tol_deg: f64) -> bool {
    let d = (phi_deg - target_deg).abs();
    d.min(360.0 - d) <= tol_deg
}

/// Wide element spacing creates grating-lobe ambiguities everywhere, with the
/// known mirror of (80°, 90°) near φ = 270°; halving the spacing removes all
/// of them.
#[test]
fn detects_grating_lobe_ambiguities_for_wide_spacing_only() {
    let start = Instant::now();
    let params = AmbiguityParams::default();

    let wide = uca_matrix(0.6).uncertainty_matrix().unwrap();
    let report = wide.detect_ambiguities(&params).unwrap();
    assert_eq!(
        report.clean_reference_count(),
        0,
        "every reference DoA must show at least one ambiguity at 0.6 wavelength spacing"
    );
    let source = Direction::from_degrees(80.0, 90.0).unwrap();
    let alpha = wide.grid().nearest_index(source);
    let findings = &report.per_reference()[alpha];
    assert!(
        findings
            .iter()
            .any(|f| phi_close_deg(f.test_doa.phi_deg(), 270.0, 10.0)),
        "reference (80, 90) must report a mirror near phi = 270 deg, got {findings:?}"
    );

    let narrow = uca_matrix(0.3).uncertainty_matrix().unwrap();
    let narrow_report = narrow.detect_ambiguities(&params).unwrap();
    assert_eq!(
        narrow_report.total_count(),
        0,
        "0.3 wavelength spacing must be ambiguity-free"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "ambiguity check took {elapsed:.2} s (limit 10 s)");
    pass(1, "grating-lobe ambiguity detection");
}

/// The MUSIC spectrum agrees with the detector: a mirror peak near φ = 270°
/// at 0.6λ spacing, nothing above −10 dB off-source at 0.3λ.
#[test]
fn music_spectrum_concurs_with_the_ambiguity_picture() {
    let start = Instant::now();
    let source = Direction::from_degrees(80.0, 90.0).unwrap();
    let scenario = SourceScenario::new(source, 0.0).unwrap();

    let wide = uca_matrix(0.6);
    let spectrum = music_spectrum(&wide, &scenario).unwrap();
    assert_eq!(
        spectrum.peak_index(),
        wide.grid().nearest_index(source),
        "global peak must sit on the source DoA"
    );
    let (second_idx, _) = spectrum.secondary_peak(source, 30f64.to_radians()).unwrap();
    let second_phi = wide.grid().directions()[second_idx].phi_deg();
    assert!(
        phi_close_deg(second_phi, 270.0, 10.0),
        "second-highest peak at phi = {second_phi} deg, expected within 10 deg of 270"
    );

    let narrow = uca_matrix(0.3);
    let narrow_spectrum = music_spectrum(&narrow, &scenario).unwrap();
    let (_, second_db) = narrow_spectrum
        .secondary_peak(source, 30f64.to_radians())
        .unwrap();
    assert!(
        second_db < -10.0,
        "0.3 wavelength spacing: strongest off-source value is {second_db} dB, expected below -10"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "MUSIC check took {elapsed:.2} s (limit 5 s)");
    pass(2, "MUSIC concordance");
}

/// The three correlation forms agree on the orthonormalized canonical mode
/// set: coefficient vectors reproduce measurement-matrix correlations
/// bit-exactly, and estimated-incident-field correlations match within
/// quadrature error on a 0.5-degree raster.
#[test]
fn correlation_forms_agree_on_the_canonical_mode_set() {
    let start = Instant::now();
    // Unit quadrature norms: each canonical mode integrates to 8π/3 over the
    // full sphere, so scale by √(3/(8π)). Correlations are scale-invariant,
    // making this a labeling choice, not a numerical one.
    let set = canonical_mode_set(0.5, true)
        .unwrap()
        .scale(Complex64::new((3.0 / (8.0 * PI)).sqrt(), 0.0));
    let grid = default_grid(250);
    let matrix =
        assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap();

    let alpha = grid.nearest_index(Direction::from_degrees(70.0, 20.0).unwrap());
    let beta = grid.nearest_index(Direction::from_degrees(85.0, 200.0).unwrap());
    let da = grid.directions()[alpha];
    let db = grid.directions()[beta];

    let ca = incident_coefficients(&set, da, Polarization::Theta).unwrap();
    let cb = incident_coefficients(&set, db, Polarization::Theta).unwrap();
    let rho_coeff = coefficient_correlation(&ca, &cb).unwrap();
    let rho_matrix = matrix.correlation(alpha, beta).unwrap();
    assert!(
        (rho_coeff - rho_matrix).norm() < 1e-12,
        "coefficient form {rho_coeff} vs matrix form {rho_matrix}"
    );
    assert_eq!(rho_coeff, rho_matrix, "identical arithmetic must agree bitwise");

    let quad = Raster::uniform(0.5, true).unwrap();
    let rho_field =
        correlation_via_incident_fields(&set, da, db, Polarization::Theta, &quad).unwrap();
    assert!(
        (rho_field - rho_coeff).norm() < 1e-6,
        "incident-field form {rho_field} vs coefficient form {rho_coeff}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "equivalence check took {elapsed:.2} s (limit 30 s)");
    pass(3, "correlation equivalence chain");
}

/// Scaling every far-field value by √10 adds exactly 10 dB to the KPI and
/// moves nothing else: |ρ| values, the MUSIC argmax, and the ambiguity
/// findings all stay put.
#[test]
fn amplitude_scaling_shifts_kpi_only() {
    let base_set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap()).unwrap();
    let scaled_set = base_set.scale(Complex64::new(10f64.sqrt(), 0.0));
    let grid = default_grid(250);
    let assemble = |s: &FarFieldSet| {
        assemble_measurement_matrix(s, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
            .unwrap()
    };
    let (m0, m1) = (assemble(&base_set), assemble(&scaled_set));
    let (u0, u1) = (m0.uncertainty_matrix().unwrap(), m1.uncertainty_matrix().unwrap());

    let k0 = kpi(&u0, &u0.weight_matrix()).unwrap();
    let k1 = kpi(&u1, &u1.weight_matrix()).unwrap();
    assert!(
        (k1.db - k0.db - 10.0).abs() <= 1e-9,
        "KPI moved by {} dB, expected 10 +/- 1e-9",
        k1.db - k0.db
    );

    // |ρ| = u_{α,β} / √(u_{α,α}·u_{β,β}) must be unaffected.
    let (raw0, raw1) = (u0.unsorted(), u1.unsorted());
    let k = u0.dim();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let r0 = raw0[(i, j)] / (u0.self_terms()[i] * u0.self_terms()[j]).sqrt();
            let r1 = raw1[(i, j)] / (u1.self_terms()[i] * u1.self_terms()[j]).sqrt();
            worst = worst.max((r0 - r1).abs());
        }
    }
    assert!(worst <= 1e-12, "largest |rho| shift {worst}");

    let scenario =
        SourceScenario::new(Direction::from_degrees(80.0, 90.0).unwrap(), 0.0).unwrap();
    assert_eq!(
        music_spectrum(&m0, &scenario).unwrap().peak_index(),
        music_spectrum(&m1, &scenario).unwrap().peak_index(),
        "MUSIC argmax must not move under amplitude scaling"
    );

    let params = AmbiguityParams::default();
    let (rep0, rep1) = (
        u0.detect_ambiguities(&params).unwrap(),
        u1.detect_ambiguities(&params).unwrap(),
    );
    let pairs = |r: &df_eval_core::uncertainty::AmbiguityReport| -> Vec<(usize, usize)> {
        r.per_reference()
            .iter()
            .flatten()
            .map(|f| (f.reference_index, f.test_index))
            .collect()
    };
    assert_eq!(pairs(&rep0), pairs(&rep1), "ambiguity findings must be identical");
    pass(4, "amplitude scaling law");
}

/// An entry with no θ-component (ZTH) is invisible to θ-polarized
/// evaluation: adding it changes no uncertainty entry and no KPI, bit for
/// bit, and exhaustive enumeration never needs it for a best set.
#[test]
fn zero_component_entries_change_nothing() {
    let set = canonical_mode_set(2.0, false).unwrap();
    let grid = default_grid(250);

    // Direct matrix comparison for the full three-mode subset.
    let assemble = |s: &FarFieldSet| {
        assemble_measurement_matrix(s, &grid, Polarization::Theta, MatrixKind::CmDirectivity)
            .unwrap()
    };
    let with_zth = assemble(&set);
    let without = with_zth.row_subset(&[0, 1, 2]).unwrap();
    let (ua, ub) = (
        without.uncertainty_matrix().unwrap(),
        with_zth.uncertainty_matrix().unwrap(),
    );
    assert_eq!(ua.values(), ub.values(), "uncertainty entries must be identical");
    let (ka, kb) = (
        kpi(&ua, &ua.weight_matrix()).unwrap(),
        kpi(&ub, &ub.weight_matrix()).unwrap(),
    );
    assert_eq!(ka.db, kb.db, "KPI must be identical");

    // Exhaustive sweep: pairing each subset with itself-plus-ZTH never moves
    // the KPI, so ZTH never improves a best set.
    let sweep = enumerate_subsets(
        &set,
        &grid,
        Polarization::Theta,
        MatrixKind::CmDirectivity,
        1,
        4,
        &AmbiguityParams::default(),
    )
    .unwrap();
    let kpi_of = |indices: &[usize]| {
        sweep
            .results()
            .iter()
            .find(|r| r.entry_indices == indices)
            .map(|r| r.kpi_db)
    };
    let mut compared = 0;
    for r in sweep.results() {
        if r.entry_indices.contains(&3) || r.entry_indices.len() == 4 {
            continue;
        }
        let mut augmented = r.entry_indices.clone();
        augmented.push(3);
        if let Some(k) = kpi_of(&augmented) {
            assert_eq!(k, r.kpi_db, "subset {:?} plus the zero entry", r.entry_indices);
            compared += 1;
        }
    }
    assert!(compared >= 3, "expected several augmented pairs, saw {compared}");
    pass(5, "zero-component invariance");
}

/// The KPI is a property of the antenna system, not of the evaluation
/// resolution: quadrupling the grid moves it by less than 0.5 dB.
#[test]
fn kpi_is_stable_under_grid_refinement() {
    let set = canonical_mode_set(2.0, false).unwrap();
    let kpi_at = |target: usize| {
        let grid = default_grid(target);
        let m = assemble_measurement_matrix(
            &set,
            &grid,
            Polarization::Theta,
            MatrixKind::CmDirectivity,
        )
        .unwrap();
        let u = m.uncertainty_matrix().unwrap();
        kpi(&u, &u.weight_matrix()).unwrap().db
    };
    let coarse = kpi_at(250);
    let fine = kpi_at(1000);
    assert!(
        (coarse - fine).abs() < 0.5,
        "KPI moved from {coarse} dB (K~250) to {fine} dB (K~1000)"
    );
    pass(6, "resolution stability");
}

/// The distance weighting hits its defining endpoints exactly, and every
/// sorted column leads with its reference's self term 1/‖x‖².
#[test]
fn weighting_endpoints_and_self_terms_are_exact() {
    assert_eq!(linear_weight(0.0), 0.0);
    assert_eq!(linear_weight(PI), 1.0);
    assert_eq!(linear_weight(PI / 2.0), 0.5);

    let m = uca_matrix(0.6);
    let u = m.uncertainty_matrix().unwrap();
    for (s, &alpha) in u.column_reference_perm().iter().enumerate() {
        let nsq = norm_squared(&m.column(alpha));
        let expected = 1.0 / nsq;
        let first = u.values()[(0, s)];
        assert!(
            (first - expected).abs() <= 1e-12 * expected,
            "sorted column {s}: first entry {first} vs 1/norm^2 {expected}"
        );
    }
    pass(7, "weighting endpoints and self terms");
}

/// The CRB obeys its defining proportionalities and the array's rotational
/// symmetry.
#[test]
fn crb_follows_snr_snapshot_and_symmetry_laws() {
    let set = synth_uca(&UcaSpec::new(6, 0.6, 0.25).unwrap()).unwrap();
    let grid = default_grid(250);
    let m = assemble_measurement_matrix(&set, &grid, Polarization::Theta, MatrixKind::PortAsTagged)
        .unwrap();
    let source = Direction::from_degrees(80.0, 90.0).unwrap();

    let s0 = SourceScenario::new(source, 0.0).unwrap();
    let s10 = SourceScenario::new(source, 10.0).unwrap();
    let (c0, c10) = (crb_phi(&set, &m, &s0).unwrap(), crb_phi(&set, &m, &s10).unwrap());
    assert!(
        (c10 - c0 / 10.0).abs() <= 1e-9 * c0,
        "+10 dB SNR: {c0} -> {c10}, expected exact tenfold drop"
    );

    let s2 = s0.with_snapshot_count(2).unwrap();
    assert_eq!(
        crb_phi(&set, &m, &s2).unwrap(),
        c0 / 2.0,
        "doubling snapshots must halve the CRB exactly"
    );

    for (a, b) in [
        ((80.0, 90.0), (80.0, 150.0)),
        ((60.0, 30.0), (60.0, 90.0)),
        ((75.0, 200.0), (75.0, 260.0)),
    ] {
        let sa = SourceScenario::new(Direction::from_degrees(a.0, a.1).unwrap(), 0.0).unwrap();
        let sb = SourceScenario::new(Direction::from_degrees(b.0, b.1).unwrap(), 0.0).unwrap();
        let (ca, cb) = (crb_phi(&set, &m, &sa).unwrap(), crb_phi(&set, &m, &sb).unwrap());
        assert!(
            (ca - cb).abs() <= 0.01 * ca,
            "60-degree rotation symmetry violated: {ca} vs {cb} at {a:?}/{b:?}"
        );
    }
    pass(8, "CRB proportionality and symmetry");
}

/// Property sweep over 200 randomized small systems: Cauchy–Schwarz,
/// Hermitian correlation symmetry, unitary mixing invariance, bit-exact
/// permutation recovery of the sorted matrix, and bit-identical results
/// under different worker counts.
#[test]
fn randomized_property_suite_holds() {
    let start = Instant::now();
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();

    for instance in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + instance);
        let p = rng.gen_range(2..=5usize);
        let k = rng.gen_range(3..=10usize);

        let dirs: Vec<Direction> = (0..k)
            .map(|_| {
                Direction::from_degrees(rng.gen_range(46.0..89.0), rng.gen_range(0.0..360.0))
                    .unwrap()
            })
            .collect();
        let cap = 2.0 * PI * 45f64.to_radians().cos();
        let grid =
            DoAGrid::from_parts(dirs, vec![cap / k as f64; k], 45f64.to_radians(), PI / 2.0)
                .unwrap();
        let mut values = Array2::zeros((p, k));
        for i in 0..p {
            for j in 0..k {
                values[(i, j)] = Complex64::new(
                    rng.gen_range(-1.0..1.0f64) + 0.1,
                    rng.gen_range(-1.0..1.0f64),
                );
            }
        }
        let matrix = MeasurementMatrix::from_values(
            values.clone(),
            grid.clone(),
            Polarization::Theta,
            MatrixKind::PortAsTagged,
            (0..p).map(|i| format!("e{i}")).collect(),
        )
        .unwrap();

        // Cauchy–Schwarz and Hermitian symmetry of the correlation.
        for a in 0..k {
            for b in 0..k {
                let rho = matrix.correlation(a, b).unwrap();
                assert!(rho.norm() <= 1.0 + 1e-12, "|rho| = {} at ({a},{b})", rho.norm());
                let back = matrix.correlation(b, a).unwrap();
                assert_eq!(rho.re, back.re);
                assert_eq!(rho.im, -back.im);
            }
        }

        let u = matrix.uncertainty_matrix().unwrap();

        // Sorting is a pure relabeling: inverting it recovers every pairwise
        // value bit-exactly.
        let unsorted = u.unsorted();
        for a in 0..k {
            for b in 0..k {
                assert_eq!(unsorted[(a, b)], matrix.uncertainty(a, b).unwrap());
            }
        }

        // Left-multiplying by a unitary mixes ports without touching u.
        let q = random_unitary(p, &mut rng);
        let mut mixed = Array2::zeros((p, k));
        for i in 0..p {
            for j in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..p {
                    acc += q[(i, l)] * values[(l, j)];
                }
                mixed[(i, j)] = acc;
            }
        }
        let mixed_matrix = MeasurementMatrix::from_values(
            mixed,
            grid.clone(),
            Polarization::Theta,
            MatrixKind::PortAsTagged,
            (0..p).map(|i| format!("e{i}")).collect(),
        )
        .unwrap();
        for a in 0..k {
            for b in 0..k {
                let lhs = mixed_matrix.uncertainty(a, b).unwrap();
                let rhs = matrix.uncertainty(a, b).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                    "unitary mixing moved u({a},{b}) from {rhs} to {lhs}"
                );
            }
        }

        // Bit-reproducibility: the whole pipeline gives identical bits on one
        // worker and on four.
        let run = || -> (Vec<f64>, f64) {
            let uu = matrix.uncertainty_matrix().unwrap();
            let w = uu.weight_matrix();
            let kv = kpi(&uu, &w).unwrap();
            (uu.values().iter().copied().collect(), kv.db)
        };
        let (v1, k1) = pool1.install(run);
        let (v4, k4) = pool4.install(run);
        assert_eq!(v1, v4, "uncertainty values differ across worker counts");
        assert_eq!(k1, k4, "KPI differs across worker counts");
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "property suite took {elapsed:.2} s (limit 60 s)");
    pass(9, "randomized property suite");
}

/// Random unitary via Gram–Schmidt on a random complex matrix.
fn random_unitary(p: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut v: Vec<Complex64> = (0..p)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        for prev in &q {
            let proj: Complex64 = prev
                .iter()
                .zip(&v)
                .map(|(&a, &b)| a.conj() * b)
                .sum();
            for (vi, &pi) in v.iter_mut().zip(prev) {
                *vi -= proj * pi;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm > 1e-6, "degenerate random draw");
        for vi in &mut v {
            *vi /= norm;
        }
        q.push(v);
    }
    let mut out = Array2::zeros((p, p));
    for (i, row) in q.iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            out[(i, j)] = z;
        }
    }
    out
}

/// `UncertaintyMatrix` accessors used above stay wired to the same grid.
#[test]
fn sorted_matrix_accessors_are_consistent() {
    let m = uca_matrix(0.6);
    let u: UncertaintyMatrix = m.uncertainty_matrix().unwrap();
    assert_eq!(u.dim(), m.direction_count());
    assert_eq!(u.grid().len(), u.dim());
    assert_eq!(u.column_reference_perm().len(), u.dim());
    assert_eq!(u.row_perms().len(), u.dim());
}
