//! Shared numerical kernels: compensated summation, Hermitian inner products,
//! quadrature weights, and a small dense Hermitian eigensolver.
//!
//! Inner products over port/mode indices accumulate with TwoSum compensation so
//! that results are independent of row ordering down to the final rounding.
//! Plain f64 summation would make documented exact invariants (Gram symmetry,
//! KPI invariance under entry reordering) hold only up to the last ulp.

use ndarray::Array2;
use num_complex::Complex64;

// ---------------------------------------------------------------------------
// Compensated summation
// ---------------------------------------------------------------------------

/// Error-free transformation: returns `(s, e)` with `s = fl(a + b)` and
/// `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Compensated accumulator (Neumaier style): the running error of every
/// addition is captured exactly and folded back in at the end.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    hi: f64,
    lo: f64,
}

impl Accumulator {
    /// Fresh accumulator at zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one term.
    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    /// Final compensated value.
    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

// ---------------------------------------------------------------------------
// Hermitian inner products
// ---------------------------------------------------------------------------

/// Orders accumulation terms canonically: ascending magnitude, then value.
/// Summing in this order makes the result a function of the term *multiset*,
/// so any permutation of the input elements yields identical bits, and an
/// element-wise negated multiset yields the exactly negated sum.
fn sort_terms(terms: &mut [f64]) {
    terms.sort_by(|a, b| {
        a.abs()
            .partial_cmp(&b.abs())
            .unwrap()
            .then(a.partial_cmp(b).unwrap())
    });
}

/// Hermitian inner product `x^H y = Σ conj(x_i) y_i` with compensated,
/// canonically ordered accumulation of the real and imaginary parts.
///
/// Each element contributes `re = x.re·y.re + x.im·y.im` and
/// `im = x.re·y.im − x.im·y.re` as single rounded terms; the terms are then
/// summed smallest-magnitude-first. Consequences relied on elsewhere:
/// `hermitian_dot(y, x)` is the exact conjugate of `hermitian_dot(x, y)`,
/// reordering the elements of both vectors together never changes the result,
/// and appending zero elements never changes the result.
pub fn hermitian_dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    debug_assert_eq!(x.len(), y.len());
    let mut re_terms = Vec::with_capacity(x.len());
    let mut im_terms = Vec::with_capacity(x.len());
    for (a, b) in x.iter().zip(y) {
        re_terms.push(a.re * b.re + a.im * b.im);
        im_terms.push(a.re * b.im - a.im * b.re);
    }
    sort_terms(&mut re_terms);
    sort_terms(&mut im_terms);
    Complex64::new(compensated_sum(re_terms), compensated_sum(im_terms))
}

/// Squared Euclidean norm `‖x‖² = Σ |x_i|²` with compensated, canonically
/// ordered accumulation (element order never affects the result).
pub fn norm_squared(x: &[Complex64]) -> f64 {
    let mut terms: Vec<f64> = x.iter().map(|a| a.re * a.re + a.im * a.im).collect();
    sort_terms(&mut terms);
    compensated_sum(terms)
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Weights for integrating samples on a uniform grid spanning `[x₀, x_{n−1}]`.
///
/// Composite Simpson when the interval count is even; an odd count ≥ 3 closes
/// with a 3/8 panel; two points fall back to the trapezoid. A single point has
/// no extent and gets weight zero.
pub fn uniform_quadrature_weights(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h = (samples[n - 1] - samples[0]) / (n - 1) as f64;
    let mut w = vec![0.0; n];
    if n == 2 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let intervals = n - 1;
    // Simpson needs an even interval count; reserve the last three intervals
    // for a 3/8 panel when it is odd.
    let simpson_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
    if simpson_end > 0 {
        w[0] += h / 3.0;
        w[simpson_end] += h / 3.0;
        for (i, wi) in w.iter_mut().enumerate().take(simpson_end).skip(1) {
            *wi += if i % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
        }
    }
    if intervals % 2 == 1 {
        let s = n - 4; // three-interval closing panel (n ≥ 4 whenever we get here)
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigenvalues (descending) and matching eigenvector columns of a complex
/// Hermitian matrix, via cyclic Jacobi rotations.
///
/// Intended for the small port-count covariance matrices of this crate
/// (n ≲ 20); cost is O(n³) per sweep. Only the Hermitian part of `a` is
/// referenced. Panics if `a` is not square.
pub fn hermitian_eigen(a: &Array2<Complex64>) -> (Vec<f64>, Array2<Complex64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigen requires a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<Complex64>::eye(n);
    if n > 1 {
        let norm: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let tol = (1e-15 * norm).max(f64::MIN_POSITIVE);
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::<Complex64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    (values, vectors)
}

/// One Jacobi rotation zeroing `m[(p, q)]`, applied to `m` (two-sided) and
/// accumulated into the eigenvector matrix `v`.
fn jacobi_rotate(m: &mut Array2<Complex64>, v: &mut Array2<Complex64>, p: usize, q: usize) {
    let apq = m[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r; // e^{iφ}: absorbs the off-diagonal phase
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Annihilation condition: r(c² − s²) + (aqq − app)·c·s = 0, i.e.
    // t² − 2τt − 1 = 0 with t = s/c. Take the smaller-magnitude root for a
    // rotation angle below π/4 (Jacobi convergence requirement).
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau >= 0.0 {
        -1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = m.nrows();
    // Column update: [col_p, col_q] ← [col_p, col_q]·G with
    // G = [[c·e^{iφ}, −s·e^{iφ}], [s, c]].
    for i in 0..n {
        let mip = m[(i, p)];
        let miq = m[(i, q)];
        m[(i, p)] = mip * phase * c + miq * s;
        m[(i, q)] = -mip * phase * s + miq * c;
    }
    // Row update with G^H on the left.
    let phase_c = phase.conj();
    for j in 0..n {
        let mpj = m[(p, j)];
        let mqj = m[(q, j)];
        m[(p, j)] = mpj * phase_c * c + mqj * s;
        m[(q, j)] = -mpj * phase_c * s + mqj * c;
    }
    for i in 0..v.nrows() {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * phase * c + viq * s;
        v[(i, q)] = -vip * phase * s + viq * c;
    }
    // The rotation is exact up to rounding; pin the structural zeros.
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Render an `f64` with 17 significant digits (exact round-trip precision).
pub fn format_g17(x: f64) -> String {
    format!("{x:.16e}")
}
