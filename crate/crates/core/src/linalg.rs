//! Small dense linear-algebra helpers shared by the operator layers: the
//! mass-weighted inner product, symmetry checks, weighted eigendecompositions
//! and operator square roots, and weighted operator norms.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO, SVD};
use num_complex::Complex64 as C64;

/// Mass-weighted inner product (u|v) = Σ mᵢ conj(uᵢ) vᵢ (antilinear in u).
pub fn inner(mass: &Array1<f64>, u: &[C64], v: &[C64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..u.len() {
        s += mass[i] * u[i].conj() * v[i];
    }
    s
}

/// Mass-weighted norm.
pub fn wnorm(mass: &Array1<f64>, u: &[C64]) -> f64 {
    inner(mass, u, u).re.max(0.0).sqrt()
}

/// Relative asymmetry of A with respect to the mass inner product:
/// ‖MA − (MA)ᵀ‖_F / ‖MA‖_F.
pub fn asymmetry(a: &Array2<f64>, mass: &Array1<f64>) -> f64 {
    let n = a.nrows();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = mass[i] * a[[i, j]];
            let y = mass[j] * a[[j, i]];
            num += (x - y) * (x - y);
            den += x * x;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Eigendecomposition of an operator A symmetric w.r.t. the mass inner
/// product. Returns ascending eigenvalues and eigenvectors as columns,
/// mass-orthonormal, in the original (unweighted) coordinates.
pub fn eigh_weighted(a: &Array2<f64>, mass: &Array1<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let sq: Vec<f64> = mass.iter().map(|&m| m.sqrt()).collect();
    let mut s = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = sq[i] * a[[i, j]] / sq[j];
        }
    }
    // symmetrize against roundoff
    let st = s.t().to_owned();
    let s = 0.5 * (&s + &st);
    let (vals, vecs) = s.eigh(UPLO::Lower).expect("symmetric eigensolve");
    let mut v = vecs;
    for i in 0..n {
        for j in 0..n {
            v[[i, j]] /= sq[i];
        }
    }
    (vals, v)
}

/// Square root of a positive-semidefinite mass-symmetric operator; eigenvalues
/// below `floor` are clamped to zero.
pub fn sqrt_psd(a: &Array2<f64>, mass: &Array1<f64>, floor: f64) -> Array2<f64> {
    let n = a.nrows();
    let (vals, v) = eigh_weighted(a, mass);
    // A^{1/2} = V Λ^{1/2} V⁻¹ with V⁻¹ = Vᵀ M (mass-orthonormal columns)
    let mut out = Array2::<f64>::zeros((n, n));
    for q in 0..n {
        let lam = vals[q].max(floor).max(0.0).sqrt();
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = v[[i, q]] * lam;
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[[i, j]] += vi * v[[j, q]] * mass[j];
            }
        }
    }
    out
}

/// Largest singular value of a complex matrix (Euclidean operator norm).
pub fn opnorm(a: &Array2<C64>) -> f64 {
    let (_, s, _) = a.svd(false, false).expect("svd");
    s.iter().cloned().fold(0.0, f64::max)
}

/// Operator norm of A with respect to the mass inner product:
/// ‖M^{1/2} A M^{−1/2}‖₂.
pub fn weighted_opnorm(a: &Array2<C64>, mass: &Array1<f64>) -> f64 {
    let n = a.nrows();
    let sq: Vec<f64> = mass.iter().map(|&m| m.sqrt()).collect();
    let mut b = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = a[[i, j]] * (sq[i] / sq[j]);
        }
    }
    opnorm(&b)
}

/// Promote a real matrix to complex.
pub fn to_complex(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

/// Frobenius norm of a complex matrix.
pub fn fro(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
