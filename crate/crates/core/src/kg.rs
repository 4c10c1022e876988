//! Abstract Klein-Gordon layer: discrete operator triples (h₀, k), the
//! derived pencil p(z) = h + z(2k − z) and block Hamiltonian, gauge maps,
//! energy and charge forms, and resolvents — all as finite-dimensional
//! linear algebra over a mass-weighted inner product.
//!
//! h = h₀ − k² is derived, never stored: systems sharing a grid share one
//! dense h₀ behind an `Arc` and differ only in their (usually diagonal) k.

use crate::error::{Error, Result};
use crate::linalg;
use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Factorize, ReciprocalConditionNum, Solve};
use num_complex::Complex64 as C64;
use std::sync::Arc;

const SYM_TOL: f64 = 1e-12;

/// The operator k: multiplication operators use the diagonal fast path, but a
/// general (mass-symmetric) matrix is accepted.
#[derive(Debug, Clone)]
pub enum KOp {
    Diag(Array1<f64>),
    Dense(Array2<f64>),
}

impl KOp {
    pub fn as_diag(&self) -> Option<&Array1<f64>> {
        match self {
            KOp::Diag(d) => Some(d),
            KOp::Dense(_) => None,
        }
    }

    pub fn to_dense(&self, n: usize) -> Array2<f64> {
        match self {
            KOp::Diag(d) => Array2::from_diag(d),
            KOp::Dense(m) => {
                assert_eq!(m.nrows(), n);
                m.clone()
            }
        }
    }
}

/// A discretized Klein-Gordon system: h₀ and k symmetric with respect to the
/// mass inner product, h = h₀ − k² derived, a decaying weight w⁻¹ and the
/// quadrature mass weights of the grid.
#[derive(Debug, Clone)]
pub struct KGSystem {
    pub dim: usize,
    pub h0: Arc<Array2<f64>>,
    pub k: KOp,
    /// Weight vector representing w⁻¹.
    pub w_inv: Array1<f64>,
    /// Operator norm of k in the mass inner product.
    pub k_norm: f64,
    /// Diagonal mass-matrix weights of the discrete inner product.
    pub mass: Array1<f64>,
}

impl KGSystem {
    pub fn new(
        h0: Arc<Array2<f64>>,
        k: KOp,
        w_inv: Array1<f64>,
        mass: Array1<f64>,
    ) -> Result<Self> {
        let dim = h0.nrows();
        if w_inv.len() != dim || mass.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: mass.len() });
        }
        let asym = linalg::asymmetry(&h0, &mass);
        if asym > SYM_TOL {
            return Err(Error::SolverFailure(format!(
                "h0 not mass-symmetric: relative asymmetry {asym:.3e}"
            )));
        }
        let k_norm = match &k {
            KOp::Diag(d) => {
                if d.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: d.len() });
                }
                d.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
            }
            KOp::Dense(m) => {
                if m.nrows() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: m.nrows() });
                }
                let asym = linalg::asymmetry(m, &mass);
                if asym > SYM_TOL {
                    return Err(Error::SolverFailure(format!(
                        "k not mass-symmetric: relative asymmetry {asym:.3e}"
                    )));
                }
                let (kvals, _) = linalg::eigh_weighted(m, &mass);
                kvals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
            }
        };
        Ok(Self { dim, h0, k, w_inv, k_norm, mass })
    }

    /// Convenience constructor for a multiplication-type k.
    pub fn with_diag_k(
        h0: Array2<f64>,
        k_diag: Array1<f64>,
        w_inv: Array1<f64>,
        mass: Array1<f64>,
    ) -> Result<Self> {
        Self::new(Arc::new(h0), KOp::Diag(k_diag), w_inv, mass)
    }

    /// Apply a real matrix to a complex vector.
    pub fn apply_re(a: &Array2<f64>, u: &Array1<C64>) -> Array1<C64> {
        let n = a.nrows();
        let mut out = Array1::<C64>::zeros(n);
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            let row = a.row(i);
            for j in 0..n {
                acc += row[j] * u[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn k_apply(&self, u: &Array1<C64>) -> Array1<C64> {
        match &self.k {
            KOp::Diag(d) => {
                let mut out = u.clone();
                for i in 0..self.dim {
                    out[i] *= d[i];
                }
                out
            }
            KOp::Dense(m) => Self::apply_re(m, u),
        }
    }

    /// h u = h₀u − k(k u).
    pub fn h_apply(&self, u: &Array1<C64>) -> Array1<C64> {
        let mut out = self.h0_apply(u);
        let kku = self.k_apply(&self.k_apply(u));
        for i in 0..self.dim {
            out[i] -= kku[i];
        }
        out
    }

    pub fn h0_apply(&self, u: &Array1<C64>) -> Array1<C64> {
        Self::apply_re(&self.h0, u)
    }

    /// Materialize h = h₀ − k² as a dense matrix.
    pub fn h_matrix(&self) -> Array2<f64> {
        match &self.k {
            KOp::Diag(d) => {
                let mut h = (*self.h0).clone();
                for i in 0..self.dim {
                    h[[i, i]] -= d[i] * d[i];
                }
                h
            }
            KOp::Dense(m) => &*self.h0 - &m.dot(m),
        }
    }

    /// h₀^{1/2} via the weighted eigendecomposition (dense; small systems).
    pub fn h0_sqrt(&self) -> Array2<f64> {
        linalg::sqrt_psd(&self.h0, &self.mass, 0.0)
    }

    /// p(ℓ) = h₀ − (k−ℓ)² as a real matrix.
    pub fn p_real(&self, ell: f64) -> Array2<f64> {
        let mut p = (*self.h0).clone();
        match &self.k {
            KOp::Diag(d) => {
                for i in 0..self.dim {
                    let v = d[i] - ell;
                    p[[i, i]] -= v * v;
                }
            }
            KOp::Dense(m) => {
                let mut kl = m.clone();
                for i in 0..self.dim {
                    kl[[i, i]] -= ell;
                }
                p -= &kl.dot(&kl);
            }
        }
        p
    }

    /// (p(ℓ)u | v) without materializing p(ℓ): (h₀u|v) − ((k−ℓ)u|(k−ℓ)v).
    pub fn p_form(&self, ell: f64, u: &Array1<C64>, v: &Array1<C64>) -> C64 {
        let h0v = self.h0_apply(v);
        let mut ku = self.k_apply(u);
        let mut kv = self.k_apply(v);
        for i in 0..self.dim {
            ku[i] -= ell * u[i];
            kv[i] -= ell * v[i];
        }
        linalg::inner(&self.mass, u.as_slice().unwrap(), h0v.as_slice().unwrap())
            - linalg::inner(&self.mass, ku.as_slice().unwrap(), kv.as_slice().unwrap())
    }

    /// p(z) = h₀ − (k−z)² as a complex matrix.
    pub fn p_complex(&self, z: C64) -> Array2<C64> {
        let mut p = linalg::to_complex(&self.h0);
        match &self.k {
            KOp::Diag(d) => {
                for i in 0..self.dim {
                    let v = d[i] - z;
                    p[[i, i]] -= v * v;
                }
            }
            KOp::Dense(m) => {
                let mut kl = linalg::to_complex(m);
                for i in 0..self.dim {
                    kl[[i, i]] -= z;
                }
                p -= &kl.dot(&kl);
            }
        }
        p
    }

    /// The block Hamiltonian H = [[0, 1],[h, 2k]] as a real 2N×2N matrix.
    pub fn hamiltonian_matrix(&self) -> Array2<f64> {
        let n = self.dim;
        let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
        for i in 0..n {
            m[[i, n + i]] = 1.0;
        }
        let h = self.h_matrix();
        m.slice_mut(s![n.., ..n]).assign(&h);
        let twok = 2.0 * &self.k.to_dense(n);
        m.slice_mut(s![n.., n..]).assign(&twok);
        m
    }

    /// K̂ = [[k, 1],[h₀, k]], the untwisted companion of (h₀, k).
    pub fn k_hat_matrix(&self) -> Array2<f64> {
        let n = self.dim;
        let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
        let kd = self.k.to_dense(n);
        m.slice_mut(s![..n, ..n]).assign(&kd);
        for i in 0..n {
            m[[i, n + i]] = 1.0;
        }
        m.slice_mut(s![n.., ..n]).assign(&self.h0);
        m.slice_mut(s![n.., n..]).assign(&kd);
        m
    }

    /// H applied to a state: H(u₀,u₁) = (u₁, h u₀ + 2k u₁).
    pub fn h_state(&self, psi: &State) -> State {
        let top = psi.u1.clone();
        let mut bot = self.h_apply(&psi.u0);
        let ku1 = self.k_apply(&psi.u1);
        for i in 0..self.dim {
            bot[i] += 2.0 * ku1[i];
        }
        State { u0: top, u1: bot }
    }

    /// Mass-doubled weights for 2N block vectors.
    pub fn mass2(&self) -> Array1<f64> {
        let mut m = Array1::<f64>::zeros(2 * self.dim);
        for i in 0..self.dim {
            m[i] = self.mass[i];
            m[self.dim + i] = self.mass[i];
        }
        m
    }
}

/// First-order state Ψ = (u₀, u₁) with u₁ = −i ∂ₜu for Cauchy data (u, ∂ₜu).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u0: Array1<C64>,
    pub u1: Array1<C64>,
}

impl State {
    pub fn new(u0: Array1<C64>, u1: Array1<C64>) -> Self {
        assert_eq!(u0.len(), u1.len());
        Self { u0, u1 }
    }

    pub fn zeros(n: usize) -> Self {
        Self { u0: Array1::zeros(n), u1: Array1::zeros(n) }
    }

    /// From second-order Cauchy data (u, ∂ₜu): Ψ = (u, −i ∂ₜu).
    pub fn from_cauchy(u0: Array1<C64>, dtu: Array1<C64>) -> Self {
        let mi = C64::new(0.0, -1.0);
        Self { u0, u1: dtu.mapv(|v| mi * v) }
    }

    /// Back to (u, ∂ₜu): ∂ₜu = i u₁.
    pub fn to_cauchy(&self) -> (Array1<C64>, Array1<C64>) {
        let i = C64::new(0.0, 1.0);
        (self.u0.clone(), self.u1.mapv(|v| i * v))
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn scale(&self, c: C64) -> State {
        State { u0: self.u0.mapv(|v| c * v), u1: self.u1.mapv(|v| c * v) }
    }

    pub fn add(&self, other: &State) -> State {
        State { u0: &self.u0 + &other.u0, u1: &self.u1 + &other.u1 }
    }

    pub fn sub(&self, other: &State) -> State {
        State { u0: &self.u0 - &other.u0, u1: &self.u1 - &other.u1 }
    }

    /// Pointwise multiplication by a real cutoff/profile vector.
    pub fn mul_pointwise(&self, f: &[f64]) -> State {
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.u0[i] *= f[i];
            out.u1[i] *= f[i];
        }
        out
    }

    /// Flatten to a 2N block vector (u₀ stacked over u₁).
    pub fn to_block(&self) -> Array1<C64> {
        let n = self.dim();
        let mut v = Array1::<C64>::zeros(2 * n);
        v.slice_mut(s![..n]).assign(&self.u0);
        v.slice_mut(s![n..]).assign(&self.u1);
        v
    }

    pub fn from_block(v: &Array1<C64>) -> State {
        let n = v.len() / 2;
        State { u0: v.slice(s![..n]).to_owned(), u1: v.slice(s![n..]).to_owned() }
    }
}

/// p(z)u computed as h u + z(2k u − z u).
pub fn pencil_apply(sys: &KGSystem, z: C64, u: &Array1<C64>) -> Result<Array1<C64>> {
    if u.len() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: u.len() });
    }
    let mut out = sys.h_apply(u);
    let ku = sys.k_apply(u);
    for i in 0..sys.dim {
        out[i] += z * (2.0 * ku[i] - z * u[i]);
    }
    Ok(out)
}

/// Φ(ℓ) for scalar ℓ: (u₀, u₁) ↦ (u₀, ℓu₀ + u₁).
pub fn phi_scalar(ell: f64, psi: &State) -> State {
    let mut u1 = psi.u1.clone();
    for i in 0..psi.dim() {
        u1[i] += ell * psi.u0[i];
    }
    State { u0: psi.u0.clone(), u1 }
}

/// Φ(±k) with the system's operator k: (u₀, u₁) ↦ (u₀, u₁ ± k u₀).
pub fn phi_k(sys: &KGSystem, sign: f64, psi: &State) -> State {
    let ku0 = sys.k_apply(&psi.u0);
    let mut u1 = psi.u1.clone();
    for i in 0..sys.dim {
        u1[i] += sign * ku0[i];
    }
    State { u0: psi.u0.clone(), u1 }
}

/// The twisted charge ⟨u,v⟩ = (u₀|v₁−kv₀) + (u₁−ku₀|v₀), the quadratic
/// invariant conserved by the flow for every (h, k).
pub fn charge(sys: &KGSystem, u: &State, v: &State) -> Result<C64> {
    if u.dim() != sys.dim || v.dim() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: u.dim() });
    }
    let kv0 = sys.k_apply(&v.u0);
    let ku0 = sys.k_apply(&u.u0);
    let a: Vec<C64> = (0..sys.dim).map(|i| v.u1[i] - kv0[i]).collect();
    let b: Vec<C64> = (0..sys.dim).map(|i| u.u1[i] - ku0[i]).collect();
    Ok(linalg::inner(&sys.mass, u.u0.as_slice().unwrap(), &a)
        + linalg::inner(&sys.mass, &b, v.u0.as_slice().unwrap()))
}

/// The plain charge q(u,v) = (u₀|v₁) + (u₁|v₀). Conserved only when k = 0;
/// exposed for diagnostics that explicitly ask for it.
pub fn charge_plain(sys: &KGSystem, u: &State, v: &State) -> Result<C64> {
    if u.dim() != sys.dim || v.dim() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: u.dim() });
    }
    Ok(linalg::inner(&sys.mass, u.u0.as_slice().unwrap(), v.u1.as_slice().unwrap())
        + linalg::inner(&sys.mass, u.u1.as_slice().unwrap(), v.u0.as_slice().unwrap()))
}

/// Homogeneous and inhomogeneous energy norms (squared):
/// hom = ‖u₁−ku₀‖² + (h₀u₀|u₀), inhom = hom + ‖u₀‖².
pub struct EnergyNorms {
    pub hom: f64,
    pub inhom: f64,
}

pub fn energy_norms(sys: &KGSystem, u: &State) -> EnergyNorms {
    let ku0 = sys.k_apply(&u.u0);
    let d: Vec<C64> = (0..sys.dim).map(|i| u.u1[i] - ku0[i]).collect();
    let h0u = sys.h0_apply(&u.u0);
    let hom = linalg::wnorm(&sys.mass, &d).powi(2)
        + linalg::inner(&sys.mass, u.u0.as_slice().unwrap(), h0u.as_slice().unwrap()).re;
    let inhom = hom + linalg::wnorm(&sys.mass, u.u0.as_slice().unwrap()).powi(2);
    EnergyNorms { hom, inhom }
}

/// The ℓ-indexed conserved forms ⟨u|v⟩ℓ = (u₁−ℓu₀|v₁−ℓv₀) + (p(ℓ)u₀|v₀).
pub fn ell_form(sys: &KGSystem, ell: f64, u: &State, v: &State) -> C64 {
    let n = sys.dim;
    let du: Vec<C64> = (0..n).map(|i| u.u1[i] - ell * u.u0[i]).collect();
    let dv: Vec<C64> = (0..n).map(|i| v.u1[i] - ell * v.u0[i]).collect();
    linalg::inner(&sys.mass, &du, &dv) + sys.p_form(ell, &u.u0, &v.u0)
}

/// Gauge transform by a scalar ℓ: the returned system has k′ = k − ℓ,
/// h′ = p(ℓ), h₀′ = h₀, so that Φ(−ℓ)HΦ(ℓ) = H′ + ℓ and hence
/// e^{itH} = e^{iℓt}Φ(ℓ)e^{itH′}Φ(−ℓ).
pub fn gauge_transform(sys: &KGSystem, ell: f64) -> KGSystem {
    let k = match &sys.k {
        KOp::Diag(d) => KOp::Diag(d.mapv(|v| v - ell)),
        KOp::Dense(m) => {
            let mut k = m.clone();
            for i in 0..sys.dim {
                k[[i, i]] -= ell;
            }
            KOp::Dense(k)
        }
    };
    KGSystem::new(sys.h0.clone(), k, sys.w_inv.clone(), sys.mass.clone())
        .expect("gauge transform preserves symmetry")
}

/// The resolvent R(z) = (H − z)⁻¹ as a dense complex 2N×2N matrix, through
/// the pencil: R(z) = p⁻¹(z)·[[z−2k, 1],[h, z]].
pub fn resolvent(sys: &KGSystem, z: C64) -> Result<Array2<C64>> {
    let n = sys.dim;
    let p = sys.p_complex(z);
    let lu = p.factorize().map_err(|_| Error::PencilSingular(z))?;
    let rc = lu
        .rcond()
        .map_err(|e| Error::SolverFailure(format!("rcond: {e}")))?;
    if rc < 1e-13 {
        return Err(Error::PencilSingular(z));
    }
    // top block rows: p⁻¹·[z−2k, 1]
    let kd = sys.k.to_dense(n);
    let mut rhs = Array2::<C64>::zeros((n, 2 * n));
    for j in 0..n {
        for i in 0..n {
            rhs[[i, j]] = C64::new(-2.0 * kd[[i, j]], 0.0);
        }
        rhs[[j, j]] += z;
        rhs[[j, n + j]] = C64::new(1.0, 0.0);
    }
    let mut top = Array2::<C64>::zeros((n, 2 * n));
    for j in 0..2 * n {
        let col = rhs.column(j).to_owned();
        let x = lu
            .solve(&col)
            .map_err(|e| Error::SolverFailure(format!("pencil solve: {e}")))?;
        top.column_mut(j).assign(&x);
    }
    // bottom rows from y = f + z x
    let mut r = Array2::<C64>::zeros((2 * n, 2 * n));
    r.slice_mut(s![..n, ..]).assign(&top);
    for j in 0..2 * n {
        for i in 0..n {
            r[[n + i, j]] = z * top[[i, j]];
        }
    }
    for j in 0..n {
        r[[n + j, j]] += 1.0;
    }
    Ok(r)
}

/// Apply R(z) = (H−z)⁻¹ to a single state via one pencil solve.
pub fn resolvent_apply(sys: &KGSystem, z: C64, psi: &State) -> Result<State> {
    let n = sys.dim;
    let p = sys.p_complex(z);
    let lu = p.factorize().map_err(|_| Error::PencilSingular(z))?;
    let rc = lu
        .rcond()
        .map_err(|e| Error::SolverFailure(format!("rcond: {e}")))?;
    if rc < 1e-13 {
        return Err(Error::PencilSingular(z));
    }
    // x = p⁻¹(g + (z−2k)f), y = f + z x
    let kf = sys.k_apply(&psi.u0);
    let mut rhs = psi.u1.clone();
    for i in 0..n {
        rhs[i] += z * psi.u0[i] - 2.0 * kf[i];
    }
    let x = lu
        .solve(&rhs)
        .map_err(|e| Error::SolverFailure(format!("pencil solve: {e}")))?;
    let mut y = psi.u0.clone();
    for i in 0..n {
        y[i] += z * x[i];
    }
    Ok(State { u0: x, u1: y })
}

/// The untwisted companion resolvent (K̂ − z)⁻¹ = Φ(−k)(Ĥ−z)⁻¹Φ(k).
pub fn resolvent_k_hat(sys: &KGSystem, z: C64) -> Result<Array2<C64>> {
    let n = sys.dim;
    let r = resolvent(sys, z)?;
    let kd = sys.k.to_dense(n);
    let mut phi = Array2::<C64>::zeros((2 * n, 2 * n));
    for i in 0..2 * n {
        phi[[i, i]] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        for j in 0..n {
            phi[[n + i, j]] = C64::new(kd[[i, j]], 0.0);
        }
    }
    let mut phim = phi.clone();
    for i in 0..n {
        for j in 0..n {
            phim[[n + i, j]] = -phi[[n + i, j]];
        }
    }
    Ok(phim.dot(&r).dot(&phi))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::linalg::{fro, to_complex};

    #[test]
    fn pencil_matches_brute_force() {
        for sys in [random_system(4, 1, false), random_system_dense_k(4, 2)] {
            let z = C64::new(1.0, 1.0);
            let u = random_state(4, 2).u0;
            let got = pencil_apply(&sys, z, &u).unwrap();
            // independent oracle: (h₀ − (k−z)²)u entrywise
            let kc = to_complex(&sys.k.to_dense(4));
            let mut kz = kc.clone();
            for i in 0..4 {
                kz[[i, i]] -= z;
            }
            let m = to_complex(&sys.h0) - kz.dot(&kz);
            let want = m.dot(&u);
            for i in 0..4 {
                assert!((got[i] - want[i]).norm() < 1e-13 * (1.0 + want[i].norm()));
            }
            // z = 0 reduces to h
            let got0 = pencil_apply(&sys, C64::new(0.0, 0.0), &u).unwrap();
            let want0 = sys.h_apply(&u);
            for i in 0..4 {
                assert!((got0[i] - want0[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn hamiltonian_factorization_identity() {
        let sys = random_system(3, 3, false);
        let h = sys.hamiltonian_matrix();
        let khat = sys.k_hat_matrix();
        let n = 3;
        let kd = sys.k.to_dense(n);
        let mut phip = Array2::<f64>::eye(2 * n);
        phip.slice_mut(s![n.., ..n]).assign(&kd);
        let mut phim = Array2::<f64>::eye(2 * n);
        let negk = -&kd;
        phim.slice_mut(s![n.., ..n]).assign(&negk);
        let prod = phip.dot(&khat).dot(&phim);
        let diff = &prod - &h;
        let rel = diff.iter().map(|x| x * x).sum::<f64>().sqrt()
            / h.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(rel < 1e-12, "factorization defect {rel:.3e}");
    }

    #[test]
    fn companion_eigenpair_identity() {
        // (u, zu) is an eigenvector of H when p(z)u = 0: z = k ± √h₀ in 1D
        let h0 = ndarray::array![[4.0]];
        let kd = ndarray::array![0.5];
        let sys = KGSystem::with_diag_k(
            h0,
            kd,
            Array1::from_elem(1, 1.0),
            Array1::from_elem(1, 1.0),
        )
        .unwrap();
        let z = C64::new(2.5, 0.0);
        let u = Array1::from_elem(1, C64::new(1.0, 0.0));
        let psi = State::new(u.clone(), u.mapv(|v| z * v));
        let hpsi = sys.h_state(&psi);
        let want = psi.scale(z);
        assert!((hpsi.u0[0] - want.u0[0]).norm() < 1e-14);
        assert!((hpsi.u1[0] - want.u1[0]).norm() < 1e-14);
    }

    #[test]
    fn phi_map_group_laws() {
        let psi = random_state(5, 7);
        let id = phi_scalar(0.0, &psi);
        assert_eq!(id, psi);
        let fwd = phi_scalar(0.7, &psi);
        assert!((fwd.u1[2] - (psi.u1[2] + 0.7 * psi.u0[2])).norm() < 1e-15);
        let back = phi_scalar(-0.7, &fwd);
        for i in 0..5 {
            assert!((back.u1[i] - psi.u1[i]).norm() < 1e-14);
        }
        let sys = random_system(5, 8, false);
        let roundtrip = phi_k(&sys, -1.0, &phi_k(&sys, 1.0, &psi));
        for i in 0..5 {
            assert!((roundtrip.u1[i] - psi.u1[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn charge_examples_and_hermiticity() {
        let n = 3;
        let h0 = Array2::<f64>::eye(n);
        let sys = KGSystem::with_diag_k(
            h0,
            Array1::zeros(n),
            Array1::from_elem(n, 1.0),
            Array1::from_elem(n, 1.0),
        )
        .unwrap();
        let e1 = {
            let mut v = Array1::<C64>::zeros(n);
            v[0] = C64::new(1.0, 0.0);
            v
        };
        let u = State::new(e1.clone(), Array1::zeros(n));
        assert!(charge(&sys, &u, &u).unwrap().norm() < 1e-15);
        let v = State::new(e1.clone(), e1.clone());
        let c = charge(&sys, &v, &v).unwrap();
        assert!((c - C64::new(2.0, 0.0)).norm() < 1e-15);
        // hermiticity on a random pair of a random system
        let sys = random_system(6, 9, false);
        let a = random_state(6, 10);
        let b = random_state(6, 11);
        let ab = charge(&sys, &a, &b).unwrap();
        let ba = charge(&sys, &b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-13);
        // diagonal is real
        assert!(charge(&sys, &a, &a).unwrap().im.abs() < 1e-13);
        let qab = charge_plain(&sys, &a, &b).unwrap();
        let qba = charge_plain(&sys, &b, &a).unwrap();
        assert!((qab - qba.conj()).norm() < 1e-13);
    }

    #[test]
    fn energy_norm_identities() {
        let sys = random_system(5, 12, false);
        let psi = random_state(5, 13);
        let e = energy_norms(&sys, &psi);
        // inhom = hom + ‖u₀‖² exactly
        let n0 = linalg::wnorm(&sys.mass, psi.u0.as_slice().unwrap()).powi(2);
        assert!((e.inhom - e.hom - n0).abs() < 1e-12 * (1.0 + e.inhom.abs()));
        // hom from the twisted factorization: ‖h₀^½v₀‖² + ‖v₁‖², v = Φ(−k)ψ
        let v = phi_k(&sys, -1.0, &psi);
        let h0h = sys.h0_sqrt();
        let a = KGSystem::apply_re(&h0h, &v.u0);
        let alt = linalg::wnorm(&sys.mass, a.as_slice().unwrap()).powi(2)
            + linalg::wnorm(&sys.mass, v.u1.as_slice().unwrap()).powi(2);
        assert!((e.hom - alt).abs() < 1e-12 * (1.0 + e.hom.abs()));
        // (0, u₁) gives ‖u₁‖² for both
        let u = State::new(Array1::zeros(5), psi.u1.clone());
        let e = energy_norms(&sys, &u);
        let n1 = linalg::wnorm(&sys.mass, psi.u1.as_slice().unwrap()).powi(2);
        assert!((e.hom - n1).abs() < 1e-13 && (e.inhom - n1).abs() < 1e-12);
        // (u₀, ku₀) kills the first term
        let ku0 = sys.k_apply(&psi.u0);
        let u = State::new(psi.u0.clone(), ku0);
        let e = energy_norms(&sys, &u);
        let h0u = sys.h0_apply(&psi.u0);
        let want =
            linalg::inner(&sys.mass, psi.u0.as_slice().unwrap(), h0u.as_slice().unwrap()).re;
        assert!((e.hom - want).abs() < 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn ell_form_polarization() {
        let sys = random_system(5, 14, false);
        let psi = random_state(5, 15);
        for &ell in &[0.0, 0.4, -1.3] {
            let f = ell_form(&sys, ell, &psi, &psi);
            assert!(f.im.abs() < 1e-12, "diagonal real");
            // polarization oracle: ‖u₁−ℓu₀‖² + ‖h₀^½u₀‖² − ‖(k−ℓ)u₀‖²
            let n = sys.dim;
            let d: Vec<C64> = (0..n).map(|i| psi.u1[i] - ell * psi.u0[i]).collect();
            let h0h = sys.h0_sqrt();
            let hu = KGSystem::apply_re(&h0h, &psi.u0);
            let ku = sys.k_apply(&psi.u0);
            let kl: Vec<C64> = (0..n).map(|i| ku[i] - ell * psi.u0[i]).collect();
            let want = linalg::wnorm(&sys.mass, &d).powi(2)
                + linalg::wnorm(&sys.mass, hu.as_slice().unwrap()).powi(2)
                - linalg::wnorm(&sys.mass, &kl).powi(2);
            assert!((f.re - want).abs() < 1e-11 * (1.0 + want.abs()), "ell={ell}");
        }
        // ℓ = 0 diagonal is ‖u₁‖² + (hu₀|u₀)
        let f = ell_form(&sys, 0.0, &psi, &psi);
        let hu = sys.h_apply(&psi.u0);
        let want = linalg::wnorm(&sys.mass, psi.u1.as_slice().unwrap()).powi(2)
            + linalg::inner(&sys.mass, psi.u0.as_slice().unwrap(), hu.as_slice().unwrap()).re;
        assert!((f.re - want).abs() < 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn gauge_transform_identity() {
        let sys = random_system(4, 16, false);
        let ell = 0.7;
        let g = gauge_transform(&sys, ell);
        // k′ = k − ℓ, h′ = p(ℓ), h₀ unchanged
        let p_ell = sys.p_real(ell);
        let dh = &g.h_matrix() - &p_ell;
        assert!(dh.iter().all(|x| x.abs() < 1e-12));
        assert!(Arc::ptr_eq(&g.h0, &sys.h0));
        // Φ(−ℓ)HΦ(ℓ) = H′ + ℓ as 2N matrices
        let n = 4;
        let h = sys.hamiltonian_matrix();
        let mut phip = Array2::<f64>::eye(2 * n);
        for i in 0..n {
            phip[[n + i, i]] = ell;
        }
        let mut phim = Array2::<f64>::eye(2 * n);
        for i in 0..n {
            phim[[n + i, i]] = -ell;
        }
        let lhs = phim.dot(&h).dot(&phip);
        let mut rhs = g.hamiltonian_matrix();
        for i in 0..2 * n {
            rhs[[i, i]] += ell;
        }
        let diff = &lhs - &rhs;
        let rel = diff.iter().map(|x| x * x).sum::<f64>().sqrt()
            / lhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(rel < 1e-12, "gauge identity defect {rel:.3e}");
        // double transform restores
        let back = gauge_transform(&g, -ell);
        let dk = &back.k.to_dense(n) - &sys.k.to_dense(n);
        assert!(dk.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn resolvent_hand_case_and_residual() {
        // 1×1, k=0, h=1: R(i) = ½[[i,1],[1,i]]
        let sys = KGSystem::with_diag_k(
            ndarray::array![[1.0]],
            Array1::zeros(1),
            Array1::from_elem(1, 1.0),
            Array1::from_elem(1, 1.0),
        )
        .unwrap();
        let r = resolvent(&sys, C64::new(0.0, 1.0)).unwrap();
        let i = C64::new(0.0, 1.0);
        let want = [[0.5 * i, C64::new(0.5, 0.0)], [C64::new(0.5, 0.0), 0.5 * i]];
        for p in 0..2 {
            for q in 0..2 {
                assert!((r[[p, q]] - want[p][q]).norm() < 1e-14);
            }
        }
        // residual (H−z)R(z) = I on a random 5×5 (diag and dense k)
        for sys in [random_system(5, 20, false), random_system_dense_k(5, 22)] {
            let z = C64::new(2.0, 0.5);
            let r = resolvent(&sys, z).unwrap();
            let mut hz = to_complex(&sys.hamiltonian_matrix());
            for i in 0..10 {
                hz[[i, i]] -= z;
            }
            let prod = hz.dot(&r);
            let mut eye = Array2::<C64>::zeros((10, 10));
            for i in 0..10 {
                eye[[i, i]] = C64::new(1.0, 0.0);
            }
            assert!(fro(&(&prod - &eye)) < 1e-10 * fro(&r).max(1.0));
            // single-application path agrees with the matrix
            let psi = random_state(5, 23);
            let rp = resolvent_apply(&sys, z, &psi).unwrap();
            let rb = r.dot(&psi.to_block());
            let rpb = rp.to_block();
            for i in 0..10 {
                assert!((rb[i] - rpb[i]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn resolvent_singular_at_eigenvalue() {
        // h=1, k=0: spectrum {±1}; z=1 is singular
        let sys = KGSystem::with_diag_k(
            ndarray::array![[1.0]],
            Array1::zeros(1),
            Array1::from_elem(1, 1.0),
            Array1::from_elem(1, 1.0),
        )
        .unwrap();
        assert!(matches!(
            resolvent(&sys, C64::new(1.0, 0.0)),
            Err(Error::PencilSingular(_))
        ));
    }

    #[test]
    fn k_hat_resolvent_consistency() {
        let sys = random_system(4, 21, false);
        let z = C64::new(1.5, 1.0);
        let rk = resolvent_k_hat(&sys, z).unwrap();
        // oracle: direct inverse of (K̂ − z)
        let mut kz = to_complex(&sys.k_hat_matrix());
        for i in 0..8 {
            kz[[i, i]] -= z;
        }
        let prod = kz.dot(&rk);
        let mut defect = 0.0_f64;
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                defect = defect.max((prod[[i, j]] - want).norm());
            }
        }
        assert!(defect < 1e-10, "K-hat resolvent defect {defect:.3e}");
    }
}
