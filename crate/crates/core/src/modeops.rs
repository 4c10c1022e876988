//! Assembly of the fixed-angular-mode De Sitter Kerr operators on a tensor
//! grid: uniform radial (tortoise) nodes with Dirichlet walls at ±X and
//! Gauss-Legendre collocation in cosθ.
//!
//! All operators are returned as action matrices that are symmetric with
//! respect to the diagonal quadrature mass Δx·wθ; assembly goes through the
//! symmetric form matrix F (F_pq = m_p A_pq) so the symmetry is exact.

use crate::error::{Error, Result};
use crate::geometry::{delta_r, HorizonData, RWMap, SpacetimeParams};
use crate::kg::{KGSystem, KOp};
use crate::linalg;
use ndarray::{Array1, Array2};
use std::sync::Arc;

/// Dense-matrix dimension budget for a single assembled system.
pub const DENSE_BUDGET: usize = 6000;

/// Gauss-Legendre nodes (ascending) and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    // (P_n(x), P_n'(x)) by the three-term recurrence
    fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dxn = p / dp;
            x -= dxn;
            if dxn.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton guesses come out descending
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Barycentric differentiation matrix on arbitrary distinct nodes.
pub fn diff_matrix(nodes: &[f64]) -> Array2<f64> {
    let n = nodes.len();
    let mut wb = vec![1.0_f64; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                wb[j] *= nodes[j] - nodes[k];
            }
        }
        wb[j] = 1.0 / wb[j];
    }
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut rowsum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (wb[j] / wb[i]) / (nodes[i] - nodes[j]);
                d[[i, j]] = v;
                rowsum += v;
            }
        }
        d[[i, i]] = -rowsum;
    }
    d
}

/// Tensor grid for a fixed azimuthal mode n.
#[derive(Debug, Clone)]
pub struct ModeGrid {
    pub n: i32,
    /// Interior radial node count; walls at ±X carry Dirichlet conditions.
    pub nx: usize,
    pub x_span: f64,
    pub dx: f64,
    pub x_nodes: Vec<f64>,
    /// r(x) at the interior nodes.
    pub r_nodes: Vec<f64>,
    /// r(x) at the nx+1 flux midpoints (including the half-cells at the walls).
    pub r_mid: Vec<f64>,
    pub ntheta: usize,
    /// Gauss-Legendre nodes in c = cosθ, ascending.
    pub c_nodes: Vec<f64>,
    pub theta_nodes: Vec<f64>,
    pub w_theta: Vec<f64>,
    /// Quadrature mass Δx·wθ in grid ordering (x-major: idx = i·ntheta + j).
    pub mass: Array1<f64>,
}

impl ModeGrid {
    pub fn new(
        params: &SpacetimeParams,
        hor: &HorizonData,
        n: i32,
        nx: usize,
        ntheta: usize,
        x_span: f64,
    ) -> Result<Self> {
        if nx < 8 || ntheta < 4 || !(x_span > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "grid too small or degenerate: nx={nx} ntheta={ntheta} X={x_span}"
            )));
        }
        if nx * ntheta > DENSE_BUDGET {
            return Err(Error::BudgetExceeded(nx * ntheta, DENSE_BUDGET));
        }
        let dx = 2.0 * x_span / (nx + 1) as f64;
        let mut x_nodes = Vec::with_capacity(nx);
        let mut r_nodes = Vec::with_capacity(nx);
        for i in 1..=nx {
            let x = -x_span + i as f64 * dx;
            x_nodes.push(x);
            r_nodes.push(RWMap::r_of_x_scalar(params, hor, x)?);
        }
        let mut r_mid = Vec::with_capacity(nx + 1);
        for i in 0..=nx {
            let x = -x_span + (i as f64 + 0.5) * dx;
            r_mid.push(RWMap::r_of_x_scalar(params, hor, x)?);
        }
        let (c_nodes, w_theta) = gauss_legendre(ntheta);
        let theta_nodes: Vec<f64> = c_nodes.iter().map(|c| c.acos()).collect();
        let mut mass = Array1::<f64>::zeros(nx * ntheta);
        for i in 0..nx {
            for j in 0..ntheta {
                mass[i * ntheta + j] = dx * w_theta[j];
            }
        }
        Ok(Self {
            n,
            nx,
            x_span,
            dx,
            x_nodes,
            r_nodes,
            r_mid,
            ntheta,
            c_nodes,
            theta_nodes,
            w_theta,
            mass,
        })
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }

    pub fn dim(&self) -> usize {
        self.nx * self.ntheta
    }

    /// Decaying weight w⁻¹ = q(r(x)) replicated over θ.
    pub fn w_inv_2d(&self, hor: &HorizonData) -> Array1<f64> {
        let mut w = Array1::<f64>::zeros(self.dim());
        for i in 0..self.nx {
            let q = hor.q(self.r_nodes[i]);
            for j in 0..self.ntheta {
                w[self.idx(i, j)] = q;
            }
        }
        w
    }

    pub fn w_inv_1d(&self, hor: &HorizonData) -> Array1<f64> {
        Array1::from_iter(self.r_nodes.iter().map(|&r| hor.q(r)))
    }

    pub fn mass_1d(&self) -> Array1<f64> {
        Array1::from_elem(self.nx, self.dx)
    }
}

/// Symmetric form matrix of the angular operator
/// P = λ²n²/sin²θ − (1/sinθ)∂θ sinθ Δθ ∂θ on the Gauss-Legendre nodes:
/// S = Dᵀ·diag(w(1−c²)Δθ)·D + diag(w λ²n²/(1−c²)), so P = diag(1/w)·S.
pub fn sphere_form(params: &SpacetimeParams, grid: &ModeGrid) -> Array2<f64> {
    let nt = grid.ntheta;
    let d = diff_matrix(&grid.c_nodes);
    let lam = params.lambda_factor;
    let n2 = (grid.n as f64) * (grid.n as f64);
    let mut s = Array2::<f64>::zeros((nt, nt));
    let wmid: Vec<f64> = (0..nt)
        .map(|j| {
            let c = grid.c_nodes[j];
            grid.w_theta[j] * (1.0 - c * c) * params.delta_theta_c(c)
        })
        .collect();
    for j1 in 0..nt {
        for j2 in j1..nt {
            let mut acc = 0.0;
            for p in 0..nt {
                acc += d[[p, j1]] * wmid[p] * d[[p, j2]];
            }
            s[[j1, j2]] = acc;
            s[[j2, j1]] = acc;
        }
    }
    for j in 0..nt {
        let c = grid.c_nodes[j];
        s[[j, j]] += grid.w_theta[j] * lam * lam * n2 / (1.0 - c * c);
    }
    s
}

/// Angular action matrix P = diag(1/w)·S.
pub fn sphere_operator(params: &SpacetimeParams, grid: &ModeGrid) -> Array2<f64> {
    let s = sphere_form(params, grid);
    let nt = grid.ntheta;
    let mut p = s;
    for j1 in 0..nt {
        for j2 in 0..nt {
            p[[j1, j2]] /= grid.w_theta[j1];
        }
    }
    p
}

/// Eigenvalues (ascending) and w-orthonormal eigenvectors of P.
pub fn angular_decomposition(
    params: &SpacetimeParams,
    grid: &ModeGrid,
) -> (Array1<f64>, Array2<f64>) {
    let p = sphere_operator(params, grid);
    let w = Array1::from_vec(grid.w_theta.clone());
    linalg::eigh_weighted(&p, &w)
}

/// The asymptotic rotation ℓ = (Ω₊ − Ω₋)·n carried by the left (inner
/// horizon) end after rotating the right end to zero.
pub fn asymptotic_rotation(hor: &HorizonData, n: i32) -> f64 {
    (hor.omega_plus - hor.omega_minus) * n as f64
}

fn radial_flux_into(
    f: &mut Array2<f64>,
    grid: &ModeGrid,
    j: usize,
    wj: f64,
    b: &[f64],
    c_mid: &[f64],
) {
    // −b ∂ₓ c(x) ∂ₓ b in flux form with Dirichlet walls; contributes the
    // symmetric form dx·wθ·b_i L_ij b_j.
    let dx = grid.dx;
    let scale = wj / dx;
    for i in 0..grid.nx {
        let p = grid.idx(i, j);
        f[[p, p]] += scale * b[i] * b[i] * (c_mid[i] + c_mid[i + 1]);
        if i + 1 < grid.nx {
            let q = grid.idx(i + 1, j);
            let v = -scale * b[i] * b[i + 1] * c_mid[i + 1];
            f[[p, q]] += v;
            f[[q, p]] += v;
        }
    }
}

/// The full mode operator pair (h₀ⁿ, kⁿ) on the 2D grid, with the right
/// (cosmological-horizon) end rotated to zero rotation.
pub fn assemble_full_mode(
    params: &SpacetimeParams,
    hor: &HorizonData,
    grid: &ModeGrid,
) -> Result<KGSystem> {
    let (nx, nt) = (grid.nx, grid.ntheta);
    let ndim = grid.dim();
    let a = params.a;
    let a2 = a * a;
    let lam = params.lambda_factor;
    let nf = grid.n as f64;
    let m2 = params.mass_field * params.mass_field;
    let s = sphere_form(params, grid);

    let c_mid: Vec<f64> = grid.r_mid.iter().map(|&r| r * r + a2).collect();
    let mut f = Array2::<f64>::zeros((ndim, ndim));

    // radial part: −b ∂ₓ (r²+a²) ∂ₓ b, b = √((r²+a²)Δθ)/σ, per latitude
    for j in 0..nt {
        let dth = params.delta_theta_c(grid.c_nodes[j]);
        let th = grid.theta_nodes[j];
        let b: Vec<f64> = (0..nx)
            .map(|i| {
                let r = grid.r_nodes[i];
                (((r * r + a2) * dth) / params.sigma2(r, th)).sqrt()
            })
            .collect();
        radial_flux_into(&mut f, grid, j, grid.w_theta[j], &b, &c_mid);
    }

    // angular part g P g, g = √(ΔrΔθ)/(λσ), plus diagonal potentials
    for i in 0..nx {
        let r = grid.r_nodes[i];
        let dr = delta_r(params, r);
        let g: Vec<f64> = (0..nt)
            .map(|j| {
                let dth = params.delta_theta_c(grid.c_nodes[j]);
                (dr * dth).sqrt() / (lam * params.sigma2(r, grid.theta_nodes[j]).sqrt())
            })
            .collect();
        for j1 in 0..nt {
            let p1 = grid.idx(i, j1);
            for j2 in j1..nt {
                let p2 = grid.idx(i, j2);
                let v = grid.dx * g[j1] * s[[j1, j2]] * g[j2];
                f[[p1, p2]] += v;
                if j1 != j2 {
                    f[[p2, p1]] += v;
                }
            }
        }
        for j in 0..nt {
            let c = grid.c_nodes[j];
            let th = grid.theta_nodes[j];
            let dth = params.delta_theta_c(c);
            let sig2 = params.sigma2(r, th);
            let rho2 = params.rho2(r, th);
            // n²(ρ⁴ − σ²)ΔrΔθ / (σ⁴ sin²θ)
            let v1 = nf * nf * (rho2 * rho2 - sig2) * dr * dth / (sig2 * sig2 * (1.0 - c * c));
            // ρ²ΔrΔθ m² / (λ²σ²)
            let vm = rho2 * dr * dth * m2 / (lam * lam * sig2);
            let p = grid.idx(i, j);
            f[[p, p]] += grid.dx * grid.w_theta[j] * (v1 + vm);
        }
    }

    // action matrix from the form matrix
    let mut h0 = f;
    for p in 0..ndim {
        let mp = grid.mass[p];
        for q in 0..ndim {
            h0[[p, q]] /= mp;
        }
    }

    // kⁿ = (a/(r₊²+a²) + a(Δr − (r²+a²)Δθ)/σ²)·n
    let mut kd = Array1::<f64>::zeros(ndim);
    for i in 0..nx {
        let r = grid.r_nodes[i];
        let dr = delta_r(params, r);
        for j in 0..nt {
            let dth = params.delta_theta_c(grid.c_nodes[j]);
            let sig2 = params.sigma2(r, grid.theta_nodes[j]);
            kd[grid.idx(i, j)] =
                nf * (hor.omega_plus + a * (dr - (r * r + a2) * dth) / sig2);
        }
    }

    KGSystem::with_diag_k(h0, kd, grid.w_inv_2d(hor), grid.mass.clone())
}

/// Separable 1D systems, one per supplied angular eigenvalue λ_q:
/// h₀ = −bₛ∂ₓ(r²+a²)∂ₓbₛ + g₀²λ_q + Δr m²/(λ²(r²+a²)),
/// bₛ = 1/√(r²+a²), g₀ = √Δr/(λ(r²+a²)), k = (a/(r₊²+a²) − a/(r²+a²))·n.
pub fn assemble_separable(
    params: &SpacetimeParams,
    hor: &HorizonData,
    grid: &ModeGrid,
    lambda_qs: &[f64],
) -> Result<Vec<KGSystem>> {
    let nx = grid.nx;
    let a2 = params.a * params.a;
    let lam = params.lambda_factor;
    let m2 = params.mass_field * params.mass_field;
    let nf = grid.n as f64;
    let dx = grid.dx;
    let c_mid: Vec<f64> = grid.r_mid.iter().map(|&r| r * r + a2).collect();
    let b: Vec<f64> = grid.r_nodes.iter().map(|&r| 1.0 / (r * r + a2).sqrt()).collect();
    let kd = Array1::from_iter(
        grid.r_nodes
            .iter()
            .map(|&r| nf * (hor.omega_plus - params.a / (r * r + a2))),
    );
    let mut out = Vec::with_capacity(lambda_qs.len());
    for &lq in lambda_qs {
        let mut h0 = Array2::<f64>::zeros((nx, nx));
        for i in 0..nx {
            h0[[i, i]] = b[i] * b[i] * (c_mid[i] + c_mid[i + 1]) / (dx * dx);
            if i + 1 < nx {
                let v = -b[i] * b[i + 1] * c_mid[i + 1] / (dx * dx);
                h0[[i, i + 1]] = v;
                h0[[i + 1, i]] = v;
            }
        }
        for i in 0..nx {
            let r = grid.r_nodes[i];
            let dr = delta_r(params, r);
            let r2a = r * r + a2;
            let g0sq = dr / (lam * lam * r2a * r2a);
            h0[[i, i]] += g0sq * lq + dr * m2 / (lam * lam * r2a);
        }
        out.push(KGSystem::with_diag_k(
            h0,
            kd.clone(),
            grid.w_inv_1d(hor),
            grid.mass_1d(),
        )?);
    }
    Ok(out)
}

/// Smooth cutoff algebra on the radial grid: a normalized partition
/// i₋² + i₊² = 1 with transition width ε around x = 0, and outer plateaus
/// j± supported beyond ±2ε, so that j±i± = j± and i₊j₋ = i₋j₊ = 0 hold
/// exactly at the nodes.
#[derive(Debug, Clone)]
pub struct Cutoffs {
    pub eps: f64,
    pub r_scale: f64,
    pub i_plus: Vec<f64>,
    pub i_minus: Vec<f64>,
    pub j_plus: Vec<f64>,
    pub j_minus: Vec<f64>,
    /// Normalized wide bump ψ (∫ψ dx = 1) on the scale r_scale, for
    /// mean-subtraction regularizations.
    pub bump: Vec<f64>,
}

fn smoothstep(s: f64) -> f64 {
    // C^∞ monotone 0→1 on [0,1]
    fn blob(u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            (-1.0 / u).exp()
        }
    }
    let a = blob(s);
    let b = blob(1.0 - s);
    a / (a + b)
}

impl Cutoffs {
    pub fn build(x_nodes: &[f64], x_span: f64, eps: f64, r_scale: f64) -> Result<Self> {
        if !(eps > 0.0) || 4.0 * eps >= x_span {
            return Err(Error::SupportOverflow);
        }
        let n = x_nodes.len();
        let mut i_plus = vec![0.0; n];
        let mut i_minus = vec![0.0; n];
        let mut j_plus = vec![0.0; n];
        let mut j_minus = vec![0.0; n];
        let mut bump = vec![0.0; n];
        let mut bump_sum = 0.0;
        let dx = x_nodes[1] - x_nodes[0];
        for (p, &x) in x_nodes.iter().enumerate() {
            let cp = smoothstep((x + eps) / (2.0 * eps));
            let cm = smoothstep((-x + eps) / (2.0 * eps));
            let norm = (cp * cp + cm * cm).sqrt();
            i_plus[p] = cp / norm;
            i_minus[p] = cm / norm;
            j_plus[p] = smoothstep((x - 2.0 * eps) / (2.0 * eps));
            j_minus[p] = smoothstep((-x - 2.0 * eps) / (2.0 * eps));
            let s = x / r_scale;
            bump[p] = if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() } else { 0.0 };
            bump_sum += bump[p] * dx;
        }
        for v in bump.iter_mut() {
            *v /= bump_sum;
        }
        Ok(Self { eps, r_scale, i_plus, i_minus, j_plus, j_minus, bump })
    }

    /// Replicate a radial cutoff over the θ direction of a 2D grid.
    pub fn lift(values: &[f64], ntheta: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len() * ntheta);
        for &v in values {
            for _ in 0..ntheta {
                out.push(v);
            }
        }
        out
    }
}

/// Asymptotic and comparison systems derived from the full pair (h₀, k).
pub struct Asymptotics {
    /// (h₊, k₊) with k₊ = k − ℓj₋²; k₊ vanishes at both ends.
    pub plus: KGSystem,
    /// (h̃₋, k₋−ℓ), the gauged inner-end system with vanishing k at both ends.
    pub minus: KGSystem,
    /// (h₋, k₋) with k₋ = k + ℓj₊², used ungauged by the glued resolvent.
    pub minus_ungauged: KGSystem,
    /// Exactly solvable comparison dynamics at the outer end:
    /// h₊∞ = −∂ₓ² + (Δr/(r²+a²))P + Δrm²/(λ²(r²+a²)), k₊∞ = 0.
    pub comparison_plus: KGSystem,
    /// Inner-end comparison: h₋∞ = h₊∞ − ℓ², k₋∞ = ℓ.
    pub comparison_minus: KGSystem,
}

pub fn assemble_asymptotics(
    params: &SpacetimeParams,
    hor: &HorizonData,
    grid: &ModeGrid,
    full: &KGSystem,
    cutoffs: &Cutoffs,
) -> Result<Asymptotics> {
    let ndim = grid.dim();
    let ell = asymptotic_rotation(hor, grid.n);
    let kd = full
        .k
        .as_diag()
        .expect("full mode system has multiplication k")
        .clone();
    let jp2 = Cutoffs::lift(&cutoffs.j_plus, grid.ntheta);
    let jm2 = Cutoffs::lift(&cutoffs.j_minus, grid.ntheta);
    let mut k_plus = kd.clone();
    let mut k_minus = kd.clone();
    for p in 0..ndim {
        k_plus[p] -= ell * jm2[p] * jm2[p];
        k_minus[p] += ell * jp2[p] * jp2[p];
    }
    let k_minus_gauged = k_minus.mapv(|v| v - ell);
    let w2 = grid.w_inv_2d(hor);
    let plus = KGSystem::new(full.h0.clone(), KOp::Diag(k_plus), w2.clone(), grid.mass.clone())?;
    let minus = KGSystem::new(
        full.h0.clone(),
        KOp::Diag(k_minus_gauged),
        w2.clone(),
        grid.mass.clone(),
    )?;
    let minus_ungauged =
        KGSystem::new(full.h0.clone(), KOp::Diag(k_minus), w2.clone(), grid.mass.clone())?;

    // comparison h₀: −∂ₓ²⊗I + (Δr/(r²+a²))·P + Δrm²/(λ²(r²+a²))
    let (nx, nt) = (grid.nx, grid.ntheta);
    let a2 = params.a * params.a;
    let lam = params.lambda_factor;
    let m2 = params.mass_field * params.mass_field;
    let s = sphere_form(params, grid);
    let dx = grid.dx;
    let mut f = Array2::<f64>::zeros((ndim, ndim));
    for j in 0..nt {
        let scale = grid.w_theta[j] / dx;
        for i in 0..nx {
            let p = grid.idx(i, j);
            f[[p, p]] += scale * 2.0;
            if i + 1 < nx {
                let q = grid.idx(i + 1, j);
                f[[p, q]] -= scale;
                f[[q, p]] -= scale;
            }
        }
    }
    for i in 0..nx {
        let r = grid.r_nodes[i];
        let dr = delta_r(params, r);
        let r2a = r * r + a2;
        let qp = dr / r2a;
        for j1 in 0..nt {
            let p1 = grid.idx(i, j1);
            for j2 in j1..nt {
                let p2 = grid.idx(i, j2);
                let v = dx * qp * s[[j1, j2]];
                f[[p1, p2]] += v;
                if j1 != j2 {
                    f[[p2, p1]] += v;
                }
            }
        }
        let vm = dr * m2 / (lam * lam * r2a);
        for j in 0..nt {
            let p = grid.idx(i, j);
            f[[p, p]] += dx * grid.w_theta[j] * vm;
        }
    }
    let mut hcmp = f;
    for p in 0..ndim {
        let mp = grid.mass[p];
        for q in 0..ndim {
            hcmp[[p, q]] /= mp;
        }
    }
    let hcmp = Arc::new(hcmp);
    let comparison_plus = KGSystem::new(
        hcmp.clone(),
        KOp::Diag(Array1::zeros(ndim)),
        w2.clone(),
        grid.mass.clone(),
    )?;
    let comparison_minus = KGSystem::new(
        hcmp,
        KOp::Diag(Array1::from_elem(ndim, ell)),
        w2,
        grid.mass.clone(),
    )?;
    Ok(Asymptotics { plus, minus, minus_ungauged, comparison_plus, comparison_minus })
}

/// Constant-coefficient half-line profiles on the radial grid:
/// right (h = −∂ₓ², k = 0) and left (h = −∂ₓ² − ℓ², k = ℓ), sharing h₀.
pub fn assemble_profiles(
    hor: &HorizonData,
    grid: &ModeGrid,
) -> Result<(KGSystem, KGSystem)> {
    let nx = grid.nx;
    let ell = asymptotic_rotation(hor, grid.n);
    let dx2 = grid.dx * grid.dx;
    let mut h0 = Array2::<f64>::zeros((nx, nx));
    for i in 0..nx {
        h0[[i, i]] = 2.0 / dx2;
        if i + 1 < nx {
            h0[[i, i + 1]] = -1.0 / dx2;
            h0[[i + 1, i]] = -1.0 / dx2;
        }
    }
    let h0 = Arc::new(h0);
    let w = grid.w_inv_1d(hor);
    let right = KGSystem::new(
        h0.clone(),
        KOp::Diag(Array1::zeros(nx)),
        w.clone(),
        grid.mass_1d(),
    )?;
    let left = KGSystem::new(h0, KOp::Diag(Array1::from_elem(nx, ell)), w, grid.mass_1d())?;
    Ok((right, left))
}

/// Everything assembled for one (geometry, mode, grid) triple.
pub struct OperatorBundle {
    pub params: SpacetimeParams,
    pub horizons: HorizonData,
    pub grid: ModeGrid,
    pub full: KGSystem,
    pub angular_eigs: Array1<f64>,
    /// Columns are w-orthonormal angular eigenvectors.
    pub angular_vecs: Array2<f64>,
    pub separable_per_q: Vec<KGSystem>,
    pub asymptotics: Asymptotics,
    pub profile_right: KGSystem,
    pub profile_left: KGSystem,
    pub ell: f64,
    pub cutoffs: Cutoffs,
}

impl OperatorBundle {
    pub fn build(
        params: &SpacetimeParams,
        n: i32,
        nx: usize,
        ntheta: usize,
        x_span: f64,
        q_count: usize,
    ) -> Result<Self> {
        let hor = crate::geometry::find_horizons(params)?;
        let grid = ModeGrid::new(params, &hor, n, nx, ntheta, x_span)?;
        let full = assemble_full_mode(params, &hor, &grid)?;
        let (angular_eigs, angular_vecs) = angular_decomposition(params, &grid);
        let q_count = q_count.min(ntheta);
        let lams: Vec<f64> = angular_eigs.iter().take(q_count).copied().collect();
        let separable_per_q = assemble_separable(params, &hor, &grid, &lams)?;
        let cutoffs = Cutoffs::build(&grid.x_nodes, x_span, x_span / 8.0, x_span / 4.0)?;
        let asymptotics = assemble_asymptotics(params, &hor, &grid, &full, &cutoffs)?;
        let (profile_right, profile_left) = assemble_profiles(&hor, &grid)?;
        let ell = asymptotic_rotation(&hor, n);
        Ok(Self {
            params: *params,
            horizons: hor,
            grid,
            full,
            angular_eigs,
            angular_vecs,
            separable_per_q,
            asymptotics,
            profile_right,
            profile_left,
            ell,
            cutoffs,
        })
    }

    /// Smallest eigenvalue of h₀ relative to its norm (positivity check).
    pub fn h0_floor(&self) -> f64 {
        let (vals, _) = linalg::eigh_weighted(&self.full.h0, &self.full.mass);
        let top = vals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        vals[0] / top.max(1e-300)
    }
}
