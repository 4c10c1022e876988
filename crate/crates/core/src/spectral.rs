//! Non-selfadjoint spectral analysis of the block Hamiltonian: dense
//! eigensolves with pencil cross-checks, quadratic-pencil roots, weighted
//! resolvent scans as a resonance proxy, the two-ends glued-resolvent
//! identity, Riesz projectors and a clustered functional calculus.

use crate::error::{Error, Result};
use crate::kg::{resolvent, KGSystem};
use crate::linalg;
use crate::modeops::{Cutoffs, OperatorBundle, DENSE_BUDGET};
use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eig, Factorize, ReciprocalConditionNum, Solve};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Imaginary-part threshold below which an eigenvalue counts as real.
pub const REAL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub z: C64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<EigenPair>,
    /// Max over i of min over j of |z_i − conj(z_j)| / (1 + |z_i|).
    pub conjugation_pairing_error: f64,
    /// Number of eigenvalues with |Im z| > REAL_THRESHOLD.
    pub complex_count: usize,
    /// Max over eigenpairs of ‖p(z)Ψ₀‖ / ‖Ψ₀‖.
    pub pencil_cross_check: f64,
}

/// Full spectrum of H = [[0,1],[h,2k]] by a dense nonsymmetric eigensolve,
/// with per-pair residuals and the companion/pencil consistency number.
pub fn eig_hamiltonian(sys: &KGSystem) -> Result<SpectrumReport> {
    let n = sys.dim;
    if 2 * n > DENSE_BUDGET {
        return Err(Error::BudgetExceeded(2 * n, DENSE_BUDGET));
    }
    let h = sys.hamiltonian_matrix();
    let (vals, vecs) = h
        .eig()
        .map_err(|e| Error::SolverFailure(format!("dense eigensolve: {e}")))?;
    let m2 = sys.mass2();
    let hc = linalg::to_complex(&h);
    let mut pairs = Vec::with_capacity(2 * n);
    let mut pencil_max = 0.0_f64;
    let scale = {
        // ‖H‖ proxy for relative residuals
        let mut s = 0.0_f64;
        for v in h.iter() {
            s += v * v;
        }
        s.sqrt().max(1.0)
    };
    for idx in 0..2 * n {
        let z = vals[idx];
        let v = vecs.column(idx).to_owned();
        let hv = hc.dot(&v);
        let mut rnum = 0.0_f64;
        let mut vnorm = 0.0_f64;
        for i in 0..2 * n {
            rnum += m2[i] * (hv[i] - z * v[i]).norm_sqr();
            vnorm += m2[i] * v[i].norm_sqr();
        }
        let residual = (rnum / vnorm).sqrt() / scale;
        // companion equivalence: the top half solves p(z)Ψ₀ = 0
        let u0 = v.slice(s![..n]).to_owned();
        let u0n = linalg::wnorm(&sys.mass, u0.as_slice().unwrap());
        if u0n > 1e-12 * vnorm.sqrt() {
            let pu = crate::kg::pencil_apply(sys, z, &u0)?;
            let pn = linalg::wnorm(&sys.mass, pu.as_slice().unwrap());
            pencil_max = pencil_max.max(pn / (u0n * scale));
        }
        pairs.push(EigenPair { z, residual });
    }
    pairs.sort_by(|a, b| {
        (a.z.re, a.z.im)
            .partial_cmp(&(b.z.re, b.z.im))
            .unwrap()
    });
    let mut pairing = 0.0_f64;
    for a in &pairs {
        let mut best = f64::INFINITY;
        for b in &pairs {
            best = best.min((a.z - b.z.conj()).norm());
        }
        pairing = pairing.max(best / (1.0 + a.z.norm()));
    }
    let complex_count = pairs.iter().filter(|p| p.z.im.abs() > REAL_THRESHOLD).count();
    Ok(SpectrumReport {
        eigenvalues: pairs,
        conjugation_pairing_error: pairing,
        complex_count,
        pencil_cross_check: pencil_max,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchRegion {
    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }
}

/// Roots of det p(z) = det(h₀ − (k−z)²) inside the region, through the
/// alternative companion linearization [[2k, h],[1, 0]] (distinct ordering
/// from the Hamiltonian block form, serving as a cross-method check).
pub fn pencil_roots(sys: &KGSystem, region: SearchRegion) -> Result<Vec<C64>> {
    let n = sys.dim;
    if 2 * n > DENSE_BUDGET {
        return Err(Error::BudgetExceeded(2 * n, DENSE_BUDGET));
    }
    let h = sys.h_matrix();
    let kd = sys.k.to_dense(n);
    let mut c = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            c[[i, j]] = 2.0 * kd[[i, j]];
            c[[i, n + j]] = h[[i, j]];
        }
        c[[n + i, i]] = 1.0;
    }
    let (vals, _) = c
        .eig()
        .map_err(|e| Error::SolverFailure(format!("companion eigensolve: {e}")))?;
    let mut roots: Vec<C64> = vals.iter().copied().filter(|z| region.contains(*z)).collect();
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(roots)
}

/// Estimate the weighted operator norm of a dense complex matrix by a power
/// method on AᴴA in the mass inner product (20 iterations, 3 restarts).
pub fn estimate_opnorm(a: &Array2<C64>, mass2: &Array1<f64>, seed: u64) -> f64 {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..3 {
        let mut v =
            Array1::from_shape_fn(n, |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let mut sigma = 0.0_f64;
        for _ in 0..20 {
            // AᴴA in the weighted product: W⁻¹AᴴW·A
            let av = a.dot(&v);
            let mut wav = av.clone();
            for i in 0..n {
                wav[i] *= mass2[i];
            }
            let mut atav = Array1::<C64>::zeros(n);
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n {
                    acc += a[[j, i]].conj() * wav[j];
                }
                atav[i] = acc / mass2[i];
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += mass2[i] * (v[i].conj() * atav[i]).re;
                den += mass2[i] * v[i].norm_sqr();
            }
            sigma = (num / den).max(0.0).sqrt();
            let nrm = den.sqrt();
            v = atav.mapv(|x| x / nrm.max(1e-300));
        }
        best = best.max(sigma);
    }
    best
}

#[derive(Debug, Clone)]
pub struct ResonanceScan {
    pub lambda_grid: Vec<f64>,
    /// Decreasing imaginary offsets.
    pub delta_list: Vec<f64>,
    /// norm_table[[i, j]] = ‖w^{−ε} R(λ_i + iδ_j) w^{−ε}‖ estimate.
    pub norm_table: Array2<f64>,
    /// λ values whose norm grows ≥ growth_threshold from δ_max to δ_min.
    pub peak_candidates: Vec<f64>,
    pub growth_threshold: f64,
}

/// δ-scan of the weighted resolvent norms above the real axis. `weight` holds
/// the decaying weight values w^{−ε} at the grid nodes (length N, applied to
/// both components).
pub fn weighted_resolvent_scan(
    sys: &KGSystem,
    weight: &Array1<f64>,
    lambda_grid: &[f64],
    delta_list: &[f64],
    seed: u64,
) -> Result<ResonanceScan> {
    assert!(delta_list.windows(2).all(|w| w[0] > w[1]), "δ list must decrease");
    assert!(delta_list.iter().all(|&d| d > 0.0), "δ must stay above the axis");
    let n = sys.dim;
    let m2 = sys.mass2();
    let mut table = Array2::<f64>::zeros((lambda_grid.len(), delta_list.len()));
    for (i, &lam) in lambda_grid.iter().enumerate() {
        for (j, &del) in delta_list.iter().enumerate() {
            let z = C64::new(lam, del);
            let r = resolvent(sys, z)?;
            let mut wrw = r;
            for p in 0..2 * n {
                let wp = weight[p % n];
                for q in 0..2 * n {
                    wrw[[p, q]] *= wp * weight[q % n];
                }
            }
            table[[i, j]] = estimate_opnorm(&wrw, &m2, seed ^ ((i as u64) << 20) ^ j as u64);
        }
    }
    let growth_threshold = 10.0;
    let jlast = delta_list.len() - 1;
    let peak_candidates = lambda_grid
        .iter()
        .enumerate()
        .filter(|(i, _)| table[[*i, jlast]] >= growth_threshold * table[[*i, 0]])
        .map(|(_, &l)| l)
        .collect();
    Ok(ResonanceScan {
        lambda_grid: lambda_grid.to_vec(),
        delta_list: delta_list.to_vec(),
        norm_table: table,
        peak_candidates,
        growth_threshold,
    })
}

#[derive(Debug, Clone)]
pub struct GluedCheck {
    /// ‖R − Q(1+K)⁻¹‖_F / ‖R‖_F.
    pub residual: f64,
    /// Largest entry of the three blocks of [Ḣ, i±] that must vanish.
    pub commutator_triangular_defect: f64,
    /// ‖(1 + K₋j₋ + K₊j₊)(1 − K₋j₋ − K₊j₊) − 1‖_F.
    pub factor_inverse_defect: f64,
}

/// Core of the glued-resolvent identity R = Q(1+K)⁻¹ with
/// Q = i₋Ṙ₋i₋ + i₊Ṙ₊i₊ and K± = [[0,0],[[h,i±],0]]Ṙ±i±, for explicitly
/// supplied end systems and cutoffs (each of length N).
#[allow(clippy::too_many_arguments)]
pub fn glued_resolvent_parts(
    full: &KGSystem,
    plus: &KGSystem,
    minus: &KGSystem,
    i_plus: &[f64],
    i_minus: &[f64],
    j_plus: &[f64],
    j_minus: &[f64],
    z: C64,
) -> Result<GluedCheck> {
    let n = full.dim;
    let two = 2 * n;
    let rp = resolvent(plus, z)?;
    let rm = resolvent(minus, z)?;
    let lift = |v: &[f64], m: &mut Array2<C64>, right: bool, left: bool| {
        // scale columns (right) and/or rows (left) of m by the lifted cutoff
        for p in 0..two {
            for q in 0..two {
                let mut f = 1.0;
                if right {
                    f *= v[q % n];
                }
                if left {
                    f *= v[p % n];
                }
                m[[p, q]] *= f;
            }
        }
    };
    let mut qp = rp.clone();
    lift(i_plus, &mut qp, true, true);
    let mut qm = rm.clone();
    lift(i_minus, &mut qm, true, true);
    let qmat = &qp + &qm;

    let h = full.h_matrix();
    let comm = |cut: &[f64]| -> Array2<f64> {
        let mut c = Array2::<f64>::zeros((n, n));
        for p in 0..n {
            for q in 0..n {
                c[[p, q]] = h[[p, q]] * cut[q] - cut[p] * h[[p, q]];
            }
        }
        c
    };
    let kpart = |cut: &[f64], r: &Array2<C64>| -> Array2<C64> {
        let c = comm(cut);
        let mut ri = r.clone();
        lift(cut, &mut ri, true, false);
        // [[0,0],[C,0]]·ri : rows n.. get C · (top rows of ri)
        let mut out = Array2::<C64>::zeros((two, two));
        for p in 0..n {
            for q in 0..two {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..n {
                    if c[[p, m]] != 0.0 {
                        acc += c[[p, m]] * ri[[m, q]];
                    }
                }
                out[[n + p, q]] = acc;
            }
        }
        out
    };
    let kp = kpart(i_plus, &rp);
    let km = kpart(i_minus, &rm);
    let kmat = &kp + &km;
    let mut one_k = kmat.clone();
    for i in 0..two {
        one_k[[i, i]] += 1.0;
    }
    let lu = one_k
        .factorize()
        .map_err(|_| Error::IllConditioned(z))?;
    let rc = lu.rcond().map_err(|e| Error::SolverFailure(format!("rcond: {e}")))?;
    if rc < 1e-10 {
        return Err(Error::IllConditioned(z));
    }
    // R − Q(1+K)⁻¹, i.e. solve (1+K)ᵀ columns: compute Q(1+K)⁻¹ column by
    // column via (1+K)⁻¹ applied to identity then Q·
    let mut inv = Array2::<C64>::zeros((two, two));
    for j in 0..two {
        let mut e = Array1::<C64>::zeros(two);
        e[j] = C64::new(1.0, 0.0);
        let x = lu
            .solve(&e)
            .map_err(|e| Error::SolverFailure(format!("glued solve: {e}")))?;
        inv.column_mut(j).assign(&x);
    }
    let approx = qmat.dot(&inv);
    let rfull = resolvent(full, z)?;
    let residual = linalg::fro(&(&rfull - &approx)) / linalg::fro(&rfull);

    // [Ḣ, i±] must be exactly lower-left-triangular in the block sense
    let hm = linalg::to_complex(&full.hamiltonian_matrix());
    let mut tri = 0.0_f64;
    for cut in [i_plus, i_minus] {
        let mut ic = Array2::<C64>::zeros((two, two));
        for p in 0..two {
            ic[[p, p]] = C64::new(cut[p % n], 0.0);
        }
        let c = &hm.dot(&ic) - &ic.dot(&hm);
        for p in 0..two {
            for q in 0..two {
                if !(p >= n && q < n) {
                    tri = tri.max(c[[p, q]].norm());
                }
            }
        }
    }

    // explicit inverse of the triangular factor
    let mut kj = Array2::<C64>::zeros((two, two));
    {
        let mut kpj = kp.clone();
        lift(j_plus, &mut kpj, true, false);
        let mut kmj = km.clone();
        lift(j_minus, &mut kmj, true, false);
        kj += &kpj;
        kj += &kmj;
    }
    let mut plus_f = kj.clone();
    let mut minus_f = kj.mapv(|v| -v);
    for i in 0..two {
        plus_f[[i, i]] += 1.0;
        minus_f[[i, i]] += 1.0;
    }
    let prod = plus_f.dot(&minus_f);
    let mut dev = prod;
    for i in 0..two {
        dev[[i, i]] -= 1.0;
    }
    let factor_inverse_defect = linalg::fro(&dev);

    Ok(GluedCheck {
        residual,
        commutator_triangular_defect: tri,
        factor_inverse_defect,
    })
}

/// Glued-resolvent identity on an assembled bundle at a spectral parameter z.
pub fn glued_resolvent_check(bundle: &OperatorBundle, z: C64) -> Result<GluedCheck> {
    let nt = bundle.grid.ntheta;
    let ip = Cutoffs::lift(&bundle.cutoffs.i_plus, nt);
    let im = Cutoffs::lift(&bundle.cutoffs.i_minus, nt);
    let jp = Cutoffs::lift(&bundle.cutoffs.j_plus, nt);
    let jm = Cutoffs::lift(&bundle.cutoffs.j_minus, nt);
    glued_resolvent_parts(
        &bundle.full,
        &bundle.asymptotics.plus,
        &bundle.asymptotics.minus_ungauged,
        &ip,
        &im,
        &jp,
        &jm,
        z,
    )
}

/// Riesz projector E = (i/2π)∮(H−z)⁻¹dz over a circle, by trapezoid contour
/// quadrature (spectrally accurate for analytic integrands).
pub fn riesz_projector(
    sys: &KGSystem,
    z0: C64,
    radius: f64,
    quad_points: usize,
) -> Result<(Array2<C64>, usize)> {
    let spec = eig_hamiltonian(sys)?;
    let mut enclosed = 0usize;
    for p in &spec.eigenvalues {
        let d = (p.z - z0).norm();
        if (d - radius).abs() < radius / 10.0 {
            return Err(Error::SpectrumOnContour);
        }
        if d < radius {
            enclosed += 1;
        }
    }
    let two = 2 * sys.dim;
    let mut e = Array2::<C64>::zeros((two, two));
    for j in 0..quad_points {
        let th = 2.0 * std::f64::consts::PI * j as f64 / quad_points as f64;
        let w = C64::new(th.cos(), th.sin());
        let z = z0 + radius * w;
        let r = resolvent(sys, z)?;
        // E = −(r/N)·Σ e^{iθ} R(z)
        let coef = -(radius / quad_points as f64) * w;
        e.scaled_add(coef, &r);
    }
    Ok((e, enclosed))
}

/// Single-linkage clustering of complex points with the given radius;
/// returns cluster index per point.
fn cluster(points: &[C64], radius: f64) -> Vec<usize> {
    let m = points.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let nx = parent[c];
            parent[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..m {
        for j in i + 1..m {
            if (points[i] - points[j]).norm() <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut labels = vec![0usize; m];
    let mut next = 0usize;
    let mut map = std::collections::HashMap::new();
    for i in 0..m {
        let r = find(&mut parent, i);
        let l = *map.entry(r).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels[i] = l;
    }
    labels
}

/// f(H) = Σ f(Re zᵢ)Eᵢ through the eigendecomposition, with conjugate pairs
/// and near-degeneracies clustered (single linkage, radius 1e−6·‖H‖).
/// Detected defective clusters (ill-conditioned eigenvector basis) fall back
/// to contour quadrature around each cluster.
pub fn smooth_calculus(sys: &KGSystem, f: &dyn Fn(f64) -> f64) -> Result<Array2<C64>> {
    let n = sys.dim;
    if 2 * n > DENSE_BUDGET {
        return Err(Error::BudgetExceeded(2 * n, DENSE_BUDGET));
    }
    let h = sys.hamiltonian_matrix();
    let (vals, vecs) = h
        .eig()
        .map_err(|e| Error::SolverFailure(format!("dense eigensolve: {e}")))?;
    let two = 2 * n;
    let hnorm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pts: Vec<C64> = vals.iter().copied().collect();
    let labels = cluster(&pts, 1e-6 * hnorm.max(1.0));

    let lu = vecs.factorize();
    let well_conditioned = match &lu {
        Ok(l) => l.rcond().map(|r| r > 1e-8).unwrap_or(false),
        Err(_) => false,
    };
    if well_conditioned {
        let lu = lu.unwrap();
        // f(H) = V diag(f(Re z)) V⁻¹, columnwise
        let mut out = Array2::<C64>::zeros((two, two));
        for j in 0..two {
            let mut e = Array1::<C64>::zeros(two);
            e[j] = C64::new(1.0, 0.0);
            let c = lu
                .solve(&e)
                .map_err(|e| Error::SolverFailure(format!("eigvec solve: {e}")))?;
            let mut col = Array1::<C64>::zeros(two);
            for i in 0..two {
                let fv = f(vals[i].re);
                if fv != 0.0 {
                    for p in 0..two {
                        col[p] += fv * vecs[[p, i]] * c[i];
                    }
                }
            }
            out.column_mut(j).assign(&col);
        }
        return Ok(out);
    }

    // defective fallback: contour quadrature per cluster (DefectiveCluster
    // condition detected; the calculus survives through Riesz integrals)
    let nclusters = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut out = Array2::<C64>::zeros((two, two));
    for c in 0..nclusters {
        let members: Vec<C64> = pts
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == c)
            .map(|(&z, _)| z)
            .collect();
        let center = members.iter().sum::<C64>() / members.len() as f64;
        let spread = members
            .iter()
            .map(|z| (z - center).norm())
            .fold(0.0_f64, f64::max);
        let gap = pts
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l != c)
            .map(|(&z, _)| (z - center).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = (spread + 1e-6 * hnorm.max(1.0)).max(1e-9) * 2.0;
        if radius >= gap {
            return Err(Error::DefectiveCluster(center));
        }
        let mut e = Array2::<C64>::zeros((two, two));
        for j in 0..64 {
            let th = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            let w = C64::new(th.cos(), th.sin());
            let r = resolvent(sys, center + radius * w)?;
            e.scaled_add(-(radius / 64.0) * w, &r);
        }
        out.scaled_add(C64::new(f(center.re), 0.0), &e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{find_horizons, SpacetimeParams};
    use crate::kg::testutil::random_system;
    use crate::modeops::{
        assemble_separable, angular_decomposition, ModeGrid,
    };

    fn diag_system(h_diag: &[f64], k_diag: &[f64]) -> KGSystem {
        let n = h_diag.len();
        let mut h0 = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            h0[[i, i]] = h_diag[i] + k_diag[i] * k_diag[i];
        }
        KGSystem::with_diag_k(
            h0,
            Array1::from_vec(k_diag.to_vec()),
            Array1::from_elem(n, 1.0),
            Array1::from_elem(n, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn eig_trivial_diagonal() {
        // k = 0, h = diag(1,4) → {±1, ±2}
        let sys = diag_system(&[1.0, 4.0], &[0.0, 0.0]);
        let rep = eig_hamiltonian(&sys).unwrap();
        let mut got: Vec<f64> = rep.eigenvalues.iter().map(|p| p.z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&[-2.0, -1.0, 1.0, 2.0]) {
            assert!((g - w).abs() < 1e-10);
        }
        assert!(rep.eigenvalues.iter().all(|p| p.z.im.abs() < 1e-12));
        assert!(rep.pencil_cross_check < 1e-8);
        assert!(rep.conjugation_pairing_error < 1e-9);
    }

    #[test]
    fn eig_scalar_shift() {
        // k = c, h₀ = ω²: roots of ω² − (c−z)² are z = c ± ω
        let c = 0.7;
        let om = [1.5, 2.5];
        let n = 2;
        let mut h0 = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            h0[[i, i]] = om[i] * om[i];
        }
        let sys = KGSystem::with_diag_k(
            h0,
            Array1::from_elem(n, c),
            Array1::from_elem(n, 1.0),
            Array1::from_elem(n, 1.0),
        )
        .unwrap();
        let rep = eig_hamiltonian(&sys).unwrap();
        let mut got: Vec<f64> = rep.eigenvalues.iter().map(|p| p.z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = vec![c - om[1], c - om[0], c + om[0], c + om[1]];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn eig_random_pairing_and_residuals() {
        let sys = random_system(6, 31, false);
        let rep = eig_hamiltonian(&sys).unwrap();
        assert_eq!(rep.eigenvalues.len(), 12);
        assert!(rep.conjugation_pairing_error < 1e-9);
        assert!(rep.eigenvalues.iter().all(|p| p.residual < 1e-8));
        assert!(rep.pencil_cross_check < 1e-8);
    }

    #[test]
    fn pencil_roots_cross_method() {
        let sys = random_system(4, 33, false);
        let all = SearchRegion { re_min: -1e6, re_max: 1e6, im_min: -1e6, im_max: 1e6 };
        let roots = pencil_roots(&sys, all).unwrap();
        let rep = eig_hamiltonian(&sys).unwrap();
        assert_eq!(roots.len(), rep.eigenvalues.len());
        for p in &rep.eigenvalues {
            let d = roots.iter().map(|r| (r - p.z).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8 * (1.0 + p.z.norm()), "root mismatch {d:.3e}");
        }
        // k = 0: roots in ± pairs
        let sys0 = diag_system(&[2.0, 5.0, 9.0], &[0.0; 3]);
        let roots = pencil_roots(&sys0, all).unwrap();
        for r in &roots {
            let d = roots.iter().map(|s| (s + r).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn pencil_roots_profile_dispersion() {
        // left profile: h₀ = −∂ₓ² (Dirichlet FD), k = ℓ ⇒ z = ℓ ± ξ_FD,
        // ξ_FD(j) = (2/Δx)·sin(jπ/(2(nx+1)))
        let p0 = SpacetimeParams::new(0.03, 1.0, 0.2, 0.0).unwrap();
        let h0 = find_horizons(&p0).unwrap();
        let grid = ModeGrid::new(&p0, &h0, 1, 24, 4, 30.0).unwrap();
        let (_, left) = crate::modeops::assemble_profiles(&h0, &grid).unwrap();
        let ell = crate::modeops::asymptotic_rotation(&h0, 1);
        let all = SearchRegion { re_min: -1e6, re_max: 1e6, im_min: -1.0, im_max: 1.0 };
        let roots = pencil_roots(&left, all).unwrap();
        let nxp = (grid.nx + 1) as f64;
        for j in 1..=grid.nx {
            let xi = 2.0 / grid.dx * (j as f64 * std::f64::consts::PI / (2.0 * nxp)).sin();
            for sign in [-1.0, 1.0] {
                let want = ell + sign * xi;
                let d = roots
                    .iter()
                    .map(|r| (r - C64::new(want, 0.0)).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 1e-8 * (1.0 + want.abs()), "mode {j}: {d:.3e}");
            }
        }
    }

    #[test]
    fn selfadjoint_case_real_spectrum_and_resolvent_bound() {
        // a = 0 separable: k = 0, spectrum real; ‖R(λ+iδ)‖ ≤ (1+tol)/δ
        let p0 = SpacetimeParams::new(0.03, 1.0, 0.0, 0.3).unwrap();
        let h0 = find_horizons(&p0).unwrap();
        let grid = ModeGrid::new(&p0, &h0, 0, 24, 4, 30.0).unwrap();
        let (eigs, _) = angular_decomposition(&p0, &grid);
        let sys = assemble_separable(&p0, &h0, &grid, &eigs.to_vec()[..1]).unwrap().remove(0);
        let rep = eig_hamiltonian(&sys).unwrap();
        assert!(rep.eigenvalues.iter().all(|p| p.z.im.abs() < 1e-9));
        // H is selfadjoint in the energy product, i.e. after conjugating by
        // T = diag(h₀^½, 1); the bound ‖R‖ ≤ 1/δ holds in that norm
        let n = sys.dim;
        let (hvals, hvecs) = linalg::eigh_weighted(&sys.h0, &sys.mass);
        assert!(hvals[0] > 0.0, "massive case: h₀ > 0");
        let mut t = Array2::<C64>::zeros((2 * n, 2 * n));
        let mut tinv = Array2::<C64>::zeros((2 * n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                let mut sq = 0.0;
                let mut siq = 0.0;
                for q in 0..n {
                    let vv = hvecs[[i, q]] * hvecs[[j, q]] * sys.mass[j];
                    sq += vv * hvals[q].sqrt();
                    siq += vv / hvals[q].sqrt();
                }
                t[[i, j]] = C64::new(sq, 0.0);
                tinv[[i, j]] = C64::new(siq, 0.0);
            }
            t[[n + i, n + i]] = C64::new(1.0, 0.0);
            tinv[[n + i, n + i]] = C64::new(1.0, 0.0);
        }
        for &(lam, del) in &[(0.5, 0.2), (1.0, 0.05), (-0.7, 0.1)] {
            let r = resolvent(&sys, C64::new(lam, del)).unwrap();
            let re = t.dot(&r).dot(&tinv);
            let nrm = estimate_opnorm(&re, &sys.mass2(), 5);
            assert!(nrm <= 1.05 / del, "‖R‖={nrm:.3e} at δ={del}");
        }
    }

    #[test]
    fn scan_selfadjoint_no_peaks_and_monotone() {
        let p0 = SpacetimeParams::new(0.03, 1.0, 0.0, 0.3).unwrap();
        let h0 = find_horizons(&p0).unwrap();
        let grid = ModeGrid::new(&p0, &h0, 0, 24, 4, 30.0).unwrap();
        let (eigs, _) = angular_decomposition(&p0, &grid);
        let sys = assemble_separable(&p0, &h0, &grid, &eigs.to_vec()[..1]).unwrap().remove(0);
        let weight =
            Array1::from_iter(grid.x_nodes.iter().map(|&x| 1.0 / (0.1 * x).cosh()));
        let lambdas: Vec<f64> = (0..7).map(|i| -1.5 + i as f64 * 0.5).collect();
        let deltas = [0.5, 0.1, 0.02];
        let scan = weighted_resolvent_scan(&sys, &weight, &lambdas, &deltas, 11).unwrap();
        assert!(scan.peak_candidates.is_empty(), "peaks: {:?}", scan.peak_candidates);
        assert!(scan.norm_table.iter().all(|v| v.is_finite() && *v > 0.0));
        // monotone nonincreasing in δ within estimator noise
        for i in 0..lambdas.len() {
            assert!(scan.norm_table[[i, 2]] >= 0.5 * scan.norm_table[[i, 0]]);
        }
    }

    #[test]
    fn scan_profile_flat() {
        let p0 = SpacetimeParams::new(0.03, 1.0, 0.2, 0.0).unwrap();
        let h0 = find_horizons(&p0).unwrap();
        let grid = ModeGrid::new(&p0, &h0, 1, 24, 4, 30.0).unwrap();
        let (right, _) = crate::modeops::assemble_profiles(&h0, &grid).unwrap();
        let weight =
            Array1::from_iter(grid.x_nodes.iter().map(|&x| 1.0 / (0.1 * x).cosh()));
        let lambdas = [0.5, 1.0, 1.5, 2.0];
        let deltas = [0.5, 0.1, 0.02];
        let scan = weighted_resolvent_scan(&right, &weight, &lambdas, &deltas, 13).unwrap();
        assert!(scan.peak_candidates.is_empty());
    }

    #[test]
    fn glued_identity_trivial_and_bundle() {
        // i₊ ≡ 1, i₋ ≡ 0, plus end = full system → Q = R, K = 0
        let sys = random_system(6, 40, false);
        let ones = vec![1.0; 6];
        let zeros = vec![0.0; 6];
        let chk = glued_resolvent_parts(
            &sys,
            &sys,
            &sys,
            &ones,
            &zeros,
            &zeros,
            &zeros,
            C64::new(0.3, 2.0),
        )
        .unwrap();
        assert!(chk.residual < 1e-12, "trivial residual {:.3e}", chk.residual);
        // real bundle
        let p0 = SpacetimeParams::new(0.03, 1.0, 0.1, 0.2).unwrap();
        let b = OperatorBundle::build(&p0, 1, 24, 6, 40.0, 2).unwrap();
        let chk = glued_resolvent_check(&b, C64::new(0.0, 2.0)).unwrap();
        assert!(chk.residual < 1e-8, "bundle residual {:.3e}", chk.residual);
        assert!(
            chk.commutator_triangular_defect == 0.0,
            "triangular defect {:.3e}",
            chk.commutator_triangular_defect
        );
        assert!(
            chk.factor_inverse_defect < 1e-10,
            "factor inverse defect {:.3e}",
            chk.factor_inverse_defect
        );
    }

    #[test]
    fn riesz_projector_properties() {
        let sys = diag_system(&[1.0, 4.0], &[0.0, 0.0]);
        // empty contour
        let (e, cnt) = riesz_projector(&sys, C64::new(0.0, 3.0), 0.5, 64).unwrap();
        assert_eq!(cnt, 0);
        assert!(linalg::fro(&e) < 1e-8);
        // all eigenvalues: E = I
        let (e, cnt) = riesz_projector(&sys, C64::new(0.0, 0.0), 10.0, 128).unwrap();
        assert_eq!(cnt, 4);
        let mut dev = e.clone();
        for i in 0..4 {
            dev[[i, i]] -= 1.0;
        }
        assert!(linalg::fro(&dev) < 1e-7);
        // single eigenvalue z = 1 (h eigvec e1): compare to analytic projector
        let (e, cnt) = riesz_projector(&sys, C64::new(1.0, 0.0), 0.5, 128).unwrap();
        assert_eq!(cnt, 1);
        // idempotent and rank-1
        let e2 = e.dot(&e);
        assert!(linalg::fro(&(&e2 - &e)) < 1e-7);
        let tr: C64 = (0..4).map(|i| e[[i, i]]).sum();
        assert!((tr - C64::new(1.0, 0.0)).norm() < 1e-7);
        // eigenvector (u, zu) with u = e₀, z = 1: E must fix it
        let mut v = Array1::<C64>::zeros(4);
        v[0] = C64::new(1.0, 0.0);
        v[2] = C64::new(1.0, 0.0);
        let ev = e.dot(&v);
        for i in 0..4 {
            assert!((ev[i] - v[i]).norm() < 1e-7);
        }
        // contour through an eigenvalue refused
        assert!(matches!(
            riesz_projector(&sys, C64::new(0.0, 0.0), 1.0, 64),
            Err(Error::SpectrumOnContour)
        ));
    }

    #[test]
    fn smooth_calculus_algebra() {
        let sys = random_system(4, 50, false);
        let two = 8;
        // f ≡ 1 → identity
        let one = smooth_calculus(&sys, &|_| 1.0).unwrap();
        let mut dev = one.clone();
        for i in 0..two {
            dev[[i, i]] -= 1.0;
        }
        assert!(linalg::fro(&dev) < 1e-8);
        // f ≡ 0 → zero
        let zero = smooth_calculus(&sys, &|_| 0.0).unwrap();
        assert!(linalg::fro(&zero) < 1e-12);
        // morphism: (fg)(H) = f(H)g(H)
        let f = |x: f64| (-x * x).exp();
        let g = |x: f64| 1.0 / (1.0 + x * x);
        let fg = smooth_calculus(&sys, &|x| f(x) * g(x)).unwrap();
        let fh = smooth_calculus(&sys, &f).unwrap();
        let gh = smooth_calculus(&sys, &g).unwrap();
        let prod = fh.dot(&gh);
        let rel = linalg::fro(&(&fg - &prod)) / linalg::fro(&fg);
        assert!(rel < 1e-6, "morphism defect {rel:.3e}");
    }

    #[test]
    fn smooth_window_matches_riesz() {
        let sys = diag_system(&[1.0, 4.0], &[0.0, 0.0]);
        // smooth window around z = 1 only
        let f = |x: f64| {
            let s: f64 = (x - 1.0) / 0.4;
            if s.abs() < 1.0 {
                (-s * s / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        };
        let w = smooth_calculus(&sys, &f).unwrap();
        let (e, _) = riesz_projector(&sys, C64::new(1.0, 0.0), 0.5, 128).unwrap();
        // f(1) = 1 at the eigenvalue, so w = E
        let rel = linalg::fro(&(&w - &e)) / linalg::fro(&e);
        assert!(rel < 1e-6, "window vs projector {rel:.3e}");
    }

    #[test]
    fn resolvent_norm_envelope() {
        // ‖R(z)‖·|Im z| bounded over an argument fan for |z| ≥ 2(‖k‖+√‖h₀‖)
        let sys = random_system(5, 60, false);
        let (h0vals, _) = linalg::eigh_weighted(&sys.h0, &sys.mass);
        let scale = 2.0 * (sys.k_norm + h0vals[h0vals.len() - 1].max(0.0).sqrt());
        let mut worst = 0.0_f64;
        for deg in [20.0, 45.0, 70.0, 110.0, 135.0, 160.0] {
            let th = deg * std::f64::consts::PI / 180.0;
            let z = C64::new(th.cos(), th.sin()) * (scale * 1.5);
            let r = resolvent(&sys, z).unwrap();
            worst = worst.max(estimate_opnorm(&r, &sys.mass2(), 3) * z.im.abs());
        }
        assert!(worst < 50.0, "resolvent envelope {worst:.3e}");
    }
}
