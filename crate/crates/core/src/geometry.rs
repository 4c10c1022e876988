//! Scalar geometry of the De Sitter Kerr spacetime: the radial metric
//! coefficient Δr, horizon finding, angular velocities, surface gravities,
//! the Regge-Wheeler radial coordinate and ergoregion boundaries.

use crate::error::{Error, Result};
use ndarray::Array2;
use ndarray_linalg::Eig;
use serde::{Deserialize, Serialize};

/// Physical constants of one De Sitter Kerr configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpacetimeParams {
    /// Cosmological constant Λ > 0.
    pub lambda: f64,
    /// Black-hole mass M > 0.
    pub m: f64,
    /// Angular momentum per unit mass.
    pub a: f64,
    /// Field mass m ≥ 0.
    pub mass_field: f64,
    /// λ = 1 + Λa²/3, cached.
    pub lambda_factor: f64,
}

impl SpacetimeParams {
    pub fn new(lambda: f64, m: f64, a: f64, mass_field: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::ConfigInvalid(format!("Lambda must be > 0, got {lambda}")));
        }
        if !(m > 0.0) {
            return Err(Error::ConfigInvalid(format!("M must be > 0, got {m}")));
        }
        if !(mass_field >= 0.0) {
            return Err(Error::ConfigInvalid(format!("field mass must be >= 0, got {mass_field}")));
        }
        Ok(Self { lambda, m, a, mass_field, lambda_factor: 1.0 + lambda * a * a / 3.0 })
    }

    /// Δθ(θ) = 1 + (Λa²/3) cos²θ.
    pub fn delta_theta(&self, theta: f64) -> f64 {
        let c = theta.cos();
        1.0 + self.lambda * self.a * self.a / 3.0 * c * c
    }

    /// Δθ as a function of c = cosθ.
    pub fn delta_theta_c(&self, c: f64) -> f64 {
        1.0 + self.lambda * self.a * self.a / 3.0 * c * c
    }

    /// ρ²(r,θ) = r² + a²cos²θ.
    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        let c = theta.cos();
        r * r + self.a * self.a * c * c
    }

    /// σ²(r,θ) = (r²+a²)²Δθ − a²Δr sin²θ.
    pub fn sigma2(&self, r: f64, theta: f64) -> f64 {
        let ra = r * r + self.a * self.a;
        let s = theta.sin();
        ra * ra * self.delta_theta(theta) - self.a * self.a * delta_r(self, r) * s * s
    }

    /// Coefficients [c0, c1, c2, c3, c4] of Δr as a polynomial in r.
    pub fn delta_r_coeffs(&self) -> [f64; 5] {
        let a2 = self.a * self.a;
        [a2, -2.0 * self.m, 1.0 - self.lambda * a2 / 3.0, 0.0, -self.lambda / 3.0]
    }
}

/// Δr(r) = (1 − Λr²/3)(r² + a²) − 2Mr.
pub fn delta_r(params: &SpacetimeParams, r: f64) -> f64 {
    (1.0 - params.lambda * r * r / 3.0) * (r * r + params.a * params.a) - 2.0 * params.m * r
}

/// dΔr/dr.
pub fn delta_r_prime(params: &SpacetimeParams, r: f64) -> f64 {
    let [_, c1, c2, _, c4] = params.delta_r_coeffs();
    c1 + 2.0 * c2 * r + 4.0 * c4 * r * r * r
}

/// Horizon structure derived from the roots of Δr.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HorizonData {
    pub r_minus: f64,
    pub r_plus: f64,
    /// Unique zero of Δr′ in (r₋, r₊).
    pub r_max: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    /// Coefficients [p0, p1, p2] of P₂ with Δr = (r₊−r)(r−r₋)·P₂(r).
    pub p2_coeffs: [f64; 3],
}

impl HorizonData {
    /// P₂(r) from the cached coefficients.
    pub fn p2(&self, r: f64) -> f64 {
        self.p2_coeffs[0] + self.p2_coeffs[1] * r + self.p2_coeffs[2] * r * r
    }

    /// q(r) = √((r₊−r)(r−r₋)).
    pub fn q(&self, r: f64) -> f64 {
        ((self.r_plus - r) * (r - self.r_minus)).max(0.0).sqrt()
    }
}

/// Real eigenvalues of the companion matrix of the monic quartic with the
/// given coefficients [c0, c1, c2, c3, c4], polished by Newton.
fn quartic_real_roots(c: [f64; 5]) -> Vec<f64> {
    let c4 = c[4];
    let mut comp = Array2::<f64>::zeros((4, 4));
    comp[[0, 3]] = -c[0] / c4;
    comp[[1, 3]] = -c[1] / c4;
    comp[[2, 3]] = -c[2] / c4;
    comp[[3, 3]] = -c[3] / c4;
    for i in 1..4 {
        comp[[i, i - 1]] = 1.0;
    }
    let (eigs, _) = comp.eig().expect("companion eigensolve");
    let scale = eigs.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let p = |r: f64| c[0] + c[1] * r + c[2] * r * r + c[3] * r * r * r + c[4] * r * r * r * r;
    let dp = |r: f64| c[1] + 2.0 * c[2] * r + 3.0 * c[3] * r * r + 4.0 * c[4] * r * r * r;
    let mut roots = Vec::new();
    for z in eigs.iter() {
        if z.im.abs() < 1e-8 * scale {
            let mut r = z.re;
            for _ in 0..50 {
                let d = dp(r);
                if d == 0.0 {
                    break;
                }
                let step = p(r) / d;
                r -= step;
                if step.abs() < 1e-15 * (1.0 + r.abs()) {
                    break;
                }
            }
            roots.push(r);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * scale);
    roots
}

/// Find the two consecutive positive simple roots of Δr bracketing a
/// positivity interval, and fill in all derived horizon quantities.
pub fn find_horizons(params: &SpacetimeParams) -> Result<HorizonData> {
    let coeffs = params.delta_r_coeffs();
    let roots = quartic_real_roots(coeffs);
    let mut pair = None;
    for w in roots.windows(2) {
        let (r1, r2) = (w[0], w[1]);
        if r1 > 0.0 && delta_r(params, 0.5 * (r1 + r2)) > 0.0 {
            pair = Some((r1, r2));
            break;
        }
    }
    let Some((r_minus, r_plus)) = pair else {
        return Err(Error::NoPositivityInterval);
    };

    // P₂ by exact division of Δr by q² = (r₊−r)(r−r₋) = −r² + (r₋+r₊)r − r₋r₊.
    // With Δr = c4 r⁴ + c3 r³ + c2 r² + c1 r + c0 and q² monic-negated, divide.
    let s = r_minus + r_plus;
    let q0 = -(r_minus * r_plus);
    // q²(r) = -r² + s·r + q0.  Long division: Δr = q²·(p2 r² + p1 r + p0) + rem.
    let [c0, c1, c2, _c3, c4] = coeffs;
    let p2 = -c4;
    let p1 = -(0.0 /*c3*/ - p2 * s); // coefficient matching at r³: c3 = -p1 + p2 s
    let p0 = -(c2 - p2 * q0 - p1 * s); // at r²: c2 = -p0 + p1 s + p2 q0
    let rem1 = c1 - (p0 * s + p1 * q0); // at r¹: c1 = p0 s + p1 q0 + rem1
    let rem0 = c0 - p0 * q0; // at r⁰
    let scale = coeffs.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    if rem1.abs() > 1e-12 * scale.max(1.0) || rem0.abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::NoPositivityInterval);
    }
    let p2_coeffs = [p0, p1, p2];
    let p2_at = |r: f64| p0 + p1 * r + p2 * r * r;
    if !(p2_at(r_minus) > 0.0 && p2_at(r_plus) > 0.0) {
        return Err(Error::NoPositivityInterval);
    }

    // rMax: unique zero of Δr′ in (r₋, r₊) by bisection.
    let mut lo = r_minus;
    let mut hi = r_plus;
    let dlo = delta_r_prime(params, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let d = delta_r_prime(params, mid);
        if d == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (d > 0.0) == (dlo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r_max = 0.5 * (lo + hi);

    let lam = params.lambda_factor;
    let a = params.a;
    let kappa = |r: f64| (r_plus - r_minus) * p2_at(r) / (lam * (r * r + a * a));
    Ok(HorizonData {
        r_minus,
        r_plus,
        r_max,
        omega_minus: a / (r_minus * r_minus + a * a),
        omega_plus: a / (r_plus * r_plus + a * a),
        kappa_minus: kappa(r_minus),
        kappa_plus: kappa(r_plus),
        p2_coeffs,
    })
}

/// Coordinate angular velocity Ω(r,θ) = a((r²+a²)Δθ − Δr a²sin²θ)/σ².
pub fn omega_coordinate(params: &SpacetimeParams, r: f64, theta: f64) -> f64 {
    let ra = r * r + params.a * params.a;
    let s = theta.sin();
    let dth = params.delta_theta(theta);
    let dr = delta_r(params, r);
    params.a * (ra * dth - dr * params.a * params.a * s * s) / params.sigma2(r, theta)
}

/// Adaptive Gauss-Kronrod (G7, K15) quadrature on [a, b].
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    // Kronrod nodes on [-1, 1] and weights; Gauss weights for the embedded rule.
    const XK: [f64; 15] = [
        -0.991455371120813,
        -0.949107912342759,
        -0.864864423359769,
        -0.741531185599394,
        -0.586087235467691,
        -0.405845151377397,
        -0.207784955007898,
        0.0,
        0.207784955007898,
        0.405845151377397,
        0.586087235467691,
        0.741531185599394,
        0.864864423359769,
        0.949107912342759,
        0.991455371120813,
    ];
    const WK: [f64; 15] = [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
        0.204432940075298,
        0.190350578064785,
        0.169004726639267,
        0.140653259715525,
        0.104790010322250,
        0.063092092629979,
        0.022935322010529,
    ];
    const WG: [f64; 7] = [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
        0.381830050505119,
        0.279705391489277,
        0.129484966168870,
    ];
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let mut ik = 0.0;
    let mut ig = 0.0;
    for (i, (&x, &wk)) in XK.iter().zip(WK.iter()).enumerate() {
        let v = f(c + h * x);
        ik += wk * v;
        if i % 2 == 1 {
            ig += WG[i / 2] * v;
        }
    }
    (h * ik, (h * (ik - ig)).abs())
}

/// Adaptive quadrature of `f` over [a, b] to absolute tolerance `tol`.
pub fn adaptive_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (i, e) = gk15(f, a, b);
        if e <= tol.max(1e-15 * i.abs()) || (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            return Ok(i);
        }
        if depth > 40 {
            return Err(Error::QuadratureFailure(format!(
                "max depth on [{a}, {b}], err {e:.3e}"
            )));
        }
        let m = 0.5 * (a + b);
        Ok(rec(f, a, m, 0.5 * tol, depth + 1)? + rec(f, m, b, 0.5 * tol, depth + 1)?)
    }
    rec(f, a, b, tol, 0)
}

/// Regge-Wheeler coordinate map x ↔ r on (r₋, r₊), pinned by x(rMax) = 0.
#[derive(Debug, Clone)]
pub struct RWMap {
    pub params: SpacetimeParams,
    pub horizons: HorizonData,
    pub r_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
}

impl RWMap {
    /// x(r) by pole-subtracted quadrature:
    /// dx/dr = λ(r²+a²)/Δr has simple poles 1/(κ₋(r−r₋)) and 1/(κ₊(r₊−r));
    /// the remainder is smooth and integrated adaptively, the poles in closed
    /// form, with the constant fixed by x(rMax) = 0.
    pub fn x_of_r(params: &SpacetimeParams, hor: &HorizonData, r: f64) -> Result<f64> {
        let (rm, rp) = (hor.r_minus, hor.r_plus);
        assert!(r > rm && r < rp, "r outside the horizon interval");
        let lam = params.lambda_factor;
        let a2 = params.a * params.a;
        let am = 1.0 / hor.kappa_minus;
        let ap = 1.0 / hor.kappa_plus;
        // The pole-subtracted remainder is the rational function L(s)/P₂(s):
        // λ(s²+a²) − P₂(s)[A₋(r₊−s) + A₊(s−r₋)] vanishes at both horizons,
        // so dividing it by (r₊−s)(s−r₋) leaves a linear polynomial L.
        // Evaluating L/P₂ directly avoids the 1/(s−r±) cancellation.
        let [p0, p1, p2] = hor.p2_coeffs;
        // numerator N(s) = n3 s³ + n2 s² + n1 s + n0
        let ca = am * rp - ap * rm; // A₋(r₊−s)+A₊(s−r₋) = (ap−am)s + ca
        let cb = ap - am;
        let n3 = -(p2 * cb);
        let n2 = lam - (p1 * cb + p2 * ca);
        let _n1 = -(p0 * cb + p1 * ca);
        let _n0 = lam * a2 - p0 * ca;
        // N = (−s² + (r₋+r₊)s − r₋r₊)(l1 s + l0) exactly
        let l1 = -n3;
        let l0 = l1 * (rm + rp) - n2;
        let reg = |s: f64| (l1 * s + l0) / (p0 + p1 * s + p2 * s * s);
        let smooth = adaptive_quad(&reg, hor.r_max, r, 1e-12)?;
        let logs = |s: f64| am * (s - rm).ln() - ap * (rp - s).ln();
        Ok(smooth + logs(r) - logs(hor.r_max))
    }

    /// dx/dr at r.
    pub fn dx_dr(params: &SpacetimeParams, r: f64) -> f64 {
        params.lambda_factor * (r * r + params.a * params.a) / delta_r(params, r)
    }

    /// Solve x(r) = x by safeguarded Newton on the bracket (r₋, r₊).
    pub fn r_of_x_scalar(params: &SpacetimeParams, hor: &HorizonData, x: f64) -> Result<f64> {
        let (rm, rp) = (hor.r_minus, hor.r_plus);
        // initial guess from the near-horizon asymptotics / midpoint
        let mut r = if x < -2.0 {
            rm + (rp - rm) * 0.25 * (hor.kappa_minus * x).exp().min(1.0)
        } else if x > 2.0 {
            rp - (rp - rm) * 0.25 * (-hor.kappa_plus * x).exp().min(1.0)
        } else {
            hor.r_max
        };
        let mut lo = rm;
        let mut hi = rp;
        r = r.clamp(rm + 1e-14 * (rp - rm), rp - 1e-14 * (rp - rm));
        for _ in 0..100 {
            let fx = Self::x_of_r(params, hor, r)? - x;
            if fx.abs() < 1e-13 * (1.0 + x.abs()) {
                break;
            }
            if fx > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let d = Self::dx_dr(params, r);
            let mut rn = r - fx / d;
            if rn <= lo || rn >= hi {
                rn = 0.5 * (lo + hi);
            }
            if (rn - r).abs() < 1e-15 * (rp - rm) {
                r = rn;
                break;
            }
            r = rn;
        }
        Ok(r)
    }

    /// Build the paired table over x ∈ [−xSpan, xSpan] with nNodes entries.
    pub fn build(
        params: &SpacetimeParams,
        hor: &HorizonData,
        n_nodes: usize,
        x_span: f64,
    ) -> Result<RWMap> {
        assert!(n_nodes >= 16, "need at least 16 nodes");
        let mut r_nodes = Vec::with_capacity(n_nodes);
        let mut x_nodes = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let x = -x_span + 2.0 * x_span * i as f64 / (n_nodes - 1) as f64;
            let r = Self::r_of_x_scalar(params, hor, x)?;
            x_nodes.push(x);
            r_nodes.push(r);
        }
        Ok(RWMap { params: *params, horizons: *hor, r_nodes, x_nodes })
    }

    /// r(x) for a query inside the table span (exact solve, not interpolation).
    pub fn r_of_x(&self, x: f64) -> Result<f64> {
        if x < self.x_nodes[0] - 1e-9 || x > *self.x_nodes.last().unwrap() + 1e-9 {
            return Err(Error::AssemblyDomainError);
        }
        Self::r_of_x_scalar(&self.params, &self.horizons, x)
    }

    pub fn x_span(&self) -> f64 {
        *self.x_nodes.last().unwrap()
    }
}

/// Ergoregion radial boundaries at latitude θ: the sign-change points of
/// Δr − a²sin²θΔθ on (r₋, r₊).
pub fn ergo_bounds(
    params: &SpacetimeParams,
    hor: &HorizonData,
    theta: f64,
) -> Result<(f64, f64)> {
    let s = theta.sin();
    let rhs = params.a * params.a * s * s * params.delta_theta(theta);
    let f = |r: f64| delta_r(params, r) - rhs;
    // sample for a positive point
    let n = 512;
    let mut pos_at = None;
    for i in 1..n {
        let r = hor.r_minus + (hor.r_plus - hor.r_minus) * i as f64 / n as f64;
        if f(r) > 0.0 {
            pos_at = Some(r);
            break;
        }
    }
    let Some(rpos) = pos_at else {
        return Err(Error::NoErgoregion);
    };
    if params.a == 0.0 {
        return Err(Error::NoErgoregion);
    }
    let bisect = |mut lo: f64, mut hi: f64| {
        // f(lo) and f(hi) have opposite signs
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let r1 = bisect(hor.r_minus, rpos);
    let r2 = bisect(rpos, hor.r_plus);
    let (r1, r2) = (r1.min(r2), r1.max(r2));
    Ok((r1, r2))
}
