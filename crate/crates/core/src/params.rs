//! Physical and reduced model parameters.
//!
//! After eliminating the shear modulus and rescaling the unknowns, the static
//! time-step problem depends only on the triple `(lambda, rp_inv, alpha_p)`.
//! The derived weights `rho = min(lambda, rp_inv)` and
//! `gamma = max(1/rho, alpha_p)` enter the flux and pressure norms.

use serde::{Deserialize, Serialize};

use crate::elements::Space;
use crate::error::{BiotError, Result};

/// Parameters of the time-discrete Biot system in physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Shear modulus (Pa).
    pub mu: f64,
    /// Lamé parameter (Pa).
    pub lambda: f64,
    /// Biot-Willis constant.
    pub alpha: f64,
    /// Hydraulic conductivity (m²·Pa⁻¹·s⁻¹).
    #[serde(rename = "K")]
    pub k: f64,
    /// Time-step length (s).
    pub tau: f64,
    /// Storage coefficient (Pa⁻¹).
    pub c_pp: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        positive("mu", self.mu)?;
        non_negative("lambda", self.lambda)?;
        positive("alpha", self.alpha)?;
        positive("K", self.k)?;
        positive("tau", self.tau)?;
        non_negative("c_pp", self.c_pp)?;
        Ok(())
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(BiotError::RangeViolation {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(BiotError::RangeViolation {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}

/// The reduced parameter triple together with `rho` and `gamma`.
///
/// Fields are private so `rho`/`gamma` can never drift out of sync with the
/// triple; construct through [`ReducedParams::new`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReducedTriple", into = "ReducedTriple")]
pub struct ReducedParams {
    lambda: f64,
    rp_inv: f64,
    alpha_p: f64,
    rho: f64,
    gamma: f64,
}

/// Serialized form of [`ReducedParams`]; validated on the way in.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct ReducedTriple {
    lambda: f64,
    rp_inv: f64,
    alpha_p: f64,
}

impl TryFrom<ReducedTriple> for ReducedParams {
    type Error = BiotError;
    fn try_from(t: ReducedTriple) -> Result<Self> {
        ReducedParams::new(t.lambda, t.rp_inv, t.alpha_p)
    }
}

impl From<ReducedParams> for ReducedTriple {
    fn from(p: ReducedParams) -> Self {
        Self {
            lambda: p.lambda,
            rp_inv: p.rp_inv,
            alpha_p: p.alpha_p,
        }
    }
}

impl ReducedParams {
    /// Smallest `rp_inv` exercised by the test suite.
    pub const MIN_TESTED_RP_INV: f64 = 1e-8;

    pub fn new(lambda: f64, rp_inv: f64, alpha_p: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 1.0) {
            return Err(BiotError::RangeViolation {
                name: "lambda",
                value: lambda,
                reason: "scaled Lamé parameter must be >= 1",
            });
        }
        if !(rp_inv.is_finite() && rp_inv > 0.0) {
            return Err(BiotError::RangeViolation {
                name: "rp_inv",
                value: rp_inv,
                reason: "must be finite and > 0",
            });
        }
        non_negative("alpha_p", alpha_p)?;
        let rho = lambda.min(rp_inv);
        let gamma = (1.0 / rho).max(alpha_p);
        Ok(Self {
            lambda,
            rp_inv,
            alpha_p,
            rho,
            gamma,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn rp_inv(&self) -> f64 {
        self.rp_inv
    }
    pub fn alpha_p(&self) -> f64 {
        self.alpha_p
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// `R_p`, the inverse of `rp_inv`.
    pub fn rp(&self) -> f64 {
        1.0 / self.rp_inv
    }
}

impl Default for ReducedParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 0.0).expect("unit parameters are valid")
    }
}

/// Factors relating physical fields to the reduced unknowns:
/// `reduced = scale * physical`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldScaling {
    pub u_scale: f64,
    pub v_scale: f64,
    pub p_scale: f64,
    pub f_scale: f64,
    pub g_scale: f64,
}

impl FieldScaling {
    pub fn identity() -> Self {
        Self {
            u_scale: 1.0,
            v_scale: 1.0,
            p_scale: 1.0,
            f_scale: 1.0,
            g_scale: 1.0,
        }
    }

    pub fn u_to_reduced(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|x| x * self.u_scale).collect()
    }
    pub fn u_to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|x| x / self.u_scale).collect()
    }
    pub fn v_to_reduced(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x * self.v_scale).collect()
    }
    pub fn v_to_physical(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x / self.v_scale).collect()
    }
    pub fn p_to_reduced(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x * self.p_scale).collect()
    }
    pub fn p_to_physical(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x / self.p_scale).collect()
    }
    pub fn f_to_reduced(&self, f: [f64; 2]) -> [f64; 2] {
        [f[0] * self.f_scale, f[1] * self.f_scale]
    }
    pub fn g_to_reduced(&self, g: &[f64]) -> Vec<f64> {
        g.iter().map(|x| x * self.g_scale).collect()
    }
}

/// Eliminates `2 mu` and rescales the unknowns.
///
/// With `a = alpha/(2mu)`, `t = tau/(2mu)`, `c = c_pp/(2mu)` and
/// `u~ = a u`, `v~ = t v`, `p~ = a² p`:
/// `rp_inv = a²/(t K)`, `alpha_p = c/a²`, `f~ = a f/(2mu)`, `g~ = g/(2mu)`.
pub fn reduce(phys: &PhysicalParams) -> Result<(ReducedParams, FieldScaling)> {
    phys.validate()?;
    let two_mu = 2.0 * phys.mu;
    let a = phys.alpha / two_mu;
    let t = phys.tau / two_mu;
    let c = phys.c_pp / two_mu;
    let lambda_red = phys.lambda / two_mu;
    if lambda_red < 1.0 {
        return Err(BiotError::RangeViolation {
            name: "lambda_red",
            value: lambda_red,
            reason: "lambda/(2 mu) must be >= 1",
        });
    }
    let rp_inv = a * a / (t * phys.k);
    let alpha_p = c / (a * a);
    let reduced = ReducedParams::new(lambda_red, rp_inv, alpha_p)?;
    let scaling = FieldScaling {
        u_scale: a,
        v_scale: t,
        p_scale: a * a,
        f_scale: a / two_mu,
        g_scale: 1.0 / two_mu,
    };
    Ok((reduced, scaling))
}

/// Right-hand side of the continuity equation for one backward-Euler step,
/// `g~ = -tau g - alpha div u_prev - c_pp p_prev`, in physical units and per
/// cell (piecewise constant).
///
/// `g` and `p_prev` are cell values; `u_prev` is a displacement on `space`.
/// Rescale with [`FieldScaling::g_to_reduced`] before handing it to the
/// reduced solver.
pub fn compose_timestep_rhs(
    g: &[f64],
    u_prev: (&Space, &[f64]),
    p_prev: &[f64],
    phys: &PhysicalParams,
) -> Result<Vec<f64>> {
    phys.validate()?;
    let (space, coeffs) = u_prev;
    let n_cells = space.mesh().n_cells();
    if g.len() != n_cells || p_prev.len() != n_cells {
        return Err(BiotError::DimensionMismatch(format!(
            "g has {} and p_prev {} entries, mesh has {} cells",
            g.len(),
            p_prev.len(),
            n_cells
        )));
    }
    let div_u = space.cell_divergence_means(coeffs)?;
    Ok(g.iter()
        .zip(&div_u)
        .zip(p_prev)
        .map(|((g, du), p)| -phys.tau * g - phys.alpha * du - phys.c_pp * p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn phys(mu: f64, lambda: f64, alpha: f64, k: f64, tau: f64, c_pp: f64) -> PhysicalParams {
        PhysicalParams {
            mu,
            lambda,
            alpha,
            k,
            tau,
            c_pp,
        }
    }

    #[test]
    fn unit_shear_gives_identity_scaling() {
        let (r, s) = reduce(&phys(0.5, 1.0, 1.0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(
            (r.lambda(), r.rp_inv(), r.alpha_p(), r.rho(), r.gamma()),
            (1.0, 1.0, 0.0, 1.0, 1.0)
        );
        assert_eq!(s, FieldScaling::identity());
    }

    #[test]
    fn substitution_chain_with_nontrivial_shear() {
        // a = 1/2, t = 1, so rp_inv = a²/(t K) = 1/4.
        let (r, s) = reduce(&phys(1.0, 2.0, 1.0, 1.0, 2.0, 0.0)).unwrap();
        assert_eq!(r.lambda(), 1.0);
        assert_relative_eq!(r.rp_inv(), 0.25, max_relative = 1e-15);
        assert_eq!(r.alpha_p(), 0.0);
        assert_relative_eq!(s.u_scale, 0.5);
        assert_relative_eq!(s.v_scale, 1.0);
        assert_relative_eq!(s.p_scale, 0.25);
        assert_relative_eq!(s.f_scale, 0.25);
        assert_relative_eq!(s.g_scale, 0.5);
    }

    #[test]
    fn rho_gamma_direct_evaluation() {
        let (r, _) = reduce(&phys(0.5, 4.0, 1.0, 1e-6, 1.0, 0.1)).unwrap();
        assert_eq!(r.lambda(), 4.0);
        assert_relative_eq!(r.rp_inv(), 1e6, max_relative = 1e-12);
        assert_relative_eq!(r.alpha_p(), 0.1, max_relative = 1e-15);
        assert_eq!(r.rho(), 4.0);
        assert_eq!(r.gamma(), 0.25);
    }

    /// Treat every differential term as an independent number: the reduced
    /// equations must be fixed multiples of the physical ones.
    #[test]
    fn reduced_equations_rescale_physical_equations() {
        let p = phys(3.0, 40.0, 0.7, 2e-3, 0.5, 0.2);
        let (r, s) = reduce(&p).unwrap();
        // Arbitrary values of div eps(u), grad div u, grad p, v, div u, div v, p.
        let (deps, gdiv, gp, v, divu, divv, pv) = (0.3, -1.1, 0.8, 2.5, -0.4, 0.9, 1.7);
        let f = 0.6;
        let g = -2.0;

        let phys1 = -2.0 * p.mu * deps - p.lambda * gdiv + p.alpha * gp - f;
        let phys2 = p.tau / p.k * v + p.tau * gp;
        let phys3 = -p.alpha * divu - p.tau * divv - p.c_pp * pv - g;

        let red1 = -s.u_scale * deps - r.lambda() * s.u_scale * gdiv + s.p_scale * gp - s.f_scale * f;
        let red2 = r.rp_inv() * s.v_scale * v + s.p_scale * gp;
        let red3 = -s.u_scale * divu - s.v_scale * divv - r.alpha_p() * s.p_scale * pv - s.g_scale * g;

        let two_mu = 2.0 * p.mu;
        let a = p.alpha / two_mu;
        let t = p.tau / two_mu;
        assert_relative_eq!(red1, phys1 * a / two_mu, max_relative = 1e-13);
        assert_relative_eq!(red2, phys2 * a * a / (two_mu * t), max_relative = 1e-13);
        assert_relative_eq!(red3, phys3 / two_mu, max_relative = 1e-13);
    }

    #[test]
    fn lambda_below_one_is_an_error() {
        let err = reduce(&phys(1.0, 1.0, 1.0, 1.0, 1.0, 0.0)).unwrap_err();
        match err {
            BiotError::RangeViolation { name, value, .. } => {
                assert_eq!(name, "lambda_red");
                assert_eq!(value, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_rp_inv_is_rejected() {
        assert!(ReducedParams::new(1.0, 0.0, 0.0).is_err());
        assert!(ReducedParams::new(1.0, ReducedParams::MIN_TESTED_RP_INV, 0.0).is_ok());
        assert!(ReducedParams::new(1.0, 1.0, -1.0).is_err());
        assert!(ReducedParams::new(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn invalid_physical_params() {
        assert!(reduce(&phys(0.0, 1.0, 1.0, 1.0, 1.0, 0.0)).is_err());
        assert!(reduce(&phys(0.5, 1.0, 1.0, -1.0, 1.0, 0.0)).is_err());
        assert!(reduce(&phys(0.5, 1.0, 1.0, 1.0, 1.0, -0.1)).is_err());
    }

    fn arb_phys() -> impl Strategy<Value = PhysicalParams> {
        (
            -3.0f64..3.0,
            0.0f64..6.0,
            -2.0f64..1.0,
            -10.0f64..2.0,
            -4.0f64..2.0,
            prop_oneof![Just(0.0), -6.0f64..1.0],
        )
            .prop_map(|(mu, lam_extra, alpha, k, tau, cpp)| {
                let mu = 10f64.powf(mu);
                PhysicalParams {
                    mu,
                    // lambda >= 2 mu keeps lambda_red >= 1
                    lambda: 2.0 * mu * 10f64.powf(lam_extra),
                    alpha: 10f64.powf(alpha),
                    k: 10f64.powf(k),
                    tau: 10f64.powf(tau),
                    c_pp: if cpp == 0.0 { 0.0 } else { 10f64.powf(cpp) },
                }
            })
    }

    proptest! {
        #[test]
        fn rho_gamma_bounds(p in arb_phys()) {
            let (r, _) = reduce(&p).unwrap();
            prop_assert!(r.rho() <= r.lambda() && r.rho() <= r.rp_inv());
            prop_assert!(r.gamma() >= 1.0 / r.rho() && r.gamma() >= r.alpha_p());
        }

        #[test]
        fn monotone_in_storage_and_time_step(p in arb_phys(), factor in 1.0f64..100.0) {
            let (r, _) = reduce(&p).unwrap();
            let more_storage = PhysicalParams { c_pp: p.c_pp * factor + 1e-3, ..p };
            let (r2, _) = reduce(&more_storage).unwrap();
            prop_assert!(r2.alpha_p() >= r.alpha_p());
            let longer_step = PhysicalParams { tau: p.tau * factor, ..p };
            let (r3, _) = reduce(&longer_step).unwrap();
            prop_assert!(r3.rp_inv() <= r.rp_inv());
        }

        #[test]
        fn scaling_round_trip(p in arb_phys(), xs in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let (_, s) = reduce(&p).unwrap();
            for (back, x) in s.u_to_physical(&s.u_to_reduced(&xs)).iter().zip(&xs) {
                prop_assert!((back - x).abs() <= 1e-14 * x.abs().max(1e-300));
            }
            for (back, x) in s.v_to_physical(&s.v_to_reduced(&xs)).iter().zip(&xs) {
                prop_assert!((back - x).abs() <= 1e-14 * x.abs().max(1e-300));
            }
            for (back, x) in s.p_to_physical(&s.p_to_reduced(&xs)).iter().zip(&xs) {
                prop_assert!((back - x).abs() <= 1e-14 * x.abs().max(1e-300));
            }
            prop_assert!(s.u_scale > 0.0 && s.v_scale > 0.0 && s.p_scale > 0.0);
            prop_assert!(s.f_scale > 0.0 && s.g_scale > 0.0);
        }
    }
}
