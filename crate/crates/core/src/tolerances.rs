//! Tolerance record shared by the library checks, the suite runner and the
//! acceptance tests. Every threshold a check compares against lives here.

use serde::{Deserialize, Serialize};

/// Exact algebra in f64 (contractions, inverses, antisymmetrizations).
pub const ALGEBRAIC: f64 = 1e-12;

/// Determinants below this magnitude count as degenerate.
pub const DEGENERATE_DET: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Pure algebraic identities.
    pub algebraic: f64,
    /// Projector algebra and frame orthonormality with analytic jets.
    pub projector: f64,
    /// Minimum fitted convergence order for an O(h^2) claim.
    pub min_order: f64,
    /// Residuals below this floor at every level count as exactly converged.
    pub roundoff_floor: f64,
    /// Finest-level bound on the adjusted Ricci tensor.
    pub adjusted_ricci: f64,
    /// Relative error of the sphere Gauss-Bonnet integral.
    pub gauss_bonnet_rel: f64,
    /// Relative change of the Gauss-Bonnet integral under deformation.
    pub topological_rel: f64,
    /// Absolute bound (in units of 8 pi) for the flat torus integral.
    pub torus_abs: f64,
    /// Pointwise relative agreement of the two inner potentials.
    pub agreement_rel: f64,
    /// Relative slice dependence of the symplectic form.
    pub slice_rel: f64,
    /// Floor guarding the relative slice comparison.
    pub slice_floor: f64,
    /// Relative area error of the relaxed catenoid.
    pub relax_area_rel: f64,
    /// Tangency test: residual bound is `tangent_coeff * h^2 + tangent_floor`.
    pub tangent_coeff: f64,
    pub tangent_floor: f64,
    /// Multiplier applied to variation error estimates in linearity and
    /// nilpotency checks.
    pub variation_factor: f64,
    /// Ratio by which the theta-term potential change must exceed the
    /// equation-of-motion change.
    pub theta_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: ALGEBRAIC,
            projector: 1e-10,
            min_order: 1.8,
            roundoff_floor: 1e-11,
            adjusted_ricci: 1e-3,
            gauss_bonnet_rel: 1e-3,
            topological_rel: 2e-3,
            torus_abs: 1e-3,
            agreement_rel: 1e-6,
            slice_rel: 1e-3,
            slice_floor: 1e-12,
            relax_area_rel: 5e-3,
            tangent_coeff: 2.0,
            tangent_floor: 1e-6,
            variation_factor: 2.0,
            theta_ratio: 10.0,
        }
    }
}
