//! Contact status optimization: joint estimation of per-tip contact forces
//! and refined tip-object distances.
//!
//! Tip forces live in linearized Coulomb friction cones, expressed as
//! non-negative combinations of four edge directions. The optimizer balances
//! five energies — unexplained resultant force, unexplained resultant moment,
//! force magnitude regularization, the force·distance contact coupling, and
//! distance smoothness against the kinematic extraction — subject to
//! non-negativity of both the cone coefficients and the refined distances.
//!
//! Residuals are nondimensionalized (forces by `force_scale`, lengths by
//! `length_scale`) so one damping parameter conditions the whole system; see
//! [`SolverConfig`] for the weights.

use nalgebra::{DMatrix, DVector, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact_detection::{ContactStatus, TIP_COUNT};
use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};
use crate::object_model::PhysicalProperties;
use crate::rigid_dynamics::DynamicsState;

const COEFFS_PER_TIP: usize = 4;
const VAR_COUNT: usize = TIP_COUNT * COEFFS_PER_TIP + TIP_COUNT; // 20 + 5
const ROW_COUNT: usize = 3 + 3 + 20 + 20 + TIP_COUNT; // 51

/// Linearized friction cone at a contact point.
#[derive(Debug, Clone, Copy)]
pub struct FrictionCone {
    /// Cone apex: the contact point in the live frame.
    pub apex: Vector3<f64>,
    /// Unit axis pointing into the object (`-n` for outward normal `n`).
    pub axis: Vector3<f64>,
    /// Friction coefficient.
    pub mu: f64,
    /// Edge directions as columns; each is unit length and makes the same
    /// angle `atan(mu)` with the axis.
    pub basis: Matrix3x4<f64>,
}

/// Build the polyhedral cone basis at `point` with outward normal `n_outward`.
///
/// The tangent frame is deterministic: the seed axis is the global axis least
/// aligned with the cone axis (ties resolve x before y before z).
pub fn friction_cone_basis(
    point: &Vector3<f64>,
    n_outward: &Vector3<f64>,
    mu: f64,
) -> Result<FrictionCone> {
    if (n_outward.norm() - 1.0).abs() > 1e-3 {
        return Err(Error::Parameter(format!(
            "normal must be unit length (got |n| = {})",
            n_outward.norm()
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::Parameter(format!("mu {mu} must be positive")));
    }
    let axis = -n_outward.normalize();

    let alignment = [axis.x.abs(), axis.y.abs(), axis.z.abs()];
    let mut seed_idx = 0;
    for i in 1..3 {
        if alignment[i] < alignment[seed_idx] {
            seed_idx = i;
        }
    }
    let mut seed = Vector3::zeros();
    seed[seed_idx] = 1.0;

    let t1 = axis.cross(&seed).normalize();
    let t2 = axis.cross(&t1);

    let mut basis = Matrix3x4::zeros();
    for (k, t) in [t1, t2, -t1, -t2].iter().enumerate() {
        let edge = (axis + mu * t).normalize();
        basis.set_column(k, &edge);
    }

    Ok(FrictionCone {
        apex: *point,
        axis,
        mu,
        basis,
    })
}

/// Weights, scales, and iteration controls for the contact optimizer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda_force: f64,
    pub lambda_moment: f64,
    pub lambda_reg: f64,
    pub lambda_contact: f64,
    pub lambda_smooth: f64,
    /// Force nondimensionalization, newtons. `None` resolves to `mass * |gravity|`.
    pub force_scale: Option<f64>,
    /// Length nondimensionalization, meters.
    pub length_scale: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the projected gradient of the scaled problem.
    pub gradient_tolerance: f64,
    pub damping_init: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Object mass used for dynamics, kg.
    pub mass: f64,
    /// Friction coefficient.
    pub mu: f64,
    /// Gravitational acceleration, m/s².
    #[serde(with = "crate::object_model::vec3_array")]
    pub gravity: Vector3<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_force: 1.0,
            lambda_moment: 1.0,
            lambda_reg: 1e-4,
            lambda_contact: 1.0,
            lambda_smooth: 0.1,
            force_scale: None,
            length_scale: 0.01,
            max_iterations: 80,
            gradient_tolerance: 1e-9,
            damping_init: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.2,
            mass: 0.2,
            mu: 0.7,
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }
}

impl SolverConfig {
    pub fn resolved_force_scale(&self) -> f64 {
        self.force_scale
            .unwrap_or_else(|| self.mass * self.gravity.norm())
    }

    /// Weight of the object, newtons (`G_o = m |g|`).
    pub fn object_weight(&self) -> f64 {
        self.mass * self.gravity.norm()
    }
}

/// Per-energy-term values of the (weighted, nondimensional) objective.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub force: f64,
    pub moment: f64,
    pub reg: f64,
    pub contact: f64,
    pub smooth: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.force + self.moment + self.reg + self.contact + self.smooth
    }

    fn from_residual(r: &DVector<f64>) -> Self {
        let sq = |range: std::ops::Range<usize>| r.rows(range.start, range.len()).norm_squared();
        Self {
            force: sq(0..3),
            moment: sq(3..6),
            reg: sq(6..26),
            contact: sq(26..46),
            smooth: sq(46..51),
        }
    }
}

/// One tip's share of the force solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct TipForce {
    /// Non-negative cone coefficients, newtons.
    pub coefficients: [f64; COEFFS_PER_TIP],
    /// World-frame force `F = A f`, newtons.
    pub force: Vector3<f64>,
    /// Normal pressure `axisᵀ F >= 0`, newtons.
    pub pressure: f64,
    /// Refined tip-object distance, meters.
    pub refined_distance: f64,
}

/// Output of the contact status optimization.
#[derive(Debug, Clone)]
pub struct ForceSolution {
    pub tips: [TipForce; TIP_COUNT],
    pub energies: EnergyTerms,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted-step objective sequence (non-increasing).
    pub energy_history: Vec<f64>,
    pub gradient_norm: f64,
}

impl ForceSolution {
    pub fn zero(cs: &ContactStatus) -> Self {
        let mut tips = [TipForce::default(); TIP_COUNT];
        for (out, tip) in tips.iter_mut().zip(cs.tips.iter()) {
            out.refined_distance = tip.distance;
        }
        Self {
            tips,
            energies: EnergyTerms::default(),
            iterations: 0,
            converged: true,
            energy_history: vec![],
            gradient_norm: 0.0,
        }
    }
}

/// Everything fixed during one solve: cone geometry, scaled lever arms,
/// scaled constant terms, and the validity mask.
struct ProblemContext {
    cones: [FrictionCone; TIP_COUNT],
    valid: [bool; TIP_COUNT],
    /// (p_i − com) / length_scale for valid tips.
    lever: [Vector3<f64>; TIP_COUNT],
    /// Initial distances scaled by length_scale.
    d0: [f64; TIP_COUNT],
    /// (m g − m v̇) / force_scale.
    force_bias: Vector3<f64>,
    /// τ / (force_scale · length_scale).
    torque_scaled: Vector3<f64>,
    sqrt_lf: f64,
    sqrt_lm: f64,
    sqrt_lr: f64,
    sqrt_lt: f64,
    sqrt_ls: f64,
}

impl ProblemContext {
    fn new(
        cs: &ContactStatus,
        dynamics: &DynamicsState,
        props: &PhysicalProperties,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let s_f = cfg.resolved_force_scale();
        let s_l = cfg.length_scale;
        if !(s_f > 0.0) || !(s_l > 0.0) {
            return Err(Error::Parameter("scales must be positive".into()));
        }
        let fallback = FrictionCone {
            apex: Vector3::zeros(),
            axis: -Vector3::z(),
            mu: cfg.mu,
            basis: Matrix3x4::zeros(),
        };
        let mut cones = [fallback; TIP_COUNT];
        let mut valid = [false; TIP_COUNT];
        let mut lever = [Vector3::zeros(); TIP_COUNT];
        let mut d0 = [0.0; TIP_COUNT];
        for (i, tip) in cs.tips.iter().enumerate() {
            d0[i] = tip.distance / s_l;
            if tip.valid {
                cones[i] = friction_cone_basis(&tip.point, &tip.normal, cfg.mu)?;
                valid[i] = true;
                lever[i] = (tip.point - dynamics.com_live) / s_l;
            }
        }
        let mass = props.mass;
        let force_bias = (mass * cfg.gravity - mass * dynamics.linear_acceleration) / s_f;
        let torque_scaled = dynamics.driving_torque / (s_f * s_l);
        Ok(Self {
            cones,
            valid,
            lever,
            d0,
            force_bias,
            torque_scaled,
            sqrt_lf: cfg.lambda_force.sqrt(),
            sqrt_lm: cfg.lambda_moment.sqrt(),
            sqrt_lr: cfg.lambda_reg.sqrt(),
            sqrt_lt: cfg.lambda_contact.sqrt(),
            sqrt_ls: cfg.lambda_smooth.sqrt(),
        })
    }

    /// Residual vector at scaled variables `x = [φ₀..φ₁₉, δ₀..δ₄]`.
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(ROW_COUNT);

        let mut force_sum = self.force_bias;
        let mut moment_sum = -self.torque_scaled;
        for i in 0..TIP_COUNT {
            if !self.valid[i] {
                continue;
            }
            let phi = x.fixed_rows::<4>(4 * i);
            let f: Vector3<f64> = self.cones[i].basis * phi;
            force_sum += f;
            moment_sum += self.lever[i].cross(&f);
        }
        for a in 0..3 {
            r[a] = self.sqrt_lf * force_sum[a];
            r[3 + a] = self.sqrt_lm * moment_sum[a];
        }

        for i in 0..TIP_COUNT {
            let delta = x[20 + i];
            for k in 0..COEFFS_PER_TIP {
                let phi = x[4 * i + k];
                r[6 + 4 * i + k] = self.sqrt_lr * phi;
                if self.valid[i] {
                    r[26 + 4 * i + k] = self.sqrt_lt * delta * phi;
                }
            }
            if self.valid[i] {
                r[46 + i] = self.sqrt_ls * (delta - self.d0[i]);
            }
        }
        r
    }

    /// Analytic Jacobian of [`Self::residual`].
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(ROW_COUNT, VAR_COUNT);
        for i in 0..TIP_COUNT {
            let delta = x[20 + i];
            for k in 0..COEFFS_PER_TIP {
                let col = 4 * i + k;
                if self.valid[i] {
                    let edge = self.cones[i].basis.column(k);
                    let arm = self.lever[i].cross(&edge.into_owned());
                    for a in 0..3 {
                        j[(a, col)] = self.sqrt_lf * edge[a];
                        j[(3 + a, col)] = self.sqrt_lm * arm[a];
                    }
                    j[(26 + 4 * i + k, col)] = self.sqrt_lt * delta;
                    j[(26 + 4 * i + k, 20 + i)] = self.sqrt_lt * x[col];
                }
                j[(6 + 4 * i + k, col)] = self.sqrt_lr;
            }
            if self.valid[i] {
                j[(46 + i, 20 + i)] = self.sqrt_ls;
            }
        }
        j
    }
}

fn pack_scaled(
    forces: &[[f64; COEFFS_PER_TIP]; TIP_COUNT],
    distances: &[f64; TIP_COUNT],
    cfg: &SolverConfig,
) -> DVector<f64> {
    let s_f = cfg.resolved_force_scale();
    let s_l = cfg.length_scale;
    let mut x = DVector::zeros(VAR_COUNT);
    for i in 0..TIP_COUNT {
        for k in 0..COEFFS_PER_TIP {
            x[4 * i + k] = forces[i][k] / s_f;
        }
        x[20 + i] = distances[i] / s_l;
    }
    x
}

/// Evaluate the stacked weighted residual and per-term energies at a given
/// point (physical units: newtons and meters).
pub fn evaluate_energy(
    forces: &[[f64; COEFFS_PER_TIP]; TIP_COUNT],
    distances: &[f64; TIP_COUNT],
    cs: &ContactStatus,
    dynamics: &DynamicsState,
    props: &PhysicalProperties,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, EnergyTerms)> {
    let ctx = ProblemContext::new(cs, dynamics, props, cfg)?;
    let r = ctx.residual(&pack_scaled(forces, distances, cfg));
    let terms = EnergyTerms::from_residual(&r);
    Ok((r, terms))
}

/// Residual and analytic Jacobian at a given point, for gradient validation.
pub fn evaluate_residual_jacobian(
    forces: &[[f64; COEFFS_PER_TIP]; TIP_COUNT],
    distances: &[f64; TIP_COUNT],
    cs: &ContactStatus,
    dynamics: &DynamicsState,
    props: &PhysicalProperties,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let ctx = ProblemContext::new(cs, dynamics, props, cfg)?;
    let x = pack_scaled(forces, distances, cfg);
    Ok((ctx.residual(&x), ctx.jacobian(&x)))
}

/// Minimize the contact energy over cone coefficients and refined distances.
///
/// Initialization: coefficients from the warm start (zeros otherwise),
/// distances from the extracted contact status. Refined distances are
/// written back into `cs`. Non-convergence within the iteration budget
/// returns the best iterate with `converged = false`; only non-finite
/// residuals are an error.
pub fn solve_contact_forces(
    cs: &mut ContactStatus,
    dynamics: &DynamicsState,
    props: &PhysicalProperties,
    cfg: &SolverConfig,
    warm_start: Option<&ForceSolution>,
) -> Result<ForceSolution> {
    let ctx = ProblemContext::new(cs, dynamics, props, cfg)?;
    let s_f = cfg.resolved_force_scale();
    let s_l = cfg.length_scale;

    let mut x0 = DVector::zeros(VAR_COUNT);
    if let Some(warm) = warm_start {
        for i in 0..TIP_COUNT {
            if ctx.valid[i] {
                for k in 0..COEFFS_PER_TIP {
                    x0[4 * i + k] = (warm.tips[i].coefficients[k] / s_f).max(0.0);
                }
            }
        }
    }
    for i in 0..TIP_COUNT {
        x0[20 + i] = ctx.d0[i].max(0.0);
    }

    let mut lo = DVector::zeros(VAR_COUNT);
    let mut hi = DVector::from_element(VAR_COUNT, f64::INFINITY);
    for i in 0..TIP_COUNT {
        if !ctx.valid[i] {
            // Invalid tips keep their extracted distance.
            lo[20 + i] = ctx.d0[i];
            hi[20 + i] = ctx.d0[i];
        }
    }

    let opts = LmOptions {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.gradient_tolerance,
        damping_init: cfg.damping_init,
        damping_increase: cfg.damping_increase,
        damping_decrease: cfg.damping_decrease,
    };
    let outcome = lm::minimize(
        &|x| ctx.residual(x),
        &|x| ctx.jacobian(x),
        x0,
        &lo,
        &hi,
        &opts,
    )?;

    let final_residual = ctx.residual(&outcome.x);
    let energies = EnergyTerms::from_residual(&final_residual);

    let mut tips = [TipForce::default(); TIP_COUNT];
    for i in 0..TIP_COUNT {
        let mut coeffs = [0.0; COEFFS_PER_TIP];
        let mut phi = nalgebra::Vector4::zeros();
        for k in 0..COEFFS_PER_TIP {
            let value = outcome.x[4 * i + k].max(0.0);
            coeffs[k] = value * s_f;
            phi[k] = value;
        }
        let force: Vector3<f64> = if ctx.valid[i] {
            ctx.cones[i].basis * phi * s_f
        } else {
            Vector3::zeros()
        };
        let refined = outcome.x[20 + i].max(0.0) * s_l;
        tips[i] = TipForce {
            coefficients: if ctx.valid[i] { coeffs } else { [0.0; 4] },
            force,
            pressure: ctx.cones[i].axis.dot(&force).max(0.0),
            refined_distance: refined,
        };
        cs.tips[i].refined_distance = refined;
    }

    Ok(ForceSolution {
        tips,
        energies,
        iterations: outcome.iterations,
        converged: outcome.converged,
        energy_history: outcome.cost_history,
        gradient_norm: outcome.gradient_norm,
    })
}

/// Total force exerted by all tips, newtons.
pub fn resultant_force(sol: &ForceSolution) -> Vector3<f64> {
    sol.tips.iter().map(|t| t.force).sum()
}

/// Angle between a force and its cone axis, radians. Zero-force tips return 0.
pub fn cone_angle(force: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
    let norm = force.norm();
    if norm < 1e-12 {
        return 0.0;
    }
    (force.dot(axis) / norm).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_detection::TipContact;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn props() -> PhysicalProperties {
        PhysicalProperties {
            mass: 0.2,
            center_of_mass: Vector3::zeros(),
            inertia: Matrix3::from_diagonal(&Vector3::new(1.33e-3, 1.33e-3, 1.33e-3)),
        }
    }

    fn rest_dynamics() -> DynamicsState {
        DynamicsState::at_rest(&crate::object_model::RigidPose::identity(), &props())
    }

    fn invalid_tip() -> TipContact {
        TipContact {
            point: Vector3::zeros(),
            normal: Vector3::z(),
            distance: 0.01,
            refined_distance: 0.01,
            valid: false,
        }
    }

    fn contact(point: Vector3<f64>, normal: Vector3<f64>, distance: f64) -> TipContact {
        TipContact {
            point,
            normal,
            distance,
            refined_distance: distance,
            valid: true,
        }
    }

    /// Two tips pinching a 10 cm box on opposite faces, level with the
    /// center of mass.
    fn pinch_status(gap_b: f64) -> ContactStatus {
        let mut tips = [invalid_tip(); TIP_COUNT];
        tips[0] = contact(Vector3::new(-0.05, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 0.0);
        tips[1] = contact(Vector3::new(0.05, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), gap_b);
        ContactStatus { tips }
    }

    #[test]
    fn cone_columns_make_equal_axis_angle() {
        let cone = friction_cone_basis(&Vector3::zeros(), &Vector3::z(), 0.7).unwrap();
        assert_relative_eq!(cone.axis, -Vector3::z(), epsilon = 1e-12);
        let expected = 1.0 / (1.0 + 0.49f64).sqrt();
        for k in 0..4 {
            let col = cone.basis.column(k);
            assert_relative_eq!(col.norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(cone.axis.dot(&col.into_owned()), expected, epsilon = 1e-9);
            // z components are all -1/sqrt(1.49)
            assert_relative_eq!(col[2], -expected, epsilon = 1e-12);
        }
        // Sum of columns is parallel to the axis.
        let sum: Vector3<f64> = (0..4).map(|k| cone.basis.column(k).into_owned()).sum();
        assert!(sum.cross(&cone.axis).norm() < 1e-12);
    }

    #[test]
    fn equal_coefficients_give_axial_force() {
        let cone = friction_cone_basis(&Vector3::zeros(), &Vector3::new(0.0, 1.0, 0.0), 0.7).unwrap();
        let f: Vector3<f64> = cone.basis * nalgebra::Vector4::from_element(1.0);
        assert!(f.cross(&cone.axis).norm() < 1e-12);
        assert!(f.dot(&cone.axis) > 0.0);
    }

    #[test]
    fn nonneg_combinations_stay_in_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cone = friction_cone_basis(
            &Vector3::zeros(),
            &Vector3::new(0.3, -0.4, 0.866).normalize(),
            0.7,
        )
        .unwrap();
        let max_angle = 0.7f64.atan();
        for _ in 0..1000 {
            let f: Vector3<f64> = cone.basis
                * nalgebra::Vector4::new(
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.0..2.0),
                );
            assert!(cone_angle(&f, &cone.axis) <= max_angle + 1e-9);
        }
    }

    #[test]
    fn bad_normal_is_rejected() {
        assert!(friction_cone_basis(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.2), 0.7).is_err());
    }

    #[test]
    fn free_fall_energy_is_zero() {
        let cs = ContactStatus {
            tips: [invalid_tip(); TIP_COUNT],
        };
        let mut dynamics = rest_dynamics();
        dynamics.linear_acceleration = Vector3::new(0.0, 0.0, -9.81);
        let (_, terms) = evaluate_energy(
            &[[0.0; 4]; TIP_COUNT],
            &[0.01; TIP_COUNT],
            &cs,
            &dynamics,
            &props(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(terms.total() < 1e-20, "terms {terms:?}");
    }

    #[test]
    fn static_unbalanced_gravity_shows_in_force_term() {
        let cfg = SolverConfig::default();
        let cs = pinch_status(0.0);
        let (r, terms) = evaluate_energy(
            &[[0.0; 4]; TIP_COUNT],
            &[0.0; TIP_COUNT],
            &cs,
            &rest_dynamics(),
            &props(),
            &cfg,
        )
        .unwrap();
        // Residual is m g / force_scale = unit magnitude with the default scale.
        let force_rows = r.rows(0, 3).norm();
        assert_relative_eq!(force_rows, 1.0, epsilon = 1e-12);
        assert_relative_eq!(terms.force, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let cfg = SolverConfig::default();
        let cs = pinch_status(0.004);
        let mut dynamics = rest_dynamics();
        dynamics.linear_acceleration = Vector3::new(0.3, -0.1, 0.2);
        dynamics.driving_torque = Vector3::new(0.002, 0.001, -0.003);
        let p = props();

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut max_rel: f64 = 0.0;
        for _ in 0..100 {
            let mut forces = [[0.0; 4]; TIP_COUNT];
            let mut dist = [0.0; TIP_COUNT];
            for tip in forces.iter_mut() {
                for c in tip.iter_mut() {
                    *c = rng.gen_range(0.0..3.0);
                }
            }
            for d in dist.iter_mut() {
                *d = rng.gen_range(0.0..0.01);
            }
            let (_, jac) =
                evaluate_residual_jacobian(&forces, &dist, &cs, &dynamics, &p, &cfg).unwrap();

            // Central differences in the scaled variables.
            let s_f = cfg.resolved_force_scale();
            let s_l = cfg.length_scale;
            let h = 1e-6;
            for col in 0..VAR_COUNT {
                let mut fp = forces;
                let mut fm = forces;
                let mut dp = dist;
                let mut dm = dist;
                if col < 20 {
                    fp[col / 4][col % 4] += h * s_f;
                    fm[col / 4][col % 4] -= h * s_f;
                } else {
                    dp[col - 20] += h * s_l;
                    dm[col - 20] -= h * s_l;
                }
                let (rp, _) = evaluate_energy(&fp, &dp, &cs, &dynamics, &p, &cfg).unwrap();
                let (rm, _) = evaluate_energy(&fm, &dm, &cs, &dynamics, &p, &cfg).unwrap();
                for row in 0..ROW_COUNT {
                    let fd = (rp[row] - rm[row]) / (2.0 * h);
                    let rel = (fd - jac[(row, col)]).abs() / (1.0 + jac[(row, col)].abs());
                    max_rel = max_rel.max(rel);
                }
            }
        }
        assert!(max_rel < 1e-4, "max relative Jacobian error {max_rel}");
    }

    #[test]
    fn two_tip_static_grasp_balances_gravity() {
        let cfg = SolverConfig::default();
        let mut cs = pinch_status(0.0);
        let sol =
            solve_contact_forces(&mut cs, &rest_dynamics(), &props(), &cfg, None).unwrap();

        let total = resultant_force(&sol);
        let weight = cfg.object_weight();
        assert!(
            (total - Vector3::new(0.0, 0.0, weight)).norm() < 1e-3,
            "resultant {total:?}"
        );

        // Minimum-norm forces sit on the cone boundary: pressure = (G/2)/mu.
        let expected_pressure = weight / 2.0 / cfg.mu;
        for i in 0..2 {
            let tip = &sol.tips[i];
            assert_relative_eq!(tip.pressure, expected_pressure, max_relative = 0.05);
            let tangential = (tip.force - tip.pressure * cs_axis(&cs, i)).norm();
            assert_relative_eq!(tangential, weight / 2.0, max_relative = 0.05);
        }
        assert!(sol.converged);
    }

    fn cs_axis(cs: &ContactStatus, i: usize) -> Vector3<f64> {
        -cs.tips[i].normal
    }

    #[test]
    fn free_fall_solve_keeps_forces_zero() {
        let cfg = SolverConfig::default();
        let mut cs = ContactStatus {
            tips: [invalid_tip(); TIP_COUNT],
        };
        let mut dynamics = rest_dynamics();
        dynamics.linear_acceleration = cfg.gravity;
        let sol = solve_contact_forces(&mut cs, &dynamics, &props(), &cfg, None).unwrap();
        let scale = cfg.resolved_force_scale();
        for tip in &sol.tips {
            assert!(tip.force.norm() < 1e-6 * scale);
        }
        for (tip, sol_tip) in cs.tips.iter().zip(sol.tips.iter()) {
            assert_eq!(sol_tip.refined_distance, tip.distance);
        }
    }

    #[test]
    fn opposite_tip_contact_is_recovered() {
        // Tip 0 touches; tip 1 sits 8 mm off the opposite face. Static object:
        // balancing the moment requires recovering tip 1.
        let cfg = SolverConfig::default();
        let mut cs = pinch_status(0.008);
        let sol =
            solve_contact_forces(&mut cs, &rest_dynamics(), &props(), &cfg, None).unwrap();

        let d_b = sol.tips[1].refined_distance;
        assert!(
            d_b < 0.2 * 0.008,
            "refined distance {d_b} not reduced enough"
        );
        assert!(sol.tips[1].pressure > 0.0);

        // Direct substitution: the force system balances gravity and torque.
        let total = resultant_force(&sol);
        let weight = cfg.object_weight();
        assert!(
            (total - Vector3::new(0.0, 0.0, weight)).norm() < 0.1,
            "force imbalance {:?}",
            total - Vector3::new(0.0, 0.0, weight)
        );
        let com = rest_dynamics().com_live;
        let torque: Vector3<f64> = sol
            .tips
            .iter()
            .zip(cs.tips.iter())
            .filter(|(_, c)| c.valid)
            .map(|(s, c)| (c.point - com).cross(&s.force))
            .sum();
        assert!(torque.norm() < 0.01, "torque residual {torque:?}");
    }

    #[test]
    fn output_is_feasible_and_descent_is_monotone() {
        let cfg = SolverConfig::default();
        let mut cs = pinch_status(0.008);
        let mut dynamics = rest_dynamics();
        dynamics.linear_acceleration = Vector3::new(0.5, 0.2, -0.3);
        let sol = solve_contact_forces(&mut cs, &dynamics, &props(), &cfg, None).unwrap();
        for tip in &sol.tips {
            for &c in &tip.coefficients {
                assert!(c >= 0.0);
            }
            assert!(tip.refined_distance >= 0.0);
            assert!(tip.pressure >= -1e-9);
        }
        for pair in sol.energy_history.windows(2) {
            assert!(pair[1] <= pair[0], "energy increased: {pair:?}");
        }
    }

    #[test]
    fn forces_stay_in_their_cones() {
        let cfg = SolverConfig::default();
        let max_angle = cfg.mu.atan() + 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let mut cs = pinch_status(rng.gen_range(0.0..0.009));
            let mut dynamics = rest_dynamics();
            dynamics.linear_acceleration = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            dynamics.driving_torque = Vector3::new(
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
            );
            let sol = solve_contact_forces(&mut cs, &dynamics, &props(), &cfg, None).unwrap();
            for (i, tip) in sol.tips.iter().enumerate() {
                if cs.tips[i].valid && tip.force.norm() > 1e-12 {
                    let angle = cone_angle(&tip.force, &cs_axis(&cs, i));
                    assert!(angle <= max_angle, "tip {i} angle {angle}");
                }
            }
        }
    }

    #[test]
    fn doubling_mass_doubles_forces() {
        let cfg1 = SolverConfig::default();
        let cfg2 = SolverConfig {
            mass: 0.4,
            ..cfg1
        };
        let mut cs1 = pinch_status(0.0);
        let mut cs2 = pinch_status(0.0);
        let sol1 = solve_contact_forces(&mut cs1, &rest_dynamics(), &props(), &cfg1, None).unwrap();
        let p2 = PhysicalProperties {
            mass: 0.4,
            ..props()
        };
        let sol2 = solve_contact_forces(&mut cs2, &rest_dynamics(), &p2, &cfg2, None).unwrap();
        for i in 0..2 {
            let ratio = sol2.tips[i].pressure / sol1.tips[i].pressure;
            assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_solutions() {
        let cfg = SolverConfig::default();
        let run = || {
            let mut cs = pinch_status(0.006);
            let mut dynamics = rest_dynamics();
            dynamics.linear_acceleration = Vector3::new(0.123, -0.456, 0.789);
            solve_contact_forces(&mut cs, &dynamics, &props(), &cfg, None).unwrap()
        };
        let a = run();
        let b = run();
        for i in 0..TIP_COUNT {
            for k in 0..4 {
                assert_eq!(
                    a.tips[i].coefficients[k].to_bits(),
                    b.tips[i].coefficients[k].to_bits()
                );
            }
            assert_eq!(
                a.tips[i].refined_distance.to_bits(),
                b.tips[i].refined_distance.to_bits()
            );
        }
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn warm_start_reaches_the_same_optimum() {
        let cfg = SolverConfig::default();
        let mut cs = pinch_status(0.0);
        let cold = solve_contact_forces(&mut cs, &rest_dynamics(), &props(), &cfg, None).unwrap();
        let mut cs2 = pinch_status(0.0);
        let warm =
            solve_contact_forces(&mut cs2, &rest_dynamics(), &props(), &cfg, Some(&cold)).unwrap();
        assert!((resultant_force(&warm) - resultant_force(&cold)).norm() < 1e-6);
        assert!(warm.iterations <= cold.iterations);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let cfg = SolverConfig::default();
        let mut cs = pinch_status(0.0);
        let mut dynamics = rest_dynamics();
        dynamics.linear_acceleration = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(
            solve_contact_forces(&mut cs, &dynamics, &props(), &cfg, None),
            Err(Error::NonFiniteEnergy)
        ));
    }
}
