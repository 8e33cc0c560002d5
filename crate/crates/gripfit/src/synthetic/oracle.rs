//! Independent force oracle: exact minimizer of the force/moment/regularizer
//! energy over non-negative cone coefficients with distances held fixed.
//!
//! Uses Lawson–Hanson non-negative least squares (active set) — a different
//! algorithm and a separate matrix assembly from the production solver — and
//! certifies its answer with an explicit KKT check, so it can stand as
//! ground truth for solver verification.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::contact_detection::{ContactStatus, TIP_COUNT};
use crate::error::{Error, Result};
use crate::force_solver::{friction_cone_basis, SolverConfig};
use crate::object_model::PhysicalProperties;
use crate::rigid_dynamics::DynamicsState;

/// Oracle output with the optimality certificate.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Per-tip cone coefficients, newtons (zero rows for invalid tips).
    pub coefficients: [[f64; 4]; TIP_COUNT],
    /// Per-tip world forces.
    pub forces: [Vector3<f64>; TIP_COUNT],
    /// Per-tip normal pressures, newtons.
    pub pressures: [f64; TIP_COUNT],
    /// Objective value in the solver's nondimensional units.
    pub objective: f64,
    /// Norm of the unexplained force residual, newtons.
    pub force_residual: f64,
    /// Norm of the unexplained moment residual, N·m.
    pub moment_residual: f64,
    /// Largest gradient magnitude over free coordinates (KKT stationarity).
    pub kkt_free_gradient: f64,
    /// Most negative gradient over active coordinates (KKT dual feasibility).
    pub kkt_active_gradient: f64,
}

/// Solve `min ‖M x − b‖²  s.t. x >= 0` by the Lawson–Hanson active-set method.
fn nonnegative_least_squares(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * m.amax().max(1.0) * b.amax().max(1.0);

    let solve_passive = |passive: &[bool], x_hint: &DVector<f64>| -> DVector<f64> {
        let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        if cols.is_empty() {
            return DVector::zeros(n);
        }
        let m_p = m.select_columns(cols.iter());
        // Normal equations are adequate here: the regularization rows make
        // every column subset well conditioned.
        let mtm = m_p.transpose() * &m_p;
        let mtb = m_p.transpose() * b;
        let z = mtm
            .cholesky()
            .map(|c| c.solve(&mtb))
            .unwrap_or_else(|| m_p.svd(true, true).solve(&mtb, 1e-14).unwrap());
        let mut full = x_hint.clone();
        for (slot, &i) in cols.iter().enumerate() {
            full[i] = z[slot];
        }
        full
    };

    for _outer in 0..10 * n.max(1) {
        let residual = b - m * &x;
        let w = m.transpose() * residual;
        // Most-improving zero coordinate.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if !passive[i] && w[i] > tol {
                if best.map(|(_, bw)| w[i] > bw).unwrap_or(true) {
                    best = Some((i, w[i]));
                }
            }
        }
        let Some((enter, _)) = best else {
            break;
        };
        passive[enter] = true;

        loop {
            let mut z = solve_passive(&passive, &DVector::zeros(n));
            for i in 0..n {
                if !passive[i] {
                    z[i] = 0.0;
                }
            }
            // All passive coordinates positive: accept.
            let violating: Vec<usize> = (0..n)
                .filter(|&i| passive[i] && z[i] <= 0.0)
                .collect();
            if violating.is_empty() {
                x = z;
                break;
            }
            // Step toward z until the first coordinate hits zero.
            let mut alpha = f64::INFINITY;
            for &i in &violating {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + alpha * (&z - &x);
            for i in 0..n {
                if passive[i] && x[i] <= tol.max(1e-15) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if alpha == 0.0 {
                // Entering column immediately infeasible; drop it for good.
                passive[enter] = false;
                break;
            }
        }
    }
    x
}

/// Assemble the oracle's stacked system for the valid tips.
///
/// Rows: √λ_f·(force balance)/s_f, √λ_m·(moment balance)/(s_f·s_l),
/// √λ_reg·f/s_f, and √λ_tac·(d_i/s_l)·f/s_f with distances fixed at the
/// extracted values. Column order follows tips then edges.
fn assemble(
    cs: &ContactStatus,
    dynamics: &DynamicsState,
    props: &PhysicalProperties,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<usize>, Vec<Vector3<f64>>)> {
    let s_f = cfg.resolved_force_scale();
    let s_l = cfg.length_scale;
    let columns: Vec<usize> = (0..TIP_COUNT).filter(|&i| cs.tips[i].valid).collect();
    let ncols = 4 * columns.len();
    let nrows = 6 + 2 * ncols;

    let mut m = DMatrix::zeros(nrows, ncols.max(1));
    let mut b = DVector::zeros(nrows);
    let mut axes = Vec::with_capacity(columns.len());

    let sqrt_lf = cfg.lambda_force.sqrt();
    let sqrt_lm = cfg.lambda_moment.sqrt();
    let sqrt_lr = cfg.lambda_reg.sqrt();
    let sqrt_lt = cfg.lambda_contact.sqrt();

    let mass = props.mass;
    let rhs_force = (mass * dynamics.linear_acceleration - mass * cfg.gravity) / s_f;
    let rhs_moment = dynamics.driving_torque / (s_f * s_l);
    for a in 0..3 {
        b[a] = sqrt_lf * rhs_force[a];
        b[3 + a] = sqrt_lm * rhs_moment[a];
    }

    for (slot, &i) in columns.iter().enumerate() {
        let tip = &cs.tips[i];
        let cone = friction_cone_basis(&tip.point, &tip.normal, cfg.mu)?;
        axes.push(cone.axis);
        let lever = (tip.point - dynamics.com_live) / s_l;
        for k in 0..4 {
            let col = 4 * slot + k;
            let edge = cone.basis.column(k).into_owned();
            let arm = lever.cross(&edge);
            for a in 0..3 {
                m[(a, col)] = sqrt_lf * edge[a];
                m[(3 + a, col)] = sqrt_lm * arm[a];
            }
            m[(6 + col, col)] = sqrt_lr;
            m[(6 + ncols + col, col)] = sqrt_lt * (tip.distance / s_l);
        }
    }
    Ok((m, b, columns, axes))
}

/// Exact minimizer of the contact energy with distances fixed, certified by
/// a KKT check.
pub fn qp_oracle(
    cs: &ContactStatus,
    dynamics: &DynamicsState,
    props: &PhysicalProperties,
    cfg: &SolverConfig,
) -> Result<OracleSolution> {
    let (m, b, columns, axes) = assemble(cs, dynamics, props, cfg)?;
    let s_f = cfg.resolved_force_scale();

    let x = if columns.is_empty() {
        DVector::zeros(0)
    } else {
        nonnegative_least_squares(&m, &b)
    };

    // KKT certificate: gradient of ‖Mx − b‖² is 2 Mᵀ(Mx − b).
    let mut kkt_free: f64 = 0.0;
    let mut kkt_active: f64 = 0.0;
    if !columns.is_empty() {
        let grad = m.transpose() * (&m * &x - &b) * 2.0;
        for i in 0..x.len() {
            if x[i] > 1e-12 {
                kkt_free = kkt_free.max(grad[i].abs());
            } else {
                kkt_active = kkt_active.min(grad[i]);
            }
        }
    }

    let mut coefficients = [[0.0; 4]; TIP_COUNT];
    let mut forces = [Vector3::zeros(); TIP_COUNT];
    let mut pressures = [0.0; TIP_COUNT];
    for (slot, &i) in columns.iter().enumerate() {
        let tip = &cs.tips[i];
        let cone = friction_cone_basis(&tip.point, &tip.normal, cfg.mu)?;
        let mut f = Vector3::zeros();
        for k in 0..4 {
            let c = x[4 * slot + k] * s_f;
            coefficients[i][k] = c;
            f += c * cone.basis.column(k).into_owned();
        }
        forces[i] = f;
        pressures[i] = axes[slot].dot(&f).max(0.0);
    }

    let residual = if columns.is_empty() {
        b.clone()
    } else {
        &b - &m * &x
    };
    let objective = residual.norm_squared();
    let s_l = cfg.length_scale;
    let force_residual = residual.rows(0, 3).norm() / cfg.lambda_force.sqrt() * s_f;
    let moment_residual = residual.rows(3, 3).norm() / cfg.lambda_moment.sqrt() * (s_f * s_l);

    if !objective.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }

    Ok(OracleSolution {
        coefficients,
        forces,
        pressures,
        objective,
        force_residual,
        moment_residual,
        kkt_free_gradient: kkt_free,
        kkt_active_gradient: kkt_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_detection::TipContact;
    use crate::object_model::RigidPose;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn props() -> PhysicalProperties {
        PhysicalProperties {
            mass: 0.2,
            center_of_mass: Vector3::zeros(),
            inertia: Matrix3::from_diagonal(&Vector3::repeat(1.33e-3)),
        }
    }

    fn rest() -> DynamicsState {
        DynamicsState::at_rest(&RigidPose::identity(), &props())
    }

    fn contact(point: Vector3<f64>, normal: Vector3<f64>, d: f64) -> TipContact {
        TipContact {
            point,
            normal,
            distance: d,
            refined_distance: d,
            valid: true,
        }
    }

    fn invalid() -> TipContact {
        TipContact {
            point: Vector3::zeros(),
            normal: Vector3::z(),
            distance: 0.01,
            refined_distance: 0.01,
            valid: false,
        }
    }

    fn pinch() -> ContactStatus {
        let mut tips = [invalid(); TIP_COUNT];
        tips[0] = contact(Vector3::new(-0.05, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), 0.0);
        tips[1] = contact(Vector3::new(0.05, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), 0.0);
        ContactStatus { tips }
    }

    #[test]
    fn pure_regularization_gives_zero() {
        let cfg = SolverConfig {
            lambda_force: 0.0,
            lambda_moment: 0.0,
            ..SolverConfig::default()
        };
        let sol = qp_oracle(&pinch(), &rest(), &props(), &cfg).unwrap();
        for i in 0..TIP_COUNT {
            assert!(sol.forces[i].norm() < 1e-12);
        }
    }

    #[test]
    fn two_tip_pinch_matches_hand_derived_pressure() {
        let cfg = SolverConfig::default();
        let sol = qp_oracle(&pinch(), &rest(), &props(), &cfg).unwrap();
        // Minimum-norm support: each tip carries half the weight as
        // tangential force on the cone boundary → pressure = G/(2 mu).
        let expected = 0.2 * 9.81 / 2.0 / 0.7;
        assert!(
            (sol.pressures[0] - expected).abs() < 1e-3,
            "pressure {} vs {expected}",
            sol.pressures[0]
        );
        assert!((sol.pressures[1] - expected).abs() < 1e-3);
        let total: Vector3<f64> = sol.forces.iter().sum();
        assert!((total - Vector3::new(0.0, 0.0, 0.2 * 9.81)).norm() < 1e-3);
        // Certificate holds.
        assert!(sol.kkt_free_gradient < 1e-8, "{}", sol.kkt_free_gradient);
        assert!(sol.kkt_active_gradient > -1e-8, "{}", sol.kkt_active_gradient);
    }

    #[test]
    fn random_feasible_perturbations_never_improve() {
        let cfg = SolverConfig::default();
        let cs = pinch();
        let sol = qp_oracle(&cs, &rest(), &props(), &cfg).unwrap();
        let (m, b, columns, _) = assemble(&cs, &rest(), &props(), &cfg).unwrap();
        let s_f = cfg.resolved_force_scale();
        let mut x = DVector::zeros(4 * columns.len());
        for (slot, &i) in columns.iter().enumerate() {
            for k in 0..4 {
                x[4 * slot + k] = sol.coefficients[i][k] / s_f;
            }
        }
        let base = (&b - &m * &x).norm_squared();
        assert_relative_eq!(base, sol.objective, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let mut xp = x.clone();
            for v in xp.iter_mut() {
                *v = (*v + rng.gen_range(-0.05..0.05)).max(0.0);
            }
            let perturbed = (&b - &m * &xp).norm_squared();
            assert!(perturbed >= base - 1e-9, "{perturbed} < {base}");
        }
    }

    #[test]
    fn no_valid_tips_returns_constant_objective() {
        let cfg = SolverConfig::default();
        let cs = ContactStatus {
            tips: [invalid(); TIP_COUNT],
        };
        let sol = qp_oracle(&cs, &rest(), &props(), &cfg).unwrap();
        // Unsupported static object: full gravity unexplained.
        assert_relative_eq!(sol.force_residual, 0.2 * 9.81, epsilon = 1e-9);
        assert_eq!(sol.objective, 1.0);
    }
}
