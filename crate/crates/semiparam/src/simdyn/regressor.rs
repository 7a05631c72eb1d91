//! Linear-in-parameters regressor of the planar arm: tau = Phi(q, qd, qdd)
//! theta_raw with grouped raw parameters per link (I + m c^2, m c, m) plus
//! per-joint viscous and Coulomb friction, and the numerical base-parameter
//! reduction via column-pivoted QR.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisFn;
use crate::error::{Error, Result};

use super::dynamics::{christoffel_matrix, Frame};
use super::{smooth_sign, RobotParams};

/// Grouped raw parameters: 3 links x (I + m c^2, m c, m) then F_v then F_c.
pub const NUM_RAW_PARAMS: usize = 15;

/// Raw parameter vector of a physical parameter set, in regressor order.
pub fn raw_theta(params: &RobotParams) -> DVector<f64> {
    let mut theta = DVector::zeros(NUM_RAW_PARAMS);
    for i in 0..3 {
        theta[3 * i] = params.inertia[i] + params.masses[i] * params.com[i] * params.com[i];
        theta[3 * i + 1] = params.masses[i] * params.com[i];
        theta[3 * i + 2] = params.masses[i];
    }
    for i in 0..3 {
        theta[9 + i] = params.viscous[i];
        theta[12 + i] = params.coulomb[i];
    }
    theta
}

/// Link-COM Jacobian split into the part independent of the COM offset
/// (`s`, scaled by link lengths) and the COM direction (`e`), so each mass
/// matrix entry is linear in (I + m c^2, m c, m).
fn split_jacobian(
    lengths: &[f64; 3],
    frame: &Frame,
    i: usize,
    j: usize,
) -> (Vector2<f64>, Vector2<f64>) {
    if j > i {
        return (Vector2::zeros(), Vector2::zeros());
    }
    let mut s = Vector2::zeros();
    for k in j..i {
        s += lengths[k] * frame.up[k];
    }
    (s, frame.up[i])
}

fn split_jacobian_deriv(
    lengths: &[f64; 3],
    frame: &Frame,
    i: usize,
    j: usize,
    r: usize,
) -> (Vector2<f64>, Vector2<f64>) {
    if j > i || r > i {
        return (Vector2::zeros(), Vector2::zeros());
    }
    let mut ds = Vector2::zeros();
    for k in j.max(r)..i {
        ds -= lengths[k] * frame.u[k];
    }
    (ds, -frame.u[i])
}

/// Per-parameter mass matrix, its q-derivatives and gravity column for one
/// of the nine grouped inertial parameters.
struct InertialTerm {
    m: Matrix3<f64>,
    dm: [Matrix3<f64>; 3],
    g: Vector3<f64>,
}

fn inertial_terms(lengths: &[f64; 3], gravity: f64, frame: &Frame) -> [InertialTerm; 9] {
    std::array::from_fn(|p| {
        let i = p / 3;
        let kind = p % 3;
        let mut m = Matrix3::zeros();
        let mut dm = [Matrix3::zeros(); 3];
        let mut g = Vector3::zeros();
        for j in 0..=i {
            let (sj, ej) = split_jacobian(lengths, frame, i, j);
            for l in 0..=i {
                let (sl, el) = split_jacobian(lengths, frame, i, l);
                m[(j, l)] = match kind {
                    0 => 1.0, // e_j . e_l for j, l <= i
                    1 => sj.dot(&el) + ej.dot(&sl),
                    _ => sj.dot(&sl),
                };
                if kind > 0 {
                    for r in 0..=i {
                        let (dsj, dej) = split_jacobian_deriv(lengths, frame, i, j, r);
                        let (dsl, del) = split_jacobian_deriv(lengths, frame, i, l, r);
                        dm[r][(j, l)] = match kind {
                            1 => dsj.dot(&el) + sj.dot(&del) + dej.dot(&sl) + ej.dot(&dsl),
                            _ => dsj.dot(&sl) + sj.dot(&dsl),
                        };
                    }
                }
            }
            g[j] = match kind {
                0 => 0.0,
                // d/dq_j of m_i y_ci split into (m c) sin(theta_i) and
                // m * sum_{k<i} l_k sin(theta_k)
                1 => gravity * frame.u[i].x,
                _ => {
                    let mut acc = 0.0;
                    for k in j..i {
                        acc += lengths[k] * frame.u[k].x;
                    }
                    gravity * acc
                }
            };
        }
        InertialTerm { m, dm, g }
    })
}

/// Full 3 x 15 regressor: Phi(q, qd, qdd) theta_raw = inverse_dynamics.
pub fn regressor(
    lengths: &[f64; 3],
    gravity: f64,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    qdd: &Vector3<f64>,
) -> DMatrix<f64> {
    let frame = Frame::new(q);
    let terms = inertial_terms(lengths, gravity, &frame);
    let mut phi = DMatrix::zeros(3, NUM_RAW_PARAMS);
    for (p, term) in terms.iter().enumerate() {
        let col = term.m * qdd + christoffel_matrix(&term.dm, qd) * qd + term.g;
        for r in 0..3 {
            phi[(r, p)] = col[r];
        }
    }
    for i in 0..3 {
        phi[(i, 9 + i)] = qd[i];
        phi[(i, 12 + i)] = smooth_sign(qd[i]);
    }
    phi
}

/// Numerical base-parameter reduction: column-pivoted QR of a stacked
/// regressor over random states identifies the independent columns and the
/// linear map from raw to base coordinates.
#[derive(Debug, Clone)]
pub struct BaseParamReduction {
    /// Raw-column indices of the base parameters, in pivot order.
    pub base_cols: Vec<usize>,
    /// rank x NUM_RAW_PARAMS map: theta_base = map * theta_raw.
    pub map: DMatrix<f64>,
    pub rank: usize,
}

impl BaseParamReduction {
    pub fn reduce_theta(&self, theta_raw: &DVector<f64>) -> DVector<f64> {
        &self.map * theta_raw
    }

    /// Selects the base columns of a full 3 x 15 regressor block.
    pub fn select(&self, phi_full: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(phi_full.nrows(), self.rank, |r, c| {
            phi_full[(r, self.base_cols[c])]
        })
    }
}

pub fn sample_state(rng: &mut impl Rng) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let q = Vector3::from_fn(|_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    let qd = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
    let qdd = Vector3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
    (q, qd, qdd)
}

pub fn base_param_reduction(
    lengths: &[f64; 3],
    gravity: f64,
    num_states: usize,
    seed: u64,
) -> Result<BaseParamReduction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stacked = DMatrix::zeros(3 * num_states, NUM_RAW_PARAMS);
    for s in 0..num_states {
        let (q, qd, qdd) = sample_state(&mut rng);
        let phi = regressor(lengths, gravity, &q, &qd, &qdd);
        for r in 0..3 {
            for c in 0..NUM_RAW_PARAMS {
                stacked[(3 * s + r, c)] = phi[(r, c)];
            }
        }
    }
    let qr = stacked.col_piv_qr();
    let r = qr.r();
    let mut order = DMatrix::from_fn(1, NUM_RAW_PARAMS, |_, c| c as f64);
    qr.p().permute_columns(&mut order);
    let pivots: Vec<usize> = (0..NUM_RAW_PARAMS).map(|c| order[(0, c)] as usize).collect();
    let tol = 1e-10 * r[(0, 0)].abs().max(1.0);
    let rank = (0..NUM_RAW_PARAMS.min(r.nrows()))
        .take_while(|&i| r[(i, i)].abs() > tol)
        .count();
    if rank == 0 {
        return Err(Error::InvalidConfig(
            "regressor stack has rank zero".into(),
        ));
    }
    // R = [R_BB R_BD; 0 ~0] in pivot order; dependent columns satisfy
    // Phi_D = Phi_B * W with W = R_BB^{-1} R_BD, so theta_base absorbs the
    // dependent raw parameters as theta_B + W theta_D.
    let r_bb = r.view((0, 0), (rank, rank)).into_owned();
    let r_bd = r
        .view((0, rank), (rank, NUM_RAW_PARAMS - rank))
        .into_owned();
    let w = r_bb
        .full_piv_lu()
        .solve(&r_bd)
        .ok_or_else(|| Error::InvalidConfig("base-parameter system singular".into()))?;
    let mut map = DMatrix::zeros(rank, NUM_RAW_PARAMS);
    for b in 0..rank {
        map[(b, pivots[b])] = 1.0;
        for d in 0..NUM_RAW_PARAMS - rank {
            map[(b, pivots[rank + d])] = w[(b, d)];
        }
    }
    Ok(BaseParamReduction {
        base_cols: pivots[..rank].to_vec(),
        map,
        rank,
    })
}

/// The base-reduced regressor as a basis family for identification:
/// inputs (q, qd, qdd) in R^9, outputs tau in R^3, `rank` coefficients.
pub struct SimdynBasis {
    lengths: [f64; 3],
    gravity: f64,
    reduction: BaseParamReduction,
    name: String,
}

impl SimdynBasis {
    pub fn new(lengths: [f64; 3], gravity: f64, reduction: BaseParamReduction) -> Self {
        Self {
            lengths,
            gravity,
            reduction,
            name: "simdyn_base_regressor".into(),
        }
    }

    pub fn reduction(&self) -> &BaseParamReduction {
        &self.reduction
    }
}

impl BasisFn for SimdynBasis {
    fn dim_in(&self) -> usize {
        9
    }

    fn dim_out(&self) -> usize {
        3
    }

    fn num_coefficients(&self) -> usize {
        self.reduction.rank
    }

    fn features(&self, x: &[f64]) -> DMatrix<f64> {
        let q = Vector3::new(x[0], x[1], x[2]);
        let qd = Vector3::new(x[3], x[4], x[5]);
        let qdd = Vector3::new(x[6], x[7], x[8]);
        self.reduction
            .select(&regressor(&self.lengths, self.gravity, &q, &qd, &qdd))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Base-reduced basis for a robot geometry, built from `num_states` random
/// regressor samples.
pub fn simdyn_basis(
    lengths: [f64; 3],
    gravity: f64,
    num_states: usize,
    seed: u64,
) -> Result<Arc<dyn BasisFn>> {
    let reduction = base_param_reduction(&lengths, gravity, num_states, seed)?;
    Ok(Arc::new(SimdynBasis::new(lengths, gravity, reduction)))
}
