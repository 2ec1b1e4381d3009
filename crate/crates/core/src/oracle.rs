//! Brute-force reference solvers used to cross-check the controllers.
//!
//! Everything here is built from raw problem data with `nalgebra` and shares
//! no assembly code with the main solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// `min ½ zᵀHz + fᵀz  s.t.  Aeq z = beq`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
}

impl DenseQp {
    /// Symmetrizes `h` and checks dimensions.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, aeq: DMatrix<f64>, beq: DVector<f64>) -> Result<Self> {
        let n = f.len();
        if h.shape() != (n, n) || aeq.ncols() != n || aeq.nrows() != beq.len() || aeq.nrows() > n {
            return Err(invalid(format!(
                "dense QP shapes: H {:?}, f {}, Aeq {:?}, beq {}",
                h.shape(),
                n,
                aeq.shape(),
                beq.len()
            )));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self { h, f, aeq, beq })
    }

    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let n = f.len();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.h * &z)) + self.f.dot(&z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// `H z + f + Aeqᵀ λ = 0`.
    pub multipliers: Vec<f64>,
    /// `‖Hz + f + Aeqᵀλ‖∞ / (1 + ‖f‖∞)`.
    pub stationarity: f64,
    /// `‖Aeq z − beq‖∞ / (1 + ‖beq‖∞)`.
    pub feasibility: f64,
}

pub fn solve_dense_qp(p: &DenseQp) -> Result<QpSolution> {
    let n = p.dim();
    let m = p.beq.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    kkt.view_mut((0, n), (n, m)).copy_from(&p.aeq.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&p.aeq);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&p.f));
    rhs.rows_mut(n, m).copy_from(&p.beq);

    let lu = kkt.clone().full_piv_lu();
    let singular = || Error::Singular("oracle saddle-point matrix is singular".into());
    let mut sol = lu.solve(&rhs).ok_or_else(singular)?;
    let refine = lu.solve(&(&rhs - &kkt * &sol)).ok_or_else(singular)?;
    sol += refine;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let z = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, m).into_owned();
    let stat = &p.h * &z + &p.f + p.aeq.transpose() * &lambda;
    let feas = &p.aeq * &z - &p.beq;
    Ok(QpSolution {
        z: z.as_slice().to_vec(),
        multipliers: lambda.as_slice().to_vec(),
        stationarity: stat.amax() / (1.0 + p.f.amax()),
        feasibility: if m == 0 {
            0.0
        } else {
            feas.amax() / (1.0 + p.beq.amax())
        },
    })
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_difference_gradient<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let mut z = point.to_vec();
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let base = z[i];
        z[i] = base + step;
        let up = f(&z);
        z[i] = base - step;
        let down = f(&z);
        z[i] = base;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NumericOverflow(format!(
                "objective not finite near coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Probes an affine map `y = c + G u` at zero and the unit vectors.
pub fn probe_affine<F>(map: F, n_in: usize) -> Result<(DMatrix<f64>, DVector<f64>)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut u = vec![0.0; n_in];
    let c = DVector::from_vec(map(&u)?);
    let mut g = DMatrix::zeros(c.len(), n_in);
    for j in 0..n_in {
        u[j] = 1.0;
        let y = DVector::from_vec(map(&u)?);
        if y.len() != c.len() {
            return Err(invalid("affine probe returned inconsistent lengths"));
        }
        g.set_column(j, &(y - &c));
        u[j] = 0.0;
    }
    Ok((g, c))
}

/// Raw data of a tracking cost with diagonal state weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingData {
    /// Diagonal of `Q_k`, steps `1..=K`; zero for don't-care components.
    pub q_diag: Vec<[f64; 2]>,
    /// `R_k`, steps `1..K`.
    pub r: Vec<f64>,
    pub x_ref: Vec<[f64; 2]>,
}

impl TrackingData {
    pub fn horizon(&self) -> usize {
        self.q_diag.len()
    }

    /// `Σ ½(x_k−r_k)ᵀQ_k(x_k−r_k) + Σ ½R_k u_k²` with `x` stacked `(dv, g)`.
    pub fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, (q, r)) in self.q_diag.iter().zip(&self.x_ref).enumerate() {
            for c in 0..2 {
                let e = x[2 * k + c] - r[c];
                total += 0.5 * q[c] * e * e;
            }
        }
        total + u.iter().zip(&self.r).map(|(u, r)| 0.5 * r * u * u).sum::<f64>()
    }

    fn stacked_q(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.horizon(), self.q_diag.iter().flat_map(|q| *q))
    }

    fn stacked_ref(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.horizon(), self.x_ref.iter().flat_map(|r| *r))
    }

    /// Cost as a QP in `u` when `x = c + G u`.
    pub fn reduced_qp(&self, g: &DMatrix<f64>, c: &DVector<f64>) -> Result<DenseQp> {
        let q = self.stacked_q();
        let qg = DMatrix::from_diagonal(&q) * g;
        let h = g.transpose() * &qg + DMatrix::from_diagonal(&DVector::from_column_slice(&self.r));
        let err = c - self.stacked_ref();
        let f = g.transpose() * err.component_mul(&q);
        DenseQp::unconstrained(h, f)
    }
}

fn plant(dt: f64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, dt, 1.0]),
        DVector::from_column_slice(&[-dt, 0.0]),
        DVector::from_column_slice(&[dt, 0.0]),
    )
}

/// The human's problem for fixed machine commands, in `U_h` only.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanProblemData {
    pub dt: f64,
    pub alpha_h: Vec<f64>,
    pub cost: TrackingData,
    pub x_1: [f64; 2],
    pub u_m: Vec<f64>,
}

impl HumanProblemData {
    /// States `x_1..x_K` the human predicts for `u_h` (no predecessor term).
    pub fn rollout(&self, u_h: &[f64]) -> Vec<f64> {
        let (a, b, _) = plant(self.dt);
        let mut x = DVector::from_column_slice(&self.x_1);
        let mut out = x.as_slice().to_vec();
        for k in 0..self.u_m.len() {
            let alpha = self.alpha_h[k];
            x = &a * &x + &b * (alpha * u_h[k] + (1.0 - alpha) * self.u_m[k]);
            out.extend_from_slice(x.as_slice());
        }
        out
    }

    pub fn objective(&self, u_h: &[f64]) -> f64 {
        self.cost.cost(&self.rollout(u_h), u_h)
    }

    pub fn qp(&self) -> Result<DenseQp> {
        let n = self.u_m.len();
        if self.alpha_h.len() != n || self.cost.horizon() != n + 1 || self.cost.r.len() != n {
            return Err(invalid("human problem data lengths inconsistent"));
        }
        let (g, c) = probe_affine(|u| Ok(self.rollout(u)), n)?;
        self.cost.reduced_qp(&g, &c)
    }
}

/// Plain machine-only MPC with states and controls as variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineOnlyData {
    pub dt: f64,
    pub cost: TrackingData,
    pub x_1: [f64; 2],
    pub a_p: Vec<f64>,
}

impl MachineOnlyData {
    /// Variables `(x_1..x_K, u_1..u_{K−1})`.
    pub fn qp(&self) -> Result<DenseQp> {
        let horizon = self.cost.horizon();
        if horizon < 2 || self.a_p.len() != horizon - 1 || self.cost.r.len() != horizon - 1 {
            return Err(invalid("machine-only problem data lengths inconsistent"));
        }
        let nx = 2 * horizon;
        let n = nx + horizon - 1;
        let (a, b, c) = plant(self.dt);
        let q = self.cost.stacked_q();
        let mut diag = DVector::zeros(n);
        diag.rows_mut(0, nx).copy_from(&q);
        diag.rows_mut(nx, horizon - 1)
            .copy_from(&DVector::from_column_slice(&self.cost.r));
        let mut f = DVector::zeros(n);
        f.rows_mut(0, nx)
            .copy_from(&(-q.component_mul(&self.cost.stacked_ref())));

        let mut aeq = DMatrix::zeros(nx, n);
        let mut beq = DVector::zeros(nx);
        aeq[(0, 0)] = 1.0;
        aeq[(1, 1)] = 1.0;
        beq[0] = self.x_1[0];
        beq[1] = self.x_1[1];
        for k in 0..horizon - 1 {
            let row = 2 * (k + 1);
            aeq.view_mut((row, row), (2, 2)).fill_with_identity();
            aeq.view_mut((row, 2 * k), (2, 2)).copy_from(&(-&a));
            aeq.view_mut((row, nx + k), (2, 1)).copy_from(&(-&b));
            beq.rows_mut(row, 2).copy_from(&(&c * self.a_p[k]));
        }
        DenseQp::new(DMatrix::from_diagonal(&diag), f, aeq, beq)
    }
}
