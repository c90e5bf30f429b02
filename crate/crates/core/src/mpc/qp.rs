//! Dense strictly convex QP solver (Goldfarb-Idnani dual active set).
//!
//! Problem form:
//!
//! ```text
//! minimize   0.5 x'Hx + f'x + c0
//! subject to A_eq x  = b_eq
//!            A_in x <= b_in
//! ```
//!
//! `H` must be positive definite. The method starts from the unconstrained
//! minimizer and adds violated constraints one at a time, keeping the dual
//! iterate feasible. It maintains `J = L^-T Q` and the upper-triangular `R`
//! of the active constraint normals with Givens rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, PlatoonError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained program of dimension `n`.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        let qp = Self {
            hessian,
            linear,
            constant: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        };
        qp.check()?;
        Ok(qp)
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.a_in = a;
        self.b_in = b;
        self.check()?;
        Ok(self)
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.a_eq = a;
        self.b_eq = b;
        self.check()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.dim();
        let dims_ok = self.hessian.shape() == (n, n)
            && self.a_eq.ncols() == n
            && self.a_in.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.a_in.nrows() == self.b_in.len();
        if !dims_ok {
            return invalid("quadratic program dimensions are inconsistent");
        }
        if (&self.hessian - self.hessian.transpose()).amax() > 1e-9 * self.hessian.amax().max(1.0) {
            return invalid("hessian is not symmetric");
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    /// Largest violation over all constraints (zero when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let ineq = (&self.a_in * x - &self.b_in).iter().fold(0.0f64, |m, &v| m.max(v));
        eq.max(ineq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Active inequality rows at the solution, in activation order.
    pub active: Vec<usize>,
    /// Inequality multipliers (zero for inactive rows).
    pub multipliers_in: DVector<f64>,
    pub multipliers_eq: DVector<f64>,
    /// Row of the most violated inequality when infeasible.
    pub most_violated: Option<usize>,
}

/// Solves `qp`. Rows listed in `hint` (typically the previous active set)
/// are tried first when several constraints are violated.
pub fn solve_qp(qp: &QuadraticProgram, opts: &QpOptions, hint: &[usize]) -> Result<QpSolution> {
    qp.check()?;
    let mut s = Solver::new(qp, opts, hint)?;
    let status = s.run();
    Ok(s.finish(status))
}

struct Solver<'a> {
    qp: &'a QuadraticProgram,
    opts: &'a QpOptions,
    n: usize,
    me: usize,
    mi: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    r_norm: f64,
    x: DVector<f64>,
    /// Multipliers of active constraints, aligned with `a`.
    u: DVector<f64>,
    /// Active constraints: equality `k` is stored as `-(k+1)`, inequality `i` as `i`.
    a: Vec<isize>,
    iq: usize,
    iter: usize,
    preferred: Vec<bool>,
    most_violated: Option<usize>,
}

fn inner_cols(m: &DMatrix<f64>, i: usize, v: &DVector<f64>) -> f64 {
    m.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

impl<'a> Solver<'a> {
    fn new(qp: &'a QuadraticProgram, opts: &'a QpOptions, hint: &[usize]) -> Result<Self> {
        let n = qp.dim();
        let chol = qp
            .hessian
            .clone()
            .cholesky()
            .ok_or_else(|| PlatoonError::Numerical("QP hessian is not positive definite".into()))?;
        let l = chol.l();
        let j = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| PlatoonError::Numerical("singular hessian factor".into()))?;
        let x = -chol.solve(&qp.linear);
        let (me, mi) = (qp.a_eq.nrows(), qp.a_in.nrows());
        let mut preferred = vec![false; mi];
        for &h in hint {
            if h < mi {
                preferred[h] = true;
            }
        }
        Ok(Self {
            qp,
            opts,
            n,
            me,
            mi,
            j,
            r: DMatrix::zeros(n, n),
            r_norm: 1.0,
            x,
            u: DVector::zeros(me + mi + 1),
            a: vec![0; me + mi + 1],
            iq: 0,
            iter: 0,
            preferred,
            most_violated: None,
        })
    }

    /// Normal of constraint `k` in the `n' x >= c` convention.
    fn normal(&self, k: isize) -> DVector<f64> {
        if k < 0 {
            self.qp.a_eq.row((-k - 1) as usize).transpose()
        } else {
            -self.qp.a_in.row(k as usize).transpose()
        }
    }

    /// Slack of inequality `i` as `n' x - c` (negative when violated).
    fn slack(&self, i: usize) -> f64 {
        self.qp.b_in[i] - inner_cols(&self.qp.a_in, i, &self.x)
    }

    fn compute_d(&self, np: &DVector<f64>) -> DVector<f64> {
        self.j.tr_mul(np)
    }

    fn compute_z(&self, d: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        for k in self.iq..self.n {
            z.axpy(d[k], &self.j.column(k), 1.0);
        }
        z
    }

    fn compute_r(&self, d: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.iq);
        for i in (0..self.iq).rev() {
            let mut sum = d[i];
            for k in i + 1..self.iq {
                sum -= self.r[(i, k)] * r[k];
            }
            r[i] = sum / self.r[(i, i)];
        }
        r
    }

    fn add_constraint(&mut self, d: &mut DVector<f64>) -> bool {
        let n = self.n;
        for jj in (self.iq + 1..n).rev() {
            let (mut cc, mut ss) = (d[jj - 1], d[jj]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            d[jj] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[jj - 1] = -h;
            } else {
                d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j[(k, jj - 1)];
                let t2 = self.j[(k, jj)];
                self.j[(k, jj - 1)] = t1 * cc + t2 * ss;
                self.j[(k, jj)] = xny * (t1 + self.j[(k, jj - 1)]) - t2;
            }
        }
        self.iq += 1;
        for i in 0..self.iq {
            self.r[(i, self.iq - 1)] = d[i];
        }
        let diag = d[self.iq - 1].abs();
        if diag <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(diag);
        true
    }

    fn delete_constraint(&mut self, l: isize) {
        let n = self.n;
        let Some(qq) = (self.me..self.iq).find(|&i| self.a[i] == l) else {
            return;
        };
        for i in qq..self.iq - 1 {
            self.a[i] = self.a[i + 1];
            self.u[i] = self.u[i + 1];
            for k in 0..n {
                self.r[(k, i)] = self.r[(k, i + 1)];
            }
        }
        self.a[self.iq - 1] = self.a[self.iq];
        self.u[self.iq - 1] = self.u[self.iq];
        self.a[self.iq] = 0;
        self.u[self.iq] = 0.0;
        for k in 0..self.iq {
            self.r[(k, self.iq - 1)] = 0.0;
        }
        self.iq -= 1;
        if self.iq == 0 {
            return;
        }
        for jj in qq..self.iq {
            let (mut cc, mut ss) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(jj + 1, jj)] = 0.0;
            if cc < 0.0 {
                self.r[(jj, jj)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(jj, jj)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in jj + 1..self.iq {
                let t1 = self.r[(jj, k)];
                let t2 = self.r[(jj + 1, k)];
                self.r[(jj, k)] = t1 * cc + t2 * ss;
                self.r[(jj + 1, k)] = xny * (t1 + self.r[(jj, k)]) - t2;
            }
            for k in 0..n {
                let t1 = self.j[(k, jj)];
                let t2 = self.j[(k, jj + 1)];
                self.j[(k, jj)] = t1 * cc + t2 * ss;
                self.j[(k, jj + 1)] = xny * (self.j[(k, jj)] + t1) - t2;
            }
        }
    }

    fn run(&mut self) -> QpStatus {
        // Equality constraints enter first with full steps.
        for i in 0..self.me {
            let k = -(i as isize) - 1;
            let np = self.normal(k);
            let mut d = self.compute_d(&np);
            let z = self.compute_z(&d);
            let r = self.compute_r(&d);
            let zn = z.dot(&np);
            let t2 = if z.norm_squared() > f64::EPSILON {
                (self.qp.b_eq[i] - np.dot(&self.x)) / zn
            } else {
                0.0
            };
            self.x.axpy(t2, &z, 1.0);
            self.u[self.iq] = t2;
            for kk in 0..self.iq {
                self.u[kk] -= t2 * r[kk];
            }
            self.a[self.iq] = k;
            if !self.add_constraint(&mut d) {
                return QpStatus::Infeasible;
            }
        }

        // iai[i] is true while inequality i is inactive and may be added.
        let mut iai = vec![true; self.mi];
        let mut excluded = vec![false; self.mi];
        'outer: loop {
            self.iter += 1;
            if self.iter > self.opts.max_iter {
                return QpStatus::MaxIter;
            }
            iai.iter_mut().for_each(|v| *v = true);
            for i in self.me..self.iq {
                iai[self.a[i] as usize] = false;
            }
            excluded.iter_mut().for_each(|v| *v = false);
            let mut s: Vec<f64> = (0..self.mi).map(|i| self.slack(i)).collect();
            let u_old = self.u.clone();
            let a_old = self.a.clone();
            let x_old = self.x.clone();

            'choose: loop {
                // Most violated constraint, hinted rows first.
                let pick = |pref_only: bool| {
                    let mut best: Option<(usize, f64)> = None;
                    for i in 0..self.mi {
                        if !iai[i] || excluded[i] || (pref_only && !self.preferred[i]) {
                            continue;
                        }
                        if s[i] < -self.opts.tol * 1e-3 && best.is_none_or(|(_, v)| s[i] < v) {
                            best = Some((i, s[i]));
                        }
                    }
                    best
                };
                let Some((ip, _)) = pick(true).or_else(|| pick(false)) else {
                    return QpStatus::Optimal;
                };
                let np = self.normal(ip as isize);
                self.u[self.iq] = 0.0;
                self.a[self.iq] = ip as isize;

                loop {
                    let mut d = self.compute_d(&np);
                    let z = self.compute_z(&d);
                    let r = self.compute_r(&d);
                    // Dual step: largest t keeping active multipliers >= 0.
                    let mut t1 = f64::INFINITY;
                    let mut l: isize = 0;
                    for k in self.me..self.iq {
                        if r[k] > 0.0 && self.u[k] / r[k] < t1 {
                            t1 = self.u[k] / r[k];
                            l = self.a[k];
                        }
                    }
                    let zn = z.dot(&np);
                    let t2 = if z.norm_squared() > f64::EPSILON && zn.abs() > 0.0 {
                        -s[ip] / zn
                    } else {
                        f64::INFINITY
                    };
                    let t = t1.min(t2);
                    if !t.is_finite() {
                        self.most_violated = Some(self.most_violated_row());
                        return QpStatus::Infeasible;
                    }
                    if !t2.is_finite() {
                        for k in 0..self.iq {
                            self.u[k] -= t * r[k];
                        }
                        self.u[self.iq] += t;
                        iai[l as usize] = true;
                        self.delete_constraint(l);
                        continue;
                    }
                    self.x.axpy(t, &z, 1.0);
                    for k in 0..self.iq {
                        self.u[k] -= t * r[k];
                    }
                    self.u[self.iq] += t;
                    if t == t2 {
                        if !self.add_constraint(&mut d) {
                            // Linearly dependent: drop it and restore.
                            excluded[ip] = true;
                            self.delete_constraint(ip as isize);
                            iai.iter_mut().for_each(|v| *v = true);
                            for i in self.me..self.iq {
                                self.a[i] = a_old[i];
                                self.u[i] = u_old[i];
                                iai[self.a[i] as usize] = false;
                            }
                            self.x = x_old.clone();
                            for (i, slot) in s.iter_mut().enumerate() {
                                *slot = self.qp.b_in[i] - inner_cols(&self.qp.a_in, i, &self.x);
                            }
                            continue 'choose;
                        }
                        iai[ip] = false;
                        continue 'outer;
                    }
                    iai[l as usize] = true;
                    self.delete_constraint(l);
                    s[ip] = self.slack(ip);
                    self.iter += 1;
                    if self.iter > self.opts.max_iter {
                        return QpStatus::MaxIter;
                    }
                }
            }
        }
    }

    fn most_violated_row(&self) -> usize {
        (0..self.mi)
            .min_by(|&a, &b| self.slack(a).total_cmp(&self.slack(b)))
            .unwrap_or(0)
    }

    fn finish(self, status: QpStatus) -> QpSolution {
        let mut multipliers_in = DVector::zeros(self.mi);
        let mut multipliers_eq = DVector::zeros(self.me);
        let mut active = Vec::new();
        for k in 0..self.iq {
            let c = self.a[k];
            if c < 0 {
                multipliers_eq[(-c - 1) as usize] = self.u[k];
            } else {
                multipliers_in[c as usize] = self.u[k];
                active.push(c as usize);
            }
        }
        let objective = self.qp.objective(&self.x);
        QpSolution {
            x: self.x,
            status,
            iterations: self.iter,
            objective,
            active,
            multipliers_in,
            multipliers_eq,
            most_violated: if status == QpStatus::Infeasible { self.most_violated } else { None },
        }
    }
}

/// Stationarity, primal and dual residuals of a candidate solution.
pub fn kkt_residual(qp: &QuadraticProgram, sol: &QpSolution) -> f64 {
    // H x + f - A_eq' y_eq + A_in' y_in = 0 with y_in >= 0 in the `<=` form.
    let grad = &qp.hessian * &sol.x + &qp.linear - qp.a_eq.tr_mul(&sol.multipliers_eq) + qp.a_in.tr_mul(&sol.multipliers_in);
    let dual = sol.multipliers_in.iter().fold(0.0f64, |m, &v| m.max(-v));
    let slack = &qp.b_in - &qp.a_in * &sol.x;
    let comp = slack.iter().zip(sol.multipliers_in.iter()).fold(0.0f64, |m, (s, y)| m.max((s * y).abs()));
    grad.amax().max(qp.max_violation(&sol.x)).max(dual).max(comp)
}


/// Reference solver for tiny problems: tries every subset of inequality
/// rows as the active set and keeps the best KKT point. Exponential in the
/// number of inequalities; intended as a test oracle.
pub fn enumerate_active_sets(qp: &QuadraticProgram, tol: f64) -> Option<DVector<f64>> {
    let n = qp.dim();
    let me = qp.a_eq.nrows();
    let mi = qp.a_in.nrows();
    assert!(mi <= 16, "enumeration is limited to 16 inequalities");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << mi) {
        let rows: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = me + rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
        rhs.rows_mut(0, n).copy_from(&(-&qp.linear));
        for (c, row) in (0..me).map(|i| (qp.a_eq.row(i), qp.b_eq[i])).chain(rows.iter().map(|&i| (qp.a_in.row(i), qp.b_in[i]))).enumerate() {
            for j in 0..n {
                kkt[(n + c, j)] = row.0[j];
                kkt[(j, n + c)] = row.0[j];
            }
            rhs[n + c] = row.1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        // Multipliers of `<=` rows enter with a positive sign in H x + f + A'y = 0.
        let duals_ok = (0..rows.len()).all(|c| sol[n + me + c] >= -tol);
        if !duals_ok || qp.max_violation(&x) > tol {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}
