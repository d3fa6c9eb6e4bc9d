//! Primal-dual interior-point solver for stage-structured QPs.
//!
//! ```text
//! min  sum_k 1/2 x_k' Hx_k x_k + gx_k' x_k + 1/2 w_k' Hw_k w_k + gw_k' w_k
//! s.t. x_0 = 0
//!      x_{k+1} = A_k x_k + B_k w_k + c_k          k < N
//!      dx_i' x_k + dw_i' w_k <= rhs_i             rows of stage k
//! ```
//!
//! Each Newton system is solved by a Riccati recursion over the stages
//! after folding the barrier curvature of the stage rows into the stage
//! Hessians. Search directions follow Mehrotra's predictor-corrector.
//! Later QPs of one SQP solve start from the previous multipliers.

use nalgebra::{Cholesky, SMatrix, SVector};

pub(crate) const NX: usize = 5;
pub(crate) const NW: usize = 3;

/// Smallest slack and multiplier of a warm start.
const WARM_FLOOR: f64 = 1e-4;

pub(crate) type Vx = SVector<f64, NX>;
pub(crate) type Vw = SVector<f64, NW>;
pub(crate) type Mxx = SMatrix<f64, NX, NX>;
pub(crate) type Mxw = SMatrix<f64, NX, NW>;
pub(crate) type Mwx = SMatrix<f64, NW, NX>;
pub(crate) type Mww = SMatrix<f64, NW, NW>;

#[derive(Debug, Clone, Copy)]
pub(crate) struct QpRow {
    pub dx: Vx,
    pub dw: Vw,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpStage {
    pub a: Mxx,
    pub b: Mxw,
    pub c: Vx,
    pub h_x: Mxx,
    pub h_w: Mww,
    pub g_x: Vx,
    pub g_w: Vw,
    pub rows: Vec<QpRow>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QpSettings {
    /// Target average complementarity.
    pub tolerance: f64,
    /// Target primal and dual residuals, relative to the data scale.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub regularization: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: Vec<Vx>,
    pub w: Vec<Vw>,
    /// Row multipliers, stage-major.
    pub lambda: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

struct Factor {
    huu: Cholesky<f64, nalgebra::Const<NW>>,
    hux: Mwx,
    k: Mwx,
}

/// Riccati factorization of the barrier-augmented KKT system.
struct Riccati {
    /// Stage factors for `k < N`.
    factors: Vec<Factor>,
    /// Value-function Hessians `P_k`, `k = 0..=N`.
    p: Vec<Mxx>,
    terminal_r: Cholesky<f64, nalgebra::Const<NW>>,
    terminal_s: Mwx,
}

fn robust_cholesky(m: Mww, reg: f64) -> Cholesky<f64, nalgebra::Const<NW>> {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = Cholesky::new(sym) {
        return c;
    }
    let mut eps = reg.max(1e-12);
    loop {
        if let Some(c) = Cholesky::new(sym + Mww::identity() * eps) {
            return c;
        }
        eps *= 10.0;
    }
}

/// Stage Hessian blocks after adding `sum sigma_i row_i row_i'`.
struct Augmented {
    q: Vec<Mxx>,
    s: Vec<Mwx>,
    r: Vec<Mww>,
}

fn augment(stages: &[QpStage], sigma: &[Vec<f64>]) -> Augmented {
    let mut q = Vec::with_capacity(stages.len());
    let mut s = Vec::with_capacity(stages.len());
    let mut r = Vec::with_capacity(stages.len());
    for (st, sig) in stages.iter().zip(sigma) {
        let mut qk = st.h_x;
        let mut sk = Mwx::zeros();
        let mut rk = st.h_w;
        for (row, &sg) in st.rows.iter().zip(sig) {
            qk += row.dx * row.dx.transpose() * sg;
            sk += row.dw * row.dx.transpose() * sg;
            rk += row.dw * row.dw.transpose() * sg;
        }
        q.push(qk);
        s.push(sk);
        r.push(rk);
    }
    Augmented { q, s, r }
}

impl Riccati {
    fn factor(stages: &[QpStage], aug: &Augmented, reg: f64) -> Self {
        let n = stages.len() - 1;
        let terminal_r = robust_cholesky(aug.r[n], reg);
        let terminal_s = aug.s[n];
        let mut pn = aug.q[n] - terminal_s.transpose() * terminal_r.solve(&terminal_s);
        pn = (pn + pn.transpose()) * 0.5;
        let mut p = vec![Mxx::zeros(); n + 1];
        p[n] = pn;
        let mut factors: Vec<Factor> = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let st = &stages[k];
            let pb = p[k + 1] * st.b;
            let huu = aug.r[k] + st.b.transpose() * pb;
            let hux = aug.s[k] + pb.transpose() * st.a;
            let chol = robust_cholesky(huu, reg);
            let gain = -chol.solve(&hux);
            let mut pk = aug.q[k] + st.a.transpose() * p[k + 1] * st.a + hux.transpose() * gain;
            pk = (pk + pk.transpose()) * 0.5;
            p[k] = pk;
            factors.push(Factor {
                huu: chol,
                hux,
                k: gain,
            });
        }
        factors.reverse();
        Self {
            factors,
            p,
            terminal_r,
            terminal_s,
        }
    }

    /// Minimizer and dynamics costates for linear terms `gx`, `gw` and
    /// dynamics offsets `c` (`pi[k]` belongs to the dynamics into stage
    /// `k`; `pi[0]` is unused).
    fn solve(&self, stages: &[QpStage], c: &[Vx], gx: &[Vx], gw: &[Vw]) -> (Vec<Vx>, Vec<Vw>, Vec<Vx>) {
        let n = stages.len() - 1;
        let mut p_lin = vec![Vx::zeros(); n + 1];
        let mut kff = vec![Vw::zeros(); n];
        p_lin[n] = gx[n] - self.terminal_s.transpose() * self.terminal_r.solve(&gw[n]);
        for k in (0..n).rev() {
            let st = &stages[k];
            let f = &self.factors[k];
            let pc = self.p[k + 1] * c[k] + p_lin[k + 1];
            let hu = gw[k] + st.b.transpose() * pc;
            kff[k] = -f.huu.solve(&hu);
            p_lin[k] = gx[k] + st.a.transpose() * pc + f.hux.transpose() * kff[k];
        }
        let mut x = vec![Vx::zeros(); n + 1];
        let mut w = vec![Vw::zeros(); n + 1];
        for k in 0..n {
            let st = &stages[k];
            w[k] = self.factors[k].k * x[k] + kff[k];
            x[k + 1] = st.a * x[k] + st.b * w[k] + c[k];
        }
        w[n] = -self.terminal_r.solve(&(self.terminal_s * x[n] + gw[n]));
        let mut pi = vec![Vx::zeros(); n + 1];
        for k in 1..=n {
            pi[k] = self.p[k] * x[k] + p_lin[k];
        }
        (x, w, pi)
    }
}

fn row_value(row: &QpRow, x: &Vx, w: &Vw) -> f64 {
    row.dx.dot(x) + row.dw.dot(w)
}

/// Largest step in `(0, 1]` keeping `v + a dv` above `(1 - frac) v`.
fn max_step(v: &[Vec<f64>], dv: &[Vec<f64>], frac: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (vs, ds) in v.iter().zip(dv) {
        for (&vi, &di) in vs.iter().zip(ds) {
            if di < 0.0 {
                a = a.min(-frac * vi / di);
            }
        }
    }
    a
}

#[derive(Clone)]
struct Iterate {
    x: Vec<Vx>,
    w: Vec<Vw>,
    pi: Vec<Vx>,
    t: Vec<Vec<f64>>,
    lambda: Vec<Vec<f64>>,
}

struct Direction {
    x: Vec<Vx>,
    w: Vec<Vw>,
    pi: Vec<Vx>,
    t: Vec<Vec<f64>>,
    lambda: Vec<Vec<f64>>,
}

struct Residuals {
    /// Stationarity in `x` and `w` per stage (`x` part unused at stage 0).
    dx: Vec<Vx>,
    dw: Vec<Vw>,
    /// `row(z) + t - rhs` per row.
    primal: Vec<Vec<f64>>,
    /// `A x_k + B w_k + c_k - x_{k+1}`.
    dynamics: Vec<Vx>,
}

impl Residuals {
    fn new(stages: &[QpStage], it: &Iterate) -> Self {
        let n = stages.len() - 1;
        let mut dx = Vec::with_capacity(n + 1);
        let mut dw = Vec::with_capacity(n + 1);
        let mut primal = Vec::with_capacity(n + 1);
        let mut dynamics = Vec::with_capacity(n);
        for (k, st) in stages.iter().enumerate() {
            let mut rw = st.h_w * it.w[k] + st.g_w;
            let mut rx = st.h_x * it.x[k] + st.g_x;
            let mut rp = Vec::with_capacity(st.rows.len());
            for (i, row) in st.rows.iter().enumerate() {
                rw += row.dw * it.lambda[k][i];
                rx += row.dx * it.lambda[k][i];
                rp.push(row_value(row, &it.x[k], &it.w[k]) + it.t[k][i] - row.rhs);
            }
            if k < n {
                rw += st.b.transpose() * it.pi[k + 1];
                rx += st.a.transpose() * it.pi[k + 1];
                dynamics.push(st.a * it.x[k] + st.b * it.w[k] + st.c - it.x[k + 1]);
            }
            if k > 0 {
                rx -= it.pi[k];
            } else {
                rx = Vx::zeros();
            }
            dx.push(rx);
            dw.push(rw);
            primal.push(rp);
        }
        Self {
            dx,
            dw,
            primal,
            dynamics,
        }
    }

    fn dual_norm(&self) -> f64 {
        self.dx
            .iter()
            .map(|v| v.amax())
            .chain(self.dw.iter().map(|v| v.amax()))
            .fold(0.0, f64::max)
    }

    fn primal_norm(&self) -> f64 {
        self.primal
            .iter()
            .flatten()
            .map(|v| v.abs())
            .chain(self.dynamics.iter().map(|v| v.amax()))
            .fold(0.0, f64::max)
    }
}

/// Newton direction towards the centring target `sigma_mu`, with the
/// optional second-order correction `dt_aff * dlambda_aff`.
fn direction(
    stages: &[QpStage],
    ric: &Riccati,
    it: &Iterate,
    res: &Residuals,
    sigma: &[Vec<f64>],
    sigma_mu: f64,
    corr: Option<&Direction>,
) -> Direction {
    let n = stages.len() - 1;
    let mut gx = Vec::with_capacity(n + 1);
    let mut gw = Vec::with_capacity(n + 1);
    let mut rc: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for (k, st) in stages.iter().enumerate() {
        let mut cx = res.dx[k];
        let mut cw = res.dw[k];
        let mut rck = Vec::with_capacity(st.rows.len());
        for (i, row) in st.rows.iter().enumerate() {
            let t = it.t[k][i];
            let mut r = t * it.lambda[k][i] - sigma_mu;
            if let Some(d) = corr {
                r += d.t[k][i] * d.lambda[k][i];
            }
            let c = sigma[k][i] * res.primal[k][i] - r / t;
            cx += row.dx * c;
            cw += row.dw * c;
            rck.push(r);
        }
        rc.push(rck);
        gx.push(cx);
        gw.push(cw);
    }
    let (x, w, pi) = ric.solve(stages, &res.dynamics, &gx, &gw);
    let mut dt = Vec::with_capacity(n + 1);
    let mut dl = Vec::with_capacity(n + 1);
    for (k, st) in stages.iter().enumerate() {
        let mut tk = Vec::with_capacity(st.rows.len());
        let mut lk = Vec::with_capacity(st.rows.len());
        for (i, row) in st.rows.iter().enumerate() {
            let delta_t = -res.primal[k][i] - row_value(row, &x[k], &w[k]);
            let delta_l = -rc[k][i] / it.t[k][i] - sigma[k][i] * delta_t;
            tk.push(delta_t);
            lk.push(delta_l);
        }
        dt.push(tk);
        dl.push(lk);
    }
    Direction {
        x,
        w,
        pi,
        t: dt,
        lambda: dl,
    }
}
fn complementarity(t: &[Vec<f64>], l: &[Vec<f64>]) -> f64 {
    t.iter()
        .flatten()
        .zip(l.iter().flatten())
        .map(|(a, b)| a * b)
        .sum()
}

fn axpy(it: &mut Iterate, d: &Direction, step: f64) {
    for k in 0..it.x.len() {
        it.x[k] += d.x[k] * step;
        it.w[k] += d.w[k] * step;
        it.pi[k] += d.pi[k] * step;
        for i in 0..it.t[k].len() {
            it.t[k][i] += step * d.t[k][i];
            it.lambda[k][i] += step * d.lambda[k][i];
        }
    }
}

/// Solves the QP. `duals`, when given, are row multipliers of a nearby QP
/// with the same rows; they seed the start in place of unit multipliers.
pub(crate) fn solve_qp(stages: &[QpStage], settings: &QpSettings, duals: Option<&[Vec<f64>]>) -> QpSolution {
    let n = stages.len() - 1;
    let m: usize = stages.iter().map(|s| s.rows.len()).sum();
    let duals = duals.filter(|d| d.len() == stages.len() && d.iter().zip(stages).all(|(l, s)| l.len() == s.rows.len()));

    // start from the dynamics-consistent point with w = 0
    let mut x = vec![Vx::zeros(); n + 1];
    for k in 0..n {
        x[k + 1] = stages[k].a * x[k] + stages[k].c;
    }
    let w = vec![Vw::zeros(); n + 1];
    let floor = if duals.is_some() { WARM_FLOOR } else { 1.0 };
    let t: Vec<Vec<f64>> = stages
        .iter()
        .enumerate()
        .map(|(k, st)| {
            st.rows
                .iter()
                .map(|r| (r.rhs - row_value(r, &x[k], &w[k])).max(floor))
                .collect()
        })
        .collect();
    let lambda: Vec<Vec<f64>> = match duals {
        Some(d) => d.iter().map(|lk| lk.iter().map(|l| l.max(WARM_FLOOR)).collect()).collect(),
        None => t.iter().map(|tk| vec![1.0; tk.len()]).collect(),
    };
    let mut it = Iterate {
        x,
        w,
        pi: vec![Vx::zeros(); n + 1],
        t,
        lambda,
    };

    let g_scale = stages
        .iter()
        .map(|s| s.g_x.amax().max(s.g_w.amax()))
        .fold(1.0, f64::max);
    let rhs_scale = stages
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.rhs.abs()))
        .fold(1.0, f64::max);
    let tol = settings.tolerance;
    let rtol = settings.residual_tolerance;
    let mu_of = |it: &Iterate| if m > 0 { complementarity(&it.t, &it.lambda) / m as f64 } else { 0.0 };
    // progress measure; <= 1 means converged
    let score = |it: &Iterate, res: &Residuals| {
        (mu_of(it) / tol)
            .max(res.primal_norm() / (rtol * rhs_scale))
            .max(res.dual_norm() / (rtol * g_scale))
    };

    let mut iterations = 0;
    let mut res = Residuals::new(stages, &it);
    let mut current = f64::INFINITY;
    let mut best: Option<(f64, Iterate)> = None;
    while iterations < settings.max_iterations {
        if iterations > 0 {
            current = score(&it, &res);
            if current <= 1.0 {
                break;
            }
            if best.as_ref().is_none_or(|(b, _)| current < *b) {
                best = Some((current, it.clone()));
            }
        }
        let mu = mu_of(&it);
        iterations += 1;
        let sigma: Vec<Vec<f64>> = it
            .t
            .iter()
            .zip(&it.lambda)
            .map(|(tk, lk)| tk.iter().zip(lk).map(|(t, l)| l / t).collect())
            .collect();
        let aug = augment(stages, &sigma);
        let ric = Riccati::factor(stages, &aug, settings.regularization);

        let dir = if m > 0 {
            let aff = direction(stages, &ric, &it, &res, &sigma, 0.0, None);
            let a_aff = max_step(&it.t, &aff.t, 1.0).min(max_step(&it.lambda, &aff.lambda, 1.0));
            let mut mu_aff = 0.0;
            for k in 0..=n {
                for i in 0..it.t[k].len() {
                    mu_aff += (it.t[k][i] + a_aff * aff.t[k][i]) * (it.lambda[k][i] + a_aff * aff.lambda[k][i]);
                }
            }
            mu_aff /= m as f64;
            let centring = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            direction(stages, &ric, &it, &res, &sigma, centring * mu, Some(&aff))
        } else {
            direction(stages, &ric, &it, &res, &sigma, 0.0, None)
        };
        let step = max_step(&it.t, &dir.t, 0.995).min(max_step(&it.lambda, &dir.lambda, 0.995));
        axpy(&mut it, &dir, step);
        res = Residuals::new(stages, &it);
    }
    if iterations == settings.max_iterations {
        current = score(&it, &res);
    }
    let converged = current <= 1.0;
    if !converged {
        if let Some((b, kept)) = best {
            if b < current {
                it = kept;
            }
        }
    }
    QpSolution {
        x: it.x,
        w: it.w,
        lambda: it.lambda,
        iterations,
        converged,
    }
}
