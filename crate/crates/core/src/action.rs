//! Circle-action generators, numerically: periodic-orbit shooting by Newton
//! on the time-2π closure map, loop-integral action functions, the
//! time-2π monodromy construction with its generating function, and the
//! loop-based periodicity witness on singular fibers.

use crate::dynamics::{
    integrate_flow, DynError, HamiltonianFlow, OmegaField, PolynomialSystem, Trajectory,
};
use crate::poly::PolynomialExpr;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("Newton iteration diverged after {0} steps (last residual {1:.3e})")]
    NewtonDivergence(usize, f64),
    #[error("point is singular for the momentum map (rank defect {0:.3e})")]
    SingularPoint(f64),
    #[error("flow incomplete: escape before t = 2π ({0})")]
    IncompleteFlow(String),
    #[error("quadrature failed to verify: discrepancy {0:.3e}")]
    QuadratureFailure(f64),
    #[error("orbit continuation failed near grid point {0}")]
    ContinuationFailure(usize),
    #[error("closedness of the shift field fails: curl residual {0:.3e}")]
    CurlResidual(f64),
    #[error("loop touches the singular set (smallest pairing {0:.3e})")]
    SingularOnLoop(f64),
    #[error(transparent)]
    Dynamics(DynError),
}

impl From<DynError> for ActionError {
    fn from(e: DynError) -> Self {
        match e {
            DynError::StepFailure { t, reason } => {
                ActionError::IncompleteFlow(format!("at t = {t:.4}: {reason}"))
            }
            other => ActionError::Dynamics(other),
        }
    }
}

const FLOW_TOL: f64 = 1e-12;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// 2π-periodic trajectory of X_f for f = Σ a_i f_i, with its Newton history.
#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    pub base_point: Vec<Complex64>,
    pub coefficients: Vec<Complex64>,
    pub residual: f64,
    pub trajectory: Trajectory,
    /// Logged closure residuals of the Newton iterations.
    pub newton_residuals: Vec<f64>,
    /// Momentum value of the fiber the orbit lies on.
    pub momentum: Vec<Complex64>,
    /// Degenerate orbits (equilibria reached in the continuation limit).
    pub degenerate: bool,
}

/// Action values on a grid of momentum points, with the linear fit data.
#[derive(Clone, Debug)]
pub struct ActionSample {
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub lambda_hat: Vec<Complex64>,
    pub quad_remainder: f64,
}

/// Primitive 1-form α with dα = Ω.
pub enum PrimitiveForm {
    /// α = -(1/2) Ω x for a constant form matrix (for the standard
    /// interleaved form this is (1/2) Σ (x dy - y dx)).
    ConstantForm(DMatrix<f64>),
    /// Symbolic components, one polynomial per coordinate.
    Symbolic(Vec<PolynomialExpr>),
}

impl PrimitiveForm {
    pub fn for_system(system: &PolynomialSystem) -> PrimitiveForm {
        match &system.space.omega {
            OmegaField::Constant(m) => PrimitiveForm::ConstantForm(m.clone()),
            OmegaField::Parabolic { alpha, p, q, r } => {
                PrimitiveForm::Symbolic(parabolic_primitive(alpha, p, q, r))
            }
        }
    }

    pub fn components_at(&self, x: &[Complex64]) -> Vec<Complex64> {
        match self {
            PrimitiveForm::ConstantForm(m) => {
                let d = m.nrows();
                (0..d)
                    .map(|i| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for j in 0..d {
                            if m[(i, j)] != 0.0 {
                                s += m[(i, j)] * x[j];
                            }
                        }
                        -0.5 * s
                    })
                    .collect()
            }
            PrimitiveForm::Symbolic(comps) => comps.iter().map(|p| p.compile().eval(x)).collect(),
        }
    }
}

/// Exact primitive of the rank-1 model form dα(λ)∧dφ + π*ω on a star-shaped
/// domain, via the radial homotopy formula applied to ω (variables ordered
/// (l, phi, x, y); the dφ-component is α(λ) itself).
pub fn parabolic_primitive(
    alpha: &PolynomialExpr,
    p: &PolynomialExpr,
    q: &PolynomialExpr,
    r: &PolynomialExpr,
) -> Vec<PolynomialExpr> {
    let vars = &alpha.vars;
    let il = 0usize;
    let ix = 2usize;
    let iy = 3usize;
    let lv = PolynomialExpr::var(vars, il);
    let xv = PolynomialExpr::var(vars, ix);
    let yv = PolynomialExpr::var(vars, iy);
    // Graded pieces by total degree in (x, y, l): piece of degree k gets
    // weight 1/(k+2) after ∫_0^1 s^{k+1} ds.
    let weighted = |f: &PolynomialExpr| -> Vec<PolynomialExpr> {
        // Returns Σ_k piece_k / (k+2) as a single polynomial, built per use.
        let maxdeg = f.total_degree();
        let mut out = Vec::new();
        for k in 0..=maxdeg {
            let mut piece = PolynomialExpr::zero(vars);
            for (e, c) in &f.terms {
                let deg: usize = e.iter().map(|&v| v as usize).sum();
                if deg == k {
                    piece.terms.insert(e.clone(), c.clone());
                }
            }
            if !piece.is_zero() {
                out.push(piece.scale(&crate::poly::CNum::from_ratio(1, (k + 2) as i64)));
            }
        }
        out
    };
    let sum = |pieces: Vec<PolynomialExpr>| {
        pieces.into_iter().fold(PolynomialExpr::zero(vars), |a, b| a.add(&b))
    };
    // (Hω)_x = Σ weights of (-R·y + Q·l), (Hω)_y = Σ of (R·x - P·l),
    // (Hω)_l = Σ of (-Q·x + P·y); weights act on the graded pieces of the
    // products (degree counted after multiplication).
    let hx = sum(weighted(&r.mul(&yv).neg().add(&q.mul(&lv))));
    let hy = sum(weighted(&r.mul(&xv).sub(&p.mul(&lv))));
    let hl = sum(weighted(&q.mul(&xv).neg().add(&p.mul(&yv))));
    vec![hl, alpha.clone(), hx, hy]
}

/// Real representation of the Jacobian dF at a phase point (finite
/// differences of the compiled components; complex entries realified).
fn momentum_jacobian(system: &PolynomialSystem, m: &[Complex64]) -> DMatrix<f64> {
    let d = system.space.dim();
    let n = system.n();
    let compiled: Vec<_> = system.components.iter().map(|f| f.compile()).collect();
    // Analytic gradients: ∂f/∂x_j as polynomials.
    let _ = &compiled;
    let complexified = system.complexified;
    let rows = if complexified { 2 * n } else { n };
    let cols = if complexified { 2 * d } else { d };
    let mut jac = DMatrix::zeros(rows, cols);
    for (i, f) in system.components.iter().enumerate() {
        for j in 0..d {
            let g = f.derivative(j).compile().eval(m);
            if complexified {
                jac[(i, j)] = g.re;
                jac[(i, d + j)] = -g.im;
                jac[(n + i, j)] = g.im;
                jac[(n + i, d + j)] = g.re;
            } else {
                jac[(i, j)] = g.re;
            }
        }
    }
    jac
}

/// Rank check: smallest of the first `n` (or `2n`) singular values of dF.
pub fn regularity_margin(system: &PolynomialSystem, m: &[Complex64]) -> f64 {
    let jac = momentum_jacobian(system, m);
    let k = jac.nrows();
    let mut sv: Vec<f64> = jac.svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv.get(k - 1).copied().unwrap_or(0.0)
}

/// Packing of Newton unknowns (phase point and coefficient vector).
struct Packing {
    d: usize,
    n: usize,
    complexified: bool,
}

impl Packing {
    fn len(&self) -> usize {
        if self.complexified {
            2 * (self.d + self.n)
        } else {
            self.d + self.n
        }
    }

    fn pack(&self, m: &[Complex64], a: &[Complex64]) -> DVector<f64> {
        let mut u = DVector::zeros(self.len());
        if self.complexified {
            for i in 0..self.d {
                u[2 * i] = m[i].re;
                u[2 * i + 1] = m[i].im;
            }
            for i in 0..self.n {
                u[2 * self.d + 2 * i] = a[i].re;
                u[2 * self.d + 2 * i + 1] = a[i].im;
            }
        } else {
            for i in 0..self.d {
                u[i] = m[i].re;
            }
            for i in 0..self.n {
                u[self.d + i] = a[i].re;
            }
        }
        u
    }

    fn unpack(&self, u: &DVector<f64>) -> (Vec<Complex64>, Vec<Complex64>) {
        if self.complexified {
            let m = (0..self.d).map(|i| Complex64::new(u[2 * i], u[2 * i + 1])).collect();
            let a = (0..self.n)
                .map(|i| Complex64::new(u[2 * self.d + 2 * i], u[2 * self.d + 2 * i + 1]))
                .collect();
            (m, a)
        } else {
            let m = (0..self.d).map(|i| Complex64::new(u[i], 0.0)).collect();
            let a = (0..self.n).map(|i| Complex64::new(u[self.d + i], 0.0)).collect();
            (m, a)
        }
    }

    fn push_complex(&self, out: &mut Vec<f64>, z: Complex64) {
        out.push(z.re);
        if self.complexified {
            out.push(z.im);
        }
    }
}

/// Closure residual of the candidate (m, a): time-2π endpoint minus start,
/// the fiber constraint F(m) = z, and a phase anchor.
fn shooting_residual(
    system: &PolynomialSystem,
    m: &[Complex64],
    a: &[Complex64],
    z_target: &[Complex64],
    phase_dirs: &[DVector<f64>],
    anchor: &DVector<f64>,
    pk: &Packing,
    flow_tol: f64,
) -> Result<DVector<f64>, ActionError> {
    let flow = HamiltonianFlow::new(system, a.to_vec()).map_err(ActionError::from)?;
    let end = crate::dynamics::flow_endpoint(&flow, m, TWO_PI, flow_tol)?;
    let mut res: Vec<f64> = Vec::new();
    for i in 0..m.len() {
        pk.push_complex(&mut res, system.space.coord_diff(i, end[i], m[i]));
    }
    let fval = system.momentum_at(m);
    for i in 0..fval.len() {
        pk.push_complex(&mut res, fval[i] - z_target[i]);
    }
    // Phase anchors: one row per commuting flow direction, since on the
    // fiber the closed orbits come in a family of flow translates.
    let mu = pk.pack(m, a);
    for dir in phase_dirs {
        let mut phase = 0.0;
        for i in 0..dir.len().min(mu.len()) {
            phase += dir[i] * (mu[i] - anchor[i]);
        }
        res.push(phase);
    }
    Ok(DVector::from_vec(res))
}

/// Newton iteration on the closure map of the time-2π flow, restricted to
/// the fiber through the guess; the coefficient vector is rescaled so the
/// period is exactly 2π.
pub fn find_periodic_orbit(
    system: &PolynomialSystem,
    m1_guess: &[Complex64],
    a_guess: &[Complex64],
    target_residual: f64,
) -> Result<PeriodicOrbit, ActionError> {
    let z_target = system.momentum_at(m1_guess);
    find_periodic_orbit_on_fiber(system, m1_guess, a_guess, &z_target, target_residual)
}

/// Same, with an explicit fiber target.
pub fn find_periodic_orbit_on_fiber(
    system: &PolynomialSystem,
    m1_guess: &[Complex64],
    a_guess: &[Complex64],
    z_target: &[Complex64],
    target_residual: f64,
) -> Result<PeriodicOrbit, ActionError> {
    let margin = regularity_margin(system, m1_guess);
    if margin < 1e-8 {
        return Err(ActionError::SingularPoint(margin));
    }
    let pk = Packing { d: system.space.dim(), n: system.n(), complexified: system.complexified };
    let n = system.n();
    let d = system.space.dim();
    // Phase directions: the commuting-flow velocities at the guess (plus
    // their imaginary-time counterparts in the complexified case), packed
    // and orthonormalized. Each contributes one anchoring row.
    let zero_a = vec![Complex64::new(0.0, 0.0); n];
    let mut phase_dirs: Vec<DVector<f64>> = Vec::new();
    for k in 0..n {
        let coef: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let flow_k = HamiltonianFlow::new(system, coef).map_err(ActionError::from)?;
        let mut vel = vec![Complex64::new(0.0, 0.0); d];
        flow_k.field(m1_guess, &mut vel)?;
        let mut dirs = vec![pk.pack(&vel, &zero_a)];
        if system.complexified {
            let ivel: Vec<Complex64> =
                vel.iter().map(|v| v * Complex64::new(0.0, 1.0)).collect();
            dirs.push(pk.pack(&ivel, &zero_a));
        }
        for mut dv in dirs {
            for prev in &phase_dirs {
                let p = prev.dot(&dv);
                dv -= prev * p;
            }
            let nv = dv.norm();
            if nv > 1e-10 {
                phase_dirs.push(dv / nv);
            }
        }
    }
    let anchor = pk.pack(m1_guess, a_guess);

    let mut u = anchor.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut res = {
        let (m, a) = pk.unpack(&u);
        shooting_residual(system, &m, &a, z_target, &phase_dirs, &anchor, &pk, FLOW_TOL)?
    };
    history.push(res.norm());
    // Quasi-Newton: the finite-difference Jacobian is built with cheaper
    // flows and frozen across iterations, rebuilt only on stall; the build
    // tolerance tightens with the residual.
    let mut svd: Option<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut rebuilds = 0usize;
    let mut mu = 0.0_f64;
    let guess_scale: f64 = a_guess.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for _iter in 0..60 {
        if res.norm() <= target_residual {
            let (m, a) = pk.unpack(&u);
            // Reject collapse onto the spurious zero-coefficient branch.
            let a_scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if guess_scale > 0.0 && a_scale < 0.02 * guess_scale {
                return Err(ActionError::NewtonDivergence(history.len(), a_scale));
            }
            let flow = HamiltonianFlow::new(system, a.clone()).map_err(ActionError::from)?;
            let trajectory = integrate_flow(&flow, &m, TWO_PI, FLOW_TOL, None)?;
            let closure = trajectory
                .start()
                .iter()
                .zip(trajectory.end())
                .enumerate()
                .map(|(i, (s, e))| system.space.coord_diff(i, *e, *s).norm())
                .fold(0.0, f64::max);
            return Ok(PeriodicOrbit {
                base_point: m,
                coefficients: a,
                residual: closure,
                trajectory,
                newton_residuals: history,
                momentum: z_target.to_vec(),
                degenerate: false,
            });
        }
        if svd.is_none() {
            let jac_tol = (res.norm() * 1e-2).clamp(1e-12, 1e-9);
            let nu = u.len();
            let nr = res.len();
            let (m0, a0) = pk.unpack(&u);
            let r0 =
                shooting_residual(system, &m0, &a0, z_target, &phase_dirs, &anchor, &pk, jac_tol)?;
            let mut jac = DMatrix::zeros(nr, nu);
            for j in 0..nu {
                let h = 1e-6 * (1.0 + u[j].abs());
                let mut up = u.clone();
                up[j] += h;
                let (m, a) = pk.unpack(&up);
                let rp = shooting_residual(
                    system, &m, &a, z_target, &phase_dirs, &anchor, &pk, jac_tol,
                )?;
                for i in 0..nr {
                    jac[(i, j)] = (rp[i] - r0[i]) / h;
                }
            }
            svd = Some(jac.svd(true, true));
            mu = 0.0;
        }
        // Damped Gauss-Newton step with acceptance: a step is taken only if
        // it reduces the residual, otherwise the damping grows. This keeps
        // the iteration out of shallow spurious valleys when the shooting
        // Jacobian is ill conditioned.
        let mut accepted = false;
        for _attempt in 0..16 {
            let step = damped_step(svd.as_ref().unwrap(), &res, mu);
            let u_try = &u - &step;
            let (m, a) = pk.unpack(&u_try);
            // Keep the coefficient vector in the half-space of the guess:
            // the closure map also vanishes on the spurious a = 0 branch,
            // which silently attracts unconstrained least-squares steps.
            let along: f64 = a
                .iter()
                .zip(a_guess)
                .map(|(x, g)| (x * g.conj()).re)
                .sum::<f64>()
                / guess_scale.max(1e-300).powi(2);
            if guess_scale > 0.0 && along < 0.5 {
                mu = if mu <= 0.0 { 1e-10 } else { mu * 16.0 };
                if mu > 1e8 {
                    break;
                }
                continue;
            }
            let res_try =
                shooting_residual(system, &m, &a, z_target, &phase_dirs, &anchor, &pk, FLOW_TOL)?;
            if res_try.norm().is_finite() && res_try.norm() < res.norm() {
                u = u_try;
                res = res_try;
                history.push(res.norm());
                if std::env::var("TORICSYM_DEBUG_NEWTON").is_ok() {
                    eprintln!(
                        "newton accept {}: res {:.3e} mu {:.1e} |a| {:.4}",
                        history.len(),
                        res.norm(),
                        mu,
                        a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
                    );
                }
                mu *= 0.25;
                accepted = true;
                break;
            }
            mu = if mu <= 0.0 { 1e-10 } else { mu * 16.0 };
            if mu > 1e8 {
                break;
            }
        }
        if !accepted {
            if rebuilds >= 3 {
                return Err(ActionError::NewtonDivergence(
                    history.len(),
                    history.last().copied().unwrap_or(f64::NAN),
                ));
            }
            svd = None;
            rebuilds += 1;
        }
    }
    Err(ActionError::NewtonDivergence(history.len(), history.last().copied().unwrap_or(0.0)))
}

/// Tikhonov-damped least-squares step from a precomputed SVD:
/// Δ = V diag(σ/(σ²+μ)) U' r.
fn damped_step(
    svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    res: &DVector<f64>,
    mu: f64,
) -> DVector<f64> {
    let u_m = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v");
    let k = svd.singular_values.len();
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    let mut coeffs = DVector::zeros(k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > 1e-13 * smax {
            let proj = u_m.column(i).dot(res);
            coeffs[i] = s / (s * s + mu) * proj;
        }
    }
    v_t.transpose() * coeffs
}

/// (1/2π) ∮ α over a 2π-periodic orbit of the system, computed by flowing
/// with an augmented quadrature channel at two tolerances and verifying the
/// Richardson discrepancy.
pub fn orbit_loop_integral(
    system: &PolynomialSystem,
    orbit: &PeriodicOrbit,
    form: &PrimitiveForm,
) -> Result<Complex64, ActionError> {
    if orbit.degenerate {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let flow =
        HamiltonianFlow::new(system, orbit.coefficients.clone()).map_err(ActionError::from)?;
    let alpha = |x: &[Complex64]| form.components_at(x);
    let run = |tol: f64| -> Result<Complex64, ActionError> {
        let traj = integrate_flow(&flow, &orbit.base_point, TWO_PI, tol, Some(&alpha))?;
        Ok(traj.one_form_integral / TWO_PI)
    };
    let coarse = run(1e-11)?;
    let fine = run(1e-13)?;
    let disc = (coarse - fine).norm();
    if disc > 1e-8 {
        return Err(ActionError::QuadratureFailure(disc));
    }
    Ok(fine)
}

/// Composite-Simpson line integral of a 1-form over a parametrized loop
/// (position and tangent), refined until two successive levels agree.
pub fn parametric_loop_integral(
    curve: &dyn Fn(f64) -> (Vec<Complex64>, Vec<Complex64>),
    form: &PrimitiveForm,
    period: f64,
) -> Result<Complex64, ActionError> {
    let eval = |u: f64| -> Complex64 {
        let (pos, tan) = curve(u);
        form.components_at(&pos).iter().zip(&tan).map(|(a, t)| a * t).sum()
    };
    let simpson = |n: usize| -> Complex64 {
        let h = period / n as f64;
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let u0 = k as f64 * h;
            s += (eval(u0) + 4.0 * eval(u0 + 0.5 * h) + eval(u0 + h)) * (h / 6.0);
        }
        s
    };
    let mut prev = simpson(32);
    for n in [64usize, 128, 256, 512, 1024, 2048] {
        let cur = simpson(n);
        if (cur - prev).norm() < 1e-9 * (1.0 + cur.norm()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(ActionError::QuadratureFailure((prev).norm()))
}

/// Continuation options for `action_function`.
#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    /// Smallest continuation step, as a fraction of the grid spacing.
    pub min_step_fraction: f64,
    pub orbit_residual: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { min_step_fraction: 1.0 / 32.0, orbit_residual: 1e-10 }
    }
}

/// Continue the seed orbit over the momentum grid (an ordered path),
/// evaluate the Mineur-Arnold loop integral at each point, normalize so
/// that I(0) = 0, and fit the linear coefficient.
pub fn action_function(
    system: &PolynomialSystem,
    seed: &PeriodicOrbit,
    grid: &[Vec<f64>],
    opts: &ContinuationOptions,
) -> Result<ActionSample, ActionError> {
    let form = PrimitiveForm::for_system(system);
    let values_raw = continue_and_integrate(system, seed, grid, &form, opts)?;
    finalize_sample(grid, values_raw.0, values_raw.1)
}

fn continue_and_integrate(
    system: &PolynomialSystem,
    seed: &PeriodicOrbit,
    grid: &[Vec<f64>],
    form: &PrimitiveForm,
    opts: &ContinuationOptions,
) -> Result<(Vec<Complex64>, Vec<f64>), ActionError> {
    let n = system.n();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut residuals = vec![0.0_f64; grid.len()];
    let mut cur = seed.clone();
    let mut cur_z: Vec<f64> = seed.momentum.iter().map(|z| z.re).collect();
    // Typical grid spacing for the step floor.
    let spacing = grid
        .windows(2)
        .map(|w| dist(&w[0], &w[1]))
        .fold(0.0_f64, f64::max)
        .max(dist(&cur_z, &grid[0]))
        .max(1e-9);
    // Walk outward from the seed fiber so that a degenerate origin (where
    // the orbit family collapses) is reached last.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| {
        dist(&grid[i], &cur_z).partial_cmp(&dist(&grid[j], &cur_z)).unwrap()
    });
    for gi in order {
        let z_goal = &grid[gi];
        if z_goal.len() != n {
            return Err(ActionError::Dynamics(DynError::Dimension(
                "grid point arity".into(),
            )));
        }
        let mut step = spacing;
        loop {
            let remaining = dist(&cur_z, z_goal);
            if remaining < 1e-14 {
                break;
            }
            let frac = (step / remaining).min(1.0);
            let z_try: Vec<f64> = cur_z
                .iter()
                .zip(z_goal)
                .map(|(a, b)| a + frac * (b - a))
                .collect();
            let z_c: Vec<Complex64> = z_try.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            match find_periodic_orbit_on_fiber(
                system,
                &cur.base_point,
                &cur.coefficients,
                &z_c,
                opts.orbit_residual,
            ) {
                Ok(orbit) => {
                    cur = orbit;
                    cur_z = z_try;
                    step = (step * 2.0).min(spacing);
                }
                Err(e) => {
                    // At the origin the orbit family may collapse onto an
                    // equilibrium; take the degenerate limit there.
                    if dist(&z_try, &zero_vec(n)) < 1e-12 {
                        if let Some(orbit) = equilibrium_fallback(system, &cur) {
                            cur = orbit;
                            cur_z = z_try;
                            continue;
                        }
                    }
                    match e {
                        ActionError::NewtonDivergence(..)
                        | ActionError::IncompleteFlow(_)
                        | ActionError::SingularPoint(_)
                        | ActionError::Dynamics(DynError::ToleranceNotMet(_)) => {
                            step *= 0.5;
                            if step < opts.min_step_fraction * spacing {
                                return Err(ActionError::ContinuationFailure(gi));
                            }
                        }
                        other => return Err(other),
                    }
                }
            }
        }
        let val = orbit_loop_integral(system, &cur, form)?;
        values[gi] = val;
        residuals[gi] = cur.residual;
    }
    Ok((values, residuals))
}

fn zero_vec(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Degenerate limit: the orbit family shrinks onto a critical point of a·F.
fn equilibrium_fallback(system: &PolynomialSystem, near: &PeriodicOrbit) -> Option<PeriodicOrbit> {
    let d = system.space.dim();
    let combo = {
        let mut f = PolynomialExpr::zero(&system.components[0].vars);
        for (c, comp) in near.coefficients.iter().zip(&system.components) {
            f = f.add(&comp.scale(&crate::poly::CNum::from_f64(c.re)));
        }
        f
    };
    let mut x: Vec<f64> = near.base_point.iter().map(|z| z.re).collect();
    for _ in 0..60 {
        let g = crate::dynamics::gradient_at(&combo, &x);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-12 {
            let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let fv = system.momentum_at(&xc);
            if fv.iter().map(|z| z.norm()).fold(0.0, f64::max) > 1e-9 {
                return None;
            }
            let traj = Trajectory {
                times: vec![0.0, TWO_PI],
                states: vec![xc.clone(), xc.clone()],
                derivs: vec![],
                one_form_integral: Complex64::new(0.0, 0.0),
                energy_drift: 0.0,
            };
            return Some(PeriodicOrbit {
                base_point: xc.clone(),
                coefficients: near.coefficients.clone(),
                residual: 0.0,
                trajectory: traj,
                newton_residuals: vec![gn],
                momentum: fv,
                degenerate: true,
            });
        }
        let h = crate::dynamics::hessian_at(&combo, &x);
        let g_v = DVector::from_vec(g);
        let step = h.svd(true, true).solve(&g_v, 1e-12).ok()?;
        for i in 0..d {
            x[i] -= step[i];
        }
    }
    None
}

/// Normalize I(0) = 0 and fit I(z) = λ̂·z + quadratic remainder.
fn finalize_sample(
    grid: &[Vec<f64>],
    mut values: Vec<Complex64>,
    residuals: Vec<f64>,
) -> Result<ActionSample, ActionError> {
    let n = grid.first().map_or(0, |g| g.len());
    // Subtract the value at z = 0 when the grid contains it; otherwise
    // extrapolate to the origin along the grid ray (high-order 1-D fit),
    // falling back to the fitted constant for scattered grids.
    let zero_idx = grid.iter().position(|z| z.iter().all(|v| v.abs() < 1e-12));
    let shift = match zero_idx {
        Some(i) => values[i],
        None => match ray_extrapolate_to_origin(grid, &values) {
            Some(v) => v,
            None => {
                let (c_re, _, _) =
                    quadratic_fit(grid, &values.iter().map(|v| v.re).collect::<Vec<_>>());
                let (c_im, _, _) =
                    quadratic_fit(grid, &values.iter().map(|v| v.im).collect::<Vec<_>>());
                Complex64::new(c_re, c_im)
            }
        },
    };
    for v in values.iter_mut() {
        *v -= shift;
    }
    // Refit after normalization for the reported coefficients.
    let (_, l_re, q_re) = quadratic_fit(grid, &values.iter().map(|v| v.re).collect::<Vec<_>>());
    let (_, l_im, q_im) = quadratic_fit(grid, &values.iter().map(|v| v.im).collect::<Vec<_>>());
    let lambda_hat: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(l_re[i], l_im[i])).collect();
    Ok(ActionSample {
        grid: grid.to_vec(),
        values,
        residuals,
        lambda_hat,
        quad_remainder: q_re.hypot(q_im),
    })
}

/// For grids lying on a ray through the origin: polynomial fit in the ray
/// parameter, evaluated at the origin. None when the grid is not such a ray.
fn ray_extrapolate_to_origin(grid: &[Vec<f64>], values: &[Complex64]) -> Option<Complex64> {
    let n = grid.first()?.len();
    let far = grid.iter().max_by(|a, b| {
        let na: f64 = a.iter().map(|v| v * v).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        na.partial_cmp(&nb).unwrap()
    })?;
    let far_norm: f64 = far.iter().map(|v| v * v).sum::<f64>().sqrt();
    if far_norm < 1e-12 {
        return None;
    }
    let dir: Vec<f64> = far.iter().map(|v| v / far_norm).collect();
    let mut ts = Vec::with_capacity(grid.len());
    for z in grid {
        let t: f64 = z.iter().zip(&dir).map(|(a, b)| a * b).sum();
        // Collinearity through the origin.
        let off: f64 = (0..n).map(|i| (z[i] - t * dir[i]).powi(2)).sum::<f64>().sqrt();
        if off > 1e-10 * far_norm.max(1.0) {
            return None;
        }
        ts.push(t / far_norm);
    }
    let deg = (grid.len().saturating_sub(2)).min(6);
    let rows = grid.len();
    let mut a = DMatrix::zeros(rows, deg + 1);
    for i in 0..rows {
        let mut p = 1.0;
        for j in 0..=deg {
            a[(i, j)] = p;
            p *= ts[i];
        }
    }
    let svd = a.svd(true, true);
    let fit = |vals: Vec<f64>| -> Option<f64> {
        let c = svd.solve(&DVector::from_vec(vals), 1e-12).ok()?;
        Some(c[0])
    };
    let re = fit(values.iter().map(|v| v.re).collect())?;
    let im = fit(values.iter().map(|v| v.im).collect())?;
    Some(Complex64::new(re, im))
}

/// Least-squares fit of constant + linear + quadratic monomials; returns
/// (constant, linear coefficients, norm of the quadratic block).
fn quadratic_fit(grid: &[Vec<f64>], vals: &[f64]) -> (f64, Vec<f64>, f64) {
    let n = grid.first().map_or(0, |g| g.len());
    let mut cols: Vec<Vec<f64>> = Vec::new();
    cols.push(vec![1.0; grid.len()]);
    for i in 0..n {
        cols.push(grid.iter().map(|z| z[i]).collect());
    }
    let mut quad_index = Vec::new();
    for i in 0..n {
        for j in i..n {
            quad_index.push((i, j));
            cols.push(grid.iter().map(|z| z[i] * z[j]).collect());
        }
    }
    let rows = grid.len();
    let mut a = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..rows {
            a[(i, j)] = c[i];
        }
    }
    let b = DVector::from_vec(vals.to_vec());
    let svd = a.svd(true, true);
    let c = svd.solve(&b, 1e-10).unwrap_or_else(|_| DVector::zeros(cols.len()));
    let constant = c[0];
    let linear = (0..n).map(|i| c[1 + i]).collect();
    let quad: f64 = (0..quad_index.len()).map(|k| c[1 + n + k] * c[1 + n + k]).sum::<f64>().sqrt();
    (constant, linear, quad)
}

/// The time-2π monodromy construction: local canonical section, shift
/// functions along the commuting flows, generating function by path
/// integration, and I(z) = a·z - S(z)/2π.
pub fn monodromy_action(
    system: &PolynomialSystem,
    m1: &[Complex64],
    a: &[Complex64],
    grid: &[Vec<f64>],
) -> Result<ActionSample, ActionError> {
    let margin = regularity_margin(system, m1);
    if margin < 1e-8 {
        return Err(ActionError::SingularPoint(margin));
    }
    let n = system.n();
    let z_base: Vec<f64> = system.momentum_at(m1).iter().map(|z| z.re).collect();
    {
        let imag = system.momentum_at(m1).iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if imag > 1e-9 {
            return Err(ActionError::Dynamics(DynError::Dimension(
                "monodromy base point must sit over a real momentum value".into(),
            )));
        }
    }

    // Shift function h(z): complex times t solving Φ_t(σ(z)) = φ^{2π}_{aF}(σ(z)).
    let mut warm: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
    let mut shift_at = |z: &[f64], warm: &mut Vec<Complex64>| -> Result<Vec<Complex64>, ActionError> {
        let sec = section_point(system, m1, z)?;
        let flow = HamiltonianFlow::new(system, a.to_vec()).map_err(ActionError::from)?;
        let end = crate::dynamics::flow_endpoint(&flow, &sec, TWO_PI, FLOW_TOL)?;
        let t = solve_commuting_times(system, &sec, &end, warm)?;
        *warm = t.clone();
        Ok(t)
    };

    // S by composite Simpson along the polyline base -> grid[0] -> ... .
    let mut values = Vec::with_capacity(grid.len());
    let mut s_acc = Complex64::new(0.0, 0.0);
    let mut prev_z = z_base.clone();
    let mut h_prev = shift_at(&prev_z, &mut warm)?;
    for z_goal in grid {
        let seg = dist(&prev_z, z_goal);
        if seg > 1e-14 {
            // Subdivide long segments; Simpson per piece.
            let pieces = (seg / 0.05).ceil() as usize;
            let pieces = pieces.clamp(1, 64);
            for k in 0..pieces {
                let f0 = k as f64 / pieces as f64;
                let f1 = (k + 1) as f64 / pieces as f64;
                let zm: Vec<f64> = prev_z
                    .iter()
                    .zip(z_goal)
                    .map(|(a, b)| a + 0.5 * (f0 + f1) * (b - a))
                    .collect();
                let z1: Vec<f64> =
                    prev_z.iter().zip(z_goal).map(|(a, b)| a + f1 * (b - a)).collect();
                let h_mid = shift_at(&zm, &mut warm)?;
                let h_end = shift_at(&z1, &mut warm)?;
                let dz: Vec<f64> = prev_z
                    .iter()
                    .zip(z_goal)
                    .map(|(a, b)| (f1 - f0) * (b - a))
                    .collect();
                let dot = |h: &[Complex64]| -> Complex64 {
                    h.iter().zip(&dz).map(|(hi, di)| hi * *di).sum()
                };
                s_acc += (dot(&h_prev) + 4.0 * dot(&h_mid) + dot(&h_end)) / 6.0;
                h_prev = h_end;
            }
        }
        prev_z = z_goal.clone();
        let az: Complex64 = a.iter().zip(z_goal).map(|(ai, zi)| ai * *zi).sum();
        values.push(az - s_acc / TWO_PI);
    }
    finalize_sample(grid, values, vec![0.0; grid.len()])
}

/// Closedness residual of the shift field on a small 2-D probe around the
/// base point (finite-difference curl); meaningful for n >= 2.
pub fn monodromy_curl_residual(
    system: &PolynomialSystem,
    m1: &[Complex64],
    a: &[Complex64],
    axes: (usize, usize),
    h: f64,
) -> Result<f64, ActionError> {
    let n = system.n();
    let z_base: Vec<f64> = system.momentum_at(m1).iter().map(|z| z.re).collect();
    let mut warm = vec![Complex64::new(0.0, 0.0); n];
    let mut shift = |z: &[f64], warm: &mut Vec<Complex64>| -> Result<Vec<Complex64>, ActionError> {
        let sec = section_point(system, m1, z)?;
        let flow = HamiltonianFlow::new(system, a.to_vec()).map_err(ActionError::from)?;
        let end = crate::dynamics::flow_endpoint(&flow, &sec, TWO_PI, FLOW_TOL)?;
        let t = solve_commuting_times(system, &sec, &end, warm)?;
        *warm = t.clone();
        Ok(t)
    };
    let (i, j) = axes;
    let mut zp = z_base.clone();
    zp[i] += h;
    let hp_i = shift(&zp, &mut warm)?;
    let mut zm = z_base.clone();
    zm[i] -= h;
    let hm_i = shift(&zm, &mut warm)?;
    let mut zp2 = z_base.clone();
    zp2[j] += h;
    let hp_j = shift(&zp2, &mut warm)?;
    let mut zm2 = z_base.clone();
    zm2[j] -= h;
    let hm_j = shift(&zm2, &mut warm)?;
    // ∂h_j/∂z_i - ∂h_i/∂z_j.
    let dji = (hp_i[j] - hm_i[j]) / (2.0 * h);
    let dij = (hp_j[i] - hm_j[i]) / (2.0 * h);
    let curl = (dji - dij).norm();
    if curl > 1e-5 {
        return Err(ActionError::CurlResidual(curl));
    }
    Ok(curl)
}

/// Point on the fiber F = z near the base point, by Newton along the
/// gradient directions.
fn section_point(
    system: &PolynomialSystem,
    m1: &[Complex64],
    z: &[f64],
) -> Result<Vec<Complex64>, ActionError> {
    let d = system.space.dim();
    let n = system.n();
    let mut m = m1.to_vec();
    for _ in 0..80 {
        let f = system.momentum_at(&m);
        let mut res = Vec::with_capacity(2 * n);
        for i in 0..n {
            res.push(f[i].re - z[i]);
            res.push(f[i].im);
        }
        let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-12 {
            return Ok(m);
        }
        // Move within the span of conjugate gradient directions.
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        let mut dirs: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        for k in 0..n {
            let g: Vec<Complex64> =
                (0..d).map(|j| system.components[k].derivative(j).compile().eval(&m)).collect();
            dirs.push(g.iter().map(|v| v.conj()).collect());
        }
        for (col, dir) in dirs.iter().enumerate() {
            for i in 0..n {
                let mut de = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    de += system.components[i].derivative(j).compile().eval(&m) * dir[j];
                }
                jac[(2 * i, 2 * col)] = de.re;
                jac[(2 * i + 1, 2 * col)] = de.im;
                let dei = de * Complex64::new(0.0, 1.0);
                jac[(2 * i, 2 * col + 1)] = dei.re;
                jac[(2 * i + 1, 2 * col + 1)] = dei.im;
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&DVector::from_vec(res), 1e-12)
            .map_err(|_| ActionError::SingularPoint(0.0))?;
        for (col, dir) in dirs.iter().enumerate() {
            let c = Complex64::new(step[2 * col], step[2 * col + 1]);
            for j in 0..d {
                m[j] -= c * dir[j];
            }
        }
        if !system.complexified {
            for v in m.iter_mut() {
                v.im = 0.0;
            }
        }
    }
    Err(ActionError::NewtonDivergence(80, 0.0))
}

/// Times (t_1..t_n) with φ_{t·F}^1 (start) = end, i.e. the fiber shift in
/// the commuting-flow chart. Complex times realize the complexified flows.
fn solve_commuting_times(
    system: &PolynomialSystem,
    start: &[Complex64],
    end: &[Complex64],
    warm: &[Complex64],
) -> Result<Vec<Complex64>, ActionError> {
    let d = system.space.dim();
    let n = system.n();
    let complexified = system.complexified;
    let nu = if complexified { 2 * n } else { n };
    let mut t: Vec<Complex64> = warm.to_vec();
    // Newton with the exact Jacobian: for commuting flows, the derivative
    // of φ^1_{t·F}(start) in t_i is X_{f_i} at the reached point (and i·X_i
    // for the imaginary part of a complex time).
    let unit_flows: Vec<HamiltonianFlow> = (0..n)
        .map(|k| {
            HamiltonianFlow::new(
                system,
                (0..n)
                    .map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0))
                    .collect(),
            )
            .map_err(ActionError::from)
        })
        .collect::<Result<_, _>>()?;
    let reach = |t: &[Complex64]| -> Result<Vec<Complex64>, ActionError> {
        let flow = HamiltonianFlow::new(system, t.to_vec()).map_err(ActionError::from)?;
        Ok(crate::dynamics::flow_endpoint(&flow, start, 1.0, FLOW_TOL)?)
    };
    let residual_of = |reached: &[Complex64]| -> Vec<f64> {
        let mut res = Vec::with_capacity(2 * d);
        for i in 0..d {
            let diff = system.space.coord_diff(i, reached[i], end[i]);
            res.push(diff.re);
            if complexified {
                res.push(diff.im);
            }
        }
        res
    };
    let mut reached = reach(&t)?;
    for _ in 0..60 {
        let res = residual_of(&reached);
        let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-11 {
            return Ok(t);
        }
        let nr = res.len();
        let mut jac = DMatrix::zeros(nr, nu);
        let mut field = vec![Complex64::new(0.0, 0.0); d];
        for k in 0..n {
            unit_flows[k].field(&reached, &mut field)?;
            for i in 0..d {
                if complexified {
                    jac[(2 * i, 2 * k)] = field[i].re;
                    jac[(2 * i + 1, 2 * k)] = field[i].im;
                    let fi = field[i] * Complex64::new(0.0, 1.0);
                    jac[(2 * i, 2 * k + 1)] = fi.re;
                    jac[(2 * i + 1, 2 * k + 1)] = fi.im;
                } else {
                    jac[(i, k)] = field[i].re;
                }
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&DVector::from_vec(res), 1e-12)
            .map_err(|_| ActionError::NewtonDivergence(60, rn))?;
        for k in 0..n {
            if complexified {
                t[k] -= Complex64::new(step[2 * k], step[2 * k + 1]);
            } else {
                t[k].re -= step[k];
            }
        }
        reached = reach(&t)?;
    }
    let res = residual_of(&reached);
    Err(ActionError::NewtonDivergence(60, res.iter().map(|v| v * v).sum::<f64>().sqrt()))
}

/// First-return time of the flow to the start point, detected by winding
/// around the orbit's centroid in the two dominant coordinates; refined by
/// the distance minimum near the candidate. For planar-like closed orbits.
pub fn estimate_period(
    flow: &HamiltonianFlow,
    m: &[Complex64],
    t_max: f64,
) -> Result<f64, ActionError> {
    let traj = integrate_flow(flow, m, t_max, 1e-10, None)?;
    // Dominant coordinate pair by variance.
    let d = m.len();
    let nsave = traj.states.len();
    let mut means = vec![0.0; d];
    for s in &traj.states {
        for i in 0..d {
            means[i] += s[i].re / nsave as f64;
        }
    }
    let mut var = vec![0.0; d];
    for s in &traj.states {
        for i in 0..d {
            var[i] += (s[i].re - means[i]).powi(2);
        }
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| var[b].partial_cmp(&var[a]).unwrap());
    let (i1, i2) = (idx[0], idx[1]);
    let mut angle = 0.0_f64;
    let mut prev = (traj.states[0][i1].re - means[i1], traj.states[0][i2].re - means[i2]);
    let mut t_cross = None;
    for (k, s) in traj.states.iter().enumerate().skip(1) {
        let cur = (s[i1].re - means[i1], s[i2].re - means[i2]);
        let cross = prev.0 * cur.1 - prev.1 * cur.0;
        let dot = prev.0 * cur.0 + prev.1 * cur.1;
        let before = angle;
        angle += cross.atan2(dot);
        prev = cur;
        if angle.abs() >= 2.0 * std::f64::consts::PI {
            // Interpolate the crossing time inside this step.
            let excess = (2.0 * std::f64::consts::PI - before.abs())
                / (angle.abs() - before.abs()).max(1e-300);
            let t0 = traj.times[k - 1];
            let t1 = traj.times[k];
            t_cross = Some(t0 + excess * (t1 - t0));
            break;
        }
    }
    let Some(t_cross) = t_cross else {
        return Err(ActionError::IncompleteFlow(format!(
            "no return within t = {t_max} (winding {angle:.3})"
        )));
    };
    // Refine by minimizing the distance to the start near the crossing.
    let dist_at = |t: f64| -> f64 {
        let (pos, _) = traj.interpolate(t);
        pos.iter().zip(m).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let mut best = (t_cross, dist_at(t_cross));
    let half_window = 0.1 * t_cross;
    for k in 0..400 {
        let t = t_cross - half_window + 2.0 * half_window * k as f64 / 399.0;
        if t > 0.0 {
            let dd = dist_at(t);
            if dd < best.1 {
                best = (t, dd);
            }
        }
    }
    Ok(best.0)
}

/// View a stored 2π-periodic orbit as a parametrized loop (position and
/// tangent via Hermite interpolation of the trajectory).
pub fn orbit_as_curve(
    orbit: &PeriodicOrbit,
) -> impl Fn(f64) -> (Vec<Complex64>, Vec<Complex64>) + '_ {
    move |u: f64| orbit.trajectory.interpolate(u.rem_euclid(TWO_PI))
}

/// Verdict of the loop-based periodicity witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessVerdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct WitnessReport {
    /// ∮ θ_1 over the supplied loop.
    pub theta1_integral: f64,
    /// Flat-metric length of the loop.
    pub length: f64,
    /// Largest dual-basis solve residual along the loop.
    pub tangency_residual: f64,
    /// Whether the ball-radius inequality held for the supplied chart data.
    pub ball_condition: bool,
    pub verdict: WitnessVerdict,
}

/// Evaluate the loop conditions at a singular fiber: the pairing ∮θ_1 ≠ 0
/// and a ball-radius surrogate |m_1| < r e^{-n c l} for the supplied chart
/// radius and Lipschitz constant.
pub fn periodicity_witness(
    system: &PolynomialSystem,
    loop_curve: &dyn Fn(f64) -> (Vec<Complex64>, Vec<Complex64>),
    chart_radius: f64,
    lipschitz: f64,
) -> Result<WitnessReport, ActionError> {
    let n = system.n();
    let d = system.space.dim();
    let samples = 512usize;
    let mut theta1 = 0.0;
    let mut length = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    let unit_flows: Vec<HamiltonianFlow> = (0..n)
        .map(|k| {
            HamiltonianFlow::new(
                system,
                (0..n)
                    .map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0))
                    .collect(),
            )
            .map_err(ActionError::from)
        })
        .collect::<Result<_, _>>()?;
    let grads: Vec<Vec<crate::poly::CompiledPoly>> = system
        .components
        .iter()
        .map(|f| (0..d).map(|j| f.derivative(j).compile()).collect())
        .collect();
    // Dual-basis coefficients c with γ'(u) = Σ c_i X_{f_i}(γ(u)).
    let coeffs_at = |u: f64| -> Result<(Vec<f64>, f64, f64), ActionError> {
        let (pos, tan) = loop_curve(u);
        // Distance from the singular set, as the smallest gradient norm.
        let margin = grads
            .iter()
            .map(|g| g.iter().map(|p| p.eval(&pos).norm_sqr()).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        if margin < 1e-10 {
            return Err(ActionError::SingularOnLoop(margin));
        }
        let mut fields = Vec::with_capacity(n);
        for flow in &unit_flows {
            let mut x = vec![Complex64::new(0.0, 0.0); d];
            flow.field(&pos, &mut x)?;
            fields.push(x);
        }
        let rows = 2 * d;
        let mut a = DMatrix::zeros(rows, n);
        let mut b = DVector::zeros(rows);
        for j in 0..d {
            for k in 0..n {
                a[(2 * j, k)] = fields[k][j].re;
                a[(2 * j + 1, k)] = fields[k][j].im;
            }
            b[2 * j] = tan[j].re;
            b[2 * j + 1] = tan[j].im;
        }
        let svd = a.clone().svd(true, true);
        let c = svd
            .solve(&b, 1e-13)
            .map_err(|_| ActionError::SingularOnLoop(0.0))?;
        let res = (&a * &c - &b).norm() / b.norm().max(1e-12);
        let cv: Vec<f64> = (0..n).map(|k| c[k]).collect();
        let posn = pos.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Ok((cv, res, posn))
    };
    // Composite Simpson over the parameter circle.
    let h = TWO_PI / samples as f64;
    let mut c_prev = coeffs_at(0.0)?;
    worst_res = worst_res.max(c_prev.1);
    min_margin = min_margin.min(c_prev.2);
    for k in 0..samples {
        let u0 = k as f64 * h;
        let cm = coeffs_at(u0 + 0.5 * h)?;
        let c1 = coeffs_at(u0 + h)?;
        worst_res = worst_res.max(cm.1).max(c1.1);
        min_margin = min_margin.min(cm.2).min(c1.2);
        theta1 += (c_prev.0[0] + 4.0 * cm.0[0] + c1.0[0]) * (h / 6.0);
        let sp = |c: &Vec<f64>| c.iter().map(|v| v * v).sum::<f64>().sqrt();
        length += (sp(&c_prev.0) + 4.0 * sp(&cm.0) + sp(&c1.0)) * (h / 6.0);
        c_prev = c1;
    }
    // Ball-radius branch of the connectivity condition, evaluated at the
    // loop basepoint.
    let (base, _) = loop_curve(0.0);
    let base_norm = base.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let threshold = chart_radius * (-(n as f64) * lipschitz * length).exp();
    let ball_ok = base_norm < threshold;
    let verdict = if theta1.abs() <= 1e-8 * length.max(1.0) {
        WitnessVerdict::Fails
    } else if ball_ok {
        WitnessVerdict::Holds
    } else {
        WitnessVerdict::Inconclusive
    };
    Ok(WitnessReport {
        theta1_integral: theta1,
        length,
        tangency_residual: worst_res,
        ball_condition: ball_ok,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PhaseSpace;
    use crate::poly::parse_hamiltonian;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn elliptic_system() -> PolynomialSystem {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2 + q^2)/2", &v, &[]).unwrap();
        PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: false,
        }
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn shoot_elliptic_orbit() {
        let sys = elliptic_system();
        let orbit =
            find_periodic_orbit(&sys, &[c(1.0), c(0.0)], &[c(1.1)], 1e-10).unwrap();
        assert!(orbit.residual <= 1e-10 * 10.0, "residual {}", orbit.residual);
        assert!((orbit.coefficients[0] - c(1.0)).norm() < 1e-8);
    }

    #[test]
    fn shoot_rejects_singular_point() {
        let sys = elliptic_system();
        let err = find_periodic_orbit(&sys, &[c(0.0), c(0.0)], &[c(1.0)], 1e-10);
        assert!(matches!(err, Err(ActionError::SingularPoint(_))));
    }

    #[test]
    fn elliptic_action_is_energy() {
        let sys = elliptic_system();
        let orbit = find_periodic_orbit(&sys, &[c(0.6), c(0.0)], &[c(1.0)], 1e-10).unwrap();
        let val = orbit_loop_integral(&sys, &orbit, &PrimitiveForm::for_system(&sys)).unwrap();
        assert!((val.re - 0.18).abs() < 1e-9, "got {val}");
        assert!(val.im.abs() < 1e-10);
    }

    #[test]
    fn elliptic_action_function_linear() {
        let sys = elliptic_system();
        let orbit = find_periodic_orbit(&sys, &[c(0.65), c(0.0)], &[c(1.0)], 1e-10).unwrap();
        let grid: Vec<Vec<f64>> = (0..11).map(|k| vec![0.02 * k as f64]).collect();
        let sample = action_function(&sys, &orbit, &grid, &Default::default()).unwrap();
        for (z, v) in grid.iter().zip(&sample.values) {
            assert!((v.re - z[0]).abs() < 1e-8, "I({}) = {}", z[0], v.re);
        }
        assert!((sample.lambda_hat[0].re - 1.0).abs() < 1e-6);
        assert!(sample.quad_remainder < 1e-6);
    }

    #[test]
    fn anharmonic_action_matches_area_oracle() {
        // H = (p^2+q^2)/2 + q^4: action = enclosed area / 2π, computed by
        // an independent 2-D quadrature over the region H <= E.
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2 + q^2)/2 + q^4", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1.clone()],
            complexified: false,
        };
        let e_val = 0.08_f64;
        // Find a point on the level set: q = 0, p = sqrt(2E).
        let p0 = (2.0 * e_val).sqrt();
        let orbit = find_periodic_orbit(&sys, &[c(p0), c(0.0)], &[c(0.9)], 1e-10).unwrap();
        let act = orbit_loop_integral(&sys, &orbit, &PrimitiveForm::for_system(&sys)).unwrap();
        // Midpoint-rule area of {H <= E} on a fine grid.
        let fc = f1.compile();
        let mut area = 0.0;
        let nn = 2000;
        let lim = 0.7;
        let cell = (2.0 * lim / nn as f64) * (2.0 * lim / nn as f64);
        for i in 0..nn {
            for j in 0..nn {
                let p = -lim + (i as f64 + 0.5) * 2.0 * lim / nn as f64;
                let q = -lim + (j as f64 + 0.5) * 2.0 * lim / nn as f64;
                if fc.eval_real(&[p, q]) <= e_val {
                    area += cell;
                }
            }
        }
        let oracle = area / TWO_PI;
        assert!(
            (act.re - oracle).abs() < 2e-4,
            "loop {act}, oracle {oracle}"
        );
    }

    #[test]
    fn monodromy_matches_rotation_oracle() {
        // f1 = h + h^2 with h = (p^2+q^2)/2: the time-2π map rotates by
        // 2π(1+2h), so the action is h = (sqrt(1+4z)-1)/2.
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2+q^2)/2 + ((p^2+q^2)/2)^2", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: false,
        };
        let m1 = [c(0.55), c(0.0)];
        let grid: Vec<Vec<f64>> = (0..9).map(|k| vec![0.02 + 0.02 * k as f64]).collect();
        let sample = monodromy_action(&sys, &m1, &[c(1.0)], &grid).unwrap();
        for (z, v) in grid.iter().zip(&sample.values) {
            let oracle = 0.5 * ((1.0 + 4.0 * z[0]).sqrt() - 1.0);
            // Both normalized to vanish at z = 0.
            assert!(
                (v.re - oracle).abs() < 2e-6,
                "monodromy I({}) = {}, oracle {}",
                z[0],
                v.re,
                oracle
            );
        }
    }

    #[test]
    fn monodromy_trivial_for_exact_circle() {
        let sys = elliptic_system();
        let grid: Vec<Vec<f64>> = (0..6).map(|k| vec![0.05 + 0.03 * k as f64]).collect();
        let sample = monodromy_action(&sys, &[c(0.5), c(0.0)], &[c(1.0)], &grid).unwrap();
        for (z, v) in grid.iter().zip(&sample.values) {
            assert!((v.re - z[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn witness_focus_focus_holds() {
        // Coordinates (p1, q1, p2, q2), interleaved standard form.
        let v = vars(&["p1", "q1", "p2", "q2"]);
        let f1 = parse_hamiltonian("p1*q2 - p2*q1", &v, &[]).unwrap();
        let f2 = parse_hamiltonian("p1*q1 + p2*q2", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1, f2],
            complexified: false,
        };
        let eps = 1e-5;
        let curve = move |u: f64| -> (Vec<Complex64>, Vec<Complex64>) {
            // γ(t) = ε(cos t, 0, -sin t, 0) in (p1, q1, p2, q2)? The model
            // orbit is (p1, p2) = ε(cos, -sin): in interleaved order the
            // vector is (ε cos u, 0, -ε sin u, 0).
            let pos = vec![c(eps * u.cos()), c(0.0), c(-eps * u.sin()), c(0.0)];
            let tan = vec![c(-eps * u.sin()), c(0.0), c(-eps * u.cos()), c(0.0)];
            (pos, tan)
        };
        let rep = periodicity_witness(&sys, &curve, 10.0, 1.0).unwrap();
        assert!((rep.theta1_integral - TWO_PI).abs() < 1e-6, "θ1 {}", rep.theta1_integral);
        assert_eq!(rep.verdict, WitnessVerdict::Holds);
        assert!(rep.tangency_residual < 1e-8);
    }

    #[test]
    fn witness_cusp_fails() {
        // (C^2, re(dz∧dw)), F = (re f, im f), f = z^2 + w^3; fiber
        // L0 = {(v^3, -v^2)}, loop |v| = 1.
        let v = vars(&["zr", "zi", "wr", "wi"]);
        let aliases = vec![
            crate::poly::ComplexAlias { alias: "z".into(), xvar: "zr".into(), yvar: "zi".into() },
            crate::poly::ComplexAlias { alias: "w".into(), xvar: "wr".into(), yvar: "wi".into() },
        ];
        let f1 = parse_hamiltonian("re(z^2 + w^3)", &v, &aliases).unwrap();
        let f2 = parse_hamiltonian("im(z^2 + w^3)", &v, &aliases).unwrap();
        let mut form = DMatrix::zeros(4, 4);
        form[(0, 2)] = 1.0;
        form[(2, 0)] = -1.0;
        form[(1, 3)] = -1.0;
        form[(3, 1)] = 1.0;
        let sys = PolynomialSystem {
            space: PhaseSpace::constant(v, form),
            components: vec![f1, f2],
            complexified: false,
        };
        let curve = |u: f64| -> (Vec<Complex64>, Vec<Complex64>) {
            let vv = Complex64::new(u.cos(), u.sin());
            let z = vv * vv * vv;
            let w = -vv * vv;
            let dz = Complex64::new(0.0, 3.0) * vv * vv * vv;
            let dw = Complex64::new(0.0, -2.0) * vv * vv;
            (
                vec![c(z.re), c(z.im), c(w.re), c(w.im)],
                vec![c(dz.re), c(dz.im), c(dw.re), c(dw.im)],
            )
        };
        let rep = periodicity_witness(&sys, &curve, 10.0, 3.0).unwrap();
        assert!(rep.theta1_integral.abs() < 1e-8, "θ1 {}", rep.theta1_integral);
        assert_eq!(rep.verdict, WitnessVerdict::Fails);
    }

    #[test]
    fn parametric_loop_integral_circle_area() {
        // ∮ (x dy - y dx)/2 over the unit circle = π.
        let form = PrimitiveForm::ConstantForm(crate::symplectic::standard_form(2));
        let curve = |u: f64| -> (Vec<Complex64>, Vec<Complex64>) {
            (vec![c(u.cos()), c(u.sin())], vec![c(-u.sin()), c(u.cos())])
        };
        let val = parametric_loop_integral(&curve, &form, TWO_PI).unwrap();
        assert!((val.re - std::f64::consts::PI).abs() < 1e-10);
    }
}
