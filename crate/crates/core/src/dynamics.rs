//! Polynomial momentum maps and Hamiltonian flows: exact Poisson brackets,
//! integrability checks, and adaptive embedded Runge-Kutta integration with
//! complexified phase space support.

use crate::poly::{CNum, CompiledPoly, PolynomialExpr};
use crate::symplectic::SymplecticSpace;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("symbolic bracket unsupported for non-constant symplectic form")]
    UnsupportedForm,
    #[error("system is not integrable: max bracket residual {0:.3e}")]
    NotIntegrable(f64),
    #[error("flow step failure at t = {t:.6}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("tolerance not met: {0}")]
    ToleranceNotMet(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Symplectic structure carried by a polynomial system: either a constant
/// form matrix, or the rank-1 model family dα(λ)∧dφ + π*ω with ω encoded by
/// a divergence-free field (P, Q, R).
#[derive(Clone, Debug)]
pub enum OmegaField {
    Constant(DMatrix<f64>),
    /// Coordinates fixed as (l, phi, x, y); alpha in l; P, Q, R in (x, y, l).
    Parabolic {
        alpha: PolynomialExpr,
        p: PolynomialExpr,
        q: PolynomialExpr,
        r: PolynomialExpr,
    },
}

/// Phase space: ordered state variables plus the symplectic structure.
#[derive(Clone, Debug)]
pub struct PhaseSpace {
    pub vars: Vec<String>,
    pub omega: OmegaField,
    /// Indices of 2π-periodic angle coordinates (difference taken mod 2π).
    pub angle_coords: Vec<usize>,
}

impl PhaseSpace {
    pub fn constant(vars: Vec<String>, form: DMatrix<f64>) -> Self {
        PhaseSpace { vars, omega: OmegaField::Constant(form), angle_coords: vec![] }
    }

    pub fn standard(vars: Vec<String>) -> Self {
        let d = vars.len();
        PhaseSpace {
            vars,
            omega: OmegaField::Constant(crate::symplectic::standard_form(d)),
            angle_coords: vec![],
        }
    }

    /// Coordinate difference a - b with angle coordinates wrapped to (-π, π].
    pub fn coord_diff(&self, i: usize, a: Complex64, b: Complex64) -> Complex64 {
        let mut d = a - b;
        if self.angle_coords.contains(&i) {
            let two_pi = 2.0 * std::f64::consts::PI;
            d.re -= two_pi * (d.re / two_pi).round();
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.omega, OmegaField::Constant(_))
    }

    /// Form matrix at a (real) phase point.
    pub fn omega_at(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.omega {
            OmegaField::Constant(m) => m.clone(),
            OmegaField::Parabolic { alpha, p, q, r } => {
                let ap = alpha.derivative(0).compile().eval_real(x);
                let pv = p.compile().eval_real(x);
                let qv = q.compile().eval_real(x);
                let rv = r.compile().eval_real(x);
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 1)] = ap;
                m[(1, 0)] = -ap;
                m[(2, 3)] = rv;
                m[(3, 2)] = -rv;
                m[(0, 2)] = qv;
                m[(2, 0)] = -qv;
                m[(0, 3)] = -pv;
                m[(3, 0)] = pv;
                m
            }
        }
    }

    pub fn to_symplectic_space(&self) -> Option<SymplecticSpace> {
        match &self.omega {
            OmegaField::Constant(m) => SymplecticSpace::from_form(m.clone()).ok(),
            _ => None,
        }
    }
}

/// Momentum map: n Poisson-commuting polynomial components on a 2n phase
/// space.
#[derive(Clone, Debug)]
pub struct PolynomialSystem {
    pub space: PhaseSpace,
    pub components: Vec<PolynomialExpr>,
    pub complexified: bool,
}

impl PolynomialSystem {
    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn momentum_at(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|f| f.compile().eval(x)).collect()
    }
}

/// Exact rational inverse of a (small) matrix given by f64 entries, which
/// are dyadic rationals and therefore invert exactly.
fn exact_inverse(m: &DMatrix<f64>) -> Option<Vec<Vec<BigRational>>> {
    let n = m.nrows();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..n).map(|j| BigRational::from_float(m[(i, j)]).unwrap()).collect())
        .collect();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::from_integer(BigInt::from(1))
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&i| !a[i][col].is_zero())?;
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &d;
            inv[col][j] /= &d;
        }
        for i in 0..n {
            if i != col && !a[i][col].is_zero() {
                let f = a[i][col].clone();
                for j in 0..n {
                    let t = &a[col][j] * &f;
                    a[i][j] -= t;
                    let t = &inv[col][j] * &f;
                    inv[i][j] -= t;
                }
            }
        }
    }
    Some(inv)
}

/// Exact symbolic Poisson bracket {f, g} = -∇f' Ω⁻¹ ∇g for a constant form.
pub fn poisson_bracket(
    f: &PolynomialExpr,
    g: &PolynomialExpr,
    space: &PhaseSpace,
) -> Result<PolynomialExpr, DynError> {
    let OmegaField::Constant(form) = &space.omega else {
        return Err(DynError::UnsupportedForm);
    };
    let d = space.dim();
    if f.nvars() != d || g.nvars() != d {
        return Err(DynError::Dimension("bracket arity".into()));
    }
    let inv = exact_inverse(form).ok_or(DynError::UnsupportedForm)?;
    let df: Vec<PolynomialExpr> = (0..d).map(|i| f.derivative(i)).collect();
    let dg: Vec<PolynomialExpr> = (0..d).map(|i| g.derivative(i)).collect();
    let mut acc = PolynomialExpr::zero(&f.vars);
    for a in 0..d {
        for b in 0..d {
            if inv[a][b].is_zero() {
                continue;
            }
            let c = CNum { re: -inv[a][b].clone(), im: BigRational::zero() };
            acc.add_assign(&df[a].mul(&dg[b]).scale(&c));
        }
    }
    Ok(acc)
}

/// Integrability report from `verify_commuting`.
#[derive(Clone, Debug)]
pub struct CommutingReport {
    pub max_residual: f64,
    pub symbolic: bool,
}

/// All pairwise brackets: symbolically when the total degree permits and the
/// form is constant, otherwise on `samples` deterministic random points.
pub fn verify_commuting(
    system: &PolynomialSystem,
    samples: usize,
) -> Result<CommutingReport, DynError> {
    let n = system.n();
    let deg = system.components.iter().map(|f| f.total_degree()).max().unwrap_or(0);
    // Exact-arithmetic bracket work grows with the squared term count; fall
    // back to sampling when a symbolic pass would dominate the runtime.
    let max_terms = system.components.iter().map(|f| f.terms.len()).max().unwrap_or(0);
    let d2 = system.space.dim() * system.space.dim();
    let symbolic_work = max_terms * max_terms * d2;
    if system.space.is_constant() && deg <= 12 && symbolic_work <= 200_000 {
        let mut max_res: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let b = poisson_bracket(
                    &system.components[i],
                    &system.components[j],
                    &system.space,
                )?;
                for c in b.terms.values() {
                    let (re, im) = c.to_f64_pair();
                    max_res = max_res.max(re.abs()).max(im.abs());
                }
            }
        }
        if max_res > 1e-8 {
            return Err(DynError::NotIntegrable(max_res));
        }
        return Ok(CommutingReport { max_residual: max_res, symbolic: true });
    }
    // Sampled check on the unit box.
    let d = system.space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let grads: Vec<Vec<CompiledPoly>> = system
        .components
        .iter()
        .map(|f| (0..d).map(|i| f.derivative(i).compile()).collect())
        .collect();
    let mut max_res: f64 = 0.0;
    for _ in 0..samples.max(1000) {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let omega = system.space.omega_at(&x);
        let Some(oinv) = omega.clone().try_inverse() else { continue };
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let gs: Vec<Vec<f64>> = grads
            .iter()
            .map(|g| g.iter().map(|p| p.eval(&xc).re).collect())
            .collect();
        for i in 0..n {
            for j in i + 1..n {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s -= gs[i][a] * oinv[(a, b)] * gs[j][b];
                    }
                }
                max_res = max_res.max(s.abs());
            }
        }
    }
    if max_res > 1e-8 {
        return Err(DynError::NotIntegrable(max_res));
    }
    Ok(CommutingReport { max_residual: max_res, symbolic: false })
}

/// Hamiltonian flow of H_eff = Σ coef_i f_i; complex coefficients drive the
/// complexified flow (phase space doubled to C^{2n}).
pub struct HamiltonianFlow<'a> {
    pub system: &'a PolynomialSystem,
    pub coef: Vec<Complex64>,
    grads: Vec<Vec<CompiledPoly>>,
    omega_inv_const: Option<DMatrix<f64>>,
    energy: Vec<CompiledPoly>,
}

impl<'a> HamiltonianFlow<'a> {
    pub fn new(system: &'a PolynomialSystem, coef: Vec<Complex64>) -> Result<Self, DynError> {
        if coef.len() != system.n() {
            return Err(DynError::Dimension("coefficient vector arity".into()));
        }
        let d = system.space.dim();
        let grads = system
            .components
            .iter()
            .map(|f| (0..d).map(|i| f.derivative(i).compile()).collect())
            .collect();
        let omega_inv_const = match &system.space.omega {
            OmegaField::Constant(m) => {
                Some(m.clone().try_inverse().ok_or(DynError::UnsupportedForm)?)
            }
            _ => None,
        };
        let energy = system.components.iter().map(|f| f.compile()).collect();
        Ok(HamiltonianFlow { system, coef, grads, omega_inv_const, energy })
    }

    pub fn dim(&self) -> usize {
        self.system.space.dim()
    }

    /// H_eff at a phase point.
    pub fn energy_at(&self, x: &[Complex64]) -> Complex64 {
        self.energy
            .iter()
            .zip(&self.coef)
            .map(|(f, c)| c * f.eval(x))
            .sum()
    }

    /// X(x) = Ω(x)⁻¹ ∇H_eff(x).
    pub fn field(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<(), DynError> {
        let d = self.dim();
        let mut grad = vec![Complex64::new(0.0, 0.0); d];
        for (gs, c) in self.grads.iter().zip(&self.coef) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (i, g) in gs.iter().enumerate() {
                grad[i] += c * g.eval(x);
            }
        }
        match &self.omega_inv_const {
            Some(oinv) => {
                for i in 0..d {
                    let mut s = Complex64::new(0.0, 0.0);
                    for j in 0..d {
                        let w = oinv[(i, j)];
                        if w != 0.0 {
                            s += w * grad[j];
                        }
                    }
                    out[i] = s;
                }
            }
            None => {
                // Variable form: real phase space only.
                let xr: Vec<f64> = x.iter().map(|z| z.re).collect();
                if x.iter().any(|z| z.im.abs() > 1e-9) {
                    return Err(DynError::UnsupportedForm);
                }
                let omega = self.system.space.omega_at(&xr);
                let oinv = omega
                    .try_inverse()
                    .ok_or_else(|| DynError::StepFailure { t: 0.0, reason: "singular form".into() })?;
                for i in 0..d {
                    let mut s = Complex64::new(0.0, 0.0);
                    for j in 0..d {
                        s += oinv[(i, j)] * grad[j];
                    }
                    out[i] = s;
                }
            }
        }
        Ok(())
    }
}

/// Integrated trajectory with nodal derivatives and an optional accumulated
/// line integral of a 1-form along the path.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub derivs: Vec<Vec<Complex64>>,
    pub one_form_integral: Complex64,
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn start(&self) -> &Vec<Complex64> {
        self.states.first().expect("nonempty trajectory")
    }

    pub fn end(&self) -> &Vec<Complex64> {
        self.states.last().expect("nonempty trajectory")
    }

    /// Cubic Hermite interpolation of the state and its derivative at time
    /// `t` (clamped to the stored range); requires nodal derivatives.
    pub fn interpolate(&self, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        assert!(!self.derivs.is_empty(), "trajectory stored without derivatives");
        let times = &self.times;
        let last = times.len() - 1;
        let t = t.clamp(times[0].min(times[last]), times[0].max(times[last]));
        // Locate the bracketing interval (times are monotone).
        let mut lo = 0usize;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if (times[mid] <= t) == (times[last] >= times[0]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = times[hi] - times[lo];
        if h.abs() < 1e-300 {
            return (self.states[lo].clone(), self.derivs[lo].clone());
        }
        let s = (t - times[lo]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let (h00, h10, h01, h11) =
            (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2);
        let (d00, d10, d01, d11) = (
            (6.0 * s2 - 6.0 * s) / h,
            (3.0 * s2 - 4.0 * s + 1.0),
            (-6.0 * s2 + 6.0 * s) / h,
            (3.0 * s2 - 2.0 * s),
        );
        let d = self.states[lo].len();
        let mut pos = vec![Complex64::new(0.0, 0.0); d];
        let mut tan = vec![Complex64::new(0.0, 0.0); d];
        for i in 0..d {
            let (p0, p1) = (self.states[lo][i], self.states[hi][i]);
            let (m0, m1) = (self.derivs[lo][i], self.derivs[hi][i]);
            pos[i] = h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
            tan[i] = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1;
        }
        (pos, tan)
    }

    /// Max-norm distance between endpoints.
    pub fn closure_residual(&self) -> f64 {
        self.start()
            .iter()
            .zip(self.end())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluator of a 1-form: components α_i(x), contracted with dx/dt.
pub type OneForm<'f> = &'f dyn Fn(&[Complex64]) -> Vec<Complex64>;

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) integration of the Hamiltonian flow from
/// `x0` to time `t_final` (sign sets direction) with per-step error <= tol.
pub fn integrate_flow(
    flow: &HamiltonianFlow,
    x0: &[Complex64],
    t_final: f64,
    tol: f64,
    one_form: Option<OneForm>,
) -> Result<Trajectory, DynError> {
    if tol <= 0.0 {
        return Err(DynError::ToleranceNotMet("tol must be positive".into()));
    }
    let d = flow.dim();
    if x0.len() != d {
        return Err(DynError::Dimension("initial state arity".into()));
    }
    let dir = if t_final >= 0.0 { 1.0 } else { -1.0 };
    let t_end = t_final.abs();
    let mut t = 0.0_f64;
    let mut x = x0.to_vec();
    let mut h = (t_end / 100.0).min(0.1).max(1e-8);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        derivs: Vec::new(),
        one_form_integral: Complex64::new(0.0, 0.0),
        energy_drift: 0.0,
    };
    let mut k0 = vec![Complex64::new(0.0, 0.0); d];
    flow.field(&x, &mut k0)?;
    traj.derivs.push(k0.clone());
    let e0 = flow.energy_at(&x);
    let mut acc_form = Complex64::new(0.0, 0.0);
    let mut stages: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); d]; 7];
    // Extra quadrature channel for the 1-form uses the same RK weights.
    let mut form_stage = [Complex64::new(0.0, 0.0); 7];
    let max_steps = 2_000_000usize;
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > max_steps {
            return Err(DynError::StepFailure { t, reason: "step budget exhausted".into() });
        }
        if h < 1e-14 {
            return Err(DynError::StepFailure { t, reason: "step size underflow".into() });
        }
        let hh = h.min(t_end - t);
        stages[0].copy_from_slice(&k0);
        for s in 1..7 {
            let mut xs = x.clone();
            for (j, stage) in stages.iter().enumerate().take(s) {
                let a = DP_A[s][j];
                if a != 0.0 {
                    for i in 0..d {
                        xs[i] += dir * hh * a * stage[i];
                    }
                }
            }
            let (head, tail) = stages.split_at_mut(s);
            let _ = head;
            flow.field(&xs, &mut tail[0])?;
            if let Some(form) = one_form {
                let alpha = form(&xs);
                form_stage[s] = alpha.iter().zip(&tail[0]).map(|(a, v)| a * v).sum();
            }
        }
        if let Some(form) = one_form {
            let alpha = form(&x);
            form_stage[0] = alpha.iter().zip(&stages[0]).map(|(a, v)| a * v).sum();
        }
        let mut x5 = x.clone();
        let mut err: f64 = 0.0;
        for i in 0..d {
            let mut v5 = Complex64::new(0.0, 0.0);
            let mut v4 = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                v5 += DP_B5[s] * stages[s][i];
                v4 += DP_B4[s] * stages[s][i];
            }
            x5[i] += dir * hh * v5;
            err = err.max((hh * (v5 - v4)).norm());
        }
        if !err.is_finite() || x5.iter().any(|z| !z.re.is_finite() || z.norm() > 1e9) {
            return Err(DynError::StepFailure { t, reason: "state blow-up".into() });
        }
        // Error-per-unit-step control: local error <= tol * hh / T, so the
        // accumulated error (and the energy drift) stays within tol.
        let step_tol = tol * (hh / t_end.max(1e-12)).min(1.0);
        if err <= step_tol {
            if let Some(_f) = one_form {
                let mut q = Complex64::new(0.0, 0.0);
                for s in 0..7 {
                    q += DP_B5[s] * form_stage[s];
                }
                acc_form += dir * hh * q;
            }
            t += hh;
            x = x5;
            flow.field(&x, &mut k0)?;
            traj.times.push(dir * t);
            traj.states.push(x.clone());
            traj.derivs.push(k0.clone());
        }
        let fac = if err == 0.0 { 5.0 } else { 0.9 * (step_tol / err).powf(0.25) };
        h = (h * fac.clamp(0.2, 5.0)).max(1e-15);
    }
    traj.one_form_integral = acc_form;
    let e1 = flow.energy_at(&x);
    traj.energy_drift = (e1 - e0).norm();
    if traj.energy_drift > 100.0 * tol.max(1e-13) {
        return Err(DynError::ToleranceNotMet(format!(
            "energy drift {:.3e} exceeds 100*tol",
            traj.energy_drift
        )));
    }
    Ok(traj)
}

/// Convenience: flow endpoint only.
pub fn flow_endpoint(
    flow: &HamiltonianFlow,
    x0: &[Complex64],
    t_final: f64,
    tol: f64,
) -> Result<Vec<Complex64>, DynError> {
    Ok(integrate_flow(flow, x0, t_final, tol, None)?.end().clone())
}

/// Fixed-step implicit midpoint rule (symplectic, order 2): the long-time
/// option behind a flag. Real constant-form systems only.
pub fn integrate_flow_symplectic(
    flow: &HamiltonianFlow,
    x0: &[Complex64],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, DynError> {
    let d = flow.dim();
    let dir = if t_final >= 0.0 { 1.0 } else { -1.0 };
    let steps = (t_final.abs() / dt).ceil() as usize;
    let hh = t_final.abs() / steps as f64;
    let mut x = x0.to_vec();
    let e0 = flow.energy_at(&x);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        derivs: vec![],
        one_form_integral: Complex64::new(0.0, 0.0),
        energy_drift: 0.0,
    };
    let mut k = vec![Complex64::new(0.0, 0.0); d];
    for s in 0..steps {
        let mut mid = x.clone();
        for _ in 0..50 {
            flow.field(&mid, &mut k)?;
            let mut next_mid = x.clone();
            for i in 0..d {
                next_mid[i] += dir * 0.5 * hh * k[i];
            }
            let delta: f64 =
                mid.iter().zip(&next_mid).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            mid = next_mid;
            if delta < 1e-14 {
                break;
            }
        }
        flow.field(&mid, &mut k)?;
        for i in 0..d {
            x[i] += dir * hh * k[i];
        }
        traj.times.push(dir * hh * (s + 1) as f64);
        traj.states.push(x.clone());
    }
    traj.energy_drift = (flow.energy_at(&x) - e0).norm();
    Ok(traj)
}

/// Gradient of a polynomial at a real point.
pub fn gradient_at(f: &PolynomialExpr, x: &[f64]) -> Vec<f64> {
    let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    (0..f.nvars()).map(|i| f.derivative(i).compile().eval(&xc).re).collect()
}

/// Hessian of a polynomial at a real point.
pub fn hessian_at(f: &PolynomialExpr, x: &[f64]) -> DMatrix<f64> {
    let n = f.nvars();
    let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = f.derivative(i);
        for j in i..n {
            let v = di.derivative(j).compile().eval(&xc).re;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// The divergence ∂P/∂x + ∂Q/∂y + ∂R/∂l of the parabolic form data; must be
/// identically zero for the form to be closed.
pub fn parabolic_divergence(p: &PolynomialExpr, q: &PolynomialExpr, r: &PolynomialExpr) -> PolynomialExpr {
    // Variables are ordered (l, phi, x, y) in the phase space; P, Q, R use
    // the same list.
    let ix = 2;
    let iy = 3;
    let il = 0;
    p.derivative(ix).add(&q.derivative(iy)).add(&r.derivative(il))
}

pub fn sum_rational(vals: &[BigRational]) -> BigRational {
    vals.iter().fold(BigRational::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_hamiltonian;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Focus-focus pair on standard R^4, coordinates (p1, q1, p2, q2)
    /// with Ω = dp1∧dq1 + dp2∧dq2 (interleaved standard form).
    fn focus_focus() -> PolynomialSystem {
        let v = vars(&["p1", "q1", "p2", "q2"]);
        let f1 = parse_hamiltonian("p1*q2 - p2*q1", &v, &[]).unwrap();
        let f2 = parse_hamiltonian("p1*q1 + p2*q2", &v, &[]).unwrap();
        PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1, f2],
            complexified: false,
        }
    }

    #[test]
    fn bracket_focus_focus_vanishes() {
        let sys = focus_focus();
        let b = poisson_bracket(&sys.components[0], &sys.components[1], &sys.space).unwrap();
        assert!(b.is_zero());
        let rep = verify_commuting(&sys, 0).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!(rep.symbolic);
    }

    #[test]
    fn bracket_canonical_pair() {
        let v = vars(&["x", "y"]);
        let x = parse_hamiltonian("x", &v, &[]).unwrap();
        let y = parse_hamiltonian("y", &v, &[]).unwrap();
        let space = PhaseSpace::standard(v.clone());
        let b = poisson_bracket(&x, &y, &space).unwrap();
        let one = PolynomialExpr::constant(&v, CNum::one());
        assert_eq!(b, one);
        let h = parse_hamiltonian("x^2*y - y^3", &v, &[]).unwrap();
        assert!(poisson_bracket(&h, &h, &space).unwrap().is_zero());
    }

    #[test]
    fn hyperelliptic_pair_commutes() {
        // Real and imaginary parts of z^2 + (w-a1)(w-a2)(w-a3)w^2 on
        // (C^2, re(dz∧dw)); coordinates (zr, zi, wr, wi).
        let v = vars(&["zr", "zi", "wr", "wi"]);
        let aliases = vec![
            crate::poly::ComplexAlias { alias: "z".into(), xvar: "zr".into(), yvar: "zi".into() },
            crate::poly::ComplexAlias { alias: "w".into(), xvar: "wr".into(), yvar: "wi".into() },
        ];
        let full = "z^2 + (w+1)*(w+1/2)*(w+1/4)*w^2";
        let f1 = parse_hamiltonian(&format!("re({full})"), &v, &aliases).unwrap();
        let f2 = parse_hamiltonian(&format!("im({full})"), &v, &aliases).unwrap();
        // re(dz∧dw) = dzr∧dwr - dzi∧dwi in coordinates (zr, zi, wr, wi).
        let mut form = DMatrix::zeros(4, 4);
        form[(0, 2)] = 1.0;
        form[(2, 0)] = -1.0;
        form[(1, 3)] = -1.0;
        form[(3, 1)] = 1.0;
        let space = PhaseSpace::constant(v, form);
        let b = poisson_bracket(&f1, &f2, &space).unwrap();
        assert!(b.is_zero(), "bracket: {b}");
    }

    #[test]
    fn broken_pair_detected() {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("p^2/2", &v, &[]).unwrap();
        let f2 = parse_hamiltonian("p*q + q", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1, f2],
            complexified: false,
        };
        assert!(matches!(verify_commuting(&sys, 0), Err(DynError::NotIntegrable(_))));
    }

    #[test]
    fn elliptic_period() {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2 + q^2)/2", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: false,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let x0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let traj = integrate_flow(&flow, &x0, 2.0 * std::f64::consts::PI, 1e-12, None).unwrap();
        assert!(traj.closure_residual() < 1e-8, "residual {}", traj.closure_residual());
        // Reversibility.
        let back = integrate_flow(&flow, traj.end(), -2.0 * std::f64::consts::PI, 1e-12, None)
            .unwrap();
        let dist: f64 =
            back.end().iter().zip(&x0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dist < 1e-8);
    }

    #[test]
    fn zero_hamiltonian_constant_trajectory() {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("0", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: false,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let x0 = [Complex64::new(0.3, 0.0), Complex64::new(-0.2, 0.0)];
        let traj = integrate_flow(&flow, &x0, 1.0, 1e-10, None).unwrap();
        assert!(traj.closure_residual() < 1e-14);
    }

    #[test]
    fn hyperbolic_complexified_orbit_closes() {
        // i*f1 with f1 = pq from (eps, 0): orbit (eps e^{-it}, 0), 2π-periodic.
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("p*q", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: true,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(0.0, 1.0)]).unwrap();
        let x0 = [Complex64::new(0.1, 0.0), Complex64::new(0.0, 0.0)];
        let traj = integrate_flow(&flow, &x0, 2.0 * std::f64::consts::PI, 1e-12, None).unwrap();
        assert!(traj.closure_residual() < 1e-8);
        // Quarter period lands at -i*eps.
        let q =
            integrate_flow(&flow, &x0, std::f64::consts::FRAC_PI_2, 1e-12, None).unwrap();
        assert!((q.end()[0] - Complex64::new(0.0, -0.1)).norm() < 1e-9);
    }

    #[test]
    fn real_system_stays_real_in_complex_mode() {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2+q^2)/2 + q^4", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: true,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let x0 = [Complex64::new(0.7, 0.0), Complex64::new(0.1, 0.0)];
        let traj = integrate_flow(&flow, &x0, 5.0, 1e-11, None).unwrap();
        let max_im = traj
            .states
            .iter()
            .flat_map(|s| s.iter().map(|z| z.im.abs()))
            .fold(0.0, f64::max);
        assert!(max_im <= 1e-10);
    }

    #[test]
    fn energy_drift_bounded() {
        let v = vars(&["p", "q"]);
        let f1 = parse_hamiltonian("(p^2+q^2)/2 + q^3/3", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1],
            complexified: false,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let x0 = [Complex64::new(0.4, 0.0), Complex64::new(0.2, 0.0)];
        let traj = integrate_flow(&flow, &x0, 12.0, 1e-10, None).unwrap();
        assert!(traj.energy_drift <= 1e-8);
    }

    #[test]
    fn parabolic_form_field() {
        // alpha(l) = l, omega = dx∧dy: X_K for K = l is d/dphi.
        let v = vars(&["l", "phi", "x", "y"]);
        let alpha = parse_hamiltonian("l", &v, &[]).unwrap();
        let p = parse_hamiltonian("0", &v, &[]).unwrap();
        let q = parse_hamiltonian("0", &v, &[]).unwrap();
        let r = parse_hamiltonian("1", &v, &[]).unwrap();
        assert!(parabolic_divergence(&p, &q, &r).is_zero());
        let space = PhaseSpace {
            vars: v.clone(),
            omega: OmegaField::Parabolic { alpha, p, q, r },
            angle_coords: vec![1],
        };
        let k = parse_hamiltonian("l", &v, &[]).unwrap();
        let h = parse_hamiltonian("re(z^3) + l*abs2(z)", &v, &[
            crate::poly::ComplexAlias { alias: "z".into(), xvar: "x".into(), yvar: "y".into() },
        ])
        .unwrap();
        let sys = PolynomialSystem {
            space,
            components: vec![h, k],
            complexified: false,
        };
        let flow = HamiltonianFlow::new(&sys, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            .unwrap();
        let x0: Vec<Complex64> = [0.2, 0.0, 0.05, -0.03]
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); 4];
        flow.field(&x0, &mut out).unwrap();
        // X_K = d/dphi at alpha' = 1: components (0, 1, 0, 0).
        assert!((out[0].norm()) < 1e-14);
        assert!((out[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(out[2].norm() < 1e-14 && out[3].norm() < 1e-14);
    }
}

