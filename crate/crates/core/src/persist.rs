//! Integrable perturbation experiments: composition-generated perturbed
//! systems (exactly integrable by construction), O(ε) closeness of the
//! recomputed action functions, and invariance of the discrete data.

use crate::action::{action_function, find_periodic_orbit, ActionError, PeriodicOrbit};
use crate::classify::{classify, ClassificationReport, ClassifyError, LinearFamily};
use crate::dynamics::{gradient_at, hessian_at, verify_commuting, DynError, PolynomialSystem};
use crate::poly::{CNum, PolynomialExpr};
use crate::symplectic::{FiniteSymplecticAction, GeneratorKind, QuadraticHamiltonian};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("symbolic flow truncation residual {0:.3e} exceeds eps^2/10")]
    TruncationResidual(f64),
    #[error("no fixed point found near the seed (last gradient norm {0:.3e})")]
    FixedPointNotFound(f64),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error("recipe invalid: {0}")]
    BadRecipe(String),
}

/// One exactly-symplectic polynomial factor of the perturbing map.
#[derive(Clone, Debug)]
pub enum SymplecticFactor {
    /// Time-1 flow of a Hamiltonian depending only on the x-side of each
    /// pair: (x, y) -> (x, y + ∇g(x)); exact polynomial shear.
    ShearX(PolynomialExpr),
    /// Time-1 flow of a y-side Hamiltonian: (x, y) -> (x - ∇g(y), y).
    ShearY(PolynomialExpr),
    /// Exact linear symplectic map.
    Linear(DMatrix<f64>),
}

/// Composition of exact symplectic factors, with polynomial forward images.
#[derive(Clone, Debug)]
pub struct PolySymplecticMap {
    pub vars: Vec<String>,
    pub factors: Vec<SymplecticFactor>,
}

impl PolySymplecticMap {
    pub fn identity(vars: Vec<String>) -> Self {
        PolySymplecticMap { vars, factors: vec![] }
    }

    fn factor_images(&self, f: &SymplecticFactor) -> Result<Vec<PolynomialExpr>, PersistError> {
        let d = self.vars.len();
        let mut images: Vec<PolynomialExpr> =
            (0..d).map(|i| PolynomialExpr::var(&self.vars, i)).collect();
        match f {
            SymplecticFactor::ShearX(g) => {
                for (j, img) in images.iter_mut().enumerate() {
                    if j % 2 == 1 {
                        // y_j picks up ∂g/∂x_j.
                        *img = img.add(&g.derivative(j - 1));
                    }
                }
                // The generator must not involve y-side variables.
                for e in g.terms.keys() {
                    if (0..d).any(|i| i % 2 == 1 && e[i] > 0) {
                        return Err(PersistError::BadRecipe(
                            "x-shear generator uses y variables".into(),
                        ));
                    }
                }
            }
            SymplecticFactor::ShearY(g) => {
                for (j, img) in images.iter_mut().enumerate() {
                    if j % 2 == 0 {
                        *img = img.sub(&g.derivative(j + 1));
                    }
                }
                for e in g.terms.keys() {
                    if (0..d).any(|i| i % 2 == 0 && e[i] > 0) {
                        return Err(PersistError::BadRecipe(
                            "y-shear generator uses x variables".into(),
                        ));
                    }
                }
            }
            SymplecticFactor::Linear(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(PersistError::BadRecipe("linear factor dimension".into()));
                }
                for (i, img) in images.iter_mut().enumerate() {
                    let mut acc = PolynomialExpr::zero(&self.vars);
                    for j in 0..d {
                        if m[(i, j)] != 0.0 {
                            acc = acc.add(
                                &PolynomialExpr::var(&self.vars, j)
                                    .scale(&CNum::from_f64(m[(i, j)])),
                            );
                        }
                    }
                    *img = acc;
                }
            }
        }
        Ok(images)
    }

    /// Coordinate images of the full composition (last factor outermost).
    pub fn forward_polys(&self) -> Result<Vec<PolynomialExpr>, PersistError> {
        let d = self.vars.len();
        let mut images: Vec<PolynomialExpr> =
            (0..d).map(|i| PolynomialExpr::var(&self.vars, i)).collect();
        for f in &self.factors {
            let fi = self.factor_images(f)?;
            images = fi.iter().map(|p| p.substitute(&images)).collect();
        }
        Ok(images)
    }

    /// Exact inverse: reversed factors with negated generators / inverted
    /// linear parts.
    pub fn inverse(&self) -> Result<PolySymplecticMap, PersistError> {
        let mut factors = Vec::with_capacity(self.factors.len());
        for f in self.factors.iter().rev() {
            factors.push(match f {
                SymplecticFactor::ShearX(g) => SymplecticFactor::ShearX(g.neg()),
                SymplecticFactor::ShearY(g) => SymplecticFactor::ShearY(g.neg()),
                SymplecticFactor::Linear(m) => SymplecticFactor::Linear(
                    m.clone()
                        .try_inverse()
                        .ok_or_else(|| PersistError::BadRecipe("singular linear factor".into()))?,
                ),
            });
        }
        Ok(PolySymplecticMap { vars: self.vars.clone(), factors })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, PersistError> {
        let polys = self.forward_polys()?;
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(polys.iter().map(|p| p.compile().eval(&xc).re).collect())
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>, PersistError> {
        let polys = self.forward_polys()?;
        let d = self.vars.len();
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut j = DMatrix::zeros(d, d);
        for (i, p) in polys.iter().enumerate() {
            for k in 0..d {
                j[(i, k)] = p.derivative(k).compile().eval(&xc).re;
            }
        }
        Ok(j)
    }
}

/// Recipe for an ε-small integrable perturbation F̃ = χ ∘ (F ∘ φ): φ an
/// exact symplectic composition, χ a near-identity polynomial map of the
/// momentum target (identity + ε · quadratic).
#[derive(Clone, Debug)]
pub struct PerturbationRecipe {
    pub epsilon: f64,
    pub seed: u64,
    pub phase_map: PolySymplecticMap,
    /// Quadratic parts of χ: per target component, a polynomial in the
    /// momentum variables w_1..w_n (χ_i = w_i + ε q_i(w)).
    pub recombiner: Vec<PolynomialExpr>,
    /// Box half-width for the closeness measurement.
    pub box_half_width: f64,
}

impl PerturbationRecipe {
    /// Identity recipe (ε = 0).
    pub fn identity(system: &PolynomialSystem) -> Self {
        let wvars: Vec<String> = (0..system.n()).map(|i| format!("w{}", i + 1)).collect();
        PerturbationRecipe {
            epsilon: 0.0,
            seed: 0,
            phase_map: PolySymplecticMap::identity(system.space.vars.clone()),
            recombiner: (0..system.n()).map(|_| PolynomialExpr::zero(&wvars)).collect(),
            box_half_width: 0.5,
        }
    }

    /// Deterministic random recipe: x/y shears of degree <= 4 scaled by ε
    /// and a random ε-quadratic recombiner.
    pub fn randomized(system: &PolynomialSystem, epsilon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars = &system.space.vars;
        let d = vars.len();
        let n = system.n();
        let mut gx = PolynomialExpr::zero(vars);
        let mut gy = PolynomialExpr::zero(vars);
        // Random low-degree monomials on each side.
        for _ in 0..4 {
            let mut ex = vec![0u16; d];
            let mut ey = vec![0u16; d];
            let mut degx = 0;
            let mut degy = 0;
            for _ in 0..3 {
                let jx = 2 * rng.gen_range(0..d / 2);
                let jy = 2 * rng.gen_range(0..d / 2) + 1;
                if degx < 4 {
                    ex[jx] += 1;
                    degx += 1;
                }
                if degy < 4 {
                    ey[jy] += 1;
                    degy += 1;
                }
            }
            let cx = CNum::from_f64(epsilon * rng.gen_range(-1.0..1.0));
            let cy = CNum::from_f64(epsilon * rng.gen_range(-1.0..1.0));
            let mut tx = PolynomialExpr::zero(vars);
            tx.terms.insert(ex, cx);
            let mut ty = PolynomialExpr::zero(vars);
            ty.terms.insert(ey, cy);
            gx = gx.add(&tx);
            gy = gy.add(&ty);
        }
        let phase_map = PolySymplecticMap {
            vars: vars.clone(),
            factors: vec![SymplecticFactor::ShearX(gx), SymplecticFactor::ShearY(gy)],
        };
        let wvars: Vec<String> = (0..n).map(|i| format!("w{}", i + 1)).collect();
        let mut recombiner = Vec::with_capacity(n);
        for _ in 0..n {
            let mut q = PolynomialExpr::zero(&wvars);
            for a in 0..n {
                for b in a..n {
                    let mut e = vec![0u16; n];
                    e[a] += 1;
                    e[b] += 1;
                    let c = CNum::from_f64(rng.gen_range(-1.0..1.0));
                    let mut t = PolynomialExpr::zero(&wvars);
                    t.terms.insert(e, c);
                    q = q.add(&t);
                }
            }
            recombiner.push(q);
        }
        PerturbationRecipe { epsilon, seed, phase_map, recombiner, box_half_width: 0.5 }
    }
}

/// Result of `perturb_system`: the new system and the measured C0 distance
/// on the sample box.
#[derive(Clone, Debug)]
pub struct PerturbedSystem {
    pub system: PolynomialSystem,
    pub c0_distance: f64,
    pub closeness_constant: f64,
}

/// Build F̃ = χ ∘ (F ∘ φ) by exact polynomial composition; verify the
/// brackets and measure the closeness bound on a 41^2-point sample grid.
pub fn perturb_system(
    system: &PolynomialSystem,
    recipe: &PerturbationRecipe,
) -> Result<PerturbedSystem, PersistError> {
    let phi = recipe.phase_map.forward_polys()?;
    let composed: Vec<PolynomialExpr> =
        system.components.iter().map(|f| f.substitute(&phi)).collect();
    let n = system.n();
    if recipe.recombiner.len() != n {
        return Err(PersistError::BadRecipe("recombiner arity".into()));
    }
    let eps = CNum::from_f64(recipe.epsilon);
    let components: Vec<PolynomialExpr> = (0..n)
        .map(|i| {
            let quad = recipe.recombiner[i].substitute(&composed).scale(&eps);
            composed[i].add(&quad)
        })
        .collect();
    let out = PolynomialSystem {
        space: system.space.clone(),
        components,
        complexified: system.complexified,
    };
    verify_commuting(&out, 1000)?;
    // Closeness on the sample box: a 41 x 41 grid over the first two
    // coordinates (others at midpoints), plus random interior samples.
    let d = system.space.dim();
    let hw = recipe.box_half_width;
    let mut max_diff: f64 = 0.0;
    let before: Vec<_> = system.components.iter().map(|f| f.compile()).collect();
    let after: Vec<_> = out.components.iter().map(|f| f.compile()).collect();
    let mut eval_diff = |x: &[f64]| {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for (f, g) in before.iter().zip(&after) {
            let dv = (f.eval(&xc) - g.eval(&xc)).norm();
            if dv > max_diff {
                max_diff = dv;
            }
        }
    };
    for i in 0..41 {
        for j in 0..41 {
            let mut x = vec![0.0; d];
            x[0] = -hw + 2.0 * hw * i as f64 / 40.0;
            x[1.min(d - 1)] = -hw + 2.0 * hw * j as f64 / 40.0;
            eval_diff(&x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed ^ 0xb0c5);
    for _ in 0..500 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-hw..hw)).collect();
        eval_diff(&x);
    }
    let k = if recipe.epsilon > 0.0 { max_diff / recipe.epsilon } else { 0.0 };
    Ok(PerturbedSystem { system: out, c0_distance: max_diff, closeness_constant: k })
}

/// One row of the persistence error table.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PersistenceRow {
    pub epsilon: f64,
    pub max_action_error: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PersistenceTable {
    pub rows: Vec<PersistenceRow>,
    pub loglog_slope: f64,
}

/// For each ε: perturb, re-find the periodic orbit seeded from the
/// unperturbed one, recompute the action on the shared grid, and record
/// max |Ĩ - I|; report the log-log slope.
/// One ε of the experiment: perturb, re-find the periodic orbit seeded from
/// the unperturbed one, recompute the action on the shared grid, and record
/// max |Ĩ - I| against the supplied unperturbed values.
pub fn persistence_row(
    system: &PolynomialSystem,
    base_values: &[Complex64],
    orbit_seed: &PeriodicOrbit,
    grid: &[Vec<f64>],
    eps: f64,
    seed: u64,
) -> Result<PersistenceRow, PersistError> {
    let recipe = PerturbationRecipe::randomized(system, eps, seed);
    let perturbed = perturb_system(system, &recipe)?;
    let orbit = find_periodic_orbit(
        &perturbed.system,
        &orbit_seed.base_point,
        &orbit_seed.coefficients,
        1e-10,
    )?;
    let sample = action_function(&perturbed.system, &orbit, grid, &Default::default())?;
    let err = base_values
        .iter()
        .zip(&sample.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(PersistenceRow { epsilon: eps, max_action_error: err })
}

pub fn persistence_experiment(
    system: &PolynomialSystem,
    orbit_seed: &PeriodicOrbit,
    grid: &[Vec<f64>],
    eps_list: &[f64],
    seed: u64,
) -> Result<PersistenceTable, PersistError> {
    let base = action_function(system, orbit_seed, grid, &Default::default())?;
    let rows = eps_list
        .iter()
        .map(|&eps| persistence_row(system, &base.values, orbit_seed, grid, eps, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let slope = loglog_slope(&rows);
    Ok(PersistenceTable { rows, loglog_slope: slope })
}

/// The unperturbed action values used as the comparison base.
pub fn persistence_base(
    system: &PolynomialSystem,
    orbit_seed: &PeriodicOrbit,
    grid: &[Vec<f64>],
) -> Result<Vec<Complex64>, PersistError> {
    Ok(action_function(system, orbit_seed, grid, &Default::default())?.values)
}

/// Γ-equivariant recipe: exact pairwise rotations (which commute with any
/// blockwise rotation action) plus a random ε-quadratic recombiner.
pub fn equivariant_recipe(system: &PolynomialSystem, epsilon: f64, seed: u64) -> PerturbationRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ xeq_u64());
    let d = system.space.dim();
    let n = system.n();
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d / 2 {
        let th = epsilon * rng.gen_range(-1.0..1.0);
        m[(2 * j, 2 * j)] = th.cos();
        m[(2 * j, 2 * j + 1)] = -th.sin();
        m[(2 * j + 1, 2 * j)] = th.sin();
        m[(2 * j + 1, 2 * j + 1)] = th.cos();
    }
    let phase_map = PolySymplecticMap {
        vars: system.space.vars.clone(),
        factors: vec![SymplecticFactor::Linear(m)],
    };
    let wvars: Vec<String> = (0..n).map(|i| format!("w{}", i + 1)).collect();
    let mut recombiner = Vec::with_capacity(n);
    for _ in 0..n {
        let mut q = PolynomialExpr::zero(&wvars);
        for a in 0..n {
            for b in a..n {
                let mut e = vec![0u16; n];
                e[a] += 1;
                e[b] += 1;
                let cnum = CNum::from_f64(rng.gen_range(-1.0..1.0));
                let mut t = PolynomialExpr::zero(&wvars);
                t.terms.insert(e, cnum);
                q = q.add(&t);
            }
        }
        recombiner.push(q);
    }
    PerturbationRecipe { epsilon, seed, phase_map, recombiner, box_half_width: 0.5 }
}

fn xeq_u64() -> u64 {
    0x9e3779b97f4a7c15
}

/// Transverse quadratic family rendered as a polynomial system (for the
/// perturbation experiments on classification rows of positive rank).
pub fn family_as_polynomial_system(family: &LinearFamily) -> PolynomialSystem {
    let d = family.space.dim;
    let vars: Vec<String> = (0..d / 2)
        .flat_map(|j| [format!("x{}", j + 1), format!("y{}", j + 1)])
        .collect();
    let components = family
        .hamiltonians
        .iter()
        .map(|h| {
            let mut p = PolynomialExpr::zero(&vars);
            for i in 0..d {
                for j in 0..d {
                    if h.q[(i, j)] != 0.0 {
                        let mut e = vec![0u16; d];
                        e[i] += 1;
                        e[j] += 1;
                        let mut t = PolynomialExpr::zero(&vars);
                        t.terms.insert(e, CNum::from_f64(h.q[(i, j)] / 2.0));
                        p.add_assign(&t);
                    }
                }
            }
            p
        })
        .collect();
    PolynomialSystem {
        space: crate::dynamics::PhaseSpace::constant(vars, family.space.form.clone()),
        components,
        complexified: false,
    }
}

fn loglog_slope(rows: &[PersistenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0 && r.max_action_error > 1e-14)
        .map(|r| (r.epsilon.ln(), r.max_action_error.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Transverse linear data extracted from a polynomial system at a fixed
/// point: quadratic parts of the generators and conjugated finite action.
pub fn linear_data_at_fixed_point(
    system: &PolynomialSystem,
    kinds: &[GeneratorKind],
    action: &FiniteSymplecticAction,
    point: &[f64],
    n: usize,
    rank: usize,
) -> Result<LinearFamily, PersistError> {
    let space = system
        .space
        .to_symplectic_space()
        .ok_or_else(|| PersistError::BadRecipe("constant-form space required".into()))?;
    let hams = system
        .components
        .iter()
        .zip(kinds)
        .map(|(f, &kind)| {
            let h = hessian_at(f, point);
            QuadraticHamiltonian::new(space.clone(), h, kind)
                .map_err(|e| PersistError::Classify(ClassifyError::Symplectic(e)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LinearFamily { space, hamiltonians: hams, action: action.clone(), n, rank })
}

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub unperturbed: ClassificationReport,
    pub perturbed: ClassificationReport,
    pub fixed_point_displacement: f64,
    pub invariant: bool,
}

/// Newton search for the perturbed fixed point (critical point of the
/// averaged combination Σ c_l f̃_l), then re-classification there; the
/// discrete data must come back identical.
pub fn discrete_data_invariance(
    system: &PolynomialSystem,
    kinds: &[GeneratorKind],
    action: &FiniteSymplecticAction,
    n: usize,
    rank: usize,
    recipe: &PerturbationRecipe,
) -> Result<InvarianceReport, PersistError> {
    let d = system.space.dim();
    let unperturbed_family =
        linear_data_at_fixed_point(system, kinds, action, &vec![0.0; d], n, rank)?;
    let unperturbed = classify(&unperturbed_family)?;

    let perturbed = perturb_system(system, recipe)?;
    // Combination with a definite Hessian at the seed: c_l = l + 1.
    let combo = {
        let mut f = PolynomialExpr::zero(&system.space.vars);
        for (l, comp) in perturbed.system.components.iter().enumerate() {
            f = f.add(&comp.scale(&CNum::from_int(l as i64 + 1)));
        }
        f
    };
    let mut x = vec![0.0; d];
    let mut last_grad = f64::INFINITY;
    let mut found = false;
    for _ in 0..80 {
        let g = gradient_at(&combo, &x);
        last_grad = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if last_grad < 1e-12 {
            found = true;
            break;
        }
        let h = hessian_at(&combo, &x);
        let step = h
            .svd(true, true)
            .solve(&DVector::from_vec(g), 1e-13)
            .map_err(|_| PersistError::FixedPointNotFound(last_grad))?;
        for i in 0..d {
            x[i] -= step[i];
        }
    }
    if !found {
        return Err(PersistError::FixedPointNotFound(last_grad));
    }
    let displacement = x.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Conjugated finite generators at the perturbed fixed point.
    let phi_jac = recipe.phase_map.jacobian_at(&x)?;
    let phi_x = recipe.phase_map.apply(&x)?;
    let inv = recipe.phase_map.inverse()?;
    let mut new_gens = Vec::with_capacity(action.len());
    for m in &action.generators {
        let rho_phi_x: Vec<f64> = {
            let mx = DVector::from_vec(phi_x.clone());
            let v = m * mx;
            v.iter().cloned().collect()
        };
        let inv_jac = inv.jacobian_at(&rho_phi_x)?;
        new_gens.push(inv_jac * m * &phi_jac);
    }
    let new_action = FiniteSymplecticAction {
        generators: new_gens,
        orders: action.orders.clone(),
    };
    let family =
        linear_data_at_fixed_point(&perturbed.system, kinds, &new_action, &x, n, rank)?;
    let report = classify(&family)?;
    let invariant = crate::resonance::models_equivalent(&unperturbed, &report)
        .map_err(|e| PersistError::BadRecipe(format!("{e}")))?;
    Ok(InvarianceReport {
        unperturbed,
        perturbed: report,
        fixed_point_displacement: displacement,
        invariant,
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

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
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

    #[test]
    fn identity_recipe_is_identity() {
        let sys = elliptic_system();
        let out = perturb_system(&sys, &PerturbationRecipe::identity(&sys)).unwrap();
        assert_eq!(out.system.components[0], sys.components[0]);
        assert_eq!(out.c0_distance, 0.0);
    }

    #[test]
    fn cubic_shear_close_and_integrable() {
        // g = q^3 shear at ε = 1e-3: integrable, within 2e-3 on the box.
        let sys = elliptic_system();
        let v = sys.space.vars.clone();
        let g = parse_hamiltonian("q^3", &v, &[]).unwrap()
            .scale(&CNum::from_f64(1e-3));
        let recipe = PerturbationRecipe {
            epsilon: 1e-3,
            seed: 1,
            phase_map: PolySymplecticMap { vars: v, factors: vec![SymplecticFactor::ShearY(g)] },
            recombiner: vec![PolynomialExpr::zero(&["w1".to_string()])],
            box_half_width: 0.5,
        };
        let out = perturb_system(&sys, &recipe).unwrap();
        assert!(out.c0_distance <= 2e-3, "distance {}", out.c0_distance);
        assert!(out.c0_distance > 0.0);
    }

    #[test]
    fn recombiner_only_keeps_brackets() {
        // Focus-focus pair with a target-only recombiner stays integrable
        // (χ∘F commutes exactly).
        let v = vars(&["p1", "q1", "p2", "q2"]);
        let f1 = parse_hamiltonian("p1*q2 - p2*q1", &v, &[]).unwrap();
        let f2 = parse_hamiltonian("p1*q1 + p2*q2", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1, f2],
            complexified: false,
        };
        let wvars = vars(&["w1", "w2"]);
        let recipe = PerturbationRecipe {
            epsilon: 1e-2,
            seed: 0,
            phase_map: PolySymplecticMap::identity(sys.space.vars.clone()),
            recombiner: vec![
                parse_hamiltonian("w1^2 + w2^2", &wvars, &[]).unwrap(),
                parse_hamiltonian("w1*w2", &wvars, &[]).unwrap(),
            ],
            box_half_width: 0.5,
        };
        let out = perturb_system(&sys, &recipe).unwrap();
        let rep = verify_commuting(&out.system, 0).unwrap();
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn zero_epsilon_experiment_row() {
        let sys = elliptic_system();
        let orbit = find_periodic_orbit(&sys, &[c(0.55), c(0.0)], &[c(1.0)], 1e-10).unwrap();
        let grid: Vec<Vec<f64>> = (1..6).map(|k| vec![0.03 * k as f64]).collect();
        let table = persistence_experiment(&sys, &orbit, &grid, &[0.0], 7).unwrap();
        assert!(table.rows[0].max_action_error < 1e-8);
    }

    #[test]
    fn slope_near_one() {
        let sys = elliptic_system();
        let orbit = find_periodic_orbit(&sys, &[c(0.55), c(0.0)], &[c(1.0)], 1e-10).unwrap();
        let grid: Vec<Vec<f64>> = (1..8).map(|k| vec![0.02 * k as f64]).collect();
        let eps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let table = persistence_experiment(&sys, &orbit, &grid, &eps, 11).unwrap();
        assert!(
            table.loglog_slope > 0.8 && table.loglog_slope < 1.2,
            "slope {} rows {:?}",
            table.loglog_slope,
            table.rows
        );
        // err(ε) monotone along the halving chain, up to the quadrature floor.
        for w in table.rows.windows(2) {
            assert!(w[1].max_action_error <= w[0].max_action_error + 1e-8);
        }
    }

    #[test]
    fn focus_invariance_under_recipe() {
        let v = vars(&["p1", "q1", "p2", "q2"]);
        let f1 = parse_hamiltonian("p1*q2 - p2*q1", &v, &[]).unwrap();
        let f2 = parse_hamiltonian("p1*q1 + p2*q2", &v, &[]).unwrap();
        let sys = PolynomialSystem {
            space: PhaseSpace::standard(v),
            components: vec![f1, f2],
            complexified: false,
        };
        let kinds = [GeneratorKind::Elliptic, GeneratorKind::Hyperbolic];
        let action = FiniteSymplecticAction::trivial();
        for seed in 0..10 {
            let recipe = PerturbationRecipe::randomized(&sys, 1e-3, seed);
            let rep =
                discrete_data_invariance(&sys, &kinds, &action, 2, 0, &recipe).unwrap();
            assert!(rep.invariant, "seed {seed}");
            assert!(
                rep.fixed_point_displacement < 0.05,
                "displacement {}",
                rep.fixed_point_displacement
            );
            assert_eq!(rep.unperturbed.williamson, rep.perturbed.williamson);
        }
    }

}
