//! Symplectic linear algebra on explicit form matrices: operator
//! constructors, skew-orthogonal complements and symplectic Gram-Schmidt.
//!
//! Sign convention, used everywhere in this crate: the Hamiltonian operator
//! of a quadratic form H(x) = x'Qx/2 is A = Ω⁻¹Q, i.e. i_{Ax}Ω = -dH. On the
//! plane with Ω = dp∧dq this gives the flow equations ṗ = -∂H/∂q, q̇ = ∂H/∂p.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SymplecticError {
    #[error("input matrix is not symmetric (defect {0:.3e})")]
    NonSymmetricInput(f64),
    #[error("form matrix is singular or not antisymmetric (defect {0:.3e})")]
    SingularForm(f64),
    #[error("subspace is degenerate for the symplectic form (pairing defect {0:.3e})")]
    DegenerateSubspace(f64),
}

/// Default tolerance for structural identities.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Phase space `R^{2n}` with an explicit nonsingular antisymmetric form.
///
/// The standard instance is block diagonal with n blocks [[0,1],[-1,0]] in
/// interleaved coordinate order (x1, y1, ..., xn, yn).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpace {
    pub dim: usize,
    pub form: DMatrix<f64>,
}

impl SymplecticSpace {
    /// Standard space of dimension `2n`, interleaved ordering.
    pub fn standard(n: usize) -> Self {
        SymplecticSpace { dim: 2 * n, form: standard_form(2 * n) }
    }

    pub fn from_form(form: DMatrix<f64>) -> Result<Self, SymplecticError> {
        let dim = form.nrows();
        if dim == 0 || dim % 2 != 0 || form.ncols() != dim {
            return Err(SymplecticError::SingularForm(f64::INFINITY));
        }
        let skew_defect = (&form + form.transpose()).amax();
        if skew_defect > DEFAULT_TOL {
            return Err(SymplecticError::SingularForm(skew_defect));
        }
        if form.clone().lu().determinant().abs() < 1e-12 {
            return Err(SymplecticError::SingularForm(0.0));
        }
        Ok(SymplecticSpace { dim, form })
    }

    pub fn n(&self) -> usize {
        self.dim / 2
    }

    /// Ω(u, v).
    pub fn pair(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.form * v)[(0, 0)]
    }

    pub fn form_inverse(&self) -> DMatrix<f64> {
        self.form
            .clone()
            .try_inverse()
            .expect("form validated nonsingular at construction")
    }

    pub fn is_standard(&self) -> bool {
        (&self.form - standard_form(self.dim)).amax() < 1e-14
    }
}

/// Interleaved standard form: blocks [[0,1],[-1,0]] along the diagonal.
pub fn standard_form(dim: usize) -> DMatrix<f64> {
    assert!(dim % 2 == 0);
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim / 2 {
        m[(2 * j, 2 * j + 1)] = 1.0;
        m[(2 * j + 1, 2 * j)] = -1.0;
    }
    m
}

/// Declared flavor of a quadratic generator: whether the 2π-periodic flow is
/// the real one (spectrum in iZ) or the imaginary-time one (spectrum in Z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Elliptic,
    Hyperbolic,
}

/// Quadratic Hamiltonian H(x) = x'Qx/2 on a symplectic space.
#[derive(Clone, Debug)]
pub struct QuadraticHamiltonian {
    pub space: SymplecticSpace,
    pub q: DMatrix<f64>,
    pub kind: GeneratorKind,
}

impl QuadraticHamiltonian {
    pub fn new(
        space: SymplecticSpace,
        q: DMatrix<f64>,
        kind: GeneratorKind,
    ) -> Result<Self, SymplecticError> {
        let defect = (&q - q.transpose()).amax();
        if defect > DEFAULT_TOL {
            return Err(SymplecticError::NonSymmetricInput(defect));
        }
        Ok(QuadraticHamiltonian { space, q, kind })
    }
}

/// Linearized Hamiltonian vector field A with A'Ω + ΩA = 0.
#[derive(Clone, Debug)]
pub struct HamiltonianOperator {
    pub a: DMatrix<f64>,
    pub kind: GeneratorKind,
}

/// A = Ω⁻¹ Q, the linearization of the Hamiltonian field of x'Qx/2.
pub fn hamiltonian_operator(
    q: &QuadraticHamiltonian,
) -> Result<HamiltonianOperator, SymplecticError> {
    let defect = (&q.q - q.q.transpose()).amax();
    if defect > DEFAULT_TOL {
        return Err(SymplecticError::NonSymmetricInput(defect));
    }
    let a = q.space.form_inverse() * &q.q;
    Ok(HamiltonianOperator { a, kind: q.kind })
}

/// Commuting finite-order symplectic generators with declared orders.
#[derive(Clone, Debug, Default)]
pub struct FiniteSymplecticAction {
    pub generators: Vec<DMatrix<f64>>,
    pub orders: Vec<u32>,
}

impl FiniteSymplecticAction {
    pub fn trivial() -> Self {
        FiniteSymplecticAction { generators: vec![], orders: vec![] }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

/// Columns spanning the skew-orthogonal complement {v : Ω(v, w) = 0 ∀ w ∈ W}.
///
/// With `split` set, additionally requires Ω|_W nonsingular so that
/// W ⊕ W^⊥ is a direct sum decomposition.
pub fn symplectic_complement(
    w: &DMatrix<f64>,
    space: &SymplecticSpace,
    split: bool,
    tol: f64,
) -> Result<DMatrix<f64>, SymplecticError> {
    let k = w.ncols();
    if split && k > 0 {
        let restricted = w.transpose() * &space.form * w;
        let sv = restricted.svd(false, false);
        let min_sv = sv.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_sv < tol {
            return Err(SymplecticError::DegenerateSubspace(min_sv));
        }
    }
    // Kernel of the k x 2n pairing matrix W'Ω.
    let pairing = w.transpose() * &space.form;
    Ok(kernel_basis(&pairing, tol))
}

/// Orthonormal basis of the kernel of `m` as matrix columns: the orthogonal
/// complement of the right-singular vectors with nonnegligible singular
/// value (thin SVD plus completion, so wide matrices are handled too).
pub fn kernel_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return DMatrix::identity(cols, cols);
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("svd with v requested");
    let scale = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let mut basis: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] >= tol * scale)
        .map(|i| vt.row(i).transpose())
        .collect();
    let rank = basis.len();
    let mut kernel: Vec<DVector<f64>> = Vec::with_capacity(cols - rank);
    for j in 0..cols {
        if basis.len() == cols {
            break;
        }
        let mut v = DVector::zeros(cols);
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        if v.norm() > 1e-6 {
            v.normalize_mut();
            basis.push(v.clone());
            kernel.push(v);
        }
    }
    let mut out = DMatrix::zeros(cols, kernel.len());
    for (j, v) in kernel.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Symplectic Gram-Schmidt: from vectors spanning a symplectic subspace,
/// build (e_1..e_m, f_1..f_m) with Ω(e_i, e_j) = Ω(f_i, f_j) = 0 and
/// Ω(e_i, f_j) = δ_ij. Returned as a 2n x 2m matrix [e_1..e_m f_1..f_m].
pub fn symplectic_gram_schmidt(
    vectors: &DMatrix<f64>,
    space: &SymplecticSpace,
    tol: f64,
) -> Result<DMatrix<f64>, SymplecticError> {
    let mut pool: Vec<DVector<f64>> = (0..vectors.ncols()).map(|j| vectors.column(j).into()).collect();
    let mut es: Vec<DVector<f64>> = Vec::new();
    let mut fs: Vec<DVector<f64>> = Vec::new();
    loop {
        // Drop vectors that became (numerically) zero after projections.
        pool.retain(|v| v.norm() > tol);
        if pool.is_empty() {
            break;
        }
        // Pick the pair with the strongest pairing for stability.
        let mut best = (0usize, 0usize, 0.0_f64);
        for i in 0..pool.len() {
            for j in 0..pool.len() {
                let p = space.pair(&pool[i], &pool[j]).abs()
                    / (pool[i].norm() * pool[j].norm());
                if p > best.2 {
                    best = (i, j, p);
                }
            }
        }
        if best.2 < tol {
            return Err(SymplecticError::DegenerateSubspace(best.2));
        }
        let e = pool[best.0].normalize();
        let p = space.pair(&e, &pool[best.1]);
        let f = &pool[best.1] / p;
        for v in pool.iter_mut() {
            let a = space.pair(v, &f);
            let b = space.pair(v, &e);
            *v -= &e * a;
            *v += &f * b;
        }
        es.push(e);
        fs.push(f);
    }
    let m = es.len();
    let mut out = DMatrix::zeros(space.dim, 2 * m);
    for (j, e) in es.iter().enumerate() {
        out.set_column(j, e);
    }
    for (j, f) in fs.iter().enumerate() {
        out.set_column(m + j, f);
    }
    Ok(out)
}

/// Matrix exponential by scaling-and-squaring with a Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.amax();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Random symplectic matrix for the given form: exp of a random Hamiltonian
/// operator Ω⁻¹S with S symmetric of spectral scale `scale`.
pub fn random_symplectic<R: Rng>(space: &SymplecticSpace, rng: &mut R, scale: f64) -> DMatrix<f64> {
    let d = space.dim;
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = rng.gen_range(-scale..scale);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    expm(&(space.form_inverse() * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std2() -> SymplecticSpace {
        SymplecticSpace::standard(1)
    }

    #[test]
    fn operator_elliptic_model() {
        // H = (p^2 + q^2)/2 on the plane: A = [[0,-1],[1,0]], eigenvalues ±i.
        let q = QuadraticHamiltonian::new(std2(), DMatrix::identity(2, 2), GeneratorKind::Elliptic)
            .unwrap();
        let a = hamiltonian_operator(&q).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((a.a - expect).amax() < 1e-14);
    }

    #[test]
    fn operator_hyperbolic_model() {
        // H = pq: eigenvalues ±1.
        let qm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let q = QuadraticHamiltonian::new(std2(), qm, GeneratorKind::Hyperbolic).unwrap();
        let a = hamiltonian_operator(&q).unwrap();
        let eig = a.a.complex_eigenvalues();
        let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
        re.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((re[0] + 1.0).abs() < 1e-12 && (re[1] - 1.0).abs() < 1e-12);
        assert!(eig.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn operator_zero() {
        let q = QuadraticHamiltonian::new(std2(), DMatrix::zeros(2, 2), GeneratorKind::Elliptic)
            .unwrap();
        assert!(hamiltonian_operator(&q).unwrap().a.amax() == 0.0);
    }

    #[test]
    fn operator_rejects_nonsymmetric() {
        let qm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(QuadraticHamiltonian::new(std2(), qm, GeneratorKind::Elliptic).is_err());
    }

    #[test]
    fn complement_coordinate_blocks() {
        // W = span(e1, f1) in standard R^4 -> complement is span(e2, f2).
        let space = SymplecticSpace::standard(2);
        let mut w = DMatrix::zeros(4, 2);
        w[(0, 0)] = 1.0;
        w[(1, 1)] = 1.0;
        let c = symplectic_complement(&w, &space, true, DEFAULT_TOL).unwrap();
        assert_eq!(c.ncols(), 2);
        for j in 0..2 {
            assert!(c.column(j)[0].abs() < 1e-12 && c.column(j)[1].abs() < 1e-12);
        }
    }

    #[test]
    fn complement_whole_space_is_empty() {
        let space = SymplecticSpace::standard(2);
        let w = DMatrix::identity(4, 4);
        let c = symplectic_complement(&w, &space, true, DEFAULT_TOL).unwrap();
        assert_eq!(c.ncols(), 0);
    }

    #[test]
    fn complement_random_subspace_pairs_to_zero() {
        let space = SymplecticSpace::standard(3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // Random symplectic image of (e1, f1) is a symplectic 2-subspace.
        let p = random_symplectic(&space, &mut rng, 0.7);
        let mut w = DMatrix::zeros(6, 2);
        w.set_column(0, &p.column(0).into_owned());
        w.set_column(1, &p.column(1).into_owned());
        let c = symplectic_complement(&w, &space, true, DEFAULT_TOL).unwrap();
        assert_eq!(c.ncols(), 4);
        for j in 0..c.ncols() {
            for i in 0..2 {
                let v = space.pair(&c.column(j).into(), &w.column(i).into());
                assert!(v.abs() < 1e-10, "pairing {v}");
            }
        }
    }

    #[test]
    fn gram_schmidt_identity_case() {
        let space = std2();
        let basis = symplectic_gram_schmidt(&DMatrix::identity(2, 2), &space, DEFAULT_TOL).unwrap();
        let g = basis.transpose() * &space.form * &basis;
        assert!((g - standard_split_form(1)).amax() < 1e-12);
    }

    #[test]
    fn gram_schmidt_sheared_pair() {
        let space = std2();
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]); // e1+f1, f1
        let basis = symplectic_gram_schmidt(&v, &space, DEFAULT_TOL).unwrap();
        let g = basis.transpose() * &space.form * &basis;
        assert!((g - standard_split_form(1)).amax() < 1e-12);
    }

    #[test]
    fn gram_schmidt_random_full_basis() {
        let space = SymplecticSpace::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut m = DMatrix::<f64>::zeros(4, 4);
            loop {
                for i in 0..4 {
                    for j in 0..4 {
                        m[(i, j)] = rng.gen_range(-1.0..1.0);
                    }
                }
                if m.clone().lu().determinant().abs() > 0.1_f64 {
                    break;
                }
            }
            let basis = symplectic_gram_schmidt(&m, &space, DEFAULT_TOL).unwrap();
            assert_eq!(basis.ncols(), 4);
            let g = basis.transpose() * &space.form * &basis;
            assert!((g - standard_split_form(2)).amax() < 1e-10);
        }
    }

    /// Form matrix in (e_1..e_m, f_1..f_m) "split" column order.
    fn standard_split_form(m: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            g[(i, m + i)] = 1.0;
            g[(m + i, i)] = -1.0;
        }
        g
    }

    #[test]
    fn operator_linearity_and_infinitesimal_symplectic() {
        let space = SymplecticSpace::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut q1 = DMatrix::zeros(4, 4);
            let mut q2 = DMatrix::zeros(4, 4);
            for i in 0..4 {
                for j in i..4 {
                    let a = rng.gen_range(-1.0..1.0);
                    let b = rng.gen_range(-1.0..1.0);
                    q1[(i, j)] = a;
                    q1[(j, i)] = a;
                    q2[(i, j)] = b;
                    q2[(j, i)] = b;
                }
            }
            let h1 = QuadraticHamiltonian::new(space.clone(), q1.clone(), GeneratorKind::Elliptic)
                .unwrap();
            let h2 = QuadraticHamiltonian::new(space.clone(), q2.clone(), GeneratorKind::Elliptic)
                .unwrap();
            let h12 =
                QuadraticHamiltonian::new(space.clone(), &q1 + &q2, GeneratorKind::Elliptic)
                    .unwrap();
            let a1 = hamiltonian_operator(&h1).unwrap().a;
            let a2 = hamiltonian_operator(&h2).unwrap().a;
            let a12 = hamiltonian_operator(&h12).unwrap().a;
            assert!((&a1 + &a2 - a12).amax() < 1e-12);
            // Ω(Au, v) + Ω(u, Av) = 0 on random pairs.
            let infdef = (a1.transpose() * &space.form + &space.form * &a1).amax();
            assert!(infdef < 1e-12);
            for _ in 0..100 {
                let u = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                let v = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                let s = space.pair(&(&a1 * &u), &v) + space.pair(&u, &(&a1 * &v));
                assert!(s.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn random_symplectic_preserves_form() {
        let space = SymplecticSpace::standard(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = random_symplectic(&space, &mut rng, 0.6);
            let defect = (p.transpose() * &space.form * &p - &space.form).amax();
            assert!(defect < 1e-10, "defect {defect}");
        }
    }
}
