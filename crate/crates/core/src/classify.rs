//! Simultaneous normal form for a commuting family of Hamiltonian operators
//! and finite-order symplectic generators: joint invariant decomposition,
//! refinement by commuting symplectic involutions, case-by-case symplectic
//! basis construction, and assembly of the classification report.

use crate::exact::{round_to_rational, Frac};
use crate::symplectic::{
    kernel_basis, FiniteSymplecticAction, GeneratorKind, QuadraticHamiltonian, SymplecticSpace,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("input operators do not commute (residual {0:.3e})")]
    NonCommuting(f64),
    #[error("spectrum off the periodicity lattice (residual {0:.3e})")]
    NonResonantSpectrum(f64),
    #[error("generator is not of the declared finite order (residual {0:.3e})")]
    NotFiniteOrder(f64),
    #[error("involution defect {0:.3e}; input not semisimple or mis-declared")]
    InvolutionDefect(f64),
    #[error("normal-basis assembly failed: {0}")]
    AssemblyDefect(String),
    #[error(transparent)]
    Symplectic(#[from] crate::symplectic::SymplecticError),
}

/// Input to the classifier: the linearized data at a (reduced, rank-0)
/// singular point. The space has dimension 2(n - rank).
#[derive(Clone, Debug)]
pub struct LinearFamily {
    pub space: SymplecticSpace,
    pub hamiltonians: Vec<QuadraticHamiltonian>,
    pub action: FiniteSymplecticAction,
    /// Total degrees of freedom of the ambient system.
    pub n: usize,
    /// Orbit rank; the transverse space classified here has n - rank
    /// degrees of freedom.
    pub rank: usize,
}

impl LinearFamily {
    pub fn transverse_n(&self) -> usize {
        self.space.dim / 2
    }
}

/// Invariant subspace of the joint decomposition, with its spectral labels.
#[derive(Clone, Debug)]
pub struct JointBlock {
    /// Orthonormal column basis, full-space coordinates.
    pub basis: DMatrix<f64>,
    /// Per-generator frequency: |λ| for the block's eigenvalue quadruple
    /// {±λ, ±conj λ} of A_l (in iZ+ for elliptic kind, Z+ for hyperbolic).
    pub freqs: Vec<u32>,
    /// Per-generator rotation number q in [0, 1/2] with
    /// e^{±2πiq} ∈ Spec(M_a | block).
    pub rotations: Vec<Frac>,
    /// Max residual of the spectral roundings on this block.
    pub residual: f64,
}

/// Block case after involution refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockCase {
    FocusFocus,
    Elliptic,
    Hyperbolic,
    Trivial,
}

/// Common eigenspace of the involution set, with recorded signs.
#[derive(Clone, Debug)]
pub struct RefinedBlock {
    pub basis: DMatrix<f64>,
    pub case: BlockCase,
    pub freqs: Vec<u32>,
    pub rotations: Vec<Frac>,
    /// Signs ε_a for a in the twisted set (index, sign).
    pub eps: Vec<(usize, i8)>,
    /// Signs η_l for l in the elliptic/hyperbolic sets (index, sign).
    pub eta: Vec<(usize, i8)>,
    /// Anchor indices (a_s, l_s, l'_s) actually chosen, for reproducibility.
    pub anchors: (Option<usize>, Option<usize>, Option<usize>),
    pub residual: f64,
}

/// Final report: Williamson type, integer coefficient matrix, twisting
/// residues, and the normalizing symplectic basis.
#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub n: usize,
    pub rank: usize,
    /// (k_e, k_h, k_f).
    pub williamson: (usize, usize, usize),
    pub kappa_e: usize,
    pub kappa_h: usize,
    /// Coefficients of the diagonal model functions in the final slots:
    /// rows j = 1..(2 k_f + k_e + k_h), columns in input generator order.
    pub p_matrix: Vec<Vec<i64>>,
    /// Input generator kinds, column by column.
    pub kinds: Vec<GeneratorKind>,
    /// Twisting tuple per finite generator: length n - rank, entries mod 1.
    pub twisting: Vec<Vec<Frac>>,
    pub orders: Vec<u32>,
    /// Normalizing symplectic basis (columns, interleaved pair order).
    pub basis: DMatrix<f64>,
    /// Largest rounding/reconstruction residual encountered.
    pub max_residual: f64,
}

impl ClassificationReport {
    pub fn slots(&self) -> usize {
        let (ke, kh, kf) = self.williamson;
        2 * kf + ke + kh
    }

    fn column(&self, l: usize) -> Vec<i64> {
        self.p_matrix.iter().map(|row| row[l]).collect()
    }

    /// Elliptic resonance vectors (length 2 k_f + k_e), one per
    /// elliptic-kind generator: focus slots contribute (p, -p) pairs.
    pub fn elliptic_resonances(&self) -> Vec<Vec<i64>> {
        let (ke, _kh, kf) = self.williamson;
        let mut out = Vec::new();
        for (l, kind) in self.kinds.iter().enumerate() {
            if *kind != GeneratorKind::Elliptic {
                continue;
            }
            let col = self.column(l);
            let mut v = Vec::with_capacity(2 * kf + ke);
            for j in 0..kf {
                v.push(col[2 * j]);
                v.push(-col[2 * j]);
            }
            for j in 0..ke {
                v.push(col[2 * kf + j]);
            }
            out.push(v);
        }
        out
    }

    /// Hyperbolic resonance vectors (length 2 k_f + k_h): focus slots
    /// contribute doubled (p, p) pairs.
    pub fn hyperbolic_resonances(&self) -> Vec<Vec<i64>> {
        let (ke, kh, kf) = self.williamson;
        let mut out = Vec::new();
        for (l, kind) in self.kinds.iter().enumerate() {
            if *kind != GeneratorKind::Hyperbolic {
                continue;
            }
            let col = self.column(l);
            let mut v = Vec::with_capacity(2 * kf + kh);
            for j in 0..kf {
                v.push(col[2 * j + 1]);
                v.push(col[2 * j + 1]);
            }
            for j in 0..kh {
                v.push(col[2 * kf + ke + j]);
            }
            out.push(v);
        }
        out
    }

    /// Extended elliptic resonance vectors of length n - rank, used by the
    /// twisting quotient: elliptic data padded by zeros on hyperbolic and
    /// trivial slots.
    pub fn extended_elliptic(&self) -> Vec<Vec<i64>> {
        let m = self.n - self.rank;
        self.elliptic_resonances()
            .into_iter()
            .map(|mut v| {
                v.resize(m, 0);
                v
            })
            .collect()
    }
}

const COMMUTE_TOL: f64 = 1e-8;
const LATTICE_TOL: f64 = 1e-6;
const INVOLUTION_TOL: f64 = 1e-8;
const PATTERN_TOL: f64 = 1e-8;

fn commutator_norm(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x * y - y * x).amax()
}

/// Restriction of `op` to the span of the orthonormal columns `basis`,
/// with the invariance residual.
fn restrict(op: &DMatrix<f64>, basis: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let image = op * basis;
    let r = basis.transpose() * &image;
    let residual = (&image - basis * &r).amax();
    (r, residual)
}

/// Split an orthonormal-basis subspace by the kernels of polynomials in the
/// restricted operator, one kernel per spectral group.
fn split_by_kernels(basis: &DMatrix<f64>, polys: &[DMatrix<f64>], tol: f64) -> Vec<DMatrix<f64>> {
    if polys.len() <= 1 {
        return vec![basis.clone()];
    }
    let mut out = Vec::new();
    for p in polys {
        let k = kernel_basis(p, tol);
        if k.ncols() > 0 {
            out.push(basis * k);
        }
    }
    out
}

/// Group eigenvalues of an elliptic/hyperbolic-kind restricted operator
/// into integer frequencies; error if off-lattice.
fn integer_frequencies(
    r: &DMatrix<f64>,
    kind: GeneratorKind,
    scale: f64,
) -> Result<(Vec<u32>, f64), ClassifyError> {
    let eig = r.complex_eigenvalues();
    let mut freqs: Vec<u32> = Vec::new();
    let mut residual: f64 = 0.0;
    for z in eig.iter() {
        let (on_axis, off_axis) = match kind {
            GeneratorKind::Elliptic => (z.im, z.re),
            GeneratorKind::Hyperbolic => (z.re, z.im),
        };
        let k = on_axis.abs().round();
        let res = (on_axis.abs() - k).abs().max(off_axis.abs());
        if res > LATTICE_TOL * scale.max(1.0) {
            return Err(ClassifyError::NonResonantSpectrum(res));
        }
        residual = residual.max(res);
        let k = k as u32;
        if !freqs.contains(&k) {
            freqs.push(k);
        }
    }
    freqs.sort_unstable();
    Ok((freqs, residual))
}

/// Rotation numbers q in [0, 1/2] of a finite-order restricted generator.
fn rotation_numbers(r: &DMatrix<f64>, order: u32) -> Result<(Vec<Frac>, f64), ClassifyError> {
    let eig = r.complex_eigenvalues();
    let mut qs: Vec<Frac> = Vec::new();
    let mut residual: f64 = 0.0;
    for z in eig.iter() {
        let modulus = (z.norm() - 1.0).abs();
        if modulus > 1e-6 {
            return Err(ClassifyError::NotFiniteOrder(modulus));
        }
        let theta = z.im.atan2(z.re) / (2.0 * std::f64::consts::PI);
        let (q, res) = round_to_rational(theta.rem_euclid(1.0), order as i64);
        if res > LATTICE_TOL {
            return Err(ClassifyError::NotFiniteOrder(res));
        }
        residual = residual.max(res);
        // Canonical representative in [0, 1/2].
        let qm = q.mod1();
        let half = Frac::new(1, 2);
        let canon = if qm > half { Frac::from_int(1) - qm } else { qm };
        if !qs.contains(&canon) {
            qs.push(canon);
        }
    }
    qs.sort();
    Ok((qs, residual))
}

/// Substep 1a: unique (up to order) decomposition into joint invariant
/// subspaces separated by the spectral labels.
pub fn joint_block_decomposition(family: &LinearFamily) -> Result<Vec<JointBlock>, ClassifyError> {
    let dim = family.space.dim;
    let omega = &family.space.form;
    let ops: Vec<DMatrix<f64>> = family
        .hamiltonians
        .iter()
        .map(|h| family.space.form_inverse() * &h.q)
        .collect();
    let ms = &family.action.generators;

    // Preconditions: commuting family, symplectic finite-order generators.
    let mut all: Vec<&DMatrix<f64>> = ops.iter().collect();
    all.extend(ms.iter());
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let c = commutator_norm(all[i], all[j]);
            let scale = all[i].amax().max(all[j].amax()).max(1.0);
            if c > COMMUTE_TOL * scale {
                return Err(ClassifyError::NonCommuting(c));
            }
        }
    }
    for (m, &order) in ms.iter().zip(&family.action.orders) {
        let mut p = DMatrix::identity(dim, dim);
        for _ in 0..order {
            p = &p * m;
        }
        let defect = (&p - DMatrix::identity(dim, dim)).amax();
        if defect > COMMUTE_TOL {
            return Err(ClassifyError::NotFiniteOrder(defect));
        }
        let sympl = (m.transpose() * omega * m - omega).amax();
        if sympl > COMMUTE_TOL {
            return Err(ClassifyError::NotFiniteOrder(sympl));
        }
    }

    // Iterative refinement: split by each A_l, then by each M_a.
    let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::identity(dim, dim)];
    for (op, ham) in ops.iter().zip(&family.hamiltonians) {
        let scale = op.amax().max(1.0);
        let mut next = Vec::new();
        for b in &blocks {
            let (r, res) = restrict(op, b);
            if res > 1e-7 * scale {
                return Err(ClassifyError::NonCommuting(res));
            }
            let (freqs, _) = integer_frequencies(&r, ham.kind, scale)?;
            let d = r.nrows();
            let polys: Vec<DMatrix<f64>> = freqs
                .iter()
                .map(|&k| {
                    let kk = k as f64;
                    match (ham.kind, k) {
                        (_, 0) => r.clone(),
                        (GeneratorKind::Elliptic, _) => {
                            &r * &r + DMatrix::<f64>::identity(d, d) * (kk * kk)
                        }
                        (GeneratorKind::Hyperbolic, _) => {
                            &r * &r - DMatrix::<f64>::identity(d, d) * (kk * kk)
                        }
                    }
                })
                .collect();
            // Scale-normalized kernels.
            let polys: Vec<DMatrix<f64>> = polys
                .into_iter()
                .map(|p| {
                    let a = p.amax();
                    if a > 1.0 {
                        p / a
                    } else {
                        p
                    }
                })
                .collect();
            next.extend(split_by_kernels(b, &polys, 1e-7));
        }
        blocks = next;
    }
    for (m, &order) in ms.iter().zip(&family.action.orders) {
        let mut next = Vec::new();
        for b in &blocks {
            let (r, res) = restrict(m, b);
            if res > 1e-7 {
                return Err(ClassifyError::NonCommuting(res));
            }
            let (qs, _) = rotation_numbers(&r, order)?;
            let d = r.nrows();
            let polys: Vec<DMatrix<f64>> = qs
                .iter()
                .map(|q| {
                    let qv = q.to_f64();
                    if *q == Frac::zero() {
                        &r - DMatrix::<f64>::identity(d, d)
                    } else if *q == Frac::new(1, 2) {
                        &r + DMatrix::<f64>::identity(d, d)
                    } else {
                        let c = (2.0 * std::f64::consts::PI * qv).cos();
                        &r * &r - &r * (2.0 * c) + DMatrix::<f64>::identity(d, d)
                    }
                })
                .collect();
            next.extend(split_by_kernels(b, &polys, 1e-7));
        }
        blocks = next;
    }

    // Completeness and labels.
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    if total != dim {
        return Err(ClassifyError::AssemblyDefect(format!(
            "block dimensions sum to {total}, expected {dim}"
        )));
    }
    let mut out = Vec::new();
    for b in blocks {
        let mut freqs = Vec::new();
        let mut residual: f64 = 0.0;
        for (op, ham) in ops.iter().zip(&family.hamiltonians) {
            let (r, _) = restrict(op, &b);
            let (fs, res) = integer_frequencies(&r, ham.kind, op.amax().max(1.0))?;
            if fs.len() != 1 {
                return Err(ClassifyError::AssemblyDefect(
                    "block not spectrally homogeneous".into(),
                ));
            }
            residual = residual.max(res);
            freqs.push(fs[0]);
        }
        let mut rotations = Vec::new();
        for (m, &order) in ms.iter().zip(&family.action.orders) {
            let (r, _) = restrict(m, &b);
            let (qs, res) = rotation_numbers(&r, order)?;
            if qs.len() != 1 {
                return Err(ClassifyError::AssemblyDefect(
                    "block not rotation homogeneous".into(),
                ));
            }
            residual = residual.max(res);
            rotations.push(qs[0]);
        }
        out.push(JointBlock { basis: b, freqs, rotations, residual });
    }
    Ok(out)
}

/// Substep 1b: refine each joint block into common eigenspaces of the
/// commuting symplectic involutions built from the anchor operators.
pub fn refine_blocks(
    blocks: &[JointBlock],
    family: &LinearFamily,
) -> Result<Vec<RefinedBlock>, ClassifyError> {
    let ops: Vec<DMatrix<f64>> = family
        .hamiltonians
        .iter()
        .map(|h| family.space.form_inverse() * &h.q)
        .collect();
    let mut out = Vec::new();
    let half = Frac::new(1, 2);
    for block in blocks {
        let d = block.basis.ncols();
        // Index sets.
        let twisted: Vec<usize> = block
            .rotations
            .iter()
            .enumerate()
            .filter(|(_, q)| **q != Frac::zero() && **q != half)
            .map(|(a, _)| a)
            .collect();
        let elliptic: Vec<usize> = family
            .hamiltonians
            .iter()
            .enumerate()
            .filter(|(l, h)| h.kind == GeneratorKind::Elliptic && block.freqs[*l] > 0)
            .map(|(l, _)| l)
            .collect();
        let hyperbolic: Vec<usize> = family
            .hamiltonians
            .iter()
            .enumerate()
            .filter(|(l, h)| h.kind == GeneratorKind::Hyperbolic && block.freqs[*l] > 0)
            .map(|(l, _)| l)
            .collect();

        // Normalized square roots of -Id / Id on the block.
        let ident = DMatrix::<f64>::identity(d, d);
        let l_ops: Vec<(usize, DMatrix<f64>)> = twisted
            .iter()
            .map(|&a| {
                let (r, _) = restrict(&family.action.generators[a], &block.basis);
                let theta = 2.0 * std::f64::consts::PI * block.rotations[a].to_f64();
                ((a), (r - &ident * theta.cos()) / theta.sin())
            })
            .collect();
        let b_ops: Vec<(usize, DMatrix<f64>)> = elliptic
            .iter()
            .chain(hyperbolic.iter())
            .map(|&l| {
                let (r, _) = restrict(&ops[l], &block.basis);
                (l, r / block.freqs[l] as f64)
            })
            .collect();

        // Anchors: smallest index in each set.
        let a_anchor = twisted.first().copied();
        let l_anchor = if a_anchor.is_none() { elliptic.first().copied() } else { None };
        let h_anchor = hyperbolic.first().copied();
        let e_op: Option<DMatrix<f64>> = if let Some(a) = a_anchor {
            Some(l_ops.iter().find(|(i, _)| *i == a).unwrap().1.clone())
        } else {
            l_anchor.map(|l| b_ops.iter().find(|(i, _)| *i == l).unwrap().1.clone())
        };
        let h_op: Option<DMatrix<f64>> =
            h_anchor.map(|l| b_ops.iter().find(|(i, _)| *i == l).unwrap().1.clone());

        // Involution set, in deterministic order, tagged with the index and
        // whether the sign convention flips (ε and elliptic η read as
        // minus the eigenvalue, hyperbolic η as plus).
        #[derive(Clone)]
        struct Inv {
            mat: DMatrix<f64>,
            index: usize,
            is_eps: bool,
            flip: bool,
        }
        let mut invs: Vec<Inv> = Vec::new();
        if let Some(e) = &e_op {
            for (a, l) in &l_ops {
                invs.push(Inv { mat: e * l, index: *a, is_eps: true, flip: true });
            }
            for &l in &elliptic {
                let b = &b_ops.iter().find(|(i, _)| *i == l).unwrap().1;
                invs.push(Inv { mat: e * b, index: l, is_eps: false, flip: true });
            }
        }
        if let Some(h) = &h_op {
            for &l in &hyperbolic {
                let b = &b_ops.iter().find(|(i, _)| *i == l).unwrap().1;
                invs.push(Inv { mat: h * b, index: l, is_eps: false, flip: false });
            }
        }
        for inv in &invs {
            let defect = (&inv.mat * &inv.mat - &ident).amax();
            if defect > INVOLUTION_TOL {
                return Err(ClassifyError::InvolutionDefect(defect));
            }
        }

        let case = match (
            !twisted.is_empty() || !elliptic.is_empty(),
            !hyperbolic.is_empty(),
        ) {
            (true, false) => BlockCase::Elliptic,
            (false, true) => BlockCase::Hyperbolic,
            (true, true) => BlockCase::FocusFocus,
            (false, false) => BlockCase::Trivial,
        };

        // Split into common eigenspaces, tracking signs.
        struct Piece {
            basis: DMatrix<f64>, // block-local coordinates
            eps: Vec<(usize, i8)>,
            eta: Vec<(usize, i8)>,
        }
        let mut pieces = vec![Piece { basis: ident.clone(), eps: vec![], eta: vec![] }];
        for inv in &invs {
            let mut next = Vec::new();
            for piece in pieces {
                let (r, _) = restrict(&inv.mat, &piece.basis);
                let dd = r.nrows();
                for sign in [1.0_f64, -1.0] {
                    let k = kernel_basis(&(&r - DMatrix::<f64>::identity(dd, dd) * sign), 1e-7);
                    if k.ncols() == 0 {
                        continue;
                    }
                    let mut eps = piece.eps.clone();
                    let mut eta = piece.eta.clone();
                    let recorded = if inv.flip { -sign } else { sign } as i8;
                    if inv.is_eps {
                        eps.push((inv.index, recorded));
                    } else {
                        eta.push((inv.index, recorded));
                    }
                    next.push(Piece { basis: &piece.basis * k, eps, eta });
                }
            }
            pieces = next;
        }

        let covered: usize = pieces.iter().map(|p| p.basis.ncols()).sum();
        if covered != d {
            return Err(ClassifyError::AssemblyDefect(format!(
                "involution eigenspaces cover {covered} of {d} dims"
            )));
        }
        for piece in pieces {
            out.push(RefinedBlock {
                basis: &block.basis * &piece.basis,
                case,
                freqs: block.freqs.clone(),
                rotations: block.rotations.clone(),
                eps: piece.eps,
                eta: piece.eta,
                anchors: (a_anchor, l_anchor, h_anchor),
                residual: block.residual,
            });
        }
    }
    Ok(out)
}

/// Per-block symplectic normal basis columns (interleaved pair order).
fn block_columns(
    rb: &RefinedBlock,
    family: &LinearFamily,
) -> Result<Vec<DVector<f64>>, ClassifyError> {
    let omega = &family.space.form;
    let basis = &rb.basis;
    let d = basis.ncols();
    let ident = DMatrix::<f64>::identity(d, d);
    let pair =
        |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * omega * v)[(0, 0)];

    // Restricted anchor operators in block-local coordinates.
    let ops: Vec<DMatrix<f64>> = family
        .hamiltonians
        .iter()
        .map(|h| family.space.form_inverse() * &h.q)
        .collect();
    let e_local: Option<DMatrix<f64>> = match rb.anchors {
        (Some(a), _, _) => {
            let (r, _) = restrict(&family.action.generators[a], basis);
            let theta = 2.0 * std::f64::consts::PI * rb.rotations[a].to_f64();
            Some((r - &ident * theta.cos()) / theta.sin())
        }
        (None, Some(l), _) => {
            let (r, _) = restrict(&ops[l], basis);
            Some(r / rb.freqs[l] as f64)
        }
        _ => None,
    };
    let h_local: Option<DMatrix<f64>> = rb.anchors.2.map(|l| {
        let (r, _) = restrict(&ops[l], basis);
        r / rb.freqs[l] as f64
    });

    let cols_from_local = |vs: Vec<DVector<f64>>| -> Vec<DVector<f64>> {
        vs.into_iter().map(|v| basis * v).collect()
    };

    match rb.case {
        BlockCase::Trivial => {
            let full = crate::symplectic::symplectic_gram_schmidt(
                basis,
                &family.space,
                crate::symplectic::DEFAULT_TOL,
            )?;
            let m = full.ncols() / 2;
            let mut cols = Vec::with_capacity(2 * m);
            for j in 0..m {
                cols.push(full.column(j).into_owned());
                cols.push(full.column(m + j).into_owned());
            }
            Ok(cols)
        }
        BlockCase::Elliptic => {
            let e_loc = e_local.ok_or_else(|| {
                ClassifyError::AssemblyDefect("elliptic block without anchor".into())
            })?;
            // g(u, v) = Ω(u, E v) is symmetric nondegenerate on the block.
            let mut pool: Vec<DVector<f64>> = (0..d).map(|j| ident.column(j).into_owned()).collect();
            let mut locals: Vec<DVector<f64>> = Vec::new();
            let omega_loc = basis.transpose() * omega * basis;
            let g = |u: &DVector<f64>, v: &DVector<f64>, e_loc: &DMatrix<f64>| {
                (u.transpose() * &omega_loc * (e_loc * v))[(0, 0)]
            };
            while !pool.is_empty() {
                pool.retain(|v| v.norm() > 1e-9);
                if pool.is_empty() {
                    break;
                }
                // Pivot on the largest |g(v, v)|; fall back to u+w mixing.
                let mut best = (0usize, 0.0_f64);
                for (i, v) in pool.iter().enumerate() {
                    let c = g(v, v, &e_loc).abs() / v.norm_squared();
                    if c > best.1 {
                        best = (i, c);
                    }
                }
                let v = if best.1 > 1e-8 {
                    pool[best.0].clone()
                } else {
                    let mut mixed: Option<DVector<f64>> = None;
                    'outer: for i in 0..pool.len() {
                        for j in i + 1..pool.len() {
                            if g(&pool[i], &pool[j], &e_loc).abs()
                                / (pool[i].norm() * pool[j].norm())
                                > 1e-8
                            {
                                mixed = Some(&pool[i] + &pool[j]);
                                break 'outer;
                            }
                        }
                    }
                    mixed.ok_or_else(|| {
                        ClassifyError::AssemblyDefect("degenerate elliptic pairing".into())
                    })?
                };
                let c = g(&v, &v, &e_loc);
                let sign = if c >= 0.0 { 1.0 } else { -1.0 };
                let e_vec = &v / c.abs().sqrt();
                let f_vec = (&e_loc * &e_vec) * sign;
                for w in pool.iter_mut() {
                    let a = (w.transpose() * &omega_loc * &f_vec)[(0, 0)];
                    let b = (w.transpose() * &omega_loc * &e_vec)[(0, 0)];
                    *w -= &e_vec * a;
                    *w += &f_vec * b;
                }
                locals.push(e_vec);
                locals.push(f_vec);
            }
            if locals.len() != d {
                return Err(ClassifyError::AssemblyDefect(
                    "elliptic pairing produced wrong dimension".into(),
                ));
            }
            Ok(cols_from_local(locals))
        }
        BlockCase::Hyperbolic | BlockCase::FocusFocus => {
            let h_loc = h_local.ok_or_else(|| {
                ClassifyError::AssemblyDefect("hyperbolic anchor missing".into())
            })?;
            let plus = kernel_basis(&(&h_loc - &ident), 1e-7);
            let minus = kernel_basis(&(&h_loc + &ident), 1e-7);
            if plus.ncols() + minus.ncols() != d || plus.ncols() != minus.ncols() {
                return Err(ClassifyError::AssemblyDefect(
                    "hyperbolic eigenspaces are not a Lagrangian pair".into(),
                ));
            }
            let m = plus.ncols();
            // Basis e_i of the +1 Lagrangian.
            let mut e_local_vecs: Vec<DVector<f64>> =
                (0..m).map(|j| plus.column(j).into_owned()).collect();
            if rb.case == BlockCase::FocusFocus {
                // Reorder into complex pairs e_{2j-1}, e_{2j} = E e_{2j-1}.
                let e_loc = e_local.ok_or_else(|| {
                    ClassifyError::AssemblyDefect("focus block without elliptic anchor".into())
                })?;
                if m % 2 != 0 {
                    return Err(ClassifyError::AssemblyDefect(
                        "focus Lagrangian has odd dimension".into(),
                    ));
                }
                let mut remaining = e_local_vecs.clone();
                let mut ordered: Vec<DVector<f64>> = Vec::new();
                while !remaining.is_empty() {
                    let u = remaining[0].clone();
                    let v = &e_loc * &u;
                    // Remove the span(u, v) components from the rest.
                    let mut span = DMatrix::zeros(d, ordered.len() + 2);
                    for (k, w) in ordered.iter().enumerate() {
                        span.set_column(k, w);
                    }
                    span.set_column(ordered.len(), &u);
                    span.set_column(ordered.len() + 1, &v);
                    let qr = span.qr();
                    let q = qr.q();
                    remaining = remaining
                        .into_iter()
                        .skip(1)
                        .map(|w| {
                            let mut w2 = w.clone();
                            for k in 0..q.ncols() {
                                let col = q.column(k);
                                let dot = col.dot(&w);
                                w2 -= DVector::from(col.into_owned()) * dot;
                            }
                            w2
                        })
                        .filter(|w| w.norm() > 1e-8)
                        .collect();
                    ordered.push(u);
                    ordered.push(v);
                }
                if ordered.len() != m {
                    return Err(ClassifyError::AssemblyDefect(
                        "focus complex pairing failed".into(),
                    ));
                }
                e_local_vecs = ordered;
            }
            // Ω-dual basis f_j inside the -1 Lagrangian.
            let mut gram = DMatrix::zeros(m, m);
            let omega_loc = basis.transpose() * omega * basis;
            for i in 0..m {
                for k in 0..m {
                    gram[(i, k)] =
                        (e_local_vecs[i].transpose() * &omega_loc * minus.column(k))[(0, 0)];
                }
            }
            let gram_inv = gram.try_inverse().ok_or_else(|| {
                ClassifyError::AssemblyDefect("degenerate Lagrangian pairing".into())
            })?;
            let f_local_vecs: Vec<DVector<f64>> = (0..m)
                .map(|j| {
                    let mut f = DVector::zeros(d);
                    for k in 0..m {
                        f += minus.column(k) * gram_inv[(k, j)];
                    }
                    f
                })
                .collect();
            let es: Vec<DVector<f64>> = e_local_vecs.iter().map(|v| basis * v).collect();
            let fs: Vec<DVector<f64>> = f_local_vecs.iter().map(|v| basis * v).collect();
            if rb.case == BlockCase::Hyperbolic {
                let mut cols = Vec::with_capacity(2 * m);
                for j in 0..m {
                    cols.push(es[j].clone());
                    cols.push(fs[j].clone());
                }
                Ok(cols)
            } else {
                // Substep 1d combinations for the focus pairs.
                let s2 = std::f64::consts::SQRT_2;
                let mut cols = Vec::with_capacity(2 * m);
                for j in 0..m / 2 {
                    let (e1, e2) = (&es[2 * j], &es[2 * j + 1]);
                    let (f1, f2) = (&fs[2 * j], &fs[2 * j + 1]);
                    cols.push((e1 - f2) / s2);
                    cols.push((e2 + f1) / s2);
                    cols.push((e1 + f2) / s2);
                    cols.push((-e2 + f1) / s2);
                }
                // Pairing sanity.
                for (i, u) in cols.iter().enumerate() {
                    for (k, v) in cols.iter().enumerate() {
                        let expect = match (i / 2 == k / 2, i % 2, k % 2) {
                            (true, 0, 1) => 1.0,
                            (true, 1, 0) => -1.0,
                            _ => 0.0,
                        };
                        if (pair(u, v) - expect).abs() > 1e-7 {
                            return Err(ClassifyError::AssemblyDefect(
                                "focus combination pairing defect".into(),
                            ));
                        }
                    }
                }
                Ok(cols)
            }
        }
    }
}

/// Substeps 1c-1d: assemble the ordered normal basis and the report.
pub fn build_normal_basis(
    refined: &[RefinedBlock],
    family: &LinearFamily,
) -> Result<ClassificationReport, ClassifyError> {
    let dim = family.space.dim;
    let m = dim / 2;
    let omega = &family.space.form;
    let n_gen = family.hamiltonians.len();

    struct Built {
        case: BlockCase,
        cols: Vec<DVector<f64>>,
        /// Per slot (pair of columns), per generator l: rounded coefficient.
        p_rows: Vec<Vec<i64>>,
        /// Per slot, per action generator a: rotation fraction.
        q_rows: Vec<Vec<Frac>>,
    }

    let mut built: Vec<Built> = Vec::new();
    let mut max_residual: f64 = 0.0;
    for rb in refined {
        let cols = block_columns(rb, family)?;
        let slots = cols.len() / 2;
        // Provisional per-slot integer data read from the quadratic forms.
        let mut p_rows = vec![vec![0i64; n_gen]; slots];
        for (l, h) in family.hamiltonians.iter().enumerate() {
            for (slot, row) in p_rows.iter_mut().enumerate() {
                let u = &cols[2 * slot];
                let v = &cols[2 * slot + 1];
                let quu = (u.transpose() * &h.q * u)[(0, 0)];
                let quv = (u.transpose() * &h.q * v)[(0, 0)];
                let val = match (rb.case, h.kind) {
                    (BlockCase::Elliptic, GeneratorKind::Elliptic) => quu,
                    (BlockCase::Hyperbolic, GeneratorKind::Hyperbolic) => quv,
                    (BlockCase::FocusFocus, _) => {
                        // Signed coefficient read in the final extraction;
                        // here only for ordering. Elliptic generators show
                        // on the diagonal, hyperbolic on the cross terms.
                        match h.kind {
                            GeneratorKind::Elliptic => quu,
                            GeneratorKind::Hyperbolic => quv,
                        }
                    }
                    _ => 0.0,
                };
                let r = val.round();
                max_residual = max_residual.max((val - r).abs());
                row[l] = r as i64;
            }
        }
        let mut q_rows = vec![vec![Frac::zero(); family.action.len()]; slots];
        for (a, mgen) in family.action.generators.iter().enumerate() {
            for (slot, row) in q_rows.iter_mut().enumerate() {
                let u = &cols[2 * slot];
                let v = &cols[2 * slot + 1];
                // Rotation angle of M on the slot plane: with Ω(u,v) = 1,
                // Ω(Mu, v) = cos θ and Ω(Mu, u) = -sin θ.
                let mu = mgen * u;
                let cu = pairing(omega, &mu, v);
                let su = -pairing(omega, &mu, u);
                let theta = su.atan2(cu);
                let (q, res) =
                    round_to_rational((theta / (2.0 * std::f64::consts::PI)).rem_euclid(1.0),
                        family.action.orders[a] as i64);
                max_residual = max_residual.max(res);
                row[a] = q.mod1();
            }
        }
        built.push(Built { case: rb.case, cols, p_rows, q_rows });
    }

    // Deterministic ordering: case, then |p| rows lexicographic, sign,
    // then twisting rows, trivial blocks by rotation sign pattern.
    built.sort_by(|a, b| {
        let key = |x: &Built| {
            let pa: Vec<Vec<(i64, i64)>> = x
                .p_rows
                .iter()
                .map(|r| r.iter().map(|&v| (v.abs(), -v.signum())).collect())
                .collect();
            (x.case, pa, x.q_rows.clone())
        };
        key(a).cmp(&key(b))
    });

    // Assemble the basis.
    let mut s = DMatrix::zeros(dim, dim);
    let mut col = 0;
    let mut k_f = 0;
    let mut k_e = 0;
    let mut k_h = 0;
    for b in &built {
        match b.case {
            BlockCase::FocusFocus => k_f += b.cols.len() / 4,
            BlockCase::Elliptic => k_e += b.cols.len() / 2,
            BlockCase::Hyperbolic => k_h += b.cols.len() / 2,
            BlockCase::Trivial => {}
        }
        for c in &b.cols {
            s.set_column(col, c);
            col += 1;
        }
    }
    if col != dim {
        return Err(ClassifyError::AssemblyDefect("basis incomplete".into()));
    }

    // Symplectic refinement sweep: make S'ΩS = Ω_std to machine precision.
    for p in 0..m {
        for prev in 0..p {
            let (e_prev, f_prev) = (s.column(2 * prev).into_owned(), s.column(2 * prev + 1).into_owned());
            for idx in [2 * p, 2 * p + 1] {
                let v = s.column(idx).into_owned();
                let a = pairing(omega, &v, &f_prev);
                let b = pairing(omega, &v, &e_prev);
                let v = v - &e_prev * a + &f_prev * b;
                s.set_column(idx, &v);
            }
        }
        let e = s.column(2 * p).into_owned();
        let f = s.column(2 * p + 1).into_owned();
        let c = pairing(omega, &e, &f);
        if c.abs() < 1e-9 {
            return Err(ClassifyError::AssemblyDefect("refinement lost pairing".into()));
        }
        s.set_column(2 * p + 1, &(f / c));
    }
    let sympl_defect = (s.transpose() * omega * &s - crate::symplectic::standard_form(dim)).amax();
    if sympl_defect > crate::symplectic::DEFAULT_TOL {
        return Err(ClassifyError::AssemblyDefect(format!(
            "basis not symplectic: defect {sympl_defect:.3e}"
        )));
    }

    let slots = 2 * k_f + k_e + k_h;

    // Final integer extraction from S'QS against the block pattern.
    let mut p_matrix = vec![vec![0i64; n_gen]; slots];
    for (l, h) in family.hamiltonians.iter().enumerate() {
        let d_mat = s.transpose() * &h.q * &s;
        // Focus pairs: slots (2j-1, 2j) tied to coordinate quads.
        for j in 0..k_f {
            let base = 4 * j;
            match h.kind {
                GeneratorKind::Elliptic => {
                    let v = d_mat[(base, base)];
                    let r = v.round();
                    max_residual = max_residual.max((v - r).abs());
                    p_matrix[2 * j][l] = r as i64;
                }
                GeneratorKind::Hyperbolic => {
                    let v = d_mat[(base, base + 3)];
                    let r = v.round();
                    max_residual = max_residual.max((v - r).abs());
                    p_matrix[2 * j + 1][l] = r as i64;
                }
            }
        }
        for j in 0..k_e {
            if h.kind == GeneratorKind::Elliptic {
                let base = 4 * k_f + 2 * j;
                let v = d_mat[(base, base)];
                let r = v.round();
                max_residual = max_residual.max((v - r).abs());
                p_matrix[2 * k_f + j][l] = r as i64;
            }
        }
        for j in 0..k_h {
            if h.kind == GeneratorKind::Hyperbolic {
                let base = 4 * k_f + 2 * k_e + 2 * j;
                let v = d_mat[(base, base + 1)];
                let r = v.round();
                max_residual = max_residual.max((v - r).abs());
                p_matrix[2 * k_f + k_e + j][l] = r as i64;
            }
        }
        // Reconstruction identity: S'QS must equal the claimed pattern.
        let pattern = quadratic_pattern(dim, k_f, k_e, k_h, h.kind, &column_of(&p_matrix, l));
        let defect = (&d_mat - &pattern).amax();
        if defect > PATTERN_TOL * h.q.amax().max(1.0) {
            return Err(ClassifyError::AssemblyDefect(format!(
                "quadratic reconstruction defect {defect:.3e} for generator {l}"
            )));
        }
    }

    // Twisting residues from the rotation form of S⁻¹ M S.
    let s_inv = s.clone().try_inverse().ok_or_else(|| {
        ClassifyError::AssemblyDefect("normalizing basis not invertible".into())
    })?;
    let mut twisting = Vec::new();
    for (a, mgen) in family.action.generators.iter().enumerate() {
        let r = &s_inv * mgen * &s;
        // Block-rotation check and angle extraction, slot by slot.
        let mut tup = Vec::with_capacity(m);
        for p in 0..m {
            let base = 2 * p;
            let c = 0.5 * (r[(base, base)] + r[(base + 1, base + 1)]);
            let sn = 0.5 * (r[(base + 1, base)] - r[(base, base + 1)]);
            let theta = sn.atan2(c);
            let (q, res) = round_to_rational(
                (theta / (2.0 * std::f64::consts::PI)).rem_euclid(1.0),
                family.action.orders[a] as i64,
            );
            max_residual = max_residual.max(res);
            // Rotation-form defect.
            let mut defect: f64 = (r[(base, base)] - c).abs().max((sn - r[(base + 1, base)]).abs());
            for i in 0..dim {
                if i != base && i != base + 1 {
                    defect = defect.max(r[(i, base)].abs()).max(r[(base, i)].abs());
                }
            }
            if defect > 1e-7 {
                return Err(ClassifyError::AssemblyDefect(format!(
                    "finite generator {a} not in block-rotation form (defect {defect:.3e})"
                )));
            }
            tup.push(q.mod1());
        }
        // Focus pairs carry opposite rotations; slot pairs must sum to 0 mod 1.
        for j in 0..k_f {
            let sum = (tup[2 * j] + tup[2 * j + 1]).mod1();
            if sum != Frac::zero() {
                return Err(ClassifyError::AssemblyDefect(
                    "focus rotation numbers not opposite".into(),
                ));
            }
        }
        twisting.push(tup);
    }

    // Only generators acting nontrivially count towards the torus
    // dimensions; zero Hamiltonians are legal inputs.
    let kappa_e = family
        .hamiltonians
        .iter()
        .filter(|h| h.kind == GeneratorKind::Elliptic && h.q.amax() > 1e-12)
        .count();
    let kappa_h = family
        .hamiltonians
        .iter()
        .filter(|h| h.kind == GeneratorKind::Hyperbolic && h.q.amax() > 1e-12)
        .count();
    let report = ClassificationReport {
        n: family.n,
        rank: family.rank,
        williamson: (k_e, k_h, k_f),
        kappa_e,
        kappa_h,
        p_matrix,
        kinds: family.hamiltonians.iter().map(|h| h.kind).collect(),
        twisting,
        orders: family.action.orders.clone(),
        basis: s,
        max_residual,
    };
    // Count bounds.
    if report.kappa_e > k_e + k_f
        || report.kappa_h > k_h + k_f
        || 2 * k_f + k_e + k_h > report.n - report.rank
    {
        return Err(ClassifyError::AssemblyDefect(format!(
            "count bounds violated: κe={} κh={} type=({},{},{}) n-r={}",
            report.kappa_e,
            report.kappa_h,
            k_e,
            k_h,
            k_f,
            report.n - report.rank
        )));
    }
    Ok(report)
}

fn pairing(omega: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u.transpose() * omega * v)[(0, 0)]
}

fn column_of(p: &[Vec<i64>], l: usize) -> Vec<i64> {
    p.iter().map(|row| row[l]).collect()
}

/// The model quadratic form matrix for coefficients `col` in the slot
/// layout (k_f focus quads, k_e elliptic pairs, k_h hyperbolic pairs,
/// trivial padding), interleaved coordinates.
pub fn quadratic_pattern(
    dim: usize,
    k_f: usize,
    k_e: usize,
    k_h: usize,
    kind: GeneratorKind,
    col: &[i64],
) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(dim, dim);
    for j in 0..k_f {
        let base = 4 * j;
        match kind {
            GeneratorKind::Elliptic => {
                let p = col[2 * j] as f64;
                q[(base, base)] = p;
                q[(base + 1, base + 1)] = p;
                q[(base + 2, base + 2)] = -p;
                q[(base + 3, base + 3)] = -p;
            }
            GeneratorKind::Hyperbolic => {
                let p = col[2 * j + 1] as f64;
                q[(base, base + 3)] = p;
                q[(base + 3, base)] = p;
                q[(base + 1, base + 2)] = p;
                q[(base + 2, base + 1)] = p;
            }
        }
    }
    for j in 0..k_e {
        if kind == GeneratorKind::Elliptic {
            let p = col[2 * k_f + j] as f64;
            let base = 4 * k_f + 2 * j;
            q[(base, base)] = p;
            q[(base + 1, base + 1)] = p;
        }
    }
    for j in 0..k_h {
        if kind == GeneratorKind::Hyperbolic {
            let p = col[2 * k_f + k_e + j] as f64;
            let base = 4 * k_f + 2 * k_e + 2 * j;
            q[(base, base + 1)] = p;
            q[(base + 1, base)] = p;
        }
    }
    q
}

/// Full pipeline: decomposition, refinement, assembly.
pub fn classify(family: &LinearFamily) -> Result<ClassificationReport, ClassifyError> {
    let blocks = joint_block_decomposition(family)?;
    let refined = refine_blocks(&blocks, family)?;
    build_normal_basis(&refined, family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::random_symplectic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Q matrix of the model elliptic plane block h = (x²+y²)/2.
    fn q_elliptic_2d() -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }

    /// Q matrix of h = xy.
    fn q_hyperbolic_2d() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    /// Focus-focus pair on interleaved standard R^4 (x1, y1, x2, y2):
    /// f1 = x1 y2 - x2 y1 (elliptic generator), f2 = x1 y1 + x2 y2
    /// (hyperbolic generator).
    fn focus_family() -> LinearFamily {
        let space = SymplecticSpace::standard(2);
        let mut q1 = DMatrix::zeros(4, 4);
        q1[(0, 3)] = 1.0;
        q1[(3, 0)] = 1.0;
        q1[(1, 2)] = -1.0;
        q1[(2, 1)] = -1.0;
        let mut q2 = DMatrix::zeros(4, 4);
        q2[(0, 1)] = 1.0;
        q2[(1, 0)] = 1.0;
        q2[(2, 3)] = 1.0;
        q2[(3, 2)] = 1.0;
        LinearFamily {
            hamiltonians: vec![
                QuadraticHamiltonian::new(space.clone(), q1, GeneratorKind::Elliptic).unwrap(),
                QuadraticHamiltonian::new(space.clone(), q2, GeneratorKind::Hyperbolic).unwrap(),
            ],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 2,
            rank: 0,
        }
    }

    #[test]
    fn focus_pair_single_block() {
        let fam = focus_family();
        let blocks = joint_block_decomposition(&fam).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].basis.ncols(), 4);
        assert_eq!(blocks[0].freqs, vec![1, 1]);
    }

    #[test]
    fn trivial_family_single_trivial_block() {
        let space = SymplecticSpace::standard(2);
        let fam = LinearFamily {
            hamiltonians: vec![QuadraticHamiltonian::new(
                space.clone(),
                DMatrix::zeros(4, 4),
                GeneratorKind::Elliptic,
            )
            .unwrap()],
            action: FiniteSymplecticAction {
                generators: vec![DMatrix::identity(4, 4)],
                orders: vec![1],
            },
            space,
            n: 2,
            rank: 0,
        };
        let blocks = joint_block_decomposition(&fam).unwrap();
        assert_eq!(blocks.len(), 1);
        let refined = refine_blocks(&blocks, &fam).unwrap();
        assert_eq!(refined[0].case, BlockCase::Trivial);
        let report = build_normal_basis(&refined, &fam).unwrap();
        assert_eq!(report.williamson, (0, 0, 0));
    }

    #[test]
    fn direct_sum_splits_into_two_blocks() {
        // Elliptic (e) plus hyperbolic (h) side by side on R^4.
        let space = SymplecticSpace::standard(2);
        let mut q = DMatrix::zeros(4, 4);
        q[(0, 0)] = 1.0;
        q[(1, 1)] = 1.0;
        let mut q2 = DMatrix::zeros(4, 4);
        q2[(2, 3)] = 1.0;
        q2[(3, 2)] = 1.0;
        let fam = LinearFamily {
            hamiltonians: vec![
                QuadraticHamiltonian::new(space.clone(), q, GeneratorKind::Elliptic).unwrap(),
                QuadraticHamiltonian::new(space.clone(), q2, GeneratorKind::Hyperbolic).unwrap(),
            ],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 2,
            rank: 0,
        };
        let blocks = joint_block_decomposition(&fam).unwrap();
        assert_eq!(blocks.len(), 2);
        let mut labels: Vec<(Vec<u32>, usize)> =
            blocks.iter().map(|b| (b.freqs.clone(), b.basis.ncols())).collect();
        labels.sort();
        assert_eq!(labels, vec![(vec![0, 1], 2), (vec![1, 0], 2)]);
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (1, 1, 0));
    }

    #[test]
    fn elliptic_model_identity_basis() {
        let space = SymplecticSpace::standard(1);
        let fam = LinearFamily {
            hamiltonians: vec![QuadraticHamiltonian::new(
                space.clone(),
                q_elliptic_2d(),
                GeneratorKind::Elliptic,
            )
            .unwrap()],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 1,
            rank: 0,
        };
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (1, 0, 0));
        assert_eq!(report.p_matrix, vec![vec![1]]);
        assert!((report.basis.clone() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn hyperbolic_model_report() {
        let space = SymplecticSpace::standard(1);
        let fam = LinearFamily {
            hamiltonians: vec![QuadraticHamiltonian::new(
                space.clone(),
                q_hyperbolic_2d(),
                GeneratorKind::Hyperbolic,
            )
            .unwrap()],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 1,
            rank: 0,
        };
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (0, 1, 0));
        assert_eq!(report.p_matrix.len(), 1);
        assert_eq!(report.p_matrix[0][0].abs(), 1);
        assert_eq!(report.hyperbolic_resonances(), vec![vec![report.p_matrix[0][0]]]);
    }

    #[test]
    fn two_frequency_rotation_family() {
        // A with rotation frequencies 1 and 2 on R^4: two refined blocks
        // distinguished by the coefficient.
        let space = SymplecticSpace::standard(2);
        let mut q = DMatrix::zeros(4, 4);
        q[(0, 0)] = 1.0;
        q[(1, 1)] = 1.0;
        q[(2, 2)] = 2.0;
        q[(3, 3)] = 2.0;
        let fam = LinearFamily {
            hamiltonians: vec![
                QuadraticHamiltonian::new(space.clone(), q, GeneratorKind::Elliptic).unwrap(),
            ],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 2,
            rank: 0,
        };
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (2, 0, 0));
        assert_eq!(report.p_matrix, vec![vec![1], vec![2]]);
        // One elliptic generator with resonance vector (1 : 2).
        assert_eq!(report.elliptic_resonances(), vec![vec![1, 2]]);
    }

    #[test]
    fn focus_model_report() {
        let fam = focus_family();
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (0, 0, 1));
        assert_eq!(report.kappa_e, 1);
        assert_eq!(report.kappa_h, 1);
        // Elliptic rows read (p, -p); hyperbolic doubled.
        let er = report.elliptic_resonances();
        assert_eq!(er.len(), 1);
        assert_eq!(er[0][0], -er[0][1]);
        assert_eq!(er[0][0].abs(), 1);
        let hr = report.hyperbolic_resonances();
        assert_eq!(hr.len(), 1);
        assert_eq!(hr[0][0], hr[0][1]);
        assert_eq!(hr[0][0].abs(), 1);
    }

    #[test]
    fn conjugation_invariance_focus() {
        let fam = focus_family();
        let base = classify(&fam).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let p = random_symplectic(&fam.space, &mut rng, 0.6);
            let conj = LinearFamily {
                hamiltonians: fam
                    .hamiltonians
                    .iter()
                    .map(|h| {
                        QuadraticHamiltonian::new(
                            fam.space.clone(),
                            p.transpose() * &h.q * &p,
                            h.kind,
                        )
                        .unwrap()
                    })
                    .collect(),
                action: FiniteSymplecticAction::trivial(),
                space: fam.space.clone(),
                n: 2,
                rank: 0,
            };
            let report = classify(&conj).unwrap();
            assert_eq!(report.williamson, base.williamson);
            let defect = (report.basis.transpose() * &fam.space.form * &report.basis
                - crate::symplectic::standard_form(4))
            .amax();
            assert!(defect < 1e-10, "defect {defect}");
        }
    }

    #[test]
    fn twisting_rotation_block() {
        // Pure finite rotation by 2π/5 on the plane: twisting 1/5 mod 1.
        let space = SymplecticSpace::standard(1);
        let th = 2.0 * std::f64::consts::PI / 5.0;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let fam = LinearFamily {
            hamiltonians: vec![],
            action: FiniteSymplecticAction { generators: vec![rot], orders: vec![5] },
            space,
            n: 2,
            rank: 1,
        };
        let report = classify(&fam).unwrap();
        assert_eq!(report.williamson, (1, 0, 0));
        assert_eq!(report.twisting, vec![vec![Frac::new(1, 5)]]);
    }

    #[test]
    fn rejects_noncommuting() {
        let space = SymplecticSpace::standard(1);
        let q1 = q_elliptic_2d();
        let q2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let fam = LinearFamily {
            hamiltonians: vec![
                QuadraticHamiltonian::new(space.clone(), q1, GeneratorKind::Elliptic).unwrap(),
                QuadraticHamiltonian::new(space.clone(), q2, GeneratorKind::Hyperbolic).unwrap(),
            ],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 1,
            rank: 0,
        };
        assert!(matches!(classify(&fam), Err(ClassifyError::NonCommuting(_))));
    }

    #[test]
    fn rejects_offlattice_spectrum() {
        let space = SymplecticSpace::standard(1);
        let q = DMatrix::identity(2, 2) * 1.5;
        let fam = LinearFamily {
            hamiltonians: vec![
                QuadraticHamiltonian::new(space.clone(), q, GeneratorKind::Elliptic).unwrap(),
            ],
            action: FiniteSymplecticAction::trivial(),
            space,
            n: 1,
            rank: 0,
        };
        assert!(matches!(classify(&fam), Err(ClassifyError::NonResonantSpectrum(_))));
    }

}
