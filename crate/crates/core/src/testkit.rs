//! Generators for randomized experiment suites: diagonal linear models with
//! known discrete data, and their symplectic conjugates.

use crate::classify::{quadratic_pattern, LinearFamily};
use crate::exact::Frac;
use crate::symplectic::{
    FiniteSymplecticAction, GeneratorKind, QuadraticHamiltonian, SymplecticSpace,
};
use nalgebra::DMatrix;
use rand::Rng;

/// A constructed diagonal model together with its defining data.
#[derive(Clone, Debug)]
pub struct DiagonalModel {
    pub family: LinearFamily,
    pub k_e: usize,
    pub k_h: usize,
    pub k_f: usize,
}

fn rotation_block(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

/// Random diagonal model on R^{2n}, n <= max_n: slot plan (focus, elliptic,
/// hyperbolic, trivial), integer generator coefficients of full rank, and
/// an optional finite twisting generator; every retained slot is covered by
/// a generator or a nontrivial rotation, so the Williamson type of the
/// model equals the slot plan by construction.
pub fn random_diagonal_model<R: Rng>(rng: &mut R, max_n: usize) -> DiagonalModel {
    loop {
        if let Some(model) = try_random_model(rng, max_n) {
            return model;
        }
    }
}

fn try_random_model<R: Rng>(rng: &mut R, max_n: usize) -> Option<DiagonalModel> {
    let n = rng.gen_range(1..=max_n.max(1));
    let k_f = if n >= 2 && rng.gen_bool(0.3) { 1 } else { 0 };
    let rest = n - 2 * k_f;
    let k_e = if rest > 0 { rng.gen_range(0..=rest) } else { 0 };
    let k_h = if rest - k_e > 0 { rng.gen_range(0..=(rest - k_e)) } else { 0 };
    let slots = 2 * k_f + k_e + k_h;
    let dim = 2 * n;

    // Twisting generator.
    let with_gamma = rng.gen_bool(0.5);
    let order: u32 = if with_gamma { *[2u32, 3, 4, 5, 6].get(rng.gen_range(0..5)).unwrap() } else { 1 };
    // Rotation numerators per pair slot of the final layout (m of 2π m/N);
    // hyperbolic and trivial slots only admit 0 or N/2.
    let mut rot_num: Vec<u32> = Vec::new();
    for j in 0..n {
        let slot_kind = slot_kind(j, k_f, k_e, k_h);
        let m = match slot_kind {
            SlotKind::FocusOdd => rng.gen_range(0..order),
            SlotKind::FocusEven => 0, // filled from the odd partner below
            SlotKind::Elliptic => rng.gen_range(0..order),
            SlotKind::Hyperbolic | SlotKind::Trivial => {
                if order % 2 == 0 && rng.gen_bool(0.4) {
                    order / 2
                } else {
                    0
                }
            }
        };
        rot_num.push(m);
    }
    for j in 0..k_f {
        // Opposite rotation on the partner slot.
        rot_num[2 * j + 1] = (order - rot_num[2 * j] % order) % order;
    }

    // Generator count within the admissible bounds, at least one when any
    // non-focus slot needs covering.
    let kappa_e_max = k_e + k_f;
    let kappa_h_max = k_h + k_f;
    let kappa_e = if kappa_e_max > 0 { rng.gen_range(usize::from(k_f > 0)..=kappa_e_max) } else { 0 };
    let kappa_h =
        if kappa_h_max > 0 { rng.gen_range(usize::from(k_f > 0 || k_h > 0)..=kappa_h_max) } else { 0 };

    // Integer coefficient matrix, columns per generator (elliptic columns
    // on focus-odd + elliptic rows, hyperbolic columns on focus-even +
    // hyperbolic rows).
    let mut p = vec![vec![0i64; kappa_e + kappa_h]; slots];
    for le in 0..kappa_e {
        for j in 0..k_f {
            p[2 * j][le] = rng.gen_range(-3..=3);
        }
        for j in 0..k_e {
            p[2 * k_f + j][le] = rng.gen_range(-3..=3);
        }
    }
    for lh in 0..kappa_h {
        for j in 0..k_f {
            p[2 * j + 1][kappa_e + lh] = rng.gen_range(-3..=3);
        }
        for j in 0..k_h {
            p[2 * k_f + k_e + j][kappa_e + lh] = rng.gen_range(-3..=3);
        }
    }
    // Coverage: each retained slot must be seen by a generator or twisted.
    for j in 0..k_f {
        if kappa_e > 0 && p[2 * j].iter().all(|&v| v == 0) && rot_num[2 * j] == 0 {
            p[2 * j][rng.gen_range(0..kappa_e)] = 1;
        }
        if kappa_h > 0 && p[2 * j + 1].iter().all(|&v| v == 0) {
            p[2 * j + 1][kappa_e + rng.gen_range(0..kappa_h)] = 1;
        }
        if kappa_e == 0 && rot_num[2 * j] == 0 {
            return None;
        }
        if kappa_h == 0 {
            return None;
        }
    }
    for j in 0..k_e {
        let row = 2 * k_f + j;
        let twisted = rot_num[2 * k_f + j] != 0 && 2 * rot_num[2 * k_f + j] != order;
        if p[row].iter().all(|&v| v == 0) && !twisted {
            if kappa_e == 0 {
                return None;
            }
            p[row][rng.gen_range(0..kappa_e)] = 1;
        }
    }
    for j in 0..k_h {
        let row = 2 * k_f + k_e + j;
        if p[row].iter().all(|&v| v == 0) {
            if kappa_h == 0 {
                return None;
            }
            p[row][kappa_e + rng.gen_range(0..kappa_h)] = 1;
        }
    }
    // Full rank over Q.
    if kappa_e + kappa_h > 0 {
        let m = crate::exact::IntMat::from_rows(
            &(0..kappa_e + kappa_h)
                .map(|l| p.iter().map(|row| row[l]).collect::<Vec<i64>>())
                .collect::<Vec<_>>(),
        );
        if crate::exact::row_saturation_hnf(&m).rows < kappa_e + kappa_h {
            return None;
        }
    }

    let space = SymplecticSpace::standard(n);
    let mut hams = Vec::new();
    for le in 0..kappa_e {
        let col: Vec<i64> = p.iter().map(|row| row[le]).collect();
        let q = quadratic_pattern(dim, k_f, k_e, k_h, GeneratorKind::Elliptic, &col);
        hams.push(QuadraticHamiltonian::new(space.clone(), q, GeneratorKind::Elliptic).ok()?);
    }
    for lh in 0..kappa_h {
        let col: Vec<i64> = p.iter().map(|row| row[kappa_e + lh]).collect();
        let q = quadratic_pattern(dim, k_f, k_e, k_h, GeneratorKind::Hyperbolic, &col);
        hams.push(QuadraticHamiltonian::new(space.clone(), q, GeneratorKind::Hyperbolic).ok()?);
    }
    let action = if with_gamma {
        let blocks: Vec<DMatrix<f64>> = (0..n)
            .map(|j| {
                rotation_block(2.0 * std::f64::consts::PI * rot_num[j] as f64 / order as f64)
            })
            .collect();
        let mut m = DMatrix::zeros(dim, dim);
        for (j, b) in blocks.iter().enumerate() {
            m.view_mut((2 * j, 2 * j), (2, 2)).copy_from(b);
        }
        FiniteSymplecticAction { generators: vec![m], orders: vec![order] }
    } else {
        FiniteSymplecticAction::trivial()
    };
    Some(DiagonalModel {
        family: LinearFamily { hamiltonians: hams, action, space, n, rank: 0 },
        k_e,
        k_h,
        k_f,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum SlotKind {
    FocusOdd,
    FocusEven,
    Elliptic,
    Hyperbolic,
    Trivial,
}

fn slot_kind(j: usize, k_f: usize, k_e: usize, k_h: usize) -> SlotKind {
    if j < 2 * k_f {
        if j % 2 == 0 {
            SlotKind::FocusOdd
        } else {
            SlotKind::FocusEven
        }
    } else if j < 2 * k_f + k_e {
        SlotKind::Elliptic
    } else if j < 2 * k_f + k_e + k_h {
        SlotKind::Hyperbolic
    } else {
        SlotKind::Trivial
    }
}

/// Conjugate every operator of the family by a symplectic matrix.
pub fn conjugate_family(family: &LinearFamily, p: &DMatrix<f64>) -> LinearFamily {
    let hams = family
        .hamiltonians
        .iter()
        .map(|h| {
            QuadraticHamiltonian::new(
                family.space.clone(),
                p.transpose() * &h.q * p,
                h.kind,
            )
            .expect("conjugated quadratic stays symmetric")
        })
        .collect();
    let p_inv = p.clone().try_inverse().expect("symplectic matrices invert");
    let action = FiniteSymplecticAction {
        generators: family.action.generators.iter().map(|m| &p_inv * m * p).collect(),
        orders: family.action.orders.clone(),
    };
    LinearFamily {
        hamiltonians: hams,
        action,
        space: family.space.clone(),
        n: family.n,
        rank: family.rank,
    }
}

/// Expected twisting tuple of a diagonal model (per generator, per slot).
pub fn twisting_of_rotations(rot_num: &[u32], order: u32) -> Vec<Frac> {
    rot_num.iter().map(|&m| Frac::new(m as i64, order as i64).mod1()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::classify;
    use crate::resonance::canonical_invariants;
    use crate::symplectic::random_symplectic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conjugated_models_recover_constructed_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..25 {
            let model = random_diagonal_model(&mut rng, 4);
            let base = classify(&model.family)
                .unwrap_or_else(|e| panic!("trial {trial}: base classify: {e}\n{:?}", model));
            assert_eq!(
                base.williamson,
                (model.k_e, model.k_h, model.k_f),
                "trial {trial}: constructed Williamson type"
            );
            let p = random_symplectic(&model.family.space, &mut rng, 0.5);
            let conj = conjugate_family(&model.family, &p);
            let report = classify(&conj)
                .unwrap_or_else(|e| panic!("trial {trial}: conj classify: {e}"));
            assert_eq!(report.williamson, base.williamson, "trial {trial}");
            assert_eq!(
                canonical_invariants(&report).unwrap(),
                canonical_invariants(&base).unwrap(),
                "trial {trial}"
            );
            let defect = (report.basis.transpose() * &model.family.space.form * &report.basis
                - crate::symplectic::standard_form(model.family.space.dim))
            .amax();
            assert!(defect <= 1e-10, "trial {trial}: basis defect {defect}");
        }
    }
}
