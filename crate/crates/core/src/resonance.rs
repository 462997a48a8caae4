//! Exact-rational canonical forms for resonance data: unimodular-orbit
//! representatives via lattice saturation + Hermite normal form, and the
//! distinguished coset representative for twisting residues.

use crate::classify::ClassificationReport;
use crate::exact::{hnf, row_saturation_hnf, Frac, IntMat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error("resonance rows are rationally dependent (rank {rank} < rows {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("malformed input: {0}")]
    Malformed(String),
}

/// Resonance data of a linear model, prior to canonicalization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceData {
    /// κ_e integer vectors of length 2 k_f + k_e.
    pub elliptic: Vec<Vec<i64>>,
    /// κ_h integer vectors of length 2 k_f + k_h.
    pub hyperbolic: Vec<Vec<i64>>,
    /// r residue tuples of length n - r, entries mod 1.
    pub twisting: Vec<Vec<Frac>>,
    /// Elliptic vectors zero-extended to length n - r.
    pub extended_elliptic: Vec<Vec<i64>>,
    /// Declared orders of the finite generators.
    pub orders: Vec<u32>,
}

impl ResonanceData {
    pub fn from_report(report: &ClassificationReport) -> Self {
        ResonanceData {
            elliptic: report.elliptic_resonances(),
            hyperbolic: report.hyperbolic_resonances(),
            twisting: report.twisting.clone(),
            extended_elliptic: report.extended_elliptic(),
            orders: report.orders.clone(),
        }
    }
}

/// Canonical representative of an integer row family under replacement by
/// integer linear combinations with nondegenerate coefficient matrix: the
/// Hermite normal form of the saturation of the row lattice.
pub fn canonicalize_elliptic(vectors: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, ResonanceError> {
    canonicalize_rows(vectors)
}

/// Same canonical form for the hyperbolic rows.
pub fn canonicalize_hyperbolic(vectors: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, ResonanceError> {
    canonicalize_rows(vectors)
}

fn canonicalize_rows(vectors: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, ResonanceError> {
    if vectors.is_empty() {
        return Ok(vec![]);
    }
    let cols = vectors[0].len();
    if vectors.iter().any(|r| r.len() != cols) {
        return Err(ResonanceError::Malformed("ragged rows".into()));
    }
    let m = IntMat::from_rows(vectors);
    let sat = row_saturation_hnf(&m);
    if sat.rows < vectors.len() {
        return Err(ResonanceError::RankDeficient { rank: sat.rows, rows: vectors.len() });
    }
    // Keep only the rank-many saturation rows intersected with the span:
    // saturation of a full-row-rank family has exactly that many rows.
    Ok(hnf(sat).to_rows_i64())
}

/// Distinguished coset representative for the twisting residues: per
/// generator, minimize lexicographically over all admissible shifts by
/// rational multiples (denominator N_a) of the extended elliptic vectors.
pub fn canonicalize_twisting(
    residues: &[Vec<Frac>],
    extended_elliptic: &[Vec<i64>],
    orders: &[u32],
) -> Result<Vec<Vec<Frac>>, ResonanceError> {
    if residues.len() != orders.len() {
        return Err(ResonanceError::Malformed("one order per residue row required".into()));
    }
    if residues.is_empty() {
        return Ok(vec![]);
    }
    let m = residues[0].len();
    if residues.iter().any(|r| r.len() != m)
        || extended_elliptic.iter().any(|r| r.len() != m)
    {
        return Err(ResonanceError::Malformed("tuple length mismatch".into()));
    }
    let mut out = Vec::with_capacity(residues.len());
    for (row, &order) in residues.iter().zip(orders) {
        let n = order.max(1) as i64;
        let ke = extended_elliptic.len();
        let mut best: Vec<Frac> = row.iter().map(|q| q.mod1()).collect();
        // Enumerate coefficient tuples in {0..N-1}^κe.
        let mut idx = vec![0i64; ke];
        loop {
            let mut cand: Vec<Frac> = row.iter().map(|q| q.mod1()).collect();
            for (l, &c) in idx.iter().enumerate() {
                if c != 0 {
                    for (j, q) in cand.iter_mut().enumerate() {
                        let shift = Frac::new(c * extended_elliptic[l][j], n);
                        *q = (*q + shift).mod1();
                    }
                }
            }
            if cand < best {
                best = cand;
            }
            // Advance the odometer.
            let mut carry = true;
            for d in idx.iter_mut() {
                *d += 1;
                if *d < n {
                    carry = false;
                    break;
                }
                *d = 0;
            }
            if carry || ke == 0 {
                break;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Canonicalized invariants of a report, directly comparable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalInvariants {
    pub n: usize,
    pub rank: usize,
    pub williamson: (usize, usize, usize),
    pub elliptic: Vec<Vec<i64>>,
    pub hyperbolic: Vec<Vec<i64>>,
    pub twisting: Vec<Vec<Frac>>,
    pub orders: Vec<u32>,
}

pub fn canonical_invariants(
    report: &ClassificationReport,
) -> Result<CanonicalInvariants, ResonanceError> {
    let data = ResonanceData::from_report(report);
    Ok(CanonicalInvariants {
        n: report.n,
        rank: report.rank,
        williamson: report.williamson,
        elliptic: canonicalize_elliptic(&data.elliptic)?,
        hyperbolic: canonicalize_hyperbolic(&data.hyperbolic)?,
        twisting: canonicalize_twisting(&data.twisting, &data.extended_elliptic, &data.orders)?,
        orders: data.orders,
    })
}

/// Whether two reports describe the same linear model: dimensions, ranks,
/// Williamson types and all canonicalized resonance data coincide exactly.
pub fn models_equivalent(
    a: &ClassificationReport,
    b: &ClassificationReport,
) -> Result<bool, ResonanceError> {
    Ok(canonical_invariants(a)? == canonical_invariants(b)?)
}

/// Variant quotienting additionally by re-ordering of the basic cycles
/// (an ambiguity the construction leaves open); off by default in
/// `models_equivalent`.
pub fn models_equivalent_up_to_cycle_order(
    a: &ClassificationReport,
    b: &ClassificationReport,
) -> Result<bool, ResonanceError> {
    let mut ca = canonical_invariants(a)?;
    let mut cb = canonical_invariants(b)?;
    let sort_rows = |inv: &mut CanonicalInvariants| {
        let mut rows: Vec<(Vec<Frac>, u32)> =
            inv.twisting.iter().cloned().zip(inv.orders.iter().cloned()).collect();
        rows.sort();
        inv.twisting = rows.iter().map(|(r, _)| r.clone()).collect();
        inv.orders = rows.iter().map(|(_, o)| *o).collect();
    };
    sort_rows(&mut ca);
    sort_rows(&mut cb);
    Ok(ca == cb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_gcd() {
        assert_eq!(canonicalize_elliptic(&[vec![2, 4]]).unwrap(), vec![vec![1, 2]]);
        assert_eq!(canonicalize_hyperbolic(&[vec![1, 1]]).unwrap(), vec![vec![1, 1]]);
        assert_eq!(canonicalize_hyperbolic(&[vec![3, 3]]).unwrap(), vec![vec![1, 1]]);
        assert_eq!(canonicalize_elliptic(&[vec![0, 1]]).unwrap(), vec![vec![0, 1]]);
        assert_eq!(canonicalize_elliptic(&[vec![-1, 1]]).unwrap(), vec![vec![1, -1]]);
    }

    #[test]
    fn identity_rows_fixed() {
        let rows = vec![vec![1, 0], vec![0, 1]];
        assert_eq!(canonicalize_elliptic(&rows).unwrap(), rows);
    }

    #[test]
    fn rank_deficient_rejected() {
        assert!(matches!(
            canonicalize_elliptic(&[vec![1, 2], vec![2, 4]]),
            Err(ResonanceError::RankDeficient { .. })
        ));
    }

    /// Brute-force oracle: all primitive integer vectors with small entries
    /// lying in the rational row span, reduced by a naive textbook HNF.
    fn oracle_canonical(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let cols = rows[0].len();
        let bound = 12i64;
        let in_span = |v: &[i64]| -> bool {
            // Solve v = x * rows over rationals by Gaussian elimination on
            // the transposed system with f64 and verify integrally.
            let r = rows.len();
            let mut aug: Vec<Vec<f64>> = (0..cols)
                .map(|j| {
                    let mut row: Vec<f64> = (0..r).map(|i| rows[i][j] as f64).collect();
                    row.push(v[j] as f64);
                    row
                })
                .collect();
            let mut rank_cols = Vec::new();
            let mut piv = 0;
            for c in 0..r {
                let mut best = piv;
                for i in piv..cols {
                    if aug[i][c].abs() > aug[best][c].abs() {
                        best = i;
                    }
                }
                if aug[best][c].abs() < 1e-9 {
                    continue;
                }
                aug.swap(piv, best);
                let d = aug[piv][c];
                for j in 0..=r {
                    aug[piv][j] /= d;
                }
                for i in 0..cols {
                    if i != piv && aug[i][c].abs() > 1e-12 {
                        let f = aug[i][c];
                        for j in 0..=r {
                            aug[i][j] -= f * aug[piv][j];
                        }
                    }
                }
                rank_cols.push(c);
                piv += 1;
            }
            // Consistent iff no pivot in the last column.
            for row in aug.iter().skip(piv) {
                if row[r].abs() > 1e-6 {
                    return false;
                }
            }
            true
        };
        let mut lattice_rows: Vec<Vec<i64>> = Vec::new();
        let mut v = vec![-bound; cols];
        'enumerate: loop {
            if v.iter().any(|&x| x != 0) && in_span(&v) {
                lattice_rows.push(v.clone());
            }
            for d in v.iter_mut() {
                *d += 1;
                if *d <= bound {
                    continue 'enumerate;
                }
                *d = -bound;
            }
            break;
        }
        hnf(IntMat::from_rows(&lattice_rows)).to_rows_i64()
    }

    #[test]
    fn two_row_cases_match_oracle() {
        for rows in [
            vec![vec![2, 3], vec![4, 5]],
            vec![vec![2, 4], vec![0, 6]],
            vec![vec![2, 1, 1], vec![0, 3, 3]],
            vec![vec![1, -1], vec![1, 1]],
        ] {
            let got = canonicalize_elliptic(&rows).unwrap();
            let want = oracle_canonical(&rows);
            assert_eq!(got, want, "rows {rows:?}");
        }
    }

    #[test]
    fn canonicalizers_idempotent_and_orbit_constant() {
        let rows = vec![vec![2, 3, 1], vec![4, 5, 0]];
        let c1 = canonicalize_elliptic(&rows).unwrap();
        assert_eq!(canonicalize_elliptic(&c1).unwrap(), c1);
        // Unimodular mixes do not change the canonical form.
        for (a, b, c, d) in [(1i64, 1, 0, 1), (2, 1, 1, 1), (1, 0, 3, 1), (5, 2, 2, 1)] {
            let mixed: Vec<Vec<i64>> = vec![
                (0..3).map(|j| a * rows[0][j] + b * rows[1][j]).collect(),
                (0..3).map(|j| c * rows[0][j] + d * rows[1][j]).collect(),
            ];
            assert_eq!(canonicalize_elliptic(&mixed).unwrap(), c1);
        }
        // Nondegenerate (not unimodular) mixes land in the same class too.
        let scaled: Vec<Vec<i64>> =
            vec![rows[0].iter().map(|&x| 3 * x).collect(), rows[1].clone()];
        assert_eq!(canonicalize_elliptic(&scaled).unwrap(), c1);
    }

    #[test]
    fn twisting_coset_example() {
        // residues (1/3, 2/3), extension (1, 0), N = 3: shifts of the first
        // slot by {0, 1/3, 2/3}; lexicographic minimum is (0, 2/3).
        let out = canonicalize_twisting(
            &[vec![Frac::new(1, 3), Frac::new(2, 3)]],
            &[vec![1, 0]],
            &[3],
        )
        .unwrap();
        assert_eq!(out, vec![vec![Frac::zero(), Frac::new(2, 3)]]);
    }

    #[test]
    fn twisting_zero_fixed() {
        let out = canonicalize_twisting(
            &[vec![Frac::zero(), Frac::zero()]],
            &[vec![1, 2]],
            &[4],
        )
        .unwrap();
        assert_eq!(out, vec![vec![Frac::zero(), Frac::zero()]]);
    }

    #[test]
    fn twisting_orbit_invariance() {
        // Adding an admissible shift before canonicalization cannot change
        // the canonical representative.
        let ext = vec![vec![1, 2]];
        let orders = [6u32];
        let base = vec![vec![Frac::new(1, 6), Frac::new(5, 6)]];
        let c0 = canonicalize_twisting(&base, &ext, &orders).unwrap();
        for k in 0..6i64 {
            let shifted: Vec<Vec<Frac>> = vec![vec![
                (base[0][0] + Frac::new(k, 6)).mod1(),
                (base[0][1] + Frac::new(2 * k, 6)).mod1(),
            ]];
            assert_eq!(canonicalize_twisting(&shifted, &ext, &orders).unwrap(), c0);
        }
    }
}
