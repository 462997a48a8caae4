//! JSON wire formats: the system descriptor consumed by every command, and
//! the serialized classification report. Floats print with 17 significant
//! digits so reruns are byte-identical.

use crate::classify::{ClassificationReport, LinearFamily};
use crate::dynamics::{OmegaField, PhaseSpace, PolynomialSystem};
use crate::exact::Frac;
use crate::poly::{parse_hamiltonian, ComplexAlias};
use crate::resonance::CanonicalInvariants;
use crate::symplectic::{
    FiniteSymplecticAction, GeneratorKind, QuadraticHamiltonian, SymplecticSpace,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Parse(#[from] crate::poly::ParseError),
    #[error(transparent)]
    Symplectic(#[from] crate::symplectic::SymplecticError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Symplectic structure in the wire format.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaDescriptor {
    Standard,
    Matrix(Vec<Vec<f64>>),
    Parabolic { alpha: String, p: String, q: String, r: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegralDescriptor {
    pub text: String,
    #[serde(default = "default_kind")]
    pub kind: String,
}

fn default_kind() -> String {
    "elliptic".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaDescriptor {
    pub matrix: Vec<Vec<f64>>,
    pub order: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AliasDescriptor {
    pub alias: String,
    pub x: String,
    pub y: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FlagsDescriptor {
    #[serde(default)]
    pub homologically_symmetric: bool,
    #[serde(default)]
    pub incomplete_flow: bool,
    #[serde(default)]
    pub negative_witness: bool,
    #[serde(default)]
    pub complexified: bool,
}

/// System wire format: dimension, form, variables, integrals, finite
/// generators and metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub dim: usize,
    pub omega: OmegaDescriptor,
    pub variables: Vec<String>,
    #[serde(default)]
    pub complex_aliases: Vec<AliasDescriptor>,
    pub integrals: Vec<IntegralDescriptor>,
    #[serde(default)]
    pub gamma: Vec<GammaDescriptor>,
    #[serde(default)]
    pub rank: usize,
    /// Half-width of the reference domain box.
    #[serde(default = "default_box")]
    pub domain_box: f64,
    #[serde(default)]
    pub angle_coords: Vec<usize>,
    #[serde(default)]
    pub flags: FlagsDescriptor,
}

fn default_box() -> f64 {
    0.5
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, DescriptorError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(DescriptorError::Schema("ragged matrix rows".into()));
    }
    let mut m = DMatrix::zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

impl SystemDescriptor {
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(DescriptorError::Schema("dim must be even and positive".into()));
        }
        if self.variables.len() != self.dim {
            return Err(DescriptorError::Schema(format!(
                "expected {} variables, found {}",
                self.dim,
                self.variables.len()
            )));
        }
        for al in &self.complex_aliases {
            for v in [&al.x, &al.y] {
                if !self.variables.contains(v) {
                    return Err(DescriptorError::Schema(format!(
                        "alias '{}' references undeclared variable '{v}'",
                        al.alias
                    )));
                }
            }
        }
        if 2 * self.integrals.len() != self.dim {
            return Err(DescriptorError::Schema(format!(
                "expected {} integrals for dim {}, found {}",
                self.dim / 2,
                self.dim,
                self.integrals.len()
            )));
        }
        for g in &self.gamma {
            if g.matrix.len() != self.dim || g.order == 0 {
                return Err(DescriptorError::Schema(
                    "gamma generator dimension/order invalid".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_system(&self) -> Result<PolynomialSystem, DescriptorError> {
        self.validate()?;
        let aliases: Vec<ComplexAlias> = self
            .complex_aliases
            .iter()
            .map(|a| ComplexAlias { alias: a.alias.clone(), xvar: a.x.clone(), yvar: a.y.clone() })
            .collect();
        let omega = match &self.omega {
            OmegaDescriptor::Standard => {
                OmegaField::Constant(crate::symplectic::standard_form(self.dim))
            }
            OmegaDescriptor::Matrix(rows) => {
                let m = rows_to_matrix(rows)?;
                SymplecticSpace::from_form(m.clone())?;
                OmegaField::Constant(m)
            }
            OmegaDescriptor::Parabolic { alpha, p, q, r } => {
                if self.dim != 4 {
                    return Err(DescriptorError::Schema(
                        "parabolic form requires dim = 4".into(),
                    ));
                }
                let parse = |t: &str| parse_hamiltonian(t, &self.variables, &aliases);
                let (alpha, p, q, r) = (parse(alpha)?, parse(p)?, parse(q)?, parse(r)?);
                let div = crate::dynamics::parabolic_divergence(&p, &q, &r);
                if !div.is_zero() {
                    return Err(DescriptorError::Schema(
                        "parabolic form data (P, Q, R) is not divergence-free".into(),
                    ));
                }
                OmegaField::Parabolic { alpha, p, q, r }
            }
        };
        let components = self
            .integrals
            .iter()
            .map(|it| parse_hamiltonian(&it.text, &self.variables, &aliases))
            .collect::<Result<Vec<_>, _>>()?;
        let mut angle_coords = self.angle_coords.clone();
        if matches!(self.omega, OmegaDescriptor::Parabolic { .. }) && angle_coords.is_empty() {
            angle_coords = vec![1];
        }
        Ok(PolynomialSystem {
            space: PhaseSpace { vars: self.variables.clone(), omega, angle_coords },
            components,
            complexified: self.flags.complexified,
        })
    }

    pub fn kinds(&self) -> Result<Vec<GeneratorKind>, DescriptorError> {
        self.integrals
            .iter()
            .map(|it| match it.kind.as_str() {
                "elliptic" => Ok(GeneratorKind::Elliptic),
                "hyperbolic" => Ok(GeneratorKind::Hyperbolic),
                other => Err(DescriptorError::Schema(format!("unknown kind '{other}'"))),
            })
            .collect()
    }

    pub fn finite_action(&self) -> Result<FiniteSymplecticAction, DescriptorError> {
        let mut generators = Vec::with_capacity(self.gamma.len());
        let mut orders = Vec::with_capacity(self.gamma.len());
        for g in &self.gamma {
            generators.push(rows_to_matrix(&g.matrix)?);
            orders.push(g.order);
        }
        Ok(FiniteSymplecticAction { generators, orders })
    }

    /// Linearized classification data at a fixed point (the origin unless
    /// an expansion point is given): quadratic parts of the integrals that
    /// act transversely, plus the finite generators.
    pub fn to_linear_family(
        &self,
        expansion_point: Option<&[f64]>,
    ) -> Result<LinearFamily, DescriptorError> {
        let system = self.to_system()?;
        let space = system.space.to_symplectic_space().ok_or_else(|| {
            DescriptorError::Schema("classification requires a constant form".into())
        })?;
        let kinds = self.kinds()?;
        let point = expansion_point
            .map(|p| p.to_vec())
            .unwrap_or_else(|| vec![0.0; self.dim]);
        if point.len() != self.dim {
            return Err(DescriptorError::Schema("expansion point arity".into()));
        }
        let mut hams = Vec::new();
        for (f, kind) in system.components.iter().zip(kinds) {
            let h = crate::dynamics::hessian_at(f, &point);
            if h.amax() < 1e-12 {
                continue;
            }
            hams.push(QuadraticHamiltonian::new(space.clone(), h, kind)?);
        }
        Ok(LinearFamily {
            hamiltonians: hams,
            action: self.finite_action()?,
            space,
            n: self.dim / 2,
            rank: self.rank,
        })
    }
}

/// Serialized classification report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportJson {
    pub n: usize,
    pub rank: usize,
    pub williamson: [usize; 3],
    pub kappa_e: usize,
    pub kappa_h: usize,
    pub p_matrix: Vec<Vec<i64>>,
    pub twisting: Vec<Vec<Frac>>,
    pub orders: Vec<u32>,
    pub elliptic_resonances: Vec<Vec<i64>>,
    pub hyperbolic_resonances: Vec<Vec<i64>>,
    pub canonical: CanonicalJson,
    pub basis: Vec<Vec<f64>>,
    pub max_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CanonicalJson {
    pub elliptic: Vec<Vec<i64>>,
    pub hyperbolic: Vec<Vec<i64>>,
    pub twisting: Vec<Vec<Frac>>,
}

impl ReportJson {
    pub fn from_report(
        report: &ClassificationReport,
        canonical: &CanonicalInvariants,
    ) -> ReportJson {
        ReportJson {
            n: report.n,
            rank: report.rank,
            williamson: [report.williamson.0, report.williamson.1, report.williamson.2],
            kappa_e: report.kappa_e,
            kappa_h: report.kappa_h,
            p_matrix: report.p_matrix.clone(),
            twisting: report.twisting.clone(),
            orders: report.orders.clone(),
            elliptic_resonances: report.elliptic_resonances(),
            hyperbolic_resonances: report.hyperbolic_resonances(),
            canonical: CanonicalJson {
                elliptic: canonical.elliptic.clone(),
                hyperbolic: canonical.hyperbolic.clone(),
                twisting: canonical.twisting.clone(),
            },
            basis: matrix_to_rows(&report.basis),
            max_residual: report.max_residual,
        }
    }
}

/// Wire form of a zoo entry's system (the `zoo emit` output).
pub fn descriptor_for_system(
    system: &PolynomialSystem,
    kinds: &[GeneratorKind],
    gamma: &FiniteSymplecticAction,
    rank: usize,
    flags: FlagsDescriptor,
) -> SystemDescriptor {
    let omega = match &system.space.omega {
        OmegaField::Constant(m) => {
            if system.space.to_symplectic_space().map(|s| s.is_standard()).unwrap_or(false) {
                OmegaDescriptor::Standard
            } else {
                OmegaDescriptor::Matrix(matrix_to_rows(m))
            }
        }
        OmegaField::Parabolic { alpha, p, q, r } => OmegaDescriptor::Parabolic {
            alpha: format!("{alpha}"),
            p: format!("{p}"),
            q: format!("{q}"),
            r: format!("{r}"),
        },
    };
    SystemDescriptor {
        dim: system.space.dim(),
        omega,
        variables: system.space.vars.clone(),
        complex_aliases: vec![],
        integrals: system
            .components
            .iter()
            .zip(kinds.iter().chain(std::iter::repeat(&GeneratorKind::Elliptic)))
            .map(|(f, k)| IntegralDescriptor {
                text: format!("{f}"),
                kind: match k {
                    GeneratorKind::Elliptic => "elliptic".into(),
                    GeneratorKind::Hyperbolic => "hyperbolic".into(),
                },
            })
            .collect(),
        gamma: gamma
            .generators
            .iter()
            .zip(&gamma.orders)
            .map(|(m, &order)| GammaDescriptor { matrix: matrix_to_rows(m), order })
            .collect(),
        rank,
        domain_box: 0.5,
        angle_coords: system.space.angle_coords.clone(),
        flags,
    }
}

/// Deterministic float formatting with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        let desc = SystemDescriptor {
            dim: 2,
            omega: OmegaDescriptor::Standard,
            variables: vec!["p".into(), "q".into()],
            complex_aliases: vec![],
            integrals: vec![IntegralDescriptor {
                text: "(p^2 + q^2)/2".into(),
                kind: "elliptic".into(),
            }],
            gamma: vec![],
            rank: 0,
            domain_box: 0.5,
            angle_coords: vec![],
            flags: FlagsDescriptor::default(),
        };
        let text = serde_json::to_string_pretty(&desc).unwrap();
        let back: SystemDescriptor = serde_json::from_str(&text).unwrap();
        let sys = back.to_system().unwrap();
        assert_eq!(sys.n(), 1);
        let fam = back.to_linear_family(None).unwrap();
        let report = crate::classify::classify(&fam).unwrap();
        assert_eq!(report.williamson, (1, 0, 0));
    }

    #[test]
    fn schema_errors_are_reported() {
        let mut desc = SystemDescriptor {
            dim: 2,
            omega: OmegaDescriptor::Standard,
            variables: vec!["p".into()],
            complex_aliases: vec![],
            integrals: vec![],
            gamma: vec![],
            rank: 0,
            domain_box: 0.5,
            angle_coords: vec![],
            flags: FlagsDescriptor::default(),
        };
        assert!(desc.validate().is_err());
        desc.variables = vec!["p".into(), "q".into()];
        assert!(desc.validate().is_err(), "integral count");
    }

    #[test]
    fn zoo_emit_reproduces_report() {
        let entry = crate::zoo::zoo("hopf-resonance", &crate::zoo::ZooParams::default()).unwrap();
        let fam = entry.linear_family.as_ref().unwrap();
        let kinds: Vec<_> = fam.hamiltonians.iter().map(|h| h.kind).collect();
        let desc = descriptor_for_system(
            &entry.system,
            &kinds,
            &crate::symplectic::FiniteSymplecticAction::trivial(),
            fam.rank,
            FlagsDescriptor::default(),
        );
        let text = serde_json::to_string(&desc).unwrap();
        let back: SystemDescriptor = serde_json::from_str(&text).unwrap();
        let sys = back.to_system().unwrap();
        let rep = crate::dynamics::verify_commuting(&sys, 1000).unwrap();
        assert!(rep.max_residual <= 1e-8);
    }
}
