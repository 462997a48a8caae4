//! Executable model systems: basic nondegenerate singularities, the
//! negative loop examples, the rank-1 degenerate family, and the table rows
//! of the resonance classification, each bundled with its expected data.

use crate::classify::LinearFamily;
use crate::dynamics::{OmegaField, PhaseSpace, PolynomialSystem};
use crate::exact::Frac;
use crate::poly::{parse_hamiltonian, CNum, ComplexAlias, PolynomialExpr};
use crate::symplectic::{
    FiniteSymplecticAction, GeneratorKind, QuadraticHamiltonian, SymplecticSpace,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown zoo entry '{0}'")]
    UnknownEntry(String),
    #[error("scaling branch unavailable: {0}")]
    BranchUnavailable(String),
    #[error(transparent)]
    Parse(#[from] crate::poly::ParseError),
    #[error(transparent)]
    Symplectic(#[from] crate::symplectic::SymplecticError),
}

/// Parameters accepted by the zoo constructors; unused fields are ignored
/// by entries that do not need them.
#[derive(Clone, Debug)]
pub struct ZooParams {
    pub s: u32,
    pub l: i64,
    pub p: i64,
    pub q: i64,
    /// Quartic coefficient (resonance order 4 only; must have a² ≠ 1).
    pub a: f64,
    /// Sign choice in the (I ± J) coupling of the normally-elliptic /
    /// normally-hyperbolic entries and in the order-2 family.
    pub plus_sign: bool,
    /// Profile of α(λ) in the rank-1 model: false = λ, true = λ + λ².
    pub quadratic_alpha: bool,
}

impl Default for ZooParams {
    fn default() -> Self {
        ZooParams { s: 5, l: 2, p: 1, q: 2, a: 1.0, plus_sign: true, quadratic_alpha: false }
    }
}

/// Expected classification row, transcribed from the reference tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedRow {
    pub n: usize,
    pub r: usize,
    pub kappa_e: usize,
    pub kappa_h: usize,
    pub williamson: (usize, usize, usize),
    /// Canonicalized elliptic resonance rows; empty = "no".
    pub elliptic: Vec<Vec<i64>>,
    pub hyperbolic: Vec<Vec<i64>>,
    /// Canonicalized twisting residues, one row per basic cycle.
    pub twisting: Vec<Vec<Frac>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZooFlags {
    pub homologically_symmetric: bool,
    pub incomplete_flow: bool,
    pub negative_witness: bool,
}

/// Suggested seeds for the action operations on this entry.
#[derive(Clone, Debug)]
pub struct ActionDefaults {
    pub m1: Vec<Complex64>,
    pub coefficients: Vec<Complex64>,
    /// Direction in momentum space for scalar grids.
    pub grid_direction: Vec<f64>,
    pub complexified: bool,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct ZooEntry {
    pub name: String,
    pub params: ZooParams,
    pub system: PolynomialSystem,
    /// Transverse linearized data at the singular orbit, when the entry has
    /// a classification row.
    pub linear_family: Option<LinearFamily>,
    pub expected: Option<ExpectedRow>,
    pub flags: ZooFlags,
    pub action_defaults: Vec<ActionDefaults>,
    /// Finite symplectic generators on the full phase space (covering-space
    /// data of the quotient), for invariance checks.
    pub full_gamma: Vec<(DMatrix<f64>, u32)>,
}

/// All entry names with a one-line description.
pub fn zoo_list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("elliptic-basic", "rank-0 elliptic point, f = (p²+q²)/2"),
        ("hyperbolic-basic", "rank-0 hyperbolic point, f = pq"),
        ("focus-focus-basic", "rank-0 focus-focus pair on R^4"),
        ("cusp-negative", "cusp fiber (v³, -v²): exact dual forms, no circle action"),
        ("hyperelliptic-negative", "genus-2 fiber with a far periodic orbit"),
        ("parabolic-model", "rank-1 degenerate model with form dα(λ)∧dφ + π*ω"),
        ("parabolic-resonance", "rank-1 orbit with twisting l/s (table row a)"),
        ("hopf-resonance", "elliptic Hopf bifurcation, resonance p:q (row b)"),
        ("elliptic-parabolic-resonance", "normally-elliptic rank-1 orbit (row c)"),
        ("swallowtail", "rank-2 swallow-tail with twisting l/5 (row d)"),
        ("hyperbolic-hopf", "hyperbolic Hopf bifurcation, resonance 1:1"),
        ("hyperbolic-parabolic-resonance", "normally-hyperbolic rank-1 orbit"),
    ]
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn rotation2(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        m.view_mut((at, at), (k, k)).copy_from(b);
        at += k;
    }
    m
}

fn q_elliptic_pair(dim: usize, pair: usize, coef: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(dim, dim);
    q[(2 * pair, 2 * pair)] = coef;
    q[(2 * pair + 1, 2 * pair + 1)] = coef;
    q
}

fn q_hyperbolic_pair(dim: usize, pair: usize, coef: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(dim, dim);
    q[(2 * pair, 2 * pair + 1)] = coef;
    q[(2 * pair + 1, 2 * pair)] = coef;
    q
}

fn check(cond: bool, msg: &str) -> Result<(), ZooError> {
    if cond {
        Ok(())
    } else {
        Err(ZooError::InvalidParams(msg.to_string()))
    }
}

fn gcd64(a: i64, b: i64) -> i64 {
    num_integer::Integer::gcd(&a, &b)
}

/// The one-parameter resonance-order family f_{a,λ,s}(x, y) as text.
pub fn resonance_family_text(s: u32, a: f64, plus_sign: bool) -> String {
    match s {
        1 => "x^2 + y^3 + l*y".to_string(),
        2 => {
            if plus_sign {
                "x^2 + y^4 + l*y^2".to_string()
            } else {
                "x^2 - y^4 + l*y^2".to_string()
            }
        }
        3 => "re(z^3) + l*abs2(z)".to_string(),
        4 => format!("re(z^4) + {a}*abs2(z)^2 + l*abs2(z)"),
        _ => {
            if (a - 1.0).abs() < 1e-15 {
                format!("re(z^{s}) + abs2(z)^2 + l*abs2(z)")
            } else {
                format!("re(z^{s}) + {a}*abs2(z)^2 + l*abs2(z)")
            }
        }
    }
}

/// Construct a zoo entry by name.
pub fn zoo(name: &str, params: &ZooParams) -> Result<ZooEntry, ZooError> {
    match name {
        "elliptic-basic" => elliptic_basic(params),
        "hyperbolic-basic" => hyperbolic_basic(params),
        "focus-focus-basic" => focus_focus_basic(params),
        "cusp-negative" => cusp_negative(params),
        "hyperelliptic-negative" => hyperelliptic_negative(params),
        "parabolic-model" => parabolic_model(params),
        "parabolic-resonance" => parabolic_resonance(params),
        "hopf-resonance" => hopf_resonance(params),
        "elliptic-parabolic-resonance" => elliptic_parabolic(params),
        "swallowtail" => swallowtail(params),
        "hyperbolic-hopf" => hyperbolic_hopf(params),
        "hyperbolic-parabolic-resonance" => hyperbolic_parabolic(params),
        other => Err(ZooError::UnknownEntry(other.to_string())),
    }
}

fn elliptic_basic(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let v = names(&["p", "q"]);
    let f1 = parse_hamiltonian("(p^2 + q^2)/2", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![f1],
        complexified: false,
    };
    let space = SymplecticSpace::standard(1);
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            DMatrix::identity(2, 2),
            GeneratorKind::Elliptic,
        )?],
        action: FiniteSymplecticAction::trivial(),
        space,
        n: 1,
        rank: 0,
    };
    Ok(ZooEntry {
        name: "elliptic-basic".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 1,
            r: 0,
            kappa_e: 1,
            kappa_h: 0,
            williamson: (1, 0, 0),
            elliptic: vec![vec![1]],
            hyperbolic: vec![],
            twisting: vec![],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![ActionDefaults {
            m1: vec![c(0.65), c(0.0)],
            coefficients: vec![c(1.0)],
            grid_direction: vec![1.0],
            complexified: false,
            label: "I".into(),
        }],
        full_gamma: vec![],
    })
}

fn hyperbolic_basic(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let v = names(&["p", "q"]);
    let f1 = parse_hamiltonian("p*q", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![f1],
        complexified: true,
    };
    let space = SymplecticSpace::standard(1);
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            q_hyperbolic_pair(2, 0, 1.0),
            GeneratorKind::Hyperbolic,
        )?],
        action: FiniteSymplecticAction::trivial(),
        space,
        n: 1,
        rank: 0,
    };
    Ok(ZooEntry {
        name: "hyperbolic-basic".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 1,
            r: 0,
            kappa_e: 0,
            kappa_h: 1,
            williamson: (0, 1, 0),
            elliptic: vec![],
            hyperbolic: vec![vec![1]],
            twisting: vec![],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![ActionDefaults {
            m1: vec![c(0.1), c(0.0)],
            coefficients: vec![Complex64::new(0.0, 1.0)],
            grid_direction: vec![1.0],
            complexified: true,
            label: "iI".into(),
        }],
        full_gamma: vec![],
    })
}

fn focus_focus_basic(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let v = names(&["p1", "q1", "p2", "q2"]);
    let f1 = parse_hamiltonian("p1*q2 - p2*q1", &v, &[])?;
    let f2 = parse_hamiltonian("p1*q1 + p2*q2", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![f1, f2],
        complexified: false,
    };
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
    let family = LinearFamily {
        hamiltonians: vec![
            QuadraticHamiltonian::new(space.clone(), q1, GeneratorKind::Elliptic)?,
            QuadraticHamiltonian::new(space.clone(), q2, GeneratorKind::Hyperbolic)?,
        ],
        action: FiniteSymplecticAction::trivial(),
        space,
        n: 2,
        rank: 0,
    };
    Ok(ZooEntry {
        name: "focus-focus-basic".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 2,
            r: 0,
            kappa_e: 1,
            kappa_h: 1,
            williamson: (0, 0, 1),
            elliptic: vec![vec![1, -1]],
            hyperbolic: vec![vec![1, 1]],
            twisting: vec![],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![
            ActionDefaults {
                m1: vec![c(0.4), c(0.0), c(0.0), c(0.0)],
                coefficients: vec![c(1.0), c(0.0)],
                grid_direction: vec![1.0, 0.0],
                complexified: false,
                label: "I1".into(),
            },
            ActionDefaults {
                m1: vec![c(0.4), c(0.0), c(0.0), c(0.0)],
                coefficients: vec![c(0.0), Complex64::new(0.0, 1.0)],
                grid_direction: vec![0.0, 1.0],
                complexified: true,
                label: "iI2".into(),
            },
        ],
        full_gamma: vec![],
    })
}

/// Phase space of the complexified plane pair (C², re(dz∧dw)), real
/// coordinates (zr, zi, wr, wi).
fn complex_plane_pair() -> (Vec<String>, DMatrix<f64>, Vec<ComplexAlias>) {
    let v = names(&["zr", "zi", "wr", "wi"]);
    let mut form = DMatrix::zeros(4, 4);
    form[(0, 2)] = 1.0;
    form[(2, 0)] = -1.0;
    form[(1, 3)] = -1.0;
    form[(3, 1)] = 1.0;
    let aliases = vec![
        ComplexAlias { alias: "z".into(), xvar: "zr".into(), yvar: "zi".into() },
        ComplexAlias { alias: "w".into(), xvar: "wr".into(), yvar: "wi".into() },
    ];
    (v, form, aliases)
}

fn cusp_negative(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (v, form, aliases) = complex_plane_pair();
    let f1 = parse_hamiltonian("re(z^2 + w^3)", &v, &aliases)?;
    let f2 = parse_hamiltonian("im(z^2 + w^3)", &v, &aliases)?;
    let system = PolynomialSystem {
        space: PhaseSpace::constant(v, form),
        components: vec![f1, f2],
        complexified: false,
    };
    Ok(ZooEntry {
        name: "cusp-negative".into(),
        params: params.clone(),
        system,
        linear_family: None,
        expected: None,
        flags: ZooFlags {
            homologically_symmetric: false,
            incomplete_flow: true,
            negative_witness: true,
        },
        action_defaults: vec![],
        full_gamma: vec![],
    })
}

fn hyperelliptic_negative(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (v, form, aliases) = complex_plane_pair();
    // Roots a1 < a2 < a3 < 0 at -1, -1/2, -1/4.
    let text = "z^2 + (w+1)*(w+1/2)*(w+1/4)*w^2";
    let f1 = parse_hamiltonian(&format!("re({text})"), &v, &aliases)?;
    let f2 = parse_hamiltonian(&format!("im({text})"), &v, &aliases)?;
    let system = PolynomialSystem {
        space: PhaseSpace::constant(v, form),
        components: vec![f1, f2],
        complexified: false,
    };
    Ok(ZooEntry {
        name: "hyperelliptic-negative".into(),
        params: params.clone(),
        system,
        linear_family: None,
        expected: None,
        flags: ZooFlags {
            homologically_symmetric: false,
            incomplete_flow: true,
            negative_witness: true,
        },
        action_defaults: vec![],
        full_gamma: vec![],
    })
}

/// Rank-1 model on (l, phi, x, y) with Ω = dα(λ)∧dφ + π*ω and
/// F = (f_{a,λ,s}, λ); ω = dx∧dy here.
fn parabolic_model(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let s = params.s;
    check(s >= 1, "resonance order s >= 1 required")?;
    if s == 4 {
        check(params.a * params.a != 1.0, "a^2 != 1 required for s = 4")?;
    }
    let v = names(&["l", "phi", "x", "y"]);
    let alias = vec![ComplexAlias { alias: "z".into(), xvar: "x".into(), yvar: "y".into() }];
    let h = parse_hamiltonian(&resonance_family_text(s, params.a, params.plus_sign), &v, &alias)?;
    let k = parse_hamiltonian("l", &v, &[])?;
    let alpha_text = if params.quadratic_alpha {
        check(s >= 5, "alpha(λ) ≠ λ requires s >= 5")?;
        "l + l^2"
    } else {
        "l"
    };
    let alpha = parse_hamiltonian(alpha_text, &v, &[])?;
    let p = parse_hamiltonian("0", &v, &[])?;
    let qf = parse_hamiltonian("0", &v, &[])?;
    let r = parse_hamiltonian("1", &v, &[])?;
    let space = PhaseSpace {
        vars: v.clone(),
        omega: OmegaField::Parabolic { alpha, p, q: qf, r },
        angle_coords: vec![1],
    };
    let system = PolynomialSystem { space, components: vec![h, k], complexified: false };
    // Regular base point for actions on the H = 0 leaf: z = e^{iπ/s} for the
    // s >= 5 family solves re(z^s) + |z|^4 = 0 at |z| = 1.
    let action_defaults = if s >= 5 {
        let th = std::f64::consts::PI / s as f64;
        vec![ActionDefaults {
            m1: vec![c(0.0), c(0.0), c(th.cos()), c(th.sin())],
            coefficients: vec![c(0.0), c(1.0)],
            grid_direction: vec![0.0, 1.0],
            complexified: false,
            label: "I".into(),
        }]
    } else {
        vec![]
    };
    // The Z_s deck transformation on the cover: φ-shift and z-rotation.
    let theta = 2.0 * std::f64::consts::PI * params.l as f64 / s as f64;
    let full_gamma =
        vec![(block_diag(&[DMatrix::identity(2, 2), rotation2(theta)]), s)];
    Ok(ZooEntry {
        name: "parabolic-model".into(),
        params: params.clone(),
        system,
        linear_family: None,
        expected: None,
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults,
        full_gamma,
    })
}

fn parabolic_resonance(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (s, l) = (params.s, params.l);
    check(s >= 5, "s >= 5 required for the resonance row")?;
    check(l >= 0 && (l as u32) < s, "0 <= l < s required")?;
    check(gcd64(l.max(1), s as i64) == 1, "gcd(s, l) = 1 required")?;
    let mut entry = parabolic_model(params)?;
    let space = SymplecticSpace::standard(1);
    let theta = 2.0 * std::f64::consts::PI * l as f64 / s as f64;
    let family = LinearFamily {
        hamiltonians: vec![],
        action: FiniteSymplecticAction { generators: vec![rotation2(theta)], orders: vec![s] },
        space,
        n: 2,
        rank: 1,
    };
    entry.name = "parabolic-resonance".into();
    entry.linear_family = Some(family);
    entry.expected = Some(ExpectedRow {
        n: 2,
        r: 1,
        kappa_e: 0,
        kappa_h: 0,
        williamson: (1, 0, 0),
        elliptic: vec![],
        hyperbolic: vec![],
        twisting: vec![vec![Frac::new(l, s as i64).mod1()]],
    });
    Ok(entry)
}

fn hopf_resonance(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (p, q) = (params.p, params.q);
    check(0 < p && p < q, "0 < p < q required")?;
    check(gcd64(p, q) == 1, "gcd(p, q) = 1 required")?;
    check(3 * p != q, "p/q = 1/3 is excluded")?;
    let v = names(&["l", "phi", "x1", "y1", "x2", "y2"]);
    let aliases = vec![
        ComplexAlias { alias: "z1".into(), xvar: "x1".into(), yvar: "y1".into() },
        ComplexAlias { alias: "z2".into(), xvar: "x2".into(), yvar: "y2".into() },
    ];
    // The resonant coupling monomial must be invariant under the J-flow
    // with frequencies (p, q), which forces exponents (q, p).
    let h_text = format!("re(z1^{q} * conj(z2)^{p}) + {}*abs2(z2)^2 + l*abs2(z2)", params.a);
    let h = parse_hamiltonian(&h_text, &v, &aliases)?;
    let i_int = parse_hamiltonian("l", &v, &[])?;
    let j_text = format!("{p}*abs2(z1)/2 + {q}*abs2(z2)/2");
    let j_int = parse_hamiltonian(&j_text, &v, &aliases)?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![h, i_int, j_int],
        complexified: false,
    };
    let space = SymplecticSpace::standard(2);
    let qmat = q_elliptic_pair(4, 0, p as f64) + q_elliptic_pair(4, 1, q as f64);
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            qmat,
            GeneratorKind::Elliptic,
        )?],
        action: FiniteSymplecticAction {
            generators: vec![DMatrix::identity(4, 4)],
            orders: vec![1],
        },
        space,
        n: 3,
        rank: 1,
    };
    Ok(ZooEntry {
        name: "hopf-resonance".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 3,
            r: 1,
            kappa_e: 1,
            kappa_h: 0,
            williamson: (2, 0, 0),
            elliptic: vec![vec![p, q]],
            hyperbolic: vec![],
            twisting: vec![vec![Frac::zero(), Frac::zero()]],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![],
        full_gamma: vec![],
    })
}

fn elliptic_parabolic(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (s, l) = (params.s, params.l);
    check(s >= 5, "s >= 5 required")?;
    check(l >= 0 && (l as u32) < s, "0 <= l < s required")?;
    check(gcd64(l.max(1), s as i64) == 1, "gcd(s, l) = 1 required")?;
    let v = names(&["l", "phi", "x1", "y1", "x2", "y2"]);
    let aliases = vec![
        ComplexAlias { alias: "z1".into(), xvar: "x1".into(), yvar: "y1".into() },
        ComplexAlias { alias: "z2".into(), xvar: "x2".into(), yvar: "y2".into() },
    ];
    let sign = if params.plus_sign { "+" } else { "-" };
    let h_text = format!("re(z2^{s}) + abs2(z2)^2 + (l {sign} abs2(z1)/2)*abs2(z2)");
    let h = parse_hamiltonian(&h_text, &v, &aliases)?;
    let i_int = parse_hamiltonian("l", &v, &[])?;
    let j_int = parse_hamiltonian("abs2(z1)/2", &v, &aliases)?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![h, i_int, j_int],
        complexified: false,
    };
    let space = SymplecticSpace::standard(2);
    let theta = 2.0 * std::f64::consts::PI * l as f64 / s as f64;
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            q_elliptic_pair(4, 0, 1.0),
            GeneratorKind::Elliptic,
        )?],
        action: FiniteSymplecticAction {
            generators: vec![block_diag(&[DMatrix::identity(2, 2), rotation2(theta)])],
            orders: vec![s],
        },
        space,
        n: 3,
        rank: 1,
    };
    let full_gamma = vec![(
        block_diag(&[DMatrix::identity(4, 4), rotation2(theta)]),
        s,
    )];
    Ok(ZooEntry {
        name: "elliptic-parabolic-resonance".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 3,
            r: 1,
            kappa_e: 1,
            kappa_h: 0,
            williamson: (2, 0, 0),
            elliptic: vec![vec![0, 1]],
            hyperbolic: vec![],
            twisting: vec![vec![Frac::new(l, s as i64).mod1(), Frac::zero()]],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![],
        full_gamma,
    })
}

fn swallowtail(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let l = params.l;
    check((1..5).contains(&l), "1 <= l < 5 required")?;
    let v = names(&["l1", "phi1", "l2", "phi2", "x", "y"]);
    let alias = vec![ComplexAlias { alias: "z".into(), xvar: "x".into(), yvar: "y".into() }];
    let h = parse_hamiltonian(
        "re(z^5) + abs2(z)^3 + l2*abs2(z)^2 + l1*abs2(z)",
        &v,
        &alias,
    )?;
    let i1 = parse_hamiltonian("l1", &v, &[])?;
    let i2 = parse_hamiltonian("l2", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![h, i1, i2],
        complexified: false,
    };
    let space = SymplecticSpace::standard(1);
    let theta = 2.0 * std::f64::consts::PI * l as f64 / 5.0;
    let family = LinearFamily {
        hamiltonians: vec![],
        action: FiniteSymplecticAction {
            generators: vec![rotation2(theta), DMatrix::identity(2, 2)],
            orders: vec![5, 1],
        },
        space,
        n: 3,
        rank: 2,
    };
    let full_gamma = vec![(
        block_diag(&[DMatrix::identity(4, 4), rotation2(theta)]),
        5,
    )];
    Ok(ZooEntry {
        name: "swallowtail".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 3,
            r: 2,
            kappa_e: 0,
            kappa_h: 0,
            williamson: (1, 0, 0),
            elliptic: vec![],
            hyperbolic: vec![],
            twisting: vec![vec![Frac::new(l, 5).mod1()], vec![Frac::zero()]],
        }),
        flags: ZooFlags { homologically_symmetric: true, ..Default::default() },
        action_defaults: vec![],
        full_gamma,
    })
}

fn hyperbolic_hopf(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let v = names(&["l", "phi", "x1", "y1", "x2", "y2"]);
    let h = parse_hamiltonian("x1*y2 + (x2*y1)^2 + l*x2*y1", &v, &[])?;
    let i_int = parse_hamiltonian("l", &v, &[])?;
    let j_int = parse_hamiltonian("x1*y1 + x2*y2", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![h, i_int, j_int],
        complexified: false,
    };
    let space = SymplecticSpace::standard(2);
    let qmat = q_hyperbolic_pair(4, 0, 1.0) + q_hyperbolic_pair(4, 1, 1.0);
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            qmat,
            GeneratorKind::Hyperbolic,
        )?],
        action: FiniteSymplecticAction {
            generators: vec![DMatrix::identity(4, 4)],
            orders: vec![1],
        },
        space,
        n: 3,
        rank: 1,
    };
    Ok(ZooEntry {
        name: "hyperbolic-hopf".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 3,
            r: 1,
            kappa_e: 0,
            kappa_h: 1,
            williamson: (0, 2, 0),
            elliptic: vec![],
            hyperbolic: vec![vec![1, 1]],
            twisting: vec![vec![Frac::zero(), Frac::zero()]],
        }),
        flags: ZooFlags::default(),
        action_defaults: vec![],
        full_gamma: vec![],
    })
}

fn hyperbolic_parabolic(params: &ZooParams) -> Result<ZooEntry, ZooError> {
    let (s, l) = (params.s, params.l);
    check(s >= 5, "s >= 5 required")?;
    check(l >= 0 && (l as u32) < s, "0 <= l < s required")?;
    check(gcd64(l.max(1), s as i64) == 1, "gcd(s, l) = 1 required")?;
    let v = names(&["l", "phi", "x1", "y1", "x2", "y2"]);
    let aliases = vec![ComplexAlias {
        alias: "z2".into(),
        xvar: "x2".into(),
        yvar: "y2".into(),
    }];
    let sign = if params.plus_sign { "+" } else { "-" };
    let h_text = format!("re(z2^{s}) + abs2(z2)^2 + (l {sign} x1*y1)*abs2(z2)");
    let h = parse_hamiltonian(&h_text, &v, &aliases)?;
    let i_int = parse_hamiltonian("l", &v, &[])?;
    let j_int = parse_hamiltonian("x1*y1", &v, &[])?;
    let system = PolynomialSystem {
        space: PhaseSpace::standard(v),
        components: vec![h, i_int, j_int],
        complexified: false,
    };
    let space = SymplecticSpace::standard(2);
    let theta = 2.0 * std::f64::consts::PI * l as f64 / s as f64;
    let family = LinearFamily {
        hamiltonians: vec![QuadraticHamiltonian::new(
            space.clone(),
            q_hyperbolic_pair(4, 0, 1.0),
            GeneratorKind::Hyperbolic,
        )?],
        action: FiniteSymplecticAction {
            generators: vec![block_diag(&[DMatrix::identity(2, 2), rotation2(theta)])],
            orders: vec![s],
        },
        space,
        n: 3,
        rank: 1,
    };
    let full_gamma = vec![(
        block_diag(&[DMatrix::identity(4, 4), rotation2(theta)]),
        s,
    )];
    Ok(ZooEntry {
        name: "hyperbolic-parabolic-resonance".into(),
        params: params.clone(),
        system,
        linear_family: Some(family),
        expected: Some(ExpectedRow {
            n: 3,
            r: 1,
            kappa_e: 0,
            kappa_h: 1,
            williamson: (1, 1, 0),
            elliptic: vec![],
            hyperbolic: vec![vec![1]],
            twisting: vec![vec![Frac::new(l, s as i64).mod1(), Frac::zero()]],
        }),
        flags: ZooFlags::default(),
        action_defaults: vec![],
        full_gamma,
    })
}

/// Max-norm defect of Γ-invariance of all momentum components under the
/// declared full-space generators, checked coefficient-wise after exact
/// substitution (rotation entries are floating point, so the defect is at
/// roundoff scale for a valid entry).
pub fn gamma_invariance_defect(entry: &ZooEntry) -> f64 {
    let mut worst: f64 = 0.0;
    let vars = &entry.system.space.vars;
    let d = vars.len();
    for (m, _) in &entry.full_gamma {
        let images: Vec<PolynomialExpr> = (0..d)
            .map(|i| {
                let mut acc = PolynomialExpr::zero(vars);
                for j in 0..d {
                    if m[(i, j)] != 0.0 {
                        acc = acc.add(
                            &PolynomialExpr::var(vars, j).scale(&CNum::from_f64(m[(i, j)])),
                        );
                    }
                }
                acc
            })
            .collect();
        for f in &entry.system.components {
            let diff = f.substitute(&images).sub(f);
            for coef in diff.terms.values() {
                let (re, im) = coef.to_f64_pair();
                worst = worst.max(re.abs()).max(im.abs());
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Normal-form scaling of the resonance-order family.
// ---------------------------------------------------------------------------

/// Record of the coordinate/integral scaling that normalizes b̃(λ) = λ b₁(λ)
/// to b(λ) = λ. All factors are powers of c = b₁^{1/m}:
/// x -> c^{-u_pow} x, y -> c^{-v_pow} y, H -> c^{-w_pow} H, and for s >= 4
/// the quartic coefficient picks up c^{a_pow}.
#[derive(Clone, Debug)]
pub struct ScalingRecord {
    pub s: u32,
    pub plus_sign: bool,
    pub b1: PolynomialExpr,
    pub m: u32,
    pub u_pow: i64,
    pub v_pow: i64,
    pub w_pow: i64,
    pub a_pow: i64,
    /// Rational t of the final a-normalization step (s >= 5, constant â).
    pub a_step_t: Option<Frac>,
    pub verified: bool,
}

/// Exponent table of the scaling for resonance order s.
fn scaling_exponents(s: u32) -> (u32, i64, i64, i64, i64) {
    match s {
        1 => (4, 3, 2, 6, 0),
        2 => (2, 2, 1, 4, 0),
        _ => {
            let m = (s - 2) as i64;
            (m as u32, 1, 1, s as i64, 4 - s as i64)
        }
    }
}

/// Laurent polynomial in (x, y, l, a, c) with c-exponents shifted to stay
/// nonnegative, reduced by the relation c^m = b1(l).
#[derive(Debug)]
struct ReducedPoly(PolynomialExpr);

const SCALE_VARS: [&str; 5] = ["x", "y", "l", "a", "c"];

fn scale_vars() -> Vec<String> {
    SCALE_VARS.iter().map(|s| s.to_string()).collect()
}

/// Reduce c-powers by c^m = b1(l); b1 given in the same 5-variable ring.
fn reduce_c(p: &PolynomialExpr, b1: &PolynomialExpr, m: u32) -> PolynomialExpr {
    let vars = &p.vars;
    let c_idx = 4;
    let mut out = PolynomialExpr::zero(vars);
    for (e, coef) in &p.terms {
        let k = e[c_idx] as u32;
        let (quot, rem) = (k / m, k % m);
        let mut base = PolynomialExpr::zero(vars);
        let mut e2 = e.clone();
        e2[c_idx] = rem as u16;
        base.terms.insert(e2, coef.clone());
        let reduced = if quot > 0 { base.mul(&b1.powi(quot)) } else { base };
        out.add_assign(&reduced);
    }
    if out.terms.keys().any(|e| e[c_idx] as u32 >= m) {
        // One more pass handles powers introduced by b1 itself (b1 has no c).
        reduce_c(&out, b1, m)
    } else {
        out
    }
}

/// The family member f̂_{A, B, s}(X, Y) for symbolic slots: A and B are
/// polynomials substituted into the quartic and quadratic coefficients, and
/// X, Y into the coordinates.
fn family_with(
    s: u32,
    plus_sign: bool,
    x: &PolynomialExpr,
    y: &PolynomialExpr,
    a_slot: &PolynomialExpr,
    b_slot: &PolynomialExpr,
) -> PolynomialExpr {
    let vars = &x.vars;
    let two = |p: &PolynomialExpr| p.mul(p);
    let abs2 = two(x).add(&two(y));
    match s {
        1 => two(x).add(&y.powi(3)).add(&b_slot.mul(y)),
        2 => {
            let quart = y.powi(4);
            let quart = if plus_sign { quart } else { quart.neg() };
            two(x).add(&quart).add(&b_slot.mul(&two(y)))
        }
        _ => {
            // re(z^s) expanded over the real pair.
            let mut re_zs = PolynomialExpr::zero(vars);
            let mut sign = 1i64;
            let mut k = 0u32;
            while k <= s {
                let bin = binomial(s as i64, k as i64);
                re_zs.add_assign(
                    &x.powi(s - k)
                        .mul(&y.powi(k))
                        .scale(&CNum::from_int(sign * bin)),
                );
                sign = -sign;
                k += 2;
            }
            // The quartic slot enters the family for s >= 4 only.
            if s >= 4 {
                let quart = abs2.mul(&abs2).mul(a_slot);
                re_zs.add_assign(&quart);
            }
            re_zs.add(&b_slot.mul(&abs2))
        }
    }
}

fn binomial(n: i64, k: i64) -> i64 {
    let mut r = 1i64;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Normalize b̃(λ) = λ·b₁(λ) to λ in the resonance-order family: verify the
/// scaling identity exactly in the ring R[x, y, λ, a, c]/(c^m - b₁),
/// recording the exponents; for s >= 5 with constant â, also the final
/// rational rescaling that normalizes the quartic coefficient to 1.
pub fn normal_form_scaling(
    s: u32,
    plus_sign: bool,
    b1_in_l: &PolynomialExpr,
    request_a_normalization: bool,
) -> Result<ScalingRecord, ZooError> {
    if s == 4 && request_a_normalization {
        return Err(ZooError::BranchUnavailable(
            "s = 4: the quartic coefficient cannot be rescaled without changing the |a| - 1 sign \
             class"
                .into(),
        ));
    }
    if request_a_normalization && s < 5 {
        return Err(ZooError::BranchUnavailable(
            "the quartic normalization step applies to s >= 5 only".into(),
        ));
    }
    let vars = scale_vars();
    // b1 lifted into the 5-variable ring (it may only use λ).
    let mut b1 = PolynomialExpr::zero(&vars);
    for (e, coef) in &b1_in_l.terms {
        let deg_l = e
            .iter()
            .zip(&b1_in_l.vars)
            .filter(|(_, v)| v.as_str() == "l")
            .map(|(k, _)| *k)
            .sum::<u16>();
        let used: u16 = e.iter().sum();
        if used != deg_l {
            return Err(ZooError::InvalidParams("b1 must be a polynomial in λ alone".into()));
        }
        let mut e2 = vec![0u16; 5];
        e2[2] = deg_l;
        b1.terms.insert(e2, coef.clone());
    }
    // Positivity sample check on λ ∈ [-1, 1].
    let b1c = b1_in_l.compile();
    let lpos = b1_in_l.vars.iter().position(|v| v == "l").unwrap_or(0);
    for k in 0..=40 {
        let lam = -1.0 + k as f64 / 20.0;
        let mut pt = vec![0.0; b1_in_l.vars.len()];
        pt[lpos] = lam;
        if b1c.eval_real(&pt) <= 0.0 {
            return Err(ZooError::InvalidParams("b1 must be positive on the domain".into()));
        }
    }

    let (m, u_pow, v_pow, w_pow, a_pow) = scaling_exponents(s);
    let x = PolynomialExpr::var(&vars, 0);
    let y = PolynomialExpr::var(&vars, 1);
    let l = PolynomialExpr::var(&vars, 2);
    let a = PolynomialExpr::var(&vars, 3);
    let cc = PolynomialExpr::var(&vars, 4);

    // Identity to verify, cleared of negative powers: with u = c^{-u_pow},
    // v = c^{-v_pow}, w = c^{-w_pow},
    //   w · f̂_{a, λ b₁, s}(u x, v y) = f̂_{a c^{a_pow}, λ, s}(x, y)
    // becomes, after multiplying by c^{w_pow} and clearing the a-slot power,
    //   f̂-terms with shifted c-exponents on both sides.
    // LHS: substitute X = x·c^{S - u_pow}, Y = y·c^{S - v_pow}, where the
    // uniform shift S makes every slot polynomial; the induced term weights
    // are then matched by shifting the RHS per-term.
    // A cleaner equivalent: compare term-by-term with explicit exponents.
    let lhs = {
        // f̂ evaluated at (c^{m_u} x, c^{m_v} y) with m_u = w_pow - u_pow?
        // Instead: build f̂_{a, λ c^m, s}(x, y) term by term, then rescale
        // each term by c^{w_pow - u_pow·deg_x - v_pow·deg_y} relative to the
        // global shift below.
        let b_slot = l.mul(&cc.powi(m));
        family_with(s, plus_sign, &x, &y, &a, &b_slot)
    };
    let rhs = family_with(s, plus_sign, &x, &y, &a, &l);
    // Global shift keeps all Laurent exponents nonnegative: the lowest LHS
    // power is -w_pow and the lowest RHS power is a_pow (negative for s>=5).
    let shift: i64 = w_pow + s as i64 + 4;
    let mut lhs_shifted = PolynomialExpr::zero(&vars);
    for (e, coef) in &lhs.terms {
        // The change of coordinates expresses the old coordinates through
        // the new ones as x_old = x/u = c^{u_pow} x, so every term gains
        // c^{u_pow · deg_x + v_pow · deg_y}, and the integral rescaling
        // contributes c^{-w_pow}.
        let cexp = shift - w_pow
            + (e[0] as i64) * u_pow
            + (e[1] as i64) * v_pow
            + e[4] as i64;
        if cexp < 0 {
            return Err(ZooError::InvalidParams("internal exponent shift too small".into()));
        }
        let mut e2 = e.clone();
        e2[4] = cexp as u16;
        let mut t = PolynomialExpr::zero(&vars);
        t.terms.insert(e2, coef.clone());
        lhs_shifted.add_assign(&t);
    }
    let mut rhs_shifted = PolynomialExpr::zero(&vars);
    for (e, coef) in &rhs.terms {
        let cexp = shift + (e[3] as i64) * a_pow + e[4] as i64;
        if cexp < 0 {
            return Err(ZooError::InvalidParams("internal exponent shift too small".into()));
        }
        let mut e2 = e.clone();
        e2[4] = cexp as u16;
        let mut t = PolynomialExpr::zero(&vars);
        t.terms.insert(e2, coef.clone());
        rhs_shifted.add_assign(&t);
    }
    let lhs_red = reduce_c(&lhs_shifted, &b1, m);
    let rhs_red = reduce_c(&rhs_shifted, &b1, m);
    let remainder = lhs_red.sub(&rhs_red);
    let verified = remainder.is_zero();

    let a_step_t = None;
    Ok(ScalingRecord {
        s,
        plus_sign,
        b1: b1_in_l.clone(),
        m,
        u_pow,
        v_pow,
        w_pow,
        a_pow,
        a_step_t,
        verified,
    })
}

/// Final rescaling for s >= 5 with constant quartic coefficient â > 0:
/// t = â^{1/(4-s)}, verified exactly when t is rational; returns t.
pub fn quartic_normalization_step(s: u32, a_hat: Frac) -> Result<Frac, ZooError> {
    if s < 5 {
        return Err(ZooError::BranchUnavailable("s >= 5 required".into()));
    }
    if a_hat.to_f64() <= 0.0 {
        return Err(ZooError::InvalidParams("â > 0 required".into()));
    }
    let tf = a_hat.to_f64().powf(1.0 / (4.0 - s as f64));
    let (t, res) = crate::exact::round_to_rational(tf, 1_000_000);
    // Exactness: t^{s-4} · â = 1.
    let mut pow = Frac::from_int(1);
    for _ in 0..(s - 4) {
        pow = pow * t;
    }
    if pow * a_hat != Frac::from_int(1) || res > 1e-9 {
        return Err(ZooError::InvalidParams(format!(
            "â = {a_hat} has no rational normalizer t for s = {s}"
        )));
    }
    // Symbolic verification of the composite map on the family:
    //   t^s · f̂_{â, λ, s}(z / t) = f̂_{1, t^{s-2} λ, s}(z)  pulled back by
    //   λ -> t^{s-2} λ, i.e. H'(λ', z') = f̂_{1, λ', s}.
    let vars = scale_vars();
    let x = PolynomialExpr::var(&vars, 0);
    let y = PolynomialExpr::var(&vars, 1);
    let l = PolynomialExpr::var(&vars, 2);
    let tinv = Frac::from_int(1) * Frac::new(t.den(), t.num());
    let xs = x.scale(&CNum::from_ratio(tinv.num(), tinv.den()));
    let ys = y.scale(&CNum::from_ratio(tinv.num(), tinv.den()));
    let a_const = PolynomialExpr::constant(&vars, CNum::from_ratio(a_hat.num(), a_hat.den()));
    let one = PolynomialExpr::constant(&vars, CNum::one());
    // λ expressed in the new parameter: λ = λ' / t^{s-2}.
    let mut tpow = Frac::from_int(1);
    for _ in 0..(s - 2) {
        tpow = tpow * t;
    }
    let l_old = l.scale(&CNum::from_ratio(tpow.den(), tpow.num()));
    let lhs = family_with(s, true, &xs, &ys, &a_const, &l_old);
    let mut ts_pow = Frac::from_int(1);
    for _ in 0..s {
        ts_pow = ts_pow * t;
    }
    let lhs = lhs.scale(&CNum::from_ratio(ts_pow.num(), ts_pow.den()));
    let rhs = family_with(s, true, &x, &y, &one, &l);
    if !lhs.sub(&rhs).is_zero() {
        return Err(ZooError::InvalidParams(
            "quartic normalization identity failed to verify".into(),
        ));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::classify;
    use crate::dynamics::verify_commuting;
    use crate::resonance::{
        canonical_invariants, canonicalize_elliptic, canonicalize_hyperbolic,
        canonicalize_twisting,
    };

    fn classify_and_check(entry: &ZooEntry) {
        let family = entry.linear_family.as_ref().expect("classification data");
        let report = classify(family).expect("classification");
        let expected = entry.expected.as_ref().unwrap();
        assert_eq!(report.n, expected.n, "{}", entry.name);
        assert_eq!(report.rank, expected.r, "{}", entry.name);
        assert_eq!(report.williamson, expected.williamson, "{}", entry.name);
        assert_eq!(report.kappa_e, expected.kappa_e, "{}", entry.name);
        assert_eq!(report.kappa_h, expected.kappa_h, "{}", entry.name);
        let ce = canonicalize_elliptic(&report.elliptic_resonances()).unwrap();
        let ch = canonicalize_hyperbolic(&report.hyperbolic_resonances()).unwrap();
        let ct = canonicalize_twisting(
            &report.twisting,
            &report.extended_elliptic(),
            &report.orders,
        )
        .unwrap();
        assert_eq!(ce, expected.elliptic, "{} elliptic", entry.name);
        assert_eq!(ch, expected.hyperbolic, "{} hyperbolic", entry.name);
        assert_eq!(ct, expected.twisting, "{} twisting", entry.name);
    }

    #[test]
    fn basic_rows() {
        for name in ["elliptic-basic", "hyperbolic-basic", "focus-focus-basic"] {
            let entry = zoo(name, &ZooParams::default()).unwrap();
            classify_and_check(&entry);
            verify_commuting(&entry.system, 0).unwrap();
        }
    }

    #[test]
    fn table_rows_classify() {
        let mut p = ZooParams::default();
        p.s = 5;
        p.l = 2;
        classify_and_check(&zoo("parabolic-resonance", &p).unwrap());
        p.p = 1;
        p.q = 2;
        classify_and_check(&zoo("hopf-resonance", &p).unwrap());
        classify_and_check(&zoo("elliptic-parabolic-resonance", &p).unwrap());
        p.l = 3;
        classify_and_check(&zoo("swallowtail", &p).unwrap());
        classify_and_check(&zoo("hyperbolic-hopf", &p).unwrap());
        p.l = 2;
        classify_and_check(&zoo("hyperbolic-parabolic-resonance", &p).unwrap());
        // Sign variants classify identically.
        let mut pm = p.clone();
        pm.plus_sign = false;
        let a = zoo("elliptic-parabolic-resonance", &p).unwrap();
        let b = zoo("elliptic-parabolic-resonance", &pm).unwrap();
        let ra = classify(a.linear_family.as_ref().unwrap()).unwrap();
        let rb = classify(b.linear_family.as_ref().unwrap()).unwrap();
        assert_eq!(
            canonical_invariants(&ra).unwrap(),
            canonical_invariants(&rb).unwrap()
        );
    }

    #[test]
    fn all_full_systems_commute() {
        let p = ZooParams::default();
        for (name, _) in zoo_list() {
            let entry = zoo(name, &p).unwrap();
            let rep = verify_commuting(&entry.system, 1500)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(rep.max_residual <= 1e-8, "{name}: {}", rep.max_residual);
        }
    }

    #[test]
    fn gamma_invariance() {
        let p = ZooParams::default();
        for name in [
            "parabolic-model",
            "elliptic-parabolic-resonance",
            "swallowtail",
            "hyperbolic-parabolic-resonance",
        ] {
            let entry = zoo(name, &p).unwrap();
            let defect = gamma_invariance_defect(&entry);
            assert!(defect < 1e-12, "{name}: defect {defect}");
        }
    }

    #[test]
    fn invalid_params_named() {
        let mut p = ZooParams::default();
        p.s = 4;
        assert!(matches!(
            zoo("parabolic-resonance", &p),
            Err(ZooError::InvalidParams(_))
        ));
        p.s = 6;
        p.l = 2;
        assert!(zoo("parabolic-resonance", &p).is_err(), "gcd violation");
        let mut p = ZooParams::default();
        p.p = 2;
        p.q = 6;
        assert!(zoo("hopf-resonance", &p).is_err());
        p.p = 1;
        p.q = 3;
        assert!(matches!(zoo("hopf-resonance", &p), Err(ZooError::InvalidParams(_))));
        let mut p = ZooParams::default();
        p.s = 4;
        p.a = 1.0;
        assert!(zoo("parabolic-model", &p).is_err());
    }

    #[test]
    fn scaling_identities_constant_b1() {
        // b1 ≡ 2 at s = 3: u = v = 1/2, w = 1/8.
        let lv = names(&["l"]);
        let b1 = parse_hamiltonian("2", &lv, &[]).unwrap();
        let rec = normal_form_scaling(3, true, &b1, false).unwrap();
        assert!(rec.verified);
        assert_eq!((rec.m, rec.u_pow, rec.v_pow, rec.w_pow), (1, 1, 1, 3));
        // b1 ≡ 1 gives identity maps.
        let b1 = parse_hamiltonian("1", &lv, &[]).unwrap();
        for s in [1u32, 2, 3, 5, 6] {
            let rec = normal_form_scaling(s, true, &b1, false).unwrap();
            assert!(rec.verified, "s = {s}");
        }
    }

    #[test]
    fn scaling_identities_polynomial_b1() {
        let lv = names(&["l"]);
        for (s, text) in [
            (1u32, "1 + l^2/4"),
            (2, "2 + l"),
            (3, "1 + l + l^2/2"),
            (5, "3 + l^2"),
            (6, "1/2 + l/4 + l^2/8"),
        ] {
            let b1 = parse_hamiltonian(text, &lv, &[]).unwrap();
            let rec = normal_form_scaling(s, true, &b1, false).unwrap();
            assert!(rec.verified, "s = {s}, b1 = {text}");
        }
        // Minus branch of the order-2 family.
        let b1 = parse_hamiltonian("2 + l", &lv, &[]).unwrap();
        assert!(normal_form_scaling(2, false, &b1, false).unwrap().verified);
    }

    #[test]
    fn quartic_step_examples() {
        // â = 16 at s = 5: t = 1/16.
        assert_eq!(quartic_normalization_step(5, Frac::from_int(16)).unwrap(), Frac::new(1, 16));
        // â = 16 at s = 6: t = 1/4.
        assert_eq!(quartic_normalization_step(6, Frac::from_int(16)).unwrap(), Frac::new(1, 4));
        // s = 4 is the excluded branch.
        assert!(matches!(
            normal_form_scaling(4, true, &parse_hamiltonian("1", &names(&["l"]), &[]).unwrap(), true),
            Err(ZooError::BranchUnavailable(_))
        ));
    }

    #[test]
    fn scaling_rejects_nonpositive_b1() {
        let lv = names(&["l"]);
        let b1 = parse_hamiltonian("l", &lv, &[]).unwrap();
        assert!(normal_form_scaling(3, true, &b1, false).is_err());
    }

    #[test]
    fn twisting_distinguishes_resonances() {
        let mut p1 = ZooParams::default();
        p1.s = 5;
        p1.l = 1;
        let mut p2 = p1.clone();
        p2.l = 2;
        let a = zoo("parabolic-resonance", &p1).unwrap();
        let b = zoo("parabolic-resonance", &p2).unwrap();
        let ra = classify(a.linear_family.as_ref().unwrap()).unwrap();
        let rb = classify(b.linear_family.as_ref().unwrap()).unwrap();
        assert!(!crate::resonance::models_equivalent(&ra, &rb).unwrap());
        assert!(crate::resonance::models_equivalent(&ra, &ra).unwrap());
    }

}
