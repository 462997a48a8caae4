//! Subcommand implementations and the exit-code contract.

use crate::render;
use anyhow::Context as _;
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::PathBuf;
use toricsym::action::{
    action_function, estimate_period, find_periodic_orbit, monodromy_action, orbit_as_curve,
    periodicity_witness, PeriodicOrbit,
};
use toricsym::classify::classify;
use toricsym::descriptor::{
    descriptor_for_system, FlagsDescriptor, ReportJson, SystemDescriptor,
};
use toricsym::dynamics::{HamiltonianFlow, PolynomialSystem};
use toricsym::exact::Frac;
use toricsym::persist::{
    discrete_data_invariance, equivariant_recipe, family_as_polynomial_system, perturb_system,
    persistence_base, persistence_row, PersistenceRow, PerturbationRecipe,
};
use toricsym::poly::parse_hamiltonian;
use toricsym::resonance::canonical_invariants;
use toricsym::symplectic::random_symplectic;
use toricsym::zoo::{normal_form_scaling, quartic_normalization_step, zoo, zoo_list, ZooParams};

pub struct Context {
    pub tol: Option<f64>,
    pub seed: u64,
    pub jobs: usize,
}

/// Error wrapper carrying the exit code: 1 for I/O and schema problems,
/// 2 for failed mathematical preconditions and classification errors.
pub struct CliError {
    inner: anyhow::Error,
    code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        self.code
    }

    fn io(e: impl Into<anyhow::Error>) -> Self {
        CliError { inner: e.into(), code: 1 }
    }

    fn math(e: impl Into<anyhow::Error>) -> Self {
        CliError { inner: e.into(), code: 2 }
    }
}

impl fmt::Debug for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner)
    }
}

type CliResult = Result<(), CliError>;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
pub struct ZooSelector {
    /// Zoo entry name (see `toricsym zoo list`).
    #[arg(long)]
    pub zoo: Option<String>,
    /// System descriptor JSON path.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Resonance order s.
    #[arg(long, default_value_t = 5)]
    pub s: u32,
    /// Resonance numerator l.
    #[arg(long, default_value_t = 2)]
    pub l: i64,
    /// Frequency p.
    #[arg(long, default_value_t = 1)]
    pub p: i64,
    /// Frequency q.
    #[arg(long, default_value_t = 2)]
    pub q: i64,
    /// Quartic coefficient a (resonance order 4).
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Use the minus branch of the (I ± J) coupling / order-2 family.
    #[arg(long)]
    pub minus: bool,
    /// Use α(λ) = λ + λ² in the rank-1 model.
    #[arg(long)]
    pub quadratic_alpha: bool,
}

impl ZooSelector {
    pub fn params(&self) -> ZooParams {
        ZooParams {
            s: self.s,
            l: self.l,
            p: self.p,
            q: self.q,
            a: self.a,
            plus_sign: !self.minus,
            quadratic_alpha: self.quadratic_alpha,
        }
    }

    fn entry(&self) -> Result<toricsym::zoo::ZooEntry, CliError> {
        let name = self.zoo.as_deref().ok_or_else(|| {
            CliError::io(anyhow::anyhow!("--zoo NAME or --system FILE required"))
        })?;
        zoo(name, &self.params()).map_err(CliError::math)
    }

    fn descriptor(&self) -> Result<Option<SystemDescriptor>, CliError> {
        match &self.system {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(CliError::io)?;
                let desc: SystemDescriptor =
                    serde_json::from_str(&text).map_err(CliError::io)?;
                desc.validate().map_err(CliError::io)?;
                Ok(Some(desc))
            }
        }
    }
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub select: ZooSelector,
    /// Conjugate the linear data by a random symplectic map first.
    #[arg(long)]
    pub conjugate_seed: Option<u64>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

pub fn run_classify(args: &ClassifyArgs, _ctx: &Context) -> CliResult {
    let family = if let Some(desc) = args.select.descriptor()? {
        desc.to_linear_family(None).map_err(CliError::io)?
    } else {
        let entry = args.select.entry()?;
        entry
            .linear_family
            .ok_or_else(|| {
                CliError::math(anyhow::anyhow!(
                    "entry '{}' has no classification data",
                    entry.name
                ))
            })?
            .clone()
    };
    let family = match args.conjugate_seed {
        None => family,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_symplectic(&family.space, &mut rng, 0.5);
            toricsym::testkit::conjugate_family(&family, &p)
        }
    };
    let report = classify(&family).map_err(CliError::math)?;
    let canonical = canonical_invariants(&report).map_err(CliError::math)?;
    match args.format {
        Format::Json => {
            let json = ReportJson::from_report(&report, &canonical);
            println!("{}", serde_json::to_string_pretty(&json).map_err(CliError::io)?);
        }
        _ => {
            print!("{}", render::classification_table(&report, &canonical));
        }
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::io(anyhow::anyhow!("grid spec must be start:end:count")));
    }
    let a: f64 = parts[0].parse().map_err(CliError::io)?;
    let b: f64 = parts[1].parse().map_err(CliError::io)?;
    let n: usize = parts[2].parse().map_err(CliError::io)?;
    if n < 2 {
        return Err(CliError::io(anyhow::anyhow!("grid needs at least 2 points")));
    }
    Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
}

fn parse_complex_list(spec: &str) -> Result<Vec<Complex64>, CliError> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if let Some((re, im)) = tok.split_once(':') {
                Ok(Complex64::new(
                    re.parse().map_err(CliError::io)?,
                    im.parse().map_err(CliError::io)?,
                ))
            } else {
                Ok(Complex64::new(tok.parse().map_err(CliError::io)?, 0.0))
            }
        })
        .collect()
}

#[derive(Args)]
pub struct ActionArgs {
    #[command(flatten)]
    pub select: ZooSelector,
    /// Momentum grid start:end:count along the seed direction.
    #[arg(long, default_value = "0:0.2:21")]
    pub grid: String,
    /// Which built-in generator of the entry to use (0-based).
    #[arg(long, default_value_t = 0)]
    pub component: usize,
    /// Use the time-2π monodromy construction instead of loop integrals.
    #[arg(long)]
    pub monodromy: bool,
    /// Base point for custom systems: comma list, re or re:im entries.
    #[arg(long)]
    pub m1: Option<String>,
    /// Coefficient vector for custom systems, same syntax.
    #[arg(long)]
    pub coefficients: Option<String>,
    /// Grid direction in momentum space for custom systems.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct ActionSetup {
    system: PolynomialSystem,
    m1: Vec<Complex64>,
    coefficients: Vec<Complex64>,
    direction: Vec<f64>,
}

fn action_setup(args: &ActionArgs) -> Result<ActionSetup, CliError> {
    if let Some(desc) = args.select.descriptor()? {
        let system = desc.to_system().map_err(CliError::io)?;
        let m1 = parse_complex_list(
            args.m1.as_deref().ok_or_else(|| {
                CliError::io(anyhow::anyhow!("--m1 required with --system"))
            })?,
        )?;
        let coefficients = parse_complex_list(
            args.coefficients.as_deref().ok_or_else(|| {
                CliError::io(anyhow::anyhow!("--coefficients required with --system"))
            })?,
        )?;
        let direction: Vec<f64> = match &args.direction {
            Some(spec) => spec
                .split(',')
                .map(|v| v.trim().parse().map_err(CliError::io))
                .collect::<Result<_, _>>()?,
            None => {
                let mut d = vec![0.0; system.n()];
                d[0] = 1.0;
                d
            }
        };
        return Ok(ActionSetup { system, m1, coefficients, direction });
    }
    let entry = args.select.entry()?;
    let defaults = entry.action_defaults.get(args.component).ok_or_else(|| {
        CliError::math(anyhow::anyhow!(
            "entry '{}' has no action seed with index {}",
            entry.name,
            args.component
        ))
    })?;
    let mut system = entry.system.clone();
    system.complexified = defaults.complexified;
    Ok(ActionSetup {
        system,
        m1: defaults.m1.clone(),
        coefficients: defaults.coefficients.clone(),
        direction: defaults.grid_direction.clone(),
    })
}

pub fn run_action(args: &ActionArgs, _ctx: &Context) -> CliResult {
    let setup = action_setup(args)?;
    let values = parse_grid(&args.grid)?;
    let grid: Vec<Vec<f64>> = values
        .iter()
        .map(|&t| setup.direction.iter().map(|d| d * t).collect())
        .collect();
    let sample = if args.monodromy {
        monodromy_action(&setup.system, &setup.m1, &setup.coefficients, &grid)
            .map_err(CliError::math)?
    } else {
        let orbit =
            find_periodic_orbit(&setup.system, &setup.m1, &setup.coefficients, 1e-10)
                .map_err(CliError::math)?;
        action_function(&setup.system, &orbit, &grid, &Default::default())
            .map_err(CliError::math)?
    };
    let text = match args.format {
        Format::Json => render::action_json(&sample).map_err(CliError::io)?,
        _ => render::action_csv(&sample),
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(CliError::io)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Args)]
pub struct PersistArgs {
    #[command(flatten)]
    pub select: ZooSelector,
    /// Comma-separated perturbation sizes.
    #[arg(long, default_value = "1e-2,5e-3,2.5e-3,1.25e-3")]
    pub eps: String,
    /// Momentum grid start:end:count along the entry's seed direction.
    #[arg(long, default_value = "0.02:0.16:8")]
    pub grid: String,
    /// Run the discrete-data invariance suite instead of the error table.
    #[arg(long)]
    pub invariance: bool,
    /// Number of randomized recipes for the invariance suite.
    #[arg(long, default_value_t = 20)]
    pub recipes: usize,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

pub fn run_persist(args: &PersistArgs, ctx: &Context) -> CliResult {
    let entry = args.select.entry()?;
    if args.invariance {
        return run_invariance(&entry, args, ctx);
    }
    let defaults = entry.action_defaults.first().ok_or_else(|| {
        CliError::math(anyhow::anyhow!("entry '{}' has no action seed", entry.name))
    })?;
    let mut system = entry.system.clone();
    system.complexified = defaults.complexified;
    let eps: Vec<f64> = args
        .eps
        .split(',')
        .map(|v| v.trim().parse().map_err(CliError::io))
        .collect::<Result<_, _>>()?;
    let values = parse_grid(&args.grid)?;
    let grid: Vec<Vec<f64>> = values
        .iter()
        .map(|&t| defaults.grid_direction.iter().map(|d| d * t).collect())
        .collect();
    let orbit = find_periodic_orbit(&system, &defaults.m1, &defaults.coefficients, 1e-10)
        .map_err(CliError::math)?;
    let base = persistence_base(&system, &orbit, &grid).map_err(CliError::math)?;
    let rows = run_eps_sweep(&system, &base, &orbit, &grid, &eps, ctx)?;
    let slope = render::slope_of(&rows);
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({
            "rows": rows,
            "loglog_slope": slope,
        }))
        .map_err(CliError::io)?
            + "\n",
        Format::Csv => render::persistence_csv(&rows, slope),
        Format::Table => render::persistence_table(&rows, slope),
    };
    print!("{text}");
    Ok(())
}

fn run_eps_sweep(
    system: &PolynomialSystem,
    base: &[Complex64],
    orbit: &PeriodicOrbit,
    grid: &[Vec<f64>],
    eps: &[f64],
    ctx: &Context,
) -> Result<Vec<PersistenceRow>, CliError> {
    if ctx.jobs <= 1 || eps.len() <= 1 {
        return eps
            .iter()
            .map(|&e| {
                persistence_row(system, base, orbit, grid, e, ctx.seed).map_err(CliError::math)
            })
            .collect();
    }
    // Independent per-ε runs across worker threads, merged in input order.
    let mut out: Vec<Option<Result<PersistenceRow, String>>> = vec![None; eps.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, &e) in eps.iter().enumerate() {
            let sys = system.clone();
            let base = base.to_vec();
            let orbit = orbit.clone();
            let grid = grid.to_vec();
            let seed = ctx.seed;
            handles.push((
                i,
                scope.spawn(move || {
                    persistence_row(&sys, &base, &orbit, &grid, e, seed)
                        .map_err(|er| er.to_string())
                }),
            ));
        }
        for (i, h) in handles {
            out[i] = Some(h.join().expect("worker panicked"));
        }
    });
    out.into_iter()
        .map(|r| r.unwrap().map_err(|e| CliError::math(anyhow::anyhow!(e))))
        .collect()
}

fn run_invariance(entry: &toricsym::zoo::ZooEntry, args: &PersistArgs, ctx: &Context) -> CliResult {
    let family = entry.linear_family.as_ref().ok_or_else(|| {
        CliError::math(anyhow::anyhow!("entry '{}' has no classification data", entry.name))
    })?;
    let system = family_as_polynomial_system(family);
    let kinds: Vec<_> = family.hamiltonians.iter().map(|h| h.kind).collect();
    let equivariant = !family.action.is_empty();
    let mut all_ok = true;
    let mut worst_disp = 0.0_f64;
    for k in 0..args.recipes {
        let seed = ctx.seed.wrapping_add(k as u64);
        let recipe = if equivariant {
            equivariant_recipe(&system, 1e-3, seed)
        } else {
            PerturbationRecipe::randomized(&system, 1e-3, seed)
        };
        let rep = discrete_data_invariance(
            &system,
            &kinds,
            &family.action,
            family.n,
            family.rank,
            &recipe,
        )
        .map_err(CliError::math)?;
        all_ok &= rep.invariant;
        worst_disp = worst_disp.max(rep.fixed_point_displacement);
        println!(
            "recipe {k:3}: invariant={} displacement={:.3e}",
            rep.invariant, rep.fixed_point_displacement
        );
    }
    println!("all invariant: {all_ok}; worst displacement {worst_disp:.3e}");
    if !all_ok {
        return Err(CliError::math(anyhow::anyhow!("discrete data changed under perturbation")));
    }
    Ok(())
}

#[derive(Args)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub select: ZooSelector,
    /// Canonical chart radius r for the ball condition.
    #[arg(long, default_value_t = 10.0)]
    pub radius: f64,
    /// Lipschitz constant c with |dF(x)| <= c|x| on the chart.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

pub fn run_witness(args: &WitnessArgs, _ctx: &Context) -> CliResult {
    let entry = args.select.entry()?;
    let system = &entry.system;
    let name = entry.name.as_str();
    let report = match name {
        "focus-focus-basic" => {
            let eps = 1e-5;
            let curve = move |u: f64| -> (Vec<Complex64>, Vec<Complex64>) {
                let c = |x: f64| Complex64::new(x, 0.0);
                (
                    vec![c(eps * u.cos()), c(0.0), c(-eps * u.sin()), c(0.0)],
                    vec![c(-eps * u.sin()), c(0.0), c(-eps * u.cos()), c(0.0)],
                )
            };
            periodicity_witness(system, &curve, args.radius, args.lipschitz.unwrap_or(1.0))
                .map_err(CliError::math)?
        }
        "cusp-negative" => {
            let curve = |u: f64| -> (Vec<Complex64>, Vec<Complex64>) {
                let c = |x: f64| Complex64::new(x, 0.0);
                let v = Complex64::new(u.cos(), u.sin());
                let z = v * v * v;
                let w = -v * v;
                let dz = Complex64::new(0.0, 3.0) * v * v * v;
                let dw = Complex64::new(0.0, -2.0) * v * v;
                (
                    vec![c(z.re), c(z.im), c(w.re), c(w.im)],
                    vec![c(dz.re), c(dz.im), c(dw.re), c(dw.im)],
                )
            };
            periodicity_witness(system, &curve, args.radius, args.lipschitz.unwrap_or(3.0))
                .map_err(CliError::math)?
        }
        "hyperelliptic-negative" => {
            // Loop = the far periodic orbit through w ∈ [a2, a3], found by
            // period estimation and shooting.
            let w0 = -0.375_f64;
            let p5 = (w0 + 1.0) * (w0 + 0.5) * (w0 + 0.25) * w0 * w0;
            let z0 = (-p5).sqrt();
            let m1 = [
                Complex64::new(z0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(w0, 0.0),
                Complex64::new(0.0, 0.0),
            ];
            let flow =
                HamiltonianFlow::new(system, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
                    .map_err(|e| CliError::math(anyhow::Error::from(e)))?;
            let period = estimate_period(&flow, &m1, 2000.0).map_err(CliError::math)?;
            let a1 = period / (2.0 * std::f64::consts::PI);
            let orbit = find_periodic_orbit(
                system,
                &m1,
                &[Complex64::new(a1, 0.0), Complex64::new(0.0, 0.0)],
                1e-9,
            )
            .map_err(CliError::math)?;
            let curve = orbit_as_curve(&orbit);
            periodicity_witness(system, &curve, args.radius, args.lipschitz.unwrap_or(4.0))
                .map_err(CliError::math)?
        }
        other => {
            return Err(CliError::math(anyhow::anyhow!(
                "no built-in witness loop for entry '{other}'"
            )))
        }
    };
    print!("{}", render::witness_json(&report).map_err(CliError::io)?);
    Ok(())
}

#[derive(Args)]
pub struct ZooArgs {
    /// `list` or `emit`.
    pub verb: String,
    /// Entry name for `emit`.
    pub name: Option<String>,
    #[command(flatten)]
    pub select: ZooSelector,
}

pub fn run_zoo(args: &ZooArgs, _ctx: &Context) -> CliResult {
    match args.verb.as_str() {
        "list" => {
            for (name, about) in zoo_list() {
                println!("{name:32} {about}");
            }
            Ok(())
        }
        "emit" => {
            let name = args
                .name
                .as_deref()
                .ok_or_else(|| CliError::io(anyhow::anyhow!("zoo emit NAME")))?;
            let entry = zoo(name, &args.select.params()).map_err(CliError::math)?;
            let kinds: Vec<_> = entry
                .linear_family
                .as_ref()
                .map(|f| f.hamiltonians.iter().map(|h| h.kind).collect())
                .unwrap_or_default();
            let gamma = entry
                .linear_family
                .as_ref()
                .map(|f| f.action.clone())
                .unwrap_or_else(toricsym::symplectic::FiniteSymplecticAction::trivial);
            let rank = entry.linear_family.as_ref().map(|f| f.rank).unwrap_or(0);
            let desc = descriptor_for_system(
                &entry.system,
                &kinds,
                &gamma,
                rank,
                FlagsDescriptor {
                    homologically_symmetric: entry.flags.homologically_symmetric,
                    incomplete_flow: entry.flags.incomplete_flow,
                    negative_witness: entry.flags.negative_witness,
                    complexified: entry.system.complexified,
                },
            );
            println!("{}", serde_json::to_string_pretty(&desc).map_err(CliError::io)?);
            Ok(())
        }
        other => Err(CliError::io(anyhow::anyhow!("unknown zoo verb '{other}'"))),
    }
}

#[derive(Args)]
pub struct ScaleArgs {
    /// Resonance order s.
    #[arg(long)]
    pub s: u32,
    /// Positive factor b1(λ) with b̃(λ) = λ·b1(λ).
    #[arg(long, default_value = "1")]
    pub b1: String,
    /// Minus branch of the order-2 family.
    #[arg(long)]
    pub minus: bool,
    /// Additionally normalize the quartic coefficient to 1 (s >= 5):
    /// value of the constant â as `num/den`.
    #[arg(long)]
    pub normalize_a: Option<String>,
}

pub fn run_scale(args: &ScaleArgs, _ctx: &Context) -> CliResult {
    let lv = vec!["l".to_string()];
    let b1 = parse_hamiltonian(&args.b1, &lv, &[]).map_err(CliError::io)?;
    let record = normal_form_scaling(args.s, !args.minus, &b1, false).map_err(CliError::math)?;
    println!(
        "s = {}, c = b1^(1/{}): x -> c^{} x, y -> c^{} y, H -> c^{} H, a-slot factor c^{}",
        record.s, record.m, -record.u_pow, -record.v_pow, -record.w_pow, record.a_pow
    );
    println!("identity verified (zero remainder): {}", record.verified);
    if !record.verified {
        return Err(CliError::math(anyhow::anyhow!("scaling identity failed")));
    }
    if let Some(ah) = &args.normalize_a {
        let frac = parse_frac(ah).map_err(CliError::io)?;
        let t = quartic_normalization_step(args.s, frac).map_err(CliError::math)?;
        println!("quartic normalization: t = {t}, maps (λ, z; H, I) -> (t^{{s-2}} λ, t z; t^s H, t^{{s-2}} I)");
    }
    Ok(())
}

fn parse_frac(text: &str) -> anyhow::Result<Frac> {
    match text.split_once('/') {
        Some((n, d)) => Ok(Frac::new(n.trim().parse()?, d.trim().parse()?)),
        None => Ok(Frac::from_int(text.trim().parse()?)),
    }
}

/// Used by the demo build and tests to produce one canonical report of a
/// perturbed entry (keeps `perturb_system` exercised through the CLI crate).
#[allow(dead_code)]
pub fn perturbed_report_json(name: &str, eps: f64, seed: u64) -> anyhow::Result<String> {
    let entry = zoo(name, &ZooParams::default())?;
    let family = entry
        .linear_family
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("no classification data"))?;
    let system = family_as_polynomial_system(family);
    let recipe = PerturbationRecipe::randomized(&system, eps, seed);
    let perturbed = perturb_system(&system, &recipe)?;
    Ok(format!("{:?}", perturbed.c0_distance))
}
