use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use mdforms_core::cli_io::{canonical_json, float_value, parse_coefficients, parse_mixed_form_csv, write_matrix_market, write_mixed_form_csv, write_vtk, FormSidecar};
use mdforms_core::cochain_spaces::{BcVariant, MixedForm, WeightMode};
use mdforms_core::differential_ops::{stokes_check, trace_commutation_defect, MixedComplex};
use mdforms_core::forest_geometry::{geometry_hash, parse_geometry, validate_conforming, ForestGeometry};
use mdforms_core::hodge::{betti_numbers, dense_kernel_dimension, harmonic_basis, hodge_decompose, poincare_constant, project_out, SolverOptions};
use mdforms_core::laplace_solver::{
    coercivity_estimate, energy_minimality, euler_lagrange_residual, flux_balance, solve_reduced, CoefficientField, LinearSolver, SolveOptions,
};
use mdforms_core::sparse::CsrMatrix;
use mdforms_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Check,
    Verify,
    Betti,
    Decompose,
    Solve,
    Poincare,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WeightsArg {
    Measure,
    Unit,
    Hodge,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BcArg {
    Natural,
    Essential,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolverArg {
    Direct,
    Minres,
}

/// Discrete exterior calculus on mixed-dimensional forest geometries.
#[derive(Debug, Parser)]
#[command(name = "mdforms", version)]
pub struct Cli {
    pub command: Command,
    #[arg(long, value_name = "PATH")]
    pub geometry: PathBuf,
    /// Form degree; commands sweep all degrees when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<i64>,
    #[arg(long, value_enum, default_value = "measure")]
    pub weights: WeightsArg,
    #[arg(long, value_enum)]
    pub bc: Option<BcArg>,
    /// Coefficient file for solve and poincare.
    #[arg(long, value_name = "PATH")]
    pub coeff: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overrides the pass threshold of the command's main check.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also export VTK files (solve, decompose).
    #[arg(long)]
    pub vtk: bool,
    /// Right-hand side for solve, as a mixed-form CSV. Zero when omitted.
    #[arg(long, value_name = "PATH")]
    pub rhs: Option<PathBuf>,
    /// Form to decompose, as a mixed-form CSV. Random forms when omitted.
    #[arg(long, value_name = "PATH")]
    pub form: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "direct")]
    pub solver: SolverArg,
    /// Number of random samples for sampled checks.
    #[arg(long)]
    pub samples: Option<usize>,
}

pub enum Outcome {
    Pass,
    Fail,
}

impl Cli {
    fn weights(&self) -> WeightMode {
        match self.weights {
            WeightsArg::Measure => WeightMode::Measure,
            WeightsArg::Unit => WeightMode::Unit,
            WeightsArg::Hodge => WeightMode::Hodge,
        }
    }

    fn bc(&self) -> BcVariant {
        match self.bc {
            Some(BcArg::Essential) => BcVariant::Essential,
            _ => BcVariant::Natural,
        }
    }

    fn samples(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    fn degrees(&self, n: usize) -> Result<Vec<usize>> {
        match self.k {
            None => Ok((0..=n).collect()),
            Some(k) => Ok(vec![check_degree(k, n)?]),
        }
    }
}

fn check_degree(k: i64, n: usize) -> Result<usize> {
    if k < 0 || k > n as i64 {
        return Err(Error::DegreeOutOfRange { k, max: n });
    }
    Ok(k as usize)
}

struct Loaded {
    geometry: ForestGeometry,
    hash: String,
}

fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path)?;
    let geometry = parse_geometry(&text)?;
    let hash = geometry_hash(&text)?;
    Ok(Loaded { geometry, hash })
}

fn f(x: f64) -> Value {
    float_value(x)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let loaded = load(&cli.geometry)?;
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
    }
    let mut report = Map::new();
    report.insert("command".into(), json!(format!("{:?}", cli.command).to_lowercase()));
    report.insert("geometry_hash".into(), json!(loaded.hash));
    report.insert("seed".into(), json!(cli.seed));

    let validation = validate_conforming(&loaded.geometry);
    let pass = if cli.command == Command::Check || !validation.is_conforming() {
        report.insert("conforming".into(), json!(validation.is_conforming()));
        report.insert("violations".into(), serde_json::to_value(&validation.violations)?);
        validation.is_conforming()
    } else {
        match cli.command {
            Command::Check => unreachable!(),
            Command::Verify => verify(cli, &loaded, &mut report)?,
            Command::Betti => betti(cli, &loaded.geometry, &mut report)?,
            Command::Decompose => decompose(cli, &loaded, &mut report)?,
            Command::Solve => solve(cli, &loaded, &mut report)?,
            Command::Poincare => poincare(cli, &loaded.geometry, &mut report)?,
        }
    };
    report.insert("pass".into(), json!(pass));
    let text = canonical_json(&Value::Object(report));
    print!("{text}");
    if let Some(dir) = &cli.out {
        let name = format!("{}.json", format!("{:?}", cli.command).to_lowercase());
        fs::write(dir.join(name), &text)?;
    }
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

fn set_common(cli: &Cli, report: &mut Map<String, Value>, bc: Option<BcVariant>) {
    report.insert("weights".into(), serde_json::to_value(cli.weights()).expect("enum serializes"));
    if let Some(bc) = bc {
        report.insert("bc".into(), serde_json::to_value(bc).expect("enum serializes"));
    }
}

/// (Da, b) against (a, 𝔡*b), worst relative gap over random pairs.
fn adjointness(cx: &MixedComplex, k: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = random_vec(rng, cx.dim(k));
        let b = random_vec(rng, cx.dim(k + 1));
        let lhs = cx.inner(k + 1, &cx.derivative(k, &a), &b);
        let rhs = cx.inner(k, &a, &cx.codifferential(k + 1, &b));
        let scale = cx.norm(k, &a) * cx.norm(k + 1, &b);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

/// Entrywise |𝔡*𝔡*b| against the same products taken in absolute value.
fn codifferential_twice(cx: &MixedComplex, k: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let abs = |m: &CsrMatrix<f64>| m.map(|v: f64| v.abs());
    let (d0, d1) = (abs(cx.d_f64(k)), abs(cx.d_f64(k + 1)));
    let abs_codiff = |d: &CsrMatrix<f64>, lo: &[f64], hi: &[f64], b: &[f64]| {
        let mb: Vec<f64> = b.iter().zip(hi).map(|(x, m)| x.abs() * m).collect();
        let mut out = d.tmatvec(&mb);
        out.iter_mut().zip(lo).for_each(|(x, m)| *x /= m);
        out
    };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let b = random_vec(rng, cx.dim(k + 2));
        let x = cx.codifferential(k + 1, &cx.codifferential(k + 2, &b));
        let s1 = abs_codiff(&d1, &cx.mass[k + 1], &cx.mass[k + 2], &b);
        let s0 = abs_codiff(&d0, &cx.mass[k], &cx.mass[k + 1], &s1);
        for (v, s) in x.iter().zip(&s0) {
            if *s > 0.0 {
                worst = worst.max(v.abs() / s);
            }
        }
    }
    worst
}

fn verify(cli: &Cli, loaded: &Loaded, report: &mut Map<String, Value>) -> Result<bool> {
    let g = &loaded.geometry;
    let n = g.n();
    let tol = cli.tol.unwrap_or(1e-10);
    let stokes_tol = 1e-12;
    set_common(cli, report, None);
    report.insert("tolerance".into(), f(tol));
    let mut all = true;
    let mut variants = Map::new();
    for bc in [BcVariant::Natural, BcVariant::Essential] {
        let cx = MixedComplex::assemble(g, cli.weights(), bc)?;
        let mut r = rng(cli.seed, bc as u64 + 1);
        let mut degrees = Vec::new();
        for k in 0..n {
            let (dd, anti, jj) = if k + 1 < n {
                let dd = cx.d[k + 1].mul(&cx.d[k]).max_abs();
                let anti = cx.d_local[k + 1].mul(&cx.jump[k]).add(&cx.jump[k + 1].mul(&cx.d_local[k])).max_abs();
                let jj = cx.jump[k + 1].mul(&cx.jump[k]).max_abs();
                (dd, anti, jj)
            } else {
                (0, 0, 0)
            };
            let adj = adjointness(&cx, k, cli.samples(1000), &mut r);
            let cc = if k + 2 <= n { codifferential_twice(&cx, k, cli.samples(100), &mut r) } else { 0.0 };
            let pass = dd == 0 && anti == 0 && jj == 0 && adj <= tol && cc <= tol;
            all &= pass;
            degrees.push(json!({
                "k": k,
                "dd_max_abs": dd,
                "anticommutator_max_abs": anti,
                "jj_max_abs": jj,
                "adjointness_max_relative": f(adj),
                "codifferential_twice_max_relative": f(cc),
                "pass": pass,
            }));
        }
        variants.insert(serde_json::to_value(bc)?.as_str().expect("string").to_string(), json!({ "degrees": degrees }));
    }
    report.insert("variants".into(), Value::Object(variants));

    let mut traces = Vec::new();
    for k in 0..n {
        let defect = trace_commutation_defect(g, k)?;
        all &= defect == 0;
        traces.push(json!({ "k": k, "max_abs": defect, "pass": defect == 0 }));
    }
    report.insert("trace_commutation".into(), Value::Array(traces));

    if n > 0 {
        let zeros = MixedForm::zeros(&mdforms_core::cochain_spaces::degree_layout(g, n as i64 - 1)?);
        let len = zeros.len();
        let mut r = rng(cli.seed, 7);
        let mut worst: f64 = 0.0;
        let mut integer_exact = true;
        for s in 0..cli.samples(200) {
            let a = MixedForm { k: n - 1, coefficients: random_vec(&mut r, len) };
            let (lhs, rhs) = stokes_check(g, &a)?;
            let l1: f64 = a.coefficients.iter().map(|v| v.abs()).sum();
            if l1 > 0.0 {
                worst = worst.max((lhs - rhs).abs() / l1);
            }
            // integer coefficients make every sum exact
            if s < 20 {
                let ai = MixedForm { k: n - 1, coefficients: (0..len).map(|_| r.random_range(-1000..=1000) as f64).collect() };
                let (lhs, rhs) = stokes_check(g, &ai)?;
                integer_exact &= lhs == rhs;
            }
        }
        let pass = worst <= stokes_tol && integer_exact;
        all &= pass;
        report.insert(
            "stokes".into(),
            json!({ "max_relative_defect": f(worst), "integer_exact": integer_exact, "tolerance": f(stokes_tol), "pass": pass }),
        );
    }
    report.insert("all_pass".into(), json!(all));

    if let Some(dir) = &cli.out {
        let cx = MixedComplex::assemble(g, cli.weights(), cli.bc())?;
        let name = |op: &str, k: usize| dir.join(format!("{}_{op}_{k}.mtx", loaded.hash));
        for k in 0..n {
            fs::write(name("d", k), write_matrix_market(&cx.d[k]))?;
            fs::write(name("dlocal", k), write_matrix_market(&cx.d_local[k]))?;
            fs::write(name("jump", k), write_matrix_market(&cx.jump[k]))?;
        }
        for k in 0..=n {
            fs::write(name("mass", k), write_matrix_market(&CsrMatrix::from_diagonal(&cx.mass[k])))?;
        }
    }
    Ok(all)
}

fn expected_betti(g: &ForestGeometry, bc: BcVariant) -> Option<Vec<usize>> {
    let key = match bc {
        BcVariant::Natural => "betti",
        BcVariant::Essential => "betti_essential",
    };
    serde_json::from_value(g.meta()?.get(key)?.clone()).ok()
}

fn betti(cli: &Cli, g: &ForestGeometry, report: &mut Map<String, Value>) -> Result<bool> {
    let bc = cli.bc();
    set_common(cli, report, Some(bc));
    let cx = MixedComplex::assemble(g, cli.weights(), bc)?;
    let b = betti_numbers(&cx)?;
    let expected = expected_betti(g, bc);
    let matches = expected.as_ref().map(|e| *e == b);
    report.insert("betti".into(), json!(b));
    report.insert("expected".into(), json!(expected));
    report.insert("matches_expected".into(), json!(matches));
    Ok(matches.unwrap_or(true))
}

fn read_form(path: &Path, k: usize, hash: &str, len: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let values = parse_mixed_form_csv(&text, len)?;
    let sidecar = path.with_extension("json");
    if sidecar.exists() {
        let s: FormSidecar = mdforms_core::cli_io::parse_sidecar(&fs::read_to_string(&sidecar)?)?;
        if s.k != k {
            return Err(Error::DegreeMismatch { expected: k, found: s.k });
        }
        if s.geometry_hash != hash {
            return Err(Error::Input(format!("{} belongs to a different geometry", path.display())));
        }
    }
    Ok(values)
}

fn write_form(dir: &Path, stem: &str, k: usize, hash: &str, values: &[f64]) -> Result<()> {
    fs::write(dir.join(format!("{stem}.csv")), write_mixed_form_csv(values)?)?;
    let sidecar = FormSidecar { k, geometry_hash: hash.to_string() };
    fs::write(dir.join(format!("{stem}.json")), canonical_json(&serde_json::to_value(sidecar)?))?;
    Ok(())
}

fn write_root_vtk(dir: &Path, stem: &str, g: &ForestGeometry, cx: &MixedComplex, k: usize, full: &[f64]) -> Result<()> {
    for b in &cx.spaces[k].layout.blocks {
        if b.local_degree < 0 || b.len == 0 {
            continue;
        }
        let mesh = g.root_mesh(b.root);
        let text = write_vtk(mesh, b.local_degree as usize, &full[b.offset..b.offset + b.len], stem)?;
        fs::write(dir.join(format!("{stem}_root{}.vtk", b.root)), text)?;
    }
    Ok(())
}

fn decompose(cli: &Cli, loaded: &Loaded, report: &mut Map<String, Value>) -> Result<bool> {
    let g = &loaded.geometry;
    let bc = cli.bc();
    set_common(cli, report, Some(bc));
    let tol = cli.tol.unwrap_or(1e-8);
    let opts = SolverOptions::default();
    let cx = MixedComplex::assemble(g, cli.weights(), bc)?;
    let betti = betti_numbers(&cx)?;
    report.insert("betti".into(), json!(betti));
    report.insert("tolerance".into(), f(tol));
    let mut all = true;
    let mut degrees = Vec::new();
    for k in cli.degrees(g.n())? {
        let space = &cx.spaces[k];
        let forms: Vec<Vec<f64>> = match &cli.form {
            Some(p) => vec![space.restrict(&read_form(p, k, &loaded.hash, space.full_dim())?)?],
            None => {
                let mut r = rng(cli.seed, 100 + k as u64);
                (0..cli.samples(100)).map(|_| random_vec(&mut r, cx.dim(k))).collect()
            }
        };
        let (mut rec, mut orth, mut harm) = (0.0f64, 0.0f64, 0.0f64);
        let mut last = None;
        for a in &forms {
            let h = hodge_decompose(&cx, k, a, &opts)?;
            rec = rec.max(h.reconstruction_residual(&cx, a));
            orth = orth.max(h.orthogonality_residual(&cx, a));
            harm = harm.max(h.harmonic_residual(&cx, a));
            last = Some(h);
        }
        let harmonic_dim = if cx.dim(k) <= opts.dense_limit {
            dense_kernel_dimension(&cx, k, 1e-9)
        } else {
            harmonic_basis(&cx, k, betti[k], cli.seed, &opts)?.len()
        };
        let pass = rec <= tol && orth <= tol && harm <= tol && harmonic_dim == betti[k];
        all &= pass;
        degrees.push(json!({
            "k": k,
            "forms": forms.len(),
            "harmonic_dim": harmonic_dim,
            "residuals": { "reconstruction": f(rec), "orthogonality": f(orth), "harmonic": f(harm) },
            "pass": pass,
        }));
        if let (Some(dir), Some(_), Some(h)) = (&cli.out, &cli.form, last) {
            for (stem, part) in [("exact", &h.a_d), ("coexact", &h.a_dstar), ("harmonic", &h.a_0)] {
                let full = space.extend(part);
                write_form(dir, &format!("{stem}_{k}"), k, &loaded.hash, &full)?;
                if cli.vtk {
                    write_root_vtk(dir, &format!("{stem}_{k}"), g, &cx, k, &full)?;
                }
            }
        }
    }
    report.insert("degrees".into(), Value::Array(degrees));
    Ok(all)
}

fn coefficients(cli: &Cli, k: usize) -> Result<CoefficientField> {
    match &cli.coeff {
        Some(p) => {
            let field = parse_coefficients(&fs::read_to_string(p)?)?;
            if field.k != k {
                return Err(Error::DegreeMismatch { expected: k, found: field.k });
            }
            Ok(field)
        }
        None => Ok(CoefficientField::unit(k)),
    }
}

fn solve(cli: &Cli, loaded: &Loaded, report: &mut Map<String, Value>) -> Result<bool> {
    let g = &loaded.geometry;
    let n = g.n();
    if matches!(cli.bc, Some(BcArg::Natural)) {
        return Err(Error::Input("solve is posed on the essential complex; drop --bc natural".into()));
    }
    let k = match cli.k {
        Some(k) => check_degree(k, n)?,
        None => n,
    };
    set_common(cli, report, Some(BcVariant::Essential));
    let field = coefficients(cli, k)?;
    field.validate(g)?;
    let cx = MixedComplex::assemble(g, cli.weights(), BcVariant::Essential)?;
    let space = &cx.spaces[k];
    let f_full = match &cli.rhs {
        Some(p) => read_form(p, k, &loaded.hash, space.full_dim())?,
        None => vec![0.0; space.full_dim()],
    };
    let f_red = space.restrict(&f_full)?;
    let beta = betti_numbers(&cx)?[k];
    let opts = SolveOptions {
        solver: match cli.solver {
            SolverArg::Direct => LinearSolver::Direct,
            SolverArg::Minres => LinearSolver::Minres,
        },
        tol: cli.tol.unwrap_or(1e-10),
        seed: cli.seed,
        inner: SolverOptions::default(),
    };
    let (state, sol) = solve_reduced(g, &cx, k, &field, &f_red, beta, &opts)?;
    let samples = cli.samples(100);
    let el = euler_lagrange_residual(&cx, k, &state, samples, cli.seed);
    let minimality = energy_minimality(&cx, k, &state, &f_red, samples, cli.seed)?;
    let flux = if k == n && k > 0 { Some(flux_balance(&cx, k, &state)?) } else { None };
    report.insert("k".into(), json!(k));
    report.insert("harmonic_dim".into(), json!(sol.harmonic_dim));
    report.insert("solver".into(), serde_json::to_value(sol.solver)?);
    report.insert("iterations".into(), json!(sol.iterations));
    report.insert(
        "residuals".into(),
        json!({
            "saddle": f(sol.saddle_residual),
            "euler_lagrange": f(el),
            "harmonic_orthogonality": f(sol.harmonic_orthogonality),
            "flux_balance": flux.map(f),
        }),
    );
    report.insert("energy".into(), f(sol.energy));
    report.insert("energy_min_relative_increase".into(), f(minimality));
    report.insert(
        "norms".into(),
        json!({
            "a": f(cx.norm(k, &state.a)),
            "sigma": f(if k > 0 { cx.norm(k - 1, &state.sigma) } else { 0.0 }),
            "harmonic_removed": f(cx.norm(k, &space.restrict(&sol.harmonic_removed)?)),
        }),
    );
    if let Some(dir) = &cli.out {
        write_form(dir, "solution", k, &loaded.hash, &sol.a)?;
        if k > 0 {
            write_form(dir, "sigma", k - 1, &loaded.hash, &sol.sigma)?;
        }
        write_form(dir, "harmonic_removed", k, &loaded.hash, &sol.harmonic_removed)?;
        if cli.vtk {
            write_root_vtk(dir, "solution", g, &cx, k, &sol.a)?;
            if k > 0 {
                write_root_vtk(dir, "sigma", g, &cx, k - 1, &sol.sigma)?;
            }
        }
    }
    Ok(true)
}

fn poincare(cli: &Cli, g: &ForestGeometry, report: &mut Map<String, Value>) -> Result<bool> {
    let bc = cli.bc();
    set_common(cli, report, Some(bc));
    let tol = cli.tol.unwrap_or(1e-10);
    let opts = SolverOptions::default();
    let cx = MixedComplex::assemble(g, cli.weights(), bc)?;
    let betti = betti_numbers(&cx)?;
    report.insert("betti".into(), json!(betti));
    report.insert("tolerance".into(), f(tol));
    let mut all = true;
    let mut degrees = Vec::new();
    for k in cli.degrees(g.n())? {
        let beta = betti[k];
        let pc = poincare_constant(&cx, k, beta, cli.seed, &opts)?;
        let h = harmonic_basis(&cx, k, beta, cli.seed, &opts)?;
        let mut r = rng(cli.seed, 200 + k as u64);
        let mut slack = f64::INFINITY;
        for _ in 0..cli.samples(200) {
            let mut a = random_vec(&mut r, cx.dim(k));
            project_out(&cx, k, &h, &mut a);
            let mut bound = 0.0;
            if k < cx.n {
                bound += cx.norm(k + 1, &cx.derivative(k, &a));
            }
            if k > 0 {
                bound += cx.norm(k - 1, &cx.codifferential(k, &a));
            }
            let an = cx.norm(k, &a);
            if an > 0.0 {
                slack = slack.min((pc.constant * bound - an) / an);
            }
        }
        // dense generalized eigenproblem; skipped on large spaces
        let coercivity = if cx.dim(k) <= opts.dense_limit {
            Some(coercivity_estimate(g, &cx, k, &coefficients(cli, k)?, beta)?)
        } else {
            None
        };
        let pass = slack >= -tol && coercivity.is_none_or(|c| c > 0.0);
        all &= pass;
        degrees.push(json!({
            "k": k,
            "harmonic_dim": beta,
            "poincare_constant": f(pc.constant),
            "lambda": f(pc.lambda),
            "method": serde_json::to_value(pc.method)?,
            "min_relative_slack": f(slack),
            "coercivity": coercivity.map(f),
            "pass": pass,
        }));
    }
    report.insert("degrees".into(), Value::Array(degrees));
    Ok(all)
}
