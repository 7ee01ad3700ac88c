use rayon::prelude::*;
use serde::Serialize;

use toda_brane::blackhole_report::{
    assemble_solution, existence_check, format_csv, kk_lift, ExistenceReport, Moduli, ReportError,
};
use toda_brane::lie_cartan::{
    cartan_matrix, inverse_cartan, polynomial_degrees, to_f64, validate_quasi_cartan, AlgebraTag, Family,
    QuasiCartan, Rational, RationalMatrix,
};
use toda_brane::moduli_poly::{interior_grid, residual, solve_poly, ModuliPolynomial, PolySolution};
use toda_brane::seed_from_env;
use toda_brane::sigma_model::{check_restrictions, intersection_dims, BraneConfig, CouplingData};
use toda_brane::toda_oracle::{
    anderson_q, anderson_qdot, black_hole_spectrum, energy_at, h_from_toda, integrate_ode, shoot, toda_energy,
    toda_polynomial, toda_residual, uniform_amplitudes, z_of_u, ShootOptions, TodaChainSolution,
};

use crate::args::{Command, OutputArgs, SourceArgs};
use crate::error::{CliError, Result};
use crate::manifest::{write_json, write_text, Range, RunManifest};
use crate::source::Source;

const SHOOT_TOL: f64 = 1e-6;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze { source } => analyze(&source),
        Command::Solve { source, mu, grid, tol, output } => solve(&source, mu, grid, tol, &output),
        Command::Verify { source, mu, grid, tol, shoot, output } => verify(&source, mu, grid, tol, shoot, &output),
        Command::Report { source, mu, grid, output } => report(&source, mu, grid, &output),
        Command::Degrees { algebra, matrix } => degrees(algebra.as_deref(), matrix.as_deref()),
        Command::Toda { m, mu_bar, dbar, h, b, u_max, grid, output } => {
            toda(TodaArgs { m, mu_bar, dbar, h, b, u_max, grid }, &output)
        }
        Command::Sweep { source, mu, q, output } => sweep(&source, &mu, q, &output),
    }
}

fn manifest(command: &str, src: &Source, output: &OutputArgs) -> RunManifest {
    let mut m = RunManifest::new(command, src.label().to_string(), output.out.clone(), seed_from_env(output.seed));
    m.charges = src.charges();
    m
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn analyze(args: &SourceArgs) -> Result<()> {
    let src = Source::resolve(args)?;
    println!("source: {}", src.label());
    match &src {
        Source::Config { config, coupling, .. } => analyze_config(config, coupling),
        Source::Algebra { a, .. } => {
            println!("A =\n{a}");
            println!("{}", validate_quasi_cartan(a.entries())?);
            println!("degrees: {}", polynomial_degrees(a)?);
            Ok(())
        }
    }
}

fn analyze_config(config: &BraneConfig, coupling: &CouplingData) -> Result<()> {
    println!("D = {}, dbar = {}", config.total_dimension(), config.dbar());
    for (s, b) in config.branes.iter().enumerate() {
        let set: Vec<String> = b.index_set.iter().map(|i| i.to_string()).collect();
        println!("brane {s}: {} colour {} I = {{{}}} eps = {} Q = {}", b.kind, b.color, set.join(","), b.epsilon, b.charge);
    }
    println!("B =");
    for row in coupling.b.row_iter() {
        println!("  [{}]", fmt_row(&row.iter().copied().collect::<Vec<_>>()));
    }
    println!("K = [{}]", fmt_row(&coupling.k));
    println!("h = [{}]", fmt_row(&coupling.h));
    println!("A =\n{}", coupling.a);
    match coupling.a.tag() {
        Some(tag) => println!("classification: {tag} (polynomial structure guaranteed: {})", tag.conjecture_guaranteed()),
        None => println!("classification: none"),
    }
    println!("degrees: {}", coupling.degrees()?);
    let inter = intersection_dims(config, coupling, &coupling.a)?;
    if inter.is_consistent() {
        println!("intersection rule: consistent");
    } else {
        for (s, t, p, a) in &inter.mismatches {
            println!("intersection rule: branes {s},{t} predict {p}, index sets give {a}");
        }
    }
    let restrictions = check_restrictions(config);
    println!("{restrictions}");
    if restrictions.blocks_black_hole() {
        return Err(CliError::validation("restriction check failed: every brane must contain the time factor"));
    }
    Ok(())
}

#[derive(Serialize)]
struct AlternateSummary<'a> {
    coefficients: &'a [Vec<f64>],
    residual: f64,
    positive: bool,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    source: &'a str,
    mu: f64,
    bbar: &'a [f64],
    degrees: Vec<usize>,
    polynomial_structure_guaranteed: bool,
    coefficients: &'a [Vec<f64>],
    slopes: Vec<f64>,
    horizon_values: Vec<f64>,
    residual: f64,
    grid_residual: f64,
    overflow: f64,
    continuation_steps: usize,
    newton_iterations: usize,
    alternates: Vec<AlternateSummary<'a>>,
}

fn moduli_csv(poly: &ModuliPolynomial, grid: usize) -> String {
    let mut header = vec!["z".to_string()];
    header.extend((1..=poly.len()).map(|s| format!("H{s}")));
    let z_end = poly.z_end();
    let rows: Vec<Vec<f64>> = (0..grid)
        .map(|i| {
            let z = z_end * i as f64 / (grid - 1) as f64;
            let mut row = vec![z];
            row.extend((0..poly.len()).map(|s| poly.eval(s, z)));
            row
        })
        .collect();
    format_csv(&header, &rows)
}

fn solve(args: &SourceArgs, mu: f64, grid: usize, tol: f64, output: &OutputArgs) -> Result<()> {
    let src = Source::resolve(args)?;
    let mut m = manifest("solve", &src, output);
    m.mu = Some(mu);
    m.grid = grid;
    m.tolerance = tol;
    m.validate()?;
    let problem = src.problem(mu, m.seed)?;
    let sol = solve_poly(&problem)?;
    let grid_residual = residual(&sol.poly, &problem, &interior_grid(mu, 1000))?;
    if grid_residual > tol {
        return Err(CliError::solver(format!(
            "moduli equation residual {grid_residual:e} exceeds tolerance {tol:e}"
        )));
    }
    m.prepare_output()?;
    let summary = SolveSummary {
        source: src.label(),
        mu,
        bbar: problem.bbar(),
        degrees: problem.integer_degrees()?,
        polynomial_structure_guaranteed: problem.a().conjecture_guaranteed(),
        coefficients: &sol.poly.coeffs,
        slopes: sol.poly.slopes(),
        horizon_values: sol.poly.horizon_values(),
        residual: sol.residual,
        grid_residual,
        overflow: sol.overflow,
        continuation_steps: sol.steps,
        newton_iterations: sol.newton_iterations,
        alternates: sol
            .alternates
            .iter()
            .map(|a| AlternateSummary { coefficients: &a.poly.coeffs, residual: a.residual, positive: a.positive })
            .collect(),
    };
    write_json(&m.path("solution.json"), &summary)?;
    write_text(&m.path("moduli.csv"), &moduli_csv(&sol.poly, grid))?;
    println!("{}", sol.poly);
    println!("residual on grid: {grid_residual:.3e}; overflow: {:.3e}", sol.overflow);
    if !sol.alternates.is_empty() {
        println!("{} further root(s) of the coefficient system recorded", sol.alternates.len());
    }
    println!("wrote {} and {}", m.path("solution.json").display(), m.path("moduli.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    source: &'a str,
    mu: f64,
    bbar: &'a [f64],
    z_end: f64,
    grid: usize,
    tolerance: f64,
    max_discrepancy: f64,
    polynomial_slopes: Vec<f64>,
    shooting_slopes: Option<Vec<f64>>,
    shooting_slope_error: Option<f64>,
    passed: bool,
}

fn verify(args: &SourceArgs, mu: f64, grid: usize, tol: f64, with_shoot: bool, output: &OutputArgs) -> Result<()> {
    let src = Source::resolve(args)?;
    let mut m = manifest("verify", &src, output);
    m.mu = Some(mu);
    m.grid = grid;
    m.tolerance = tol;
    m.validate()?;
    let problem = src.problem(mu, m.seed)?;
    let PolySolution { poly, .. } = solve_poly(&problem)?;
    let z_end = 0.45 / mu;
    let slopes = poly.slopes();
    let run = integrate_ode(&problem, &slopes, z_end, grid)?;
    let max_discrepancy = run.max_discrepancy(&poly);
    let shot = if with_shoot { Some(shoot(&problem, &ShootOptions::default())?) } else { None };
    let slope_error = shot.as_ref().map(|r| max_abs_diff(&r.slopes, &slopes));
    let passed = max_discrepancy <= tol && slope_error.is_none_or(|e| e <= SHOOT_TOL);

    m.prepare_output()?;
    let summary = VerifySummary {
        source: src.label(),
        mu,
        bbar: problem.bbar(),
        z_end,
        grid,
        tolerance: tol,
        max_discrepancy,
        polynomial_slopes: slopes,
        shooting_slopes: shot.map(|r| r.slopes),
        shooting_slope_error: slope_error,
        passed,
    };
    write_json(&m.path("verify.json"), &summary)?;
    println!("max discrepancy = {max_discrepancy:.3e} on [0, {z_end}] (tolerance {tol:.1e})");
    if let Some(e) = slope_error {
        println!("shooting slope error = {e:.3e} (tolerance {SHOOT_TOL:.1e})");
    }
    if passed {
        println!("verify: PASS");
        Ok(())
    } else {
        println!("verify: FAIL");
        Err(CliError::solver("polynomial and integrated solutions disagree beyond tolerance"))
    }
}

#[derive(Serialize)]
struct ExponentRow {
    block: String,
    coefficients: Vec<String>,
    exponents: Vec<f64>,
}

#[derive(Serialize)]
struct ExistenceSummary {
    e_tl: f64,
    charge_sum: f64,
    verdict: String,
}

impl From<&ExistenceReport> for ExistenceSummary {
    fn from(r: &ExistenceReport) -> Self {
        ExistenceSummary { e_tl: r.e_tl, charge_sum: r.charge_sum, verdict: r.verdict.to_string() }
    }
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    source: &'a str,
    mu: f64,
    dbar: f64,
    t_hawking: f64,
    horizon_values: &'a [f64],
    coefficients: &'a [Vec<f64>],
    exponents: Vec<ExponentRow>,
    scalar_exponents: &'a [Vec<f64>],
    existence: ExistenceSummary,
    kk_lift: Option<String>,
}

fn report(args: &SourceArgs, mu: f64, grid: usize, output: &OutputArgs) -> Result<()> {
    let src = Source::resolve(args)?;
    let mut m = manifest("report", &src, output);
    m.mu = Some(mu);
    m.grid = grid;
    m.validate()?;
    let (config, coupling) = src.config()?;
    let existence = existence_check(coupling, mu * f64::from(config.dbar()), &config.branes)?;
    println!("{existence}");
    let problem = src.problem(mu, m.seed)?;
    let sol = solve_poly(&problem)?;
    let coefficients = sol.poly.coeffs.clone();
    let bh = assemble_solution(config, coupling, Moduli::Polynomial(sol.poly), mu)?;
    println!("{bh}");
    let lift = match kk_lift(&bh, grid) {
        Ok(l) => Some(l),
        Err(ReportError::NotKkPreset) => None,
        Err(e) => return Err(e.into()),
    };

    m.prepare_output()?;
    let t = &bh.exponent_table;
    let exponents = t
        .blocks
        .iter()
        .enumerate()
        .map(|(row, blk)| ExponentRow {
            block: blk.to_string(),
            coefficients: t.coeffs[row].iter().map(|c| c.to_string()).collect(),
            exponents: (0..t.h.len()).map(|s| t.exponent(row, s)).collect(),
        })
        .collect();
    let summary = ReportSummary {
        source: src.label(),
        mu,
        dbar: bh.dbar(),
        t_hawking: bh.t_hawking,
        horizon_values: &bh.h0,
        coefficients: &coefficients,
        exponents,
        scalar_exponents: &bh.scalar_exponents,
        existence: (&existence).into(),
        kk_lift: lift.as_ref().map(|l| l.kind.to_string()),
    };
    write_json(&m.path("report.json"), &summary)?;
    write_text(&m.path("metric.csv"), &bh.metric_csv(grid))?;
    if let Some(lift) = &lift {
        let header: Vec<String> = ["z", "four_block", "fifth_block", "phi"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<f64>> =
            lift.samples.iter().map(|s| vec![s.z, s.four_block, s.fifth_block, s.phi]).collect();
        write_text(&m.path("kk_lift.csv"), &format_csv(&header, &rows))?;
        println!("Kaluza-Klein lift: {}", lift.kind);
    }
    println!("wrote {} and {}", m.path("report.json").display(), m.path("metric.csv").display());
    Ok(())
}

fn parse_matrix(text: &str) -> Result<QuasiCartan> {
    let entries: RationalMatrix = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<Rational>()
                        .map_err(|e| CliError::validation(format!("matrix entry {:?}: {e}", x.trim())))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(QuasiCartan::new(entries)?)
}

fn degrees(algebra: Option<&str>, matrix: Option<&str>) -> Result<()> {
    let a = match (algebra, matrix) {
        (Some(label), _) => toda_brane::lie_cartan::cartan_matrix_for(&label.parse::<AlgebraTag>()?)?,
        (None, Some(text)) => parse_matrix(text)?,
        (None, None) => return Err(CliError::validation("degrees needs --algebra or --matrix")),
    };
    println!("{}", polynomial_degrees(&a)?);
    Ok(())
}

struct TodaArgs {
    m: usize,
    mu_bar: f64,
    dbar: f64,
    h: f64,
    b: Vec<f64>,
    u_max: f64,
    grid: usize,
}

#[derive(Serialize)]
struct TodaSummary<'a> {
    m: usize,
    mu_bar: f64,
    dbar: f64,
    h: f64,
    w: &'a [f64],
    v: &'a [f64],
    b: &'a [f64],
    c: &'a [f64],
    degrees: &'a [usize],
    e_t: f64,
    e_tl: f64,
    e_tl_from_matrix: f64,
    max_energy_drift: f64,
    max_equation_residual: f64,
    coefficients: &'a [Vec<f64>],
}

fn toda(args: TodaArgs, output: &OutputArgs) -> Result<()> {
    let mut man = RunManifest::new("toda", format!("algebra:A{}", args.m), output.out.clone(), seed_from_env(output.seed));
    man.mu = Some(args.mu_bar / args.dbar);
    man.charges = args.b.clone();
    man.grid = args.grid;
    man.validate()?;
    if !(args.u_max > 0.0 && args.u_max.is_finite()) {
        return Err(CliError::validation(format!("u-max must be positive, got {}", args.u_max)));
    }
    if args.m == 0 {
        return Err(CliError::validation("chain length m must be at least 1"));
    }
    let w = black_hole_spectrum(args.m, args.mu_bar);
    let sol = if args.b.is_empty() {
        TodaChainSolution::from_amplitudes(w.clone(), uniform_amplitudes(&w))?
    } else {
        TodaChainSolution::calibrated(w, &args.b)?
    };
    let a = cartan_matrix(Family::A, args.m)?;
    let n = polynomial_degrees(&a)?
        .integers()
        .ok_or_else(|| CliError::validation("A_m degrees are not integers"))?;
    let u: Vec<f64> = (0..args.grid).map(|i| args.u_max * i as f64 / (args.grid - 1) as f64).collect();
    let hs = h_from_toda(&sol, &n, args.mu_bar, &u)?;

    let energy = toda_energy(&sol, args.h);
    let mut drift = 0.0f64;
    let mut eq_residual = 0.0f64;
    let mut rows = Vec::with_capacity(u.len());
    for (i, (&ui, h)) in u.iter().zip(&hs).enumerate() {
        let q = anderson_q(&sol, ui)?;
        let qdot = anderson_qdot(&sol, ui)?;
        drift = drift.max((energy_at(&sol, &q, &qdot) - energy.e_t).abs());
        if i > 0 && i + 1 < u.len() {
            let r = toda_residual(&sol, ui, 1e-3, true)?;
            eq_residual = r.iter().fold(eq_residual, |acc, x| acc.max(x.abs()));
        }
        let mut row = vec![ui, z_of_u(ui, args.mu_bar, args.dbar)];
        row.extend(&q);
        row.extend(h);
        rows.push(row);
    }
    let inv_sum: f64 = inverse_cartan(&a)?.iter().flatten().map(to_f64).sum();
    let e_tl_from_matrix = args.mu_bar * args.mu_bar * args.h * inv_sum;
    let poly = toda_polynomial(&sol, &n, args.mu_bar, args.dbar)?;

    man.prepare_output()?;
    let mut header = vec!["u".to_string(), "z".to_string()];
    header.extend((1..=args.m).map(|s| format!("q{s}")));
    header.extend((1..=args.m).map(|s| format!("H{s}")));
    write_text(&man.path("toda.csv"), &format_csv(&header, &rows))?;
    let summary = TodaSummary {
        m: args.m,
        mu_bar: args.mu_bar,
        dbar: args.dbar,
        h: args.h,
        w: sol.w(),
        v: sol.v(),
        b: sol.b(),
        c: sol.c(),
        degrees: &n,
        e_t: energy.e_t,
        e_tl: energy.e_tl,
        e_tl_from_matrix,
        max_energy_drift: drift,
        max_equation_residual: eq_residual,
        coefficients: &poly.coeffs,
    };
    write_json(&man.path("toda.json"), &summary)?;
    println!("E_T = {:.16e}", energy.e_t);
    println!("E_TL = {:.16e} (matrix form {:.16e})", energy.e_tl, e_tl_from_matrix);
    println!("max energy drift = {drift:.3e}; max equation residual = {eq_residual:.3e}");
    println!("wrote {} and {}", man.path("toda.csv").display(), man.path("toda.json").display());
    Ok(())
}

enum MuSpec {
    Value(f64),
    Range(Range),
}

fn parse_mu(text: &str) -> Result<MuSpec> {
    if text.contains(':') {
        text.parse::<Range>().map(MuSpec::Range).map_err(CliError::validation)
    } else {
        text.trim()
            .parse::<f64>()
            .map(MuSpec::Value)
            .map_err(|e| CliError::validation(format!("mu {text:?}: {e}")))
    }
}

struct PointResult {
    t_hawking: f64,
    h0: Vec<f64>,
    slopes: Vec<f64>,
    residual: f64,
}

fn sweep_point(src: &Source, mu: f64, q: Option<f64>, seed: u64) -> Result<PointResult> {
    let owned;
    let src = match q {
        Some(q) => {
            owned = src.with_charge(q)?;
            &owned
        }
        None => src,
    };
    let problem = src.problem(mu, seed)?;
    let sol = solve_poly(&problem)?;
    let t_hawking = match src {
        Source::Config { config, coupling, .. } => {
            assemble_solution(config, coupling, Moduli::Polynomial(sol.poly.clone()), mu)?.t_hawking
        }
        Source::Algebra { .. } => f64::NAN,
    };
    Ok(PointResult { t_hawking, h0: sol.poly.horizon_values(), slopes: sol.poly.slopes(), residual: sol.residual })
}

fn sweep(args: &SourceArgs, mu: &str, q: Option<Range>, output: &OutputArgs) -> Result<()> {
    let src = Source::resolve(args)?;
    let mut m = manifest("sweep", &src, output);
    let points: Vec<(f64, Option<f64>)> = match (parse_mu(mu)?, q) {
        (MuSpec::Range(_), Some(_)) => return Err(CliError::validation("sweep either mu or the charges, not both")),
        (MuSpec::Range(r), None) => {
            m.mu_range = Some(r);
            r.points().into_iter().map(|mu| (mu, None)).collect()
        }
        (MuSpec::Value(mu), Some(r)) => {
            m.mu = Some(mu);
            m.charge_range = Some(r);
            r.points().into_iter().map(|q| (mu, Some(q))).collect()
        }
        (MuSpec::Value(mu), None) => {
            m.mu = Some(mu);
            vec![(mu, None)]
        }
    };
    m.validate()?;
    if q.is_some() {
        src.config()?;
    }
    let n = match &src {
        Source::Config { config, .. } => config.branes.len(),
        Source::Algebra { a, .. } => a.size(),
    };
    let with_t = matches!(src, Source::Config { .. });
    let seed = m.seed;
    let results: Vec<Result<PointResult>> =
        points.par_iter().map(|&(mu, q)| sweep_point(&src, mu, q, seed)).collect();

    let mut header = vec!["mu".to_string()];
    if q.is_some() {
        header.push("q".into());
    }
    header.push("status".into());
    if with_t {
        header.push("T_H".into());
    }
    header.extend((1..=n).map(|s| format!("H{s}0")));
    header.extend((1..=n).map(|s| format!("P{s}")));
    header.push("residual".into());

    let num = |x: f64| format!("{x:.16e}");
    let mut text = header.join(",");
    text.push('\n');
    let mut failed = 0;
    for (&(mu, qv), res) in points.iter().zip(&results) {
        let mut cells = vec![num(mu)];
        if let Some(qv) = qv {
            cells.push(num(qv));
        }
        match res {
            Ok(p) => {
                cells.push("ok".into());
                if with_t {
                    cells.push(num(p.t_hawking));
                }
                cells.extend(p.h0.iter().chain(&p.slopes).map(|x| num(*x)));
                cells.push(num(p.residual));
            }
            Err(e) => {
                failed += 1;
                cells.push(e.kind.label().into());
                let blanks = 2 * n + 1 + usize::from(with_t);
                cells.extend(std::iter::repeat_n(num(f64::NAN), blanks));
            }
        }
        text.push_str(&cells.join(","));
        text.push('\n');
    }

    m.prepare_output()?;
    write_text(&m.path("sweep.csv"), &text)?;
    if failed > 0 {
        eprintln!("warning: {failed} of {} sweep points failed", points.len());
    }
    println!("wrote {} ({} rows)", m.path("sweep.csv").display(), points.len());
    Ok(())
}
