use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::manifest::Range;

#[derive(Parser, Debug)]
#[command(name = "toda-brane", version, about = "Moduli polynomials, oracles and horizon data for intersecting-brane black holes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Coupling data, classification and restriction checks of a configuration.
    Analyze {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Solve for the moduli polynomials; writes solution.json and moduli.csv.
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        mu: f64,
        /// Points of the H CSV on [0, 1/(2 mu)].
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Allowed residual of the moduli equation on the grid.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare the polynomial solution with direct integration (and shooting).
    Verify {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Points on [0, 0.45/mu] where the integration is compared.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        /// Allowed max |H_ode - H_poly|.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Also recover the slopes by shooting (at most three branes).
        #[arg(long)]
        shoot: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Black-hole observables: exponents, T_H, existence bound, metric CSV.
    Report {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Polynomial degrees n_s = 2 sum_t A^{st}.
    Degrees {
        /// Label such as A4, C2 or A1+A2.
        #[arg(long, group = "matrix_source")]
        algebra: Option<String>,
        /// Rows separated by ';', entries by ',' (e.g. "2,-1;-2,2").
        #[arg(long, group = "matrix_source", allow_hyphen_values = true)]
        matrix: Option<String>,
    },
    /// Exact A_m Toda trajectory with the black-hole spectrum; writes toda.csv.
    Toda {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        mu_bar: f64,
        #[arg(long, default_value_t = 1.0)]
        dbar: f64,
        /// h_s, shared by all branes.
        #[arg(long, default_value_t = 0.5)]
        h: f64,
        /// B_s > 0; defaults to the symmetric amplitudes.
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        #[arg(long, default_value_t = 3.0)]
        u_max: f64,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve over a range of mu or of the charges; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// A value or a range start:end:count.
        #[arg(long, default_value = "1.0")]
        mu: String,
        /// Range start:end:count applied to every charge.
        #[arg(long, allow_hyphen_values = true)]
        q: Option<Range>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Brane configuration file (JSON).
    #[arg(long, group = "source")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: m2m5_dyon (default) or kk_dyon.
    #[arg(long, group = "source")]
    pub preset: Option<String>,
    /// Bare matrix label such as A2; Bbar from --bbar or a seeded draw.
    #[arg(long, group = "source")]
    pub algebra: Option<String>,
    /// Electric preset charge.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub q1: f64,
    /// Magnetic preset charge.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub q2: f64,
    /// Comma-separated Bbar_s for --algebra.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bbar: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, short = 'o', default_value = ".")]
    pub out: PathBuf,
    /// Seed for random choices; TODA_BRANE_SEED takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
