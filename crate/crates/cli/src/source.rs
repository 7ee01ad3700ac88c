use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toda_brane::blackhole_report::{preset, Preset};
use toda_brane::lie_cartan::{cartan_matrix_for, AlgebraTag, QuasiCartan};
use toda_brane::moduli_poly::ModuliProblem;
use toda_brane::sigma_model::{scalar_products, BraneConfig, CouplingData};

use crate::args::SourceArgs;
use crate::error::{CliError, Result};

/// A configuration with its coupling data, or a bare matrix.
#[derive(Clone, Debug)]
pub enum Source {
    Config { label: String, config: BraneConfig, coupling: CouplingData },
    Algebra { label: String, a: QuasiCartan, bbar: Option<Vec<f64>> },
}

impl Source {
    pub fn resolve(args: &SourceArgs) -> Result<Self> {
        if let Some(path) = &args.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let config = BraneConfig::from_json(&text)?;
            let coupling = scalar_products(&config)?;
            return Ok(Source::Config { label: path.display().to_string(), config, coupling });
        }
        if let Some(label) = &args.algebra {
            let tag: AlgebraTag = label.parse()?;
            let a = cartan_matrix_for(&tag)?;
            let bbar = if args.bbar.is_empty() { None } else { Some(args.bbar.clone()) };
            return Ok(Source::Algebra { label: format!("algebra:{tag}"), a, bbar });
        }
        if !args.bbar.is_empty() {
            return Err(CliError::validation("--bbar only applies together with --algebra"));
        }
        let name = args.preset.as_deref().unwrap_or("m2m5_dyon");
        let which: Preset = name.parse()?;
        let data = preset(which, args.q1, args.q2)?;
        Ok(Source::Config { label: format!("preset:{which}"), config: data.config, coupling: data.coupling })
    }

    pub fn label(&self) -> &str {
        match self {
            Source::Config { label, .. } | Source::Algebra { label, .. } => label,
        }
    }

    pub fn charges(&self) -> Vec<f64> {
        match self {
            Source::Config { config, .. } => config.branes.iter().map(|b| b.charge).collect(),
            Source::Algebra { .. } => Vec::new(),
        }
    }

    /// The same configuration with every charge set to `q`.
    pub fn with_charge(&self, q: f64) -> Result<Self> {
        match self {
            Source::Config { label, config, .. } => {
                let mut config = config.clone();
                for b in &mut config.branes {
                    b.charge = q;
                }
                config.validate()?;
                let coupling = scalar_products(&config)?;
                Ok(Source::Config { label: label.clone(), config, coupling })
            }
            Source::Algebra { .. } => Err(CliError::validation("a charge sweep needs a brane configuration")),
        }
    }

    /// `Bbar` given on the command line, or drawn uniformly from `[-2, -0.5)`
    /// with `seed` when omitted.
    pub fn problem(&self, mu: f64, seed: u64) -> Result<ModuliProblem> {
        match self {
            Source::Config { config, coupling, .. } => Ok(ModuliProblem::from_config(config, coupling, mu)?),
            Source::Algebra { a, bbar, .. } => {
                let bbar = match bbar {
                    Some(b) => b.clone(),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        (0..a.size()).map(|_| -rng.random_range(0.5..2.0)).collect()
                    }
                };
                Ok(ModuliProblem::new(a.clone(), mu, bbar)?)
            }
        }
    }

    pub fn config(&self) -> Result<(&BraneConfig, &CouplingData)> {
        match self {
            Source::Config { config, coupling, .. } => Ok((config, coupling)),
            Source::Algebra { .. } => Err(CliError::validation("this command needs a brane configuration (--config or --preset)")),
        }
    }
}
