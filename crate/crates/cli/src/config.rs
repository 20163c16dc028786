//! Run configuration: the JSON config file schema, the command-line value
//! parsers, and the merge rule that lets flags override file settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dyneq::pipeline::{GridSpec, Spacing};
use dyneq::sim::Event;
use dyneq::ReductionOptions;

use crate::Failure;

/// One named disturbance study: an event list plus integration settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub events: Vec<Event>,
    /// Integration step in seconds; the simulator default applies if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Window length in seconds; the simulator default applies if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

/// JSON config file. Every field is optional; command-line flags override
/// whatever the file sets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Case file the subcommand operates on, unless `--case` overrides it.
    pub case_path: Option<PathBuf>,
    /// Where output files land, unless `--out-dir` overrides it.
    pub out_dir: Option<PathBuf>,
    /// Pipeline settings (band, tolerances, fit orders, grid).
    pub reduction: ReductionOptions,
    /// Disturbance studies for `simulate` and `compare`.
    pub scenarios: Vec<Scenario>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Failure::Config(format!("config {} is invalid: {e}", path.display()))
        })?;
        for scenario in &config.scenarios {
            validate_scenario_name(&scenario.name)?;
        }
        let mut names: Vec<&str> = config.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != config.scenarios.len() {
            return Err(Failure::Config("scenario names must be unique".into()));
        }
        Ok(config)
    }
}

fn validate_scenario_name(name: &str) -> Result<(), Failure> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "scenario name '{name}' must be non-empty and use only letters, digits, '_' or '-'"
        )))
    }
}

/// Flags shared by the subcommands that run parts of the pipeline.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Case file (JSON); overrides the config's case_path
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// JSON config with reduction options and scenarios
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Mode-search band in Hz, as lo:hi
    #[arg(long, value_parser = parse_band)]
    pub band: Option<(f64, f64)>,
    /// Coherency tolerance on mode-shape angles, degrees
    #[arg(long)]
    pub angle_tol: Option<f64>,
    /// Fit orders as num:den, applied to every controller kind
    #[arg(long, value_parser = parse_orders)]
    pub orders: Option<(usize, usize)>,
    /// Frequency grid as lo:hi:n:log or lo:hi:n:linear, in Hz
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
    /// Model every machine as classical, ignoring one-axis data
    #[arg(long)]
    pub classical: bool,
}

/// Settings after merging the config file with the command line.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub case_path: PathBuf,
    pub out_dir: PathBuf,
    pub options: ReductionOptions,
    pub scenarios: Vec<Scenario>,
}

pub fn resolve(args: &CommonArgs) -> Result<Resolved, Failure> {
    let config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let case_path = args
        .case
        .clone()
        .or(config.case_path)
        .ok_or_else(|| Failure::Config("no case file: pass --case or set case_path".into()))?;
    if !case_path.exists() {
        return Err(Failure::Config(format!(
            "case file {} does not exist",
            case_path.display()
        )));
    }
    let out_dir = args
        .out_dir
        .clone()
        .or(config.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));

    let mut options = config.reduction;
    if let Some(band) = args.band {
        options.band_hz = band;
    }
    if let Some(tol) = args.angle_tol {
        options.angle_tol_deg = tol;
    }
    if let Some(orders) = args.orders {
        options.avr_orders = orders;
        options.gov_orders = orders;
        options.pss_orders = orders;
    }
    if let Some(grid) = args.grid {
        options.grid = grid;
    }
    if args.classical {
        options.force_classical = true;
    }
    if !(options.band_hz.0 < options.band_hz.1) {
        return Err(Failure::Config(format!(
            "band must satisfy lo < hi, got {}:{}",
            options.band_hz.0, options.band_hz.1
        )));
    }
    Ok(Resolved { case_path, out_dir, options, scenarios: config.scenarios })
}

pub fn parse_band(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got '{text}'"))?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad band low '{lo}'"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad band high '{hi}'"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("band must satisfy lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

pub fn parse_orders(text: &str) -> Result<(usize, usize), String> {
    let (num, den) = text
        .split_once(':')
        .ok_or_else(|| format!("expected num:den, got '{text}'"))?;
    let num: usize = num.parse().map_err(|_| format!("bad numerator order '{num}'"))?;
    let den: usize = den.parse().map_err(|_| format!("bad denominator order '{den}'"))?;
    Ok((num, den))
}

pub fn parse_grid(text: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n, spacing] = parts[..] else {
        return Err(format!("expected lo:hi:n:log or lo:hi:n:linear, got '{text}'"));
    };
    let lo_hz: f64 = lo.parse().map_err(|_| format!("bad grid low '{lo}'"))?;
    let hi_hz: f64 = hi.parse().map_err(|_| format!("bad grid high '{hi}'"))?;
    let n_points: usize = n.parse().map_err(|_| format!("bad point count '{n}'"))?;
    let spacing = match spacing {
        "log" => Spacing::Log,
        "linear" => Spacing::Linear,
        other => return Err(format!("spacing must be 'log' or 'linear', got '{other}'")),
    };
    if !(lo_hz > 0.0 && hi_hz > lo_hz && n_points >= 2) {
        return Err(format!(
            "grid requires 0 < lo < hi and n >= 2, got '{text}'"
        ));
    }
    Ok(GridSpec { lo_hz, hi_hz, n_points, spacing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_and_orders_parse_and_reject() {
        assert_eq!(parse_band("0.5:0.8").unwrap(), (0.5, 0.8));
        assert!(parse_band("0.8:0.5").is_err());
        assert!(parse_band("x:1").is_err());
        assert_eq!(parse_orders("3:4").unwrap(), (3, 4));
        assert!(parse_orders("3").is_err());
    }

    #[test]
    fn grid_parses_both_spacings() {
        let g = parse_grid("0.05:5:120:log").unwrap();
        assert_eq!(g.n_points, 120);
        assert_eq!(g.spacing, Spacing::Log);
        let g = parse_grid("1:2:10:linear").unwrap();
        assert_eq!(g.spacing, Spacing::Linear);
        assert!(parse_grid("1:2:10:cubic").is_err());
        assert!(parse_grid("2:1:10:log").is_err());
    }

    #[test]
    fn flags_override_config_values() {
        let args = CommonArgs {
            case: Some(PathBuf::from("Cargo.toml")),
            config: None,
            out_dir: None,
            band: Some((0.5, 0.8)),
            angle_tol: Some(15.0),
            orders: Some((2, 3)),
            grid: None,
            classical: true,
        };
        let resolved = resolve(&args).unwrap();
        assert_eq!(resolved.options.band_hz, (0.5, 0.8));
        assert_eq!(resolved.options.angle_tol_deg, 15.0);
        assert_eq!(resolved.options.avr_orders, (2, 3));
        assert_eq!(resolved.options.pss_orders, (2, 3));
        assert!(resolved.options.force_classical);
        assert_eq!(resolved.out_dir, PathBuf::from("."));
    }

    #[test]
    fn missing_case_is_a_config_error() {
        let args = CommonArgs {
            case: None,
            config: None,
            out_dir: None,
            band: None,
            angle_tol: None,
            orders: None,
            grid: None,
            classical: false,
        };
        assert!(matches!(resolve(&args), Err(Failure::Config(_))));
        let args = CommonArgs {
            case: Some(PathBuf::from("no_such_case.json")),
            config: None,
            out_dir: None,
            band: None,
            angle_tol: None,
            orders: None,
            grid: None,
            classical: false,
        };
        assert!(matches!(resolve(&args), Err(Failure::Config(_))));
    }
}
