//! Experiment config files, grids, hashing and report output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use riskpoa_core::mechanisms::MechanismKind;
use riskpoa_core::smoothness::DeviationRule;
use riskpoa_core::utility::{ConcaveTransform, UtilityModel};

use crate::commands::{
    CertifyParams, LearnParams, Lemma1Params, NormalizationParams, Observation1Params, PoaSweepParams,
    Theorem6Params, TwoItemParams,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "riskpoa";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One JSON document per run; each subcommand reads its own block.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub verify_theorem6: Option<Theorem6Params>,
    #[serde(default)]
    pub learn: Option<LearnParams>,
    #[serde(default)]
    pub certify: Option<CertifyParams>,
    #[serde(default)]
    pub poa_sweep: Option<PoaSweepParams>,
    #[serde(default)]
    pub check_normalization: Option<NormalizationParams>,
    #[serde(default)]
    pub verify_observation1: Option<Observation1Params>,
    #[serde(default)]
    pub verify_two_item: Option<TwoItemParams>,
    #[serde(default)]
    pub lemma1_test: Option<Lemma1Params>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig { schema_version: SCHEMA_VERSION, ..Default::default() });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        ensure!(
            cfg.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
        Ok(cfg)
    }
}

/// Evenly spaced points on `[lo, hi]`, optionally with `geometric` extra
/// points halving towards zero below the first step when `lo` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default)]
    pub geometric: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Grid { lo, hi, points, geometric: 0 }
    }

    pub fn build(&self) -> Result<Vec<f64>> {
        ensure!(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi, "grid bounds must satisfy lo <= hi");
        ensure!(self.points >= 1, "grid needs at least one point");
        if self.points == 1 {
            ensure!(self.lo == self.hi, "a one-point grid needs lo == hi");
            return Ok(vec![self.lo]);
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        let mut g: Vec<f64> = (0..self.points).map(|k| self.lo + step * k as f64).collect();
        g[self.points - 1] = self.hi;
        if self.geometric > 0 {
            ensure!(self.lo == 0.0, "geometric refinement needs a grid starting at 0");
            g.extend((1..=self.geometric).map(|k| step * 0.5f64.powi(k as i32)));
            g.sort_by(f64::total_cmp);
        }
        Ok(g)
    }
}

impl FromStr for Grid {
    type Err = String;

    /// `lo:hi:points[:geometric]`
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("expected lo:hi:points[:geometric], got {s:?}"));
        }
        let f = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        let u = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
        Ok(Grid {
            lo: f(parts[0])?,
            hi: f(parts[1])?,
            points: u(parts[2])?,
            geometric: parts.get(3).map(|x| u(x)).transpose()?.unwrap_or(0),
        })
    }
}

/// `lo:hi`
pub fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let f = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((f(a)?, f(b)?))
}

pub fn parse_mechanism(s: &str) -> std::result::Result<MechanismKind, String> {
    match s.replace('_', "-").as_str() {
        "first-price" | "fp" => Ok(MechanismKind::FirstPrice),
        "second-price" | "sp" => Ok(MechanismKind::SecondPrice),
        "all-pay" | "ap" => Ok(MechanismKind::AllPay),
        _ => Err(format!("unknown mechanism {s:?} (first-price, second-price, all-pay)")),
    }
}

/// `quasilinear`, `exponential`, or `piecewise:<slope>`.
pub fn parse_utility(s: &str) -> std::result::Result<UtilityModel, String> {
    let model = match s.split_once(':') {
        None if s == "quasilinear" => UtilityModel::Quasilinear,
        None if s == "exponential" => UtilityModel::exponential(),
        Some(("piecewise", slope)) => {
            let slope: f64 = slope.parse().map_err(|e| format!("slope {slope:?}: {e}"))?;
            UtilityModel::risk_averse(ConcaveTransform::piecewise(slope).map_err(|e| e.to_string())?)
        }
        _ => return Err(format!("unknown utility {s:?} (quasilinear, exponential, piecewise:<slope>)")),
    };
    Ok(model)
}

pub fn parse_deviation(s: &str) -> std::result::Result<DeviationRule, String> {
    match s {
        "half-value" => Ok(DeviationRule::HalfValueTopBidder),
        "uniform" => Ok(DeviationRule::UniformTopBidder),
        "truthful" => Ok(DeviationRule::TruthfulBid),
        _ => Err(format!("unknown deviation {s:?} (half-value, uniform, truthful)")),
    }
}

/// Keys naming output files; they do not enter the config hash.
const OUTPUT_KEYS: [&str; 3] = ["out", "trace", "report"];

/// Canonical form of the resolved parameters: output paths removed, keys
/// sorted (serde_json maps are ordered).
pub fn canonical(params: &impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(params)?;
    if let Value::Object(map) = &mut v {
        for k in OUTPUT_KEYS {
            map.remove(k);
        }
    }
    Ok(v)
}

pub fn config_hash(canonical: &Value) -> String {
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Falsified,
    Uncertified,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Falsified => 2,
            Status::Uncertified => 3,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    config: &'a Value,
    status: Status,
    report: &'a R,
}

/// Provenance shared by every file a run writes.
pub struct Run {
    pub command: &'static str,
    pub config: Value,
    pub hash: String,
}

impl Run {
    pub fn new(command: &'static str, params: &impl Serialize) -> Result<Self> {
        let config = canonical(params)?;
        let hash = config_hash(&config);
        log::info!("{command}: config hash {hash}");
        Ok(Run { command, config, hash })
    }

    pub fn json<R: Serialize>(&self, status: Status, report: &R) -> Result<String> {
        let env = Envelope {
            tool: TOOL,
            version: VERSION,
            command: self.command,
            config_hash: &self.hash,
            config: &self.config,
            status,
            report,
        };
        let mut s = serde_json::to_string_pretty(&env)?;
        s.push('\n');
        Ok(s)
    }

    /// CSV body prefixed with `#` provenance lines.
    pub fn csv(&self, body: &str) -> String {
        format!("# {TOOL} {VERSION}\n# command {}\n# config_hash {}\n{body}", self.command, self.hash)
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&PathBuf>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        bail!("{name} must be positive and finite, got {x}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: Grid = "0:1:11".parse().unwrap();
        assert_eq!(g, Grid::new(0.0, 1.0, 11));
        let pts = g.build().unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[10], 1.0);
        let g: Grid = "0:1:3:2".parse().unwrap();
        assert_eq!(g.build().unwrap(), vec![0.0, 0.125, 0.25, 0.5, 1.0]);
        assert!("0:1".parse::<Grid>().is_err());
        assert!(Grid::new(1.0, 0.0, 3).build().is_err());
    }

    #[test]
    fn hash_ignores_outputs() {
        #[derive(Serialize)]
        struct P {
            a: f64,
            out: Option<String>,
        }
        let h1 = config_hash(&canonical(&P { a: 1.0, out: None }).unwrap());
        let h2 = config_hash(&canonical(&P { a: 1.0, out: Some("x".into()) }).unwrap());
        let h3 = config_hash(&canonical(&P { a: 2.0, out: None }).unwrap());
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 64);
    }

    #[test]
    fn utility_and_mechanism_names() {
        assert_eq!(parse_utility("quasilinear").unwrap(), UtilityModel::Quasilinear);
        assert!(parse_utility("piecewise:0.5").is_err());
        assert!(parse_utility("piecewise:2").is_ok());
        assert_eq!(parse_mechanism("all_pay").unwrap(), MechanismKind::AllPay);
        assert!(parse_mechanism("dutch").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let r: std::result::Result<ExperimentConfig, _> = serde_json::from_str(r#"{"schema_version":1,"lern":{}}"#);
        assert!(r.is_err());
        let r: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"schema_version":1,"learn":{"iterz":5}}"#);
        assert!(r.is_err());
    }
}
