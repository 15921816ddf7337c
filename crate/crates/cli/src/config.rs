//! Run configuration: a JSON file merged under explicit command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use okalab_core::grid::GridSpec;
use okalab_core::potential::{LadderSpec, QuadratureSpec, ScanOptions};
use okalab_core::{builtin, ImplicitDomain};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub expr: Option<String>,
    pub dim: Option<usize>,
    /// `[min1, max1, min2, max2, ...]`; defaults to `[-2, 2]` per axis.
    pub bbox: Option<Vec<f64>>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<ImplicitDomain> {
        match (&self.builtin, &self.expr) {
            (Some(_), Some(_)) => bail!("give either a builtin domain or an expression, not both"),
            (Some(name), None) => {
                if self.dim.is_some() || self.bbox.is_some() {
                    bail!("`dim` and `bbox` apply to expression domains only");
                }
                Ok(builtin(name, &self.params)?)
            }
            (None, Some(src)) => {
                if !self.params.is_empty() {
                    bail!("`params` apply to builtin domains only");
                }
                let dim = self.dim.context("expression domains need `dim`")?;
                let bbox = match &self.bbox {
                    Some(b) => b.clone(),
                    None => (0..dim).flat_map(|_| [-2.0, 2.0]).collect(),
                };
                if bbox.len() != 2 * dim {
                    bail!("bbox needs {} numbers, got {}", 2 * dim, bbox.len());
                }
                Ok(ImplicitDomain::from_source(src, dim, &bbox)?)
            }
            (None, None) => bail!("no domain given (use --domain or --f)"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present it must name the subcommand being run.
    pub command: Option<String>,
    pub domain: Option<DomainSpec>,
    pub grid: Option<GridSpec>,
    /// Points per axis for the default tensor grid.
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub ladder: Option<LadderSpec>,
    pub quadrature: Option<QuadratureSpec>,
    pub output: Option<OutputSpec>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub strict: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `over` win.
    pub fn merged_under(self, over: RunConfig) -> RunConfig {
        let domain = match (self.domain, over.domain) {
            (base, None) => base,
            (_, Some(d)) => Some(d),
        };
        let output = match (self.output, over.output) {
            (None, o) => o,
            (b, None) => b,
            (Some(b), Some(o)) => Some(OutputSpec {
                json: o.json.or(b.json),
                csv: o.csv.or(b.csv),
            }),
        };
        RunConfig {
            command: over.command.or(self.command),
            domain,
            grid: over.grid.or(self.grid),
            grid_n: over.grid_n.or(self.grid_n),
            tol: over.tol.or(self.tol),
            ladder: over.ladder.or(self.ladder),
            quadrature: over.quadrature.or(self.quadrature),
            output,
            seed: over.seed.or(self.seed),
            samples: over.samples.or(self.samples),
            strict: over.strict.or(self.strict),
        }
    }

    pub fn validate(&self, command: &str) -> Result<()> {
        if let Some(c) = &self.command {
            if c != command {
                bail!("config is for command `{c}`, not `{command}`");
            }
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) || !t.is_finite() {
                bail!("tol must be a finite non-negative number");
            }
        }
        if let Some(n) = self.grid_n {
            if n < 2 {
                bail!("grid_n must be at least 2");
            }
        }
        if let Some(l) = &self.ladder {
            l.validate()?;
        }
        if let Some(q) = &self.quadrature {
            if q.radial_nodes == 0 {
                bail!("quadrature.radial_nodes must be positive");
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<ImplicitDomain> {
        self.domain.as_ref().context("no domain given (use --domain or --f)")?.build()
    }

    /// Explicit grid, else a uniform grid with `grid_n` (or `default_n`) points per axis.
    pub fn grid(&self, dom: &ImplicitDomain, default_n: usize) -> Result<GridSpec> {
        let g = match &self.grid {
            Some(g) => g.clone(),
            None => GridSpec::uniform(dom, self.grid_n.unwrap_or(default_n)),
        };
        g.validate(dom.dim())?;
        Ok(g)
    }

    pub fn scan_options(&self) -> ScanOptions {
        let d = ScanOptions::default();
        ScanOptions {
            tol: self.tol.unwrap_or(d.tol),
            ladder: self.ladder.clone().unwrap_or(d.ladder),
            quadrature: match (&self.quadrature, self.seed) {
                (Some(q), _) => q.clone(),
                (None, Some(seed)) => QuadratureSpec { seed, ..d.quadrature },
                (None, None) => d.quadrature,
            },
        }
    }
}

/// `k=v,k=v` into a parameter map.
pub fn parse_params(s: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').with_context(|| format!("expected key=value, got `{part}`"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad number in `{part}`"))?;
        if out.insert(k.trim().to_string(), v).is_some() {
            bail!("parameter `{}` given twice", k.trim());
        }
    }
    Ok(out)
}

/// Comma-separated numbers.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{}`", t.trim()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"domian": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"ladder": {"k": 6, "kk": 1}}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"domain": {"builtin": "ball", "params": {"m": 3}}, "tol": 1e-3}"#).unwrap();
        assert_eq!(c.tol, Some(1e-3));
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig {
            tol: Some(1.0),
            seed: Some(4),
            output: Some(OutputSpec {
                json: Some("a.json".into()),
                csv: Some("a.csv".into()),
            }),
            ..Default::default()
        };
        let flags = RunConfig {
            tol: Some(2.0),
            output: Some(OutputSpec {
                json: Some("b.json".into()),
                csv: None,
            }),
            ..Default::default()
        };
        let m = file.merged_under(flags);
        assert_eq!(m.tol, Some(2.0));
        assert_eq!(m.seed, Some(4));
        let out = m.output.unwrap();
        assert_eq!(out.json.unwrap(), PathBuf::from("b.json"));
        assert_eq!(out.csv.unwrap(), PathBuf::from("a.csv"));
    }

    #[test]
    fn params_and_vectors() {
        let p = parse_params("m=3, r=0.1").unwrap();
        assert_eq!(p["m"], 3.0);
        assert!(parse_params("m=3,m=4").is_err());
        assert_eq!(parse_vector("0.3,-1,2e-1").unwrap(), vec![0.3, -1.0, 0.2]);
        assert!(parse_vector("1,,2").is_err());
    }
}
