use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dqcpwm_core::measure::{MeasureKind, Outcome};
use dqcpwm_core::model::ModelParams;
use serde::{Deserialize, Serialize};

/// Sweep definition, read from a JSON file. Unknown keys are rejected so a
/// typo cannot silently change a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub params: BaseParams,
    /// Ascending bond-dimension ladder; each level warm-starts from the one
    /// below.
    pub chi_ladder: Vec<usize>,
    /// Coupling grid (explicit values or start/stop/step) and/or the bracket
    /// used by the pseudo-critical search.
    pub k_grid: KGrid,
    #[serde(default)]
    pub measure: Option<MeasureBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub fit: FitBlock,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    pub jx: f64,
    pub jz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGrid {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    /// Bracket for the pseudo-critical search; defaults to the grid range.
    #[serde(default)]
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    pub kind: MeasureKind,
    pub u: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Two-character strings over {d, u}, e.g. "dd", "ud".
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// Probe offset for the correlation-length gap.
    pub delta: f64,
    /// Bracket width at which the pseudo-critical search terminates.
    pub kc_tol: f64,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            kc_tol: 1e-5,
        }
    }
}

impl ScanConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ScanConfig = serde_json::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.params.jx.is_finite() && self.params.jz.is_finite()) {
            bail!("non-finite couplings");
        }
        if self.chi_ladder.is_empty() {
            bail!("chi_ladder must be non-empty");
        }
        if self.chi_ladder.iter().any(|&c| c == 0) {
            bail!("chi values must be positive");
        }
        if !self.chi_ladder.windows(2).all(|w| w[0] < w[1]) {
            bail!("chi_ladder must be strictly ascending");
        }
        let ks = self.k_values()?;
        if ks.is_empty() {
            bail!("empty K grid");
        }
        if ks.iter().any(|k| !k.is_finite()) {
            bail!("non-finite K value");
        }
        if self.solver.tol <= 0.0 {
            bail!("solver tol must be positive");
        }
        if let Some(m) = &self.measure {
            if m.u.is_empty() || m.alpha.is_empty() || m.patterns.is_empty() {
                bail!("measurement block lists must be non-empty");
            }
            for p in &m.patterns {
                parse_pattern(p)?;
            }
            if m.alpha.iter().any(|a| *a < 0.0 || !a.is_finite()) {
                bail!("alpha values must be finite and non-negative");
            }
            if m.u.iter().any(|u| !u.is_finite()) {
                bail!("u values must be finite");
            }
        }
        let [lo, hi] = self.bracket()?;
        if !(hi > lo) {
            bail!("bracket must have positive width");
        }
        Ok(())
    }

    pub fn model_at(&self, k: f64) -> ModelParams {
        ModelParams::new(self.params.jx, self.params.jz, k)
    }

    pub fn k_values(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.k_grid.values {
            return Ok(v.clone());
        }
        match (self.k_grid.start, self.k_grid.stop, self.k_grid.step) {
            (Some(a), Some(b), Some(h)) => {
                if !(h > 0.0) || !(b >= a) {
                    bail!("bad K grid: start {a}, stop {b}, step {h}");
                }
                let n = ((b - a) / h).round() as usize;
                Ok((0..=n).map(|i| a + h * i as f64).collect())
            }
            _ => match self.k_grid.bracket {
                // A bracket-only config still defines the two endpoints.
                Some([lo, hi]) => Ok(vec![lo, hi]),
                None => bail!("k_grid needs either values, start/stop/step, or a bracket"),
            },
        }
    }

    pub fn bracket(&self) -> Result<[f64; 2]> {
        if let Some(b) = self.k_grid.bracket {
            return Ok(b);
        }
        let ks = self.k_values()?;
        let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok([lo, hi])
    }

    /// Stable hash of everything that affects solver output, used to key
    /// checkpoints and stamp CSV headers.
    pub fn content_hash(&self) -> String {
        let blob = serde_json::to_string(self).expect("config serializes");
        let digest = sha2::Sha256::digest(blob.as_bytes());
        hex16(&digest)
    }
}

use sha2::Digest;

pub fn hex16(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn parse_pattern(s: &str) -> Result<[Outcome; 2]> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != 2 {
        bail!("pattern must have exactly 2 outcomes (unit cell), got {s:?}");
    }
    let mut out = [Outcome::Down; 2];
    for (i, ch) in chars.iter().enumerate() {
        out[i] = match ch {
            'd' | 'D' => Outcome::Down,
            'u' | 'U' => Outcome::Up,
            _ => bail!("pattern characters must be 'd' or 'u', got {ch:?}"),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "params": {"jx": 0.5, "jz": 1.5},
            "chi_ladder": [8, 16],
            "k_grid": {"start": 0.5, "stop": 0.6, "step": 0.05},
            "measure": {"kind": "z", "u": [0.1], "alpha": [0.001], "patterns": ["dd", "ud"]},
            "solver": {"tol": 1e-8, "max_iter": 500},
            "seed": 7
        }"#
    }

    #[test]
    fn parses_and_validates() {
        let cfg: ScanConfig = serde_json::from_str(sample()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.k_values().unwrap().len(), 3);
        assert_eq!(cfg.bracket().unwrap(), [0.5, 0.6]);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = sample().replace("\"seed\": 7", "\"seed\": 7, \"sed\": 1");
        assert!(serde_json::from_str::<ScanConfig>(&bad).is_err());
    }

    #[test]
    fn rejects_descending_ladder() {
        let bad = sample().replace("[8, 16]", "[16, 8]");
        let cfg: ScanConfig = serde_json::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_pattern() {
        assert!(parse_pattern("ddd").is_err());
        assert!(parse_pattern("dx").is_err());
        assert!(parse_pattern("ud").is_ok());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: ScanConfig = serde_json::from_str(sample()).unwrap();
        let b: ScanConfig = serde_json::from_str(sample()).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c: ScanConfig =
            serde_json::from_str(&sample().replace("\"seed\": 7", "\"seed\": 8")).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
