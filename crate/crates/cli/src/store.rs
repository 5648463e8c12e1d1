use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dqcpwm_core::measure::MeasurementSpec;
use dqcpwm_core::umps::{read_checkpoint, write_checkpoint, CheckpointMeta, UniformMps};
use dqcpwm_core::vumps::GroundStateResult;
use sha2::Digest;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_COLUMNS: &str = "schema_version,k,chi,kind,u,alpha,pattern,p_cell,energy_per_site,s_ent,xi,lambda1,lambda2,o_vbs,o_zfm,o_zafm,grad_norm,iterations,seed";

/// One CSV row; measurement fields are empty for ground-state rows.
#[derive(Debug, Clone)]
pub struct Row {
    pub k: f64,
    pub chi: usize,
    pub spec: Option<MeasurementSpec>,
    pub p_cell: f64,
    pub energy_per_site: f64,
    pub s_ent: f64,
    pub xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub o_vbs: f64,
    pub o_zfm: f64,
    pub o_zafm: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Row {
    /// Key identifying the sweep point, used for append-only deduplication.
    pub fn key(&self) -> String {
        let (kind, u, alpha, pattern) = spec_fields(&self.spec);
        format!("{:.10e}|{}|{kind}|{u}|{alpha}|{pattern}", self.k, self.chi)
    }

    pub fn to_csv(&self) -> String {
        let (kind, u, alpha, pattern) = spec_fields(&self.spec);
        format!(
            "{},{:.10e},{},{},{},{},{},{:.10e},{:.12e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.3e},{},{}",
            CSV_SCHEMA_VERSION,
            self.k,
            self.chi,
            kind,
            u,
            alpha,
            pattern,
            self.p_cell,
            self.energy_per_site,
            self.s_ent,
            self.xi,
            self.lambda1,
            self.lambda2,
            self.o_vbs,
            self.o_zfm,
            self.o_zafm,
            self.grad_norm,
            self.iterations,
            self.seed
        )
    }
}

fn spec_fields(spec: &Option<MeasurementSpec>) -> (String, String, String, String) {
    match spec {
        None => (String::new(), String::new(), String::new(), String::new()),
        Some(s) => (
            match s.kind {
                dqcpwm_core::measure::MeasureKind::X => "x".into(),
                dqcpwm_core::measure::MeasureKind::Z => "z".into(),
            },
            format!("{:.10e}", s.u),
            format!("{:.10e}", s.alpha),
            s.pattern_label(),
        ),
    }
}

/// Append rows to a schema-versioned CSV, writing the commented header on
/// first creation and skipping rows whose key is already present.
pub fn append_rows(path: &Path, config_hash: &str, seed: u64, rows: &[Row]) -> Result<usize> {
    let existing = existing_keys(path)?;
    let fresh: Vec<&Row> = rows.iter().filter(|r| !existing.contains(&r.key())).collect();
    if fresh.is_empty() {
        return Ok(0);
    }
    let new_file = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if new_file {
        writeln!(f, "# dqcpwm sweep records; u and alpha in units of pi")?;
        writeln!(f, "# config_hash={config_hash} seed={seed}")?;
        writeln!(f, "{CSV_COLUMNS}")?;
    }
    let mut written = 0;
    let mut sorted: Vec<&Row> = fresh;
    sorted.sort_by(|a, b| {
        a.chi
            .cmp(&b.chi)
            .then(a.k.total_cmp(&b.k))
            .then(a.key().cmp(&b.key()))
    });
    for r in sorted {
        writeln!(f, "{}", r.to_csv())?;
        written += 1;
    }
    Ok(written)
}

fn existing_keys(path: &Path) -> Result<BTreeSet<String>> {
    let mut keys = BTreeSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("schema_version") || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 7 {
            continue;
        }
        let k: f64 = cols[1].parse().unwrap_or(f64::NAN);
        let chi: usize = cols[2].parse().unwrap_or(0);
        keys.insert(format!(
            "{:.10e}|{}|{}|{}|{}|{}",
            k, chi, cols[3], cols[4], cols[5], cols[6]
        ));
    }
    Ok(keys)
}

/// Checkpoint file name from the solve identity.
pub fn checkpoint_name(jx: f64, jz: f64, k: f64, chi: usize, seed: u64, tol: f64) -> String {
    let blob = format!("jx={jx:.12e};jz={jz:.12e};k={k:.12e};chi={chi};seed={seed};tol={tol:.3e}");
    let digest = sha2::Sha256::digest(blob.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("umps_{hex}.bin")
}

pub struct CheckpointStore {
    dir: PathBuf,
}

impl CheckpointStore {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating checkpoint dir {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path_for(&self, jx: f64, jz: f64, k: f64, chi: usize, seed: u64, tol: f64) -> PathBuf {
        self.dir.join(checkpoint_name(jx, jz, k, chi, seed, tol))
    }

    /// Loads a converged checkpoint if one exists for this solve identity.
    pub fn load(
        &self,
        jx: f64,
        jz: f64,
        k: f64,
        chi: usize,
        seed: u64,
        tol: f64,
    ) -> Option<(UniformMps, CheckpointMeta)> {
        let path = self.path_for(jx, jz, k, chi, seed, tol);
        if !path.exists() {
            return None;
        }
        match read_checkpoint(&path) {
            Ok((state, meta)) => {
                if meta.get("converged").map(String::as_str) == Some("true") {
                    Some((state, meta))
                } else {
                    None
                }
            }
            Err(e) => {
                eprintln!("warning: unreadable checkpoint {}: {e}", path.display());
                None
            }
        }
    }

    pub fn save(
        &self,
        jx: f64,
        jz: f64,
        k: f64,
        chi: usize,
        tol: f64,
        result: &GroundStateResult,
    ) -> Result<PathBuf> {
        let path = self.path_for(jx, jz, k, chi, result.seed, tol);
        let mut meta = CheckpointMeta::new();
        meta.insert("jx".into(), format!("{jx:.12e}"));
        meta.insert("jz".into(), format!("{jz:.12e}"));
        meta.insert("k".into(), format!("{k:.12e}"));
        meta.insert("chi".into(), format!("{chi}"));
        meta.insert("seed".into(), format!("{}", result.seed));
        meta.insert("tol".into(), format!("{tol:.3e}"));
        meta.insert("energy".into(), format!("{:.12e}", result.energy_per_site));
        meta.insert("grad_norm".into(), format!("{:.3e}", result.gradient_norm));
        meta.insert("iterations".into(), format!("{}", result.iterations));
        meta.insert("converged".into(), format!("{}", result.converged));
        write_checkpoint(&path, &result.state, &meta)?;
        Ok(path)
    }
}
