use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vanet_sybil::fixtures::{keyed_digest_vectors_text, wire_fixtures_text, KEYED_DIGEST_FILE, WIRE_FILE};
use vanet_sybil::sim::{build_world, run, sweep, sweep_csv};

use crate::config::{parse_config, Scenario};

pub const METRICS_FILE: &str = "metrics.csv";
pub const ROSTER_FILE: &str = "roster.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

/// Writes every file under a temporary name first, then renames them into
/// place, so a failure never leaves a half-written output behind.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, contents) {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e).with_context(|| format!("writing {}", tmp.display()));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).with_context(|| format!("moving {} into place", dest.display()))?;
    }
    Ok(())
}

/// Runs one scenario; returns the summary that was also written to disk.
pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut scenario = load(config)?;
    if let Some(seed) = seed {
        scenario.config.seed = seed;
    }
    let world = build_world(&scenario.config)?;
    let metrics = run(&world);
    let summary = metrics.summary();
    write_outputs(
        out,
        &[
            (METRICS_FILE, metrics.to_csv()),
            (ROSTER_FILE, world.home_ca.roster_csv()),
            (SUMMARY_FILE, summary.clone()),
        ],
    )?;
    Ok(summary)
}

/// Runs the sweep declared in the config; returns the CSV written.
pub fn cmd_sweep(config: &Path, out: &Path) -> Result<String> {
    let scenario = load(config)?;
    let Some(spec) = scenario.sweep else {
        bail!("{} declares no [sweep] section", config.display());
    };
    let rows = sweep(&scenario.config, spec.axis, &spec.values)?;
    let csv = sweep_csv(&rows);
    write_outputs(out, &[(SWEEP_FILE, csv.clone())])?;
    Ok(csv)
}

/// Checks a config without running it.
pub fn cmd_validate(config: &Path) -> Result<String> {
    let s = load(config)?;
    let c = &s.config;
    let mut line = format!(
        "ok: {} regions, {} vehicles, {} attackers, {} flagged",
        c.regions.len(),
        c.vehicles,
        c.attackers.len(),
        c.flagged.len()
    );
    if let Some(sweep) = &s.sweep {
        line.push_str(&format!(
            ", sweep over {} with {} points",
            sweep.axis,
            sweep.values.len()
        ));
    }
    Ok(line)
}

pub fn cmd_fixtures(out: &Path) -> Result<Vec<PathBuf>> {
    write_outputs(
        out,
        &[
            (KEYED_DIGEST_FILE, keyed_digest_vectors_text()),
            (WIRE_FILE, wire_fixtures_text()),
        ],
    )?;
    Ok(vec![out.join(KEYED_DIGEST_FILE), out.join(WIRE_FILE)])
}
