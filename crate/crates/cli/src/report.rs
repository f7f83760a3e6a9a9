//! Human-readable summary and plot-ready CSVs for a finished output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;
use starkscatter_core::io::{fmt_f64, read_real_grid};
use starkscatter_core::reconstruction::{ladder_is_monotone, Sinogram};
use starkscatter_core::{Error, Result};

use crate::config::invalid;

/// Slack for the monotonicity column, relative to the top rung.
const MONOTONE_SLACK: f64 = 0.02;

fn numbered(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<(usize, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if let Some(idx) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(suffix))
        {
            if let Ok(i) = idx.parse() {
                out.push((i, path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Build the report for `dir`, writing `report.txt` and the derived CSVs.
/// Returns the text.
pub fn report(dir: &Path) -> Result<String> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(invalid(format!(
            "{} holds no manifest.json; not a run directory",
            dir.display()
        )));
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut text = String::new();
    summary(&manifest, &mut text);

    let mut ladders = Vec::new();
    if dir.join("ladder.csv").is_file() {
        ladders.push(dir.join("ladder.csv"));
    }
    ladders.extend(
        numbered(dir, "ladder_", ".csv")?
            .into_iter()
            .map(|(_, p)| p),
    );
    if !ladders.is_empty() {
        let mut rows = Vec::new();
        for path in &ladders {
            rows.extend(parse_ladder(&fs::read_to_string(path)?)?);
        }
        let (table, csv) = monotonicity_table(&rows);
        text.push_str(&table);
        fs::write(dir.join("lambda_convergence.csv"), csv)?;
    }
    if let Some(samples) = scatter_samples(&manifest) {
        let (table, csv) = scatter_table(samples);
        text.push_str(&table);
        fs::write(dir.join("lambda_convergence.csv"), csv)?;
    }

    for (i, path) in numbered(dir, "sinogram_", ".csv")? {
        let sino = Sinogram::from_csv(&fs::read_to_string(&path)?)?;
        fs::write(
            dir.join(format!("sinogram_heatmap_{i}.csv")),
            heatmap(&sino),
        )?;
    }

    for (i, path) in numbered(dir, "metrics_", ".json")? {
        let metrics: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
        text.push_str(&angle_count_table(i, &metrics));
        let recon = dir.join(format!("reconstruction_{i}.wfn"));
        let truth = dir.join(format!("truth_{i}.wfn"));
        if recon.is_file() && truth.is_file() {
            let csv = slices(&recon, &truth)?;
            fs::write(dir.join(format!("slices_{i}.csv")), csv)?;
        }
    }
    fs::write(dir.join("report.txt"), &text)?;
    Ok(text)
}

fn summary(manifest: &Value, out: &mut String) {
    let _ = writeln!(
        out,
        "scenario {}  status {}  wall clock {:.2}s  jobs {}",
        manifest["scenario"].as_str().unwrap_or("?"),
        manifest["status"].as_str().unwrap_or("?"),
        manifest["wall_clock_seconds"].as_f64().unwrap_or(f64::NAN),
        manifest["jobs"]
    );
    if let Some(err) = manifest.get("error") {
        let _ = writeln!(
            out,
            "error ({}): {}",
            err["kind"].as_str().unwrap_or("?"),
            err["message"].as_str().unwrap_or("")
        );
    }
    if let Some(stages) = manifest["stages"].as_array() {
        out.push_str("\nstages\n");
        for s in stages {
            let _ = writeln!(
                out,
                "  {:<28} {:>10.3}s  {}",
                s["name"].as_str().unwrap_or("?"),
                s["seconds"].as_f64().unwrap_or(f64::NAN),
                s["diagnostics"]
            );
        }
    }
    if let Some(checks) = manifest["checks"].as_array().filter(|c| !c.is_empty()) {
        out.push_str("\nchecks\n");
        for c in checks {
            let _ = writeln!(
                out,
                "  {:<24} {:>12.4e}  tol {:>10.3e}  {}",
                c["name"].as_str().unwrap_or("?"),
                c["value"].as_f64().unwrap_or(f64::NAN),
                c["tolerance"].as_f64().unwrap_or(f64::NAN),
                if c["pass"].as_bool() == Some(true) {
                    "pass"
                } else {
                    "FAIL"
                }
            );
        }
    }
}

/// `(s, angle, offset, λ, λ^{1/2}F⊥)` rows from a ladder ledger.
fn parse_ladder(text: &str) -> Result<Vec<[f64; 5]>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format(format!("ladder ledger lacks column {name}")))
    };
    let idx = [
        col("s")?,
        col("angle")?,
        col("offset")?,
        col("lambda")?,
        col("transverse")?,
    ];
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let mut row = [0.0; 5];
        for (k, &j) in idx.iter().enumerate() {
            row[k] = fields
                .get(j)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad ladder row: {line}")))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn monotonicity_table(rows: &[[f64; 5]]) -> (String, String) {
    let mut groups: BTreeMap<(u64, u64, u64), Vec<(f64, f64)>> = BTreeMap::new();
    let key = |v: f64| v.to_bits() ^ (1 << 63);
    for r in rows {
        groups
            .entry((key(r[0]), key(r[1]), key(r[2])))
            .or_default()
            .push((r[3], r[4]));
    }
    let lambdas: Vec<f64> = groups
        .values()
        .next()
        .map(|g| g.iter().map(|p| p.0).collect())
        .unwrap_or_default();
    let mut table = String::from("\nλ-monotonicity of λ^{1/2}F⊥ (per probe)\n");
    let _ = write!(table, "  {:>8} {:>9} {:>9}", "s", "angle", "offset");
    for l in &lambdas {
        let _ = write!(table, " {:>13}", format!("λ={l}"));
    }
    table.push_str("  monotone\n");
    let mut csv = String::from("s,angle,offset,lambda,scaled_f,distance_to_top\n");
    let mut monotone_count = 0;
    for ((s, a, o), ladder) in &groups {
        let (s, a, o) = (
            f64::from_bits(s ^ (1 << 63)),
            f64::from_bits(a ^ (1 << 63)),
            f64::from_bits(o ^ (1 << 63)),
        );
        let values: Vec<f64> = ladder.iter().map(|p| p.1).collect();
        let top = *values.last().unwrap_or(&0.0);
        let monotone = ladder_is_monotone(&values, MONOTONE_SLACK);
        monotone_count += usize::from(monotone);
        let _ = write!(table, "  {s:>8.4} {a:>9.5} {o:>9.4}");
        for (l, v) in ladder {
            let _ = write!(table, " {v:>13.6e}");
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_f64(s),
                fmt_f64(a),
                fmt_f64(o),
                fmt_f64(*l),
                fmt_f64(*v),
                fmt_f64((v - top).abs())
            );
        }
        let _ = writeln!(table, "  {}", if monotone { "yes" } else { "NO" });
    }
    let _ = writeln!(
        table,
        "  {monotone_count} of {} ladders monotone",
        groups.len()
    );
    (table, csv)
}

fn scatter_samples(manifest: &Value) -> Option<&Vec<Value>> {
    manifest["stages"]
        .as_array()?
        .iter()
        .find(|s| s["name"] == "commutator")?["diagnostics"]["samples"]
        .as_array()
}

fn scatter_table(samples: &[Value]) -> (String, String) {
    let mut table = String::from("\nλ-convergence of λ^{1/2}F\n");
    let mut csv = String::from("lambda,component,re,im\n");
    let mut transverse = Vec::new();
    for s in samples {
        let lambda = s["lambda"].as_f64().unwrap_or(f64::NAN);
        let re: Vec<f64> = s["scaled_re"]
            .as_array()
            .map(|v| v.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let im: Vec<f64> = s["scaled_im"]
            .as_array()
            .map(|v| v.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let _ = write!(table, "  λ={lambda:<10}");
        for (d, (r, i)) in re.iter().zip(&im).enumerate() {
            let _ = write!(table, "  F{} = {r:>13.6e} {i:+.3e}i", d + 1);
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                fmt_f64(lambda),
                d + 1,
                fmt_f64(*r),
                fmt_f64(*i)
            );
        }
        if let Some(c) = s["truncation_change"].as_f64() {
            let _ = write!(table, "  T-doubling change {c:.2e}");
        }
        table.push('\n');
        transverse.push(re.last().copied().unwrap_or(f64::NAN));
    }
    if transverse.len() > 1 {
        let monotone = ladder_is_monotone(&transverse, MONOTONE_SLACK);
        let _ = writeln!(
            table,
            "  last component monotone in λ: {}",
            if monotone { "yes" } else { "no" }
        );
    }
    (table, csv)
}

fn angle_count_table(i: usize, metrics: &Value) -> String {
    let mut out = format!(
        "\nreconstruction {i} (s = {}, {} mode): rel. L² error {:.4}\n  angles  rel. L² error\n",
        metrics["s"],
        metrics["mode"].as_str().unwrap_or("?"),
        metrics["rel_l2_error"].as_f64().unwrap_or(f64::NAN)
    );
    if let Some(rows) = metrics["error_vs_angle_count"].as_array() {
        for r in rows {
            let _ = writeln!(
                out,
                "  {:>6}  {:.4}",
                r["angles"],
                r["rel_l2_error"].as_f64().unwrap_or(f64::NAN)
            );
        }
    }
    out
}

/// Angle × offset matrix of `P` with a leading angle column.
fn heatmap(sino: &Sinogram) -> String {
    let mut out = String::from("angle");
    for y in &sino.offsets {
        out.push(',');
        out.push_str(&fmt_f64(*y));
    }
    out.push('\n');
    for (a, theta) in sino.angles.iter().enumerate() {
        out.push_str(&fmt_f64(*theta));
        for v in sino.row(a) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Central horizontal and vertical slices of reconstruction and truth.
fn slices(recon: &Path, truth: &Path) -> Result<String> {
    let (grid, field) = read_real_grid(&mut fs::File::open(recon)?)?;
    let (_, exact) = read_real_grid(&mut fs::File::open(truth)?)?;
    if grid.dims() != 2 {
        return Err(Error::Format("reconstruction slices need a 2D grid".into()));
    }
    let (nx, ny) = (grid.counts()[0], grid.counts()[1]);
    let (mx, my) = (nx / 2, ny / 2);
    // row-major with the last axis fastest
    let at = |i: usize, j: usize| i * ny + j;
    let mut out = String::from("axis,coordinate,reconstruction,truth\n");
    for i in 0..nx {
        let k = at(i, my);
        let _ = writeln!(
            out,
            "x,{},{},{}",
            fmt_f64(grid.coords(0)[i]),
            fmt_f64(field[k]),
            fmt_f64(exact[k])
        );
    }
    for j in 0..ny {
        let k = at(mx, j);
        let _ = writeln!(
            out,
            "y,{},{},{}",
            fmt_f64(grid.coords(1)[j]),
            fmt_f64(field[k]),
            fmt_f64(exact[k])
        );
    }
    Ok(out)
}
