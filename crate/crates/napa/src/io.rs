//! CSV readers and writers.
//!
//! Site order is always row-major over the lattice (last axis fastest), and
//! `site_id` is the 0-based position in that order. Output files use LF line
//! endings, `.` decimals and 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use napa_core::simulate::{MetricsSummary, SweepParam};
use napa_core::{DecisionSet, SpatialGrid};

/// Float text with 17 significant digits (exact round trip).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn finish(w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    let mut buf = w
        .into_inner()
        .map_err(|e| anyhow::anyhow!("cannot write {}: {}", path.display(), e.error()))?;
    buf.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// Reads `site_id,c1[,c2[,c3]]` and reconstructs the lattice. Coordinates
/// may start at any integer offset but must cover a full box in row-major
/// order.
pub fn read_sites(path: &Path) -> Result<SpatialGrid> {
    let mut rdr = reader(path, true)?;
    let header = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let dims = names.len().saturating_sub(1);
    ensure!(
        (1..=3).contains(&dims)
            && names[0] == "site_id"
            && names[1..].iter().enumerate().all(|(k, n)| *n == format!("c{}", k + 1)),
        "{}: header must be `site_id,c1[,c2[,c3]]`, found `{}`",
        path.display(),
        names.join(",")
    );
    let mut coords: Vec<Vec<i64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", path.display()))?;
        let id: usize = rec[0]
            .parse()
            .with_context(|| format!("{}: line {line}: bad site_id `{}`", path.display(), &rec[0]))?;
        ensure!(
            id == row,
            "{}: line {line}: expected site_id {row}, found {id}",
            path.display()
        );
        let c = (1..=dims)
            .map(|k| {
                rec[k]
                    .parse::<i64>()
                    .with_context(|| format!("{}: line {line}: bad coordinate `{}`", path.display(), &rec[k]))
            })
            .collect::<Result<Vec<_>>>()?;
        coords.push(c);
    }
    ensure!(!coords.is_empty(), "{}: no sites", path.display());
    let lo: Vec<i64> = (0..dims).map(|k| coords.iter().map(|c| c[k]).min().unwrap()).collect();
    let hi: Vec<i64> = (0..dims).map(|k| coords.iter().map(|c| c[k]).max().unwrap()).collect();
    let extents: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect();
    let grid = SpatialGrid::new(&extents)?;
    ensure!(
        grid.len() == coords.len(),
        "{}: {} sites do not fill the {:?} bounding box",
        path.display(),
        coords.len(),
        extents
    );
    for (i, c) in coords.iter().enumerate() {
        let expect = grid.coords(i);
        let ok = c
            .iter()
            .zip(&lo)
            .zip(expect)
            .all(|((&v, &l), &e)| v - l + 1 == e as i64);
        ensure!(ok, "{}: site {i} is not in row-major order", path.display());
    }
    Ok(grid)
}

pub fn write_sites(path: &Path, grid: &SpatialGrid) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["site_id".to_string()];
    header.extend((1..=grid.dimension()).map(|k| format!("c{k}")));
    w.write_record(&header)?;
    for i in 0..grid.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(grid.coords(i).iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Reads a subjects-by-sites matrix; a first row whose first cell is not a
/// number is taken as a header. Returns the row-major values.
pub fn read_group(path: &Path, label: &str, sites: usize) -> Result<Vec<f64>> {
    let mut rdr = reader(path, false)?;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.with_context(|| format!("{label} ({}): line {line}", path.display()))?;
        if idx == 0 && rec.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != sites {
            bail!(
                "{label} ({}): line {line} has {} columns but the sites file lists {sites} sites",
                path.display(),
                rec.len()
            );
        }
        for (k, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().with_context(|| {
                format!(
                    "{label} ({}): line {line}, column {}: `{cell}` is not a number",
                    path.display(),
                    k + 1
                )
            })?;
            values.push(v);
        }
        rows += 1;
    }
    ensure!(rows > 0, "{label} ({}): no data rows", path.display());
    Ok(values)
}

pub fn write_group(path: &Path, values: &[f64], sites: usize) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record((0..sites).map(|k| format!("site_{k}")))?;
    for row in values.chunks(sites) {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    finish(w, path)
}

/// `site_id,p,weighted_p,rejected,method,threshold`, one row per site for
/// each decision set, in the order given.
pub fn write_decisions(path: &Path, p_value: &[f64], decisions: &[&DecisionSet]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["site_id", "p", "weighted_p", "rejected", "method", "threshold"])?;
    for d in decisions {
        ensure!(
            d.rejected.len() == p_value.len(),
            "decision set does not match the site count"
        );
        let threshold = fmt_f64(d.threshold);
        for (i, (&p, (&pw, &r))) in p_value.iter().zip(d.weighted_p.iter().zip(&d.rejected)).enumerate() {
            w.write_record([
                i.to_string(),
                fmt_f64(p),
                fmt_f64(pw),
                u8::from(r).to_string(),
                d.method.name().to_string(),
                threshold.clone(),
            ])?;
        }
    }
    finish(w, path)
}

/// `sweep_param,sweep_value,method,fdr,fdr_se,power_prop,power_prop_se,power_raw,replications`.
pub fn write_metrics(path: &Path, points: &[MetricsSummary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "sweep_param",
        "sweep_value",
        "method",
        "fdr",
        "fdr_se",
        "power_prop",
        "power_prop_se",
        "power_raw",
        "replications",
    ])?;
    for point in points {
        let param = point.sweep_param.map_or("none", SweepParam::name);
        let value = point.sweep_value.map_or_else(String::new, fmt_f64);
        for m in &point.methods {
            w.write_record([
                param.to_string(),
                value.clone(),
                m.method.name().to_string(),
                fmt_f64(m.fdr),
                fmt_f64(m.fdr_se),
                fmt_f64(m.power_prop),
                fmt_f64(m.power_prop_se),
                fmt_f64(m.power_raw),
                m.replications.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// `site_id,theta,pi,beta1` for a simulated dataset.
pub fn write_truth(path: &Path, theta: &[bool], pi: &[f64], beta1: &[f64]) -> Result<()> {
    ensure!(
        theta.len() == pi.len() && pi.len() == beta1.len(),
        "truth columns have different lengths"
    );
    let mut w = writer(path)?;
    w.write_record(["site_id", "theta", "pi", "beta1"])?;
    for (i, ((&t, &p), &b)) in theta.iter().zip(pi).zip(beta1).enumerate() {
        w.write_record([i.to_string(), u8::from(t).to_string(), fmt_f64(p), fmt_f64(b)])?;
    }
    finish(w, path)
}

/// Per-site weight-field dump.
pub struct Diagnostics<'a> {
    pub u: &'a [f64],
    pub p: &'a [f64],
    pub pi_tau_hat: &'a [f64],
    pub weight: &'a [f64],
    pub oracle_pi: Option<&'a [f64]>,
}

/// `site_id,u,p,pi_tau_hat,weight[,oracle_pi]`.
pub fn write_diagnostics(path: &Path, d: &Diagnostics<'_>) -> Result<()> {
    let m = d.p.len();
    ensure!(
        d.u.len() == m && d.pi_tau_hat.len() == m && d.weight.len() == m && d.oracle_pi.is_none_or(|o| o.len() == m),
        "diagnostic columns have different lengths"
    );
    let mut w = writer(path)?;
    let mut header = vec!["site_id", "u", "p", "pi_tau_hat", "weight"];
    if d.oracle_pi.is_some() {
        header.push("oracle_pi");
    }
    w.write_record(&header)?;
    for i in 0..m {
        let mut rec = vec![
            i.to_string(),
            fmt_f64(d.u[i]),
            fmt_f64(d.p[i]),
            fmt_f64(d.pi_tau_hat[i]),
            fmt_f64(d.weight[i]),
        ];
        if let Some(o) = d.oracle_pi {
            rec.push(fmt_f64(o[i]));
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for x in [0.0, 0.05, 1.0, 1e-300, 123456.789, 2.5e-7, -3.25, 1e20, 0.1 + 0.2] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(!s.contains(','));
        }
        assert_eq!(fmt_f64(0.05), "5.0000000000000003e-2");
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn sites_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sites.csv");
        let grid = SpatialGrid::new(&[3, 4, 2]).unwrap();
        write_sites(&path, &grid).unwrap();
        let back = read_sites(&path).unwrap();
        assert_eq!(back.extents(), grid.extents());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("site_id,c1,c2,c3\n0,1,1,1\n1,1,1,2\n"));
    }

    #[test]
    fn sites_with_offset_and_bad_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sites.csv");
        std::fs::write(&path, "site_id,c1,c2\n0,0,0\n1,0,1\n2,1,0\n3,1,1\n").unwrap();
        assert_eq!(read_sites(&path).unwrap().extents(), &[2, 2]);
        std::fs::write(&path, "site_id,c1,c2\n0,0,0\n1,1,0\n2,0,1\n3,1,1\n").unwrap();
        assert!(read_sites(&path).unwrap_err().to_string().contains("row-major"));
        std::fs::write(&path, "site_id,c1,c2\n0,0,0\n1,0,1\n2,1,0\n").unwrap();
        assert!(read_sites(&path).is_err());
        std::fs::write(&path, "id,x\n0,1\n").unwrap();
        assert!(read_sites(&path).is_err());
    }

    #[test]
    fn group_header_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "site_0,site_1\n1,2\n3,4\n").unwrap();
        assert_eq!(read_group(&path, "group1", 2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        std::fs::write(&path, "1,2\n3,4\n").unwrap();
        assert_eq!(read_group(&path, "group1", 2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let e = read_group(&path, "group1", 3).unwrap_err().to_string();
        assert!(e.contains("2 columns") && e.contains("3 sites"), "{e}");
        std::fs::write(&path, "1,2\n3,x\n").unwrap();
        assert!(read_group(&path, "group1", 2).is_err());
    }

    #[test]
    fn strict_csv_output() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = DecisionSet {
            method: napa_core::Method::Bh,
            rejected: vec![true, false],
            threshold: 0.025,
            weighted_p: vec![0.01, 0.9],
        };
        write_decisions(&path, &[0.01, 0.9], &[&d]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "site_id,p,weighted_p,rejected,method,threshold\n\
             0,1.0000000000000000e-2,1.0000000000000000e-2,1,bh,2.5000000000000001e-2\n\
             1,9.0000000000000002e-1,9.0000000000000002e-1,0,bh,2.5000000000000001e-2\n"
        );
    }
}
