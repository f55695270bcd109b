use std::fs;
use std::path::{Path, PathBuf};

use super::runner::missing;
use crate::error::{LabError, Result};

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(missing(path));
    }
    Ok(fs::read_to_string(path)?)
}

/// Data rows of a CSV file with a header line, split on commas.
fn rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').collect())
}

fn bad_row(path: &Path, row: &[&str]) -> LabError {
    LabError::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("malformed row {:?} in {}", row.join(","), path.display()),
    ))
}

fn write_two_column(path: &Path, header: &str, pairs: impl Iterator<Item = (String, String)>) -> Result<()> {
    let mut s = format!("# {header}\n");
    for (a, b) in pairs {
        s.push_str(&a);
        s.push(' ');
        s.push_str(&b);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Gnuplot-ready two-column files under `report_dir/plots/`: the strobe series, the
/// zero-number trace, `P(a) - a` and one file per limit cycle snapshot.
pub fn emit_plots(report_dir: &Path) -> Result<Vec<PathBuf>> {
    read_required(&report_dir.join("report.json"))?;
    let plots = report_dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();

    let strobe_path = report_dir.join("strobe.csv");
    let strobe = read_required(&strobe_path)?;
    let mut pairs = Vec::new();
    for row in rows(&strobe) {
        if row.len() != 3 {
            return Err(bad_row(&strobe_path, &row));
        }
        pairs.push((row[1].to_string(), row[2].to_string()));
    }
    let out = plots.join("strobe.dat");
    write_two_column(&out, "t u(x0,t)", pairs.into_iter())?;
    written.push(out);

    let z_path = report_dir.join("ztrace.csv");
    if z_path.is_file() {
        let z = fs::read_to_string(&z_path)?;
        let mut pairs = Vec::new();
        for row in rows(&z) {
            if row.len() != 4 {
                return Err(bad_row(&z_path, &row));
            }
            pairs.push((row[1].to_string(), row[2].to_string()));
        }
        let out = plots.join("ztrace.dat");
        write_two_column(&out, "t Z", pairs.into_iter())?;
        written.push(out);
    }

    let orbit_path = report_dir.join("orbits.csv");
    if orbit_path.is_file() {
        let text = fs::read_to_string(&orbit_path)?;
        let mut pairs = Vec::new();
        for row in rows(&text) {
            let parsed = (row.first().and_then(|a| a.parse::<f64>().ok()), row.get(1).and_then(|p| p.parse::<f64>().ok()));
            match parsed {
                (Some(a), Some(p)) => pairs.push((a.to_string(), (p - a).to_string())),
                _ => return Err(bad_row(&orbit_path, &row)),
            }
        }
        let out = plots.join("period_map.dat");
        write_two_column(&out, "a P(a)-a", pairs.into_iter())?;
        written.push(out);
    }

    let snaps = report_dir.join("snapshots");
    if snaps.is_dir() {
        let mut cycle: Vec<PathBuf> = fs::read_dir(&snaps)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("cycle_")))
            .collect();
        cycle.sort();
        for path in cycle {
            let text = fs::read_to_string(&path)?;
            let t = text.lines().next().and_then(|l| l.strip_prefix("# t=")).unwrap_or("").to_string();
            let mut pairs = Vec::new();
            for line in text.lines().skip(1) {
                let row: Vec<&str> = line.split(',').collect();
                if row.len() != 2 {
                    return Err(bad_row(&path, &row));
                }
                pairs.push((row[0].to_string(), row[1].to_string()));
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cycle");
            let out = plots.join(format!("{stem}.dat"));
            write_two_column(&out, &format!("x u(x,t) at t={t}"), pairs.into_iter())?;
            written.push(out);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_plots(dir.path()), Err(LabError::Io(_))));
    }

    #[test]
    fn converts_minimal_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("report.json"), "{}").unwrap();
        fs::write(dir.path().join("strobe.csv"), "m,t,u_x0\n1,1,0.5\n2,2,0.25\n").unwrap();
        fs::write(dir.path().join("orbits.csv"), "a,P(a),class,floquet\n0.5,0.75,increasing,0\n").unwrap();
        let files = emit_plots(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let strobe = fs::read_to_string(dir.path().join("plots/strobe.dat")).unwrap();
        assert_eq!(strobe.lines().filter(|l| !l.starts_with('#')).count(), 2);
        let pm = fs::read_to_string(dir.path().join("plots/period_map.dat")).unwrap();
        assert!(pm.contains("0.5 0.25"));
    }
}
