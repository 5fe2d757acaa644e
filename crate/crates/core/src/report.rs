//! Aggregate views over finished runs: forgery rejection and identification rates per
//! (generation, alpha), and before/after asymmetry tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::asymmetry::{AsymmetryReport, CSV_HEADER};
use crate::dataset::Manifest;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no runs given")]
    NoRuns,
    #[error("cohort `{cohort}` has no run covering generation {generation} at alpha tenths {alpha_tenths}")]
    NonRectangular {
        cohort: String,
        generation: u32,
        alpha_tenths: u8,
    },
    #[error("{0} cohort has no asymmetry reports")]
    EmptyCohort(&'static str),
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cell {
    pub count: usize,
    pub attempted: usize,
}

impl Cell {
    pub fn fraction(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.count as f64 / self.attempted as f64)
    }
}

/// Keyed by (cohort, generation, alpha tenths).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub name: &'static str,
    pub cells: BTreeMap<(String, u32, u8), Cell>,
}

impl CurveTable {
    pub fn get(&self, cohort: &str, generation: u32, alpha_tenths: u8) -> Option<Cell> {
        self.cells.get(&(cohort.to_string(), generation, alpha_tenths)).copied()
    }

    pub fn cohorts(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.0.as_str()).collect()
    }

    fn axes(&self, cohort: &str) -> (BTreeSet<u32>, BTreeSet<u8>) {
        let keys = self.cells.keys().filter(|k| k.0 == cohort);
        (keys.clone().map(|k| k.1).collect(), keys.map(|k| k.2).collect())
    }

    /// `cohort,generation,alpha,count,attempted,fraction`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cohort,generation,alpha,count,attempted,fraction\n");
        for ((cohort, g, a), c) in &self.cells {
            let f = c.fraction().map(|f| format!("{f:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{cohort},{g},{:.1},{},{},{f}", *a as f64 / 10.0, c.count, c.attempted);
        }
        s
    }

    /// One gnuplot `matrix nonuniform` block per cohort: the first row holds the alphas,
    /// each following row a generation. Empty cells are NaN.
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::new();
        for (k, cohort) in self.cohorts().into_iter().enumerate() {
            if k > 0 {
                s.push_str("\n\n");
            }
            let (gens, alphas) = self.axes(cohort);
            let _ = writeln!(s, "# {} cohort={cohort}", self.name);
            s.push_str(&alphas.len().to_string());
            for a in &alphas {
                let _ = write!(s, " {:.1}", *a as f64 / 10.0);
            }
            s.push('\n');
            for g in &gens {
                s.push_str(&g.to_string());
                for a in &alphas {
                    match self.get(cohort, *g, *a).and_then(|c| c.fraction()) {
                        Some(f) => {
                            let _ = write!(s, " {f:.6}");
                        }
                        None => s.push_str(" NaN"),
                    }
                }
                s.push('\n');
            }
        }
        s
    }

    /// Writes `<name>.csv` and `<name>.dat` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        write_file(&dir.join(format!("{}.csv", self.name)), &self.to_csv())?;
        write_file(&dir.join(format!("{}.dat", self.name)), &self.to_gnuplot())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Every (generation, run alpha) planned by the runs of one cohort must be covered.
fn run_grid(manifests: &[Manifest]) -> Result<BTreeSet<(String, u32, u8)>, ReportError> {
    if manifests.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let mut planned: BTreeMap<&str, BTreeMap<u8, u32>> = BTreeMap::new();
    for m in manifests {
        let slot = planned
            .entry(m.config.cohort.as_str())
            .or_default()
            .entry(m.config.ga.alpha_tenths())
            .or_default();
        *slot = (*slot).max(m.config.ga.max_g);
    }
    let mut grid = BTreeSet::new();
    for (cohort, runs) in planned {
        let max_g = runs.values().copied().max().unwrap_or(0);
        for (&a, &g_run) in &runs {
            for g in 1..=max_g {
                if g > g_run {
                    return Err(ReportError::NonRectangular {
                        cohort: cohort.to_string(),
                        generation: g,
                        alpha_tenths: a,
                    });
                }
                grid.insert((cohort.to_string(), g, a));
            }
        }
    }
    Ok(grid)
}

/// Forgery rejections over attempts, per cohort, generation and run alpha.
pub fn rejection_curves(manifests: &[Manifest]) -> Result<CurveTable, ReportError> {
    let grid = run_grid(manifests)?;
    let mut table = CurveTable {
        name: "rejection",
        cells: grid.into_iter().map(|k| (k, Cell::default())).collect(),
    };
    for m in manifests {
        for g in &m.generations {
            let c = table
                .cells
                .entry((m.config.cohort.clone(), g.generation_index, g.alpha_tenths))
                .or_default();
            c.count += g.rejected_forgery;
            c.attempted += g.attempted;
        }
    }
    Ok(table)
}

/// Identified candidates over attempts, per cohort, generation and effective alpha
/// (mutations contribute to the column of the alpha they drew).
pub fn recognition_curves(manifests: &[Manifest]) -> Result<CurveTable, ReportError> {
    let grid = run_grid(manifests)?;
    let mut table = CurveTable {
        name: "recognition",
        cells: grid.into_iter().map(|k| (k, Cell::default())).collect(),
    };
    for m in manifests {
        for a in &m.attempts {
            let c = table
                .cells
                .entry((m.config.cohort.clone(), a.generation, a.alpha_tenths))
                .or_default();
            c.attempted += 1;
            if a.is_unknown == Some(false) {
                c.count += 1;
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSummary {
    pub region: &'static str,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetrySummary {
    pub rows: [RegionSummary; 3],
}

impl AsymmetrySummary {
    /// `region,before_pct,after_pct,delta_pct`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("region,before_pct,after_pct,delta_pct\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", r.region, r.before, r.after, r.delta);
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        write_file(&dir.join("asymmetry_summary.csv"), &self.to_csv())
    }
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn asymmetry_summary(before: &[AsymmetryReport], after: &[AsymmetryReport]) -> Result<AsymmetrySummary, ReportError> {
    if before.is_empty() {
        return Err(ReportError::EmptyCohort("before"));
    }
    if after.is_empty() {
        return Err(ReportError::EmptyCohort("after"));
    }
    let row = |region, f: fn(&AsymmetryReport) -> f64| {
        let b = sorted_mean(before.iter().map(f).collect());
        let a = sorted_mean(after.iter().map(f).collect());
        RegionSummary {
            region,
            before: b,
            after: a,
            delta: a - b,
        }
    };
    Ok(AsymmetrySummary {
        rows: [row("EYES", |r| r.eyes), row("CHEEKS", |r| r.cheeks), row("MOUTH", |r| r.mouth)],
    })
}

/// Read the reports out of a CSV written by the asymmetry command.
pub fn read_asymmetry_csv(path: &Path) -> Result<Vec<AsymmetryReport>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |msg: String| ReportError::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(parse_err(format!("expected header `{CSV_HEADER}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(parse_err(format!("row {}: expected 7 columns", i + 1)));
            }
            let num = |k: usize| {
                cols[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {}: {e}", i + 1)))
            };
            Ok(AsymmetryReport::from_scores(num(3)?, num(4)?, num(5)?))
        })
        .collect()
}
