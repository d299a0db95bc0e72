//! CSV tables and the plain-text report.

use std::fs;
use std::path::Path;

use hdg_kdv::experiments::Snapshot;
use hdg_kdv::verify::{ExperimentReport, LevelRecord};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One row of `errors.csv`. Orders are empty on the coarsest level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub k: usize,
    pub level: u32,
    pub h: f64,
    pub e_u: f64,
    pub order_u: Option<f64>,
    pub e_q: f64,
    pub order_q: Option<f64>,
    pub e_p: f64,
    pub order_p: Option<f64>,
}

impl ErrorRow {
    pub fn from_level(k: usize, l: &LevelRecord) -> Self {
        Self {
            k,
            level: l.level,
            h: l.h,
            e_u: l.e_u,
            order_u: l.order_u,
            e_q: l.e_q,
            order_q: l.order_q,
            e_p: l.e_p,
            order_p: l.order_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub x: f64,
    pub value: f64,
}

pub fn error_rows(report: &ExperimentReport) -> Vec<ErrorRow> {
    report.levels.iter().map(|l| ErrorRow::from_level(report.k, l)).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

pub fn write_errors(dir: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    write_rows(&dir.join("errors.csv"), error_rows(report))
}

pub fn write_energy(dir: &Path, energy: &[(f64, f64)]) -> Result<(), CliError> {
    write_rows(&dir.join("energy.csv"), energy.iter().map(|&(t, l2_norm)| EnergyRow { t, l2_norm }))
}

/// `snapshot_u.csv`, `snapshot_q.csv` and `snapshot_p.csv`.
pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<(), CliError> {
    let fields: [(&str, fn(&Snapshot) -> &Vec<f64>); 3] = [("u", |s| &s.u), ("q", |s| &s.q), ("p", |s| &s.p)];
    for (name, pick) in fields {
        let rows = snapshots
            .iter()
            .flat_map(|s| s.x.iter().zip(pick(s)).map(move |(&x, &value)| SnapshotRow { t: s.t, x, value }));
        write_rows(&dir.join(format!("snapshot_{name}.csv")), rows)?;
    }
    Ok(())
}

/// Outcome of one threshold check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Plain-text report: the configuration echo, free-form results, then one line per check.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub config: Vec<(String, String)>,
    pub body: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check { name: name.into(), pass, detail });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("[config]\n");
        for (k, v) in &self.config {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str("\n[results]\n");
        s.push_str(&self.body);
        if !self.body.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("\n[checks]\n");
        if self.checks.is_empty() {
            s.push_str("none\n");
        }
        for c in &self.checks {
            let mark = if c.pass { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                s.push_str(&format!("{mark} {}\n", c.name));
            } else {
                s.push_str(&format!("{mark} {}: {}\n", c.name, c.detail));
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join("report.txt"), self.render())?;
        Ok(())
    }
}
