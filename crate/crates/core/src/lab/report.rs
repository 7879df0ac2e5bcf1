use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::coefficients::ConditionReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentVerdict {
    Consistent,
    Violated,
    Inconclusive,
}

/// The statistic that decided a `violated` verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentWitness {
    pub statistic: String,
    pub value: f64,
    pub threshold: f64,
    pub seed: Option<u64>,
}

/// Summary of one statistic at one resolution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelStat {
    pub statistic: String,
    pub h: f64,
    pub level: Option<u32>,
    pub median: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Per-seed rows, written as CSV next to the JSON report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, ..Default::default() }
    }

    pub fn push(&mut self, seed: u64, row: Vec<f64>) {
        self.seeds.push(seed);
        self.rows.push(row);
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "seed")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (s, row) in self.seeds.iter().zip(&self.rows) {
            write!(w, "{s}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub config_hash: String,
    pub seed_base: u64,
    pub verdict: ExperimentVerdict,
    pub witness: Option<ExperimentWitness>,
    pub levels: Vec<LevelStat>,
    pub summary: BTreeMap<String, f64>,
    pub conditions: Vec<ConditionReport>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub per_seed: Table,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed_base: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            version: VERSION.to_string(),
            config_hash: String::new(),
            seed_base,
            verdict: ExperimentVerdict::Inconclusive,
            witness: None,
            levels: Vec::new(),
            summary: BTreeMap::new(),
            conditions: Vec::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
            per_seed: Table::default(),
        }
    }

    /// Levels of one statistic in report order.
    pub fn statistic(&self, name: &str) -> Vec<&LevelStat> {
        self.levels.iter().filter(|l| l.statistic == name).collect()
    }
}
