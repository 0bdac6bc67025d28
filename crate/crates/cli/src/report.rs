use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One simulation run, as written to `runs.csv` and by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub condition: String,
    pub controller: String,
    pub seed: u64,
    pub veh_miss: u64,
    pub veh_pass: u64,
    pub veh_delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        Self {
            mean: sum / n as f64,
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub runs: usize,
    pub veh_miss: Stat,
    pub veh_pass: Stat,
    pub veh_delay_s: Stat,
}

#[derive(Debug, Serialize)]
struct CellRow<'a> {
    condition: &'a str,
    controller: &'a str,
    runs: usize,
    veh_miss_mean: f64,
    veh_miss_min: f64,
    veh_miss_max: f64,
    veh_pass_mean: f64,
    veh_pass_min: f64,
    veh_pass_max: f64,
    veh_delay_s_mean: f64,
    veh_delay_s_min: f64,
    veh_delay_s_max: f64,
}

/// Aggregates over seeds, keyed by (condition, controller), in the order
/// conditions and controllers were first seen.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub conditions: Vec<String>,
    pub controllers: Vec<String>,
    pub cells: BTreeMap<(String, String), Cell>,
}

impl ComparisonReport {
    pub fn from_runs(runs: &[RunRow]) -> Self {
        let mut conditions: Vec<String> = Vec::new();
        let mut controllers: Vec<String> = Vec::new();
        let mut groups: BTreeMap<(String, String), Vec<&RunRow>> = BTreeMap::new();
        for r in runs {
            if !conditions.contains(&r.condition) {
                conditions.push(r.condition.clone());
            }
            if !controllers.contains(&r.controller) {
                controllers.push(r.controller.clone());
            }
            groups
                .entry((r.condition.clone(), r.controller.clone()))
                .or_default()
                .push(r);
        }
        let cells = groups
            .into_iter()
            .map(|(k, rows)| {
                let cell = Cell {
                    runs: rows.len(),
                    veh_miss: Stat::of(rows.iter().map(|r| r.veh_miss as f64)),
                    veh_pass: Stat::of(rows.iter().map(|r| r.veh_pass as f64)),
                    veh_delay_s: Stat::of(rows.iter().map(|r| r.veh_delay_s)),
                };
                (k, cell)
            })
            .collect();
        Self {
            conditions,
            controllers,
            cells,
        }
    }

    pub fn cell(&self, condition: &str, controller: &str) -> Option<&Cell> {
        self.cells
            .get(&(condition.to_string(), controller.to_string()))
    }

    /// Mean over conditions of the per-condition mean vehDelay.
    pub fn grand_mean_delay(&self, controller: &str) -> f64 {
        let v: Vec<f64> = self
            .conditions
            .iter()
            .filter_map(|c| self.cell(c, controller))
            .map(|cell| cell.veh_delay_s.mean)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for cond in &self.conditions {
            for ctrl in &self.controllers {
                let Some(c) = self.cell(cond, ctrl) else {
                    continue;
                };
                out.serialize(CellRow {
                    condition: cond,
                    controller: ctrl,
                    runs: c.runs,
                    veh_miss_mean: c.veh_miss.mean,
                    veh_miss_min: c.veh_miss.min,
                    veh_miss_max: c.veh_miss.max,
                    veh_pass_mean: c.veh_pass.mean,
                    veh_pass_min: c.veh_pass.min,
                    veh_pass_max: c.veh_pass.max,
                    veh_delay_s_mean: c.veh_delay_s.mean,
                    veh_delay_s_min: c.veh_delay_s.min,
                    veh_delay_s_max: c.veh_delay_s.max,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Two aligned tables, mean vehMiss and mean vehDelay, conditions down
    /// and controllers across, with a grand-mean row under the delays.
    pub fn render_text(&self) -> String {
        let width = self
            .controllers
            .iter()
            .map(|c| c.len())
            .max()
            .unwrap_or(0)
            .max(10);
        let header = |title: &str| {
            let mut s = format!("{title:<10}");
            for c in &self.controllers {
                let _ = write!(s, " {c:>width$}");
            }
            s.push('\n');
            s
        };
        let mut out = header("vehMiss");
        for cond in &self.conditions {
            let _ = write!(out, "{cond:<10}");
            for ctrl in &self.controllers {
                match self.cell(cond, ctrl) {
                    Some(c) => {
                        let _ = write!(out, " {:>width$.1}", c.veh_miss.mean);
                    }
                    None => {
                        let _ = write!(out, " {:>width$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&header("vehDelay"));
        for cond in &self.conditions {
            let _ = write!(out, "{cond:<10}");
            for ctrl in &self.controllers {
                match self.cell(cond, ctrl) {
                    Some(c) => {
                        let _ = write!(out, " {:>width$.3}", c.veh_delay_s.mean);
                    }
                    None => {
                        let _ = write!(out, " {:>width$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<10}", "Mean");
        for ctrl in &self.controllers {
            let _ = write!(out, " {:>width$.3}", self.grand_mean_delay(ctrl));
        }
        out.push('\n');
        out
    }
}
