use std::fmt;

use crate::env::{optimal_expected_steps, oracle, GridSpec};
use crate::error::Result;

use super::fmt_float;

/// The three independent estimates of the optimal expected episode length
/// for one task, plus the BFS distance table.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub spec: GridSpec,
    pub manhattan: f64,
    pub bfs: f64,
    pub value_iteration: f64,
    pub distances: Vec<Vec<usize>>,
}

impl OracleReport {
    pub fn max_disagreement(&self) -> f64 {
        let v = [self.manhattan, self.bfs, self.value_iteration];
        v.iter().flat_map(|a| v.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max)
    }
}

pub fn oracle_report(spec: &GridSpec) -> Result<OracleReport> {
    spec.validate()?;
    Ok(OracleReport {
        spec: spec.clone(),
        manhattan: optimal_expected_steps(spec),
        bfs: oracle::bfs_expected_steps(spec),
        value_iteration: oracle::greedy_expected_steps(spec),
        distances: oracle::bfs_distances(spec),
    })
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.spec.size;
        writeln!(f, "grid {n}x{n}, goal {}, {} start cells", self.spec.goal, self.spec.start_cells().len())?;
        writeln!(f, "optimal_expected_steps  {}", fmt_float(self.manhattan))?;
        writeln!(f, "bfs_average             {}", fmt_float(self.bfs))?;
        writeln!(f, "value_iteration_greedy  {}", fmt_float(self.value_iteration))?;
        writeln!(f, "max_disagreement        {}", fmt_float(self.max_disagreement()))?;
        writeln!(f, "bfs distances:")?;
        let width = self.distances.iter().flatten().max().map_or(1, |d| d.to_string().len());
        for row in &self.distances {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:>width$}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        Ok(())
    }
}
