use std::fmt::Write as _;
use std::fs;

use super::config::ExperimentConfig;
use super::experiment::{align_bases, train_base_policies};
use super::fmt_float;
use super::seeds::align_seed;
use crate::align::AlignConfig;
use crate::embed::cosine_slices;
use crate::env::{build_object_grid, Instruction};
use crate::error::{Error, Result};

/// Pairwise similarities on the color/shape board. Instruction `i` is color
/// `i / shapes`, shape `i % shapes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub grid_size: usize,
    pub colors: usize,
    pub shapes: usize,
    pub instructions: Vec<Instruction>,
    /// Cosines between raw instruction embeddings.
    pub raw: Vec<Vec<f64>>,
    /// Cosines between projected instruction embeddings.
    pub projected: Vec<Vec<f64>>,
    /// Projected instruction `i` against projected base policy `j`.
    pub crossmodal: Vec<Vec<f64>>,
    pub final_loss: f64,
}

impl ProbeReport {
    fn index(&self, color: usize, shape: usize) -> usize {
        color * self.shapes + shape
    }

    /// Projected cos(color0 shape1, color0 shape0) > cos(color0 shape1,
    /// color1 shape1); with the default vocabulary, "red cone" is closer to
    /// "red box" than to "blue cone".
    pub fn projected_groups_by_color(&self) -> bool {
        let (a, same_color, same_shape) = (self.index(0, 1), self.index(0, 0), self.index(1, 1));
        self.projected[a][same_color] > self.projected[a][same_shape]
    }

    /// The same comparison on raw embeddings, reversed: true when the raw
    /// encoder ranks the same-shape partner at least as high.
    pub fn raw_groups_by_shape_or_ties(&self) -> bool {
        let (a, same_color, same_shape) = (self.index(0, 1), self.index(0, 0), self.index(1, 1));
        self.raw[a][same_shape] >= self.raw[a][same_color]
    }

    /// Fraction of (anchor, same-color partner, same-shape partner) triples
    /// where `matrix` ranks the same-color partner strictly higher.
    pub fn color_grouping_rate(&self, matrix: &[Vec<f64>]) -> f64 {
        let (mut wins, mut total) = (0usize, 0usize);
        for c in 0..self.colors {
            for s in 0..self.shapes {
                let a = self.index(c, s);
                for s2 in (0..self.shapes).filter(|&x| x != s) {
                    for c2 in (0..self.colors).filter(|&x| x != c) {
                        total += 1;
                        if matrix[a][self.index(c, s2)] > matrix[a][self.index(c2, s)] {
                            wins += 1;
                        }
                    }
                }
            }
        }
        wins as f64 / total.max(1) as f64
    }

    /// `kind,source,target,cosine` with 6x6 rows per kind on the default board.
    pub fn to_csv(&self) -> String {
        let kinds = [("raw", &self.raw), ("projected", &self.projected), ("crossmodal", &self.crossmodal)];
        let rows = kinds.into_iter().flat_map(|(kind, m)| {
            m.iter().enumerate().flat_map(move |(i, row)| {
                row.iter().enumerate().map(move |(j, v)| {
                    [kind.to_string(), self.instructions[i].text.clone(), self.instructions[j].text.clone(), fmt_float(*v)]
                })
            })
        });
        super::csv_text(&["kind", "source", "target", "cosine"], rows).expect("in-memory csv")
    }

    pub fn summary(&self) -> String {
        let mut text = String::new();
        let name = |c, s| self.instructions[self.index(c, s)].text.as_str();
        let (a, sc, ss) = (self.index(0, 1), self.index(0, 0), self.index(1, 1));
        let _ = writeln!(text, "object grid {0}x{0}, {1} tasks", self.grid_size, self.instructions.len());
        let _ = writeln!(text, "alignment final loss: {}", fmt_float(self.final_loss));
        for (kind, m) in [("raw", &self.raw), ("projected", &self.projected)] {
            let _ = writeln!(
                text,
                "{kind}: cos({}, {}) = {}, cos({}, {}) = {}, color grouping rate {}",
                name(0, 1),
                name(0, 0),
                fmt_float(m[a][sc]),
                name(0, 1),
                name(1, 1),
                fmt_float(m[a][ss]),
                fmt_float(self.color_grouping_rate(m))
            );
        }
        let _ = writeln!(text, "projected similarity groups by color: {}", self.projected_groups_by_color());
        let _ = writeln!(text, "raw similarity groups by shape or ties: {}", self.raw_groups_by_shape_or_ties());
        text
    }
}

fn pairwise(rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| cols.iter().map(|c| cosine_slices(r, c)).collect()).collect()
}

/// Trains one base policy per object, aligns them with their instructions
/// and compares raw against projected similarity. Writes `probe.csv` and
/// `probe.txt` to `config.out_dir`.
pub fn run_objectgrid_probe(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<ProbeReport> {
    config.validate()?;
    let p = &config.probe;
    if p.colors.len() < 2 || p.shapes.len() < 2 {
        return Err(Error::Config("the probe needs at least two colors and two shapes".into()));
    }
    let colors: Vec<&str> = p.colors.iter().map(String::as_str).collect();
    let shapes: Vec<&str> = p.shapes.iter().map(String::as_str).collect();
    let n = p.grid_size;
    let (grid, instructions) = build_object_grid(&colors, &shapes, n)?;
    let tasks = instructions
        .iter()
        .map(|i| Ok((i.clone(), grid.task_spec(i)?)))
        .collect::<Result<Vec<_>>>()?;
    let bases = train_base_policies(&tasks, &config.train, config.seed)?;
    progress(&format!("probe: {} base policies converged", bases.policies.len()));

    let table = config.embedding_table()?;
    let align_config = AlignConfig { seed: align_seed(config.seed, n), ..config.align.clone() };
    let (model, trace, _) = align_bases(&bases, &table, &align_config)?;

    let raw_emb = instructions
        .iter()
        .map(|i| table.embedding(&i.text).map(|e| e.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let proj_text = raw_emb.iter().map(|e| model.project_text(e)).collect::<Result<Vec<_>>>()?;
    let proj_policy = bases.policies.iter().map(|p| model.project_policy(p.weights())).collect::<Result<Vec<_>>>()?;

    let report = ProbeReport {
        grid_size: n,
        colors: colors.len(),
        shapes: shapes.len(),
        raw: pairwise(&raw_emb, &raw_emb)?,
        projected: pairwise(&proj_text, &proj_text)?,
        crossmodal: pairwise(&proj_text, &proj_policy)?,
        instructions,
        final_loss: trace.last().copied().unwrap_or(f64::NAN),
    };
    fs::create_dir_all(&config.out_dir)?;
    fs::write(config.out_dir.join("probe.csv"), report.to_csv())?;
    fs::write(config.out_dir.join("probe.txt"), report.summary())?;
    progress(&format!("probe: projected groups by color = {}", report.projected_groups_by_color()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(projected: Vec<Vec<f64>>) -> ProbeReport {
        let (_, instructions) = build_object_grid(&["red", "blue"], &["box", "cone"], 8).unwrap();
        ProbeReport {
            grid_size: 8,
            colors: 2,
            shapes: 2,
            raw: projected.clone(),
            crossmodal: projected.clone(),
            projected,
            instructions,
            final_loss: 0.0,
        }
    }

    #[test]
    fn grouping_predicates() {
        // order: red box, red cone, blue box, blue cone
        let by_color = vec![
            vec![1.0, 0.9, 0.1, 0.0],
            vec![0.9, 1.0, 0.0, 0.1],
            vec![0.1, 0.0, 1.0, 0.9],
            vec![0.0, 0.1, 0.9, 1.0],
        ];
        let r = toy(by_color.clone());
        assert!(r.projected_groups_by_color());
        assert!(!r.raw_groups_by_shape_or_ties());
        assert_eq!(r.color_grouping_rate(&by_color), 1.0);
        let by_shape: Vec<Vec<f64>> = vec![
            vec![1.0, 0.1, 0.9, 0.0],
            vec![0.1, 1.0, 0.0, 0.9],
            vec![0.9, 0.0, 1.0, 0.1],
            vec![0.0, 0.9, 0.1, 1.0],
        ];
        let r = toy(by_shape.clone());
        assert!(!r.projected_groups_by_color());
        assert!(r.raw_groups_by_shape_or_ties());
        assert_eq!(r.color_grouping_rate(&by_shape), 0.0);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 16);
        assert!(csv.contains("projected,go to the red cone,go to the blue cone,0.9\n"));
    }
}
