//! Iteration-count tables in the layout of the robustness experiments:
//! levels as row groups, one sweep parameter per row, one per column.

use super::BenchError;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Converged(usize),
    Failed(String),
}

impl CellOutcome {
    pub fn count(&self) -> Option<usize> {
        match self {
            CellOutcome::Converged(n) => Some(*n),
            CellOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub level: usize,
    /// Display string of the row parameter value; `-` when the level is the
    /// only row key.
    pub row_value: String,
    pub cells: Vec<CellOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTable {
    pub problem: String,
    /// Name of the row parameter (`-` if none).
    pub row_param: String,
    pub col_param: String,
    /// Display strings of the column parameter values.
    pub col_values: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Canonical display of a parameter value; stable and re-parseable.
pub fn format_param(v: f64) -> String {
    format!("{v:e}")
}

impl IterationTable {
    pub fn cell(&self, level: usize, row_value: &str, col: &str) -> Option<&CellOutcome> {
        let col_idx = self.col_values.iter().position(|c| c == col)?;
        self.rows
            .iter()
            .find(|r| r.level == level && r.row_value == row_value)
            .map(|r| &r.cells[col_idx])
    }

    pub fn levels(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.rows.iter().map(|r| r.level).collect();
        out.dedup();
        out
    }

    /// The table restricted to the given levels, in their order here.
    pub fn restrict_levels(&self, levels: &[usize]) -> IterationTable {
        IterationTable {
            problem: self.problem.clone(),
            row_param: self.row_param.clone(),
            col_param: self.col_param.clone(),
            col_values: self.col_values.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| levels.contains(&r.level))
                .cloned()
                .collect(),
        }
    }

    /// max/min converged iteration count across the grid at one level;
    /// `None` if the level has failed cells or is absent.
    pub fn robustness_ratio(&self, level: usize) -> Option<f64> {
        let counts: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.level == level)
            .flat_map(|r| r.cells.iter())
            .map(|c| c.count())
            .collect::<Option<Vec<_>>>()?;
        let max = *counts.iter().max()?;
        let min = *counts.iter().min()?;
        Some(max as f64 / min as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# key: problem={} row_param={} col_param={}",
            self.problem, self.row_param, self.col_param
        );
        let _ = writeln!(out, "level,row,{}", self.col_values.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row
                .cells
                .iter()
                .map(|c| match c {
                    CellOutcome::Converged(n) => n.to_string(),
                    CellOutcome::Failed(_) => "F".to_string(),
                })
                .collect();
            let _ = writeln!(out, "{},{},{}", row.level, row.row_value, cells.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<IterationTable, BenchError> {
        let mut problem = String::new();
        let mut row_param = "-".to_string();
        let mut col_param = String::new();
        let mut col_values: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(kv) = meta.trim().strip_prefix("key:") {
                    for field in kv.split_whitespace() {
                        if let Some((k, v)) = field.split_once('=') {
                            match k {
                                "problem" => problem = v.to_string(),
                                "row_param" => row_param = v.to_string(),
                                "col_param" => col_param = v.to_string(),
                                _ => {}
                            }
                        }
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match &col_values {
                None => {
                    if fields.len() < 3 || fields[0] != "level" || fields[1] != "row" {
                        return Err(BenchError::TableParse {
                            line: lineno + 1,
                            message: "expected header `level,row,<columns>`".into(),
                        });
                    }
                    col_values = Some(fields[2..].iter().map(|s| s.to_string()).collect());
                }
                Some(cols) => {
                    if fields.len() != cols.len() + 2 {
                        return Err(BenchError::TableParse {
                            line: lineno + 1,
                            message: format!(
                                "expected {} fields, found {}",
                                cols.len() + 2,
                                fields.len()
                            ),
                        });
                    }
                    let level: usize = fields[0].parse().map_err(|_| BenchError::TableParse {
                        line: lineno + 1,
                        message: format!("bad level `{}`", fields[0]),
                    })?;
                    let cells = fields[2..]
                        .iter()
                        .map(|s| {
                            if *s == "F" {
                                Ok(CellOutcome::Failed("recorded failure".into()))
                            } else {
                                s.parse::<usize>().map(CellOutcome::Converged).map_err(|_| {
                                    BenchError::TableParse {
                                        line: lineno + 1,
                                        message: format!("bad cell `{s}`"),
                                    }
                                })
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    rows.push(TableRow { level, row_value: fields[1].to_string(), cells });
                }
            }
        }
        let col_values = col_values.ok_or(BenchError::TableParse {
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(IterationTable { problem, row_param, col_param, col_values, rows })
    }

    /// Markdown rendering mirroring the experiment tables: iteration counts
    /// grouped by level, one sweep parameter per row, one per column.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mut header = format!("| level | {} |", self.row_param);
        let mut rule = "|------:|-------:|".to_string();
        for c in &self.col_values {
            let _ = write!(header, " {}={} |", self.col_param, c);
            rule.push_str("-------:|");
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{rule}");
        let mut last_level = None;
        for row in &self.rows {
            let level_text = if last_level == Some(row.level) {
                String::new()
            } else {
                row.level.to_string()
            };
            last_level = Some(row.level);
            let mut line = format!("| {level_text:>5} | {:>6} |", row.row_value);
            for c in &row.cells {
                let text = match c {
                    CellOutcome::Converged(n) => n.to_string(),
                    CellOutcome::Failed(_) => "F".to_string(),
                };
                let _ = write!(line, " {text:>6} |");
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CellDeviation {
    pub level: usize,
    pub row_value: String,
    pub col_value: String,
    pub produced: Option<usize>,
    pub reference: Option<usize>,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct TableDiff {
    pub cells: Vec<CellDeviation>,
    pub tolerance: f64,
}

impl TableDiff {
    pub fn passes(&self) -> bool {
        self.cells.iter().all(|c| {
            c.produced.is_some() && c.reference.is_some() && c.relative_deviation <= self.tolerance
        })
    }

    pub fn worst(&self) -> f64 {
        self.cells.iter().map(|c| c.relative_deviation).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for TableDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.cells {
            let mark = if c.produced.is_some()
                && c.reference.is_some()
                && c.relative_deviation <= self.tolerance
            {
                "ok  "
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "[{mark}] level {} row {} col {}: produced {:?} vs reference {:?} (dev {:.4})",
                c.level, c.row_value, c.col_value, c.produced, c.reference, c.relative_deviation
            )?;
        }
        Ok(())
    }
}

/// Per-cell relative deviation of two tables of identical shape; failed or
/// missing cells never pass, regardless of the tolerance.
pub fn compare_tables(
    produced: &IterationTable,
    reference: &IterationTable,
    tolerance: f64,
) -> Result<TableDiff, BenchError> {
    if produced.col_values != reference.col_values
        || produced.rows.len() != reference.rows.len()
        || produced
            .rows
            .iter()
            .zip(&reference.rows)
            .any(|(a, b)| a.level != b.level || a.row_value != b.row_value)
    {
        return Err(BenchError::TableShapeMismatch);
    }
    let mut cells = Vec::new();
    for (pr, rr) in produced.rows.iter().zip(&reference.rows) {
        for (c, (pc, rc)) in pr.cells.iter().zip(&rr.cells).enumerate() {
            let produced_count = pc.count();
            let reference_count = rc.count();
            let relative_deviation = match (produced_count, reference_count) {
                (Some(p), Some(r)) if r > 0 => (p as f64 - r as f64).abs() / r as f64,
                _ => f64::INFINITY,
            };
            cells.push(CellDeviation {
                level: pr.level,
                row_value: pr.row_value.clone(),
                col_value: produced.col_values[c].clone(),
                produced: produced_count,
                reference: reference_count,
                relative_deviation,
            });
        }
    }
    Ok(TableDiff { cells, tolerance })
}
