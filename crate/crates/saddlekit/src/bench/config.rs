//! Plain-text experiment configuration: INI-style sections with key/value
//! lines. Parameter values carry unit annotations (`mu = 1e-2 N*s/m^2`) that
//! are validated against the dimension each problem expects, so dimensional
//! consistency is checked before anything is assembled.

use super::BenchError;
use crate::krylov::StoppingRule;
use crate::precond::InnerCgConfig;
use crate::problems::ProblemKind;
use crate::units::{Dimension, Quantity};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Debug)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub levels: Vec<usize>,
    /// Parameter grids in declaration order of the problem's parameters.
    pub parameters: BTreeMap<String, Vec<Quantity>>,
    pub stopping: StoppingRule,
    pub inner_cg: InnerCgConfig,
    pub output: Option<PathBuf>,
    pub format: TableFormat,
}

/// Expected dimension, sweep role, and order of each problem's parameters.
/// Role: `col` and `row` index the table axes; `fixed` grids must be
/// singletons.
pub fn parameter_roles(problem: ProblemKind) -> Vec<(&'static str, &'static str, &'static str)> {
    match problem {
        ProblemKind::Stokes => vec![("mu", "N*s/m^2", "col")],
        ProblemKind::Elasticity => vec![("mu", "N/m^2", "col"), ("lambda", "N/m^2", "row")],
        ProblemKind::PoissonControl => vec![
            ("alpha", "obj*m^3/W^2", "col"),
            ("beta", "obj/K^2/m^3", "fixed"),
            ("kappa", "W/m/K", "row"),
        ],
        ProblemKind::StokesControl => vec![
            ("alpha", "obj*m^3/N^2", "col"),
            ("beta", "obj*s^2/m^5", "fixed"),
            ("mu", "N*s/m^2", "row"),
        ],
    }
}

fn parse_problem(name: &str, line: usize) -> Result<ProblemKind, BenchError> {
    match name {
        "stokes" => Ok(ProblemKind::Stokes),
        "elasticity" => Ok(ProblemKind::Elasticity),
        "poisson_control" => Ok(ProblemKind::PoissonControl),
        "stokes_control" => Ok(ProblemKind::StokesControl),
        _ => Err(BenchError::Config {
            line,
            message: format!(
                "unknown problem `{name}` (expected stokes, elasticity, poisson_control, stokes_control)"
            ),
        }),
    }
}

fn parse_quantity(text: &str, line: usize) -> Result<Quantity, BenchError> {
    let text = text.trim();
    let (value_text, unit_text) = match text.split_once(char::is_whitespace) {
        Some((v, u)) => (v, u.trim()),
        None => (text, ""),
    };
    let value: f64 = value_text.parse().map_err(|_| BenchError::Config {
        line,
        message: format!("bad numeric value `{value_text}`"),
    })?;
    let dim = if unit_text.is_empty() {
        Dimension::DIMENSIONLESS
    } else {
        unit_text.parse().map_err(|e| BenchError::Config {
            line,
            message: format!("bad unit `{unit_text}`: {e}"),
        })?
    };
    Ok(Quantity::new(value, dim))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, BenchError> {
        let mut problem: Option<ProblemKind> = None;
        let mut levels: Vec<usize> = Vec::new();
        let mut output: Option<PathBuf> = None;
        let mut format = TableFormat::Csv;
        let mut stopping = StoppingRule::default();
        let mut inner_cg = InnerCgConfig::default();
        let mut parameters: BTreeMap<String, Vec<Quantity>> = BTreeMap::new();
        let mut section = String::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| BenchError::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match section.as_str() {
                "experiment" => match key {
                    "problem" => problem = Some(parse_problem(value, line_no)?),
                    "levels" => {
                        levels = value
                            .split(',')
                            .map(|s| {
                                s.trim().parse::<usize>().map_err(|_| BenchError::Config {
                                    line: line_no,
                                    message: format!("bad level `{s}`"),
                                })
                            })
                            .collect::<Result<_, _>>()?;
                    }
                    "output" => output = Some(PathBuf::from(value)),
                    "format" => {
                        format = match value {
                            "csv" => TableFormat::Csv,
                            "markdown" => TableFormat::Markdown,
                            _ => {
                                return Err(BenchError::Config {
                                    line: line_no,
                                    message: format!("unknown format `{value}`"),
                                })
                            }
                        }
                    }
                    _ => {
                        return Err(BenchError::Config {
                            line: line_no,
                            message: format!("unknown key `{key}` in [experiment]"),
                        })
                    }
                },
                "stopping" => match key {
                    "relative_reduction" => {
                        let v: f64 = value.parse().map_err(|_| BenchError::Config {
                            line: line_no,
                            message: format!("bad value `{value}`"),
                        })?;
                        if !(v > 0.0 && v < 1.0) {
                            return Err(BenchError::Config {
                                line: line_no,
                                message: "relative_reduction must lie in (0, 1)".into(),
                            });
                        }
                        stopping.relative_reduction = v;
                    }
                    "max_iterations" => {
                        stopping.max_iterations =
                            value.parse().map_err(|_| BenchError::Config {
                                line: line_no,
                                message: format!("bad value `{value}`"),
                            })?;
                    }
                    "inner_rel_tol" => {
                        inner_cg.rel_tol = value.parse().map_err(|_| BenchError::Config {
                            line: line_no,
                            message: format!("bad value `{value}`"),
                        })?;
                    }
                    "inner_max_iterations" => {
                        inner_cg.max_iterations =
                            value.parse().map_err(|_| BenchError::Config {
                                line: line_no,
                                message: format!("bad value `{value}`"),
                            })?;
                    }
                    _ => {
                        return Err(BenchError::Config {
                            line: line_no,
                            message: format!("unknown key `{key}` in [stopping]"),
                        })
                    }
                },
                "parameters" => {
                    let grid = value
                        .split(',')
                        .map(|entry| parse_quantity(entry, line_no))
                        .collect::<Result<Vec<_>, _>>()?;
                    parameters.insert(key.to_string(), grid);
                }
                other => {
                    return Err(BenchError::Config {
                        line: line_no,
                        message: format!("unknown section `[{other}]`"),
                    })
                }
            }
        }

        let problem = problem.ok_or(BenchError::Config {
            line: 0,
            message: "missing `problem` in [experiment]".into(),
        })?;
        if levels.is_empty() {
            return Err(BenchError::Config {
                line: 0,
                message: "missing or empty `levels` in [experiment]".into(),
            });
        }
        let config = ExperimentConfig {
            problem,
            levels,
            parameters,
            stopping,
            inner_cg,
            output,
            format,
        };
        config.validate()?;
        Ok(config)
    }

    /// Grid checks: every problem parameter present, every value positive and
    /// of the dimension that parameter carries, fixed parameters single-valued.
    pub fn validate(&self) -> Result<(), BenchError> {
        for (name, unit, role) in parameter_roles(self.problem) {
            let grid = self.parameters.get(name).ok_or_else(|| BenchError::Config {
                line: 0,
                message: format!("missing parameter grid `{name}`"),
            })?;
            if grid.is_empty() {
                return Err(BenchError::Config {
                    line: 0,
                    message: format!("parameter grid `{name}` is empty"),
                });
            }
            if role == "fixed" && grid.len() != 1 {
                return Err(BenchError::Config {
                    line: 0,
                    message: format!(
                        "parameter `{name}` is fixed per sweep; give exactly one value (one table per value)"
                    ),
                });
            }
            let expected: Dimension = unit.parse().expect("static unit strings parse");
            for q in grid {
                if q.dim != expected {
                    return Err(BenchError::Config {
                        line: 0,
                        message: format!(
                            "parameter `{name}` expects dimension {expected}, got {} ({})",
                            q.dim, q.value
                        ),
                    });
                }
                if !q.value.is_finite() || q.value <= 0.0 {
                    return Err(BenchError::Config {
                        line: 0,
                        message: format!("parameter `{name}` must be positive, got {}", q.value),
                    });
                }
            }
        }
        for name in self.parameters.keys() {
            if !parameter_roles(self.problem).iter().any(|(n, _, _)| n == name) {
                return Err(BenchError::Config {
                    line: 0,
                    message: format!("unknown parameter `{name}` for {}", self.problem.name()),
                });
            }
        }
        Ok(())
    }
}
