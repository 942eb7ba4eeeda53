//! Line-oriented configuration files: `key = value` pairs with `[section]`
//! headers and `#` comments. Expressions are written as quoted strings.
//!
//! ```text
//! seed = 42
//! format = json
//!
//! [chart example_7_5]
//! catalog = example_7_5
//!
//! [chart tilted]
//! params = x1, x2
//! components = "x1", "x2*cos(pi/3)", "x2*sin(pi/3)", "0"
//! domain = -1 1, -1 1
//! grid = 6, 6
//! basis = standard
//!
//! [checks]
//! names = classification, tensor_identities
//! tolerance.tensor_identities = 1e-8
//! ```
//!
//! A chart section either references the catalog (`catalog = name(...)`) or
//! defines a custom immersion with `params`, `components`, `domain`, `grid`,
//! and an optional `basis` (`standard` or `rotated "<expr in y1..y4m>"`).

use std::collections::BTreeMap;

use slantlab_core::ambient::{ambient_params, rotated_basis, standard_basis, QuaternionicBasis};
use slantlab_core::catalog::{self, CatalogChart, ChartRole};
use slantlab_core::exprmap;
use slantlab_core::geometry::{DomainBox, ImmersionChart};
use thiserror::Error;

use crate::runner;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("chart `{chart}`: {message}")]
    Chart { chart: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Output formats for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Text,
}

/// One chart to run, fully built.
#[derive(Debug, Clone)]
pub struct ChartRun {
    pub built: CatalogChart,
    pub grid_resolution: Vec<usize>,
}

/// A validated run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub format: OutputFormat,
    pub output: Option<String>,
    pub charts: Vec<ChartRun>,
    /// Check names to execute, always sorted.
    pub checks: Vec<String>,
    /// Per-check tolerance overrides.
    pub tolerances: BTreeMap<String, f64>,
    /// Raw bytes of the config source (hashed into reports).
    pub source: Vec<u8>,
}

#[derive(Debug, Default, Clone)]
struct RawSection {
    name: String,
    entries: Vec<(usize, String, String)>,
}

/// Parse and validate a config file's text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut top = RawSection::default();
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line).trim().to_string();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "unterminated section header".into(),
                });
            }
            sections.push(RawSection {
                name: line[1..line.len() - 1].trim().to_string(),
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("expected key = value, found `{line}`"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: "empty key".into(),
            });
        }
        let target = sections.last_mut().unwrap_or(&mut top);
        target.entries.push((line_no, key, value));
    }

    let mut seed: u64 = 0;
    let mut format = OutputFormat::Json;
    let mut output = None;
    let mut default_basis: Option<String> = None;
    for (line, key, value) in &top.entries {
        match key.as_str() {
            "seed" => {
                seed = value.parse().map_err(|_| ConfigError::Parse {
                    line: *line,
                    message: format!("seed must be an unsigned integer, got `{value}`"),
                })?
            }
            "format" => format = parse_format(value, *line)?,
            "output" => output = Some(value.clone()),
            "basis" => default_basis = Some(value.clone()),
            "ambient_dim" => {
                let dim: usize = value.parse().map_err(|_| ConfigError::Parse {
                    line: *line,
                    message: format!("ambient_dim must be an integer, got `{value}`"),
                })?;
                if dim == 0 || !dim.is_multiple_of(4) {
                    return Err(ConfigError::Parse {
                        line: *line,
                        message: format!("ambient_dim must be a positive multiple of 4, got {dim}"),
                    });
                }
            }
            other => {
                return Err(ConfigError::Parse {
                    line: *line,
                    message: format!("unknown top-level key `{other}`"),
                })
            }
        }
    }

    let mut charts: Vec<ChartRun> = Vec::new();
    let mut seen_names: Vec<String> = Vec::new();
    let mut checks: Option<Vec<String>> = None;
    let mut tolerances = BTreeMap::new();

    for section in &sections {
        if section.name == "checks" {
            for (line, key, value) in &section.entries {
                if key == "names" {
                    let list: Vec<String> = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if list.len() == 1 && list[0] == "all" {
                        checks = Some(runner::check_names().iter().map(|s| s.to_string()).collect());
                    } else {
                        for name in &list {
                            if !runner::check_names().contains(&name.as_str()) {
                                return Err(ConfigError::Parse {
                                    line: *line,
                                    message: format!("unknown check `{name}`"),
                                });
                            }
                        }
                        checks = Some(list);
                    }
                } else if let Some(check) = key.strip_prefix("tolerance.") {
                    if !runner::check_names().contains(&check) {
                        return Err(ConfigError::Parse {
                            line: *line,
                            message: format!("tolerance override for unknown check `{check}`"),
                        });
                    }
                    let tol: f64 = value.parse().map_err(|_| ConfigError::Parse {
                        line: *line,
                        message: format!("tolerance must be a number, got `{value}`"),
                    })?;
                    tolerances.insert(check.to_string(), tol);
                } else {
                    return Err(ConfigError::Parse {
                        line: *line,
                        message: format!("unknown key `{key}` in [checks]"),
                    });
                }
            }
            continue;
        }
        let Some(chart_name) = section.name.strip_prefix("chart ") else {
            return Err(ConfigError::Invalid(format!(
                "unknown section `[{}]`",
                section.name
            )));
        };
        let chart_name = chart_name.trim().to_string();
        if chart_name.is_empty() {
            return Err(ConfigError::Invalid("chart section needs a name".into()));
        }
        if seen_names.contains(&chart_name) {
            return Err(ConfigError::Invalid(format!(
                "duplicate chart name `{chart_name}`"
            )));
        }
        seen_names.push(chart_name.clone());
        charts.push(build_chart(
            &chart_name,
            section,
            default_basis.as_deref(),
        )?);
    }

    if charts.is_empty() {
        return Err(ConfigError::Invalid("config defines no charts".into()));
    }
    let mut checks = checks.unwrap_or_else(|| {
        runner::check_names().iter().map(|s| s.to_string()).collect()
    });
    checks.sort();
    checks.dedup();

    Ok(RunConfig {
        seed,
        format,
        output,
        charts,
        checks,
        tolerances,
        source: text.as_bytes().to_vec(),
    })
}

fn strip_comment(line: &str) -> &str {
    // a `#` inside a quoted expression does not start a comment
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_format(value: &str, line: usize) -> Result<OutputFormat, ConfigError> {
    match value {
        "json" => Ok(OutputFormat::Json),
        "text" => Ok(OutputFormat::Text),
        other => Err(ConfigError::Parse {
            line,
            message: format!("format must be json or text, got `{other}`"),
        }),
    }
}

fn chart_err(chart: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Chart {
        chart: chart.to_string(),
        message: message.into(),
    }
}

fn build_chart(
    name: &str,
    section: &RawSection,
    default_basis: Option<&str>,
) -> Result<ChartRun, ConfigError> {
    let mut keys: BTreeMap<&str, &str> = BTreeMap::new();
    for (line, key, value) in &section.entries {
        if keys.insert(key.as_str(), value.as_str()).is_some() {
            return Err(ConfigError::Parse {
                line: *line,
                message: format!("duplicate key `{key}` in chart `{name}`"),
            });
        }
    }

    let basis_spec = keys.get("basis").copied().or(default_basis);

    let mut built = if let Some(reference) = keys.get("catalog") {
        for key in keys.keys() {
            if !["catalog", "grid", "basis"].contains(key) {
                return Err(chart_err(
                    name,
                    format!("key `{key}` not allowed on a catalog reference"),
                ));
            }
        }
        let mut built = catalog::build(reference)
            .map_err(|e| chart_err(name, e.to_string()))?;
        built.name = name.to_string();
        built
    } else {
        let params_raw = keys
            .get("params")
            .ok_or_else(|| chart_err(name, "missing `params`"))?;
        let params: Vec<String> = params_raw
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if params.is_empty() {
            return Err(chart_err(name, "empty parameter list"));
        }
        let mut unique = params.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != params.len() {
            return Err(chart_err(name, "duplicate parameter names"));
        }
        let components_raw = keys
            .get("components")
            .ok_or_else(|| chart_err(name, "missing `components`"))?;
        let component_sources = split_quoted_list(components_raw)
            .map_err(|m| chart_err(name, m))?;
        let param_refs: Vec<&str> = params.iter().map(|s| s.as_str()).collect();
        let components: Result<Vec<_>, _> = component_sources
            .iter()
            .map(|src| exprmap::parse(src, &param_refs))
            .collect();
        let components = components.map_err(|e| chart_err(name, e.to_string()))?;
        let dim = components.len();
        if dim == 0 || dim % 4 != 0 {
            return Err(chart_err(
                name,
                format!("component count {dim} is not a positive multiple of 4"),
            ));
        }
        let domain_raw = keys
            .get("domain")
            .ok_or_else(|| chart_err(name, "missing `domain`"))?;
        let (lo, hi) = parse_domain(domain_raw).map_err(|m| chart_err(name, m))?;
        if lo.len() != params.len() {
            return Err(chart_err(
                name,
                format!(
                    "domain has {} axes but there are {} parameters",
                    lo.len(),
                    params.len()
                ),
            ));
        }
        let domain = DomainBox::new(lo, hi).map_err(|e| chart_err(name, e.to_string()))?;
        let basis = standard_basis(dim / 4).map_err(|e| chart_err(name, e.to_string()))?;
        let chart = ImmersionChart::new(params, components, domain, basis)
            .map_err(|e| chart_err(name, e.to_string()))?;
        let default_grid = vec![3; chart.param_dim()];
        CatalogChart {
            name: name.to_string(),
            chart,
            warped: None,
            role: ChartRole::Plain,
            default_grid,
        }
    };

    if let Some(spec) = basis_spec {
        let basis = parse_basis(spec, built.chart.ambient_dim())
            .map_err(|m| chart_err(name, m))?;
        built = catalog::with_basis(&built, basis)
            .map_err(|e| chart_err(name, e.to_string()))?;
    }

    let grid_resolution = match keys.get("grid") {
        None => built.default_grid.clone(),
        Some(raw) => {
            let res: Result<Vec<usize>, _> =
                raw.split(',').map(|s| s.trim().parse::<usize>()).collect();
            let res = res.map_err(|_| chart_err(name, format!("bad grid `{raw}`")))?;
            if res.len() != built.chart.param_dim() {
                return Err(chart_err(
                    name,
                    format!(
                        "grid has {} axes but the chart has {} parameters",
                        res.len(),
                        built.chart.param_dim()
                    ),
                ));
            }
            res
        }
    };
    if grid_resolution.iter().any(|&r| r < 2) {
        return Err(chart_err(name, "grid resolution must be at least 2 per axis"));
    }

    Ok(ChartRun {
        built,
        grid_resolution,
    })
}

fn parse_basis(spec: &str, dim: usize) -> Result<QuaternionicBasis, String> {
    let spec = spec.trim();
    if spec == "standard" {
        return standard_basis(dim / 4).map_err(|e| e.to_string());
    }
    if let Some(rest) = spec.strip_prefix("rotated") {
        let rest = rest.trim();
        let source = rest
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .ok_or_else(|| format!("rotated basis needs a quoted expression, got `{rest}`"))?;
        let y = ambient_params(dim);
        let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();
        let f = exprmap::parse(source, &y_refs).map_err(|e| e.to_string())?;
        let base = standard_basis(dim / 4).map_err(|e| e.to_string())?;
        return rotated_basis(&base, f).map_err(|e| e.to_string());
    }
    Err(format!("basis must be `standard` or `rotated \"expr\"`, got `{spec}`"))
}

fn split_quoted_list(raw: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = raw.trim();
    while !rest.is_empty() {
        if !rest.starts_with('"') {
            return Err(format!("expected quoted expression at `{rest}`"));
        }
        let Some(close) = rest[1..].find('"') else {
            return Err("unterminated quote in component list".into());
        };
        out.push(rest[1..close + 1].to_string());
        rest = rest[close + 2..].trim_start();
        if let Some(stripped) = rest.strip_prefix(',') {
            rest = stripped.trim_start();
        } else if !rest.is_empty() {
            return Err(format!("expected `,` between components at `{rest}`"));
        }
    }
    if out.is_empty() {
        return Err("empty component list".into());
    }
    Ok(out)
}

fn parse_domain(raw: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in raw.split(',') {
        let parts: Vec<&str> = axis.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(format!("domain axis `{axis}` must be `lo hi`"));
        }
        let l: f64 = parts[0]
            .parse()
            .map_err(|_| format!("bad domain bound `{}`", parts[0]))?;
        let h: f64 = parts[1]
            .parse()
            .map_err(|_| format!("bad domain bound `{}`", parts[1]))?;
        lo.push(l);
        hi.push(h);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_catalog_reference() {
        let cfg = parse_config(
            "seed = 7\n[chart ex]\ncatalog = example_7_5\n[checks]\nnames = classification\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.charts.len(), 1);
        assert_eq!(cfg.charts[0].built.chart.param_dim(), 4);
        assert_eq!(cfg.checks, vec!["classification"]);
    }

    #[test]
    fn duplicate_chart_names_rejected() {
        let err = parse_config(
            "[chart a]\ncatalog = circle\n[chart a]\ncatalog = circle\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate chart name"));
    }

    #[test]
    fn grid_resolution_one_rejected() {
        let err = parse_config(
            "[chart a]\ncatalog = circle\ngrid = 1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn custom_chart_with_expressions() {
        let cfg = parse_config(concat!(
            "[chart tilted]\n",
            "params = x1, x2\n",
            "components = \"x1\", \"x2*cos(pi/3)\", \"x2*sin(pi/3)\", \"0\"\n",
            "domain = -1 1, -1 1\n",
            "grid = 4, 4\n",
        ))
        .unwrap();
        assert_eq!(cfg.charts[0].built.chart.ambient_dim(), 4);
        assert_eq!(cfg.charts[0].grid_resolution, vec![4, 4]);
    }

    #[test]
    fn rotated_basis_override() {
        let cfg = parse_config(concat!(
            "[chart ex76]\n",
            "catalog = example_7_6\n",
            "basis = rotated \"pi/6\"\n",
        ))
        .unwrap();
        assert!(cfg.charts[0].built.chart.basis().is_parallel());
        assert!(cfg.charts[0].built.chart.basis().is_rotated());
    }

    #[test]
    fn unknown_check_rejected() {
        let err = parse_config(
            "[chart a]\ncatalog = circle\n[checks]\nnames = nope\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown check"));
    }

    #[test]
    fn comments_and_quotes() {
        let cfg = parse_config(concat!(
            "# leading comment\n",
            "seed = 3  # trailing\n",
            "[chart a]\n",
            "catalog = circle\n",
        ))
        .unwrap();
        assert_eq!(cfg.seed, 3);
    }
}
