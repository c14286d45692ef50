//! Run-configuration files: a line-oriented `key = value` format with
//! `[section]` headers, strict key checking, and line-numbered errors.
//! Values in the `[shape]`, `[law]`, and `[flow]` sections may be
//! comma-separated lists; the Cartesian product of all lists defines the
//! cells of a parameter sweep (a plain run is the unique cell of a
//! list-free file).

use std::fmt;

use qflow_core::{make_body, Backend, ShapeSpec, SpeedLaw, SupportField};
use qflow_core::flow::FlowConfig;

/// A config problem, tied to a 1-based line number (0 = whole file).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.msg)
        } else {
            write!(f, "{}", self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        msg: msg.into(),
    })
}

const SECTIONS: [&str; 5] = ["shape", "law", "flow", "output", "audit"];
/// Sections whose list-valued keys define sweep cells.
const SWEEPABLE: [&str; 3] = ["shape", "law", "flow"];

#[derive(Debug, Clone, PartialEq)]
pub struct RawEntry {
    pub section: &'static str,
    pub key: String,
    pub values: Vec<String>,
    pub line: usize,
}

/// A parsed config file, order-preserving and untyped.
#[derive(Debug, Clone, PartialEq)]
pub struct Raw {
    pub entries: Vec<RawEntry>,
}

/// Parses the raw file: sections, `key = value` lines, `#` comments.
pub fn parse(text: &str) -> Result<Raw, ConfigError> {
    let mut entries: Vec<RawEntry> = Vec::new();
    let mut section: Option<&'static str> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(line, "unterminated section header");
            };
            let name = name.trim();
            let Some(&canon) = SECTIONS.iter().find(|&&s| s == name) else {
                return err(
                    line,
                    format!("unknown section [{name}] (expected one of [shape], [law], [flow], [output], [audit])"),
                );
            };
            section = Some(canon);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(line, format!("expected `key = value`, got {content:?}"));
        };
        let Some(section) = section else {
            return err(line, "key before any [section] header");
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return err(line, "empty key");
        }
        if entries
            .iter()
            .any(|e| e.section == section && e.key == key)
        {
            return err(line, format!("duplicate key '{key}' in [{section}]"));
        }
        let values: Vec<String> = value
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return err(line, format!("empty value list for '{key}'"));
        }
        entries.push(RawEntry {
            section,
            key,
            values,
            line,
        });
    }
    Ok(Raw { entries })
}

/// One sweep cell: an index into each entry's value list.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Directory-safe id built from the varied keys; empty when nothing
    /// varies (a plain run).
    pub name: String,
    /// (section.key, value) pairs actually varied, in file order.
    pub varied: Vec<(String, String)>,
    chosen: Vec<usize>,
}

impl Raw {
    /// Expands the Cartesian product of all list-valued sweepable keys.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell {
            name: String::new(),
            varied: Vec::new(),
            chosen: vec![0; self.entries.len()],
        }];
        for (ei, e) in self.entries.iter().enumerate() {
            if !SWEEPABLE.contains(&e.section) || e.values.len() < 2 {
                continue;
            }
            let mut next = Vec::with_capacity(cells.len() * e.values.len());
            for cell in &cells {
                for (vi, v) in e.values.iter().enumerate() {
                    let mut c = cell.clone();
                    c.chosen[ei] = vi;
                    c.varied.push((format!("{}.{}", e.section, e.key), v.clone()));
                    next.push(c);
                }
            }
            cells = next;
        }
        for c in &mut cells {
            c.name = c
                .varied
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("__");
        }
        cells
    }

    fn section_line(&self, section: &str) -> usize {
        self.entries
            .iter()
            .find(|e| e.section == section)
            .map(|e| e.line)
            .unwrap_or(0)
    }
}

/// Renders the scalar config of one cell back to canonical text; parsing
/// the result reproduces the same typed setup.
pub fn render(raw: &Raw, cell: &Cell) -> String {
    let mut out = String::new();
    for &section in &SECTIONS {
        let in_section: Vec<(usize, &RawEntry)> = raw
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.section == section)
            .map(|(i, e)| (i, e))
            .collect();
        if in_section.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("[{section}]\n"));
        for (i, e) in in_section {
            let value = if SWEEPABLE.contains(&section) {
                e.values[cell.chosen[i]].clone()
            } else {
                e.values.join(", ")
            };
            out.push_str(&format!("{} = {}\n", e.key, value));
        }
    }
    out
}

/// Which per-run artifacts to write.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputFormats {
    pub csv: bool,
    pub svg: bool,
    pub snapshots: bool,
    pub summary: bool,
}

impl Default for OutputFormats {
    fn default() -> Self {
        OutputFormats {
            csv: true,
            svg: true,
            snapshots: true,
            summary: true,
        }
    }
}

/// Fully typed and validated configuration of a single run.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub shape: ShapeSpec,
    pub resolution: usize,
    pub backend: Backend,
    pub law: SpeedLaw,
    pub flow: FlowConfig,
    pub directory: Option<String>,
    pub formats: OutputFormats,
    pub expect_convergence: bool,
    pub paired_coarse: bool,
}

impl RunSetup {
    /// Builds the configured initial body (construction errors are config
    /// errors: they describe the file, not the run).
    pub fn initial_body(&self) -> Result<SupportField, ConfigError> {
        make_body(&self.shape, self.backend, self.resolution)
            .map_err(|e| ConfigError {
                line: 0,
                msg: format!("invalid shape: {e}"),
            })
    }
}

/// Tracks which entries a build consumed, so leftovers can be reported as
/// unrecognized keys with their line numbers.
struct Cursor<'a> {
    raw: &'a Raw,
    cell: &'a Cell,
    used: Vec<bool>,
}

impl<'a> Cursor<'a> {
    fn new(raw: &'a Raw, cell: &'a Cell) -> Self {
        Cursor {
            raw,
            cell,
            used: vec![false; raw.entries.len()],
        }
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        for (i, e) in self.raw.entries.iter().enumerate() {
            if e.section == section && e.key == key {
                self.used[i] = true;
                return Some((e.values[self.cell.chosen[i]].clone(), e.line));
            }
        }
        None
    }

    fn take_list(&mut self, section: &str, key: &str) -> Option<(Vec<String>, usize)> {
        for (i, e) in self.raw.entries.iter().enumerate() {
            if e.section == section && e.key == key {
                self.used[i] = true;
                return Some((e.values.clone(), e.line));
            }
        }
        None
    }

    fn required(&mut self, section: &str, key: &str) -> Result<(String, usize), ConfigError> {
        self.take(section, key).ok_or_else(|| ConfigError {
            line: self.raw.section_line(section),
            msg: format!("missing required key '{key}' in [{section}]"),
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (i, e) in self.raw.entries.iter().enumerate() {
            if !self.used[i] {
                return err(
                    e.line,
                    format!("unexpected key '{}' in [{}]", e.key, e.section),
                );
            }
        }
        Ok(())
    }
}

fn parse_f64(value: &str, key: &str, line: usize) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError {
            line,
            msg: format!("'{key}' must be a number, got {value:?}"),
        })
}

fn parse_int<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError {
        line,
        msg: format!("'{key}' must be a nonnegative integer, got {value:?}"),
    })
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => err(line, format!("'{key}' must be true or false, got {value:?}")),
    }
}

/// Builds the typed setup of one cell, enforcing every domain constraint
/// with the offending line attached.
pub fn build_setup(raw: &Raw, cell: &Cell) -> Result<RunSetup, ConfigError> {
    let mut cur = Cursor::new(raw, cell);

    // [law] first: it fixes the backend.
    let (n_str, n_line) = cur.required("law", "n")?;
    let n: usize = parse_int(&n_str, "n", n_line)?;
    let (k_str, k_line) = cur.required("law", "k")?;
    let k: usize = parse_int(&k_str, "k", k_line)?;
    let (a_str, a_line) = cur.required("law", "alpha")?;
    let alpha = parse_f64(&a_str, "alpha", a_line)?;
    let law = SpeedLaw::new(n, k, alpha).map_err(|e| ConfigError {
        line: raw.section_line("law"),
        msg: e.to_string(),
    })?;
    let backend = match n {
        1 => Backend::Circle,
        2 => Backend::Axisymmetric,
        _ => {
            return err(
                n_line,
                format!("no backend for n = {n}: n must be 1 (plane curves) or 2 (axisymmetric surfaces)"),
            )
        }
    };

    // [shape]
    let (kind, kind_line) = cur.required("shape", "kind")?;
    let f64_of = |cur: &mut Cursor, key: &str| -> Result<f64, ConfigError> {
        let (v, line) = cur.required("shape", key)?;
        parse_f64(&v, key, line)
    };
    let shape = match kind.as_str() {
        "sphere" => ShapeSpec::Sphere {
            radius: f64_of(&mut cur, "radius")?,
        },
        "ellipse" => ShapeSpec::Ellipse {
            a: f64_of(&mut cur, "a")?,
            b: f64_of(&mut cur, "b")?,
        },
        "ellipsoid_rev" => ShapeSpec::EllipsoidRev {
            a: f64_of(&mut cur, "a")?,
            c: f64_of(&mut cur, "c")?,
        },
        "random_trig" => {
            let (seed, seed_line) = cur.required("shape", "seed")?;
            let (modes, modes_line) = cur.required("shape", "modes")?;
            ShapeSpec::RandomTrig {
                seed: parse_int(&seed, "seed", seed_line)?,
                modes: parse_int(&modes, "modes", modes_line)?,
                margin: f64_of(&mut cur, "margin")?,
            }
        }
        _ => {
            return err(
                kind_line,
                format!("unknown shape kind {kind:?} (expected sphere | ellipse | ellipsoid_rev | random_trig)"),
            )
        }
    };
    let (res_str, res_line) = cur.required("shape", "resolution")?;
    let resolution: usize = parse_int(&res_str, "resolution", res_line)?;

    // [flow]: defaults from the law, every key optional.
    let mut flow = FlowConfig::new(law);
    if let Some((v, line)) = cur.take("flow", "t_end") {
        flow.t_end = parse_f64(&v, "t_end", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "dt_init") {
        flow.dt_init = parse_f64(&v, "dt_init", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "dt_safety") {
        flow.dt_safety = parse_f64(&v, "dt_safety", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "roundness_stop") {
        flow.roundness_stop = parse_f64(&v, "roundness_stop", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "volume_correct") {
        flow.volume_correct = parse_bool(&v, "volume_correct", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "snapshot_stride") {
        flow.snapshot_stride = parse_int(&v, "snapshot_stride", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "max_step_retries") {
        flow.max_step_retries = parse_int(&v, "max_step_retries", line)?;
    }
    if let Some((v, line)) = cur.take("flow", "fixed_dt") {
        flow.fixed_dt = Some(parse_f64(&v, "fixed_dt", line)?);
    }
    flow.validate().map_err(|e| ConfigError {
        line: raw.section_line("flow"),
        msg: e.to_string(),
    })?;

    // [output]
    let directory = cur.take("output", "directory").map(|(v, _)| v);
    let mut formats = OutputFormats::default();
    if let Some((list, line)) = cur.take_list("output", "formats") {
        formats = OutputFormats {
            csv: false,
            svg: false,
            snapshots: false,
            summary: false,
        };
        for f in &list {
            match f.as_str() {
                "csv" => formats.csv = true,
                "svg" => formats.svg = true,
                "snapshots" => formats.snapshots = true,
                "summary" => formats.summary = true,
                _ => {
                    return err(
                        line,
                        format!("unknown format {f:?} (expected csv | svg | snapshots | summary)"),
                    )
                }
            }
        }
    }

    // [audit]
    let mut expect_convergence = false;
    if let Some((v, line)) = cur.take("audit", "expect_convergence") {
        expect_convergence = parse_bool(&v, "expect_convergence", line)?;
    }
    let mut paired_coarse = true;
    if let Some((v, line)) = cur.take("audit", "paired_coarse") {
        paired_coarse = parse_bool(&v, "paired_coarse", line)?;
    }

    cur.finish()?;

    let setup = RunSetup {
        shape,
        resolution,
        backend,
        law,
        flow,
        directory,
        formats,
        expect_convergence,
        paired_coarse,
    };
    // Fail on impossible bodies at load time (shape/backend mismatch,
    // nonpositive axes, grid too small).
    setup.initial_body()?;
    if setup.paired_coarse {
        make_body(&setup.shape, setup.backend, setup.resolution / 2).map_err(|e| ConfigError {
            line: res_line,
            msg: format!(
                "paired_coarse needs a valid half-resolution companion ({} nodes): {e}",
                setup.resolution / 2
            ),
        })?;
    }
    Ok(setup)
}
