//! Plain-text body format.
//!
//! Line 1: `<BACKEND> <N>`; then exactly N lines `<parameter> <u>` with both
//! values printed to 17 significant digits, which round-trips every f64
//! bit-exactly.

use super::grid::grid_for;
use super::{Backend, BodyError, SupportField};

pub(crate) fn to_text(body: &SupportField) -> String {
    let g = body.grid();
    let mut out = String::with_capacity(48 * (body.len() + 1));
    out.push_str(&format!("{} {}\n", body.backend().name(), body.len()));
    for j in 0..body.len() {
        out.push_str(&format!("{:.16e} {:.16e}\n", g.params[j], body.values()[j]));
    }
    out
}

pub(crate) fn from_text(text: &str) -> Result<SupportField, BodyError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(BodyError::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let mut tokens = header.split_whitespace();
    let backend = match tokens.next() {
        Some("CIRCLE") => Backend::Circle,
        Some("AXISYMMETRIC") => Backend::Axisymmetric,
        other => {
            return Err(BodyError::Parse {
                line: 1,
                msg: format!("unknown backend {:?}", other.unwrap_or("")),
            })
        }
    };
    let n: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or(BodyError::Parse {
            line: 1,
            msg: "missing or invalid node count".into(),
        })?;
    if tokens.next().is_some() {
        return Err(BodyError::Parse {
            line: 1,
            msg: "trailing tokens after header".into(),
        });
    }

    let grid = grid_for(backend, n.max(super::grid::MIN_NODES));
    let mut u = Vec::with_capacity(n);
    for j in 0..n {
        let (idx, line) = lines.next().ok_or(BodyError::Parse {
            line: j + 2,
            msg: format!("expected {n} value lines, got {j}"),
        })?;
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let param: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(BodyError::Parse {
                line: lineno,
                msg: "missing or invalid parameter value".into(),
            })?;
        let value: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(BodyError::Parse {
                line: lineno,
                msg: "missing or invalid support value".into(),
            })?;
        if parts.next().is_some() {
            return Err(BodyError::Parse {
                line: lineno,
                msg: "trailing tokens after support value".into(),
            });
        }
        if n >= super::grid::MIN_NODES {
            let expected = grid.params[j];
            if (param - expected).abs() > 1e-12 * (1.0 + expected.abs()) {
                return Err(BodyError::Parse {
                    line: lineno,
                    msg: format!("parameter {param} does not match the grid node {expected}"),
                });
            }
        }
        u.push(value);
    }
    for (idx, line) in lines {
        if !line.trim().is_empty() {
            return Err(BodyError::Parse {
                line: idx + 1,
                msg: "unexpected content after the value lines".into(),
            });
        }
    }
    SupportField::from_values(backend, u)
}
