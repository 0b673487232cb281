//! Text parameter files.
//!
//! ```text
//! MLC-PARAMS 1
//! config {"input_dim":2,...}
//! segments 4
//! segment hidden0.weight 2 2 32
//! 0.0123 -0.5 ...
//! segment hidden0.bias 1 32
//! 0 0 ...
//! ```
//!
//! One `segment <name> <rank> <dims...>` line per tensor, followed by one
//! line with its row-major values. Values use the shortest representation
//! that parses back to the same `f64`.

use std::io::{BufRead, Write};

use crate::diffcore::{ParamVector, Tensor};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &str = "MLC-PARAMS";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamFile {
    /// Echo of the network config the parameters belong to.
    pub config: serde_json::Value,
    pub params: ParamVector,
}

pub fn write_params<W: Write>(mut out: W, file: &ParamFile) -> std::io::Result<()> {
    writeln!(out, "{PARAMS_MAGIC} {PARAMS_VERSION}")?;
    writeln!(out, "config {}", file.config)?;
    writeln!(out, "segments {}", file.params.segments().len())?;
    for seg in file.params.segments() {
        let shape = seg.tensor.shape();
        write!(out, "segment {} {}", seg.name, shape.len())?;
        for d in shape {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        let mut first = true;
        for v in seg.tensor.data() {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_params<R: BufRead>(input: R) -> Result<ParamFile> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(u64, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i as u64 + 1, l)),
            Some((i, Err(e))) => Err(parse_err(i as u64 + 1, e.to_string())),
            None => Err(parse_err(
                0,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    };

    let (n, header) = next("header")?;
    let version = header
        .strip_prefix(PARAMS_MAGIC)
        .map(str::trim)
        .ok_or_else(|| parse_err(n, "missing magic header".into()))?;
    if version != PARAMS_VERSION.to_string() {
        return Err(parse_err(n, format!("unsupported version `{version}`")));
    }

    let (n, line) = next("config")?;
    let config = line
        .strip_prefix("config ")
        .ok_or_else(|| parse_err(n, "expected `config`".into()))
        .and_then(|s| serde_json::from_str(s).map_err(|e| parse_err(n, e.to_string())))?;

    let (n, line) = next("segments")?;
    let count: usize = line
        .strip_prefix("segments ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| parse_err(n, "expected `segments <count>`".into()))?;

    let mut params = ParamVector::new();
    for _ in 0..count {
        let (n, line) = next("segment header")?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("segment") {
            return Err(parse_err(n, "expected `segment`".into()));
        }
        let name = parts
            .next()
            .ok_or_else(|| parse_err(n, "missing segment name".into()))?
            .to_string();
        let nums: Vec<usize> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(n, format!("bad dimension: {e}")))?;
        let (rank, dims) = nums
            .split_first()
            .ok_or_else(|| parse_err(n, "missing rank".into()))?;
        if *rank != dims.len() {
            return Err(parse_err(n, format!("rank {rank} but {} dims", dims.len())));
        }
        let (n, line) = next("segment values")?;
        let data: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(n, format!("bad value: {e}")))?;
        let tensor = Tensor::new(dims.to_vec(), data).map_err(|e| parse_err(n, e.to_string()))?;
        params
            .push(name, tensor)
            .map_err(|e| parse_err(n, e.to_string()))?;
    }
    Ok(ParamFile { config, params })
}

fn parse_err(line: u64, message: String) -> Error {
    Error::Parse {
        path: "<params>".into(),
        line,
        message,
    }
}
