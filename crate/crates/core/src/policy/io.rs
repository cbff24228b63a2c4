//! Text policy files:
//!
//! ```text
//! POLICY v1
//! 2 32 32 4
//! <weight 0>
//! <weight 1>
//! ...
//! ```
//!
//! Weights are written with 17 significant digits, which round-trips `f64`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Architecture, PolicyNetwork, INPUT_DIM, OUTPUT_DIM};
use crate::error::{Error, Result};

const MAGIC: &str = "POLICY v1";

pub fn write_policy<W: Write>(policy: &PolicyNetwork, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    let widths: Vec<String> = policy.arch().widths().iter().map(ToString::to_string).collect();
    writeln!(out, "{}", widths.join(" "))?;
    for w in policy.weights() {
        writeln!(out, "{w:.16e}")?;
    }
    Ok(())
}

pub fn read_policy<R: Read>(input: R, origin: &Path) -> Result<PolicyNetwork> {
    let err = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), line, msg };
    let mut lines = BufReader::new(input).lines().enumerate();
    let mut next = || lines.next().map(|(i, l)| (i + 1, l));

    match next() {
        Some((_, Ok(l))) if l.trim() == MAGIC => {}
        Some((n, Ok(l))) => return Err(err(n, format!("expected {MAGIC:?}, found {l:?}"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(err(1, "empty file".into())),
    }
    let (n, l) = next().ok_or_else(|| err(2, "missing architecture line".into()))?;
    let widths = l?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| err(n, format!("bad width {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 || widths[0] != INPUT_DIM || widths[widths.len() - 1] != OUTPUT_DIM {
        return Err(err(n, format!("architecture must run {INPUT_DIM} -> ... -> {OUTPUT_DIM}")));
    }
    let arch = Architecture::new(widths[1..widths.len() - 1].to_vec()).map_err(|e| err(n, e.to_string()))?;

    let mut weights = Vec::with_capacity(arch.param_count());
    while let Some((n, l)) = next() {
        let l = l?;
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        let w: f64 = t.parse().map_err(|e| err(n, format!("bad weight {t:?}: {e}")))?;
        if !w.is_finite() {
            return Err(err(n, "non-finite weight".into()));
        }
        weights.push(w);
    }
    let got = weights.len();
    PolicyNetwork::from_weights(arch, weights).map_err(|e| err(2 + got, e.to_string()))
}

pub fn save_policy(policy: &PolicyNetwork, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_policy(policy, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyNetwork> {
    read_policy(fs::File::open(path)?, path)
}
