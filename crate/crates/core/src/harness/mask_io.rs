//! Text serialisation of feature masks.
//!
//! ```text
//! SPARSELUT-MASK v1
//! layers <L>
//! layer <k> in <N> out <M> fanin <F>
//! <F ascending input indices>      (one line per output neuron, M lines)
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparsity::{FeatureMask, LayerMask};

use super::io::{read_to_string, write_atomic};

const MAGIC: &str = "SPARSELUT-MASK v1";

pub fn format_mask(mask: &FeatureMask) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "layers {}", mask.layers.len()).unwrap();
    for (k, l) in mask.layers.iter().enumerate() {
        writeln!(s, "layer {k} in {} out {} fanin {}", l.n_in(), l.n_out(), l.fanin()).unwrap();
        for idx in l.neurons() {
            let line: Vec<String> = idx.iter().map(usize::to_string).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
    }
    s
}

pub fn write_mask(mask: &FeatureMask, path: &Path) -> Result<()> {
    write_atomic(path, format_mask(mask).as_bytes())
}

pub fn read_mask(path: &Path) -> Result<FeatureMask> {
    parse_mask(&read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .ok_or_else(|| Error::format(format!("unexpected end of file, expected {what}")))
    }
}

fn keyed(line: &str, lineno: usize, keys: &[&str]) -> Result<Vec<usize>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let bad = || {
        Error::format(format!(
            "line {lineno}: expected '{}', found '{line}'",
            keys.iter().map(|k| format!("{k} <n>")).collect::<Vec<_>>().join(" ")
        ))
    };
    if toks.len() != keys.len() * 2 {
        return Err(bad());
    }
    keys.iter()
        .zip(toks.chunks(2))
        .map(|(k, pair)| {
            if pair[0] != *k {
                return Err(bad());
            }
            pair[1].parse::<usize>().map_err(|_| bad())
        })
        .collect()
}

pub fn parse_mask(text: &str) -> Result<FeatureMask> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, first) = lines.next("header")?;
    if first.trim() != MAGIC {
        return Err(Error::format(format!("line {n}: expected '{MAGIC}'")));
    }
    let (n, l) = lines.next("layer count")?;
    let count = keyed(l, n, &["layers"])?[0];
    if count == 0 {
        return Err(Error::format(format!("line {n}: mask declares no layers")));
    }

    let mut layers = Vec::with_capacity(count);
    for k in 0..count {
        let (n, l) = lines.next("layer header")?;
        let v = keyed(l, n, &["layer", "in", "out", "fanin"])?;
        let (idx, n_in, n_out, fanin) = (v[0], v[1], v[2], v[3]);
        if idx != k {
            return Err(Error::format(format!("line {n}: expected layer {k}, found {idx}")));
        }
        if fanin == 0 || fanin > n_in || n_out == 0 {
            return Err(Error::format(format!(
                "line {n}: need 1 <= fanin <= in and out >= 1"
            )));
        }
        let mut inputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let (n, l) = lines.next("neuron inputs")?;
            let parsed: std::result::Result<Vec<usize>, _> =
                l.split_whitespace().map(str::parse::<usize>).collect();
            let row = parsed.map_err(|e| Error::format(format!("line {n}: {e}")))?;
            if row.len() != fanin {
                return Err(Error::format(format!(
                    "line {n}: {} indices under fanin {fanin}",
                    row.len()
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format(format!(
                    "line {n}: indices must be strictly ascending"
                )));
            }
            if row.iter().any(|&i| i >= n_in) {
                return Err(Error::format(format!("line {n}: index outside 0..{n_in}")));
            }
            inputs.push(row);
        }
        layers.push(LayerMask::new(n_in, fanin, inputs).map_err(|e| Error::format(e.to_string()))?);
    }
    for (n, rest) in lines.inner.by_ref() {
        if !rest.trim().is_empty() {
            return Err(Error::format(format!("line {}: trailing content", n + 1)));
        }
    }
    FeatureMask::new(layers).map_err(|e| Error::format(e.to_string()))
}
