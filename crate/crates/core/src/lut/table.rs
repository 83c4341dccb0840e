use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::clipped_relu;
use crate::model::{neuron_forward, poly_features, poly_len, Activation, LutLayer};

/// Largest supported table address width.
pub const MAX_ADDRESS_BITS: u32 = 24;

/// Exhaustive table of one neuron under hardware semantics.
///
/// The address concatenates the `in_bits`-wide level codes of the neuron's
/// inputs, first input in the most significant field. Every row holds the
/// unsigned level code of the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    pub layer: usize,
    pub neuron: usize,
    pub inputs: Vec<usize>,
    pub in_bits: u32,
    pub out_bits: u32,
    rows: Vec<u32>,
    verified: bool,
}

impl TruthTable {
    pub fn new(
        layer: usize,
        neuron: usize,
        inputs: Vec<usize>,
        in_bits: u32,
        out_bits: u32,
        rows: Vec<u32>,
    ) -> Result<Self> {
        if inputs.is_empty() || in_bits == 0 || out_bits == 0 || out_bits > 16 {
            return Err(Error::invalid_arg("table needs inputs and 1..=16 bit codes"));
        }
        let bits = address_bits(in_bits, inputs.len())?;
        if rows.len() as u64 != 1u64 << bits {
            return Err(Error::invalid_arg(format!(
                "table over {bits} address bits needs {} rows, got {}",
                1u64 << bits,
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().position(|&c| c >> out_bits != 0) {
            return Err(Error::invalid_arg(format!(
                "row {r} holds code {} wider than {out_bits} bits",
                rows[r]
            )));
        }
        Ok(Self { layer, neuron, inputs, in_bits, out_bits, rows, verified: false })
    }

    pub fn fanin(&self) -> usize {
        self.inputs.len()
    }

    pub fn address_bits(&self) -> u32 {
        self.in_bits * self.inputs.len() as u32
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Mutable rows. Any earlier verification is dropped.
    pub fn rows_mut(&mut self) -> &mut [u32] {
        self.verified = false;
        &mut self.rows
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    /// Input codes of `address`, first input first.
    pub fn decode(&self, address: usize) -> Vec<u32> {
        decode_fields(address, self.in_bits, self.fanin())
    }

    pub fn lookup(&self, codes: &[u32]) -> u32 {
        let mut address = 0usize;
        for &c in codes {
            address = (address << self.in_bits) | c as usize;
        }
        self.rows[address]
    }
}

fn address_bits(beta: u32, fanin: usize) -> Result<u32> {
    let bits = beta as u64 * fanin as u64;
    if bits > MAX_ADDRESS_BITS as u64 {
        return Err(Error::CapacityExceeded(format!(
            "{beta}-bit inputs with fan-in {fanin} need {bits} address bits, limit is {MAX_ADDRESS_BITS}"
        )));
    }
    Ok(bits as u32)
}

fn decode_fields(address: usize, beta: u32, fanin: usize) -> Vec<u32> {
    let mask = (1usize << beta) - 1;
    (0..fanin)
        .map(|f| ((address >> (beta as usize * (fanin - 1 - f))) & mask) as u32)
        .collect()
}

/// Number of table entries of a neuron with `fanin` inputs of `beta` bits.
pub fn lut_cost(beta: u32, fanin: usize) -> Result<u64> {
    if beta == 0 || fanin == 0 {
        return Err(Error::invalid_arg("bit width and fan-in must be at least 1"));
    }
    let bits = beta as u64 * fanin as u64;
    if bits > 63 {
        return Err(Error::CapacityExceeded(format!("2^{bits} entries do not fit in 63 bits")));
    }
    Ok(1u64 << bits)
}

/// Tabulates neuron `neuron` of `layer` over every input code combination.
///
/// Works column-wise: each monomial is evaluated for all rows before the
/// next is accumulated, in the same order as the scalar forward pass.
pub fn enumerate_truth_table(layer: &LutLayer, layer_index: usize, neuron: usize) -> Result<TruthTable> {
    if neuron >= layer.n_out() {
        return Err(Error::invalid_arg(format!(
            "neuron {neuron} out of range for a layer of {}",
            layer.n_out()
        )));
    }
    let inputs = layer.mask.inputs(neuron).to_vec();
    let fanin = inputs.len();
    let beta = layer.in_quant.bits();
    let bits = address_bits(beta, fanin)?;
    let n_rows = 1usize << bits;
    let levels: Vec<f64> = (0..layer.in_quant.levels()).map(|c| layer.in_quant.level(c)).collect();

    // Per-input column of decoded levels.
    let field_mask = (1usize << beta) - 1;
    let columns: Vec<Vec<f64>> = (0..fanin)
        .map(|f| {
            let shift = beta as usize * (fanin - 1 - f);
            (0..n_rows).map(|r| levels[(r >> shift) & field_mask]).collect()
        })
        .collect();

    let degree = layer.spec.degree;
    let weights = layer.neuron_weights(neuron);
    debug_assert_eq!(weights.len(), poly_len(fanin, degree));
    let mut acc = vec![0.0f64; n_rows];
    acc.iter_mut().for_each(|a| *a += weights[0] * 1.0);
    for (f, col) in columns.iter().enumerate() {
        let w = weights[1 + f];
        for (a, &x) in acc.iter_mut().zip(col) {
            *a += w * x;
        }
    }
    if degree == 2 {
        let mut m = 1 + fanin;
        for i in 0..fanin {
            for j in i..fanin {
                let w = weights[m];
                for ((a, &xi), &xj) in acc.iter_mut().zip(&columns[i]).zip(&columns[j]) {
                    *a += w * (xi * xj);
                }
                m += 1;
            }
        }
    }
    let bias = layer.bias[neuron];
    let q = layer.out_quant;
    let rows = acc.into_iter().map(|a| q.code(clipped_relu(a + bias))).collect();
    TruthTable::new(layer_index, neuron, inputs, beta, q.bits(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verification {
    Pass,
    Mismatch { row: usize, expected: u32, found: u32 },
}

impl Verification {
    pub fn passed(&self) -> bool {
        *self == Verification::Pass
    }
}

/// Recomputes every row one at a time through the scalar neuron path and
/// compares codes. Marks the table verified on success.
pub fn verify_table(table: &mut TruthTable, layer: &LutLayer) -> Verification {
    let weights = layer.neuron_weights(table.neuron);
    let bias = layer.bias[table.neuron];
    let same_shape = table.inputs == layer.mask.inputs(table.neuron)
        && table.in_bits == layer.in_quant.bits()
        && table.out_bits == layer.out_quant.bits();
    let mut x = vec![0.0; table.fanin()];
    for (row, &found) in table.rows.iter().enumerate() {
        for (xi, c) in x.iter_mut().zip(table.decode(row)) {
            *xi = layer.in_quant.level(c);
        }
        let phi = poly_features(&x, layer.spec.degree).expect("validated degree");
        let y = neuron_forward(&phi, weights, bias, Activation::ClippedRelu, Some(&layer.out_quant));
        let expected = layer.out_quant.code(y);
        if !same_shape || expected != found {
            table.verified = false;
            return Verification::Mismatch { row, expected, found };
        }
    }
    table.verified = true;
    Verification::Pass
}

fn hex_digits(bits: u32) -> usize {
    bits.div_ceil(4).max(1) as usize
}

/// Text form: a `LUTTBL v1` header followed by one `<address> <code>` line
/// per row, both in hexadecimal.
pub fn format_table(table: &TruthTable) -> String {
    let inputs: Vec<String> = table.inputs.iter().map(usize::to_string).collect();
    let mut out = format!(
        "LUTTBL v1 neuron={}.{} beta={} fanin={} inputs={}\n",
        table.layer,
        table.neuron,
        table.in_bits,
        table.fanin(),
        inputs.join(",")
    );
    if table.out_bits != table.in_bits {
        // Only the output width can differ from the header's beta.
        out.insert_str(out.len() - 1, &format!(" out_beta={}", table.out_bits));
    }
    let (wa, wo) = (hex_digits(table.address_bits()), hex_digits(table.out_bits));
    for (r, c) in table.rows.iter().enumerate() {
        let _ = writeln!(out, "{r:0wa$x} {c:0wo$x}");
    }
    out
}

pub fn parse_table(text: &str) -> Result<TruthTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::format("empty table file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("LUTTBL") || fields.next() != Some("v1") {
        return Err(Error::format("line 1: expected 'LUTTBL v1'"));
    }
    let (mut id, mut beta, mut fanin, mut inputs, mut out_beta) = (None, None, None, None, None);
    for kv in fields {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::format(format!("line 1: malformed field '{kv}'")))?;
        let bad = || Error::format(format!("line 1: bad value for '{k}'"));
        match k {
            "neuron" => {
                let (l, n) = v.split_once('.').ok_or_else(bad)?;
                id = Some((l.parse::<usize>().map_err(|_| bad())?, n.parse::<usize>().map_err(|_| bad())?));
            }
            "beta" => beta = Some(v.parse::<u32>().map_err(|_| bad())?),
            "out_beta" => out_beta = Some(v.parse::<u32>().map_err(|_| bad())?),
            "fanin" => fanin = Some(v.parse::<usize>().map_err(|_| bad())?),
            "inputs" => {
                inputs = Some(
                    v.split(',')
                        .map(|s| s.parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(Error::format(format!("line 1: unknown field '{k}'"))),
        }
    }
    let missing = |f: &str| Error::format(format!("line 1: missing '{f}'"));
    let (layer, neuron) = id.ok_or_else(|| missing("neuron"))?;
    let beta = beta.ok_or_else(|| missing("beta"))?;
    let fanin = fanin.ok_or_else(|| missing("fanin"))?;
    let inputs = inputs.ok_or_else(|| missing("inputs"))?;
    if inputs.len() != fanin {
        return Err(Error::format(format!("line 1: {} inputs listed, fanin is {fanin}", inputs.len())));
    }
    let bits = address_bits(beta, fanin).map_err(|e| Error::format(format!("line 1: {e}")))?;
    let n_rows = 1usize << bits;
    let mut rows = Vec::with_capacity(n_rows);
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(format!("line {lineno}: expected '<address> <code>' in hex"));
        let mut parts = line.split_whitespace();
        let (a, c) = (parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?);
        if parts.next().is_some() {
            return Err(bad());
        }
        let a = usize::from_str_radix(a, 16).map_err(|_| bad())?;
        let c = u32::from_str_radix(c, 16).map_err(|_| bad())?;
        if a != rows.len() {
            return Err(Error::format(format!("line {lineno}: expected address {:x}, found {a:x}", rows.len())));
        }
        rows.push(c);
    }
    if rows.len() != n_rows {
        return Err(Error::format(format!("expected {n_rows} rows, found {}", rows.len())));
    }
    TruthTable::new(layer, neuron, inputs, beta, out_beta.unwrap_or(beta), rows)
        .map_err(|e| Error::format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use crate::model::{ModelConfig, SparsityMode, TrainedModel};
    use crate::sparsity::{init_random_mask, FeatureMask};

    fn model(widths: &[usize], fanin: usize, bits: u32, degree: u32, seed: u64) -> TrainedModel {
        let cfg = ModelConfig::uniform(widths, fanin, bits, degree, SparsityMode::Random).unwrap();
        let mut rng = RngStream::new(seed);
        let mask = FeatureMask::new(
            cfg.layers
                .iter()
                .map(|s| init_random_mask(s.n_in, s.n_out, s.fanin, &mut rng).unwrap())
                .collect(),
        )
        .unwrap();
        let mut m = TrainedModel::init(&cfg, &mask, &mut rng).unwrap();
        for l in &mut m.layers {
            for b in &mut l.bias {
                *b = 0.5 * rng.normal();
            }
        }
        m
    }

    #[test]
    fn cost_examples() {
        assert_eq!(lut_cost(2, 6).unwrap(), 4096);
        assert_eq!(lut_cost(3, 4).unwrap(), 4096);
        assert_eq!(lut_cost(1, 1).unwrap(), 2);
        assert_eq!(lut_cost(1, 63).unwrap(), 1 << 63);
        assert!(matches!(lut_cost(8, 8), Err(Error::CapacityExceeded(_))));
        assert!(lut_cost(0, 3).is_err());
    }

    #[test]
    fn row_counts() {
        let m = model(&[4, 2], 2, 1, 1, 0);
        assert_eq!(enumerate_truth_table(&m.layers[0], 0, 0).unwrap().rows().len(), 4);
        let m = model(&[8, 2], 6, 2, 1, 0);
        assert_eq!(enumerate_truth_table(&m.layers[0], 0, 1).unwrap().rows().len(), 4096);
    }

    #[test]
    fn zero_neuron_outputs_code_zero() {
        let mut m = model(&[6, 3], 3, 2, 2, 1);
        m.layers[0].weights.fill(0.0);
        m.layers[0].bias.fill(0.0);
        let t = enumerate_truth_table(&m.layers[0], 0, 2).unwrap();
        assert!(t.rows().iter().all(|&c| c == 0));
    }

    #[test]
    fn address_guard() {
        let m = model(&[16, 2], 13, 2, 1, 0);
        assert!(matches!(
            enumerate_truth_table(&m.layers[0], 0, 0),
            Err(Error::CapacityExceeded(_))
        ));
    }

    #[test]
    fn generated_tables_verify_and_faults_are_caught() {
        for degree in [1, 2] {
            let m = model(&[10, 5], 4, 2, degree, 7 + degree as u64);
            for j in 0..5 {
                let mut t = enumerate_truth_table(&m.layers[0], 0, j).unwrap();
                assert_eq!(t.rows().len(), 256);
                assert_eq!(verify_table(&mut t, &m.layers[0]), Verification::Pass);
                assert!(t.is_verified());
                let row = 37 + 41 * j;
                t.rows_mut()[row] ^= 1;
                assert!(!t.is_verified());
                match verify_table(&mut t, &m.layers[0]) {
                    Verification::Mismatch { row: r, .. } => assert_eq!(r, row),
                    Verification::Pass => panic!("flipped bit not detected"),
                }
            }
        }
    }

    #[test]
    fn first_input_is_most_significant() {
        let m = model(&[5, 1], 3, 2, 1, 3);
        let t = enumerate_truth_table(&m.layers[0], 0, 0).unwrap();
        assert_eq!(t.decode(0b10_01_11), vec![2, 1, 3]);
        assert_eq!(t.lookup(&[2, 1, 3]), t.rows()[0b10_01_11]);
    }

    #[test]
    fn text_round_trip() {
        let m = model(&[7, 2], 3, 2, 2, 4);
        let t = enumerate_truth_table(&m.layers[0], 0, 1).unwrap();
        let text = format_table(&t);
        assert!(text.starts_with("LUTTBL v1 neuron=0.1 beta=2 fanin=3 inputs="));
        assert_eq!(text.lines().count(), 65);
        assert_eq!(parse_table(&text).unwrap(), t);
    }

    #[test]
    fn malformed_text() {
        let m = model(&[4, 1], 2, 1, 1, 0);
        let text = format_table(&enumerate_truth_table(&m.layers[0], 0, 0).unwrap());
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_table(&truncated), Err(Error::Format(_))));
        let swapped = text.replace("\n1 ", "\n2 ");
        assert!(matches!(parse_table(&swapped), Err(Error::Format(_))));
        assert!(matches!(parse_table("LUTTBL v2\n"), Err(Error::Format(_))));
    }
}
