use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::write_atomic;
use crate::model::TrainedModel;

use super::table::{enumerate_truth_table, verify_table, TruthTable, Verification};

/// Bus-level view of one layer. Input `i` occupies bits
/// `[i·in_bits, (i+1)·in_bits)` of the layer's input bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInterface {
    pub n_in: usize,
    pub n_out: usize,
    pub in_bits: u32,
    pub out_bits: u32,
    /// Input indices of every neuron, ascending.
    pub neurons: Vec<Vec<usize>>,
    /// Output register stage after the layer.
    pub registered: bool,
}

impl LayerInterface {
    pub fn in_width(&self) -> usize {
        self.n_in * self.in_bits as usize
    }

    pub fn out_width(&self) -> usize {
        self.n_out * self.out_bits as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub layers: Vec<LayerInterface>,
}

impl Netlist {
    pub fn pipeline_depth(&self) -> usize {
        self.layers.iter().filter(|l| l.registered).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid_arg("netlist has no layers"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.neurons.len() != layer.n_out {
                return Err(Error::invalid_state(format!("layer {l}: neuron list length differs from width")));
            }
            if let Some(i) = layer.neurons.iter().flatten().find(|&&i| i >= layer.n_in) {
                return Err(Error::invalid_state(format!("layer {l}: input {i} out of range")));
            }
            if let Some(next) = self.layers.get(l + 1) {
                if next.in_width() != layer.out_width() {
                    return Err(Error::invalid_state(format!(
                        "layer {l} drives {} bits, layer {} reads {}",
                        layer.out_width(),
                        l + 1,
                        next.in_width()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn build_netlist(model: &TrainedModel) -> Result<Netlist> {
    let netlist = Netlist {
        layers: model
            .layers
            .iter()
            .map(|layer| LayerInterface {
                n_in: layer.mask.n_in(),
                n_out: layer.n_out(),
                in_bits: layer.in_quant.bits(),
                out_bits: layer.out_quant.bits(),
                neurons: layer.mask.neurons().map(<[usize]>::to_vec).collect(),
                registered: true,
            })
            .collect(),
    };
    netlist.validate()?;
    Ok(netlist)
}

#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub netlist: Netlist,
    /// `tables[l][j]` belongs to neuron `j` of layer `l`.
    pub tables: Vec<Vec<TruthTable>>,
}

impl CompiledModel {
    pub fn total_entries(&self) -> u64 {
        self.tables.iter().flatten().map(|t| t.rows().len() as u64).sum()
    }
}

/// Enumerates and verifies every neuron of `model`, in parallel.
pub fn compile_model(model: &TrainedModel) -> Result<CompiledModel> {
    let netlist = build_netlist(model)?;
    let tables = model
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            (0..layer.n_out())
                .into_par_iter()
                .map(|j| {
                    let mut t = enumerate_truth_table(layer, l, j)?;
                    match verify_table(&mut t, layer) {
                        Verification::Pass => Ok(t),
                        Verification::Mismatch { row, expected, found } => Err(Error::invalid_state(format!(
                            "neuron {l}.{j}: row {row} holds {found}, recomputation gives {expected}"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledModel { netlist, tables })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlFile {
    pub name: String,
    pub text: String,
}

fn neuron_module_name(l: usize, j: usize) -> String {
    format!("l{l}_n{j}")
}

fn emit_neuron(t: &TruthTable, out: &mut String) {
    let a = t.address_bits();
    let o = t.out_bits;
    let inputs: Vec<String> = t.inputs.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "// inputs {}", inputs.join(" "));
    let _ = writeln!(out, "module {} (", neuron_module_name(t.layer, t.neuron));
    let _ = writeln!(out, "    input wire [{}:0] in,", a - 1);
    let _ = writeln!(out, "    output reg [{}:0] out", o - 1);
    let _ = writeln!(out, ");");
    let _ = writeln!(out, "    always @(*) begin");
    let _ = writeln!(out, "        case (in)");
    for (r, &c) in t.rows().iter().enumerate() {
        let _ = writeln!(out, "            {a}'h{r:x}: out = {o}'h{c:x};");
    }
    let _ = writeln!(out, "        endcase");
    let _ = writeln!(out, "    end");
    let _ = writeln!(out, "endmodule");
    let _ = writeln!(out);
}

fn emit_layer(l: usize, li: &LayerInterface, tables: &[TruthTable]) -> String {
    let mut out = String::new();
    for t in tables {
        emit_neuron(t, &mut out);
    }
    let (bi, bo) = (li.in_bits, li.out_bits);
    let _ = writeln!(out, "module layer{l} (");
    let _ = writeln!(out, "    input wire clk,");
    let _ = writeln!(out, "    input wire [{}:0] x,", li.in_width() - 1);
    let _ = writeln!(out, "    output reg [{}:0] y", li.out_width() - 1);
    let _ = writeln!(out, ");");
    let _ = writeln!(out, "    wire [{}:0] y_c;", li.out_width() - 1);
    for (j, idx) in li.neurons.iter().enumerate() {
        let fields: Vec<String> = idx.iter().map(|&i| format!("x[{} +: {bi}]", i * bi as usize)).collect();
        let _ = writeln!(
            out,
            "    {} n{j} (.in({{{}}}), .out(y_c[{} +: {bo}]));",
            neuron_module_name(l, j),
            fields.join(", "),
            j * bo as usize
        );
    }
    if li.registered {
        let _ = writeln!(out, "    always @(posedge clk) y <= y_c;");
    } else {
        let _ = writeln!(out, "    always @(*) y = y_c;");
    }
    let _ = writeln!(out, "endmodule");
    out
}

fn emit_top(netlist: &Netlist) -> String {
    let first = &netlist.layers[0];
    let last = netlist.layers.last().expect("validated");
    let mut out = String::new();
    let _ = writeln!(out, "// pipeline depth {}", netlist.pipeline_depth());
    let _ = writeln!(out, "module top (");
    let _ = writeln!(out, "    input wire clk,");
    let _ = writeln!(out, "    input wire [{}:0] x,", first.in_width() - 1);
    let _ = writeln!(out, "    output wire [{}:0] y", last.out_width() - 1);
    let _ = writeln!(out, ");");
    for (l, li) in netlist.layers.iter().enumerate() {
        let _ = writeln!(out, "    wire [{}:0] a{};", li.out_width() - 1, l + 1);
    }
    for l in 0..netlist.layers.len() {
        let src = if l == 0 { "x".to_string() } else { format!("a{l}") };
        let _ = writeln!(out, "    layer{l} u{l} (.clk(clk), .x({src}), .y(a{}));", l + 1);
    }
    let _ = writeln!(out, "    assign y = a{};", netlist.layers.len());
    let _ = writeln!(out, "endmodule");
    out
}

/// Verilog text: `layer<k>.v` per layer (its neuron modules plus the layer
/// module) and `top.v`. Every table must have passed verification.
pub fn emit_rtl(netlist: &Netlist, tables: &[Vec<TruthTable>]) -> Result<Vec<RtlFile>> {
    netlist.validate()?;
    if tables.len() != netlist.layers.len() {
        return Err(Error::invalid_arg(format!(
            "{} table layers for a {}-layer netlist",
            tables.len(),
            netlist.layers.len()
        )));
    }
    let mut files = Vec::with_capacity(tables.len() + 1);
    for (l, (li, lt)) in netlist.layers.iter().zip(tables).enumerate() {
        if lt.len() != li.n_out {
            return Err(Error::invalid_arg(format!("layer {l}: {} tables for {} neurons", lt.len(), li.n_out)));
        }
        for (j, t) in lt.iter().enumerate() {
            if !t.is_verified() {
                return Err(Error::invalid_state(format!("table of neuron {l}.{j} is not verified")));
            }
            if t.layer != l || t.neuron != j || t.inputs != li.neurons[j] || t.in_bits != li.in_bits || t.out_bits != li.out_bits {
                return Err(Error::invalid_state(format!("table of neuron {l}.{j} does not match the netlist")));
            }
        }
        files.push(RtlFile { name: format!("layer{l}.v"), text: emit_layer(l, li, lt) });
    }
    files.push(RtlFile { name: "top.v".into(), text: emit_top(netlist) });
    Ok(files)
}

pub fn write_rtl(files: &[RtlFile], dir: &Path) -> Result<()> {
    for f in files {
        write_atomic(&dir.join(&f.name), f.text.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{QuantizerSpec, RngStream};
    use crate::model::{Activation, LayerSpec, LutLayer, ModelConfig, SparsityMode};
    use crate::sparsity::{init_random_mask, FeatureMask, LayerMask};
    use ndarray::array;

    fn identity_model() -> TrainedModel {
        let q = QuantizerSpec::unit(1).unwrap();
        TrainedModel {
            input_quant: q,
            layers: vec![LutLayer {
                spec: LayerSpec { n_in: 1, n_out: 1, fanin: 1, bits: 1, degree: 1, initial_fanin: None },
                mask: LayerMask::new(1, 1, vec![vec![0]]).unwrap(),
                weights: array![[0.0, 1.0]],
                bias: vec![0.0],
                in_quant: q,
                out_quant: q,
                activation: Activation::Linear,
            }],
        }
    }

    #[test]
    fn identity_neuron_has_two_entry_case() {
        let c = compile_model(&identity_model()).unwrap();
        assert_eq!(c.tables[0][0].rows(), &[0, 1]);
        let files = emit_rtl(&c.netlist, &c.tables).unwrap();
        assert_eq!(files.len(), 2);
        let text = &files[0].text;
        assert!(text.contains("1'h0: out = 1'h0;"));
        assert!(text.contains("1'h1: out = 1'h1;"));
        assert_eq!(text.matches(": out = ").count(), 2);
        assert!(files[1].text.contains("layer0 u0 (.clk(clk), .x(x), .y(a1));"));
    }

    #[test]
    fn unverified_table_refused() {
        let mut c = compile_model(&identity_model()).unwrap();
        c.tables[0][0].rows_mut()[0] = 0;
        assert!(matches!(emit_rtl(&c.netlist, &c.tables), Err(Error::InvalidState(_))));
    }

    #[test]
    fn emission_is_deterministic_and_sized() {
        let cfg = ModelConfig::uniform(&[12, 6, 4, 3], 3, 2, 1, SparsityMode::Random).unwrap();
        let build = || {
            let mut rng = RngStream::new(21);
            let mask = FeatureMask::new(
                cfg.layers
                    .iter()
                    .map(|s| init_random_mask(s.n_in, s.n_out, s.fanin, &mut rng).unwrap())
                    .collect(),
            )
            .unwrap();
            TrainedModel::init(&cfg, &mask, &mut rng).unwrap()
        };
        let (a, b) = (compile_model(&build()).unwrap(), compile_model(&build()).unwrap());
        assert_eq!(a.total_entries(), (6 + 4 + 3) * 64);
        assert_eq!(a.netlist.pipeline_depth(), 3);
        assert_eq!(emit_rtl(&a.netlist, &a.tables).unwrap(), emit_rtl(&b.netlist, &b.tables).unwrap());
    }

    #[test]
    fn field_concatenation_follows_mask_order() {
        let q = QuantizerSpec::unit(2).unwrap();
        let model = TrainedModel {
            input_quant: q,
            layers: vec![LutLayer {
                spec: LayerSpec { n_in: 5, n_out: 1, fanin: 2, bits: 2, degree: 1, initial_fanin: None },
                mask: LayerMask::new(5, 2, vec![vec![1, 4]]).unwrap(),
                weights: array![[0.0, 1.0, 0.0]],
                bias: vec![0.0],
                in_quant: q,
                out_quant: q,
                activation: Activation::Linear,
            }],
        };
        let c = compile_model(&model).unwrap();
        let files = emit_rtl(&c.netlist, &c.tables).unwrap();
        assert!(files[0].text.contains("l0_n0 n0 (.in({x[2 +: 2], x[8 +: 2]}), .out(y_c[0 +: 2]));"));
        // Output follows the first (most significant) field only.
        assert_eq!(c.tables[0][0].lookup(&[3, 0]), 3);
        assert_eq!(c.tables[0][0].lookup(&[0, 3]), 0);
    }
}
