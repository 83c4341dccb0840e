//! Truth-table enumeration of trained neurons and Verilog emission.

mod rtl;
mod table;

pub use rtl::{build_netlist, compile_model, emit_rtl, write_rtl, CompiledModel, LayerInterface, Netlist, RtlFile};
pub use table::{
    enumerate_truth_table, format_table, lut_cost, parse_table, verify_table, TruthTable, Verification,
    MAX_ADDRESS_BITS,
};
