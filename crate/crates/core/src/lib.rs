pub mod analysis;
pub mod bt;
pub mod lyapunov;
pub mod mna;
pub mod mtx;
pub mod netlist;
pub mod pipeline;
pub mod sparse;
pub mod synth;
