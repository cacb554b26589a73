//! Synthetic interconnect fixtures.

use crate::netlist::{NetlistBuilder, NetlistError, RlckNetlist};

/// Smooth deterministic variation in `[1 - amp, 1 + amp]`.
fn wobble(k: usize, amp: f64) -> f64 {
    1.0 + amp * (0.7 * k as f64).sin() * (0.13 * k as f64 + 0.4).cos()
}

/// Two-port RC ladder: series resistors, shunt and next-nearest coupling
/// capacitors, resistive terminations at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct RcLadder {
    pub nodes: usize,
    pub total_r: f64,
    pub total_c: f64,
    /// Fraction of the shunt capacitance placed between nodes `k` and `k+2`.
    pub coupling: f64,
    pub termination: f64,
}

impl Default for RcLadder {
    fn default() -> Self {
        Self {
            nodes: 500,
            total_r: 20.0,
            total_c: 2e-12,
            coupling: 0.1,
            termination: 50.0,
        }
    }
}

impl RcLadder {
    pub fn with_nodes(nodes: usize) -> Self {
        Self { nodes, ..Self::default() }
    }

    pub fn build(&self) -> Result<RlckNetlist, NetlistError> {
        let n = self.nodes.max(2);
        let node = |k: usize| format!("n{k}");
        let r_seg = self.total_r / (n - 1) as f64;
        let c_node = self.total_c / n as f64;
        let mut b = NetlistBuilder::new();
        for k in 0..n {
            b.capacitor(&format!("C{k}"), &node(k), "0", c_node * wobble(k, 0.2))?;
            if k + 1 < n {
                b.resistor(&format!("R{k}"), &node(k), &node(k + 1), r_seg * wobble(k + 7, 0.3))?;
            }
            if k + 2 < n && self.coupling > 0.0 {
                b.capacitor(
                    &format!("CX{k}"),
                    &node(k),
                    &node(k + 2),
                    self.coupling * c_node * wobble(k + 3, 0.5),
                )?;
            }
        }
        b.resistor("RT1", &node(0), "0", self.termination)?;
        b.resistor("RT2", &node(n - 1), "0", self.termination)?;
        b.port("P1", &node(0))?;
        b.port("P2", &node(n - 1))?;
        b.build()
    }
}

/// Two-port coupled RLCk line: a chain of inductive segments with parallel
/// damping resistors, shunt capacitors at every node, and mutual inductance
/// to the next two segments.
#[derive(Debug, Clone, PartialEq)]
pub struct RlckLine {
    pub segments: usize,
    pub total_l: f64,
    pub total_c: f64,
    pub damping: f64,
    pub k1: f64,
    pub k2: f64,
    pub terminations: (f64, f64),
}

impl Default for RlckLine {
    fn default() -> Self {
        Self {
            segments: 1000,
            total_l: 1.5e-9,
            total_c: 0.6e-12,
            damping: 2.0,
            k1: 0.3,
            k2: 0.1,
            terminations: (100.0, 75.0),
        }
    }
}

impl RlckLine {
    pub fn with_segments(segments: usize) -> Self {
        Self { segments, ..Self::default() }
    }

    /// State-space order: one voltage per node plus one current per segment.
    pub fn order(&self) -> usize {
        2 * self.segments + 1
    }

    pub fn build(&self) -> Result<RlckNetlist, NetlistError> {
        let s = self.segments.max(1);
        let node = |k: usize| format!("n{k}");
        let l_seg = self.total_l / s as f64;
        let c_node = self.total_c / (s + 1) as f64;
        let mut b = NetlistBuilder::new();
        let mut l_vals = Vec::with_capacity(s);
        for k in 0..=s {
            b.capacitor(&format!("C{k}"), &node(k), "0", c_node * wobble(k, 0.15))?;
        }
        for k in 0..s {
            let l = l_seg * wobble(k + 11, 0.1);
            l_vals.push(l);
            b.inductor(&format!("L{k}"), &node(k), &node(k + 1), l)?;
            b.resistor(&format!("R{k}"), &node(k), &node(k + 1), self.damping * wobble(k + 5, 0.2))?;
        }
        for k in 0..s {
            for (d, kc) in [(1, self.k1), (2, self.k2)] {
                if k + d < s && kc != 0.0 {
                    let m = kc * (l_vals[k] * l_vals[k + d]).sqrt();
                    b.coupling(&format!("K{d}_{k}"), &format!("L{k}"), &format!("L{}", k + d), m)?;
                }
            }
        }
        b.resistor("RT1", &node(0), "0", self.terminations.0)?;
        b.resistor("RT2", &node(s), "0", self.terminations.1)?;
        b.port("P1", &node(0))?;
        b.port("P2", &node(s))?;
        b.build()
    }
}

/// One-port: a resistor from the port node to ground.
pub fn shunt_resistor(ohms: f64) -> Result<RlckNetlist, NetlistError> {
    let mut b = NetlistBuilder::new();
    b.resistor("R1", "a", "0", ohms)?.port("P1", "a")?;
    b.build()
}

/// Two-port: a single resistor between the two port nodes.
pub fn series_resistor(ohms: f64) -> Result<RlckNetlist, NetlistError> {
    let mut b = NetlistBuilder::new();
    b.resistor("R1", "a", "b", ohms)?.port("P1", "a")?.port("P2", "b")?;
    b.build()
}
