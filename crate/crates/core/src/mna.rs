//! Modified nodal analysis: stamping, block assembly and the descriptor state-space form.

use faer::Side;
use thiserror::Error;

use crate::netlist::{NodeRef, RlckNetlist};
use crate::sparse::{self, Accumulator, SparseMat};

/// Value placed on zero diagonal entries of `Cn` so that `C` is invertible.
pub const EPS_REG: f64 = 1e-18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MnaError {
    #[error("inductance matrix is not positive definite (check mutual couplings)")]
    InductanceNotPositiveDefinite,
}

/// Matrices of the node/branch equations
/// `Cn v' = -Gn v - E i + B1 u`, `M i' = E^T v`, `y = L1 v`.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub gn: SparseMat,
    pub cn: SparseMat,
    pub inductance: SparseMat,
    pub e: SparseMat,
    pub b1: SparseMat,
    pub l1: SparseMat,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub node_names: Vec<String>,
    pub port_names: Vec<String>,
}

/// Symmetric stamp accumulator sized for a fixed `(n, m, p)`.
///
/// Symmetric blocks are accumulated on their upper triangle and mirrored on
/// build, so symmetry of the result is exact.
#[derive(Debug, Clone)]
pub struct Stamps {
    n: usize,
    m: usize,
    p: usize,
    gn: Accumulator,
    cn: Accumulator,
    inductance: Accumulator,
    e: Accumulator,
    b1: Accumulator,
}

fn mirrored(acc: &Accumulator, n: usize) -> SparseMat {
    let upper = sparse::entries(&acc.build()).collect::<Vec<_>>();
    sparse::from_triplets(
        n,
        n,
        upper.iter().flat_map(|&(i, j, v)| {
            let lower = (i != j).then_some((j, i, v));
            std::iter::once((i, j, v)).chain(lower)
        }),
    )
}

impl Stamps {
    pub fn new(n: usize, m: usize, p: usize) -> Self {
        Self {
            n,
            m,
            p,
            gn: Accumulator::new(n, n),
            cn: Accumulator::new(n, n),
            inductance: Accumulator::new(m, m),
            e: Accumulator::new(n, m),
            b1: Accumulator::new(n, p),
        }
    }

    fn two_terminal(acc: &mut Accumulator, a: NodeRef, b: NodeRef, y: f64) {
        if let Some(a) = a {
            acc.add(a, a, y);
        }
        if let Some(b) = b {
            acc.add(b, b, y);
        }
        if let (Some(a), Some(b)) = (a, b) {
            acc.add(a.min(b), a.max(b), -y);
        }
    }

    pub fn conductance(&mut self, a: NodeRef, b: NodeRef, g: f64) {
        Self::two_terminal(&mut self.gn, a, b, g);
    }

    pub fn capacitance(&mut self, a: NodeRef, b: NodeRef, c: f64) {
        Self::two_terminal(&mut self.cn, a, b, c);
    }

    pub fn inductor(&mut self, branch: usize, a: NodeRef, b: NodeRef, l: f64) {
        if let Some(a) = a {
            self.e.add(a, branch, 1.0);
        }
        if let Some(b) = b {
            self.e.add(b, branch, -1.0);
        }
        self.inductance.add(branch, branch, l);
    }

    pub fn mutual(&mut self, j: usize, k: usize, value: f64) {
        self.inductance.add(j.min(k), j.max(k), value);
    }

    pub fn port(&mut self, index: usize, node: usize) {
        self.b1.add(node, index, 1.0);
    }

    pub fn finish(self, node_names: Vec<String>, port_names: Vec<String>) -> MnaSystem {
        let b1 = self.b1.build();
        MnaSystem {
            gn: mirrored(&self.gn, self.n),
            cn: mirrored(&self.cn, self.n),
            inductance: mirrored(&self.inductance, self.m),
            e: self.e.build(),
            l1: sparse::transpose(&b1),
            b1,
            n: self.n,
            m: self.m,
            p: self.p,
            q: self.p,
            node_names,
            port_names,
        }
    }
}

pub fn assemble_mna(net: &RlckNetlist) -> Result<MnaSystem, MnaError> {
    let (n, m, p) = (net.nodes.len(), net.inductors.len(), net.ports.len());
    let mut st = Stamps::new(n, m, p);
    for r in &net.resistors {
        st.conductance(r.a, r.b, 1.0 / r.value);
    }
    for c in &net.capacitors {
        st.capacitance(c.a, c.b, c.value);
    }
    for (k, l) in net.inductors.iter().enumerate() {
        st.inductor(k, l.a, l.b, l.value);
    }
    for k in &net.mutual_inductors {
        st.mutual(k.a, k.b, k.value);
    }
    for (i, port) in net.ports.iter().enumerate() {
        st.port(i, port.node);
    }
    let mna = st.finish(
        net.nodes.clone(),
        net.ports.iter().map(|p| p.name.clone()).collect(),
    );
    if m > 0 && mna.inductance.sp_cholesky(Side::Lower).is_err() {
        return Err(MnaError::InductanceNotPositiveDefinite);
    }
    Ok(mna)
}

/// Provenance of a state-space model's rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMeta {
    /// `(n, m)` when the model came from MNA assembly.
    pub blocks: Option<(usize, usize)>,
    /// Node-block diagonal positions that received [`EPS_REG`].
    pub regularized: Vec<usize>,
    pub eps_reg: f64,
    pub node_names: Vec<String>,
    pub port_names: Vec<String>,
}

/// Descriptor system `C x' = G x + B u`, `y = L x`.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub c: SparseMat,
    pub g: SparseMat,
    pub b: SparseMat,
    pub l: SparseMat,
    pub meta: ModelMeta,
}

impl StateSpaceModel {
    pub fn new(c: SparseMat, g: SparseMat, b: SparseMat, l: SparseMat) -> Self {
        Self {
            c,
            g,
            b,
            l,
            meta: ModelMeta::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.c.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.l.nrows()
    }
}

/// `G = -[[Gn, E], [-E^T, 0]]`, `C = blkdiag(Cn, M)`, `B = [B1; 0]`, `L = [L1, 0]`.
pub fn to_state_space(mna: &MnaSystem) -> StateSpaceModel {
    let (n, m) = (mna.n, mna.m);
    let big = n + m;
    let mut g = Accumulator::new(big, big);
    for (i, j, v) in sparse::entries(&mna.gn) {
        g.add(i, j, -v);
    }
    for (i, k, v) in sparse::entries(&mna.e) {
        g.add(i, n + k, -v);
        g.add(n + k, i, v);
    }

    let mut c = Accumulator::new(big, big);
    let mut diag = vec![0.0; n];
    for (i, j, v) in sparse::entries(&mna.cn) {
        c.add(i, j, v);
        if i == j {
            diag[i] += v;
        }
    }
    let regularized: Vec<usize> = (0..n).filter(|&i| diag[i] == 0.0).collect();
    for &i in &regularized {
        c.add(i, i, EPS_REG);
    }
    for (i, j, v) in sparse::entries(&mna.inductance) {
        c.add(n + i, n + j, v);
    }

    let b = sparse::from_triplets(big, mna.p, sparse::entries(&mna.b1));
    let l = sparse::from_triplets(mna.q, big, sparse::entries(&mna.l1));
    StateSpaceModel {
        c: c.build(),
        g: g.build(),
        b,
        l,
        meta: ModelMeta {
            blocks: Some((n, m)),
            regularized,
            eps_reg: EPS_REG,
            node_names: mna.node_names.clone(),
            port_names: mna.port_names.clone(),
        },
    }
}

/// Inverse of [`to_state_space`], undoing the recorded regularization.
pub fn extract_mna(model: &StateSpaceModel) -> Option<MnaSystem> {
    let (n, m) = model.meta.blocks?;
    let (p, q) = (model.inputs(), model.outputs());
    let mut gn = Accumulator::new(n, n);
    let mut e = Accumulator::new(n, m);
    for (i, j, v) in sparse::entries(&model.g) {
        match (i < n, j < n) {
            (true, true) => gn.add(i, j, -v),
            (true, false) => e.add(i, j - n, -v),
            _ => {}
        }
    }
    let mut cn = Accumulator::new(n, n);
    let mut inductance = Accumulator::new(m, m);
    for (i, j, v) in sparse::entries(&model.c) {
        match (i < n, j < n) {
            (true, true) => {
                let reg = i == j && model.meta.regularized.binary_search(&i).is_ok();
                let v = if reg { v - model.meta.eps_reg } else { v };
                if v != 0.0 {
                    cn.add(i, j, v);
                }
            }
            (false, false) => inductance.add(i - n, j - n, v),
            _ => {}
        }
    }
    let mut b1 = Accumulator::new(n, p);
    for (i, j, v) in sparse::entries(&model.b) {
        if i < n {
            b1.add(i, j, v);
        }
    }
    let mut l1 = Accumulator::new(q, n);
    for (i, j, v) in sparse::entries(&model.l) {
        if j < n {
            l1.add(i, j, v);
        }
    }
    Some(MnaSystem {
        gn: gn.build(),
        cn: cn.build(),
        inductance: inductance.build(),
        e: e.build(),
        b1: b1.build(),
        l1: l1.build(),
        n,
        m,
        p,
        q,
        node_names: model.meta.node_names.clone(),
        port_names: model.meta.port_names.clone(),
    })
}
