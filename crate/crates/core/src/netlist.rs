//! Line-oriented RLCk netlist parsing.
//!
//! ```text
//! * comment
//! R1 in mid 50
//! C1 mid 0 1p
//! L1 mid out 1n
//! L2 out 0 2n
//! K1 L1 L2 0.5n
//! P1 in
//! ```
//!
//! Node `0` is ground. Values accept the usual SPICE scale suffixes.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("element `{name}` has nonpositive value {value}")]
    NonPositiveValue { name: String, value: f64 },
    #[error("element `{name}` connects node `{node}` to itself")]
    ShortedElement { name: String, node: String },
    #[error("port `{port}` refers to node `{node}`, which no element connects")]
    DanglingPort { port: String, node: String },
    #[error("coupling `{name}` references unknown inductor `{inductor}`")]
    UnknownInductor { name: String, inductor: String },
    #[error("coupling `{name}` couples inductor `{inductor}` with itself")]
    SelfCoupling { name: String, inductor: String },
    #[error("coupling `{name}`: |M| = {mutual:e} must be below sqrt(La*Lb) = {limit:e}")]
    CouplingTooStrong {
        name: String,
        mutual: f64,
        limit: f64,
    },
}

/// Node reference: `None` is ground, `Some(i)` indexes [`RlckNetlist::nodes`].
pub type NodeRef = Option<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub a: NodeRef,
    pub b: NodeRef,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub name: String,
    /// Indices into [`RlckNetlist::inductors`].
    pub a: usize,
    pub b: usize,
    /// Mutual inductance in henries.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub name: String,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RlckNetlist {
    pub nodes: Vec<String>,
    pub ports: Vec<Port>,
    pub resistors: Vec<Branch>,
    pub capacitors: Vec<Branch>,
    pub inductors: Vec<Branch>,
    pub mutual_inductors: Vec<Coupling>,
}

impl RlckNetlist {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.resistors.len()
            + self.capacitors.len()
            + self.inductors.len()
            + self.mutual_inductors.len()
    }

    fn node_name(&self, node: NodeRef) -> &str {
        match node {
            None => "0",
            Some(i) => &self.nodes[i],
        }
    }

    /// Serializes back to the text grammar accepted by [`parse_netlist`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for list in [&self.resistors, &self.capacitors, &self.inductors] {
            for e in list {
                let _ = writeln!(
                    out,
                    "{} {} {} {:e}",
                    e.name,
                    self.node_name(e.a),
                    self.node_name(e.b),
                    e.value
                );
            }
        }
        for k in &self.mutual_inductors {
            let _ = writeln!(
                out,
                "{} {} {} {:e}",
                k.name, self.inductors[k.a].name, self.inductors[k.b].name, k.value
            );
        }
        for p in &self.ports {
            let _ = writeln!(out, "{} {}", p.name, self.nodes[p.node]);
        }
        out
    }
}

/// Incremental netlist construction with the same validation as the parser.
///
/// Element names must carry their kind prefix (`R`, `C`, `L`, `K`, `P`).
#[derive(Debug, Default)]
pub struct NetlistBuilder {
    net: RlckNetlist,
    node_index: HashMap<String, usize>,
    names: HashMap<String, usize>,
    pending_ports: Vec<(String, String)>,
    pending_couplings: Vec<(String, String, String, f64)>,
    line: usize,
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim_name(&mut self, name: &str) -> Result<(), NetlistError> {
        let key = name.to_ascii_uppercase();
        if self.names.contains_key(&key) {
            return Err(NetlistError::DuplicateName {
                line: self.line,
                name: name.to_string(),
            });
        }
        self.names.insert(key, self.line);
        Ok(())
    }

    fn node(&mut self, name: &str) -> NodeRef {
        if name == "0" {
            return None;
        }
        if let Some(&i) = self.node_index.get(name) {
            return Some(i);
        }
        let i = self.net.nodes.len();
        self.net.nodes.push(name.to_string());
        self.node_index.insert(name.to_string(), i);
        Some(i)
    }

    fn branch(&mut self, name: &str, a: &str, b: &str, value: f64) -> Result<Branch, NetlistError> {
        self.claim_name(name)?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(NetlistError::NonPositiveValue {
                name: name.to_string(),
                value,
            });
        }
        if a == b {
            return Err(NetlistError::ShortedElement {
                name: name.to_string(),
                node: a.to_string(),
            });
        }
        Ok(Branch {
            name: name.to_string(),
            a: self.node(a),
            b: self.node(b),
            value,
        })
    }

    pub fn resistor(&mut self, name: &str, a: &str, b: &str, ohms: f64) -> Result<&mut Self, NetlistError> {
        let e = self.branch(name, a, b, ohms)?;
        self.net.resistors.push(e);
        Ok(self)
    }

    pub fn capacitor(&mut self, name: &str, a: &str, b: &str, farads: f64) -> Result<&mut Self, NetlistError> {
        let e = self.branch(name, a, b, farads)?;
        self.net.capacitors.push(e);
        Ok(self)
    }

    pub fn inductor(&mut self, name: &str, a: &str, b: &str, henries: f64) -> Result<&mut Self, NetlistError> {
        let e = self.branch(name, a, b, henries)?;
        self.net.inductors.push(e);
        Ok(self)
    }

    /// Couplings are resolved in [`build`](Self::build), so they may precede their inductors.
    pub fn coupling(&mut self, name: &str, la: &str, lb: &str, henries: f64) -> Result<&mut Self, NetlistError> {
        self.claim_name(name)?;
        if !henries.is_finite() {
            return Err(NetlistError::NonPositiveValue {
                name: name.to_string(),
                value: henries,
            });
        }
        self.pending_couplings
            .push((name.to_string(), la.to_string(), lb.to_string(), henries));
        Ok(self)
    }

    pub fn port(&mut self, name: &str, node: &str) -> Result<&mut Self, NetlistError> {
        self.claim_name(name)?;
        self.pending_ports.push((name.to_string(), node.to_string()));
        Ok(self)
    }

    pub fn build(mut self) -> Result<RlckNetlist, NetlistError> {
        for (name, node) in std::mem::take(&mut self.pending_ports) {
            match self.node_index.get(&node) {
                Some(&i) => self.net.ports.push(Port { name, node: i }),
                None => return Err(NetlistError::DanglingPort { port: name, node }),
            }
        }
        let by_name: HashMap<String, usize> = self
            .net
            .inductors
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.to_ascii_uppercase(), i))
            .collect();
        for (name, la, lb, value) in std::mem::take(&mut self.pending_couplings) {
            let find = |l: &str| {
                by_name
                    .get(&l.to_ascii_uppercase())
                    .copied()
                    .ok_or_else(|| NetlistError::UnknownInductor {
                        name: name.clone(),
                        inductor: l.to_string(),
                    })
            };
            let (a, b) = (find(&la)?, find(&lb)?);
            if a == b {
                return Err(NetlistError::SelfCoupling { name, inductor: la });
            }
            let limit = (self.net.inductors[a].value * self.net.inductors[b].value).sqrt();
            if value.abs() >= limit {
                return Err(NetlistError::CouplingTooStrong {
                    name,
                    mutual: value,
                    limit,
                });
            }
            self.net.mutual_inductors.push(Coupling { name, a, b, value });
        }
        Ok(self.net)
    }
}

/// Parses a numeric value with an optional SPICE scale suffix (`1k`, `2.2meg`, `10pF`).
pub fn parse_value(token: &str) -> Option<f64> {
    let split = token
        .char_indices()
        .find(|&(i, c)| {
            c.is_ascii_alphabetic() && !is_exponent(token, i)
        })
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    let (num, suffix) = token.split_at(split);
    let base: f64 = num.parse().ok()?;
    let lower = suffix.to_ascii_lowercase();
    let scale = if lower.starts_with("meg") {
        1e6
    } else {
        match lower.chars().next() {
            None => 1.0,
            Some('t') => 1e12,
            Some('g') => 1e9,
            Some('k') => 1e3,
            Some('m') => 1e-3,
            Some('u') => 1e-6,
            Some('n') => 1e-9,
            Some('p') => 1e-12,
            Some('f') => 1e-15,
            // bare unit such as "ohm" or "H"
            Some(_) if lower.chars().all(|c| c.is_ascii_alphabetic()) => 1.0,
            Some(_) => return None,
        }
    };
    if !lower.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    Some(base * scale)
}

// `e`/`E` followed by a digit or sign is part of the float, not a suffix.
fn is_exponent(token: &str, i: usize) -> bool {
    let bytes = token.as_bytes();
    if !matches!(bytes[i], b'e' | b'E') || i == 0 || !bytes[i - 1].is_ascii_digit() && bytes[i - 1] != b'.' {
        return false;
    }
    match bytes.get(i + 1) {
        Some(c) if c.is_ascii_digit() => true,
        Some(b'+' | b'-') => bytes.get(i + 2).is_some_and(|c| c.is_ascii_digit()),
        _ => false,
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &line[s..i], column: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &line[s..], column: s + 1 });
    }
    out
}

pub fn parse_netlist(text: &str) -> Result<RlckNetlist, NetlistError> {
    let mut builder = NetlistBuilder::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        builder.line = line_no;
        let line = match raw.find('*') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let tokens = tokenize(line);
        let Some(head) = tokens.first() else { continue };
        if head.text.eq_ignore_ascii_case(".end") {
            break;
        }
        let syntax = |column: usize, message: String| NetlistError::Syntax {
            line: line_no,
            column,
            message,
        };
        let kind = head.text.chars().next().unwrap().to_ascii_uppercase();
        if !matches!(kind, 'R' | 'C' | 'L' | 'K' | 'P') {
            return Err(syntax(head.column, format!("unknown element type in `{}`", head.text)));
        }
        if head.text.len() < 2 {
            return Err(syntax(head.column, "element name needs a suffix after its type letter".into()));
        }
        // Name uniqueness is checked before the remaining fields.
        builder.claim_name(head.text)?;
        builder.names.remove(&head.text.to_ascii_uppercase());

        let expected = if kind == 'P' { 2 } else { 4 };
        if tokens.len() != expected {
            let column = tokens.get(expected).map_or(line.trim_end().len() + 1, |t| t.column);
            return Err(syntax(
                column,
                format!("`{}` expects {} fields, found {}", head.text, expected, tokens.len()),
            ));
        }
        if kind == 'P' {
            builder.port(head.text, tokens[1].text)?;
            continue;
        }
        let value = parse_value(tokens[3].text)
            .ok_or_else(|| syntax(tokens[3].column, format!("invalid value `{}`", tokens[3].text)))?;
        let (name, a, b) = (head.text, tokens[1].text, tokens[2].text);
        match kind {
            'R' => builder.resistor(name, a, b, value)?,
            'C' => builder.capacitor(name, a, b, value)?,
            'L' => builder.inductor(name, a, b, value)?,
            _ => builder.coupling(name, a, b, value)?,
        };
    }
    builder.build()
}
