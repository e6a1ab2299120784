//! Noncommutative operator symbols and canonical words.
//!
//! Three sectors that mutually commute: Alice projectors A(x), Bob projectors
//! B(y) (both Hermitian idempotents for the click outcome), and the
//! non-Hermitian Z(a,i) operators with explicit adjoints. Within a sector no
//! commutation is assumed; projector squares collapse.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorSymbol {
    /// Alice's click projector for input x.
    A { x: u8 },
    /// Bob's click projector for input y.
    B { y: u8 },
    /// Z operator attached to outcome `a` and quadrature node `node`;
    /// `adjoint` marks the starred copy.
    Z { a: u8, node: u8, adjoint: bool },
}

impl OperatorSymbol {
    pub fn is_projector(&self) -> bool {
        !matches!(self, OperatorSymbol::Z { .. })
    }

    fn sector(&self) -> u8 {
        match self {
            OperatorSymbol::A { .. } => 0,
            OperatorSymbol::B { .. } => 1,
            OperatorSymbol::Z { .. } => 2,
        }
    }

    pub fn adjoint(&self) -> Self {
        match *self {
            OperatorSymbol::Z { a, node, adjoint } => OperatorSymbol::Z { a, node, adjoint: !adjoint },
            other => other,
        }
    }
}

impl fmt::Display for OperatorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSymbol::A { x } => write!(f, "A{}", x + 1),
            OperatorSymbol::B { y } => write!(f, "B{}", y + 1),
            OperatorSymbol::Z { a, node, adjoint } => {
                write!(f, "Z{}_{}{}", a, node + 1, if *adjoint { "*" } else { "" })
            }
        }
    }
}

/// A canonical word over [`OperatorSymbol`]s. The canonical form sorts the
/// commuting sectors A-before-B-before-Z (stable within each sector) and
/// collapses adjacent equal projectors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Monomial(Vec<OperatorSymbol>);

impl Monomial {
    pub fn identity() -> Self {
        Monomial(Vec::new())
    }

    pub fn from_word(word: &[OperatorSymbol]) -> Self {
        let mut sectors: [Vec<OperatorSymbol>; 3] = Default::default();
        for s in word {
            let sec = &mut sectors[s.sector() as usize];
            if s.is_projector() && sec.last() == Some(s) {
                continue; // idempotence
            }
            sec.push(*s);
        }
        let mut out = sectors[0].clone();
        out.extend_from_slice(&sectors[1]);
        out.extend_from_slice(&sectors[2]);
        Monomial(out)
    }

    pub fn symbols(&self) -> &[OperatorSymbol] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// Word product followed by canonicalization.
    pub fn mul(&self, rhs: &Monomial) -> Monomial {
        let mut w = self.0.clone();
        w.extend_from_slice(&rhs.0);
        Monomial::from_word(&w)
    }

    pub fn adjoint(&self) -> Monomial {
        let w: Vec<OperatorSymbol> = self.0.iter().rev().map(|s| s.adjoint()).collect();
        Monomial::from_word(&w)
    }

    pub fn append(&self, s: OperatorSymbol) -> Monomial {
        let mut w = self.0.clone();
        w.push(s);
        Monomial::from_word(&w)
    }

    /// Quadrature nodes whose Z operators appear in this word.
    pub fn z_nodes(&self) -> Vec<u8> {
        let mut nodes: Vec<u8> = self
            .0
            .iter()
            .filter_map(|s| match s {
                OperatorSymbol::Z { node, .. } => Some(*node),
                _ => None,
            })
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn has_z(&self) -> bool {
        self.0.iter().any(|s| !s.is_projector())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Canonical key of a moment variable: a word and its adjoint carry the same
/// real moment in the real-embedded relaxation, so the key is the smaller of
/// the two canonical forms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Moment(Monomial);

impl Moment {
    pub fn of(word: &Monomial) -> Self {
        let adj = word.adjoint();
        if adj < *word {
            Moment(adj)
        } else {
            Moment(word.clone())
        }
    }

    pub fn representative(&self) -> &Monomial {
        &self.0
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

pub fn a(x: u8) -> OperatorSymbol {
    OperatorSymbol::A { x }
}

pub fn b(y: u8) -> OperatorSymbol {
    OperatorSymbol::B { y }
}

pub fn z(a: u8, node: u8) -> OperatorSymbol {
    OperatorSymbol::Z { a, node, adjoint: false }
}

pub fn zdag(a: u8, node: u8) -> OperatorSymbol {
    OperatorSymbol::Z { a, node, adjoint: true }
}
