//! Canonical serialization, structural fingerprints and node-kind profiles.
//!
//! The serialization is one line per node in pre-order, indented two spaces
//! per depth, holding `kind` or `kind[tag]`. Identifier payloads and literal
//! values never appear; docstrings are skipped. Two programs are
//! structurally identical iff their serializations are equal.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::node::Node;

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013B;

pub fn serialize(root: &Node) -> String {
    let mut out = String::new();
    write_node(root, 0, &mut out);
    out
}

fn write_node(node: &Node, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(node.kind);
    // Literal values are erased but their kind is kept.
    if let Some(tag) = &node.tag {
        out.push('[');
        out.push_str(tag);
        out.push(']');
    }
    out.push('\n');
    for child in node.children.iter().filter(|c| !c.docstring) {
        write_node(child, depth + 1, out);
    }
}

/// 128-bit FNV-1a digest of a canonical serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructuralFingerprint(pub u128);

impl StructuralFingerprint {
    pub fn of_serialization(text: &str) -> StructuralFingerprint {
        let mut hash = FNV128_OFFSET;
        for byte in text.bytes() {
            hash ^= u128::from(byte);
            hash = hash.wrapping_mul(FNV128_PRIME);
        }
        StructuralFingerprint(hash)
    }
}

impl fmt::Display for StructuralFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for StructuralFingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StructuralFingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        u128::from_str_radix(&text, 16).map(StructuralFingerprint).map_err(serde::de::Error::custom)
    }
}

/// Counts of root-to-leaf path windows of `n` consecutive node kinds.
///
/// Every node at depth `>= n - 1` closes exactly one window (its `n - 1`
/// ancestors followed by itself). Keys join kinds with `>`.
pub fn path_ngrams(root: &Node, n: usize) -> BTreeMap<String, u64> {
    assert!(n >= 1, "n-gram order must be positive");
    let mut counts = BTreeMap::new();
    let mut stack: Vec<&'static str> = Vec::new();
    fn go(node: &Node, n: usize, stack: &mut Vec<&'static str>, counts: &mut BTreeMap<String, u64>) {
        stack.push(node.kind);
        if stack.len() >= n {
            let key = stack[stack.len() - n..].join(">");
            *counts.entry(key).or_insert(0) += 1;
        }
        for c in &node.children {
            go(c, n, stack, counts);
        }
        stack.pop();
    }
    go(root, n, &mut stack, &mut counts);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_128_reference_values() {
        // Published FNV-1a 128-bit test vectors.
        assert_eq!(StructuralFingerprint::of_serialization("").0, 0x6c62272e07bb014262b821756295c58d);
        assert_eq!(StructuralFingerprint::of_serialization("a").0, 0xd228cb696f1a8caf78912b704e4a8964);
    }

    #[test]
    fn fingerprint_serde_round_trip() {
        let fp = StructuralFingerprint::of_serialization("module\n");
        let json = serde_json::to_string(&fp).unwrap();
        assert_eq!(json.len(), 34);
        let back: StructuralFingerprint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fp);
    }
}
