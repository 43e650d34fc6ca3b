//! Named, ordered parameter storage shared by the model, the optimizer,
//! and checkpoints.

use std::collections::HashMap;

use ndarray::ArrayD;

use super::{Tape, Var};

/// An ordered collection of named f64 arrays. Order is insertion order and
/// is part of the contract: the optimizer and checkpoints index by it.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, ArrayD<f64>)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, value: ArrayD<f64>) {
        assert!(
            !self.entries.iter().any(|(n, _)| n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name.to_string(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        &mut self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<f64>)> {
        self.entries.iter_mut().map(|(n, v)| (n.as_str(), v))
    }

    /// Registers every parameter as a gradient-receiving leaf.
    pub fn register_leaves(&self, tape: &mut Tape) -> ParamVars {
        self.register(tape, true)
    }

    /// Registers every parameter as a frozen constant (inference).
    pub fn register_constants(&self, tape: &mut Tape) -> ParamVars {
        self.register(tape, false)
    }

    fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut map = HashMap::new();
        for (name, value) in &self.entries {
            let var = if trainable {
                tape.leaf(value.clone())
            } else {
                tape.constant(value.clone())
            };
            map.insert(name.clone(), var);
        }
        ParamVars { map }
    }

    /// Order-sensitive FNV-1a checksum over names and raw f64 bytes; used
    /// to audit that frozen components never change.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv1a::new();
        for (name, value) in &self.entries {
            h.update(name.as_bytes());
            for v in value.iter() {
                h.update(&v.to_le_bytes());
            }
        }
        h.finish()
    }
}

/// Tape handles for a registered [`ParamSet`].
pub struct ParamVars {
    map: HashMap<String, Var>,
}

impl ParamVars {
    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }
}

/// 64-bit FNV-1a running hash.
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{ArrayD, IxDyn};

    use super::*;

    #[test]
    fn checksum_tracks_any_change() {
        let mut p = ParamSet::new();
        p.push("a", ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        p.push("b", ArrayD::from_elem(IxDyn(&[3]), 0.5));
        let before = p.checksum();
        assert_eq!(before, p.checksum());
        for (_, v) in p.iter_mut() {
            *v.first_mut().unwrap() += 1e-12;
            break;
        }
        assert_ne!(before, p.checksum());
    }

    #[test]
    fn fnv_reference_value() {
        // FNV-1a("a") from the published test vectors.
        let mut h = Fnv1a::new();
        h.update(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn leaves_get_grads_constants_do_not() {
        let mut p = ParamSet::new();
        p.push("w", ArrayD::from_elem(IxDyn(&[2]), 2.0));
        let mut t = Tape::new();
        let vars = p.register_leaves(&mut t);
        let s = t.sum_all(vars.var("w"));
        let g = t.backward(s);
        assert!(g.wrt(vars.var("w")).is_some());

        let mut t2 = Tape::new();
        let cvars = p.register_constants(&mut t2);
        let s2 = t2.sum_all(cvars.var("w"));
        let g2 = t2.backward(s2);
        assert!(g2.wrt(cvars.var("w")).is_none());
    }
}
