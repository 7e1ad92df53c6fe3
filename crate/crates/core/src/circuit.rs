//! Givens-rotation circuits on one-hot block registers.
//!
//! Block `i` owns three qubits `(p_i, q_i, pq_i)` standing for the pair
//! states `S+_p|0>`, `S+_q|0>` and `S+_pq|0>`. A block is in `P` when only
//! `p_i` is set and in `O` when only `pq_i` is set; `q_i` is never touched.
//! Frozen qubits (doubly occupied orbitals outside every block) stay at 1.
//!
//! Gates are listed in time order: the first gate acts first. A plan
//! `E_1 E_2 ... E_m` is therefore emitted as `E_m, ..., E_1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::algebra::Generator;
use crate::decomposition::DecompositionPlan;
use crate::error::{Error, Result};
use crate::numfmt::{fmt_g17, G17};
use crate::oracle::MAX_DENSE_BLOCKS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRegisterLayout {
    /// `(p, q, pq)` qubit indices per block.
    blocks: Vec<[usize; 3]>,
    frozen: Vec<usize>,
}

impl BlockRegisterLayout {
    /// Block `i` on qubits `3(i-1), 3(i-1)+1, 3(i-1)+2`.
    pub fn new(n_blocks: usize) -> Self {
        Self::with_frozen(n_blocks, 0)
    }

    /// [`BlockRegisterLayout::new`] plus `n_frozen` qubits after the blocks.
    pub fn with_frozen(n_blocks: usize, n_frozen: usize) -> Self {
        let blocks = (0..n_blocks).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let frozen = (3 * n_blocks..3 * n_blocks + n_frozen).collect();
        BlockRegisterLayout { blocks, frozen }
    }

    /// LiH in a minimal basis: blocks on orbitals (1,2) and (3,4), the two
    /// lithium `p` pairs frozen. Qubits 0..8 hold
    /// `S+_1, S+_2, S+_12, S+_3, S+_4, S+_34, S+_5, S+_6`.
    pub fn lih() -> Self {
        Self::with_frozen(2, 2)
    }

    /// Explicit layout; every qubit may appear only once.
    pub fn custom(blocks: Vec<[usize; 3]>, frozen: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &q in blocks.iter().flatten().chain(&frozen) {
            if q >= 64 {
                return Err(Error::InvalidLayout(format!("qubit {q} beyond the 64-qubit simulator")));
            }
            if !seen.insert(q) {
                return Err(Error::InvalidLayout(format!("qubit {q} assigned twice")));
            }
        }
        Ok(BlockRegisterLayout { blocks, frozen })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.blocks.iter().flatten().chain(&self.frozen).map(|&q| q + 1).max().unwrap_or(0)
    }

    pub fn block(&self, k: usize) -> Result<[usize; 3]> {
        if k == 0 || k > self.blocks.len() {
            return Err(Error::OutsideLayout(format!("block {k} not in a {}-block layout", self.blocks.len())));
        }
        Ok(self.blocks[k - 1])
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    /// Bitstring of the restricted basis state `label` (bit `k-1` set means block `k` open).
    pub fn encode(&self, label: u64) -> u64 {
        let mut s = 0u64;
        for (k, [p, _, pq]) in self.blocks.iter().enumerate() {
            s |= 1 << if label >> k & 1 == 0 { *p } else { *pq };
        }
        for &f in &self.frozen {
            s |= 1 << f;
        }
        s
    }

    /// Inverse of [`BlockRegisterLayout::encode`]; `None` outside the one-hot subspace.
    pub fn decode(&self, bits: u64) -> Option<u64> {
        let mut label = 0u64;
        let mut used = 0u64;
        for (k, &[p, q, pq]) in self.blocks.iter().enumerate() {
            match (bits >> p & 1, bits >> q & 1, bits >> pq & 1) {
                (1, 0, 0) => {}
                (0, 0, 1) => label |= 1 << k,
                _ => return None,
            }
            used |= 1 << p | 1 << q | 1 << pq;
        }
        for &f in &self.frozen {
            if bits >> f & 1 == 0 {
                return None;
            }
            used |= 1 << f;
        }
        (bits & !used == 0).then_some(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Rotates `|10> -> cos|10> + sin|01>` on `(a, b)`.
    Givens2 { qubits: [usize; 2], theta: f64 },
    /// Rotates `|1010> -> cos|1010> + sin|0101>` on `(a, b, c, d)`.
    Givens4 { qubits: [usize; 4], theta: f64 },
}

impl Gate {
    pub fn theta(&self) -> f64 {
        match *self {
            Gate::Givens2 { theta, .. } | Gate::Givens4 { theta, .. } => theta,
        }
    }

    pub fn qubits(&self) -> &[usize] {
        match self {
            Gate::Givens2 { qubits, .. } => qubits,
            Gate::Givens4 { qubits, .. } => qubits,
        }
    }

    fn patterns(&self) -> (u64, u64) {
        let q = self.qubits();
        match self {
            Gate::Givens2 { .. } => (1 << q[0], 1 << q[1]),
            Gate::Givens4 { .. } => (1 << q[0] | 1 << q[2], 1 << q[1] | 1 << q[3]),
        }
    }
}

/// A gate together with the plan factor it realizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmittedGate {
    pub gate: Gate,
    pub source: Generator,
}

impl Serialize for EmittedGate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        match self.source {
            Generator::A(i, j) => {
                map.serialize_entry("gen", "A")?;
                map.serialize_entry("i", &i)?;
                map.serialize_entry("j", &j)?;
            }
            Generator::B(k) => {
                map.serialize_entry("gen", "B")?;
                map.serialize_entry("k", &k)?;
            }
        }
        map.serialize_entry("qubits", self.gate.qubits())?;
        map.serialize_entry("angle", &G17(self.gate.theta()))?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitIR {
    pub n_qubits: usize,
    pub gates: Vec<EmittedGate>,
}

impl CircuitIR {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serialization is infallible")
    }
}

/// One Givens gate per plan factor; zero angles are kept unless `prune`.
pub fn emit(plan: &DecompositionPlan, layout: &BlockRegisterLayout, prune: bool) -> Result<CircuitIR> {
    let mut gates = Vec::with_capacity(plan.factors.len());
    for f in plan.factors.iter().rev() {
        if prune && f.angle == 0.0 {
            continue;
        }
        let gate = match f.gen {
            Generator::B(k) => {
                let [p, _, pq] = layout.block(k)?;
                Gate::Givens2 { qubits: [p, pq], theta: f.angle }
            }
            Generator::A(i, j) => {
                let [pi, _, pqi] = layout.block(i)?;
                let [pj, _, pqj] = layout.block(j)?;
                Gate::Givens4 { qubits: [pi, pqi, pj, pqj], theta: f.angle }
            }
        };
        gates.push(EmittedGate { gate, source: f.gen });
    }
    Ok(CircuitIR { n_qubits: layout.n_qubits(), gates })
}

/// Applies the circuit to a sparse real state over computational bitstrings.
pub fn apply(c: &CircuitIR, state: &BTreeMap<u64, f64>) -> BTreeMap<u64, f64> {
    let mut cur = state.clone();
    for g in &c.gates {
        let (on, off) = g.gate.patterns();
        let mask = on | off;
        let (cs, sn) = (g.gate.theta().cos(), g.gate.theta().sin());
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        for (&s, &amp) in &cur {
            let rest = s & !mask;
            match s & mask {
                m if m == on => {
                    *next.entry(s).or_insert(0.0) += cs * amp;
                    *next.entry(rest | off).or_insert(0.0) += sn * amp;
                }
                m if m == off => {
                    *next.entry(rest | on).or_insert(0.0) -= sn * amp;
                    *next.entry(s).or_insert(0.0) += cs * amp;
                }
                _ => *next.entry(s).or_insert(0.0) += amp,
            }
        }
        cur = next;
    }
    cur
}

/// Circuit unitary on the one-hot restricted basis, column `label` = image of `label`.
pub fn simulate(c: &CircuitIR, layout: &BlockRegisterLayout) -> Result<DMatrix<f64>> {
    let n = layout.n_blocks();
    if n > MAX_DENSE_BLOCKS {
        return Err(Error::InvalidArgument(format!("simulation limited to {MAX_DENSE_BLOCKS} blocks")));
    }
    let dim = 1usize << n;
    let mut u = DMatrix::zeros(dim, dim);
    for label in 0..dim {
        let input = BTreeMap::from([(layout.encode(label as u64), 1.0)]);
        for (bits, amp) in apply(c, &input) {
            if amp == 0.0 {
                continue;
            }
            let row = layout.decode(bits).ok_or(Error::Leakage(bits))?;
            u[(row as usize, label)] += amp;
        }
    }
    Ok(u)
}

/// `givens2 q[a],q[b] theta=<x>` / `givens4 q[a],q[b],q[c],q[d] theta=<x>`, one per line.
pub fn export_text(c: &CircuitIR, sign_flip: bool) -> String {
    let mut out = String::new();
    for g in &c.gates {
        let theta = if sign_flip { -g.gate.theta() } else { g.gate.theta() };
        let name = match g.gate {
            Gate::Givens2 { .. } => "givens2",
            Gate::Givens4 { .. } => "givens4",
        };
        let qubits: Vec<String> = g.gate.qubits().iter().map(|q| format!("q[{q}]")).collect();
        writeln!(out, "{name} {} theta={}", qubits.join(","), fmt_g17(theta)).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, Factor, Provenance};
    use crate::oracle::{expm, RestrictedRep};
    use crate::params::ClusterParams;
    use crate::rng::seeded;

    fn single(gen: Generator, angle: f64) -> DecompositionPlan {
        DecompositionPlan { provenance: Provenance::PhiMatrix, factors: vec![Factor { gen, angle }] }
    }

    #[test]
    fn layout_round_trip() {
        let l = BlockRegisterLayout::with_frozen(3, 2);
        assert_eq!(l.n_qubits(), 11);
        for label in 0..8 {
            assert_eq!(l.decode(l.encode(label)), Some(label));
        }
        assert_eq!(l.decode(0), None);
        assert_eq!(l.decode(l.encode(0) | 1 << 1), None);
        assert!(BlockRegisterLayout::custom(vec![[0, 1, 2], [2, 3, 4]], vec![]).is_err());
        let lih = BlockRegisterLayout::lih();
        assert_eq!(lih.block(2).unwrap(), [3, 4, 5]);
        assert_eq!(lih.frozen(), &[6, 7]);
        assert_eq!(lih.encode(0), 0b1100_1001);
    }

    #[test]
    fn gate_signs_match_restricted_generators() {
        let rep = RestrictedRep::new(ClusterParams::new(2)).unwrap();
        let layout = BlockRegisterLayout::new(2);
        for (g, theta) in [(Generator::B(1), 0.3), (Generator::B(2), -1.1), (Generator::A(1, 2), 0.7)] {
            let c = emit(&single(g, theta), &layout, false).unwrap();
            let u = simulate(&c, &layout).unwrap();
            let e = expm(&(rep.generator(g).unwrap() * theta)).unwrap();
            assert!((u - e).norm() < 1e-15, "{g:?}");
        }
    }

    #[test]
    fn zero_angles_and_quarter_turn() {
        let layout = BlockRegisterLayout::new(1);
        let c = emit(&single(Generator::B(1), 0.0), &layout, false).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(simulate(&c, &layout).unwrap(), DMatrix::identity(2, 2));
        assert!(emit(&single(Generator::B(1), 0.0), &layout, true).unwrap().is_empty());
        let c = emit(&single(Generator::B(1), std::f64::consts::FRAC_PI_2), &layout, false).unwrap();
        let u = simulate(&c, &layout).unwrap();
        assert!((u[(1, 0)] - 1.0).abs() < 1e-15 && (u[(0, 1)] + 1.0).abs() < 1e-15);
        assert!(emit(&single(Generator::B(2), 0.1), &layout, false).is_err());
    }

    #[test]
    fn emitted_circuit_reproduces_plan_product() {
        let mut rng = seeded(4);
        for n in [2, 3, 5] {
            let p = ClusterParams::random(n, 0.5, &mut rng);
            let plan = decompose(&p).unwrap();
            let layout = BlockRegisterLayout::with_frozen(n, 1);
            let c = emit(&plan, &layout, false).unwrap();
            assert_eq!(c.len(), n * (n - 1) / 2 + n);
            let rep = RestrictedRep::new(p).unwrap();
            let mut product = DMatrix::identity(rep.dim(), rep.dim());
            for f in &plan.factors {
                product *= expm(&(rep.generator(f.gen).unwrap() * f.angle)).unwrap();
            }
            let u = simulate(&c, &layout).unwrap();
            assert!((&u - product).norm() < 1e-13);
            assert!((u.transpose() * &u - DMatrix::identity(rep.dim(), rep.dim())).norm() < 1e-13);
            for g in &c.gates {
                for b in 1..=n {
                    assert!(!g.gate.qubits().contains(&layout.block(b).unwrap()[1]));
                }
                assert!(!g.gate.qubits().iter().any(|q| layout.frozen().contains(q)));
            }
        }
    }

    #[test]
    fn text_export() {
        let empty = CircuitIR { n_qubits: 0, gates: vec![] };
        assert_eq!(export_text(&empty, false), "");
        let c = CircuitIR {
            n_qubits: 3,
            gates: vec![EmittedGate { gate: Gate::Givens2 { qubits: [0, 2], theta: 0.5 }, source: Generator::B(1) }],
        };
        assert_eq!(export_text(&c, false), "givens2 q[0],q[2] theta=0.5\n");
        assert_eq!(export_text(&c, true), "givens2 q[0],q[2] theta=-0.5\n");
        let c4 = CircuitIR {
            n_qubits: 6,
            gates: vec![EmittedGate {
                gate: Gate::Givens4 { qubits: [0, 2, 3, 5], theta: 0.1 },
                source: Generator::A(1, 2),
            }],
        };
        assert_eq!(export_text(&c4, false), "givens4 q[0],q[2],q[3],q[5] theta=0.10000000000000001\n");
        let json = serde_json::to_string(&c4.gates[0]).unwrap();
        assert_eq!(json, r#"{"gen":"A","i":1,"j":2,"qubits":[0,2,3,5],"angle":0.10000000000000001}"#);
    }

    #[test]
    fn leakage_is_reported() {
        let layout = BlockRegisterLayout::new(1);
        let c = CircuitIR {
            n_qubits: 3,
            gates: vec![EmittedGate { gate: Gate::Givens2 { qubits: [0, 1], theta: 0.3 }, source: Generator::B(1) }],
        };
        assert!(matches!(simulate(&c, &layout), Err(Error::Leakage(_))));
    }
}
