//! Cluster amplitudes and their JSON file format.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// General single-excitation amplitudes keyed by `(p, q)`.
pub type T1Params = BTreeMap<(usize, usize), f64>;
/// General double-excitation amplitudes keyed by `(p1, p2, q1, q2)`.
pub type T2Params = BTreeMap<(usize, usize, usize, usize), f64>;

/// Amplitudes `mu_ij` (i < j) of `X` and `mu_k` of `Y` over `n_blocks` 2D-blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    n_blocks: usize,
    mu_pair: BTreeMap<(usize, usize), f64>,
    mu_single: BTreeMap<usize, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    #[serde(default)]
    mu_pair: BTreeMap<String, f64>,
    #[serde(default)]
    mu_single: BTreeMap<String, f64>,
}

impl ClusterParams {
    pub fn new(n_blocks: usize) -> Self {
        ClusterParams { n_blocks, mu_pair: BTreeMap::new(), mu_single: BTreeMap::new() }
    }

    pub fn from_maps(
        n_blocks: usize,
        pairs: impl IntoIterator<Item = ((usize, usize), f64)>,
        singles: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self> {
        let mut p = ClusterParams::new(n_blocks);
        for ((i, j), v) in pairs {
            p.set_pair(i, j, v)?;
        }
        for (k, v) in singles {
            p.set_single(k, v)?;
        }
        Ok(p)
    }

    /// Every `mu_ij` and `mu_k` drawn uniformly from `[-half_width, half_width]`.
    pub fn random<R: Rng + ?Sized>(n_blocks: usize, half_width: f64, rng: &mut R) -> Self {
        let mut p = ClusterParams::new(n_blocks);
        for i in 1..=n_blocks {
            for j in i + 1..=n_blocks {
                p.mu_pair.insert((i, j), rng.random_range(-half_width..=half_width));
            }
        }
        for k in 1..=n_blocks {
            p.mu_single.insert(k, rng.random_range(-half_width..=half_width));
        }
        p
    }

    pub fn set_pair(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if !(1 <= i && i < j && j <= self.n_blocks) {
            return Err(Error::InvalidBlockPair { i, j, n_blocks: self.n_blocks });
        }
        check_finite(v)?;
        self.mu_pair.insert((i, j), v);
        Ok(())
    }

    pub fn set_single(&mut self, k: usize, v: f64) -> Result<()> {
        if k == 0 || k > self.n_blocks {
            return Err(Error::BlockOutOfRange { block: k, n_blocks: self.n_blocks });
        }
        check_finite(v)?;
        self.mu_single.insert(k, v);
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn mu_pair(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.mu_pair
    }

    pub fn mu_single(&self) -> &BTreeMap<usize, f64> {
        &self.mu_single
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.mu_pair.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn single(&self, k: usize) -> f64 {
        self.mu_single.get(&k).copied().unwrap_or(0.0)
    }

    /// Directed-edge weight `nu_{i->j}`: `mu_ij` for `i < j`, `mu_ji` for `j < i`.
    pub fn nu(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.pair(i, j),
            std::cmp::Ordering::Greater => self.pair(j, i),
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// Symmetric hollow matrix `M_ij = nu_{i->j}` (0-based indices).
    pub fn transfer_matrix(&self) -> DMatrix<f64> {
        let n = self.n_blocks;
        DMatrix::from_fn(n, n, |r, c| self.nu(r + 1, c + 1))
    }

    pub fn mu_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.n_blocks, |k, _| self.single(k + 1))
    }

    /// Pairs with a nonzero amplitude, in lexicographic order.
    pub fn active_pairs(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.mu_pair.iter().filter(|(_, &v)| v != 0.0).map(|(&k, &v)| (k, v))
    }

    /// Same amplitudes with every value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        ClusterParams {
            n_blocks: self.n_blocks,
            mu_pair: self.mu_pair.iter().map(|(&k, &v)| (k, v * s)).collect(),
            mu_single: self.mu_single.iter().map(|(&k, &v)| (k, v * s)).collect(),
        }
    }

    /// Flattened coordinates: all `mu_ij` (i < j, lexicographic) then all `mu_k`.
    pub fn to_coordinates(&self) -> Vec<f64> {
        let n = self.n_blocks;
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 1..=n {
            for j in i + 1..=n {
                out.push(self.pair(i, j));
            }
        }
        out.extend((1..=n).map(|k| self.single(k)));
        out
    }

    pub fn from_coordinates(n_blocks: usize, coords: &[f64]) -> Result<Self> {
        let n_pairs = n_blocks * n_blocks.saturating_sub(1) / 2;
        if coords.len() != n_pairs + n_blocks {
            return Err(Error::MalformedParams(format!(
                "expected {} coordinates, got {}",
                n_pairs + n_blocks,
                coords.len()
            )));
        }
        let mut p = ClusterParams::new(n_blocks);
        let mut it = coords.iter();
        for i in 1..=n_blocks {
            for j in i + 1..=n_blocks {
                p.mu_pair.insert((i, j), *it.next().unwrap());
            }
        }
        for k in 1..=n_blocks {
            p.mu_single.insert(k, *it.next().unwrap());
        }
        Ok(p)
    }

    /// Parses `{"mu_pair": {"1,2": 0.2}, "mu_single": {"1": 0.1}}`.
    ///
    /// The block count is the largest index mentioned unless `n_blocks` is given.
    pub fn from_json(text: &str, n_blocks: Option<usize>) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text).map_err(|e| Error::MalformedParams(e.to_string()))?;
        let mut pairs = Vec::new();
        for (key, &v) in &file.mu_pair {
            let (a, b) = key
                .split_once(',')
                .ok_or_else(|| Error::MalformedParams(format!("pair key {key:?} is not \"i,j\"")))?;
            let i = parse_index(a, key)?;
            let j = parse_index(b, key)?;
            if i >= j {
                return Err(Error::MalformedParams(format!("pair key {key:?} must satisfy i < j")));
            }
            pairs.push(((i, j), v));
        }
        let mut singles = Vec::new();
        for (key, &v) in &file.mu_single {
            singles.push((parse_index(key, key)?, v));
        }
        let inferred = pairs.iter().map(|&((_, j), _)| j).chain(singles.iter().map(|&(k, _)| k)).max().unwrap_or(0);
        let n = n_blocks.unwrap_or(inferred);
        if n == 0 {
            return Err(Error::MalformedParams("no blocks given".into()));
        }
        ClusterParams::from_maps(n, pairs, singles).map_err(|e| Error::MalformedParams(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            mu_pair: self.mu_pair.iter().map(|(&(i, j), &v)| (format!("{i},{j}"), v)).collect(),
            mu_single: self.mu_single.iter().map(|(&k, &v)| (k.to_string(), v)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("params serialize")
    }
}

fn parse_index(s: &str, key: &str) -> Result<usize> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::MalformedParams(format!("bad index in key {key:?}"))),
    }
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::MalformedParams(format!("non-finite amplitude {v}")))
    }
}

/// Parses general `T1` amplitudes: `{"p,q": mu}`.
pub fn t1_from_json(text: &str) -> Result<T1Params> {
    let raw: BTreeMap<String, f64> = serde_json::from_str(text).map_err(|e| Error::MalformedParams(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| {
            let idx = parse_tuple(&k, 2)?;
            Ok(((idx[0], idx[1]), v))
        })
        .collect()
}

/// Parses general `T2'` amplitudes: `{"p1,p2,q1,q2": mu}`.
pub fn t2_from_json(text: &str) -> Result<T2Params> {
    let raw: BTreeMap<String, f64> = serde_json::from_str(text).map_err(|e| Error::MalformedParams(e.to_string()))?;
    raw.into_iter()
        .map(|(k, v)| {
            let idx = parse_tuple(&k, 4)?;
            Ok(((idx[0], idx[1], idx[2], idx[3]), v))
        })
        .collect()
}

fn parse_tuple(key: &str, len: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = key.split(',').map(|s| parse_index(s, key)).collect::<Result<_>>()?;
    if idx.len() != len {
        return Err(Error::MalformedParams(format!("key {key:?} needs {len} indices")));
    }
    Ok(idx)
}
