//! Flat parameter storage. Every layer owns index ranges into one buffer,
//! which keeps the optimizer, gradient checks and checkpoints trivial.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Coarse ownership of a parameter block; training steps freeze by group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Backbone,
    SemanticHead,
    NoiseHead,
    SemanticAlign,
    NoiseAlign,
    Classifier,
}

impl ParamGroup {
    /// Groups that belong to the noise stream.
    pub fn is_noise_stream(self) -> bool {
        matches!(self, ParamGroup::NoiseHead | ParamGroup::NoiseAlign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Kaiming normal, `std = sqrt(2 / fan_in)`.
    He { fan_in: usize },
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub range: Range<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: impl Into<String>, group: ParamGroup, len: usize, init: Init) -> Range<usize> {
        let range = self.total..self.total + len;
        self.total += len;
        self.entries.push(ParamEntry {
            name: name.into(),
            group,
            range: range.clone(),
            init,
        });
        range
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// One flag per scalar parameter: true where `keep(group)` holds.
    pub fn mask(&self, keep: impl Fn(ParamGroup) -> bool) -> Vec<bool> {
        let mut m = vec![false; self.total];
        for e in &self.entries {
            if keep(e.group) {
                m[e.range.clone()].iter_mut().for_each(|v| *v = true);
            }
        }
        m
    }

    pub fn group_ranges(&self, group: ParamGroup) -> impl Iterator<Item = Range<usize>> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.group == group)
            .map(|e| e.range.clone())
    }

    pub fn initialize<T: Scalar, R: Rng>(&self, rng: &mut R) -> Vec<T> {
        let mut values = vec![T::zero(); self.total];
        for e in &self.entries {
            if let Init::He { fan_in } = e.init {
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                for v in &mut values[e.range.clone()] {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = T::lit(std * z);
                }
            }
        }
        values
    }
}
