use crate::error::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Ordered list of (degree, multiplicity) pairs describing a stack of
/// irreducible representations. At most one entry per degree, sorted by
/// degree. Serializes as the compact text form `"16x0+16x1"` meaning
/// 16 channels of l=0 plus 16 channels of l=1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IrrepsSignature {
    entries: Vec<(usize, usize)>,
}

impl IrrepsSignature {
    pub fn new(mut entries: Vec<(usize, usize)>) -> Result<Self> {
        entries.retain(|&(_, d)| d > 0);
        entries.sort_by_key(|&(l, _)| l);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!(
                    "duplicate degree l={} in signature",
                    w[0].0
                )));
            }
        }
        Ok(IrrepsSignature { entries })
    }

    /// Same multiplicity for every degree 0..=l_max.
    pub fn uniform(mult: usize, l_max: usize) -> Self {
        IrrepsSignature {
            entries: (0..=l_max).map(|l| (l, mult)).collect(),
        }
    }

    pub fn scalars(mult: usize) -> Self {
        IrrepsSignature { entries: vec![(0, mult)] }
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(l, _)| l)
    }

    pub fn mult(&self, l: usize) -> usize {
        self.entries
            .iter()
            .find(|&&(dl, _)| dl == l)
            .map(|&(_, d)| d)
            .unwrap_or(0)
    }

    pub fn max_degree(&self) -> usize {
        self.entries.iter().map(|&(l, _)| l).max().unwrap_or(0)
    }

    /// Total coefficient count: sum of multiplicity * (2l+1).
    pub fn dim(&self) -> usize {
        self.entries.iter().map(|&(l, d)| d * (2 * l + 1)).sum()
    }

    /// Total channel count across degrees (the gate width).
    pub fn channels(&self) -> usize {
        self.entries.iter().map(|&(_, d)| d).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Degree-wise concatenation of channels.
    pub fn concat(&self, other: &IrrepsSignature) -> IrrepsSignature {
        let mut entries = self.entries.clone();
        for &(l, d) in &other.entries {
            match entries.iter_mut().find(|(dl, _)| *dl == l) {
                Some((_, dd)) => *dd += d,
                None => entries.push((l, d)),
            }
        }
        entries.sort_by_key(|&(l, _)| l);
        IrrepsSignature { entries }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for term in text.split('+') {
            let term = term.trim();
            if term.is_empty() {
                continue;
            }
            let (d, l) = term.split_once('x').ok_or_else(|| {
                Error::Config(format!("bad signature term {term:?}, expected NxL"))
            })?;
            let d: usize = d
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad multiplicity in {term:?}")))?;
            let l: usize = l
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad degree in {term:?}")))?;
            entries.push((l, d));
        }
        // Merge duplicate degrees arising from unsorted input.
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (l, d) in entries {
            match merged.iter_mut().find(|(dl, _)| *dl == l) {
                Some((_, dd)) => *dd += d,
                None => merged.push((l, d)),
            }
        }
        IrrepsSignature::new(merged)
    }
}

impl fmt::Display for IrrepsSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .entries
            .iter()
            .map(|&(l, d)| format!("{d}x{l}"))
            .collect();
        write!(f, "{}", terms.join("+"))
    }
}

impl Serialize for IrrepsSignature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for IrrepsSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        IrrepsSignature::parse(&text).map_err(D::Error::custom)
    }
}
